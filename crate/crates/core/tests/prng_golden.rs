use lieval_core::prng::{invert_permutation, is_permutation, KeyStream};

// Reference SplitMix64 outputs, computed outside this crate.
const SEED_0: [u64; 4] = [0xe220a8397b1dcdaf, 0x6e789e6aa1b965f4, 0x06c45d188009454f, 0xf88bb8a8724c81ec];
const SEED_1234567: [u64; 4] = [0x599ed017fb08fc85, 0x2c73f08458540fa5, 0x883ebce5a3f27c77, 0x3fbef740e9177b3f];

#[test]
fn golden_vectors() {
    for (seed, expected) in [(0, SEED_0), (1234567, SEED_1234567)] {
        let mut s = KeyStream::new(seed);
        let got: Vec<u64> = (0..4).map(|_| s.next_u64()).collect();
        assert_eq!(got, expected, "seed {seed}");
    }
}

#[test]
fn next_bit_is_the_top_bit() {
    let mut s = KeyStream::new(0);
    let bits: Vec<bool> = (0..4).map(|_| s.next_bit()).collect();
    let top: Vec<bool> = SEED_0.iter().map(|v| v >> 63 == 1).collect();
    assert_eq!(bits, top);
}

#[test]
fn thousand_permutations_are_bijections() {
    let mut s = KeyStream::new(2024);
    for draw in 0..1000 {
        let k = 1 + draw % 97;
        let p = s.permutation(k);
        assert!(is_permutation(&p), "draw {draw}: {p:?}");
        let inv = invert_permutation(&p);
        assert!((0..k).all(|i| inv[p[i]] == i));
    }
}
