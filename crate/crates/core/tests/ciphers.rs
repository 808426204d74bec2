use lieval_core::cipher::blockwise::{decrypt_blockwise, encrypt_blockwise, BlockwiseKey};
use lieval_core::cipher::pixelwise::{decrypt_pixelwise, encrypt_pixelwise, KeyPolicy, PixelwiseKey};
use lieval_core::cipher::CipherError;
use lieval_core::image::Image;
use proptest::prelude::*;

fn image_strategy(w: usize, h: usize) -> impl Strategy<Value = Image> {
    proptest::collection::vec(any::<[u8; 3]>(), w * h).prop_map(move |px| Image::new(w, h, px).unwrap())
}

fn block_image() -> impl Strategy<Value = Image> {
    (1usize..5, 1usize..5).prop_flat_map(|(bw, bh)| image_strategy(4 * bw, 4 * bh))
}

proptest! {
    #[test]
    fn pixelwise_round_trip(img in image_strategy(7, 5), seeds in any::<[u64; 4]>()) {
        let key = PixelwiseKey::new(seeds[0], seeds[1], seeds[2], seeds[3]);
        let enc = encrypt_pixelwise(&img, &key);
        prop_assert_eq!(decrypt_pixelwise(&enc, &key), img);
    }

    #[test]
    fn blockwise_round_trip(img in block_image(), a in any::<u64>(), b in any::<u64>()) {
        let key = BlockwiseKey::new(a, b);
        let enc = encrypt_blockwise(&img, &key).unwrap();
        prop_assert_eq!(decrypt_blockwise(&enc, &key).unwrap(), img);
    }

    #[test]
    fn pixelwise_preserves_per_pixel_complement_pairs(img in image_strategy(4, 4), seeds in any::<[u64; 4]>()) {
        // every ciphertext component is either p or 255 - p of some component of the same pixel
        let key = PixelwiseKey::new(seeds[0], seeds[1], seeds[2], seeds[3]);
        let enc = encrypt_pixelwise(&img, &key);
        for (p, e) in img.pixels().iter().zip(enc.pixels()) {
            for c in e {
                prop_assert!(p.iter().any(|v| v == c || 255 - v == *c));
            }
        }
    }
}

#[test]
fn blockwise_rejects_partial_blocks() {
    let img = Image::filled(95, 95, [1, 2, 3]).unwrap();
    assert!(matches!(
        encrypt_blockwise(&img, &BlockwiseKey::new(1, 2)),
        Err(CipherError::DimensionNotMultipleOfBlock { .. })
    ));
    assert!(encrypt_blockwise(&Image::filled(96, 96, [1, 2, 3]).unwrap(), &BlockwiseKey::new(1, 2)).is_ok());
}

#[test]
fn different_keys_policy_varies_by_index() {
    let policy = KeyPolicy::DifferentKeys { master: 5 };
    assert_eq!(policy.key_for(3), policy.key_for(3));
    assert_ne!(policy.key_for(3), policy.key_for(4));
    let same = KeyPolicy::SameKey(PixelwiseKey::new(1, 2, 3, 4));
    assert_eq!(same.key_for(0), same.key_for(999));
}

#[test]
fn wrong_key_does_not_decrypt() {
    let img = Image::from_fn(8, 8, |x, y| [(x * 30) as u8, (y * 30) as u8, 77]).unwrap();
    let enc = encrypt_pixelwise(&img, &PixelwiseKey::new(1, 2, 3, 4));
    assert_ne!(decrypt_pixelwise(&enc, &PixelwiseKey::new(1, 2, 3, 5)), img);
    let enc = encrypt_blockwise(&img, &BlockwiseKey::new(1, 2)).unwrap();
    assert_ne!(decrypt_blockwise(&enc, &BlockwiseKey::new(2, 2)).unwrap(), img);
}
