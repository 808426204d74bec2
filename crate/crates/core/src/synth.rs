//! Procedural natural-looking scenes: a smooth two-color gradient, a handful
//! of flat ellipses and rectangles, a few colored sinusoid textures and mild
//! sensor noise. Used as a stand-in corpus when no real photographs are on hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::image::{Dataset, Image, ImageError, Role};

/// One scene of `side × side` pixels drawn from `rng`.
pub fn scene(side: usize, rng: &mut impl Rng) -> Image {
    let s = side as f64;
    let color = |rng: &mut dyn rand::RngCore| -> [f64; 3] {
        let l: f64 = rng.random_range(30.0..225.0);
        std::array::from_fn(|_| (l + rng.random_range(-40.0..40.0f64)).clamp(0.0, 255.0))
    };
    let c0 = color(rng);
    let c1 = color(rng);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (ct, st) = (theta.cos(), theta.sin());
    let mut buf: Vec<[f64; 3]> = (0..side * side)
        .map(|i| {
            let (x, y) = ((i % side) as f64, (i / side) as f64);
            let t = ((ct * x + st * y) / s + 1.0) / 2.0;
            std::array::from_fn(|c| c0[c] * (1.0 - t) + c1[c] * t)
        })
        .collect();

    for _ in 0..rng.random_range(4..10) {
        let c = color(rng);
        let (cx, cy) = (rng.random_range(0.0..s), rng.random_range(0.0..s));
        let (rx, ry) = (rng.random_range(2.0..s / 3.0), rng.random_range(2.0..s / 3.0));
        let ellipse = rng.random_bool(0.5);
        for (i, px) in buf.iter_mut().enumerate() {
            let (dx, dy) = ((i % side) as f64 - cx, (i / side) as f64 - cy);
            let inside = if ellipse {
                (dx / rx).powi(2) + (dy / ry).powi(2) <= 1.0
            } else {
                dx.abs() <= rx && dy.abs() <= ry
            };
            if inside {
                *px = c;
            }
        }
    }

    for _ in 0..3 {
        let (fx, fy) = (rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
        let phase = rng.random_range(0.0..6.3);
        let amp: [f64; 3] = std::array::from_fn(|_| rng.random_range(-25.0..25.0));
        for (i, px) in buf.iter_mut().enumerate() {
            let v = (fx * (i % side) as f64 + fy * (i / side) as f64 + phase).sin();
            for c in 0..3 {
                px[c] += amp[c] * v;
            }
        }
    }

    let noise = Normal::new(0.0, 3.0).expect("positive sigma");
    let pixels = buf
        .into_iter()
        .map(|px| px.map(|v| (v + noise.sample(rng)).round().clamp(0.0, 255.0) as u8))
        .collect();
    Image::new(side, side, pixels).expect("side > 0")
}

/// `count` scenes from `seed`, identified `first_id..first_id+count`.
pub fn synthetic_dataset(count: usize, side: usize, seed: u64, first_id: usize, role: Role) -> Result<Dataset, ImageError> {
    if side == 0 {
        return Err(ImageError::EmptyDimensions { width: 0, height: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..count).map(|_| scene(side, &mut rng)).collect();
    Dataset::with_ids(images, (first_id..first_id + count).collect(), role)
}
