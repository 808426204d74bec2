//! Direct-window SSIM, written independently of the library: every valid
//! 11x11 window is visited with explicit loops, Gaussian weights are
//! rebuilt in 2-D here, statistics are weighted population moments.

use lieval_core::image::Image;

const WIN: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn weights() -> [[f64; WIN]; WIN] {
    let mut w = [[0.0; WIN]; WIN];
    let c = (WIN / 2) as f64;
    let mut total = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            *v = (-d2 / (2.0 * SIGMA * SIGMA)).exp();
            total += *v;
        }
    }
    for row in w.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    w
}

pub fn reference_ssim(a: &Image, b: &Image) -> f64 {
    let w = weights();
    let (width, height) = a.dims();
    let mut per_channel = 0.0;
    for ch in 0..3 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for y0 in 0..=height - WIN {
            for x0 in 0..=width - WIN {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, row) in w.iter().enumerate() {
                    for (j, &wt) in row.iter().enumerate() {
                        let p = a.pixel(x0 + j, y0 + i)[ch] as f64;
                        let q = b.pixel(x0 + j, y0 + i)[ch] as f64;
                        mx += wt * p;
                        my += wt * q;
                        xx += wt * p * p;
                        yy += wt * q * q;
                        xy += wt * p * q;
                    }
                }
                let vx = xx - mx * mx;
                let vy = yy - my * my;
                let cov = xy - mx * my;
                sum += ((2.0 * mx * my + C1) * (2.0 * cov + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
                count += 1;
            }
        }
        per_channel += sum / count as f64;
    }
    per_channel / 3.0
}
