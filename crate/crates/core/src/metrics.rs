//! Image-quality scores: SSIM, MSE, PSNR and order-independent averaging.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("images differ in size: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("image {0:?} is smaller than the {1}x{1} window")]
    TooSmall((usize, usize), usize),
    #[error("cannot average an empty list")]
    EmptyList,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    /// Odd window side.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

impl SsimParams {
    /// Normalized 1-D Gaussian; the 2-D window is its outer product.
    pub fn kernel<T: Scalar>(&self) -> Vec<T> {
        let r = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| T::lit(v / s)).collect()
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

fn check_dims(a: &Image, b: &Image) -> Result<(), MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::DimensionMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// Separable valid-mode filtering of a `w × h` plane.
fn filter_valid<T: Scalar>(plane: &[T], w: usize, h: usize, k: &[T]) -> Vec<T> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![T::zero(); ow * h];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = src[x..x + n].iter().zip(k).map(|(&v, &g)| v * g).sum();
        }
    }
    let mut out = vec![T::zero(); ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|j| rows[(y + j) * ow + x] * k[j]).sum();
        }
    }
    out
}

/// Mean SSIM over valid window positions, averaged across the three channels.
pub fn ssim_with<T: Scalar>(a: &Image, b: &Image, p: &SsimParams) -> Result<T, MetricError> {
    check_dims(a, b)?;
    let (w, h) = a.dims();
    if w < p.window || h < p.window {
        return Err(MetricError::TooSmall(a.dims(), p.window));
    }
    let k = p.kernel::<T>();
    let (c1, c2) = (T::lit(p.c1()), T::lit(p.c2()));
    let two = T::lit(2.0);
    let mut total = T::zero();
    for c in 0..3 {
        let x: Vec<T> = a.pixels().iter().map(|px| T::from_u8(px[c]).expect("u8")).collect();
        let y: Vec<T> = b.pixels().iter().map(|px| T::from_u8(px[c]).expect("u8")).collect();
        let prod = |u: &[T], v: &[T]| -> Vec<T> { u.iter().zip(v).map(|(&s, &t)| s * t).collect() };
        let mx = filter_valid(&x, w, h, &k);
        let my = filter_valid(&y, w, h, &k);
        let mxx = filter_valid(&prod(&x, &x), w, h, &k);
        let myy = filter_valid(&prod(&y, &y), w, h, &k);
        let mxy = filter_valid(&prod(&x, &y), w, h, &k);
        let mut acc = T::zero();
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            acc += (two * ux * uy + c1) * (two * cxy + c2) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += acc / T::from_usize_lossy(mx.len());
    }
    Ok(total / T::lit(3.0))
}

/// [`ssim_with`] at the default parameters, in `f64`.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, MetricError> {
    ssim_with(a, b, &SsimParams::default())
}

/// Mean squared difference over every channel value.
pub fn mse(a: &Image, b: &Image) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let sum: u64 = a
        .as_bytes()
        .iter()
        .zip(b.as_bytes())
        .map(|(&x, &y)| {
            let d = u64::from(x.abs_diff(y));
            d * d
        })
        .sum();
    Ok(sum as f64 / a.as_bytes().len() as f64)
}

/// Peak signal-to-noise ratio in dB; infinite for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, MetricError> {
    let m = mse(a, b)?;
    Ok(10.0 * (255.0f64 * 255.0 / m).log10())
}

/// Order-independent mean: values are sorted before a compensated sum.
pub fn mean_of(values: &[f64]) -> Result<f64, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyList);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in v {
        let y = x - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    Ok(sum / values.len() as f64)
}

/// Mean of `metric` over image pairs.
pub fn average_over<F>(pairs: &[(&Image, &Image)], metric: F) -> Result<f64, MetricError>
where
    F: Fn(&Image, &Image) -> Result<f64, MetricError>,
{
    let values = pairs.iter().map(|(a, b)| metric(a, b)).collect::<Result<Vec<_>, _>>()?;
    mean_of(&values)
}
