use crate::image::Image;
use crate::scalar::Scalar;

use super::NnError;

/// Dense row-major n-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::ShapeMismatch {
                context: "tensor data",
                expected: vec![n],
                got: vec![data.len()],
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension; 0 for a scalar-shaped tensor.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, NnError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(NnError::ShapeMismatch {
                context: "reshape",
                expected: self.shape,
                got: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> T {
        self.data.iter().copied().sum::<T>() / T::from_usize_lossy(self.data.len().max(1))
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<(), NnError> {
        self.expect_shape(other.shape(), "add")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub(crate) fn expect_shape(&self, shape: &[usize], context: &'static str) -> Result<(), NnError> {
        if self.shape != shape {
            return Err(NnError::ShapeMismatch {
                context,
                expected: shape.to_vec(),
                got: self.shape.clone(),
            });
        }
        Ok(())
    }

    /// Rows `idx` of the leading dimension, in the given order.
    pub fn gather(&self, idx: &[usize]) -> Self {
        let row: usize = self.shape[1..].iter().product();
        let mut data = Vec::with_capacity(row * idx.len());
        for &i in idx {
            data.extend_from_slice(&self.data[i * row..(i + 1) * row]);
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Self { shape, data }
    }
}

/// Images to an `[N, 3, H, W]` tensor, each channel value mapped by `scale`.
pub fn images_to_tensor<T: Scalar>(images: &[Image], scale: impl Fn(u8) -> T) -> Result<Tensor<T>, NnError> {
    let Some(first) = images.first() else {
        return Err(NnError::InvalidSpec("no images to convert".into()));
    };
    let (w, h) = first.dims();
    let plane = w * h;
    let mut data = vec![T::zero(); images.len() * 3 * plane];
    for (n, img) in images.iter().enumerate() {
        if img.dims() != (w, h) {
            return Err(NnError::ShapeMismatch {
                context: "image batch",
                expected: vec![w, h],
                got: vec![img.width(), img.height()],
            });
        }
        let base = n * 3 * plane;
        for (i, p) in img.pixels().iter().enumerate() {
            for c in 0..3 {
                data[base + c * plane + i] = scale(p[c]);
            }
        }
    }
    Tensor::from_vec(&[images.len(), 3, h, w], data)
}

/// Inverse of [`images_to_tensor`]; `unscale` must return a value already
/// rounded and clamped into `0..=255`.
pub fn tensor_to_images<T: Scalar>(t: &Tensor<T>, unscale: impl Fn(T) -> u8) -> Result<Vec<Image>, NnError> {
    let &[n, 3, h, w] = t.shape() else {
        return Err(NnError::ShapeMismatch {
            context: "image tensor",
            expected: vec![0, 3, 0, 0],
            got: t.shape().to_vec(),
        });
    };
    let plane = w * h;
    (0..n)
        .map(|k| {
            let base = k * 3 * plane;
            let pixels = (0..plane)
                .map(|i| std::array::from_fn(|c| unscale(t.data[base + c * plane + i])))
                .collect();
            Image::new(w, h, pixels).map_err(|e| NnError::InvalidSpec(e.to_string()))
        })
        .collect()
}

/// Maps `[0, 255]` onto `[-1, 1]`.
pub fn to_signed_unit<T: Scalar>(v: u8) -> T {
    T::from_u8(v).expect("u8 representable") / T::lit(127.5) - T::one()
}

/// Maps `[-1, 1]` back to bytes, rounding and clamping.
pub fn from_signed_unit<T: Scalar>(v: T) -> u8 {
    clamp_round((v.as_f64() + 1.0) * 127.5)
}

/// Rounds to nearest and clamps into `0..=255`; NaN maps to 0.
pub fn clamp_round(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        v.round().clamp(0.0, 255.0) as u8
    }
}
