use super::{NnError, Tensor};
use crate::scalar::Scalar;

const BCE_CLAMP: f64 = 1e-12;

/// Mean squared error over every element, with its gradient.
pub fn loss_mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>), NnError> {
    pred.expect_shape(target.shape(), "mse target")?;
    let n = T::from_usize_lossy(pred.len().max(1));
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            loss += d * d;
            two * d / n
        })
        .collect();
    Ok((loss / n, Tensor::from_vec(pred.shape(), grad)?))
}

/// Binary cross-entropy of one probability against a label, and its
/// derivative with respect to `pred`. The probability is clamped into
/// `[1e-12, 1 - 1e-12]`.
pub fn bce<T: Scalar>(pred: T, label: T) -> (T, T) {
    let eps = T::lit(BCE_CLAMP);
    let p = pred.max(eps).min(T::one() - eps);
    let one = T::one();
    let loss = -(label * p.ln() + (one - label) * (one - p).ln());
    let grad = (p - label) / (p * (one - p));
    (loss, grad)
}

/// Mean [`bce`] over a batch of probabilities sharing one label.
pub fn loss_bce<T: Scalar>(pred: &Tensor<T>, label: T) -> (T, Tensor<T>) {
    let n = T::from_usize_lossy(pred.len().max(1));
    let mut loss = T::zero();
    let grad = pred.map(|p| {
        let (l, g) = bce(p, label);
        loss += l;
        g / n
    });
    (loss / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(loss_mse(&x, &x).unwrap().0, 0.0);
        let (l, g) = loss_mse(
            &Tensor::from_vec(&[1], vec![0.0]).unwrap(),
            &Tensor::from_vec(&[1], vec![2.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g.data(), &[-4.0]);
        assert!(loss_mse(&x, &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn bce_examples() {
        for label in [0.0, 1.0] {
            assert!((bce(0.5f64, label).0 - std::f64::consts::LN_2).abs() < 1e-15);
        }
        let (l, g) = bce(0.0f64, 1.0);
        assert!(l.is_finite() && l > 27.0 && g.is_finite());
        let (l, _) = bce(1.0f64, 0.0);
        assert!(l.is_finite() && l > 27.0);
    }
}
