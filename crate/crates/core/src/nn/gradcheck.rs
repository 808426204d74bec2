//! Central finite-difference checks of analytic gradients.

use super::{Layer, NnError, Tensor};

pub const STEP: f64 = 1e-5;

/// `‖a − n‖ / max(‖a‖ + ‖n‖, tiny)`: relative error of two gradient tensors.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if norm < 1e-300 {
        diff
    } else {
        diff / norm
    }
}

/// Numeric gradient of a scalar function of `x`.
pub fn numeric_gradient(x: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + STEP;
        let up = f(&probe);
        probe.data_mut()[i] = orig - STEP;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * STEP);
    }
    grad
}

/// Worst relative error of a layer's input, weight and bias gradients under
/// the scalar objective `Σ upstream ⊙ forward(input)`.
pub fn check_layer(layer: &Layer<f64>, input: &Tensor<f64>, upstream: &Tensor<f64>) -> Result<f64, NnError> {
    let objective = |l: &Layer<f64>, x: &Tensor<f64>| -> f64 {
        let y = l.forward(x).expect("shape checked by the analytic pass");
        y.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum()
    };
    let (gx, pg) = layer.backward(input, upstream)?;
    let mut worst = relative_error(gx.data(), numeric_gradient(input, |x| objective(layer, x)).data());
    if let Some(pg) = pg {
        let mut probe = layer.clone();
        let nw = numeric_gradient(&layer.params().expect("has params").weight, |w| {
            probe.params_mut().expect("has params").weight = w.clone();
            objective(&probe, input)
        });
        let mut probe = layer.clone();
        let nb = numeric_gradient(&layer.params().expect("has params").bias, |b| {
            probe.params_mut().expect("has params").bias = b.clone();
            objective(&probe, input)
        });
        worst = worst
            .max(relative_error(pg.weight.data(), nw.data()))
            .max(relative_error(pg.bias.data(), nb.data()));
    }
    Ok(worst)
}
