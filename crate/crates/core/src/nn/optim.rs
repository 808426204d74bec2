use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};
use crate::scalar::Scalar;

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerSpec {
    /// `v ← momentum·v + g + weight_decay·w; w ← w − lr·v`.
    ///
    /// `schedule` holds `(epoch, multiplier)` pairs; from `epoch` on the base
    /// rate is scaled by `multiplier` (the last applicable entry wins).
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
        #[serde(default)]
        weight_decay: f64,
        #[serde(default)]
        schedule: Vec<(usize, f64)>,
    },
    Adam {
        lr: f64,
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

impl OptimizerSpec {
    pub fn adam(lr: f64, beta1: f64) -> Self {
        OptimizerSpec::Adam {
            lr,
            beta1,
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let ok = match *self {
            OptimizerSpec::Sgd {
                lr,
                momentum,
                weight_decay,
                ref schedule,
            } => {
                lr > 0.0
                    && (0.0..1.0).contains(&momentum)
                    && weight_decay >= 0.0
                    && schedule.iter().all(|&(_, m)| m.is_finite() && m > 0.0)
            }
            OptimizerSpec::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(NnError::InvalidSpec(format!("optimizer hyperparameters out of range: {self:?}")))
        }
    }

    /// Learning rate in effect during `epoch` (zero-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self {
            OptimizerSpec::Sgd { lr, schedule, .. } => {
                let mult = schedule
                    .iter()
                    .filter(|&&(e, _)| e <= epoch)
                    .max_by_key(|&&(e, _)| e)
                    .map_or(1.0, |&(_, m)| m);
                lr * mult
            }
            OptimizerSpec::Adam { lr, .. } => *lr,
        }
    }
}

/// Optimizer state for one ordered list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    spec: OptimizerSpec,
    epoch: usize,
    steps: i32,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(spec: OptimizerSpec) -> Result<Self, NnError> {
        spec.validate()?;
        Ok(Self {
            spec,
            epoch: 0,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    pub fn lr(&self) -> f64 {
        self.spec.lr_at(self.epoch)
    }

    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) -> Result<(), NnError> {
        if params.len() != grads.len() {
            return Err(NnError::ShapeMismatch {
                context: "optimizer parameter count",
                expected: vec![params.len()],
                got: vec![grads.len()],
            });
        }
        for (p, g) in params.iter().zip(grads) {
            g.expect_shape(p.shape(), "optimizer grad")?;
            if !g.all_finite() {
                return Err(NnError::NonFinite("gradient".into()));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.second = self.first.clone();
        }
        self.steps = self.steps.saturating_add(1);
        let lr = T::lit(self.lr());
        match self.spec {
            OptimizerSpec::Sgd {
                momentum,
                weight_decay,
                ..
            } => {
                let (mu, wd) = (T::lit(momentum), T::lit(weight_decay));
                for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.first) {
                    for ((w, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                        *vi = mu * *vi + gi + wd * *w;
                        *w -= lr * *vi;
                    }
                }
            }
            OptimizerSpec::Adam { beta1, beta2, eps, .. } => {
                let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(eps));
                let c1 = T::one() - b1.powi(self.steps);
                let c2 = T::one() - b2.powi(self.steps);
                let one = T::one();
                for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    let it = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut());
                    for (((w, &gi), mi), vi) in it {
                        *mi = b1 * *mi + (one - b1) * gi;
                        *vi = b2 * *vi + (one - b2) * gi * gi;
                        *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sgd(lr: f64) -> OptimizerSpec {
        OptimizerSpec::Sgd {
            lr,
            momentum: 0.0,
            weight_decay: 0.0,
            schedule: vec![],
        }
    }

    #[test]
    fn plain_sgd_step_to_zero() {
        let mut w = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let g = w.clone();
        let mut opt = Optimizer::<f64>::new(sgd(1.0)).unwrap();
        opt.step(vec![&mut w], &[g]).unwrap();
        assert!(w.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_schedule() {
        let spec = OptimizerSpec::Sgd {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            schedule: vec![(40, 0.1), (60, 0.01)],
        };
        assert!((spec.lr_at(0) - 0.1).abs() < 1e-15);
        assert!((spec.lr_at(39) - 0.1).abs() < 1e-15);
        assert!((spec.lr_at(40) - 0.01).abs() < 1e-15);
        assert!((spec.lr_at(60) - 0.001).abs() < 1e-15);
        assert!((spec.lr_at(69) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr() {
        let mut w = Tensor::filled(&[4], 0.3);
        let mut opt = Optimizer::<f64>::new(OptimizerSpec::adam(2e-4, 0.5)).unwrap();
        opt.step(vec![&mut w], &[Tensor::filled(&[4], 1.0)]).unwrap();
        for &v in w.data() {
            assert!((v - (0.3 - 2e-4)).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(Optimizer::<f64>::new(sgd(0.0)).is_err());
        assert!(Optimizer::<f64>::new(OptimizerSpec::adam(1e-3, 1.0)).is_err());
        let spec = OptimizerSpec::Sgd {
            lr: 0.1,
            momentum: 1.0,
            weight_decay: 0.0,
            schedule: vec![],
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut w = Tensor::filled(&[2], 0.0);
        let mut opt = Optimizer::<f64>::new(sgd(0.1)).unwrap();
        let g = Tensor::from_vec(&[2], vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(opt.step(vec![&mut w], &[g]), Err(NnError::NonFinite(_))));
    }

    #[test]
    fn adam_beta2_defaults() {
        let spec: OptimizerSpec = serde_json::from_str(r#"{"kind":"adam","lr":0.0002,"beta1":0.5}"#).unwrap();
        assert_eq!(spec, OptimizerSpec::adam(2e-4, 0.5));
    }
}
