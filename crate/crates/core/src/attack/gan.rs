//! GAN-based reconstruction from unpaired data: a generator learns to map
//! ciphertexts of one image set toward the distribution of a disjoint set
//! of plain images, judged by a discriminator.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Dataset, Image, ImageError};
use crate::nn::tensor::{from_signed_unit, images_to_tensor, tensor_to_images, to_signed_unit};
use crate::nn::{checkpoint, loss_bce, Init, LayerSpec, Network, NnError, Optimizer, OptimizerSpec, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GanError {
    #[error("training sets overlap on image id {0}")]
    DisjointnessViolation(usize),
    #[error("training diverged: {0}")]
    NumericalDivergence(String),
    #[error("image {got:?} does not match the generator's {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch: usize,
    pub seed: u64,
    /// `None` picks [`default_generator`] for the image size.
    pub generator: Option<Vec<LayerSpec>>,
    /// `None` picks [`default_discriminator`] for the image size.
    pub discriminator: Option<Vec<LayerSpec>>,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch: 64,
            seed: 0,
            generator: None,
            discriminator: None,
        }
    }
}

/// Per-pixel 3→3 locally-connected map followed by tanh.
pub fn default_generator(width: usize, height: usize, init: Init) -> Vec<LayerSpec> {
    vec![
        LayerSpec::LocallyConnected1x1 {
            height,
            width,
            in_channels: 3,
            out_channels: 3,
            init,
        },
        LayerSpec::Tanh,
    ]
}

/// Two stride-2 convolutions with leaky ReLU, then a dense sigmoid unit.
pub fn default_discriminator(width: usize, height: usize) -> Vec<LayerSpec> {
    let conv = |i, o| LayerSpec::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel: 4,
        stride: 2,
        padding: 1,
    };
    let (h2, w2) = (height / 2, width / 2);
    vec![
        conv(3, 8),
        LayerSpec::LeakyRelu { alpha: 0.2 },
        conv(8, 16),
        LayerSpec::LeakyRelu { alpha: 0.2 },
        LayerSpec::Dense {
            inputs: 16 * (h2 / 2) * (w2 / 2),
            outputs: 1,
            init: Init::default(),
        },
        LayerSpec::Sigmoid,
    ]
}

/// Means over one epoch's steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_real_mean: f64,
    pub d_fake_mean: f64,
}

#[derive(Debug, Clone)]
pub struct GanModel<T> {
    pub generator: Network<T>,
    pub discriminator: Network<T>,
    pub history: Vec<EpochStats>,
    dims: (usize, usize),
}

impl<T: Scalar> GanModel<T> {
    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    /// Loss curves as CSV with a header row.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,d_loss,g_loss,d_real_mean,d_fake_mean\n");
        for e in &self.history {
            let _ = writeln!(s, "{},{},{},{},{}", e.epoch, e.d_loss, e.g_loss, e.d_real_mean, e.d_fake_mean);
        }
        s
    }

    pub fn generator_checkpoint(&self) -> Vec<u8> {
        checkpoint::save_network(&self.generator)
    }
}

fn check_disjoint(a: &Dataset, b: &Dataset) -> Result<(), GanError> {
    let seen: HashSet<usize> = a.ids().iter().copied().collect();
    match b.ids().iter().find(|id| seen.contains(id)) {
        Some(&id) => Err(GanError::DisjointnessViolation(id)),
        None => Ok(()),
    }
}

fn finite<T: Scalar>(v: T, what: &str, epoch: usize) -> Result<T, GanError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(GanError::NumericalDivergence(format!("{what} at epoch {epoch}")))
    }
}

fn step<T: Scalar>(opt: &mut Optimizer<T>, net: &mut Network<T>, grads: &[Tensor<T>], epoch: usize) -> Result<(), GanError> {
    opt.step(net.params_mut(), grads).map_err(|e| match e {
        NnError::NonFinite(what) => GanError::NumericalDivergence(format!("{what} at epoch {epoch}")),
        other => other.into(),
    })
}

/// Alternating discriminator / generator updates on `enc_t1` (ciphertexts)
/// and `plain_t2` (plain images with ids disjoint from `enc_t1`).
///
/// Each step trains D with binary cross-entropy on a real batch (label 1)
/// and a generated batch (label 0), then G on `−ln D(G(e))`.
pub fn train_gan_attack<T: Scalar>(enc_t1: &Dataset, plain_t2: &Dataset, cfg: &GanConfig) -> Result<GanModel<T>, GanError> {
    check_disjoint(enc_t1, plain_t2)?;
    let dims = enc_t1
        .dims()
        .ok_or_else(|| GanError::InvalidConfig("empty ciphertext set".into()))?;
    if plain_t2.dims() != Some(dims) {
        return Err(GanError::DimensionMismatch {
            expected: dims,
            got: plain_t2.dims().unwrap_or((0, 0)),
        });
    }
    if cfg.batch == 0 || cfg.batch > enc_t1.len() || cfg.batch > plain_t2.len() {
        return Err(GanError::InvalidConfig(format!(
            "batch {} must be positive and fit both sets ({}, {})",
            cfg.batch,
            enc_t1.len(),
            plain_t2.len()
        )));
    }
    let (w, h) = dims;
    let g_spec = cfg
        .generator
        .clone()
        .unwrap_or_else(|| default_generator(w, h, Init::default()));
    let d_spec = cfg.discriminator.clone().unwrap_or_else(|| default_discriminator(w, h));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gen = Network::<T>::new(&g_spec, &mut rng)?;
    let mut disc = Network::<T>::new(&d_spec, &mut rng)?;
    let adam = OptimizerSpec::Adam {
        lr: cfg.lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: 1e-8,
    };
    let mut opt_g = Optimizer::new(adam.clone())?;
    let mut opt_d = Optimizer::new(adam)?;

    let x1 = images_to_tensor(enc_t1.images(), to_signed_unit::<T>)?;
    let x2 = images_to_tensor(plain_t2.images(), to_signed_unit::<T>)?;
    let (n1, n2) = (enc_t1.len(), plain_t2.len());
    let mut p1: Vec<usize> = (0..n1).collect();
    let mut p2: Vec<usize> = (0..n2).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        p1.shuffle(&mut rng);
        p2.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        let mut steps = 0usize;
        for start in (0..n1).step_by(cfg.batch) {
            let idx1 = &p1[start..(start + cfg.batch).min(n1)];
            let idx2: Vec<usize> = (start..start + idx1.len()).map(|k| p2[k % n2]).collect();
            let enc = x1.gather(idx1);
            let real = x2.gather(&idx2);

            let fake = gen.forward(&enc)?;
            let tr_real = disc.forward_trace(&real)?;
            let tr_fake = disc.forward_trace(&fake)?;
            let (l_real, g_real) = loss_bce(tr_real.output(), T::one());
            let (l_fake, g_fake) = loss_bce(tr_fake.output(), T::zero());
            let d_loss = finite(l_real + l_fake, "discriminator loss", epoch)?;
            let (_, mut d_grads) = disc.backward(&tr_real, &g_real)?;
            let (_, d_grads_fake) = disc.backward(&tr_fake, &g_fake)?;
            for (a, b) in d_grads.iter_mut().zip(&d_grads_fake) {
                a.add_assign(b)?;
            }
            step(&mut opt_d, &mut disc, &d_grads, epoch)?;

            let tr_gen = gen.forward_trace(&enc)?;
            let tr_judge = disc.forward_trace(tr_gen.output())?;
            let (g_loss, g_out) = loss_bce(tr_judge.output(), T::one());
            let g_loss = finite(g_loss, "generator loss", epoch)?;
            let (g_in, _) = disc.backward(&tr_judge, &g_out)?;
            let (_, g_grads) = gen.backward(&tr_gen, &g_in)?;
            step(&mut opt_g, &mut gen, &g_grads, epoch)?;

            sums[0] += d_loss.as_f64();
            sums[1] += g_loss.as_f64();
            sums[2] += tr_real.output().mean().as_f64();
            sums[3] += tr_fake.output().mean().as_f64();
            steps += 1;
        }
        let k = steps.max(1) as f64;
        history.push(EpochStats {
            epoch,
            d_loss: sums[0] / k,
            g_loss: sums[1] / k,
            d_real_mean: sums[2] / k,
            d_fake_mean: sums[3] / k,
        });
    }
    Ok(GanModel {
        generator: gen,
        discriminator: disc,
        history,
        dims,
    })
}

/// Applies a generator to ciphertexts, mapping its `[−1, 1]` output back
/// to bytes.
pub fn generate<T: Scalar>(generator: &Network<T>, images: &[Image]) -> Result<Vec<Image>, GanError> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let x = images_to_tensor(images, to_signed_unit::<T>)?;
    let y = generator.forward(&x)?;
    if y.shape() != x.shape() {
        return Err(GanError::DimensionMismatch {
            expected: images[0].dims(),
            got: (y.shape().get(3).copied().unwrap_or(0), y.shape().get(2).copied().unwrap_or(0)),
        });
    }
    Ok(tensor_to_images(&y, from_signed_unit::<T>)?)
}

/// Reconstructs `enc_q` with a trained model, keeping ids and role.
pub fn gan_reconstruct<T: Scalar>(model: &GanModel<T>, enc_q: &Dataset) -> Result<Dataset, GanError> {
    if let Some(d) = enc_q.dims() {
        if d != model.dims {
            return Err(GanError::DimensionMismatch {
                expected: model.dims,
                got: d,
            });
        }
    }
    let images = generate(&model.generator, enc_q.images())?;
    Ok(Dataset::with_ids(images, enc_q.ids().to_vec(), enc_q.role())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Role;
    use crate::synth::synthetic_dataset;

    fn sets(n: usize, side: usize) -> (Dataset, Dataset) {
        (
            synthetic_dataset(n, side, 1, 0, Role::Train).unwrap(),
            synthetic_dataset(n, side, 2, n, Role::Train).unwrap(),
        )
    }

    fn quick(seed: u64) -> GanConfig {
        GanConfig {
            epochs: 3,
            batch: 8,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn overlapping_ids_rejected() {
        let a = synthetic_dataset(8, 16, 1, 0, Role::Train).unwrap();
        let b = synthetic_dataset(8, 16, 2, 7, Role::Train).unwrap();
        assert_eq!(
            train_gan_attack::<f64>(&a, &b, &quick(0)).unwrap_err(),
            GanError::DisjointnessViolation(7)
        );
    }

    #[test]
    fn deterministic_per_seed() {
        let (a, b) = sets(16, 16);
        let m1 = train_gan_attack::<f64>(&a, &b, &quick(4)).unwrap();
        let m2 = train_gan_attack::<f64>(&a, &b, &quick(4)).unwrap();
        let m3 = train_gan_attack::<f64>(&a, &b, &quick(5)).unwrap();
        assert_eq!(m1.history, m2.history);
        assert_eq!(m1.generator.params(), m2.generator.params());
        assert_ne!(m1.history, m3.history);
        assert_eq!(m1.history.len(), 3);
        for e in &m1.history {
            assert!(e.d_real_mean > 0.0 && e.d_real_mean < 1.0);
            assert!(e.d_fake_mean > 0.0 && e.d_fake_mean < 1.0);
        }
        assert_eq!(m1.history_csv().lines().count(), 4);
    }

    #[test]
    fn bad_batch_rejected() {
        let (a, b) = sets(8, 16);
        let cfg = GanConfig {
            batch: 9,
            ..quick(0)
        };
        assert!(matches!(train_gan_attack::<f64>(&a, &b, &cfg), Err(GanError::InvalidConfig(_))));
    }

    #[test]
    fn identity_generator_reproduces_input() {
        let (a, _) = sets(4, 16);
        let spec = vec![LayerSpec::LocallyConnected1x1 {
            height: 16,
            width: 16,
            in_channels: 3,
            out_channels: 3,
            init: Init::Identity,
        }];
        let g = Network::<f64>::new(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(generate(&g, a.images()).unwrap(), a.images());
    }

    #[test]
    fn identity_init_with_tanh_stays_close() {
        let (a, _) = sets(4, 16);
        let g = Network::<f64>::new(&default_generator(16, 16, Init::Identity), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (out, inp) in generate(&g, a.images()).unwrap().iter().zip(a.images()) {
            for (&o, &i) in out.as_bytes().iter().zip(inp.as_bytes()) {
                // tanh(x) vs x on [-1, 1] differs by at most 1 − tanh(1)
                assert!((f64::from(o) - f64::from(i)).abs() <= 31.0);
            }
        }
    }
}
