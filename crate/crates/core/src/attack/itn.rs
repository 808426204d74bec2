//! Inverse-transformation attack: learn the decryption map from exact
//! (ciphertext, plaintext) pairs.
//!
//! A stack of 1×1 locally-connected layers without activations collapses to
//! one affine map per pixel, so the pixel-wise attack fits that map directly
//! by ridge least squares; an SGD path over the layer stack is kept as well.
//! For the block-wise cipher the fitted map is a single affine transform of
//! the 96 nibbles of a block, shared by every block.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cipher::blockwise::{block_coords, check_block_dims, merge_nibbles, read_block, split_nibbles, write_block, BLOCK_POSITIONS};
use crate::cipher::CipherError;
use crate::image::Image;
use crate::linalg::{solve_symmetric, Matrix};
use crate::nn::checkpoint::{self, Entry, TAG_AFFINE_CODEC, TAG_DENSE};
use crate::nn::tensor::{clamp_round, images_to_tensor};
use crate::nn::{loss_mse, Init, Layer, LayerSpec, Network, NnError, Optimizer, OptimizerSpec, Params, Tensor};
use crate::scalar::Scalar;

pub const DEFAULT_RIDGE: f64 = 1e-6;
/// Pairs needed to pin down a 3×3 matrix plus offset per pixel.
pub const MIN_PIXEL_PAIRS: usize = 4;
/// Blocks needed to pin down a 96×96 matrix plus offset.
pub const MIN_BLOCKS: usize = BLOCK_POSITIONS + 1;
/// Targets live in [0, 1], so a batch MSE above this has left any basin.
pub const DIVERGED_LOSS: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ItnError {
    #[error("need at least {needed} {unit}, got {got}")]
    InsufficientPairs {
        needed: usize,
        got: usize,
        unit: &'static str,
    },
    #[error("image {got:?} does not match the model's {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("least-squares system is singular")]
    SingularSystem,
    #[error("training diverged: {0}")]
    NumericalDivergence(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Cipher(#[from] CipherError),
}

/// Ciphertexts with their exact plaintexts, all the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSet {
    cipher: Vec<Image>,
    plain: Vec<Image>,
}

impl PairedSet {
    pub fn new(cipher: Vec<Image>, plain: Vec<Image>) -> Result<Self, ItnError> {
        if cipher.len() != plain.len() || cipher.is_empty() {
            return Err(ItnError::InsufficientPairs {
                needed: cipher.len().max(1),
                got: plain.len().min(cipher.len()),
                unit: "matched pairs",
            });
        }
        let dims = cipher[0].dims();
        for img in cipher.iter().chain(&plain) {
            if img.dims() != dims {
                return Err(ItnError::DimensionMismatch {
                    expected: dims,
                    got: img.dims(),
                });
            }
        }
        Ok(Self { cipher, plain })
    }

    pub fn len(&self) -> usize {
        self.cipher.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cipher.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.cipher[0].dims()
    }

    pub fn cipher(&self) -> &[Image] {
        &self.cipher
    }

    pub fn plain(&self) -> &[Image] {
        &self.plain
    }
}

/// Anything that maps a ciphertext back to an image estimate.
pub trait InverseModel {
    fn invert(&self, img: &Image) -> Result<Image, ItnError>;
}

/// Applies `model` to every image.
pub fn apply_itn<M: InverseModel + ?Sized>(model: &M, imgs: &[Image]) -> Result<Vec<Image>, ItnError> {
    imgs.iter().map(|i| model.invert(i)).collect()
}

/// Per-pixel `out = A_p · in + b_p` on 8-bit channel values.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelAffineModel<T> {
    width: usize,
    height: usize,
    /// `matrices[p][o][i]`: weight of input channel `i` on output `o`.
    matrices: Vec<[[T; 3]; 3]>,
    offsets: Vec<[T; 3]>,
    /// Pixels whose system could not be solved and kept the identity map.
    fallback_pixels: Vec<usize>,
}

impl<T: Scalar> PixelAffineModel<T> {
    pub fn identity(width: usize, height: usize) -> Self {
        let mut eye = [[T::zero(); 3]; 3];
        for (i, row) in eye.iter_mut().enumerate() {
            row[i] = T::one();
        }
        Self {
            width,
            height,
            matrices: vec![eye; width * height],
            offsets: vec![[T::zero(); 3]; width * height],
            fallback_pixels: Vec::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn matrix(&self, pixel: usize) -> &[[T; 3]; 3] {
        &self.matrices[pixel]
    }

    pub fn offset(&self, pixel: usize) -> &[T; 3] {
        &self.offsets[pixel]
    }

    pub fn fallback_pixels(&self) -> &[usize] {
        &self.fallback_pixels
    }

    pub fn all_finite(&self) -> bool {
        self.matrices.iter().flatten().flatten().chain(self.offsets.iter().flatten()).all(|v| v.is_finite())
    }

    /// One locally-connected layer holding this map, on 8-bit units.
    pub fn to_network(&self) -> Network<T> {
        let spec = LayerSpec::LocallyConnected1x1 {
            height: self.height,
            width: self.width,
            in_channels: 3,
            out_channels: 3,
            init: Init::Identity,
        };
        let weight = self.matrices.iter().flatten().flatten().copied().collect();
        let bias = self.offsets.iter().flatten().copied().collect();
        let params = Params {
            weight: Tensor::from_vec(&[self.height, self.width, 3, 3], weight).expect("sized"),
            bias: Tensor::from_vec(&[self.height, self.width, 3], bias).expect("sized"),
        };
        Network::from_layers(vec![Layer::with_params(spec, Some(params)).expect("valid")]).expect("one layer")
    }

    /// Collapses a stack of 3→…→3 locally-connected layers whose inputs and
    /// outputs are `value / unit` into an 8-bit map.
    pub fn from_network(net: &Network<T>, unit: f64) -> Result<Self, ItnError> {
        let mut model: Option<Self> = None;
        for layer in net.layers() {
            let LayerSpec::LocallyConnected1x1 {
                height,
                width,
                in_channels,
                out_channels,
                ..
            } = *layer.spec()
            else {
                return Err(NnError::InvalidSpec(format!("{} layer in an affine stack", layer.spec().name())).into());
            };
            let m = model.get_or_insert_with(|| Self::identity(width, height));
            if (width, height) != m.dims() || in_channels != 3 || out_channels != 3 {
                return Err(NnError::InvalidSpec("affine stack must keep 3 channels and one size".into()).into());
            }
            let p = layer.params().expect("locally-connected layers have params");
            let (w, b) = (p.weight.data(), p.bias.data());
            for px in 0..width * height {
                let (a, c) = (m.matrices[px], m.offsets[px]);
                for o in 0..3 {
                    let row = &w[(px * 3 + o) * 3..(px * 3 + o) * 3 + 3];
                    m.offsets[px][o] = b[px * 3 + o] + (0..3).map(|k| row[k] * c[k]).sum::<T>();
                    for j in 0..3 {
                        m.matrices[px][o][j] = (0..3).map(|k| row[k] * a[k][j]).sum();
                    }
                }
            }
        }
        let mut model = model.ok_or_else(|| NnError::InvalidSpec("empty network".into()))?;
        let u = T::lit(unit);
        for off in model.offsets.iter_mut().flatten() {
            *off *= u;
        }
        Ok(model)
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        checkpoint::save_network(&self.to_network())
    }
}

impl<T: Scalar> InverseModel for PixelAffineModel<T> {
    fn invert(&self, img: &Image) -> Result<Image, ItnError> {
        if img.dims() != self.dims() {
            return Err(ItnError::DimensionMismatch {
                expected: self.dims(),
                got: img.dims(),
            });
        }
        Ok(img.map_pixels(|i, p| {
            let x = p.map(|v| T::from_u8(v).expect("u8"));
            let (a, b) = (&self.matrices[i], &self.offsets[i]);
            std::array::from_fn(|o| clamp_round((b[o] + a[o][0] * x[0] + a[o][1] * x[1] + a[o][2] * x[2]).as_f64()))
        }))
    }
}

/// Centered ridge regression of `targets` on `inputs` (`n` rows each).
/// Returns `(A, b)` with `A[o][i]` row-major, or `None` if unsolvable.
fn ridge_affine<T: Scalar>(inputs: &[Vec<T>], targets: &[Vec<T>], lambda: T) -> Option<(Vec<T>, Vec<T>)> {
    let n = inputs.len();
    let (din, dout) = (inputs[0].len(), targets[0].len());
    let count = T::from_usize_lossy(n);
    let mean = |rows: &[Vec<T>], d: usize| -> Vec<T> {
        let mut m = vec![T::zero(); d];
        for r in rows {
            for (a, &v) in m.iter_mut().zip(r) {
                *a += v;
            }
        }
        m.iter().map(|&v| v / count).collect()
    };
    let (me, mt) = (mean(inputs, din), mean(targets, dout));
    let mut cee = Matrix::zeros(din);
    let mut cet = vec![T::zero(); din * dout];
    let mut ce = vec![T::zero(); din];
    for (e, t) in inputs.iter().zip(targets) {
        for (c, (&v, &m)) in ce.iter_mut().zip(e.iter().zip(&me)) {
            *c = v - m;
        }
        cee.add_outer(&ce);
        for (i, &ci) in ce.iter().enumerate() {
            if ci == T::zero() {
                continue;
            }
            for (o, (&tv, &tm)) in t.iter().zip(&mt).enumerate() {
                cet[i * dout + o] += ci * (tv - tm);
            }
        }
    }
    cee.add_diagonal(lambda);
    let x = solve_symmetric(&cee, &cet, dout)?;
    let mut a = vec![T::zero(); dout * din];
    let mut b = mt;
    for o in 0..dout {
        for i in 0..din {
            a[o * din + i] = x[i * dout + o];
            b[o] -= a[o * din + i] * me[i];
        }
    }
    Some((a, b))
}

/// Closed-form per-pixel ridge fit; pixels whose system is singular keep
/// the identity map and are listed in [`PixelAffineModel::fallback_pixels`].
pub fn fit_itn_pixelwise_closed<T: Scalar>(pairs: &PairedSet, lambda: f64) -> Result<PixelAffineModel<T>, ItnError> {
    if pairs.len() < MIN_PIXEL_PAIRS {
        return Err(ItnError::InsufficientPairs {
            needed: MIN_PIXEL_PAIRS,
            got: pairs.len(),
            unit: "pairs",
        });
    }
    let (w, h) = pairs.dims();
    let mut model = PixelAffineModel::identity(w, h);
    let lambda = T::lit(lambda.max(0.0));
    let to_vec = |p: [u8; 3]| -> Vec<T> { p.iter().map(|&v| T::from_u8(v).expect("u8")).collect() };
    for px in 0..w * h {
        let inputs: Vec<Vec<T>> = pairs.cipher.iter().map(|i| to_vec(i.pixels()[px])).collect();
        let targets: Vec<Vec<T>> = pairs.plain.iter().map(|i| to_vec(i.pixels()[px])).collect();
        match ridge_affine(&inputs, &targets, lambda) {
            Some((a, b)) => {
                model.matrices[px] = std::array::from_fn(|o| std::array::from_fn(|i| a[o * 3 + i]));
                model.offsets[px] = std::array::from_fn(|o| b[o]);
            }
            None => model.fallback_pixels.push(px),
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ItnSgdConfig {
    /// Number of stacked 3→3 locally-connected layers.
    pub layers: usize,
    pub init: Init,
    pub epochs: usize,
    pub batch: usize,
    pub optimizer: OptimizerSpec,
    pub seed: u64,
}

impl Default for ItnSgdConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            init: Init::Identity,
            epochs: 70,
            batch: 128,
            optimizer: OptimizerSpec::Sgd {
                lr: 0.1,
                momentum: 0.9,
                weight_decay: 5e-4,
                schedule: vec![(40, 0.1), (60, 0.01)],
            },
            seed: 0,
        }
    }
}

/// Trained model with the mean training loss of each epoch (on `[0, 1]` units).
#[derive(Debug, Clone)]
pub struct ItnSgdOutcome<T> {
    pub network: Network<T>,
    pub model: PixelAffineModel<T>,
    pub epoch_losses: Vec<f64>,
}

/// Minibatch training of a locally-connected stack on MSE, values in `[0, 1]`.
pub fn fit_itn_pixelwise_sgd<T: Scalar>(pairs: &PairedSet, cfg: &ItnSgdConfig) -> Result<ItnSgdOutcome<T>, ItnError> {
    if cfg.layers == 0 || cfg.batch == 0 {
        return Err(NnError::InvalidSpec("need at least one layer and a positive batch".into()).into());
    }
    let (w, h) = pairs.dims();
    let spec = LayerSpec::LocallyConnected1x1 {
        height: h,
        width: w,
        in_channels: 3,
        out_channels: 3,
        init: cfg.init,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::new(&vec![spec; cfg.layers], &mut rng)?;
    let unit = |v: u8| T::from_u8(v).expect("u8") / T::lit(255.0);
    let x = images_to_tensor(pairs.cipher(), unit)?;
    let y = images_to_tensor(pairs.plain(), unit)?;
    let mut opt = Optimizer::new(cfg.optimizer.clone())?;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        opt.set_epoch(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let trace = net.forward_trace(&x.gather(chunk))?;
            let (loss, grad) = loss_mse(trace.output(), &y.gather(chunk))?;
            if !loss.is_finite() || loss.as_f64() > DIVERGED_LOSS {
                return Err(ItnError::NumericalDivergence(format!("loss {} at epoch {epoch}", loss.as_f64())));
            }
            total += loss.as_f64() * chunk.len() as f64;
            let (_, grads) = net.backward(&trace, &grad)?;
            opt.step(net.params_mut(), &grads).map_err(|e| match e {
                NnError::NonFinite(what) => ItnError::NumericalDivergence(format!("{what} at epoch {epoch}")),
                other => other.into(),
            })?;
        }
        if !net.all_finite() {
            return Err(ItnError::NumericalDivergence(format!("parameters at epoch {epoch}")));
        }
        epoch_losses.push(total / pairs.len() as f64);
    }
    let model = PixelAffineModel::from_network(&net, 255.0)?;
    Ok(ItnSgdOutcome {
        network: net,
        model,
        epoch_losses,
    })
}

/// `out = A · nibbles + t` applied to every 4×4 block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockAffineModel<T> {
    /// Row-major `96 × 96`.
    matrix: Vec<T>,
    offset: Vec<T>,
}

impl<T: Scalar> BlockAffineModel<T> {
    pub fn identity() -> Self {
        let mut matrix = vec![T::zero(); BLOCK_POSITIONS * BLOCK_POSITIONS];
        for i in 0..BLOCK_POSITIONS {
            matrix[i * BLOCK_POSITIONS + i] = T::one();
        }
        Self {
            matrix,
            offset: vec![T::zero(); BLOCK_POSITIONS],
        }
    }

    pub fn matrix(&self) -> &[T] {
        &self.matrix
    }

    pub fn offset(&self) -> &[T] {
        &self.offset
    }

    /// A dense 96→96 layer preceded by a block-codec marker.
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let widen = |v: &[T], shape: &[usize]| {
            Tensor::from_vec(shape, v.iter().map(|x| x.as_f64()).collect()).expect("sized")
        };
        let marker = Entry {
            tag: TAG_AFFINE_CODEC,
            hyper: vec![4, 6],
            tensors: vec![],
        };
        let dense = Entry {
            tag: TAG_DENSE,
            hyper: vec![BLOCK_POSITIONS as u64, BLOCK_POSITIONS as u64],
            tensors: vec![
                widen(&self.matrix, &[BLOCK_POSITIONS, BLOCK_POSITIONS]),
                widen(&self.offset, &[BLOCK_POSITIONS]),
            ],
        };
        checkpoint::encode(&[marker, dense])
    }
}

impl<T: Scalar> InverseModel for BlockAffineModel<T> {
    fn invert(&self, img: &Image) -> Result<Image, ItnError> {
        check_block_dims(img)?;
        let mut out = img.clone();
        for (bx, by) in block_coords(img) {
            let e = split_nibbles(&read_block(img, bx, by))?;
            let x: Vec<T> = e.iter().map(|&v| T::from_u8(v).expect("u8")).collect();
            let mut t = [0u8; BLOCK_POSITIONS];
            for (o, slot) in t.iter_mut().enumerate() {
                let row = &self.matrix[o * BLOCK_POSITIONS..(o + 1) * BLOCK_POSITIONS];
                let v = self.offset[o] + row.iter().zip(&x).map(|(&a, &b)| a * b).sum::<T>();
                *slot = clamp_round(v.as_f64()).min(15);
            }
            write_block(&mut out, bx, by, &merge_nibbles(&t)?);
        }
        Ok(out)
    }
}

/// Ridge fit of one nibble-space affine map pooled over every block of
/// every pair.
pub fn fit_itn_blockwise_nibble<T: Scalar>(pairs: &PairedSet, lambda: f64) -> Result<BlockAffineModel<T>, ItnError> {
    check_block_dims(&pairs.cipher[0])?;
    let nibble_rows = |imgs: &[Image]| -> Result<Vec<Vec<T>>, ItnError> {
        let mut rows = Vec::new();
        for img in imgs {
            for (bx, by) in block_coords(img) {
                let n = split_nibbles(&read_block(img, bx, by))?;
                rows.push(n.iter().map(|&v| T::from_u8(v).expect("u8")).collect());
            }
        }
        Ok(rows)
    };
    let inputs = nibble_rows(&pairs.cipher)?;
    if inputs.len() < MIN_BLOCKS {
        return Err(ItnError::InsufficientPairs {
            needed: MIN_BLOCKS,
            got: inputs.len(),
            unit: "blocks",
        });
    }
    let targets = nibble_rows(&pairs.plain)?;
    let (matrix, offset) = ridge_affine(&inputs, &targets, T::lit(lambda.max(0.0))).ok_or(ItnError::SingularSystem)?;
    Ok(BlockAffineModel { matrix, offset })
}

/// Either fitted model, as stored in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum ItnModel<T> {
    Pixel(PixelAffineModel<T>),
    Block(BlockAffineModel<T>),
}

impl<T: Scalar> ItnModel<T> {
    pub fn to_checkpoint(&self) -> Vec<u8> {
        match self {
            ItnModel::Pixel(m) => m.to_checkpoint(),
            ItnModel::Block(m) => m.to_checkpoint(),
        }
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self, ItnError> {
        let entries = checkpoint::decode(bytes)?;
        match entries.as_slice() {
            [marker, dense] if marker.tag == TAG_AFFINE_CODEC => {
                let n = BLOCK_POSITIONS;
                match dense.tensors.as_slice() {
                    [w, b] if dense.tag == TAG_DENSE && w.shape() == [n, n] && b.shape() == [n] => {
                        Ok(ItnModel::Block(BlockAffineModel {
                            matrix: w.data().iter().map(|&v| T::lit(v)).collect(),
                            offset: b.data().iter().map(|&v| T::lit(v)).collect(),
                        }))
                    }
                    _ => Err(NnError::Checkpoint("block codec needs a 96x96 dense layer".into()).into()),
                }
            }
            _ => {
                let net = checkpoint::load_network(bytes)?;
                Ok(ItnModel::Pixel(PixelAffineModel::from_network(&net, 1.0)?))
            }
        }
    }
}

impl<T: Scalar> InverseModel for ItnModel<T> {
    fn invert(&self, img: &Image) -> Result<Image, ItnError> {
        match self {
            ItnModel::Pixel(m) => m.invert(img),
            ItnModel::Block(m) => m.invert(img),
        }
    }
}
