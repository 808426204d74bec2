//! Benchmark pipeline: load a corpus, encrypt it under each configured
//! scheme, run an attack on the ciphertexts and score the reconstructions.
//!
//! A configuration lists *cells*, each one `(scheme, attack)` pair; the report
//! holds one aggregate per cell plus per-image rows.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attack::fr::{fr_attack, FrError, FrParams};
use crate::attack::gan::{default_discriminator, default_generator, gan_reconstruct, train_gan_attack, GanConfig, GanError};
use crate::attack::itn::{
    apply_itn, fit_itn_blockwise_nibble, fit_itn_pixelwise_closed, fit_itn_pixelwise_sgd, ItnError, ItnModel, ItnSgdConfig,
    PairedSet, DEFAULT_RIDGE,
};
use crate::cipher::blockwise::{decrypt_blockwise, encrypt_blockwise, BlockwiseKey};
use crate::cipher::pixelwise::{decrypt_pixelwise, encrypt_pixelwise, KeyPolicy, PixelwiseKey};
use crate::cipher::CipherError;
use crate::image::{load_ppm, load_stl10, save_ppm, split_halves, Dataset, Image, ImageError, Role};
use crate::metrics::{mean_of, mse, ssim, MetricError};
use crate::nn::Init;
use crate::prng::KeyStream;
use crate::synth::synthetic_dataset;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("pixel-wise key space needs a pixel count")]
    MissingN,
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("ITN needs plaintext/ciphertext pairs: {0}")]
    MissingPairs(String),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Fr(#[from] FrError),
    #[error(transparent)]
    Itn(#[from] ItnError),
    #[error(transparent)]
    Gan(#[from] GanError),
}

impl ExperimentError {
    /// 1 for configuration problems, 3 for numerical divergence, 2 for
    /// everything data-related.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::MissingN => 1,
            ExperimentError::Fr(FrError::InvalidBits(_)) => 1,
            ExperimentError::Itn(ItnError::NumericalDivergence(_)) | ExperimentError::Gan(GanError::NumericalDivergence(_)) => 3,
            ExperimentError::Gan(GanError::InvalidConfig(_)) => 1,
            _ => 2,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        ExperimentError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

type Result<T, E = ExperimentError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub seeds: Seeds,
    pub cells: Vec<CellSpec>,
    /// Relative to the config file; the CLI's `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// SSIM at or below which a cell is flagged robust. Heuristic only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robustness_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Key material of every cipher.
    pub cipher: u64,
    /// Train-set split into the GAN's two halves.
    pub split: u64,
    /// Network initialization and minibatch order.
    pub training: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            cipher: 1,
            split: 2,
            training: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        train: usize,
        test: usize,
        side: usize,
        seed: u64,
    },
    /// Every `*.ppm` in each directory, in file-name order.
    PpmDir {
        train_dir: PathBuf,
        test_dir: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        crop: Option<usize>,
    },
    Stl10 {
        train_file: PathBuf,
        test_file: PathBuf,
        train: usize,
        test: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        crop: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Same,
    Different,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemeSpec {
    Pixelwise { policy: PolicyKind },
    Blockwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItnSolver {
    Closed,
    Sgd,
}

fn default_bits() -> u8 {
    8
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    /// Scores the ciphertext itself.
    None,
    Fr {
        #[serde(default = "default_bits")]
        bits: u8,
        /// `None` tries both leading bits and keeps the better score per image.
        #[serde(default)]
        leading_bit: Option<bool>,
    },
    Itn {
        solver: ItnSolver,
        #[serde(default = "default_ridge")]
        ridge: f64,
        #[serde(default)]
        sgd: ItnSgdConfig,
        /// Check reconstructions against a known-key decryption.
        #[serde(default)]
        self_test: bool,
    },
    Gan {
        #[serde(default)]
        gan: GanConfig,
    },
}

impl AttackSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AttackSpec::None => "none",
            AttackSpec::Fr { .. } => "fr",
            AttackSpec::Itn { .. } => "itn",
            AttackSpec::Gan { .. } => "gan",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub scheme: SchemeSpec,
    pub attack: AttackSpec,
}

impl CellSpec {
    pub fn scheme_name(&self) -> &'static str {
        match self.scheme {
            SchemeSpec::Pixelwise { .. } => "pixelwise",
            SchemeSpec::Blockwise => "blockwise",
        }
    }

    pub fn policy_name(&self) -> &'static str {
        match self.scheme {
            SchemeSpec::Pixelwise {
                policy: PolicyKind::Different,
            } => "different",
            _ => "same",
        }
    }

    /// Directory-safe identifier, e.g. `pixelwise-same-fr`.
    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.scheme_name(), self.policy_name(), self.attack.name())
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)
            .map_err(|e| ExperimentError::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text, overrides)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative dataset paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(out) = &mut self.output_dir {
            fix(out);
        }
        match &mut self.dataset {
            DatasetSource::PpmDir { train_dir, test_dir, .. } => {
                fix(train_dir);
                fix(test_dir);
            }
            DatasetSource::Stl10 {
                train_file, test_file, ..
            } => {
                fix(train_file);
                fix(test_file);
            }
            DatasetSource::Synthetic { .. } => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.cells.is_empty() {
            return bad("at least one cell is required".into());
        }
        if let DatasetSource::Synthetic { train, test, side, .. } = self.dataset {
            if side == 0 || test == 0 {
                return bad("synthetic corpus needs a positive side and test count".into());
            }
            let _ = train;
        }
        let mut labels = std::collections::HashSet::new();
        for cell in &self.cells {
            if !labels.insert(cell.label()) {
                return bad(format!("duplicate cell {}", cell.label()));
            }
            match &cell.attack {
                AttackSpec::Fr { bits, .. } if !(1..=8).contains(bits) => {
                    return bad(format!("fr bits must be in 1..=8, got {bits}"));
                }
                AttackSpec::Itn { ridge, .. } if !(*ridge >= 0.0) => {
                    return bad(format!("itn ridge must be non-negative, got {ridge}"));
                }
                AttackSpec::Itn { sgd, .. } => {
                    sgd.optimizer.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
                }
                AttackSpec::Gan { gan } if gan.epochs > 0 && !(gan.lr > 0.0) => {
                    return bad("gan learning rate must be positive".into());
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Sets `path.to.key=value` inside a JSON document. The value is parsed as
/// JSON when possible and kept as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ExperimentError::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().filter(|k| !k.is_empty()).ok_or_else(|| ExperimentError::Config(format!("empty override path in {assignment:?}")))?;
    let mut node = doc;
    for k in keys {
        node = match node {
            Value::Object(map) => map.entry(k).or_insert_with(|| Value::Object(Default::default())),
            Value::Array(items) => k
                .parse::<usize>()
                .ok()
                .and_then(|i| items.get_mut(i))
                .ok_or_else(|| ExperimentError::Config(format!("override path {path:?}: no element {k}")))?,
            _ => return Err(ExperimentError::Config(format!("override path {path:?}: {k} is not an object"))),
        };
    }
    match node {
        Value::Object(map) => {
            map.insert(last.to_string(), value);
        }
        Value::Array(items) => {
            let slot = last
                .parse::<usize>()
                .ok()
                .and_then(|i| items.get_mut(i))
                .ok_or_else(|| ExperimentError::Config(format!("override path {path:?}: no element {last}")))?;
            *slot = value;
        }
        _ => return Err(ExperimentError::Config(format!("override path {path:?} does not name a field"))),
    }
    Ok(())
}

/// Plain training and test images.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub train: Dataset,
    pub test: Dataset,
}

fn crop_all(images: Vec<Image>, crop: Option<usize>) -> Result<Vec<Image>> {
    match crop {
        Some(side) => Ok(images.iter().map(|i| i.center_crop(side)).collect::<Result<_, _>>()?),
        None => Ok(images),
    }
}

fn read_ppm_dir(dir: &Path) -> Result<Vec<(String, Image)>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| ExperimentError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm")))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|p| {
            let bytes = fs::read(&p).map_err(|e| ExperimentError::io(&p, e))?;
            let img = load_ppm(&bytes).map_err(|e| ExperimentError::io(&p, e))?;
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((stem, img))
        })
        .collect()
}

fn read_stl10(path: &Path, count: usize) -> Result<Vec<Image>> {
    let bytes = fs::read(path).map_err(|e| ExperimentError::io(path, e))?;
    load_stl10(&bytes, count).map_err(|e| ExperimentError::io(path, e))
}

impl Corpus {
    /// Train ids are `0..train`, test ids follow on, so every image of an
    /// experiment has a distinct id.
    pub fn load(src: &DatasetSource) -> Result<Self> {
        let (train, test) = match src {
            DatasetSource::Synthetic { train, test, side, seed } => {
                let tr = synthetic_dataset(*train, *side, *seed, 0, Role::Train)?;
                let te = synthetic_dataset(*test, *side, seed.wrapping_add(1), *train, Role::Test)?;
                return Ok(Self { train: tr, test: te });
            }
            DatasetSource::PpmDir {
                train_dir,
                test_dir,
                crop,
            } => (
                crop_all(read_ppm_dir(train_dir)?.into_iter().map(|(_, i)| i).collect(), *crop)?,
                crop_all(read_ppm_dir(test_dir)?.into_iter().map(|(_, i)| i).collect(), *crop)?,
            ),
            DatasetSource::Stl10 {
                train_file,
                test_file,
                train,
                test,
                crop,
            } => (
                crop_all(read_stl10(train_file, *train)?, *crop)?,
                crop_all(read_stl10(test_file, *test)?, *crop)?,
            ),
        };
        let n = train.len();
        let m = test.len();
        Ok(Self {
            train: Dataset::with_ids(train, (0..n).collect(), Role::Train)?,
            test: Dataset::with_ids(test, (n..n + m).collect(), Role::Test)?,
        })
    }
}

/// Key material of one cell, derived from the cipher seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellKeys {
    Pixelwise(KeyPolicy),
    Blockwise(BlockwiseKey),
}

impl CellKeys {
    pub fn derive(scheme: SchemeSpec, cipher_seed: u64) -> Self {
        let mut s = KeyStream::new(cipher_seed);
        match scheme {
            SchemeSpec::Pixelwise {
                policy: PolicyKind::Same,
            } => CellKeys::Pixelwise(KeyPolicy::SameKey(PixelwiseKey::new(
                s.next_u64(),
                s.next_u64(),
                s.next_u64(),
                s.next_u64(),
            ))),
            SchemeSpec::Pixelwise {
                policy: PolicyKind::Different,
            } => CellKeys::Pixelwise(KeyPolicy::DifferentKeys { master: cipher_seed }),
            SchemeSpec::Blockwise => CellKeys::Blockwise(BlockwiseKey::new(s.next_u64(), s.next_u64())),
        }
    }

    pub fn encrypt(&self, id: usize, img: &Image) -> Result<Image> {
        Ok(match self {
            CellKeys::Pixelwise(p) => encrypt_pixelwise(img, &p.key_for(id)),
            CellKeys::Blockwise(k) => encrypt_blockwise(img, k)?,
        })
    }

    pub fn decrypt(&self, id: usize, img: &Image) -> Result<Image> {
        Ok(match self {
            CellKeys::Pixelwise(p) => decrypt_pixelwise(img, &p.key_for(id)),
            CellKeys::Blockwise(k) => decrypt_blockwise(img, k)?,
        })
    }

    /// JSON key record; the different-keys policy lists every image's key.
    pub fn record(&self, ids: &[usize]) -> Value {
        match self {
            CellKeys::Pixelwise(KeyPolicy::SameKey(k)) => serde_json::json!({"scheme": "pixelwise", "policy": "same", "key": k}),
            CellKeys::Pixelwise(p @ KeyPolicy::DifferentKeys { master }) => {
                let keys: Vec<Value> = ids.iter().map(|&id| serde_json::json!({"image_id": id, "key": p.key_for(id)})).collect();
                serde_json::json!({"scheme": "pixelwise", "policy": "different", "master": master, "keys": keys})
            }
            CellKeys::Blockwise(k) => serde_json::json!({"scheme": "blockwise", "key": k}),
        }
    }
}

fn encrypt_set(keys: &CellKeys, ds: &Dataset) -> Result<Dataset> {
    let images = ds
        .images()
        .iter()
        .zip(ds.ids())
        .map(|(img, &id)| keys.encrypt(id, img))
        .collect::<Result<_>>()?;
    Ok(Dataset::with_ids(images, ds.ids().to_vec(), ds.role())?)
}

#[derive(Debug, Clone)]
pub struct Encrypted {
    pub keys: CellKeys,
    pub train: Dataset,
    pub test: Dataset,
}

pub fn encrypt_cell(cell: &CellSpec, seeds: &Seeds, corpus: &Corpus) -> Result<Encrypted> {
    let keys = CellKeys::derive(cell.scheme, seeds.cipher);
    Ok(Encrypted {
        keys,
        train: encrypt_set(&keys, &corpus.train)?,
        test: encrypt_set(&keys, &corpus.test)?,
    })
}

/// Everything an attack produces for the test set.
#[derive(Debug, Clone)]
pub struct AttackOutput {
    /// Named candidate reconstructions; scoring keeps the best per image.
    pub variants: Vec<(String, Dataset)>,
    pub model: Option<Vec<u8>>,
    pub losses_csv: Option<String>,
    pub meta: Value,
}

/// What an attack may see: ciphertexts, plus plaintexts where the attack
/// model grants them (ITN pairs, GAN's disjoint half).
pub struct AttackInputs<'a> {
    pub enc_train: &'a Dataset,
    pub enc_test: &'a Dataset,
    pub plain_train: Option<&'a Dataset>,
    /// Only used for the ITN self-test.
    pub oracle: Option<&'a CellKeys>,
}

pub fn attack_cell(cell: &CellSpec, seeds: &Seeds, input: &AttackInputs) -> Result<AttackOutput> {
    match &cell.attack {
        AttackSpec::None => Ok(AttackOutput {
            variants: vec![("ciphertext".into(), input.enc_test.clone())],
            model: None,
            losses_csv: None,
            meta: serde_json::json!({}),
        }),
        AttackSpec::Fr { bits, leading_bit } => {
            let choices = match leading_bit {
                Some(b) => vec![*b],
                None => vec![false, true],
            };
            let variants = choices
                .iter()
                .map(|&b| {
                    let params = FrParams::new(*bits, b)?;
                    let ds = input.enc_test.map_images(|_, img| fr_attack(img, params).expect("validated bits"))?;
                    Ok((format!("b{}", u8::from(b)), ds))
                })
                .collect::<Result<_>>()?;
            Ok(AttackOutput {
                variants,
                model: None,
                losses_csv: None,
                meta: serde_json::json!({"bits": bits, "leading_bit": leading_bit}),
            })
        }
        AttackSpec::Itn {
            solver,
            ridge,
            sgd,
            self_test,
        } => {
            let plain = input
                .plain_train
                .ok_or_else(|| ExperimentError::MissingPairs("no plaintexts for the training ciphertexts".into()))?;
            if plain.ids() != input.enc_train.ids() {
                return Err(ExperimentError::MissingPairs("plaintext and ciphertext ids differ".into()));
            }
            let pairs = PairedSet::new(input.enc_train.images().to_vec(), plain.images().to_vec())?;
            let mut meta = serde_json::Map::new();
            let model = match (cell.scheme, solver) {
                (SchemeSpec::Blockwise, _) => {
                    meta.insert("solver".into(), "nibble_affine".into());
                    ItnModel::Block(fit_itn_blockwise_nibble::<f64>(&pairs, *ridge)?)
                }
                (_, ItnSolver::Closed) => {
                    let m = fit_itn_pixelwise_closed::<f64>(&pairs, *ridge)?;
                    meta.insert("solver".into(), "closed".into());
                    meta.insert("fallback_pixels".into(), m.fallback_pixels().len().into());
                    ItnModel::Pixel(m)
                }
                (_, ItnSolver::Sgd) => {
                    let cfg = ItnSgdConfig {
                        seed: seeds.training,
                        ..sgd.clone()
                    };
                    let out = fit_itn_pixelwise_sgd::<f64>(&pairs, &cfg)?;
                    meta.insert("solver".into(), "sgd".into());
                    meta.insert("epoch_losses".into(), serde_json::to_value(&out.epoch_losses).expect("floats"));
                    ItnModel::Pixel(out.model)
                }
            };
            meta.insert("ridge".into(), (*ridge).into());
            meta.insert("pairs".into(), pairs.len().into());
            let rec = apply_itn(&model, input.enc_test.images())?;
            let rec = Dataset::with_ids(rec, input.enc_test.ids().to_vec(), Role::Test)?;
            if *self_test {
                let keys = input
                    .oracle
                    .ok_or_else(|| ExperimentError::Config("self_test needs the cell keys".into()))?;
                let mut exact = 0usize;
                for ((r, e), &id) in rec.images().iter().zip(input.enc_test.images()).zip(rec.ids()) {
                    exact += usize::from(*r == keys.decrypt(id, e)?);
                }
                meta.insert("self_test_exact".into(), exact.into());
                meta.insert("self_test_total".into(), rec.len().into());
            }
            Ok(AttackOutput {
                variants: vec![("itn".into(), rec)],
                model: Some(model.to_checkpoint()),
                losses_csv: None,
                meta: Value::Object(meta),
            })
        }
        AttackSpec::Gan { gan } => {
            let plain = input
                .plain_train
                .ok_or_else(|| ExperimentError::Data("GAN attack needs the plain training images".into()))?;
            let (t1, t2) = split_halves(plain, seeds.split)?;
            let t1_ids: std::collections::HashSet<usize> = t1.ids().iter().copied().collect();
            let pick: Vec<usize> = (0..input.enc_train.len())
                .filter(|&i| t1_ids.contains(&input.enc_train.ids()[i]))
                .collect();
            let enc_t1 = Dataset::with_ids(
                pick.iter().map(|&i| input.enc_train.images()[i].clone()).collect(),
                pick.iter().map(|&i| input.enc_train.ids()[i]).collect(),
                Role::Train,
            )?;
            let (w, h) = enc_t1.dims().ok_or_else(|| ExperimentError::Data("empty training set".into()))?;
            let cfg = GanConfig {
                seed: seeds.training,
                generator: Some(gan.generator.clone().unwrap_or_else(|| default_generator(w, h, Init::default()))),
                discriminator: Some(gan.discriminator.clone().unwrap_or_else(|| default_discriminator(w, h))),
                ..gan.clone()
            };
            let model = train_gan_attack::<f64>(&enc_t1, &t2, &cfg)?;
            let rec = gan_reconstruct(&model, input.enc_test)?;
            let meta = serde_json::json!({
                "t1": enc_t1.len(),
                "t2": t2.len(),
                "epochs": cfg.epochs,
                "lr": cfg.lr,
                "beta1": cfg.beta1,
                "beta2": cfg.beta2,
                "batch": cfg.batch,
                "seed": cfg.seed,
                "generator": cfg.generator,
                "discriminator": cfg.discriminator,
                "final_epoch": model.history.last(),
            });
            Ok(AttackOutput {
                variants: vec![("gan".into(), rec)],
                model: Some(model.generator_checkpoint()),
                losses_csv: Some(model.history_csv()),
                meta,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image_id: usize,
    pub ssim: f64,
    pub mse: f64,
    /// Which candidate reconstruction scored best.
    pub variant: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub label: String,
    pub scheme: String,
    pub key_policy: String,
    pub attack: String,
    pub mean_ssim: f64,
    pub mean_mse: f64,
    /// Mean SSIM of the raw ciphertexts against their plaintexts.
    pub baseline_ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_sha256: Option<String>,
    pub attack_meta: Value,
    /// Present only when a threshold is configured; a heuristic label.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heuristic_robust: Option<bool>,
    pub rows: Vec<ImageRow>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Scores every variant against the plaintexts and keeps, per image, the
/// variant with the highest SSIM.
pub fn evaluate_cell(
    cell: &CellSpec,
    plain_test: &Dataset,
    enc_test: &Dataset,
    out: &AttackOutput,
    threshold: Option<f64>,
) -> Result<CellReport> {
    for (name, ds) in &out.variants {
        if ds.ids() != plain_test.ids() {
            return Err(ExperimentError::Data(format!("variant {name} does not cover the test ids")));
        }
    }
    let mut rows = Vec::with_capacity(plain_test.len());
    for (k, (plain, &id)) in plain_test.images().iter().zip(plain_test.ids()).enumerate() {
        let mut best: Option<ImageRow> = None;
        for (name, ds) in &out.variants {
            let rec = &ds.images()[k];
            let s = ssim(plain, rec)?;
            if best.as_ref().is_none_or(|b| s > b.ssim) {
                best = Some(ImageRow {
                    image_id: id,
                    ssim: s,
                    mse: mse(plain, rec)?,
                    variant: name.clone(),
                });
            }
        }
        rows.push(best.ok_or_else(|| ExperimentError::Data("attack produced no reconstruction".into()))?);
    }
    let baseline: Vec<f64> = plain_test
        .images()
        .iter()
        .zip(enc_test.images())
        .map(|(p, e)| ssim(p, e))
        .collect::<Result<_, _>>()?;
    let mean_ssim = mean_of(&rows.iter().map(|r| r.ssim).collect::<Vec<_>>())?;
    Ok(CellReport {
        label: cell.label(),
        scheme: cell.scheme_name().into(),
        key_policy: cell.policy_name().into(),
        attack: cell.attack.name().into(),
        mean_ssim,
        mean_mse: mean_of(&rows.iter().map(|r| r.mse).collect::<Vec<_>>())?,
        baseline_ssim: mean_of(&baseline)?,
        model_sha256: out.model.as_deref().map(sha256_hex),
        attack_meta: out.meta.clone(),
        heuristic_robust: threshold.map(|t| mean_ssim <= t),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub train: usize,
    pub test: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub config: ExperimentConfig,
    pub corpus: CorpusSummary,
    pub notes: Vec<String>,
    pub cells: Vec<CellReport>,
}

impl Report {
    pub fn new(config: &ExperimentConfig, corpus: &Corpus, cells: Vec<CellReport>) -> Self {
        let (width, height) = corpus.test.dims().unwrap_or((0, 0));
        let mut notes = vec![format!(
            "averages are over {} held-out test images at {width}x{height}",
            corpus.test.len()
        )];
        if config.robustness_threshold.is_some() {
            notes.push("heuristic_robust compares mean SSIM with a user threshold; it is not a security verdict".into());
        }
        Self {
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            corpus: CorpusSummary {
                train: corpus.train.len(),
                test: corpus.test.len(),
                width,
                height,
            },
            notes,
            cells,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `scheme,key_policy,attack,image_id,ssim,mse`, with one `AGG` row per cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scheme,key_policy,attack,image_id,ssim,mse\n");
        for c in &self.cells {
            for r in &c.rows {
                s += &format!("{},{},{},{},{},{}\n", c.scheme, c.key_policy, c.attack, r.image_id, r.ssim, r.mse);
            }
            s += &format!("{},{},{},AGG,{},{}\n", c.scheme, c.key_policy, c.attack, c.mean_ssim, c.mean_mse);
        }
        s
    }

    pub fn cell(&self, label: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.label == label)
    }
}

/// On-disk layout of an experiment directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn plain(&self, role: Role) -> PathBuf {
        self.root.join("plain").join(role_dir(role))
    }

    pub fn cell(&self, cell: &CellSpec) -> PathBuf {
        self.root.join("cells").join(cell.label())
    }

    pub fn encrypted(&self, cell: &CellSpec, role: Role) -> PathBuf {
        self.cell(cell).join("encrypted").join(role_dir(role))
    }

    pub fn reconstructed(&self, cell: &CellSpec) -> PathBuf {
        self.cell(cell).join("reconstructed")
    }
}

fn role_dir(role: Role) -> &'static str {
    match role {
        Role::Train => "train",
        Role::Test => "test",
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| ExperimentError::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| ExperimentError::io(path, e))
}

/// Writes `<dir>/<id>.ppm` for every image, zero-padded to six digits.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    create_dir(dir)?;
    for (img, id) in ds.images().iter().zip(ds.ids()) {
        write_file(&dir.join(format!("{id:06}.ppm")), save_ppm(img))?;
    }
    Ok(())
}

/// Reads a directory written by [`write_dataset`]; ids come from file names.
pub fn read_dataset(dir: &Path, role: Role) -> Result<Dataset> {
    let mut ids = Vec::new();
    let mut images = Vec::new();
    for (stem, img) in read_ppm_dir(dir)? {
        let id = stem
            .parse()
            .map_err(|_| ExperimentError::Data(format!("{}: file {stem}.ppm is not named by image id", dir.display())))?;
        ids.push(id);
        images.push(img);
    }
    if images.is_empty() {
        return Err(ExperimentError::Data(format!("{}: no images", dir.display())));
    }
    Ok(Dataset::with_ids(images, ids, role)?)
}

/// Writes plaintexts, and per cell the ciphertexts and key record.
pub fn stage_encrypt(cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    let corpus = Corpus::load(&cfg.dataset)?;
    write_dataset(&layout.plain(Role::Train), &corpus.train)?;
    write_dataset(&layout.plain(Role::Test), &corpus.test)?;
    for cell in &cfg.cells {
        let enc = encrypt_cell(cell, &cfg.seeds, &corpus)?;
        write_encrypted(layout, cell, &corpus, &enc)?;
    }
    Ok(())
}

fn write_encrypted(layout: &Layout, cell: &CellSpec, corpus: &Corpus, enc: &Encrypted) -> Result<()> {
    write_dataset(&layout.encrypted(cell, Role::Train), &enc.train)?;
    write_dataset(&layout.encrypted(cell, Role::Test), &enc.test)?;
    let ids: Vec<usize> = corpus.train.ids().iter().chain(corpus.test.ids()).copied().collect();
    let record = serde_json::to_string_pretty(&enc.keys.record(&ids)).expect("json") + "\n";
    write_file(&layout.cell(cell).join("keys.json"), record)
}

fn write_attack(layout: &Layout, cell: &CellSpec, out: &AttackOutput) -> Result<()> {
    let dir = layout.reconstructed(cell);
    for (name, ds) in &out.variants {
        write_dataset(&dir.join(name), ds)?;
    }
    if let Some(model) = &out.model {
        write_file(&layout.cell(cell).join("model.lien"), model)?;
    }
    if let Some(csv) = &out.losses_csv {
        write_file(&layout.cell(cell).join("gan_losses.csv"), csv)?;
    }
    let variants: Vec<&str> = out.variants.iter().map(|(n, _)| n.as_str()).collect();
    let meta = serde_json::json!({"variants": variants, "meta": out.meta});
    write_file(&layout.cell(cell).join("attack.json"), serde_json::to_string_pretty(&meta).expect("json") + "\n")
}

/// Reads ciphertexts written by [`stage_encrypt`] and writes reconstructions.
/// Plaintexts are read only for attacks whose threat model grants them.
pub fn stage_attack(cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    for cell in &cfg.cells {
        let enc_train = read_dataset(&layout.encrypted(cell, Role::Train), Role::Train)?;
        let enc_test = read_dataset(&layout.encrypted(cell, Role::Test), Role::Test)?;
        let plain_train = match cell.attack {
            AttackSpec::Itn { .. } => Some(read_dataset(&layout.plain(Role::Train), Role::Train).map_err(|e| {
                ExperimentError::MissingPairs(e.to_string())
            })?),
            AttackSpec::Gan { .. } => Some(read_dataset(&layout.plain(Role::Train), Role::Train)?),
            _ => None,
        };
        let keys = CellKeys::derive(cell.scheme, cfg.seeds.cipher);
        let input = AttackInputs {
            enc_train: &enc_train,
            enc_test: &enc_test,
            plain_train: plain_train.as_ref(),
            oracle: Some(&keys),
        };
        let out = attack_cell(cell, &cfg.seeds, &input)?;
        write_attack(layout, cell, &out)?;
    }
    Ok(())
}

/// Scores the reconstructions on disk and returns the report.
pub fn stage_evaluate(cfg: &ExperimentConfig, layout: &Layout) -> Result<Report> {
    let corpus = Corpus {
        train: read_dataset(&layout.plain(Role::Train), Role::Train)?,
        test: read_dataset(&layout.plain(Role::Test), Role::Test)?,
    };
    let mut cells = Vec::new();
    for cell in &cfg.cells {
        let enc_test = read_dataset(&layout.encrypted(cell, Role::Test), Role::Test)?;
        let attack_json: Value = serde_json::from_slice(&read_file(&layout.cell(cell).join("attack.json"))?)
            .map_err(|e| ExperimentError::Data(format!("attack.json: {e}")))?;
        let names: Vec<String> = serde_json::from_value(attack_json["variants"].clone())
            .map_err(|e| ExperimentError::Data(format!("attack.json variants: {e}")))?;
        let variants = names
            .into_iter()
            .map(|n| {
                let ds = read_dataset(&layout.reconstructed(cell).join(&n), Role::Test)?;
                Ok((n, ds))
            })
            .collect::<Result<_>>()?;
        let model_path = layout.cell(cell).join("model.lien");
        let out = AttackOutput {
            variants,
            model: model_path.exists().then(|| read_file(&model_path)).transpose()?,
            losses_csv: None,
            meta: attack_json["meta"].clone(),
        };
        cells.push(evaluate_cell(cell, &corpus.test, &enc_test, &out, cfg.robustness_threshold)?);
    }
    Ok(Report::new(cfg, &corpus, cells))
}

/// Writes `report.json` and `metrics.csv`.
pub fn write_report(layout: &Layout, report: &Report) -> Result<()> {
    write_file(&layout.root.join("report.json"), report.to_json())?;
    write_file(&layout.root.join("metrics.csv"), report.to_csv())
}

/// Full pipeline for every cell, in memory, writing all artifacts. Wall-clock
/// seconds per cell go to `timing.json` so the report itself stays
/// reproducible.
pub fn run_report(cfg: &ExperimentConfig, layout: &Layout) -> Result<Report> {
    let corpus = Corpus::load(&cfg.dataset)?;
    write_dataset(&layout.plain(Role::Train), &corpus.train)?;
    write_dataset(&layout.plain(Role::Test), &corpus.test)?;
    let mut cells = Vec::new();
    let mut timing = BTreeMap::new();
    for cell in &cfg.cells {
        let start = std::time::Instant::now();
        let enc = encrypt_cell(cell, &cfg.seeds, &corpus)?;
        write_encrypted(layout, cell, &corpus, &enc)?;
        let grants_plain = matches!(cell.attack, AttackSpec::Itn { .. } | AttackSpec::Gan { .. });
        let input = AttackInputs {
            enc_train: &enc.train,
            enc_test: &enc.test,
            plain_train: grants_plain.then_some(&corpus.train),
            oracle: Some(&enc.keys),
        };
        let out = attack_cell(cell, &cfg.seeds, &input)?;
        write_attack(layout, cell, &out)?;
        cells.push(evaluate_cell(cell, &corpus.test, &enc.test, &out, cfg.robustness_threshold)?);
        timing.insert(cell.label(), start.elapsed().as_secs_f64());
    }
    let report = Report::new(cfg, &corpus, cells);
    write_report(layout, &report)?;
    write_file(&layout.root.join("timing.json"), serde_json::to_string_pretty(&timing).expect("json") + "\n")?;
    Ok(report)
}

/// Key-space summary printed by the `keyspace` command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeySpaceReport {
    pub scheme: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    /// Decimal digits of the exact count.
    pub exact: String,
    pub log2: f64,
    pub crossover_real: f64,
    pub crossover_smallest_n: u64,
}

pub fn keyspace_report(scheme: &str, n: Option<u64>) -> Result<KeySpaceReport> {
    let ks = match scheme {
        "pixelwise" => crate::keyspace::keyspace_pixelwise(n.ok_or(ExperimentError::MissingN)?),
        "blockwise" => crate::keyspace::keyspace_blockwise(),
        other => return Err(ExperimentError::Config(format!("unknown scheme {other:?}"))),
    };
    let c = crate::keyspace::crossover();
    Ok(KeySpaceReport {
        scheme: scheme.into(),
        n: if scheme == "pixelwise" { n } else { None },
        exact: ks.exact.to_string(),
        log2: ks.log2,
        crossover_real: c.real,
        crossover_smallest_n: c.smallest_integer,
    })
}
