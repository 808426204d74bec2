//! Self-describing binary checkpoints.
//!
//! Layout, all little-endian: magic `LIEN`, `u32` version, `u32` entry count,
//! then per entry a `u32` kind tag, a `u32` count of `u64` hyperparameters,
//! the hyperparameters, a `u32` tensor count and per tensor a `u32` rank,
//! `u64` dimensions and `f64` values.

use super::{Init, Layer, LayerSpec, Network, NnError, Params, Tensor};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"LIEN";
pub const VERSION: u32 = 1;

pub const TAG_LOCALLY_CONNECTED: u32 = 1;
pub const TAG_CONV2D: u32 = 2;
pub const TAG_DENSE: u32 = 3;
pub const TAG_LEAKY_RELU: u32 = 4;
pub const TAG_TANH: u32 = 5;
pub const TAG_SIGMOID: u32 = 6;
/// Non-network model stored alongside or instead of layers.
pub const TAG_AFFINE_CODEC: u32 = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub tag: u32,
    pub hyper: Vec<u64>,
    pub tensors: Vec<Tensor<f64>>,
}

pub fn encode(entries: &[Entry]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        out.extend_from_slice(&e.tag.to_le_bytes());
        out.extend_from_slice(&(e.hyper.len() as u32).to_le_bytes());
        for h in &e.hyper {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out.extend_from_slice(&(e.tensors.len() as u32).to_le_bytes());
        for t in &e.tensors {
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], NnError> {
        let end = self.pos.checked_add(N).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            NnError::Checkpoint(format!("truncated at byte {} (need {N} more)", self.pos))
        })?;
        let out = self.bytes[self.pos..end].try_into().expect("sized");
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        self.take().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        self.take().map(f64::from_le_bytes)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Entry>, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if &r.take::<4>()? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let tag = r.u32()?;
        let nh = r.u32()? as usize;
        if nh * 8 > r.remaining() {
            return Err(NnError::Checkpoint("hyperparameter count exceeds file".into()));
        }
        let hyper = (0..nh).map(|_| r.u64()).collect::<Result<_, _>>()?;
        let nt = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..nt {
            let rank = r.u32()? as usize;
            if rank * 8 > r.remaining() {
                return Err(NnError::Checkpoint("tensor rank exceeds file".into()));
            }
            let shape: Vec<usize> = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<_, _>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| NnError::Checkpoint(format!("tensor {shape:?} exceeds file")))?;
            let data = (0..n).map(|_| r.f64()).collect::<Result<_, _>>()?;
            tensors.push(Tensor::from_vec(&shape, data)?);
        }
        entries.push(Entry { tag, hyper, tensors });
    }
    if r.remaining() != 0 {
        return Err(NnError::Checkpoint(format!("{} trailing bytes", r.remaining())));
    }
    Ok(entries)
}

fn widen<T: Scalar>(t: &Tensor<T>) -> Tensor<f64> {
    Tensor::from_vec(t.shape(), t.data().iter().map(|v| v.as_f64()).collect()).expect("same shape")
}

fn narrow<T: Scalar>(t: &Tensor<f64>) -> Tensor<T> {
    Tensor::from_vec(t.shape(), t.data().iter().map(|&v| T::lit(v)).collect()).expect("same shape")
}

pub fn layer_entry<T: Scalar>(layer: &Layer<T>) -> Entry {
    let u = |v: usize| v as u64;
    let (tag, hyper) = match *layer.spec() {
        LayerSpec::LocallyConnected1x1 {
            height,
            width,
            in_channels,
            out_channels,
            ..
        } => (TAG_LOCALLY_CONNECTED, vec![u(height), u(width), u(in_channels), u(out_channels)]),
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => (
            TAG_CONV2D,
            vec![u(in_channels), u(out_channels), u(kernel), u(stride), u(padding)],
        ),
        LayerSpec::Dense { inputs, outputs, .. } => (TAG_DENSE, vec![u(inputs), u(outputs)]),
        LayerSpec::LeakyRelu { alpha } => (TAG_LEAKY_RELU, vec![alpha.to_bits()]),
        LayerSpec::Tanh => (TAG_TANH, vec![]),
        LayerSpec::Sigmoid => (TAG_SIGMOID, vec![]),
    };
    let tensors = layer
        .params()
        .map(|p| vec![widen(&p.weight), widen(&p.bias)])
        .unwrap_or_default();
    Entry { tag, hyper, tensors }
}

pub fn layer_from_entry<T: Scalar>(e: &Entry) -> Result<Layer<T>, NnError> {
    let h = |k: usize| -> Result<usize, NnError> {
        if e.hyper.len() <= k {
            return Err(NnError::Checkpoint(format!("tag {} is missing hyperparameter {k}", e.tag)));
        }
        Ok(e.hyper[k] as usize)
    };
    let spec = match e.tag {
        TAG_LOCALLY_CONNECTED => LayerSpec::LocallyConnected1x1 {
            height: h(0)?,
            width: h(1)?,
            in_channels: h(2)?,
            out_channels: h(3)?,
            init: Init::default(),
        },
        TAG_CONV2D => LayerSpec::Conv2d {
            in_channels: h(0)?,
            out_channels: h(1)?,
            kernel: h(2)?,
            stride: h(3)?,
            padding: h(4)?,
        },
        TAG_DENSE => LayerSpec::Dense {
            inputs: h(0)?,
            outputs: h(1)?,
            init: Init::default(),
        },
        TAG_LEAKY_RELU => LayerSpec::LeakyRelu {
            alpha: f64::from_bits(h(0)? as u64),
        },
        TAG_TANH => LayerSpec::Tanh,
        TAG_SIGMOID => LayerSpec::Sigmoid,
        other => return Err(NnError::Checkpoint(format!("unknown layer tag {other}"))),
    };
    let params = match e.tensors.as_slice() {
        [] => None,
        [w, b] => Some(Params {
            weight: narrow(w),
            bias: narrow(b),
        }),
        _ => return Err(NnError::Checkpoint(format!("tag {} has {} tensors", e.tag, e.tensors.len()))),
    };
    Layer::with_params(spec, params)
}

pub fn save_network<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    encode(&net.layers().iter().map(layer_entry).collect::<Vec<_>>())
}

pub fn load_network<T: Scalar>(bytes: &[u8]) -> Result<Network<T>, NnError> {
    let layers = decode(bytes)?
        .iter()
        .map(layer_from_entry)
        .collect::<Result<Vec<_>, _>>()?;
    Network::from_layers(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Network<f64> {
        let specs = [
            LayerSpec::Conv2d {
                in_channels: 3,
                out_channels: 2,
                kernel: 4,
                stride: 2,
                padding: 1,
            },
            LayerSpec::LeakyRelu { alpha: 0.2 },
            LayerSpec::Dense {
                inputs: 8,
                outputs: 1,
                init: Init::default(),
            },
            LayerSpec::Sigmoid,
        ];
        Network::new(&specs, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let n = net();
        let bytes = save_network(&n);
        assert_eq!(&bytes[..4], b"LIEN");
        let back = load_network::<f64>(&bytes).unwrap();
        assert_eq!(back.params(), n.params());
        assert_eq!(save_network(&back), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = save_network(&net());
        assert!(load_network::<f64>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(load_network::<f64>(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(load_network::<f64>(&extra).is_err());
    }
}
