use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};
use crate::scalar::Scalar;

/// How trainable weights start out. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Init {
    /// Normal(0, std).
    Normal { std: f64 },
    /// Rectangular identity on the channel axes (locally-connected and dense).
    Identity,
}

impl Default for Init {
    fn default() -> Self {
        Init::Normal { std: 0.02 }
    }
}

/// Declarative layer description; tensors are NCHW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerSpec {
    /// 1×1 locally-connected layer: an unshared `out×in` matrix and bias per pixel.
    LocallyConnected1x1 {
        height: usize,
        width: usize,
        in_channels: usize,
        out_channels: usize,
        #[serde(default)]
        init: Init,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Affine map on the flattened per-sample input.
    Dense {
        inputs: usize,
        outputs: usize,
        #[serde(default)]
        init: Init,
    },
    LeakyRelu { alpha: f64 },
    Tanh,
    Sigmoid,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |msg: String| Err(NnError::InvalidSpec(msg));
        if let LayerSpec::LocallyConnected1x1 { init: Init::Normal { std }, .. }
        | LayerSpec::Dense { init: Init::Normal { std }, .. } = *self
        {
            if !(std.is_finite() && std >= 0.0) {
                return bad(format!("init std must be finite and non-negative, got {std}"));
            }
        }
        match *self {
            LayerSpec::LocallyConnected1x1 {
                height,
                width,
                in_channels,
                out_channels,
                ..
            } if height == 0 || width == 0 || in_channels == 0 || out_channels == 0 => {
                bad("locally-connected dimensions must be positive".into())
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 => {
                bad(format!("conv needs positive channels, kernel >= 1 and stride >= 1: {self:?}"))
            }
            LayerSpec::Dense { inputs, outputs, .. } if inputs == 0 || outputs == 0 => {
                bad("dense dimensions must be positive".into())
            }
            LayerSpec::LeakyRelu { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                bad(format!("leaky relu slope must lie in (0, 1), got {alpha}"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::LocallyConnected1x1 { .. } => "locally_connected_1x1",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Sigmoid => "sigmoid",
        }
    }

    /// Shapes of `(weight, bias)`, or `None` for parameter-free layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::LocallyConnected1x1 {
                height,
                width,
                in_channels,
                out_channels,
                ..
            } => Some((
                vec![height, width, out_channels, in_channels],
                vec![height, width, out_channels],
            )),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((vec![out_channels, in_channels, kernel, kernel], vec![out_channels])),
            LayerSpec::Dense { inputs, outputs, .. } => Some((vec![outputs, inputs], vec![outputs])),
            _ => None,
        }
    }
}

/// Parameter gradients of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Weight and bias of a parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    spec: LayerSpec,
    params: Option<Params<T>>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(spec: LayerSpec, rng: &mut impl Rng) -> Result<Self, NnError> {
        spec.validate()?;
        let params = spec.param_shapes().map(|(ws, bs)| {
            let init = match spec {
                LayerSpec::LocallyConnected1x1 { init, .. } | LayerSpec::Dense { init, .. } => init,
                _ => Init::default(),
            };
            let weight = match init {
                Init::Identity => identity_weight(&ws),
                Init::Normal { std } => {
                    let normal = Normal::new(0.0, std).expect("finite std");
                    let n = ws.iter().product();
                    Tensor::from_vec(&ws, (0..n).map(|_| T::lit(normal.sample(rng))).collect())
                        .expect("sized")
                }
            };
            Params {
                weight,
                bias: Tensor::zeros(&bs),
            }
        });
        Ok(Self { spec, params })
    }

    pub fn with_params(spec: LayerSpec, params: Option<Params<T>>) -> Result<Self, NnError> {
        spec.validate()?;
        match (spec.param_shapes(), &params) {
            (None, None) => {}
            (Some((ws, bs)), Some(p)) => {
                p.weight.expect_shape(&ws, "weight")?;
                p.bias.expect_shape(&bs, "bias")?;
            }
            _ => return Err(NnError::InvalidSpec(format!("parameter presence mismatch for {}", spec.name()))),
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> Option<&Params<T>> {
        self.params.as_ref()
    }

    pub fn params_mut(&mut self) -> Option<&mut Params<T>> {
        self.params.as_mut()
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self.spec {
            LayerSpec::LocallyConnected1x1 { .. } => self.lc_forward(input),
            LayerSpec::Conv2d { .. } => self.conv_forward(input),
            LayerSpec::Dense { .. } => self.dense_forward(input),
            LayerSpec::LeakyRelu { alpha } => {
                let a = T::lit(alpha);
                Ok(input.map(|v| if v > T::zero() { v } else { a * v }))
            }
            LayerSpec::Tanh => Ok(input.map(T::tanh)),
            LayerSpec::Sigmoid => Ok(input.map(sigmoid)),
        }
    }

    /// Gradient with respect to the input, plus parameter gradients for
    /// layers that have parameters. `input` is the tensor passed to
    /// [`Layer::forward`].
    pub fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Option<ParamGrads<T>>), NnError> {
        match self.spec {
            LayerSpec::LocallyConnected1x1 { .. } => self.lc_backward(input, grad_out),
            LayerSpec::Conv2d { .. } => self.conv_backward(input, grad_out),
            LayerSpec::Dense { .. } => self.dense_backward(input, grad_out),
            LayerSpec::LeakyRelu { alpha } => {
                grad_out.expect_shape(input.shape(), "leaky relu grad")?;
                let a = T::lit(alpha);
                let data = input
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&x, &g)| if x > T::zero() { g } else { a * g })
                    .collect();
                Ok((Tensor::from_vec(input.shape(), data)?, None))
            }
            LayerSpec::Tanh => {
                grad_out.expect_shape(input.shape(), "tanh grad")?;
                let data = input
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&x, &g)| {
                        let t = x.tanh();
                        g * (T::one() - t * t)
                    })
                    .collect();
                Ok((Tensor::from_vec(input.shape(), data)?, None))
            }
            LayerSpec::Sigmoid => {
                grad_out.expect_shape(input.shape(), "sigmoid grad")?;
                let data = input
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&x, &g)| {
                        let s = sigmoid(x);
                        g * s * (T::one() - s)
                    })
                    .collect();
                Ok((Tensor::from_vec(input.shape(), data)?, None))
            }
        }
    }

    fn p(&self) -> &Params<T> {
        self.params.as_ref().expect("parameterized layer")
    }

    fn lc_dims(&self) -> (usize, usize, usize, usize) {
        match self.spec {
            LayerSpec::LocallyConnected1x1 {
                height,
                width,
                in_channels,
                out_channels,
                ..
            } => (height, width, in_channels, out_channels),
            _ => unreachable!(),
        }
    }

    fn lc_forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (h, w, cin, cout) = self.lc_dims();
        let n = input.batch();
        input.expect_shape(&[n, cin, h, w], "locally-connected input")?;
        let plane = h * w;
        let (wt, b) = (self.p().weight.data(), self.p().bias.data());
        let x = input.data();
        let mut out = vec![T::zero(); n * cout * plane];
        for s in 0..n {
            for p in 0..plane {
                for o in 0..cout {
                    let mut acc = b[p * cout + o];
                    let row = &wt[(p * cout + o) * cin..(p * cout + o + 1) * cin];
                    for (i, &wv) in row.iter().enumerate() {
                        acc += wv * x[(s * cin + i) * plane + p];
                    }
                    out[(s * cout + o) * plane + p] = acc;
                }
            }
        }
        Tensor::from_vec(&[n, cout, h, w], out)
    }

    fn lc_backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Option<ParamGrads<T>>), NnError> {
        let (h, w, cin, cout) = self.lc_dims();
        let n = input.batch();
        input.expect_shape(&[n, cin, h, w], "locally-connected input")?;
        grad_out.expect_shape(&[n, cout, h, w], "locally-connected grad")?;
        let plane = h * w;
        let wt = self.p().weight.data();
        let (x, g) = (input.data(), grad_out.data());
        let mut gx = vec![T::zero(); x.len()];
        let mut gw = vec![T::zero(); wt.len()];
        let mut gb = vec![T::zero(); plane * cout];
        for s in 0..n {
            for p in 0..plane {
                for o in 0..cout {
                    let go = g[(s * cout + o) * plane + p];
                    gb[p * cout + o] += go;
                    let base = (p * cout + o) * cin;
                    for i in 0..cin {
                        let xi = (s * cin + i) * plane + p;
                        gw[base + i] += go * x[xi];
                        gx[xi] += go * wt[base + i];
                    }
                }
            }
        }
        Ok((
            Tensor::from_vec(input.shape(), gx)?,
            Some(ParamGrads {
                weight: Tensor::from_vec(self.p().weight.shape(), gw)?,
                bias: Tensor::from_vec(self.p().bias.shape(), gb)?,
            }),
        ))
    }

    fn conv_geometry(&self, input: &Tensor<T>) -> Result<ConvGeometry, NnError> {
        let LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } = self.spec
        else {
            unreachable!()
        };
        let &[n, c, h, w] = input.shape() else {
            return Err(NnError::ShapeMismatch {
                context: "conv input rank",
                expected: vec![0, in_channels, 0, 0],
                got: input.shape().to_vec(),
            });
        };
        if c != in_channels || h + 2 * padding < kernel || w + 2 * padding < kernel {
            return Err(NnError::ShapeMismatch {
                context: "conv input",
                expected: vec![n, in_channels, kernel.saturating_sub(2 * padding), kernel.saturating_sub(2 * padding)],
                got: input.shape().to_vec(),
            });
        }
        Ok(ConvGeometry {
            n,
            cin: in_channels,
            cout: out_channels,
            k: kernel,
            s: stride,
            pad: padding,
            h,
            w,
            oh: (h + 2 * padding - kernel) / stride + 1,
            ow: (w + 2 * padding - kernel) / stride + 1,
        })
    }

    fn conv_forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let g = self.conv_geometry(input)?;
        let (wt, b, x) = (self.p().weight.data(), self.p().bias.data(), input.data());
        let mut out = vec![T::zero(); g.n * g.cout * g.oh * g.ow];
        for s in 0..g.n {
            for o in 0..g.cout {
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        let mut acc = b[o];
                        for i in 0..g.cin {
                            for ky in 0..g.k {
                                let Some(iy) = g.tap(oy, ky, g.h) else { continue };
                                for kx in 0..g.k {
                                    let Some(ix) = g.tap(ox, kx, g.w) else { continue };
                                    acc += wt[((o * g.cin + i) * g.k + ky) * g.k + kx]
                                        * x[((s * g.cin + i) * g.h + iy) * g.w + ix];
                                }
                            }
                        }
                        out[((s * g.cout + o) * g.oh + oy) * g.ow + ox] = acc;
                    }
                }
            }
        }
        Tensor::from_vec(&[g.n, g.cout, g.oh, g.ow], out)
    }

    fn conv_backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Option<ParamGrads<T>>), NnError> {
        let g = self.conv_geometry(input)?;
        grad_out.expect_shape(&[g.n, g.cout, g.oh, g.ow], "conv grad")?;
        let (wt, x, go) = (self.p().weight.data(), input.data(), grad_out.data());
        let mut gx = vec![T::zero(); x.len()];
        let mut gw = vec![T::zero(); wt.len()];
        let mut gb = vec![T::zero(); g.cout];
        for s in 0..g.n {
            for o in 0..g.cout {
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        let d = go[((s * g.cout + o) * g.oh + oy) * g.ow + ox];
                        gb[o] += d;
                        for i in 0..g.cin {
                            for ky in 0..g.k {
                                let Some(iy) = g.tap(oy, ky, g.h) else { continue };
                                for kx in 0..g.k {
                                    let Some(ix) = g.tap(ox, kx, g.w) else { continue };
                                    let wi = ((o * g.cin + i) * g.k + ky) * g.k + kx;
                                    let xi = ((s * g.cin + i) * g.h + iy) * g.w + ix;
                                    gw[wi] += d * x[xi];
                                    gx[xi] += d * wt[wi];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((
            Tensor::from_vec(input.shape(), gx)?,
            Some(ParamGrads {
                weight: Tensor::from_vec(self.p().weight.shape(), gw)?,
                bias: Tensor::from_vec(&[g.cout], gb)?,
            }),
        ))
    }

    fn dense_dims(&self, input: &Tensor<T>) -> Result<(usize, usize, usize), NnError> {
        let LayerSpec::Dense { inputs, outputs, .. } = self.spec else {
            unreachable!()
        };
        let n = input.batch();
        if input.shape().len() < 2 || input.len() != n * inputs {
            return Err(NnError::ShapeMismatch {
                context: "dense input",
                expected: vec![n, inputs],
                got: input.shape().to_vec(),
            });
        }
        Ok((n, inputs, outputs))
    }

    fn dense_forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (n, fin, fout) = self.dense_dims(input)?;
        let (wt, b, x) = (self.p().weight.data(), self.p().bias.data(), input.data());
        let mut out = vec![T::zero(); n * fout];
        for s in 0..n {
            let xs = &x[s * fin..(s + 1) * fin];
            for o in 0..fout {
                let row = &wt[o * fin..(o + 1) * fin];
                out[s * fout + o] = b[o] + row.iter().zip(xs).map(|(&a, &v)| a * v).sum::<T>();
            }
        }
        Tensor::from_vec(&[n, fout], out)
    }

    fn dense_backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Option<ParamGrads<T>>), NnError> {
        let (n, fin, fout) = self.dense_dims(input)?;
        grad_out.expect_shape(&[n, fout], "dense grad")?;
        let (wt, x, g) = (self.p().weight.data(), input.data(), grad_out.data());
        let mut gx = vec![T::zero(); x.len()];
        let mut gw = vec![T::zero(); wt.len()];
        let mut gb = vec![T::zero(); fout];
        for s in 0..n {
            for o in 0..fout {
                let d = g[s * fout + o];
                gb[o] += d;
                for i in 0..fin {
                    gw[o * fin + i] += d * x[s * fin + i];
                    gx[s * fin + i] += d * wt[o * fin + i];
                }
            }
        }
        Ok((
            Tensor::from_vec(input.shape(), gx)?,
            Some(ParamGrads {
                weight: Tensor::from_vec(self.p().weight.shape(), gw)?,
                bias: Tensor::from_vec(&[fout], gb)?,
            }),
        ))
    }
}

struct ConvGeometry {
    n: usize,
    cin: usize,
    cout: usize,
    k: usize,
    s: usize,
    pad: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    /// Input coordinate read by output `o` at kernel tap `k`, if inside.
    #[inline]
    fn tap(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        (o * self.s + k).checked_sub(self.pad).filter(|&i| i < extent)
    }
}

fn identity_weight<T: Scalar>(shape: &[usize]) -> Tensor<T> {
    let mut t = Tensor::zeros(shape);
    let (rows, cols) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let per = rows * cols;
    for (j, v) in t.data_mut().iter_mut().enumerate() {
        let r = (j % per) / cols;
        let c = j % cols;
        if r == c {
            *v = T::one();
        }
    }
    t
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
