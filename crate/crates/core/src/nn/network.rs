use rand::Rng;

use super::{Layer, LayerSpec, NnError, ParamGrads, Tensor};
use crate::scalar::Scalar;

/// Sequential stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
}

/// Inputs seen by every layer during one forward pass, plus the output.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    inputs: Vec<Tensor<T>>,
    output: Tensor<T>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }

    pub fn into_output(self) -> Tensor<T> {
        self.output
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(specs: &[LayerSpec], rng: &mut impl Rng) -> Result<Self, NnError> {
        if specs.is_empty() {
            return Err(NnError::InvalidSpec("network needs at least one layer".into()));
        }
        let layers = specs
            .iter()
            .map(|s| Layer::new(s.clone(), rng))
            .collect::<Result<_, _>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidSpec("network needs at least one layer".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec().clone()).collect()
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut x = self.layers[0].forward(input)?;
        for layer in &self.layers[1..] {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Forward pass that keeps every intermediate input for [`Network::backward`].
    pub fn forward_trace(&self, input: &Tensor<T>) -> Result<Trace<T>, NnError> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let y = layer.forward(&x)?;
            inputs.push(x);
            x = y;
        }
        Ok(Trace { inputs, output: x })
    }

    /// Backpropagates `grad_out` through the traced pass. Parameter
    /// gradients come back in [`Network::params_mut`] order.
    pub fn backward(&self, trace: &Trace<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>), NnError> {
        grad_out.expect_shape(trace.output.shape(), "network grad")?;
        let mut g = grad_out.clone();
        let mut per_layer: Vec<Option<ParamGrads<T>>> = Vec::with_capacity(self.layers.len());
        for (layer, input) in self.layers.iter().zip(&trace.inputs).rev() {
            let (gi, pg) = layer.backward(input, &g)?;
            per_layer.push(pg);
            g = gi;
        }
        let grads = per_layer
            .into_iter()
            .rev()
            .flatten()
            .flat_map(|p| [p.weight, p.bias])
            .collect();
        Ok((g, grads))
    }

    /// Weight then bias of every parameterized layer, front to back.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .filter_map(|l| l.params_mut())
            .flat_map(|p| [&mut p.weight, &mut p.bias])
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .flat_map(|p| [&p.weight, &p.bias])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|t| t.all_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_stack_equals_composed_affine_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lc = |init| LayerSpec::LocallyConnected1x1 {
            height: 2,
            width: 2,
            in_channels: 3,
            out_channels: 3,
            init,
        };
        let spec = lc(Init::Normal { std: 0.5 });
        let mut net = Network::<f64>::new(&[spec.clone(), spec.clone(), spec], &mut rng).unwrap();
        for t in net.params_mut() {
            for v in t.data_mut() {
                *v += 0.1;
            }
        }
        // compose per-pixel: A = W3 W2 W1, c = W3 (W2 b1 + b2) + b3
        let plane = 4;
        let mut a = vec![[[0.0f64; 3]; 3]; plane];
        let mut c = vec![[0.0f64; 3]; plane];
        for p in 0..plane {
            let mut m = [[0.0; 3]; 3];
            for (i, row) in m.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            let mut off = [0.0; 3];
            for layer in net.layers() {
                let prm = layer.params().unwrap();
                let w = &prm.weight.data()[p * 9..p * 9 + 9];
                let b = &prm.bias.data()[p * 3..p * 3 + 3];
                let mut nm = [[0.0; 3]; 3];
                let mut no = [0.0; 3];
                for o in 0..3 {
                    no[o] = b[o];
                    for k in 0..3 {
                        no[o] += w[o * 3 + k] * off[k];
                        for j in 0..3 {
                            nm[o][j] += w[o * 3 + k] * m[k][j];
                        }
                    }
                }
                m = nm;
                off = no;
            }
            a[p] = m;
            c[p] = off;
        }
        let x = Tensor::from_vec(&[2, 3, 2, 2], (0..24).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let y = net.forward(&x).unwrap();
        for s in 0..2 {
            for p in 0..plane {
                for o in 0..3 {
                    let mut want = c[p][o];
                    for j in 0..3 {
                        want += a[p][o][j] * x.data()[(s * 3 + j) * plane + p];
                    }
                    assert!((y.data()[(s * 3 + o) * plane + p] - want).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn trace_output_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let specs = [
            LayerSpec::Dense {
                inputs: 4,
                outputs: 5,
                init: Init::default(),
            },
            LayerSpec::Tanh,
            LayerSpec::Dense {
                inputs: 5,
                outputs: 1,
                init: Init::default(),
            },
            LayerSpec::Sigmoid,
        ];
        let net = Network::<f64>::new(&specs, &mut rng).unwrap();
        let x = Tensor::filled(&[3, 4], 0.3);
        let tr = net.forward_trace(&x).unwrap();
        assert_eq!(tr.output(), &net.forward(&x).unwrap());
        let (gx, grads) = net.backward(&tr, &Tensor::filled(&[3, 1], 1.0)).unwrap();
        assert_eq!(gx.shape(), &[3, 4]);
        assert_eq!(grads.len(), 4);
        assert_eq!(net.param_count(), 4 * 5 + 5 + 5 + 1);
    }
}
