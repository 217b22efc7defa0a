use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::fixed::{FixParams, FixTensor};
use crate::error::{Error, Result};
use crate::linprot::LinearOp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { c_out: usize, k: usize, pad: usize },
    Fc { out: usize },
    /// Per-channel affine on client-normalized activations.
    Bn,
    Relu,
    MaxPool { size: usize },
    Flatten,
}

/// Activation shape (channels, height, width); fully connected layers use (n, 1, 1).
pub type Shape = (usize, usize, usize);

/// Missing fields in JSON take their values from the toy MNIST model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub classes: usize,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::toy_mnist(1)
    }
}

impl ModelSpec {
    /// conv 1->4 5x5, relu, pool 2, conv 4->8 5x5, relu, pool 2, fc 392->10.
    pub fn toy_mnist(seed: u64) -> Self {
        use LayerSpec::*;
        ModelSpec {
            input: (1, 28, 28),
            layers: vec![
                Conv { c_out: 4, k: 5, pad: 2 },
                Relu,
                MaxPool { size: 2 },
                Conv { c_out: 8, k: 5, pad: 2 },
                Relu,
                MaxPool { size: 2 },
                Flatten,
                Fc { out: 10 },
            ],
            classes: 10,
            seed,
        }
    }

    /// Input shape of every layer followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut s = self.input;
        let mut out = vec![s];
        let mut flat = false;
        for (i, l) in self.layers.iter().enumerate() {
            let bad = |m: &str| Error::Params(format!("layer {i} ({l:?}): {m}"));
            s = match *l {
                LayerSpec::Conv { c_out, k, pad } => {
                    if flat || k == 0 || c_out == 0 || pad >= k || k > s.1 + 2 * pad || k > s.2 + 2 * pad {
                        return Err(bad("kernel does not fit"));
                    }
                    (c_out, s.1 + 2 * pad + 1 - k, s.2 + 2 * pad + 1 - k)
                }
                LayerSpec::MaxPool { size } => {
                    if flat || size < 2 || !s.1.is_multiple_of(size) || !s.2.is_multiple_of(size) {
                        return Err(bad("pool size must divide the map"));
                    }
                    (s.0, s.1 / size, s.2 / size)
                }
                LayerSpec::Flatten => {
                    flat = true;
                    (s.0 * s.1 * s.2, 1, 1)
                }
                LayerSpec::Fc { out } => {
                    if !flat || out == 0 {
                        return Err(bad("fully connected layers need a flattened input"));
                    }
                    (out, 1, 1)
                }
                LayerSpec::Bn | LayerSpec::Relu => s,
            };
            out.push(s);
        }
        if out.last() != Some(&(self.classes, 1, 1)) || !flat {
            return Err(Error::Params(format!("model ends in {:?}, expected {} logits", s, self.classes)));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerParams {
    /// weights (c_out, c_in, k, k), bias (c_out)
    Conv { w: FixTensor, b: FixTensor },
    /// weights (out, in), bias (out)
    Fc { w: FixTensor, b: FixTensor },
    Bn { gamma: FixTensor, beta: FixTensor },
    None,
}

/// The linear operations a layer runs per sample, with their mask-store slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearUse {
    pub slot: u32,
    pub op: LinearOp,
}

pub const ROLE_FORWARD: u32 = 0;
pub const ROLE_WEIGHT_GRAD: u32 = 1;
pub const ROLE_INPUT_GRAD: u32 = 2;

pub fn slot(layer: usize, role: u32) -> u32 {
    layer as u32 * 4 + role
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub shapes: Vec<Shape>,
    pub params: Vec<LayerParams>,
}

impl Model {
    /// Weights uniform in +-1/sqrt(fan_in), quantized; biases zero; BN gamma one, beta zero.
    pub fn init(spec: ModelSpec, fix: &FixParams) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        let mut uniform = |n: usize, fan_in: usize| -> Result<Vec<i64>> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| fix.encode(rng.random_range(-bound..bound))).collect()
        };
        let mut params = Vec::with_capacity(spec.layers.len());
        for (i, l) in spec.layers.iter().enumerate() {
            let s = shapes[i];
            params.push(match *l {
                LayerSpec::Conv { c_out, k, .. } => LayerParams::Conv {
                    w: FixTensor::from_vec(&[c_out, s.0, k, k], uniform(c_out * s.0 * k * k, s.0 * k * k)?)?,
                    b: FixTensor::zeros(&[c_out]),
                },
                LayerSpec::Fc { out } => LayerParams::Fc {
                    w: FixTensor::from_vec(&[out, s.0], uniform(out * s.0, s.0)?)?,
                    b: FixTensor::zeros(&[out]),
                },
                LayerSpec::Bn => LayerParams::Bn {
                    gamma: FixTensor::from_vec(&[s.0], vec![fix.one(); s.0])?,
                    beta: FixTensor::zeros(&[s.0]),
                },
                _ => LayerParams::None,
            });
        }
        Ok(Model { spec, shapes, params })
    }

    /// Forward operation of layer `i`, if it is linear.
    pub fn forward_op(&self, i: usize) -> Option<LinearOp> {
        let s = self.shapes[i];
        match self.spec.layers[i] {
            LayerSpec::Conv { c_out, k, pad } => Some(LinearOp::Conv { c_in: s.0, c_out, h: s.1, w: s.2, k, pad }),
            LayerSpec::Fc { out } => Some(LinearOp::MatVec { rows: out, cols: s.0 }),
            LayerSpec::Bn => Some(LinearOp::Scale { channels: s.0, size: s.1 * s.2 }),
            _ => None,
        }
    }

    /// Every linear operation one training sample runs, in order of first use.
    pub fn linear_uses(&self) -> Vec<LinearUse> {
        let mut uses = Vec::new();
        for i in 0..self.spec.layers.len() {
            if let Some(op) = self.forward_op(i) {
                uses.push(LinearUse { slot: slot(i, ROLE_FORWARD), op });
            }
        }
        let first_linear = (0..self.spec.layers.len()).find(|&i| self.forward_op(i).is_some());
        for i in (0..self.spec.layers.len()).rev() {
            let s = self.shapes[i];
            let (wg, xg) = match self.spec.layers[i] {
                LayerSpec::Conv { c_out, k, pad } => (
                    LinearOp::ConvWeightGrad { c_in: s.0, c_out, h: s.1, w: s.2, k, pad },
                    LinearOp::ConvInputGrad { c_in: s.0, c_out, h: s.1, w: s.2, k, pad },
                ),
                LayerSpec::Fc { out } => {
                    (LinearOp::Outer { rows: out, cols: s.0 }, LinearOp::MatTVec { rows: out, cols: s.0 })
                }
                LayerSpec::Bn => (
                    LinearOp::ChannelDot { channels: s.0, size: s.1 * s.2 },
                    LinearOp::Scale { channels: s.0, size: s.1 * s.2 },
                ),
                _ => continue,
            };
            uses.push(LinearUse { slot: slot(i, ROLE_WEIGHT_GRAD), op: wg });
            if Some(i) != first_linear {
                uses.push(LinearUse { slot: slot(i, ROLE_INPUT_GRAD), op: xg });
            }
        }
        uses
    }

    pub fn num_params(&self) -> usize {
        self.params
            .iter()
            .map(|p| match p {
                LayerParams::Conv { w, b } | LayerParams::Fc { w, b } => w.len() + b.len(),
                LayerParams::Bn { gamma, beta } => gamma.len() + beta.len(),
                LayerParams::None => 0,
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_shapes_and_uses() {
        let m = Model::init(ModelSpec::toy_mnist(1), &FixParams::default()).unwrap();
        assert_eq!(m.shapes.last(), Some(&(10, 1, 1)));
        assert_eq!(m.shapes[6], (8, 7, 7));
        assert_eq!(m.num_params(), 4 * 25 + 4 + 8 * 4 * 25 + 8 + 392 * 10 + 10);
        let uses = m.linear_uses();
        assert_eq!(uses.len(), 3 + 3 + 2);
        assert!(!uses.iter().any(|u| u.slot == slot(0, ROLE_INPUT_GRAD)));
    }

    #[test]
    fn json_spec_round_trip_and_validation() {
        let spec = ModelSpec::toy_mnist(3);
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains(r#"{"kind":"conv","c_out":4,"k":5,"pad":2}"#));
        assert_eq!(serde_json::from_str::<ModelSpec>(&s).unwrap(), spec);
        let mut bad = spec.clone();
        bad.layers.swap(6, 7);
        assert!(bad.shapes().is_err());
        let mut bad = spec;
        bad.layers[2] = LayerSpec::MaxPool { size: 3 };
        assert!(bad.shapes().is_err());
    }
}
