//! Dense ReLU network with positional encoding.
//!
//! Weights file layout: one line of JSON header
//! `{"layers": [w0, w1, ..., 4], "l_pos": L, "l_dir": D}` terminated by `\n`,
//! followed by little-endian f32 data. For each layer in order the weight
//! matrix (row-major, `out` rows) is written, then its bias vector.
//! `w0` must equal `3 + 6·l_pos`. When `l_dir > 0` the encoded view
//! direction (`3 + 6·l_dir` values) is appended to the input of the final
//! layer.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{encode, encoded_len, FieldOutput, FieldQuery};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layers: Vec<usize>,
    pub l_pos: usize,
    pub l_dir: usize,
}

impl MlpSpec {
    /// Four hidden layers of width 64, `l_pos = 10`, no view dependence.
    pub fn standard() -> Self {
        Self::with_hidden(&[64, 64, 64, 64], 10, 0)
    }

    pub fn with_hidden(hidden: &[usize], l_pos: usize, l_dir: usize) -> Self {
        let mut layers = vec![encoded_len(l_pos)];
        layers.extend_from_slice(hidden);
        layers.push(4);
        Self {
            layers,
            l_pos,
            l_dir,
        }
    }

    /// (inputs, outputs) of every layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let n = self.layers.len() - 1;
        (0..n)
            .map(|i| {
                let mut input = self.layers[i];
                if i == n - 1 && self.l_dir > 0 {
                    input += encoded_len(self.l_dir);
                }
                (input, self.layers[i + 1])
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(Error::Weights("need at least one layer".into()));
        }
        if self.layers[0] != encoded_len(self.l_pos) {
            return Err(Error::Weights(format!(
                "input width {} does not match l_pos {} (expected {})",
                self.layers[0],
                self.l_pos,
                encoded_len(self.l_pos)
            )));
        }
        if *self.layers.last().unwrap() != 4 {
            return Err(Error::Weights("output width must be 4".into()));
        }
        if self.layers.contains(&0) {
            return Err(Error::Weights("zero-width layer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// Row-major, `outputs` rows.
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl Layer {
    fn forward(&self, x: &[f32], y: &mut Vec<f32>) {
        y.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
            let dot: f32 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            y.push(dot + b);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

fn logistic(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl Mlp {
    /// Builds a network from a flat parameter vector in file order.
    pub fn from_params(spec: MlpSpec, params: &[f32]) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.parameter_count() {
            return Err(Error::Weights(format!(
                "expected {} parameters, got {}",
                spec.parameter_count(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        let mut layers = Vec::new();
        let mut at = 0;
        for (inputs, outputs) in spec.layer_shapes() {
            let weights = params[at..at + inputs * outputs].to_vec();
            at += inputs * outputs;
            let bias = params[at..at + outputs].to_vec();
            at += outputs;
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                bias,
            });
        }
        Ok(Self { spec, layers })
    }

    /// Weights and biases uniform in ±1/√fan_in.
    pub fn random<R: Rng>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut params = Vec::with_capacity(spec.parameter_count());
        for (inputs, outputs) in spec.layer_shapes() {
            let bound = 1.0 / (inputs as f32).sqrt();
            for _ in 0..inputs * outputs + outputs {
                params.push(rng.random_range(-bound..=bound));
            }
        }
        Self::from_params(spec, &params)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.spec.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub(super) fn eval_batch(&self, queries: &[FieldQuery], out: &mut Vec<FieldOutput>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let last = self.layers.len() - 1;
        for q in queries {
            a.clear();
            a.extend(encode(&q.position, self.spec.l_pos).into_iter().map(|v| v as f32));
            for (i, layer) in self.layers.iter().enumerate() {
                if i == last && self.spec.l_dir > 0 {
                    a.extend(
                        encode(&q.direction, self.spec.l_dir)
                            .into_iter()
                            .map(|v| v as f32),
                    );
                }
                layer.forward(&a, &mut b);
                if i != last {
                    b.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                std::mem::swap(&mut a, &mut b);
            }
            out.push(FieldOutput {
                rgb: [
                    logistic(a[0]) as f64,
                    logistic(a[1]) as f64,
                    logistic(a[2]) as f64,
                ],
                sigma: softplus(a[3]) as f64,
            });
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec(&self.spec)?;
        bytes.push(b'\n');
        for v in self.params() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Weights("missing header line".into()))?;
        let spec: MlpSpec = serde_json::from_slice(&bytes[..split])?;
        spec.validate()?;
        let blob = &bytes[split + 1..];
        let expected = spec.parameter_count() * 4;
        if blob.len() != expected {
            return Err(Error::Weights(format!(
                "blob is {} bytes, header implies {expected}",
                blob.len()
            )));
        }
        let params: Vec<f32> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::from_params(spec, &params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ForwardPassLedger, RadianceField};
    use crate::rng::{derive, Stream};
    use nalgebra::Vector3;

    fn queries() -> Vec<FieldQuery> {
        (0..50)
            .map(|i| {
                let t = i as f64 * 0.37;
                FieldQuery {
                    position: Vector3::new(t.sin(), t.cos() * 2.0, t * 0.1 - 1.0),
                    direction: Vector3::new(t.cos(), t.sin(), 0.0),
                }
            })
            .collect()
    }

    #[test]
    fn input_width_must_match_encoding() {
        let bad = MlpSpec {
            layers: vec![63, 64, 64, 4],
            l_pos: 8,
            l_dir: 0,
        };
        assert!(bad.validate().is_err());
        let good = MlpSpec {
            layers: vec![63, 64, 64, 4],
            l_pos: 10,
            l_dir: 0,
        };
        good.validate().unwrap();
    }

    #[test]
    fn zero_weights_give_constant_output() {
        let spec = MlpSpec::with_hidden(&[8, 8], 2, 0);
        let mut params = vec![0.0f32; spec.parameter_count()];
        let n = params.len();
        params[n - 1] = 0.5; // sigma bias
        let mlp = Mlp::from_params(spec, &params).unwrap();
        let mut out = Vec::new();
        mlp.eval_batch(&queries(), &mut out);
        let expected_sigma = (0.5f32.exp().ln_1p()) as f64;
        for o in &out {
            assert_eq!(o.sigma, expected_sigma);
            assert_eq!(o.rgb, [0.5; 3]);
        }
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.weights");
        let mut rng = derive(3, Stream::MlpWeights, 0, 0);
        let mlp = Mlp::random(MlpSpec::with_hidden(&[16, 16], 4, 2), &mut rng).unwrap();
        mlp.save(&path).unwrap();
        let back = Mlp::load(&path).unwrap();
        assert_eq!(back, mlp);
        let ledger = ForwardPassLedger::new();
        let a = RadianceField::Mlp(mlp).query_batch(&queries(), &ledger).unwrap();
        let b = RadianceField::Mlp(back).query_batch(&queries(), &ledger).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let mut rng = derive(3, Stream::MlpWeights, 0, 0);
        let mlp = Mlp::random(MlpSpec::with_hidden(&[4], 1, 0), &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.weights");
        mlp.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(Mlp::from_bytes(&bytes), Err(Error::Weights(_))));
    }

    #[test]
    fn non_finite_weights_are_rejected() {
        let spec = MlpSpec::with_hidden(&[4], 0, 0);
        let mut params = vec![0.1f32; spec.parameter_count()];
        params[2] = f32::INFINITY;
        assert!(matches!(
            Mlp::from_params(spec, &params),
            Err(Error::NonFinite(_))
        ));
    }
}
