//! Small dense building blocks shared by the engine: affine maps and the
//! scalar activations used by the deformation predictor and the SSM.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Row-major affine map `y = W x + b` with `W` of shape `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform init in `±scale / sqrt(inputs)` with zero bias.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, inputs: usize, outputs: usize, scale: f64) -> Self {
        let bound = scale / (inputs as f64).sqrt();
        let weight = (0..inputs * outputs)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }

    pub fn with_bias(mut self, bias: Vec<f64>) -> Self {
        assert_eq!(bias.len(), self.outputs, "bias length");
        self.bias = bias;
        self
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weight[o * self.inputs..(o + 1) * self.inputs]
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        debug_assert_eq!(out.len(), self.outputs);
        for (o, slot) in out.iter_mut().enumerate() {
            *slot = self.bias[o] + dot(self.row(o), x);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs];
        self.apply_into(x, &mut out);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    pub(crate) fn shape_ok(&self) -> bool {
        self.weight.len() == self.inputs * self.outputs && self.bias.len() == self.outputs
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln(1 + e^z)` without overflow for large `z`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
#[inline]
pub fn softplus_inverse(y: f64) -> f64 {
    // ln(e^y - 1) = y + ln(1 - e^-y)
    y + (-(-y).exp_m1()).ln()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// In-place `(v - mean) / sqrt(var + eps)` with identity affine.
pub fn layer_norm_in_place(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for x in v.iter_mut() {
        *x = (*x - mean) * inv;
    }
}
