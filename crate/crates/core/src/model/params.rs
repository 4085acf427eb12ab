use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Hyperparams;
use super::Variant;

/// Dense row-major f64 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Glorot-uniform fill with the given fans.
    fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Tensor {
            shape: shape.to_vec(),
            data: (0..shape.iter().product())
                .map(|_| rng.random_range(-limit..limit))
                .collect(),
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Every trainable tensor of the re-ranker.
///
/// Shapes: `w1 [P, static]`, `b1 [P]`, `w2 [P, contextual]`, `b2 [P]`,
/// `w3 [T, visual]`, `b3 [T]`, `filters[i] [F, 4, i+1, i+1]`,
/// `w4 [hidden1, nFK (+1 for MAN)]`, `w5 [hidden2, hidden1]`, `w6 [1, hidden2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub w3: Tensor,
    pub b3: Tensor,
    pub filters: Vec<Tensor>,
    pub w4: Tensor,
    pub w5: Tensor,
    pub w6: Tensor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Names and shapes of all tensors, in canonical order.
pub fn tensor_specs(hp: &Hyperparams, variant: Variant) -> Vec<TensorSpec> {
    let spec = |name: String, shape: Vec<usize>| TensorSpec { name, shape };
    let p = hp.projection_dim;
    let mut out = vec![
        spec("w1".into(), vec![p, hp.dims.static_dim]),
        spec("b1".into(), vec![p]),
        spec("w2".into(), vec![p, hp.dims.contextual_dim]),
        spec("b2".into(), vec![p]),
        spec("w3".into(), vec![hp.visual_proj_dim, hp.dims.visual_dim]),
        spec("b3".into(), vec![hp.visual_proj_dim]),
    ];
    for i in 1..=hp.num_cnns {
        out.push(spec(format!("cnn{i}"), vec![hp.filters, 4, i, i]));
    }
    out.push(spec("w4".into(), vec![hp.hidden1, hp.mlp_input_width(variant)]));
    out.push(spec("w5".into(), vec![hp.hidden2, hp.hidden1]));
    out.push(spec("w6".into(), vec![1, hp.hidden2]));
    out
}

impl ModelParams {
    pub fn zeros(hp: &Hyperparams, variant: Variant) -> Self {
        let tensors = tensor_specs(hp, variant)
            .into_iter()
            .map(|s| Tensor::zeros(&s.shape))
            .collect();
        Self::from_tensors(hp, tensors)
    }

    /// Glorot-uniform weights and filters, zero biases.
    pub fn init(hp: &Hyperparams, variant: Variant, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = tensor_specs(hp, variant)
            .into_iter()
            .map(|s| match s.shape.as_slice() {
                [_] => Tensor::zeros(&s.shape),
                [out, inp] => Tensor::glorot(&s.shape, *inp, *out, &mut rng),
                [f, c, kh, kw] => Tensor::glorot(&s.shape, c * kh * kw, f * kh * kw, &mut rng),
                _ => unreachable!("unexpected tensor rank"),
            })
            .collect();
        Self::from_tensors(hp, tensors)
    }

    /// Rebuilds the struct from tensors in canonical order.
    pub fn from_tensors(hp: &Hyperparams, tensors: Vec<Tensor>) -> Self {
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("tensor count matches specs");
        let w1 = next();
        let b1 = next();
        let w2 = next();
        let b2 = next();
        let w3 = next();
        let b3 = next();
        let filters = (0..hp.num_cnns).map(|_| next()).collect();
        let w4 = next();
        let w5 = next();
        let w6 = next();
        ModelParams {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            filters,
            w4,
            w5,
            w6,
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3];
        v.extend(self.filters.iter());
        v.extend([&self.w4, &self.w5, &self.w6]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ];
        v.extend(self.filters.iter_mut());
        v.extend([&mut self.w4, &mut self.w5, &mut self.w6]);
        v
    }

    /// Canonical tensor names, parallel to [`ModelParams::tensors`].
    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = ["w1", "b1", "w2", "b2", "w3", "b3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        v.extend((1..=self.filters.len()).map(|i| format!("cnn{i}")));
        v.extend(["w4", "w5", "w6"].iter().map(|s| s.to_string()));
        v
    }

    pub fn sum_sq(&self) -> f64 {
        self.tensors().iter().map(|t| t.sum_sq()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, by: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= by);
        }
    }
}
