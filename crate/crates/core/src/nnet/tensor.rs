use serde::{Deserialize, Serialize};

/// Dense row-major tensor of parameters or activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Tensor {
            name: name.into(),
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
}

/// Ordered collection of named parameter tensors; layers refer to entries
/// by index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn add(&mut self, t: Tensor) -> usize {
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.tensors[i].data
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Gradient buffers shaped like the parameters.
    pub fn zeros_like(&self) -> Grads {
        Grads(self.tensors.iter().map(|t| vec![0.0; t.len()]).collect())
    }

    /// Flat view used by finite-difference checks.
    pub fn flat_get(&self, mut i: usize) -> f64 {
        for t in &self.tensors {
            if i < t.len() {
                return t.data[i];
            }
            i -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn flat_set(&mut self, mut i: usize, v: f64) {
        for t in &mut self.tensors {
            if i < t.len() {
                t.data[i] = v;
                return;
            }
            i -= t.len();
        }
        panic!("flat index out of range")
    }

    /// Rounds every value to the nearest `f32`, so checkpoints are lossless.
    pub fn quantize_f32(&mut self) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// Per-tensor gradient accumulators, aligned with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn zero(&mut self) {
        for g in &mut self.0 {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn flat_get(&self, mut i: usize) -> f64 {
        for g in &self.0 {
            if i < g.len() {
                return g[i];
            }
            i -= g.len();
        }
        panic!("flat index out of range")
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().flat_map(|g| g.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.0 {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
