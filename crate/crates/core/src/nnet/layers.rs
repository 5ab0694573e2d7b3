//! Layers with explicit forward caches and reverse-mode backward passes.

use rand::Rng;

use super::tensor::{axpy, dot, Grads, ParamSet, Tensor};

fn uniform_init<R: Rng + ?Sized>(t: &mut Tensor, bound: f64, rng: &mut R) {
    for v in &mut t.data {
        *v = rng.gen_range(-bound..bound);
    }
}

/// `y = W x + b` with `W` stored `n_out`×`n_in` row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    /// Registers a layer, uniform in ±`gain`/√n_in, zero bias.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        n_in: usize,
        n_out: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let mut w = Tensor::zeros(format!("{name}.weight"), &[n_out, n_in]);
        uniform_init(&mut w, gain / (n_in as f64).sqrt(), rng);
        let b = Tensor::zeros(format!("{name}.bias"), &[n_out]);
        Linear {
            w: params.add(w),
            b: params.add(b),
            n_in,
            n_out,
        }
    }

    pub fn forward(&self, p: &ParamSet, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_in, "linear input width");
        let w = p.get(self.w);
        let b = p.get(self.b);
        for (o, yo) in y.iter_mut().enumerate().take(self.n_out) {
            *yo = b[o] + dot(&w[o * self.n_in..(o + 1) * self.n_in], x);
        }
    }

    pub fn forward_vec(&self, p: &ParamSet, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_out];
        self.forward(p, x, &mut y);
        y
    }

    /// Accumulates parameter gradients; adds `Wᵀ dy` into `dx` when given.
    pub fn backward(&self, p: &ParamSet, x: &[f64], dy: &[f64], g: &mut Grads, dx: Option<&mut [f64]>) {
        {
            let gw = &mut g.0[self.w];
            for (o, &d) in dy.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, x, &mut gw[o * self.n_in..(o + 1) * self.n_in]);
                }
            }
        }
        for (gb, d) in g.0[self.b].iter_mut().zip(dy) {
            *gb += d;
        }
        if let Some(dx) = dx {
            let w = p.get(self.w);
            for (o, &d) in dy.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, &w[o * self.n_in..(o + 1) * self.n_in], dx);
                }
            }
        }
    }
}

pub fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Masks `d` where the ReLU output was zero.
pub fn relu_backward(out: &[f64], d: &mut [f64]) {
    for (di, &o) in d.iter_mut().zip(out) {
        if o <= 0.0 {
            *di = 0.0;
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Gated recurrent unit:
/// r = σ(Wᵢᵣx + bᵢᵣ + Wₕᵣh + bₕᵣ), z = σ(Wᵢ𝓏x + bᵢ𝓏 + Wₕ𝓏h + bₕ𝓏),
/// n = tanh(Wᵢₙx + bᵢₙ + r ⊙ (Wₕₙh + bₕₙ)), h' = (1 − z) ⊙ n + z ⊙ h.
/// Gate blocks are stacked r, z, n in the 3H-row weight matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gru {
    pub input: Linear,
    pub recurrent: Linear,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCache {
    pub h: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    /// Wₕₙh + bₕₙ
    pub hn: Vec<f64>,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, n_in: usize, hidden: usize, rng: &mut R) -> Self {
        let input = Linear::new(params, &format!("{name}.input"), n_in, 3 * hidden, 1.0, rng);
        let recurrent = Linear::new(params, &format!("{name}.recurrent"), hidden, 3 * hidden, 1.0, rng);
        Gru {
            input,
            recurrent,
            hidden,
        }
    }

    pub fn forward(&self, p: &ParamSet, x: &[f64], h: &[f64]) -> (Vec<f64>, GruCache) {
        assert_eq!(h.len(), self.hidden, "gru hidden width");
        let hs = self.hidden;
        let gi = self.input.forward_vec(p, x);
        let gh = self.recurrent.forward_vec(p, h);
        let mut r = vec![0.0; hs];
        let mut z = vec![0.0; hs];
        let mut n = vec![0.0; hs];
        let mut out = vec![0.0; hs];
        for j in 0..hs {
            r[j] = sigmoid(gi[j] + gh[j]);
            z[j] = sigmoid(gi[hs + j] + gh[hs + j]);
            n[j] = (gi[2 * hs + j] + r[j] * gh[2 * hs + j]).tanh();
            out[j] = (1.0 - z[j]) * n[j] + z[j] * h[j];
        }
        let cache = GruCache {
            h: h.to_vec(),
            r,
            z,
            n,
            hn: gh[2 * hs..].to_vec(),
        };
        (out, cache)
    }

    /// Returns (dx, dh) for upstream gradient `dout` on h'.
    pub fn backward(
        &self,
        p: &ParamSet,
        x: &[f64],
        cache: &GruCache,
        dout: &[f64],
        g: &mut Grads,
    ) -> (Vec<f64>, Vec<f64>) {
        let hs = self.hidden;
        let mut d_in = vec![0.0; 3 * hs];
        let mut d_rec = vec![0.0; 3 * hs];
        let mut dh = vec![0.0; hs];
        for j in 0..hs {
            let (r, z, n, h) = (cache.r[j], cache.z[j], cache.n[j], cache.h[j]);
            let dn = dout[j] * (1.0 - z);
            let dz = dout[j] * (h - n);
            dh[j] = dout[j] * z;
            let dan = dn * (1.0 - n * n);
            let dar = dan * cache.hn[j] * r * (1.0 - r);
            let daz = dz * z * (1.0 - z);
            d_in[j] = dar;
            d_in[hs + j] = daz;
            d_in[2 * hs + j] = dan;
            d_rec[j] = dar;
            d_rec[hs + j] = daz;
            d_rec[2 * hs + j] = dan * r;
        }
        let mut dx = vec![0.0; self.input.n_in];
        self.input.backward(p, x, &d_in, g, Some(&mut dx));
        self.recurrent.backward(p, &cache.h, &d_rec, g, Some(&mut dh));
        (dx, dh)
    }
}

/// Plain ReLU multilayer perceptron with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, sizes: &[usize], rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, &format!("{name}.{i}"), w[0], w[1], 1.0, rng))
            .collect();
        Mlp { layers }
    }

    /// Activations of every layer, input first; the last entry is the output.
    pub fn forward_all(&self, p: &ParamSet, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = l.forward_vec(p, acts.last().expect("non-empty"));
            if i + 1 < self.layers.len() {
                relu_in_place(&mut y);
            }
            acts.push(y);
        }
        acts
    }

    pub fn forward(&self, p: &ParamSet, x: &[f64]) -> Vec<f64> {
        self.forward_all(p, x).pop().expect("non-empty")
    }

    pub fn backward(&self, p: &ParamSet, acts: &[Vec<f64>], dout: &[f64], g: &mut Grads) {
        let mut d = dout.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let mut dx = vec![0.0; l.n_in];
            l.backward(p, &acts[i], &d, g, Some(&mut dx));
            if i > 0 {
                relu_backward(&acts[i], &mut dx);
            }
            d = dx;
        }
    }
}
