//! Dense, GRU and LSTM layers with explicit forward caches and backward passes.
//!
//! Gradients are accumulated into a value of the same type as the layer, so a
//! zeroed copy of the weights doubles as the gradient buffer.

use alloc::vec::Vec;
use rand::Rng;

use crate::math::{sigmoid, sqrt, tanh, to_f32_grid};

/// `y = W x + b`, with `W` stored row-major as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Option<Vec<f64>>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize, bias: bool) -> Self {
        Self {
            in_dim,
            out_dim,
            w: alloc::vec![0.0; in_dim * out_dim],
            b: bias.then(|| alloc::vec![0.0; out_dim]),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)`, snapped to the f32 grid.
    pub fn init<R: Rng + ?Sized>(&mut self, fan_in: usize, rng: &mut R) {
        let bound = 1.0 / sqrt(fan_in.max(1) as f64);
        let mut draw = || to_f32_grid((rng.random::<f64>() * 2.0 - 1.0) * bound);
        for w in self.w.iter_mut() {
            *w = draw();
        }
        if let Some(b) = self.b.as_mut() {
            for v in b.iter_mut() {
                *v = draw();
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim, self.out_dim, self.b.is_some())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut y = match &self.b {
            Some(b) => b.clone(),
            None => alloc::vec![0.0; self.out_dim],
        };
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            *yo += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
        y
    }

    /// Accumulate parameter gradients into `grad` and input gradients into `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &mut grad.w[o * self.in_dim..(o + 1) * self.in_dim];
            for (r, &xi) in row.iter_mut().zip(x) {
                *r += g * xi;
            }
        }
        if let Some(gb) = grad.b.as_mut() {
            for (b, &g) in gb.iter_mut().zip(dy) {
                *b += g;
            }
        }
        if let Some(dx) = dx {
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                for (d, &w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }

    pub(crate) fn arrays(&self) -> impl Iterator<Item = (&'static str, Vec<usize>, &Vec<f64>)> {
        core::iter::once(("w", alloc::vec![self.out_dim, self.in_dim], &self.w))
            .chain(self.b.iter().map(|b| ("b", alloc::vec![self.out_dim], b)))
    }

    pub(crate) fn arrays_mut(
        &mut self,
    ) -> impl Iterator<Item = (&'static str, Vec<usize>, &mut Vec<f64>)> {
        let (o, i) = (self.out_dim, self.in_dim);
        core::iter::once(("w", alloc::vec![o, i], &mut self.w))
            .chain(self.b.iter_mut().map(move |b| ("b", alloc::vec![o], b)))
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Zero the entries of `d` where the pre-activation was not positive.
pub fn relu_backward(pre: &[f64], d: &mut [f64]) {
    for (g, &p) in d.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Gated recurrent unit with gate order (reset, update, candidate).
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub hidden: usize,
    pub w_ih: Linear,
    pub w_hh: Linear,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
}

impl Gru {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            hidden,
            w_ih: Linear::zeros(input, 3 * hidden, true),
            w_hh: Linear::zeros(hidden, 3 * hidden, true),
        }
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan = self.hidden;
        self.w_ih.init(fan, rng);
        self.w_hh.init(fan, rng);
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.w_ih.in_dim, self.hidden)
    }

    pub fn forward(&self, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, GruCache) {
        let hd = self.hidden;
        let gi = self.w_ih.forward(x);
        let gh = self.w_hh.forward(h_prev);
        let mut r = alloc::vec![0.0; hd];
        let mut z = alloc::vec![0.0; hd];
        let mut n = alloc::vec![0.0; hd];
        let mut h = alloc::vec![0.0; hd];
        for j in 0..hd {
            r[j] = sigmoid(gi[j] + gh[j]);
            z[j] = sigmoid(gi[hd + j] + gh[hd + j]);
            n[j] = tanh(gi[2 * hd + j] + r[j] * gh[2 * hd + j]);
            h[j] = (1.0 - z[j]) * n[j] + z[j] * h_prev[j];
        }
        let hn = gh[2 * hd..].to_vec();
        (
            h,
            GruCache {
                x: x.to_vec(),
                h_prev: h_prev.to_vec(),
                r,
                z,
                n,
                hn,
            },
        )
    }

    /// Backward through one step. Adds to `dx` and `dh_prev`.
    pub fn backward(
        &self,
        cache: &GruCache,
        dh: &[f64],
        grad: &mut Gru,
        dx: Option<&mut [f64]>,
        dh_prev: &mut [f64],
    ) {
        let hd = self.hidden;
        let mut dgi = alloc::vec![0.0; 3 * hd];
        let mut dgh = alloc::vec![0.0; 3 * hd];
        for j in 0..hd {
            let (r, z, n) = (cache.r[j], cache.z[j], cache.n[j]);
            let dn = dh[j] * (1.0 - z);
            let dz = dh[j] * (cache.h_prev[j] - n);
            dh_prev[j] += dh[j] * z;
            let dn_pre = dn * (1.0 - n * n);
            let dr = dn_pre * cache.hn[j];
            let dr_pre = dr * r * (1.0 - r);
            let dz_pre = dz * z * (1.0 - z);
            dgi[j] = dr_pre;
            dgi[hd + j] = dz_pre;
            dgi[2 * hd + j] = dn_pre;
            dgh[j] = dr_pre;
            dgh[hd + j] = dz_pre;
            dgh[2 * hd + j] = dn_pre * r;
        }
        self.w_ih.backward(&cache.x, &dgi, &mut grad.w_ih, dx);
        self.w_hh
            .backward(&cache.h_prev, &dgh, &mut grad.w_hh, Some(dh_prev));
    }
}

/// Single-layer LSTM cell with gate order (input, forget, cell, output).
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub hidden: usize,
    pub w_ih: Linear,
    pub w_hh: Linear,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tc: Vec<f64>,
}

impl Lstm {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            hidden,
            w_ih: Linear::zeros(input, 4 * hidden, true),
            w_hh: Linear::zeros(hidden, 4 * hidden, false),
        }
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan = self.hidden;
        self.w_ih.init(fan, rng);
        self.w_hh.init(fan, rng);
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.w_ih.in_dim, self.hidden)
    }

    pub fn forward(
        &self,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> (Vec<f64>, Vec<f64>, LstmCache) {
        let hd = self.hidden;
        let mut gates = self.w_ih.forward(x);
        for (g, v) in gates.iter_mut().zip(self.w_hh.forward(h_prev)) {
            *g += v;
        }
        let mut cache = LstmCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i: alloc::vec![0.0; hd],
            f: alloc::vec![0.0; hd],
            g: alloc::vec![0.0; hd],
            o: alloc::vec![0.0; hd],
            tc: alloc::vec![0.0; hd],
        };
        let mut h = alloc::vec![0.0; hd];
        let mut c = alloc::vec![0.0; hd];
        for j in 0..hd {
            let i = sigmoid(gates[j]);
            let f = sigmoid(gates[hd + j]);
            let g = tanh(gates[2 * hd + j]);
            let o = sigmoid(gates[3 * hd + j]);
            c[j] = f * c_prev[j] + i * g;
            let tc = tanh(c[j]);
            h[j] = o * tc;
            cache.i[j] = i;
            cache.f[j] = f;
            cache.g[j] = g;
            cache.o[j] = o;
            cache.tc[j] = tc;
        }
        (h, c, cache)
    }

    /// Backward through one step given gradients on `h` and `c`. Adds to
    /// `dx`, `dh_prev` and `dc_prev`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        cache: &LstmCache,
        dh: &[f64],
        dc: &[f64],
        grad: &mut Lstm,
        dx: Option<&mut [f64]>,
        dh_prev: &mut [f64],
        dc_prev: &mut [f64],
    ) {
        let hd = self.hidden;
        let mut dgates = alloc::vec![0.0; 4 * hd];
        for j in 0..hd {
            let (i, f, g, o, tc) = (cache.i[j], cache.f[j], cache.g[j], cache.o[j], cache.tc[j]);
            let d_o = dh[j] * tc;
            let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
            let di = dct * g;
            let dg = dct * i;
            let df = dct * cache.c_prev[j];
            dc_prev[j] += dct * f;
            dgates[j] = di * i * (1.0 - i);
            dgates[hd + j] = df * f * (1.0 - f);
            dgates[2 * hd + j] = dg * (1.0 - g * g);
            dgates[3 * hd + j] = d_o * o * (1.0 - o);
        }
        self.w_ih.backward(&cache.x, &dgates, &mut grad.w_ih, dx);
        self.w_hh
            .backward(&cache.h_prev, &dgates, &mut grad.w_hh, Some(dh_prev));
    }
}
