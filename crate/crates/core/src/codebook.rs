//! Per-component k-means codebooks that turn continuous velocities into
//! discrete motion classes.

use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Velocity;
use crate::math::{abs, next_up_f32, to_f32_grid};
use crate::rng;

/// Default iteration cap for Lloyd's algorithm.
pub const DEFAULT_MAX_ITERS: usize = 100;
/// Lloyd's algorithm stops once no centroid moves more than this.
pub const CONVERGENCE_TOL: f64 = 1e-6;

/// Class indices for the four velocity components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassIndex4 {
    pub ix: usize,
    pub iy: usize,
    pub iw: usize,
    pub ih: usize,
}

impl ClassIndex4 {
    pub fn new(ix: usize, iy: usize, iw: usize, ih: usize) -> Self {
        Self { ix, iy, iw, ih }
    }

    pub fn to_array(self) -> [usize; 4] {
        [self.ix, self.iy, self.iw, self.ih]
    }

    pub fn from_array(a: [usize; 4]) -> Self {
        Self {
            ix: a[0],
            iy: a[1],
            iw: a[2],
            ih: a[3],
        }
    }
}

/// Four sorted lists of `k` centroids, one per velocity component.
///
/// Fitted centroids are strictly increasing and exactly representable as
/// `f32`, so a checkpoint round trip is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    centroids: [Vec<f64>; 4],
}

impl Codebook {
    /// Build from explicit centroid lists (each of length `k`, finite, sorted).
    pub fn from_centroids(centroids: [Vec<f64>; 4]) -> Result<Self> {
        let k = centroids[0].len();
        if k == 0 {
            return Err(Error::Config("codebook needs at least one centroid".into()));
        }
        for (c, list) in centroids.iter().enumerate() {
            if list.len() != k {
                return Err(Error::Shape(alloc::format!(
                    "component {c} has {} centroids, expected {k}",
                    list.len()
                )));
            }
            if list.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(alloc::format!(
                    "component {c} has non-finite centroids"
                )));
            }
            if list.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Data(alloc::format!(
                    "component {c} centroids are not sorted"
                )));
            }
        }
        Ok(Self { k, centroids })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.centroids[c]
    }

    pub fn centroids(&self) -> &[Vec<f64>; 4] {
        &self.centroids
    }

    pub fn quantize(&self, v: &Velocity) -> ClassIndex4 {
        let a = v.to_array();
        ClassIndex4::from_array(core::array::from_fn(|c| nearest(&self.centroids[c], a[c])))
    }

    pub fn dequantize(&self, c: &ClassIndex4) -> Result<Velocity> {
        let idx = c.to_array();
        for &i in &idx {
            if i >= self.k {
                return Err(Error::OutOfBounds {
                    index: i,
                    k: self.k,
                });
            }
        }
        Ok(Velocity::from_array(core::array::from_fn(|j| {
            self.centroids[j][idx[j]]
        })))
    }

    /// Whether every component lies within the codebook's support: the
    /// centroid range widened by its own width on each side. Values beyond it
    /// would only be clamped onto an extreme class.
    pub fn covers(&self, v: &Velocity) -> bool {
        let a = v.to_array();
        (0..4).all(|c| {
            let cs = &self.centroids[c];
            let (lo, hi) = (cs[0], cs[cs.len() - 1]);
            let r = hi - lo;
            a[c] >= lo - r && a[c] <= hi + r
        })
    }

    /// Within-cluster sum of squared errors per component.
    pub fn sse(&self, corpus: &[Velocity]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for v in corpus {
            let a = v.to_array();
            for c in 0..4 {
                let d = a[c] - self.centroids[c][nearest(&self.centroids[c], a[c])];
                out[c] += d * d;
            }
        }
        out
    }
}

/// Index of the centroid closest to `value` in a sorted list; ties go to the
/// lower index.
pub fn nearest(sorted: &[f64], value: f64) -> usize {
    let i = sorted.partition_point(|&c| c < value);
    if i == 0 {
        return 0;
    }
    if i == sorted.len() {
        return sorted.len() - 1;
    }
    if abs(value - sorted[i - 1]) <= abs(sorted[i] - value) {
        // walk back over duplicates so the lowest equal index wins
        let mut j = i - 1;
        while j > 0 && sorted[j - 1] == sorted[i - 1] {
            j -= 1;
        }
        j
    } else {
        i
    }
}

/// Fit four independent 1-D codebooks on a velocity corpus.
pub fn fit_codebooks(
    corpus: &[Velocity],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Codebook> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if corpus.len() < k {
        return Err(Error::InsufficientData(alloc::format!(
            "corpus has {} velocities but k = {k}",
            corpus.len()
        )));
    }
    if corpus.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("corpus contains non-finite velocities".into()));
    }
    let mut lists: [Vec<f64>; 4] = Default::default();
    for (c, slot) in lists.iter_mut().enumerate() {
        let data: Vec<f64> = corpus.iter().map(|v| v.to_array()[c]).collect();
        let mut r = rng::derived(seed, c as u64, 0);
        let fit = kmeans_1d(&data, k, &mut r, max_iters);
        *slot = canonicalize(fit.centroids);
    }
    Codebook::from_centroids(lists)
}

/// Result of one 1-D k-means run.
#[derive(Debug, Clone)]
pub struct KMeans1d {
    pub centroids: Vec<f64>,
    /// SSE after each assignment step.
    pub sse_trace: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd's algorithm on scalars with k-means++ seeding.
///
/// Centroids come back sorted ascending. Empty clusters are reseeded to the
/// point farthest from its current centroid.
pub fn kmeans_1d<R: Rng + ?Sized>(
    data: &[f64],
    k: usize,
    rng: &mut R,
    max_iters: usize,
) -> KMeans1d {
    assert!(k >= 1 && data.len() >= k);
    let mut centroids = plus_plus_seed(data, k, rng);
    centroids.sort_by(f64::total_cmp);

    let mut assign = alloc::vec![0usize; data.len()];
    let mut sse_trace = Vec::new();
    let mut iterations = 0;
    loop {
        let mut sse = 0.0;
        for (a, &x) in assign.iter_mut().zip(data) {
            *a = nearest(&centroids, x);
            let d = x - centroids[*a];
            sse += d * d;
        }
        sse_trace.push(sse);
        if iterations >= max_iters {
            break;
        }
        iterations += 1;

        let mut sums = alloc::vec![0.0; k];
        let mut counts = alloc::vec![0usize; k];
        for (&a, &x) in assign.iter().zip(data) {
            sums[a] += x;
            counts[a] += 1;
        }
        let mut next: Vec<f64> = (0..k)
            .map(|j| {
                if counts[j] > 0 {
                    sums[j] / counts[j] as f64
                } else {
                    centroids[j]
                }
            })
            .collect();
        for j in 0..k {
            if counts[j] == 0 {
                let far = data
                    .iter()
                    .zip(&assign)
                    .map(|(&x, &a)| (abs(x - next[a]), x))
                    .fold(
                        (-1.0, 0.0),
                        |best, cur| if cur.0 > best.0 { cur } else { best },
                    );
                next[j] = far.1;
            }
        }
        next.sort_by(f64::total_cmp);
        let moved = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| abs(a - b))
            .fold(0.0, f64::max);
        centroids = next;
        if moved < CONVERGENCE_TOL {
            // final assignment against the converged centroids
            let sse: f64 = data
                .iter()
                .map(|&x| {
                    let d = x - centroids[nearest(&centroids, x)];
                    d * d
                })
                .sum();
            sse_trace.push(sse);
            break;
        }
    }
    KMeans1d {
        centroids,
        sse_trace,
        iterations,
    }
}

fn plus_plus_seed<R: Rng + ?Sized>(data: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(data[rng.random_range(0..data.len())]);
    let mut d2: Vec<f64> = data
        .iter()
        .map(|&x| (x - centroids[0]) * (x - centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = data.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..data.len())
        };
        let c = data[pick];
        centroids.push(c);
        for (slot, &x) in d2.iter_mut().zip(data) {
            *slot = slot.min((x - c) * (x - c));
        }
    }
    centroids
}

/// Snap to the f32 grid and force strictly increasing order.
fn canonicalize(mut centroids: Vec<f64>) -> Vec<f64> {
    centroids.sort_by(f64::total_cmp);
    let mut prev: Option<f32> = None;
    for c in centroids.iter_mut() {
        let mut v = to_f32_grid(*c) as f32;
        if let Some(p) = prev {
            if v <= p {
                v = next_up_f32(p);
            }
        }
        prev = Some(v);
        *c = v as f64;
    }
    centroids
}
