//! Embedding and context tables, the co-occurrence objective with negative
//! sampling, and the capped ranking objective over the diagonal bilinear score.
//!
//! All step functions ascend their objective: a step computes the sparse
//! gradient of one sampled term from the current parameters, then adds
//! `lr * gradient` to the touched rows. Rows that do not appear in the
//! gradient are never written.

use rand::Rng;

use crate::graph::NoiseDistribution;
use crate::params::{Block, Gradient, Matrix, ParamVec};
use crate::vocab::SenseId;

/// Logits are clamped to this magnitude before the sigmoid.
pub const MAX_LOGIT: f64 = 30.0;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-MAX_LOGIT, MAX_LOGIT);
    1.0 / (1.0 + (-z).exp())
}

/// `ln σ(z)`, stable for large |z|.
#[inline]
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Embedding vectors `x` and context vectors `c`, one row per sense.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub x: Matrix,
    pub c: Matrix,
}

impl EmbeddingTable {
    /// `x` uniform in `[-0.5/d, 0.5/d]`, `c` zero.
    pub fn new<R: Rng + ?Sized>(num_senses: usize, dim: usize, rng: &mut R) -> Self {
        let half = 0.5 / dim as f64;
        let x = (0..num_senses * dim)
            .map(|_| rng.random_range(-half..=half))
            .collect();
        EmbeddingTable {
            x: Matrix::from_vec(num_senses, dim, x),
            c: Matrix::zeros(num_senses, dim),
        }
    }

    pub fn from_parts(x: Matrix, c: Matrix) -> Self {
        assert_eq!(x.rows(), c.rows());
        assert_eq!(x.cols(), c.cols());
        EmbeddingTable { x, c }
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn num_senses(&self) -> usize {
        self.x.rows()
    }

    pub fn embedding(&self, u: SenseId) -> Vec<f64> {
        self.x.row(u.index())
    }

    pub fn context(&self, u: SenseId) -> Vec<f64> {
        self.c.row(u.index())
    }

    /// Logit of the conditional `p(u | v)`: `x_u·x_v + x_u·c_v`.
    pub fn cooc_logit(&self, u: SenseId, v: SenseId) -> f64 {
        let xu = self.embedding(u);
        let target = self.target_vector(v);
        dot(&xu, &target)
    }

    /// `x_v + c_v`.
    fn target_vector(&self, v: SenseId) -> Vec<f64> {
        let mut t = self.embedding(v);
        for (t, c) in t.iter_mut().zip(self.context(v)) {
            *t += c;
        }
        t
    }

    /// Applies `lr * g` to the embedding and context rows of a gradient.
    pub fn apply(&self, g: &Gradient, lr: f64) {
        for (block, values) in g.dense() {
            match *block {
                Block::Embedding(u) => self.x.add_to_row(u.index(), values, lr),
                Block::Context(u) => self.c.add_to_row(u.index(), values, lr),
                Block::Bilinear => {}
            }
        }
    }
}

/// Full-softmax conditional probability `p(u | v)` over the whole vocabulary.
/// Quadratic in the vocabulary size; meant for small tables and tests.
pub fn softmax_prob(table: &EmbeddingTable, u: SenseId, v: SenseId) -> f64 {
    let n = table.num_senses();
    let target = table.target_vector(v);
    let logits: Vec<f64> = (0..n)
        .map(|k| dot(&table.x.row(k), &target))
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    (logits[u.index()] - max).exp() / z
}

/// Sampled co-occurrence objective for edge `(u, v)` with fixed noise strings:
/// `ln σ(s(u,v)) + Σ_n ln σ(-s(u_n,v))`, where `s(a,v) = x_a·(x_v + c_v)`.
pub fn lc_objective(table: &EmbeddingTable, u: SenseId, v: SenseId, negatives: &[SenseId]) -> f64 {
    let target = table.target_vector(v);
    let mut obj = log_sigmoid(dot(&table.embedding(u), &target));
    for &n in negatives {
        obj += log_sigmoid(-dot(&table.embedding(n), &target));
    }
    obj
}

pub fn lc_gradient(
    table: &EmbeddingTable,
    u: SenseId,
    v: SenseId,
    negatives: &[SenseId],
) -> Gradient {
    let target = table.target_vector(v);
    let mut g = Gradient::new(lc_objective(table, u, v, negatives));

    let xu = table.embedding(u);
    let coef = 1.0 - sigmoid(dot(&xu, &target));
    g.accumulate(Block::Embedding(u), &target, coef);
    g.accumulate(Block::Embedding(v), &xu, coef);
    g.accumulate(Block::Context(v), &xu, coef);

    for &n in negatives {
        let xn = table.embedding(n);
        let coef = -sigmoid(dot(&xn, &target));
        g.accumulate(Block::Embedding(n), &target, coef);
        g.accumulate(Block::Embedding(v), &xn, coef);
        g.accumulate(Block::Context(v), &xn, coef);
    }
    g
}

/// Draws `n` noise strings, redrawing (a bounded number of times) any draw equal to `u`.
pub fn sample_negatives<R: Rng + ?Sized>(
    noise: &NoiseDistribution,
    u: SenseId,
    n: usize,
    rng: &mut R,
) -> Vec<SenseId> {
    (0..n)
        .map(|_| {
            let mut s = noise.sample(rng);
            for _ in 0..8 {
                if s != u {
                    break;
                }
                s = noise.sample(rng);
            }
            s
        })
        .collect()
}

/// One ascent step on the co-occurrence objective for a sampled edge.
pub fn lc_step<R: Rng + ?Sized>(
    table: &EmbeddingTable,
    edge: (SenseId, SenseId),
    noise: &NoiseDistribution,
    num_negatives: usize,
    lr: f64,
    rng: &mut R,
) -> Gradient {
    let (u, v) = edge;
    let negatives = sample_negatives(noise, u, num_negatives, rng);
    let g = lc_gradient(table, u, v, &negatives);
    table.apply(&g, lr);
    g
}

/// Diagonal of the bilinear score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearWeights {
    pub diag: ParamVec,
}

impl BilinearWeights {
    /// All-ones initialization: the score starts as a plain dot product.
    pub fn ones(dim: usize) -> Self {
        BilinearWeights {
            diag: ParamVec::filled(dim, 1.0),
        }
    }

    pub fn from_vec(diag: Vec<f64>) -> Self {
        BilinearWeights {
            diag: ParamVec::from_vec(diag),
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.diag.to_vec()
    }

    pub fn apply(&self, g: &Gradient, lr: f64) {
        if let Some(values) = g.block(Block::Bilinear) {
            self.diag.add_scaled(0, values, lr);
        }
    }
}

/// `Σ_k x_u[k]·w[k]·x_v[k]`. Evaluated as `w[k]·(x_u[k]·x_v[k])` so the
/// result is bitwise symmetric in `(u, v)`.
pub fn score_d(table: &EmbeddingTable, w: &BilinearWeights, u: SenseId, v: SenseId) -> f64 {
    let (ru, rv) = (u.index(), v.index());
    (0..table.dim())
        .map(|k| w.diag.get(k) * (table.x.get(ru, k) * table.x.get(rv, k)))
        .sum()
}

/// `min(1, score_d(u,v) - score_d(u,v'))`.
pub fn ls_objective(
    table: &EmbeddingTable,
    w: &BilinearWeights,
    u: SenseId,
    v: SenseId,
    v_neg: SenseId,
) -> f64 {
    (score_d(table, w, u, v) - score_d(table, w, u, v_neg)).min(1.0)
}

/// Gradient of the capped ranking term. Zero once the score difference reaches 1.
pub fn ls_gradient(
    table: &EmbeddingTable,
    w: &BilinearWeights,
    u: SenseId,
    v: SenseId,
    v_neg: SenseId,
) -> Gradient {
    let diff = score_d(table, w, u, v) - score_d(table, w, u, v_neg);
    let mut g = Gradient::new(diff.min(1.0));
    if diff >= 1.0 {
        return g;
    }
    let xu = table.embedding(u);
    let xv = table.embedding(v);
    let xn = table.embedding(v_neg);
    let wd = w.to_vec();
    let d = wd.len();
    let mut gu = vec![0.0; d];
    let mut gv = vec![0.0; d];
    let mut gw = vec![0.0; d];
    for k in 0..d {
        gu[k] = wd[k] * (xv[k] - xn[k]);
        gv[k] = wd[k] * xu[k];
        gw[k] = xu[k] * (xv[k] - xn[k]);
    }
    g.accumulate(Block::Embedding(u), &gu, 1.0);
    g.accumulate(Block::Embedding(v), &gv, 1.0);
    g.accumulate(Block::Embedding(v_neg), &gv, -1.0);
    g.accumulate(Block::Bilinear, &gw, 1.0);
    g
}

/// Uniform draw from `0..num_senses` excluding `u` and `exclude`. Gives up
/// after a bounded number of rejections.
pub fn sample_ls_negative<R: Rng + ?Sized>(
    num_senses: usize,
    u: SenseId,
    exclude: &[SenseId],
    rng: &mut R,
) -> Option<SenseId> {
    if num_senses <= 1 + exclude.len() {
        return None;
    }
    for _ in 0..64 {
        let s = SenseId(rng.random_range(0..num_senses as u32));
        if s != u && !exclude.contains(&s) {
            return Some(s);
        }
    }
    None
}

/// One ascent step on the ranking objective for seed pair `(u, v)` against `v_neg`.
pub fn ls_step(
    table: &EmbeddingTable,
    w: &BilinearWeights,
    pair: (SenseId, SenseId),
    v_neg: SenseId,
    lr: f64,
) -> Gradient {
    let g = ls_gradient(table, w, pair.0, pair.1, v_neg);
    table.apply(&g, lr);
    w.apply(&g, lr);
    g
}
