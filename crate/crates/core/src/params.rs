//! Parameter storage shared by training workers, and sparse gradients.
//!
//! Every scalar lives in its own `AtomicU64` and is read and written with
//! relaxed ordering: concurrent workers never observe a torn `f64`, but
//! read-modify-write updates from different workers may be lost. That is the
//! usual contract for lock-free asynchronous SGD. With a single worker the
//! arithmetic is exactly that of plain `f64` storage.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::vocab::SenseId;

pub struct ParamVec {
    data: Box<[AtomicU64]>,
}

impl ParamVec {
    pub fn zeros(len: usize) -> Self {
        Self::from_vec(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self::from_vec(vec![value; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVec {
            data: values.into_iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        f64::from_bits(self.data[i].load(Ordering::Relaxed))
    }

    #[inline]
    pub fn set(&self, i: usize, value: f64) {
        self.data[i].store(value.to_bits(), Ordering::Relaxed);
    }

    #[inline]
    pub fn add(&self, i: usize, delta: f64) {
        self.set(i, self.get(i) + delta);
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    pub fn read_into(&self, offset: usize, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.get(offset + k);
        }
    }

    pub fn add_scaled(&self, offset: usize, values: &[f64], scale: f64) {
        for (k, &v) in values.iter().enumerate() {
            self.add(offset + k, scale * v);
        }
    }

    pub fn all_finite(&self) -> bool {
        (0..self.len()).all(|i| self.get(i).is_finite())
    }

    pub fn norm(&self) -> f64 {
        (0..self.len()).map(|i| self.get(i).powi(2)).sum::<f64>().sqrt()
    }
}

impl Clone for ParamVec {
    fn clone(&self) -> Self {
        Self::from_vec(self.to_vec())
    }
}

/// Bitwise equality, so `NaN == NaN` and `0.0 != -0.0`.
impl PartialEq for ParamVec {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len()
            && (0..self.len()).all(|i| self.get(i).to_bits() == other.get(i).to_bits())
    }
}

impl fmt::Debug for ParamVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ParamVec(len={})", self.len())
    }
}

/// Row-major matrix over [`ParamVec`].
#[derive(Clone, PartialEq, Debug)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: ParamVec,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: ParamVec::zeros(rows * cols),
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols, "matrix shape mismatch");
        Matrix {
            rows,
            cols,
            data: ParamVec::from_vec(values),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data.get(r * self.cols + c)
    }

    #[inline]
    pub fn set(&self, r: usize, c: usize, v: f64) {
        self.data.set(r * self.cols + c, v)
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.data.read_into(r * self.cols, &mut out);
        out
    }

    pub fn add_to_row(&self, r: usize, values: &[f64], scale: f64) {
        debug_assert_eq!(values.len(), self.cols);
        self.data.add_scaled(r * self.cols, values, scale);
    }

    pub fn data(&self) -> &ParamVec {
        &self.data
    }
}

/// A dense parameter block touched by a gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Block {
    /// Row of the embedding table `x`.
    Embedding(SenseId),
    /// Row of the context table `c`.
    Context(SenseId),
    /// Diagonal of the bilinear score matrix.
    Bilinear,
}

/// Sparse gradient of one stochastic objective term, together with the value
/// of that term. Entries for repeated blocks are accumulated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient {
    pub objective: f64,
    dense: Vec<(Block, Vec<f64>)>,
    classifier: Vec<(usize, f64)>,
}

impl Gradient {
    pub fn new(objective: f64) -> Self {
        Gradient {
            objective,
            ..Default::default()
        }
    }

    pub fn accumulate(&mut self, block: Block, values: &[f64], scale: f64) {
        let slot = match self.dense.iter().position(|(b, _)| *b == block) {
            Some(i) => &mut self.dense[i].1,
            None => {
                self.dense.push((block, vec![0.0; values.len()]));
                &mut self.dense.last_mut().expect("just pushed").1
            }
        };
        for (s, &v) in slot.iter_mut().zip(values) {
            *s += scale * v;
        }
    }

    pub fn accumulate_classifier(&mut self, index: usize, value: f64) {
        match self.classifier.iter_mut().find(|(i, _)| *i == index) {
            Some((_, v)) => *v += value,
            None => self.classifier.push((index, value)),
        }
    }

    pub fn dense(&self) -> &[(Block, Vec<f64>)] {
        &self.dense
    }

    pub fn block(&self, block: Block) -> Option<&[f64]> {
        self.dense
            .iter()
            .find(|(b, _)| *b == block)
            .map(|(_, v)| v.as_slice())
    }

    /// Classifier weight entries, as `(index, value)`.
    pub fn classifier(&self) -> &[(usize, f64)] {
        &self.classifier
    }

    pub fn is_zero(&self) -> bool {
        self.dense.iter().all(|(_, v)| v.iter().all(|&g| g == 0.0))
            && self.classifier.iter().all(|&(_, g)| g == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.objective.is_finite()
            && self.dense.iter().all(|(_, v)| v.iter().all(|g| g.is_finite()))
            && self.classifier.iter().all(|(_, g)| g.is_finite())
    }
}
