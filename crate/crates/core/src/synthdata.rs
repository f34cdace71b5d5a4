//! Teacher vectors and margin-conditioned synthetic data.
//!
//! A datum is `x = u e + (I - e e^T) xi` with `e = w0 / sqrt(N)`, `xi`
//! standard normal, and `u` a standard normal field conditioned on the
//! margin: `y u > g` for labelled data, `|u| > g` for unlabelled data.

use alloc::vec::Vec;
use libm::sqrt;
use rand::Rng as _;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::{derive_seed, stream, Rng};
use crate::specfun::{h_tail, h_tail_inv};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("margin must be finite, non-negative and below 35.8, got {0}")]
    Margin(f64),
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("invalid label {0}")]
    Label(i8),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: alloc::vec![0.0; rows * cols] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DataError> {
        if data.len() != rows * cols {
            return Err(DataError::Shape("data length must equal rows * cols"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.cols);
        self.data.extend_from_slice(row);
        self.rows += 1;
    }
}

/// Inner product with four independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Ground-truth weight vector on the sphere `|w0|^2 = N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Teacher {
    w0: Vec<f64>,
}

impl Teacher {
    /// Rescales `w` onto the sphere.
    pub fn from_vec(mut w: Vec<f64>) -> Result<Self, DataError> {
        if w.len() < 2 {
            return Err(DataError::Dimension(w.len()));
        }
        let norm = sqrt(dot(&w, &w));
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(DataError::Shape("teacher must be a finite non-zero vector"));
        }
        let scale = sqrt(w.len() as f64) / norm;
        w.iter_mut().for_each(|x| *x *= scale);
        Ok(Self { w0: w })
    }

    /// Keeps `w` bit for bit after checking `|w|^2 = N` within `1e-9 N`.
    pub fn from_normalized(w: Vec<f64>) -> Result<Self, DataError> {
        if w.len() < 2 {
            return Err(DataError::Dimension(w.len()));
        }
        let n = w.len() as f64;
        let norm2 = dot(&w, &w);
        if !((norm2 - n).abs() <= 1e-9 * n) {
            return Err(DataError::Shape("teacher must satisfy |w|^2 = N"));
        }
        Ok(Self { w0: w })
    }

    pub fn n(&self) -> usize {
        self.w0.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.w0
    }

    /// Projection `x . w0 / sqrt(N)`.
    pub fn field(&self, x: &[f64]) -> f64 {
        dot(x, &self.w0) / sqrt(self.n() as f64)
    }
}

/// `n`-dimensional teacher drawn uniformly from the sphere.
pub fn sample_teacher(n: usize, seed: u64) -> Result<Teacher, DataError> {
    if n < 2 {
        return Err(DataError::Dimension(n));
    }
    let mut rng = stream(seed, 0);
    let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Teacher::from_vec(w)
}

/// Smallest tail mass `H(g)` the sampler accepts; near `g = 35.8`.
const MIN_TAIL: f64 = 1e-280;

fn check_margin(g: f64) -> Result<(), DataError> {
    if g.is_finite() && g >= 0.0 && h_tail(g) >= MIN_TAIL {
        Ok(())
    } else {
        Err(DataError::Margin(g))
    }
}

/// Standard normal conditioned on `t > g`, by inversion of the upper tail.
fn truncated_tail(rng: &mut Rng, g: f64, hg: f64) -> f64 {
    loop {
        // p in (0, 1]
        let p = 1.0 - rng.random::<f64>();
        if let Ok(t) = h_tail_inv(p * hg) {
            if t > g {
                return t;
            }
        }
    }
}

/// One datum with field `u` along the teacher, written into `x`.
fn assemble(rng: &mut Rng, teacher: &Teacher, u: f64, x: &mut [f64]) {
    let n = teacher.n();
    let inv = 1.0 / sqrt(n as f64);
    for xi in x.iter_mut() {
        *xi = rng.sample(StandardNormal);
    }
    let along = dot(x, teacher.weights()) * inv;
    for (xi, wi) in x.iter_mut().zip(teacher.weights()) {
        *xi += (u - along) * wi * inv;
    }
}

/// Draws datum `index` of a stream: `(label, features)`. The label is
/// `+-1` with equal probability and `y u > g` holds for the realized field.
fn draw(teacher: &Teacher, g: f64, hg: f64, seed: u64, index: u64, x: &mut [f64]) -> i8 {
    let mut rng = stream(seed, index);
    loop {
        let y: i8 = if rng.random::<bool>() { 1 } else { -1 };
        let u = f64::from(y) * truncated_tail(&mut rng, g, hg);
        assemble(&mut rng, teacher, u, x);
        // guard the strict margin against rounding in the projection
        if f64::from(y) * teacher.field(x) > g {
            return y;
        }
    }
}

/// `count` labelled data under margin `g`; datum `i` is drawn from stream
/// `first_index + i` of `seed`.
pub fn sample_labeled(
    teacher: &Teacher,
    g: f64,
    count: usize,
    seed: u64,
    first_index: u64,
) -> Result<(Matrix, Vec<i8>), DataError> {
    check_margin(g)?;
    let n = teacher.n();
    let hg = h_tail(g);
    let mut features = Matrix { rows: 0, cols: n, data: Vec::with_capacity(count * n) };
    let mut labels = Vec::with_capacity(count);
    let mut x = alloc::vec![0.0; n];
    for i in 0..count as u64 {
        labels.push(draw(teacher, g, hg, seed, first_index + i, &mut x));
        features.push_row(&x);
    }
    Ok((features, labels))
}

/// `count` unlabelled data under margin `g`: as [`sample_labeled`] with the
/// label discarded, so `|u| > g` with either sign equally likely.
pub fn sample_unlabeled(
    teacher: &Teacher,
    g: f64,
    count: usize,
    seed: u64,
    first_index: u64,
) -> Result<Matrix, DataError> {
    sample_labeled(teacher, g, count, seed, first_index).map(|(f, _)| f)
}

/// A synthetic instance. Labelled rows come first; the teacher is kept for
/// evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    labeled: Matrix,
    labels: Vec<i8>,
    unlabeled: Matrix,
    margin_g: f64,
    teacher: Teacher,
    seed: u64,
}

/// Stream tags for the three random sources of a dataset.
const TAG_TEACHER: u64 = 0x7465_6163;
const TAG_LABELED: u64 = 0x6c61_6265;
const TAG_UNLABELED: u64 = 0x756e_6c61;

impl Dataset {
    /// Teacher, `l` labelled and `u` unlabelled data from one master seed.
    pub fn generate(n: usize, g: f64, l: usize, u: usize, seed: u64) -> Result<Self, DataError> {
        check_margin(g)?;
        let teacher = sample_teacher(n, derive_seed(seed, TAG_TEACHER))?;
        Self::generate_for(teacher, g, l, u, seed)
    }

    /// As [`Dataset::generate`] with a given teacher.
    pub fn generate_for(teacher: Teacher, g: f64, l: usize, u: usize, seed: u64) -> Result<Self, DataError> {
        let (labeled, labels) = sample_labeled(&teacher, g, l, derive_seed(seed, TAG_LABELED), 0)?;
        let unlabeled = sample_unlabeled(&teacher, g, u, derive_seed(seed, TAG_UNLABELED), 0)?;
        Ok(Self { labeled, labels, unlabeled, margin_g: g, teacher, seed })
    }

    /// Assembles a dataset from parts, checking shapes and labels.
    pub fn from_parts(
        labeled: Matrix,
        labels: Vec<i8>,
        unlabeled: Matrix,
        margin_g: f64,
        teacher: Teacher,
        seed: u64,
    ) -> Result<Self, DataError> {
        check_margin(margin_g)?;
        let n = teacher.n();
        if labeled.cols != n || unlabeled.cols != n {
            return Err(DataError::Shape("feature width must equal the teacher dimension"));
        }
        if labels.len() != labeled.rows {
            return Err(DataError::Shape("one label per labelled row"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(DataError::Label(bad));
        }
        Ok(Self { labeled, labels, unlabeled, margin_g, teacher, seed })
    }

    /// Appends `count` labelled data continuing this dataset's labelled
    /// stream, so growing in steps reproduces a single large draw.
    pub fn append_labeled(&mut self, count: usize) -> Result<(), DataError> {
        let first = self.labeled.rows as u64;
        let (more, labels) =
            sample_labeled(&self.teacher, self.margin_g, count, derive_seed(self.seed, TAG_LABELED), first)?;
        self.labeled.data.extend_from_slice(&more.data);
        self.labeled.rows += more.rows;
        self.labels.extend(labels);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.teacher.n()
    }

    pub fn l_count(&self) -> usize {
        self.labeled.rows
    }

    pub fn u_count(&self) -> usize {
        self.unlabeled.rows
    }

    pub fn margin_g(&self) -> f64 {
        self.margin_g
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn labeled(&self) -> &Matrix {
        &self.labeled
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn unlabeled(&self) -> &Matrix {
        &self.unlabeled
    }

    pub fn teacher(&self) -> &Teacher {
        &self.teacher
    }

    /// Row `mu` counting labelled rows first.
    pub fn row(&self, mu: usize) -> &[f64] {
        if mu < self.labeled.rows {
            self.labeled.row(mu)
        } else {
            self.unlabeled.row(mu - self.labeled.rows)
        }
    }

    /// Number of data violating the margin constraint.
    pub fn margin_violations(&self) -> usize {
        let g = self.margin_g;
        let lab = self
            .labeled
            .row_iter()
            .zip(&self.labels)
            .filter(|(x, &y)| !(f64::from(y) * self.teacher.field(x) > g))
            .count();
        let unl = self.unlabeled.row_iter().filter(|x| !(self.teacher.field(x).abs() > g)).count();
        lab + unl
    }
}
