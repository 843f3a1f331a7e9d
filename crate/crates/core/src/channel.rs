//! Uncertainty channels: the erasure-style confusion matrices that map a true
//! class label either to itself or to one of a set of uncertain labels.
//!
//! Labels are 0-based. Classes occupy `0..m`, uncertain labels occupy
//! `m..m + m_tilde`. A channel is described by one vector `alpha_u` per
//! uncertain label, where `alpha_u[i]` is the probability that true class `i`
//! is reported as `u`. The confusion matrix is
//!
//! ```text
//! C = diag(1 - sum_u alpha_u) + sum_u alpha_u e_u^T
//! ```
//!
//! so class rows keep their own label with probability `1 - sum_u alpha_u[i]`
//! and uncertain rows are the identity.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A class whose total erasure mass exceeds `1 - SINGULAR_TOL` is treated as
/// fully erased, which makes the channel singular.
pub const SINGULAR_TOL: f64 = 1e-9;

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("probability {value} at {context} is outside [0, 1]")]
    InvalidProbability { value: f64, context: String },
    #[error("invalid channel spec: {0}")]
    InvalidSpec(String),
    #[error("complementary labels need at least 2 classes, got {0}")]
    NoComplementaryLabel(usize),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("channel is singular: class {class} is erased with total probability {mass}")]
    SingularChannel { class: usize, mass: f64 },
    #[error("kappa is infinite: class {class} is erased with total probability {mass}")]
    InfiniteKappa { class: usize, mass: f64 },
    #[error("label {label} is not a class label (m = {m})")]
    LabelOutOfRange { label: usize, m: usize },
}

/// The parameters of an uncertainty channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub m: usize,
    pub m_tilde: usize,
    /// One vector of length `m + m_tilde` per uncertain label.
    pub alphas: Vec<Vec<f64>>,
}

fn check_probability(value: f64, context: impl FnOnce() -> String) -> Result<(), ChannelError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ChannelError::InvalidProbability { value, context: context() })
    }
}

impl ChannelSpec {
    /// The channel that never corrupts anything, with `m_tilde` unused uncertain labels.
    pub fn identity(m: usize, m_tilde: usize) -> Self {
        Self { m, m_tilde, alphas: vec![vec![0.0; m + m_tilde]; m_tilde] }
    }

    pub fn label_count(&self) -> usize {
        self.m + self.m_tilde
    }

    /// Missing labels: one uncertain label `m`, class `y` erased with probability
    /// `alpha_per_class[y]`.
    pub fn missing(alpha_per_class: &[f64]) -> Result<Self, ChannelError> {
        let m = alpha_per_class.len();
        if m == 0 {
            return Err(ChannelError::InvalidSpec("missing-label channel needs m >= 1".into()));
        }
        for (y, &a) in alpha_per_class.iter().enumerate() {
            check_probability(a, || format!("alpha for class {y}"))?;
        }
        let mut alpha = alpha_per_class.to_vec();
        alpha.push(0.0);
        Ok(Self { m, m_tilde: 1, alphas: vec![alpha] })
    }

    /// Missing labels with the same erasure probability for every class.
    pub fn missing_uniform(m: usize, alpha: f64) -> Result<Self, ChannelError> {
        Self::missing(&vec![alpha; m])
    }

    /// Complementary labels: with probability `alpha` a sample of class `j` is
    /// reported as "not class y" (`u_y = m + y`) for `y` uniform over the other
    /// classes.
    pub fn complementary(m: usize, alpha: f64) -> Result<Self, ChannelError> {
        if m < 2 {
            return Err(ChannelError::NoComplementaryLabel(m));
        }
        check_probability(alpha, || "complementary alpha".into())?;
        let share = alpha / (m - 1) as f64;
        let alphas = (0..m)
            .map(|y| {
                let mut a = vec![0.0; 2 * m];
                for (j, slot) in a.iter_mut().take(m).enumerate() {
                    if j != y {
                        *slot = share;
                    }
                }
                a
            })
            .collect();
        Ok(Self { m, m_tilde: m, alphas })
    }

    /// Group labels: one uncertain label per group; a class in group `g` is
    /// reported as `u_g` with probability `alpha`.
    pub fn group(m: usize, partition: &[Vec<usize>], alpha: f64) -> Result<Self, ChannelError> {
        check_probability(alpha, || "group alpha".into())?;
        let mut owner = vec![None; m];
        for (g, group) in partition.iter().enumerate() {
            if group.is_empty() {
                return Err(ChannelError::InvalidPartition(format!("group {g} is empty")));
            }
            for &class in group {
                let slot = owner.get_mut(class).ok_or_else(|| {
                    ChannelError::InvalidPartition(format!("class {class} is out of range (m = {m})"))
                })?;
                if let Some(prev) = slot {
                    return Err(ChannelError::InvalidPartition(format!(
                        "class {class} appears in groups {prev} and {g}"
                    )));
                }
                *slot = Some(g);
            }
        }
        if let Some(class) = owner.iter().position(Option::is_none) {
            return Err(ChannelError::InvalidPartition(format!("class {class} is not covered")));
        }
        let m_tilde = partition.len();
        let alphas = partition
            .iter()
            .map(|group| {
                let mut a = vec![0.0; m + m_tilde];
                for &class in group {
                    a[class] = alpha;
                }
                a
            })
            .collect();
        Ok(Self { m, m_tilde, alphas })
    }

    /// Total erasure mass `sum_u alpha_u[i]` of each class.
    pub fn erasure_mass(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.alphas.iter().map(|a| a[i]).sum()).collect()
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let n = self.label_count();
        if self.m == 0 {
            return Err(ChannelError::InvalidSpec("m must be at least 1".into()));
        }
        if self.alphas.len() != self.m_tilde {
            return Err(ChannelError::InvalidSpec(format!(
                "expected {} alpha vectors, got {}",
                self.m_tilde,
                self.alphas.len()
            )));
        }
        for (u, alpha) in self.alphas.iter().enumerate() {
            if alpha.len() != n {
                return Err(ChannelError::InvalidSpec(format!(
                    "alpha vector {u} has length {}, expected {n}",
                    alpha.len()
                )));
            }
            for (i, &a) in alpha.iter().enumerate() {
                check_probability(a, || format!("alphas[{u}][{i}]"))?;
                if i >= self.m && a != 0.0 {
                    return Err(ChannelError::InvalidSpec(format!(
                        "alphas[{u}][{i}] = {a}: uncertain labels cannot be true labels"
                    )));
                }
            }
        }
        for (i, mass) in self.erasure_mass().into_iter().enumerate() {
            if mass > 1.0 + ROW_SUM_TOL {
                return Err(ChannelError::InvalidSpec(format!(
                    "class {i} has total erasure probability {mass} > 1"
                )));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<ConfusionMatrix, ChannelError> {
        build_confusion(self)
    }
}

/// Row-stochastic confusion matrix with `C[j][u] = P(observed = u | true = j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfusion", into = "RawConfusion")]
pub struct ConfusionMatrix {
    m: usize,
    m_tilde: usize,
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawConfusion {
    m: usize,
    m_tilde: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawConfusion> for ConfusionMatrix {
    type Error = ChannelError;

    fn try_from(raw: RawConfusion) -> Result<Self, Self::Error> {
        let n = raw.m + raw.m_tilde;
        if raw.rows != n || raw.cols != n || raw.data.len() != n * n {
            return Err(ChannelError::InvalidSpec(format!(
                "confusion matrix must be {n}x{n} with {} entries",
                n * n
            )));
        }
        ConfusionMatrix::from_entries(raw.m, raw.m_tilde, raw.data)
    }
}

impl From<ConfusionMatrix> for RawConfusion {
    fn from(c: ConfusionMatrix) -> Self {
        let n = c.dim();
        RawConfusion { m: c.m, m_tilde: c.m_tilde, rows: n, cols: n, data: c.entries }
    }
}

/// `C = diag(1 - sum_u alpha_u) + sum_u alpha_u e_u^T`.
pub fn build_confusion(spec: &ChannelSpec) -> Result<ConfusionMatrix, ChannelError> {
    spec.validate()?;
    let n = spec.label_count();
    let mut entries = vec![0.0; n * n];
    for j in 0..n {
        let mut keep = 1.0;
        for (k, alpha) in spec.alphas.iter().enumerate() {
            let u = spec.m + k;
            entries[j * n + u] += alpha[j];
            keep -= alpha[j];
        }
        // clamp float dust from sums like 0.1 + 0.2 + 0.7
        entries[j * n + j] += keep.max(0.0);
    }
    Ok(ConfusionMatrix { m: spec.m, m_tilde: spec.m_tilde, entries })
}

impl ConfusionMatrix {
    /// Validates that `entries` (row-major) form an uncertainty channel.
    pub fn from_entries(m: usize, m_tilde: usize, entries: Vec<f64>) -> Result<Self, ChannelError> {
        let n = m + m_tilde;
        if m == 0 || entries.len() != n * n {
            return Err(ChannelError::InvalidSpec(format!("expected {n}x{n} entries with m >= 1")));
        }
        for j in 0..n {
            let row = &entries[j * n..(j + 1) * n];
            let mut sum = 0.0;
            for (u, &p) in row.iter().enumerate() {
                check_probability(p, || format!("C[{j}][{u}]"))?;
                let allowed = u == j || (j < m && u >= m);
                if !allowed && p != 0.0 {
                    return Err(ChannelError::InvalidSpec(format!(
                        "C[{j}][{u}] = {p}: classes may only move to uncertain labels"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ChannelError::InvalidSpec(format!("row {j} sums to {sum}")));
            }
        }
        Ok(Self { m, m_tilde, entries })
    }

    pub fn identity(m: usize, m_tilde: usize) -> Self {
        build_confusion(&ChannelSpec::identity(m, m_tilde)).expect("identity channel is valid")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn m_tilde(&self) -> usize {
        self.m_tilde
    }

    /// Side length `m + m_tilde`.
    pub fn dim(&self) -> usize {
        self.m + self.m_tilde
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim() + col]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.dim();
        &self.entries[j * n..(j + 1) * n]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Recovers the channel parameters: `alpha_u[i] = C[i][u]`.
    pub fn spec(&self) -> ChannelSpec {
        let n = self.dim();
        let alphas = (self.m..n)
            .map(|u| (0..n).map(|i| if i < self.m { self.get(i, u) } else { 0.0 }).collect())
            .collect();
        ChannelSpec { m: self.m, m_tilde: self.m_tilde, alphas }
    }

    /// `sum_u alpha_u[i]` for each class, summed over the uncertain columns.
    pub fn erasure_mass(&self) -> Vec<f64> {
        let n = self.dim();
        (0..self.m).map(|i| (self.m..n).map(|u| self.get(i, u)).sum()).collect()
    }

    fn first_singular_class(&self) -> Option<(usize, f64)> {
        self.erasure_mass()
            .into_iter()
            .enumerate()
            .find(|&(_, mass)| mass > 1.0 - SINGULAR_TOL)
    }

    pub fn is_full_rank(&self) -> bool {
        self.first_singular_class().is_none()
    }

    pub fn inverse(&self) -> Result<Vec<f64>, ChannelError> {
        invert_confusion(self)
    }

    pub fn kappa(&self) -> Result<KappaFactors, ChannelError> {
        kappa_factors(self)
    }

    /// Draws an observed label for true class `y` from row `y`.
    pub fn corrupt<R: Rng + ?Sized>(&self, y: usize, rng: &mut R) -> Result<usize, ChannelError> {
        corrupt_label(self, y, rng)
    }

    /// Dense product `self * other`, row-major.
    pub fn matmul(&self, other: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(other.len(), n * n, "matmul dimension mismatch");
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other[k * n + j];
                }
            }
        }
        out
    }
}

/// Closed-form inverse `C^-1 = diag(1 - sum_u alpha_u)^-1 (I - sum_u alpha_u e_u^T)`,
/// returned row-major. No general-purpose elimination is involved.
pub fn invert_confusion(c: &ConfusionMatrix) -> Result<Vec<f64>, ChannelError> {
    if let Some((class, mass)) = c.first_singular_class() {
        return Err(ChannelError::SingularChannel { class, mass });
    }
    let n = c.dim();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for i in 0..c.m {
        let scale = 1.0 / c.get(i, i);
        inv[i * n + i] = scale;
        for u in c.m..n {
            inv[i * n + u] = -c.get(i, u) * scale;
        }
    }
    Ok(inv)
}

/// Multiplicative factors relating divergences before and after the channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaFactors {
    /// Bounds total variation: `max_i 1 / (1 - s_i)`.
    pub kappa: f64,
    /// Bounds the projection-discriminator distance: `max_i (1 + s_i) / (1 - s_i)`.
    pub kappa_prime: f64,
}

impl KappaFactors {
    /// Missing labels with worst-case erasure probability `alpha_max`.
    pub fn missing(alpha_max: f64) -> Result<Self, ChannelError> {
        if alpha_max > 1.0 - SINGULAR_TOL {
            return Err(ChannelError::InfiniteKappa { class: 0, mass: alpha_max });
        }
        Ok(Self { kappa: 1.0 / (1.0 - alpha_max), kappa_prime: (1.0 + alpha_max) / (1.0 - alpha_max) })
    }

    /// The tighter total-variation factor available for complementary labels,
    /// `(m - 1) / (alpha + (1 - alpha)(m - 1))`, paired with `(1 + alpha) / (1 - alpha)`.
    pub fn complementary(m: usize, alpha: f64) -> Result<Self, ChannelError> {
        if m < 2 {
            return Err(ChannelError::NoComplementaryLabel(m));
        }
        if alpha > 1.0 - SINGULAR_TOL {
            return Err(ChannelError::InfiniteKappa { class: 0, mass: alpha });
        }
        let k = (m - 1) as f64;
        Ok(Self { kappa: k / (alpha + (1.0 - alpha) * k), kappa_prime: (1.0 + alpha) / (1.0 - alpha) })
    }
}

/// Maxima are taken over the class rows only: uncertain labels never carry
/// mass in an uncorrupted distribution.
pub fn kappa_factors(c: &ConfusionMatrix) -> Result<KappaFactors, ChannelError> {
    if let Some((class, mass)) = c.first_singular_class() {
        return Err(ChannelError::InfiniteKappa { class, mass });
    }
    let (kappa, kappa_prime) = c.erasure_mass().into_iter().fold((1.0f64, 1.0f64), |(k, kp), s| {
        (k.max(1.0 / (1.0 - s)), kp.max((1.0 + s) / (1.0 - s)))
    });
    Ok(KappaFactors { kappa, kappa_prime })
}

/// Samples an observed label from row `y` of `C` by inverse CDF; consumes one
/// uniform draw.
pub fn corrupt_label<R: Rng + ?Sized>(
    c: &ConfusionMatrix,
    y: usize,
    rng: &mut R,
) -> Result<usize, ChannelError> {
    if y >= c.m {
        return Err(ChannelError::LabelOutOfRange { label: y, m: c.m });
    }
    let r: f64 = rng.random();
    let row = c.row(y);
    let mut acc = 0.0;
    let mut last = y;
    for (u, &p) in row.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        acc += p;
        last = u;
        if r < acc {
            return Ok(u);
        }
    }
    Ok(last)
}
