//! Numerical checks of the divergence sandwich bounds
//! `d(P~, Q~) <= d(P, Q) <= kappa * g(d(P~, Q~))`.

use super::{js, projection_nn_distance, push_through, tv, DiscreteJoint, DivergenceError, FeatureMap};
use crate::channel::{ChannelSpec, ConfusionMatrix, KappaFactors};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Allowed relative violation of each inequality.
    pub tol: f64,
    /// Tolerance for recording an equality as holding.
    pub equality_tol: f64,
    /// Multiplies every kappa before it is used. Anything other than 1 is a
    /// fault injection used to exercise the failure path of the harness.
    pub kappa_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { tol: 1e-12, equality_tol: 1e-9, kappa_scale: 1.0 }
    }
}

/// One verified chain `lhs <= mid <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub lhs: f64,
    pub mid: f64,
    pub rhs: f64,
    pub kappa_used: f64,
    pub passed: bool,
    /// `min(mid - lhs, rhs - mid)` divided by `max(1, |lhs|, |mid|, |rhs|)`.
    pub slack: f64,
    /// Whether `mid == rhs` within the equality tolerance, for chains whose
    /// upper bound is claimed to be tight.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub equality: Option<bool>,
}

impl BoundReport {
    fn chain(name: &str, lhs: f64, mid: f64, rhs: f64, kappa_used: f64, tol: f64) -> Self {
        let scale = 1f64.max(lhs.abs()).max(mid.abs()).max(rhs.abs());
        let slack = (mid - lhs).min(rhs - mid) / scale;
        Self { name: name.to_owned(), lhs, mid, rhs, kappa_used, passed: slack >= -tol, slack, equality: None }
    }
}

fn check_preconditions(p: &DiscreteJoint, q: &DiscreteJoint, c: &ConfusionMatrix) -> Result<(), DivergenceError> {
    for (joint, which) in [(p, "P"), (q, "Q")] {
        if joint.labels() != c.dim() {
            return Err(DivergenceError::ShapeMismatch(format!(
                "{which} has {} labels, channel has {}",
                joint.labels(),
                c.dim()
            )));
        }
        if !joint.is_uncorrupted(c.m()) {
            return Err(DivergenceError::NotUncorrupted(which));
        }
    }
    if p.support() != q.support() {
        return Err(DivergenceError::ShapeMismatch("P and Q have different supports".into()));
    }
    Ok(())
}

fn tv_js_chains(
    p: &DiscreteJoint,
    q: &DiscreteJoint,
    c: &ConfusionMatrix,
    kappa: f64,
    prefix: &str,
    opts: &VerifyOptions,
) -> Result<(BoundReport, BoundReport), DivergenceError> {
    let (pt, qt) = (push_through(p, c)?, push_through(q, c)?);
    let kappa = kappa * opts.kappa_scale;
    let tv_pushed = tv(&pt, &qt)?;
    let tv_true = tv(p, q)?;
    let js_pushed = js(&pt, &qt)?;
    let js_true = js(p, q)?;
    Ok((
        BoundReport::chain(&format!("{prefix}_tv"), tv_pushed, tv_true, kappa * tv_pushed, kappa, opts.tol),
        BoundReport::chain(
            &format!("{prefix}_js"),
            js_pushed,
            js_true,
            kappa * (8.0 * js_pushed).sqrt(),
            kappa,
            opts.tol,
        ),
    ))
}

fn projection_chain(
    p: &DiscreteJoint,
    q: &DiscreteJoint,
    c: &ConfusionMatrix,
    features: &FeatureMap,
    kappa_prime: f64,
    name: &str,
    opts: &VerifyOptions,
) -> Result<BoundReport, DivergenceError> {
    let (pt, qt) = (push_through(p, c)?, push_through(q, c)?);
    let kappa_prime = kappa_prime * opts.kappa_scale;
    let pushed = projection_nn_distance(&pt, &qt, features)?;
    let truth = projection_nn_distance(p, q, features)?;
    Ok(BoundReport::chain(name, pushed, truth, kappa_prime * pushed, kappa_prime, opts.tol))
}

/// TV chain `tv(P~,Q~) <= tv(P,Q) <= kappa tv(P~,Q~)` and JS chain
/// `js(P~,Q~) <= js(P,Q) <= kappa sqrt(8 js(P~,Q~))`.
pub fn verify_theorem1(
    p: &DiscreteJoint,
    q: &DiscreteJoint,
    c: &ConfusionMatrix,
    opts: &VerifyOptions,
) -> Result<(BoundReport, BoundReport), DivergenceError> {
    check_preconditions(p, q, c)?;
    let kappa = c.kappa()?.kappa;
    tv_js_chains(p, q, c, kappa, "theorem1", opts)
}

/// Projection-distance chain `d(P~,Q~) <= d(P,Q) <= kappa' d(P~,Q~)`.
pub fn verify_theorem2(
    p: &DiscreteJoint,
    q: &DiscreteJoint,
    c: &ConfusionMatrix,
    features: &FeatureMap,
    opts: &VerifyOptions,
) -> Result<BoundReport, DivergenceError> {
    check_preconditions(p, q, c)?;
    let kappa_prime = c.kappa()?.kappa_prime;
    projection_chain(p, q, c, features, kappa_prime, "theorem2", opts)
}

/// The two special channels with closed-form kappa factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorollaryKind {
    /// Missing labels with per-class erasure probabilities.
    Missing { alphas: Vec<f64> },
    /// Complementary labels over `m` classes.
    Complementary { m: usize, alpha: f64 },
}

impl CorollaryKind {
    pub fn channel(&self) -> Result<ConfusionMatrix, DivergenceError> {
        let spec = match self {
            CorollaryKind::Missing { alphas } => ChannelSpec::missing(alphas)?,
            CorollaryKind::Complementary { m, alpha } => ChannelSpec::complementary(*m, *alpha)?,
        };
        Ok(spec.build()?)
    }

    /// Kappa factors from the closed-form corollary expressions, not from `C`.
    pub fn kappas(&self) -> Result<KappaFactors, DivergenceError> {
        Ok(match self {
            CorollaryKind::Missing { alphas } => {
                KappaFactors::missing(alphas.iter().copied().fold(0.0, f64::max))?
            }
            CorollaryKind::Complementary { m, alpha } => KappaFactors::complementary(*m, *alpha)?,
        })
    }
}

/// Re-runs the TV, JS and projection chains with the corollary-specific kappa
/// factors. For complementary labels the TV report also records whether
/// `tv(P,Q) = kappa tv(P~,Q~)` holds on this instance.
pub fn verify_corollaries(
    kind: &CorollaryKind,
    p: &DiscreteJoint,
    q: &DiscreteJoint,
    features: &FeatureMap,
    opts: &VerifyOptions,
) -> Result<Vec<BoundReport>, DivergenceError> {
    let c = kind.channel()?;
    check_preconditions(p, q, &c)?;
    let kappas = kind.kappas()?;
    let prefix = match kind {
        CorollaryKind::Missing { .. } => "corollary1",
        CorollaryKind::Complementary { .. } => "corollary2",
    };
    let (mut tv_report, js_report) = tv_js_chains(p, q, &c, kappas.kappa, prefix, opts)?;
    if let CorollaryKind::Complementary { .. } = kind {
        let gap = (tv_report.rhs - tv_report.mid).abs();
        tv_report.equality = Some(gap <= opts.equality_tol * 1f64.max(tv_report.mid));
    }
    let nn_report = projection_chain(p, q, &c, features, kappas.kappa_prime, &format!("{prefix}_nn"), opts)?;
    Ok(vec![tv_report, js_report, nn_report])
}

/// Sample size `(c p / eps^2) ln(p L / eps)` for the finite-sample guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBound {
    /// The real-valued bound.
    pub bound: f64,
    /// Smallest integer at least `bound`.
    pub n: u64,
}

pub fn sample_complexity_bound(
    params: usize,
    lipschitz: f64,
    eps: f64,
    constant: f64,
) -> Result<SampleBound, DivergenceError> {
    if params == 0 || !(lipschitz > 0.0 && eps > 0.0 && constant > 0.0) {
        return Err(DivergenceError::Domain("all inputs must be positive".into()));
    }
    let p = params as f64;
    let ratio = p * lipschitz / eps;
    if ratio <= 1.0 {
        return Err(DivergenceError::Domain(format!("p L / eps = {ratio} must exceed 1")));
    }
    let bound = constant * p / (eps * eps) * ratio.ln();
    Ok(SampleBound { bound, n: bound.ceil() as u64 })
}

/// Checks that `T V` stays inside the unit box when `V` does and every row of
/// `T` has absolute sum at most one. `t` is `labels x labels`, `v` is
/// `labels x d`, both row-major.
pub fn assumption1_closure_check(t: &[f64], v: &[f64], labels: usize, d: usize) -> Result<bool, DivergenceError> {
    if t.len() != labels * labels || v.len() != labels * d {
        return Err(DivergenceError::ShapeMismatch(format!(
            "expected T {labels}x{labels} and V {labels}x{d}"
        )));
    }
    if let Some(bad) = v.iter().find(|x| !(x.abs() <= 1.0)) {
        return Err(DivergenceError::Domain(format!("V entry {bad} is outside [-1, 1]")));
    }
    for (i, row) in t.chunks(labels).enumerate() {
        let norm: f64 = row.iter().map(|x| x.abs()).sum();
        if !(norm <= 1.0 + 1e-12) {
            return Err(DivergenceError::Domain(format!("row {i} of T has absolute sum {norm} > 1")));
        }
    }
    let mut max_abs = 0.0f64;
    for i in 0..labels {
        for j in 0..d {
            let entry: f64 = (0..labels).map(|k| t[i * labels + k] * v[k * d + j]).sum();
            max_abs = max_abs.max(entry.abs());
        }
    }
    Ok(max_abs <= 1.0 + 1e-12)
}
