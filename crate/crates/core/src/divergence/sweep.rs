//! Randomized sweeps over the bound verifiers.

use super::random::{random_features, random_instance_with, random_joint, random_matched_pair, InstanceLimits};
use super::{
    verify_corollaries, verify_theorem1, verify_theorem2, BoundReport, CorollaryKind, DivergenceError,
    VerifyOptions,
};
use crate::channel::ConfusionMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub trials: u64,
    pub seed: u64,
    pub limits: InstanceLimits,
    /// Replace every random channel by the identity, so every kappa is 1.
    pub force_identity: bool,
    pub verify: VerifyOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            trials: 1000,
            seed: 0,
            limits: InstanceLimits::default(),
            force_identity: false,
            verify: VerifyOptions::default(),
        }
    }
}

/// One line of a sweep report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub instance_seed: u64,
    pub name: String,
    /// `[lhs, mid, rhs]`.
    pub chain: [f64; 3],
    pub kappa: f64,
    pub passed: bool,
    pub slack: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub equality: Option<bool>,
    /// Non-gating entries are recorded but do not decide the sweep outcome.
    pub gating: bool,
}

impl SweepEntry {
    fn new(instance_seed: u64, report: BoundReport, gating: bool) -> Self {
        Self {
            instance_seed,
            name: report.name,
            chain: [report.lhs, report.mid, report.rhs],
            kappa: report.kappa_used,
            passed: report.passed,
            slack: report.slack,
            equality: report.equality,
            gating,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub entries: Vec<SweepEntry>,
}

impl SweepSummary {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().filter(|e| e.gating).all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepEntry> {
        self.entries.iter().filter(|e| e.gating && !e.passed)
    }

    /// Gating entry with the smallest slack.
    pub fn worst(&self) -> Option<&SweepEntry> {
        self.entries.iter().filter(|e| e.gating).min_by(|a, b| a.slack.total_cmp(&b.slack))
    }

    /// Worst slack among gating entries whose name starts with `prefix`.
    pub fn worst_slack(&self, prefix: &str) -> Option<f64> {
        self.entries
            .iter()
            .filter(|e| e.gating && e.name.starts_with(prefix))
            .map(|e| e.slack)
            .min_by(f64::total_cmp)
    }
}

/// Per trial `i` (instance seed `seed + i`): the TV, JS and projection chains
/// on a random instance, the missing-label chains on a random missing-label
/// channel, the complementary-label chains on matched X-marginals and, as
/// informational entries, the complementary-label chains on unmatched marginals.
pub fn run_bound_sweep(opts: &SweepOptions) -> Result<SweepSummary, DivergenceError> {
    opts.limits.validate().map_err(DivergenceError::Domain)?;
    let mut entries = Vec::new();
    for trial in 0..opts.trials {
        let instance_seed = opts.seed.wrapping_add(trial);
        let inst = random_instance_with(instance_seed, &opts.limits);
        let channel =
            if opts.force_identity { ConfusionMatrix::identity(inst.m, inst.m_tilde) } else { inst.channel.clone() };
        let (tv, js) = verify_theorem1(&inst.p, &inst.q, &channel, &opts.verify)?;
        let nn = verify_theorem2(&inst.p, &inst.q, &channel, &inst.features, &opts.verify)?;
        entries.extend([tv, js, nn].into_iter().map(|r| SweepEntry::new(instance_seed, r, true)));

        // corollary instances draw from a second stream of the same seed
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
        rng.set_stream(1);
        let (s, m, d) = (inst.support, inst.m, inst.features.dim());
        let draw_alpha = |rng: &mut ChaCha8Rng| if opts.force_identity { 0.0 } else { rng.random::<f64>() * 0.9 };

        let alphas: Vec<f64> = (0..m).map(|_| draw_alpha(&mut rng)).collect();
        let p = random_joint(&mut rng, s, m + 1, m);
        let q = random_joint(&mut rng, s, m + 1, m);
        let features = random_features(&mut rng, s, d);
        for r in verify_corollaries(&CorollaryKind::Missing { alphas }, &p, &q, &features, &opts.verify)? {
            entries.push(SweepEntry::new(instance_seed, r, true));
        }

        let kind = CorollaryKind::Complementary { m, alpha: draw_alpha(&mut rng) };
        let (p, q) = random_matched_pair(&mut rng, s, m, 2 * m);
        for mut r in verify_corollaries(&kind, &p, &q, &features, &opts.verify)? {
            r.name.push_str("_matched");
            entries.push(SweepEntry::new(instance_seed, r, true));
        }
        let p = random_joint(&mut rng, s, 2 * m, m);
        let q = random_joint(&mut rng, s, 2 * m, m);
        for mut r in verify_corollaries(&kind, &p, &q, &features, &opts.verify)? {
            r.name.push_str("_unmatched");
            entries.push(SweepEntry::new(instance_seed, r, false));
        }
    }
    Ok(SweepSummary { entries })
}
