//! Training configuration, the alternating update loop and checkpoints.

use super::loss::{evaluate, evaluate_generator, lambda_terms, rcgan_terms, sample_fakes, GenObjective, LossTerms, Phi};
use super::model::{Generator, ProjectionDiscriminator};
use super::nn::Activation;
use super::GanError;
use crate::channel::ConfusionMatrix;
use crate::data::Dataset;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain SGD with heavy-ball momentum.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub phi: Phi,
    pub lambda: f64,
    pub lr_disc: f64,
    pub lr_gen: f64,
    pub momentum: f64,
    pub optimizer: Optimizer,
    pub gen_objective: GenObjective,
    pub batch_size: usize,
    pub epochs: usize,
    /// Overrides the default `ceil(n / batch_size)` steps per epoch.
    pub steps_per_epoch: Option<usize>,
    pub clip: f64,
    pub latent_dim: usize,
    pub seed: u64,
    pub gen_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub gen_activation: Activation,
    pub disc_activation: Activation,
    /// Output activation of the feature nets.
    pub feature_activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            phi: Phi::Log,
            lambda: 0.1,
            lr_disc: 0.1,
            lr_gen: 0.1,
            momentum: 0.5,
            optimizer: Optimizer::Sgd,
            gen_objective: GenObjective::Minimax,
            batch_size: 64,
            epochs: 30,
            steps_per_epoch: None,
            clip: 1.0,
            latent_dim: 4,
            seed: 0,
            gen_hidden: vec![64, 64],
            disc_hidden: vec![64],
            feature_dim: 16,
            gen_activation: Activation::Tanh,
            disc_activation: Activation::LeakyRelu,
            feature_activation: Activation::Identity,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |msg: String| Err(GanError::Config(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        for (name, lr) in [("lr_disc", self.lr_disc), ("lr_gen", self.lr_gen)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {lr}"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return bad(format!("clip must be positive, got {}", self.clip));
        }
        for (name, v) in [("batch_size", self.batch_size), ("latent_dim", self.latent_dim), ("feature_dim", self.feature_dim)]
        {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.steps_per_epoch == Some(0) {
            return bad("steps_per_epoch must be positive".into());
        }
        if self.gen_hidden.contains(&0) || self.disc_hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    /// `L` on the discriminator batch, before the update.
    pub loss_d: f64,
    /// Generator objective on the generator batch, before the update.
    pub loss_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

/// All parameters as one flat array plus the layout needed to rebuild the
/// networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub data_dim: usize,
    pub m: usize,
    pub label_count: usize,
    /// Completed epochs.
    pub epoch: usize,
    pub params: Vec<f64>,
    pub manifest: Vec<ParamBlock>,
}

impl Checkpoint {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), GanError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, GanError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Rebuilds both networks and checks the stored layout against them.
    pub fn restore(&self) -> Result<(Generator, ProjectionDiscriminator), GanError> {
        let mut trainer = Trainer::new(self.config.clone(), self.data_dim, self.m, self.label_count)?;
        let expected = trainer.manifest();
        if expected != self.manifest {
            return Err(GanError::Shape("checkpoint manifest does not match the configured architecture".into()));
        }
        let n_g = trainer.generator.params().len();
        if self.params.len() != n_g + trainer.discriminator.params().len() {
            return Err(GanError::Shape(format!("checkpoint has {} parameters", self.params.len())));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(GanError::Shape("checkpoint contains non-finite parameters".into()));
        }
        trainer.generator.set_params(&self.params[..n_g]);
        trainer.discriminator.set_params(&self.params[n_g..]);
        Ok((trainer.generator, trainer.discriminator))
    }
}

/// Networks, optimizer state and the random stream of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub generator: Generator,
    pub discriminator: ProjectionDiscriminator,
    m: usize,
    vel_g: Vec<f64>,
    vel_d: Vec<f64>,
    rng: ChaCha8Rng,
    epoch: usize,
    step: usize,
}

impl Trainer {
    /// Initializes both networks from `cfg.seed`.
    pub fn new(cfg: TrainConfig, data_dim: usize, m: usize, label_count: usize) -> Result<Self, GanError> {
        cfg.validate()?;
        if m == 0 || label_count < m || data_dim == 0 {
            return Err(GanError::Shape(format!("data_dim {data_dim}, m {m}, label_count {label_count}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let generator =
            Generator::new(cfg.latent_dim, m, label_count, &cfg.gen_hidden, data_dim, cfg.gen_activation, &mut rng);
        let discriminator = ProjectionDiscriminator::new(
            data_dim,
            label_count,
            &cfg.disc_hidden,
            cfg.feature_dim,
            cfg.disc_activation,
            cfg.feature_activation,
            cfg.clip,
            &mut rng,
        );
        Ok(Self {
            vel_g: vec![0.0; generator.params().len()],
            vel_d: vec![0.0; discriminator.params().len()],
            cfg,
            generator,
            discriminator,
            m,
            rng,
            epoch: 0,
            step: 0,
        })
    }

    pub fn manifest(&self) -> Vec<ParamBlock> {
        let mut out = Vec::new();
        let net = self.generator.net();
        for (l, (offset, _)) in net.layer_ranges().into_iter().enumerate() {
            let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
            out.push(ParamBlock { name: format!("generator.{l}.weight"), offset, shape: vec![n_out, n_in] });
            out.push(ParamBlock { name: format!("generator.{l}.bias"), offset: offset + n_in * n_out, shape: vec![n_out] });
        }
        let base = self.generator.params().len();
        for (name, offset, shape) in self.discriminator.blocks() {
            out.push(ParamBlock { name: format!("discriminator.{name}"), offset: base + offset, shape });
        }
        out
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut params = self.generator.params().to_vec();
        params.extend_from_slice(self.discriminator.params());
        Checkpoint {
            config: self.cfg.clone(),
            data_dim: self.discriminator.input_dim(),
            m: self.m,
            label_count: self.discriminator.label_count(),
            epoch: self.epoch,
            params,
            manifest: self.manifest(),
        }
    }

    fn sgd(params: &mut [f64], vel: &mut [f64], grad: &[f64], lr: f64, momentum: f64, ascend: bool) {
        let sign = if ascend { lr } else { -lr };
        for ((p, v), g) in params.iter_mut().zip(vel.iter_mut()).zip(grad) {
            *v = momentum * *v + g;
            *p += sign * *v;
        }
    }

    fn diverged(&self, what: &'static str, good: &Checkpoint) -> GanError {
        GanError::Diverged { epoch: self.epoch, step: self.step, what, checkpoint: Box::new(good.clone()) }
    }

    /// Discriminator ascent on `d_terms`, clipping, then generator descent on
    /// fake terms produced by `g_fakes`. On a non-finite loss or parameter the
    /// networks are restored to their state before the step.
    fn alternate(
        &mut self,
        d_terms: LossTerms,
        g_fakes: impl FnOnce(&mut ChaCha8Rng) -> Result<Vec<super::FakeTerm>, GanError>,
    ) -> Result<StepLosses, GanError> {
        let good = self.checkpoint();
        let (lr_d, lr_g, momentum, phi) = (self.cfg.lr_disc, self.cfg.lr_gen, self.cfg.momentum, self.cfg.phi);
        let d_eval = evaluate(&d_terms, &self.generator, &self.discriminator, phi, true, false);
        if !d_eval.value.is_finite() {
            return Err(self.diverged("discriminator loss", &good));
        }
        let grad_d = d_eval.grad_d.expect("requested");
        let vel_d = self.vel_d.clone();
        Self::sgd(self.discriminator.params_mut(), &mut self.vel_d, &grad_d, lr_d, momentum, true);
        self.discriminator.clip_projection();
        if !self.discriminator.all_finite() {
            self.discriminator.set_params(&good.params[self.generator.params().len()..]);
            self.vel_d = vel_d;
            return Err(self.diverged("discriminator parameter", &good));
        }
        let fakes = g_fakes(&mut self.rng)?;
        let g_eval = evaluate_generator(&fakes, &self.generator, &self.discriminator, phi, self.cfg.gen_objective);
        let grad_g = g_eval.grad_g.expect("requested");
        if !g_eval.value.is_finite() || grad_g.iter().any(|g| !g.is_finite()) {
            self.restore(&good, vel_d);
            return Err(self.diverged("generator loss", &good));
        }
        Self::sgd(self.generator.params_mut(), &mut self.vel_g, &grad_g, lr_g, momentum, false);
        if !self.generator.all_finite() {
            self.restore(&good, vel_d);
            return Err(self.diverged("generator parameter", &good));
        }
        self.step += 1;
        Ok(StepLosses { loss_d: d_eval.value, loss_g: g_eval.value })
    }

    fn restore(&mut self, good: &Checkpoint, vel_d: Vec<f64>) {
        let n_g = self.generator.params().len();
        self.generator.set_params(&good.params[..n_g]);
        self.discriminator.set_params(&good.params[n_g..]);
        self.vel_d = vel_d;
    }

    /// One corrupted-label step: real pairs are observed `(x, label)`; each
    /// generated sample draws `y ~ priors` and an observed label from row `y`
    /// of `channel`, freshly for the discriminator and generator batches.
    pub fn rcgan_disc_gen_step(
        &mut self,
        real: &[(&[f64], usize)],
        channel: &ConfusionMatrix,
        priors: &[f64],
    ) -> Result<StepLosses, GanError> {
        let latent = self.cfg.latent_dim;
        let n = real.len().max(1);
        let d_terms = rcgan_terms(real, channel, priors, latent, n, &mut self.rng)?;
        self.alternate(d_terms, |rng| {
            sample_fakes(n, latent, priors, 1.0 / n as f64, rng, |y, rng| Ok(channel.corrupt(y, rng)?))
        })
    }

    /// One few-label step: unconditional terms on `all_x`, conditional terms
    /// weighted by `cfg.lambda` on `labeled`.
    pub fn lambda_step(
        &mut self,
        all_x: &[&[f64]],
        labeled: &[(&[f64], usize)],
        priors: &[f64],
    ) -> Result<StepLosses, GanError> {
        let (latent, lambda, m) = (self.cfg.latent_dim, self.cfg.lambda, self.m);
        let (n, n_l) = (all_x.len().max(1), labeled.len().max(1));
        let d_terms = lambda_terms(all_x, labeled, lambda, m, priors, latent, n, n_l, &mut self.rng)?;
        self.alternate(d_terms, |rng| {
            let mut fakes = sample_fakes(n, latent, priors, 1.0 / n as f64, rng, |_, _| Ok(m))?;
            if lambda > 0.0 {
                fakes.extend(sample_fakes(n_l, latent, priors, lambda / n_l as f64, rng, |y, _| Ok(y))?);
            }
            Ok(fakes)
        })
    }
}

/// Which objective drives training.
#[derive(Debug, Clone)]
pub enum TrainMode {
    /// Corrupted-label loss with the channel that produced the observed labels.
    Rcgan(ConfusionMatrix),
    /// Few-label loss with `cfg.lambda`.
    Lambda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    pub gen_label_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub generator: Generator,
    pub discriminator: ProjectionDiscriminator,
    pub history: Vec<EpochRecord>,
    pub checkpoint: Checkpoint,
}

fn check_dataset(ds: &Dataset, mode: &TrainMode, lambda: f64, priors: &[f64]) -> Result<(), GanError> {
    ds.validate().map_err(|e| GanError::Dataset(e.to_string()))?;
    if ds.is_empty() {
        return Err(GanError::Dataset("dataset is empty".into()));
    }
    if priors.len() != ds.m {
        return Err(GanError::Dataset(format!("{} priors for {} classes", priors.len(), ds.m)));
    }
    match mode {
        TrainMode::Rcgan(c) => {
            if c.m() != ds.m {
                return Err(GanError::Dataset(format!("channel has {} classes, dataset {}", c.m(), ds.m)));
            }
            if let Some(spec) = &ds.channel {
                if spec.label_count() != c.dim() {
                    return Err(GanError::Dataset("dataset channel and training channel differ in label count".into()));
                }
            }
            if let Some(r) = ds.records.iter().find(|r| r.label >= c.dim()) {
                return Err(GanError::Dataset(format!("label {} outside the channel's {} labels", r.label, c.dim())));
            }
        }
        TrainMode::Lambda => {
            if let Some(r) = ds.records.iter().find(|r| r.label > ds.m) {
                return Err(GanError::Dataset(format!("label {} is neither a class nor the missing label", r.label)));
            }
            if lambda > 0.0 && ds.labeled().next().is_none() {
                return Err(GanError::Dataset("lambda > 0 needs at least one labeled record".into()));
            }
        }
    }
    Ok(())
}

/// Runs `cfg.epochs` epochs of alternating updates. Each epoch shuffles the
/// records and walks them in batches; `monitor`, when given, is evaluated on
/// the generator after every epoch and recorded as `gen_label_acc`.
pub fn train(
    cfg: &TrainConfig,
    ds: &Dataset,
    mode: &TrainMode,
    priors: &[f64],
    mut monitor: Option<&mut dyn FnMut(&Generator) -> f64>,
) -> Result<TrainOutcome, GanError> {
    check_dataset(ds, mode, cfg.lambda, priors)?;
    let label_count = match mode {
        TrainMode::Rcgan(c) => c.dim(),
        TrainMode::Lambda => ds.m + 1,
    };
    let mut trainer = Trainer::new(cfg.clone(), ds.dim, ds.m, label_count)?;
    let n = ds.len();
    let batch = cfg.batch_size.min(n);
    let steps = cfg.steps_per_epoch.unwrap_or(n.div_ceil(batch));
    let labeled: Vec<(&[f64], usize)> = ds.labeled().map(|r| (r.x.as_slice(), r.label)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        trainer.epoch = epoch;
        trainer.step = 0;
        order.shuffle(&mut trainer.rng);
        let (mut sum_d, mut sum_g) = (0.0, 0.0);
        for s in 0..steps {
            let idx = (0..batch).map(|k| order[(s * batch + k) % n]);
            let losses = match mode {
                TrainMode::Rcgan(c) => {
                    let real: Vec<(&[f64], usize)> =
                        idx.map(|i| (ds.records[i].x.as_slice(), ds.records[i].label)).collect();
                    trainer.rcgan_disc_gen_step(&real, c, priors)?
                }
                TrainMode::Lambda => {
                    let all_x: Vec<&[f64]> = idx.map(|i| ds.records[i].x.as_slice()).collect();
                    let picked: Vec<(&[f64], usize)> = if labeled.len() <= cfg.batch_size {
                        labeled.clone()
                    } else {
                        index::sample(&mut trainer.rng, labeled.len(), cfg.batch_size)
                            .into_iter()
                            .map(|k| labeled[k])
                            .collect()
                    };
                    trainer.lambda_step(&all_x, &picked, priors)?
                }
            };
            sum_d += losses.loss_d;
            sum_g += losses.loss_g;
        }
        trainer.epoch = epoch + 1;
        let gen_label_acc = monitor.as_deref_mut().map(|f| f(&trainer.generator));
        history.push(EpochRecord {
            epoch: epoch + 1,
            loss_d: sum_d / steps as f64,
            loss_g: sum_g / steps as f64,
            gen_label_acc,
        });
    }
    let checkpoint = trainer.checkpoint();
    Ok(TrainOutcome { generator: trainer.generator, discriminator: trainer.discriminator, history, checkpoint })
}

/// Writes `epoch,loss_d,loss_g` plus `gen_label_acc` when any epoch has it.
pub fn write_history(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<(), GanError> {
    let with_acc = history.iter().any(|r| r.gen_label_acc.is_some());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["epoch", "loss_d", "loss_g"];
    if with_acc {
        header.push("gen_label_acc");
    }
    w.write_record(&header)?;
    for r in history {
        let mut row = vec![r.epoch.to_string(), r.loss_d.to_string(), r.loss_g.to_string()];
        if with_acc {
            row.push(r.gen_label_acc.map_or_else(|| "NaN".to_string(), |a| a.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>, GanError> {
    let mut r = csv::Reader::from_path(path)?;
    let with_acc = r.headers()?.len() > 3;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64, GanError> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| GanError::Shape(format!("bad history field {k} in {rec:?}")))
        };
        out.push(EpochRecord {
            epoch: num(0)? as usize,
            loss_d: num(1)?,
            loss_g: num(2)?,
            gen_label_acc: if with_acc { Some(num(3)?) } else { None },
        });
    }
    Ok(out)
}
