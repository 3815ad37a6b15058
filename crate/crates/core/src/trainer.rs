//! Three-phase dense / sparse / re-dense training.
//!
//! * Dense: SGD with momentum plus L2 weight decay on all weights.
//! * Sparse: each epoch recomputes magnitude masks at the scheduled sparsity,
//!   adds the selective weight decay term `a * TWD` on top of the loss and
//!   weight decay, and re-applies the mask after every optimizer step.
//! * Re-dense: masks lifted; pruned weights restart from zero at a small
//!   learning rate.

use std::fmt;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DatasetSplit;
use crate::exec;
use crate::lstm::{self, Architecture, Gradients, InitMode, Mode, NetError, NetworkParams};
use crate::metrics;
use crate::optimizer::{network_l2, SgdmState};
use crate::pruning::{network_twd, schedule_a, schedule_sparsity, PruneError, SparsityMask, SparsitySchedule, SwdConfig};
use crate::store::{self, StoreError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss in {phase} phase, epoch {epoch}")]
    NonFiniteLoss { phase: Phase, epoch: usize },
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("dataset has {got} values per row, the network expects {expected}")]
    DataShape { expected: usize, got: usize },
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error("checkpoint: {0}")]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Dense,
    Sparse,
    Redense,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Dense => "dense",
            Phase::Sparse => "sparse",
            Phase::Redense => "redense",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub early_stop: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub dense: PhaseConfig,
    pub sparse: PhaseConfig,
    pub redense: PhaseConfig,
    pub momentum: f64,
    /// Weight-decay coefficient for the WD term; `swd.mu` scales TWD.
    pub weight_decay: f64,
    pub swd: SwdConfig,
    pub initial_sparsity: f64,
    pub final_sparsity: f64,
    pub patience: usize,
    pub clip_norm: Option<f64>,
    pub threshold: f64,
    pub init: InitMode,
}

impl TrainConfig {
    /// Defaults for a network reading `input_size` features per timestep.
    pub fn new(input_size: usize) -> Self {
        let phase = |lr, early_stop| PhaseConfig {
            learning_rate: lr,
            epochs: 30,
            batch_size: 32,
            early_stop,
        };
        Self {
            arch: Architecture::new(input_size, vec![32, 32, 32]),
            dense: phase(0.1, false),
            sparse: phase(0.01, false),
            redense: phase(0.001, true),
            momentum: 0.9,
            weight_decay: 1e-4,
            swd: SwdConfig::default(),
            initial_sparsity: 0.25,
            final_sparsity: 0.8,
            patience: 5,
            clip_norm: Some(5.0),
            threshold: 0.5,
            init: InitMode::GlorotNormal,
        }
    }

    pub fn sparsity_schedule(&self) -> SparsitySchedule {
        SparsitySchedule {
            initial: self.initial_sparsity,
            final_sparsity: self.final_sparsity,
            epochs: self.sparse.epochs,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::BadConfig(m));
        self.arch.validate()?;
        for (name, p) in [("dense", &self.dense), ("sparse", &self.sparse), ("redense", &self.redense)] {
            if !(p.learning_rate >= 0.0 && p.learning_rate.is_finite()) {
                return bad(format!("{name} learning rate must be non-negative"));
            }
            if p.epochs == 0 || p.batch_size == 0 {
                return bad(format!("{name} epochs and batch size must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)".into());
        }
        if !(self.weight_decay >= 0.0) || !(self.swd.mu >= 0.0) {
            return bad("weight decay must be non-negative".into());
        }
        if !(self.swd.a0 > 0.0) || !(self.swd.a_growth >= 1.0) {
            return bad("a0 must be positive and a_growth at least 1".into());
        }
        if !(self.swd.target > 0.0 && self.swd.target <= 1.0) {
            return bad("T must lie in (0, 1]".into());
        }
        self.sparsity_schedule().validate()?;
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad("clip norm must be positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub train_loss: f64,
    pub err: f64,
    pub wd: f64,
    pub a_twd: f64,
    pub val_loss: f64,
    pub val_auc: Option<f64>,
    pub val_acc: f64,
    pub sparsity: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub epochs: Vec<EpochRecord>,
    pub final_params: NetworkParams,
    /// Weights at the end of the sparse phase, with `final_mask` applied.
    pub sparse_params: NetworkParams,
    pub final_mask: SparsityMask,
    /// Sparse-phase optimizer steps after which some masked weight was not
    /// exactly zero. Always 0 unless the masking invariant is broken.
    pub mask_violations: usize,
    pub sparse_steps: usize,
}

pub const RUN_CSV_HEADER: &str = "epoch,phase,train_loss,err,wd,a_twd,val_loss,val_auc,val_acc,sparsity,a";

impl TrainRun {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(RUN_CSV_HEADER);
        s.push('\n');
        for r in &self.epochs {
            s.push_str(&format!(
                "{},{},{:.8},{:.8},{:.8},{:.8},{:.8},{},{:.6},{:.6},{:.8}\n",
                r.epoch,
                r.phase,
                r.train_loss,
                r.err,
                r.wd,
                r.a_twd,
                r.val_loss,
                r.val_auc.map(|a| format!("{a:.6}")).unwrap_or_default(),
                r.val_acc,
                r.sparsity,
                r.a
            ));
        }
        s
    }
}

/// Validation statistics of a network in eval mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub loss: f64,
    pub auc: Option<f64>,
    pub accuracy: f64,
}

pub fn predict_split(net: &NetworkParams, data: &DatasetSplit) -> Result<Vec<f64>, NetError> {
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    exec::map_ordered(&rows, |&i| lstm::predict_proba(net, data.row(i)))
        .into_iter()
        .collect()
}

pub fn evaluate_split(net: &NetworkParams, data: &DatasetSplit, threshold: f64) -> Result<EvalStats, NetError> {
    let probs = predict_split(net, data)?;
    let n = probs.len().max(1) as f64;
    let loss = probs
        .iter()
        .zip(&data.labels)
        .map(|(&p, &y)| lstm::bce_loss(p, y))
        .sum::<f64>()
        / n;
    let correct = probs
        .iter()
        .zip(&data.labels)
        .filter(|(&p, &y)| lstm::classify(p, threshold) == y)
        .count();
    Ok(EvalStats {
        loss,
        auc: metrics::roc_curve(&probs, &data.labels).ok().map(|r| r.auc),
        accuracy: correct as f64 / n,
    })
}

/// Per-sample gradients are summed in fixed-size chunks whose partial sums
/// are combined in order, so results do not depend on the worker count.
const GRAD_CHUNK: usize = 16;

struct BatchResult {
    err_sum: f64,
    grads: Gradients,
}

fn batch_gradients(
    net: &NetworkParams,
    data: &DatasetSplit,
    rows: &[usize],
    seeds: &[u64],
) -> Result<BatchResult, NetError> {
    let jobs: Vec<(&[usize], &[u64])> = rows.chunks(GRAD_CHUNK).zip(seeds.chunks(GRAD_CHUNK)).collect();
    let partials = exec::map_ordered(&jobs, |(rows, seeds)| -> Result<BatchResult, NetError> {
        let mut acc = Gradients::zeros_like(net);
        let mut err_sum = 0.0;
        for (&r, &seed) in rows.iter().zip(*seeds) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, cache) = lstm::forward(net, data.row(r), Mode::Train, &mut rng)?;
            err_sum += lstm::bce_loss(p, data.labels[r]);
            acc.add_assign(&lstm::backward(net, &cache, data.labels[r])?);
        }
        Ok(BatchResult { err_sum, grads: acc })
    });
    let mut total = BatchResult {
        err_sum: 0.0,
        grads: Gradients::zeros_like(net),
    };
    for p in partials {
        let p = p?;
        total.err_sum += p.err_sum;
        total.grads.add_assign(&p.grads);
    }
    Ok(total)
}

#[derive(Debug, Default, Clone, Copy)]
struct EpochSums {
    err: f64,
    wd: f64,
    a_twd: f64,
    samples: usize,
}

/// Sparse-phase context for one epoch.
struct SparseCtx<'a> {
    mask: &'a SparsityMask,
    a: f64,
    swd: &'a SwdConfig,
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    train: &'a DatasetSplit,
    val: &'a DatasetSplit,
    rng: ChaCha8Rng,
    records: Vec<EpochRecord>,
    mask_violations: usize,
    sparse_steps: usize,
}

impl<'a> Trainer<'a> {
    fn run_epoch(
        &mut self,
        net: &mut NetworkParams,
        opt: &mut SgdmState,
        phase: Phase,
        batch_size: usize,
        sparse: Option<&SparseCtx<'_>>,
    ) -> Result<EpochSums, TrainError> {
        let mut order: Vec<usize> = (0..self.train.n_rows()).collect();
        order.shuffle(&mut self.rng);
        let mut sums = EpochSums::default();
        for rows in order.chunks(batch_size) {
            let seeds: Vec<u64> = rows.iter().map(|_| self.rng.next_u64()).collect();
            let batch = batch_gradients(net, self.train, rows, &seeds)?;
            let n = rows.len() as f64;
            let mut grads = batch.grads;
            grads.scale(1.0 / n);
            let err = batch.err_sum / n;

            let (wd, wd_grads) = network_l2(net, self.cfg.weight_decay);
            grads.add_assign(&wd_grads);
            let mut a_twd = 0.0;
            if let Some(ctx) = sparse {
                let (twd, mut twd_grads) = network_twd(net, ctx.mask, ctx.a, ctx.swd);
                twd_grads.scale(ctx.a);
                grads.add_assign(&twd_grads);
                a_twd = ctx.a * twd;
            }
            let loss = err + wd + a_twd;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    phase,
                    epoch: self.records.len(),
                });
            }
            if let Some(c) = self.cfg.clip_norm {
                grads.clip_global_norm(c);
            }
            opt.step(net, &grads).map_err(|e| TrainError::BadConfig(e.to_string()))?;
            if let Some(ctx) = sparse {
                ctx.mask.apply(net)?;
                ctx.mask.apply_to_tensors(&mut opt.delta_prev)?;
                self.sparse_steps += 1;
                if !ctx.mask.is_satisfied_by(net) {
                    self.mask_violations += 1;
                }
            }
            sums.err += err * n;
            sums.wd += wd * n;
            sums.a_twd += a_twd * n;
            sums.samples += rows.len();
        }
        Ok(sums)
    }

    fn record(
        &mut self,
        net: &NetworkParams,
        phase: Phase,
        sums: EpochSums,
        sparsity: f64,
        a: f64,
    ) -> Result<EvalStats, TrainError> {
        let stats = evaluate_split(net, self.val, self.cfg.threshold)?;
        let n = sums.samples.max(1) as f64;
        let (err, wd, a_twd) = (sums.err / n, sums.wd / n, sums.a_twd / n);
        self.records.push(EpochRecord {
            epoch: self.records.len(),
            phase,
            train_loss: err + wd + a_twd,
            err,
            wd,
            a_twd,
            val_loss: stats.loss,
            val_auc: stats.auc,
            val_acc: stats.accuracy,
            sparsity,
            a,
        });
        Ok(stats)
    }

    /// Dense-style phase (no masks) with optional early stopping on
    /// validation AUC that restores the best epoch's weights.
    fn run_unmasked(&mut self, net: &mut NetworkParams, phase: Phase, pc: &PhaseConfig, sparsity: f64) -> Result<(), TrainError> {
        let mut opt = SgdmState::new(net, self.cfg.momentum, pc.learning_rate);
        let mut best: Option<(f64, NetworkParams)> = None;
        let mut stale = 0;
        for _ in 0..pc.epochs {
            let sums = self.run_epoch(net, &mut opt, phase, pc.batch_size, None)?;
            let stats = self.record(net, phase, sums, sparsity, 0.0)?;
            if !pc.early_stop {
                continue;
            }
            let score = stats.auc.unwrap_or(-stats.loss);
            match &best {
                Some((b, _)) if score <= *b => {
                    stale += 1;
                    if stale >= self.cfg.patience {
                        break;
                    }
                }
                _ => {
                    best = Some((score, net.clone()));
                    stale = 0;
                }
            }
        }
        if let Some((_, params)) = best {
            *net = params;
        }
        Ok(())
    }

    fn run_sparse(&mut self, net: &mut NetworkParams) -> Result<SparsityMask, TrainError> {
        let pc = self.cfg.sparse;
        let sched = self.cfg.sparsity_schedule();
        let mut opt = SgdmState::new(net, self.cfg.momentum, pc.learning_rate);
        let mut mask = SparsityMask::dense(net);
        for e in 0..pc.epochs {
            let s = schedule_sparsity(e, &sched)?;
            let a = schedule_a(e, &self.cfg.swd);
            mask = SparsityMask::compute(net, s)?;
            mask.apply(net)?;
            mask.apply_to_tensors(&mut opt.delta_prev)?;
            let ctx = SparseCtx {
                mask: &mask,
                a,
                swd: &self.cfg.swd,
            };
            let sums = self.run_epoch(net, &mut opt, Phase::Sparse, pc.batch_size, Some(&ctx))?;
            self.record(net, Phase::Sparse, sums, mask.achieved_sparsity(), a)?;
        }
        Ok(mask)
    }
}

pub fn run_dense_phase(
    net: &mut NetworkParams,
    cfg: &TrainConfig,
    train: &DatasetSplit,
    val: &DatasetSplit,
    seed: u64,
) -> Result<Vec<EpochRecord>, TrainError> {
    let mut t = Trainer::new(cfg, train, val, seed);
    t.run_unmasked(net, Phase::Dense, &cfg.dense, 0.0)?;
    Ok(t.records)
}

pub fn run_sparse_phase(
    net: &mut NetworkParams,
    cfg: &TrainConfig,
    train: &DatasetSplit,
    val: &DatasetSplit,
    seed: u64,
) -> Result<(SparsityMask, Vec<EpochRecord>, usize), TrainError> {
    let mut t = Trainer::new(cfg, train, val, seed);
    let mask = t.run_sparse(net)?;
    Ok((mask, t.records, t.mask_violations))
}

pub fn run_redense_phase(
    net: &mut NetworkParams,
    mask: &SparsityMask,
    cfg: &TrainConfig,
    train: &DatasetSplit,
    val: &DatasetSplit,
    seed: u64,
) -> Result<Vec<EpochRecord>, TrainError> {
    let mut t = Trainer::new(cfg, train, val, seed);
    t.run_unmasked(net, Phase::Redense, &cfg.redense, mask.achieved_sparsity())?;
    Ok(t.records)
}

impl<'a> Trainer<'a> {
    fn new(cfg: &'a TrainConfig, train: &'a DatasetSplit, val: &'a DatasetSplit, seed: u64) -> Self {
        Self {
            cfg,
            train,
            val,
            rng: ChaCha8Rng::seed_from_u64(seed),
            records: Vec::new(),
            mask_violations: 0,
            sparse_steps: 0,
        }
    }
}

fn check_inputs(cfg: &TrainConfig, train: &DatasetSplit, val: &DatasetSplit) -> Result<(), TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let expected = cfg.arch.record_len();
    for d in [train, val] {
        if d.n_features != expected {
            return Err(TrainError::DataShape {
                expected,
                got: d.n_features,
            });
        }
    }
    Ok(())
}

/// Full dense / sparse / re-dense run. Everything is a function of
/// `(cfg, train, val, seed)`.
pub fn train_dsd(
    cfg: &TrainConfig,
    train: &DatasetSplit,
    val: &DatasetSplit,
    seed: u64,
) -> Result<TrainRun, TrainError> {
    train_dsd_with_checkpoints(cfg, train, val, seed, None)
}

/// As [`train_dsd`], additionally writing `dense_phase.eidm`,
/// `sparse_phase.eidm` and `redense_phase.eidm` into `checkpoint_dir`.
pub fn train_dsd_with_checkpoints(
    cfg: &TrainConfig,
    train: &DatasetSplit,
    val: &DatasetSplit,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainRun, TrainError> {
    check_inputs(cfg, train, val)?;
    let mut net = lstm::init_params(&cfg.arch, seed, cfg.init)?;
    let mut t = Trainer::new(cfg, train, val, seed.wrapping_add(1));

    t.run_unmasked(&mut net, Phase::Dense, &cfg.dense, 0.0)?;
    if let Some(dir) = checkpoint_dir {
        store::save_dense(&net, &dir.join("dense_phase.eidm"))?;
    }

    let mask = t.run_sparse(&mut net)?;
    let sparse_params = net.clone();
    if let Some(dir) = checkpoint_dir {
        store::save_sparse(&sparse_params.to_f32_precision(), &mask, &dir.join("sparse_phase.eidm"))?;
    }

    t.run_unmasked(&mut net, Phase::Redense, &cfg.redense, mask.achieved_sparsity())?;
    if let Some(dir) = checkpoint_dir {
        store::save_dense(&net, &dir.join("redense_phase.eidm"))?;
    }

    Ok(TrainRun {
        epochs: t.records,
        final_params: net,
        sparse_params,
        final_mask: mask,
        mask_violations: t.mask_violations,
        sparse_steps: t.sparse_steps,
    })
}
