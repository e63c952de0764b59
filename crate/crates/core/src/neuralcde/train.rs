//! Training loop: Adam over reverse-mode gradients, learning-rate plateau
//! schedule (LR ÷ 10 after 15 stagnant epochs), termination after 60
//! stagnant epochs with rollback to the best-validation parameters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    adam_step, backward_fixed_step, forward, loss, AdamConfig, AdamState, CdeModel, OutputMode,
    ParamSet, Task,
};
use crate::control::{build, ControlPath, Scheme};
use crate::error::{Error, Result};
use crate::series::{Dataset, Split};
use crate::solver::SolveConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stagnant epochs of training loss before LR is divided by 10.
    pub plateau_patience: usize,
    /// Stagnant epochs before training stops and rolls back.
    pub termination_patience: usize,
    /// Minimum absolute improvement that counts as progress.
    pub stagnation_tol: f64,
    pub task: Task,
    pub output_mode: OutputMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 1024,
            max_epochs: 1000,
            plateau_patience: 15,
            termination_patience: 60,
            stagnation_tol: 1e-6,
            task: Task::BinaryClassification,
            output_mode: OutputMode::Terminal,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.plateau_patience == 0 || self.termination_patience == 0 {
            return Err(Error::BadConfig("patiences must be positive".into()));
        }
        if self.plateau_patience >= self.termination_patience {
            return Err(Error::BadConfig(
                "plateau patience must be below termination patience".into(),
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::BadConfig(
                "batch size and epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleAction {
    Continue,
    ReduceLr,
    Terminate,
}

/// Plateau detector over the monitored (training) loss.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    tol: f64,
    plateau_patience: usize,
    termination_patience: usize,
    best: f64,
    since_best_lr: usize,
    since_best_term: usize,
}

impl PlateauSchedule {
    pub fn new(plateau_patience: usize, termination_patience: usize, tol: f64) -> Self {
        Self {
            tol,
            plateau_patience,
            termination_patience,
            best: f64::INFINITY,
            since_best_lr: 0,
            since_best_term: 0,
        }
    }

    /// Feeds one epoch's monitored loss. Termination takes precedence over
    /// an LR reduction; a reduction restarts its own counter.
    pub fn observe(&mut self, train_loss: f64) -> ScheduleAction {
        if train_loss <= self.best - self.tol {
            self.best = train_loss;
            self.since_best_lr = 0;
            self.since_best_term = 0;
            return ScheduleAction::Continue;
        }
        self.since_best_lr += 1;
        self.since_best_term += 1;
        if self.since_best_term >= self.termination_patience {
            ScheduleAction::Terminate
        } else if self.since_best_lr >= self.plateau_patience {
            self.since_best_lr = 0;
            ScheduleAction::ReduceLr
        } else {
            ScheduleAction::Continue
        }
    }
}

/// Loop bookkeeping shared by `train` and the schedule tests: plateau
/// schedule, LR, and the best-validation snapshot used for rollback.
#[derive(Debug, Clone)]
pub struct TrainLoopState {
    schedule: PlateauSchedule,
    pub lr: f64,
    pub lr_reductions: Vec<usize>,
    best_val: f64,
    pub best_val_epoch: usize,
    best_params: ParamSet,
    pub terminated_early: bool,
}

impl TrainLoopState {
    pub fn new(config: &TrainConfig, initial_params: ParamSet) -> Self {
        Self {
            schedule: PlateauSchedule::new(
                config.plateau_patience,
                config.termination_patience,
                config.stagnation_tol,
            ),
            lr: config.learning_rate,
            lr_reductions: Vec::new(),
            best_val: f64::INFINITY,
            best_val_epoch: 0,
            best_params: initial_params,
            terminated_early: false,
        }
    }

    /// Registers one finished epoch; returns false when training must stop.
    pub fn end_of_epoch(
        &mut self,
        epoch: usize,
        train_loss: f64,
        val_loss: f64,
        params: &ParamSet,
    ) -> bool {
        if val_loss < self.best_val {
            self.best_val = val_loss;
            self.best_val_epoch = epoch;
            self.best_params = params.clone();
        }
        match self.schedule.observe(train_loss) {
            ScheduleAction::Continue => true,
            ScheduleAction::ReduceLr => {
                self.lr /= 10.0;
                self.lr_reductions.push(epoch);
                true
            }
            ScheduleAction::Terminate => {
                self.terminated_early = true;
                false
            }
        }
    }

    pub fn best_params(&self) -> &ParamSet {
        &self.best_params
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub metric: f64,
    /// Cumulative vector-field evaluations up to and including this epoch.
    pub nfe: usize,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub log: Vec<EpochStats>,
    pub lr_reductions: Vec<usize>,
    pub terminated_early: bool,
    pub best_val_epoch: usize,
}

/// Task metric: accuracy for binary classification (logit threshold 0),
/// RMSE for regression.
pub fn task_metric(outputs: &[Vec<f64>], targets: &[Vec<f64>], task: Task) -> f64 {
    match task {
        Task::BinaryClassification => {
            let mut hits = 0usize;
            let mut total = 0usize;
            for (out, tgt) in outputs.iter().zip(targets) {
                for (&x, &y) in out.iter().zip(tgt) {
                    if (x > 0.0) == (y > 0.5) {
                        hits += 1;
                    }
                    total += 1;
                }
            }
            hits as f64 / total.max(1) as f64
        }
        Task::Regression => {
            let mut sq = 0.0;
            let mut total = 0usize;
            for (out, tgt) in outputs.iter().zip(targets) {
                for (&x, &y) in out.iter().zip(tgt) {
                    sq += (x - y) * (x - y);
                    total += 1;
                }
            }
            (sq / total.max(1) as f64).sqrt()
        }
    }
}

/// Trains the model on the dataset's train split, monitoring the val split.
///
/// Control paths are built once per sample. Batches group series of equal
/// length, samples are solved independently and their gradients averaged.
/// On exit (termination or epoch limit) the model holds the parameters of
/// the lowest-validation-loss epoch.
pub fn train(
    dataset: &Dataset,
    scheme: Scheme,
    model: &mut CdeModel,
    train_config: &TrainConfig,
    solver_config: &SolveConfig,
) -> Result<TrainResult> {
    train_config.validate()?;
    if !solver_config.method.is_fixed_step() {
        return Err(Error::UnsupportedForTraining);
    }
    let train_idx = dataset.indices_of(Split::Train);
    let val_idx = dataset.indices_of(Split::Val);
    if train_idx.is_empty() {
        return Err(Error::EmptySplit);
    }
    let paths: Vec<ControlPath> = dataset
        .samples
        .iter()
        .map(|s| build(scheme, s))
        .collect::<Result<_>>()?;
    let targets: Vec<Vec<Vec<f64>>> = dataset
        .labels
        .iter()
        .zip(&paths)
        .map(|(label, path)| match train_config.output_mode {
            OutputMode::Terminal => vec![label.as_target()],
            OutputMode::Sequence => vec![label.as_target(); path.breakpoints().len()],
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut params = model.params();
    let mut adam_state = AdamState::new(&params);
    let mut loop_state = TrainLoopState::new(train_config, params.clone());
    let mut log = Vec::new();
    let mut cumulative_nfe = 0usize;

    for epoch in 1..=train_config.max_epochs {
        // Group by series length, shuffle within groups, then batch.
        let mut by_len: Vec<(usize, Vec<usize>)> = Vec::new();
        for &i in &train_idx {
            let len = paths[i].breakpoints().len();
            match by_len.iter_mut().find(|(l, _)| *l == len) {
                Some((_, v)) => v.push(i),
                None => by_len.push((len, vec![i])),
            }
        }
        by_len.sort_by_key(|(l, _)| *l);
        let mut batches: Vec<Vec<usize>> = Vec::new();
        for (_, mut group) in by_len {
            group.shuffle(&mut rng);
            for chunk in group.chunks(train_config.batch_size) {
                batches.push(chunk.to_vec());
            }
        }
        batches.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in &batches {
            let mut grads = ParamSet::zeros_like(&params);
            let mut batch_loss = 0.0;
            for &i in batch {
                let result = backward_fixed_step(
                    model,
                    &paths[i],
                    solver_config,
                    &targets[i],
                    train_config.output_mode,
                    train_config.task,
                )?;
                cumulative_nfe += result.nfe;
                batch_loss += result.loss;
                grads.add_scaled(&result.grads, 1.0);
            }
            grads.scale(1.0 / batch.len() as f64);
            let adam_config = AdamConfig {
                lr: loop_state.lr,
                beta1: train_config.beta1,
                beta2: train_config.beta2,
                eps: train_config.eps,
            };
            adam_step(&mut params, &grads, &mut adam_state, &adam_config)?;
            model.set_params(&params)?;
            epoch_loss += batch_loss;
            seen += batch.len();
        }
        let train_loss = epoch_loss / seen.max(1) as f64;

        // Validation pass.
        let (val_loss, metric) = if val_idx.is_empty() {
            (train_loss, f64::NAN)
        } else {
            let mut outputs = Vec::with_capacity(val_idx.len());
            let mut tgts = Vec::with_capacity(val_idx.len());
            let mut total = 0.0;
            for &i in &val_idx {
                let fwd = forward(model, &paths[i], solver_config, train_config.output_mode)?;
                cumulative_nfe += fwd.nfe;
                total += loss(&fwd.outputs, &targets[i], train_config.task)?;
                outputs.extend(fwd.outputs);
                tgts.extend(targets[i].clone());
            }
            (
                total / val_idx.len() as f64,
                task_metric(&outputs, &tgts, train_config.task),
            )
        };

        log.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            metric,
            nfe: cumulative_nfe,
            lr: loop_state.lr,
        });
        if !loop_state.end_of_epoch(epoch, train_loss, val_loss, &params) {
            break;
        }
    }

    model.set_params(loop_state.best_params())?;
    Ok(TrainResult {
        log,
        lr_reductions: loop_state.lr_reductions.clone(),
        terminated_early: loop_state.terminated_early,
        best_val_epoch: loop_state.best_val_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decreasing_loss_never_reduces_lr() {
        let mut schedule = PlateauSchedule::new(15, 60, 1e-6);
        for k in 0..100 {
            let action = schedule.observe(1.0 - 0.01 * k as f64);
            assert_eq!(action, ScheduleAction::Continue);
        }
    }

    #[test]
    fn stalled_loss_reduces_lr_at_epoch_16() {
        let mut schedule = PlateauSchedule::new(15, 60, 1e-6);
        let mut reductions = Vec::new();
        for epoch in 1..=16 {
            if schedule.observe(0.5) == ScheduleAction::ReduceLr {
                reductions.push(epoch);
            }
        }
        assert_eq!(reductions, vec![16]);
    }

    #[test]
    fn stalled_loss_terminates_at_epoch_61() {
        let mut schedule = PlateauSchedule::new(15, 60, 1e-6);
        let mut terminated_at = None;
        for epoch in 1..=100 {
            if schedule.observe(0.5) == ScheduleAction::Terminate {
                terminated_at = Some(epoch);
                break;
            }
        }
        assert_eq!(terminated_at, Some(61));
    }

    #[test]
    fn improvement_below_tolerance_is_stagnation() {
        let mut schedule = PlateauSchedule::new(2, 60, 1e-6);
        assert_eq!(schedule.observe(1.0), ScheduleAction::Continue);
        assert_eq!(schedule.observe(1.0 - 1e-9), ScheduleAction::Continue);
        assert_eq!(schedule.observe(1.0 - 2e-9), ScheduleAction::ReduceLr);
    }

    #[test]
    fn training_is_deterministic_given_seeds() {
        use crate::neuralcde::ModelConfig;
        use crate::series::Split;
        use crate::solver::Method;
        use crate::synth;

        let run = || {
            let mut dataset = synth::irregular_dataset(3, 12, 6, 2, 0.2, false);
            for (i, tag) in dataset.split_assignment.iter_mut().enumerate() {
                *tag = if i < 9 { Split::Train } else { Split::Val };
            }
            let dataset = crate::series::normalize(dataset).unwrap();
            let mut model = CdeModel::new(&ModelConfig::default(), dataset.samples[0].out_dim(), 4);
            let tc = TrainConfig {
                batch_size: 4,
                max_epochs: 3,
                seed: 9,
                ..Default::default()
            };
            let sc = SolveConfig::fixed(Method::Rk4, 0.5);
            let result = train(&dataset, Scheme::Linear, &mut model, &tc, &sc).unwrap();
            (model.params(), result.log.last().unwrap().train_loss)
        };
        let (pa, la) = run();
        let (pb, lb) = run();
        assert_eq!(pa, pb);
        assert_eq!(la.to_bits(), lb.to_bits());
    }

    #[test]
    fn rollback_restores_best_validation_params() {
        let config = TrainConfig::default();
        let p = |x: f64| ParamSet {
            tensors: vec![vec![x]],
        };
        let mut state = TrainLoopState::new(&config, p(0.0));
        // Val loss dips at epoch 2 and then worsens while train stalls.
        let val = [0.5, 0.3, 0.6, 0.7];
        for (i, &v) in val.iter().enumerate() {
            let epoch = i + 1;
            let alive = state.end_of_epoch(epoch, 1.0, v, &p(epoch as f64));
            assert!(alive);
        }
        assert_eq!(state.best_val_epoch, 2);
        assert_eq!(state.best_params(), &p(2.0));
    }
}
