//! Two-phase minibatch training: Adam preconditioning, then L-BFGS epochs,
//! with the geometry parameter resampled and the batches rebuilt every epoch.
//!
//! Draw order of the run's single generator (seeded from `network.seed`):
//! test split, network initialisation (skipped on resume), then per epoch the
//! k assignment (parametric scenarios only) followed by the batch shuffles.

mod config;
mod log;

use std::cell::Cell;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{evaluate_loss, evaluate_loss_gradient, AutodiffError, EvalOptions, LossEvaluation};
use crate::evaluation::{self, EvaluationError, FieldValues};
use crate::network::{
    init_params_with_rng, Checkpoint, CheckpointError, CheckpointFormat, NetworkError, NetworkParams, NetworkShape,
};
use crate::optim::{lbfgs_step, AdamState, LbfgsState, LineSearchFailure, OptimError};
use crate::physics::{LossBreakdown, PhysicsError, PhysicsLoss, PointRole, ReferenceScales};
use crate::sampling::{
    apply_parametric_pipeline, make_batches_with_rng, sample_parameters_with_rng, split_test_set_with_rng, Batch,
    CollocationPoint, CollocationSet, KAssignment, ReferenceSolution, SamplingError, ScenarioSpec,
};

pub use config::{CheckpointEncoding, DataConfig, LossConfig, NetworkConfig, OptimConfig, OutputConfig, TrainConfig};
pub use log::{ConvergenceLog, IterationRecord, LossSummary, Phase, RunSummary, Termination};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint does not match the configured network: {}", .0.join("; "))]
    Layout(Vec<String>),
    #[error("no training data: {0}")]
    EmptyData(String),
    #[error("cannot write run output: {0}")]
    Output(String),
}

/// Network inputs and loss roles of one batch, nondimensional.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedBatch {
    pub inputs: Vec<f64>,
    pub roles: Vec<PointRole>,
}

impl PreparedBatch {
    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }
}

/// Volume, then Dirichlet, then Neumann points; `k` becomes an extra input
/// scaled by `L_ref` when the network is parametric.
pub fn prepare_batch(batch: &Batch, scales: &ReferenceScales, n_sd: usize, parametric: bool) -> PreparedBatch {
    let n_in = n_sd + usize::from(parametric);
    let mut out = PreparedBatch { inputs: Vec::with_capacity(batch.len() * n_in), roles: Vec::with_capacity(batch.len()) };
    let groups = [(&batch.volume, 0), (&batch.dirichlet, 1), (&batch.neumann, 2)];
    for (points, kind) in groups {
        for p in points.iter() {
            out.inputs.extend(p.position[..n_sd].iter().map(|&x| scales.length_star(x)));
            if parametric {
                out.inputs.push(scales.length_star(p.k));
            }
            out.roles.push(match kind {
                0 => PointRole::Volume,
                1 => PointRole::Dirichlet(p.velocity.map(|v| scales.velocity_star(v))),
                _ => PointRole::Neumann(scales.pressure_star(p.pressure)),
            });
        }
    }
    out
}

/// Loss breakdown of `params` on a prepared batch.
pub fn batch_loss(
    params: &NetworkParams,
    batch: &PreparedBatch,
    re: f64,
    f_bc: f64,
    f_sigma: f64,
    opts: EvalOptions,
) -> Result<LossBreakdown, TrainError> {
    let layout = params.layout();
    let loss = PhysicsLoss::new(&layout, &batch.roles, re, f_bc, f_sigma)?;
    let (_, parts) = evaluate_loss(&params.mlp, &batch.inputs, loss.spec(), &loss, opts)?;
    Ok(loss.breakdown(&parts))
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Start from these parameters instead of a fresh initialisation.
    pub init: Option<NetworkParams>,
    /// Writes checkpoints, `convergence.csv` and `summary.json` here.
    pub out_dir: Option<PathBuf>,
    /// Records continue numbering after this iteration.
    pub iteration_offset: u64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: ConvergenceLog,
    pub summary: RunSummary,
}

enum TestSet {
    Reference { inputs: Vec<f64>, values: FieldValues },
    Proxy(PreparedBatch),
    None,
}

impl TestSet {
    fn metric(&self) -> &'static str {
        match self {
            TestSet::Reference { .. } => "relative-l2",
            TestSet::Proxy(_) => "physics-proxy",
            TestSet::None => "none",
        }
    }
}

struct Run<'a> {
    cfg: &'a TrainConfig,
    scenario: ScenarioSpec,
    train: CollocationSet,
    rng: ChaCha8Rng,
    params: NetworkParams,
    re: f64,
    opts: EvalOptions,
    test: TestSet,
    log: ConvergenceLog,
    iteration: u64,
    epoch: u64,
    peak_workspace: Cell<usize>,
    steps: u64,
    step_seconds: f64,
    batches: usize,
}

enum Stop {
    NonFinite,
}

impl Run<'_> {
    fn epoch_batches(&mut self) -> Result<Vec<PreparedBatch>, TrainError> {
        let ks = if self.scenario.parametric {
            sample_parameters_with_rng(&self.train, &self.scenario, &mut self.rng)
        } else {
            KAssignment::constant(&self.train, self.scenario.k_ref)
        };
        let sets = apply_parametric_pipeline(&self.train, &ks, &self.scenario)?;
        let max = self.cfg.data.max_batch_size.unwrap_or(usize::MAX);
        let batches = make_batches_with_rng(&sets, max, &mut self.rng)?;
        debug_assert_eq!(batches.iter().map(Batch::len).sum::<usize>(), sets.len());
        let n_sd = self.params.n_sd;
        let mut out = Vec::with_capacity(batches.len());
        for (i, b) in batches.iter().enumerate() {
            if b.is_empty() {
                ::log::warn!("epoch {}: batch {i} is empty after filtering, skipped", self.epoch);
                continue;
            }
            out.push(prepare_batch(b, &self.cfg.scales, n_sd, self.params.parametric));
        }
        if out.is_empty() {
            return Err(TrainError::EmptyData(format!("every point was filtered out in epoch {}", self.epoch)));
        }
        self.batches = out.len();
        Ok(out)
    }

    fn evaluate(&self, x: &[f64], batch: &PreparedBatch) -> Result<LossEvaluation, TrainError> {
        let mut mlp = self.params.mlp.clone();
        mlp.set_params(x)?;
        let layout = self.params.layout();
        let loss = PhysicsLoss::new(&layout, &batch.roles, self.re, self.cfg.loss.f_bc, self.cfg.loss.f_sigma)?;
        let ev = evaluate_loss_gradient(&mlp, &batch.inputs, loss.spec(), &loss, self.opts)?;
        self.peak_workspace.set(self.peak_workspace.get().max(ev.workspace_bytes));
        Ok(ev)
    }

    fn breakdown(&self, parts: &[f64]) -> LossBreakdown {
        LossBreakdown::from_components(parts[0], parts[1], parts[2], parts[3], parts[4], self.cfg.loss.f_bc, self.cfg.loss.f_sigma)
    }

    fn test_loss(&self) -> Result<Option<f64>, TrainError> {
        Ok(match &self.test {
            TestSet::Reference { inputs, values } => {
                let pred = evaluation::predict_nondimensional(&self.params, inputs)?;
                Some(evaluation::test_loss(&pred, values)?)
            }
            TestSet::Proxy(batch) => {
                match batch_loss(&self.params, batch, self.re, self.cfg.loss.f_bc, self.cfg.loss.f_sigma, self.opts) {
                    Ok(b) => Some(b.l_total),
                    Err(TrainError::Autodiff(AutodiffError::NonFiniteLoss { .. })) => Some(f64::INFINITY),
                    Err(e) => return Err(e),
                }
            }
            TestSet::None => None,
        })
    }

    fn record(&mut self, phase: Phase, batch: usize, b: &LossBreakdown) -> Result<(), TrainError> {
        self.iteration += 1;
        let mut r = IterationRecord::new(self.iteration, phase, self.epoch, batch, b);
        let every = self.cfg.data.test_interval;
        if every > 0 && self.iteration.is_multiple_of(every) {
            r.l_test = self.test_loss()?;
        }
        self.log.records.push(r);
        Ok(())
    }

    fn adam_phase(&mut self) -> Result<Option<Stop>, TrainError> {
        let total = self.cfg.optim.adam_iters;
        let mut adam = AdamState::new(self.params.mlp.n_params(), self.cfg.optim.adam());
        let mut done = 0;
        while done < total {
            let batches = self.epoch_batches()?;
            for (b, batch) in batches.iter().enumerate() {
                if done == total {
                    break;
                }
                let t0 = Instant::now();
                let x = self.params.mlp.params().to_vec();
                let ev = match self.evaluate(&x, batch) {
                    Ok(ev) => ev,
                    Err(TrainError::Autodiff(AutodiffError::NonFiniteLoss { index })) => {
                        ::log::error!("non-finite loss at batch point {index}; aborting");
                        return Ok(Some(Stop::NonFinite));
                    }
                    Err(e) => return Err(e),
                };
                let mut next = x;
                match adam.step(ev.gradient.as_slice(), &mut next) {
                    Ok(()) => {}
                    Err(OptimError::NonFiniteGradient { index, .. }) => {
                        ::log::error!("non-finite gradient entry {index}; aborting");
                        return Ok(Some(Stop::NonFinite));
                    }
                    Err(e) => return Err(TrainError::Config(e.to_string())),
                }
                if next.iter().any(|v| !v.is_finite()) {
                    return Ok(Some(Stop::NonFinite));
                }
                let b_loss = self.breakdown(&ev.parts);
                self.params.mlp.set_params(&next)?;
                self.steps += 1;
                self.step_seconds += t0.elapsed().as_secs_f64();
                self.record(Phase::Adam, b, &b_loss)?;
                done += 1;
            }
            self.epoch += 1;
        }
        Ok(None)
    }

    fn lbfgs_phase(&mut self) -> Result<Termination, TrainError> {
        let wolfe = self.cfg.optim.wolfe();
        let mut state = LbfgsState::new(self.cfg.optim.lbfgs_history);
        for _ in 0..self.cfg.optim.max_epochs {
            let batches = self.epoch_batches()?;
            let mut stalled = 0;
            for (b, batch) in batches.iter().enumerate() {
                state.reset();
                let mut x = self.params.mlp.params().to_vec();
                let (mut f, mut g) = match self.evaluate(&x, batch) {
                    Ok(ev) => (ev.loss, ev.gradient.0),
                    Err(TrainError::Autodiff(AutodiffError::NonFiniteLoss { .. })) => return Ok(Termination::NonFiniteAbort),
                    Err(e) => return Err(e),
                };
                for _ in 0..self.cfg.optim.lbfgs_inner {
                    let t0 = Instant::now();
                    let mut last_parts = Vec::new();
                    let mut hard_error = None;
                    let result = {
                        let mut eval = |p: &[f64]| match self.evaluate(p, batch) {
                            Ok(ev) => {
                                last_parts = ev.parts;
                                (ev.loss, ev.gradient.0)
                            }
                            Err(TrainError::Autodiff(AutodiffError::NonFiniteLoss { .. })) => (f64::NAN, Vec::new()),
                            Err(e) => {
                                hard_error = Some(e);
                                (f64::NAN, Vec::new())
                            }
                        };
                        lbfgs_step(&mut state, &mut x, &mut f, &mut g, &mut eval, &wolfe)
                    };
                    if let Some(e) = hard_error {
                        return Err(e);
                    }
                    match result {
                        Ok(_) => {
                            self.params.mlp.set_params(&x)?;
                            self.steps += 1;
                            self.step_seconds += t0.elapsed().as_secs_f64();
                            let bl = self.breakdown(&last_parts);
                            self.record(Phase::Lbfgs, b, &bl)?;
                        }
                        Err(fail) => {
                            ::log::debug!("epoch {} batch {b}: line search failed ({})", self.epoch, fail.name());
                            if matches!(fail, LineSearchFailure::NotDescent | LineSearchFailure::StepUnderflow) {
                                stalled += 1;
                            }
                            break;
                        }
                    }
                }
            }
            self.epoch += 1;
            if stalled == batches.len() {
                ::log::info!("no batch admits a descent step; stopping after epoch {}", self.epoch);
                return Ok(Termination::DescentFailure);
            }
        }
        Ok(Termination::MaxEpochs)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            scales: self.cfg.scales,
            scenario: self.scenario.name.clone(),
            k_range: self.scenario.k_range,
            k_ref: self.scenario.k_ref,
        }
    }
}

fn write_checkpoint(dir: Option<&Path>, name: &str, ckpt: &Checkpoint, cfg: &TrainConfig) -> Result<(), TrainError> {
    if let Some(dir) = dir {
        ckpt.write(&dir.join(name), CheckpointFormat::from(&cfg.output.checkpoint_format))?;
    }
    Ok(())
}

fn out_err(path: &Path) -> impl Fn(std::io::Error) -> TrainError + '_ {
    move |e| TrainError::Output(format!("{}: {e}", path.display()))
}

/// Trains from a fresh initialisation.
pub fn train(
    config: &TrainConfig,
    set: &CollocationSet,
    reference: Option<&ReferenceSolution>,
) -> Result<TrainOutcome, TrainError> {
    train_with(config, set, reference, &TrainOptions::default())
}

pub fn train_with(
    config: &TrainConfig,
    set: &CollocationSet,
    reference: Option<&ReferenceSolution>,
    options: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let started = Instant::now();
    let scenario = config.scenario_spec()?;
    let parametric = config.parametric()?;
    let n_sd = config.network.n_sd;
    if set.n_sd != n_sd {
        return Err(TrainError::Config(format!("network.n_sd is {n_sd} but the point set is {}D", set.n_sd)));
    }
    if set.is_empty() {
        return Err(TrainError::EmptyData("the point set is empty".into()));
    }
    let re = config.scales.reynolds();
    let mut rng = ChaCha8Rng::seed_from_u64(config.network.seed);

    let (train_set, held_out) = if config.data.test_fraction > 0.0 && !set.volume.is_empty() {
        split_test_set_with_rng(set, config.data.test_fraction, &mut rng)?
    } else {
        (set.clone(), Vec::new())
    };

    let shape = NetworkShape {
        hidden_layers: config.network.hidden_layers,
        width: config.network.width,
        n_sd,
        parametric,
        mode: config.network.mode,
    };
    let params = match &options.init {
        Some(p) => p.clone(),
        None => init_params_with_rng(shape, config.network.seed, &mut rng)?,
    };

    let test = test_set(config, &scenario, &params, reference, &held_out)?;
    let opts = EvalOptions { deterministic: config.optim.deterministic, ..EvalOptions::default() };
    let mut run = Run {
        cfg: config,
        scenario,
        train: train_set,
        rng,
        params,
        re,
        opts,
        test,
        log: ConvergenceLog::default(),
        iteration: options.iteration_offset,
        epoch: 0,
        peak_workspace: Cell::new(0),
        steps: 0,
        step_seconds: 0.0,
        batches: 0,
    };
    let out_dir = options.out_dir.as_deref();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(out_err(dir))?;
    }
    ::log::info!(
        "training {}x{} network ({} parameters), Re = {re:.4}, {} training points, test metric {}",
        config.network.hidden_layers,
        config.network.width,
        run.params.mlp.n_params(),
        run.train.len(),
        run.test.metric()
    );
    let initial_test_loss = run.test_loss()?;

    let mut termination = None;
    if run.adam_phase()?.is_some() {
        termination = Some(Termination::NonFiniteAbort);
    }
    let adam_iterations = run.steps;
    if config.optim.adam_iters > 0 && termination.is_none() {
        write_checkpoint(out_dir, "adam.ckpt", &run.checkpoint(), config)?;
    }
    if termination.is_none() {
        termination = Some(run.lbfgs_phase()?);
    }
    let termination = termination.expect("set above");
    if termination == Termination::NonFiniteAbort {
        ::log::error!("training aborted on a non-finite loss; keeping the last good parameters");
    }
    let final_test_loss = run.test_loss()?;
    if let (Some(r), Some(t)) = (run.log.records.last_mut(), final_test_loss) {
        r.l_test = Some(t);
    }
    run.log.termination = Some(termination);

    let checkpoint = run.checkpoint();
    write_checkpoint(out_dir, "final.ckpt", &checkpoint, config)?;
    let wall = started.elapsed().as_secs_f64();
    let summary = RunSummary {
        termination,
        seed: config.network.seed,
        iterations: run.steps,
        adam_iterations,
        lbfgs_iterations: run.steps - adam_iterations,
        epochs: run.epoch,
        final_loss: run.log.records.last().map(LossSummary::from).unwrap_or_default(),
        test_metric: run.test.metric().into(),
        initial_test_loss,
        final_test_loss,
        wall_time_s: wall,
        mean_step_time_s: if run.steps > 0 { run.step_seconds / run.steps as f64 } else { 0.0 },
        peak_workspace_bytes: run.peak_workspace.get(),
        train_points: run.train.len(),
        test_points: held_out.len(),
        batches: run.batches,
        checkpoint_id: checkpoint.id(),
        f_bc: config.loss.f_bc,
        f_sigma: config.loss.f_sigma,
    };
    if let Some(dir) = out_dir {
        write_run_files(dir, &run.log, &summary, options.iteration_offset > 0)?;
    }
    ::log::info!(
        "finished: {} after {} iterations, final L_total {:.4e}",
        termination.name(),
        summary.iterations,
        summary.final_loss.l_total
    );
    Ok(TrainOutcome { checkpoint, log: run.log, summary })
}

fn test_set(
    config: &TrainConfig,
    scenario: &ScenarioSpec,
    params: &NetworkParams,
    reference: Option<&ReferenceSolution>,
    held_out: &[CollocationPoint],
) -> Result<TestSet, TrainError> {
    if let Some(r) = reference {
        if r.n_sd != params.n_sd {
            return Err(TrainError::Config(format!("reference is {}D, network {}D", r.n_sd, params.n_sd)));
        }
        let k = config.data.reference_k.unwrap_or(scenario.k_ref);
        let inputs = evaluation::network_inputs(params, &config.scales, &r.positions, k);
        return Ok(TestSet::Reference { inputs, values: FieldValues::from(r).nondimensional(&config.scales) });
    }
    if held_out.is_empty() {
        return Ok(TestSet::None);
    }
    let mut only_volume = CollocationSet::empty(params.n_sd);
    only_volume.volume = held_out.to_vec();
    let ks = KAssignment::constant(&only_volume, scenario.k_ref);
    let sets = apply_parametric_pipeline(&only_volume, &ks, scenario)?;
    if sets.volume.is_empty() {
        return Ok(TestSet::None);
    }
    let batch = Batch { volume: sets.volume, ..Default::default() };
    Ok(TestSet::Proxy(prepare_batch(&batch, &config.scales, params.n_sd, params.parametric)))
}

/// `convergence.csv` (appended to on resume) and `summary.json`.
fn write_run_files(dir: &Path, log: &ConvergenceLog, summary: &RunSummary, append: bool) -> Result<(), TrainError> {
    let csv_path = dir.join("convergence.csv");
    let mut combined = ConvergenceLog::default();
    if append && csv_path.exists() {
        let f = std::fs::File::open(&csv_path).map_err(out_err(&csv_path))?;
        combined = ConvergenceLog::read_csv(f)?;
    }
    combined.records.extend_from_slice(&log.records);
    let f = std::fs::File::create(&csv_path).map_err(out_err(&csv_path))?;
    combined.write_csv(std::io::BufWriter::new(f))?;
    let json_path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(summary).map_err(|e| TrainError::Output(e.to_string()))?;
    std::fs::write(&json_path, text + "\n").map_err(out_err(&json_path))?;
    Ok(())
}

/// Continues from a checkpoint with fresh optimizer state. Changed loss
/// weights are allowed; a changed network layout is not.
pub fn resume(
    checkpoint: &Checkpoint,
    config: &TrainConfig,
    set: &CollocationSet,
    reference: Option<&ReferenceSolution>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let shape = NetworkShape {
        hidden_layers: config.network.hidden_layers,
        width: config.network.width,
        n_sd: config.network.n_sd,
        parametric: config.parametric()?,
        mode: config.network.mode,
    };
    let expected = Checkpoint {
        params: init_params_with_rng(shape, config.network.seed, &mut ChaCha8Rng::seed_from_u64(0))?,
        scales: config.scales,
        ..checkpoint.clone()
    };
    let diff = expected.layout_differences(checkpoint);
    if !diff.is_empty() {
        return Err(TrainError::Layout(diff));
    }
    let mut offset = 0;
    if let Some(dir) = out_dir {
        let prev = dir.join("summary.json");
        if let Ok(text) = std::fs::read_to_string(&prev) {
            if let Ok(s) = serde_json::from_str::<RunSummary>(&text) {
                if s.f_bc != config.loss.f_bc || s.f_sigma != config.loss.f_sigma {
                    ::log::info!(
                        "resuming with f_bc {} -> {}, f_sigma {} -> {}",
                        s.f_bc,
                        config.loss.f_bc,
                        s.f_sigma,
                        config.loss.f_sigma
                    );
                }
            }
        }
        let log_path = dir.join("convergence.csv");
        if let Ok(f) = std::fs::File::open(&log_path) {
            offset = ConvergenceLog::read_csv(f)?.last_iteration();
        }
    }
    ::log::info!("resuming from checkpoint {} at iteration {offset}", checkpoint.id());
    let options = TrainOptions {
        init: Some(checkpoint.params.clone()),
        out_dir: out_dir.map(Path::to_path_buf),
        iteration_offset: offset,
    };
    train_with(config, set, reference, &options)
}
