//! Convergence records and the run summary.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::physics::LossBreakdown;

use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Adam,
    Lbfgs,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Adam => "adam",
            Phase::Lbfgs => "lbfgs",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Every batch's line search failed in one epoch.
    DescentFailure,
    MaxEpochs,
    NonFiniteAbort,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::DescentFailure => "descent-failure",
            Termination::MaxEpochs => "max-epochs",
            Termination::NonFiniteAbort => "non-finite-abort",
        }
    }
}

/// One optimizer step. Adam rows hold the batch loss at the parameters the
/// step started from, L-BFGS rows the loss at the accepted point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub phase: Phase,
    pub epoch: u64,
    pub batch: usize,
    pub l_total: f64,
    pub l_d: f64,
    pub l_n: f64,
    pub l_v: f64,
    pub l_sigma: f64,
    pub l_p: f64,
    pub l_test: Option<f64>,
}

impl IterationRecord {
    pub fn new(iteration: u64, phase: Phase, epoch: u64, batch: usize, b: &LossBreakdown) -> Self {
        Self {
            iteration,
            phase,
            epoch,
            batch,
            l_total: b.l_total,
            l_d: b.l_d,
            l_n: b.l_n,
            l_v: b.l_v,
            l_sigma: b.l_sigma,
            l_p: b.l_p,
            l_test: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceLog {
    pub records: Vec<IterationRecord>,
    pub termination: Option<Termination>,
}

impl ConvergenceLog {
    pub fn last_iteration(&self) -> u64 {
        self.records.last().map_or(0, |r| r.iteration)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TrainError> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.records {
            wr.serialize(r).map_err(|e| TrainError::Output(e.to_string()))?;
        }
        if self.records.is_empty() {
            wr.write_record(["iteration", "phase", "epoch", "batch", "l_total", "l_d", "l_n", "l_v", "l_sigma", "l_p", "l_test"])
                .map_err(|e| TrainError::Output(e.to_string()))?;
        }
        wr.flush().map_err(|e| TrainError::Output(e.to_string()))
    }

    /// Records only; the termination reason lives in the summary.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, TrainError> {
        let mut rd = csv::Reader::from_reader(r);
        let records = rd
            .deserialize()
            .collect::<Result<Vec<IterationRecord>, _>>()
            .map_err(|e| TrainError::Output(format!("convergence log: {e}")))?;
        Ok(Self { records, termination: None })
    }
}

/// Machine-readable outcome of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub termination: Termination,
    pub seed: u64,
    pub iterations: u64,
    pub adam_iterations: u64,
    pub lbfgs_iterations: u64,
    /// Passes over the batch list in both phases.
    pub epochs: u64,
    pub final_loss: LossSummary,
    /// `relative-l2`, `physics-proxy` or `none`.
    pub test_metric: String,
    pub initial_test_loss: Option<f64>,
    pub final_test_loss: Option<f64>,
    pub wall_time_s: f64,
    pub mean_step_time_s: f64,
    /// Largest derivative workspace of a single batch evaluation.
    pub peak_workspace_bytes: usize,
    pub train_points: usize,
    pub test_points: usize,
    pub batches: usize,
    pub checkpoint_id: String,
    pub f_bc: f64,
    pub f_sigma: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub l_total: f64,
    pub l_d: f64,
    pub l_n: f64,
    pub l_v: f64,
    pub l_sigma: f64,
    pub l_p: f64,
}

impl From<&IterationRecord> for LossSummary {
    fn from(r: &IterationRecord) -> Self {
        Self { l_total: r.l_total, l_d: r.l_d, l_n: r.l_n, l_v: r.l_v, l_sigma: r.l_sigma, l_p: r.l_p }
    }
}
