//! Collocation point sets, test splitting and per-epoch parametric resampling.
//!
//! Positions, velocities and pressures are SI here; conversion to the
//! nondimensional network frame happens when a batch is assembled.

pub mod domains;
mod io;
mod pipeline;
mod scenario;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use io::{
    load_point_sets, load_reference, read_point_sets, read_reference, save_point_sets, save_reference, write_point_sets,
    write_reference, ReferenceSolution,
};
pub use pipeline::{
    apply_parametric_pipeline, make_batches, make_batches_with_rng, sample_parameters, sample_parameters_with_rng,
    Batch, KAssignment, Rejection, SampledPoint, SampledSets,
};
pub use scenario::{Axis, Region, ScenarioConfig, ScenarioSpec};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("i/o error on {path}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("line {line}: point in set '{set}' is missing its {label} label")]
    MissingLabel { line: u64, set: char, label: &'static str },
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
    #[error("maximum batch size must be at least 1")]
    BatchSize,
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("k assignment does not match the point set ({0})")]
    Assignment(String),
}

/// Point population tags as they appear in the point CSV `set` column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Population {
    Volume,
    Dirichlet,
    Neumann,
    Moving,
}

impl Population {
    pub const ALL: [Population; 4] = [Population::Volume, Population::Dirichlet, Population::Neumann, Population::Moving];

    pub fn tag(self) -> char {
        match self {
            Population::Volume => 'f',
            Population::Dirichlet => 'D',
            Population::Neumann => 'N',
            Population::Moving => 'M',
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "f" => Some(Population::Volume),
            "D" => Some(Population::Dirichlet),
            "N" => Some(Population::Neumann),
            "M" => Some(Population::Moving),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CollocationPoint {
    /// Meters; third component zero in 2D.
    pub position: [f64; 3],
    pub velocity: Option<[f64; 3]>,
    pub pressure: Option<f64>,
    /// Boundary area weight in m² (m in 2D).
    pub area: Option<f64>,
}

impl CollocationPoint {
    pub fn at(position: [f64; 3]) -> Self {
        Self { position, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub n_sd: usize,
    pub volume: Vec<CollocationPoint>,
    pub dirichlet: Vec<CollocationPoint>,
    pub neumann: Vec<CollocationPoint>,
    pub moving: Vec<CollocationPoint>,
}

impl CollocationSet {
    pub fn empty(n_sd: usize) -> Self {
        Self { n_sd, volume: vec![], dirichlet: vec![], neumann: vec![], moving: vec![] }
    }

    pub fn population(&self, p: Population) -> &[CollocationPoint] {
        match p {
            Population::Volume => &self.volume,
            Population::Dirichlet => &self.dirichlet,
            Population::Neumann => &self.neumann,
            Population::Moving => &self.moving,
        }
    }

    pub fn population_mut(&mut self, p: Population) -> &mut Vec<CollocationPoint> {
        match p {
            Population::Volume => &mut self.volume,
            Population::Dirichlet => &mut self.dirichlet,
            Population::Neumann => &mut self.neumann,
            Population::Moving => &mut self.moving,
        }
    }

    pub fn len(&self) -> usize {
        self.volume.len() + self.dirichlet.len() + self.neumann.len() + self.moving.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(N_f, N_D including N_M, N_N, N_M)`.
    pub fn counts(&self) -> (usize, usize, usize, usize) {
        (self.volume.len(), self.dirichlet.len() + self.moving.len(), self.neumann.len(), self.moving.len())
    }
}

/// Moves a uniformly random `floor(fraction * N_f)` volume points into a test
/// set. Boundary populations are never split.
pub fn split_test_set(
    set: &CollocationSet,
    fraction: f64,
    seed: u64,
) -> Result<(CollocationSet, Vec<CollocationPoint>), SamplingError> {
    split_test_set_with_rng(set, fraction, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn split_test_set_with_rng<R: Rng + ?Sized>(
    set: &CollocationSet,
    fraction: f64,
    rng: &mut R,
) -> Result<(CollocationSet, Vec<CollocationPoint>), SamplingError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SamplingError::Fraction(fraction));
    }
    let n = set.volume.len();
    let n_test = (fraction * n as f64).floor() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut is_test = vec![false; n];
    for &i in &idx[..n_test] {
        is_test[i] = true;
    }
    let mut train = set.clone();
    train.volume = set.volume.iter().zip(&is_test).filter(|(_, &t)| !t).map(|(p, _)| *p).collect();
    let test = set.volume.iter().zip(&is_test).filter(|(_, &t)| t).map(|(p, _)| *p).collect();
    Ok((train, test))
}
