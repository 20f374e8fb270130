//! Mixed-variable output head: stream function, pressure and the unique
//! Cauchy-stress components, plus network initialisation.

mod checkpoint;
mod kinematics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Activation, AutodiffError, Mlp};

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointFormat};
pub(crate) use kinematics::flat as kinematics_flat;
pub use kinematics::{kinematics_from_bundle, velocity_pressure, KinematicMap, KinematicState, KIN_LEN};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("spatial dimension must be 2 or 3, got {0}")]
    SpatialDim(usize),
    #[error("invalid network shape: {0}")]
    Shape(String),
    #[error("bundle carries derivatives up to order {have}, field mode needs {need}")]
    MissingOrder { have: usize, need: usize },
    #[error("bundle differentiates {have} inputs, layout needs {need}")]
    MissingDims { have: usize, need: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Which quantities the network predicts directly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FieldMode {
    /// Stream function, pressure and stress (the production scheme).
    #[default]
    Mixed,
    /// Experimental ablation: velocity, pressure and stress as direct outputs.
    NoStreamFunction,
    /// Experimental ablation: stream function and pressure; the viscous term
    /// is taken from velocity second derivatives.
    NoStress,
}

impl FieldMode {
    pub fn name(self) -> &'static str {
        match self {
            FieldMode::Mixed => "mixed",
            FieldMode::NoStreamFunction => "no-stream-function",
            FieldMode::NoStress => "no-stress",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mixed" => Some(FieldMode::Mixed),
            "no-stream-function" => Some(FieldMode::NoStreamFunction),
            "no-stress" => Some(FieldMode::NoStress),
            _ => None,
        }
    }

    /// Input-derivative order the residuals need.
    pub fn residual_order(self) -> usize {
        match self {
            FieldMode::Mixed => 2,
            FieldMode::NoStreamFunction => 1,
            FieldMode::NoStress => 3,
        }
    }

    /// Input-derivative order needed to recover velocity and pressure.
    pub fn prediction_order(self) -> usize {
        match self {
            FieldMode::NoStreamFunction => 0,
            _ => 1,
        }
    }
}

/// Unique stress components in output order (3D order of the mixed head).
pub const STRESS_3D: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 2), (1, 1), (2, 2)];
pub const STRESS_2D: [(usize, usize); 3] = [(0, 0), (0, 1), (1, 1)];

pub fn stress_components(n_sd: usize) -> &'static [(usize, usize)] {
    if n_sd == 3 {
        &STRESS_3D
    } else {
        &STRESS_2D
    }
}

/// Named output slots of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputLayout {
    pub n_sd: usize,
    pub mode: FieldMode,
    pub stream: Vec<usize>,
    pub velocity: Vec<usize>,
    pub pressure: usize,
    /// `(i, j, slot)` for each unique stress component.
    pub stress: Vec<(usize, usize, usize)>,
    names: Vec<String>,
}

impl OutputLayout {
    pub fn new(n_sd: usize, mode: FieldMode) -> Result<Self, NetworkError> {
        if n_sd != 2 && n_sd != 3 {
            return Err(NetworkError::SpatialDim(n_sd));
        }
        let n_stream = if n_sd == 3 { 3 } else { 1 };
        let mut names = Vec::new();
        let mut stream = Vec::new();
        let mut velocity = Vec::new();
        match mode {
            FieldMode::Mixed | FieldMode::NoStress => {
                for a in 0..n_stream {
                    stream.push(names.len());
                    names.push(if n_sd == 3 { format!("psi{}", a + 1) } else { "psi".to_string() });
                }
            }
            FieldMode::NoStreamFunction => {
                for i in 0..n_sd {
                    velocity.push(names.len());
                    names.push(format!("v{}", i + 1));
                }
            }
        }
        let pressure = names.len();
        names.push("p".into());
        let mut stress = Vec::new();
        if mode != FieldMode::NoStress {
            for &(i, j) in stress_components(n_sd) {
                stress.push((i, j, names.len()));
                names.push(format!("s{}{}", i + 1, j + 1));
            }
        }
        Ok(Self { n_sd, mode, stream, velocity, pressure, stress, names })
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn stress_slot(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.stress.iter().find(|&&(x, y, _)| x == a && y == b).map(|&(_, _, s)| s)
    }
}

/// Trainable network state plus the metadata that fixes its output layout.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub mlp: Mlp,
    pub n_sd: usize,
    pub parametric: bool,
    pub mode: FieldMode,
    pub seed: u64,
}

impl NetworkParams {
    pub fn layout(&self) -> OutputLayout {
        OutputLayout::new(self.n_sd, self.mode).expect("validated at construction")
    }

    pub fn n_inputs(&self) -> usize {
        self.n_sd + usize::from(self.parametric)
    }

    pub fn hidden_layers(&self) -> usize {
        self.mlp.n_layers() - 1
    }

    pub fn all_finite(&self) -> bool {
        self.mlp.params().iter().all(|v| v.is_finite())
    }
}

/// Shape of a network to be initialised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkShape {
    pub hidden_layers: usize,
    pub width: usize,
    pub n_sd: usize,
    pub parametric: bool,
    pub mode: FieldMode,
}

/// Glorot-uniform weights, zero biases, tanh hidden layers.
pub fn init_params(
    hidden_layers: usize,
    width: usize,
    n_sd: usize,
    parametric: bool,
    seed: u64,
) -> Result<NetworkParams, NetworkError> {
    let shape = NetworkShape { hidden_layers, width, n_sd, parametric, mode: FieldMode::Mixed };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_params_with_rng(shape, seed, &mut rng)
}

/// Initialisation drawing from a caller-owned generator.
pub fn init_params_with_rng<R: Rng + ?Sized>(
    shape: NetworkShape,
    seed: u64,
    rng: &mut R,
) -> Result<NetworkParams, NetworkError> {
    if shape.hidden_layers == 0 || shape.width == 0 {
        return Err(NetworkError::Shape(format!(
            "need at least one hidden layer of positive width, got {}x{}",
            shape.hidden_layers, shape.width
        )));
    }
    let layout = OutputLayout::new(shape.n_sd, shape.mode)?;
    let mut widths = vec![shape.n_sd + usize::from(shape.parametric)];
    widths.extend(std::iter::repeat_n(shape.width, shape.hidden_layers));
    widths.push(layout.width());
    let mut mlp = Mlp::zeros(widths.clone(), Activation::Tanh)?;
    for l in 0..mlp.n_layers() {
        let limit = (6.0 / (widths[l] + widths[l + 1]) as f64).sqrt();
        for w in mlp.weights_mut(l) {
            *w = rng.random_range(-limit..limit);
        }
    }
    Ok(NetworkParams { mlp, n_sd: shape.n_sd, parametric: shape.parametric, mode: shape.mode, seed })
}
