//! Post-training evaluation: relative L2 error, field prediction and export,
//! reference interpolation and outlet mass-flow ratios.

mod export;
mod kdtree;

use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{forward_spec, AutodiffError, DiffSpec};
use crate::network::{velocity_pressure, Checkpoint, NetworkError, NetworkParams};
use crate::physics::ReferenceScales;
use crate::sampling::ReferenceSolution;

pub use export::{read_field, save_field, write_field, FieldFile};
pub use kdtree::KdTree;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("reference field has zero norm; relative error undefined")]
    ZeroReference,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("right outlet mass flow {0} is not positive (reverse flow dominates)")]
    ReverseFlow(f64),
    #[error("invalid outlet description: {0}")]
    Outlet(String),
    #[error("empty reference cloud")]
    EmptyReference,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("i/o error on {path}")]
    Io { path: String, source: std::io::Error },
    #[error("field file line {line}: {msg}")]
    Parse { line: u64, msg: String },
}

/// Velocity and pressure at a list of points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FieldValues {
    pub n_sd: usize,
    pub velocity: Vec<[f64; 3]>,
    pub pressure: Vec<f64>,
}

impl FieldValues {
    pub fn len(&self) -> usize {
        self.pressure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pressure.is_empty()
    }

    fn check(&self) -> Result<(), EvaluationError> {
        if self.velocity.len() != self.pressure.len() {
            return Err(EvaluationError::Shape(format!(
                "{} velocities but {} pressures",
                self.velocity.len(),
                self.pressure.len()
            )));
        }
        Ok(())
    }

    pub fn nondimensional(&self, scales: &ReferenceScales) -> Self {
        Self {
            n_sd: self.n_sd,
            velocity: self.velocity.iter().map(|v| v.map(|c| scales.velocity_star(c))).collect(),
            pressure: self.pressure.iter().map(|&p| scales.pressure_star(p)).collect(),
        }
    }
}

impl From<&ReferenceSolution> for FieldValues {
    fn from(r: &ReferenceSolution) -> Self {
        Self { n_sd: r.n_sd, velocity: r.velocity.clone(), pressure: r.pressure.clone() }
    }
}

/// `‖(v, p)_pred − (v, p)_ref‖₂ / ‖(v, p)_ref‖₂` pooled over all components
/// and points.
pub fn test_loss(pred: &FieldValues, reference: &FieldValues) -> Result<f64, EvaluationError> {
    pred.check()?;
    reference.check()?;
    if pred.len() != reference.len() || pred.n_sd != reference.n_sd {
        return Err(EvaluationError::Shape(format!(
            "prediction has {} points in {}D, reference {} in {}D",
            pred.len(),
            pred.n_sd,
            reference.len(),
            reference.n_sd
        )));
    }
    let n = reference.n_sd;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..pred.len() {
        for d in 0..n {
            num += (pred.velocity[i][d] - reference.velocity[i][d]).powi(2);
            den += reference.velocity[i][d].powi(2);
        }
        num += (pred.pressure[i] - reference.pressure[i]).powi(2);
        den += reference.pressure[i].powi(2);
    }
    if den == 0.0 {
        return Err(EvaluationError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// Nondimensional network inputs for SI positions at parameter `k` (meters).
pub fn network_inputs(params: &NetworkParams, scales: &ReferenceScales, positions: &[[f64; 3]], k: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(positions.len() * params.n_inputs());
    for x in positions {
        out.extend(x[..params.n_sd].iter().map(|&c| scales.length_star(c)));
        if params.parametric {
            out.push(scales.length_star(k));
        }
    }
    out
}

const PREDICT_CHUNK: usize = 1024;

/// Nondimensional velocity and pressure for flat nondimensional inputs.
pub fn predict_nondimensional(params: &NetworkParams, inputs: &[f64]) -> Result<FieldValues, EvaluationError> {
    let n_in = params.n_inputs();
    if !inputs.len().is_multiple_of(n_in) {
        return Err(EvaluationError::Shape(format!("{} inputs is not a multiple of {n_in}", inputs.len())));
    }
    let layout = params.layout();
    let spec = DiffSpec::new(params.mode.prediction_order(), params.n_sd);
    let chunks: Vec<Vec<([f64; 3], f64)>> = inputs
        .par_chunks(PREDICT_CHUNK * n_in)
        .map(|chunk| -> Result<_, EvaluationError> {
            let d = forward_spec(&params.mlp, chunk, spec)?;
            (0..d.len()).map(|i| Ok(velocity_pressure(&d.bundle(i), &layout)?)).collect()
        })
        .collect::<Result<_, _>>()?;
    let mut out = FieldValues { n_sd: params.n_sd, ..Default::default() };
    for (v, p) in chunks.into_iter().flatten() {
        out.velocity.push(v);
        out.pressure.push(p);
    }
    Ok(out)
}

/// SI field predicted by a checkpoint at one geometry parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPrediction {
    pub positions: Vec<[f64; 3]>,
    pub k: f64,
    pub values: FieldValues,
    pub checkpoint_id: String,
    pub scenario: String,
    pub scales: ReferenceScales,
    /// `k` lies outside the trained range.
    pub extrapolated: bool,
}

pub fn predict_field(ckpt: &Checkpoint, positions: &[[f64; 3]], k: f64) -> Result<FieldPrediction, EvaluationError> {
    let params = &ckpt.params;
    let extrapolated = params.parametric && !(k >= ckpt.k_range[0] && k <= ckpt.k_range[1]);
    if extrapolated {
        log::warn!("k = {k} lies outside the trained range [{}, {}]", ckpt.k_range[0], ckpt.k_range[1]);
    }
    let inputs = network_inputs(params, &ckpt.scales, positions, k);
    let nd = predict_nondimensional(params, &inputs)?;
    let s = &ckpt.scales;
    let values = FieldValues {
        n_sd: params.n_sd,
        velocity: nd.velocity.iter().map(|v| v.map(|c| s.velocity_si(c))).collect(),
        pressure: nd.pressure.iter().map(|&p| s.pressure_si(p)).collect(),
    };
    Ok(FieldPrediction {
        positions: positions.to_vec(),
        k,
        values,
        checkpoint_id: ckpt.id(),
        scenario: ckpt.scenario.clone(),
        scales: *s,
        extrapolated,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    /// Relative L2 error of nondimensional velocity and pressure.
    pub l_test: f64,
    /// m/s
    pub max_dv: f64,
    pub max_dv_at: [f64; 3],
    /// Pa
    pub max_dp: f64,
    pub max_dp_at: [f64; 3],
    /// `(name, rms)` per SI component: vx, vy[, vz], p.
    pub rms: Vec<(String, f64)>,
    pub points: usize,
}

impl ErrorReport {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["points", "l_test", "max_dv", "max_dv_x", "max_dv_y", "max_dv_z", "max_dp", "max_dp_x", "max_dp_y", "max_dp_z"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        cols.extend(self.rms.iter().map(|(n, _)| format!("rms_{n}")));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut vals = vec![self.points.to_string(), self.l_test.to_string(), self.max_dv.to_string()];
        vals.extend(self.max_dv_at.iter().map(|v| v.to_string()));
        vals.push(self.max_dp.to_string());
        vals.extend(self.max_dp_at.iter().map(|v| v.to_string()));
        vals.extend(self.rms.iter().map(|(_, v)| v.to_string()));
        vals.join(",")
    }

    pub fn to_text(&self) -> String {
        let at = |x: &[f64; 3]| format!("({:.6}, {:.6}, {:.6})", x[0], x[1], x[2]);
        let mut s = format!("points          {}\nL_test          {:.6e}\n", self.points, self.l_test);
        s += &format!("max |dv|        {:.6e} m/s at {}\n", self.max_dv, at(&self.max_dv_at));
        s += &format!("max |dp|        {:.6e} Pa at {}\n", self.max_dp, at(&self.max_dp_at));
        for (n, v) in &self.rms {
            s += &format!("rms {n:<11} {v:.6e}\n");
        }
        s
    }
}

/// Compares an SI prediction against a point-aligned SI reference.
pub fn error_report(pred: &FieldPrediction, reference: &FieldValues) -> Result<ErrorReport, EvaluationError> {
    let l_test = test_loss(&pred.values.nondimensional(&pred.scales), &reference.nondimensional(&pred.scales))?;
    let n = reference.n_sd;
    let (mut max_dv, mut max_dv_at, mut max_dp, mut max_dp_at) = (0.0, [0.0; 3], 0.0, [0.0; 3]);
    let mut sq = vec![0.0; n + 1];
    for i in 0..reference.len() {
        let dv: Vec<f64> = (0..n).map(|d| pred.values.velocity[i][d] - reference.velocity[i][d]).collect();
        let dp = pred.values.pressure[i] - reference.pressure[i];
        let mag = dv.iter().map(|c| c * c).sum::<f64>().sqrt();
        if mag > max_dv {
            max_dv = mag;
            max_dv_at = pred.positions[i];
        }
        if dp.abs() > max_dp {
            max_dp = dp.abs();
            max_dp_at = pred.positions[i];
        }
        for d in 0..n {
            sq[d] += dv[d] * dv[d];
        }
        sq[n] += dp * dp;
    }
    let m = reference.len().max(1) as f64;
    let names = ["vx", "vy", "vz"];
    let mut rms: Vec<(String, f64)> = (0..n).map(|d| (names[d].to_string(), (sq[d] / m).sqrt())).collect();
    rms.push(("p".into(), (sq[n] / m).sqrt()));
    Ok(ErrorReport { l_test, max_dv, max_dv_at, max_dp, max_dp_at, rms, points: reference.len() })
}

/// Reference values carried to query points by nearest-neighbour lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct Interpolated {
    pub values: FieldValues,
    pub indices: Vec<usize>,
    pub mean_distance: f64,
    pub max_distance: f64,
}

pub fn nearest_reference_interpolation(
    reference: &ReferenceSolution,
    queries: &[[f64; 3]],
) -> Result<Interpolated, EvaluationError> {
    if reference.positions.is_empty() {
        return Err(EvaluationError::EmptyReference);
    }
    let tree = KdTree::build(&reference.positions, reference.n_sd);
    let hits: Vec<(usize, f64)> = queries.par_iter().map(|q| tree.nearest(q).expect("nonempty tree")).collect();
    let mut values = FieldValues { n_sd: reference.n_sd, ..Default::default() };
    let (mut sum, mut max) = (0.0, 0.0f64);
    for &(i, d) in &hits {
        values.velocity.push(reference.velocity[i]);
        values.pressure.push(reference.pressure[i]);
        sum += d;
        max = max.max(d);
    }
    let mean_distance = if hits.is_empty() { 0.0 } else { sum / hits.len() as f64 };
    Ok(Interpolated { values, indices: hits.iter().map(|h| h.0).collect(), mean_distance, max_distance: max })
}

/// Velocities and area weights on one outlet with its declared outward normal.
#[derive(Clone, Copy, Debug)]
pub struct OutletFlow<'a> {
    pub velocity: &'a [[f64; 3]],
    pub weights: &'a [f64],
    pub normal: [f64; 3],
}

impl OutletFlow<'_> {
    /// `ρ Σ w_i (v_i · n)`.
    pub fn mass_flow(&self, rho: f64) -> Result<f64, EvaluationError> {
        if self.velocity.len() != self.weights.len() {
            return Err(EvaluationError::Outlet(format!(
                "{} velocities but {} weights",
                self.velocity.len(),
                self.weights.len()
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0)) {
            return Err(EvaluationError::Outlet(format!("area weight {w} is not positive")));
        }
        let norm = self.normal.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(EvaluationError::Outlet(format!("normal {:?} is not unit length", self.normal)));
        }
        let flux: f64 = self
            .velocity
            .iter()
            .zip(self.weights)
            .map(|(v, w)| w * (v[0] * self.normal[0] + v[1] * self.normal[1] + v[2] * self.normal[2]))
            .sum();
        Ok(rho * flux)
    }
}

/// `ṁ_L / ṁ_R`.
pub fn mass_flow_ratio(left: &OutletFlow, right: &OutletFlow, rho: f64) -> Result<f64, EvaluationError> {
    let m_l = left.mass_flow(rho)?;
    let m_r = right.mass_flow(rho)?;
    if !(m_r > 0.0) {
        return Err(EvaluationError::ReverseFlow(m_r));
    }
    Ok(m_l / m_r)
}
