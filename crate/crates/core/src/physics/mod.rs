//! Nondimensionalisation, mixed-form Navier-Stokes residuals and the loss.

mod loss;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{stress_components, FieldMode, KinematicState};

pub use loss::{PhysicsLoss, PointRole, PART_NAMES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("reference scale {name} must be positive and finite, got {value}")]
    InvalidScale { name: &'static str, value: f64 },
    #[error("Reynolds number {0} is degenerate (must be at least 1e-6)")]
    DegenerateReynolds(f64),
    #[error("all point sets are empty")]
    EmptyLoss,
    #[error("loss weight {name} must be positive and finite, got {value}")]
    InvalidWeight { name: &'static str, value: f64 },
}

pub const MIN_REYNOLDS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceScales {
    pub l_ref: f64,
    pub v_ref: f64,
    pub rho: f64,
    pub mu: f64,
}

impl ReferenceScales {
    pub fn new(l_ref: f64, v_ref: f64, rho: f64, mu: f64) -> Result<Self, PhysicsError> {
        let s = Self { l_ref, v_ref, rho, mu };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        for (name, value) in [("L_ref", self.l_ref), ("V_ref", self.v_ref), ("rho", self.rho), ("mu", self.mu)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PhysicsError::InvalidScale { name, value });
            }
        }
        let re = self.reynolds();
        if !(re >= MIN_REYNOLDS) || !re.is_finite() {
            return Err(PhysicsError::DegenerateReynolds(re));
        }
        Ok(())
    }

    pub fn reynolds(&self) -> f64 {
        self.rho * self.v_ref * self.l_ref / self.mu
    }

    pub fn pressure_scale(&self) -> f64 {
        self.rho * self.v_ref * self.v_ref
    }

    pub fn length_star(&self, x: f64) -> f64 {
        x / self.l_ref
    }

    pub fn velocity_star(&self, v: f64) -> f64 {
        v / self.v_ref
    }

    pub fn pressure_star(&self, p: f64) -> f64 {
        p / self.pressure_scale()
    }

    pub fn length_si(&self, x: f64) -> f64 {
        x * self.l_ref
    }

    pub fn velocity_si(&self, v: f64) -> f64 {
        v * self.v_ref
    }

    pub fn pressure_si(&self, p: f64) -> f64 {
        p * self.pressure_scale()
    }

    /// SI `(position, velocity, pressure)` to nondimensional form.
    pub fn nondimensionalize(&self, x: [f64; 3], v: [f64; 3], p: f64) -> ([f64; 3], [f64; 3], f64) {
        (x.map(|c| self.length_star(c)), v.map(|c| self.velocity_star(c)), self.pressure_star(p))
    }

    pub fn redimensionalize(&self, x: [f64; 3], v: [f64; 3], p: f64) -> ([f64; 3], [f64; 3], f64) {
        (x.map(|c| self.length_si(c)), v.map(|c| self.velocity_si(c)), self.pressure_si(p))
    }
}

pub fn reynolds(scales: &ReferenceScales) -> f64 {
    scales.reynolds()
}

/// Pointwise residuals. Stress residual entries follow the unique-component
/// order of the output head; unused trailing entries are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResidualVector {
    pub n_sd: usize,
    pub momentum: [f64; 3],
    pub stress: [f64; 6],
    pub trace: f64,
    /// False for the no-stress ablation, which has only a momentum residual.
    pub has_stress: bool,
}

impl ResidualVector {
    pub fn stress_len(&self) -> usize {
        if self.has_stress {
            stress_components(self.n_sd).len()
        } else {
            0
        }
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.momentum = self.momentum.map(|v| v * c);
        self.stress = self.stress.map(|v| v * c);
        self.trace *= c;
        self
    }
}

/// Mixed-form residuals for a state whose velocity comes from a stream
/// function or direct outputs.
pub fn compute_residuals(state: &KinematicState, re: f64) -> Result<ResidualVector, PhysicsError> {
    compute_residuals_mode(state, re, FieldMode::Mixed)
}

pub fn compute_residuals_mode(
    state: &KinematicState,
    re: f64,
    mode: FieldMode,
) -> Result<ResidualVector, PhysicsError> {
    if !(re > 0.0) || !re.is_finite() {
        return Err(PhysicsError::DegenerateReynolds(re));
    }
    let n = state.n_sd;
    let g = &state.velocity_gradient;
    let mut r = ResidualVector { n_sd: n, has_stress: mode != FieldMode::NoStress, ..Default::default() };
    for i in 0..n {
        let conv: f64 = (0..n).map(|j| state.velocity[j] * g[i][j]).sum();
        r.momentum[i] = if mode == FieldMode::NoStress {
            conv + state.pressure_gradient[i] - state.velocity_laplacian[i] / re
        } else {
            conv - state.stress_divergence[i]
        };
    }
    if r.has_stress {
        for (c, &(i, j)) in stress_components(n).iter().enumerate() {
            let iso = if i == j { state.pressure } else { 0.0 };
            r.stress[c] = (g[i][j] + g[j][i]) / re - iso - state.stress[i][j];
        }
        // Summed per diagonal entry so that an isotropic stress cancels exactly.
        r.trace = (0..n).map(|i| state.pressure + state.stress[i][i]).sum::<f64>() / n as f64;
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub l_d: f64,
    pub l_n: f64,
    pub l_f: f64,
    pub l_v: f64,
    pub l_sigma: f64,
    pub l_p: f64,
    pub f_bc: f64,
    pub f_sigma: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    pub fn from_components(l_d: f64, l_n: f64, l_v: f64, l_sigma: f64, l_p: f64, f_bc: f64, f_sigma: f64) -> Self {
        let l_f = l_v + f_sigma * l_sigma + l_p;
        Self { l_d, l_n, l_f, l_v, l_sigma, l_p, f_bc, f_sigma, l_total: f_bc * (l_d + l_n) + l_f }
    }
}

pub(crate) fn check_weights(f_bc: f64, f_sigma: f64) -> Result<(), PhysicsError> {
    for (name, value) in [("f_BC", f_bc), ("f_sigma", f_sigma)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(PhysicsError::InvalidWeight { name, value });
        }
    }
    Ok(())
}

fn mean_sq<'a>(rows: impl Iterator<Item = &'a [f64]>) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for row in rows {
        sum += row.iter().map(|v| v * v).sum::<f64>();
        count += row.len();
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean-squared losses over points and components.
pub fn assemble_loss(
    residuals: &[ResidualVector],
    dirichlet_errors: &[Vec<f64>],
    neumann_errors: &[f64],
    f_bc: f64,
    f_sigma: f64,
) -> Result<LossBreakdown, PhysicsError> {
    check_weights(f_bc, f_sigma)?;
    if residuals.is_empty() && dirichlet_errors.is_empty() && neumann_errors.is_empty() {
        return Err(PhysicsError::EmptyLoss);
    }
    let l_v = mean_sq(residuals.iter().map(|r| &r.momentum[..r.n_sd]));
    let l_sigma = mean_sq(residuals.iter().map(|r| &r.stress[..r.stress_len()]));
    let l_p = mean_sq(residuals.iter().filter(|r| r.has_stress).map(|r| std::slice::from_ref(&r.trace)));
    let l_d = mean_sq(dirichlet_errors.iter().map(Vec::as_slice));
    let l_n = mean_sq(neumann_errors.iter().map(std::slice::from_ref));
    Ok(LossBreakdown::from_components(l_d, l_n, l_v, l_sigma, l_p, f_bc, f_sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cylinder_scales() -> ReferenceScales {
        ReferenceScales::new(1.1, 1.4, 1.0, 0.02).unwrap()
    }

    #[test]
    fn nondimensional_values() {
        let s = cylinder_scales();
        assert_eq!(s.length_star(1.1), 1.0);
        assert_eq!(s.velocity_star(1.4), 1.0);
        assert!((s.pressure_star(1.96) - 1.0).abs() < 1e-15);
        assert!((s.pressure_si(1.0) - 1.96).abs() < 1e-15);
        assert_eq!(s.velocity_si(0.0), 0.0);
    }

    #[test]
    fn round_trip() {
        let s = cylinder_scales();
        let (x, v, p) = ([0.3, -0.7, 0.05], [1.2, 0.0, -3.0], 4.5);
        let (xs, vs, ps) = s.nondimensionalize(x, v, p);
        let (x2, v2, p2) = s.redimensionalize(xs, vs, ps);
        for i in 0..3 {
            assert!((x[i] - x2[i]).abs() <= 4.0 * f64::EPSILON * x[i].abs());
            assert!((v[i] - v2[i]).abs() <= 4.0 * f64::EPSILON * v[i].abs());
        }
        assert!((p - p2).abs() <= 4.0 * f64::EPSILON * p);
    }

    #[test]
    fn reynolds_numbers() {
        assert!((cylinder_scales().reynolds() - 77.0).abs() < 1e-12);
        let t = ReferenceScales::new(0.3, 1.0, 1.0, 0.02).unwrap();
        assert!((reynolds(&t) - 15.0).abs() < 1e-12);
        let doubled = ReferenceScales::new(1.1, 1.4, 1.0, 0.04).unwrap();
        assert!((doubled.reynolds() - 38.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_scales_rejected() {
        assert!(ReferenceScales::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ReferenceScales::new(1.0, 1.0, 1.0, f64::NAN).is_err());
        assert_eq!(
            ReferenceScales::new(1e-4, 1e-4, 1.0, 1e3).unwrap_err(),
            PhysicsError::DegenerateReynolds(1e-4 * 1e-4 / 1e3)
        );
    }

    #[test]
    fn hydrostatic_rest_state_has_zero_residuals() {
        let p = 0.8;
        let mut st = KinematicState { n_sd: 3, pressure: p, ..Default::default() };
        for i in 0..3 {
            st.stress[i][i] = -p;
        }
        let r = compute_residuals(&st, 77.0).unwrap();
        assert_eq!(r.momentum, [0.0; 3]);
        assert_eq!(r.stress, [0.0; 6]);
        assert_eq!(r.trace, 0.0);
        let zero = compute_residuals(&KinematicState { n_sd: 2, ..Default::default() }, 1.0).unwrap();
        assert_eq!(zero, ResidualVector { n_sd: 2, has_stress: true, ..Default::default() });
    }

    #[test]
    fn non_positive_reynolds_rejected() {
        let st = KinematicState { n_sd: 2, ..Default::default() };
        assert!(compute_residuals(&st, 0.0).is_err());
        assert!(compute_residuals(&st, -1.0).is_err());
    }

    #[test]
    fn zero_errors_give_zero_breakdown() {
        let r = vec![ResidualVector { n_sd: 3, has_stress: true, ..Default::default() }; 4];
        let b = assemble_loss(&r, &[vec![0.0; 3]], &[0.0], 10.0, 1.0).unwrap();
        assert_eq!((b.l_d, b.l_n, b.l_f, b.l_v, b.l_sigma, b.l_p, b.l_total), (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn single_dirichlet_point_averages_components() {
        let b = assemble_loss(&[], &[vec![1.0, 0.0, 0.0]], &[], 10.0, 1.0).unwrap();
        assert!((b.l_d - 1.0 / 3.0).abs() < 1e-15);
        assert!((b.l_total - 10.0 * b.l_d).abs() < 1e-15);
    }

    #[test]
    fn stress_weight_scales_only_stress_term() {
        let b = LossBreakdown::from_components(0.0, 0.0, 0.0, 0.01, 0.0, 100.0, 100.0);
        assert!((b.l_f - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_empty_rejected() {
        assert_eq!(assemble_loss(&[], &[], &[], 1.0, 1.0), Err(PhysicsError::EmptyLoss));
    }
}
