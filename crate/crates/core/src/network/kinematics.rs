//! Linear map from a point's derivative bundle to velocity, velocity gradient,
//! pressure and stress. The map is sparse and linear, so its transpose carries
//! residual adjoints back onto the bundle.

use crate::autodiff::{ChannelSet, DerivativeBundle};

use super::{FieldMode, NetworkError, OutputLayout};

// Flat slots of the kinematic vector.
const V: usize = 0;
const G: usize = 3;
const P: usize = 12;
const S: usize = 13;
const DS: usize = 22;
const GP: usize = 25;
const LV: usize = 28;
pub const KIN_LEN: usize = 31;

/// Velocity and stress state at one point, nondimensional. Unused trailing
/// entries (third component in 2D) are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KinematicState {
    pub n_sd: usize,
    pub velocity: [f64; 3],
    /// `velocity_gradient[i][j] = d v_i / d x_j`.
    pub velocity_gradient: [[f64; 3]; 3],
    pub pressure: f64,
    pub stress: [[f64; 3]; 3],
    pub stress_divergence: [f64; 3],
    pub pressure_gradient: [f64; 3],
    /// Only filled in no-stress mode.
    pub velocity_laplacian: [f64; 3],
}

impl KinematicState {
    pub fn from_flat(n_sd: usize, k: &[f64; KIN_LEN]) -> Self {
        let mut s = Self { n_sd, pressure: k[P], ..Default::default() };
        for i in 0..3 {
            s.velocity[i] = k[V + i];
            s.stress_divergence[i] = k[DS + i];
            s.pressure_gradient[i] = k[GP + i];
            s.velocity_laplacian[i] = k[LV + i];
            for j in 0..3 {
                s.velocity_gradient[i][j] = k[G + 3 * i + j];
                s.stress[i][j] = k[S + 3 * i + j];
            }
        }
        s
    }

    pub fn divergence(&self) -> f64 {
        (0..self.n_sd).map(|i| self.velocity_gradient[i][i]).sum()
    }
}

pub(crate) mod flat {
    use super::*;

    pub const PRESSURE: usize = P;

    pub fn velocity(i: usize) -> usize {
        V + i
    }
    pub fn grad(i: usize, j: usize) -> usize {
        G + 3 * i + j
    }
    pub fn stress(i: usize, j: usize) -> usize {
        S + 3 * i + j
    }
    pub fn stress_div(i: usize) -> usize {
        DS + i
    }
    pub fn pressure_grad(i: usize) -> usize {
        GP + i
    }
    pub fn laplacian(i: usize) -> usize {
        LV + i
    }
}

/// Curl terms `v_i = sum sign * d Psi_a / d x_j` as `(sign, a, j)`.
fn curl_terms(n_sd: usize, i: usize) -> &'static [(f64, usize, usize)] {
    const C3: [[(f64, usize, usize); 2]; 3] =
        [[(1.0, 2, 1), (-1.0, 1, 2)], [(1.0, 0, 2), (-1.0, 2, 0)], [(1.0, 1, 0), (-1.0, 0, 1)]];
    const C2: [[(f64, usize, usize); 1]; 2] = [[(1.0, 0, 1)], [(-1.0, 0, 0)]];
    if n_sd == 3 {
        &C3[i]
    } else {
        &C2[i]
    }
}

/// Sparse `kin[k] += coef * bundle_raw[r]` entries.
#[derive(Clone, Debug)]
pub struct KinematicMap {
    n_sd: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl KinematicMap {
    /// Builds every entry the bundle's derivative order allows.
    pub fn new(layout: &OutputLayout, channels: &ChannelSet) -> Result<Self, NetworkError> {
        let n = layout.n_sd;
        if channels.dims() < n && channels.order() > 0 {
            return Err(NetworkError::MissingDims { have: channels.dims(), need: n });
        }
        let c = channels.len();
        let order = channels.order();
        let raw = |o: usize, ch: usize| o * c + ch;
        let mut e = Vec::new();
        match layout.mode {
            FieldMode::Mixed | FieldMode::NoStress => {
                for i in 0..n {
                    for &(sign, a, j) in curl_terms(n, i) {
                        let slot = layout.stream[a];
                        if order >= 1 {
                            e.push((flat::velocity(i), raw(slot, channels.first(j)), sign));
                        }
                        if order >= 2 {
                            for m in 0..n {
                                e.push((flat::grad(i, m), raw(slot, channels.second(j, m)), sign));
                            }
                        }
                        if order >= 3 {
                            for m in 0..n {
                                e.push((flat::laplacian(i), raw(slot, channels.third(j, m, m)), sign));
                            }
                        }
                    }
                }
            }
            FieldMode::NoStreamFunction => {
                for i in 0..n {
                    let slot = layout.velocity[i];
                    e.push((flat::velocity(i), raw(slot, 0), 1.0));
                    if order >= 1 {
                        for m in 0..n {
                            e.push((flat::grad(i, m), raw(slot, channels.first(m)), 1.0));
                        }
                    }
                }
            }
        }
        e.push((P, raw(layout.pressure, 0), 1.0));
        if order >= 1 {
            for m in 0..n {
                e.push((flat::pressure_grad(m), raw(layout.pressure, channels.first(m)), 1.0));
            }
        }
        for &(i, j, slot) in &layout.stress {
            e.push((flat::stress(i, j), raw(slot, 0), 1.0));
            if i != j {
                e.push((flat::stress(j, i), raw(slot, 0), 1.0));
            }
            if order >= 1 {
                e.push((flat::stress_div(i), raw(slot, channels.first(j)), 1.0));
                if i != j {
                    e.push((flat::stress_div(j), raw(slot, channels.first(i)), 1.0));
                }
            }
        }
        Ok(Self { n_sd: n, entries: e })
    }

    pub fn n_sd(&self) -> usize {
        self.n_sd
    }

    pub fn apply(&self, bundle_raw: &[f64], out: &mut [f64; KIN_LEN]) {
        out.fill(0.0);
        for &(k, r, c) in &self.entries {
            out[k] += c * bundle_raw[r];
        }
    }

    /// Adds `J^T adj_kin` to the bundle adjoint.
    pub fn transpose_add(&self, adj_kin: &[f64; KIN_LEN], adj_raw: &mut [f64]) {
        for &(k, r, c) in &self.entries {
            adj_raw[r] += c * adj_kin[k];
        }
    }
}

/// Full kinematic state; requires the derivative order the field mode needs
/// for its residuals.
pub fn kinematics_from_bundle(
    bundle: &DerivativeBundle,
    layout: &OutputLayout,
) -> Result<KinematicState, NetworkError> {
    let need = layout.mode.residual_order();
    if bundle.order() < need {
        return Err(NetworkError::MissingOrder { have: bundle.order(), need });
    }
    let map = KinematicMap::new(layout, bundle.channels())?;
    let mut flat = [0.0; KIN_LEN];
    map.apply(bundle.raw(), &mut flat);
    Ok(KinematicState::from_flat(layout.n_sd, &flat))
}

/// Velocity and pressure only; needs first derivatives of the stream function.
pub fn velocity_pressure(
    bundle: &DerivativeBundle,
    layout: &OutputLayout,
) -> Result<([f64; 3], f64), NetworkError> {
    let need = layout.mode.prediction_order();
    if bundle.order() < need {
        return Err(NetworkError::MissingOrder { have: bundle.order(), need });
    }
    let mut v = [0.0; 3];
    for (i, vi) in v.iter_mut().enumerate().take(layout.n_sd) {
        *vi = match layout.mode {
            FieldMode::NoStreamFunction => bundle.value(layout.velocity[i]),
            _ => curl_terms(layout.n_sd, i)
                .iter()
                .map(|&(s, a, j)| s * bundle.d1(layout.stream[a], j))
                .sum(),
        };
    }
    Ok((v, bundle.value(layout.pressure)))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::autodiff::{forward_spec, DiffSpec};
    use crate::network::init_params;

    fn bundle(n_sd: usize, order: usize, n_out: usize) -> DerivativeBundle {
        DerivativeBundle::zeros(Arc::new(ChannelSet::new(n_sd, order)), n_out)
    }

    #[test]
    fn curl_of_x_in_third_slot() {
        let layout = OutputLayout::new(3, FieldMode::Mixed).unwrap();
        let mut b = bundle(3, 2, 10);
        b.set_d1(2, 0, 1.0);
        let k = kinematics_from_bundle(&b, &layout).unwrap();
        assert_eq!(k.velocity, [0.0, -1.0, 0.0]);
    }

    #[test]
    fn curl_of_yz_in_first_slot() {
        // Psi1 = y z at (x, y, z) = (0.3, 0.7, -0.4)
        let (y, z) = (0.7, -0.4);
        let layout = OutputLayout::new(3, FieldMode::Mixed).unwrap();
        let mut b = bundle(3, 2, 10);
        b.set_value(0, y * z);
        b.set_d1(0, 1, z);
        b.set_d1(0, 2, y);
        b.set_d2(0, 1, 2, 1.0);
        let k = kinematics_from_bundle(&b, &layout).unwrap();
        assert_eq!(k.velocity, [0.0, y, -z]);
        assert_eq!(k.velocity_gradient[1][1], 1.0);
        assert_eq!(k.velocity_gradient[2][2], -1.0);
        assert_eq!(k.divergence(), 0.0);
    }

    #[test]
    fn planar_stream_function() {
        let (x, y) = (0.25, -1.5);
        let layout = OutputLayout::new(2, FieldMode::Mixed).unwrap();
        let mut b = bundle(2, 2, 5);
        b.set_d1(0, 0, 2.0 * x);
        b.set_d1(0, 1, 2.0 * y);
        b.set_d2(0, 0, 0, 2.0);
        b.set_d2(0, 1, 1, 2.0);
        let k = kinematics_from_bundle(&b, &layout).unwrap();
        assert_eq!(&k.velocity[..2], &[2.0 * y, -2.0 * x]);
        assert_eq!(k.velocity_gradient[0][1], 2.0);
        assert_eq!(k.velocity_gradient[1][0], -2.0);
    }

    #[test]
    fn missing_order_is_rejected() {
        let layout = OutputLayout::new(3, FieldMode::Mixed).unwrap();
        let b = bundle(3, 1, 10);
        assert!(matches!(
            kinematics_from_bundle(&b, &layout),
            Err(NetworkError::MissingOrder { have: 1, need: 2 })
        ));
        assert!(velocity_pressure(&b, &layout).is_ok());
    }

    #[test]
    fn stress_is_symmetric_from_shared_slots() {
        let layout = OutputLayout::new(3, FieldMode::Mixed).unwrap();
        let mut b = bundle(3, 2, 10);
        for (n, &(_, _, slot)) in layout.stress.iter().enumerate() {
            b.set_value(slot, n as f64 + 1.0);
            b.set_d1(slot, 0, 0.1 * n as f64);
        }
        let k = kinematics_from_bundle(&b, &layout).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(k.stress[i][j], k.stress[j][i]);
            }
        }
        assert_eq!(k.stress[2][1], 4.0);
    }

    #[test]
    fn random_network_is_divergence_free() {
        for n_sd in [2, 3] {
            let p = init_params(3, 12, n_sd, false, 11).unwrap();
            let layout = p.layout();
            let pts: Vec<f64> = (0..20 * n_sd).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
            let out = forward_spec(&p.mlp, &pts, DiffSpec::new(2, n_sd)).unwrap();
            for b in out.bundles() {
                let k = kinematics_from_bundle(&b, &layout).unwrap();
                assert!(k.divergence().abs() <= 1e-10, "{}", k.divergence());
            }
        }
    }

    #[test]
    fn transpose_matches_apply() {
        let layout = OutputLayout::new(3, FieldMode::NoStress).unwrap();
        let ch = ChannelSet::new(3, 3);
        let map = KinematicMap::new(&layout, &ch).unwrap();
        let n_raw = ch.len() * layout.width();
        let x: Vec<f64> = (0..n_raw).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: [f64; KIN_LEN] = std::array::from_fn(|i| (i as f64 * 0.91).cos());
        let mut ax = [0.0; KIN_LEN];
        map.apply(&x, &mut ax);
        let mut aty = vec![0.0; n_raw];
        map.transpose_add(&y, &mut aty);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
