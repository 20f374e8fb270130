//! The training objective as a per-point bundle loss with hand-written
//! adjoints: residual -> kinematic state -> derivative bundle.

use crate::autodiff::{BundleLoss, ChannelSet, DerivativeBundle, DiffSpec};
use crate::network::{stress_components, FieldMode, KinematicMap, KinematicState, OutputLayout, KIN_LEN};

use super::{check_weights, compute_residuals_mode, LossBreakdown, PhysicsError, ResidualVector};

/// What a collocation point contributes, with nondimensional targets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PointRole {
    Volume,
    Dirichlet([f64; 3]),
    Neumann(f64),
}

pub const PART_NAMES: [&str; 5] = ["L_D", "L_N", "L_v", "L_sigma", "L_p"];
const PD: usize = 0;
const PN: usize = 1;
const PV: usize = 2;
const PS: usize = 3;
const PP: usize = 4;

/// Loss over one batch. Each term is normalised by its own point count and
/// component count, so the sum over the batch is the mean-squared loss.
pub struct PhysicsLoss<'a> {
    roles: &'a [PointRole],
    map: KinematicMap,
    mode: FieldMode,
    n_sd: usize,
    re: f64,
    f_bc: f64,
    f_sigma: f64,
    w_d: f64,
    w_n: f64,
    w_v: f64,
    w_s: f64,
    w_p: f64,
}

fn inv(n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        1.0 / n as f64
    }
}

impl<'a> PhysicsLoss<'a> {
    pub fn new(
        layout: &OutputLayout,
        roles: &'a [PointRole],
        re: f64,
        f_bc: f64,
        f_sigma: f64,
    ) -> Result<Self, PhysicsError> {
        check_weights(f_bc, f_sigma)?;
        if !(re > 0.0) || !re.is_finite() {
            return Err(PhysicsError::DegenerateReynolds(re));
        }
        if roles.is_empty() {
            return Err(PhysicsError::EmptyLoss);
        }
        let n_sd = layout.n_sd;
        let mode = layout.mode;
        let channels = ChannelSet::new(n_sd, mode.residual_order());
        let map = KinematicMap::new(layout, &channels).expect("channel set covers the spatial dims");
        let (mut n_f, mut n_d, mut n_n) = (0, 0, 0);
        for r in roles {
            match r {
                PointRole::Volume => n_f += 1,
                PointRole::Dirichlet(_) => n_d += 1,
                PointRole::Neumann(_) => n_n += 1,
            }
        }
        let n_stress = if mode == FieldMode::NoStress { 0 } else { stress_components(n_sd).len() };
        Ok(Self {
            roles,
            map,
            mode,
            n_sd,
            re,
            f_bc,
            f_sigma,
            w_d: inv(n_d * n_sd),
            w_n: inv(n_n),
            w_v: inv(n_f * n_sd),
            w_s: inv(n_f * n_stress),
            w_p: if n_stress == 0 { 0.0 } else { inv(n_f) },
        })
    }

    /// Derivatives the loss reads.
    pub fn spec(&self) -> DiffSpec {
        DiffSpec::new(self.mode.residual_order(), self.n_sd)
    }

    pub fn breakdown(&self, parts: &[f64]) -> LossBreakdown {
        LossBreakdown::from_components(parts[PD], parts[PN], parts[PV], parts[PS], parts[PP], self.f_bc, self.f_sigma)
    }

    /// Residuals at one volume point.
    pub fn residuals(&self, bundle: &DerivativeBundle) -> ResidualVector {
        let mut kin = [0.0; KIN_LEN];
        self.map.apply(bundle.raw(), &mut kin);
        let st = KinematicState::from_flat(self.n_sd, &kin);
        compute_residuals_mode(&st, self.re, self.mode).expect("Reynolds number validated")
    }

    fn volume(&self, kin: &[f64; KIN_LEN], adj: &mut [f64; KIN_LEN], parts: &mut [f64]) -> f64 {
        use crate::network::kinematics_flat as f;
        let n = self.n_sd;
        let st = KinematicState::from_flat(n, kin);
        let r = compute_residuals_mode(&st, self.re, self.mode).expect("Reynolds number validated");
        let lv: f64 = self.w_v * r.momentum[..n].iter().map(|v| v * v).sum::<f64>();
        let ls: f64 = self.w_s * r.stress[..r.stress_len()].iter().map(|v| v * v).sum::<f64>();
        let lp = self.w_p * r.trace * r.trace;
        parts[PV] += lv;
        parts[PS] += ls;
        parts[PP] += lp;

        for i in 0..n {
            let a = 2.0 * self.w_v * r.momentum[i];
            for j in 0..n {
                adj[f::velocity(j)] += a * st.velocity_gradient[i][j];
                adj[f::grad(i, j)] += a * st.velocity[j];
            }
            if self.mode == FieldMode::NoStress {
                adj[f::pressure_grad(i)] += a;
                adj[f::laplacian(i)] -= a / self.re;
            } else {
                adj[f::stress_div(i)] -= a;
            }
        }
        if r.has_stress {
            for (c, &(i, j)) in stress_components(n).iter().enumerate() {
                let a = 2.0 * self.f_sigma * self.w_s * r.stress[c];
                adj[f::grad(i, j)] += a / self.re;
                adj[f::grad(j, i)] += a / self.re;
                if i == j {
                    adj[f::PRESSURE] -= a;
                }
                adj[f::stress(i, j)] -= a;
            }
            let a = 2.0 * self.w_p * r.trace;
            adj[f::PRESSURE] += a;
            for i in 0..n {
                adj[f::stress(i, i)] += a / n as f64;
            }
        }
        lv + self.f_sigma * ls + lp
    }
}

impl BundleLoss for PhysicsLoss<'_> {
    fn parts_len(&self) -> usize {
        PART_NAMES.len()
    }

    fn point_loss(&self, index: usize, bundle: &DerivativeBundle, adjoint: &mut DerivativeBundle, parts: &mut [f64]) -> f64 {
        use crate::network::kinematics_flat as f;
        let mut kin = [0.0; KIN_LEN];
        self.map.apply(bundle.raw(), &mut kin);
        let mut adj = [0.0; KIN_LEN];
        let total = match self.roles[index] {
            PointRole::Volume => self.volume(&kin, &mut adj, parts),
            PointRole::Dirichlet(target) => {
                let mut l = 0.0;
                for i in 0..self.n_sd {
                    let e = kin[f::velocity(i)] - target[i];
                    l += self.w_d * e * e;
                    adj[f::velocity(i)] = 2.0 * self.f_bc * self.w_d * e;
                }
                parts[PD] += l;
                self.f_bc * l
            }
            PointRole::Neumann(target) => {
                let e = kin[f::PRESSURE] - target;
                let l = self.w_n * e * e;
                adj[f::PRESSURE] = 2.0 * self.f_bc * self.w_n * e;
                parts[PN] += l;
                self.f_bc * l
            }
        };
        self.map.transpose_add(&adj, adjoint.raw_mut());
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{evaluate_loss_gradient, forward_spec, parameter_gradient_check, EvalOptions};
    use crate::network::{init_params_with_rng, kinematics_from_bundle, NetworkShape};
    use crate::physics::assemble_loss;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n_sd: usize, mode: FieldMode, seed: u64) -> (crate::network::NetworkParams, Vec<f64>, Vec<PointRole>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = NetworkShape { hidden_layers: 2, width: 6, n_sd, parametric: false, mode };
        let p = init_params_with_rng(shape, seed, &mut rng).unwrap();
        let n = 12;
        let pts: Vec<f64> = (0..n * n_sd).map(|_| rng.random_range(-1.0..1.0)).collect();
        let roles = (0..n)
            .map(|i| match i % 4 {
                0 => PointRole::Dirichlet([0.3, -0.2, 0.1]),
                1 => PointRole::Neumann(0.25),
                _ => PointRole::Volume,
            })
            .collect();
        (p, pts, roles)
    }

    #[test]
    fn matches_independent_assembly() {
        for n_sd in [2, 3] {
            let (p, pts, roles) = setup(n_sd, FieldMode::Mixed, 3);
            let layout = p.layout();
            let loss = PhysicsLoss::new(&layout, &roles, 20.0, 10.0, 3.0).unwrap();
            let eval = evaluate_loss_gradient(&p.mlp, &pts, loss.spec(), &loss, EvalOptions::default()).unwrap();
            let got = loss.breakdown(&eval.parts);

            let out = forward_spec(&p.mlp, &pts, DiffSpec::new(2, n_sd)).unwrap();
            let (mut res, mut dir, mut neu) = (vec![], vec![], vec![]);
            for (b, role) in out.bundles().zip(&roles) {
                let k = kinematics_from_bundle(&b, &layout).unwrap();
                match role {
                    PointRole::Volume => res.push(compute_residuals_mode(&k, 20.0, FieldMode::Mixed).unwrap()),
                    PointRole::Dirichlet(t) => dir.push((0..n_sd).map(|i| k.velocity[i] - t[i]).collect()),
                    PointRole::Neumann(t) => neu.push(k.pressure - t),
                }
            }
            let want = assemble_loss(&res, &dir, &neu, 10.0, 3.0).unwrap();
            for (a, b) in [(got.l_d, want.l_d), (got.l_n, want.l_n), (got.l_v, want.l_v), (got.l_sigma, want.l_sigma), (got.l_p, want.l_p), (got.l_total, want.l_total)] {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
            }
            assert!((eval.loss - want.l_total).abs() <= 1e-12 * (1.0 + want.l_total));
        }
    }

    #[test]
    fn gradient_matches_finite_differences_in_every_mode() {
        for mode in [FieldMode::Mixed, FieldMode::NoStreamFunction, FieldMode::NoStress] {
            for n_sd in [2, 3] {
                let (p, pts, roles) = setup(n_sd, mode, 5);
                let layout = p.layout();
                let loss = PhysicsLoss::new(&layout, &roles, 7.0, 10.0, 2.0).unwrap();
                let d = parameter_gradient_check(&p.mlp, &loss, &pts, loss.spec(), 1e-6).unwrap();
                assert!(d <= 1e-6, "{mode:?} {n_sd}: {d}");
            }
        }
    }

    #[test]
    fn invalid_configuration_rejected() {
        let layout = OutputLayout::new(2, FieldMode::Mixed).unwrap();
        let roles = [PointRole::Volume];
        assert!(PhysicsLoss::new(&layout, &roles, 0.0, 1.0, 1.0).is_err());
        assert!(PhysicsLoss::new(&layout, &roles, 1.0, 0.0, 1.0).is_err());
        assert!(PhysicsLoss::new(&layout, &[], 1.0, 1.0, 1.0).is_err());
    }
}
