//! Central-difference verification of the analytic derivatives.
//!
//! First derivatives are checked against differences of network values;
//! each higher order is checked against differences of the (already checked)
//! analytic derivatives one order below. Discrepancies are reported relative
//! to the largest magnitude of the respective derivative order.

use super::{evaluate_loss, evaluate_loss_gradient, forward_spec, tamper, AutodiffError, BundleLoss, DiffSpec, EvalOptions, Mlp};

/// Worst relative discrepancy per derivative order.
#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub step: f64,
    pub jacobian: f64,
    pub hessian: Option<f64>,
    pub third: Option<f64>,
}

impl FdReport {
    pub fn max(&self) -> f64 {
        [Some(self.jacobian), self.hessian, self.third].into_iter().flatten().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct FdCheck {
    pub step: f64,
    pub order: usize,
    /// Number of leading inputs to differentiate; `None` means all.
    pub dims: Option<usize>,
    /// Perturbs the analytic derivatives before comparing (harness self-test).
    pub corrupt: bool,
}

impl FdCheck {
    pub fn new(step: f64) -> Self {
        Self { step, order: 2, dims: None, corrupt: false }
    }

    pub fn order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    pub fn dims(mut self, dims: usize) -> Self {
        self.dims = Some(dims);
        self
    }

    pub fn corrupt(mut self, yes: bool) -> Self {
        self.corrupt = yes;
        self
    }

    pub fn run(&self, mlp: &Mlp, points: &[f64]) -> Result<FdReport, AutodiffError> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(AutodiffError::InvalidStep(self.step));
        }
        let order = self.order.clamp(1, 3);
        let n_in = mlp.n_inputs();
        let dims = self.dims.unwrap_or(n_in);
        let mut analytic = forward_spec(mlp, points, DiffSpec::new(order, dims))?;
        if self.corrupt {
            let c = analytic.channels().len();
            tamper(&mut analytic, |data| {
                for (i, v) in data.iter_mut().enumerate() {
                    if i % c != 0 {
                        *v = *v * (1.0 + 1e-3) + 1e-3;
                    }
                }
            });
        }
        let n_points = analytic.len();
        let h = self.step;

        // Perturbed copies: for each point and dim, x + h e_j then x - h e_j.
        let mut shifted = Vec::with_capacity(n_points * dims * 2 * n_in);
        for p in 0..n_points {
            let x = &points[p * n_in..(p + 1) * n_in];
            for j in 0..dims {
                for sign in [1.0, -1.0] {
                    let mut y = x.to_vec();
                    y[j] += sign * h;
                    shifted.extend_from_slice(&y);
                }
            }
        }
        let below = |o: usize| forward_spec(mlp, &shifted, DiffSpec::new(o, dims));
        let n_out = mlp.n_outputs();
        let plus = |p: usize, j: usize| 2 * (p * dims + j);

        // order 1
        let base = below(0)?;
        let mut acc = Discrepancy::default();
        for p in 0..n_points {
            for o in 0..n_out {
                for j in 0..dims {
                    let fd = (base.value(plus(p, j), o) - base.value(plus(p, j) + 1, o)) / (2.0 * h);
                    acc.push(analytic.d1(p, o, j), fd);
                }
            }
        }
        let jacobian = acc.relative();

        let hessian = if order >= 2 {
            let b = below(1)?;
            let mut acc = Discrepancy::default();
            for p in 0..n_points {
                for o in 0..n_out {
                    for j in 0..dims {
                        for k in 0..dims {
                            let fd = (b.d1(plus(p, k), o, j) - b.d1(plus(p, k) + 1, o, j)) / (2.0 * h);
                            acc.push(analytic.d2(p, o, j, k), fd);
                        }
                    }
                }
            }
            Some(acc.relative())
        } else {
            None
        };

        let third = if order >= 3 {
            let b = below(2)?;
            let mut acc = Discrepancy::default();
            for p in 0..n_points {
                let a = analytic.bundle(p);
                for o in 0..n_out {
                    for j in 0..dims {
                        for k in 0..dims {
                            for l in 0..dims {
                                let fd = (b.d2(plus(p, l), o, j, k) - b.d2(plus(p, l) + 1, o, j, k)) / (2.0 * h);
                                acc.push(a.d3(o, j, k, l), fd);
                            }
                        }
                    }
                }
            }
            Some(acc.relative())
        } else {
            None
        };

        Ok(FdReport { step: h, jacobian, hessian, third })
    }
}

#[derive(Default)]
struct Discrepancy {
    max_diff: f64,
    scale: f64,
}

impl Discrepancy {
    fn push(&mut self, analytic: f64, fd: f64) {
        let d = (analytic - fd).abs();
        self.max_diff = if d.is_nan() { f64::INFINITY } else { self.max_diff.max(d) };
        self.scale = self.scale.max(analytic.abs()).max(fd.abs());
    }

    fn relative(&self) -> f64 {
        if self.max_diff == 0.0 {
            0.0
        } else if self.scale == 0.0 {
            f64::INFINITY
        } else {
            self.max_diff / self.scale
        }
    }
}

/// Checks first and second input derivatives of all outputs against central
/// differences with the given step.
pub fn finite_difference_check(mlp: &Mlp, points: &[f64], step: f64) -> Result<FdReport, AutodiffError> {
    FdCheck::new(step).run(mlp, points)
}

/// Relative discrepancy between the analytic parameter gradient of `loss` and
/// central differences over every parameter.
pub fn parameter_gradient_check<L: BundleLoss + ?Sized>(
    mlp: &Mlp,
    loss: &L,
    points: &[f64],
    spec: DiffSpec,
    step: f64,
) -> Result<f64, AutodiffError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(AutodiffError::InvalidStep(step));
    }
    let opts = EvalOptions::default();
    let analytic = evaluate_loss_gradient(mlp, points, spec, loss, opts)?;
    let mut probe = mlp.clone();
    let mut acc = Discrepancy::default();
    for i in 0..mlp.n_params() {
        let orig = mlp.params()[i];
        probe.params_mut()[i] = orig + step;
        let (lp, _) = evaluate_loss(&probe, points, spec, loss, opts)?;
        probe.params_mut()[i] = orig - step;
        let (lm, _) = evaluate_loss(&probe, points, spec, loss, opts)?;
        probe.params_mut()[i] = orig;
        acc.push(analytic.gradient.0[i], (lp - lm) / (2.0 * step));
    }
    Ok(acc.relative())
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_mlp;
    use super::super::{Activation, DerivativeBundle};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(n: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn linear_network_is_exact() {
        let mlp = random_mlp(vec![3, 8, 8, 4], Activation::Linear, 1);
        for step in [1e-2, 0.1, 1.0] {
            let r = finite_difference_check(&mlp, &pts(6, 3, 2), step).unwrap();
            assert!(r.max() <= 1e-12, "step {step}: {r:?}");
            assert_eq!(r.hessian, Some(0.0));
        }
    }

    #[test]
    fn tanh_network_within_tolerance() {
        let mut mlp = random_mlp(vec![3, 16, 16, 5], Activation::Tanh, 3);
        for v in mlp.params_mut() {
            *v *= 0.6;
        }
        let r = FdCheck::new(1e-4).order(3).run(&mlp, &pts(8, 3, 4)).unwrap();
        assert!(r.jacobian <= 1e-5 && r.hessian.unwrap() <= 1e-5 && r.third.unwrap() <= 1e-5, "{r:?}");
    }

    #[test]
    fn zero_step_rejected() {
        let mlp = random_mlp(vec![2, 3, 1], Activation::Tanh, 5);
        assert_eq!(finite_difference_check(&mlp, &[0.0, 0.0], 0.0), Err(AutodiffError::InvalidStep(0.0)));
    }

    #[test]
    fn corruption_is_detected() {
        let mlp = random_mlp(vec![2, 6, 2], Activation::Tanh, 6);
        let r = FdCheck::new(1e-4).corrupt(true).run(&mlp, &pts(4, 2, 7)).unwrap();
        assert!(r.max() > 1e-5);
    }

    struct SquaredHessianTrace;
    impl BundleLoss for SquaredHessianTrace {
        fn point_loss(&self, _: usize, b: &DerivativeBundle, adj: &mut DerivativeBundle, _: &mut [f64]) -> f64 {
            let t = b.d2(0, 0, 0) + b.d2(0, 1, 1);
            adj.set_d2(0, 0, 0, 2.0 * t);
            adj.set_d2(0, 1, 1, 2.0 * t);
            let s = b.d1(1, 0) * b.value(0);
            adj.set_d1(1, 0, s.signum() * b.value(0));
            adj.raw_mut()[0] += s.signum() * b.d1(1, 0);
            t * t + s.abs()
        }
    }

    #[test]
    fn gradient_through_hessian_matches_fd() {
        let mlp = random_mlp(vec![2, 7, 7, 2], Activation::Tanh, 8);
        let d = parameter_gradient_check(&mlp, &SquaredHessianTrace, &pts(9, 2, 9), DiffSpec::new(2, 2), 1e-6).unwrap();
        assert!(d <= 1e-6, "{d}");
    }
}
