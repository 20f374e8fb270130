//! Exact input derivatives of a dense network and reverse-mode parameter
//! gradients of losses built on them.
//!
//! The forward pass pushes a stack of (value, first, second, optionally third)
//! input-derivatives through each layer analytically. The parameter gradient
//! is a reverse sweep over that augmented computation, so a loss that reads
//! Hessian entries is differentiated through third-order mixed terms without a
//! general-purpose tape.

mod channels;
mod check;
mod mlp;
mod tape;

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

pub use channels::ChannelSet;
pub use check::{finite_difference_check, parameter_gradient_check, FdCheck, FdReport};
pub use mlp::{Activation, Mlp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("input dimension mismatch: network expects {expected} inputs per point, got buffer of length {len}")]
    DimensionMismatch { expected: usize, len: usize },
    #[error("activation '{0}' is not smooth; derivative order {1} is unsupported")]
    NonSmoothActivation(&'static str, usize),
    #[error("derivative order {0} is unsupported (maximum {1})")]
    UnsupportedOrder(usize, usize),
    #[error("differentiated dimension count {dims} exceeds input width {inputs}")]
    TooManyDims { dims: usize, inputs: usize },
    #[error("invalid architecture {0:?}")]
    InvalidArchitecture(Vec<usize>),
    #[error("parameter count mismatch: expected {expected}, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("loss is not finite at batch index {index}")]
    NonFiniteLoss { index: usize },
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
}

/// Which derivatives to propagate: up to `order`, with respect to the leading
/// `dims` network inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiffSpec {
    pub order: usize,
    pub dims: usize,
}

impl DiffSpec {
    pub fn new(order: usize, dims: usize) -> Self {
        Self { order, dims }
    }

    fn validate(&self, mlp: &Mlp) -> Result<(), AutodiffError> {
        if self.order > channels::MAX_ORDER {
            return Err(AutodiffError::UnsupportedOrder(self.order, channels::MAX_ORDER));
        }
        if self.dims > mlp.n_inputs() {
            return Err(AutodiffError::TooManyDims { dims: self.dims, inputs: mlp.n_inputs() });
        }
        if self.order >= 1 && !mlp.activation().is_smooth() {
            return Err(AutodiffError::NonSmoothActivation(mlp.activation().name(), self.order));
        }
        Ok(())
    }
}

/// Flat partial derivatives of a scalar loss in canonical parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient(pub Vec<f64>);

impl ParamGradient {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Values and input-derivatives of every network output at one point.
#[derive(Clone, Debug)]
pub struct DerivativeBundle {
    channels: Arc<ChannelSet>,
    n_out: usize,
    data: Vec<f64>,
}

impl DerivativeBundle {
    pub fn zeros(channels: Arc<ChannelSet>, n_out: usize) -> Self {
        let n = channels.len() * n_out;
        Self { channels, n_out, data: vec![0.0; n] }
    }

    pub fn channels(&self) -> &ChannelSet {
        &self.channels
    }

    pub fn n_outputs(&self) -> usize {
        self.n_out
    }

    pub fn order(&self) -> usize {
        self.channels.order()
    }

    /// Number of differentiated inputs.
    pub fn dims(&self) -> usize {
        self.channels.dims()
    }

    #[inline]
    fn at(&self, o: usize, ch: usize) -> f64 {
        self.data[o * self.channels.len() + ch]
    }

    #[inline]
    pub fn value(&self, o: usize) -> f64 {
        self.at(o, 0)
    }

    #[inline]
    pub fn d1(&self, o: usize, j: usize) -> f64 {
        self.at(o, self.channels.first(j))
    }

    #[inline]
    pub fn d2(&self, o: usize, j: usize, k: usize) -> f64 {
        self.at(o, self.channels.second(j, k))
    }

    #[inline]
    pub fn d3(&self, o: usize, j: usize, k: usize, l: usize) -> f64 {
        self.at(o, self.channels.third(j, k, l))
    }

    pub fn set_value(&mut self, o: usize, v: f64) {
        let c = self.channels.len();
        self.data[o * c] = v;
    }

    pub fn set_d1(&mut self, o: usize, j: usize, v: f64) {
        let i = o * self.channels.len() + self.channels.first(j);
        self.data[i] = v;
    }

    pub fn set_d2(&mut self, o: usize, j: usize, k: usize, v: f64) {
        let i = o * self.channels.len() + self.channels.second(j, k);
        self.data[i] = v;
    }

    pub fn set_d3(&mut self, o: usize, j: usize, k: usize, l: usize, v: f64) {
        let i = o * self.channels.len() + self.channels.third(j, k, l);
        self.data[i] = v;
    }

    /// Raw storage, `n_outputs x channels` row-major.
    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n_out).map(|o| self.value(o)).collect()
    }

    /// `outputs x dims` matrix of first derivatives.
    pub fn input_jacobian(&self) -> Vec<Vec<f64>> {
        let d = self.dims();
        (0..self.n_out).map(|o| (0..d).map(|j| self.d1(o, j)).collect()).collect()
    }

    /// `outputs x dims x dims` tensor of second derivatives.
    pub fn input_hessian(&self) -> Vec<Vec<Vec<f64>>> {
        let d = self.dims();
        (0..self.n_out)
            .map(|o| (0..d).map(|j| (0..d).map(|k| self.d2(o, j, k)).collect()).collect())
            .collect()
    }
}

/// Derivative stacks for a batch of points, stored output-major.
#[derive(Clone, Debug)]
pub struct BatchDerivatives {
    channels: Arc<ChannelSet>,
    n_out: usize,
    n_points: usize,
    data: Vec<f64>,
}

impl BatchDerivatives {
    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn channels(&self) -> &Arc<ChannelSet> {
        &self.channels
    }

    pub fn n_outputs(&self) -> usize {
        self.n_out
    }

    #[inline]
    fn at(&self, p: usize, o: usize, ch: usize) -> f64 {
        let c = self.channels.len();
        self.data[o * self.n_points * c + p * c + ch]
    }

    pub fn value(&self, p: usize, o: usize) -> f64 {
        self.at(p, o, 0)
    }

    pub fn d1(&self, p: usize, o: usize, j: usize) -> f64 {
        self.at(p, o, self.channels.first(j))
    }

    pub fn d2(&self, p: usize, o: usize, j: usize, k: usize) -> f64 {
        self.at(p, o, self.channels.second(j, k))
    }

    /// Copies the derivatives of point `p` into a standalone bundle.
    pub fn bundle(&self, p: usize) -> DerivativeBundle {
        let mut b = DerivativeBundle::zeros(self.channels.clone(), self.n_out);
        gather(&self.data, self.n_points, p, &mut b);
        b
    }

    pub fn bundles(&self) -> impl Iterator<Item = DerivativeBundle> + '_ {
        (0..self.n_points).map(|p| self.bundle(p))
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

fn gather(stack: &[f64], n_points: usize, p: usize, into: &mut DerivativeBundle) {
    let c = into.channels.len();
    for o in 0..into.n_out {
        let src = o * n_points * c + p * c;
        into.data[o * c..(o + 1) * c].copy_from_slice(&stack[src..src + c]);
    }
}

fn scatter(from: &DerivativeBundle, n_points: usize, p: usize, stack: &mut [f64]) {
    let c = from.channels.len();
    for o in 0..from.n_out {
        let dst = o * n_points * c + p * c;
        stack[dst..dst + c].copy_from_slice(&from.data[o * c..(o + 1) * c]);
    }
}

fn check_points(mlp: &Mlp, points: &[f64]) -> Result<usize, AutodiffError> {
    let n_in = mlp.n_inputs();
    if !points.len().is_multiple_of(n_in) {
        return Err(AutodiffError::DimensionMismatch { expected: n_in, len: points.len() });
    }
    Ok(points.len() / n_in)
}

/// Derivatives of all outputs with respect to all inputs, up to `order <= 2`.
pub fn forward_with_derivatives(
    mlp: &Mlp,
    points: &[f64],
    order: usize,
) -> Result<BatchDerivatives, AutodiffError> {
    if order > 2 {
        return Err(AutodiffError::UnsupportedOrder(order, 2));
    }
    forward_spec(mlp, points, DiffSpec::new(order, mlp.n_inputs()))
}

/// Like [`forward_with_derivatives`], with explicit differentiated dimensions
/// and order (up to three).
pub fn forward_spec(mlp: &Mlp, points: &[f64], spec: DiffSpec) -> Result<BatchDerivatives, AutodiffError> {
    spec.validate(mlp)?;
    let n_points = check_points(mlp, points)?;
    let channels = Arc::new(ChannelSet::new(spec.dims, spec.order));
    let tape = tape::forward(mlp, points, channels.clone());
    Ok(BatchDerivatives { channels, n_out: mlp.n_outputs(), n_points, data: tape.into_output() })
}

/// A scalar loss that is a sum of per-point contributions, each a
/// differentiable function of that point's derivative bundle.
pub trait BundleLoss: Sync {
    /// Number of auxiliary loss components reported alongside the total.
    fn parts_len(&self) -> usize {
        0
    }

    /// Returns the contribution of batch point `index`, adds its partial
    /// derivatives with respect to each bundle entry into `adjoint` (zeroed by
    /// the caller), and adds its components into `parts`.
    fn point_loss(
        &self,
        index: usize,
        bundle: &DerivativeBundle,
        adjoint: &mut DerivativeBundle,
        parts: &mut [f64],
    ) -> f64;
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    /// Fixed chunking so that reductions do not depend on the thread count.
    pub deterministic: bool,
    pub chunk_points: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { deterministic: true, chunk_points: 256 }
    }
}

impl EvalOptions {
    fn chunks(&self, n_points: usize) -> Vec<Range<usize>> {
        let size = if self.deterministic {
            self.chunk_points.max(1)
        } else {
            n_points.div_ceil(rayon::current_num_threads().max(1)).max(1)
        };
        (0..n_points).step_by(size).map(|s| s..(s + size).min(n_points)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct LossEvaluation {
    pub loss: f64,
    pub parts: Vec<f64>,
    pub gradient: ParamGradient,
    /// Bytes held by the derivative stacks of the whole batch at the peak of
    /// the evaluation.
    pub workspace_bytes: usize,
}

struct ChunkResult {
    loss: f64,
    parts: Vec<f64>,
    grad: Vec<f64>,
    bad: Option<usize>,
}

fn chunk_losses<L: BundleLoss + ?Sized>(
    loss: &L,
    stack: &[f64],
    channels: &Arc<ChannelSet>,
    n_out: usize,
    range: &Range<usize>,
    mut adjoint_stack: Option<&mut [f64]>,
) -> (f64, Vec<f64>, Option<usize>) {
    let n = range.len();
    let mut bundle = DerivativeBundle::zeros(channels.clone(), n_out);
    let mut adj = DerivativeBundle::zeros(channels.clone(), n_out);
    let mut parts = vec![0.0; loss.parts_len()];
    let mut total = 0.0;
    let mut bad = None;
    for p in 0..n {
        gather(stack, n, p, &mut bundle);
        adj.data.fill(0.0);
        let v = loss.point_loss(range.start + p, &bundle, &mut adj, &mut parts);
        if !v.is_finite() && bad.is_none() {
            bad = Some(range.start + p);
        }
        total += v;
        if let Some(out) = adjoint_stack.as_deref_mut() {
            scatter(&adj, n, p, out);
        }
    }
    (total, parts, bad)
}

/// Total loss, its components, and the exact parameter gradient.
pub fn evaluate_loss_gradient<L: BundleLoss + ?Sized>(
    mlp: &Mlp,
    points: &[f64],
    spec: DiffSpec,
    loss: &L,
    opts: EvalOptions,
) -> Result<LossEvaluation, AutodiffError> {
    spec.validate(mlp)?;
    let n_points = check_points(mlp, points)?;
    let n_in = mlp.n_inputs();
    let channels = Arc::new(ChannelSet::new(spec.dims, spec.order));
    let ranges = opts.chunks(n_points);

    // All chunk tapes stay alive until the reverse sweep, as in a batched engine.
    let tapes: Vec<tape::Tape> = ranges
        .par_iter()
        .map(|r| tape::forward(mlp, &points[r.start * n_in..r.end * n_in], channels.clone()))
        .collect();
    let workspace_bytes = tapes.iter().map(tape::Tape::workspace_bytes).sum();

    let results: Vec<ChunkResult> = tapes
        .par_iter()
        .zip(ranges.par_iter())
        .map(|(tape, range)| {
            let mut adj_stack = vec![0.0; tape.output().len()];
            let (l, parts, bad) =
                chunk_losses(loss, tape.output(), &channels, mlp.n_outputs(), range, Some(&mut adj_stack));
            let mut grad = vec![0.0; mlp.n_params()];
            if bad.is_none() {
                tape::backward(mlp, tape, adj_stack, &mut grad);
            }
            ChunkResult { loss: l, parts, grad, bad }
        })
        .collect();

    let mut total = 0.0;
    let mut parts = vec![0.0; loss.parts_len()];
    let mut grad = vec![0.0; mlp.n_params()];
    for r in &results {
        if let Some(index) = r.bad {
            return Err(AutodiffError::NonFiniteLoss { index });
        }
        total += r.loss;
        for (a, b) in parts.iter_mut().zip(&r.parts) {
            *a += b;
        }
        for (a, b) in grad.iter_mut().zip(&r.grad) {
            *a += b;
        }
    }
    Ok(LossEvaluation { loss: total, parts, gradient: ParamGradient(grad), workspace_bytes })
}

/// Forward-only loss evaluation (no gradient, chunk tapes dropped eagerly).
pub fn evaluate_loss<L: BundleLoss + ?Sized>(
    mlp: &Mlp,
    points: &[f64],
    spec: DiffSpec,
    loss: &L,
    opts: EvalOptions,
) -> Result<(f64, Vec<f64>), AutodiffError> {
    spec.validate(mlp)?;
    let n_points = check_points(mlp, points)?;
    let n_in = mlp.n_inputs();
    let channels = Arc::new(ChannelSet::new(spec.dims, spec.order));
    let ranges = opts.chunks(n_points);
    let results: Vec<(f64, Vec<f64>, Option<usize>)> = ranges
        .par_iter()
        .map(|r| {
            let tape = tape::forward(mlp, &points[r.start * n_in..r.end * n_in], channels.clone());
            chunk_losses(loss, tape.output(), &channels, mlp.n_outputs(), r, None)
        })
        .collect();
    let mut total = 0.0;
    let mut parts = vec![0.0; loss.parts_len()];
    for (l, p, bad) in results {
        if let Some(index) = bad {
            return Err(AutodiffError::NonFiniteLoss { index });
        }
        total += l;
        for (a, b) in parts.iter_mut().zip(&p) {
            *a += b;
        }
    }
    Ok((total, parts))
}

/// Scalar loss and its gradient with respect to every network parameter.
pub fn loss_parameter_gradient<L: BundleLoss + ?Sized>(
    mlp: &Mlp,
    loss: &L,
    points: &[f64],
    spec: DiffSpec,
) -> Result<(f64, ParamGradient), AutodiffError> {
    let eval = evaluate_loss_gradient(mlp, points, spec, loss, EvalOptions::default())?;
    Ok((eval.loss, eval.gradient))
}

/// Applies `f` to every output stack of `batch`; used by verification hooks.
pub(crate) fn tamper(batch: &mut BatchDerivatives, f: impl Fn(&mut [f64])) {
    f(batch.raw_mut());
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_mlp(widths: Vec<usize>, act: Activation, seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mlp = Mlp::zeros(widths, act).unwrap();
        for v in mlp.params_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        mlp
    }

    fn random_points(n: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn linear_layer_jacobian_is_weight_matrix() {
        let mlp = random_mlp(vec![3, 2], Activation::Tanh, 1);
        let out = forward_with_derivatives(&mlp, &[0.3, -0.2, 0.9], 1).unwrap();
        let jac = out.bundle(0).input_jacobian();
        let w = mlp.weights(0);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(jac[i][j], w[i * 3 + j]);
            }
        }
    }

    #[test]
    fn linear_layer_hessian_is_zero() {
        let mlp = random_mlp(vec![3, 2], Activation::Tanh, 2);
        let out = forward_with_derivatives(&mlp, &[0.3, -0.2, 0.9], 2).unwrap();
        for h in out.bundle(0).input_hessian() {
            assert!(h.iter().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn order_zero_matches_plain_eval() {
        let mlp = random_mlp(vec![2, 7, 7, 3], Activation::Tanh, 3);
        let pts = random_points(5, 2, 4);
        let out = forward_with_derivatives(&mlp, &pts, 0).unwrap();
        for p in 0..5 {
            let direct = mlp.eval(&pts[p * 2..p * 2 + 2]);
            for o in 0..3 {
                assert!((out.value(p, o) - direct[o]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mlp = random_mlp(vec![3, 4, 2], Activation::Tanh, 5);
        let err = forward_with_derivatives(&mlp, &[1.0, 2.0], 1).unwrap_err();
        assert!(matches!(err, AutodiffError::DimensionMismatch { .. }));
    }

    #[test]
    fn relu_rejects_derivatives_but_allows_values() {
        let mlp = random_mlp(vec![2, 4, 1], Activation::Relu, 6);
        assert!(matches!(
            forward_with_derivatives(&mlp, &[0.1, 0.2], 1),
            Err(AutodiffError::NonSmoothActivation("relu", 1))
        ));
        assert!(forward_with_derivatives(&mlp, &[0.1, 0.2], 0).is_ok());
    }

    #[test]
    fn order_above_two_rejected_by_public_entry() {
        let mlp = random_mlp(vec![2, 4, 1], Activation::Tanh, 6);
        assert!(matches!(
            forward_with_derivatives(&mlp, &[0.1, 0.2], 3),
            Err(AutodiffError::UnsupportedOrder(3, 2))
        ));
    }

    #[test]
    fn hessian_symmetric_to_roundoff() {
        let mlp = random_mlp(vec![3, 9, 9, 4], Activation::Tanh, 7);
        let pts = random_points(20, 3, 8);
        let out = forward_with_derivatives(&mlp, &pts, 2).unwrap();
        for b in out.bundles() {
            for h in b.input_hessian() {
                for j in 0..3 {
                    for k in 0..3 {
                        assert!((h[j][k] - h[k][j]).abs() <= 1e-12 * (1.0 + h[j][k].abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let mlp = random_mlp(vec![3, 10, 10, 10], Activation::Tanh, 9);
        let pts = random_points(33, 3, 10);
        let a = forward_with_derivatives(&mlp, &pts, 2).unwrap();
        let b = forward_with_derivatives(&mlp, &pts, 2).unwrap();
        assert_eq!(a.data, b.data);
    }

    struct Zero;
    impl BundleLoss for Zero {
        fn point_loss(&self, _: usize, _: &DerivativeBundle, _: &mut DerivativeBundle, _: &mut [f64]) -> f64 {
            0.0
        }
    }

    struct FirstOutput;
    impl BundleLoss for FirstOutput {
        fn point_loss(&self, _: usize, b: &DerivativeBundle, adj: &mut DerivativeBundle, _: &mut [f64]) -> f64 {
            adj.set_value(0, 1.0);
            b.value(0)
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mlp = random_mlp(vec![2, 5, 3], Activation::Tanh, 11);
        let (l, g) = loss_parameter_gradient(&mlp, &Zero, &[0.1, 0.2, 0.3, 0.4], DiffSpec::new(2, 2)).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.len(), mlp.n_params());
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_output_gradient_is_input_vector() {
        let mlp = random_mlp(vec![3, 2], Activation::Tanh, 12);
        let x = [0.5, -1.5, 2.0];
        let (l, g) = loss_parameter_gradient(&mlp, &FirstOutput, &x, DiffSpec::new(0, 3)).unwrap();
        assert_eq!(l, mlp.eval(&x)[0]);
        let g = g.as_slice();
        // weights row 0, row 1, then biases
        assert_eq!(&g[0..3], &x);
        assert_eq!(&g[3..6], &[0.0, 0.0, 0.0]);
        assert_eq!(&g[6..8], &[1.0, 0.0]);
    }

    struct Bad;
    impl BundleLoss for Bad {
        fn point_loss(&self, i: usize, _: &DerivativeBundle, _: &mut DerivativeBundle, _: &mut [f64]) -> f64 {
            if i == 3 {
                f64::NAN
            } else {
                1.0
            }
        }
    }

    #[test]
    fn non_finite_loss_reports_point_index() {
        let mlp = random_mlp(vec![1, 3, 1], Activation::Tanh, 13);
        let opts = EvalOptions { deterministic: true, chunk_points: 2 };
        let err = evaluate_loss_gradient(&mlp, &[0.0, 0.1, 0.2, 0.3, 0.4], DiffSpec::new(0, 1), &Bad, opts).unwrap_err();
        assert_eq!(err, AutodiffError::NonFiniteLoss { index: 3 });
    }

    #[test]
    fn chunking_does_not_change_results_beyond_roundoff() {
        let mlp = random_mlp(vec![2, 6, 6, 2], Activation::Tanh, 14);
        let pts = random_points(50, 2, 15);
        let a = evaluate_loss_gradient(&mlp, &pts, DiffSpec::new(2, 2), &FirstOutput, EvalOptions { deterministic: true, chunk_points: 7 }).unwrap();
        let b = evaluate_loss_gradient(&mlp, &pts, DiffSpec::new(2, 2), &FirstOutput, EvalOptions { deterministic: true, chunk_points: 1000 }).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
        for (x, y) in a.gradient.as_slice().iter().zip(b.gradient.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_mode_ignores_thread_count() {
        let mlp = random_mlp(vec![2, 6, 6, 2], Activation::Tanh, 16);
        let pts = random_points(300, 2, 17);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| evaluate_loss_gradient(&mlp, &pts, DiffSpec::new(2, 2), &FirstOutput, EvalOptions::default()).unwrap())
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_eq!(a.gradient, b.gradient);
    }
}
