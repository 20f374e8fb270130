//! Limited-memory BFGS: curvature history, two-loop recursion and a single
//! line-searched iteration.

use std::collections::VecDeque;

use super::wolfe::{wolfe_line_search, LineSearchFailure, WolfeParams};
use crate::linalg::{dot, norm2};

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsState {
    pub capacity: usize,
    /// `(s, y, 1 / yᵀs)`, oldest first.
    pub history: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    pub iterations: u64,
}

impl LbfgsState {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), history: VecDeque::new(), iterations: 0 }
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }
}

impl Default for LbfgsState {
    fn default() -> Self {
        Self::new(50)
    }
}

/// Stores the pair when `yᵀs > 1e-10 ‖s‖ ‖y‖`, evicting the oldest pair at
/// capacity. Returns whether it was stored.
pub fn lbfgs_update(state: &mut LbfgsState, s: Vec<f64>, y: Vec<f64>) -> bool {
    let ys = dot(&y, &s);
    if !(ys > 1e-10 * norm2(&s) * norm2(&y)) {
        return false;
    }
    if state.history.len() == state.capacity {
        state.history.pop_front();
    }
    state.history.push_back((s, y, 1.0 / ys));
    true
}

/// Two-loop recursion for `d = -H g` with the initial scaling
/// `γ = sᵀy / yᵀy` from the newest pair.
pub fn lbfgs_direction(state: &LbfgsState, grad: &[f64]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(state.history.len());
    for (s, y, rho) in state.history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = state.history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in state.history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsStep {
    pub alpha: f64,
    pub evals: usize,
    pub stored: bool,
    /// The history was dropped and steepest descent used instead.
    pub restarted: bool,
}

/// One L-BFGS iteration updating `x`, `f` and `g` in place. When the
/// quasi-Newton direction fails its line search the history is cleared and a
/// steepest-descent step is tried before giving up.
pub fn lbfgs_step<F>(
    state: &mut LbfgsState,
    x: &mut [f64],
    f: &mut f64,
    g: &mut Vec<f64>,
    mut eval: F,
    params: &WolfeParams,
) -> Result<LbfgsStep, LineSearchFailure>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut restarted = false;
    let mut evals = 0;
    loop {
        let d = if state.is_empty() { g.iter().map(|v| -v).collect() } else { lbfgs_direction(state, g) };
        let mut p = *params;
        if state.is_empty() {
            let gn = norm2(g);
            if gn > 1.0 {
                p.initial_step = params.initial_step / gn;
            }
        }
        match wolfe_line_search(&mut eval, x, *f, g, &d, &p) {
            Ok(r) => {
                evals += r.evals;
                let s: Vec<f64> = d.iter().map(|di| r.alpha * di).collect();
                let y: Vec<f64> = r.grad.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
                for (xi, si) in x.iter_mut().zip(&s) {
                    *xi += si;
                }
                *f = r.f;
                *g = r.grad;
                let stored = lbfgs_update(state, s, y);
                state.iterations += 1;
                return Ok(LbfgsStep { alpha: r.alpha, evals, stored, restarted });
            }
            Err(e) => {
                if state.is_empty() || e == LineSearchFailure::ExhaustedEvals {
                    return Err(e);
                }
                state.reset();
                restarted = true;
            }
        }
    }
}
