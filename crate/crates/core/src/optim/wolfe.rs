//! Strong-Wolfe line search (bracketing followed by safeguarded cubic zoom).

use crate::linalg::{dot, norm_inf};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    pub max_evals: usize,
    pub initial_step: f64,
}

impl Default for WolfeParams {
    fn default() -> Self {
        Self { c1: 1e-4, c2: 0.9, max_evals: 25, initial_step: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineSearchFailure {
    /// `g . d >= 0`: the direction does not descend.
    NotDescent,
    ExhaustedEvals,
    /// The step became negligible relative to the parameters.
    StepUnderflow,
}

impl LineSearchFailure {
    pub fn name(self) -> &'static str {
        match self {
            LineSearchFailure::NotDescent => "not-descent",
            LineSearchFailure::ExhaustedEvals => "exhausted-evals",
            LineSearchFailure::StepUnderflow => "step-underflow",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub f: f64,
    pub grad: Vec<f64>,
    pub evals: usize,
}

struct Sample {
    alpha: f64,
    f: f64,
    /// Directional derivative; `None` when the evaluation was not finite.
    dphi: Option<f64>,
}

fn cubic_min(lo: &Sample, hi: &Sample) -> Option<f64> {
    let (dl, dh) = (lo.dphi?, hi.dphi?);
    if !hi.f.is_finite() {
        return None;
    }
    let d1 = dl + dh - 3.0 * (lo.f - hi.f) / (lo.alpha - hi.alpha);
    let disc = d1 * d1 - dl * dh;
    if disc < 0.0 {
        return None;
    }
    let d2 = (hi.alpha - lo.alpha).signum() * disc.sqrt();
    let a = hi.alpha - (hi.alpha - lo.alpha) * (dh + d2 - d1) / (dh - dl + 2.0 * d2);
    a.is_finite().then_some(a)
}

/// Finds `alpha` with `f(x + alpha d) <= f0 + c1 alpha g0.d` and
/// `|g(x + alpha d).d| <= c2 |g0.d|`. `eval` returns loss and gradient; a
/// non-finite loss counts as a failed sufficient-decrease test.
pub fn wolfe_line_search<F>(
    mut eval: F,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    params: &WolfeParams,
) -> Result<LineSearchResult, LineSearchFailure>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let dphi0 = dot(g0, d);
    if !(dphi0 < 0.0) {
        return Err(LineSearchFailure::NotDescent);
    }
    let WolfeParams { c1, c2, max_evals, initial_step } = *params;
    let d_norm = norm_inf(d);
    let floor = f64::EPSILON * (1.0 + norm_inf(x));
    let negligible = |alpha: f64| alpha * d_norm <= floor;
    let mut trial = vec![0.0; x.len()];
    let mut evals = 0;
    let mut probe = |alpha: f64, evals: &mut usize| {
        for ((t, xi), di) in trial.iter_mut().zip(x).zip(d) {
            *t = xi + alpha * di;
        }
        *evals += 1;
        let (f, g) = eval(&trial);
        let dphi = if f.is_finite() && g.iter().all(|v| v.is_finite()) { Some(dot(&g, d)) } else { None };
        (Sample { alpha, f: if dphi.is_some() { f } else { f64::INFINITY }, dphi }, g)
    };
    let armijo = |s: &Sample| s.dphi.is_some() && s.f <= f0 + c1 * s.alpha * dphi0;
    let curvature = |s: &Sample| s.dphi.is_some_and(|v| v.abs() <= -c2 * dphi0);

    let mut prev = Sample { alpha: 0.0, f: f0, dphi: Some(dphi0) };
    let mut alpha = initial_step;
    let (mut lo, mut hi);
    loop {
        if negligible(alpha) {
            return Err(LineSearchFailure::StepUnderflow);
        }
        if evals >= max_evals {
            return Err(LineSearchFailure::ExhaustedEvals);
        }
        let (s, g) = probe(alpha, &mut evals);
        if !armijo(&s) || (prev.alpha > 0.0 && s.f >= prev.f) {
            lo = prev;
            hi = s;
            break;
        }
        if curvature(&s) {
            return Ok(LineSearchResult { alpha, f: s.f, grad: g, evals });
        }
        if s.dphi.unwrap() >= 0.0 {
            lo = s;
            hi = prev;
            break;
        }
        prev = s;
        alpha *= 2.0;
    }

    // zoom
    loop {
        let width = (hi.alpha - lo.alpha).abs();
        if negligible(width) {
            return Err(LineSearchFailure::StepUnderflow);
        }
        if evals >= max_evals {
            return Err(LineSearchFailure::ExhaustedEvals);
        }
        let (a_min, a_max) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let margin = 0.1 * width;
        let alpha = match cubic_min(&lo, &hi) {
            Some(a) if a > a_min + margin && a < a_max - margin => a,
            _ => 0.5 * (lo.alpha + hi.alpha),
        };
        let (s, g) = probe(alpha, &mut evals);
        if !armijo(&s) || s.f >= lo.f {
            hi = s;
            continue;
        }
        if curvature(&s) {
            return Ok(LineSearchResult { alpha, f: s.f, grad: g, evals });
        }
        if s.dphi.unwrap() * (hi.alpha - lo.alpha) >= 0.0 {
            hi = lo;
        }
        lo = s;
    }
}
