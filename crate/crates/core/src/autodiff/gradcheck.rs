use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-6;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error over all coordinates.
    pub max_rel_error: f64,
    /// Flat index of the coordinate attaining `max_rel_error`.
    pub worst_index: usize,
    /// First coordinate where either side was NaN or infinite.
    pub non_finite: Option<usize>,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.non_finite.is_none() && self.max_rel_error <= tol
    }

    pub(crate) fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst_index: 0,
            non_finite: None,
            coordinates: 0,
        };
        for (i, (analytic, numeric)) in pairs.into_iter().enumerate() {
            report.coordinates += 1;
            if !analytic.is_finite() || !numeric.is_finite() {
                report.non_finite.get_or_insert(i);
                continue;
            }
            let err = relative_error(analytic, numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_index = i;
            }
        }
        if report.non_finite.is_some() {
            report.max_rel_error = f64::INFINITY;
        }
        report
    }
}

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-12);
    (analytic - numeric).abs() / denom
}

/// Checks `d f(x) / dx` from one backward pass against central differences.
///
/// `f` must map its argument to a scalar on the supplied tape and be
/// deterministic.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>, Var) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone().with_grad());
        let y = f(&mut tape, xv)?;
        tape.backward(y)?.wrt(xv, x)
    };
    let numeric = numeric_gradient(
        |t: &Tensor| {
            let mut tape = Tape::new();
            let xv = tape.leaf(t.clone());
            let y = f(&mut tape, xv)?;
            Ok(tape.value(y).item())
        },
        x,
        h,
    )?;
    Ok(GradCheckReport::from_pairs(
        analytic.data().iter().copied().zip(numeric),
    ))
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every `i`.
pub fn numeric_gradient<F>(mut f: F, x: &Tensor, h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}
