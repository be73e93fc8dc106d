use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Largest discrepancy between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// (parameter index, flat element index) of the worst relative error.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Components smaller than this are compared absolutely rather than relatively.
pub const DEFAULT_REL_FLOOR: f64 = 1e-3;

/// Compares reverse-mode gradients of `f` against `(f(x+h) − f(x−h)) / 2h`.
pub fn grad_check<T, F>(f: F, params: &[Tensor<T>], h: f64) -> Result<GradCheckReport>
where
    T: Scalar,
    F: for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Result<Var<'t, T>>,
{
    grad_check_with_floor(f, params, h, DEFAULT_REL_FLOOR)
}

pub fn grad_check_with_floor<T, F>(
    f: F,
    params: &[Tensor<T>],
    h: f64,
    floor: f64,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Result<Var<'t, T>>,
{
    let analytic = {
        let tape = Tape::new();
        let vars: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&tape, &vars)?;
        let grads = tape.backward(loss)?;
        vars.iter().map(|&v| grads.get(v)).collect::<Vec<_>>()
    };
    for g in &analytic {
        if !g.is_finite() {
            return Err(Error::Numerics("non-finite analytic gradient".into()));
        }
    }

    let eval = |ps: &[Tensor<T>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = ps.iter().map(|p| tape.constant(p.clone())).collect();
        Ok(f(&tape, &vars)?.item()?.as_f64())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    let mut work = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for ei in 0..p.len() {
            let x0 = p.data()[ei];
            work[pi].data_mut()[ei] = x0 + T::of(h);
            let plus = eval(&work)?;
            work[pi].data_mut()[ei] = x0 - T::of(h);
            let minus = eval(&work)?;
            work[pi].data_mut()[ei] = x0;

            let numeric = (plus - minus) / (2.0 * h);
            let exact = analytic[pi].data()[ei].as_f64();
            let abs = (numeric - exact).abs();
            let rel = abs / numeric.abs().max(exact.abs()).max(floor);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (pi, ei);
            }
        }
    }
    Ok(report)
}
