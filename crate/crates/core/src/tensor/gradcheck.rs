//! Finite-difference oracle for tape gradients.
//!
//! Plain central differences in `f64` carry an absolute rounding error of
//! roughly `1e-16 * |f| / eps`, about `1e-11` at `eps = 1e-5`, so components
//! whose gradient is below `1e-5` cannot be resolved to `1e-6` relative.
//! [`Stencil::Extrapolated`] runs central differences over a shrinking
//! ladder of steps and extrapolates them to zero step (Ridders' scheme),
//! which starts from a large step and gets far below that floor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Fault, Matrix, Tape, Var};

/// Outcome of a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter index, flat entry index)` of the worst component.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub components: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// How numeric derivatives are formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// `(f(x + eps) - f(x - eps)) / (2 eps)`.
    #[default]
    Central,
    /// Central differences at steps `eps, eps / 1.4, eps / 1.4^2, ...`,
    /// extrapolated to zero step; `eps` is the largest step.
    Extrapolated,
}

/// Compares tape gradients of a scalar function against finite differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub eps: f64,
    pub stencil: Stencil,
    pub fault: Option<Fault>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck::new(1e-5)
    }
}

const RIDDERS_SHRINK: f64 = 1.4;
const RIDDERS_STEPS: usize = 10;
const RIDDERS_SAFE: f64 = 2.0;

impl GradCheck {
    pub fn new(eps: f64) -> Self {
        GradCheck {
            eps,
            stencil: Stencil::Central,
            fault: None,
        }
    }

    /// Extrapolated differences starting from step `eps`.
    pub fn extrapolated(eps: f64) -> Self {
        GradCheck {
            eps,
            stencil: Stencil::Extrapolated,
            fault: None,
        }
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }

    /// `f` receives a fresh tape and one leaf per entry of `params`, and must
    /// return a `1 x 1` node.
    pub fn run<F>(&self, params: &[Matrix], f: F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        let max_eps = match self.stencil {
            Stencil::Central => 1e-2,
            Stencil::Extrapolated => 1.0,
        };
        if !(self.eps > 0.0 && self.eps <= max_eps) {
            return Err(Error::Domain {
                op: "grad_check",
                msg: format!("eps {} outside (0, {max_eps}]", self.eps),
            });
        }

        let mut tape = match self.fault {
            Some(fault) => Tape::with_fault(fault),
            None => Tape::new(),
        };
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        check_finite(tape.value(loss).data()[0])?;
        let grads = tape.backward(loss)?;
        let analytic: Vec<Matrix> = vars.iter().map(|&v| grads.wrt(v)).collect();

        let eval = |perturbed: &[Matrix]| -> Result<f64> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = perturbed.iter().map(|p| tape.param(p.clone())).collect();
            let loss = f(&mut tape, &vars)?;
            let value = tape.value(loss).data()[0];
            check_finite(value)?;
            Ok(value)
        };

        let mut work: Vec<Matrix> = params.to_vec();
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst: None,
            analytic: 0.0,
            numeric: 0.0,
            components: 0,
        };
        for (pi, param) in params.iter().enumerate() {
            for k in 0..param.data().len() {
                let x = param.data()[k];
                let mut central = |h: f64| -> Result<f64> {
                    let (up, down) = (x + h, x - h);
                    work[pi].data_mut()[k] = up;
                    let f_up = eval(&work)?;
                    work[pi].data_mut()[k] = down;
                    let f_down = eval(&work)?;
                    work[pi].data_mut()[k] = x;
                    // Divide by the step actually taken after rounding.
                    Ok((f_up - f_down) / (up - down))
                };
                let numeric = match self.stencil {
                    Stencil::Central => central(self.eps)?,
                    Stencil::Extrapolated => ridders(self.eps, central)?,
                };
                let a = analytic[pi].data()[k];
                let err = relative_error(a, numeric);
                report.components += 1;
                if err > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = err;
                    report.worst = Some((pi, k));
                    report.analytic = a;
                    report.numeric = numeric;
                }
            }
        }
        Ok(report)
    }
}

/// Neville tableau over central differences at geometrically shrinking
/// steps; returns the entry with the smallest estimated error.
fn ridders(h0: f64, mut central: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let c2 = RIDDERS_SHRINK * RIDDERS_SHRINK;
    let mut prev: Vec<f64> = vec![central(h0)?];
    let mut best = prev[0];
    let mut best_err = f64::INFINITY;
    let mut h = h0;
    for i in 1..RIDDERS_STEPS {
        h /= RIDDERS_SHRINK;
        let mut row = Vec::with_capacity(i + 1);
        row.push(central(h)?);
        let mut fac = c2;
        for j in 1..=i {
            let v = (row[j - 1] * fac - prev[j - 1]) / (fac - 1.0);
            fac *= c2;
            let err = (v - row[j - 1]).abs().max((v - prev[j - 1]).abs());
            if err <= best_err {
                best_err = err;
                best = v;
            }
            row.push(v);
        }
        // Stop once higher orders start to diverge.
        if (row[i] - prev[i - 1]).abs() >= RIDDERS_SAFE * best_err {
            break;
        }
        prev = row;
    }
    Ok(best)
}

/// Max relative error of tape gradients against central differences with
/// step `eps`.
pub fn grad_check<F>(params: &[Matrix], eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    GradCheck::new(eps).run(params, f).map(|r| r.max_rel_error)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

fn check_finite(value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(
            "grad_check",
            format!("function value {value}"),
        ))
    }
}
