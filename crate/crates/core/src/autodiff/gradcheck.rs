use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::graph::{Graph, Var};

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// `(tensor, flat index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub coordinates: usize,
    /// Coordinates whose probes straddled a rectifier kink and were redone
    /// with a smaller step.
    pub kink_retries: usize,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`
    ThreePoint,
    /// `(8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h`
    FivePoint,
}

impl Stencil {
    fn offsets(self) -> &'static [(f64, f64)] {
        match self {
            Stencil::ThreePoint => &[(1.0, 0.5), (-1.0, -0.5)],
            Stencil::FivePoint => &[(1.0, 8.0 / 12.0), (-1.0, -8.0 / 12.0), (2.0, -1.0 / 12.0), (-2.0, 1.0 / 12.0)],
        }
    }
}

/// Central-difference check of reverse-mode gradients.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    pub tol: f64,
    pub stencil: Stencil,
    /// How many times the step is divided by ten when a probe crosses a kink.
    pub max_refinements: usize,
    /// Run the analytic pass on a graph with a corrupted backward.
    pub inject_fault: bool,
}

impl GradCheck {
    pub fn new(step: f64, tol: f64) -> Self {
        Self {
            step,
            tol,
            stencil: Stencil::ThreePoint,
            max_refinements: 3,
            inject_fault: false,
        }
    }

    /// `loss` rebuilds the scalar objective from parameter leaves on a fresh
    /// graph; it is called once for the analytic gradient and once per probe.
    pub fn run<F>(&self, params: &[Matrix], mut loss: F) -> Result<GradCheckReport>
    where
        F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
    {
        if !(self.step > 0.0) {
            return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {}", self.step)));
        }
        let mut g = if self.inject_fault {
            Graph::with_gradient_fault()
        } else {
            Graph::new()
        };
        let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
        let root = loss(&mut g, &vars)?;
        let base_pattern = g.activation_pattern();
        let grads = g.backward(root)?;
        let analytic: Vec<Matrix> = vars
            .iter()
            .zip(params)
            .map(|(&v, p)| grads.get_or_zeros(v, p))
            .collect();

        let mut eval = |probe: &[Matrix]| -> Result<(f64, Vec<bool>)> {
            let mut g = Graph::new();
            let vars: Vec<Var> = probe.iter().map(|p| g.leaf(p.clone())).collect();
            let root = loss(&mut g, &vars)?;
            let v = g.scalar(root);
            if !v.is_finite() {
                return Err(Error::NonFinite("loss during finite-difference probing"));
            }
            Ok((v, g.activation_pattern()))
        };

        let mut probe: Vec<Matrix> = params.to_vec();
        let mut report = GradCheckReport {
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            worst: (0, 0),
            coordinates: 0,
            kink_retries: 0,
            tol: self.tol,
            pass: true,
        };
        for t in 0..params.len() {
            for i in 0..params[t].as_slice().len() {
                let orig = params[t].as_slice()[i];
                let mut h = self.step;
                let mut refinements = 0;
                let numeric = loop {
                    let mut acc = 0.0;
                    let mut smooth = true;
                    for &(k, w) in self.stencil.offsets() {
                        probe[t].as_mut_slice()[i] = orig + k * h;
                        let (v, pattern) = eval(&probe)?;
                        smooth &= pattern == base_pattern;
                        acc += w * v;
                    }
                    probe[t].as_mut_slice()[i] = orig;
                    if smooth || refinements == self.max_refinements {
                        break acc / h;
                    }
                    refinements += 1;
                    h /= 10.0;
                };
                if refinements > 0 {
                    report.kink_retries += 1;
                }

                let a = analytic[t].as_slice()[i];
                let abs = (a - numeric).abs();
                let rel = abs / a.abs().max(numeric.abs()).max(1e-8);
                report.coordinates += 1;
                report.max_abs_err = report.max_abs_err.max(abs);
                if rel > report.max_rel_err {
                    report.max_rel_err = rel;
                    report.worst = (t, i);
                }
            }
        }
        report.pass = report.max_rel_err < self.tol;
        Ok(report)
    }
}

/// Convenience wrapper around [`GradCheck::run`].
pub fn finite_diff_check<F>(params: &[Matrix], step: f64, tol: f64, loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    GradCheck::new(step, tol).run(params, loss)
}
