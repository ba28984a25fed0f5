//! Central-difference verification of analytic gradients (64-bit).

use std::fmt;

use super::graph::{Graph, NodeId};
use super::params::ParamStore;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params
            .iter()
            .filter(|p| p.max_rel_err >= self.tolerance)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_err)
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            let status = if p.max_rel_err < self.tolerance {
                "ok"
            } else {
                "FAIL"
            };
            writeln!(
                f,
                "{status:4} {:<24} n={:<6} max_rel_err={:.3e} (at {}: analytic {:.6e}, numeric {:.6e})",
                p.name, p.checked, p.max_rel_err, p.worst_index, p.analytic, p.numeric
            )?;
        }
        Ok(())
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `backward` against central differences for every entry of every
/// parameter. `build` must construct a scalar loss deterministically.
pub fn gradient_check<F>(
    params: &ParamStore<f64>,
    build: F,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
{
    let analytic = {
        let mut g = Graph::new(params);
        let loss = build(&mut g)?;
        g.backward(loss)?
    };
    let eval = |p: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new(p);
        let loss = build(&mut g)?;
        Ok(g.value(loss).data()[0])
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        tolerance,
        params: Vec::new(),
    };
    for id in params.ids() {
        let mut check = ParamCheck {
            name: params.name(id).to_string(),
            checked: 0,
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for j in 0..params.get(id).len() {
            let orig = params.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + FD_STEP;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[j] = orig - FD_STEP;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic.get(id).data()[j];
            let err = relative_error(a, numeric);
            if err > check.max_rel_err || check.checked == 0 {
                check.max_rel_err = err;
                check.worst_index = j;
                check.analytic = a;
                check.numeric = numeric;
            }
            check.checked += 1;
        }
        report.params.push(check);
    }
    Ok(report)
}
