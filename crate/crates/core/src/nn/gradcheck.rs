//! Central finite-difference verification of tape gradients.

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tol: f64,
    /// Coordinates whose LeakyReLU inputs come this close to zero are excluded.
    pub kink_margin: f64,
    /// Denominator floor of the relative error.
    pub abs_floor: f64,
    /// Check every `stride`-th coordinate of each parameter.
    pub stride: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            kink_margin: 1e-8,
            abs_floor: 1e-8,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub excluded: usize,
    pub passed: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn checked(&self) -> usize {
        self.params.iter().map(|p| p.checked).sum()
    }

    pub fn excluded(&self) -> usize {
        self.params.iter().map(|p| p.excluded).sum()
    }

    pub fn passed(&self) -> usize {
        self.params.iter().map(|p| p.passed).sum()
    }

    pub fn pass_fraction(&self) -> f64 {
        let c = self.checked();
        if c == 0 {
            1.0
        } else {
            self.passed() as f64 / c as f64
        }
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_err)
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare analytic gradients of the scalar built by `f` against central
/// differences, parameter coordinate by coordinate. `f` must be
/// deterministic (no dropout).
pub fn grad_check<F>(store: &mut ParamStore, opts: GradCheckOptions, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let (grads, base_pattern) = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        (tape.backward(loss)?, tape.pattern())
    };
    let eval = |store: &ParamStore| -> Result<(f64, u64, f64)> {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        Ok((tape.value(loss).item(), tape.pattern(), tape.kink_margin()))
    };
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut report = Vec::with_capacity(ids.len());
    for id in ids {
        let analytic = grads.dense(id, store);
        let mut pc = ParamCheck {
            name: store.get(id).name.clone(),
            checked: 0,
            excluded: 0,
            passed: 0,
            max_rel_err: 0.0,
        };
        for k in (0..analytic.len()).step_by(opts.stride.max(1)) {
            let orig = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + opts.h;
            let plus = eval(store);
            store.get_mut(id).value.data_mut()[k] = orig - opts.h;
            let minus = eval(store);
            store.get_mut(id).value.data_mut()[k] = orig;
            let ((lp, pp, mp), (lm, pm, mm)) = (plus?, minus?);
            if pp != base_pattern || pm != base_pattern || mp.min(mm) < opts.kink_margin {
                pc.excluded += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * opts.h);
            let rel = relative_error(analytic.data()[k], numeric, opts.abs_floor);
            pc.checked += 1;
            pc.max_rel_err = pc.max_rel_err.max(rel);
            if rel < opts.tol {
                pc.passed += 1;
            }
        }
        report.push(pc);
    }
    Ok(GradCheckReport {
        params: report,
        tol: opts.tol,
    })
}
