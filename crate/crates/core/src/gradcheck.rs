//! Analytic gradients versus five-point central finite differences.

use alloc::string::String;

use crate::error::{Error, Result};
use crate::nn::{Bound, ParamSet};
use crate::tape::{Tape, Var};

/// Initial perturbation of the five-point stencil.
pub const STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_values: Option<(f64, f64)>,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a ReLU kink at every step
    /// size tried; a finite difference is meaningless there.
    pub skipped_kinks: usize,
    /// Where a non-finite loss appeared, if anywhere.
    pub non_finite: Option<(String, usize)>,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the gradient of `loss_fn` with respect to every scalar in
/// `params` against the fourth-order stencil
/// `(8 (f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h`.
///
/// The closure must be deterministic: a closure that samples dropout masks
/// is rejected. When any of the four perturbations flips a ReLU on or off,
/// the step is shrunk by 10x (down to 1e-8) before the coordinate is given
/// up on.
pub fn gradient_check<F>(params: &mut ParamSet, mut loss_fn: F, tolerance: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    tape.track_activations();
    let bound = params.bind(&mut tape);
    let loss = loss_fn(&mut tape, &bound)?;
    if tape.is_stochastic() {
        return Err(Error::contract("gradient check needs a deterministic closure (dropout is active)"));
    }
    let base_fp = tape.activation_fingerprint();
    let base_loss = tape.scalar(loss);
    let grads = tape.backward(loss)?;
    let analytic: alloc::vec::Vec<alloc::vec::Vec<f64>> = bound
        .vars()
        .iter()
        .map(|&v| grads.get(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();
    drop(tape);

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        worst_values: None,
        checked: 0,
        skipped_kinks: 0,
        non_finite: None,
        tolerance,
        passed: true,
    };
    if !base_loss.is_finite() || !loss_finite(&analytic) {
        report.non_finite = Some(("loss".into(), 0));
        report.passed = false;
        return Ok(report);
    }

    let mut eval = |params: &ParamSet| -> Result<(f64, Option<u64>)> {
        let mut tape = Tape::new();
        tape.track_activations();
        let bound = params.bind(&mut tape);
        let loss = loss_fn(&mut tape, &bound)?;
        Ok((tape.scalar(loss), tape.activation_fingerprint()))
    };

    for p in 0..params.len() {
        let id = p;
        let numel = params.iter().nth(id).map_or(0, |x| x.tensor.numel());
        for i in 0..numel {
            let original = param_value(params, id, i);
            let mut step = STEP;
            let mut numeric = None;
            while step >= 1e-8 {
                let mut f = [0.0; 4];
                let mut same = true;
                for (k, d) in [step, -step, 2.0 * step, -2.0 * step].into_iter().enumerate() {
                    set_param(params, id, i, original + d);
                    let (v, fp) = eval(params)?;
                    f[k] = v;
                    same &= fp == base_fp;
                }
                set_param(params, id, i, original);
                if f.iter().any(|v| !v.is_finite()) {
                    report.non_finite.get_or_insert_with(|| (param_name(params, id), i));
                    report.passed = false;
                    break;
                }
                if same {
                    numeric = Some((8.0 * (f[0] - f[1]) - (f[2] - f[3])) / (12.0 * step));
                    break;
                }
                step /= 10.0;
            }
            let Some(numeric) = numeric else {
                if report.non_finite.is_none() {
                    report.skipped_kinks += 1;
                }
                continue;
            };
            let err = relative_error(analytic[id][i], numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((param_name(params, id), i));
                report.worst_values = Some((analytic[id][i], numeric));
            }
        }
    }
    if report.max_relative_error >= tolerance {
        report.passed = false;
    }
    Ok(report)
}

fn loss_finite(grads: &[alloc::vec::Vec<f64>]) -> bool {
    grads.iter().flatten().all(|g| g.is_finite())
}

fn param_value(params: &ParamSet, p: usize, i: usize) -> f64 {
    params.iter().nth(p).expect("index in range").tensor.data()[i]
}

fn set_param(params: &mut ParamSet, p: usize, i: usize, v: f64) {
    params.iter_mut().nth(p).expect("index in range").tensor.data_mut()[i] = v;
}

fn param_name(params: &ParamSet, p: usize) -> String {
    params.iter().nth(p).expect("index in range").name.clone()
}
