//! Finite-difference checking of backward-pass gradients.

use super::params::{BoundParams, ParamSet};
use super::tape::{Tape, Var};
use super::TensorError;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error("function produced a non-finite value during gradient check")]
    NonFinite,
    #[error("function does not return a scalar")]
    NonScalar,
    #[error("gradient check forward pass failed: {0}")]
    Forward(#[from] TensorError),
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Name of the parameter holding the worst coordinate.
    pub worst_param: String,
    /// Flat index of the worst coordinate within that parameter.
    pub worst_index: usize,
}

/// Compare the tape's gradients of a scalar function against central finite
/// differences, coordinate by coordinate over every parameter value.
///
/// The relative error of one coordinate is
/// `|g_ad − g_fd| / max(1, |g_ad|, |g_fd|)`; the report carries the maximum.
pub fn grad_check<F>(
    params: &ParamSet,
    f: &F,
    step: f64,
) -> Result<GradCheckReport, GradCheckError>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<Var, TensorError> + Sync,
{
    let analytic = {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let loss = f(&mut tape, &bound)?;
        let value = tape.value(loss);
        if !value.is_scalar() {
            return Err(GradCheckError::NonScalar);
        }
        if !value.item().is_finite() {
            return Err(GradCheckError::NonFinite);
        }
        tape.backward(loss)?;
        params.flat_gradients(&tape, &bound)
    };

    let base = params.flatten();
    let eval = |values: &[f64]| -> Result<f64, GradCheckError> {
        let mut perturbed = params.clone();
        perturbed.assign_flat(values);
        let mut tape = Tape::new();
        let bound = perturbed.bind(&mut tape);
        let loss = f(&mut tape, &bound)?;
        let v = tape.value(loss).item();
        if !v.is_finite() {
            return Err(GradCheckError::NonFinite);
        }
        Ok(v)
    };

    let per_coord: Result<Vec<f64>, GradCheckError> = (0..base.len())
        .into_par_iter()
        .map(|i| {
            let mut values = base.clone();
            values[i] = base[i] + step;
            let plus = eval(&values)?;
            values[i] = base[i] - step;
            let minus = eval(&values)?;
            Ok((plus - minus) / (2.0 * step))
        })
        .collect();
    let numeric = per_coord?;

    let mut worst = (0usize, 0.0f64);
    for (i, (&ad, &fd)) in analytic.iter().zip(&numeric).enumerate() {
        let rel = (ad - fd).abs() / 1.0f64.max(ad.abs()).max(fd.abs());
        if rel > worst.1 {
            worst = (i, rel);
        }
    }

    let (worst_param, worst_index) = locate(params, worst.0);
    Ok(GradCheckReport {
        max_rel_err: worst.1,
        worst_param,
        worst_index,
    })
}

fn locate(params: &ParamSet, flat: usize) -> (String, usize) {
    let mut offset = 0;
    for (name, tensor) in params.iter() {
        if flat < offset + tensor.numel() {
            return (name.to_string(), flat - offset);
        }
        offset += tensor.numel();
    }
    (String::new(), 0)
}
