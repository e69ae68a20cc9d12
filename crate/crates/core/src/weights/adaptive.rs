//! Decision-directed stochastic-gradient baseline.
//!
//! The weight vector is updated subcarrier by subcarrier to reduce the
//! differential error `ξ_k = b_k - (w^H ȳ_k) / (w^H ȳ_{k-1})`. The reference
//! `b_k` is the known pilot symbol on pilot subcarriers and the sliced ratio
//! decision elsewhere. Gradients are taken with respect to `w*`:
//!
//! ```text
//! ∂|ξ|²/∂w* = -conj(ξ) · (ȳ_k (w^H ȳ_{k-1}) - ȳ_{k-1} (w^H ȳ_k)) / (w^H ȳ_{k-1})²
//! ```
//!
//! and each step is `w <- w - μ ∂|ξ|²/∂w*`.

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::ofdm::{detect_ml, PilotLayout, PskConstellation};
use crate::transform::PartialDemodMatrix;

/// Updates are skipped when `|w^H ȳ_{k-1}|` falls below this.
pub const MIN_REFERENCE_MAGNITUDE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveOutcome {
    /// `weights[k]` is the vector used to detect subcarrier `k` (`weights[0]` is `1_M`).
    pub weights: Vec<Vec<Complex64>>,
    /// `decisions[k - 1]` is the sliced symbol index for subcarrier `k`.
    pub decisions: Vec<usize>,
    /// Subcarriers whose update was skipped for a vanishing reference.
    pub skipped: usize,
}

/// Differential error and its gradient with respect to `w*`, or `None` when
/// the reference output `w^H ȳ_{k-1}` is too small to divide by.
pub fn differential_error_gradient(
    weights: &[Complex64],
    current: &[Complex64],
    previous: &[Complex64],
    reference: Complex64,
) -> Option<(Complex64, Vec<Complex64>)> {
    let num = inner(weights, current);
    let den = inner(weights, previous);
    if den.norm() < MIN_REFERENCE_MAGNITUDE {
        return None;
    }
    let xi = reference - num / den;
    let factor = -xi.conj() / (den * den);
    let grad = current
        .iter()
        .zip(previous)
        .map(|(y, yp)| factor * (y * den - yp * num))
        .collect();
    Some((xi, grad))
}

fn inner(w: &[Complex64], y: &[Complex64]) -> Complex64 {
    w.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// Runs the recursion over subcarriers `1..K` starting from `w = 1_M`.
/// `pilot_symbols[i]` is the known symbol on `pilots.indices()[i]`.
pub fn solve_weights_adaptive(
    demod: &PartialDemodMatrix,
    pilots: &PilotLayout,
    pilot_symbols: &[Complex64],
    step_size: f64,
    constellation: &PskConstellation,
) -> Result<AdaptiveOutcome> {
    if !(step_size.is_finite() && step_size >= 0.0) {
        return invalid(format!("step size must be finite and non-negative, got {step_size}"));
    }
    if pilot_symbols.len() != pilots.len() {
        return invalid(format!(
            "{} pilot symbols for {} pilots",
            pilot_symbols.len(),
            pilots.len()
        ));
    }
    let k_total = demod.subcarriers();
    let mut w = vec![Complex64::new(1.0, 0.0); demod.subblocks()];
    let mut weights = Vec::with_capacity(k_total);
    let mut decisions = Vec::with_capacity(k_total.saturating_sub(1));
    let mut skipped = 0;
    weights.push(w.clone());

    let mut previous = demod.column(0);
    for k in 1..k_total {
        let current = demod.column(k);
        weights.push(w.clone());
        let num = inner(&w, &current);
        let den = inner(&w, &previous);
        let decision = if den.norm() < MIN_REFERENCE_MAGNITUDE {
            detect_ml(den, num, constellation)
        } else {
            constellation.nearest(num / den)
        };
        decisions.push(decision);

        let reference = match pilots.indices().binary_search(&k) {
            Ok(i) => pilot_symbols[i],
            Err(_) => constellation.point(decision),
        };
        match differential_error_gradient(&w, &current, &previous, reference) {
            Some((_, grad)) => {
                for (wm, g) in w.iter_mut().zip(grad) {
                    *wm -= g * step_size;
                }
            }
            None => skipped += 1,
        }
        previous = current;
    }
    Ok(AdaptiveOutcome {
        weights,
        decisions,
        skipped,
    })
}
