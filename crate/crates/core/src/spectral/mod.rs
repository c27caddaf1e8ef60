//! Spectral diagnostics: eigenbasis projections, the truncated
//! geometric-series prediction of the expected aggregated update, energy
//! CPDFs over the spectrum, per-direction second-order loss contributions,
//! and the client-variance bound.
//!
//! Conventions shared by every function here: eigenvalues ascend, an
//! eigenvalue counts as zero when its magnitude is at most
//! `1e-10 * max(1, spectral_radius)`, and predictions are evaluated in the
//! eigenbasis rather than through any matrix inverse.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::LossProblem;

pub mod eig;

pub use eig::{eig_sym, EigenSystem};

/// Magnitude below which an eigenvalue is treated as exactly zero.
pub fn zero_eig_threshold(values: &[f64]) -> f64 {
    let radius = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1e-10 * radius.max(1.0)
}

/// Coefficient applied to the gradient's eigencomponent by K local steps at
/// rate eta: `(1 - (1 - eta*lambda)^K) / lambda`, with the `K*eta` limit on
/// the zero branch.
pub fn update_coefficient(lambda: f64, eta: f64, k: usize, zero_tol: f64) -> f64 {
    debug_assert!(k <= i32::MAX as usize);
    if lambda.abs() <= zero_tol {
        k as f64 * eta
    } else {
        (1.0 - (1.0 - eta * lambda).powi(k as i32)) / lambda
    }
}

/// Projects a vector onto the eigenbasis. Returns the signed weights
/// `w_l = v_l . y` and the energies `e_l = w_l^2`.
pub fn project(y: &Array1<f64>, eig: &EigenSystem) -> Result<(Array1<f64>, Array1<f64>)> {
    if y.len() != eig.dim() {
        return Err(Error::DimensionMismatch {
            context: "projection input",
            expected: eig.dim(),
            actual: y.len(),
        });
    }
    let w = eig.vectors.t().dot(y);
    let e = w.mapv(|v| v * v);
    Ok((w, e))
}

/// Cumulative proportion of energy carried by directions with eigenvalue at
/// most `x`.
pub fn cpdf(energies: &[f64], values: &[f64], x: f64) -> Result<f64> {
    if energies.len() != values.len() {
        return Err(Error::DimensionMismatch {
            context: "cpdf energies",
            expected: values.len(),
            actual: energies.len(),
        });
    }
    let total: f64 = energies.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cpdf needs positive finite total energy, got {total}"
        )));
    }
    let below: f64 = energies
        .iter()
        .zip(values)
        .filter(|(_, &v)| v <= x)
        .map(|(e, _)| e)
        .sum();
    Ok(below / total)
}

/// Threshold sweep for CPDF curves: `count` log-spaced points across the
/// positive part of the spectrum merged with every exact eigenvalue
/// location, ascending and deduplicated.
pub fn cpdf_thresholds(values: &[f64], count: usize) -> Vec<f64> {
    let mut points: Vec<f64> = values.to_vec();
    let positive: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    if let (Some(&lo), Some(&hi)) = (
        positive
            .iter()
            .min_by(|a, b| a.total_cmp(b)),
        positive
            .iter()
            .max_by(|a, b| a.total_cmp(b)),
    ) {
        if count >= 2 && hi > lo {
            let (llo, lhi) = (lo.log10(), hi.log10());
            for i in 0..count {
                let t = llo + (lhi - llo) * i as f64 / (count - 1) as f64;
                points.push(10f64.powf(t));
            }
        } else {
            points.push(lo);
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
}

/// Expected aggregated update after K local steps, evaluated in the
/// eigenbasis: each gradient component scales by [`update_coefficient`].
pub fn predict_update(
    eig: &EigenSystem,
    grad: &Array1<f64>,
    eta: f64,
    k: usize,
) -> Result<Array1<f64>> {
    let (w, _) = project(grad, eig)?;
    let tol = zero_eig_threshold(eig.values.as_slice().unwrap());
    let scaled = Array1::from_iter(
        w.iter()
            .zip(eig.values.iter())
            .map(|(&wl, &lambda)| update_coefficient(lambda, eta, k, tol) * wl),
    );
    Ok(eig.vectors.dot(&scaled))
}

/// Expected update weight along a single eigendirection with gradient
/// weight `w_grad`.
pub fn predict_wl(lambda: f64, eta: f64, k: usize, w_grad: f64) -> f64 {
    let tol = 1e-10 * lambda.abs().max(1.0);
    update_coefficient(lambda, eta, k, tol) * w_grad
}

/// Predicted contribution of one eigendirection to the second-order loss
/// change after K local steps, given the gradient energy `e_grad` along it:
/// `-(1 - (1 - lambda*eta)^(2K)) * e_grad / (2 lambda)`, with the
/// `-K*eta*e_grad` limit on the zero branch.
pub fn soe_contribution(e_grad: f64, lambda: f64, eta: f64, k: usize) -> f64 {
    debug_assert!(2 * k <= i32::MAX as usize);
    let tol = 1e-10 * lambda.abs().max(1.0);
    if lambda.abs() <= tol {
        -(k as f64) * eta * e_grad
    } else {
        -(1.0 - (1.0 - lambda * eta).powi(2 * k as i32)) * e_grad / (2.0 * lambda)
    }
}

/// Second-order expansion of the loss change for a displacement delta:
/// `delta . grad + delta . H delta / 2`.
pub fn u_soe(displacement: &Array1<f64>, grad: &Array1<f64>, h: &Array2<f64>) -> Result<f64> {
    let d = grad.len();
    if displacement.len() != d {
        return Err(Error::DimensionMismatch {
            context: "soe displacement",
            expected: d,
            actual: displacement.len(),
        });
    }
    if h.nrows() != d || h.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "soe hessian",
            expected: d,
            actual: h.nrows().max(h.ncols()),
        });
    }
    Ok(displacement.dot(grad) + 0.5 * displacement.dot(&h.dot(displacement)))
}

/// Upper bound on the expected curvature energy of the aggregated update's
/// deviation across m clients: `lipschitz * sigma1_sq / m`.
pub fn variance_bound(sigma1_sq: f64, lipschitz: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    if sigma1_sq < 0.0 || !sigma1_sq.is_finite() || lipschitz < 0.0 || !lipschitz.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "variance bound needs finite nonnegative inputs, got sigma1_sq={sigma1_sq}, lipschitz={lipschitz}"
        )));
    }
    Ok(lipschitz * sigma1_sq / m as f64)
}

/// Applies the eigendecomposition pseudo-inverse to a vector, zeroing
/// components below the shared eigenvalue threshold.
pub fn pseudo_inverse_apply(eig: &EigenSystem, y: &Array1<f64>) -> Result<Array1<f64>> {
    let (w, _) = project(y, eig)?;
    let tol = zero_eig_threshold(eig.values.as_slice().unwrap());
    let scaled = Array1::from_iter(w.iter().zip(eig.values.iter()).map(|(&wl, &lambda)| {
        if lambda.abs() <= tol {
            0.0
        } else {
            wl / lambda
        }
    }));
    Ok(eig.vectors.dot(&scaled))
}

/// One point of a CPDF comparison curve.
#[derive(Clone, Debug, Serialize)]
pub struct CpdfPoint {
    pub threshold: f64,
    pub gradient: f64,
    pub update: f64,
}

/// Everything the spectral analysis of one round produces.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub round: usize,
    pub local_steps: usize,
    pub learning_rate: f64,
    pub eigenvalue_min: f64,
    pub eigenvalue_max: f64,
    pub eigenvalues: Vec<f64>,
    pub gradient_energies: Vec<f64>,
    pub update_energies: Vec<f64>,
    pub cpdf: Vec<CpdfPoint>,
    /// Relative gap between the series prediction of the expected update
    /// and the measured aggregated update.
    pub predicted_update_rel_err: f64,
    /// Relative gap between the pseudo-inverse step and the measured update.
    pub newton_rel_err: f64,
    /// Sum of per-direction second-order contributions predicted from the
    /// gradient energies.
    pub soe_predicted_loss_change: f64,
    /// Second-order expansion evaluated at the measured update.
    pub soe_measured_loss_change: f64,
}

/// Runs the full spectral analysis of one round: eigendecomposition of the
/// Hessian at the round's iterate, energy profiles of the full gradient and
/// of the measured aggregated update, their CPDF curves, and the prediction
/// errors. Dimension must fit the problem's dense-Hessian budget.
pub fn analyze_round(
    problem: &LossProblem,
    x: &Array1<f64>,
    measured_update: &Array1<f64>,
    eta: f64,
    k: usize,
    round: usize,
    threshold_count: usize,
) -> Result<SpectralReport> {
    let grad = problem.full_grad(x)?;
    let h = problem.hessian(x)?;
    let eig = eig_sym(&h)?;
    let (_, grad_energies) = project(&grad, &eig)?;
    let (_, update_energies) = project(measured_update, &eig)?;

    let values = eig.values.as_slice().unwrap();
    let thresholds = cpdf_thresholds(values, threshold_count);
    let ge = grad_energies.as_slice().unwrap();
    let ue = update_energies.as_slice().unwrap();
    let cpdf_curve = thresholds
        .iter()
        .map(|&t| {
            Ok(CpdfPoint {
                threshold: t,
                gradient: cpdf(ge, values, t)?,
                update: cpdf(ue, values, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let predicted = predict_update(&eig, &grad, eta, k)?;
    let newton = pseudo_inverse_apply(&eig, &grad)?;
    let measured_norm = measured_update.dot(measured_update).sqrt();
    let rel = |a: &Array1<f64>| -> f64 {
        let diff = a - measured_update;
        diff.dot(&diff).sqrt() / measured_norm.max(f64::MIN_POSITIVE)
    };

    let soe_predicted: f64 = ge
        .iter()
        .zip(values)
        .map(|(&e, &lambda)| soe_contribution(e, lambda, eta, k))
        .sum();
    let displacement = measured_update.mapv(|v| -v);
    let soe_measured = u_soe(&displacement, &grad, &h)?;

    Ok(SpectralReport {
        round,
        local_steps: k,
        learning_rate: eta,
        eigenvalue_min: eig.min_eigenvalue(),
        eigenvalue_max: eig.max_eigenvalue(),
        eigenvalues: values.to_vec(),
        gradient_energies: ge.to_vec(),
        update_energies: ue.to_vec(),
        cpdf: cpdf_curve,
        predicted_update_rel_err: rel(&predicted),
        newton_rel_err: rel(&newton),
        soe_predicted_loss_change: soe_predicted,
        soe_measured_loss_change: soe_measured,
    })
}
