//! Second-order expansion residue: how far the true gradient field strays
//! from its linearization around an anchor point, and Monte-Carlo estimates
//! of the residue's expectation over local SGD trajectories.
//!
//! The residue at a point `x_k` relative to anchor `x_0` is
//! `grad(x_k) - grad(x_0) - H(x_0) (x_k - x_0)`. It vanishes identically on
//! quadratics, which several tests exploit as an exact oracle.

use ndarray::Array1;

use crate::data::{sample_batch, ClientShard, RngStream, StreamDomain};
use crate::error::{Error, Result};
use crate::model::LossProblem;
use crate::par;

/// Residue norm below which the expectation is considered exactly zero and
/// the gradient-to-residue ratio reported as infinite.
pub const ZERO_RESIDUE_TOL: f64 = 1e-15;

/// Residue of the gradient field described by closures: `grad` evaluates
/// the gradient anywhere, `hvp_at_anchor` applies the Hessian taken at the
/// anchor. The problem-typed [`residue`] delegates here.
pub fn residue_with<G, H>(
    grad: G,
    hvp_at_anchor: H,
    x0: &Array1<f64>,
    xk: &Array1<f64>,
) -> Result<Array1<f64>>
where
    G: Fn(&Array1<f64>) -> Result<Array1<f64>>,
    H: Fn(&Array1<f64>) -> Result<Array1<f64>>,
{
    if x0.len() != xk.len() {
        return Err(Error::DimensionMismatch {
            context: "residue points",
            expected: x0.len(),
            actual: xk.len(),
        });
    }
    let displacement = xk - x0;
    Ok(grad(xk)? - grad(x0)? - hvp_at_anchor(&displacement)?)
}

/// Residue of the full objective's gradient field at `xk`, anchored at `x0`.
pub fn residue(problem: &LossProblem, x0: &Array1<f64>, xk: &Array1<f64>) -> Result<Array1<f64>> {
    residue_with(
        |x| problem.full_grad(x),
        |v| problem.hvp(x0, v),
        x0,
        xk,
    )
}

/// Ratio of the anchor gradient norm to the estimated residue norm;
/// infinite when the residue is numerically zero.
pub fn assumption3_ratio(grad_norm: f64, residue_norm: f64) -> f64 {
    if residue_norm < ZERO_RESIDUE_TOL {
        f64::INFINITY
    } else {
        grad_norm / residue_norm
    }
}

/// Spread of the per-trial residue norms.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct TrialStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Monte-Carlo residue estimate at one trajectory depth.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ResidueReport {
    /// Which training round's iterate served as the anchor.
    pub round: usize,
    /// Trajectory depth: number of local steps per trial.
    pub local_steps: usize,
    pub trials: usize,
    /// Trials dropped because their trajectory diverged.
    pub excluded: usize,
    pub grad_norm: f64,
    /// Norm of the averaged residue vector.
    pub residue_norm: f64,
    /// grad_norm / residue_norm, infinite when the residue vanishes.
    #[serde(serialize_with = "serialize_ratio")]
    pub ratio: f64,
    pub trial_norms: TrialStats,
}

impl ResidueReport {
    pub fn ratio_is_infinite(&self) -> bool {
        self.ratio.is_infinite()
    }
}

/// JSON has no infinity literal, so the vanished-residue sentinel goes out
/// as the string "inf" instead of null.
fn serialize_ratio<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

/// Runs `trials` independent local-SGD trajectories of `local_steps` steps
/// from `x0` over the shard, and averages the residue at their endpoints.
/// Diverging trials are excluded; more than 10% of them is an error. Trials
/// are keyed by (seed, trial, round), so the estimate is independent of
/// evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn estimate_residue_expectation(
    problem: &LossProblem,
    shard: &ClientShard,
    x0: &Array1<f64>,
    local_steps: usize,
    eta: f64,
    batch_size: usize,
    trials: usize,
    seed: u64,
    round: usize,
) -> Result<(Array1<f64>, ResidueReport)> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if local_steps == 0 {
        return Err(Error::InvalidArgument(
            "need at least one local step".into(),
        ));
    }
    let grad0 = problem.full_grad(x0)?;
    let grad_norm = grad0.dot(&grad0).sqrt();

    let outcomes = par::map_indices(trials, |trial| -> Result<Option<Array1<f64>>> {
        let stream = RngStream::new(seed, StreamDomain::Trial)
            .for_client(trial as u64)
            .for_round(round as u64);
        let noise = stream.with_domain(StreamDomain::GradientNoise);
        let mut x = x0.clone();
        for k in 0..local_steps {
            let batch = sample_batch(shard, batch_size, stream.at(k as u64))?;
            let g = problem.stochastic_grad(&x, &batch, noise.at(k as u64))?;
            if g.iter().any(|v| !v.is_finite()) {
                return Ok(None);
            }
            x.scaled_add(-eta, &g);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        residue(problem, x0, &x).map(Some)
    });

    let mut sum = Array1::<f64>::zeros(x0.len());
    let mut norms = Vec::with_capacity(trials);
    let mut excluded = 0usize;
    for outcome in outcomes {
        match outcome? {
            Some(r) => {
                norms.push(r.dot(&r).sqrt());
                sum += &r;
            }
            None => excluded += 1,
        }
    }
    if excluded * 10 > trials {
        return Err(Error::TooManyDivergentTrials { excluded, trials });
    }
    let included = trials - excluded;
    let mean = sum / included as f64;
    let residue_norm = mean.dot(&mean).sqrt();

    let norm_mean = norms.iter().sum::<f64>() / included as f64;
    let var = if included > 1 {
        norms
            .iter()
            .map(|v| (v - norm_mean).powi(2))
            .sum::<f64>()
            / (included as f64 - 1.0)
    } else {
        0.0
    };
    let report = ResidueReport {
        round,
        local_steps,
        trials,
        excluded,
        grad_norm,
        residue_norm,
        ratio: assumption3_ratio(grad_norm, residue_norm),
        trial_norms: TrialStats {
            mean: norm_mean,
            std: var.sqrt(),
            min: norms.iter().copied().fold(f64::INFINITY, f64::min),
            max: norms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        },
    };
    Ok((mean, report))
}

/// Verdict on the classical learning-rate smallness condition
/// `K * eta <= 1 / (N * L)`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct LrConditionReport {
    pub local_steps: usize,
    pub learning_rate: f64,
    /// The constant N > 1 (or 1 for the tightest reading) multiplying the
    /// curvature in the condition's denominator.
    pub n_factor: f64,
    pub lipschitz_hat: f64,
    /// K * eta.
    pub product: f64,
    /// 1 / (N * lipschitz_hat).
    pub limit: f64,
    pub satisfied: bool,
    /// product - limit; positive means the condition is violated by that
    /// much.
    pub margin: f64,
}

/// Empirical estimates of the quantities the theory's assumptions bound,
/// measured from a finished run.
#[derive(Clone, Debug, serde::Serialize)]
pub struct AssumptionAudit {
    /// Largest stochastic-gradient norm over all rounds, clients, and steps.
    pub max_step_grad_norm: f64,
    /// Largest per-round trace of the sample covariance of client updates.
    pub client_delta_variance: f64,
    /// Largest absolute eigenvalue over the analyzed rounds.
    pub lipschitz_hat: f64,
    /// lipschitz_hat * client_delta_variance / clients.
    pub variance_bound: f64,
    /// Largest absolute cosine similarity between centered client updates,
    /// absent when fewer than two clients contributed.
    pub max_client_cosine: Option<f64>,
    pub lr_condition: LrConditionReport,
    pub notes: Vec<String>,
}

/// Audits a finished run against the theory's assumptions: estimates the
/// gradient-norm bound, the per-client update variance, the curvature bound
/// from the analyzed rounds' spectra, checks the learning-rate smallness
/// condition, and probes client independence through pairwise cosines of
/// centered updates.
pub fn audit_assumptions(
    traces: &[crate::fedsim::RoundTrace],
    spectra: &[crate::spectral::SpectralReport],
    local_steps: usize,
    eta: f64,
    n_factor: f64,
) -> Result<AssumptionAudit> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("audit needs at least one round".into()));
    }
    if spectra.is_empty() {
        return Err(Error::InvalidArgument(
            "audit needs the spectrum of at least one analyzed round".into(),
        ));
    }
    if !(n_factor >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "the condition's N factor must be at least 1, got {n_factor}"
        )));
    }
    let mut notes = Vec::new();

    let max_step_grad_norm = traces
        .iter()
        .map(|t| t.max_step_grad_norm)
        .fold(0.0f64, f64::max);

    let clients = traces[0].client_deltas.len();
    let mut client_delta_variance = 0.0f64;
    let mut max_cosine: Option<f64> = None;
    if clients < 2 {
        notes.push("fewer than two clients: variance and independence checks degenerate".into());
    } else {
        for trace in traces {
            let mean = aggregate_mean(&trace.client_deltas);
            let centered: Vec<Array1<f64>> = trace
                .client_deltas
                .iter()
                .map(|d| d - &mean)
                .collect();
            let var = centered.iter().map(|c| c.dot(c)).sum::<f64>()
                / (centered.len() as f64 - 1.0);
            client_delta_variance = client_delta_variance.max(var);
            for i in 0..centered.len() {
                let ni = centered[i].dot(&centered[i]).sqrt();
                if ni < 1e-15 {
                    continue;
                }
                for j in (i + 1)..centered.len() {
                    let nj = centered[j].dot(&centered[j]).sqrt();
                    if nj < 1e-15 {
                        continue;
                    }
                    let cos = (centered[i].dot(&centered[j]) / (ni * nj)).abs();
                    max_cosine = Some(max_cosine.map_or(cos, |m: f64| m.max(cos)));
                }
            }
        }
        if max_cosine.is_none() {
            notes.push("all centered client updates were numerically zero".into());
        }
    }

    let lipschitz_hat = spectra
        .iter()
        .map(|s| s.eigenvalue_min.abs().max(s.eigenvalue_max.abs()))
        .fold(0.0f64, f64::max);
    if !(lipschitz_hat > 0.0) {
        return Err(Error::InvalidArgument(
            "analyzed spectra have zero curvature; the condition is vacuous".into(),
        ));
    }

    let product = local_steps as f64 * eta;
    let limit = 1.0 / (n_factor * lipschitz_hat);
    let lr_condition = LrConditionReport {
        local_steps,
        learning_rate: eta,
        n_factor,
        lipschitz_hat,
        product,
        limit,
        satisfied: product <= limit,
        margin: product - limit,
    };

    Ok(AssumptionAudit {
        max_step_grad_norm,
        client_delta_variance,
        lipschitz_hat,
        variance_bound: crate::spectral::variance_bound(
            client_delta_variance,
            lipschitz_hat,
            clients.max(1),
        )?,
        max_client_cosine: max_cosine,
        lr_condition,
        notes,
    })
}

fn aggregate_mean(deltas: &[Array1<f64>]) -> Array1<f64> {
    let mut sum = Array1::<f64>::zeros(deltas[0].len());
    for d in deltas {
        sum += d;
    }
    sum / deltas.len() as f64
}
