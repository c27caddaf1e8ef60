//! The five commands: train, diagnose, residue, audit, and report.
//!
//! `train` runs the federation and writes metrics, checkpoints, and loss
//! curves. `diagnose` and `residue` work from checkpoints on disk, so they
//! can be rerun with different settings without retraining. `audit` replays
//! the configured run in memory (training is deterministic, so the replay
//! is exact) and checks it against the assumption estimates. `report` does
//! all of the above in one pass without rereading artifacts.

use std::collections::BTreeSet;
use std::path::PathBuf;

use lsgd_core::data::Dataset;
use lsgd_core::fedsim::{metrics_csv, run_training, RoundTrace};
use lsgd_core::model::LossProblem;
use lsgd_core::residue::{
    audit_assumptions, estimate_residue_expectation, AssumptionAudit, ResidueReport, TrialStats,
};
use lsgd_core::spectral::{analyze_round, SpectralReport};
use ndarray::Array1;

use crate::artifacts::{
    cpdf_csv, eigenvalue_range_csv, ensure_dir, residue_csv, soe_csv, versions, write_checkpoint,
    write_json, write_text, Checkpoint, Manifest,
};
use crate::config::{resolve, ExperimentConfig, OptimizerName, ResolvedExperiment};
use crate::error::{CliError, CliResult};
use crate::svg::{render, ChartSpec, Series};

/// Everything a command needs: the validated config (with CLI overrides
/// already applied), the hash of the config bytes, and the output location.
pub struct Ctx {
    pub config: ExperimentConfig,
    pub config_path: PathBuf,
    pub config_sha256: String,
    pub out_dir: PathBuf,
    pub deterministic: bool,
}

impl Ctx {
    fn svg_timestamp(&self) -> Option<u64> {
        if self.deterministic {
            None
        } else {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .ok()
                .map(|d| d.as_secs())
        }
    }

    fn write_manifest(&self, command: &str) -> CliResult<()> {
        let manifest = Manifest {
            command,
            config_file: self.config_path.display().to_string(),
            config_sha256: &self.config_sha256,
            seed: self.config.federation.seed,
            deterministic: self.deterministic,
            versions: versions(),
        };
        write_json(&self.out_dir.join("manifest.json"), &manifest)
    }

    /// Rounds whose model state gets saved during training.
    fn checkpoint_rounds(&self) -> BTreeSet<usize> {
        if self.config.output.checkpoint_all_rounds {
            return (0..self.config.federation.rounds).collect();
        }
        self.config
            .diagnostics
            .rounds
            .iter()
            .chain(&self.config.residue.rounds)
            .copied()
            .collect()
    }
}

pub fn dispatch(command: &str, ctx: &Ctx) -> CliResult<()> {
    ensure_dir(&ctx.out_dir)?;
    match command {
        "train" => cmd_train(ctx),
        "diagnose" => cmd_diagnose(ctx),
        "residue" => cmd_residue(ctx),
        "audit" => cmd_audit(ctx),
        "report" => cmd_report(ctx),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }
}

pub fn cmd_train(ctx: &Ctx) -> CliResult<()> {
    let resolved = resolve(&ctx.config)?;
    let runs = train_all(ctx, &resolved)?;
    write_train_artifacts(ctx, &runs)?;
    ctx.write_manifest("train")
}

pub fn cmd_diagnose(ctx: &Ctx) -> CliResult<()> {
    let rounds = ctx.config.diagnostics.rounds.clone();
    if rounds.is_empty() {
        return Err(CliError::Config(
            "diagnose needs [diagnostics] rounds (or --rounds)".into(),
        ));
    }
    let resolved = resolve(&ctx.config)?;
    let mut reports = Vec::new();
    for &t in &rounds {
        let ck = crate::artifacts::read_checkpoint(&ctx.out_dir, t)?;
        check_checkpoint_dim(&ck, &resolved.problem)?;
        let report = analyze_checkpoint(ctx, &resolved.problem, &ck)?;
        write_spectral_artifacts(ctx, &report)?;
        print_spectral_summary(&report);
        reports.push(report);
    }
    write_eigenvalue_range(ctx, &reports)?;
    ctx.write_manifest("diagnose")
}

pub fn cmd_residue(ctx: &Ctx) -> CliResult<()> {
    let rounds = ctx.config.residue.rounds.clone();
    if rounds.is_empty() {
        return Err(CliError::Config(
            "residue needs [residue] rounds (or --rounds)".into(),
        ));
    }
    let resolved = resolve(&ctx.config)?;
    let mut rows = Vec::new();
    for &t in &rounds {
        let ck = crate::artifacts::read_checkpoint(&ctx.out_dir, t)?;
        check_checkpoint_dim(&ck, &resolved.problem)?;
        let x = ck.x_array();
        rows.extend(residue_rows(ctx, &resolved, &x, t)?);
    }
    write_residue_artifacts(ctx, &rows)?;
    ctx.write_manifest("residue")
}

pub fn cmd_audit(ctx: &Ctx) -> CliResult<()> {
    if ctx.config.diagnostics.rounds.is_empty() {
        return Err(CliError::Config(
            "audit estimates curvature from [diagnostics] rounds; list at least one".into(),
        ));
    }
    let resolved = resolve(&ctx.config)?;
    let fed = &ctx.config.federation;
    let run_cfg = fed.run_config(fed.optimizer);
    let traces = run_training(
        &resolved.problem,
        &resolved.shards,
        &run_cfg,
        resolved.dataset.as_deref(),
    )?;
    let spectra = spectra_from_traces(ctx, &resolved.problem, &traces)?;
    let audit = run_audit(ctx, &traces, &spectra)?;
    write_json(&ctx.out_dir.join("audit.json"), &audit)?;
    print_audit_summary(&audit);
    ctx.write_manifest("audit")
}

pub fn cmd_report(ctx: &Ctx) -> CliResult<()> {
    let resolved = resolve(&ctx.config)?;
    let runs = train_all(ctx, &resolved)?;
    write_train_artifacts(ctx, &runs)?;
    let traces = &runs[0].1;

    if !ctx.config.diagnostics.rounds.is_empty() {
        let spectra = spectra_from_traces(ctx, &resolved.problem, traces)?;
        for report in &spectra {
            write_spectral_artifacts(ctx, report)?;
            print_spectral_summary(report);
        }
        write_eigenvalue_range(ctx, &spectra)?;
        let audit = run_audit(ctx, traces, &spectra)?;
        write_json(&ctx.out_dir.join("audit.json"), &audit)?;
        print_audit_summary(&audit);
    }

    if !ctx.config.residue.rounds.is_empty() {
        let mut rows = Vec::new();
        for &t in &ctx.config.residue.rounds {
            rows.extend(residue_rows(ctx, &resolved, traces[t].x.as_array(), t)?);
        }
        write_residue_artifacts(ctx, &rows)?;
    }

    ctx.write_manifest("report")
}

fn train_all(
    ctx: &Ctx,
    resolved: &ResolvedExperiment,
) -> CliResult<Vec<(OptimizerName, Vec<RoundTrace>)>> {
    let fed = &ctx.config.federation;
    let mut order = vec![fed.optimizer];
    order.extend(fed.compare.iter().copied());
    let eval: Option<&Dataset> = resolved.dataset.as_deref();
    let mut runs = Vec::new();
    for name in order {
        let run_cfg = fed.run_config(name);
        let traces = run_training(&resolved.problem, &resolved.shards, &run_cfg, eval)?;
        runs.push((name, traces));
    }
    Ok(runs)
}

fn write_train_artifacts(
    ctx: &Ctx,
    runs: &[(OptimizerName, Vec<RoundTrace>)],
) -> CliResult<()> {
    for (i, (name, traces)) in runs.iter().enumerate() {
        let file = if i == 0 {
            "metrics.csv".to_string()
        } else {
            format!("metrics_{}.csv", name.label())
        };
        write_text(&ctx.out_dir.join(file), &metrics_csv(traces))?;
        let last = traces.last().expect("at least one round");
        let grad_norm = last.full_grad.dot(&last.full_grad).sqrt();
        match last.test_accuracy {
            Some(acc) => println!(
                "{}: {} rounds, final loss {:.6e}, |grad| {:.3e}, accuracy {:.4}",
                name.label(),
                traces.len(),
                last.loss,
                grad_norm,
                acc
            ),
            None => println!(
                "{}: {} rounds, final loss {:.6e}, |grad| {:.3e}",
                name.label(),
                traces.len(),
                last.loss,
                grad_norm
            ),
        }
    }

    for &t in &ctx.checkpoint_rounds() {
        let trace = &runs[0].1[t];
        write_checkpoint(
            &ctx.out_dir,
            &Checkpoint {
                round: t,
                loss: trace.loss,
                x: trace.x.as_array().to_vec(),
                delta: trace.delta.to_vec(),
            },
        )?;
    }

    if ctx.config.output.svg {
        let series = runs
            .iter()
            .map(|(name, traces)| Series {
                label: name.label().to_string(),
                points: traces
                    .iter()
                    .map(|tr| (tr.round as f64, tr.loss))
                    .collect(),
            })
            .collect();
        let chart = ChartSpec {
            title: "training loss by round".into(),
            x_label: "round".into(),
            y_label: "loss".into(),
            log_x: false,
            series,
            timestamp: ctx.svg_timestamp(),
        };
        write_text(&ctx.out_dir.join("loss_curve.svg"), &render(&chart))?;
    }
    Ok(())
}

fn check_checkpoint_dim(ck: &Checkpoint, problem: &LossProblem) -> CliResult<()> {
    if ck.x.len() != problem.dim() {
        return Err(CliError::Config(format!(
            "checkpoint for round {} has dimension {} but the config resolves to {}",
            ck.round,
            ck.x.len(),
            problem.dim()
        )));
    }
    Ok(())
}

fn analyze_checkpoint(
    ctx: &Ctx,
    problem: &LossProblem,
    ck: &Checkpoint,
) -> CliResult<SpectralReport> {
    let fed = &ctx.config.federation;
    Ok(analyze_round(
        problem,
        &ck.x_array(),
        &ck.delta_array(),
        fed.learning_rate,
        fed.local_steps,
        ck.round,
        ctx.config.diagnostics.threshold_count,
    )?)
}

fn spectra_from_traces(
    ctx: &Ctx,
    problem: &LossProblem,
    traces: &[RoundTrace],
) -> CliResult<Vec<SpectralReport>> {
    let fed = &ctx.config.federation;
    ctx.config
        .diagnostics
        .rounds
        .iter()
        .map(|&t| {
            Ok(analyze_round(
                problem,
                traces[t].x.as_array(),
                &traces[t].delta,
                fed.learning_rate,
                fed.local_steps,
                t,
                ctx.config.diagnostics.threshold_count,
            )?)
        })
        .collect()
}

fn write_spectral_artifacts(ctx: &Ctx, report: &SpectralReport) -> CliResult<()> {
    let t = report.round;
    write_json(
        &ctx.out_dir.join(format!("spectral_round_{t}.json")),
        report,
    )?;
    write_text(
        &ctx.out_dir.join(format!("cpdf_round_{t}.csv")),
        &cpdf_csv(report),
    )?;
    write_text(
        &ctx.out_dir.join(format!("soe_round_{t}.csv")),
        &soe_csv(report),
    )?;
    if ctx.config.output.svg {
        let chart = ChartSpec {
            title: format!("cumulative energy below eigenvalue threshold, round {t}"),
            x_label: "eigenvalue threshold".into(),
            y_label: "fraction of energy".into(),
            log_x: true,
            series: vec![
                Series {
                    label: "gradient".into(),
                    points: report.cpdf.iter().map(|p| (p.threshold, p.gradient)).collect(),
                },
                Series {
                    label: "update".into(),
                    points: report.cpdf.iter().map(|p| (p.threshold, p.update)).collect(),
                },
            ],
            timestamp: ctx.svg_timestamp(),
        };
        write_text(
            &ctx.out_dir.join(format!("cpdf_round_{t}.svg")),
            &render(&chart),
        )?;
    }
    Ok(())
}

fn print_spectral_summary(report: &SpectralReport) {
    println!(
        "round {}: lambda in [{:.6e}, {:.6e}], series-vs-measured rel err {:.3e}, newton rel err {:.3e}",
        report.round,
        report.eigenvalue_min,
        report.eigenvalue_max,
        report.predicted_update_rel_err,
        report.newton_rel_err
    );
}

fn write_eigenvalue_range(ctx: &Ctx, reports: &[SpectralReport]) -> CliResult<()> {
    let rows: Vec<(usize, f64, f64)> = reports
        .iter()
        .map(|r| (r.round, r.eigenvalue_min, r.eigenvalue_max))
        .collect();
    write_text(
        &ctx.out_dir.join("eigenvalue_range.csv"),
        &eigenvalue_range_csv(&rows),
    )
}

fn residue_rows(
    ctx: &Ctx,
    resolved: &ResolvedExperiment,
    x: &Array1<f64>,
    round: usize,
) -> CliResult<Vec<ResidueReport>> {
    let fed = &ctx.config.federation;
    let shard = &resolved.shards[0];
    let mut rows = Vec::new();
    for &k in &ctx.config.residue.local_steps {
        let report = if k == 0 {
            // Zero steps means the endpoint is the anchor itself; the
            // residue is identically zero without sampling anything.
            let grad = resolved.problem.full_grad(x)?;
            ResidueReport {
                round,
                local_steps: 0,
                trials: ctx.config.residue.trials,
                excluded: 0,
                grad_norm: grad.dot(&grad).sqrt(),
                residue_norm: 0.0,
                ratio: f64::INFINITY,
                trial_norms: TrialStats {
                    mean: 0.0,
                    std: 0.0,
                    min: 0.0,
                    max: 0.0,
                },
            }
        } else {
            let (_, report) = estimate_residue_expectation(
                &resolved.problem,
                shard,
                x,
                k,
                fed.learning_rate,
                fed.batch_size,
                ctx.config.residue.trials,
                fed.seed,
                round,
            )?;
            report
        };
        println!(
            "round {} k={}: |grad| {:.6e}, |residue| {:.6e}, ratio {}",
            round, k, report.grad_norm, report.residue_norm, report.ratio
        );
        write_json(
            &ctx.out_dir.join(format!("residue_round_{round}_k_{k}.json")),
            &report,
        )?;
        rows.push(report);
    }
    Ok(rows)
}

fn write_residue_artifacts(ctx: &Ctx, rows: &[ResidueReport]) -> CliResult<()> {
    write_text(&ctx.out_dir.join("residue.csv"), &residue_csv(rows))
}

fn run_audit(
    ctx: &Ctx,
    traces: &[RoundTrace],
    spectra: &[SpectralReport],
) -> CliResult<AssumptionAudit> {
    let fed = &ctx.config.federation;
    Ok(audit_assumptions(
        traces,
        spectra,
        fed.local_steps,
        fed.learning_rate,
        1.0,
    )?)
}

fn print_audit_summary(audit: &AssumptionAudit) {
    let c = &audit.lr_condition;
    let verdict = if c.satisfied { "satisfied" } else { "violated" };
    println!(
        "lr condition: K*eta = {:.6} vs 1/(N*L_hat) = {:.6} -> {} (margin {:.6})",
        c.product, c.limit, verdict, c.margin
    );
    println!(
        "estimates: max step |grad| {:.6e}, client update variance {:.6e}, L_hat {:.6e}",
        audit.max_step_grad_norm, audit.client_delta_variance, audit.lipschitz_hat
    );
}
