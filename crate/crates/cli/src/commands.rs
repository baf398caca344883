//! Subcommand implementations. Every command returns an exit code:
//! 0 success/pass, 1 poor convergence fit, 2 validation or check failure,
//! 3 vacuous check, 4 solver failure.

use std::fs;
use std::path::PathBuf;

use levypde::coeff::{
    check_boundedness, check_coercivity, check_partial_moment, node_times, CoeffError,
    EllipticityReport,
};
use levypde::field::{io as field_io, SobolevIndex};
use levypde::levy::{sample_family, TimeGrid};
use levypde::solver::{
    solve_linear, solve_localized, solve_picard, PicardOptions, SolutionPath, SolverConfig,
    SolverError,
};
use levypde::verify::{
    check_apriori, check_levy_system, check_quadratic_variation, check_t_independence,
    convergence_study, simulate_ensemble, sup_estimate_ratio, ConvergenceTable, EstimateReport,
    ReferenceKind, Verdict, VerifyError,
};
use thiserror::Error;

use crate::config::{ConfigError, ConvergeReference, Resolved, RunMode};
use crate::manifest::RunManifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) | CliError::Io(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CoeffError> for CliError {
    fn from(e: CoeffError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Coeff(c) => CliError::Validation(c.to_string()),
            SolverError::Mismatch(m) | SolverError::NonQualifying(m) => CliError::Validation(m),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Solver(s) => CliError::from(s),
            VerifyError::Quad(q) => CliError::Solver(q.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub struct RunContext {
    pub resolved: Resolved,
    pub out_dir: PathBuf,
    pub master_seed: u64,
    pub replicas: usize,
    pub force: bool,
}

impl RunContext {
    fn write_output(
        &self,
        manifest: Option<&mut RunManifest>,
        rel: &str,
        bytes: &[u8],
    ) -> Result<(), CliError> {
        let path = self.out_dir.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
        if let Some(m) = manifest {
            m.record_output(rel, bytes);
        }
        Ok(())
    }

    /// Channel weights with the exempted channels replaced by their
    /// truncated-measure weights (finite by construction).
    fn effective_weights(&self) -> Result<Vec<f64>, CliError> {
        let r = &self.resolved;
        let mut weights = r.family.weights().to_vec();
        if let Some((n0, level)) = r.localization {
            for (k, w) in weights.iter_mut().enumerate().take(n0) {
                let t = &r.family.triplets()[k];
                let trunc = t
                    .measure()
                    .second_moment_sq(level)
                    .map_err(|e| CliError::Validation(e.to_string()))?;
                *w = t.beta() * t.beta() + trunc;
            }
        }
        Ok(weights)
    }

    /// Coercivity + boundedness gate; failures are validation errors
    /// unless `--force` downgrades them to warnings.
    fn assumption_gate(&self) -> Result<(), CliError> {
        let r = &self.resolved;
        let times = node_times(&r.time);
        let delta = r.raw.assumptions.delta;
        let kbound = r.raw.assumptions.kbound;
        let coercivity = match r.localization {
            Some((n0, _)) => check_partial_moment(
                &r.set, &r.family, delta, kbound, n0, r.grid, &times, None,
            )?,
            None => check_coercivity(&r.set, &r.family, delta, kbound, r.grid, &times, None)?,
        };
        let weights = self.effective_weights()?;
        let bounded = check_boundedness(&r.set, &weights, kbound, r.grid, &times, None)?;
        let mut problems = Vec::new();
        if !coercivity.pass {
            problems.push(format!(
                "coercivity fails: delta_min {} (needs {delta}), K_max {} (cap {kbound})",
                coercivity.delta_min, coercivity.k_max
            ));
        }
        if !bounded.pass {
            problems.push(format!(
                "boundedness fails: worst value {} exceeds {kbound}",
                bounded.worst_value
            ));
        }
        if problems.is_empty() {
            return Ok(());
        }
        if self.force {
            for p in &problems {
                log::warn!("--force: {p}");
            }
            Ok(())
        } else {
            Err(CliError::Validation(problems.join("; ")))
        }
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn cmd_simulate(ctx: &RunContext) -> Result<i32, CliError> {
    ctx.assumption_gate()?;
    let r = &ctx.resolved;
    let budget = r.solver.stability_budget(r.raw.assumptions.kbound);
    log::info!(
        "stability budget theta*dt*max|xi|^2*K = {budget:.3e}; {} replica(s)",
        ctx.replicas
    );

    let run_one = |replica: usize| -> Result<(SolutionPath<f64>, Vec<u8>, Vec<u8>), CliError> {
        let seed = levypde::seeds::derive(ctx.master_seed, replica as u64);
        let path = sample_family(&r.family, r.time, seed)
            .map_err(|e| CliError::Solver(e.to_string()))?;
        let mut trace_csv = Vec::new();
        let solution = match r.raw.run.mode {
            RunMode::Linear => solve_linear(&r.solver, &r.set, &r.f, &r.g, &r.u0, &path)?,
            RunMode::Picard => {
                let nl = r.nonlinear.as_ref().expect("validated by resolve");
                let (sol, trace) =
                    solve_picard(&r.solver, &r.set, nl, &r.u0, &path, &PicardOptions::default())?;
                trace_csv
                    .extend_from_slice(b"# levypde picard-trace v1\nwindow,iterate,distance\n");
                for (w, window) in trace.windows.iter().enumerate() {
                    for (m, d) in window.distances.iter().enumerate() {
                        trace_csv.extend_from_slice(format!("{w},{m},{d:e}\n").as_bytes());
                    }
                }
                sol
            }
            RunMode::Localized => {
                let (n0, level) = r.localization.expect("validated by resolve");
                solve_localized(&r.solver, &r.set, &r.family, &r.f, &r.g, &r.u0, &path, n0, level)?
                    .0
            }
        };
        let mut path_csv = Vec::new();
        if r.raw.run.dump_paths {
            path.write_csv(&mut path_csv)?;
        }
        Ok((solution, path_csv, trace_csv))
    };

    use rayon::prelude::*;
    let results: Result<Vec<_>, CliError> =
        (0..ctx.replicas).into_par_iter().map(run_one).collect();
    let results = results?;

    fs::create_dir_all(&ctx.out_dir)?;
    let mut manifest = RunManifest::new(
        &r.raw.canonical_toml(),
        ctx.master_seed,
        ctx.replicas,
    );

    // aggregate summary: replica, time, norms, jump count
    let h1 = SobolevIndex::h(1);
    let mut summary = String::from("# levypde summary v1\nreplica,time,l2_norm,h1_norm,jump_count\n");
    for (replica, (solution, _, _)) in results.iter().enumerate() {
        for (n, f) in solution.fields().iter().enumerate() {
            let jumps = if n == 0 {
                0
            } else {
                solution.meta()[n - 1].jumps
            };
            summary.push_str(&format!(
                "{replica},{:e},{:e},{:e},{jumps}\n",
                solution.times()[n],
                f.l2_norm(),
                f.sobolev_norm(h1),
            ));
        }
    }
    ctx.write_output(Some(&mut manifest), "summary.csv", summary.as_bytes())?;

    if r.raw.run.dump_fields {
        for (replica, (solution, _, _)) in results.iter().enumerate() {
            let mut bytes = Vec::new();
            field_io::write_raw(solution.terminal(), &mut bytes)
                .map_err(|e| CliError::Solver(e.to_string()))?;
            ctx.write_output(
                Some(&mut manifest),
                &format!("fields/replica_{replica}.bin"),
                &bytes,
            )?;
        }
    }
    if r.raw.run.dump_paths {
        for (replica, (_, csv, _)) in results.iter().enumerate() {
            ctx.write_output(
                Some(&mut manifest),
                &format!("paths/replica_{replica}.csv"),
                csv,
            )?;
        }
    }
    if r.raw.run.mode == RunMode::Picard {
        for (replica, (_, _, trace)) in results.iter().enumerate() {
            ctx.write_output(
                Some(&mut manifest),
                &format!("traces/replica_{replica}.csv"),
                trace,
            )?;
        }
    }
    manifest.write(&ctx.out_dir)?;
    println!(
        "simulate: {} replica(s) -> {}",
        ctx.replicas,
        ctx.out_dir.display()
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

pub fn cmd_verify(ctx: &RunContext, check: &str) -> Result<i32, CliError> {
    let r = &ctx.resolved;
    let replicas = r.raw.verify.replicas.unwrap_or(ctx.replicas).max(2);
    let channel = r.raw.verify.channel - 1;

    let finish = |ctx: &RunContext, name: &str, report: EstimateReport<f64>| -> Result<i32, CliError> {
        fs::create_dir_all(&ctx.out_dir)?;
        let csv = report.csv();
        ctx.write_output(None, &format!("verify-{name}.csv"), csv.as_bytes())?;
        print!("{csv}");
        Ok(report.verdict.exit_code())
    };

    match check {
        "quadratic-variation" => {
            let report = check_quadratic_variation(
                &r.family,
                r.time,
                channel,
                ctx.master_seed,
                replicas,
            )?;
            finish(ctx, check, report)
        }
        "levy-system" => {
            let report = check_levy_system(
                &r.g[channel],
                &r.family,
                channel,
                r.grid,
                r.time,
                ctx.master_seed,
                replicas,
            )?;
            finish(ctx, check, report)
        }
        "apriori" => {
            ctx.assumption_gate()?;
            let (_, solutions) = simulate_ensemble(
                &r.solver,
                &r.set,
                &r.family,
                &r.f,
                &r.g,
                &r.u0,
                ctx.master_seed,
                replicas,
            )?;
            let report = check_apriori(
                &r.solver,
                &r.f,
                &r.g,
                &r.u0,
                r.family.weights(),
                &solutions,
            )?;
            finish(ctx, check, report)
        }
        "sup-estimate" => {
            ctx.assumption_gate()?;
            let mut rows = String::from("horizon,ratio,stderr\n");
            let mut ratios = Vec::new();
            for (i, mult) in [1.0f64, 2.0, 4.0].into_iter().enumerate() {
                let time = TimeGrid::new(r.time.horizon() * mult, r.time.steps() * (1 << i))
                    .map_err(|e| CliError::Validation(e.to_string()))?;
                let cfg = SolverConfig {
                    time,
                    ..r.solver
                };
                let (_, sols) = simulate_ensemble(
                    &cfg,
                    &r.set,
                    &r.family,
                    &r.f,
                    &r.g,
                    &r.u0,
                    ctx.master_seed.wrapping_add(i as u64),
                    replicas,
                )?;
                let (ratio, se) =
                    sup_estimate_ratio(&cfg, &r.f, &r.g, &r.u0, r.family.weights(), &sols)?;
                rows.push_str(&format!("{:e},{ratio:e},{se:e}\n", time.horizon()));
                ratios.push(ratio);
            }
            let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let verdict = if max == 0.0 {
                Verdict::Vacuous
            } else if max <= 1.25 * min {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            rows.push_str(&format!("# verdict,{}\n", verdict.label()));
            fs::create_dir_all(&ctx.out_dir)?;
            ctx.write_output(None, "verify-sup-estimate.csv", rows.as_bytes())?;
            print!("{rows}");
            Ok(verdict.exit_code())
        }
        "t-independence" => {
            ctx.assumption_gate()?;
            let mut runs = Vec::new();
            for (i, mult) in [1.0f64, 2.0, 4.0].into_iter().enumerate() {
                let time = TimeGrid::new(r.time.horizon() * mult, r.time.steps() * (1 << i))
                    .map_err(|e| CliError::Validation(e.to_string()))?;
                let cfg = SolverConfig {
                    time,
                    ..r.solver
                };
                let (_, sols) = simulate_ensemble(
                    &cfg,
                    &r.set,
                    &r.family,
                    &r.f,
                    &r.g,
                    &r.u0,
                    ctx.master_seed.wrapping_add(10 + i as u64),
                    replicas,
                )?;
                runs.push((cfg, sols));
            }
            let report =
                check_t_independence(&r.set, &runs, &r.f, &r.g, &r.u0, r.family.weights())?;
            let mut rows = String::from("horizon,ratio,stderr\n");
            for (t, ratio, se) in &report.per_horizon {
                rows.push_str(&format!("{t:e},{ratio:e},{se:e}\n"));
            }
            let verdict = if report.per_horizon.iter().all(|(_, r, _)| *r == 0.0) {
                Verdict::Vacuous
            } else if report.pass {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            rows.push_str(&format!("# verdict,{}\n", verdict.label()));
            fs::create_dir_all(&ctx.out_dir)?;
            ctx.write_output(None, "verify-t-independence.csv", rows.as_bytes())?;
            print!("{rows}");
            Ok(verdict.exit_code())
        }
        other => Err(CliError::Validation(format!(
            "unknown check `{other}`; expected quadratic-variation | levy-system | apriori | sup-estimate | t-independence"
        ))),
    }
}

// ---------------------------------------------------------------------------
// converge
// ---------------------------------------------------------------------------

pub fn cmd_converge(ctx: &RunContext, ladder: Option<Vec<usize>>) -> Result<i32, CliError> {
    let r = &ctx.resolved;
    let ladder = ladder.unwrap_or_else(|| r.raw.converge.ladder.clone());
    let reference = match r.raw.converge.reference {
        ConvergeReference::Oracle => ReferenceKind::MildOracle,
        ConvergeReference::SelfRefined => ReferenceKind::SelfRefined {
            factor: r.raw.converge.refine,
        },
    };
    let table: ConvergenceTable<f64> = convergence_study(
        &r.solver,
        &r.set,
        &r.family,
        &r.f,
        &r.g,
        &r.u0,
        &ladder,
        reference,
        ctx.master_seed,
        r.raw.converge.realizations,
    )?;
    fs::create_dir_all(&ctx.out_dir)?;
    let csv = table.csv();
    ctx.write_output(None, "converge.csv", csv.as_bytes())?;
    print!("{csv}");
    if table.r_squared < 0.9 {
        log::warn!("poor fit: R^2 = {}", table.r_squared);
        return Ok(1);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// coercivity
// ---------------------------------------------------------------------------

pub fn cmd_coercivity(ctx: &RunContext) -> Result<i32, CliError> {
    let r = &ctx.resolved;
    let times = node_times(&r.time);
    let delta = r.raw.assumptions.delta;
    let kbound = r.raw.assumptions.kbound;
    let report: EllipticityReport<f64> = match r.localization {
        Some((n0, _)) => {
            check_partial_moment(&r.set, &r.family, delta, kbound, n0, r.grid, &times, None)?
        }
        None => check_coercivity(&r.set, &r.family, delta, kbound, r.grid, &times, None)?,
    };
    let point: Vec<String> = report.worst_point.iter().map(|x| format!("{x:e}")).collect();
    let csv = format!(
        "delta_min,k_max,worst_time,worst_point,pass\n{:e},{:e},{:e},\"{}\",{}\n",
        report.delta_min,
        report.k_max,
        report.worst_time,
        point.join(";"),
        report.pass
    );
    fs::create_dir_all(&ctx.out_dir)?;
    ctx.write_output(None, "coercivity.csv", csv.as_bytes())?;
    print!("{csv}");
    Ok(if report.pass { 0 } else { 2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_codes_follow_the_contract() {
        assert_eq!(CliError::Validation("x".into()).exit_code(), 2);
        assert_eq!(CliError::Solver("x".into()).exit_code(), 4);
    }

    #[test]
    fn solver_errors_map_to_exit_four_and_validation_to_two() {
        let e: CliError = SolverError::NonFinite { step: 3 }.into();
        assert_eq!(e.exit_code(), 4);
        let e: CliError = VerifyError::InsufficientLadder(1).into();
        assert_eq!(e.exit_code(), 2);
    }
}
