use std::fs::File;
use std::io::Write;
use std::path::Path;

use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use gbspe_core::advantage::{
    efficiency_ratio_summary, estimate_percentage, sweep, AdvantageConfig, SweepRow, TrialRecord,
};
use gbspe_core::estimators::{
    empirical_mse, hybrid_plan, mu_haf, mu_hafsq, variance_gbsi, variance_gbsp, variance_mc_haf,
    variance_mc_hafsq, Estimator,
};
use gbspe_core::gbs::{mean_photon_number, normalization, solve_scaling, GbsProgram};
use gbspe_core::hafnian::{hafnian_multiindex, hafnian_sign};
use gbspe_core::linalg::eigendecompose;
use gbspe_core::{AccuracySpec, HafnianCache, MultiIndex, ProblemKind, ProblemShape, RngStream, VarianceReport};

use crate::args::{AdvantageArgs, Command, KindArg};
use crate::error::{write_error, CliError, CliResult};
use crate::input::{read_instance, read_json, read_matrix, read_slices, GridFile};

/// Doubles in CSV files carry 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn print_json(value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| write_error(path, e))
}

pub fn run(command: Command, cache: &HafnianCache) -> CliResult<()> {
    match command {
        Command::Hafnian { matrix, index } => hafnian(&matrix, index.as_deref(), cache),
        Command::SolveT { matrix, k } => solve_t(&matrix, k),
        Command::Variances { instance, k, mode, budget } => variances(&instance, k, mode, budget, cache),
        Command::SampleSize { instance, eps, delta, mode, budget } => {
            let inst = read_instance(&instance)?;
            let spec = AccuracySpec::new(eps, delta)?;
            let report = VarianceReport::compute(&inst, mode.into(), spec, cache, budget)?;
            print_json(&report)
        }
        Command::Simulate { instance, n, replicas, estimator, mode, seed } => {
            simulate(&instance, n, replicas, estimator.resolve(mode), seed, cache)
        }
        Command::Advantage(args) => advantage(&args),
        Command::Sweep { grid, out } => run_sweep(&grid, &out),
        Command::HybridPlan { slices, eps, delta } => {
            let slices = read_slices(&slices)?;
            let plan = hybrid_plan(&slices, AccuracySpec::new(eps, delta)?)?;
            print_json(&plan)
        }
    }
}

fn hafnian(matrix: &Path, index: Option<&str>, cache: &HafnianCache) -> CliResult<()> {
    let b = read_matrix(matrix)?;
    let index: MultiIndex = match index {
        Some(s) => s.parse()?,
        None => MultiIndex::new(vec![1; b.dim()]),
    };
    let value = hafnian_multiindex(&b, &index, cache)?;
    let sign = hafnian_sign(&b, &index, cache)?;
    print_json(&json!({ "index": index.to_string(), "hafnian": value, "sign": sign }))
}

fn solve_t(matrix: &Path, k: u32) -> CliResult<()> {
    let b = read_matrix(matrix)?;
    if k == 0 {
        return Err(CliError::config("K: must be at least 1"));
    }
    let eig = eigendecompose(&b)?;
    if let Some(l) = eig.eigenvalues.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(CliError::config(format!("matrix: eigenvalue {l} is outside (0, 1)")));
    }
    let target = 2.0 * k as f64;
    let t = solve_scaling(&eig.eigenvalues, target)?;
    let d_t = normalization(&eig.eigenvalues, t)?;
    let m = mean_photon_number(&eig.eigenvalues, t)?;
    print_json(&json!({ "t": t, "d_t": d_t, "mean_photons": m, "residual": m - target }))
}

fn variances(instance: &Path, k: Option<u32>, mode: KindArg, budget: u128, cache: &HafnianCache) -> CliResult<()> {
    let inst = read_instance(instance)?;
    if let Some(k) = k {
        if k != inst.shape().k {
            return Err(CliError::config(format!("K: {k} disagrees with the instance file ({})", inst.shape().k)));
        }
    }
    let program = GbsProgram::for_instance(&inst)?;
    let (mu, v_gbs, v_mc) = match ProblemKind::from(mode) {
        ProblemKind::Haf => (
            mu_haf(&inst, cache)?,
            variance_gbsp(&inst, &program, cache)?,
            variance_mc_haf(&inst, cache, budget)?,
        ),
        ProblemKind::HafSq => (
            mu_hafsq(&inst, cache)?,
            variance_gbsi(&inst, &program, cache)?,
            variance_mc_hafsq(&inst, cache, budget)?,
        ),
    };
    print_json(&json!({ "mode": ProblemKind::from(mode), "t": program.t, "mu": mu, "V_gbs": v_gbs, "V_mc": v_mc }))
}

fn simulate(instance: &Path, n: u64, replicas: usize, estimator: Estimator, seed: u64, cache: &HafnianCache) -> CliResult<()> {
    let inst = read_instance(instance)?;
    let rep = empirical_mse(&inst, estimator, n, replicas, &RngStream::new(seed), cache, None)?;
    // GBS-P's closed form is for 4 n MSE; the others for n MSE.
    let factor = if estimator == Estimator::GbsP { 4.0 } else { 1.0 };
    let scaled = factor * n as f64 * rep.mse;
    let theory = factor * n as f64 * rep.predicted_mse;
    print_json(&json!({
        "estimator": estimator,
        "n": n,
        "replicas": replicas,
        "seed": seed,
        "target": rep.target,
        "mean": rep.mean,
        "mse": rep.mse,
        "scaled_mse": scaled,
        "theory": theory,
        "ratio": scaled / theory,
    }))
}

pub const RECORDS_HEADER: [&str; 8] = ["l", "m", "vandermonde", "V_mc", "V_gbs", "H", "ratio", "skipped"];

fn write_records(path: &Path, records: &[TrialRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_error(path, e))?;
    w.write_record(RECORDS_HEADER).map_err(|e| write_error(path, e))?;
    for r in records {
        w.write_record([
            r.l.to_string(),
            r.m.to_string(),
            fmt_f64(r.vandermonde),
            fmt_f64(r.v_mc),
            fmt_f64(r.v_gbs),
            r.h.to_string(),
            fmt_f64(r.ratio),
            u8::from(r.skipped).to_string(),
        ])
        .map_err(|e| write_error(path, e))?;
    }
    w.flush().map_err(|e| write_error(path, e))
}

fn advantage(args: &AdvantageArgs) -> CliResult<()> {
    let mut config =
        AdvantageConfig::new(ProblemShape::new(args.n, args.k)?, args.mode.into(), args.n1, args.n2, args.seed);
    config.budget = args.budget;
    config.normalization = args.normalization.into();
    config.cn_draws = args.cn_draws;
    config.validate()?;

    let result = estimate_percentage(&config)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| write_error(&args.out_dir, e))?;
    let records_path = args.out_dir.join("records.csv");
    write_records(&records_path, &result.records)?;
    let ratios = efficiency_ratio_summary(&result.records).ok();
    let summary: Value = json!({
        "config": config,
        "percentage": result.percentage,
        "stderr": result.stderr,
        "records": result.records.len(),
        "skipped": result.skipped,
        "cn": result.cn,
        "trace": result.trace,
        "ratio_summary": ratios,
    });
    write_json(&args.out_dir.join("summary.json"), &summary)?;
    info!("wrote {}", records_path.display());
    print_json(&summary)
}

pub const SWEEP_HEADER: [&str; 8] = ["N", "K", "mode", "status", "percentage", "stderr", "skipped_trials", "runtime_s"];

/// Serde name of a unit-variant enum.
fn serde_name(v: &impl Serialize) -> CliResult<String> {
    match serde_json::to_value(v).map_err(|e| CliError::Internal(e.to_string()))? {
        Value::String(s) => Ok(s),
        other => Ok(other.to_string()),
    }
}

fn sweep_fields(row: &SweepRow) -> CliResult<Vec<String>> {
    Ok(vec![
        row.n.to_string(),
        row.k.to_string(),
        serde_name(&row.mode)?,
        serde_name(&row.status)?,
        row.percentage.map(fmt_f64).unwrap_or_default(),
        row.stderr.map(fmt_f64).unwrap_or_default(),
        row.skipped_trials.to_string(),
        format!("{:.3}", row.runtime),
    ])
}

fn run_sweep(grid: &Path, out: &Path) -> CliResult<()> {
    let grid: GridFile = read_json(grid)?;
    let configs = grid
        .cells
        .iter()
        .map(|c| {
            let mut config = AdvantageConfig::new(ProblemShape::new(c.n, c.k)?, c.mode, grid.n1, grid.n2, grid.seed);
            if let Some(b) = grid.budget {
                config.budget = b;
            }
            if let Some(n) = grid.normalization {
                config.normalization = n;
            }
            config.validate()?;
            Ok(config)
        })
        .collect::<CliResult<Vec<_>>>()?;

    let file = File::create(out).map_err(|e| write_error(out, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(SWEEP_HEADER).map_err(|e| write_error(out, e))?;
    w.flush().map_err(|e| write_error(out, e))?;
    let mut sink_error = None;
    let rows = sweep(&configs, |row| {
        let res = sweep_fields(row).and_then(|f| {
            w.write_record(&f).map_err(|e| write_error(out, e))?;
            w.flush().map_err(|e| write_error(out, e))
        });
        if let Err(e) = res {
            sink_error = Some(e);
            return Err(gbspe_core::Error::Internal("sweep output failed".into()));
        }
        Ok(())
    });
    if let Some(e) = sink_error {
        return Err(e);
    }
    let rows = rows?;
    let mut stdout = std::io::stdout().lock();
    for row in &rows {
        writeln!(stdout, "{}", sweep_fields(row)?.join(",")).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    Ok(())
}
