//! Configuration-driven command-line front end.
//!
//! Every command reads a JSON [`ExperimentConfig`], computes all outputs in
//! memory, and commits them atomically together with a `manifest.json`.

pub mod config;
pub mod output;

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::channel::{apply_power, validate_superop, VALIDITY_TOL};
use crate::hs_algebra::Operator;
use crate::manifold::{ems_from_modes, ems_qubit, fixed_point_space, manifold_from_candidates, MetastableManifold};
use crate::models::eigenprojectors;
use crate::spectral::{classify_spectrum, spectral_decompose, MetastableRegion, SpectrumClassification, EIGVEC_TOL};
use crate::trajectory::{
    classify_and_average, polarization_histogram, run_ensemble, ClassThresholds, EnsembleSpec, DEFAULT_PEAK_PROMINENCE,
};
use crate::Error;

pub use config::ExperimentConfig;
use config::BuiltModel;
use output::{num, sha256_hex, Csv, Outputs};

/// Tolerance for the biorthonormality and fixed-point commutation checks.
pub const RESIDUAL_TOL: f64 = EIGVEC_TOL;

#[derive(Debug, Parser)]
#[command(name = "metachan", version, about = "Metastability analysis of repeated-measurement quantum channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Channel eigenvalues and the metastable region.
    Spectrum(CommonArgs),
    /// Extreme metastable states and their dual observables.
    Ems(CommonArgs),
    /// Monte Carlo measurement records, histograms and class averages.
    Simulate(CommonArgs),
    /// CPTP, unitality, biorthonormality and fixed-point residuals.
    Validate(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "METACHAN_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub emit_trajectories: bool,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Ems(_) => "ems",
            Command::Simulate(_) => "simulate",
            Command::Validate(_) => "validate",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Spectrum(a) | Command::Ems(a) | Command::Simulate(a) | Command::Validate(a) => a,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{0}")]
    Budget(String),
    #[error("validation failed: {}", .0.join(", "))]
    Validation(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Precondition(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            Error::InvalidInput(_) | Error::NotPsd { .. } | Error::DimensionMismatch { .. } | Error::InvalidThresholds(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Precondition(e.to_string()),
        }
    }
}

/// Loads the config and applies command-line overrides.
pub fn load_config(args: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text).map_err(CliError::Config)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    if args.emit_trajectories {
        cfg.run.emit_trajectories = true;
    }
    Ok(cfg)
}

/// Runs one command end to end; on error nothing is written.
pub fn run(cmd: &Command) -> Result<PathBuf, CliError> {
    let started = unix_now();
    let args = cmd.args();
    let cfg = load_config(args)?;
    let out = match cmd {
        Command::Spectrum(_) => cmd_spectrum(&cfg)?,
        Command::Ems(_) => cmd_ems(&cfg)?,
        Command::Simulate(_) => cmd_simulate(&cfg, args.threads)?,
        Command::Validate(_) => {
            let (out, failures) = cmd_validate(&cfg)?;
            if !failures.is_empty() {
                // the report is still written so the offenders can be inspected
                commit(&cfg, cmd.name(), out, started)?;
                return Err(CliError::Validation(failures));
            }
            out
        }
    };
    if cfg.run.emit_trajectories && !matches!(cmd, Command::Simulate(_)) {
        log::warn!("--emit-trajectories only affects simulate");
    }
    commit(&cfg, cmd.name(), out, started)?;
    Ok(cfg.output.clone())
}

fn commit(cfg: &ExperimentConfig, command: &str, mut out: Outputs, started: f64) -> Result<(), CliError> {
    let files: Vec<Value> = out
        .files()
        .iter()
        .map(|(name, bytes)| json!({"name": name, "bytes": bytes.len(), "sha256": sha256_hex(bytes)}))
        .collect();
    let manifest = json!({
        "tool": "metachan",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config_sha256": sha256_hex(cfg.to_json().as_bytes()),
        "seed": cfg.run.seed,
        "started_unix": started,
        "finished_unix": unix_now(),
        "files": files,
    });
    out.add_json("manifest.json", &manifest);
    out.commit(&cfg.output)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", cfg.output.display())))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn build(model: &config::ModelConfig) -> Result<BuiltModel, CliError> {
    model.build().map_err(CliError::Config)
}

fn classify(model: &BuiltModel, cfg: &ExperimentConfig) -> Result<(crate::spectral::SpectralData, SpectrumClassification), CliError> {
    let sd = spectral_decompose(&model.maps.channel_superop())?;
    let cls = classify_spectrum(&sd, cfg.analysis.eps_unit, cfg.analysis.l_override)?;
    Ok((sd, cls))
}

fn region_json(gamma: Option<f64>, cls: &SpectrumClassification) -> Value {
    let mut v = json!({
        "gamma": gamma,
        "n": cls.n_unimodular,
        "n_fixed": cls.n_fixed,
    });
    match &cls.region {
        Some(r) => {
            v["l"] = json!(r.l);
            v["mu_prime"] = json!(r.mu_prime);
            v["mu_double_prime"] = json!(r.mu_double_prime);
            v["gap_ratio"] = json!(r.gap_ratio);
            v["midpoint"] = json!(r.midpoint());
        }
        None => v["region"] = Value::Null,
    }
    v
}

/// `spectrum.csv`, `region.json`, `spectrum.gp`.
pub fn cmd_spectrum(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let gammas: Vec<Option<f64>> = match &cfg.analysis.gamma_scan {
        Some(scan) => scan.values().into_iter().map(Some).collect(),
        None => vec![cfg.model.gamma()],
    };
    let mut csv = Csv::new(&["gamma", "index", "re", "im", "modulus", "class"]);
    let mut regions = Vec::new();
    for g in &gammas {
        let model = match g {
            Some(g) => cfg.model.with_gamma(*g).expect("scan requires a coupling strength"),
            None => cfg.model.clone(),
        };
        let built = build(&model)?;
        let (sd, cls) = classify(&built, cfg)?;
        for (i, (z, c)) in sd.eigenvalues().iter().zip(&cls.classes).enumerate() {
            csv.row(&[
                g.map_or_else(|| "nan".into(), num),
                i.to_string(),
                num(z.re),
                num(z.im),
                num(z.norm()),
                c.label().into(),
            ]);
        }
        regions.push(region_json(*g, &cls));
    }
    let mut out = Outputs::default();
    out.add("spectrum.csv", csv.finish());
    if cfg.analysis.gamma_scan.is_some() {
        out.add_json("region.json", &Value::Array(regions));
    } else {
        out.add_json("region.json", &regions[0]);
    }
    let script = if cfg.analysis.gamma_scan.is_some() {
        "set datafile separator ','\nset xlabel 'gamma'\nset ylabel '|lambda|'\nplot 'spectrum.csv' using 1:5 every ::1 with points pt 7 ps 0.5 title 'moduli'\n"
    } else {
        "set datafile separator ','\nset xlabel 'Re lambda'\nset ylabel 'Im lambda'\nset size square\nplot 'spectrum.csv' using 3:4 every ::1 with points pt 7 title 'eigenvalues'\n"
    };
    out.add("spectrum.gp", script);
    Ok(out)
}

fn flatten(op: &Operator) -> Value {
    let d = op.dim();
    Value::Array(
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| json!([op.get(i, j).re, op.get(i, j).im]))
            .collect(),
    )
}

fn manifold_json(mm: &MetastableManifold, region: Option<&MetastableRegion>) -> Value {
    let res = mm.residuals();
    let d = mm.ems.first().map_or(0, Operator::dim);
    json!({
        "dim": d,
        "approximate": mm.approximate,
        "l": region.map(|r| r.l),
        "midpoint": region.map(MetastableRegion::midpoint),
        "h": mm.h,
        "c_max": mm.c_max,
        "c_min": mm.c_min,
        "states": mm.ems.iter().map(|rho| json!({
            "matrix": flatten(rho),
            "purity": rho.purity(),
            "min_eigenvalue": rho.min_eigenvalue(),
        })).collect::<Vec<_>>(),
        "duals": mm.duals.iter().map(|p| json!({
            "matrix": flatten(p),
            "min_eigenvalue": p.min_eigenvalue(),
        })).collect::<Vec<_>>(),
        "residuals": {
            "duality": res.duality,
            "dual_sum": res.dual_sum,
            "min_dual_eigenvalue": res.min_dual_eigenvalue,
            "min_purity": res.min_purity,
        },
    })
}

/// `ems.json`.
pub fn cmd_ems(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let (mm, region) = match &cfg.analysis.ems_injection {
        Some(inj) => {
            let op = |s: &config::OpSpec| s.build().map_err(CliError::Config);
            (ems_from_modes(&op(&inj.rho_fix)?, &op(&inj.r)?, &op(&inj.l)?)?, None)
        }
        None => {
            let built = build(&cfg.model)?;
            let (sd, cls) = classify(&built, cfg)?;
            let region = cls.region.ok_or_else(|| {
                CliError::Precondition("no metastable region; set analysis.l_override to force a truncation".into())
            })?;
            let d = built.maps.dim();
            let mm = if d == 2 && region.l == 2 {
                ems_qubit(&sd)?
            } else {
                let seeds = match &built.b {
                    Some(b) if region.l == d => eigenprojectors(b),
                    _ => {
                        return Err(CliError::Precondition(format!(
                            "no seed states for l = {} at dimension {d}; candidates are seeded by the eigenstates of B",
                            region.l
                        )))
                    }
                };
                let phi = built.maps.channel_superop();
                let candidates = seeds
                    .iter()
                    .map(|s| apply_power(&phi, s, region.midpoint()))
                    .collect::<crate::Result<Vec<_>>>()?;
                manifold_from_candidates(&sd, &region, candidates)?
            };
            (mm, Some(region))
        }
    };
    let mut out = Outputs::default();
    out.add_json("ems.json", &manifold_json(&mm, region.as_ref()));
    Ok(out)
}

/// Histograms, class averages, optional records, plot scripts.
pub fn cmd_simulate(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Outputs, CliError> {
    let run = &cfg.run;
    if run.rounds.is_empty() {
        return Err(CliError::Config("simulate needs at least one entry in run.rounds".into()));
    }
    let start = run.window_start.unwrap_or(1);
    if start > run.rounds[0] {
        return Err(CliError::Config(format!("window_start {start} exceeds the first round {}", run.rounds[0])));
    }
    let built = build(&cfg.model)?;
    let d = built.maps.dim();
    let rho0 = run.initial_state.build(d).map_err(CliError::Config)?;
    let observables = run.observables(&built).map_err(CliError::Config)?;
    let thresholds = ClassThresholds::new(run.thresholds.clone())?;
    let mut spec = EnsembleSpec::new(run.m_max(), run.samples, run.checkpoints().to_vec(), run.seed).with_observables(observables);
    spec.step_budget = run.step_budget as u128;
    spec.threads = threads;
    log::info!("sampling {} records of {} rounds", run.samples, run.m_max());
    let ens = run_ensemble(&built.maps, &rho0, &spec)?;

    let mut out = Outputs::default();
    let mut peaks = serde_json::Map::new();
    let mut hist_files = Vec::new();
    for &m in &run.rounds {
        let h = polarization_histogram(&ens, run.bins, Some((start, m)))?;
        let smooth = h.smoothed();
        let centers = h.centers();
        let mut csv = Csv::new(&["bin", "lower", "upper", "center", "count", "smoothed"]);
        for i in 0..h.bins() {
            csv.row(&[
                i.to_string(),
                num(h.edges[i]),
                num(h.edges[i + 1]),
                num(centers[i]),
                h.counts[i].to_string(),
                num(smooth[i]),
            ]);
        }
        let name = format!("histogram_m{m}.csv");
        out.add(name.clone(), csv.finish());
        hist_files.push(name);
        peaks.insert(m.to_string(), json!(h.peak_positions(DEFAULT_PEAK_PROMINENCE)));
    }
    out.add_json("peaks.json", &json!({"prominence_fraction": DEFAULT_PEAK_PROMINENCE, "window_start": start, "peaks": peaks}));

    let mut csv = Csv::new(&["round", "class", "label", "observable", "mean", "population"]);
    for name in &ens.observable_names {
        let curves = classify_and_average(&ens, &thresholds, name)?;
        for (k, &m) in curves.checkpoints.iter().enumerate() {
            for c in 0..curves.labels.len() {
                csv.row(&[
                    m.to_string(),
                    c.to_string(),
                    format!("\"{}\"", curves.labels[c]),
                    name.clone(),
                    num(curves.means[c][k]),
                    curves.populations[c][k].to_string(),
                ]);
            }
        }
    }
    out.add("class_means.csv", csv.finish());

    if run.emit_trajectories {
        let mut text = String::new();
        for r in &ens.records {
            let line = json!({
                "index": r.index,
                "runs": r.outcomes.run_lengths(),
                "x": r.polarization,
                "checkpoints": r.checkpoints,
                "observables": r.observables,
            });
            text.push_str(&line.to_string());
            text.push('\n');
        }
        out.add("trajectories.jsonl", text);
    }

    let mut gp = String::from("set datafile separator ','\nset xlabel 'X'\nset ylabel 'count'\nset style fill solid 0.5\n");
    for f in &hist_files {
        gp.push_str(&format!("set title '{f}'\nplot '{f}' using 4:5 every ::1 with boxes notitle\npause -1\n"));
    }
    out.add("histograms.gp", gp);
    let mut gp = String::from("set datafile separator ','\nset xlabel 'rounds m'\nset ylabel 'class mean'\nset logscale x\n");
    let classes = thresholds.n_classes();
    for (i, name) in ens.observable_names.iter().enumerate() {
        gp.push_str(&format!("set title '{name}'\nplot "));
        let series: Vec<String> = (0..classes)
            .map(|c| {
                format!(
                    "'class_means.csv' using 1:(strcol(4) eq '{name}' && $2 == {c} ? $5 : 1/0) with linespoints title '{}'",
                    thresholds.label(c)
                )
            })
            .collect();
        gp.push_str(&series.join(", \\\n     "));
        gp.push('\n');
        if i + 1 < ens.observable_names.len() {
            gp.push_str("pause -1\n");
        }
    }
    out.add("class_means.gp", gp);
    Ok(out)
}

/// `validity.json`; returns the names of failed checks.
pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<(Outputs, Vec<String>), CliError> {
    let built = build(&cfg.model)?;
    let maps = &built.maps;
    let phi = maps.channel_superop();
    let report = validate_superop(&phi);
    let branch_min_choi = maps.min_choi_eigenvalue();
    let mut failures: Vec<String> = Vec::new();
    if !report.trace_preserving {
        failures.push("trace_preserving".into());
    }
    if !(report.completely_positive && branch_min_choi >= -VALIDITY_TOL) {
        failures.push("completely_positive".into());
    }
    if built.expect_unital && !report.unital {
        failures.push("unital".into());
    }

    let (biortho, cond, fixed_comm) = match spectral_decompose(&phi) {
        Ok(sd) if sd.diagonalizable() => {
            let biortho = sd.biorthonormality_residual();
            if biortho > RESIDUAL_TOL {
                failures.push("biorthonormality".into());
            }
            let comm = match maps.channel() {
                Some(ch) if report.unital => match fixed_point_space(&sd, &ch) {
                    Ok(fp) => {
                        let worst = fp
                            .basis
                            .iter()
                            .flat_map(|rho| ch.kraus().iter().map(move |k| rho.commutator(k).max_abs()))
                            .fold(0.0_f64, f64::max);
                        if worst > RESIDUAL_TOL {
                            failures.push("fixed_point_commutation".into());
                        }
                        Some(worst)
                    }
                    Err(e) => {
                        failures.push(format!("fixed_point_space ({e})"));
                        None
                    }
                },
                _ => None,
            };
            (Some(biortho), Some(sd.cond_eigvec()), comm)
        }
        Ok(sd) => {
            failures.push("diagonalizable".into());
            (None, Some(sd.cond_eigvec()), None)
        }
        Err(e) => {
            failures.push(format!("eigendecomposition ({e})"));
            (None, None, None)
        }
    };

    let doc = json!({
        "model": cfg.model.kind(),
        "dim": maps.dim(),
        "tolerance": VALIDITY_TOL,
        "residual_tolerance": RESIDUAL_TOL,
        "channel": report,
        "unitality_required": built.expect_unital,
        "branch_min_choi_eigenvalue": branch_min_choi,
        "branch_completeness_residual": report.tp_residual,
        "biorthonormality_residual": biortho,
        "eigenvector_condition": cond,
        "fixed_point_commutation_residual": fixed_comm,
        "ok": failures.is_empty(),
        "failures": failures,
    });
    let mut out = Outputs::default();
    out.add_json("validity.json", &doc);
    Ok((out, failures))
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match run(&cli.command) {
        Ok(dir) => {
            log::info!("wrote {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("metachan {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
