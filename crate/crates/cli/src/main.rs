//! `zibnp`: simulate / fit / call / evaluate pipeline for differential
//! abundance analysis of grouped count tables with covariates.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use zibnp_core::data;
use zibnp_core::engine::{self, FitConfig, ReferenceMode};
use zibnp_core::error::{Error, Result};
use zibnp_core::evaluate;
use zibnp_core::inference;
use zibnp_core::simulate::{self, SimConfig};
use zibnp_core::trace::Trace;

#[derive(Parser)]
#[command(
    name = "zibnp",
    version,
    about = "Differential abundance analysis for multigroup count data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Emit machine-readable progress lines on stderr.
    #[arg(long, global = true)]
    json_logs: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic datasets with ground truth.
    Simulate(SimulateArgs),
    /// Fit the model by MCMC and persist traces.
    Fit(FitArgs),
    /// Turn traces into DA calls at a nominal FDR.
    Call(CallArgs),
    /// Score DA reports against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct SimulateArgs {
    /// Sparsity knob; more positive means more technical zeros.
    #[arg(long, allow_hyphen_values = true)]
    lambda0: Option<f64>,
    /// Samples (even; two equal groups).
    #[arg(long)]
    n: Option<usize>,
    /// Taxa, including the unit-count reference column.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Independent datasets to generate (seeds increment per replicate).
    #[arg(long, default_value_t = 1)]
    #[serde(default)]
    replicates: usize,
    /// Use the first n/2 rows of this covariate table instead of synthesizing
    /// covariates (numeric columns; non-binary ones are standardized).
    #[arg(long)]
    covariates_file: Option<PathBuf>,
    /// Output directory (one subdirectory per replicate when several).
    #[arg(long)]
    out: PathBuf,
    /// Rerun from a previously written manifest.
    #[arg(long)]
    #[serde(skip)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct FitArgs {
    /// Samples-by-taxa count table (TSV, or CSV by extension).
    #[arg(long)]
    counts: Option<PathBuf>,
    /// Covariate table keyed on the count table's sample IDs.
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Covariate column holding the group labels.
    #[arg(long)]
    group: Option<String>,
    /// Count table is taxa-by-sample.
    #[arg(long)]
    #[serde(default)]
    transpose: bool,
    /// Drop taxa with more than this fraction of zeros (0.9 when given bare).
    #[arg(long, num_args = 0..=1, default_missing_value = "0.9")]
    max_zero_frac: Option<f64>,
    /// JSON file holding a FitConfig (or a previous manifest).
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Total MCMC iterations (default 4000).
    #[arg(long)]
    iterations: Option<usize>,
    /// Discarded warm-up iterations (default 2000).
    #[arg(long)]
    burn_in: Option<usize>,
    /// Keep every thin-th post-burn-in iteration (default 2).
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Independent chains, run in parallel up to ZIBNP_THREADS.
    #[arg(long)]
    chains: Option<usize>,
    /// Reference taxon handling: augment | min-variance.
    #[arg(long)]
    reference_mode: Option<String>,
    /// CRP mass parameter (default 1.0).
    #[arg(long)]
    alpha_c: Option<f64>,
    /// Mixture components for the regression vectors (default 7).
    #[arg(long)]
    mixture_components: Option<usize>,
    /// Also write a flat CSV of per-iteration diagnostics.
    #[arg(long)]
    #[serde(default)]
    trace_csv: bool,
    #[arg(long)]
    out: PathBuf,
    /// Rerun from a previously written manifest.
    #[arg(long)]
    #[serde(skip)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct CallArgs {
    /// Trace file(s); the metadata sidecar is found next to each.
    #[arg(long, required = true)]
    trace: Vec<PathBuf>,
    /// Target Bayesian false discovery rate.
    #[arg(long, default_value_t = 0.05)]
    nominal_fdr: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct EvaluateArgs {
    /// Ground-truth files, paired positionally with --result.
    #[arg(long, required = true)]
    truth: Vec<PathBuf>,
    /// DA reports (or external score files with taxon/score/called columns).
    #[arg(long, required = true)]
    result: Vec<PathBuf>,
    /// Treat scores as significance-like (smaller means more DA).
    #[arg(long)]
    invert_scores: bool,
    /// Metrics CSV path (defaults to stdout only).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional ROC overlay.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim_config: Option<SimConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulate_args: Option<SimulateArgs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit_config: Option<FitConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit_args: Option<FitArgs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nominal_fdr: Option<f64>,
    #[serde(default)]
    inputs: BTreeMap<String, String>,
    #[serde(default)]
    outputs: Vec<String>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Manifest {
            command: command.into(),
            sim_config: None,
            simulate_args: None,
            fit_config: None,
            fit_args: None,
            nominal_fdr: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("fnv1a:{:016x}", fnv1a64(&bytes)))
}

fn thread_cap() -> usize {
    std::env::var("ZIBNP_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|v| v.get())
                .unwrap_or(1)
        })
}

/// Files created by the running command, deleted on failure.
struct OutputGuard {
    created: Vec<PathBuf>,
    keep: bool,
}

impl OutputGuard {
    fn new() -> Self {
        OutputGuard {
            created: vec![],
            keep: false,
        }
    }

    fn track(&mut self, p: &Path) -> PathBuf {
        self.created.push(p.to_path_buf());
        p.to_path_buf()
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.created {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args, cli.json_logs),
        Command::Call(args) => cmd_call(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    }
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Load(format!("{}: bad manifest: {e}", path.display())))
}

fn write_manifest(manifest: &Manifest, dir: &Path, guard: &mut OutputGuard) -> Result<()> {
    let path = dir.join("manifest.json");
    guard.track(&path);
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Model(format!("manifest serialization: {e}")))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

fn cmd_simulate(mut args: SimulateArgs) -> Result<()> {
    if let Some(mpath) = &args.manifest {
        let m = read_manifest(mpath)?;
        let stored = m
            .simulate_args
            .ok_or_else(|| Error::Load("manifest has no simulate args".into()))?;
        let out = args.out.clone();
        args = stored;
        args.out = out;
    }
    let mut config = SimConfig::default();
    if let Some(v) = args.lambda0 {
        config.lambda0 = v;
    }
    if let Some(v) = args.n {
        config.n = v;
    }
    if let Some(v) = args.p {
        config.p = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.validate()?;
    let mut inputs = BTreeMap::new();
    let covariate_block = match &args.covariates_file {
        Some(path) => {
            inputs.insert(path.display().to_string(), digest_file(path)?);
            Some(simulate::read_covariate_block(path, config.n / 2)?)
        }
        None => None,
    };

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut guard = OutputGuard::new();
    let mut outputs = Vec::new();
    for rep in 0..args.replicates.max(1) {
        let mut rep_config = config.clone();
        rep_config.seed = config.seed.wrapping_add(rep as u64);
        let dir = if args.replicates > 1 {
            args.out.join(format!("rep{:02}", rep + 1))
        } else {
            args.out.clone()
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let ds = simulate::generate_with_covariates(&rep_config, covariate_block.clone())?;
        simulate::write_dataset(&ds, &dir)?;
        for f in ["counts.tsv", "covariates.tsv", "truth.json"] {
            outputs.push(guard.track(&dir.join(f)).display().to_string());
        }
        eprintln!(
            "simulate: wrote {} (n={}, p={}, C={}, zero fraction {:.3})",
            dir.display(),
            ds.data.n,
            ds.data.p,
            ds.truth.c_total,
            simulate::zero_fraction(&ds.data)
        );
    }
    let manifest = Manifest {
        sim_config: Some(config),
        simulate_args: Some(args.clone()),
        inputs,
        outputs,
        ..Manifest::new("simulate")
    };
    write_manifest(&manifest, &args.out, &mut guard)?;
    guard.keep = true;
    Ok(())
}

fn resolve_fit_config(args: &FitArgs) -> Result<FitConfig> {
    // precedence: CLI flag > config file > default
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            // accept either a bare FitConfig or a manifest containing one
            match serde_json::from_str::<FitConfig>(&text) {
                Ok(c) => c,
                Err(_) => {
                    let m: Manifest = serde_json::from_str(&text).map_err(|e| {
                        Error::Load(format!(
                            "{}: neither a config nor a manifest: {e}",
                            path.display()
                        ))
                    })?;
                    m.fit_config.ok_or_else(|| {
                        Error::Load(format!("{}: manifest has no fit config", path.display()))
                    })?
                }
            }
        }
        None => FitConfig::default(),
    };
    if let Some(v) = args.iterations {
        config.iterations = v;
    }
    if let Some(v) = args.burn_in {
        config.burn_in = v;
    }
    if let Some(v) = args.thin {
        config.thin = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.chains {
        config.chains = v;
    }
    if let Some(v) = &args.reference_mode {
        config.reference_mode = match v.as_str() {
            "augment" => ReferenceMode::Augment,
            "min-variance" | "min_variance" => ReferenceMode::MinVariance,
            other => {
                return Err(Error::Config(format!(
                    "unknown reference mode {other:?} (expected augment or min-variance)"
                )))
            }
        };
    }
    if let Some(v) = args.alpha_c {
        config.priors.alpha_c = v;
    }
    if let Some(v) = args.mixture_components {
        config.priors.m_components = v;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_fit(mut args: FitArgs, json_logs: bool) -> Result<()> {
    if let Some(mpath) = args.manifest.clone() {
        let m = read_manifest(&mpath)?;
        let stored = m
            .fit_args
            .ok_or_else(|| Error::Load("manifest has no fit args".into()))?;
        let out = args.out.clone();
        args = stored;
        args.out = out;
        if args.config.is_none() {
            // the manifest itself carries the resolved config
            args.config = Some(mpath);
        }
    }
    let counts = args
        .counts
        .clone()
        .ok_or_else(|| Error::Config("--counts is required".into()))?;
    let covariates = args
        .covariates
        .clone()
        .ok_or_else(|| Error::Config("--covariates is required".into()))?;
    let group = args
        .group
        .clone()
        .ok_or_else(|| Error::Config("--group is required".into()))?;
    let config = resolve_fit_config(&args)?;

    let mut inputs = BTreeMap::new();
    inputs.insert(counts.display().to_string(), digest_file(&counts)?);
    inputs.insert(covariates.display().to_string(), digest_file(&covariates)?);

    let mut data = data::load_abundance(&counts, &covariates, &group, args.transpose)?;
    let mut dropped_rare = Vec::new();
    if let Some(frac) = args.max_zero_frac {
        dropped_rare = data::filter_rare_taxa(&mut data, frac);
        if !dropped_rare.is_empty() {
            eprintln!("fit: rare-taxon filter removed {} taxa", dropped_rare.len());
        }
    }
    let screen = data::screen_biological_zeros(&mut data)?;
    match config.reference_mode {
        ReferenceMode::Augment => data::augment_reference(&mut data)?,
        ReferenceMode::MinVariance => {
            let j = data::select_reference_min_variance(&data)?;
            data::pin_reference(&mut data, j)?;
        }
    }

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut guard = OutputGuard::new();
    let mut outputs = Vec::new();

    let screen_path = guard.track(&args.out.join("screen_report.tsv"));
    std::fs::write(&screen_path, screen.to_tsv()).map_err(|e| Error::io(&screen_path, e))?;
    outputs.push(screen_path.display().to_string());

    eprintln!(
        "fit: n={} p={} K={} T={}; {} iterations x {} chain(s), seed {}",
        data.n, data.p, data.k, data.t, config.iterations, config.chains, config.seed
    );
    let cap = thread_cap();
    let traces: Vec<Trace> = if config.chains == 1 {
        // single chain gets live progress
        let total = config.iterations;
        let mut progress = |it: usize, c: usize, lj: f64| {
            if it % 200 == 0 || it == total {
                if json_logs {
                    eprintln!(
                        "{{\"event\":\"progress\",\"iteration\":{it},\"total\":{total},\"clusters\":{c},\"log_joint\":{lj}}}"
                    );
                } else {
                    eprintln!("fit: iteration {it}/{total} C={c} log-joint {lj:.4e}");
                }
            }
        };
        vec![engine::run_chain(&data, &config, 0, Some(&mut progress))?]
    } else {
        engine::run_fit(&data, &config, cap)?
    };

    for (c, trace) in traces.iter().enumerate() {
        let mut trace = trace.clone();
        trace.meta.forced_da = screen.forced_da.clone();
        trace.meta.dropped = screen
            .dropped
            .iter()
            .cloned()
            .chain(dropped_rare.iter().cloned())
            .collect();
        trace.meta.input_digests = inputs.clone();
        let bin = guard.track(&args.out.join(format!("trace_chain{c}.bin")));
        let meta = guard.track(&args.out.join(format!("trace_chain{c}.meta.json")));
        trace.write_binary(&bin)?;
        trace.write_meta(&meta)?;
        outputs.push(bin.display().to_string());
        outputs.push(meta.display().to_string());
        if args.trace_csv {
            let csv = guard.track(&args.out.join(format!("trace_chain{c}.csv")));
            std::fs::write(&csv, trace.to_csv()).map_err(|e| Error::io(&csv, e))?;
            outputs.push(csv.display().to_string());
        }
        if !(0.1..=0.6).contains(&trace.meta.rw_accept_rate) {
            eprintln!(
                "fit: warning: zero-model acceptance rate {:.3} outside [0.1, 0.6] after adaptation",
                trace.meta.rw_accept_rate
            );
        }
    }

    let manifest = Manifest {
        fit_config: Some(config),
        fit_args: Some(args.clone()),
        inputs,
        outputs,
        ..Manifest::new("fit")
    };
    write_manifest(&manifest, &args.out, &mut guard)?;
    guard.keep = true;
    Ok(())
}

fn meta_path_for(trace: &Path) -> PathBuf {
    let stem = trace
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("trace");
    trace.with_file_name(format!("{stem}.meta.json"))
}

fn cmd_call(args: CallArgs) -> Result<()> {
    let mut traces = Vec::new();
    for t in &args.trace {
        traces.push(Trace::read(t, &meta_path_for(t))?);
    }
    let meta = traces[0].meta.clone();
    let prob_da = inference::posterior_da_probability_multi(&traces)?;
    let result = inference::bayesian_fdr_threshold(&prob_da, args.nominal_fdr)?;
    let rows = inference::report_rows(
        &result,
        &meta.taxon_names,
        &meta.reference_taxon,
        &meta.forced_da,
    );
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut guard = OutputGuard::new();
    let report = guard.track(&args.out.join("da_report.tsv"));
    inference::write_da_report(&rows, &report)?;
    let summary = inference::DaSummary {
        kappa: result.kappa,
        nominal_fdr: result.nominal_fdr,
        achieved_bayes_fdr: result.achieved_bayes_fdr,
        n_called_model: result.called.len(),
        n_forced: meta.forced_da.len(),
        n_taxa: meta.taxon_names.len(),
    };
    let summary_path = guard.track(&args.out.join("da_summary.json"));
    inference::write_da_summary(&summary, &summary_path)?;
    let mut inputs = BTreeMap::new();
    for t in &args.trace {
        inputs.insert(t.display().to_string(), digest_file(t)?);
    }
    let manifest = Manifest {
        nominal_fdr: Some(args.nominal_fdr),
        inputs,
        outputs: vec![
            report.display().to_string(),
            summary_path.display().to_string(),
        ],
        ..Manifest::new("call")
    };
    write_manifest(&manifest, &args.out, &mut guard)?;
    eprintln!(
        "call: {} model calls + {} forced at nominal FDR {} (kappa {:.4})",
        result.called.len(),
        meta.forced_da.len(),
        args.nominal_fdr,
        result.kappa
    );
    guard.keep = true;
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    if args.truth.len() != args.result.len() {
        return Err(Error::Config(format!(
            "{} truth files but {} result files",
            args.truth.len(),
            args.result.len()
        )));
    }
    let mut results = Vec::new();
    for (tpath, rpath) in args.truth.iter().zip(&args.result) {
        let truth = simulate::read_truth(tpath)?;
        let rows = inference::read_da_report(rpath)?;
        let by_name: std::collections::HashMap<&str, &inference::ReportRow> =
            rows.iter().map(|r| (r.taxon.as_str(), r)).collect();
        let mut scores = Vec::new();
        let mut flags = Vec::new();
        let mut called = BTreeSet::new();
        for (j, name) in truth.taxa.iter().enumerate() {
            let (score, was_called) = match by_name.get(name.as_str()) {
                Some(row) => {
                    let s = row.prob_da.unwrap_or(if row.called { 1.0 } else { 0.0 });
                    (if args.invert_scores { -s } else { s }, row.called)
                }
                None => (if args.invert_scores { -0.0 } else { 0.0 }, false),
            };
            scores.push(score);
            flags.push(truth.taxon_status[j] == 2);
            if was_called {
                called.insert(scores.len() - 1);
            }
        }
        results.push(evaluate::evaluate_calls(&scores, &called, &flags)?);
    }
    let summary = evaluate::benchmark_summary(&results)?;
    let csv = evaluate::results_csv(&results, &summary);
    print!("{csv}");
    println!(
        "mean AUC {:.4} (95% interval {:.4}..{:.4}), mean FDR {:.4}, mean sensitivity {:.4} over {} replicate(s)",
        summary.mean_auc,
        summary.auc_interval.0,
        summary.auc_interval.1,
        summary.mean_fdr,
        summary.mean_sensitivity,
        summary.replicates
    );
    if let Some(out) = &args.out {
        std::fs::write(out, &csv).map_err(|e| Error::io(out, e))?;
        let mut inputs = BTreeMap::new();
        for p in args.truth.iter().chain(&args.result) {
            inputs.insert(p.display().to_string(), digest_file(p)?);
        }
        let manifest = Manifest {
            inputs,
            outputs: vec![out.display().to_string()],
            ..Manifest::new("evaluate")
        };
        if let Some(dir) = out.parent() {
            let mut guard = OutputGuard::new();
            write_manifest(&manifest, dir, &mut guard)?;
            guard.keep = true;
        }
    }
    if let Some(svg) = &args.svg {
        evaluate::write_svg(&results, svg)?;
    }
    Ok(())
}
