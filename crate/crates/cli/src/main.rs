//! Batch driver: group validation, delta and kappa estimation,
//! simulation campaigns and consolidated reports.
//!
//! All state flows through a config file and command line flags (flag
//! beats file beats default); the seed is mandatory for anything random,
//! and a fixed seed with any worker count reproduces outputs byte for
//! byte. Exit codes: 0 success, 1 invariant or validation failure,
//! 2 malformed input.

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use cuspwind_core::evt::{
    self, log_grid, simulate_maxima, simulate_streams, BlockSampler, CfUniformSampler,
    PattersonAtomicSampler, SymbolicMarkovSampler,
};
use cuspwind_core::gauss;
use cuspwind_core::group::{build_group, validate_markov, FuchsianGroup, GroupSpec, MARKOV_TOL};
use cuspwind_core::patterson::{self, KappaStudyConfig, PhiSolver};
use cuspwind_core::table::{self, SvgPlot};
use serde::Deserialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cuspwind",
    about = "Fuchsian groups with cusps: boundary coding, Patterson measure \
             approximation and extreme value statistics of cuspidal windings",
    version
)]
struct Cli {
    /// Config file with campaign defaults (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = automatic); results never depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a group from its spec file and check every invariant.
    Validate {
        #[arg(long)]
        group: Option<PathBuf>,
    },
    /// Estimate the exponent of convergence.
    Delta {
        #[arg(long)]
        group: Option<PathBuf>,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Estimate kappa by both routes.
    Kappa {
        #[arg(long)]
        group: Option<PathBuf>,
        /// Comma-separated atom depths, shallowest first.
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<usize>>,
        #[arg(long)]
        delta_depth: Option<usize>,
        #[arg(long)]
        s_margin: Option<f64>,
        #[arg(long)]
        n_min: Option<u64>,
        #[arg(long)]
        n_max: Option<u64>,
    },
    /// Monte Carlo campaign of running maxima.
    Simulate {
        /// Sampler: cf | atomic | markov.
        #[arg(long)]
        sampler: Option<String>,
        #[arg(long)]
        group: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Atom depth for group samplers.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Continued-fraction oracle campaign with the closed-form law.
    CfOracle {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Consolidate cached outputs into one document with plots.
    Report,
}

/// File-level configuration; every field has a flag or a default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    group: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    workers: Option<usize>,
    seed: Option<u64>,
    depth: Option<usize>,
    atom_depths: Option<Vec<usize>>,
    s_margin: Option<f64>,
    n: Option<usize>,
    trials: Option<usize>,
    n_min: Option<u64>,
    n_max: Option<u64>,
    stride: Option<usize>,
    tail_stride: Option<usize>,
    budget: Option<u64>,
    sampler: Option<String>,
    plots: Option<bool>,
    stream_trials: Option<usize>,
}

struct Settings {
    group_path: Option<PathBuf>,
    out_dir: PathBuf,
    seed: u64,
    depth: usize,
    atom_depths: Vec<usize>,
    s_margin: f64,
    n: usize,
    trials: usize,
    n_min: u64,
    n_max: u64,
    stride: usize,
    tail_stride: usize,
    budget: u64,
    sampler: String,
    plots: bool,
    stream_trials: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            // malformed input surfaces as exit 2, anything else as 1
            if format!("{e:#}").contains("parse") {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).map_err(|e| anyhow!("config parse error: {e}"))
        }
    }
}

fn load_group(path: &Path) -> Result<(FuchsianGroup, GroupSpec, String)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading group spec {}", path.display()))?;
    let spec = GroupSpec::from_toml(&text)
        .map_err(|e| anyhow!("group spec parse error in {}: {e}", path.display()))?;
    let group = build_group(&spec).with_context(|| "group construction failed")?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "group".into());
    Ok((group, spec, name))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = load_file_config(&cli.config)?;
    let workers = cli.workers.or(file.workers).unwrap_or(0);
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .ok();
    }
    let settings = Settings {
        group_path: file.group.clone(),
        out_dir: cli
            .out
            .or(file.out_dir)
            .unwrap_or_else(|| PathBuf::from("out")),
        seed: file.seed.unwrap_or(1),
        depth: file.depth.unwrap_or(10),
        atom_depths: file.atom_depths.unwrap_or_else(|| vec![5, 6, 7]),
        s_margin: file.s_margin.unwrap_or(patterson::DEFAULT_S_MARGIN),
        n: file.n.unwrap_or(10_000),
        trials: file.trials.unwrap_or(100_000),
        n_min: file.n_min.unwrap_or(2),
        n_max: file.n_max.unwrap_or(16),
        stride: file.stride.unwrap_or(64),
        tail_stride: file.tail_stride.unwrap_or(512),
        budget: file.budget.unwrap_or(1 << 29),
        sampler: file.sampler.unwrap_or_else(|| "cf".into()),
        plots: file.plots.unwrap_or(true),
        stream_trials: file.stream_trials.unwrap_or(8),
    };
    fs::create_dir_all(&settings.out_dir)
        .with_context(|| format!("creating {}", settings.out_dir.display()))?;

    match cli.command {
        Command::Validate { group } => cmd_validate(&settings, group),
        Command::Delta { group, depth } => cmd_delta(&settings, group, depth),
        Command::Kappa {
            group,
            depths,
            delta_depth,
            s_margin,
            n_min,
            n_max,
        } => cmd_kappa(&settings, group, depths, delta_depth, s_margin, n_min, n_max),
        Command::Simulate {
            sampler,
            group,
            n,
            trials,
            seed,
            depth,
        } => cmd_simulate(&settings, sampler, group, n, trials, seed, depth),
        Command::CfOracle { n, trials, seed } => cmd_cf_oracle(&settings, n, trials, seed),
        Command::Report => cmd_report(&settings),
    }
}

fn group_path(settings: &Settings, flag: Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| settings.group_path.clone())
        .ok_or_else(|| anyhow!("no group spec given (use --group or the config file)"))
}

fn cmd_validate(settings: &Settings, group: Option<PathBuf>) -> Result<ExitCode> {
    let path = group_path(settings, group)?;
    let report_path = settings.out_dir.join("validation.txt");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading group spec {}", path.display()))?;
    let spec = match GroupSpec::from_toml(&text) {
        Ok(s) => s,
        Err(e) => {
            fs::write(
                &report_path,
                format!("status = \"parse-error\"\nerror = \"{e}\"\n"),
            )?;
            eprintln!("parse error: {e}");
            return Ok(ExitCode::from(2));
        }
    };
    match build_group(&spec) {
        Ok(group) => {
            let report = validate_markov(&group);
            let mut out = String::new();
            let _ = writeln!(out, "# cuspwind-validation v1");
            let _ = writeln!(out, "software = \"{}\"", env!("CARGO_PKG_VERSION"));
            let _ = writeln!(out, "digest = \"{}\"", group.digest());
            let _ = writeln!(out, "status = \"ok\"");
            let _ = writeln!(out, "letters = {}", group.n_letters());
            let _ = writeln!(out, "max_residual = {:e}", report.max_residual);
            let _ = writeln!(out, "pass = {}", report.pass(MARKOV_TOL));
            let _ = writeln!(out, "\n[intervals]");
            for g in group.generators() {
                let _ = writeln!(out, "{} = [{}, {}]", g.name, g.interval.lo, g.interval.hi);
            }
            fs::write(&report_path, out)?;
            println!(
                "ok: {} letters, Markov residual {:e}",
                group.n_letters(),
                report.max_residual
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            fs::write(
                &report_path,
                format!("status = \"invalid\"\nerror = \"{e}\"\n"),
            )?;
            eprintln!("invalid group: {e}");
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_delta(
    settings: &Settings,
    group: Option<PathBuf>,
    depth: Option<usize>,
) -> Result<ExitCode> {
    let path = group_path(settings, group)?;
    let (group, _, name) = load_group(&path)?;
    let depth = depth.unwrap_or(settings.depth);
    let est = patterson::estimate_delta(&group, depth, settings.budget)?;
    let mut out = String::new();
    let _ = writeln!(out, "# cuspwind-delta-report v1");
    let _ = writeln!(out, "software = \"{}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "group = \"{name}\"");
    let _ = writeln!(out, "digest = \"{}\"", group.digest());
    let _ = writeln!(out, "depth = {depth}");
    let _ = writeln!(out, "delta = {}", est.delta);
    let _ = writeln!(out, "uncertainty = {}", est.uncertainty);
    let _ = writeln!(out, "delta_shallow = {}", est.delta_shallow);
    let _ = writeln!(out, "fit_residual = {}", est.fit_residual);
    let _ = writeln!(out, "window = [{}, {}]", est.window.0, est.window.1);
    let _ = writeln!(out, "warn_delta_bound = {}", est.warn_delta_bound);
    let _ = writeln!(out, "shell_counts = {:?}", est.shell_counts);
    fs::write(settings.out_dir.join("delta.txt"), out)?;
    println!(
        "delta = {:.4} +- {:.4}{}",
        est.delta,
        est.uncertainty,
        if est.warn_delta_bound {
            "  (warning: at or below the 1/2 bound)"
        } else {
            ""
        }
    );
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_kappa(
    settings: &Settings,
    group: Option<PathBuf>,
    depths: Option<Vec<usize>>,
    delta_depth: Option<usize>,
    s_margin: Option<f64>,
    n_min: Option<u64>,
    n_max: Option<u64>,
) -> Result<ExitCode> {
    let path = group_path(settings, group)?;
    let (group, _, name) = load_group(&path)?;
    let cfg = KappaStudyConfig {
        delta_depth: delta_depth.unwrap_or(settings.depth),
        atom_depths: depths.unwrap_or_else(|| settings.atom_depths.clone()),
        s_margin: s_margin.unwrap_or(settings.s_margin),
        n_min: n_min.unwrap_or(settings.n_min),
        n_max: n_max.unwrap_or(settings.n_max),
        stride: settings.stride,
        tail_stride: settings.tail_stride,
        budget: settings.budget,
    };
    let study = patterson::kappa_study(&group, &cfg)?;
    let text = table::kappa_report_text(&study, &cfg, group.digest(), &name);
    fs::write(settings.out_dir.join("kappa.txt"), &text)?;
    println!(
        "delta = {:.4} ({}), kappa direct = {:.4} +- {:.4}, tail = {:.4} +- {:.4}, ratio = {:.3}",
        study.delta,
        if study.delta_refined {
            "fixpoint-refined"
        } else {
            "counting"
        },
        study.direct.kappa,
        study.uncertainty_direct,
        study.tail.kappa,
        study.uncertainty_tail,
        study.direct.kappa / study.tail.kappa
    );
    if settings.plots {
        let masses = &study.tail.tail_masses;
        if masses.len() >= 2 {
            let (lo, hi) = (masses[0].0 as f64, masses.last().unwrap().0 as f64);
            let ys: Vec<f64> = masses.iter().map(|&(_, m)| m.ln()).collect();
            let ymin = ys.iter().cloned().fold(f64::MAX, f64::min);
            let ymax = ys.iter().cloned().fold(f64::MIN, f64::max);
            let mut plot = SvgPlot::new((lo, hi), (ymin - 0.5, ymax + 0.5), true);
            plot.polyline(
                &masses
                    .iter()
                    .map(|&(n, m)| (n as f64, m.ln()))
                    .collect::<Vec<_>>(),
                "#c33",
            );
            fs::write(
                settings.out_dir.join("kappa_tail.svg"),
                plot.finish("log cylinder mass vs log n"),
            )?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

enum AnySampler<'g> {
    Cf(CfUniformSampler),
    Atomic(PattersonAtomicSampler<'g>),
    Markov(SymbolicMarkovSampler),
}

impl AnySampler<'_> {
    fn as_dyn(&self) -> &dyn BlockSampler {
        match self {
            AnySampler::Cf(s) => s,
            AnySampler::Atomic(s) => s,
            AnySampler::Markov(s) => s,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    settings: &Settings,
    sampler: Option<String>,
    group: Option<PathBuf>,
    n: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    depth: Option<usize>,
) -> Result<ExitCode> {
    let sampler_name = sampler.unwrap_or_else(|| settings.sampler.clone());
    let n = n.unwrap_or(settings.n);
    let trials = trials.unwrap_or(settings.trials);
    let seed = seed.unwrap_or(settings.seed);

    let digest;
    let group_store;
    let sampler_impl: AnySampler;
    let mut delta_used = 1.0;
    let mut kappa_ref = gauss::philipp_constant();
    let mut approx_note = "";

    match sampler_name.as_str() {
        "cf" => {
            digest = "cf-oracle".to_string();
            sampler_impl = AnySampler::Cf(CfUniformSampler);
        }
        "atomic" | "markov" => {
            let path = group_path(settings, group)?;
            let (g, _, _) = load_group(&path)?;
            digest = g.digest().to_string();
            group_store = g;
            let g = &group_store;
            let depth = depth
                .unwrap_or_else(|| settings.atom_depths.iter().copied().max().unwrap_or(6));
            let est = patterson::estimate_delta(g, settings.depth, settings.budget)?;
            let atoms = patterson::patterson_atoms(
                g,
                est.delta + settings.s_margin,
                depth,
                settings.budget,
            )?;
            let delta =
                patterson::refine_delta_fixpoint(g, &atoms, 0.52, 0.98).unwrap_or(est.delta);
            delta_used = delta;
            // direct-route kappa as the reference scale
            let solver = PhiSolver::new(g, &atoms, delta);
            let blocks = patterson::atom_blocks(g, &atoms);
            let mu = patterson::mu_d_mass(g, &atoms, &blocks, &solver, settings.stride);
            kappa_ref = patterson::kappa_direct(g, &solver, &mu)?.kappa;
            if sampler_name == "atomic" {
                sampler_impl = AnySampler::Atomic(PattersonAtomicSampler::new(g, &atoms));
            } else {
                let stats = patterson::two_cylinder_stats(
                    g,
                    &atoms,
                    &blocks,
                    &solver,
                    settings.stride,
                    12,
                );
                sampler_impl = AnySampler::Markov(SymbolicMarkovSampler::new(g, &stats, delta));
                approx_note = " (approximate sampler)";
            }
        }
        other => {
            return Err(anyhow!(
                "unknown sampler '{other}' (use cf | atomic | markov)"
            ))
        }
    }

    let samples = simulate_maxima(sampler_impl.as_dyn(), n, trials, seed)?;
    let grid = log_grid(0.2, 20.0, 200);
    let summary = evt::summarize(
        &samples,
        delta_used,
        kappa_ref,
        sampler_impl.as_dyn().name(),
        &grid,
    );
    fs::write(
        settings.out_dir.join("samples.csv"),
        table::maxima_table(&samples, &digest, seed),
    )?;
    fs::write(
        settings.out_dir.join("evt_summary.txt"),
        table::evt_summary_text(&summary, &digest, seed),
    )?;
    // a few full block streams for inspection
    let streams = simulate_streams(
        sampler_impl.as_dyn(),
        n.min(1000),
        settings.stream_trials,
        seed,
    );
    let named: Vec<(u64, Vec<(String, u64)>)> = streams
        .iter()
        .enumerate()
        .map(|(t, xs)| {
            (
                t as u64,
                xs.iter().map(|&x| ("-".to_string(), x)).collect(),
            )
        })
        .collect();
    fs::write(
        settings.out_dir.join("blocks.csv"),
        table::block_table(&named, &digest),
    )?;
    if settings.plots {
        let mut plot = SvgPlot::new((0.2, 20.0), (0.0, 1.0), true);
        plot.polyline(&summary.empirical_cdf, "#36c");
        let theory: Vec<(f64, f64)> =
            grid.iter().map(|&s| (s, (-kappa_ref / s).exp())).collect();
        plot.polyline(&theory, "#c33");
        fs::write(
            settings.out_dir.join("cdf.svg"),
            plot.finish("empirical (blue) vs exp(-kappa/s) (red)"),
        )?;
    }
    println!(
        "{} trials of {} blocks via {}{}: ks = {:.4}, censored = {}",
        trials,
        n,
        summary.sampler,
        approx_note,
        summary.ks_vs_theory,
        summary.censored
    );
    if let Some(fit) = &summary.frechet {
        println!(
            "frechet shape = {:.4} +- {:.4}, scale = {:.4} +- {:.4}",
            fit.shape, fit.shape_stderr, fit.scale, fit.scale_stderr
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_cf_oracle(
    settings: &Settings,
    n: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
) -> Result<ExitCode> {
    let n = n.unwrap_or(settings.n);
    let trials = trials.unwrap_or(settings.trials);
    let seed = seed.unwrap_or(settings.seed);
    let samples = simulate_maxima(&CfUniformSampler, n, trials, seed)?;
    let kappa = gauss::philipp_constant();
    let ks = evt::ks_exact(&samples.y, 1.0, n, kappa, (0.2, 20.0));
    let grid = log_grid(0.2, 20.0, 200);
    let summary = evt::summarize(&samples, 1.0, kappa, "cf-uniform", &grid);
    fs::write(
        settings.out_dir.join("cf_samples.csv"),
        table::maxima_table(&samples, "cf-oracle", seed),
    )?;
    fs::write(
        settings.out_dir.join("cf_summary.txt"),
        table::evt_summary_text(&summary, "cf-oracle", seed),
    )?;
    // liminf track of one long stream
    let grid_n: Vec<u64> = (0..=24)
        .map(|i| (16.0 * (1_000_000.0f64 / 16.0).powf(i as f64 / 24.0)) as u64)
        .collect();
    let xs: Vec<u64> = gauss::DigitStream::new(seed, 0).take(1_000_000).collect();
    let track = evt::liminf_track(&xs, 1.0, &grid_n);
    fs::write(
        settings.out_dir.join("cf_liminf.csv"),
        table::liminf_table(&track, "cf-oracle"),
    )?;
    if settings.plots {
        let pts: Vec<(f64, f64)> = track
            .grid
            .iter()
            .zip(&track.tail_inf)
            .map(|(&g, &v)| (g as f64, v))
            .collect();
        let ymax = pts.iter().map(|p| p.1).fold(1.0f64, f64::max) * 1.2;
        let mut plot = SvgPlot::new((16.0, 1e6), (0.0, ymax), true);
        plot.polyline(&pts, "#36c");
        plot.hline(kappa, "#c33");
        fs::write(
            settings.out_dir.join("cf_liminf.svg"),
            plot.finish("trailing-decade infimum of Y_n log log n / n"),
        )?;
    }
    println!("cf oracle: n = {n}, trials = {trials}, ks vs exp(-1/(s log 2)) = {ks:.4}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(settings: &Settings) -> Result<ExitCode> {
    let mut out = String::new();
    let _ = writeln!(out, "# cuspwind-consolidated-report v1");
    let _ = writeln!(out, "software = \"{}\"", env!("CARGO_PKG_VERSION"));
    let mut found = 0;
    for name in [
        "validation.txt",
        "delta.txt",
        "kappa.txt",
        "evt_summary.txt",
        "cf_summary.txt",
    ] {
        let path = settings.out_dir.join(name);
        if let Ok(text) = fs::read_to_string(&path) {
            let _ = writeln!(out, "\n## {name}\n");
            out.push_str(&text);
            found += 1;
        }
    }
    if found == 0 {
        eprintln!(
            "no cached outputs in {}; run validate/delta/kappa/simulate first",
            settings.out_dir.display()
        );
        return Ok(ExitCode::from(1));
    }
    fs::write(settings.out_dir.join("report.txt"), out)?;
    println!("consolidated {found} cached outputs into report.txt");
    Ok(ExitCode::SUCCESS)
}
