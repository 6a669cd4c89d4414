//! `jgw`: solve, benchmark, align and plot from the command line.
//!
//! Experiment commands print JSON (CSV for `converge`) on stdout and a short
//! summary on stderr. Exit status is 0 on success, 1 on any error and 2 when
//! the solver stopped at its iteration cap.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use jgw::align::{align_clusters, rotational_error, TransformRecord};
use jgw::error::{JgwError, Result};
use jgw::io::{
    read_config, read_coupling, read_point_cloud, read_transforms, write_coupling, write_report,
    write_svg_scatter, write_transforms, SvgOptions, DEFAULT_COUPLING_THRESHOLD,
};
use jgw::solver::{solve, SolverConfig};
use jgw::synth::{convergence_table, run_cluster_bench, run_spiral_bench, smooth_two_cluster_shape, SpiralSpec};

#[derive(Debug, Parser)]
#[command(name = "jgw", version, about = "Joint Gromov-Wasserstein matching of clustered metric measure spaces")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "JGW_THREADS")]
    threads: Option<usize>,

    /// Use the kernel exp(+Λ/ε) instead of exp(−Λ/ε).
    #[arg(long, global = true)]
    paper_literal_signs: bool,

    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one source/target pair of point-cloud files.
    Solve(SolveArgs),
    /// Partial matching of a noisy spiral through a dummy cluster.
    BenchSpiral(SpiralArgs),
    /// Letters A, B, C as three clusters against the word as one.
    BenchClusters(ClusterArgs),
    /// Median objective of empirical samples against the full space.
    Converge(ConvergeArgs),
    /// Per-cluster rigid transforms from a coupling.
    Align(AlignArgs),
    /// SVG scatter of both clouds with coupling edges.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// JSON solver configuration; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Outer iteration cap (per ε stage).
    #[arg(long)]
    iters: Option<usize>,
    /// Start ε for continuation; halved down to --epsilon.
    #[arg(long)]
    epsilon_start: Option<f64>,
    /// Perturbed restarts besides the product-plan start.
    #[arg(long)]
    restarts: Option<u32>,
    #[arg(long)]
    solver_seed: Option<u64>,
    /// Scale every projection in the log domain.
    #[arg(long)]
    log_domain: bool,
}

impl SolverArgs {
    fn resolve(&self, paper_literal_signs: bool) -> Result<SolverConfig> {
        let mut c = match &self.config {
            Some(path) => read_config(path)?,
            None => SolverConfig::default(),
        };
        if let Some(v) = self.epsilon {
            c.epsilon = v;
        }
        if let Some(v) = self.eta {
            c.eta = v;
        }
        if let Some(v) = self.iters {
            c.max_outer_iters = v;
        }
        if self.epsilon_start.is_some() {
            c.epsilon_start = self.epsilon_start;
        }
        if let Some(v) = self.restarts {
            c.restarts = v;
        }
        if let Some(v) = self.solver_seed {
            c.seed = v;
        }
        c.log_domain |= self.log_domain;
        c.paper_literal_signs |= paper_literal_signs;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out_coupling: Option<PathBuf>,
    #[arg(long)]
    out_report: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct SpiralArgs {
    #[arg(long, default_value_t = 100)]
    n_spiral: usize,
    #[arg(long, default_value_t = 50)]
    n_noise: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of turns of the spiral.
    #[arg(long)]
    turns: Option<f64>,
    /// Standard deviation of the noise cloud.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Write the matching as an SVG scatter.
    #[arg(long)]
    svg: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[arg(long, default_value_t = 50)]
    n_per_letter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Point cloud to sample from; a smooth two-cluster shape by default.
    #[arg(long)]
    source: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct AlignArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    coupling: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth transforms JSON; adds rotational errors to the output.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Fit against each source point's heaviest target only.
    #[arg(long)]
    hardened: bool,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    coupling: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Edges drawn per source point.
    #[arg(long, default_value_t = 1)]
    top_k: usize,
    /// Coordinate axes to draw, as `h,v`.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0, 1])]
    axes: Vec<usize>,
}

enum Status {
    Done,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    match run(cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Status> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(JgwError::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| JgwError::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let signs = cli.paper_literal_signs;
    match cli.command {
        Command::Solve(args) => cmd_solve(args, signs),
        Command::BenchSpiral(args) => cmd_bench_spiral(args, signs),
        Command::BenchClusters(args) => cmd_bench_clusters(args, signs),
        Command::Converge(args) => cmd_converge(args, signs),
        Command::Align(args) => cmd_align(args),
        Command::Plot(args) => cmd_plot(args),
    }
}

fn print_json<T: Serialize + ?Sized>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| JgwError::Numerical(format!("serializing output: {e}")))?;
    println!("{text}");
    Ok(())
}

fn status(converged: bool) -> Status {
    if converged {
        Status::Done
    } else {
        eprintln!("warning: stopped at the iteration cap without converging");
        Status::NotConverged
    }
}

fn coordinates(space: &jgw::space::ClusteredSpace, path: &Path) -> Result<ndarray::Array2<f64>> {
    space
        .coordinates()
        .ok_or_else(|| JgwError::InvalidArgument(format!("{} has no coordinates", path.display())))
}

fn cmd_solve(args: SolveArgs, signs: bool) -> Result<Status> {
    let config = args.solver.resolve(signs)?;
    let source = read_point_cloud(&args.source)?;
    let target = read_point_cloud(&args.target)?;
    let (mu, report) = solve(&source, &target, &config)?;
    if let Some(path) = &args.out_coupling {
        write_coupling(path, &mu, DEFAULT_COUPLING_THRESHOLD)?;
    }
    if let Some(path) = &args.out_report {
        write_report(path, &report)?;
    }
    eprintln!(
        "objective {:.6e} after {} outer iterations, marginal violation {:.1e}, {} ms",
        report.objective, report.outer_iters_used, report.marginal_violation, report.wall_time_ms
    );
    print_json(&report)?;
    Ok(status(report.converged))
}

fn cmd_bench_spiral(args: SpiralArgs, signs: bool) -> Result<Status> {
    let config = args.solver.resolve(signs)?;
    let defaults = SpiralSpec::default();
    let spec = SpiralSpec {
        n_spiral: args.n_spiral,
        n_noise: args.n_noise,
        seed: args.seed,
        spiral_turns: args.turns.unwrap_or(defaults.spiral_turns),
        noise_sigma: args.noise_sigma.unwrap_or(defaults.noise_sigma),
        ..defaults
    };
    let bench = run_spiral_bench(&spec, &config)?;
    if let Some(path) = &args.svg {
        let source = coordinates(&bench.pair.source, path)?;
        let target = coordinates(&bench.pair.target, path)?;
        // the dummy cluster's row is not drawn
        let plan = bench.coupling.plan().slice(ndarray::s![..spec.n_spiral, ..]);
        write_svg_scatter(path, source.view(), target.view(), Some(plan), &SvgOptions::default())?;
    }
    eprintln!(
        "noise mass fraction {:.4}, objective {:.4e}, {} ms",
        bench.noise_mass_fraction, bench.objective, bench.runtime_ms
    );
    print_json(&bench)?;
    Ok(status(bench.converged))
}

fn cmd_bench_clusters(args: ClusterArgs, signs: bool) -> Result<Status> {
    let config = args.solver.resolve(signs)?;
    let bench = run_cluster_bench(args.n_per_letter, args.seed, &config)?;
    if let Some(path) = &args.svg {
        let source = coordinates(&bench.shape.split, path)?;
        let target = coordinates(&bench.shape.whole, path)?;
        write_svg_scatter(path, source.view(), target.view(), Some(bench.coupling.plan().view()), &SvgOptions::default())?;
    }
    eprintln!(
        "correct mass fraction {:.4}, objective {:.4e}, {} ms",
        bench.correct_mass_fraction, bench.objective, bench.runtime_ms
    );
    print_json(&bench)?;
    Ok(status(bench.converged))
}

fn cmd_converge(args: ConvergeArgs, signs: bool) -> Result<Status> {
    let config = args.solver.resolve(signs)?;
    let space = match &args.source {
        Some(path) => read_point_cloud(path)?,
        None => smooth_two_cluster_shape(40)?,
    };
    let rows = convergence_table(&space, &args.n_list, args.seeds, &config)?;
    let mut out = csv::Writer::from_writer(std::io::stdout());
    let stdout_error = |e: csv::Error| JgwError::Numerical(format!("writing table: {e}"));
    out.write_record(["n", "median_objective"]).map_err(stdout_error)?;
    for row in &rows {
        out.write_record([row.n.to_string(), format!("{:.16e}", row.median_objective)])
            .map_err(stdout_error)?;
        eprintln!("n = {:>5}: median objective {:.4e} over {} seeds", row.n, row.median_objective, args.seeds);
    }
    out.flush().map_err(|e| JgwError::Numerical(format!("writing table: {e}")))?;
    Ok(Status::Done)
}

fn cmd_align(args: AlignArgs) -> Result<Status> {
    let source = read_point_cloud(&args.source)?;
    let target = read_point_cloud(&args.target)?;
    let mu = read_coupling(&args.coupling, &source, &target)?;
    let fits = align_clusters(&mu, &source, &target, args.hardened)?;
    let truth = args.truth.as_deref().map(read_transforms).transpose()?;
    if let Some(t) = &truth {
        if t.len() != fits.len() {
            return Err(JgwError::InvalidArgument(format!(
                "{} ground-truth transforms for {} source clusters",
                t.len(),
                fits.len()
            )));
        }
    }
    let mut records = Vec::with_capacity(fits.len());
    for (c, fit) in fits.iter().enumerate() {
        let mut record = TransformRecord::new(fit.label.clone(), &fit.transform);
        record.flag = fit.flag;
        if let Some(t) = &truth {
            record.rotational_error_deg = Some(rotational_error(&fit.transform, &t[c].to_transform()?)?);
        }
        match record.rotational_error_deg {
            Some(err) => eprintln!("cluster {}: rotational error {err:.2}°", record.cluster),
            None => eprintln!("cluster {}: fitted", record.cluster),
        }
        records.push(record);
    }
    write_transforms(&args.out, &records)?;
    print_json(&records)?;
    Ok(Status::Done)
}

fn cmd_plot(args: PlotArgs) -> Result<Status> {
    let source = read_point_cloud(&args.source)?;
    let target = read_point_cloud(&args.target)?;
    let mu = args
        .coupling
        .as_deref()
        .map(|p| read_coupling(p, &source, &target))
        .transpose()?;
    let options = SvgOptions {
        top_edges_per_point: args.top_k,
        axes: (args.axes[0], args.axes[1]),
        ..SvgOptions::default()
    };
    write_svg_scatter(
        &args.out,
        coordinates(&source, &args.source)?.view(),
        coordinates(&target, &args.target)?.view(),
        mu.as_ref().map(|m| m.plan().view()),
        &options,
    )?;
    eprintln!("wrote {}", args.out.display());
    Ok(Status::Done)
}
