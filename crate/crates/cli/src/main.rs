use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spheregraph::flow::{measure_decay, run_flow, FlowStatus};
use spheregraph::geometry::{geometry_fields, GraphFunction};
use spheregraph::grid::{Snapshot, SphereGrid};
use spheregraph::spherespace::fit_sphere;
use spheregraph::stability::{dg0_analytic, dg0_numeric, predicted_gap, spectrum};
use spheregraph::symfunc::SpeedSpec;
use spheregraph::verify::{all_passed, format_table, run_suite};
use spheregraph::weights::{xi_a_field, xi_sphere_closed_form, zhat_sphere, WeightSpec};
use spheregraph::{Error, RunConfig};

const EXIT_CONVERGED: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_T_END: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "spheregraph", version, about = "Constrained curvature flows of graphs over geodesic spheres")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flow runs.
    #[command(subcommand)]
    Flow(FlowCommand),
    /// Eigenvalues of the linearization at the base sphere, as CSV.
    Spectrum(SpectrumArgs),
    /// Weights Ξ_a and Ẑ_a on the base sphere, as CSV.
    Weights(WeightsArgs),
    /// Fit a geodesic sphere to a snapshot.
    FitSphere(FitArgs),
    /// Run the invariant suite.
    Verify {
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Subcommand)]
enum FlowCommand {
    /// Integrate the flow described by a run config.
    Run { config: PathBuf },
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, allow_hyphen_values = true)]
    theta: f64,
    /// E1, E2, E2^(1/2), E2/E1, optionally scaled as `2*E1`.
    #[arg(long, default_value = "E1")]
    speed: SpeedSpec,
    #[arg(long)]
    resolution: usize,
    /// Finite-difference Jacobian instead of the analytic operator.
    #[arg(long)]
    numeric: bool,
    /// Weight coefficients for `--numeric`, comma separated (default e_{n+1}).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
}

#[derive(Args)]
struct WeightsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, allow_hyphen_values = true)]
    theta: f64,
    /// Grid used for the assembled column.
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    snapshot: PathBuf,
    /// Base latitude, if the snapshot does not record one.
    #[arg(long)]
    theta: Option<f64>,
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::DegenerateGraph { .. } | Error::Domain(_) | Error::SingularMetric { .. } | Error::DegenerateWeight(_) => {
            EXIT_DEGENERATE
        }
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_CONVERGED });
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match cli.command {
        Command::Flow(FlowCommand::Run { config }) => flow_run(&config),
        Command::Spectrum(args) => run_spectrum(&args).map(|_| EXIT_CONVERGED),
        Command::Weights(args) => run_weights(&args).map(|_| EXIT_CONVERGED),
        Command::FitSphere(args) => run_fit(&args).map(|_| EXIT_CONVERGED),
        Command::Verify { quick } => {
            let results = run_suite(quick);
            print!("{}", format_table(&results));
            Ok(if all_passed(&results) { EXIT_CONVERGED } else { EXIT_VERIFY })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::from(EXIT_CONVERGED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

fn write_snapshots(dir: &Path, snapshots: &[Snapshot]) -> spheregraph::Result<()> {
    fs::create_dir_all(dir)?;
    for (i, s) in snapshots.iter().enumerate() {
        s.write(&dir.join(format!("snapshot_{i:06}.json")))?;
    }
    Ok(())
}

fn flow_run(path: &Path) -> spheregraph::Result<u8> {
    let mut cfg = RunConfig::read(path)?;
    cfg.resolve_outputs(path.parent().unwrap_or(Path::new(".")));
    for p in [&cfg.output.trace, &cfg.output.summary].into_iter().flatten() {
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
    }
    let outcome = match run_flow(&cfg.flow) {
        Ok(o) => o,
        Err(Error::DegenerateGraph { t, reason, trace }) => {
            if let Some(p) = &cfg.output.trace {
                trace.write_csv(p)?;
            }
            return Err(Error::DegenerateGraph { t, reason, trace });
        }
        Err(e) => return Err(e),
    };
    if let Some(p) = &cfg.output.trace {
        outcome.trace.write_csv(p)?;
    }
    if let Some(dir) = &cfg.output.snapshots_dir {
        write_snapshots(dir, &outcome.snapshots)?;
    }
    let last = outcome.trace.last().expect("trace holds the initial row");
    let decay = measure_decay(&outcome.trace).ok();
    let summary = serde_json::json!({
        "status": outcome.status,
        "t": last.t,
        "steps": outcome.trace.len() - 1,
        "vhat_initial": outcome.trace.rows[0].vhat,
        "vhat_final": last.vhat,
        "vhat_drift": outcome.trace.vhat_drift(),
        "res_nonsphere": last.res_nonsphere,
        "decay": decay,
        "fit": outcome.final_fit,
    });
    let text = serde_json::to_string_pretty(&summary)?;
    if let Some(p) = &cfg.output.summary {
        fs::write(p, &text)?;
    }
    println!("{text}");
    Ok(match outcome.status {
        FlowStatus::Converged => EXIT_CONVERGED,
        FlowStatus::ReachedTEnd => EXIT_T_END,
    })
}

fn run_spectrum(args: &SpectrumArgs) -> spheregraph::Result<()> {
    let grid = SphereGrid::build(args.n, args.resolution)?;
    args.speed.validate(args.n)?;
    let op = if args.numeric {
        let spec = WeightSpec::new(args.weights.clone().unwrap_or_else(|| WeightSpec::volume(args.n).c));
        dg0_numeric(&grid, args.theta, &args.speed, &spec, args.eps)?
    } else {
        dg0_analytic(&grid, args.theta, &args.speed)?
    };
    let s = spectrum(&op);
    let mut out = io::stdout().lock();
    writeln!(out, "index,eigenvalue,null")?;
    for (i, l) in s.eigenvalues.iter().enumerate() {
        writeln!(out, "{i},{l},{}", l.abs() <= s.null_tol)?;
    }
    eprintln!(
        "null multiplicity {} (tolerance {:e}), gap {}, predicted gap {}",
        s.null_multiplicity,
        s.null_tol,
        s.gap,
        predicted_gap(args.n, args.theta, &args.speed)?
    );
    Ok(())
}

fn run_weights(args: &WeightsArgs) -> spheregraph::Result<()> {
    let n = args.n;
    let resolution = args.resolution.unwrap_or(if n == 1 { 64 } else { 16 });
    let grid = SphereGrid::build(n, resolution)?;
    let fields = geometry_fields(&grid, &GraphFunction::zero(&grid, args.theta))?;
    let mut out = io::stdout().lock();
    writeln!(out, "a,xi,xi_assembled,zhat")?;
    for a in 0..=n + 1 {
        let xi = xi_a_field(&grid, &fields, a)?;
        let mean = xi.iter().sum::<f64>() / xi.len() as f64;
        writeln!(out, "{a},{},{mean},{}", xi_sphere_closed_form(n, args.theta, a), zhat_sphere(n, args.theta, a))?;
    }
    Ok(())
}

fn run_fit(args: &FitArgs) -> spheregraph::Result<()> {
    let snap = Snapshot::read(&args.snapshot)?;
    let grid = snap.grid()?;
    let theta = args
        .theta
        .or(snap.theta)
        .ok_or_else(|| Error::Config("snapshot has no theta; pass --theta".into()))?;
    let fit = fit_sphere(&grid, &GraphFunction::new(theta, snap.values))?;
    println!("{}", serde_json::to_string_pretty(&fit)?);
    Ok(())
}
