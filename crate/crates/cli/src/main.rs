//! `finchord`: solve, search, verify and sweep from a JSON configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use finchord::chord::{critical_value_report, multistart_search, solve_chord};
use finchord::config::RunConfig;
use finchord::curve::{boundary_grid, family_energies};
use finchord::penalty::{energy_constant_residual, penalty_integral};
use finchord::report::{summary_csv, to_json, ChordRecord, SearchRecord};
use finchord::verify::{format_table, run_suite, VerifyOptions};
use finchord::{Domain, Error, Metric};

const EXIT_CONFIG: u8 = 1;
const EXIT_UNCONVERGED: u8 = 2;
const EXIT_SHORTFALL: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "finchord",
    version,
    about = "Orthogonal Finsler geodesic chords"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `penalty.max_iters=1`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replaces the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// One chord from the seed endpoints `solve.a`, `solve.b`.
    Solve,
    /// Multistart search over a boundary grid.
    Search,
    /// Invariant suites for the configured metric and domain.
    Verify,
    /// Energy landscape of the seed chord family with `delta_m`, `delta_M`.
    Sweep,
}

/// Failure carrying its exit code.
struct Fail(u8, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::Io(_)
            | Error::InvalidInput(_)
            | Error::OutsideStrip { .. }
            | Error::UnsupportedDomain(_)
            | Error::DegenerateBoundary(_)
            | Error::MetricDegenerate(_) => EXIT_CONFIG,
            _ => EXIT_UNCONVERGED,
        };
        Fail(code, e.to_string())
    }
}

fn config_error(msg: impl Into<String>) -> Fail {
    Fail(EXIT_CONFIG, msg.into())
}

struct Run {
    config: RunConfig,
    metric: Metric,
    domain: Domain,
    out: PathBuf,
}

impl Run {
    fn write(&self, name: &str, contents: &str) -> Result<(), Fail> {
        std::fs::write(self.out.join(name), contents).map_err(|e| {
            config_error(format!(
                "cannot write {}: {e}",
                self.out.join(name).display()
            ))
        })
    }
}

fn setup(common: &Common) -> Result<Run, Fail> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| config_error("--config is required"))?;
    let mut config = RunConfig::load(path, &common.set)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(t) = common.threads.or(config.threads) {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let metric = config.build_metric()?;
    let domain = config.build_domain()?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| config_error(format!("cannot create {}: {e}", common.out.display())))?;
    Ok(Run {
        config,
        metric,
        domain,
        out: common.out.clone(),
    })
}

fn run_solve(run: &Run) -> Result<u8, Fail> {
    let solve = run
        .config
        .solve
        .as_ref()
        .ok_or_else(|| config_error("solve needs solve.a and solve.b"))?;
    let params = run.config.chord_params()?;
    let a = DVector::from_vec(solve.a.clone());
    let b = DVector::from_vec(solve.b.clone());
    let result = solve_chord(&run.metric, &run.domain, &a, &b, &params)?;
    run.write("chord.csv", &result.curve.to_csv())?;
    let record = serde_json::json!({
        "chord": ChordRecord::new(&result, "chord.csv"),
        "penalty_integral": penalty_integral(&run.domain, result.delta, &result.curve)?,
        "energy_constant_residual": energy_constant_residual(&run.metric, &run.domain, result.delta, &result.curve)?,
    });
    run.write("report.json", &to_json(&record))?;
    println!(
        "{} energy {:.10} residuals {:.3e} {:.3e}",
        result.classification.as_str(),
        result.energy,
        result.residual0,
        result.residual1
    );
    Ok(if result.classification.is_chord() {
        0
    } else {
        EXIT_UNCONVERGED
    })
}

fn delta_m(run: &Run) -> Result<f64, Fail> {
    let samples = run.config.sweep.samples.max(1);
    let bounds = run
        .metric
        .estimate_bounds(run.domain.strip_sampler(run.config.seed), samples)?;
    Ok(run
        .domain
        .domain_constants(&bounds, samples, run.config.seed)?
        .delta_m)
}

fn run_search(run: &Run) -> Result<u8, Fail> {
    let grid = run
        .config
        .search
        .boundary_grid
        .ok_or_else(|| config_error("search needs search.boundary_grid"))?;
    let params = run.config.chord_params()?;
    let report = multistart_search(&run.metric, &run.domain, grid, &params, run.config.seed)?;
    let mut paths = Vec::new();
    for (i, r) in report.distinct.iter().enumerate() {
        let name = format!("chord_{i:03}.csv");
        run.write(&name, &r.curve.to_csv())?;
        paths.push(name);
    }
    let warning = if report.distinct.is_empty() {
        None
    } else {
        critical_value_report(&report, params.value_tol, Some(delta_m(run)?))?.1
    };
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }
    run.write(
        "search.json",
        &to_json(&SearchRecord::new(&report, &paths, warning)),
    )?;
    run.write("summary.csv", &summary_csv(&report.all_results))?;
    println!(
        "{} seeds, {} distinct chords (expected {}), critical values {:?}",
        report.seeds.len(),
        report.distinct.len(),
        report.expected_count,
        report.critical_values
    );
    Ok(if report.meets_expected_count() {
        0
    } else {
        EXIT_SHORTFALL
    })
}

fn run_verify(run: &Run) -> Result<u8, Fail> {
    let opts = VerifyOptions {
        samples: run.config.verify.samples,
        euler_tolerance: run.config.verify.euler_tolerance,
        seed: run.config.seed,
    };
    let results = run_suite(&run.metric, &run.domain, run.config.n, &opts);
    print!("{}", format_table(&results));
    run.write("verify.json", &to_json(&results))?;
    Ok(if results.iter().all(|r| r.passed) {
        0
    } else {
        EXIT_INVARIANT
    })
}

fn run_sweep(run: &Run) -> Result<u8, Fail> {
    let grid = run
        .config
        .sweep
        .boundary_grid
        .or(run.config.search.boundary_grid)
        .ok_or_else(|| config_error("sweep needs sweep.boundary_grid"))?;
    let dim = run.domain.dimension();
    if dim > 3 {
        return Err(Error::UnsupportedDomain(format!(
            "sweep supports dimension 2 and 3, got {dim}"
        ))
        .into());
    }
    let pts = boundary_grid(&run.domain, grid, run.config.seed)?;
    let table = family_energies(&run.metric, &run.domain, &pts, run.config.n)?;
    let mut csv = String::new();
    if dim == 2 {
        csv.push_str("theta_a,theta_b,energy\n");
    } else {
        csv.push_str("index_a,index_b,energy\n");
    }
    let label = |k: usize| {
        if dim == 2 {
            format!("{:.16e}", std::f64::consts::TAU * k as f64 / grid as f64)
        } else {
            k.to_string()
        }
    };
    let mut delta_big = 0.0f64;
    for (i, row) in table.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{e:.16e}", label(i), label(j));
            delta_big = delta_big.max(*e);
        }
    }
    run.write("sweep.csv", &csv)?;
    if dim == 3 {
        let mut points = String::from("index,q1,q2,q3\n");
        for (k, p) in pts.iter().enumerate() {
            let _ = writeln!(points, "{k},{:.16e},{:.16e},{:.16e}", p[0], p[1], p[2]);
        }
        run.write("sweep_points.csv", &points)?;
    }
    let dm = delta_m(run)?;
    run.write(
        "sweep.json",
        &to_json(&serde_json::json!({"delta_m": dm, "delta_M": delta_big})),
    )?;
    println!("delta_m {dm:.6e} delta_M {delta_big:.6e}");
    Ok(0)
}

fn execute(cli: &Cli) -> Result<u8, Fail> {
    let run = setup(&cli.common)?;
    match cli.command {
        Command::Solve => run_solve(&run),
        Command::Search => run_search(&run),
        Command::Verify => run_verify(&run),
        Command::Sweep => run_sweep(&run),
    }
}

fn main() -> ExitCode {
    // usage errors share the config exit code; clap's default 2 means unconverged here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
