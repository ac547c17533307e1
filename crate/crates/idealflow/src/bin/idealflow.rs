//! Command-line front end: configuration parsing, run orchestration, file
//! I/O, and the exit-code contract (0 success/all-pass, 1 verification
//! failure, 2 invalid input, 3 numerical breakdown).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;

use idealflow::curve::{random_closed_state, CurvatureState};
use idealflow::diagnostics::{
    self, basin_sweep, fit_decay_rate, gradient_inequality_sweep, identity_suite, CheckResult,
};
use idealflow::flow::{
    critical_point_search, evolve, linear_rates, linearized_spectrum_numeric, mu, FlowConfig,
    Integrator, TimeStep,
};
use idealflow::{Error, State};

const EXIT_OK: u8 = 0;
const EXIT_VERIFY_FAIL: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "idealflow", version, about = "Spectral simulation and verification of higher-order curvature flows on closed planar curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed for sample generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Single-threaded, bit-exact reproducible mode.
    #[arg(long, global = true)]
    serial: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the normalised flow and write the trajectory.
    Evolve,
    /// Run a verification suite: identities, inequalities, spectrum, rates, or all.
    Verify { suite: String },
    /// Basin or gradient-inequality sweep (sweep=basin|gradient in the config).
    Sweep,
    /// Numeric linearised spectrum against the exact rates.
    Spectrum,
    /// Critical-point searches from random closed seeds.
    SearchCritical,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = if cli.serial {
        Some(1)
    } else {
        std::env::var("IDEALFLOW_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
    };
    if let Some(n) = threads {
        // ignore the error if a pool already exists (e.g. under tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(classify(&err))
        }
    }
}

fn classify(err: &CliError) -> u8 {
    match err {
        CliError::Invalid(_) => EXIT_INVALID,
        CliError::Numerical(_) => EXIT_NUMERICAL,
        CliError::Io(_) => EXIT_INVALID,
    }
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Numerical(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(msg) => write!(f, "{msg}"),
            CliError::Numerical(msg) => write!(f, "numerical breakdown: {msg}"),
            CliError::Io(msg) => write!(f, "io: {msg}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::InsufficientData(_) => CliError::Invalid(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

type Config = BTreeMap<String, String>;

fn load_config(path: &Option<PathBuf>) -> Result<Config, CliError> {
    let mut map = Config::new();
    let Some(path) = path else {
        return Ok(map);
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Invalid(format!(
                "config line {} is not key=value: {line:?}",
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn get<T: std::str::FromStr>(cfg: &Config, key: &str, default: T) -> Result<T, CliError> {
    match cfg.get(key) {
        None => Ok(default),
        Some(raw) => raw
            .parse()
            .map_err(|_| CliError::Invalid(format!("config key {key}: cannot parse {raw:?}"))),
    }
}

fn flow_config(cfg: &Config) -> Result<FlowConfig<f64>, CliError> {
    let m: usize = get(cfg, "m", 1)?;
    let omega: i32 = get(cfg, "omega", 1)?;
    if m == 0 {
        return Err(CliError::Invalid("flow requires m ≥ 1".into()));
    }
    if omega == 0 {
        return Err(CliError::Invalid("turning number must be nonzero".into()));
    }
    let mut fc = FlowConfig::<f64>::new(m, omega);
    fc.n_modes = get(cfg, "n_modes", fc.n_modes)?;
    fc.reproject_every = get(cfg, "reproject_every", fc.reproject_every)?;
    fc.record_every = get(cfg, "record_every", fc.record_every)?;
    fc.closure_tol = get(cfg, "closure_tol", fc.closure_tol)?;
    fc.kosc_floor = get(cfg, "kosc_floor", fc.kosc_floor)?;
    if cfg.contains_key("max_lambda_dt") {
        fc.max_lambda_dt = Some(get(cfg, "max_lambda_dt", 0.0)?);
    }
    match cfg.get("dt").map(String::as_str) {
        None | Some("auto") => fc.dt = TimeStep::Auto,
        Some(raw) => {
            let dt: f64 = raw
                .parse()
                .map_err(|_| CliError::Invalid(format!("config key dt: cannot parse {raw:?}")))?;
            fc.dt = TimeStep::Fixed(dt);
        }
    }
    match cfg.get("t_end").map(String::as_str) {
        None | Some("auto") => {}
        Some(raw) => {
            fc.t_end = raw.parse().map_err(|_| {
                CliError::Invalid(format!("config key t_end: cannot parse {raw:?}"))
            })?;
        }
    }
    match cfg.get("integrator").map(String::as_str) {
        None | Some("etd-rk4") => fc.integrator = Integrator::EtdRk4,
        Some("etd-euler") => fc.integrator = Integrator::EtdEuler,
        Some(other) => {
            return Err(CliError::Invalid(format!("unknown integrator {other:?}")));
        }
    }
    fc.validate().map_err(CliError::from)?;
    Ok(fc)
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

struct Manifest {
    path: PathBuf,
    body: serde_json::Value,
}

impl Manifest {
    fn create(
        cli: &Cli,
        command: &str,
        cfg: &Config,
        outputs: &[&str],
    ) -> Result<Manifest, CliError> {
        fs::create_dir_all(&cli.out)?;
        let body = json!({
            "command": command,
            "config": cfg,
            "seed": cli.seed,
            "serial": cli.serial,
            "start_timestamp": timestamp(),
            "end_timestamp": serde_json::Value::Null,
            "code_version": env!("CARGO_PKG_VERSION"),
            "outputs": outputs.iter().map(|o| cli.out.join(o).display().to_string()).collect::<Vec<_>>(),
        });
        let manifest = Manifest {
            path: cli.out.join("manifest.json"),
            body,
        };
        manifest.write()?;
        Ok(manifest)
    }

    fn write(&self) -> Result<(), CliError> {
        fs::write(&self.path, format!("{:#}\n", self.body))?;
        Ok(())
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.body["end_timestamp"] = json!(timestamp());
        self.write()
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let cfg = load_config(&cli.config)?;
    match &cli.command {
        Command::Evolve => cmd_evolve(cli, &cfg),
        Command::Verify { suite } => cmd_verify(cli, &cfg, suite),
        Command::Sweep => cmd_sweep(cli, &cfg),
        Command::Spectrum => cmd_spectrum(cli, &cfg),
        Command::SearchCritical => cmd_search_critical(cli, &cfg),
    }
}

fn initial_state(cli: &Cli, cfg: &Config, fc: &FlowConfig<f64>) -> Result<State, CliError> {
    let kosc: f64 = get(cfg, "kosc", 0.1)?;
    let decay: f64 = get(cfg, "decay_exponent", 3.0)?;
    if kosc < 0.0 {
        return Err(CliError::Invalid("kosc must be nonnegative".into()));
    }
    Ok(random_closed_state(
        fc.omega, kosc, decay, cli.seed, fc.n_modes,
    )?)
}

fn cmd_evolve(cli: &Cli, cfg: &Config) -> Result<u8, CliError> {
    let fc = flow_config(cfg)?;
    let manifest = Manifest::create(cli, "evolve", cfg, &["trajectory.csv", "final_state.json"])?;
    let initial = initial_state(cli, cfg, &fc)?;
    let l0: f64 = get(cfg, "l0", 1.0)?;
    let traj = match evolve(&initial, &fc) {
        Ok(traj) => traj,
        Err(Error::StepRejected { times, residual }) => {
            return Err(CliError::Numerical(format!(
                "step rejected {times} times (residual {residual:e})"
            )));
        }
        Err(other) => return Err(other.into()),
    };
    let mut csv = String::from(diagnostics::CSV_HEADER);
    csv.push('\n');
    for (_, _, record) in &traj.records {
        csv.push_str(&record.csv_row());
        csv.push('\n');
    }
    write_file(&cli.out, "trajectory.csv", &csv)?;
    let (_, final_fs, final_record) = traj.records.last().expect("trajectory has records");
    let final_json = json!({
        "state": final_fs.state.to_json(),
        "tau": final_fs.tau,
        "log_length": final_fs.log_length,
        "length": l0 * final_fs.length(),
        "physical_time": l0.powi(2 * traj.m as i32 + 4) * final_fs.physical_time,
        "kosc": final_record.kosc,
        "converged": traj.converged,
        "steps": traj.steps,
    });
    write_file(&cli.out, "final_state.json", &format!("{final_json:#}\n"))?;
    manifest.finish()?;
    println!(
        "evolve: {} steps, tau = {:.6e}, kosc = {:.3e}, converged = {}",
        traj.steps, final_fs.tau, final_record.kosc, traj.converged
    );
    Ok(EXIT_OK)
}

fn spectrum_checks(seed: u64) -> Result<(Vec<CheckResult>, String), Error> {
    let mut csv = String::from("m,omega,n,rate_numeric,rate_exact,residual\n");
    let mut checks = Vec::new();
    let _ = seed;
    for m in [1usize, 2] {
        for omega in [1i32, 2] {
            let numeric = linearized_spectrum_numeric::<f64>(m, omega, 8)?;
            let exact = linear_rates::<f64>(m, omega, 8);
            let (lambda_min, _) = mu::<f64>(m, omega);
            let mut worst = 0.0f64;
            for (n, rate) in &numeric {
                let expected = -exact[*n];
                let residual = if *n == omega.unsigned_abs() as usize {
                    rate.abs() / (1e-3 * lambda_min)
                } else {
                    (rate - expected).abs() / exact[*n]
                };
                worst = worst.max(residual);
                csv.push_str(&format!(
                    "{m},{omega},{n},{rate:.17e},{expected:.17e},{residual:.6e}\n"
                ));
            }
            checks.push(CheckResult::upper_bound(
                &format!("linearised_spectrum[m={m},omega={omega}]"),
                worst,
                1e-3,
                0.0,
                "max relative rate error over n ≤ 8 (resonant modes against 1e-3·μ)".into(),
            ));
        }
    }
    Ok((checks, csv))
}

fn rates_check(seed: u64) -> Result<CheckResult, Error> {
    let mut fc = FlowConfig::<f64>::new(1, 1);
    fc.n_modes = 127;
    let initial = random_closed_state(1, 1e-4, 3.0, seed, fc.n_modes)?;
    let traj = evolve(&initial, &fc)?;
    let series: Vec<(f64, f64)> = traj.records.iter().map(|r| (r.2.tau, r.2.kosc)).collect();
    let (rate, r_sq) = fit_decay_rate(&series, 0.25)?;
    let (mu_value, _) = mu::<f64>(1, 1);
    let expected = 2.0 * mu_value;
    let rel = (rate - expected).abs() / expected;
    Ok(CheckResult {
        name: "kosc_decay_rate[m=1,omega=1]".into(),
        passed: rel <= 0.05 && r_sq >= 0.999,
        measured: rate,
        bound: expected,
        tolerance: 0.05 * expected,
        context: format!("r² = {r_sq:.6}"),
    })
}

fn inequality_checks(seed: u64) -> Result<Vec<CheckResult>, Error> {
    let mut checks = Vec::new();
    for m in [1usize, 2] {
        for omega in [1i32, 2] {
            let sweep = gradient_inequality_sweep(m, omega, 100, seed)?;
            let worst_weak = sweep
                .rows
                .iter()
                .filter(|r| !r.degenerate)
                .map(|r| r.weak_ratio)
                .fold(f64::MIN, f64::max);
            checks.push(CheckResult::upper_bound(
                &format!("weak_gradient_ratio[m={m},omega={omega}]"),
                worst_weak,
                1.0,
                0.0,
                "max lhs/rhs over non-degenerate samples".into(),
            ));
            checks.push(CheckResult {
                name: format!("empirical_gradient_constant[m={m},omega={omega}]"),
                passed: sweep.min_gradient_ratio > 0.0,
                measured: sweep.min_gradient_ratio,
                bound: 0.0,
                tolerance: 0.0,
                context: "population minimum of ∫K_m²/E_m (must be positive)".into(),
            });
        }
    }
    Ok(checks)
}

fn cmd_verify(cli: &Cli, cfg: &Config, suite: &str) -> Result<u8, CliError> {
    let known = ["identities", "inequalities", "spectrum", "rates", "all"];
    if !known.contains(&suite) {
        return Err(CliError::Invalid(format!(
            "unknown suite {suite:?}; expected one of {known:?}"
        )));
    }
    let manifest = Manifest::create(cli, "verify", cfg, &["report.json"])?;
    let mut checks: Vec<CheckResult> = Vec::new();
    if suite == "identities" || suite == "all" {
        checks.extend(identity_suite(&[1, 2], &[1, 2], 20, cli.seed)?);
    }
    if suite == "inequalities" || suite == "all" {
        checks.extend(inequality_checks(cli.seed)?);
    }
    if suite == "spectrum" || suite == "all" {
        let (spectrum, csv) = spectrum_checks(cli.seed)?;
        write_file(&cli.out, "spectrum.csv", &csv)?;
        checks.extend(spectrum);
    }
    if suite == "rates" || suite == "all" {
        checks.push(rates_check(cli.seed)?);
    }
    let failed: Vec<&CheckResult> = checks.iter().filter(|c| !c.passed).collect();
    for check in &checks {
        println!("{}", check.summary_line());
    }
    let mut worst: Vec<&CheckResult> = checks.iter().collect();
    worst.sort_by(|a, b| {
        let ra = a.measured / a.bound.abs().max(1e-300);
        let rb = b.measured / b.bound.abs().max(1e-300);
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    let report = json!({
        "suite": suite,
        "passed": checks.len() - failed.len(),
        "failed": failed.len(),
        "worst_residuals": worst.iter().take(5).map(|c| json!({
            "name": c.name,
            "measured": c.measured,
            "bound": c.bound,
        })).collect::<Vec<_>>(),
        "checks": checks.iter().map(|c| serde_json::to_value(c).unwrap()).collect::<Vec<_>>(),
    });
    write_file(&cli.out, "report.json", &format!("{report:#}\n"))?;
    manifest.finish()?;
    Ok(if failed.is_empty() {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAIL
    })
}

fn cmd_sweep(cli: &Cli, cfg: &Config) -> Result<u8, CliError> {
    let kind = cfg.get("sweep").map(String::as_str).unwrap_or("basin");
    let m: usize = get(cfg, "m", 1)?;
    let omega: i32 = get(cfg, "omega", 1)?;
    match kind {
        "basin" => {
            let grid_raw = cfg
                .get("kosc_grid")
                .ok_or_else(|| CliError::Invalid("basin sweep needs kosc_grid".into()))?;
            let grid: Vec<f64> = grid_raw
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Invalid(format!("cannot parse kosc_grid {grid_raw:?}")))?;
            if grid.is_empty() {
                return Err(CliError::Invalid("kosc_grid is empty".into()));
            }
            let samples: usize = get(cfg, "samples_per_level", 20)?;
            let n_modes: usize = get(cfg, "n_modes", 127)?;
            let manifest = Manifest::create(cli, "sweep", cfg, &["basin.csv"])?;
            let rows = basin_sweep(m, omega, &grid, samples, cli.seed, n_modes, cli.serial)?;
            let mut csv = String::from(diagnostics::BASIN_CSV_HEADER);
            csv.push('\n');
            for row in &rows {
                csv.push_str(&row.csv_row());
                csv.push('\n');
            }
            write_file(&cli.out, "basin.csv", &csv)?;
            manifest.finish()?;
            Ok(EXIT_OK)
        }
        "gradient" => {
            let n_samples: usize = get(cfg, "n_samples", 200)?;
            if n_samples == 0 {
                return Err(CliError::Invalid("n_samples must be positive".into()));
            }
            let manifest =
                Manifest::create(cli, "sweep", cfg, &["gradient.csv", "gradient_summary.json"])?;
            let sweep = gradient_inequality_sweep(m, omega, n_samples, cli.seed)?;
            let mut csv = String::from(diagnostics::GRADIENT_CSV_HEADER);
            csv.push('\n');
            for row in &sweep.rows {
                csv.push_str(&row.csv_row());
                csv.push('\n');
            }
            write_file(&cli.out, "gradient.csv", &csv)?;
            let summary = json!({
                "m": m,
                "omega": omega,
                "min_gradient_ratio": sweep.min_gradient_ratio,
                "argmin_state": sweep.argmin_state.as_deref()
                    .and_then(|s| serde_json::from_str::<serde_json::Value>(s).ok()),
            });
            write_file(&cli.out, "gradient_summary.json", &format!("{summary:#}\n"))?;
            manifest.finish()?;
            Ok(EXIT_OK)
        }
        other => Err(CliError::Invalid(format!("unknown sweep kind {other:?}"))),
    }
}

fn cmd_spectrum(cli: &Cli, cfg: &Config) -> Result<u8, CliError> {
    let manifest = Manifest::create(cli, "spectrum", cfg, &["spectrum.csv"])?;
    let (checks, csv) = spectrum_checks(cli.seed)?;
    write_file(&cli.out, "spectrum.csv", &csv)?;
    manifest.finish()?;
    let mut ok = true;
    for check in checks {
        println!("{}", check.summary_line());
        ok &= check.passed;
    }
    Ok(if ok { EXIT_OK } else { EXIT_VERIFY_FAIL })
}

fn cmd_search_critical(cli: &Cli, cfg: &Config) -> Result<u8, CliError> {
    let m: usize = get(cfg, "m", 1)?;
    let omega: i32 = get(cfg, "omega", 1)?;
    if m == 0 || omega == 0 {
        return Err(CliError::Invalid(
            "search requires m ≥ 1 and nonzero turning number".into(),
        ));
    }
    let n_seeds: usize = get(cfg, "n_seeds", 20)?;
    let kosc: f64 = get(cfg, "kosc", 0.5)?;
    let n_modes: usize = get(cfg, "n_modes", 63)?;
    let manifest = Manifest::create(cli, "search-critical", cfg, &["search.csv"])?;

    use rayon::prelude::*;
    let run_one = |i: &usize| -> (usize, Option<(bool, f64)>) {
        let seed = cli
            .seed
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(*i as u64);
        let state: CurvatureState<f64> =
            match random_closed_state(omega, kosc, 3.0, seed, n_modes) {
                Ok(state) => state,
                Err(_) => return (*i, None),
            };
        match critical_point_search(m, omega, &state) {
            Ok((found, is_circle)) => (*i, Some((is_circle, found.kosc()))),
            Err(_) => (*i, None),
        }
    };
    let ids: Vec<usize> = (0..n_seeds).collect();
    let outcomes: Vec<(usize, Option<(bool, f64)>)> = if cli.serial {
        ids.iter().map(run_one).collect()
    } else {
        ids.par_iter().map(run_one).collect()
    };

    let mut csv = String::from("sample_id,converged,is_circle,final_kosc\n");
    let mut all_circles = true;
    let mut converged = 0usize;
    for (i, outcome) in &outcomes {
        match outcome {
            Some((is_circle, final_kosc)) => {
                converged += 1;
                all_circles &= is_circle;
                csv.push_str(&format!("{i},true,{is_circle},{final_kosc:.17e}\n"));
            }
            None => csv.push_str(&format!("{i},false,false,nan\n")),
        }
    }
    write_file(&cli.out, "search.csv", &csv)?;
    manifest.finish()?;
    println!("search-critical: {converged}/{n_seeds} converged, all circles = {all_circles}");
    Ok(if all_circles { EXIT_OK } else { EXIT_VERIFY_FAIL })
}
