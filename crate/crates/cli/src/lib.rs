//! Command-line surface for coalweb experiment campaigns.
//!
//! One subcommand per experiment kind, plus `oracle` (exact rational
//! occupancy and pair probabilities by enumeration on a small torus)
//! and `metrics` (distances between path sets stored in log files).
//! Flags fully determine the resolved config: defaults come from the
//! kind's preset, explicit flags override them, and [`render_args`]
//! reproduces a flag vector from any config, so
//! `parse(render_args(config)) == config`.
//!
//! Exit codes: 0 when every report cell passes, 1 when any cell
//! fails, 2 on argument or law parse errors (nothing is written),
//! 3 on runtime guard violations or unwritable output paths.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num::Zero;

use coalweb::experiments::{self, Cell, ExperimentConfig, ExperimentKind, ExperimentReport};
use coalweb::increments::IncrementDistribution;
use coalweb::pathspace;
use coalweb::walks;

const AFTER_HELP: &str = "Report files are written as <kind>_seed<seed>.csv, .json, and (with \
--format csv) a gnuplot-ready .dat. CSV columns, in order: \
kind,params,estimate,stderr,reference,provenance,verdict. All floating-point values in report \
files carry 17 significant digits. The environment variable COALWEB_SEED supplies the seed when \
--seed is absent; with neither, the seed is 0.";

#[derive(Parser, Debug)]
#[command(
    name = "coalweb",
    version,
    about = "Coalescing-walk experiment campaigns with deterministic seeding",
    after_help = AFTER_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Scaled occupancy density on a torus against its closed form
    #[command(name = "density_scan", alias = "density")]
    DensityScan(RunArgs),
    /// Mean count of rescaled positions landing in an interval
    #[command(name = "etahat")]
    Etahat(RunArgs),
    /// Point-process intensity of positions generated into (a, b)
    #[command(name = "pointprocess")]
    Pointprocess(RunArgs),
    /// Exact pairwise negative-correlation margins on a small torus
    #[command(name = "negcorr_exact")]
    NegcorrExact(RunArgs),
    /// Monte Carlo joint-vs-product occupancy margins on a wide torus
    #[command(name = "negcorr_mc")]
    NegcorrMc(RunArgs),
    /// Overshoot law at a deep level against the ladder renewal formula
    #[command(name = "overshoot")]
    Overshoot(RunArgs),
    /// Interface boundary CLT, width-law stability, boundary closeness
    #[command(name = "interface_clt")]
    InterfaceClt(RunArgs),
    /// Crossing-vs-coincidence map agreement under refinement
    #[command(name = "fg_convergence")]
    FgConvergence(RunArgs),
    /// Frequency of the small-rectangle escape event (finite means)
    #[command(name = "tightness_scan")]
    TightnessScan(RunArgs),
    /// Scaled pair non-meeting probabilities and ratio stability
    #[command(name = "hitting_tail")]
    HittingTail(RunArgs),
    /// Coalescing Brownian sweep intensity and step-halving stability
    #[command(name = "bm_reference")]
    BmReference(RunArgs),
    /// Exact rational occupancies and pair margins by enumeration
    Oracle(OracleArgs),
    /// Distances between path sets stored in log files
    Metrics(MetricsArgs),
}

impl Cmd {
    /// The experiment kind behind a campaign subcommand, if any.
    pub fn run_args(&self) -> Option<(ExperimentKind, &RunArgs)> {
        match self {
            Cmd::DensityScan(a) => Some((ExperimentKind::DensityScan, a)),
            Cmd::Etahat(a) => Some((ExperimentKind::Etahat, a)),
            Cmd::Pointprocess(a) => Some((ExperimentKind::PointProcess, a)),
            Cmd::NegcorrExact(a) => Some((ExperimentKind::NegcorrExact, a)),
            Cmd::NegcorrMc(a) => Some((ExperimentKind::NegcorrMc, a)),
            Cmd::Overshoot(a) => Some((ExperimentKind::Overshoot, a)),
            Cmd::InterfaceClt(a) => Some((ExperimentKind::InterfaceClt, a)),
            Cmd::FgConvergence(a) => Some((ExperimentKind::FgConvergence, a)),
            Cmd::TightnessScan(a) => Some((ExperimentKind::TightnessScan, a)),
            Cmd::HittingTail(a) => Some((ExperimentKind::HittingTail, a)),
            Cmd::BmReference(a) => Some((ExperimentKind::BmReference, a)),
            Cmd::Oracle(_) | Cmd::Metrics(_) => None,
        }
    }
}

fn parse_law_arg(text: &str) -> Result<IncrementDistribution, String> {
    IncrementDistribution::parse(text).map_err(|e| e.to_string())
}

/// Flags shared by every campaign subcommand. Unset flags fall back to
/// the kind's preset, so a bare subcommand runs the full-scale
/// campaign for that kind.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Increment law as "offset:prob,offset:prob,..." (fractions allowed)
    #[arg(long, value_parser = parse_law_arg, allow_hyphen_values = true)]
    pub law: Option<IncrementDistribution>,
    /// Base seed (fallback: COALWEB_SEED, then 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo trial count
    #[arg(long)]
    pub trials: Option<u64>,
    /// Rescaling parameter; repeat the flag for a scan
    #[arg(long = "delta")]
    pub deltas: Vec<f64>,
    /// Time horizon; repeat the flag for a scan
    #[arg(long = "t")]
    pub times: Vec<f64>,
    /// Spatial interval endpoints a b
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    pub interval: Option<Vec<f64>>,
    /// Torus width (0 = automatic), or start depth for overshoot
    #[arg(long)]
    pub width: Option<i64>,
    /// Time step of the Brownian reference grid
    #[arg(long = "grid-dt")]
    pub grid_dt: Option<f64>,
    /// Exceedance threshold for map-agreement cells
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Probe rectangle half-width for tightness cells
    #[arg(long = "probe-u")]
    pub probe_u: Option<f64>,
    /// Override the declared tolerance of every cell
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Number of contiguous trial ranges to run and merge
    #[arg(long, default_value_t = 1)]
    pub workers: u64,
    /// Directory for report files
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Report format; csv also writes the gnuplot .dat twin
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Exact enumeration on a small torus: single-site occupancies and the
/// minimum pairwise margin p(x)p(y) - p(x,y).
#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Increment law (required; weights must be rational)
    #[arg(long, value_parser = parse_law_arg, allow_hyphen_values = true)]
    pub law: IncrementDistribution,
    /// Torus width
    #[arg(long, default_value_t = 5)]
    pub width: i64,
    /// Number of synchronous steps
    #[arg(long = "t", default_value_t = 1)]
    pub steps: u64,
}

/// Distance queries between two path sets stored in "paths v1" logs.
#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// First path-set log file
    pub set_a: PathBuf,
    /// Second path-set log file
    pub set_b: PathBuf,
    /// Grid resolution in the compactified time coordinate
    #[arg(long, default_value_t = 400)]
    pub grid: usize,
}

fn seed_from_env() -> Result<Option<u64>, String> {
    match std::env::var("COALWEB_SEED") {
        Ok(text) => text
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("COALWEB_SEED is not a u64: {text:?}")),
        Err(_) => Ok(None),
    }
}

/// Resolve a campaign config: preset defaults for the kind, overridden
/// by any explicit flags.
pub fn build_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, String> {
    let seed = match args.seed {
        Some(s) => s,
        None => seed_from_env()?.unwrap_or(0),
    };
    let mut config = ExperimentConfig::preset(kind, seed);
    if let Some(law) = &args.law {
        config.law = law.clone();
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if !args.deltas.is_empty() {
        config.deltas = args.deltas.clone();
    }
    if !args.times.is_empty() {
        config.times = args.times.clone();
    }
    if let Some(iv) = &args.interval {
        config.interval = (iv[0], iv[1]);
    }
    if let Some(width) = args.width {
        config.width = width;
    }
    if let Some(dt) = args.grid_dt {
        config.grid_dt = dt;
    }
    if let Some(eps) = args.epsilon {
        config.epsilon = eps;
    }
    if let Some(u) = args.probe_u {
        config.probe_u = u;
    }
    config.tolerance = args.tolerance;
    Ok(config)
}

/// The flag vector that reproduces `config` exactly: subcommand name
/// followed by every config-bearing flag. Floats use the shortest
/// representation that parses back to the same f64.
pub fn render_args(config: &ExperimentConfig) -> Vec<String> {
    let mut args = vec![
        config.kind.name().to_string(),
        "--law".to_string(),
        config.law.render(),
        "--seed".to_string(),
        config.seed.to_string(),
        "--trials".to_string(),
        config.trials.to_string(),
    ];
    for d in &config.deltas {
        args.extend(["--delta".to_string(), format!("{d}")]);
    }
    for t in &config.times {
        args.extend(["--t".to_string(), format!("{t}")]);
    }
    args.extend([
        "--interval".to_string(),
        format!("{}", config.interval.0),
        format!("{}", config.interval.1),
        "--width".to_string(),
        config.width.to_string(),
        "--grid-dt".to_string(),
        format!("{}", config.grid_dt),
        "--epsilon".to_string(),
        format!("{}", config.epsilon),
        "--probe-u".to_string(),
        format!("{}", config.probe_u),
    ]);
    if let Some(tol) = config.tolerance {
        args.extend(["--tolerance".to_string(), format!("{tol}")]);
    }
    args
}

fn verdict_line(kind: ExperimentKind, cell: &Cell) -> String {
    format!(
        "{} {} {}: estimate={:.6e} reference={:.6e} stderr={:.3e} tolerance={:.3e}",
        if cell.verdict { "pass" } else { "FAIL" },
        kind,
        cell.id,
        cell.estimate,
        cell.reference,
        cell.stderr,
        cell.tolerance,
    )
}

/// Write the report files for `format` into `dir` and return their
/// paths: .csv and .dat then .json for csv format, .json alone for
/// json format.
pub fn write_report(
    report: &ExperimentReport,
    dir: &Path,
    format: Format,
) -> Result<Vec<PathBuf>, String> {
    let stem = report.file_stem();
    // Serialize everything before touching the filesystem so a
    // serialization failure leaves no partial artifacts behind.
    let json = report.json().map_err(|e| e.to_string())?;
    let mut bodies: Vec<(String, String)> = Vec::new();
    if format == Format::Csv {
        bodies.push((format!("{stem}.csv"), report.csv()));
        bodies.push((format!("{stem}.dat"), report.gnuplot()));
    }
    bodies.push((format!("{stem}.json"), json));
    let mut written = Vec::new();
    for (name, body) in bodies {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| format!("{}: {e}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

fn execute_run(kind: ExperimentKind, args: &RunArgs) -> i32 {
    let config = match build_config(kind, args) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let report = match experiments::run_split(&config, args.workers) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };
    for cell in &report.cells {
        println!("{}", verdict_line(kind, cell));
    }
    let written = match write_report(&report, &args.out, args.format) {
        Ok(w) => w,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 3;
        }
    };
    let passed = report.cells.iter().filter(|c| c.verdict).count();
    println!(
        "{}: {}/{} cells pass in {:.2}s",
        kind,
        passed,
        report.cells.len(),
        report.runtime_secs
    );
    for path in &written {
        println!("wrote {}", path.display());
    }
    if report.all_pass() {
        0
    } else {
        1
    }
}

fn execute_oracle(args: &OracleArgs) -> i32 {
    let exact = match walks::enumerate_exact(&args.law, args.width, args.steps) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };
    println!(
        "exact occupancy, width-{} torus, {} step(s), law {}",
        exact.width,
        exact.steps,
        args.law.render()
    );
    for x in 0..exact.width {
        println!("p({x}) = {}", exact.occupancy(x));
    }
    let mut worst = None;
    for x in 0..exact.width {
        for y in x + 1..exact.width {
            let margin = exact.negcorr_margin(x, y);
            match &worst {
                Some((_, _, m)) if *m <= margin => {}
                _ => worst = Some((x, y, margin)),
            }
        }
    }
    if let Some((x, y, margin)) = worst {
        println!("min pair margin p(x)p(y) - p(x,y) = {margin} at ({x}, {y})");
        println!(
            "negative correlation {}",
            if margin >= Zero::zero() {
                "holds"
            } else {
                "violated"
            }
        );
    }
    0
}

fn execute_metrics(args: &MetricsArgs) -> i32 {
    let load = |path: &Path| -> Result<Vec<pathspace::Path>, String> {
        let text =
            std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        pathspace::pathset_from_log(&text).map_err(|e| format!("{}: {e}", path.display()))
    };
    let (ka, kb) = match (load(&args.set_a), load(&args.set_b)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(msg), _) | (_, Err(msg)) => {
            eprintln!("error: {msg}");
            return 3;
        }
    };
    let dh = match pathspace::hausdorff(&ka, &kb, args.grid) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };
    println!("set A: {} path(s), set B: {} path(s)", ka.len(), kb.len());
    println!("d_H = {} (grid error bound {})", dh.value, dh.error_bound);
    if ka.len() == 1 && kb.len() == 1 {
        let d = pathspace::path_distance(&ka[0], &kb[0], args.grid);
        println!("d = {} (grid error bound {})", d.value, d.error_bound);
    }
    0
}

/// Dispatch a parsed invocation and return the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match &cli.cmd {
        Cmd::Oracle(args) => execute_oracle(args),
        Cmd::Metrics(args) => execute_metrics(args),
        cmd => {
            let (kind, args) = cmd.run_args().expect("campaign subcommand");
            execute_run(kind, args)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[String]) -> Cli {
        let mut full = vec!["coalweb".to_string()];
        full.extend(args.iter().cloned());
        Cli::try_parse_from(full).expect("rendered args parse")
    }

    #[test]
    fn rendered_configs_parse_back_to_themselves() {
        for &kind in &ExperimentKind::ALL {
            for config in [
                ExperimentConfig::preset(kind, 7),
                ExperimentConfig::reduced(kind, 123),
            ] {
                let cli = parse(&render_args(&config));
                let (parsed_kind, args) = cli.cmd.run_args().expect("campaign");
                assert_eq!(parsed_kind, kind);
                let rebuilt = build_config(parsed_kind, args).unwrap();
                assert_eq!(rebuilt, config, "{kind}");
            }
        }
    }

    #[test]
    fn tolerance_and_scan_flags_survive_the_round_trip() {
        let mut config = ExperimentConfig::preset(ExperimentKind::FgConvergence, 3);
        config.tolerance = Some(0.0);
        config.deltas = vec![0.2, 0.11, 0.07];
        config.epsilon = 0.125;
        let cli = parse(&render_args(&config));
        let (kind, args) = cli.cmd.run_args().unwrap();
        assert_eq!(build_config(kind, args).unwrap(), config);
    }

    #[test]
    fn flags_override_preset_fields() {
        let cli = parse(&[
            "density_scan".into(),
            "--trials".into(),
            "9".into(),
            "--t".into(),
            "100".into(),
            "--seed".into(),
            "4".into(),
        ]);
        let (kind, args) = cli.cmd.run_args().unwrap();
        let config = build_config(kind, args).unwrap();
        let preset = ExperimentConfig::preset(ExperimentKind::DensityScan, 4);
        assert_eq!(config.trials, 9);
        assert_eq!(config.times, vec![100.0]);
        assert_eq!(config.width, preset.width);
        assert_eq!(config.law, preset.law);
    }

    #[test]
    fn density_alias_and_exact_names_both_parse() {
        for name in ["density", "density_scan"] {
            let cli = parse(&[name.into(), "--trials".into(), "1".into()]);
            let (kind, _) = cli.cmd.run_args().unwrap();
            assert_eq!(kind, ExperimentKind::DensityScan);
        }
    }

    #[test]
    fn spec_example_invocations_parse() {
        let cli = parse(&[
            "density".into(),
            "--law".into(),
            "-1:0.3333333333,0:0.3333333334,1:0.3333333333".into(),
            "--t".into(),
            "2500".into(),
            "--width".into(),
            "20000".into(),
            "--trials".into(),
            "50".into(),
            "--seed".into(),
            "7".into(),
        ]);
        let (kind, args) = cli.cmd.run_args().unwrap();
        let config = build_config(kind, args).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.times, vec![2500.0]);
        assert!((config.law.sigma().powi(2) - 2.0 / 3.0).abs() < 1e-9);

        let cli = parse(&[
            "etahat".into(),
            "--interval".into(),
            "0".into(),
            "1".into(),
            "--t".into(),
            "1".into(),
            "--delta".into(),
            "0.02".into(),
            "--trials".into(),
            "2000".into(),
            "--seed".into(),
            "1".into(),
        ]);
        let (kind, args) = cli.cmd.run_args().unwrap();
        let config = build_config(kind, args).unwrap();
        assert_eq!(kind, ExperimentKind::Etahat);
        assert_eq!(config.interval, (0.0, 1.0));
        assert_eq!(config.deltas, vec![0.02]);
    }

    #[test]
    fn unknown_flags_and_bad_laws_are_rejected() {
        assert!(Cli::try_parse_from(["coalweb", "density_scan", "--bogus", "1"]).is_err());
        assert!(Cli::try_parse_from(["coalweb", "density_scan", "--law", "nonsense"]).is_err());
        assert!(Cli::try_parse_from(["coalweb", "oracle"]).is_err(), "oracle requires --law");
        assert!(Cli::try_parse_from(["coalweb", "no_such_kind"]).is_err());
    }
}
