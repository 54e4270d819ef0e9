use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use swing_bsde::harness::{convergence_report, run_experiment_with, ExperimentSpec, OutputFormat, SweepRow};

/// Price swing and American puts with the penalized BSDE scheme or the
/// benchmark methods, sweeping over comma-separated parameter lists.
#[derive(Debug, Parser)]
#[command(name = "swing-bsde", version)]
struct Cli {
    /// bsde, iterative or binomial
    #[arg(long)]
    method: Option<String>,
    /// Jump intensity λ (list)
    #[arg(long)]
    lambda: Option<String>,
    /// Penalty p (list)
    #[arg(long)]
    penalty: Option<String>,
    /// Time steps N (list)
    #[arg(long)]
    steps: Option<String>,
    /// Paths M per replication (list)
    #[arg(long)]
    paths: Option<String>,
    /// Number of exercise rights (list)
    #[arg(long)]
    nmax: Option<String>,
    /// Refraction delay δ in years (list)
    #[arg(long)]
    delay: Option<String>,
    #[arg(long)]
    strike: Option<String>,
    #[arg(long)]
    spot: Option<String>,
    #[arg(long)]
    rate: Option<String>,
    #[arg(long)]
    vol: Option<String>,
    #[arg(long)]
    maturity: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Independent replications per sweep point (one row each)
    #[arg(long)]
    reps: Option<String>,
    /// Flat `key = value` file; command-line flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json
    #[arg(long)]
    format: Option<String>,
    /// Use 2e7 paths per run
    #[arg(long)]
    paper_scale: bool,
    /// Start from a preset grid: american or swing
    #[arg(long)]
    preset: Option<String>,
    /// Print relative errors and trend checks to stderr at the end
    #[arg(long)]
    report: bool,
}

impl Cli {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let fields = [
            ("method", &self.method),
            ("lambda", &self.lambda),
            ("penalty", &self.penalty),
            ("steps", &self.steps),
            ("paths", &self.paths),
            ("nmax", &self.nmax),
            ("delay", &self.delay),
            ("strike", &self.strike),
            ("spot", &self.spot),
            ("rate", &self.rate),
            ("vol", &self.vol),
            ("maturity", &self.maturity),
            ("seed", &self.seed),
            ("reps", &self.reps),
            ("format", &self.format),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }
}

fn build_spec(cli: &Cli) -> Result<ExperimentSpec, String> {
    let mut spec = match cli.preset.as_deref() {
        None => ExperimentSpec::default(),
        Some("american") => ExperimentSpec::american_table(),
        Some("swing") => ExperimentSpec::swing_table(),
        Some(other) => return Err(format!("unknown preset `{other}`")),
    };
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        spec.apply_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    for (key, value) in cli.overrides() {
        spec.apply(key, value).map_err(|e| format!("--{key}: {e}"))?;
    }
    if cli.paper_scale {
        spec.full_scale();
    }
    if let Some(out) = &cli.out {
        spec.out = Some(out.clone());
    }
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn log_row(row: &SweepRow) {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    let mut line = format!(
        "{} lambda={} p={} N={} M={} n_max={} delta={} seed={} price={} se={} ({:.0} ms)",
        row.method,
        fmt(row.lambda),
        fmt(row.p),
        row.n_steps,
        row.n_paths.map_or("-".to_string(), |m| m.to_string()),
        row.n_max,
        row.delta,
        row.seed,
        fmt(row.price),
        fmt(row.stderr),
        row.wall_ms
    );
    if let Some(s) = row.stability {
        if s.unstable {
            line.push_str(&format!(" [warning: lambda p^2 dt = {:.3}]", s.ratio));
        }
        if s.multi_jump {
            line.push_str(&format!(" [warning: lambda dt = {:.3}]", s.jump_probability));
        }
    }
    if let Some(e) = &row.error {
        line.push_str(&format!(" [error: {e}]"));
    }
    eprintln!("{line}");
}

fn run(cli: &Cli) -> Result<(), String> {
    let spec = build_spec(cli)?;
    let report = run_experiment_with(&spec, log_row).map_err(|e| e.to_string())?;
    let write = |w: &mut dyn Write| -> Result<(), String> {
        report.write(spec.format, w).map_err(|e| e.to_string())
    };
    match &spec.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
            write(&mut BufWriter::new(file))?;
        }
        None => write(&mut io::stdout().lock())?,
    }
    if cli.report {
        let c = convergence_report(&report, &[]);
        for e in &c.errors {
            let pt = &c.points[e.point];
            eprintln!(
                "lambda={} p={} N={} delta={}: {:.4} vs {:.4} ({:+.2}%)",
                pt.lambda.unwrap_or_default(),
                pt.p.unwrap_or_default(),
                pt.n_steps,
                pt.delta,
                e.price,
                e.reference,
                e.rel_error_pct
            );
        }
        eprintln!(
            "monotone in lambda: {}, in p: {}",
            c.monotone_in("lambda"),
            c.monotone_in("p")
        );
    }
    if spec.format == OutputFormat::Csv && report.rows.iter().any(|r| r.error.is_some()) {
        eprintln!("some rows failed; see the log above");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
