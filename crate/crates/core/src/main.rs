use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, ValueEnum};

use bafsim::experiment::{self, ExperimentConfig, Settings, Subcommand};
use bafsim::Error;

/// Bursty amplify-and-forward relaying: closed forms and Monte Carlo experiments.
#[derive(Parser, Debug)]
#[command(name = "baf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand, Debug)]
enum Command {
    /// Closed-form capacities, bounds and sub-block counts.
    Analytic(Flags),
    /// Simulated outage probability and sub-block count.
    Outage(Flags),
    /// Empirical epsilon-outage capacity by bisection.
    Capacity(Flags),
    /// Ratio of incremental-relaying capacity to the cut-set bound.
    Ratio(Flags),
    /// Small-threshold ratio Pr(U + VW/(V+W+x) < g)/g^2.
    Lemma1(Flags),
    /// Relay position maximising capacity on a grid.
    Placement(Flags),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Mode {
    Exact,
    Linearized,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Args, Debug)]
struct Flags {
    /// SNR sweep in dB, `start:stop:step` or a single value.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<String>,
    /// Comma-separated target rates in bit/s/Hz.
    #[arg(long)]
    rate: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    /// Number of relays.
    #[arg(long)]
    k: Option<String>,
    /// Comma-separated relay positions in (0, 1) on the source-destination segment.
    #[arg(long)]
    relay_pos: Option<String>,
    /// Path-loss exponent.
    #[arg(long)]
    pathloss: Option<String>,
    #[arg(long)]
    sigma_sd2: Option<String>,
    /// Comma-separated source-relay variances.
    #[arg(long)]
    sigma_sr2: Option<String>,
    /// Comma-separated relay-destination variances.
    #[arg(long)]
    sigma_rd2: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Number of relay positions in the placement grid (odd).
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated decreasing thresholds for `lemma1`.
    #[arg(long)]
    g_seq: Option<String>,
    /// Tie the `lemma1` noise term to the threshold as x = c*g.
    #[arg(long)]
    x_over_g: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    preset: Option<String>,
    /// Flat key=value file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Flags {
    fn settings(&self) -> Result<Settings, Error> {
        let mut s = Settings::default();
        let text = [
            ("snr-db", &self.snr_db),
            ("rate", &self.rate),
            ("epsilon", &self.epsilon),
            ("k", &self.k),
            ("relay-pos", &self.relay_pos),
            ("pathloss", &self.pathloss),
            ("sigma-sd2", &self.sigma_sd2),
            ("sigma-sr2", &self.sigma_sr2),
            ("sigma-rd2", &self.sigma_rd2),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("grid", &self.grid),
            ("g", &self.g_seq),
            ("x-over-g", &self.x_over_g),
        ];
        for (key, value) in text {
            if let Some(v) = value {
                s.set(key, v.as_str())?;
            }
        }
        if let Some(m) = self.mode {
            s.set("mode", if matches!(m, Mode::Exact) { "exact" } else { "linearized" })?;
        }
        if let Some(f) = self.format {
            s.set("format", if matches!(f, Format::Csv) { "csv" } else { "jsonl" })?;
        }
        if let Some(out) = &self.out {
            s.set("out", out.to_string_lossy())?;
        }
        Ok(s)
    }
}

fn read_config(path: &PathBuf) -> Result<Settings, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read config {}: {e}", path.display())))?;
    Settings::parse_file(&text)
}

fn configure(sub: Subcommand, flags: &Flags) -> Result<ExperimentConfig, Error> {
    let file = flags.config.as_ref().map(read_config).transpose()?;
    let preset = flags
        .preset
        .as_deref()
        .or_else(|| file.as_ref().and_then(|f| f.get("preset")))
        .map(Settings::preset)
        .transpose()?;
    let mut settings = Settings::default();
    for layer in [preset, file, Some(flags.settings()?)].into_iter().flatten() {
        settings.merge(&layer);
    }
    ExperimentConfig::from_settings(sub, &settings)
}

fn install_workers() -> Result<(), Error> {
    let Ok(raw) = std::env::var("BAF_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("BAF_WORKERS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {n} workers: {e}")))
}

fn execute(cli: Cli) -> Result<(), Error> {
    install_workers()?;
    let (sub, flags) = match &cli.command {
        Command::Analytic(f) => (Subcommand::Analytic, f),
        Command::Outage(f) => (Subcommand::Outage, f),
        Command::Capacity(f) => (Subcommand::Capacity, f),
        Command::Ratio(f) => (Subcommand::Ratio, f),
        Command::Lemma1(f) => (Subcommand::Lemma1, f),
        Command::Placement(f) => (Subcommand::Placement, f),
    };
    let cfg = configure(sub, flags)?;
    let rows = experiment::run(&cfg)?;
    match &cfg.output_path {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| Error::InvalidParameter(format!("cannot create {}: {e}", path.display())))?;
            experiment::write_rows(&rows, cfg.output_format, file)
        }
        None => experiment::write_rows(&rows, cfg.output_format, io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e}");
            ExitCode::from(experiment::exit_code(&e) as u8)
        }
    }
}
