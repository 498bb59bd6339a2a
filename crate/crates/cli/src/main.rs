use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anderson_kubo::harness::config::{parse_pairs, ExperimentConfig, KEYS};
use anderson_kubo::harness::{run, Command};
use anderson_kubo::Error;
use clap::Parser;

/// Finite-volume ac-conductivity experiments for the Anderson model.
///
/// Settings come from an optional `key = value` file, overridden by flags.
/// Run `anderson-kubo keys` for the list of keys.
#[derive(Parser, Debug)]
#[command(name = "anderson-kubo", version)]
struct Cli {
    /// dos, sigma, psi, respond, wegner, minami, chain, green, fermi-decay,
    /// spacings, mott, or `keys`
    command: String,

    /// Configuration file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,

    /// Extra `key=value` override; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Print the canonical configuration and its hash, then exit.
    #[arg(long)]
    dry_run: bool,

    #[arg(long, allow_negative_numbers = true)]
    cap_policy: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    dimension: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    disorder: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    energy_bins: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    energy_max: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    energy_min: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    fermi_energy: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    field_file: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    intervals: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    loc_length: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    master_seed: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    max_distance: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    measure_file: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    moment: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    nu: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    nu_bins: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    nu_max: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    observable: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    output_dir: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    psi_estimator: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    realizations: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    side: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    side_cap: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    side_factor: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    spacing_bin: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    times: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    velocity: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    width: Option<String>,
    /// Worker threads (default from ANDERSON_KUBO_WORKERS, else 1).
    #[arg(long, env = "ANDERSON_KUBO_WORKERS")]
    workers: Option<String>,
}

impl Cli {
    fn flag_pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("cap_policy", &self.cap_policy),
            ("dimension", &self.dimension),
            ("disorder", &self.disorder),
            ("energy_bins", &self.energy_bins),
            ("energy_max", &self.energy_max),
            ("energy_min", &self.energy_min),
            ("eta", &self.eta),
            ("fermi_energy", &self.fermi_energy),
            ("field_file", &self.field_file),
            ("intervals", &self.intervals),
            ("loc_length", &self.loc_length),
            ("master_seed", &self.master_seed),
            ("max_distance", &self.max_distance),
            ("measure_file", &self.measure_file),
            ("moment", &self.moment),
            ("nu", &self.nu),
            ("nu_bins", &self.nu_bins),
            ("nu_max", &self.nu_max),
            ("observable", &self.observable),
            ("output_dir", &self.output_dir),
            ("psi_estimator", &self.psi_estimator),
            ("realizations", &self.realizations),
            ("side", &self.side),
            ("side_cap", &self.side_cap),
            ("side_factor", &self.side_factor),
            ("spacing_bin", &self.spacing_bin),
            ("times", &self.times),
            ("velocity", &self.velocity),
            ("width", &self.width),
            ("workers", &self.workers),
        ]
    }

    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut pairs: BTreeMap<String, String> = match &self.config {
            Some(path) => parse_pairs(&std::fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        for (k, v) in self.flag_pairs() {
            if let Some(v) = v {
                pairs.insert(k.to_string(), v.clone());
            }
        }
        let mut problems = Vec::new();
        for s in &self.set {
            match s.split_once('=') {
                Some((k, v)) => {
                    pairs.insert(k.trim().to_string(), v.trim().to_string());
                }
                None => problems.push(format!("--set `{s}`: expected KEY=VALUE")),
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        ExperimentConfig::from_pairs(&pairs)
    }
}

fn execute(cli: &Cli) -> Result<(), Error> {
    if cli.command == "keys" {
        for (k, doc) in KEYS {
            println!("{k:<14} {doc}");
        }
        return Ok(());
    }
    let command: Command = cli.command.parse()?;
    let cfg = cli.config()?;
    if cli.dry_run {
        cfg.validate(command)?;
        print!("{}", cfg.canonical_text());
        println!("# config_hash = {}", cfg.hash());
        return Ok(());
    }
    let summary = run(command, &cfg)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    for f in &summary.files {
        println!("{}", f.display());
    }
    summary.into_result()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
