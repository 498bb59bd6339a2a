//! Experiment driver: configuration, subcommands, and on-disk output.
//!
//! Each subcommand writes `<command>.csv` and `<command>.json` into the
//! output directory, both stamped with the run envelope, plus a
//! `<command>.timing.json` sidecar holding the wall-clock time. Given the
//! same configuration the CSV and JSON files are byte-identical across
//! reruns and worker counts, apart from the `workers` field.

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use crate::diagnostics::{
    self, fermi_projection_decay, fractional_moment_green, level_spacing_stats, trace_chain_check,
    DecayReport, GreenProbe,
};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::measures::{
    cauchy_conductivity, dos_estimate, in_phase_current, out_phase_current, psi_rectangle,
    sigma_bar, sigma_measure_estimate, uniform_edges, BinnedMeasure, FieldProfile, PsiEstimator,
    Rectangle, Symmetry, DEGENERATE_GAP,
};
use crate::model::{position_operator, velocity_operator};
use crate::scaling::{bound_report, mott_sweep, MottConfig};
use crate::spectral::EnergyWindows;
use crate::stats::{summarize, summarize_columns, MeanStderr};

pub use config::ExperimentConfig;
pub use output::{RunEnvelope, Table, SCHEMA_VERSION, TOOL_VERSION};

use output::{cell, opt_cell};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    Dos,
    Sigma,
    Psi,
    Respond,
    Wegner,
    Minami,
    Chain,
    Green,
    FermiDecay,
    Spacings,
    Mott,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Command::Dos,
        Command::Sigma,
        Command::Psi,
        Command::Respond,
        Command::Wegner,
        Command::Minami,
        Command::Chain,
        Command::Green,
        Command::FermiDecay,
        Command::Spacings,
        Command::Mott,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Dos => "dos",
            Command::Sigma => "sigma",
            Command::Psi => "psi",
            Command::Respond => "respond",
            Command::Wegner => "wegner",
            Command::Minami => "minami",
            Command::Chain => "chain",
            Command::Green => "green",
            Command::FermiDecay => "fermi-decay",
            Command::Spacings => "spacings",
            Command::Mott => "mott",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownTag { kind: "subcommand", value: s.to_string() })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a run left on disk.
#[derive(Debug)]
pub struct RunSummary {
    pub command: Command,
    pub config_hash: String,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    /// Set when results were written but the run must still fail
    /// (degenerate pairs, trace-chain violations, empty sweep).
    pub failure: Option<Error>,
}

impl RunSummary {
    pub fn into_result(self) -> Result<()> {
        self.failure.map_or(Ok(()), Err)
    }
}

struct Artifacts<T: Serialize> {
    table: Table,
    result: T,
    seeds: BTreeMap<String, Vec<(u64, u64)>>,
    warnings: Vec<String>,
    failure: Option<Error>,
}

impl<T: Serialize> Artifacts<T> {
    fn new(table: Table, result: T, seeds: Vec<(u64, u64)>) -> Self {
        let mut map = BTreeMap::new();
        if !seeds.is_empty() {
            map.insert("all".to_string(), seeds);
        }
        Artifacts { table, result, seeds: map, warnings: Vec::new(), failure: None }
    }
}

fn envelope(cfg: &ExperimentConfig, command: Command, seeds: BTreeMap<String, Vec<(u64, u64)>>, warnings: Vec<String>) -> RunEnvelope {
    RunEnvelope {
        tool: output::TOOL_NAME,
        tool_version: TOOL_VERSION,
        schema_version: SCHEMA_VERSION,
        command: command.name().to_string(),
        config_hash: cfg.hash(),
        config: cfg
            .canonical_pairs()
            .into_iter()
            .filter(|(k, _)| *k != "workers" && *k != "output_dir")
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        workers: cfg.workers,
        seeds,
        warnings,
    }
}

fn ensemble(cfg: &ExperimentConfig) -> Result<Ensemble> {
    Ok(Ensemble::new(cfg.lattice()?, cfg.disorder_model()?, cfg.realizations)?.with_workers(cfg.workers))
}

fn degenerate_failure(count: usize) -> Option<Error> {
    (count > 0).then_some(Error::DegeneratePairs { count, threshold: DEGENERATE_GAP })
}

/// Validates `cfg` for `command`, runs it and writes the outputs.
///
/// Returns `Err` without writing anything on validation or numerical
/// errors. Degenerate pairs, trace-chain violations and an empty sweep
/// still write the outputs and are reported in [`RunSummary::failure`].
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate(command)?;
    let start = Instant::now();
    match command {
        Command::Dos => finish(command, cfg, start, run_dos(cfg)?),
        Command::Sigma => finish(command, cfg, start, run_sigma(cfg)?),
        Command::Psi => finish(command, cfg, start, run_psi(cfg)?),
        Command::Respond => finish(command, cfg, start, run_respond(cfg)?),
        Command::Wegner => finish(command, cfg, start, run_counts(cfg, false)?),
        Command::Minami => finish(command, cfg, start, run_counts(cfg, true)?),
        Command::Chain => finish(command, cfg, start, run_chain(cfg)?),
        Command::Green => finish(command, cfg, start, run_green(cfg)?),
        Command::FermiDecay => finish(command, cfg, start, run_fermi(cfg)?),
        Command::Spacings => finish(command, cfg, start, run_spacings(cfg)?),
        Command::Mott => finish(command, cfg, start, run_mott(cfg)?),
    }
}

fn finish<T: Serialize>(command: Command, cfg: &ExperimentConfig, start: Instant, art: Artifacts<T>) -> Result<RunSummary> {
    fs::create_dir_all(&cfg.output_dir)?;
    let mut warnings = art.warnings;
    if let Some(e) = &art.failure {
        warnings.push(e.to_string());
    }
    let env = envelope(cfg, command, art.seeds, warnings.clone());
    let (csv_path, json_path, timing_path) = output::output_paths(&cfg.output_dir, command.name());
    output::write_csv(&csv_path, &env, &art.table)?;
    output::write_json(&json_path, &env, &art.result)?;
    output::write_timing(&timing_path, &env, start.elapsed().as_secs_f64())?;
    Ok(RunSummary {
        command,
        config_hash: env.config_hash,
        files: vec![csv_path, json_path, timing_path],
        warnings,
        failure: art.failure,
    })
}

fn measure_table(m: &BinnedMeasure) -> Table {
    let mut t = Table::new(&["bin_lo", "bin_hi", "mass_mean", "mass_stderr", "n"]);
    for k in 0..m.bins() {
        t.push(vec![
            cell(m.edges[k]),
            cell(m.edges[k + 1]),
            cell(m.mass_mean[k]),
            opt_cell(m.mass_stderr.as_ref().map(|s| s[k])),
            m.n_realizations.to_string(),
        ]);
    }
    t
}

fn run_dos(cfg: &ExperimentConfig) -> Result<Artifacts<BinnedMeasure>> {
    let ens = ensemble(cfg)?;
    let (lo, hi) = cfg.energy_range();
    let m = dos_estimate(&ens, &uniform_edges(lo, hi, cfg.energy_bins)?)?;
    Ok(Artifacts::new(measure_table(&m), m, ens.seeds()))
}

#[derive(Serialize)]
struct SigmaResult {
    fermi_energy: f64,
    measure: BinnedMeasure,
    /// `(ν, σ̄(ν))` at every upper bin edge.
    sigma_bar: Vec<(f64, f64)>,
    degenerate_pairs: usize,
}

fn run_sigma(cfg: &ExperimentConfig) -> Result<Artifacts<SigmaResult>> {
    let ens = ensemble(cfg)?;
    let edges = uniform_edges(0.0, cfg.nu_max, cfg.nu_bins)?;
    let est = sigma_measure_estimate(&ens, cfg.fermi_energy, &edges, cfg.velocity)?;
    est.measure.check_axioms()?;
    let bars = edges[1..].iter().map(|&nu| Ok((nu, sigma_bar(&est.measure, nu)?))).collect::<Result<_>>()?;
    let mut art = Artifacts::new(
        measure_table(&est.measure),
        SigmaResult {
            fermi_energy: cfg.fermi_energy,
            measure: est.measure,
            sigma_bar: bars,
            degenerate_pairs: est.degenerate_pairs,
        },
        ens.seeds(),
    );
    art.failure = degenerate_failure(est.degenerate_pairs);
    Ok(art)
}

#[derive(Serialize)]
struct PsiRow {
    nu: f64,
    rectangle: Rectangle,
    estimator: PsiEstimator,
    windows: EnergyWindows,
    value: MeanStderr,
    degenerate_pairs: usize,
}

fn run_psi(cfg: &ExperimentConfig) -> Result<Artifacts<Vec<PsiRow>>> {
    let ens = ensemble(cfg)?;
    let windows: Vec<EnergyWindows> = cfg.nu.iter().map(|&nu| EnergyWindows::new(cfg.fermi_energy, nu)).collect::<Result<_>>()?;
    let rects = [Rectangle::Outer, Rectangle::Inner];
    let per_real = ens.map(|r| {
        let eig = ens.eigensystem(r)?;
        let op = match cfg.psi_estimator {
            PsiEstimator::Position => position_operator(&ens.lattice),
            PsiEstimator::Velocity => velocity_operator(&ens.lattice, &ens.hamiltonian(r)?, cfg.velocity)?,
        };
        let mut out = Vec::new();
        for w in &windows {
            for rect in rects {
                let (plus, minus) = rect.intervals(w);
                out.push(psi_rectangle(&eig, &op, &plus, &minus, cfg.psi_estimator)?);
            }
        }
        Ok(out)
    })?;
    let stats = summarize_columns(&per_real.iter().map(|v| v.iter().map(|p| p.value).collect()).collect::<Vec<_>>());
    let mut table = Table::new(&["nu", "rectangle", "estimator", "value_mean", "value_stderr", "n", "degenerate_pairs"]);
    let mut rows = Vec::new();
    let mut degenerate_total = 0;
    for (k, w) in windows.iter().enumerate() {
        for (j, rect) in rects.into_iter().enumerate() {
            let col = 2 * k + j;
            let degenerate: usize = per_real.iter().map(|v| v[col].degenerate_pairs).sum();
            degenerate_total += degenerate;
            let s = stats[col];
            table.push(vec![
                cell(w.nu),
                match rect {
                    Rectangle::Outer => "outer".into(),
                    Rectangle::Inner => "inner".into(),
                },
                cfg.psi_estimator.to_string(),
                cell(s.mean),
                opt_cell(s.stderr),
                s.n.to_string(),
                degenerate.to_string(),
            ]);
            rows.push(PsiRow { nu: w.nu, rectangle: rect, estimator: cfg.psi_estimator, windows: *w, value: s, degenerate_pairs: degenerate });
        }
    }
    let mut art = Artifacts::new(table, rows, ens.seeds());
    art.failure = degenerate_failure(degenerate_total);
    Ok(art)
}

/// Reads the conductivity measure CSV written by `sigma`.
pub fn read_measure(path: &Path) -> Result<BinnedMeasure> {
    let (header, rows) = output::read_table(path)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidParameter(format!("{}: missing column `{name}`", path.display())))
    };
    let (lo, hi, mass) = (col("bin_lo")?, col("bin_hi")?, col("mass_mean")?);
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::InvalidParameter(format!("{}: bad number `{s}`", path.display())));
    if rows.is_empty() {
        return Err(Error::Empty(format!("{} has no bins", path.display())));
    }
    let mut edges = vec![num(&rows[0][lo])?];
    let mut masses = Vec::new();
    for row in &rows {
        if num(&row[lo])? != *edges.last().unwrap() {
            return Err(Error::InvalidParameter(format!("{}: bins are not contiguous", path.display())));
        }
        edges.push(num(&row[hi])?);
        masses.push(num(&row[mass])?);
    }
    BinnedMeasure::single(edges, masses, Symmetry::Even)
}

/// Reads a field file with columns `nu,re,im`. A grid starting at 0 holds
/// the nonnegative half and is mirrored; otherwise the full symmetric grid
/// is expected.
pub fn read_field(path: &Path) -> Result<FieldProfile> {
    let (header, rows) = output::read_table(path)?;
    if header.len() < 3 {
        return Err(Error::InvalidParameter(format!("{}: expected columns nu,re,im", path.display())));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("{}: bad number `{s}`", path.display())));
    let mut nodes = Vec::new();
    let mut amps = Vec::new();
    for row in &rows {
        nodes.push(num(&row[0])?);
        amps.push(Complex64::new(num(&row[1])?, num(&row[2])?));
    }
    if nodes.first() == Some(&0.0) {
        FieldProfile::from_nonnegative(&nodes, &amps)
    } else {
        FieldProfile::new(nodes, amps)
    }
}

#[derive(Serialize)]
struct RespondResult {
    /// `(t, J_in(t), J_out(t))`.
    currents: Vec<(f64, f64, f64)>,
    eta: f64,
    /// `(ν, Re σ(η, ν), Im σ(η, ν))`.
    regularized: Vec<(f64, f64, f64)>,
}

fn run_respond(cfg: &ExperimentConfig) -> Result<Artifacts<RespondResult>> {
    let measure = read_measure(cfg.measure_file.as_deref().unwrap())?;
    let field = read_field(cfg.field_file.as_deref().unwrap())?;
    let mut table = Table::new(&["t", "in_phase", "out_phase"]);
    let mut currents = Vec::new();
    for &t in &cfg.times {
        let a = in_phase_current(&measure, &field, t)?;
        let b = out_phase_current(&measure, &field, t)?;
        table.push(vec![cell(t), cell(a), cell(b)]);
        currents.push((t, a, b));
    }
    let regularized = cfg
        .nu
        .iter()
        .map(|&nu| {
            let s = cauchy_conductivity(&measure, cfg.eta, nu)?;
            Ok((nu, s.re, s.im))
        })
        .collect::<Result<_>>()?;
    Ok(Artifacts::new(table, RespondResult { currents, eta: cfg.eta, regularized }, Vec::new()))
}

fn run_counts(cfg: &ExperimentConfig, minami: bool) -> Result<Artifacts<Vec<diagnostics::BoundCheckReport>>> {
    let ens = ensemble(cfg)?;
    let counts = diagnostics::eigenvalue_counts(&ens, &cfg.intervals)?;
    let (rho, n) = (ens.disorder.rho_sup(), ens.lattice.sites());
    let reports = if minami {
        diagnostics::minami_reports(&counts, &cfg.intervals, rho, n)
    } else {
        diagnostics::wegner_reports(&counts, &cfg.intervals, rho, n)
    };
    let mut table = Table::new(&["lo", "hi", "lhs_mean", "lhs_stderr", "rhs", "margin", "pass", "n"]);
    let mut warnings = Vec::new();
    for r in &reports {
        table.push(vec![
            cell(r.interval.lo),
            cell(r.interval.hi),
            cell(r.lhs_mean),
            opt_cell(r.lhs_stderr),
            cell(r.rhs),
            cell(r.margin),
            r.pass.to_string(),
            r.n_realizations.to_string(),
        ]);
        if !r.pass {
            warnings.push(format!("bound exceeded beyond 3σ on ({}, {}]", r.interval.lo, r.interval.hi));
        }
    }
    let mut art = Artifacts::new(table, reports, ens.seeds());
    art.warnings = warnings;
    Ok(art)
}

fn run_chain(cfg: &ExperimentConfig) -> Result<Artifacts<Vec<diagnostics::ChainReport>>> {
    let ens = ensemble(cfg)?;
    let windows: Vec<EnergyWindows> = cfg.nu.iter().map(|&nu| EnergyWindows::new(cfg.fermi_energy, nu)).collect::<Result<_>>()?;
    let reports = trace_chain_check(&ens, &windows)?;
    let mut table = Table::new(&[
        "nu", "violations", "worst_margin", "per_volume_mean", "per_volume_stderr", "finite_volume_bound", "end_to_end_pass", "n",
    ]);
    let mut violations = 0;
    for r in &reports {
        violations += r.violations;
        table.push(vec![
            cell(r.windows.nu),
            r.violations.to_string(),
            opt_cell(r.worst_margin),
            cell(r.per_volume.mean),
            opt_cell(r.per_volume.stderr),
            cell(r.finite_volume_bound),
            r.end_to_end_pass.to_string(),
            r.n_realizations.to_string(),
        ]);
    }
    let mut art = Artifacts::new(table, reports, ens.seeds());
    if violations > 0 {
        art.failure = Some(Error::BoundViolation(format!("{violations} per-realization trace-chain violation(s)")));
    }
    Ok(art)
}

fn decay_artifacts(report: DecayReport, seeds: Vec<(u64, u64)>) -> Artifacts<DecayReport> {
    let mut table = Table::new(&["distance", "mean", "stderr", "n"]);
    for (d, m) in &report.curve {
        table.push(vec![d.to_string(), cell(m.mean), opt_cell(m.stderr), m.n.to_string()]);
    }
    let mut warnings = report.warnings.clone();
    if report.fit.is_none() {
        warnings.push("no decay fit (too few positive points)".into());
    }
    let mut art = Artifacts::new(table, report, seeds);
    art.warnings = warnings;
    art
}

fn run_green(cfg: &ExperimentConfig) -> Result<Artifacts<DecayReport>> {
    let ens = ensemble(cfg)?;
    let probe = GreenProbe { energy: cfg.fermi_energy, eta: cfg.eta, s: cfg.moment, max_distance: cfg.max_distance };
    Ok(decay_artifacts(fractional_moment_green(&ens, &probe)?, ens.seeds()))
}

fn run_fermi(cfg: &ExperimentConfig) -> Result<Artifacts<DecayReport>> {
    let ens = ensemble(cfg)?;
    Ok(decay_artifacts(fermi_projection_decay(&ens, cfg.fermi_energy, cfg.max_distance)?, ens.seeds()))
}

fn run_spacings(cfg: &ExperimentConfig) -> Result<Artifacts<diagnostics::SpacingReport>> {
    let ens = ensemble(cfg)?;
    let rep = level_spacing_stats(&ens, &cfg.intervals[0], cfg.spacing_bin)?;
    let mut table = Table::new(&["bin_lo", "bin_hi", "mass"]);
    for (k, m) in rep.histogram_mass.iter().enumerate() {
        table.push(vec![cell(rep.histogram_edges[k]), cell(rep.histogram_edges[k + 1]), cell(*m)]);
    }
    let warnings = rep.warnings.clone();
    let mut art = Artifacts::new(table, rep, ens.seeds());
    art.warnings = warnings;
    Ok(art)
}

#[derive(Serialize)]
struct MottSummary {
    sweep: crate::scaling::MottResult,
    report: crate::scaling::BoundReport,
}

fn run_mott(cfg: &ExperimentConfig) -> Result<Artifacts<MottSummary>> {
    let ell = cfg.loc_length.unwrap();
    let mc = MottConfig {
        dim: cfg.dimension,
        disorder: cfg.disorder_model()?,
        fermi: cfg.fermi_energy,
        nu_grid: cfg.nu.clone(),
        realizations: cfg.realizations,
        ell,
        side_factor: cfg.side_factor,
        side_cap: cfg.side_cap,
        cap_policy: cfg.cap_policy,
        observable: cfg.observable,
        estimator: cfg.psi_estimator,
        variant: cfg.velocity,
        workers: cfg.workers,
    };
    let mut sweep = mott_sweep(&mc)?;
    let report = bound_report(&sweep, cfg.dimension, mc.disorder.rho_sup(), ell);
    let mut table = Table::new(&["nu", "L", "n_real", "y_mean", "y_stderr", "ratio_205", "ratio_36"]);
    let mut seeds = BTreeMap::new();
    let mut degenerate = 0;
    for row in &mut sweep.rows {
        table.push(vec![
            cell(row.nu),
            row.side.to_string(),
            row.n_real.to_string(),
            cell(row.y_mean),
            opt_cell(row.y_stderr),
            cell(row.ratio_205),
            cell(row.ratio_36),
        ]);
        degenerate += row.degenerate_pairs;
        seeds.insert(format!("nu={}", cell(row.nu)), std::mem::take(&mut row.seeds));
    }
    let failure = if sweep.rows.is_empty() {
        Some(Error::Empty("every frequency exceeded the side cap".into()))
    } else {
        degenerate_failure(degenerate)
    };
    let warnings = sweep.warnings.clone();
    Ok(Artifacts { table, result: MottSummary { sweep, report }, seeds, warnings, failure })
}

/// One realization's contribution to an aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct Partial {
    pub config_hash: String,
    pub index: u64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub config_hash: String,
    pub indices: Vec<u64>,
    pub values: Vec<MeanStderr>,
}

/// Reduces partial results in ascending realization index, whatever order
/// they arrive in. Refuses partials from different configurations.
pub fn merge(partials: &[Partial]) -> Result<Aggregate> {
    let first = partials.first().ok_or_else(|| Error::Empty("no partials to merge".into()))?;
    if let Some(p) = partials.iter().find(|p| p.config_hash != first.config_hash) {
        return Err(Error::MixedConfig(first.config_hash.clone(), p.config_hash.clone()));
    }
    if let Some(p) = partials.iter().find(|p| p.values.len() != first.values.len()) {
        return Err(Error::DimensionMismatch { expected: first.values.len(), found: p.values.len() });
    }
    let mut sorted: Vec<&Partial> = partials.iter().collect();
    sorted.sort_by_key(|p| p.index);
    if sorted.windows(2).any(|w| w[0].index == w[1].index) {
        return Err(Error::InvalidParameter("duplicate realization index among partials".into()));
    }
    let values = (0..first.values.len())
        .map(|k| summarize(&sorted.iter().map(|p| p.values[k]).collect::<Vec<_>>()))
        .collect();
    Ok(Aggregate { config_hash: first.config_hash.clone(), indices: sorted.iter().map(|p| p.index).collect(), values })
}
