//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Lists are comma
//! separated, intervals are written `lo:hi`. The canonical form lists every
//! key in sorted order with floats in shortest round-trip notation, and its
//! SHA-256 (without `workers` and `output_dir`) identifies the experiment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::measures::PsiEstimator;
use crate::model::{DisorderModel, TorusLattice, VelocityVariant};
use crate::scaling::{CapPolicy, Observable};
use crate::spectral::Interval;

/// Every recognised key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("cap_policy", "drop | clamp: frequencies whose side exceeds side_cap"),
    ("dimension", "lattice dimension d"),
    ("disorder", "single-site density family (uniform)"),
    ("energy_bins", "number of DOS bins"),
    ("energy_max", "upper edge of the DOS grid"),
    ("energy_min", "lower edge of the DOS grid"),
    ("eta", "imaginary part of the spectral parameter"),
    ("fermi_energy", "Fermi energy E_F"),
    ("field_file", "CSV of field amplitudes (nu,re,im)"),
    ("intervals", "energy intervals lo:hi, comma separated"),
    ("loc_length", "localization length fed to the side rule"),
    ("master_seed", "seed of the disorder stream"),
    ("max_distance", "largest distance in decay fits"),
    ("measure_file", "conductivity measure CSV written by `sigma`"),
    ("moment", "fractional moment exponent s in (0, 1)"),
    ("nu", "frequencies, comma separated"),
    ("nu_bins", "number of conductivity-measure bins"),
    ("nu_max", "upper edge of the conductivity-measure grid"),
    ("observable", "psi | sigma_bar: quantity averaged by `mott`"),
    ("output_dir", "directory for CSV/JSON output"),
    ("psi_estimator", "psi_position | psi_velocity"),
    ("realizations", "disorder realizations (per frequency for `mott`)"),
    ("side", "lattice side length L"),
    ("side_cap", "largest side the frequency sweep may use"),
    ("side_factor", "prefactor of the side rule L = factor·ℓ·log(1/ν)"),
    ("spacing_bin", "histogram bin width of unfolded spacings"),
    ("times", "times at which `respond` evaluates currents"),
    ("velocity", "commutator | current"),
    ("width", "disorder width W (uniform on [-W/2, W/2])"),
    ("workers", "worker threads"),
];

/// Keys that do not affect results and are left out of the hash.
const UNHASHED: &[&str] = &["output_dir", "workers"];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub side: Option<usize>,
    pub disorder: String,
    pub width: f64,
    pub master_seed: u64,
    pub fermi_energy: f64,
    pub nu: Vec<f64>,
    pub nu_max: f64,
    pub nu_bins: usize,
    pub energy_min: Option<f64>,
    pub energy_max: Option<f64>,
    pub energy_bins: usize,
    pub realizations: usize,
    pub velocity: VelocityVariant,
    pub psi_estimator: PsiEstimator,
    pub eta: f64,
    pub moment: f64,
    pub max_distance: usize,
    pub intervals: Vec<Interval>,
    pub spacing_bin: f64,
    pub side_factor: f64,
    pub side_cap: usize,
    pub cap_policy: CapPolicy,
    pub loc_length: Option<f64>,
    pub observable: Observable,
    pub measure_file: Option<PathBuf>,
    pub field_file: Option<PathBuf>,
    pub times: Vec<f64>,
    pub workers: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dimension: 1,
            side: None,
            disorder: "uniform".into(),
            width: 4.0,
            master_seed: 0,
            fermi_energy: 0.0,
            nu: Vec::new(),
            nu_max: 1.0,
            nu_bins: 50,
            energy_min: None,
            energy_max: None,
            energy_bins: 100,
            realizations: 100,
            velocity: VelocityVariant::Commutator,
            psi_estimator: PsiEstimator::Position,
            eta: 1e-3,
            moment: 0.2,
            max_distance: 40,
            intervals: Vec::new(),
            spacing_bin: 0.1,
            side_factor: 205.0,
            side_cap: 1024,
            cap_policy: CapPolicy::Drop,
            loc_length: None,
            observable: Observable::Psi,
            measure_file: None,
            field_file: None,
            times: Vec::new(),
            workers: 1,
            output_dir: PathBuf::from("."),
        }
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|_| format!("cannot parse `{t}`")))
        .collect()
}

fn parse_interval(s: &str) -> std::result::Result<Interval, String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("interval `{s}` is not lo:hi"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad interval bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad interval bound `{hi}`"))?;
    Interval::new(lo, hi).map_err(|e| e.to_string())
}

/// Reads `key = value` lines into a map, collecting every malformed line.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut problems = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                let k = k.trim().to_string();
                if map.insert(k.clone(), v.trim().to_string()).is_some() {
                    problems.push(format!("line {}: duplicate key `{k}`", no + 1));
                }
            }
            None => problems.push(format!("line {}: expected `key = value`", no + 1)),
        }
    }
    if problems.is_empty() { Ok(map) } else { Err(Error::Validation(problems)) }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    /// Builds a configuration from raw pairs on top of the defaults. Every
    /// unknown key and unparsable value is reported at once.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut problems = Vec::new();
        for (k, v) in pairs {
            if let Err(why) = cfg.set(k, v) {
                problems.push(format!("{k}: {why}"));
            }
        }
        if problems.is_empty() { Ok(cfg) } else { Err(Error::Validation(problems)) }
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
        }
        fn tag<T: FromStr<Err = Error>>(v: &str) -> std::result::Result<T, String> {
            v.parse::<T>().map_err(|e| e.to_string())
        }
        let none = value.is_empty();
        match key {
            "cap_policy" => self.cap_policy = tag(value)?,
            "dimension" => self.dimension = num(value)?,
            "disorder" => self.disorder = value.to_string(),
            "energy_bins" => self.energy_bins = num(value)?,
            "energy_max" => self.energy_max = if none { None } else { Some(num(value)?) },
            "energy_min" => self.energy_min = if none { None } else { Some(num(value)?) },
            "eta" => self.eta = num(value)?,
            "fermi_energy" => self.fermi_energy = num(value)?,
            "field_file" => self.field_file = (!none).then(|| PathBuf::from(value)),
            "intervals" => {
                self.intervals = value
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(parse_interval)
                    .collect::<std::result::Result<_, _>>()?
            }
            "loc_length" => self.loc_length = if none { None } else { Some(num(value)?) },
            "master_seed" => self.master_seed = num(value)?,
            "max_distance" => self.max_distance = num(value)?,
            "measure_file" => self.measure_file = (!none).then(|| PathBuf::from(value)),
            "moment" => self.moment = num(value)?,
            "nu" => self.nu = parse_list(value)?,
            "nu_bins" => self.nu_bins = num(value)?,
            "nu_max" => self.nu_max = num(value)?,
            "observable" => self.observable = tag(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "psi_estimator" => self.psi_estimator = tag(value)?,
            "realizations" => self.realizations = num(value)?,
            "side" => self.side = if none { None } else { Some(num(value)?) },
            "side_cap" => self.side_cap = num(value)?,
            "side_factor" => self.side_factor = num(value)?,
            "spacing_bin" => self.spacing_bin = num(value)?,
            "times" => self.times = parse_list(value)?,
            "velocity" => self.velocity = tag(value)?,
            "width" => self.width = num(value)?,
            "workers" => self.workers = num(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// `(key, canonical value)` for every key, sorted by key.
    pub fn canonical_pairs(&self) -> Vec<(&'static str, String)> {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let intervals = self
            .intervals
            .iter()
            .map(|iv| format!("{}:{}", fmt_f64(iv.lo), fmt_f64(iv.hi)))
            .collect::<Vec<_>>()
            .join(",");
        let pairs = vec![
            ("cap_policy", self.cap_policy.to_string()),
            ("dimension", self.dimension.to_string()),
            ("disorder", self.disorder.clone()),
            ("energy_bins", self.energy_bins.to_string()),
            ("energy_max", opt(self.energy_max)),
            ("energy_min", opt(self.energy_min)),
            ("eta", fmt_f64(self.eta)),
            ("fermi_energy", fmt_f64(self.fermi_energy)),
            ("field_file", path(&self.field_file)),
            ("intervals", intervals),
            ("loc_length", opt(self.loc_length)),
            ("master_seed", self.master_seed.to_string()),
            ("max_distance", self.max_distance.to_string()),
            ("measure_file", path(&self.measure_file)),
            ("moment", fmt_f64(self.moment)),
            ("nu", fmt_list(&self.nu)),
            ("nu_bins", self.nu_bins.to_string()),
            ("nu_max", fmt_f64(self.nu_max)),
            ("observable", self.observable.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("psi_estimator", self.psi_estimator.to_string()),
            ("realizations", self.realizations.to_string()),
            ("side", self.side.map(|s| s.to_string()).unwrap_or_default()),
            ("side_cap", self.side_cap.to_string()),
            ("side_factor", fmt_f64(self.side_factor)),
            ("spacing_bin", fmt_f64(self.spacing_bin)),
            ("times", fmt_list(&self.times)),
            ("velocity", self.velocity.to_string()),
            ("width", fmt_f64(self.width)),
            ("workers", self.workers.to_string()),
        ];
        debug_assert!(pairs.iter().map(|p| p.0).eq(KEYS.iter().map(|k| k.0)));
        pairs
    }

    /// Canonical `key = value` text, one line per key.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.canonical_pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of the canonical text without `workers` and `output_dir`.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.canonical_pairs() {
            if !UNHASHED.contains(&k) {
                h.update(format!("{k} = {v}\n").as_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn disorder_model(&self) -> Result<DisorderModel> {
        DisorderModel::uniform(self.width, self.master_seed)
    }

    pub fn lattice(&self) -> Result<TorusLattice> {
        let side = self.side.ok_or_else(|| Error::Validation(vec!["side: required".into()]))?;
        TorusLattice::new(self.dimension, side)
    }

    /// `(energy_min, energy_max)`, defaulting to the spectral bound `±(2d + W/2)`.
    pub fn energy_range(&self) -> (f64, f64) {
        let b = 2.0 * self.dimension as f64 + 0.5 * self.width;
        (self.energy_min.unwrap_or(-b), self.energy_max.unwrap_or(b))
    }

    /// Checks everything `command` will read and lists every problem.
    pub fn validate(&self, command: super::Command) -> Result<()> {
        use super::Command::*;
        let mut p = Vec::new();
        let ensemble = command != Respond;
        let mut need = |cond: bool, msg: &str| {
            if !cond {
                p.push(msg.to_string());
            }
        };

        if ensemble {
            need(self.dimension >= 1, "dimension: must be at least 1");
            need(self.disorder == "uniform", "disorder: only `uniform` is supported");
            need(self.width > 0.0 && self.width.is_finite(), "width: must be finite and positive");
            need(self.realizations >= 1, "realizations: must be at least 1");
            need(self.fermi_energy.is_finite(), "fermi_energy: must be finite");
        }
        if ensemble && command != Mott {
            match self.side {
                None => need(false, "side: required"),
                Some(s) => need(s >= 3, "side: must be at least 3"),
            }
        }
        need(self.workers >= 1, "workers: must be at least 1");
        match command {
            Dos => {
                let (lo, hi) = self.energy_range();
                need(lo.is_finite() && hi.is_finite() && lo < hi, "energy_min/energy_max: need energy_min < energy_max");
                need(self.energy_bins >= 1, "energy_bins: must be at least 1");
            }
            Sigma => {
                need(self.nu_max > 0.0 && self.nu_max.is_finite(), "nu_max: must be finite and positive");
                need(self.nu_bins >= 1, "nu_bins: must be at least 1");
            }
            Psi | Chain => {
                need(!self.nu.is_empty(), "nu: at least one frequency required");
                need(self.nu.iter().all(|&n| n > 0.0 && n.is_finite()), "nu: frequencies must be finite and positive");
            }
            Respond => {
                need(self.measure_file.is_some(), "measure_file: required");
                need(self.field_file.is_some(), "field_file: required");
                need(!self.times.is_empty() || !self.nu.is_empty(), "times/nu: nothing to evaluate");
                need(self.times.iter().all(|t| t.is_finite()), "times: must be finite");
                need(self.nu.is_empty() || self.eta > 0.0, "eta: must be positive for the regularized conductivity");
            }
            Wegner | Minami => {
                need(!self.intervals.is_empty(), "intervals: at least one interval required");
            }
            Green => {
                need(self.moment > 0.0 && self.moment < 1.0, "moment: must lie in (0, 1)");
                need(self.eta != 0.0 && self.eta.is_finite(), "eta: must be finite and nonzero");
                need(self.max_distance >= 3, "max_distance: must be at least 3");
            }
            FermiDecay => need(self.max_distance >= 3, "max_distance: must be at least 3"),
            Spacings => {
                need(self.intervals.len() == 1, "intervals: exactly one interval required");
                need(self.spacing_bin > 0.0, "spacing_bin: must be positive");
            }
            Mott => {
                need(!self.nu.is_empty(), "nu: at least one frequency required");
                need(self.nu.iter().all(|&n| n > 0.0 && n < 1.0), "nu: frequencies must lie in (0, 1)");
                match self.loc_length {
                    None => need(false, "loc_length: required"),
                    Some(l) => need(l > 0.0 && l.is_finite(), "loc_length: must be finite and positive"),
                }
                need(self.side_factor > 0.0 && self.side_factor.is_finite(), "side_factor: must be finite and positive");
                need(self.side_cap >= 3, "side_cap: must be at least 3");
            }
        }
        if p.is_empty() { Ok(()) } else { Err(Error::Validation(p)) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Command;

    #[test]
    fn canonical_round_trip() {
        let cfg = ExperimentConfig::parse(
            "side = 16\n# comment\nnu = 0.1, 0.2\nintervals = -0.1:0.1, 1.4:1.6\nwidth = 4\neta=1e-7\n",
        )
        .unwrap();
        let again = ExperimentConfig::parse(&cfg.canonical_text()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert!(cfg.canonical_text().contains("eta = 1e-7\n"));
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let a = ExperimentConfig::parse("side = 8\nworkers = 1").unwrap();
        let b = ExperimentConfig::parse("side = 8\nworkers = 4\noutput_dir = /tmp/x").unwrap();
        let c = ExperimentConfig::parse("side = 8\nmaster_seed = 1").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn every_problem_listed() {
        let err = ExperimentConfig::parse("sied = 3\nwidth = x\nvelocity = sideways").unwrap_err();
        match err {
            Error::Validation(p) => assert_eq!(p.len(), 3, "{p:?}"),
            e => panic!("{e}"),
        }
        let cfg = ExperimentConfig::parse("realizations = 0\nwidth = -1").unwrap();
        match cfg.validate(Command::Sigma).unwrap_err() {
            Error::Validation(p) => assert_eq!(p.len(), 3, "{p:?}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn duplicate_and_malformed_lines() {
        assert!(parse_pairs("a = 1\na = 2").is_err());
        assert!(parse_pairs("just words").is_err());
    }

    #[test]
    fn keys_table_is_sorted_and_complete() {
        let cfg = ExperimentConfig::default();
        let names: Vec<&str> = cfg.canonical_pairs().iter().map(|p| p.0).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(names, KEYS.iter().map(|k| k.0).collect::<Vec<_>>());
    }
}
