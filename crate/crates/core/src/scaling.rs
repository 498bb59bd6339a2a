//! Frequency sweeps with the volume tied to the frequency, and the Mott
//! exponent fit `y ≈ c ν² (log 1/ν)^γ`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::measures::{
    conductivity_measure, psi_estimate, sigma_bar, PsiEstimator, Rectangle,
};
use crate::model::{velocity_operator, DisorderModel, TorusLattice, VelocityVariant};
use crate::spectral::EnergyWindows;
use crate::stats::{line_fit, summarize};

/// Reference constants `C` reported against the observed ratios.
pub const REFERENCE_CONSTANTS: [f64; 2] = [205.0, 36.0];

/// `max(3, ⌈factor · ℓ · log(1/ν)⌉)`.
pub fn choose_side(nu: f64, ell: f64, factor: f64) -> Result<usize> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::InvalidParameter(format!("side rule needs 0 < ν < 1, got {nu}")));
    }
    if !(ell > 0.0 && ell.is_finite()) || !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidParameter("side rule needs finite positive ℓ and factor".into()));
    }
    let x = factor * ell * (1.0 / nu).ln();
    // absorb rounding in products like 205·1·ln(e)
    let side = (x - 1e-9 * x.abs()).ceil();
    if side > usize::MAX as f64 / 2.0 {
        return Err(Error::InvalidParameter(format!("side {side} is not representable")));
    }
    Ok((side as usize).max(3))
}

/// `C^{d+2} π² ‖ρ‖_∞² ℓ^{d+2}`.
pub fn paper_constant(c: f64, dim: usize, rho_sup: f64, ell: f64) -> f64 {
    let p = dim as i32 + 2;
    c.powi(p) * PI * PI * rho_sup * rho_sup * ell.powi(p)
}

/// `y / (ν² (log 1/ν)^{d+2})`.
pub fn bound_ratio(y: f64, nu: f64, dim: usize) -> f64 {
    y / (nu * nu * (1.0 / nu).ln().powi(dim as i32 + 2))
}

/// Weighted fit of `log(y/ν²) = log c + γ log log(1/ν)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub nu: Vec<f64>,
    pub y: Vec<f64>,
    pub y_stderr: Vec<Option<f64>>,
    pub log_c: f64,
    pub log_c_stderr: f64,
    pub gamma: f64,
    pub gamma_stderr: f64,
    /// Observed minus fitted `log(y/ν²)` at each point used.
    pub residuals: Vec<f64>,
    pub weighted: bool,
    pub points_used: usize,
    pub warnings: Vec<String>,
}

/// Fits `y = c ν² (log 1/ν)^γ`. Points with `ν ≥ 1` or `y ≤ 0` are left
/// out. The fit is weighted by `(y/stderr)²` (the inverse variance of
/// `log y`) when every used point has a positive standard error.
pub fn fit_scaling(nu: &[f64], y: &[f64], y_stderr: &[Option<f64>]) -> Result<ScalingFit> {
    if nu.len() != y.len() || nu.len() != y_stderr.len() {
        return Err(Error::InvalidParameter("ν, y and stderr columns differ in length".into()));
    }
    let mut warnings = Vec::new();
    let used: Vec<usize> = (0..nu.len()).filter(|&i| nu[i] > 0.0 && nu[i] < 1.0 && y[i] > 0.0).collect();
    if used.len() < nu.len() {
        warnings.push(format!("{} point(s) with ν ∉ (0, 1) or y ≤ 0 left out of the fit", nu.len() - used.len()));
    }
    if used.len() < 3 {
        return Err(Error::Empty(format!("scaling fit needs at least 3 usable points, have {}", used.len())));
    }
    let xs: Vec<f64> = used.iter().map(|&i| (1.0 / nu[i]).ln().ln()).collect();
    let ys: Vec<f64> = used.iter().map(|&i| (y[i] / (nu[i] * nu[i])).ln()).collect();
    let weights: Option<Vec<f64>> = used
        .iter()
        .map(|&i| y_stderr[i].filter(|&s| s > 0.0).map(|s| (y[i] / s).powi(2)))
        .collect();

    let logs: Vec<f64> = used.iter().map(|&i| (1.0 / nu[i]).ln()).collect();
    let (lo, hi) = logs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &l| (a.min(l), b.max(l)));
    if hi < 2.0 * lo {
        warnings.push(format!("log(1/ν) spans only [{lo:.3}, {hi:.3}] (less than a factor 2); γ is weakly identified"));
    }

    let fit = line_fit(&xs, &ys, weights.as_deref())
        .ok_or_else(|| Error::Empty("scaling fit is degenerate (all ν equal)".into()))?;
    let residuals = xs.iter().zip(&ys).map(|(x, y)| y - (fit.intercept + fit.slope * x)).collect();
    Ok(ScalingFit {
        nu: used.iter().map(|&i| nu[i]).collect(),
        y: used.iter().map(|&i| y[i]).collect(),
        y_stderr: used.iter().map(|&i| y_stderr[i]).collect(),
        log_c: fit.intercept,
        log_c_stderr: fit.intercept_stderr,
        gamma: fit.slope,
        gamma_stderr: fit.slope_stderr,
        residuals,
        weighted: weights.is_some(),
        points_used: used.len(),
        warnings,
    })
}

/// Quantity averaged at each frequency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `Ψ(I_+ × I_-)`.
    #[default]
    Psi,
    /// `σ̄(ν) = Σ((0, ν])/ν`.
    SigmaBar,
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psi" => Ok(Observable::Psi),
            "sigma_bar" => Ok(Observable::SigmaBar),
            other => Err(Error::UnknownTag { kind: "observable", value: other.to_string() }),
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Observable::Psi => "psi",
            Observable::SigmaBar => "sigma_bar",
        })
    }
}

/// What to do with a frequency whose side length exceeds the cap.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapPolicy {
    /// Leave the frequency out, with a warning.
    #[default]
    Drop,
    /// Run it at the cap, with a warning and the row flagged.
    Clamp,
}

impl FromStr for CapPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop" => Ok(CapPolicy::Drop),
            "clamp" => Ok(CapPolicy::Clamp),
            other => Err(Error::UnknownTag { kind: "cap policy", value: other.to_string() }),
        }
    }
}

impl fmt::Display for CapPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CapPolicy::Drop => "drop",
            CapPolicy::Clamp => "clamp",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MottConfig {
    pub dim: usize,
    pub disorder: DisorderModel,
    pub fermi: f64,
    pub nu_grid: Vec<f64>,
    pub realizations: usize,
    pub ell: f64,
    pub side_factor: f64,
    pub side_cap: usize,
    pub cap_policy: CapPolicy,
    pub observable: Observable,
    pub estimator: PsiEstimator,
    pub variant: VelocityVariant,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MottRow {
    pub nu: f64,
    pub side: usize,
    /// Side length the rule asked for before any cap.
    pub requested_side: usize,
    pub clamped: bool,
    pub n_real: usize,
    pub y_mean: f64,
    pub y_stderr: Option<f64>,
    pub ratio: f64,
    pub ratio_205: f64,
    pub ratio_36: f64,
    pub degenerate_pairs: usize,
    /// `(index, seed)` of every realization used at this frequency.
    pub seeds: Vec<(u64, u64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MottResult {
    pub rows: Vec<MottRow>,
    pub fit: Option<ScalingFit>,
    pub constants: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Master seed for the frequency `ν`: independent of where `ν` sits in the grid.
pub fn frequency_seed(master_seed: u64, nu: f64) -> u64 {
    crate::model::derive_seed(master_seed ^ nu.to_bits(), 0)
}

/// One frequency of the sweep at side `side`.
pub fn mott_point(cfg: &MottConfig, nu: f64, side: usize) -> Result<(f64, Option<f64>, usize, Vec<(u64, u64)>)> {
    let lattice = TorusLattice::new(cfg.dim, side)?;
    let disorder = DisorderModel { master_seed: frequency_seed(cfg.disorder.master_seed, nu), ..cfg.disorder };
    let ens = Ensemble::new(lattice, disorder, cfg.realizations)?.with_workers(cfg.workers);
    let windows = EnergyWindows::new(cfg.fermi, nu)?;
    match cfg.observable {
        Observable::Psi => {
            let stat = psi_estimate(&ens, &windows, Rectangle::Outer, cfg.estimator, cfg.variant)?;
            Ok((stat.value_mean, stat.value_stderr, stat.degenerate_pairs, ens.seeds()))
        }
        Observable::SigmaBar => {
            let edges = [0.0, nu];
            let samples = ens.map(|r| {
                let h = ens.hamiltonian(r)?;
                let eig = ens.eigensystem(r)?;
                let v = velocity_operator(&ens.lattice, &h, cfg.variant)?;
                let s = conductivity_measure(&eig, &v, cfg.fermi, &edges)?;
                Ok((sigma_bar(&s.measure, nu)?, s.degenerate_pairs))
            })?;
            let stats = summarize(&samples.iter().map(|s| s.0).collect::<Vec<_>>());
            Ok((stats.mean, stats.stderr, samples.iter().map(|s| s.1).sum(), ens.seeds()))
        }
    }
}

/// Runs the sweep. Rows come out in grid order; each frequency draws its
/// own disorder stream, so reordering the grid only reorders the rows.
pub fn mott_sweep(cfg: &MottConfig) -> Result<MottResult> {
    if cfg.nu_grid.is_empty() {
        return Err(Error::InvalidParameter("empty ν grid".into()));
    }
    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    let rho = cfg.disorder.rho_sup();
    let constants: Vec<(f64, f64)> =
        REFERENCE_CONSTANTS.iter().map(|&c| (c, paper_constant(c, cfg.dim, rho, cfg.ell))).collect();
    for &nu in &cfg.nu_grid {
        let requested = choose_side(nu, cfg.ell, cfg.side_factor)?;
        let (side, clamped) = if requested <= cfg.side_cap {
            (requested, false)
        } else {
            match cfg.cap_policy {
                CapPolicy::Drop => {
                    warnings.push(format!("ν = {nu}: side {requested} exceeds cap {}; dropped", cfg.side_cap));
                    continue;
                }
                CapPolicy::Clamp => {
                    warnings.push(format!("ν = {nu}: side {requested} exceeds cap {}; clamped", cfg.side_cap));
                    (cfg.side_cap, true)
                }
            }
        };
        let (y_mean, y_stderr, degenerate_pairs, seeds) = mott_point(cfg, nu, side)?;
        let ratio = bound_ratio(y_mean, nu, cfg.dim);
        rows.push(MottRow {
            nu,
            side,
            requested_side: requested,
            clamped,
            n_real: cfg.realizations,
            y_mean,
            y_stderr,
            ratio,
            ratio_205: ratio / constants[0].1,
            ratio_36: ratio / constants[1].1,
            degenerate_pairs,
            seeds,
        });
    }
    if rows.is_empty() {
        warnings.push("every frequency was dropped; the table is empty".into());
    }
    let fit = if rows.len() >= 3 {
        let nu: Vec<f64> = rows.iter().map(|r| r.nu).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.y_mean).collect();
        let se: Vec<Option<f64>> = rows.iter().map(|r| r.y_stderr).collect();
        match fit_scaling(&nu, &y, &se) {
            Ok(f) => {
                warnings.extend(f.warnings.iter().cloned());
                Some(f)
            }
            Err(e) => {
                warnings.push(format!("no exponent fit: {e}"));
                None
            }
        }
    } else {
        if !rows.is_empty() {
            warnings.push(format!("only {} frequencies; no exponent fit", rows.len()));
        }
        None
    };
    Ok(MottResult { rows, fit, constants, warnings })
}

/// Observed ratios against the reference constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub dim: usize,
    pub ell: f64,
    pub rho_sup: f64,
    /// `(C, C^{d+2} π² ‖ρ‖_∞² ℓ^{d+2}, all ratios below)`.
    pub lines: Vec<(f64, f64, bool)>,
    pub ratios: Vec<(f64, f64)>,
    /// `(γ̂, σ_γ)` next to the exponents `d+1` and `d+2`.
    pub gamma: Option<(f64, f64)>,
    pub reference_exponents: (usize, usize),
}

pub fn bound_report(result: &MottResult, dim: usize, rho_sup: f64, ell: f64) -> BoundReport {
    let ratios: Vec<(f64, f64)> = result.rows.iter().map(|r| (r.nu, r.ratio)).collect();
    let lines = REFERENCE_CONSTANTS
        .iter()
        .map(|&c| {
            let k = paper_constant(c, dim, rho_sup, ell);
            (c, k, ratios.iter().all(|&(_, r)| r <= k))
        })
        .collect();
    BoundReport {
        dim,
        ell,
        rho_sup,
        lines,
        ratios,
        gamma: result.fit.as_ref().map(|f| (f.gamma, f.gamma_stderr)),
        reference_exponents: (dim + 1, dim + 2),
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.gamma {
            Some((g, s)) => writeln!(
                f,
                "gamma = {g:.4} ± {s:.4}  (d+1 = {}, d+2 = {})",
                self.reference_exponents.0, self.reference_exponents.1
            )?,
            None => writeln!(f, "gamma: no fit")?,
        }
        for (c, k, below) in &self.lines {
            writeln!(f, "C = {c}: bound {k:.6e}, all ratios below: {below}")?;
        }
        for (nu, r) in &self.ratios {
            writeln!(f, "nu = {nu}: r = {r:.6e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn side_rule() {
        assert_eq!(choose_side((-1.0f64).exp(), 1.0, 205.0).unwrap(), 205);
        assert_eq!(choose_side((-2.0f64).exp(), 0.5, 20.0).unwrap(), 20);
        assert_eq!(choose_side(0.999999, 1.0, 205.0).unwrap(), 3);
        assert!(choose_side(1.0, 1.0, 205.0).is_err());
        assert!(choose_side(0.5, 0.0, 205.0).is_err());
    }

    #[test]
    fn reference_constant() {
        let k = paper_constant(205.0, 1, 0.1, 1.0);
        assert!((k - 205f64.powi(3) * PI * PI * 0.01).abs() < 1e-6);
        assert!((k / 8.504e5 - 1.0).abs() < 1e-3);
    }

    fn grid() -> Vec<f64> {
        (0..10).map(|k| 10f64.powf(-3.0 + 2.0 * k as f64 / 9.0)).collect()
    }

    #[test]
    fn synthetic_round_trip() {
        for &(c, g) in &[(1.0, 0.0), (1.0, 2.0), (0.5, 3.0), (2.5, 1.7)] {
            let nu = grid();
            let y: Vec<f64> = nu.iter().map(|&n| c * n * n * (1.0 / n as f64).ln().powf(g)).collect();
            let fit = fit_scaling(&nu, &y, &vec![None; nu.len()]).unwrap();
            assert!((fit.gamma - g).abs() < 1e-9);
            assert!((fit.log_c - f64::ln(c)).abs() < 1e-9);
            assert!(!fit.weighted);
        }
    }

    #[test]
    fn narrow_range_warns() {
        let nu = [0.1, 0.12, 0.15];
        let y: Vec<f64> = nu.iter().map(|n| n * n).collect();
        let fit = fit_scaling(&nu, &y, &[None; 3]).unwrap();
        assert!(fit.warnings.iter().any(|w| w.contains("weakly identified")));
    }

    #[test]
    fn nonpositive_points_excluded() {
        let nu = grid();
        let mut y: Vec<f64> = nu.iter().map(|n| n * n).collect();
        y[4] = 0.0;
        let fit = fit_scaling(&nu, &y, &vec![Some(1e-9); nu.len()]).unwrap();
        assert_eq!(fit.points_used, 9);
        assert!(fit.weighted);
    }

    fn config(grid: Vec<f64>) -> MottConfig {
        MottConfig {
            dim: 1,
            disorder: DisorderModel::uniform(10.0, 5).unwrap(),
            fermi: 0.0,
            nu_grid: grid,
            realizations: 4,
            ell: 0.5,
            side_factor: 20.0,
            side_cap: 64,
            cap_policy: CapPolicy::Drop,
            observable: Observable::Psi,
            estimator: PsiEstimator::Position,
            variant: VelocityVariant::Commutator,
            workers: 1,
        }
    }

    #[test]
    fn grid_order_does_not_matter() {
        let a = mott_sweep(&config(vec![0.1, 0.2, 0.3])).unwrap();
        let b = mott_sweep(&config(vec![0.3, 0.1, 0.2])).unwrap();
        for row in &a.rows {
            let twin = b.rows.iter().find(|r| r.nu == row.nu).unwrap();
            assert_eq!(row, twin);
        }
    }

    #[test]
    fn cap_drops_or_clamps() {
        let mut cfg = config(vec![0.01, 0.3]);
        cfg.side_cap = 30;
        let dropped = mott_sweep(&cfg).unwrap();
        assert_eq!(dropped.rows.len(), 1);
        assert!(dropped.warnings.iter().any(|w| w.contains("dropped")));
        cfg.cap_policy = CapPolicy::Clamp;
        let clamped = mott_sweep(&cfg).unwrap();
        assert_eq!(clamped.rows.len(), 2);
        assert!(clamped.rows[0].clamped && clamped.rows[0].side == 30);
        cfg.side_cap = 3;
        cfg.cap_policy = CapPolicy::Drop;
        let empty = mott_sweep(&cfg).unwrap();
        assert!(empty.rows.is_empty() && empty.fit.is_none());
    }

    #[test]
    fn zero_ratios_sit_below() {
        let result = MottResult {
            rows: vec![],
            fit: None,
            constants: vec![],
            warnings: vec![],
        };
        let rep = bound_report(&result, 1, 0.1, 1.0);
        assert!(rep.lines.iter().all(|l| l.2));
    }
}
