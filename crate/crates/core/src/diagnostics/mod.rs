//! Empirical checks of the spectral estimates behind the conductivity
//! bounds: Wegner and Minami bounds on eigenvalue counts, the per-realization
//! trace chain `tr{P_- X P_+ X P_-} ≤ (L²/4) tr P_+ tr P_-`, exponential decay
//! of fractional Green's-function moments and of the Fermi projection, and
//! nearest-neighbour level spacing statistics.

mod resolvent;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::model::position_operator;
use crate::spectral::{EigenSystem, EnergyWindows, Interval};
use crate::stats::{line_fit, summarize, MeanStderr};

pub use resolvent::resolvent_column;

/// Statistical comparison of a disorder mean against a closed-form bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub interval: Interval,
    pub lhs_mean: f64,
    pub lhs_stderr: Option<f64>,
    pub rhs: f64,
    /// `(rhs - lhs_mean) / rhs`.
    pub margin: f64,
    /// `lhs_mean - 3·stderr ≤ rhs`.
    pub pass: bool,
    pub n_realizations: usize,
}

impl BoundCheckReport {
    fn new(interval: Interval, lhs: MeanStderr, rhs: f64) -> Self {
        BoundCheckReport {
            interval,
            lhs_mean: lhs.mean,
            lhs_stderr: lhs.stderr,
            rhs,
            margin: (rhs - lhs.mean) / rhs,
            pass: lhs.mean - 3.0 * lhs.stderr_or_zero() <= rhs,
            n_realizations: lhs.n,
        }
    }
}

/// `‖ρ‖_∞ |B|`.
pub fn wegner_bound(rho_sup: f64, width: f64) -> f64 {
    rho_sup * width
}

/// `π² ‖ρ‖_∞² |I|² N²`.
pub fn minami_bound(rho_sup: f64, width: f64, sites: usize) -> f64 {
    PI * PI * rho_sup.powi(2) * width.powi(2) * (sites as f64).powi(2)
}

/// `(π²/4) ‖ρ‖_∞² |J|² L^{d+2}`.
pub fn finite_volume_mott_bound(rho_sup: f64, width: f64, side: usize, dim: usize) -> f64 {
    0.25 * PI * PI * rho_sup.powi(2) * width.powi(2) * (side as f64).powi(dim as i32 + 2)
}

/// Eigenvalue counts `tr χ_I(H_L)` per realization (outer) and interval (inner).
pub fn eigenvalue_counts(ensemble: &Ensemble, intervals: &[Interval]) -> Result<Vec<Vec<usize>>> {
    ensemble.map(|r| {
        let e = ensemble.eigenvalues(r)?;
        Ok(intervals
            .iter()
            .map(|iv| e.partition_point(|&x| x <= iv.hi) - e.partition_point(|&x| x <= iv.lo))
            .collect())
    })
}

fn check_intervals(intervals: &[Interval]) -> Result<()> {
    if intervals.is_empty() {
        return Err(Error::InvalidParameter("no intervals to check".into()));
    }
    match intervals.iter().find(|iv| !(iv.width() > 0.0 && iv.width().is_finite())) {
        Some(iv) => Err(Error::InvalidParameter(format!("interval ({}, {}] must have finite positive width", iv.lo, iv.hi))),
        None => Ok(()),
    }
}

/// `E{tr χ_B(H_L)}/N ≤ ‖ρ‖_∞ |B|` for every interval.
pub fn wegner_check(ensemble: &Ensemble, intervals: &[Interval]) -> Result<Vec<BoundCheckReport>> {
    check_intervals(intervals)?;
    let counts = eigenvalue_counts(ensemble, intervals)?;
    Ok(wegner_reports(&counts, intervals, ensemble.disorder.rho_sup(), ensemble.lattice.sites()))
}

pub fn wegner_reports(counts: &[Vec<usize>], intervals: &[Interval], rho_sup: f64, sites: usize) -> Vec<BoundCheckReport> {
    intervals
        .iter()
        .enumerate()
        .map(|(k, iv)| {
            let lhs: Vec<f64> = counts.iter().map(|c| c[k] as f64 / sites as f64).collect();
            BoundCheckReport::new(*iv, summarize(&lhs), wegner_bound(rho_sup, iv.width()))
        })
        .collect()
}

/// `E{T² - T} ≤ π² ‖ρ‖_∞² |I|² N²` with `T = tr χ_I(H_L)`.
pub fn minami_check(ensemble: &Ensemble, intervals: &[Interval]) -> Result<Vec<BoundCheckReport>> {
    check_intervals(intervals)?;
    let counts = eigenvalue_counts(ensemble, intervals)?;
    Ok(minami_reports(&counts, intervals, ensemble.disorder.rho_sup(), ensemble.lattice.sites()))
}

pub fn minami_reports(counts: &[Vec<usize>], intervals: &[Interval], rho_sup: f64, sites: usize) -> Vec<BoundCheckReport> {
    intervals
        .iter()
        .enumerate()
        .map(|(k, iv)| {
            let lhs: Vec<f64> = counts.iter().map(|c| (c[k] * c[k] - c[k]) as f64).collect();
            BoundCheckReport::new(*iv, summarize(&lhs), minami_bound(rho_sup, iv.width(), sites))
        })
        .collect()
}

/// Both sides of the trace chain for one eigensystem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSample {
    /// `tr{P_- X_1 P_+ X_1 P_-} = Σ_{n∈+, m∈-} |<ψ_n, X_1 ψ_m>|²`.
    pub lhs: f64,
    pub count_plus: usize,
    pub count_minus: usize,
    /// Eigenvalues in the hull `J ⊃ B_+ ∪ B_-`.
    pub count_hull: usize,
    /// `(L²/4) T_+ T_-`.
    pub pair_bound: f64,
    /// `(L²/4)(T² - T)` over the hull.
    pub hull_bound: f64,
}

impl ChainSample {
    pub fn holds(&self) -> bool {
        self.lhs <= self.pair_bound && self.pair_bound <= self.hull_bound
    }
}

pub fn trace_chain(eig: &EigenSystem, side: usize, plus: &Interval, minus: &Interval, position: &crate::model::LatticeOperator) -> Result<ChainSample> {
    if !plus.is_disjoint(minus) {
        return Err(Error::InvalidParameter("trace chain windows must be disjoint".into()));
    }
    let rows = eig.window(plus);
    let cols = eig.window(minus);
    let hull = eig.window(&plus.hull(minus));
    let lhs = if rows.is_empty() || cols.is_empty() {
        0.0
    } else {
        let x = eig.matrix_elements(position, rows.clone(), cols.clone())?;
        let mut s = 0.0;
        for a in 0..rows.len() {
            for b in 0..cols.len() {
                s += x[(a, b)].norm_sqr();
            }
        }
        s
    };
    let quarter = 0.25 * (side as f64).powi(2);
    let t = hull.len();
    Ok(ChainSample {
        lhs,
        count_plus: rows.len(),
        count_minus: cols.len(),
        count_hull: t,
        pair_bound: quarter * (rows.len() * cols.len()) as f64,
        hull_bound: quarter * (t * t - t) as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub windows: EnergyWindows,
    pub n_realizations: usize,
    pub violations: usize,
    /// Minimum of `(pair_bound - lhs)/pair_bound` over realizations with
    /// a nonzero bound; `None` if every bound vanished.
    pub worst_margin: Option<f64>,
    /// Disorder mean of `tr{...}/N`.
    pub per_volume: MeanStderr,
    /// `(π²/4) ‖ρ‖_∞² |J|² L^{d+2}` with `J = I_- ∪ I_+`.
    pub finite_volume_bound: f64,
    pub end_to_end_pass: bool,
    pub samples: Vec<ChainSample>,
}

/// Trace chain over the outer windows `I_± ` of each `ν`.
pub fn trace_chain_check(ensemble: &Ensemble, windows: &[EnergyWindows]) -> Result<Vec<ChainReport>> {
    let lat = &ensemble.lattice;
    let x = position_operator(lat);
    let per_real = ensemble.map(|r| {
        let eig = ensemble.eigensystem(r)?;
        windows.iter().map(|w| trace_chain(&eig, lat.side(), &w.i_plus, &w.i_minus, &x)).collect::<Result<Vec<_>>>()
    })?;
    let n = lat.sites() as f64;
    Ok(windows
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let samples: Vec<ChainSample> = per_real.iter().map(|s| s[k]).collect();
            let violations = samples.iter().filter(|s| !s.holds()).count();
            let worst_margin = samples
                .iter()
                .filter(|s| s.pair_bound > 0.0)
                .map(|s| (s.pair_bound - s.lhs) / s.pair_bound)
                .reduce(f64::min);
            let per_volume = summarize(&samples.iter().map(|s| s.lhs / n).collect::<Vec<_>>());
            let bound = finite_volume_mott_bound(
                ensemble.disorder.rho_sup(),
                w.i_plus.hull(&w.i_minus).width(),
                lat.side(),
                lat.dim(),
            );
            ChainReport {
                windows: *w,
                n_realizations: samples.len(),
                violations,
                worst_margin,
                end_to_end_pass: per_volume.mean - 3.0 * per_volume.stderr_or_zero() <= bound,
                per_volume,
                finite_volume_bound: bound,
                samples,
            }
        })
        .collect())
}

/// Log-linear decay fit `log mean(d) ≈ log K - d/ℓ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub distances: Vec<usize>,
    pub log_means: Vec<f64>,
    pub log_k: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    /// `-1/slope`; infinite when the data do not decay.
    pub ell: f64,
    pub ell_stderr: f64,
    pub r_squared: f64,
}

/// Disorder-averaged profile against graph distance from the source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// `(distance, mean, stderr)` for distances `0..=cap`.
    pub curve: Vec<(usize, MeanStderr)>,
    pub fit: Option<DecayFit>,
    pub n_realizations: usize,
    pub warnings: Vec<String>,
}

/// Smallest distance used in decay fits.
pub const FIT_START: usize = 2;

fn distance_cap(ensemble: &Ensemble, max_distance: usize) -> Result<usize> {
    let cap = (ensemble.lattice.side() / 2).saturating_sub(2).min(max_distance);
    if cap < FIT_START + 1 {
        return Err(Error::InvalidParameter(format!(
            "decay fit needs distances {FIT_START}..={}, lattice/max_distance allow only {cap}",
            FIT_START + 1
        )));
    }
    Ok(cap)
}

/// Per-distance means of `values` over sites within `cap` of site 0.
fn radial_profile(ensemble: &Ensemble, cap: usize, values: impl Fn(usize) -> f64) -> Vec<f64> {
    let lat = &ensemble.lattice;
    let mut sum = vec![0.0; cap + 1];
    let mut count = vec![0usize; cap + 1];
    for x in 0..lat.sites() {
        let d = lat.distance(0, x);
        if d <= cap {
            sum[d] += values(x);
            count[d] += 1;
        }
    }
    sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
}

fn decay_report(profiles: &[Vec<f64>], cap: usize, mut warnings: Vec<String>) -> DecayReport {
    let curve: Vec<(usize, MeanStderr)> = (0..=cap)
        .map(|d| (d, summarize(&profiles.iter().map(|p| p[d]).collect::<Vec<_>>())))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = curve[FIT_START..]
        .iter()
        .filter(|(_, m)| m.mean > 0.0)
        .map(|(d, m)| (*d as f64, m.mean.ln()))
        .unzip();
    if xs.len() < cap + 1 - FIT_START {
        warnings.push(format!("{} distance(s) with zero mean left out of the fit", cap + 1 - FIT_START - xs.len()));
    }
    let fit = line_fit(&xs, &ys, None).map(|f| DecayFit {
        distances: xs.iter().map(|&d| d as usize).collect(),
        log_means: ys.clone(),
        log_k: f.intercept,
        slope: f.slope,
        slope_stderr: f.slope_stderr,
        ell: if f.slope < 0.0 { -1.0 / f.slope } else { f64::INFINITY },
        ell_stderr: f.slope_stderr / (f.slope * f.slope),
        r_squared: f.r_squared,
    });
    DecayReport { curve, fit, n_realizations: profiles.len(), warnings }
}

/// Parameters of a fractional-moment probe `E{|G(0,x; E + iη)|^s}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenProbe {
    pub energy: f64,
    pub eta: f64,
    pub s: f64,
    pub max_distance: usize,
}

impl GreenProbe {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.s > 0.0 && self.s < 1.0) {
            problems.push(format!("fractional exponent s must lie in (0, 1), got {}", self.s));
        }
        if !(self.eta != 0.0 && self.eta.is_finite()) {
            problems.push(format!("η must be finite and nonzero, got {}", self.eta));
        }
        if !self.energy.is_finite() {
            problems.push("probe energy must be finite".into());
        }
        if problems.is_empty() { Ok(()) } else { Err(Error::Validation(problems)) }
    }
}

/// Fractional moments of the Green's function against distance from site 0,
/// with the log-linear decay fit. A failed solve is retried with `η`
/// doubled, up to three times, and reported as a warning.
pub fn fractional_moment_green(ensemble: &Ensemble, probe: &GreenProbe) -> Result<DecayReport> {
    probe.validate()?;
    let cap = distance_cap(ensemble, probe.max_distance)?;
    let results = ensemble.map(|r| {
        let mut eta = probe.eta;
        let mut notes = Vec::new();
        for _ in 0..4 {
            let z = Complex64::new(probe.energy, eta);
            match resolvent_column(&ensemble.lattice, r, z, 0, 1e-10) {
                Ok(u) => {
                    let profile = radial_profile(ensemble, cap, |x| u[x].norm().powf(probe.s));
                    return Ok((profile, notes));
                }
                Err(Error::SolverBreakdown(why)) => {
                    notes.push(format!("realization {}: {why}; retrying with η = {}", r.index, 2.0 * eta));
                    eta *= 2.0;
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::SolverBreakdown(format!("realization {} failed after retries: {}", r.index, notes.join("; "))))
    })?;
    let warnings = results.iter().flat_map(|(_, n)| n.iter().cloned()).collect();
    let profiles: Vec<Vec<f64>> = results.into_iter().map(|(p, _)| p).collect();
    Ok(decay_report(&profiles, cap, warnings))
}

/// `|P_{E_F}(0, x)|` from the eigenvectors; summed over whichever side of
/// `E_F` holds fewer states (`P = 1 - χ_{(E_F, ∞)}` otherwise).
pub fn fermi_projection_row(eig: &EigenSystem, fermi: f64) -> Vec<f64> {
    let n = eig.dim();
    let occupied = eig.window(&Interval { lo: f64::NEG_INFINITY, hi: fermi });
    let (range, complement) = if occupied.len() <= n / 2 { (occupied, false) } else { (occupied.end..n, true) };
    let mut row = vec![0.0; n];
    for k in range {
        let v = eig.vector(k);
        let v0 = v[0];
        for (r, &vx) in row.iter_mut().zip(v) {
            *r += v0 * vx;
        }
    }
    if complement {
        row.iter_mut().for_each(|r| *r = -*r);
        row[0] += 1.0;
    }
    row
}

/// `E{|P_{E_F}(0, x)|}` against distance, with its log-linear fit.
pub fn fermi_projection_decay(ensemble: &Ensemble, fermi: f64, max_distance: usize) -> Result<DecayReport> {
    let cap = distance_cap(ensemble, max_distance)?;
    let profiles = ensemble.map(|r| {
        let eig = ensemble.eigensystem(r)?;
        let row = fermi_projection_row(&eig, fermi);
        Ok(radial_profile(ensemble, cap, |x| row[x].abs()))
    })?;
    Ok(decay_report(&profiles, cap, Vec::new()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacingReport {
    pub interval: Interval,
    pub n_spacings: usize,
    pub mean_raw_spacing: f64,
    pub histogram_edges: Vec<f64>,
    /// Fraction of spacings per bin; sums to 1.
    pub histogram_mass: Vec<f64>,
    /// Kolmogorov–Smirnov distance to the exponential law `1 - e^{-s}`.
    pub ks_distance: f64,
    pub warnings: Vec<String>,
}

/// Fewer spacings than this triggers a warning.
pub const MIN_SPACINGS: usize = 1000;

/// Unfolded nearest-neighbour spacings of the eigenvalues inside
/// `interval`, pooled over realizations. Spacings are normalised by their
/// pooled mean (flat-DOS unfolding within a narrow window).
pub fn spacing_statistics(spectra: &[Vec<f64>], interval: &Interval, bin_width: f64) -> Result<SpacingReport> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidParameter("histogram bin width must be positive".into()));
    }
    let mut raw = Vec::new();
    for e in spectra {
        let inside: Vec<f64> = e.iter().copied().filter(|&x| interval.contains(x)).collect();
        raw.extend(inside.windows(2).map(|w| w[1] - w[0]));
    }
    let mut warnings = Vec::new();
    if raw.len() < MIN_SPACINGS {
        warnings.push(format!("only {} spacings (< {MIN_SPACINGS}); statistics are rough", raw.len()));
    }
    if raw.is_empty() {
        return Err(Error::Empty(format!("no spacings inside ({}, {}]", interval.lo, interval.hi)));
    }
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let mut s: Vec<f64> = raw.iter().map(|x| if mean > 0.0 { x / mean } else { 0.0 }).collect();
    s.sort_by(f64::total_cmp);

    let top = s.last().copied().unwrap_or(0.0);
    let bins = ((top / bin_width).floor() as usize + 1).max(1);
    let edges: Vec<f64> = (0..=bins).map(|k| k as f64 * bin_width).collect();
    let mut mass = vec![0.0; bins];
    let w = 1.0 / s.len() as f64;
    for &x in &s {
        mass[((x / bin_width) as usize).min(bins - 1)] += w;
    }

    let n = s.len() as f64;
    let ks = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-x).exp();
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);

    Ok(SpacingReport {
        interval: *interval,
        n_spacings: s.len(),
        mean_raw_spacing: mean,
        histogram_edges: edges,
        histogram_mass: mass,
        ks_distance: ks,
        warnings,
    })
}

pub fn level_spacing_stats(ensemble: &Ensemble, interval: &Interval, bin_width: f64) -> Result<SpacingReport> {
    let spectra = ensemble.map(|r| ensemble.eigenvalues(r))?;
    spacing_statistics(&spectra, interval, bin_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DisorderModel, TorusLattice};

    fn ensemble(side: usize, width: f64, n: usize) -> Ensemble {
        Ensemble::new(TorusLattice::new(1, side).unwrap(), DisorderModel::uniform(width, 7).unwrap(), n).unwrap()
    }

    #[test]
    fn closed_form_bounds() {
        assert!((minami_bound(0.25, 0.2, 64) - 101.06).abs() < 0.01);
        assert!((finite_volume_mott_bound(0.25, 0.2, 16, 1) - 25.266).abs() < 0.001);
        assert_eq!(wegner_bound(0.25, 0.2), 0.05);
    }

    #[test]
    fn intervals_outside_spectrum() {
        let ens = ensemble(32, 4.0, 5);
        let iv = [Interval::new(10.0, 11.0).unwrap()];
        let w = wegner_check(&ens, &iv).unwrap();
        assert_eq!(w[0].lhs_mean, 0.0);
        assert!(w[0].pass);
        assert_eq!(w[0].rhs, 0.25);
        let m = minami_check(&ens, &iv).unwrap();
        assert_eq!(m[0].lhs_mean, 0.0);
        assert!(wegner_check(&ens, &[]).is_err());
    }

    #[test]
    fn chain_with_empty_window() {
        let ens = ensemble(16, 4.0, 1);
        let eig = ens.eigensystem(&ens.realization(0)).unwrap();
        let x = position_operator(&ens.lattice);
        let s = trace_chain(&eig, 16, &Interval::new(40.0, 41.0).unwrap(), &Interval::new(-1.0, 0.0).unwrap(), &x).unwrap();
        assert_eq!(s.lhs, 0.0);
        assert!(s.holds());
    }

    #[test]
    fn green_probe_validation() {
        let ens = ensemble(64, 10.0, 2);
        let bad = GreenProbe { energy: 0.0, eta: 1e-3, s: 0.0, max_distance: 20 };
        assert!(matches!(fractional_moment_green(&ens, &bad), Err(Error::Validation(_))));
        let zero_eta = GreenProbe { eta: 0.0, s: 0.2, ..bad };
        assert!(fractional_moment_green(&ens, &zero_eta).is_err());
    }

    #[test]
    fn strong_disorder_green_decays_fast() {
        let ens = ensemble(128, 50.0, 40);
        let probe = GreenProbe { energy: 0.0, eta: 1e-3, s: 0.2, max_distance: 40 };
        let rep = fractional_moment_green(&ens, &probe).unwrap();
        let fit = rep.fit.unwrap();
        assert!(fit.r_squared > 0.99, "R² = {}", fit.r_squared);
        assert!(fit.ell > 0.0 && fit.ell < 5.0, "ℓ = {}", fit.ell);
    }

    #[test]
    fn fermi_projection_limits() {
        let ens = ensemble(40, 4.0, 1);
        let eig = ens.eigensystem(&ens.realization(0)).unwrap();
        assert!(fermi_projection_row(&eig, -100.0).iter().all(|&p| p == 0.0));
        let full = fermi_projection_row(&eig, 100.0);
        assert_eq!(full[0], 1.0);
        assert!(full[1..].iter().all(|&p| p == 0.0));
        // both summation sides agree
        let mid = eig.energies()[19];
        let row = fermi_projection_row(&eig, mid);
        let mut direct = vec![0.0; 40];
        for k in 0..20 {
            let v = eig.vector(k);
            for x in 0..40 {
                direct[x] += v[0] * v[x];
            }
        }
        for x in 0..40 {
            assert!((row[x] - direct[x]).abs() < 1e-12);
        }
    }

    #[test]
    fn clean_spectrum_is_rigid() {
        let side = 4000;
        let e: Vec<f64> = (0..side).map(|k| 2.0 * (2.0 * PI * k as f64 / side as f64).cos()).collect();
        let mut e = e;
        e.sort_by(f64::total_cmp);
        let rep = spacing_statistics(&[e], &Interval::new(-1.0, 1.0).unwrap(), 0.1).unwrap();
        assert!(rep.ks_distance > 0.3, "KS {}", rep.ks_distance);
        assert!((rep.histogram_mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(rep.warnings.is_empty());
    }

    #[test]
    fn few_spacings_warn() {
        let rep = spacing_statistics(&[vec![0.0, 0.1, 0.3, 0.35]], &Interval::new(-1.0, 1.0).unwrap(), 0.1).unwrap();
        assert_eq!(rep.n_spacings, 3);
        assert_eq!(rep.warnings.len(), 1);
        assert!(spacing_statistics(&[vec![5.0]], &Interval::new(-1.0, 1.0).unwrap(), 0.1).is_err());
    }
}
