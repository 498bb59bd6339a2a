//! Finite-volume estimators of the density of states `𝒩`, the conductivity
//! measure `Σ`, the correlation measure `Ψ`, and quantities derived from
//! them.
//!
//! All estimators use the trace per unit volume `(1/N) tr(·)` of the
//! periodic box, which equals the disorder expectation of the `δ_0`
//! diagonal matrix element by translation invariance.
//!
//! The conductivity measure of one realization is the empirical measure
//!
//! ```text
//! Σ̂(B) = (π/N) Σ_{E_m ≤ E_F < E_n} |<ψ_n, ẋ_1 ψ_m>|² / (E_n - E_m) · [χ_B(E_n - E_m) + χ_B(E_m - E_n)]
//! ```
//!
//! stored as its positive half (bins over `(0, ν_max]`) with an even flag.

mod response;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::model::{position_operator, velocity_operator, LatticeOperator, VelocityVariant};
use crate::spectral::{EigenSystem, EnergyWindows, Interval};
use crate::stats::{summarize, summarize_columns};

pub use response::{cauchy_conductivity, in_phase_current, out_phase_current, FieldProfile};

/// Pairs closer than this in energy are excluded from `1/|ΔE|` weighted sums.
pub const DEGENERATE_GAP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    /// Stored bins are the positive half; the measure is mirrored onto
    /// the negative axis.
    Even,
    OneSided,
}

/// Nonnegative measure on a bin grid, bin `k = (edges[k], edges[k+1]]`,
/// averaged over realizations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedMeasure {
    pub edges: Vec<f64>,
    pub mass_mean: Vec<f64>,
    /// `None` when fewer than two realizations were merged.
    pub mass_stderr: Option<Vec<f64>>,
    pub n_realizations: usize,
    /// Mass of the whole line (both halves when even).
    pub total_mass_mean: f64,
    pub total_mass_stderr: Option<f64>,
    pub symmetry: Symmetry,
}

pub(crate) fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidParameter("bin grid needs at least two edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("bin edges must be finite and strictly ascending".into()));
    }
    Ok(())
}

/// `count + 1` equally spaced edges over `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 || !(lo < hi) {
        return Err(Error::InvalidParameter(format!("cannot bin [{lo}, {hi}] into {count} bins")));
    }
    let step = (hi - lo) / count as f64;
    let mut edges: Vec<f64> = (0..count).map(|k| lo + step * k as f64).collect();
    edges.push(hi);
    Ok(edges)
}

impl BinnedMeasure {
    /// One realization's masses.
    pub fn single(edges: Vec<f64>, masses: Vec<f64>, symmetry: Symmetry) -> Result<Self> {
        check_edges(&edges)?;
        if masses.len() + 1 != edges.len() {
            return Err(Error::DimensionMismatch { expected: edges.len() - 1, found: masses.len() });
        }
        if masses.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidParameter("measure masses must be nonnegative".into()));
        }
        let total = symmetry.multiplicity() * masses.iter().sum::<f64>();
        Ok(BinnedMeasure {
            edges,
            mass_mean: masses,
            mass_stderr: None,
            n_realizations: 1,
            total_mass_mean: total,
            total_mass_stderr: None,
            symmetry,
        })
    }

    /// Disorder average of per-realization measures, reduced in slice order.
    pub fn merge(parts: &[BinnedMeasure]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Empty("no realizations to merge".into()))?;
        if parts.iter().any(|p| p.edges != first.edges || p.symmetry != first.symmetry) {
            return Err(Error::InvalidParameter("cannot merge measures on different grids".into()));
        }
        let rows: Vec<Vec<f64>> = parts.iter().map(|p| p.mass_mean.clone()).collect();
        let cols = summarize_columns(&rows);
        let totals: Vec<f64> = parts.iter().map(|p| p.total_mass_mean).collect();
        let total = summarize(&totals);
        Ok(BinnedMeasure {
            edges: first.edges.clone(),
            mass_mean: cols.iter().map(|c| c.mean).collect(),
            mass_stderr: (parts.len() > 1).then(|| cols.iter().map(|c| c.stderr_or_zero()).collect()),
            n_realizations: parts.len(),
            total_mass_mean: total.mean,
            total_mass_stderr: total.stderr,
            symmetry: first.symmetry,
        })
    }

    pub fn bins(&self) -> usize {
        self.mass_mean.len()
    }

    /// Bin holding `x` under the `(lo, hi]` convention.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        bin_index(&self.edges, x)
    }

    pub fn center(&self, k: usize) -> f64 {
        0.5 * (self.edges[k] + self.edges[k + 1])
    }

    pub fn width(&self, k: usize) -> f64 {
        self.edges[k + 1] - self.edges[k]
    }

    /// Sum of the stored bins, mirrored when even.
    pub fn bin_total(&self) -> f64 {
        self.symmetry.multiplicity() * self.mass_mean.iter().sum::<f64>()
    }

    /// `(λ_k, mass_k)` over the whole line; for even measures each positive
    /// bin is followed by its mirror image at `-λ_k`.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(2 * self.bins());
        for (k, &m) in self.mass_mean.iter().enumerate() {
            let c = self.center(k);
            out.push((c, m));
            if self.symmetry == Symmetry::Even {
                out.push((-c, m));
            }
        }
        out
    }

    /// Mass of `(edges[0], ν]`; `ν` must be a bin edge.
    pub fn cumulative(&self, nu: f64) -> Result<f64> {
        let k = self
            .edges
            .iter()
            .position(|&e| (e - nu).abs() <= 1e-12 * nu.abs().max(1.0))
            .ok_or(Error::OffGrid(nu))?;
        Ok(self.mass_mean[..k].iter().sum())
    }

    /// Multiplies every mass (and error) by `factor ≥ 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.mass_mean.iter_mut().for_each(|m| *m *= factor);
        if let Some(s) = out.mass_stderr.as_mut() {
            s.iter_mut().for_each(|m| *m *= factor);
        }
        out.total_mass_mean *= factor;
        out.total_mass_stderr = out.total_mass_stderr.map(|s| s * factor);
        out
    }

    /// Checks positivity and `total ≈ Σ bins` to `1e-10` relative.
    pub fn check_axioms(&self) -> Result<()> {
        if self.mass_mean.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidParameter("negative or NaN bin mass".into()));
        }
        let sum = self.bin_total();
        if !((self.total_mass_mean - sum).abs() <= 1e-10 * sum.abs()) {
            return Err(Error::InvalidParameter(format!(
                "total mass {} differs from bin sum {sum}",
                self.total_mass_mean
            )));
        }
        Ok(())
    }
}

impl Symmetry {
    fn multiplicity(self) -> f64 {
        match self {
            Symmetry::Even => 2.0,
            Symmetry::OneSided => 1.0,
        }
    }
}

pub(crate) fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    let p = edges.partition_point(|&e| e < x);
    (p >= 1 && p < edges.len()).then(|| p - 1)
}

/// Per-realization DOS: `mass(B) = |{n : E_n ∈ B}| / N`.
pub fn density_of_states(energies: &[f64], edges: &[f64]) -> Result<BinnedMeasure> {
    check_edges(edges)?;
    let n = energies.len() as f64;
    let mut counts = vec![0usize; edges.len() - 1];
    for &e in energies {
        if let Some(k) = bin_index(edges, e) {
            counts[k] += 1;
        }
    }
    BinnedMeasure::single(edges.to_vec(), counts.into_iter().map(|c| c as f64 / n).collect(), Symmetry::OneSided)
}

/// One realization's conductivity measure and the pairs it had to skip.
#[derive(Clone, Debug)]
pub struct SigmaSample {
    pub measure: BinnedMeasure,
    pub degenerate_pairs: usize,
}

/// Empirical conductivity measure of one eigensystem.
///
/// `edges` must start at 0 and cover `(0, ν_max]`. Every straddling pair
/// `E_m ≤ E_F < E_n` with `E_n - E_m ≤ ν_max` deposits
/// `π |<ψ_n, ẋ_1 ψ_m>|² / (N (E_n - E_m))` at `E_n - E_m`.
pub fn conductivity_measure(
    eig: &EigenSystem,
    velocity: &LatticeOperator,
    fermi: f64,
    edges: &[f64],
) -> Result<SigmaSample> {
    check_edges(edges)?;
    if edges[0] != 0.0 {
        return Err(Error::InvalidParameter("conductivity bins must start at 0".into()));
    }
    let nu_max = *edges.last().unwrap();
    let upper = eig.window(&Interval::new(fermi, fermi + nu_max)?);
    let lower = eig.window(&Interval::new(fermi - nu_max, fermi)?);
    let elements = eig.matrix_elements(velocity, upper.clone(), lower.clone())?;
    let e = eig.energies();
    let norm = PI / eig.dim() as f64;
    let mut masses = vec![0.0; edges.len() - 1];
    let mut degenerate = 0;
    for (a, n) in upper.enumerate() {
        for (b, m) in lower.clone().enumerate() {
            let gap = e[n] - e[m];
            if gap < DEGENERATE_GAP {
                degenerate += 1;
                continue;
            }
            if let Some(k) = bin_index(edges, gap) {
                masses[k] += norm * elements[(a, b)].norm_sqr() / gap;
            }
        }
    }
    Ok(SigmaSample { measure: BinnedMeasure::single(edges.to_vec(), masses, Symmetry::Even)?, degenerate_pairs: degenerate })
}

/// `σ̄(ν) = Σ̂((0, ν]) / ν`, defined only on bin edges.
pub fn sigma_bar(measure: &BinnedMeasure, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("σ̄ needs ν > 0, got {nu}")));
    }
    Ok(measure.cumulative(nu)? / nu)
}

/// How `Ψ(B_+ × B_-)` is evaluated from eigendata.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiEstimator {
    /// `(1/N) Σ |<ψ_n, X_1 ψ_m>|²`.
    #[default]
    Position,
    /// `(1/N) Σ |<ψ_n, ẋ_1 ψ_m>|² / (E_n - E_m)²`.
    Velocity,
}

impl FromStr for PsiEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psi_position" | "position" => Ok(PsiEstimator::Position),
            "psi_velocity" | "velocity" => Ok(PsiEstimator::Velocity),
            other => Err(Error::UnknownTag { kind: "psi estimator", value: other.to_string() }),
        }
    }
}

impl fmt::Display for PsiEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PsiEstimator::Position => "psi_position",
            PsiEstimator::Velocity => "psi_velocity",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiValue {
    pub value: f64,
    pub degenerate_pairs: usize,
}

/// Finite-volume `Ψ(B_+ × B_-) = (1/N) tr(P_- X_1 P_+ X_1 P_-)`.
///
/// `op` is `X_1` for [`PsiEstimator::Position`] and `ẋ_1` for
/// [`PsiEstimator::Velocity`].
pub fn psi_rectangle(
    eig: &EigenSystem,
    op: &LatticeOperator,
    plus: &Interval,
    minus: &Interval,
    estimator: PsiEstimator,
) -> Result<PsiValue> {
    if !plus.is_disjoint(minus) {
        return Err(Error::InvalidParameter("Ψ windows must be disjoint".into()));
    }
    let rows = eig.window(plus);
    let cols = eig.window(minus);
    if rows.is_empty() || cols.is_empty() {
        return Ok(PsiValue { value: 0.0, degenerate_pairs: 0 });
    }
    let elements = eig.matrix_elements(op, rows.clone(), cols.clone())?;
    let e = eig.energies();
    let mut sum = 0.0;
    let mut degenerate = 0;
    for (a, n) in rows.enumerate() {
        for (b, m) in cols.clone().enumerate() {
            let w = elements[(a, b)].norm_sqr();
            match estimator {
                PsiEstimator::Position => sum += w,
                PsiEstimator::Velocity => {
                    let gap = e[n] - e[m];
                    if gap.abs() < DEGENERATE_GAP {
                        degenerate += 1;
                    } else {
                        sum += w / (gap * gap);
                    }
                }
            }
        }
    }
    Ok(PsiValue { value: sum / eig.dim() as f64, degenerate_pairs: degenerate })
}

/// Which of the two rectangles attached to `ν` a statistic refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rectangle {
    /// `I_+ × I_-`.
    Outer,
    /// `J_+ × J_-`.
    Inner,
}

impl Rectangle {
    pub fn intervals(self, w: &EnergyWindows) -> (Interval, Interval) {
        match self {
            Rectangle::Outer => (w.i_plus, w.i_minus),
            Rectangle::Inner => (w.j_plus, w.j_minus),
        }
    }
}

/// Disorder average of a Ψ rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStatistic {
    pub value_mean: f64,
    pub value_stderr: Option<f64>,
    pub n_realizations: usize,
    pub windows: EnergyWindows,
    pub rectangle: Rectangle,
    pub estimator: PsiEstimator,
    pub degenerate_pairs: usize,
}

/// Disorder-averaged DOS on `edges`.
pub fn dos_estimate(ensemble: &Ensemble, edges: &[f64]) -> Result<BinnedMeasure> {
    check_edges(edges)?;
    let parts = ensemble.map(|r| density_of_states(&ensemble.eigenvalues(r)?, edges))?;
    BinnedMeasure::merge(&parts)
}

#[derive(Clone, Debug)]
pub struct SigmaEstimate {
    pub measure: BinnedMeasure,
    pub per_realization: Vec<BinnedMeasure>,
    pub degenerate_pairs: usize,
}

/// Disorder-averaged conductivity measure.
pub fn sigma_measure_estimate(
    ensemble: &Ensemble,
    fermi: f64,
    edges: &[f64],
    variant: VelocityVariant,
) -> Result<SigmaEstimate> {
    let samples = ensemble.map(|r| {
        let h = ensemble.hamiltonian(r)?;
        let eig = ensemble.eigensystem(r)?;
        let v = velocity_operator(&ensemble.lattice, &h, variant)?;
        conductivity_measure(&eig, &v, fermi, edges)
    })?;
    let degenerate_pairs = samples.iter().map(|s| s.degenerate_pairs).sum();
    let per_realization: Vec<BinnedMeasure> = samples.into_iter().map(|s| s.measure).collect();
    let measure = BinnedMeasure::merge(&per_realization)?;
    Ok(SigmaEstimate { measure, per_realization, degenerate_pairs })
}

/// Disorder-averaged `Ψ` over one rectangle.
pub fn psi_estimate(
    ensemble: &Ensemble,
    windows: &EnergyWindows,
    rectangle: Rectangle,
    estimator: PsiEstimator,
    variant: VelocityVariant,
) -> Result<PairStatistic> {
    let (plus, minus) = rectangle.intervals(windows);
    let values = ensemble.map(|r| {
        let eig = ensemble.eigensystem(r)?;
        let op = match estimator {
            PsiEstimator::Position => position_operator(&ensemble.lattice),
            PsiEstimator::Velocity => {
                velocity_operator(&ensemble.lattice, &ensemble.hamiltonian(r)?, variant)?
            }
        };
        psi_rectangle(&eig, &op, &plus, &minus, estimator)
    })?;
    let stats = summarize(&values.iter().map(|v| v.value).collect::<Vec<_>>());
    Ok(PairStatistic {
        value_mean: stats.mean,
        value_stderr: stats.stderr,
        n_realizations: stats.n,
        windows: *windows,
        rectangle,
        estimator,
        degenerate_pairs: values.iter().map(|v| v.degenerate_pairs).sum(),
    })
}
