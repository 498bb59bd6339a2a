//! Regularized conductivity (Cauchy transform of `Σ`) and the in/out of
//! phase linear-response currents for a prescribed field spectrum.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::BinnedMeasure;
use crate::error::{Error, Result};

/// Field spectrum `Ê(ν)` sampled on a grid symmetric about zero, with
/// `Ê(-ν) = conj(Ê(ν))` holding exactly on the nodes. Linear interpolation
/// between nodes, zero outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldProfile {
    nodes: Vec<f64>,
    amplitudes: Vec<Complex64>,
}

impl FieldProfile {
    pub fn new(nodes: Vec<f64>, amplitudes: Vec<Complex64>) -> Result<Self> {
        let n = nodes.len();
        if n < 2 || amplitudes.len() != n {
            return Err(Error::InvalidParameter("field needs ≥ 2 nodes with one amplitude each".into()));
        }
        if nodes.iter().any(|x| !x.is_finite()) || nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("field nodes must be finite and strictly ascending".into()));
        }
        for k in 0..n {
            if nodes[k] != -nodes[n - 1 - k] || amplitudes[k] != amplitudes[n - 1 - k].conj() {
                return Err(Error::InvalidParameter(format!(
                    "field breaks Ê(-ν) = conj(Ê(ν)) at node {}",
                    nodes[k]
                )));
            }
        }
        Ok(FieldProfile { nodes, amplitudes })
    }

    /// Mirrors samples on `0 = ν_0 < ν_1 < ...` onto the negative axis.
    /// The amplitude at `ν = 0` must be real.
    pub fn from_nonnegative(nodes: &[f64], amplitudes: &[Complex64]) -> Result<Self> {
        if nodes.first() != Some(&0.0) {
            return Err(Error::InvalidParameter("nonnegative field grid must start at 0".into()));
        }
        if amplitudes.len() != nodes.len() {
            return Err(Error::DimensionMismatch { expected: nodes.len(), found: amplitudes.len() });
        }
        let mut full_nodes: Vec<f64> = nodes[1..].iter().rev().map(|x| -x).collect();
        let mut full_amps: Vec<Complex64> = amplitudes[1..].iter().rev().map(|a| a.conj()).collect();
        full_nodes.extend_from_slice(nodes);
        full_amps.extend_from_slice(amplitudes);
        FieldProfile::new(full_nodes, full_amps)
    }

    /// Samples `f` on `steps` equal panels of `[0, half_width]` and mirrors.
    /// `f(0)` contributes only its real part.
    pub fn sampled<F: Fn(f64) -> Complex64>(half_width: f64, steps: usize, f: F) -> Result<Self> {
        if !(half_width > 0.0) || steps == 0 {
            return Err(Error::InvalidParameter("field grid needs positive width and steps".into()));
        }
        let h = half_width / steps as f64;
        let nodes: Vec<f64> = (0..=steps).map(|k| if k == steps { half_width } else { h * k as f64 }).collect();
        let mut amps: Vec<Complex64> = nodes.iter().map(|&x| f(x)).collect();
        amps[0].im = 0.0;
        FieldProfile::from_nonnegative(&nodes, &amps)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn support(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    fn covers(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        lo <= x && x <= hi
    }

    /// Panel `k` with `nodes[k] ≤ x ≤ nodes[k+1]`.
    fn panel(&self, x: f64) -> Option<usize> {
        if !self.covers(x) {
            return None;
        }
        let p = self.nodes.partition_point(|&v| v <= x);
        Some(p.saturating_sub(1).min(self.nodes.len() - 2))
    }

    fn slope(&self, k: usize) -> Complex64 {
        (self.amplitudes[k + 1] - self.amplitudes[k]) / (self.nodes[k + 1] - self.nodes[k])
    }

    pub fn amplitude(&self, x: f64) -> Complex64 {
        match self.panel(x) {
            Some(k) => self.amplitudes[k] + self.slope(k) * (x - self.nodes[k]),
            None => Complex64::new(0.0, 0.0),
        }
    }
}

/// `σ(η, ν) = -(i/π) Σ_k mass_k / (λ_k + ν - iη)` over bin centers.
pub fn cauchy_conductivity(measure: &BinnedMeasure, eta: f64, nu: f64) -> Result<Complex64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("regularization η must be positive, got {eta}")));
    }
    let z = Complex64::new(nu, -eta);
    let sum = measure
        .atoms()
        .into_iter()
        .fold(Complex64::new(0.0, 0.0), |acc, (lambda, m)| acc + Complex64::new(m, 0.0) / (z + lambda));
    Ok(Complex64::new(0.0, -1.0 / PI) * sum)
}

fn check_coverage(measure: &BinnedMeasure, field: &FieldProfile) -> Result<()> {
    let (lo, hi) = field.support();
    match measure.atoms().into_iter().find(|&(l, m)| m > 0.0 && !field.covers(l)) {
        Some((point, _)) => Err(Error::FieldCoverage { lo, hi, point }),
        None => Ok(()),
    }
}

fn real_part_checked(value: Complex64, scale: f64, what: &str) -> Result<f64> {
    if value.im.abs() > 1e-9 * scale.max(f64::MIN_POSITIVE) && value.im.abs() > 1e-300 {
        return Err(Error::InvalidParameter(format!(
            "{what} has imaginary part {:e} against scale {scale:e}; is the measure even and the field conjugate-symmetric?",
            value.im
        )));
    }
    Ok(value.re)
}

/// In-phase current `J^in(t) = Σ_k mass_k e^{iλ_k t} Ê(λ_k)`.
pub fn in_phase_current(measure: &BinnedMeasure, field: &FieldProfile, t: f64) -> Result<f64> {
    check_coverage(measure, field)?;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    for (lambda, m) in measure.atoms() {
        let term = m * Complex64::cis(lambda * t) * field.amplitude(lambda);
        scale += term.norm();
        sum += term;
    }
    real_part_checked(sum, scale, "in-phase current")
}

// 5-point Gauss–Legendre rule on [-1, 1].
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// `PV ∫ e^{iνt} Ê(ν) / (ν - λ) dν` over the field support, by singularity
/// subtraction:
/// `∫ (g(ν) - g(λ)) / (ν - λ) dν + g(λ) log|(b - λ)/(a - λ)|`.
///
/// The regular part uses Gauss–Legendre points inside each grid panel, so a
/// node coinciding with `λ` needs no special treatment; a quadrature point
/// within rounding of `λ` takes the analytic limit `g'(λ)`.
pub fn principal_value(field: &FieldProfile, t: f64, lambda: f64) -> Result<Complex64> {
    let g = |x: f64| Complex64::cis(x * t) * field.amplitude(x);
    let (a, b) = field.support();
    let g_lambda = g(lambda);
    let inside = a < lambda && lambda < b;
    if (lambda == a || lambda == b) && g_lambda.norm() > 0.0 {
        return Err(Error::InvalidParameter(format!(
            "principal value diverges: λ = {lambda} sits on the field support edge with Ê ≠ 0"
        )));
    }
    let g_lambda = if inside { g_lambda } else { Complex64::new(0.0, 0.0) };
    let touch = 1e-12 * (1.0 + lambda.abs());
    let nodes = field.nodes();
    let mut regular = Complex64::new(0.0, 0.0);
    for k in 0..nodes.len() - 1 {
        let (lo, hi) = (nodes[k], nodes[k + 1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let slope = field.slope(k);
        let mut panel = Complex64::new(0.0, 0.0);
        for (&u, &w) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            let x = mid + half * u;
            let amp = field.amplitudes()[k] + slope * (x - lo);
            let gx = Complex64::cis(x * t) * amp;
            let value = if (x - lambda).abs() <= touch {
                Complex64::cis(x * t) * (slope + Complex64::new(0.0, t) * amp)
            } else {
                (gx - g_lambda) / (x - lambda)
            };
            panel += w * value;
        }
        regular += half * panel;
    }
    let log_term = if inside { g_lambda * ((b - lambda) / (a - lambda)).abs().ln() } else { Complex64::new(0.0, 0.0) };
    Ok(regular + log_term)
}

/// Out-of-phase current `J^out(t) = (1/πi) Σ_k mass_k PV∫ e^{iνt}Ê(ν)/(ν-λ_k) dν`.
pub fn out_phase_current(measure: &BinnedMeasure, field: &FieldProfile, t: f64) -> Result<f64> {
    check_coverage(measure, field)?;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    for (lambda, m) in measure.atoms() {
        if m == 0.0 {
            continue;
        }
        let term = m * principal_value(field, t, lambda)?;
        scale += term.norm();
        sum += term;
    }
    let current = sum / Complex64::new(0.0, PI);
    real_part_checked(current, scale / PI, "out-of-phase current")
}
