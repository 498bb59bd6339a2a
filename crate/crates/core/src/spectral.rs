//! Dense symmetric eigendecomposition and eigenbasis matrix elements.

use std::ops::Range;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::diag::Diag;
use faer::{Mat, Par};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LatticeOperator;

/// Half-open energy interval `(lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::InvalidParameter(format!("interval ({lo}, {hi}] is empty")));
        }
        Ok(Interval { lo, hi })
    }

    /// The whole real line.
    pub fn everything() -> Self {
        Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn centered(center: f64, width: f64) -> Result<Self> {
        Interval::new(center - 0.5 * width, center + 0.5 * width)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, e: f64) -> bool {
        self.lo < e && e <= self.hi
    }

    pub fn is_disjoint(&self, other: &Interval) -> bool {
        self.hi <= other.lo || other.hi <= self.lo
    }

    /// Smallest interval containing both.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }
}

/// The Fermi-energy windows attached to a frequency `ν`:
/// `I_- = (E_F-ν, E_F]`, `I_+ = (E_F, E_F+ν]`,
/// `J_- = (E_F-ν/2, E_F-ν/4]`, `J_+ = (E_F+ν/4, E_F+ν/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindows {
    pub fermi: f64,
    pub nu: f64,
    pub i_minus: Interval,
    pub i_plus: Interval,
    pub j_minus: Interval,
    pub j_plus: Interval,
}

impl EnergyWindows {
    pub fn new(fermi: f64, nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) || !fermi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "windows need finite E_F and ν > 0, got E_F={fermi}, ν={nu}"
            )));
        }
        Ok(EnergyWindows {
            fermi,
            nu,
            i_minus: Interval::new(fermi - nu, fermi)?,
            i_plus: Interval::new(fermi, fermi + nu)?,
            j_minus: Interval::new(fermi - 0.5 * nu, fermi - 0.25 * nu)?,
            j_plus: Interval::new(fermi + 0.25 * nu, fermi + 0.5 * nu)?,
        })
    }

    /// `I_±` shrunk by `ν⁴` at both ends: `(J'_-, J'_+)`.
    pub fn shrunken(&self) -> Result<(Interval, Interval)> {
        let m = self.nu.powi(4);
        Ok((
            Interval::new(self.fermi - self.nu + m, self.fermi - m)?,
            Interval::new(self.fermi + m, self.fermi + self.nu - m)?,
        ))
    }
}

/// Sorted eigenvalues and orthonormal eigenvectors (columns) of a real
/// symmetric lattice operator.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    energies: Vec<f64>,
    vectors: Mat<f64>,
    residual_tol: f64,
}

impl EigenSystem {
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn residual_tol(&self) -> f64 {
        self.residual_tol
    }

    /// Eigenvector `ψ_n` as a contiguous slice.
    pub fn vector(&self, n: usize) -> &[f64] {
        self.vectors.col_as_slice(n)
    }

    /// Indices `{n : E_n ∈ (lo, hi]}`, i.e. the range realising `χ_I(H_L)`.
    pub fn window(&self, interval: &Interval) -> Range<usize> {
        let start = self.energies.partition_point(|&e| e <= interval.lo);
        let end = self.energies.partition_point(|&e| e <= interval.hi);
        start..end.max(start)
    }

    /// `M[a, b] = <ψ_{rows[a]}, A ψ_{cols[b]}>`.
    pub fn matrix_elements(
        &self,
        op: &LatticeOperator,
        rows: Range<usize>,
        cols: Range<usize>,
    ) -> Result<Mat<Complex64>> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: op.dim() });
        }
        if rows.end > self.dim() || cols.end > self.dim() {
            return Err(Error::InvalidParameter("eigen index range out of bounds".into()));
        }
        let mut out = Mat::<Complex64>::zeros(rows.len(), cols.len());
        for (b, m) in cols.enumerate() {
            let applied = op.apply_real(self.vector(m));
            for (a, n) in rows.clone().enumerate() {
                let psi = self.vector(n);
                out[(a, b)] = psi
                    .iter()
                    .zip(&applied)
                    .fold(Complex64::new(0.0, 0.0), |acc, (&p, &w)| acc + w * p);
            }
        }
        Ok(out)
    }
}

fn dense_real(h: &LatticeOperator) -> Result<Mat<f64>> {
    let dense = h.to_dense_real().ok_or_else(|| {
        Error::InvalidParameter("dense eigensolver expects a real symmetric operator".into())
    })?;
    let n = h.dim();
    Ok(Mat::from_fn(n, n, |i, j| dense[i * n + j]))
}

fn run_evd(a: &Mat<f64>, vectors: bool) -> Result<(Vec<f64>, Option<Mat<f64>>), String> {
    let n = a.nrows();
    let compute = if vectors { ComputeEigenvectors::Yes } else { ComputeEigenvectors::No };
    // Sequential on purpose: results must not depend on the thread count.
    let par = Par::Seq;
    let mut s = Diag::<f64>::zeros(n);
    let mut u = vectors.then(|| Mat::<f64>::zeros(n, n));
    let mut buf = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(n, compute, par, Default::default()));
    evd::self_adjoint_evd(
        a.as_ref(),
        s.as_mut(),
        u.as_mut().map(|u| u.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| format!("{e:?}"))?;
    let energies = (0..n).map(|i| s[i]).collect();
    Ok((energies, u))
}

/// Full eigendecomposition of a real symmetric operator.
///
/// Every eigenpair is checked against `‖Hψ - Eψ‖ ≤ tol (1 + |E|)`, with
/// `tol = 1e-9 ‖H‖` unless given. Failures surface as
/// [`Error::NonConvergence`] with index/seed zero; ensemble drivers fill
/// in the realization.
pub fn diagonalize(h: &LatticeOperator, tol: Option<f64>) -> Result<EigenSystem> {
    let a = dense_real(h)?;
    let tol = tol.unwrap_or(1e-9 * h.norm_bound().max(1.0));
    let fail = |reason: String| Error::NonConvergence { index: 0, seed: 0, reason };
    let (energies, vectors) = run_evd(&a, true).map_err(fail)?;
    let vectors = vectors.expect("eigenvectors requested");
    let eig = EigenSystem { energies, vectors, residual_tol: tol };

    for n in 0..eig.dim() {
        let psi = eig.vector(n);
        let e = eig.energies[n];
        let hpsi = h.apply_real(psi);
        let res = hpsi.iter().zip(psi).map(|(w, &p)| (w - e * p).norm_sqr()).sum::<f64>().sqrt();
        if !(res <= tol * (1.0 + e.abs())) {
            return Err(fail(format!("eigenpair {n} residual {res:e} exceeds {tol:e}")));
        }
    }
    if eig.energies.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(fail("eigenvalues not sorted".into()));
    }
    Ok(eig)
}

/// Ascending eigenvalues only.
pub fn eigenvalues(h: &LatticeOperator) -> Result<Vec<f64>> {
    let a = dense_real(h)?;
    let (mut energies, _) =
        run_evd(&a, false).map_err(|reason| Error::NonConvergence { index: 0, seed: 0, reason })?;
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonConvergence { index: 0, seed: 0, reason: "non-finite eigenvalue".into() });
    }
    energies.sort_by(f64::total_cmp);
    Ok(energies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_hamiltonian, position_operator, DisorderModel, Realization, TorusLattice};

    fn clean_ring(side: usize) -> (TorusLattice, LatticeOperator) {
        let lat = TorusLattice::new(1, side).unwrap();
        let h = build_hamiltonian(&lat, &Realization::from_potential(vec![0.0; side])).unwrap();
        (lat, h)
    }

    #[test]
    fn ring_of_four_spectrum() {
        // Oracle: adjacency of C_4 has eigenvalues 2cos(2πk/4) = {2, 0, -2, 0}.
        let (_, h) = clean_ring(4);
        let eig = diagonalize(&h, None).unwrap();
        let expected = [-2.0, 0.0, 0.0, 2.0];
        for (e, x) in eig.energies().iter().zip(expected) {
            assert!((e - x).abs() < 1e-12);
        }
        assert_eq!(eig.window(&Interval::new(-0.5, 0.5).unwrap()), 1..3);
    }

    #[test]
    fn clean_ring_spectrum_in_band() {
        let (_, h) = clean_ring(8);
        let eig = diagonalize(&h, None).unwrap();
        assert!(eig.energies().iter().all(|e| e.abs() <= 2.0 + 1e-12));
    }

    #[test]
    fn trace_and_orthonormality() {
        let lat = TorusLattice::new(2, 5).unwrap();
        let r = DisorderModel::uniform(3.0, 9).unwrap().sample_potential(2, &lat);
        let h = build_hamiltonian(&lat, &r).unwrap();
        let eig = diagonalize(&h, None).unwrap();
        let n = lat.sites();
        let trace: f64 = r.potential.iter().sum();
        assert!((eig.energies().iter().sum::<f64>() - trace).abs() < 1e-8 * n as f64);
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = eig.vector(a).iter().zip(eig.vector(b)).map(|(x, y)| x * y).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((dot - target).abs() < 1e-9);
            }
        }
        let vals = eigenvalues(&h).unwrap();
        for (a, b) in vals.iter().zip(eig.energies()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn windows_partition_indices() {
        let lat = TorusLattice::new(1, 30).unwrap();
        let r = DisorderModel::uniform(4.0, 1).unwrap().sample_potential(0, &lat);
        let eig = diagonalize(&build_hamiltonian(&lat, &r).unwrap(), None).unwrap();
        let cuts = [-10.0, -1.3, -0.2, 0.0, 0.7, 2.2, 10.0];
        let total: usize = cuts.windows(2).map(|c| eig.window(&Interval::new(c[0], c[1]).unwrap()).len()).sum();
        assert_eq!(total, 30);
        assert_eq!(eig.window(&Interval::everything()).len(), 30);
        assert!(eig.window(&Interval::new(20.0, 21.0).unwrap()).is_empty());
    }

    #[test]
    fn identity_and_position_elements() {
        let lat = TorusLattice::new(1, 12).unwrap();
        let r = DisorderModel::uniform(2.0, 4).unwrap().sample_potential(0, &lat);
        let eig = diagonalize(&build_hamiltonian(&lat, &r).unwrap(), None).unwrap();
        let id = LatticeOperator::from_parts(vec![Complex64::new(1.0, 0.0); 12], Vec::new());
        let m = eig.matrix_elements(&id, 0..12, 0..12).unwrap();
        for a in 0..12 {
            for b in 0..12 {
                let t = if a == b { 1.0 } else { 0.0 };
                assert!((m[(a, b)] - t).norm() < 1e-9);
            }
        }
        let x = eig.matrix_elements(&position_operator(&lat), 0..12, 0..12).unwrap();
        let tr: f64 = (0..12).map(|a| x[(a, a)].re).sum();
        assert!(tr.abs() < 1e-8);
        for a in 0..12 {
            for b in 0..12 {
                assert!((x[(a, b)] - x[(b, a)].conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_idempotent() {
        let lat = TorusLattice::new(1, 20).unwrap();
        let r = DisorderModel::uniform(4.0, 3).unwrap().sample_potential(1, &lat);
        let eig = diagonalize(&build_hamiltonian(&lat, &r).unwrap(), None).unwrap();
        let idx = eig.window(&Interval::new(-1.0, 0.5).unwrap());
        let n = 20;
        let mut p = vec![0.0; n * n];
        for k in idx {
            let v = eig.vector(k);
            for i in 0..n {
                for j in 0..n {
                    p[i * n + j] += v[i] * v[j];
                }
            }
        }
        let mut defect = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let p2: f64 = (0..n).map(|k| p[i * n + k] * p[k * n + j]).sum();
                defect = defect.max((p2 - p[i * n + j]).abs());
            }
        }
        assert!(defect < 1e-8);
    }

    #[test]
    fn windows_layout() {
        let w = EnergyWindows::new(0.3, 0.4).unwrap();
        assert!(w.i_minus.is_disjoint(&w.i_plus));
        assert!(w.j_minus.lo >= w.i_minus.lo && w.j_minus.hi <= w.i_minus.hi);
        assert!(w.j_plus.lo >= w.i_plus.lo && w.j_plus.hi <= w.i_plus.hi);
        let (a, b) = w.shrunken().unwrap();
        assert!((a.lo - (0.3 - 0.4 + 0.0256)).abs() < 1e-15 && (b.hi - (0.7 - 0.0256)).abs() < 1e-15);
        assert!(EnergyWindows::new(0.0, 0.0).is_err());
    }
}
