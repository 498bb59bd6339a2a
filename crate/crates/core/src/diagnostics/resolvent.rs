//! Single-column resolvent solves `(H - z) u = δ_s`.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::lu::partial_pivoting::{factor, solve};
use faer::{Mat, Par};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{build_hamiltonian, Realization, TorusLattice};

/// Solves `(H - z) u = δ_source` and verifies `‖(H - z)u - δ‖₂ ≤ tol·max(1, ‖u‖₂)`.
///
/// On a ring (`d = 1`) the solve eliminates the source site and runs the two
/// continued-fraction (Schur complement) recursions of the remaining open
/// chain. Every component is then a product of ratios, so the exponentially
/// small far-field values keep full relative precision. Higher dimensions
/// use a dense LU factorization.
pub fn resolvent_column(
    lattice: &TorusLattice,
    realization: &Realization,
    z: Complex64,
    source: usize,
    tol: f64,
) -> Result<Vec<Complex64>> {
    let n = lattice.sites();
    if realization.potential.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: realization.potential.len() });
    }
    if source >= n {
        return Err(Error::InvalidParameter(format!("source site {source} outside lattice")));
    }
    let u = if lattice.dim() == 1 {
        ring_column(&realization.potential, z, source)
    } else {
        dense_column(lattice, realization, z, source)?
    };
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::SolverBreakdown(format!("non-finite resolvent entries at z = {z}")));
    }

    let h = build_hamiltonian(lattice, realization)?;
    let mut r = h.apply(&u);
    for (ri, ui) in r.iter_mut().zip(&u) {
        *ri -= z * ui;
    }
    r[source] -= 1.0;
    let res = r.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let norm = u.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if !(res <= tol * norm.max(1.0)) {
        return Err(Error::SolverBreakdown(format!(
            "resolvent residual {res:e} exceeds {tol:e} at z = {z}"
        )));
    }
    Ok(u)
}

fn ring_column(potential: &[f64], z: Complex64, source: usize) -> Vec<Complex64> {
    let len = potential.len();
    // chain site j (1..len) is ring site source + j
    let diag = |j: usize| Complex64::new(potential[(source + j) % len], 0.0) - z;
    let last = len - 1;

    // right[j]: Schur pivot of chain sites j..=last; left[j]: of 1..=j
    let mut right = vec![Complex64::new(0.0, 0.0); len];
    right[last] = diag(last);
    for j in (1..last).rev() {
        right[j] = diag(j) - right[j + 1].inv();
    }
    let mut left = vec![Complex64::new(0.0, 0.0); len];
    left[1] = diag(1);
    for j in 2..=last {
        left[j] = diag(j) - left[j - 1].inv();
    }

    // w = B⁻¹δ_1, w' = B⁻¹δ_last on the open chain
    let mut w = vec![Complex64::new(0.0, 0.0); len];
    w[1] = right[1].inv();
    for j in 2..=last {
        w[j] = -w[j - 1] / right[j];
    }
    let mut wp = vec![Complex64::new(0.0, 0.0); len];
    wp[last] = left[last].inv();
    for j in (1..last).rev() {
        wp[j] = -wp[j + 1] / left[j];
    }

    let coupling = w[1] + w[last] + wp[1] + wp[last];
    let u0 = (Complex64::new(potential[source], 0.0) - z - coupling).inv();
    let mut u = vec![Complex64::new(0.0, 0.0); len];
    u[source] = u0;
    for j in 1..len {
        u[(source + j) % len] = -u0 * (w[j] + wp[j]);
    }
    u
}

fn dense_column(
    lattice: &TorusLattice,
    realization: &Realization,
    z: Complex64,
    source: usize,
) -> Result<Vec<Complex64>> {
    let n = lattice.sites();
    let mut a = Mat::<Complex64>::zeros(n, n);
    for x in 0..n {
        a[(x, x)] = Complex64::new(realization.potential[x], 0.0) - z;
        for &y in lattice.neighbors(x) {
            a[(x, y)] += Complex64::new(1.0, 0.0);
        }
    }
    let par = Par::Seq;
    let mut perm = vec![0usize; n];
    let mut perm_inv = vec![0usize; n];
    let mut buf = MemBuffer::new(factor::lu_in_place_scratch::<usize, Complex64>(n, n, par, Default::default()));
    let (_, p) = factor::lu_in_place(
        a.as_mut(),
        &mut perm,
        &mut perm_inv,
        par,
        MemStack::new(&mut buf),
        Default::default(),
    );
    if (0..n).any(|i| a[(i, i)].norm() == 0.0) {
        return Err(Error::SolverBreakdown(format!("singular LU pivot at z = {z}")));
    }
    let mut rhs = Mat::<Complex64>::zeros(n, 1);
    rhs[(source, 0)] = Complex64::new(1.0, 0.0);
    let mut buf = MemBuffer::new(solve::solve_in_place_scratch::<usize, Complex64>(n, 1, par));
    solve::solve_in_place(a.as_ref(), a.as_ref(), p, rhs.as_mut(), par, MemStack::new(&mut buf));
    Ok((0..n).map(|i| rhs[(i, 0)]).collect())
}
