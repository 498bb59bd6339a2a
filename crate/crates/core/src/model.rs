//! Discrete torus geometry, iid disorder, and the lattice operators built on
//! top of them: the Anderson Hamiltonian `H = -Δ + V`, the first-coordinate
//! position operator, and the velocity operator.
//!
//! Sign convention: `-Δ` is the plain adjacency operator of the torus, so
//! `(Hφ)(x) = Σ_{|x-y|=1} φ(y) + V(x) φ(x)`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic box `Λ_L = (ℤ/Lℤ)^d` with row-major site indexing.
///
/// Site `x = (x_1, .., x_d)` has index `Σ_k x_k L^{d-k}`, so the first
/// coordinate is the most significant digit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusLattice {
    dim: usize,
    side: usize,
    sites: usize,
    neighbors: Vec<usize>,
}

impl TorusLattice {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("lattice dimension must be at least 1".into()));
        }
        if side < 3 {
            return Err(Error::InvalidParameter(format!(
                "torus side length must be at least 3, got {side}"
            )));
        }
        let sites = u32::try_from(dim)
            .ok()
            .and_then(|d| side.checked_pow(d))
            .filter(|&n| n.checked_mul(2 * dim).is_some())
            .ok_or_else(|| {
                Error::InvalidParameter(format!("site count {side}^{dim} overflows"))
            })?;

        let mut lattice = TorusLattice { dim, side, sites, neighbors: Vec::with_capacity(2 * dim * sites) };
        let mut coords = vec![0usize; dim];
        for site in 0..sites {
            lattice.fill_coords(site, &mut coords);
            for axis in 0..dim {
                let stride = lattice.stride(axis);
                let x = coords[axis];
                let up = if x + 1 == side { site + stride - side * stride } else { site + stride };
                let down = if x == 0 { site + (side - 1) * stride } else { site - stride };
                lattice.neighbors.push(up);
                lattice.neighbors.push(down);
            }
        }
        Ok(lattice)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// `N = L^d`.
    pub fn sites(&self) -> usize {
        self.sites
    }

    fn stride(&self, axis: usize) -> usize {
        self.side.pow((self.dim - 1 - axis) as u32)
    }

    fn fill_coords(&self, mut site: usize, out: &mut [usize]) {
        for axis in (0..self.dim).rev() {
            out[axis] = site % self.side;
            site /= self.side;
        }
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        self.fill_coords(site, &mut out);
        out
    }

    pub fn site(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &x| acc * self.side + x % self.side)
    }

    /// The `2d` torus neighbours of `site`, ordered `+ê_1, -ê_1, +ê_2, ...`.
    pub fn neighbors(&self, site: usize) -> &[usize] {
        let k = 2 * self.dim;
        &self.neighbors[site * k..(site + 1) * k]
    }

    /// Centered first coordinate `c_1(x) = x_1 - (L-1)/2`.
    pub fn centered_first(&self, site: usize) -> f64 {
        (site / self.stride(0)) as f64 - (self.side as f64 - 1.0) / 2.0
    }

    /// Signed unit displacement `y - x` along axis 1 when `y` is the `±ê_1`
    /// neighbour of `x` (wrap-aware); zero for every other pair.
    pub fn first_axis_step(&self, x: usize, y: usize) -> f64 {
        let nb = self.neighbors(x);
        if nb[0] == y {
            1.0
        } else if nb[1] == y {
            -1.0
        } else {
            0.0
        }
    }

    /// Graph distance on the torus: minimum over windings, summed over axes.
    pub fn distance(&self, x: usize, y: usize) -> usize {
        let (mut a, mut b) = (x, y);
        let mut dist = 0;
        for _ in 0..self.dim {
            let (u, v) = (a % self.side, b % self.side);
            let delta = u.abs_diff(v);
            dist += delta.min(self.side - delta);
            a /= self.side;
            b /= self.side;
        }
        dist
    }
}

/// Single-site law of the iid potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Density {
    /// Uniform on `[-W/2, W/2]`.
    Uniform { width: f64 },
}

impl Density {
    /// `‖ρ‖_∞`.
    pub fn sup(&self) -> f64 {
        match *self {
            Density::Uniform { width } => 1.0 / width,
        }
    }

    /// Compact support `[v_min, v_max]`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Density::Uniform { width } => (-0.5 * width, 0.5 * width),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            // random::<f64>() lies in [0, 1), so draws stay inside the support.
            Density::Uniform { width } => width * (rng.random::<f64>() - 0.5),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderModel {
    pub density: Density,
    pub master_seed: u64,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stateless seed derivation: `index -> master + γ (index + 1)` is a bijection
/// of `u64` (γ odd) and the splitmix finalizer is a bijection, so distinct
/// indices never share a seed.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

impl DisorderModel {
    pub fn uniform(width: f64, master_seed: u64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "disorder width must be positive and finite, got {width}"
            )));
        }
        Ok(DisorderModel { density: Density::Uniform { width }, master_seed })
    }

    pub fn rho_sup(&self) -> f64 {
        self.density.sup()
    }

    pub fn support(&self) -> (f64, f64) {
        self.density.support()
    }

    pub fn realization_seed(&self, index: u64) -> u64 {
        derive_seed(self.master_seed, index)
    }

    /// Draws the `index`-th realization: `N` iid values from the density,
    /// a pure function of `(master_seed, index)`.
    pub fn sample_potential(&self, index: u64, lattice: &TorusLattice) -> Realization {
        let seed = self.realization_seed(index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let potential = (0..lattice.sites()).map(|_| self.density.draw(&mut rng)).collect();
        Realization { index, seed, potential }
    }
}

/// One sampled potential `V_ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub index: u64,
    pub seed: u64,
    pub potential: Vec<f64>,
}

impl Realization {
    /// A hand-built potential, e.g. `V ≡ 0` for clean-lattice checks.
    pub fn from_potential(potential: Vec<f64>) -> Self {
        Realization { index: 0, seed: 0, potential }
    }
}

/// How the velocity operator is discretised on the torus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityVariant {
    /// Literal `i[H_L, X_{1,L}]`; seam bonds carry `±i(L-1)` factors.
    #[default]
    Commutator,
    /// `i H(x,y) δ_1(x,y)` with the wrap-aware unit step.
    Current,
}

impl FromStr for VelocityVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "commutator" => Ok(VelocityVariant::Commutator),
            "current" => Ok(VelocityVariant::Current),
            other => Err(Error::UnknownTag { kind: "velocity variant", value: other.to_string() }),
        }
    }
}

impl fmt::Display for VelocityVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VelocityVariant::Commutator => "commutator",
            VelocityVariant::Current => "current",
        })
    }
}

/// Sparse Hermitian operator on `ℓ²(Λ_L)`: a diagonal plus off-diagonal
/// `(row, col, value)` triples stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeOperator {
    diagonal: Vec<Complex64>,
    entries: Vec<(usize, usize, Complex64)>,
    row_start: Vec<usize>,
    real_symmetric: bool,
}

impl LatticeOperator {
    /// Builds from unsorted off-diagonal triples; duplicates are summed.
    pub fn from_parts(diagonal: Vec<Complex64>, mut entries: Vec<(usize, usize, Complex64)>) -> Self {
        let n = diagonal.len();
        entries.sort_by_key(|&(r, c, _)| (r, c));
        entries.dedup_by(|next, kept| {
            if next.0 == kept.0 && next.1 == kept.1 {
                kept.2 += next.2;
                true
            } else {
                false
            }
        });
        entries.retain(|&(r, c, v)| r != c && v != Complex64::new(0.0, 0.0));
        let mut row_start = vec![0; n + 1];
        for &(r, _, _) in &entries {
            row_start[r + 1] += 1;
        }
        for i in 0..n {
            row_start[i + 1] += row_start[i];
        }
        let real_symmetric =
            diagonal.iter().all(|d| d.im == 0.0) && entries.iter().all(|e| e.2.im == 0.0);
        LatticeOperator { diagonal, entries, row_start, real_symmetric }
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_real_symmetric(&self) -> bool {
        self.real_symmetric
    }

    pub fn diagonal(&self) -> &[Complex64] {
        &self.diagonal
    }

    pub fn row(&self, r: usize) -> &[(usize, usize, Complex64)] {
        &self.entries[self.row_start[r]..self.row_start[r + 1]]
    }

    pub fn off_diagonal(&self) -> &[(usize, usize, Complex64)] {
        &self.entries
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex64 {
        if r == c {
            return self.diagonal[r];
        }
        let row = self.row(r);
        row.binary_search_by_key(&c, |e| e.1).map_or(Complex64::new(0.0, 0.0), |k| row[k].2)
    }

    /// Largest entrywise deviation from `A(x,y) = conj(A(y,x))`.
    pub fn hermiticity_defect(&self) -> f64 {
        let diag = self.diagonal.iter().map(|d| d.im.abs()).fold(0.0, f64::max);
        self.entries
            .iter()
            .map(|&(r, c, v)| (v - self.entry(c, r).conj()).norm())
            .fold(diag, f64::max)
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim())
            .map(|r| {
                self.row(r).iter().fold(self.diagonal[r] * v[r], |acc, &(_, c, a)| acc + a * v[c])
            })
            .collect()
    }

    pub fn apply_real(&self, v: &[f64]) -> Vec<Complex64> {
        (0..self.dim())
            .map(|r| {
                self.row(r).iter().fold(self.diagonal[r] * v[r], |acc, &(_, c, a)| acc + a * v[c])
            })
            .collect()
    }

    /// Dense row-major copy of the real part; `None` if any entry is complex.
    pub fn to_dense_real(&self) -> Option<Vec<f64>> {
        if !self.real_symmetric {
            return None;
        }
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        for (i, d) in self.diagonal.iter().enumerate() {
            out[i * n + i] = d.re;
        }
        for &(r, c, v) in &self.entries {
            out[r * n + c] = v.re;
        }
        Some(out)
    }

    /// Entrywise upper bound on the operator norm (max absolute row sum).
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim())
            .map(|r| self.diagonal[r].norm() + self.row(r).iter().map(|e| e.2.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `H = -Δ + V` on the torus.
pub fn build_hamiltonian(lattice: &TorusLattice, realization: &Realization) -> Result<LatticeOperator> {
    let n = lattice.sites();
    if realization.potential.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: realization.potential.len() });
    }
    let diagonal = realization.potential.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut entries = Vec::with_capacity(2 * lattice.dim() * n);
    for x in 0..n {
        for &y in lattice.neighbors(x) {
            entries.push((x, y, Complex64::new(1.0, 0.0)));
        }
    }
    Ok(LatticeOperator::from_parts(diagonal, entries))
}

/// Multiplication by the centered first coordinate, `X_{1,L}`.
pub fn position_operator(lattice: &TorusLattice) -> LatticeOperator {
    let diagonal = (0..lattice.sites())
        .map(|x| Complex64::new(lattice.centered_first(x), 0.0))
        .collect();
    LatticeOperator::from_parts(diagonal, Vec::new())
}

/// Velocity operator `ẋ_1` built from the off-diagonal part of `h`.
pub fn velocity_operator(
    lattice: &TorusLattice,
    h: &LatticeOperator,
    variant: VelocityVariant,
) -> Result<LatticeOperator> {
    let n = lattice.sites();
    if h.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: h.dim() });
    }
    let i = Complex64::new(0.0, 1.0);
    let entries = h
        .off_diagonal()
        .iter()
        .map(|&(x, y, hxy)| {
            let factor = match variant {
                VelocityVariant::Commutator => lattice.centered_first(y) - lattice.centered_first(x),
                VelocityVariant::Current => lattice.first_axis_step(x, y),
            };
            (x, y, i * hxy * factor)
        })
        .collect();
    Ok(LatticeOperator::from_parts(vec![Complex64::new(0.0, 0.0); n], entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_of_four() {
        let lat = TorusLattice::new(1, 4).unwrap();
        assert_eq!(lat.sites(), 4);
        let mut nb = lat.neighbors(0).to_vec();
        nb.sort();
        assert_eq!(nb, vec![1, 3]);
        let c: Vec<f64> = (0..4).map(|x| lat.centered_first(x)).collect();
        assert_eq!(c, vec![-1.5, -0.5, 0.5, 1.5]);
    }

    #[test]
    fn square_torus_degree() {
        let lat = TorusLattice::new(2, 3).unwrap();
        assert_eq!(lat.sites(), 9);
        for x in 0..9 {
            let mut nb = lat.neighbors(x).to_vec();
            nb.sort();
            nb.dedup();
            assert_eq!(nb.len(), 4);
            assert!(!nb.contains(&x));
        }
    }

    #[test]
    fn rejects_small_or_huge_lattices() {
        assert!(TorusLattice::new(1, 2).is_err());
        assert!(TorusLattice::new(0, 5).is_err());
        assert!(TorusLattice::new(40, 1000).is_err());
    }

    #[test]
    fn centered_coordinates_sum_to_zero_on_lines() {
        for side in [3, 4, 7] {
            let lat = TorusLattice::new(2, side).unwrap();
            for x2 in 0..side {
                let sum: f64 = (0..side).map(|x1| lat.centered_first(lat.site(&[x1, x2]))).sum();
                assert!(sum.abs() < 1e-12);
            }
            let max = (0..lat.sites()).map(|x| lat.centered_first(x).abs()).fold(0.0, f64::max);
            assert!(max <= (side as f64 - 1.0) / 2.0);
        }
    }

    #[test]
    fn torus_distance_wraps() {
        let lat = TorusLattice::new(2, 5).unwrap();
        assert_eq!(lat.distance(lat.site(&[0, 0]), lat.site(&[4, 4])), 2);
        assert_eq!(lat.distance(lat.site(&[1, 0]), lat.site(&[3, 2])), 4);
        assert_eq!(lat.distance(7, 7), 0);
    }

    #[test]
    fn potential_support_and_determinism() {
        let lat = TorusLattice::new(1, 50).unwrap();
        let model = DisorderModel::uniform(4.0, 17).unwrap();
        let a = model.sample_potential(3, &lat);
        let b = model.sample_potential(3, &lat);
        assert_eq!(a, b);
        assert!(a.potential.iter().all(|v| (-2.0..=2.0).contains(v)));
        let c = model.sample_potential(4, &lat);
        assert_ne!(a.potential, c.potential);
        assert_eq!(model.rho_sup(), 0.25);
    }

    #[test]
    fn potential_mean_is_centered() {
        // Uniform W=4: variance 16/12, so 3σ/√n = 3·1.1547/316.2 ≈ 0.011 < 0.02.
        let lat = TorusLattice::new(1, 100_000).unwrap();
        let model = DisorderModel::uniform(4.0, 1).unwrap();
        let r = model.sample_potential(0, &lat);
        let mean = r.potential.iter().sum::<f64>() / r.potential.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn uniform_density_normalisation() {
        let model = DisorderModel::uniform(2.5, 0).unwrap();
        let (lo, hi) = model.support();
        assert!((model.rho_sup() * (hi - lo) - 1.0).abs() < 1e-15);
        assert!(DisorderModel::uniform(0.0, 0).is_err());
        assert!(DisorderModel::uniform(f64::NAN, 0).is_err());
    }

    #[test]
    fn hamiltonian_structure() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let model = DisorderModel::uniform(3.0, 5).unwrap();
        let r = model.sample_potential(0, &lat);
        let h = build_hamiltonian(&lat, &r).unwrap();
        assert!(h.is_real_symmetric());
        assert_eq!(h.hermiticity_defect(), 0.0);
        for x in 0..lat.sites() {
            assert_eq!(h.row(x).len(), 4);
            assert!(h.row(x).iter().all(|e| e.2 == Complex64::new(1.0, 0.0)));
            assert_eq!(h.entry(x, x).re, r.potential[x]);
        }
        let short = Realization::from_potential(vec![0.0; 3]);
        assert!(matches!(build_hamiltonian(&lat, &short), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn current_velocity_on_ring_of_four() {
        let lat = TorusLattice::new(1, 4).unwrap();
        let h = build_hamiltonian(&lat, &Realization::from_potential(vec![0.0; 4])).unwrap();
        let v = velocity_operator(&lat, &h, VelocityVariant::Current).unwrap();
        assert_eq!(v.off_diagonal().len(), 8);
        for &(x, y, val) in v.off_diagonal() {
            assert_eq!(val.re, 0.0);
            assert_eq!(val.im.abs(), 1.0);
            assert_eq!(val.im, lat.first_axis_step(x, y));
        }
        assert!(v.diagonal().iter().all(|d| d.norm() == 0.0));
        assert_eq!(v.hermiticity_defect(), 0.0);
    }

    #[test]
    fn commutator_velocity_seam_entries() {
        let lat = TorusLattice::new(1, 6).unwrap();
        let h = build_hamiltonian(&lat, &Realization::from_potential(vec![0.5; 6])).unwrap();
        let v = velocity_operator(&lat, &h, VelocityVariant::Commutator).unwrap();
        assert_eq!(v.entry(5, 0), Complex64::new(0.0, -5.0));
        assert_eq!(v.entry(0, 5), Complex64::new(0.0, 5.0));
        assert_eq!(v.entry(2, 3), Complex64::new(0.0, 1.0));
        assert_eq!(v.hermiticity_defect(), 0.0);
    }

    #[test]
    fn velocity_variant_tags() {
        assert_eq!("current".parse::<VelocityVariant>().unwrap(), VelocityVariant::Current);
        assert!(matches!("bogus".parse::<VelocityVariant>(), Err(Error::UnknownTag { .. })));
    }

    #[test]
    fn seeds_are_distinct_for_nearby_indices() {
        let mut seeds: Vec<u64> = (0..10_000).map(|i| derive_seed(42, i)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 10_000);
    }
}
