//! Seeded Monte Carlo over disorder realizations.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{build_hamiltonian, DisorderModel, LatticeOperator, Realization, TorusLattice};
use crate::spectral::{self, EigenSystem};

/// A lattice, a disorder law, and how many realizations to draw from it.
///
/// Realization `k` is always drawn from `(master_seed, k)`, and results come
/// back in ascending index order whatever the worker count.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub lattice: TorusLattice,
    pub disorder: DisorderModel,
    pub realizations: usize,
    pub workers: usize,
}

impl Ensemble {
    pub fn new(lattice: TorusLattice, disorder: DisorderModel, realizations: usize) -> Result<Self> {
        if realizations == 0 {
            return Err(Error::InvalidParameter("at least one realization is required".into()));
        }
        Ok(Ensemble { lattice, disorder, realizations, workers: 1 })
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn realization(&self, index: u64) -> Realization {
        self.disorder.sample_potential(index, &self.lattice)
    }

    pub fn hamiltonian(&self, realization: &Realization) -> Result<LatticeOperator> {
        build_hamiltonian(&self.lattice, realization)
    }

    pub fn eigensystem(&self, realization: &Realization) -> Result<EigenSystem> {
        let h = self.hamiltonian(realization)?;
        spectral::diagonalize(&h, None).map_err(|e| tag(e, realization))
    }

    pub fn eigenvalues(&self, realization: &Realization) -> Result<Vec<f64>> {
        let h = self.hamiltonian(realization)?;
        spectral::eigenvalues(&h).map_err(|e| tag(e, realization))
    }

    /// `(index, seed)` of every realization this ensemble draws.
    pub fn seeds(&self) -> Vec<(u64, u64)> {
        (0..self.realizations as u64).map(|k| (k, self.disorder.realization_seed(k))).collect()
    }

    /// Applies `f` to every realization on `workers` threads; output is in
    /// ascending realization index. The first error (by index) wins.
    pub fn map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&Realization) -> Result<T> + Sync + Send,
    {
        let work = |k: u64| f(&self.realization(k));
        if self.workers <= 1 {
            return (0..self.realizations as u64).map(work).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
        pool.install(|| {
            (0..self.realizations as u64)
                .into_par_iter()
                .map(work)
                .collect::<Vec<_>>()
                .into_iter()
                .collect()
        })
    }
}

fn tag(err: Error, r: &Realization) -> Error {
    match err {
        Error::NonConvergence { reason, .. } => {
            Error::NonConvergence { index: r.index, seed: r.seed, reason }
        }
        other => other,
    }
}
