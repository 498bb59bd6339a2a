use std::f64::consts::PI;

use anderson_kubo::diagnostics::{fractional_moment_green, GreenProbe};
use anderson_kubo::harness::{merge, ExperimentConfig, Partial};
use anderson_kubo::measures::{
    cauchy_conductivity, conductivity_measure, psi_rectangle, sigma_bar, uniform_edges, BinnedMeasure, PsiEstimator,
    Symmetry,
};
use anderson_kubo::scaling::{fit_scaling, mott_sweep, CapPolicy, MottConfig, Observable};
use anderson_kubo::{
    build_hamiltonian, diagonalize, position_operator, velocity_operator, DisorderModel, Ensemble, EnergyWindows,
    Interval, TorusLattice, VelocityVariant,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn system(dim: usize, side: usize, width: f64, seed: u64) -> (TorusLattice, anderson_kubo::Realization) {
    let lat = TorusLattice::new(dim, side).unwrap();
    let r = DisorderModel::uniform(width, seed).unwrap().sample_potential(0, &lat);
    (lat, r)
}

fn lattice_shape() -> impl Strategy<Value = (usize, usize)> {
    prop_oneof![(Just(1usize), 3usize..40), (Just(2usize), 3usize..7), (Just(3usize), 3usize..4)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operators_are_hermitian((dim, side) in lattice_shape(), width in 0.1f64..20.0, seed in any::<u64>()) {
        let (lat, r) = system(dim, side, width, seed);
        let h = build_hamiltonian(&lat, &r).unwrap();
        prop_assert_eq!(h.hermiticity_defect(), 0.0);
        for variant in [VelocityVariant::Commutator, VelocityVariant::Current] {
            let v = velocity_operator(&lat, &h, variant).unwrap();
            prop_assert_eq!(v.hermiticity_defect(), 0.0);
        }
    }

    #[test]
    fn spectrum_is_contained((dim, side) in lattice_shape(), width in 0.1f64..20.0, seed in any::<u64>()) {
        let (lat, r) = system(dim, side, width, seed);
        let eig = diagonalize(&build_hamiltonian(&lat, &r).unwrap(), None).unwrap();
        let vmin = r.potential.iter().cloned().fold(f64::INFINITY, f64::min);
        let vmax = r.potential.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let d = 2.0 * dim as f64;
        for &e in eig.energies() {
            prop_assert!(e >= -d + vmin - 1e-10 && e <= d + vmax + 1e-10);
        }
    }

    #[test]
    fn commutator_identity((dim, side) in lattice_shape(), width in 0.1f64..20.0, seed in any::<u64>()) {
        let (lat, r) = system(dim, side, width, seed);
        let h = build_hamiltonian(&lat, &r).unwrap();
        let eig = diagonalize(&h, None).unwrap();
        let v = velocity_operator(&lat, &h, VelocityVariant::Commutator).unwrap();
        let all = 0..eig.dim();
        let vm = eig.matrix_elements(&v, all.clone(), all.clone()).unwrap();
        let xm = eig.matrix_elements(&position_operator(&lat), all.clone(), all.clone()).unwrap();
        let e = eig.energies();
        for n in all.clone() {
            for m in all.clone() {
                let de = e[n] - e[m];
                prop_assert!((vm[(n, m)] - Complex64::new(0.0, de) * xm[(n, m)]).norm() <= 1e-9 * (1.0 + de.abs()));
            }
        }
    }

    #[test]
    fn windows_partition_the_spectrum(side in 3usize..40, seed in any::<u64>(), mut cuts in prop::collection::vec(-6.0f64..6.0, 0..6)) {
        let (lat, r) = system(1, side, 4.0, seed);
        let eig = diagonalize(&build_hamiltonian(&lat, &r).unwrap(), None).unwrap();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut bounds = vec![f64::NEG_INFINITY];
        bounds.extend(cuts);
        bounds.push(f64::INFINITY);
        let mut next = 0;
        for w in bounds.windows(2) {
            let range = eig.window(&Interval { lo: w[0], hi: w[1] });
            prop_assert_eq!(range.start, next);
            next = range.end;
        }
        prop_assert_eq!(next, side);
    }

    #[test]
    fn spectral_projections_are_idempotent(side in 3usize..30, seed in any::<u64>(), lo in -4.0f64..2.0, width in 0.1f64..4.0) {
        let (lat, r) = system(1, side, 4.0, seed);
        let eig = diagonalize(&build_hamiltonian(&lat, &r).unwrap(), None).unwrap();
        let idx = eig.window(&Interval::new(lo, lo + width).unwrap());
        let n = side;
        let mut p = vec![0.0; n * n];
        for k in idx {
            let v = eig.vector(k);
            for i in 0..n {
                for j in 0..n {
                    p[i * n + j] += v[i] * v[j];
                }
            }
        }
        let mut defect: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let pp: f64 = (0..n).map(|k| p[i * n + k] * p[k * n + j]).sum();
                defect += (pp - p[i * n + j]).powi(2);
            }
        }
        prop_assert!(defect.sqrt() <= 1e-8);
    }

    #[test]
    fn sandwich_and_estimator_agreement(side in 8usize..48, seed in any::<u64>(), fermi in -1.5f64..1.5, k in 1usize..12) {
        let (lat, r) = system(1, side, 4.0, seed);
        let h = build_hamiltonian(&lat, &r).unwrap();
        let eig = diagonalize(&h, None).unwrap();
        let v = velocity_operator(&lat, &h, VelocityVariant::Commutator).unwrap();
        let x = position_operator(&lat);
        let edges = uniform_edges(0.0, 1.2, 12).unwrap();
        let s = conductivity_measure(&eig, &v, fermi, &edges).unwrap();
        prop_assert!(s.measure.mass_mean.iter().all(|m| *m >= 0.0));
        prop_assert!((s.measure.total_mass_mean - s.measure.bin_total()).abs() <= 1e-10 * s.measure.bin_total());
        let nu = edges[k];
        let w = EnergyWindows::new(fermi, nu).unwrap();
        let bar = sigma_bar(&s.measure, nu).unwrap();
        let outer = psi_rectangle(&eig, &x, &w.i_plus, &w.i_minus, PsiEstimator::Position).unwrap().value;
        let inner = psi_rectangle(&eig, &x, &w.j_plus, &w.j_minus, PsiEstimator::Position).unwrap().value;
        let slack = 1e-9 * bar;
        prop_assert!(0.5 * PI * inner <= bar + slack, "lower: {} > {}", 0.5 * PI * inner, bar);
        prop_assert!(bar <= PI * outer + slack, "upper: {} > {}", bar, PI * outer);
        let outer_v = psi_rectangle(&eig, &v, &w.i_plus, &w.i_minus, PsiEstimator::Velocity).unwrap();
        prop_assert_eq!(outer_v.degenerate_pairs, 0);
        prop_assert!((outer_v.value - outer).abs() <= 1e-9 * outer.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn binned_and_pairwise_accumulation_agree(side in 8usize..40, seed in any::<u64>(), k in 1usize..10) {
        // Σ̂((0, ν]) from the bins vs a direct sum over I_- × I_+ pairs with ΔE ≤ ν.
        let (lat, r) = system(1, side, 3.0, seed);
        let h = build_hamiltonian(&lat, &r).unwrap();
        let eig = diagonalize(&h, None).unwrap();
        let v = velocity_operator(&lat, &h, VelocityVariant::Commutator).unwrap();
        let edges = uniform_edges(0.0, 1.0, 10).unwrap();
        let s = conductivity_measure(&eig, &v, 0.0, &edges).unwrap();
        let nu = edges[k];
        let w = EnergyWindows::new(0.0, nu).unwrap();
        let rows = eig.window(&w.i_plus);
        let cols = eig.window(&w.i_minus);
        let e = eig.energies();
        let mut direct = 0.0;
        if !rows.is_empty() && !cols.is_empty() {
            let m = eig.matrix_elements(&v, rows.clone(), cols.clone()).unwrap();
            for (a, n) in rows.clone().enumerate() {
                for (b, mm) in cols.clone().enumerate() {
                    let de = e[n] - e[mm];
                    if de <= nu {
                        direct += PI * m[(a, b)].norm_sqr() / (side as f64 * de);
                    }
                }
            }
        }
        let binned = s.measure.cumulative(nu).unwrap();
        prop_assert!((binned - direct).abs() <= 1e-12 * (1.0 + direct));
    }

    #[test]
    fn cauchy_symmetry_and_positivity(masses in prop::collection::vec(0.0f64..3.0, 1..20), eta in 1e-3f64..2.0, nu in 0.0f64..5.0) {
        let edges = uniform_edges(0.0, 4.0, masses.len()).unwrap();
        let m = BinnedMeasure::single(edges, masses, Symmetry::Even).unwrap();
        let a = cauchy_conductivity(&m, eta, nu).unwrap();
        let b = cauchy_conductivity(&m, eta, -nu).unwrap();
        let scale = 1.0 + a.norm();
        prop_assert!((a.re - b.re).abs() <= 1e-10 * scale);
        prop_assert!((a.im + b.im).abs() <= 1e-10 * scale);
        prop_assert!(a.re >= 0.0 && b.re >= 0.0);
    }

    #[test]
    fn scaling_round_trip(log_c in -5.0f64..5.0, gamma in -1.0f64..5.0, lo in -4.0f64..-2.0) {
        let nu: Vec<f64> = (0..10).map(|k| 10f64.powf(lo + (lo.abs() - 1.0) * k as f64 / 9.0)).collect();
        let y: Vec<f64> = nu.iter().map(|&n| log_c.exp() * n * n * (1.0 / n).ln().powf(gamma)).collect();
        let fit = fit_scaling(&nu, &y, &vec![None; 10]).unwrap();
        prop_assert!((fit.gamma - gamma).abs() <= 1e-3 * gamma.abs().max(1.0));
        prop_assert!((fit.log_c - log_c).abs() <= 1e-3 * log_c.abs().max(1.0));
    }

    #[test]
    fn merge_ignores_arrival_order(values in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..12), shift in 0usize..12) {
        let partials: Vec<Partial> = values
            .iter()
            .enumerate()
            .map(|(i, v)| Partial { config_hash: "h".into(), index: i as u64, values: v.clone() })
            .collect();
        let mut rotated = partials.clone();
        let len = rotated.len();
        rotated.rotate_left(shift % len);
        prop_assert_eq!(merge(&partials).unwrap(), merge(&rotated).unwrap());
    }

    #[test]
    fn canonical_config_round_trips(side in 3usize..1000, width in 1e-3f64..100.0, seed in any::<u64>(), nus in prop::collection::vec(1e-4f64..0.99, 0..5)) {
        let mut cfg = ExperimentConfig::default();
        cfg.side = Some(side);
        cfg.width = width;
        cfg.master_seed = seed;
        cfg.nu = nus;
        let back = ExperimentConfig::parse(&cfg.canonical_text()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn sweep_is_grid_order_independent(perm in Just(vec![0usize, 1, 2]).prop_shuffle(), seed in any::<u64>()) {
        let grid = [0.15, 0.25, 0.4];
        let cfg = |g: Vec<f64>| MottConfig {
            dim: 1,
            disorder: DisorderModel::uniform(8.0, seed).unwrap(),
            fermi: 0.0,
            nu_grid: g,
            realizations: 3,
            ell: 0.5,
            side_factor: 20.0,
            side_cap: 64,
            cap_policy: CapPolicy::Drop,
            observable: Observable::SigmaBar,
            estimator: PsiEstimator::Position,
            variant: VelocityVariant::Commutator,
            workers: 1,
        };
        let base = mott_sweep(&cfg(grid.to_vec())).unwrap();
        let shuffled = mott_sweep(&cfg(perm.iter().map(|&i| grid[i]).collect())).unwrap();
        for row in &base.rows {
            let twin = shuffled.rows.iter().find(|r| r.nu == row.nu).unwrap();
            prop_assert_eq!(row, twin);
        }
    }
}

#[test]
fn bulk_eigenvectors_see_equal_velocity_variants() {
    let (lat, r) = system(1, 60, 30.0, 5);
    let h = build_hamiltonian(&lat, &r).unwrap();
    let eig = diagonalize(&h, None).unwrap();
    let vc = velocity_operator(&lat, &h, VelocityVariant::Commutator).unwrap();
    let vj = velocity_operator(&lat, &h, VelocityVariant::Current).unwrap();
    let seam: Vec<usize> = (0..5).chain(55..60).collect();
    let bulk: Vec<usize> = (0..eig.dim())
        .filter(|&n| seam.iter().all(|&x| eig.vector(n)[x].abs() < 1e-8))
        .collect();
    assert!(bulk.len() > 20, "only {} bulk eigenvectors", bulk.len());
    let all = 0..eig.dim();
    let a = eig.matrix_elements(&vc, all.clone(), all.clone()).unwrap();
    let b = eig.matrix_elements(&vj, all.clone(), all).unwrap();
    for &n in &bulk {
        for &m in &bulk {
            let (x, y) = (a[(n, m)], b[(n, m)]);
            // absolute floor: both vectors are < 1e-8 on the seam
            assert!((x - y).norm() <= 1e-6 * x.norm().max(y.norm()) + 1e-12, "{n},{m}: {x} vs {y}");
        }
    }
}

#[test]
fn green_decay_length_is_uniform_in_eta() {
    let ens = Ensemble::new(TorusLattice::new(1, 256).unwrap(), DisorderModel::uniform(10.0, 31).unwrap(), 60).unwrap();
    let fit = |eta: f64| {
        let probe = GreenProbe { energy: 0.0, eta, s: 0.3, max_distance: 60 };
        fractional_moment_green(&ens, &probe).unwrap().fit.unwrap()
    };
    let (a, b) = (fit(1e-3), fit(-1e-2));
    let tol = 3.0 * (a.ell_stderr.powi(2) + b.ell_stderr.powi(2)).sqrt();
    assert!((a.ell - b.ell).abs() <= tol, "ℓ̂ {} ± {} vs {} ± {}", a.ell, a.ell_stderr, b.ell, b.ell_stderr);
}
