mod common;

use proptest::prelude::*;

use rvlbm::dispersion::{amplification_matrix, compare_with_prediction, SeriesMethod, Tolerances};
use rvlbm::equivalent::{advection_vector, derive_equivalent_equation};
use rvlbm::lattice::{default_basis, shift_conjugation, VelocitySet};
use rvlbm::scheme::{Grid, SchemeSpec, ShiftMode, Simulation, StateField};

#[derive(Clone, Debug)]
struct Draw {
    d2: bool,
    lambda: f64,
    weights: Vec<f64>,
    rates: Vec<f64>,
    u: Vec<f64>,
}

fn draw() -> impl Strategy<Value = Draw> {
    (
        any::<bool>(),
        0.5f64..2.0,
        prop::collection::vec(0.05f64..1.0, 5),
        prop::collection::vec(0.3f64..1.9, 4),
        prop::collection::vec(-0.5f64..0.5, 2),
    )
        .prop_map(|(d2, lambda, weights, rates, u)| Draw {
            d2,
            lambda,
            weights,
            rates,
            u,
        })
}

impl Draw {
    fn vset(&self) -> VelocitySet {
        if self.d2 {
            VelocitySet::d2q5(self.lambda)
        } else {
            VelocitySet::d1q3(self.lambda)
        }
    }

    fn spec_with(&self, shift: ShiftMode) -> SchemeSpec {
        let vset = self.vset();
        let (d, q) = (vset.dim(), vset.q());
        let w = &self.weights[..q];
        let total: f64 = w.iter().sum();
        let mut s = vec![0.0];
        s.extend_from_slice(&self.rates[..q - 1]);
        SchemeSpec::new(vset, default_basis(d, q).unwrap(), s, w.iter().map(|x| x / total).collect(), shift)
            .unwrap()
    }

    fn shift(&self) -> Vec<f64> {
        let d = if self.d2 { 2 } else { 1 };
        self.u[..d].iter().map(|x| x * self.lambda).collect()
    }

    fn spec(&self) -> SchemeSpec {
        self.spec_with(ShiftMode::Constant(self.shift()))
    }
}

/// Every grid mode has spectral radius at most one.
fn stable_on(spec: &SchemeSpec, n: usize, dt: f64) -> bool {
    let d = spec.dim();
    (0..n.pow(d as u32)).all(|idx| {
        let k: Vec<f64> = (0..d)
            .map(|a| 2.0 * std::f64::consts::PI * ((idx / n.pow(a as u32)) % n) as f64)
            .collect();
        let g = amplification_matrix(spec, &k, dt).unwrap();
        g.eigenvalues().unwrap().iter().all(|z| z.norm() <= 1.0 + 1e-9)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn moment_matrix_row_zero_is_ones(p in draw()) {
        let spec = p.spec();
        let m = spec.moment_matrix().unwrap();
        for j in 0..spec.q() {
            prop_assert_eq!(m.matrix()[(0, j)], 1.0);
        }
    }

    #[test]
    fn rest_matrix_is_polynomials_at_velocities(p in draw()) {
        let spec = p.spec();
        let m0 = spec.rest_moment_matrix().unwrap();
        let v = spec.velocity_set().velocities();
        for (k, poly) in spec.basis().iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                prop_assert_eq!(m0.matrix()[(k, j)], poly.evaluate(vj));
            }
        }
    }

    #[test]
    fn moment_matrices_invert(p in draw()) {
        let spec = p.spec();
        let m = spec.moment_matrix().unwrap();
        let id = m.matrix() * m.inverse();
        let q = spec.q();
        for a in 0..q {
            for b in 0..q {
                let expect = if a == b { 1.0 } else { 0.0 };
                prop_assert!((id[(a, b)] - expect).abs() < 1e-12);
            }
        }
        let r0 = shift_conjugation(spec.basis(), spec.velocity_set(), &vec![0.0; spec.dim()]).unwrap();
        prop_assert!((r0 - nalgebra::DMatrix::<f64>::identity(q, q)).amax() <= 1e-14);
    }

    #[test]
    fn mass_is_conserved(p in draw(), seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let spec = p.spec();
        let d = spec.dim();
        let n = if d == 1 { 48 } else { 12 };
        let grid = Grid::new(vec![n; d], vec![1.0; d]).unwrap();
        prop_assume!(stable_on(&spec, n, grid.dx() / spec.lambda()));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<Vec<f64>> = (0..spec.q())
            .map(|_| (0..grid.cells()).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let state = StateField::from_distributions(grid, spec.lambda(), f).unwrap();
        let m0 = state.total_mass();
        let mut sim = Simulation::new(spec, state).unwrap();
        sim.advance(1000);
        prop_assert!((sim.state().total_mass() - m0).abs() / m0 <= 1e-13);
    }

    #[test]
    fn uniform_equilibrium_is_invariant(p in draw(), rho in 0.1f64..3.0) {
        for shift in [ShiftMode::Zero, ShiftMode::Constant(p.shift()), ShiftMode::Sine(p.shift())] {
            let spec = p.spec_with(shift);
            let d = spec.dim();
            let grid = Grid::new(vec![8; d], vec![1.0; d]).unwrap();
            let state = StateField::at_equilibrium(grid, &spec, |_| rho);
            let start = state.distributions().to_vec();
            let mut sim = Simulation::new(spec, state).unwrap();
            sim.advance(5);
            for (a, b) in sim.state().distributions().iter().flatten().zip(start.iter().flatten()) {
                prop_assert!((a - b).abs() <= 1e-14 * rho);
            }
        }
    }

    #[test]
    fn equal_rates_make_the_frame_irrelevant(p in draw(), s in 0.3f64..1.9) {
        let base = p.spec();
        let rates: Vec<f64> = (0..base.q()).map(|k| if k == 0 { 0.0 } else { s }).collect();
        let shifted = base.with_relaxation(rates).unwrap();
        let rest = shifted.with_shift(ShiftMode::Zero).unwrap();
        let d = base.dim();
        let grid = Grid::new(vec![6; d], vec![1.0; d]).unwrap();
        let f: Vec<Vec<f64>> = (0..base.q())
            .map(|j| (0..grid.cells()).map(|c| 0.2 + 0.1 * ((j * 5 + c) as f64).sin()).collect())
            .collect();
        let run = |spec: SchemeSpec| {
            let state = StateField::from_distributions(grid.clone(), spec.lambda(), f.clone()).unwrap();
            let mut sim = Simulation::new(spec, state).unwrap();
            sim.step();
            sim.into_state()
        };
        let a = run(shifted);
        let b = run(rest);
        for (x, y) in a.distributions().iter().flatten().zip(b.distributions().iter().flatten()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn low_orders_do_not_depend_on_the_shift(p in draw()) {
        let base = p.spec_with(ShiftMode::Zero);
        let reference = derive_equivalent_equation(&base, 3).unwrap();
        for u in [0.1, -0.3, 0.7] {
            let spec = base.with_shift(ShiftMode::Constant(vec![u * p.lambda; base.dim()])).unwrap();
            let eq = derive_equivalent_equation(&spec, 3).unwrap();
            prop_assert!(eq.op(0).relative_difference(reference.op(0), 1e-14) <= 1e-10);
            prop_assert!(eq.op(1).relative_difference(reference.op(1), 1e-14) <= 1e-10);
        }
    }

    #[test]
    fn derivative_orders_are_graded(p in draw(), order in 1usize..=3) {
        let eq = derive_equivalent_equation(&p.spec(), order).unwrap();
        prop_assert!(eq.structure_violations().is_empty());
        prop_assert_eq!(eq.order(), order);
        let c = advection_vector(&p.spec());
        let predicted = eq.advection();
        for (a, b) in c.iter().zip(&predicted) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn rates_of_two_remove_diffusion(p in draw()) {
        let spec = p.spec();
        let twos = (0..spec.q()).map(|k| if k == 0 { 0.0 } else { 2.0 }).collect();
        let eq = derive_equivalent_equation(&spec.with_relaxation(twos).unwrap(), 2).unwrap();
        prop_assert!(eq.op(1).max_abs() <= 1e-14);
    }

    #[test]
    fn amplification_is_conjugate_symmetric(p in draw(), k0 in -4.0f64..4.0, k1 in -4.0f64..4.0, dt in 0.001f64..0.1) {
        let spec = p.spec();
        let k: Vec<f64> = [k0, k1][..spec.dim()].to_vec();
        let neg: Vec<f64> = k.iter().map(|x| -x).collect();
        let a = amplification_matrix(&spec, &k, dt).unwrap();
        let b = amplification_matrix(&spec, &neg, dt).unwrap();
        for (x, y) in a.g.iter().zip(b.g.iter()) {
            prop_assert!((x - y.conj()).norm() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn predictor_matches_oracle(p in draw(), k0 in 0.3f64..4.0, k1 in -4.0f64..4.0) {
        let spec = p.spec();
        let k: Vec<f64> = [k0, k1][..spec.dim()].to_vec();
        let r = compare_with_prediction(&spec, &[k], &SeriesMethod::default(), &Tolerances::default()).unwrap();
        prop_assert!(r.pass, "{:?}", r.samples[0]);
    }
}
