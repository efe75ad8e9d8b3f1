mod common;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use rvlbm::dispersion::{amplification_matrix, dominant_eigenvalue, extract_symbol_series, SeriesMethod};
use rvlbm::equivalent::derive_equivalent_equation;
use rvlbm::experiments::mode_amplitude;
use rvlbm::lattice::{default_basis, VelocitySet};
use rvlbm::scheme::{Grid, SchemeSpec, ShiftMode, Simulation, StateField};

/// Characteristic polynomial coefficients (highest degree first) by
/// Faddeev-LeVerrier.
fn characteristic_polynomial(a: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = a.nrows();
    let id = DMatrix::<Complex64>::identity(n, n);
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + &id * coeffs[k - 1];
        let c = -(a * &m).trace() / k as f64;
        coeffs.push(c);
    }
    coeffs
}

/// All roots by Durand-Kerner iteration.
fn polynomial_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let eval = |z: Complex64| coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|i| seed.powu(i as u32) * 1.1).collect();
    for _ in 0..2000 {
        let prev = roots.clone();
        for i in 0..n {
            let denom: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| roots[i] - roots[j])
                .product();
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
        }
        let change = roots.iter().zip(&prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if change < 1e-15 {
            break;
        }
    }
    roots
}

fn random_spec(rng: &mut ChaCha8Rng, d2: bool) -> SchemeSpec {
    let (vset, q) = if d2 { (VelocitySet::d2q5(1.0), 5) } else { (VelocitySet::d1q3(1.0), 3) };
    let d = vset.dim();
    let w: Vec<f64> = (0..q).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut s = vec![0.0];
    s.extend((1..q).map(|_| rng.gen_range(0.6..1.9)));
    let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
    SchemeSpec::new(
        vset,
        default_basis(d, q).unwrap(),
        s,
        w.iter().map(|x| x / total).collect(),
        ShiftMode::Constant(u),
    )
    .unwrap()
}

#[test]
fn dominant_eigenvalue_matches_companion_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..12 {
        let spec = random_spec(&mut rng, trial % 2 == 1);
        let k: Vec<f64> = (0..spec.dim()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let g = amplification_matrix(&spec, &k, 0.02).unwrap().g;
        let lam = dominant_eigenvalue(&g, Complex64::new(1.0, 0.0)).unwrap();
        let roots = polynomial_roots(&characteristic_polynomial(&g));
        let nearest = roots
            .iter()
            .min_by(|a, b| (*a - 1.0).norm().total_cmp(&(*b - 1.0).norm()))
            .unwrap();
        assert!((lam - nearest).norm() < 1e-10, "trial {trial}: {lam} vs {nearest}");
    }
}

fn real_mode(grid: &Grid, k: &[f64], a: &[Complex64]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|aj| {
            (0..grid.cells())
                .map(|c| {
                    let phase: f64 = grid.position(c).iter().zip(k).map(|(x, k)| x * k).sum();
                    (aj * Complex64::from_polar(1.0, phase)).re
                })
                .collect()
        })
        .collect()
}

#[test]
fn one_step_on_a_fourier_mode_is_multiplication_by_g() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..4 {
        let spec = random_spec(&mut rng, trial % 2 == 1);
        let d = spec.dim();
        let grid = Grid::new(vec![32; d], vec![1.0; d]).unwrap();
        let k: Vec<f64> = (0..d).map(|a| 2.0 * std::f64::consts::PI * (a + trial + 1) as f64).collect();
        let g = amplification_matrix(&spec, &k, grid.dx() / spec.lambda()).unwrap().g;
        let a: Vec<Complex64> = (0..spec.q())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let ga = &g * DVector::from_vec(a.clone());
        let state = StateField::from_distributions(grid.clone(), spec.lambda(), real_mode(&grid, &k, &a)).unwrap();
        let mut sim = Simulation::new(spec, state).unwrap();
        sim.step();
        let expect = real_mode(&grid, &k, ga.as_slice());
        for (x, y) in sim.state().distributions().iter().flatten().zip(expect.iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn density_mode_decays_at_the_oracle_rate() {
    let spec = shifted(&seeded_d1q3(7), 0.2);
    let grid = Grid::new(vec![64], vec![1.0]).unwrap();
    let k = [2.0 * std::f64::consts::PI];
    let state = StateField::at_equilibrium(grid.clone(), &spec, |x| 1.0 + 0.1 * (k[0] * x[0]).sin());
    let g = amplification_matrix(&spec, &k, grid.dx()).unwrap().g;
    let lam = dominant_eigenvalue(&g, Complex64::new(1.0, 0.0)).unwrap();
    let mut sim = Simulation::new(spec, state).unwrap();
    sim.advance(40);
    let a0 = mode_amplitude(sim.state(), &k);
    sim.advance(50);
    let a1 = mode_amplitude(sim.state(), &k);
    let ratio = a1 / a0;
    let expect = lam.powu(50);
    assert!((ratio - expect).norm() < 1e-8, "{ratio} vs {expect}");
}

#[test]
fn classical_d1q2_diffusivity_and_dispersion() {
    // Closed forms from the exact two-velocity characteristic polynomial:
    // ∂t ρ + c ∂x ρ = Δ σ(λ² − c²) ∂xx ρ + Δ² 2c(λ² − c²)(σ² − 1/12) ∂xxx ρ.
    for lambda in [1.0, 2.0] {
        for c in [0.0, 0.3, 0.6] {
            for s in [0.8, 1.0, 1.5, 2.0] {
                let cc = c * lambda;
                let spec = SchemeSpec::new(
                    VelocitySet::d1q2(lambda),
                    default_basis(1, 2).unwrap(),
                    vec![0.0, s],
                    vec![(1.0 + c) / 2.0, (1.0 - c) / 2.0],
                    ShiftMode::Zero,
                )
                .unwrap();
                let sigma = 1.0 / s - 0.5;
                let diff = sigma * (lambda * lambda - cc * cc);
                let disp = 2.0 * cc * (lambda * lambda - cc * cc) * (sigma * sigma - 1.0 / 12.0);
                let kk = 1.3;
                let series = extract_symbol_series(&spec, &[kk], &SeriesMethod::default()).unwrap();
                assert!((series.mu1() - Complex64::new(-diff * kk * kk, 0.0)).norm() < 1e-8);
                let ik3 = Complex64::new(0.0, -kk.powi(3));
                assert!((series.mu2() - disp * ik3).norm() < 1e-7 * (1.0 + disp.abs()));
                let eq = derive_equivalent_equation(&spec, 3).unwrap();
                assert!((eq.diffusion().unwrap()[0] - diff).abs() < 1e-13);
                assert!((eq.dispersion().unwrap()[0] - disp).abs() < 1e-13);
            }
        }
    }
}

#[test]
fn d1q2_oracle_does_not_see_the_shift() {
    let base = d1q2(0.3, 1.4);
    let k = [2.5];
    let reference = extract_symbol_series(&base, &k, &SeriesMethod::default()).unwrap();
    for u in [0.2, 0.5, -0.4] {
        let s = extract_symbol_series(&shifted(&base, u), &k, &SeriesMethod::default()).unwrap();
        for l in 0..3 {
            assert!((s.mu[l] - reference.mu[l]).norm() < 1e-9 * (1.0 + reference.mu[l].norm()));
        }
        let eq = derive_equivalent_equation(&shifted(&base, u), 3).unwrap();
        let eq0 = derive_equivalent_equation(&base, 3).unwrap();
        assert!(eq.op(2).relative_difference(eq0.op(2), 1e-14) < 1e-12);
    }
}
