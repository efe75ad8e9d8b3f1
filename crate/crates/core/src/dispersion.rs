//! Von Neumann analysis of the linear scheme.
//!
//! A Fourier mode `f_j(x) = a_j e^{i k·x}` is mapped by one step to `G a`
//! with `G = diag(e^{−i k·v_j Δ}) M⁻¹[(I − S) M + S M E 1ᵀ]`. The branch
//! `g(k, Δ)` continuous from 1 at `k = 0` yields the growth-rate series
//! `log g / Δ = μ₀ + μ₁ Δ + μ₂ Δ² + …`, extracted here without touching the
//! operator algebra of the equivalent equation.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::equivalent::{derive_equivalent_equation, EquivalentEquation};
use crate::json::fmt_f64;
use crate::scheme::SchemeSpec;
use crate::{Error, Result};

/// Eigenvalues closer than this are indistinguishable for branch selection.
pub const BRANCH_SEPARATION: f64 = 1e-9;

/// Steps used to follow the branch from `Δ = 0`.
const TRACKING_STEPS: usize = 10;

/// `PoorFit` is raised when the residual exceeds this times `|μ₀ + 1|`.
pub const FIT_THRESHOLD: f64 = 1e-8;
const CONTOUR_HALVINGS: usize = 4;

/// Collision matrix `M⁻¹[(I − S) M + S M E 1ᵀ]` acting on distributions.
pub fn collision_matrix(spec: &SchemeSpec) -> Result<DMatrix<f64>> {
    let mm = spec.moment_matrix()?;
    let m = mm.matrix();
    let q = spec.q();
    let e = DVector::from_column_slice(spec.equilibrium());
    let me = m * e;
    let mut relaxed = DMatrix::zeros(q, q);
    for k in 0..q {
        let s = spec.relaxation()[k];
        for j in 0..q {
            relaxed[(k, j)] = (1.0 - s) * m[(k, j)] + s * me[k];
        }
    }
    Ok(mm.inverse() * relaxed)
}

/// One-step Fourier operator at wavevector `k` and time step `dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplificationMatrix {
    pub g: DMatrix<Complex64>,
    pub k: Vec<f64>,
    pub dt: f64,
}

impl AmplificationMatrix {
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        eigenvalues(&self.g)
    }
}

fn transported(spec: &SchemeSpec, collision: &DMatrix<f64>, k: &[f64], dt: Complex64) -> DMatrix<Complex64> {
    let q = spec.q();
    let v = spec.velocity_set().velocities();
    let mut g = collision.map(|x| Complex64::new(x, 0.0));
    for j in 0..q {
        let kv: f64 = k.iter().zip(&v[j]).map(|(a, b)| a * b).sum();
        let phase = (Complex64::new(0.0, -kv) * dt).exp();
        for c in 0..q {
            g[(j, c)] *= phase;
        }
    }
    g
}

pub fn amplification_matrix(spec: &SchemeSpec, k: &[f64], dt: f64) -> Result<AmplificationMatrix> {
    check_wavevector(spec, k)?;
    let c = collision_matrix(spec)?;
    Ok(AmplificationMatrix {
        g: transported(spec, &c, k, Complex64::new(dt, 0.0)),
        k: k.to_vec(),
        dt,
    })
}

/// `G` continued to a complex time step, as used by the contour extraction.
pub fn amplification_matrix_complex(spec: &SchemeSpec, k: &[f64], dt: Complex64) -> Result<DMatrix<Complex64>> {
    check_wavevector(spec, k)?;
    Ok(transported(spec, &collision_matrix(spec)?, k, dt))
}

fn check_wavevector(spec: &SchemeSpec, k: &[f64]) -> Result<()> {
    if k.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            what: "wavevector",
            expected: spec.dim(),
            found: k.len(),
        });
    }
    Ok(())
}

pub fn eigenvalues(g: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let schur = nalgebra::linalg::Schur::try_new(g.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Validation("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// The eigenvalue nearest `hint`.
pub fn dominant_eigenvalue(g: &DMatrix<Complex64>, hint: Complex64) -> Result<Complex64> {
    select(&eigenvalues(g)?, hint)
}

fn select(ev: &[Complex64], hint: Complex64) -> Result<Complex64> {
    let mut sorted: Vec<Complex64> = ev.to_vec();
    sorted.sort_by(|a, b| (a - hint).norm().total_cmp(&(b - hint).norm()));
    let best = sorted[0];
    if let Some(second) = sorted.get(1) {
        if (second - best).norm() < BRANCH_SEPARATION && (second - hint).norm() < BRANCH_SEPARATION {
            return Err(Error::BranchAmbiguity {
                hint_re: hint.re,
                hint_im: hint.im,
            });
        }
    }
    Ok(best)
}

/// Follows the mass branch from `g = 1` at `Δ = 0` to `dt`.
fn tracked_eigenvalue(spec: &SchemeSpec, collision: &DMatrix<f64>, k: &[f64], dt: Complex64) -> Result<Complex64> {
    let direct = eigenvalues(&transported(spec, collision, k, dt))?;
    let ambiguous = |hint: Complex64| {
        let mut d: Vec<f64> = direct.iter().map(|z| (z - hint).norm()).collect();
        d.sort_by(f64::total_cmp);
        d.len() > 1 && d[1] < 2.0 * d[0]
    };
    if !ambiguous(Complex64::new(1.0, 0.0)) {
        return select(&direct, Complex64::new(1.0, 0.0));
    }
    let mut hint = Complex64::new(1.0, 0.0);
    for step in 1..=TRACKING_STEPS {
        let t = step as f64 / TRACKING_STEPS as f64;
        let g = transported(spec, collision, k, dt * t);
        hint = dominant_eigenvalue(&g, hint)?;
    }
    Ok(hint)
}

/// Numerical growth-rate series at one wavevector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymbolSeries {
    pub k: Vec<f64>,
    #[serde(serialize_with = "complex_list")]
    pub mu: Vec<Complex64>,
    pub fit_residual: f64,
}

impl SymbolSeries {
    pub fn mu0(&self) -> Complex64 {
        self.mu[0]
    }

    pub fn mu1(&self) -> Complex64 {
        self.mu[1]
    }

    pub fn mu2(&self) -> Complex64 {
        self.mu[2]
    }
}

/// How the series coefficients are read off `log g / Δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeriesMethod {
    /// Cauchy integral on `|Δ| = radius/(|k| λ)` with `nodes` points. The
    /// radius is halved while the truncated tail stays above the fit
    /// threshold.
    Contour { radius: f64, nodes: usize },
    /// Least-squares cubic in `Δ` over `Δ_m = dt0/2^m`, `m < count`.
    GeometricFit { dt0: f64, count: usize },
}

impl Default for SeriesMethod {
    fn default() -> Self {
        SeriesMethod::Contour {
            radius: 0.1,
            nodes: 32,
        }
    }
}

fn principal_log_rate(g: Complex64, dt: Complex64) -> Complex64 {
    g.ln() / dt
}

pub fn extract_symbol_series(spec: &SchemeSpec, k: &[f64], method: &SeriesMethod) -> Result<SymbolSeries> {
    check_wavevector(spec, k)?;
    let collision = collision_matrix(spec)?;
    let knorm = k.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (mu, residual) = match *method {
        SeriesMethod::Contour { radius, nodes } => {
            if nodes < 8 {
                return Err(Error::Validation("contour needs at least 8 nodes".into()));
            }
            let mut r = radius / (knorm.max(1.0 / spec.lambda()) * spec.lambda());
            let mut best = contour_series(spec, &collision, k, r, nodes)?;
            for _ in 0..CONTOUR_HALVINGS {
                if best.1 <= FIT_THRESHOLD * (best.0[0] + 1.0).norm() {
                    break;
                }
                r /= 2.0;
                let next = contour_series(spec, &collision, k, r, nodes)?;
                if next.1 < best.1 {
                    best = next;
                }
            }
            best
        }
        SeriesMethod::GeometricFit { dt0, count } => {
            if count < 5 {
                return Err(Error::Validation("geometric fit needs at least 5 steps".into()));
            }
            geometric_series(spec, &collision, k, dt0, count)?
        }
    };
    let threshold = FIT_THRESHOLD * (mu[0] + 1.0).norm();
    if !(residual <= threshold) {
        return Err(Error::PoorFit { residual, threshold });
    }
    Ok(SymbolSeries {
        k: k.to_vec(),
        mu,
        fit_residual: residual,
    })
}

fn contour_series(
    spec: &SchemeSpec,
    collision: &DMatrix<f64>,
    k: &[f64],
    r: f64,
    nodes: usize,
) -> Result<(Vec<Complex64>, f64)> {
    let n = nodes as f64;
    let dts: Vec<Complex64> = (0..nodes)
        .map(|i| Complex64::from_polar(r, 2.0 * PI * i as f64 / n))
        .collect();
    let y = dts
        .iter()
        .map(|&dt| Ok(principal_log_rate(tracked_eigenvalue(spec, collision, k, dt)?, dt)))
        .collect::<Result<Vec<_>>>()?;
    // Scaled Taylor coefficients ĉ_l = μ_l r^l.
    let coef = |l: usize| -> Complex64 {
        y.iter()
            .enumerate()
            .map(|(i, yi)| yi * Complex64::from_polar(1.0, -2.0 * PI * (i * l) as f64 / n))
            .sum::<Complex64>()
            / n
    };
    let mu = (0..3).map(|l| coef(l) / r.powi(l as i32)).collect();
    let residual = (nodes / 2..nodes).map(|l| coef(l).norm()).fold(0.0, f64::max);
    Ok((mu, residual))
}

fn geometric_series(
    spec: &SchemeSpec,
    collision: &DMatrix<f64>,
    k: &[f64],
    dt0: f64,
    count: usize,
) -> Result<(Vec<Complex64>, f64)> {
    let dts: Vec<f64> = (0..count).map(|m| dt0 / 2f64.powi(m as i32)).collect();
    let y = dts
        .iter()
        .map(|&dt| {
            let dtc = Complex64::new(dt, 0.0);
            Ok(principal_log_rate(tracked_eigenvalue(spec, collision, k, dtc)?, dtc))
        })
        .collect::<Result<Vec<_>>>()?;
    let a = DMatrix::from_fn(count, 4, |i, p| Complex64::new(dts[i].powi(p as i32), 0.0));
    let b = DVector::from_vec(y.clone());
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::Validation(format!("least squares failed: {e}")))?;
    let fit = &a * &x;
    let residual = fit.iter().zip(&y).map(|(f, y)| (f - y).norm()).fold(0.0, f64::max);
    Ok(((0..3).map(|l| x[l]).collect(), residual))
}

/// Per-order acceptance thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "Tolerances::default_rel")]
    pub rel: [f64; 3],
    #[serde(default = "Tolerances::default_abs")]
    pub abs: [f64; 3],
}

impl Tolerances {
    fn default_rel() -> [f64; 3] {
        [1e-8, 1e-6, 1e-4]
    }

    fn default_abs() -> [f64; 3] {
        [1e-12, 1e-10, 1e-8]
    }

    /// `|μ − p| ≤ max(rel·|p|, abs)`.
    pub fn accepts(&self, order: usize, measured: Complex64, predicted: Complex64) -> bool {
        let err = (measured - predicted).norm();
        err <= (self.rel[order] * predicted.norm()).max(self.abs[order])
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel: Self::default_rel(),
            abs: Self::default_abs(),
        }
    }
}

/// One wavevector of a [`DispersionReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleRecord {
    pub k: Vec<f64>,
    #[serde(serialize_with = "complex_list")]
    pub mu: Vec<Complex64>,
    #[serde(serialize_with = "complex_list")]
    pub predicted: Vec<Complex64>,
    pub rel_err: Vec<f64>,
    pub abs_err: Vec<f64>,
    pub fit_residual: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersionReport {
    pub u_tilde: Vec<f64>,
    pub tolerances: Tolerances,
    pub samples: Vec<SampleRecord>,
    /// Largest eigenvalue modulus of `G` over the samples, at `Δ = Δx/λ`
    /// for the sampling radius. Reported, not asserted.
    pub max_eigenvalue_modulus: f64,
    pub pass: bool,
}

impl DispersionReport {
    pub fn failures(&self) -> usize {
        self.samples.iter().filter(|s| !s.pass).count()
    }

    /// One row per `(k, order)`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.u_tilde.len();
        let mut header: Vec<String> = (0..d).map(|a| format!("k{a}")).collect();
        header.extend(
            ["order", "mu_re", "mu_im", "predicted_re", "predicted_im", "rel_err", "abs_err", "pass"]
                .map(String::from),
        );
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            for order in 0..s.predicted.len().min(s.mu.len()) {
                let mut row: Vec<String> = s.k.iter().map(|x| fmt_f64(*x)).collect();
                row.push(order.to_string());
                row.push(fmt_f64(s.mu[order].re));
                row.push(fmt_f64(s.mu[order].im));
                row.push(fmt_f64(s.predicted[order].re));
                row.push(fmt_f64(s.predicted[order].im));
                row.push(fmt_f64(s.rel_err[order]));
                row.push(fmt_f64(s.abs_err[order]));
                row.push(s.pass.to_string());
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

/// Compares the oracle series with the third-order equivalent equation.
pub fn compare_with_prediction(
    spec: &SchemeSpec,
    k_samples: &[Vec<f64>],
    method: &SeriesMethod,
    tolerances: &Tolerances,
) -> Result<DispersionReport> {
    let eq = derive_equivalent_equation(spec, 3)?;
    compare_with_equation(spec, &eq, k_samples, method, tolerances)
}

/// As [`compare_with_prediction`] with a caller-supplied equation.
pub fn compare_with_equation(
    spec: &SchemeSpec,
    eq: &EquivalentEquation,
    k_samples: &[Vec<f64>],
    method: &SeriesMethod,
    tolerances: &Tolerances,
) -> Result<DispersionReport> {
    for k in k_samples {
        check_wavevector(spec, k)?;
    }
    let mut ks: Vec<Vec<f64>> = k_samples.to_vec();
    ks.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let collision = collision_matrix(spec)?;
    let samples: Vec<(SampleRecord, f64)> = ks
        .par_iter()
        .map(|k| {
            let predicted = eq.predicted_symbols(k);
            let knorm = k.iter().map(|x| x * x).sum::<f64>().sqrt();
            let dt = 0.1 / (knorm.max(1.0 / spec.lambda()) * spec.lambda());
            let modulus = eigenvalues(&transported(spec, &collision, k, Complex64::new(dt, 0.0)))
                .map(|ev| ev.iter().map(|z| z.norm()).fold(0.0, f64::max))
                .unwrap_or(f64::NAN);
            let record = match extract_symbol_series(spec, k, method) {
                Ok(series) => {
                    let n = predicted.len();
                    let abs_err: Vec<f64> = (0..n).map(|l| (series.mu[l] - predicted[l]).norm()).collect();
                    let rel_err = (0..n)
                        .map(|l| {
                            let p = predicted[l].norm();
                            if p > 0.0 {
                                abs_err[l] / p
                            } else if abs_err[l] == 0.0 {
                                0.0
                            } else {
                                f64::INFINITY
                            }
                        })
                        .collect();
                    let pass = (0..n).all(|l| tolerances.accepts(l, series.mu[l], predicted[l]));
                    SampleRecord {
                        k: k.clone(),
                        mu: series.mu,
                        predicted,
                        rel_err,
                        abs_err,
                        fit_residual: series.fit_residual,
                        pass,
                        error: None,
                    }
                }
                Err(e) => SampleRecord {
                    k: k.clone(),
                    mu: Vec::new(),
                    predicted,
                    rel_err: Vec::new(),
                    abs_err: Vec::new(),
                    fit_residual: f64::NAN,
                    pass: false,
                    error: Some(e.to_string()),
                },
            };
            (record, modulus)
        })
        .collect();
    let max_eigenvalue_modulus = samples.iter().map(|(_, m)| *m).fold(0.0, f64::max);
    let samples: Vec<SampleRecord> = samples.into_iter().map(|(s, _)| s).collect();
    let pass = samples.iter().all(|s| s.pass);
    Ok(DispersionReport {
        u_tilde: eq.u_tilde().to_vec(),
        tolerances: tolerances.clone(),
        samples,
        max_eigenvalue_modulus,
        pass,
    })
}

fn complex_list<S: Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
    pairs.serialize(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{default_basis, VelocitySet};
    use crate::scheme::ShiftMode;

    fn d1q2(c: f64, s1: f64) -> SchemeSpec {
        SchemeSpec::new(
            VelocitySet::d1q2(1.0),
            default_basis(1, 2).unwrap(),
            vec![0.0, s1],
            vec![(1.0 + c) / 2.0, (1.0 - c) / 2.0],
            ShiftMode::Zero,
        )
        .unwrap()
    }

    fn d2q5(shift: ShiftMode) -> SchemeSpec {
        SchemeSpec::new(
            VelocitySet::d2q5(1.0),
            default_basis(2, 5).unwrap(),
            vec![0.0, 1.2, 1.4, 1.6, 1.8],
            vec![0.4, 0.2, 0.15, 0.1, 0.15],
            shift,
        )
        .unwrap()
    }

    #[test]
    fn zero_wavevector_is_the_collision_matrix() {
        let spec = d2q5(ShiftMode::Constant(vec![0.2, 0.1]));
        let g = amplification_matrix(&spec, &[0.0, 0.0], 0.1).unwrap();
        let c = collision_matrix(&spec).unwrap();
        for (a, b) in g.g.iter().zip(c.iter()) {
            assert_eq!(a.re, *b);
            assert_eq!(a.im, 0.0);
        }
        // Columns of the collision matrix preserve Σ_j f_j.
        for col in 0..5 {
            let s: f64 = c.column(col).iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
        let lam = dominant_eigenvalue(&g.g, Complex64::new(1.0, 0.0)).unwrap();
        assert!((lam - 1.0).norm() < 1e-13);
    }

    #[test]
    fn pure_streaming_is_unitary() {
        let spec = SchemeSpec::new(
            VelocitySet::d1q2(1.0),
            default_basis(1, 2).unwrap(),
            vec![0.0, 1e-300],
            vec![0.75, 0.25],
            ShiftMode::Zero,
        )
        .unwrap();
        let g = amplification_matrix(&spec, &[2.0], 0.05).unwrap();
        for ev in g.eigenvalues().unwrap() {
            assert!((ev.norm() - 1.0).abs() < 1e-12);
        }
        let hint = Complex64::from_polar(1.0, -0.1);
        let lam = dominant_eigenvalue(&g.g, hint).unwrap();
        assert!((lam - hint).norm() < 1e-12);
    }

    #[test]
    fn ambiguous_branch_is_reported() {
        let g = DMatrix::<Complex64>::identity(2, 2);
        assert!(matches!(
            dominant_eigenvalue(&g, Complex64::new(1.0, 0.0)),
            Err(Error::BranchAmbiguity { .. })
        ));
    }

    #[test]
    fn conjugate_symmetry() {
        let spec = d2q5(ShiftMode::Constant(vec![0.3, -0.2]));
        let a = amplification_matrix(&spec, &[1.3, -0.4], 0.02).unwrap();
        let b = amplification_matrix(&spec, &[-1.3, 0.4], 0.02).unwrap();
        for (x, y) in a.g.iter().zip(b.g.iter()) {
            assert!((x - y.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn d1q2_series_by_hand() {
        let k = 1.7;
        let s = d1q2(0.5, 1.0);
        let series = extract_symbol_series(&s, &[k], &SeriesMethod::default()).unwrap();
        assert!((series.mu0() - Complex64::new(0.0, -0.5 * k)).norm() < 1e-10);
        assert!((series.mu1() - Complex64::new(-0.375 * k * k, 0.0)).norm() < 1e-8);
        let zero = extract_symbol_series(&s, &[0.0], &SeriesMethod::default()).unwrap();
        assert!(zero.mu.iter().all(|m| m.norm() < 1e-14));
    }

    #[test]
    fn geometric_fit_agrees_at_low_orders() {
        let s = d1q2(0.3, 1.4);
        let k = [2.0];
        let contour = extract_symbol_series(&s, &k, &SeriesMethod::default()).unwrap();
        let fit = extract_symbol_series(&s, &k, &SeriesMethod::GeometricFit { dt0: 0.05, count: 6 }).unwrap();
        assert!((contour.mu0() - fit.mu0()).norm() < 1e-8);
        assert!((contour.mu1() - fit.mu1()).norm() < 1e-5);
    }

    #[test]
    fn sigma_zero_has_no_diffusion() {
        let spec = d1q2(0.3, 2.0);
        let r = compare_with_prediction(&spec, &[vec![0.5], vec![3.0]], &SeriesMethod::default(), &Tolerances::default())
            .unwrap();
        assert!(r.pass);
        for s in &r.samples {
            assert!(s.mu[1].norm() < 1e-8);
        }
    }

    #[test]
    fn report_is_sorted_and_csv_has_rows() {
        let spec = d2q5(ShiftMode::Zero);
        let ks = vec![vec![1.0, 0.5], vec![-0.5, 2.0], vec![0.3, 0.3]];
        let r = compare_with_prediction(&spec, &ks, &SeriesMethod::default(), &Tolerances::default()).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.samples[0].k, vec![-0.5, 2.0]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 3);
        assert!(text.starts_with("k0,k1,order,"));
    }
}
