//! Velocity sets, moment polynomials and the shifted moment matrix.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::multi_index::MultiIndex;
use crate::{Error, Result};

/// Relative pivot size below which a moment matrix is declared singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-12;

/// A DdQq velocity set stored as integer lattice offsets plus the scale λ.
///
/// The physical velocity of index `j` is `λ · offsets[j]`, so `x + v_j Δt`
/// always lands on a node when `Δx = λ Δt`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocitySet {
    dim: usize,
    lambda: f64,
    offsets: Vec<Vec<i64>>,
}

impl VelocitySet {
    pub fn new(lambda: f64, offsets: Vec<Vec<i64>>) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidVelocitySet(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        let dim = offsets.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidVelocitySet(
                "velocity set must be non-empty with dimension ≥ 1".into(),
            ));
        }
        for v in &offsets {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "velocity",
                    expected: dim,
                    found: v.len(),
                });
            }
        }
        if offsets.len() < dim + 1 {
            return Err(Error::InvalidVelocitySet(format!(
                "q = {} velocities cannot carry 1, X_1..X_{dim}",
                offsets.len()
            )));
        }
        for (i, a) in offsets.iter().enumerate() {
            if let Some(j) = offsets[..i].iter().position(|b| b == a) {
                return Err(Error::InvalidVelocitySet(format!(
                    "velocities v_{j} and v_{i} coincide"
                )));
            }
        }
        Ok(Self {
            dim,
            lambda,
            offsets,
        })
    }

    /// Accepts velocities in units of λ given as reals, rejecting any
    /// component that is not an integer.
    pub fn from_lattice_units(lambda: f64, velocities: &[Vec<f64>]) -> Result<Self> {
        let mut offsets = Vec::with_capacity(velocities.len());
        for (index, v) in velocities.iter().enumerate() {
            let mut row = Vec::with_capacity(v.len());
            for &x in v {
                if !x.is_finite() || x.fract() != 0.0 {
                    return Err(Error::NonLatticeVelocity {
                        index,
                        value: v.clone(),
                    });
                }
                row.push(x as i64);
            }
            offsets.push(row);
        }
        Self::new(lambda, offsets)
    }

    pub fn d1q2(lambda: f64) -> Self {
        Self::new(lambda, vec![vec![1], vec![-1]]).expect("valid D1Q2")
    }

    pub fn d1q3(lambda: f64) -> Self {
        Self::new(lambda, vec![vec![0], vec![1], vec![-1]]).expect("valid D1Q3")
    }

    pub fn d2q5(lambda: f64) -> Self {
        Self::new(
            lambda,
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![-1, 0], vec![0, -1]],
        )
        .expect("valid D2Q5")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q(&self) -> usize {
        self.offsets.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Lattice offset of velocity `j` (cells travelled per time step).
    pub fn offset(&self, j: usize) -> &[i64] {
        &self.offsets[j]
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    /// Physical velocity `v_j = λ · offset_j`.
    pub fn velocity(&self, j: usize) -> Vec<f64> {
        self.offsets[j]
            .iter()
            .map(|&n| self.lambda * n as f64)
            .collect()
    }

    pub fn velocities(&self) -> Vec<Vec<f64>> {
        (0..self.q()).map(|j| self.velocity(j)).collect()
    }
}

/// Sparse real polynomial in `X_1..X_d`, keyed by exponent multi-index.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentPolynomial {
    dim: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

/// Wire form of one monomial: `{"exps": [..], "coef": x}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonomialTerm {
    pub exps: Vec<u32>,
    pub coef: f64,
}

impl MomentPolynomial {
    /// Sums duplicate exponents and drops zero coefficients.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut map: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (exps, coef) in terms {
            if exps.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "monomial exponents",
                    expected: dim,
                    found: exps.len(),
                });
            }
            *map.entry(MultiIndex::new(exps)).or_insert(0.0) += coef;
        }
        map.retain(|_, c| *c != 0.0);
        Ok(Self { dim, terms: map })
    }

    pub fn one(dim: usize) -> Self {
        Self::from_terms(dim, [(vec![0; dim], 1.0)]).expect("dimensions agree")
    }

    pub fn coordinate(dim: usize, axis: usize) -> Self {
        Self::from_terms(dim, [(MultiIndex::unit(dim, axis).exponents().to_vec(), 1.0)])
            .expect("dimensions agree")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(a, &c)| (a, c))
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(a, c)| c * a.monomial(x)).sum()
    }

    pub fn to_wire(&self) -> Vec<MonomialTerm> {
        self.terms
            .iter()
            .map(|(a, &coef)| MonomialTerm {
                exps: a.exponents().to_vec(),
                coef,
            })
            .collect()
    }
}

/// `Σ_a coef(a) Π_α x_α^{a_α}`.
pub fn evaluate_polynomial(p: &MomentPolynomial, x: &[f64]) -> f64 {
    p.evaluate(x)
}

/// Standard moment bases: `(1, X_1..X_d)` for q = d+1, `(1, X, X²)` for
/// D1Q3 and `(1, X, Y, X²+Y², X²−Y²)` for D2Q5.
pub fn default_basis(dim: usize, q: usize) -> Option<Vec<MomentPolynomial>> {
    let mut basis = vec![MomentPolynomial::one(dim)];
    basis.extend((0..dim).map(|a| MomentPolynomial::coordinate(dim, a)));
    match (dim, q) {
        (d, q) if q == d + 1 => {}
        (1, 3) => basis.push(MomentPolynomial::from_terms(1, [(vec![2], 1.0)]).ok()?),
        (2, 5) => {
            basis.push(
                MomentPolynomial::from_terms(2, [(vec![2, 0], 1.0), (vec![0, 2], 1.0)]).ok()?,
            );
            basis.push(
                MomentPolynomial::from_terms(2, [(vec![2, 0], 1.0), (vec![0, 2], -1.0)]).ok()?,
            );
        }
        _ => return None,
    }
    Some(basis)
}

/// Checks `P_0 = 1`, `P_k = X_k` for `1 ≤ k ≤ d`, and one polynomial per
/// velocity.
pub fn validate_basis(basis: &[MomentPolynomial], vset: &VelocitySet) -> Result<()> {
    let d = vset.dim();
    if basis.len() != vset.q() {
        return Err(Error::DimensionMismatch {
            what: "moment basis",
            expected: vset.q(),
            found: basis.len(),
        });
    }
    if let Some(p) = basis.iter().find(|p| p.dim() != d) {
        return Err(Error::DimensionMismatch {
            what: "polynomial dimension",
            expected: d,
            found: p.dim(),
        });
    }
    if basis[0] != MomentPolynomial::one(d) {
        return Err(Error::InvalidBasis("P_0 must be the constant 1".into()));
    }
    for k in 1..=d {
        if basis[k] != MomentPolynomial::coordinate(d, k - 1) {
            return Err(Error::InvalidBasis(format!("P_{k} must be X_{k}")));
        }
    }
    Ok(())
}

/// `M(ũ)` with its inverse; `m[(k, j)] = P_k(v_j − ũ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentMatrix {
    m: DMatrix<f64>,
    m_inv: DMatrix<f64>,
    cond_estimate: f64,
    u_tilde: Vec<f64>,
}

impl MomentMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.m_inv
    }

    /// `‖M‖₁ ‖M⁻¹‖₁`.
    pub fn cond_estimate(&self) -> f64 {
        self.cond_estimate
    }

    pub fn u_tilde(&self) -> &[f64] {
        &self.u_tilde
    }

    pub fn size(&self) -> usize {
        self.m.nrows()
    }
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverts a square matrix by LU with partial pivoting, rejecting it when
/// the smallest pivot falls below `SINGULAR_PIVOT_RATIO · max|entry|`.
pub(crate) fn invert(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let scale = m.amax();
    let threshold = SINGULAR_PIVOT_RATIO * scale;
    let lu = m.clone().lu();
    let min_pivot = lu.u().diagonal().amin();
    if scale == 0.0 || min_pivot < threshold {
        return Err(Error::SingularMatrix {
            min_pivot,
            threshold,
        });
    }
    let inv = lu.try_inverse().ok_or(Error::SingularMatrix {
        min_pivot,
        threshold,
    })?;
    let cond = (norm1(m) * norm1(&inv)).max(1.0);
    Ok((inv, cond))
}

fn raw_moment_matrix(
    basis: &[MomentPolynomial],
    vset: &VelocitySet,
    u_tilde: &[f64],
) -> DMatrix<f64> {
    let q = vset.q();
    let shifted: Vec<Vec<f64>> = (0..q)
        .map(|j| {
            vset.velocity(j)
                .iter()
                .zip(u_tilde)
                .map(|(v, u)| v - u)
                .collect()
        })
        .collect();
    DMatrix::from_fn(q, q, |k, j| basis[k].evaluate(&shifted[j]))
}

pub fn build_moment_matrix(
    basis: &[MomentPolynomial],
    vset: &VelocitySet,
    u_tilde: &[f64],
) -> Result<MomentMatrix> {
    validate_basis(basis, vset)?;
    if u_tilde.len() != vset.dim() {
        return Err(Error::DimensionMismatch {
            what: "relative velocity",
            expected: vset.dim(),
            found: u_tilde.len(),
        });
    }
    let m = raw_moment_matrix(basis, vset, u_tilde);
    let (m_inv, cond_estimate) = invert(&m)?;
    Ok(MomentMatrix {
        m,
        m_inv,
        cond_estimate,
        u_tilde: u_tilde.to_vec(),
    })
}

/// `M(ũ) M(0)⁻¹`: maps rest-frame moments to moments in the frame moving
/// at `ũ`.
pub fn shift_conjugation(
    basis: &[MomentPolynomial],
    vset: &VelocitySet,
    u_tilde: &[f64],
) -> Result<DMatrix<f64>> {
    let shifted = build_moment_matrix(basis, vset, u_tilde)?;
    let rest = build_moment_matrix(basis, vset, &vec![0.0; vset.dim()])?;
    Ok(shifted.matrix() * rest.inverse())
}
