//! Constant-coefficient spatial differential operators `Σ_a C_a ∂^a`.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::multi_index::MultiIndex;

/// A linear combination of spatial derivatives acting on the density.
///
/// Terms with a zero coefficient are never stored, so an operator built from
/// a vanishing factor compares equal to [`DifferentialOperator::zero`].
#[derive(Clone, Debug, PartialEq)]
pub struct DifferentialOperator {
    dim: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

/// Wire form of one operator term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorTerm {
    pub multi_index: Vec<u32>,
    pub coefficient: f64,
}

impl DifferentialOperator {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    /// `∂_axis`.
    pub fn partial(dim: usize, axis: usize) -> Self {
        Self::from_terms(dim, [(MultiIndex::unit(dim, axis), 1.0)])
    }

    /// `Σ_β w_β ∂_β`.
    pub fn directional(w: &[f64]) -> Self {
        let dim = w.len();
        Self::from_terms(
            dim,
            w.iter()
                .enumerate()
                .map(|(axis, &c)| (MultiIndex::unit(dim, axis), c)),
        )
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        let mut op = Self::zero(dim);
        for (a, c) in terms {
            debug_assert_eq!(a.dim(), dim);
            debug_assert!(a.degree() >= 1, "operators carry at least one derivative");
            op.add_term(a, c);
        }
        op
    }

    fn add_term(&mut self, a: MultiIndex, c: f64) {
        match self.terms.entry(a) {
            Entry::Vacant(v) => {
                if c != 0.0 {
                    v.insert(c);
                }
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(a, &c)| (a, c))
    }

    pub fn coefficient(&self, a: &MultiIndex) -> f64 {
        self.terms.get(a).copied().unwrap_or(0.0)
    }

    /// Derivative orders `|a|` present in the operator.
    pub fn orders(&self) -> Vec<u32> {
        let mut o: Vec<u32> = self.terms.keys().map(MultiIndex::degree).collect();
        o.dedup();
        o
    }

    /// True when every term has exactly `order` derivatives.
    pub fn is_homogeneous(&self, order: u32) -> bool {
        self.terms.keys().all(|a| a.degree() == order)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_terms(self.dim, self.terms.iter().map(|(a, &c)| (a.clone(), s * c)))
    }

    /// Composition `self ∘ other`; constant coefficients make it commutative.
    pub fn compose(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.dim);
        for (a, &c) in &self.terms {
            for (b, &e) in &other.terms {
                out.add_term(a.add(b), c * e);
            }
        }
        out
    }

    /// Fourier symbol with `∂_β → i k_β`.
    pub fn symbol(&self, k: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(a, &c)| {
                let ik = Complex64::i().powu(a.degree());
                ik * c * a.monomial(k)
            })
            .sum()
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// `max_a |C_a − C'_a| / max(max|C|, max|C'|)`, or the absolute
    /// difference when both operators are below `floor`.
    pub fn relative_difference(&self, other: &Self, floor: f64) -> f64 {
        let diff = (self - other).max_abs();
        let scale = self.max_abs().max(other.max_abs());
        if scale <= floor {
            diff
        } else {
            diff / scale
        }
    }

    /// Fully symmetric tensor `T^{β₁…β_n}` with `Σ T ∂_{β₁}…∂_{β_n}`
    /// equal to the order-`n` part of the operator; flattened row-major.
    pub fn symmetric_tensor(&self, order: u32) -> Vec<f64> {
        let d = self.dim;
        let n = order as usize;
        let len = d.pow(order);
        (0..len)
            .map(|flat| {
                let mut axes = Vec::with_capacity(n);
                let mut r = flat;
                for _ in 0..n {
                    axes.push(r % d);
                    r /= d;
                }
                axes.reverse();
                let a = MultiIndex::from_axes(d, &axes);
                self.coefficient(&a) / a.permutations()
            })
            .collect()
    }

    pub fn to_wire(&self) -> Vec<OperatorTerm> {
        self.terms
            .iter()
            .map(|(a, &c)| OperatorTerm {
                multi_index: a.exponents().to_vec(),
                coefficient: c,
            })
            .collect()
    }
}

impl Add for &DifferentialOperator {
    type Output = DifferentialOperator;
    fn add(self, rhs: Self) -> DifferentialOperator {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl AddAssign<&DifferentialOperator> for DifferentialOperator {
    fn add_assign(&mut self, rhs: &DifferentialOperator) {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, &c) in &rhs.terms {
            self.add_term(a.clone(), c);
        }
    }
}

impl Sub for &DifferentialOperator {
    type Output = DifferentialOperator;
    fn sub(self, rhs: Self) -> DifferentialOperator {
        self + &(-rhs)
    }
}

impl Neg for &DifferentialOperator {
    type Output = DifferentialOperator;
    fn neg(self) -> DifferentialOperator {
        self.scale(-1.0)
    }
}

impl Mul for &DifferentialOperator {
    type Output = DifferentialOperator;
    fn mul(self, rhs: Self) -> DifferentialOperator {
        self.compose(rhs)
    }
}

impl Mul<&DifferentialOperator> for f64 {
    type Output = DifferentialOperator;
    fn mul(self, rhs: &DifferentialOperator) -> DifferentialOperator {
        rhs.scale(self)
    }
}

impl fmt::Display for DifferentialOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (a, &c)) in self.terms.iter().enumerate() {
            match (i, c < 0.0) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            write!(f, "{} {a} ρ", fmt_coef(c.abs()))?;
        }
        Ok(())
    }
}

pub(crate) fn fmt_coef(x: f64) -> String {
    let s = format!("{x:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "0" {
        format!("{x:.3e}")
    } else {
        s.to_string()
    }
}
