//! Exponent multi-indices shared by moment polynomials and spatial
//! differential operators.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A multi-index `a ∈ N^d`.
///
/// Ordering is graded: total degree first, then the index with the larger
/// leading exponent comes first, so `∂x < ∂y < ∂xx < ∂xy < ∂yy`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut e = vec![0; dim];
        e[axis] = 1;
        Self(e)
    }

    /// Builds the multi-index of `∂_{axes[0]} ∂_{axes[1]} …`.
    pub fn from_axes(dim: usize, axes: &[usize]) -> Self {
        let mut e = vec![0; dim];
        for &a in axes {
            e[a] += 1;
        }
        Self(e)
    }

    /// Expands back into a sorted list of axes, e.g. `[2, 1] → [0, 0, 1]`.
    pub fn axes(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(axis, &n)| std::iter::repeat_n(axis, n as usize))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Number of distinct orderings of the axes, `|a|! / a!`.
    pub fn permutations(&self) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(self.degree()) / self.0.iter().map(|&n| fact(n)).product::<f64>()
    }

    /// `Π_α x_α^{a_α}` for real arguments.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&n, &xa)| xa.powi(n as i32))
            .product()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn axis_name(dim: usize, axis: usize) -> String {
    if dim <= 3 {
        ["x", "y", "z"][axis].to_string()
    } else {
        format!("x{}", axis + 1)
    }
}

impl fmt::Display for MultiIndex {
    /// Derivative notation: `∂xxy`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "∂")?;
        for axis in self.axes() {
            write!(f, "{}", axis_name(self.dim(), axis))?;
        }
        Ok(())
    }
}
