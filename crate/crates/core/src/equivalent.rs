//! Third-order equivalent equation on the density.
//!
//! For a scheme with linear equilibrium `f^eq = E ρ` and constant `ũ`, the
//! density obeys, up to `O(Δ³)` with `Δ = Δt`,
//!
//! ```text
//! ∂t ρ = A₀ ρ + Δ A₁ ρ + Δ² A₂ ρ
//! A₀ = −c·∇,                       c = Σ_j v_j E_j
//! A₁ = Σ_β σ_β ∂_β θ_β
//! A₂ = Σ_β σ_β ∂_β θ_β⁽¹⁾
//!      − Σ_{β,j,l≥1} σ_β σ_l v_j^β ∂_β d_j (M⁻¹(ũ)_{jl} θ_l(ũ))
//!      + 1/12 Σ_{β,γ,j} v_j^β v_j^γ ∂_β ∂_γ d_j E_j
//!      + 1/6 Σ_β ∂_β ∂_t θ_β
//! ```
//!
//! where `d_j = ∂_t + v_j·∇`, `θ_k = Σ_j M_kj d_j E_j` is the conservation
//! default and `σ_k = 1/s_k − 1/2` the Hénon parameter. Time derivatives are
//! eliminated in two passes: first `∂_t → A₀`, then `∂_t → A₀ + Δ A₁`.
//! `θ_β` in the `σ_β` term uses the rest-frame matrix `M(0)`; the
//! variant built with `M(ũ)` is also computed and reported.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::multi_index::MultiIndex;
use crate::operator::{fmt_coef, DifferentialOperator, OperatorTerm};
use crate::scheme::SchemeSpec;
use crate::{Error, Result};

/// Relative agreement required between the direct and the regrouped `A₂`.
pub const CROSSCHECK_TOLERANCE: f64 = 1e-10;

/// `σ_k = 1/s_k − 1/2` for `k ≥ 1`; slot 0 is undefined.
#[derive(Clone, Debug, PartialEq)]
pub struct HenonVector {
    sigma: Vec<Option<f64>>,
}

impl HenonVector {
    pub fn get(&self, k: usize) -> Option<f64> {
        self.sigma.get(k).copied().flatten()
    }

    /// `σ_k` for a non-conserved moment.
    pub fn value(&self, k: usize) -> f64 {
        self.get(k).expect("σ is defined for k ≥ 1")
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }
}

pub fn henon_sigma(s: &[f64]) -> Result<HenonVector> {
    let mut sigma = vec![None];
    for (k, &sk) in s.iter().enumerate().skip(1) {
        if sk == 0.0 {
            return Err(Error::DivisionByZero { index: k });
        }
        sigma.push(Some(1.0 / sk - 0.5));
    }
    Ok(HenonVector { sigma })
}

/// `c = Σ_j v_j E_j`, so the equilibrium momentum is `c ρ`.
pub fn advection_vector(spec: &SchemeSpec) -> Vec<f64> {
    let mut c = vec![0.0; spec.dim()];
    for (v, e) in spec.velocity_set().velocities().iter().zip(spec.equilibrium()) {
        for (cb, vb) in c.iter_mut().zip(v) {
            *cb += vb * e;
        }
    }
    c
}

/// Which moment matrix defines `θ_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// `M(ũ)`.
    Shifted,
    /// `M(0)`.
    Rest,
}

/// The rule `∂_t ρ → Σ_l Δ^l A_l ρ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSubstitution {
    ops: Vec<DifferentialOperator>,
}

impl TimeSubstitution {
    pub fn new(ops: Vec<DifferentialOperator>) -> Self {
        Self { ops }
    }

    pub fn depth(&self) -> usize {
        self.ops.len()
    }

    pub fn op(&self, l: usize) -> &DifferentialOperator {
        &self.ops[l]
    }

    /// `d_j = ∂_t + v_j·∇` truncated at Δ-order 0.
    fn material(&self, v: &[f64]) -> DifferentialOperator {
        &self.ops[0] + &DifferentialOperator::directional(v)
    }
}

/// Conservation defaults `θ_k` as Δ-series of spatial operators.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaSet {
    frame: Frame,
    theta: Vec<Vec<DifferentialOperator>>,
}

impl ThetaSet {
    pub fn frame(&self) -> Frame {
        self.frame
    }

    /// Coefficient of `Δ^order` in `θ_k`.
    pub fn get(&self, k: usize, order: usize) -> &DifferentialOperator {
        &self.theta[k][order]
    }

    pub fn orders(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }
}

fn frame_matrix(spec: &SchemeSpec, frame: Frame) -> Result<DMatrix<f64>> {
    Ok(match frame {
        Frame::Shifted => spec.moment_matrix()?.matrix().clone(),
        Frame::Rest => spec.rest_moment_matrix()?.matrix().clone(),
    })
}

/// `θ_k = Σ_j M_kj E_j (∂_t + v_j·∇)` with `∂_t` replaced by the
/// substitution, kept to `orders` Δ-orders (1 or 2).
pub fn conservation_defaults(
    spec: &SchemeSpec,
    subst: &TimeSubstitution,
    frame: Frame,
    orders: usize,
) -> Result<ThetaSet> {
    if !(1..=2).contains(&orders) {
        return Err(Error::OrderUnavailable {
            requested: orders,
            available: "1 or 2 Δ-orders".into(),
        });
    }
    if subst.depth() < orders {
        return Err(Error::OrderUnavailable {
            requested: orders,
            available: format!("substitution depth {}", subst.depth()),
        });
    }
    let m = frame_matrix(spec, frame)?;
    let e = spec.equilibrium();
    let velocities = spec.velocity_set().velocities();
    let material: Vec<DifferentialOperator> =
        velocities.iter().map(|v| subst.material(v)).collect();
    let q = spec.q();
    let theta = (0..q)
        .map(|k| {
            let mut series = Vec::with_capacity(orders);
            let mut t0 = DifferentialOperator::zero(spec.dim());
            for j in 0..q {
                t0 += &material[j].scale(m[(k, j)] * e[j]);
            }
            series.push(t0);
            if orders > 1 {
                let meq: f64 = (0..q).map(|j| m[(k, j)] * e[j]).sum();
                series.push(subst.op(1).scale(meq));
            }
            series
        })
        .collect();
    Ok(ThetaSet { frame, theta })
}

/// `Σ_{β,γ} T^{βγ} …`: dense symmetric tensors read off the operators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientTensors {
    pub c: Vec<f64>,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<Vec<Vec<f64>>>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<Vec<Vec<Vec<f64>>>>,
}

/// `∂_t ρ = Σ_l Δ^l A_l ρ + O(Δ^{order})`.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalentEquation {
    dim: usize,
    u_tilde: Vec<f64>,
    ops: Vec<DifferentialOperator>,
    shifted_theta_a2: Option<DifferentialOperator>,
}

impl EquivalentEquation {
    pub fn from_ops(dim: usize, u_tilde: Vec<f64>, ops: Vec<DifferentialOperator>) -> Self {
        Self {
            dim,
            u_tilde,
            ops,
            shifted_theta_a2: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of Δ-orders kept (1, 2 or 3).
    pub fn order(&self) -> usize {
        self.ops.len()
    }

    pub fn ops(&self) -> &[DifferentialOperator] {
        &self.ops
    }

    pub fn ops_mut(&mut self) -> &mut [DifferentialOperator] {
        &mut self.ops
    }

    pub fn op(&self, l: usize) -> &DifferentialOperator {
        &self.ops[l]
    }

    pub fn u_tilde(&self) -> &[f64] {
        &self.u_tilde
    }

    /// `A₂` computed with `θ_β(ũ)` in the `σ_β` term instead of `θ_β(0)`.
    pub fn shifted_theta_a2(&self) -> Option<&DifferentialOperator> {
        self.shifted_theta_a2.as_ref()
    }

    pub fn advection(&self) -> Vec<f64> {
        self.ops[0].symmetric_tensor(1).iter().map(|x| -x).collect()
    }

    /// `D^{βγ}` with `A₁ = Σ D^{βγ} ∂_β ∂_γ`, flattened row-major.
    pub fn diffusion(&self) -> Option<Vec<f64>> {
        self.ops.get(1).map(|a| a.symmetric_tensor(2))
    }

    /// `T^{βγδ}` with `A₂ = Σ T^{βγδ} ∂_β ∂_γ ∂_δ`, flattened row-major.
    pub fn dispersion(&self) -> Option<Vec<f64>> {
        self.ops.get(2).map(|a| a.symmetric_tensor(3))
    }

    pub fn tensors(&self) -> CoefficientTensors {
        let d = self.dim;
        CoefficientTensors {
            c: self.advection(),
            diffusion: self
                .diffusion()
                .map(|t| t.chunks(d).map(<[f64]>::to_vec).collect()),
            dispersion: self.dispersion().map(|t| {
                t.chunks(d * d)
                    .map(|m| m.chunks(d).map(<[f64]>::to_vec).collect())
                    .collect()
            }),
        }
    }

    /// Predicted growth-rate coefficients `μ_l = A_l(i k)`.
    pub fn predicted_symbols(&self, k: &[f64]) -> Vec<Complex64> {
        self.ops.iter().map(|a| a.symbol(k)).collect()
    }

    /// Terms of `A_l` whose derivative order differs from `l + 1`.
    pub fn structure_violations(&self) -> Vec<(usize, MultiIndex)> {
        self.ops
            .iter()
            .enumerate()
            .flat_map(|(l, a)| {
                a.terms()
                    .filter(move |(idx, _)| idx.degree() as usize != l + 1)
                    .map(move |(idx, _)| (l, idx.clone()))
            })
            .collect()
    }

    /// Human-readable PDE, e.g. `∂t ρ + 0.5 ∂x ρ = Δ·(0.375 ∂xx ρ)`.
    pub fn pretty(&self) -> String {
        let mut s = String::from("∂t ρ");
        for (a, c) in self.ops[0].terms() {
            let sign = if c > 0.0 { " - " } else { " + " };
            s.push_str(&format!("{sign}{} {a} ρ", fmt_coef(c.abs())));
        }
        s.push_str(" =");
        let mut rhs = Vec::new();
        for (l, op) in self.ops.iter().enumerate().skip(1) {
            if op.is_zero() {
                continue;
            }
            let factor = if l == 1 { "Δ".to_string() } else { format!("Δ^{l}") };
            rhs.push(format!("{factor}·({op})"));
        }
        if rhs.is_empty() {
            s.push_str(" 0");
        } else {
            s.push(' ');
            s.push_str(&rhs.join(" + "));
        }
        s.push_str(&format!(" + O(Δ^{})", self.order()));
        s
    }

    pub fn to_report(&self) -> EquivalentEquationReport {
        let theta_variants = self.shifted_theta_a2.as_ref().and_then(|alt| {
            let direct = &self.ops[2];
            let diff = (direct - alt).max_abs();
            (diff > 0.0).then(|| ThetaVariants {
                rest_frame_a2: direct.to_wire(),
                shifted_frame_a2: alt.to_wire(),
                max_abs_difference: diff,
            })
        });
        EquivalentEquationReport {
            dim: self.dim,
            u_tilde: self.u_tilde.clone(),
            orders: self
                .ops
                .iter()
                .enumerate()
                .map(|(order, a)| OrderTerms {
                    order,
                    terms: a.to_wire(),
                })
                .collect(),
            tensors: self.tensors(),
            theta_variants,
            text: self.pretty(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderTerms {
    pub order: usize,
    pub terms: Vec<OperatorTerm>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaVariants {
    pub rest_frame_a2: Vec<OperatorTerm>,
    pub shifted_frame_a2: Vec<OperatorTerm>,
    pub max_abs_difference: f64,
}

/// Serialized form of an [`EquivalentEquation`].
#[derive(Clone, Debug, Serialize)]
pub struct EquivalentEquationReport {
    pub dim: usize,
    pub u_tilde: Vec<f64>,
    pub orders: Vec<OrderTerms>,
    #[serde(flatten)]
    pub tensors: CoefficientTensors,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_variants: Option<ThetaVariants>,
    pub text: String,
}

/// `Σ_β σ_β ∂_β X_β` over the momentum moments `β = 1..d`.
fn sigma_divergence<F>(dim: usize, sigma: &HenonVector, mut x: F) -> DifferentialOperator
where
    F: FnMut(usize) -> DifferentialOperator,
{
    let mut out = DifferentialOperator::zero(dim);
    for beta in 0..dim {
        let term = DifferentialOperator::partial(dim, beta).compose(&x(beta + 1));
        out += &term.scale(sigma.value(beta + 1));
    }
    out
}

fn advection_operator(spec: &SchemeSpec) -> DifferentialOperator {
    let c: Vec<f64> = advection_vector(spec).iter().map(|x| -x).collect();
    DifferentialOperator::directional(&c)
}

/// `Σ_{l≥1} σ_l M⁻¹_{jl} θ_l⁽⁰⁾` for every velocity `j`.
fn relaxed_defaults(
    spec: &SchemeSpec,
    sigma: &HenonVector,
    m_inv: &DMatrix<f64>,
    theta: &ThetaSet,
) -> Vec<DifferentialOperator> {
    (0..spec.q())
        .map(|j| {
            let mut acc = DifferentialOperator::zero(spec.dim());
            for l in 1..spec.q() {
                acc += &theta.get(l, 0).scale(sigma.value(l) * m_inv[(j, l)]);
            }
            acc
        })
        .collect()
}

pub fn derive_equivalent_equation(spec: &SchemeSpec, order: usize) -> Result<EquivalentEquation> {
    if !(1..=3).contains(&order) {
        return Err(Error::OrderUnavailable {
            requested: order,
            available: "1, 2 or 3".into(),
        });
    }
    let u_tilde = spec.constant_shift()?;
    let d = spec.dim();
    let sigma = henon_sigma(spec.relaxation())?;

    let a0 = advection_operator(spec);
    let mut ops = vec![a0.clone()];
    if order == 1 {
        return Ok(EquivalentEquation::from_ops(d, u_tilde, ops));
    }

    let first = TimeSubstitution::new(vec![a0.clone()]);
    let theta_rest = conservation_defaults(spec, &first, Frame::Rest, 1)?;
    let a1 = sigma_divergence(d, &sigma, |b| theta_rest.get(b, 0).clone());
    ops.push(a1.clone());
    if order == 2 {
        return Ok(EquivalentEquation::from_ops(d, u_tilde, ops));
    }

    let second = TimeSubstitution::new(vec![a0.clone(), a1]);
    let theta_rest = conservation_defaults(spec, &second, Frame::Rest, 2)?;
    let theta_shift = conservation_defaults(spec, &second, Frame::Shifted, 2)?;
    let mm = spec.moment_matrix()?;
    let velocities = spec.velocity_set().velocities();
    let material: Vec<DifferentialOperator> =
        velocities.iter().map(|v| second.material(v)).collect();

    // Order-one part of the Δ term.
    let correction = sigma_divergence(d, &sigma, |b| theta_rest.get(b, 1).clone());

    let relaxed = relaxed_defaults(spec, &sigma, mm.inverse(), &theta_shift);
    let sigma_sigma = sigma_divergence(d, &sigma, |b| {
        let mut acc = DifferentialOperator::zero(d);
        for (j, v) in velocities.iter().enumerate() {
            acc += &material[j].compose(&relaxed[j]).scale(v[b - 1]);
        }
        acc
    });

    let mut twelfth = DifferentialOperator::zero(d);
    for (j, v) in velocities.iter().enumerate() {
        let stream = DifferentialOperator::directional(v);
        let term = stream.compose(&stream).compose(&material[j]);
        twelfth += &term.scale(spec.equilibrium()[j] / 12.0);
    }

    let mut sixth = DifferentialOperator::zero(d);
    for beta in 0..d {
        let term = DifferentialOperator::partial(d, beta)
            .compose(&a0)
            .compose(theta_rest.get(beta + 1, 0));
        sixth += &term.scale(1.0 / 6.0);
    }

    let mut a2 = &correction - &sigma_sigma;
    a2 += &twelfth;
    a2 += &sixth;

    let shifted_correction = sigma_divergence(d, &sigma, |b| theta_shift.get(b, 1).clone());
    let alt = &(&a2 - &correction) + &shifted_correction;

    ops.push(a2);
    Ok(EquivalentEquation {
        dim: d,
        u_tilde,
        ops,
        shifted_theta_a2: Some(alt),
    })
}

/// Expansion of the non-conserved moments around equilibrium.
#[derive(Clone, Debug, PartialEq)]
pub struct XiPrediction {
    sigma: HenonVector,
    /// `xi[k][p]`: coefficient of `Δ^p` in `ξ_k`; empty for `k = 0`.
    xi: Vec<Vec<DifferentialOperator>>,
}

impl XiPrediction {
    pub fn order(&self) -> usize {
        self.xi.get(1).map_or(0, |s| s.len() + 1)
    }

    pub fn xi(&self, k: usize) -> &[DifferentialOperator] {
        &self.xi[k]
    }

    pub fn moments(&self) -> usize {
        self.xi.len()
    }

    /// `m_k − m_k^eq = −(1/2 + σ_k) Σ_p Δ^{p+1} ξ_k^{(p)}`; element `p`
    /// multiplies `Δ^{p+1}`.
    pub fn pre_collision(&self, k: usize) -> Vec<DifferentialOperator> {
        let w = -(0.5 + self.sigma.value(k));
        self.xi[k].iter().map(|x| x.scale(w)).collect()
    }

    /// `m_k* − m_k^eq = (1/2 − σ_k) Σ_p Δ^{p+1} ξ_k^{(p)}`.
    pub fn post_collision(&self, k: usize) -> Vec<DifferentialOperator> {
        let w = 0.5 - self.sigma.value(k);
        self.xi[k].iter().map(|x| x.scale(w)).collect()
    }

    pub fn sigma(&self) -> &HenonVector {
        &self.sigma
    }
}

/// `ξ_k = θ_k − Δ Σ_{j,l≥1} σ_l M_kj(ũ) d_j (M⁻¹_{jl}(ũ) θ_l)` for
/// `k ≥ 1`, truncated so the moment predictions hold to `O(Δ^order)`.
pub fn transition_prediction(spec: &SchemeSpec, order: usize) -> Result<XiPrediction> {
    if !(2..=3).contains(&order) {
        return Err(Error::OrderUnavailable {
            requested: order,
            available: "2 or 3".into(),
        });
    }
    let eq = derive_equivalent_equation(spec, 2)?;
    let sigma = henon_sigma(spec.relaxation())?;
    let subst = TimeSubstitution::new(eq.ops().to_vec());
    let theta = conservation_defaults(spec, &subst, Frame::Shifted, order - 1)?;
    let q = spec.q();
    let mut xi = vec![Vec::new()];
    if order == 2 {
        xi.extend((1..q).map(|k| vec![theta.get(k, 0).clone()]));
        return Ok(XiPrediction { sigma, xi });
    }
    let mm = spec.moment_matrix()?;
    let relaxed = relaxed_defaults(spec, &sigma, mm.inverse(), &theta);
    let transported: Vec<DifferentialOperator> = spec
        .velocity_set()
        .velocities()
        .iter()
        .zip(&relaxed)
        .map(|(v, r)| subst.material(v).compose(r))
        .collect();
    for k in 1..q {
        let mut first = theta.get(k, 1).clone();
        for (j, t) in transported.iter().enumerate() {
            first += &t.scale(-mm.matrix()[(k, j)]);
        }
        xi.push(vec![theta.get(k, 0).clone(), first]);
    }
    Ok(XiPrediction { sigma, xi })
}

/// `Λ^{βγ}_l = Σ_j v_j^β v_j^γ M⁻¹(0)_{jl}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumVelocityTensor {
    dim: usize,
    q: usize,
    data: Vec<f64>,
}

impl MomentumVelocityTensor {
    pub fn get(&self, beta: usize, gamma: usize, l: usize) -> f64 {
        self.data[(beta * self.dim + gamma) * self.q + l]
    }

    /// `Λ^{βγ}_·` as a q-vector.
    pub fn row(&self, beta: usize, gamma: usize) -> Vec<f64> {
        (0..self.q).map(|l| self.get(beta, gamma, l)).collect()
    }
}

pub fn momentum_velocity_tensor(spec: &SchemeSpec) -> Result<MomentumVelocityTensor> {
    let m0 = spec.rest_moment_matrix()?;
    let inv = m0.inverse();
    let v = spec.velocity_set().velocities();
    let (d, q) = (spec.dim(), spec.q());
    let mut data = vec![0.0; d * d * q];
    for beta in 0..d {
        for gamma in 0..d {
            for l in 0..q {
                data[(beta * d + gamma) * q + l] =
                    (0..q).map(|j| v[j][beta] * v[j][gamma] * inv[(j, l)]).sum();
            }
        }
    }
    Ok(MomentumVelocityTensor { dim: d, q, data })
}

/// Two computations of `A₂` at `ũ = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrosscheckReport {
    pub direct: Vec<OperatorTerm>,
    pub regrouped: Vec<OperatorTerm>,
    pub rel_diff: f64,
    pub tolerance: f64,
}

/// Recomputes `A₂` at `ũ = 0` through the momentum-velocity tensor `Λ`,
/// splitting `d_j` into `∂_t` and `v_j·∇`, and compares with
/// [`derive_equivalent_equation`].
pub fn dhumieres_crosscheck(spec: &SchemeSpec) -> Result<CrosscheckReport> {
    if !spec.shift().is_zero() {
        return Err(Error::NonZeroShift);
    }
    let direct = derive_equivalent_equation(spec, 3)?;
    let regrouped = regrouped_a2(spec, direct.op(0), direct.op(1))?;
    let rel_diff = direct.op(2).relative_difference(&regrouped, 1e-14);
    if rel_diff.is_nan() || rel_diff > CROSSCHECK_TOLERANCE {
        return Err(Error::MismatchBeyondTolerance {
            quantity: "A2 (direct vs Λ-regrouped)".into(),
            rel_diff,
            tolerance: CROSSCHECK_TOLERANCE,
        });
    }
    Ok(CrosscheckReport {
        direct: direct.op(2).to_wire(),
        regrouped: regrouped.to_wire(),
        rel_diff,
        tolerance: CROSSCHECK_TOLERANCE,
    })
}

fn regrouped_a2(
    spec: &SchemeSpec,
    a0: &DifferentialOperator,
    a1: &DifferentialOperator,
) -> Result<DifferentialOperator> {
    let d = spec.dim();
    let q = spec.q();
    let sigma = henon_sigma(spec.relaxation())?;
    let lambda = momentum_velocity_tensor(spec)?;
    let subst = TimeSubstitution::new(vec![a0.clone(), a1.clone()]);
    let theta = conservation_defaults(spec, &subst, Frame::Rest, 2)?;
    let dd = |b: usize, g: usize| {
        DifferentialOperator::partial(d, b).compose(&DifferentialOperator::partial(d, g))
    };

    let correction = sigma_divergence(d, &sigma, |b| theta.get(b, 1).clone());

    let mut time_part = DifferentialOperator::zero(d);
    let mut lambda_sigma = DifferentialOperator::zero(d);
    let mut lambda_all = DifferentialOperator::zero(d);
    for beta in 0..d {
        let sb = sigma.value(beta + 1);
        let dt_theta = DifferentialOperator::partial(d, beta)
            .compose(a0)
            .compose(theta.get(beta + 1, 0));
        time_part += &dt_theta.scale(sb * sb);
        for gamma in 0..d {
            let dbg = dd(beta, gamma);
            for l in 0..q {
                let term = dbg.compose(theta.get(l, 0)).scale(lambda.get(beta, gamma, l));
                if l >= 1 {
                    lambda_sigma += &term.scale(sb * sigma.value(l));
                }
                lambda_all += &term;
            }
        }
    }

    let mut sixth = DifferentialOperator::zero(d);
    for beta in 0..d {
        sixth += &DifferentialOperator::partial(d, beta)
            .compose(a0)
            .compose(theta.get(beta + 1, 0))
            .scale(1.0 / 6.0);
    }

    let mut a2 = &correction - &time_part;
    a2 = &a2 - &lambda_sigma;
    a2 += &lambda_all.scale(1.0 / 12.0);
    a2 += &sixth;
    Ok(a2)
}
