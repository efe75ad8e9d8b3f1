//! The relative-velocity collide/stream step on a periodic Cartesian grid.
//!
//! Collision works in the moment basis shifted by `ũ`: moments `m = M(ũ) f`
//! relax diagonally towards `M(ũ) E ρ`, then `f* = M(ũ)⁻¹ m*`. Streaming is
//! an exact shift by the integer lattice offset of each velocity.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::lattice::{build_moment_matrix, MomentMatrix, MomentPolynomial, VelocitySet};
use crate::{Error, Result};

/// Tolerance on `Σ_j E_j = 1`.
const EQUILIBRIUM_SUM_TOL: f64 = 1e-12;

/// Cells above which collision and streaming are split across threads.
const PARALLEL_CELLS: usize = 1 << 14;

/// How the relative velocity `ũ` is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum ShiftMode {
    Zero,
    Constant(Vec<f64>),
    /// `ũ(x) = amplitude · sin(2π Σ_α x_α / L_α)`; simulation only.
    Sine(Vec<f64>),
}

impl ShiftMode {
    pub fn is_zero(&self) -> bool {
        match self {
            ShiftMode::Zero => true,
            ShiftMode::Constant(u) => u.iter().all(|&x| x == 0.0),
            ShiftMode::Sine(_) => false,
        }
    }
}

/// A complete DdQq relative-velocity scheme with linear equilibrium
/// `f_j^eq = E_j ρ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSpec {
    vset: VelocitySet,
    basis: Vec<MomentPolynomial>,
    relaxation: Vec<f64>,
    equilibrium: Vec<f64>,
    shift: ShiftMode,
}

impl SchemeSpec {
    pub fn new(
        vset: VelocitySet,
        basis: Vec<MomentPolynomial>,
        relaxation: Vec<f64>,
        equilibrium: Vec<f64>,
        shift: ShiftMode,
    ) -> Result<Self> {
        let q = vset.q();
        let d = vset.dim();
        for (what, len) in [("relaxation", relaxation.len()), ("equilibrium", equilibrium.len())] {
            if len != q {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: q,
                    found: len,
                });
            }
        }
        if relaxation[0] != 0.0 {
            return Err(Error::Validation("s[0] must be 0".into()));
        }
        if let Some(k) = relaxation.iter().skip(1).position(|&s| s == 0.0 || !s.is_finite()) {
            return Err(Error::Validation(format!(
                "s[{}] must be finite and nonzero",
                k + 1
            )));
        }
        let sum: f64 = equilibrium.iter().sum();
        if (sum - 1.0).abs() > EQUILIBRIUM_SUM_TOL {
            return Err(Error::Validation(format!(
                "equilibrium weights must sum to 1, got {sum}"
            )));
        }
        match &shift {
            ShiftMode::Zero => {}
            ShiftMode::Constant(u) | ShiftMode::Sine(u) => {
                if u.len() != d {
                    return Err(Error::DimensionMismatch {
                        what: "relative velocity",
                        expected: d,
                        found: u.len(),
                    });
                }
            }
        }
        build_moment_matrix(&basis, &vset, &vec![0.0; d])?;
        if let ShiftMode::Constant(u) = &shift {
            build_moment_matrix(&basis, &vset, u)?;
        }
        Ok(Self {
            vset,
            basis,
            relaxation,
            equilibrium,
            shift,
        })
    }

    /// Relaxation rates outside `(0, 2)`; legal but usually unstable.
    pub fn warnings(&self) -> Vec<String> {
        self.relaxation
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &s)| !(s > 0.0 && s < 2.0))
            .map(|(k, s)| format!("s[{k}] = {s} lies outside (0, 2)"))
            .collect()
    }

    pub fn with_shift(&self, shift: ShiftMode) -> Result<Self> {
        Self::new(
            self.vset.clone(),
            self.basis.clone(),
            self.relaxation.clone(),
            self.equilibrium.clone(),
            shift,
        )
    }

    pub fn with_relaxation(&self, relaxation: Vec<f64>) -> Result<Self> {
        Self::new(
            self.vset.clone(),
            self.basis.clone(),
            relaxation,
            self.equilibrium.clone(),
            self.shift.clone(),
        )
    }

    pub fn dim(&self) -> usize {
        self.vset.dim()
    }

    pub fn q(&self) -> usize {
        self.vset.q()
    }

    pub fn lambda(&self) -> f64 {
        self.vset.lambda()
    }

    pub fn velocity_set(&self) -> &VelocitySet {
        &self.vset
    }

    pub fn basis(&self) -> &[MomentPolynomial] {
        &self.basis
    }

    pub fn relaxation(&self) -> &[f64] {
        &self.relaxation
    }

    pub fn equilibrium(&self) -> &[f64] {
        &self.equilibrium
    }

    pub fn shift(&self) -> &ShiftMode {
        &self.shift
    }

    /// The constant `ũ`, or `NonConstantShift` for a field preset.
    pub fn constant_shift(&self) -> Result<Vec<f64>> {
        match &self.shift {
            ShiftMode::Zero => Ok(vec![0.0; self.dim()]),
            ShiftMode::Constant(u) => Ok(u.clone()),
            ShiftMode::Sine(_) => Err(Error::NonConstantShift),
        }
    }

    /// `M(ũ)` for a constant shift.
    pub fn moment_matrix(&self) -> Result<MomentMatrix> {
        self.moment_matrix_at(&self.constant_shift()?)
    }

    /// `M(0)`, the d'Humières moment matrix.
    pub fn rest_moment_matrix(&self) -> Result<MomentMatrix> {
        self.moment_matrix_at(&vec![0.0; self.dim()])
    }

    pub fn moment_matrix_at(&self, u_tilde: &[f64]) -> Result<MomentMatrix> {
        build_moment_matrix(&self.basis, &self.vset, u_tilde)
    }

    /// `ũ` at a physical position.
    pub fn shift_at(&self, x: &[f64], lengths: &[f64]) -> Vec<f64> {
        match &self.shift {
            ShiftMode::Zero => vec![0.0; self.dim()],
            ShiftMode::Constant(u) => u.clone(),
            ShiftMode::Sine(amp) => {
                let phase: f64 = x.iter().zip(lengths).map(|(x, l)| x / l).sum();
                let s = (2.0 * PI * phase).sin();
                amp.iter().map(|a| a * s).collect()
            }
        }
    }
}

/// Periodic Cartesian grid with equal spacing on every axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    sizes: Vec<usize>,
    lengths: Vec<f64>,
}

impl Grid {
    pub fn new(sizes: Vec<usize>, lengths: Vec<f64>) -> Result<Self> {
        if sizes.len() != lengths.len() || sizes.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "grid lengths",
                expected: sizes.len(),
                found: lengths.len(),
            });
        }
        if sizes.contains(&0) || lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Validation(
                "grid sizes and box lengths must be positive".into(),
            ));
        }
        let dx0 = lengths[0] / sizes[0] as f64;
        for (n, l) in sizes.iter().zip(&lengths) {
            let dx = l / *n as f64;
            if ((dx - dx0) / dx0).abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "grid spacing must be equal on every axis ({dx0} vs {dx})"
                )));
            }
        }
        Ok(Self { sizes, lengths })
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn cells(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn dx(&self) -> f64 {
        self.lengths[0] / self.sizes[0] as f64
    }

    /// Integer coordinates of a cell; axis 0 varies fastest.
    pub fn index_to_coords(&self, mut cell: usize) -> Vec<usize> {
        self.sizes
            .iter()
            .map(|&n| {
                let i = cell % n;
                cell /= n;
                i
            })
            .collect()
    }

    pub fn coords_to_index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.sizes)
            .rev()
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Physical position `x = i Δx` of a cell.
    pub fn position(&self, cell: usize) -> Vec<f64> {
        let dx = self.dx();
        self.index_to_coords(cell)
            .into_iter()
            .map(|i| i as f64 * dx)
            .collect()
    }

    /// For every cell `x`, the index of `x − offset` with periodic wrap.
    pub fn upstream_table(&self, offset: &[i64]) -> Vec<usize> {
        (0..self.cells())
            .map(|cell| {
                let c: Vec<usize> = self
                    .index_to_coords(cell)
                    .iter()
                    .zip(offset)
                    .zip(&self.sizes)
                    .map(|((&i, &o), &n)| (i as i64 - o).rem_euclid(n as i64) as usize)
                    .collect();
                self.coords_to_index(&c)
            })
            .collect()
    }
}

/// Particle distributions on a periodic grid, stored one array per velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct StateField {
    grid: Grid,
    lambda: f64,
    f: Vec<Vec<f64>>,
    steps: u64,
}

impl StateField {
    pub fn zeros(grid: Grid, lambda: f64, q: usize) -> Self {
        let n = grid.cells();
        Self {
            grid,
            lambda,
            f: vec![vec![0.0; n]; q],
            steps: 0,
        }
    }

    /// `f_j(x) = E_j ρ(x)`.
    pub fn at_equilibrium<F>(grid: Grid, spec: &SchemeSpec, rho: F) -> Self
    where
        F: Fn(&[f64]) -> f64,
    {
        let mut s = Self::zeros(grid, spec.lambda(), spec.q());
        for cell in 0..s.grid.cells() {
            let r = rho(&s.grid.position(cell));
            for (fj, e) in s.f.iter_mut().zip(spec.equilibrium()) {
                fj[cell] = e * r;
            }
        }
        s
    }

    pub fn from_distributions(grid: Grid, lambda: f64, f: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(bad) = f.iter().find(|fj| fj.len() != grid.cells()) {
            return Err(Error::DimensionMismatch {
                what: "distribution array",
                expected: grid.cells(),
                found: bad.len(),
            });
        }
        Ok(Self {
            grid,
            lambda,
            f,
            steps: 0,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn q(&self) -> usize {
        self.f.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dx(&self) -> f64 {
        self.grid.dx()
    }

    /// `Δt = Δx / λ`.
    pub fn dt(&self) -> f64 {
        self.grid.dx() / self.lambda
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn distributions(&self) -> &[Vec<f64>] {
        &self.f
    }

    pub fn distributions_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.f
    }

    pub fn cell(&self, cell: usize) -> Vec<f64> {
        self.f.iter().map(|fj| fj[cell]).collect()
    }

    pub fn density_field(&self) -> Vec<f64> {
        (0..self.grid.cells())
            .map(|c| density(&self.cell(c)))
            .collect()
    }

    /// `Σ_{x,j} f_j` with compensated summation.
    pub fn total_mass(&self) -> f64 {
        neumaier_sum(self.f.iter().flatten().copied())
    }
}

pub(crate) fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `ρ = Σ_j f_j`.
pub fn density(f: &[f64]) -> f64 {
    f.iter().sum()
}

/// `M(ũ) f`.
pub fn moments_from_distributions(f: &[f64], m: &MomentMatrix) -> Result<Vec<f64>> {
    if f.len() != m.size() {
        return Err(Error::DimensionMismatch {
            what: "distribution vector",
            expected: m.size(),
            found: f.len(),
        });
    }
    Ok((m.matrix() * DVector::from_column_slice(f)).as_slice().to_vec())
}

/// `M(ũ) E ρ`.
pub fn equilibrium_moments(spec: &SchemeSpec, rho: f64, m: &MomentMatrix) -> Vec<f64> {
    let e = DVector::from_column_slice(spec.equilibrium());
    (m.matrix() * e * rho).as_slice().to_vec()
}

/// Diagonal relaxation `m_k + s_k (m_k^eq − m_k)`.
pub fn relax(m: &[f64], m_eq: &[f64], s: &[f64]) -> Vec<f64> {
    m.iter()
        .zip(m_eq)
        .zip(s)
        .map(|((&mk, &ek), &sk)| mk + sk * (ek - mk))
        .collect()
}

/// `M(ũ)⁻¹ m*`.
pub fn post_collision_distributions(m_star: &[f64], m: &MomentMatrix) -> Result<Vec<f64>> {
    if m_star.len() != m.size() {
        return Err(Error::DimensionMismatch {
            what: "moment vector",
            expected: m.size(),
            found: m_star.len(),
        });
    }
    Ok((m.inverse() * DVector::from_column_slice(m_star))
        .as_slice()
        .to_vec())
}

/// `f_j(x) ← f_j(x − v_j Δt)` with periodic wraparound.
pub fn stream(state: &StateField, vset: &VelocitySet) -> Result<StateField> {
    check_compatible(state, vset)?;
    let tables: Vec<Vec<usize>> = (0..vset.q())
        .map(|j| state.grid.upstream_table(vset.offset(j)))
        .collect();
    let f = state
        .f
        .iter()
        .zip(&tables)
        .map(|(fj, table)| table.iter().map(|&src| fj[src]).collect())
        .collect();
    Ok(StateField {
        grid: state.grid.clone(),
        lambda: state.lambda,
        f,
        steps: state.steps,
    })
}

fn check_compatible(state: &StateField, vset: &VelocitySet) -> Result<()> {
    if state.q() != vset.q() {
        return Err(Error::DimensionMismatch {
            what: "number of velocities",
            expected: vset.q(),
            found: state.q(),
        });
    }
    if state.grid.dim() != vset.dim() {
        return Err(Error::DimensionMismatch {
            what: "grid dimension",
            expected: vset.dim(),
            found: state.grid.dim(),
        });
    }
    if state.lambda != vset.lambda() {
        return Err(Error::Validation(format!(
            "state uses λ = {} but the velocity set has λ = {}",
            state.lambda,
            vset.lambda()
        )));
    }
    Ok(())
}

/// One full time step: collide then stream.
pub fn step(state: &StateField, spec: &SchemeSpec) -> Result<StateField> {
    let mut sim = Simulation::new(spec.clone(), state.clone())?;
    sim.step();
    Ok(sim.into_state())
}

/// Row-major copies of one moment matrix pair plus `M E`.
#[derive(Clone, Debug)]
struct CollisionKernel {
    m: Vec<f64>,
    m_inv: Vec<f64>,
    eq_moments: Vec<f64>,
}

impl CollisionKernel {
    fn new(mm: &MomentMatrix, equilibrium: &[f64]) -> Self {
        let row_major = |a: &DMatrix<f64>| a.transpose().as_slice().to_vec();
        let e = DVector::from_column_slice(equilibrium);
        Self {
            m: row_major(mm.matrix()),
            m_inv: row_major(mm.inverse()),
            eq_moments: (mm.matrix() * e).as_slice().to_vec(),
        }
    }

    /// Writes `f*` for one cell into `out`; `scratch` holds `2q` values.
    fn collide(&self, f: &[f64], s: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let q = f.len();
        let rho = density(f);
        let (m, m_star) = scratch.split_at_mut(q);
        for k in 0..q {
            let row = &self.m[k * q..(k + 1) * q];
            m[k] = row.iter().zip(f).map(|(a, b)| a * b).sum();
        }
        for k in 0..q {
            let eq = self.eq_moments[k] * rho;
            m_star[k] = m[k] + s[k] * (eq - m[k]);
        }
        for j in 1..q {
            let row = &self.m_inv[j * q..(j + 1) * q];
            out[j] = row.iter().zip(m_star.iter()).map(|(a, b)| a * b).sum();
        }
        // Closing on the density keeps rounding in M⁻¹ from biasing the mass.
        out[0] = rho - out[1..].iter().sum::<f64>();
    }
}

/// A state together with the cached moment matrices and streaming tables
/// needed to advance it.
#[derive(Clone, Debug)]
pub struct Simulation {
    spec: SchemeSpec,
    state: StateField,
    kernels: Vec<CollisionKernel>,
    /// Kernel index per cell; `None` when a single kernel serves all cells.
    cell_kernel: Option<Vec<usize>>,
    upstream: Vec<Vec<usize>>,
    post: Vec<f64>,
}

impl Simulation {
    pub fn new(spec: SchemeSpec, state: StateField) -> Result<Self> {
        check_compatible(&state, spec.velocity_set())?;
        let grid = state.grid.clone();
        let (kernels, cell_kernel) = match spec.shift() {
            ShiftMode::Sine(_) => {
                let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
                let mut kernels = Vec::new();
                let mut per_cell = Vec::with_capacity(grid.cells());
                for cell in 0..grid.cells() {
                    let u = spec.shift_at(&grid.position(cell), grid.lengths());
                    let key: Vec<u64> = u.iter().map(|x| x.to_bits()).collect();
                    let id = match index.get(&key) {
                        Some(&id) => id,
                        None => {
                            let mm = spec.moment_matrix_at(&u)?;
                            kernels.push(CollisionKernel::new(&mm, spec.equilibrium()));
                            index.insert(key, kernels.len() - 1);
                            kernels.len() - 1
                        }
                    };
                    per_cell.push(id);
                }
                (kernels, Some(per_cell))
            }
            _ => {
                let mm = spec.moment_matrix()?;
                (vec![CollisionKernel::new(&mm, spec.equilibrium())], None)
            }
        };
        let upstream = (0..spec.q())
            .map(|j| grid.upstream_table(spec.velocity_set().offset(j)))
            .collect();
        let post = vec![0.0; grid.cells() * spec.q()];
        Ok(Self {
            spec,
            state,
            kernels,
            cell_kernel,
            upstream,
            post,
        })
    }

    pub fn spec(&self) -> &SchemeSpec {
        &self.spec
    }

    pub fn state(&self) -> &StateField {
        &self.state
    }

    pub fn into_state(self) -> StateField {
        self.state
    }

    /// Number of distinct moment matrices in use.
    pub fn cached_matrices(&self) -> usize {
        self.kernels.len()
    }

    /// Post-collision distributions, cell-major (`q` values per cell).
    fn collide(&mut self) {
        let q = self.spec.q();
        let f = &self.state.f;
        let s = self.spec.relaxation();
        let kernels = &self.kernels;
        let cell_kernel = self.cell_kernel.as_deref();
        let work = |buf: &mut Vec<f64>, (cell, out): (usize, &mut [f64])| {
            let (fc, scratch) = buf.split_at_mut(q);
            for (j, fj) in f.iter().enumerate() {
                fc[j] = fj[cell];
            }
            let kernel = &kernels[cell_kernel.map_or(0, |ck| ck[cell])];
            kernel.collide(fc, s, out, scratch);
        };
        if self.state.grid.cells() >= PARALLEL_CELLS {
            self.post
                .par_chunks_mut(q)
                .enumerate()
                .for_each_init(|| vec![0.0; 3 * q], work);
        } else {
            let mut buf = vec![0.0; 3 * q];
            for item in self.post.chunks_mut(q).enumerate() {
                work(&mut buf, item);
            }
        }
    }

    fn transport(&mut self) {
        let q = self.spec.q();
        let post = &self.post;
        let gather = |(j, (fj, table)): (usize, (&mut Vec<f64>, &Vec<usize>))| {
            for (dst, &src) in fj.iter_mut().zip(table) {
                *dst = post[src * q + j];
            }
        };
        if self.state.grid.cells() >= PARALLEL_CELLS {
            self.state
                .f
                .par_iter_mut()
                .zip(self.upstream.par_iter())
                .enumerate()
                .for_each(gather);
        } else {
            self.state
                .f
                .iter_mut()
                .zip(self.upstream.iter())
                .enumerate()
                .for_each(gather);
        }
    }

    pub fn step(&mut self) {
        self.collide();
        self.transport();
        self.state.steps += 1;
    }

    pub fn advance(&mut self, steps: usize) {
        for _ in 0..steps {
            self.step();
        }
    }
}

#[derive(Serialize)]
struct SnapshotMeta<'a> {
    scheme: serde_json::Value,
    steps: u64,
    time: f64,
    dx: f64,
    dt: f64,
    grid: &'a Grid,
}

/// JSON header describing a snapshot.
pub fn snapshot_metadata(state: &StateField, scheme: serde_json::Value) -> serde_json::Value {
    serde_json::to_value(SnapshotMeta {
        scheme,
        steps: state.steps(),
        time: state.steps() as f64 * state.dt(),
        dx: state.dx(),
        dt: state.dt(),
        grid: state.grid(),
    })
    .expect("metadata serializes")
}

/// One row per cell: coordinates, `ρ`, `f_0..f_{q−1}`.
pub fn write_snapshot_csv<W: Write>(state: &StateField, mut out: W) -> Result<()> {
    let d = state.grid.dim();
    let mut header: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    header.push("rho".into());
    header.extend((0..state.q()).map(|j| format!("f{j}")));
    writeln!(out, "{}", header.join(","))?;
    for cell in 0..state.grid.cells() {
        let f = state.cell(cell);
        let mut row: Vec<String> = state
            .grid
            .position(cell)
            .iter()
            .map(|x| crate::json::fmt_f64(*x))
            .collect();
        row.push(crate::json::fmt_f64(density(&f)));
        row.extend(f.iter().map(|x| crate::json::fmt_f64(*x)));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
