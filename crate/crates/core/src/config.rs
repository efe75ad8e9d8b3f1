//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "scheme": {"d": 1, "q": 2, "lambda": 1.0, "velocities": [[1], [-1]],
//!              "relaxation": [0, 1.5], "equilibrium": [0.75, 0.25],
//!              "u_tilde": {"mode": "constant", "value": [0.2]}},
//!   "grid": {"n": [128], "length": [1.0]},
//!   "initial": {"type": "sine", "rho0": 1.0, "amplitude": 0.1, "mode": [1]},
//!   "analysis": {"order": 3},
//!   "output": {"dir": "out", "format": "json"}
//! }
//! ```
//!
//! Velocities are given in units of `λ`. `polynomials` may be omitted for the
//! standard D1Q2, D1Q3, D2Q5 and `q = d + 1` bases.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;

use crate::dispersion::{SeriesMethod, Tolerances};
use crate::lattice::{default_basis, MomentPolynomial, MonomialTerm, VelocitySet};
use crate::scheme::{Grid, SchemeSpec, ShiftMode, StateField};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub d: usize,
    pub q: usize,
    #[serde(default = "one")]
    pub lambda: f64,
    pub velocities: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polynomials: Option<Vec<Vec<MonomialTerm>>>,
    pub relaxation: Vec<f64>,
    pub equilibrium: Vec<f64>,
    #[serde(default)]
    pub u_tilde: ShiftConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    #[default]
    Zero,
    Constant,
    Sine,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    pub mode: ShiftKind,
    #[serde(default)]
    pub value: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: Vec<usize>,
    pub length: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    #[default]
    Uniform,
    Sine,
}

/// `ρ(x) = rho0 + amplitude · sin(2π Σ_α mode_α x_α / L_α)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    #[serde(rename = "type", default)]
    pub kind: InitialKind,
    #[serde(default = "one")]
    pub rho0: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub mode: Vec<i64>,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self {
            kind: InitialKind::Uniform,
            rho0: 1.0,
            amplitude: 0.0,
            mode: Vec::new(),
        }
    }
}

impl InitialCondition {
    pub fn density(&self, x: &[f64], lengths: &[f64]) -> f64 {
        match self.kind {
            InitialKind::Uniform => self.rho0,
            InitialKind::Sine => {
                let phase: f64 = self
                    .mode
                    .iter()
                    .zip(x.iter().zip(lengths))
                    .map(|(&m, (x, l))| m as f64 * x / l)
                    .sum();
                self.rho0 + self.amplitude * (2.0 * PI * phase).sin()
            }
        }
    }

    /// Wavevector of the sine mode.
    pub fn wavevector(&self, lengths: &[f64]) -> Vec<f64> {
        lengths
            .iter()
            .enumerate()
            .map(|(a, l)| 2.0 * PI * self.mode.get(a).copied().unwrap_or(0) as f64 / l)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_order")]
    pub order: usize,
    /// Wavevectors for the Fourier comparison; a default set is generated
    /// when empty.
    #[serde(default)]
    pub k_samples: Vec<Vec<f64>>,
    /// Switches the series extraction to a geometric least-squares fit
    /// starting at this step.
    #[serde(default)]
    pub dt0: Option<f64>,
    #[serde(default = "default_refinements")]
    pub refinements: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Relative velocities tried by `verify`, in units of `λ` and applied
    /// to every component.
    #[serde(default = "default_u_sweep")]
    pub u_sweep: Vec<f64>,
    #[serde(default = "default_resolutions")]
    pub resolutions: Vec<usize>,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Snapshot interval for `simulate`; 0 writes only the final state.
    #[serde(default)]
    pub snapshot_every: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            order: default_order(),
            k_samples: Vec::new(),
            dt0: None,
            refinements: default_refinements(),
            tolerances: Tolerances::default(),
            u_sweep: default_u_sweep(),
            resolutions: default_resolutions(),
            warmup: default_warmup(),
            steps: default_steps(),
            snapshot_every: 0,
        }
    }
}

impl AnalysisConfig {
    pub fn series_method(&self) -> SeriesMethod {
        match self.dt0 {
            Some(dt0) => SeriesMethod::GeometricFit {
                dt0,
                count: self.refinements,
            },
            None => SeriesMethod::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default)]
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            format: OutputFormat::Json,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_order() -> usize {
    3
}

fn default_refinements() -> usize {
    6
}

fn default_u_sweep() -> Vec<f64> {
    vec![0.0, 0.2, 0.5]
}

fn default_resolutions() -> Vec<usize> {
    vec![64, 128, 256]
}

fn default_warmup() -> usize {
    20
}

fn default_steps() -> usize {
    100
}

fn default_dir() -> String {
    "output".into()
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    let mut p = String::new();
    for seg in path.iter() {
        p.push('/');
        match seg {
            Segment::Seq { index } => p.push_str(&index.to_string()),
            Segment::Map { key } => p.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => p.push_str(variant),
            Segment::Unknown => p.push('?'),
        }
    }
    if p.is_empty() {
        p.push('/');
    }
    p
}

/// Parses and validates a configuration.
pub fn load_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        pointer: pointer(e.path()),
        message: e.inner().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config_file(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    load_config(&text)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let spec = self.scheme.build()?;
        if let Some(g) = &self.grid {
            let grid = g.build()?;
            if grid.dim() != spec.dim() {
                return Err(Error::DimensionMismatch {
                    what: "grid",
                    expected: spec.dim(),
                    found: grid.dim(),
                });
            }
        }
        if self.initial.kind == InitialKind::Sine && self.initial.mode.len() != spec.dim() {
            return Err(Error::DimensionMismatch {
                what: "initial mode",
                expected: spec.dim(),
                found: self.initial.mode.len(),
            });
        }
        if !(1..=3).contains(&self.analysis.order) {
            return Err(Error::Validation(format!(
                "analysis.order must be 1, 2 or 3, got {}",
                self.analysis.order
            )));
        }
        if let Some(k) = self.analysis.k_samples.iter().find(|k| k.len() != spec.dim()) {
            return Err(Error::DimensionMismatch {
                what: "k sample",
                expected: spec.dim(),
                found: k.len(),
            });
        }
        if let Some(dt0) = self.analysis.dt0 {
            if !(dt0 > 0.0) {
                return Err(Error::Validation("analysis.dt0 must be positive".into()));
            }
            if self.analysis.refinements < 5 {
                return Err(Error::Validation("analysis.refinements must be at least 5".into()));
            }
        }
        if self.analysis.resolutions.iter().any(|&n| n < 4) {
            return Err(Error::Validation("resolutions must be at least 4 cells".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<SchemeSpec> {
        self.scheme.build()
    }

    /// The configured grid, or a 64-cell unit box per axis.
    pub fn grid(&self) -> Result<Grid> {
        match &self.grid {
            Some(g) => g.build(),
            None => Grid::new(vec![64; self.scheme.d], vec![1.0; self.scheme.d]),
        }
    }

    /// Same box with `n` cells along every axis scaled from the configured
    /// grid's first axis.
    pub fn grid_with_cells(&self, n: usize) -> Result<Grid> {
        let base = self.grid()?;
        let n0 = base.sizes()[0];
        let sizes = base.sizes().iter().map(|&m| m * n / n0).collect();
        Grid::new(sizes, base.lengths().to_vec())
    }

    pub fn initial_state(&self, spec: &SchemeSpec, grid: Grid) -> StateField {
        let lengths = grid.lengths().to_vec();
        StateField::at_equilibrium(grid, spec, |x| self.initial.density(x, &lengths))
    }

    /// Configured wavevectors, or eight with `|k|` from 0.5 to 4 spread
    /// over directions.
    pub fn k_samples(&self) -> Vec<Vec<f64>> {
        if !self.analysis.k_samples.is_empty() {
            return self.analysis.k_samples.clone();
        }
        default_k_samples(self.scheme.d)
    }
}

pub fn default_k_samples(dim: usize) -> Vec<Vec<f64>> {
    (0..8)
        .map(|i| {
            let mag = 0.5 + 0.5 * i as f64;
            match dim {
                1 => vec![if i % 2 == 0 { mag } else { -mag }],
                _ => {
                    let angle = PI * i as f64 / 8.0 + 0.1;
                    let mut k = vec![0.0; dim];
                    k[0] = mag * angle.cos();
                    k[1] = mag * angle.sin();
                    k
                }
            }
        })
        .collect()
}

impl SchemeConfig {
    pub fn build(&self) -> Result<SchemeSpec> {
        if self.velocities.len() != self.q {
            return Err(Error::DimensionMismatch {
                what: "velocities",
                expected: self.q,
                found: self.velocities.len(),
            });
        }
        if let Some(v) = self.velocities.iter().find(|v| v.len() != self.d) {
            return Err(Error::DimensionMismatch {
                what: "velocity components",
                expected: self.d,
                found: v.len(),
            });
        }
        let vset = VelocitySet::from_lattice_units(self.lambda, &self.velocities)?;
        let basis = match &self.polynomials {
            Some(polys) => polys
                .iter()
                .map(|p| MomentPolynomial::from_terms(self.d, p.iter().map(|t| (t.exps.clone(), t.coef))))
                .collect::<Result<Vec<_>>>()?,
            None => default_basis(self.d, self.q).ok_or_else(|| {
                Error::InvalidBasis(format!(
                    "no default basis for d = {}, q = {}; give polynomials",
                    self.d, self.q
                ))
            })?,
        };
        let shift = match self.u_tilde.mode {
            ShiftKind::Zero => ShiftMode::Zero,
            ShiftKind::Constant => ShiftMode::Constant(self.u_tilde.value.clone()),
            ShiftKind::Sine => ShiftMode::Sine(self.u_tilde.value.clone()),
        };
        SchemeSpec::new(vset, basis, self.relaxation.clone(), self.equilibrium.clone(), shift)
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.n.clone(), self.length.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equivalent::advection_vector;

    const MINIMAL: &str = r#"{"scheme": {"d": 1, "q": 2, "velocities": [[1], [-1]],
        "relaxation": [0, 1.5], "equilibrium": [0.75, 0.25]}}"#;

    #[test]
    fn minimal_d1q2() {
        let cfg = load_config(MINIMAL).unwrap();
        let spec = cfg.spec().unwrap();
        assert_eq!(advection_vector(&spec), vec![0.5]);
        assert_eq!(cfg.analysis.order, 3);
        assert_eq!(cfg.k_samples().len(), 8);
    }

    #[test]
    fn rejects_nonzero_s0() {
        let text = MINIMAL.replace("[0, 1.5]", "[0.1, 1.5]");
        match load_config(&text) {
            Err(Error::Validation(m)) => assert_eq!(m, "s[0] must be 0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_non_lattice_velocity() {
        let text = r#"{"scheme": {"d": 1, "q": 2, "velocities": [[0.5], [-1]],
            "relaxation": [0, 1.5], "equilibrium": [0.75, 0.25]}}"#;
        assert!(matches!(
            load_config(text),
            Err(Error::NonLatticeVelocity { index: 0, .. })
        ));
    }

    #[test]
    fn schema_errors_carry_a_pointer() {
        let text = MINIMAL.replace("[0, 1.5]", "[0, \"x\"]");
        match load_config(&text) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/scheme/relaxation/1"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("\"q\": 2", "\"q\": 2, \"bogus\": 1");
        assert!(matches!(load_config(&text), Err(Error::Schema { .. })));
    }

    #[test]
    fn sine_initial_condition() {
        let ic = InitialCondition {
            kind: InitialKind::Sine,
            rho0: 1.0,
            amplitude: 0.1,
            mode: vec![2],
        };
        assert!((ic.density(&[0.125], &[1.0]) - 1.1).abs() < 1e-15);
        assert!((ic.wavevector(&[1.0])[0] - 4.0 * PI).abs() < 1e-15);
    }
}
