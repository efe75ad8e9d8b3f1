//! Experiment drivers behind the `rvlbm` subcommands.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::config::{ExperimentConfig, InitialCondition, InitialKind, OutputFormat};
use crate::dispersion::{compare_with_equation, DispersionReport};
use crate::equivalent::{
    derive_equivalent_equation, dhumieres_crosscheck, henon_sigma, transition_prediction,
    CrosscheckReport, EquivalentEquation, EquivalentEquationReport,
};
use crate::json::{self, fmt_f64};
use crate::operator::DifferentialOperator;
use crate::scheme::{snapshot_metadata, write_snapshot_csv, SchemeSpec, ShiftMode, Simulation, StateField};
use crate::spectral::apply_operator;
use crate::{Error, Result};

/// Residuals below this are rounding noise; no slope is fitted.
pub const RESIDUAL_FLOOR: f64 = 1e-13;

/// Accepted windows for the refinement study.
pub const EQUILIBRIUM_SLOPE: (f64, f64) = (0.85, 1.15);
pub const TRANSITION_SLOPE: (f64, f64) = (2.7, 3.3);
pub const TRANSITION_RATIO: (f64, f64) = (6.5, 9.5);

/// Pairwise agreement required of `c` and `D` across the `ũ` sweep.
pub const INVARIANCE_TOLERANCE: f64 = 1e-10;

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<fs::File>)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let file = fs::File::create(&path)?;
    Ok((path, BufWriter::new(file)))
}

/// Where and how a command writes its files.
#[derive(Clone, Debug)]
pub struct OutputTarget {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl OutputTarget {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            dir: PathBuf::from(&cfg.output.dir),
            format: cfg.output.format,
        }
    }
}

pub fn cmd_analyze(cfg: &ExperimentConfig, out: &OutputTarget) -> Result<(EquivalentEquationReport, Vec<PathBuf>)> {
    let spec = cfg.spec()?;
    let eq = derive_equivalent_equation(&spec, cfg.analysis.order)?;
    let report = eq.to_report();
    let mut files = vec![write_file(&out.dir, "equivalent_equation.txt", &format!("{}\n", eq.pretty()))?];
    match out.format {
        OutputFormat::Json => files.push(write_file(&out.dir, "equivalent_equation.json", &json::to_string(&report))?),
        OutputFormat::Csv => {
            let (path, mut w) = create(&out.dir, "equivalent_equation.csv")?;
            writeln!(w, "order,multi_index,coefficient")?;
            for (order, op) in eq.ops().iter().enumerate() {
                for t in op.to_wire() {
                    let idx: Vec<String> = t.multi_index.iter().map(u32::to_string).collect();
                    writeln!(w, "{order},{},{}", idx.join(" "), fmt_f64(t.coefficient))?;
                }
            }
            w.flush()?;
            files.push(path);
        }
    }
    Ok((report, files))
}

fn write_dispersion(report: &DispersionReport, out: &OutputTarget, stem: &str) -> Result<PathBuf> {
    match out.format {
        OutputFormat::Json => write_file(&out.dir, &format!("{stem}.json"), &json::to_string(report)),
        OutputFormat::Csv => {
            let (path, mut w) = create(&out.dir, &format!("{stem}.csv"))?;
            report.write_csv(&mut w)?;
            w.flush()?;
            Ok(path)
        }
    }
}

pub fn cmd_dispersion(cfg: &ExperimentConfig, out: &OutputTarget) -> Result<(DispersionReport, Vec<PathBuf>)> {
    let spec = cfg.spec()?;
    let eq = derive_equivalent_equation(&spec, cfg.analysis.order)?;
    let report = compare_with_equation(
        &spec,
        &eq,
        &cfg.k_samples(),
        &cfg.analysis.series_method(),
        &cfg.analysis.tolerances,
    )?;
    let path = write_dispersion(&report, out, "dispersion")?;
    Ok((report, vec![path]))
}

/// Complex amplitude of one Fourier mode of the density,
/// `(2/N) Σ_x ρ(x) e^{−i k·x}`.
pub fn mode_amplitude(state: &StateField, k: &[f64]) -> Complex64 {
    let rho = state.density_field();
    let grid = state.grid();
    let sum: Complex64 = rho
        .iter()
        .enumerate()
        .map(|(c, r)| {
            let phase: f64 = grid.position(c).iter().zip(k).map(|(x, k)| x * k).sum();
            r * Complex64::from_polar(1.0, -phase)
        })
        .sum();
    sum * (2.0 / grid.cells() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Observation {
    pub step: u64,
    pub time: f64,
    pub mass: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationSummary {
    pub steps: u64,
    pub cells: usize,
    pub dt: f64,
    pub initial_mass: f64,
    pub final_mass: f64,
    pub relative_mass_drift: f64,
    pub observables: Vec<Observation>,
    pub elapsed_seconds: f64,
}

fn observe(state: &StateField, k: &[f64]) -> Observation {
    let a = mode_amplitude(state, k);
    Observation {
        step: state.steps(),
        time: state.steps() as f64 * state.dt(),
        mass: state.total_mass(),
        amplitude: a.norm(),
        phase: a.arg(),
    }
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out: &OutputTarget) -> Result<(SimulationSummary, Vec<PathBuf>)> {
    let spec = cfg.spec()?;
    let grid = cfg.grid()?;
    let k = cfg.initial.wavevector(grid.lengths());
    let state = cfg.initial_state(&spec, grid);
    let scheme_json = serde_json::to_value(&cfg.scheme).expect("scheme serializes");
    let start = Instant::now();
    let mut sim = Simulation::new(spec, state)?;
    let mut files = Vec::new();
    let mut observables = vec![observe(sim.state(), &k)];
    let initial_mass = observables[0].mass;
    let every = cfg.analysis.snapshot_every;
    let snapshot = |state: &StateField, files: &mut Vec<PathBuf>| -> Result<()> {
        let stem = format!("snapshot_{:06}", state.steps());
        let (path, mut w) = create(&out.dir, &format!("{stem}.csv"))?;
        write_snapshot_csv(state, &mut w)?;
        w.flush()?;
        files.push(path);
        let meta = snapshot_metadata(state, scheme_json.clone());
        files.push(write_file(&out.dir, &format!("{stem}.json"), &json::to_string(&meta))?);
        Ok(())
    };
    if every > 0 {
        snapshot(sim.state(), &mut files)?;
    }
    for n in 1..=cfg.analysis.steps {
        sim.step();
        observables.push(observe(sim.state(), &k));
        if every > 0 && n % every == 0 {
            snapshot(sim.state(), &mut files)?;
        }
    }
    if every == 0 || !cfg.analysis.steps.is_multiple_of(every) {
        snapshot(sim.state(), &mut files)?;
    }
    let state = sim.state();
    let final_mass = state.total_mass();
    let summary = SimulationSummary {
        steps: state.steps(),
        cells: state.grid().cells(),
        dt: state.dt(),
        initial_mass,
        final_mass,
        relative_mass_drift: (final_mass - initial_mass).abs() / initial_mass.abs().max(f64::MIN_POSITIVE),
        observables,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    let (path, mut w) = create(&out.dir, "observables.csv")?;
    writeln!(w, "step,time,mass,amplitude,phase")?;
    for o in &summary.observables {
        writeln!(
            w,
            "{},{},{},{},{}",
            o.step,
            fmt_f64(o.time),
            fmt_f64(o.mass),
            fmt_f64(o.amplitude),
            fmt_f64(o.phase)
        )?;
    }
    w.flush()?;
    files.push(path);
    let mut stable = summary.clone();
    stable.elapsed_seconds = 0.0;
    files.push(write_file(&out.dir, "simulate.json", &json::to_string(&stable))?);
    Ok((summary, files))
}

/// A fitted refinement slope, or `"floor"` when the residuals are rounding
/// noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Slope {
    Fitted(f64),
    Floor,
}

impl Slope {
    pub fn value(&self) -> Option<f64> {
        match self {
            Slope::Fitted(s) => Some(*s),
            Slope::Floor => None,
        }
    }
}

impl Serialize for Slope {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Slope::Fitted(x) => s.serialize_f64(*x),
            Slope::Floor => s.serialize_str("floor"),
        }
    }
}

/// Least-squares slope of `log₂ residual` against `log₂ Δ`.
pub fn fit_slope(dts: &[f64], residuals: &[f64]) -> Slope {
    if residuals.iter().all(|&r| r < RESIDUAL_FLOOR) || dts.len() < 2 {
        return Slope::Floor;
    }
    let xs: Vec<f64> = dts.iter().map(|d| d.log2()).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Slope::Fitted(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub dt: f64,
    /// `max_j ‖f_j − E_j ρ‖_∞`.
    pub equilibrium_residual: f64,
    /// `max_k ‖m_k − m_k^eq + Δ(1/2 + σ_k) ξ_k‖_∞`.
    pub transition_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub warmup: usize,
    pub rows: Vec<ConvergenceRow>,
    pub equilibrium_slope: Slope,
    pub transition_slope: Slope,
    /// Residual ratio between consecutive resolutions.
    pub transition_ratios: Vec<f64>,
    pub pass: bool,
}

/// Residuals of the equilibrium-proximity and transition predictions for a
/// state holding pre-collision distributions.
pub fn lemma_residuals(spec: &SchemeSpec, state: &StateField) -> Result<(f64, f64)> {
    let rho = state.density_field();
    let f = state.distributions();
    let e = spec.equilibrium();
    let mut eq_res: f64 = 0.0;
    for (fj, ej) in f.iter().zip(e) {
        for (x, r) in fj.iter().zip(&rho) {
            eq_res = eq_res.max((x - ej * r).abs());
        }
    }

    let xi = transition_prediction(spec, 3)?;
    let sigma = henon_sigma(spec.relaxation())?;
    let mm = spec.moment_matrix()?;
    let m = mm.matrix();
    let q = spec.q();
    let dt = state.dt();
    let grid = state.grid();
    let mut tr_res: f64 = 0.0;
    for k in 1..q {
        let meq: f64 = (0..q).map(|j| m[(k, j)] * e[j]).sum();
        let series = xi.xi(k);
        let mut xi_op = DifferentialOperator::zero(spec.dim());
        for (p, op) in series.iter().enumerate() {
            xi_op += &op.scale(dt.powi(p as i32));
        }
        let xi_field = apply_operator(&xi_op, &rho, grid);
        let w = dt * (0.5 + sigma.value(k));
        for c in 0..grid.cells() {
            let mk: f64 = (0..q).map(|j| m[(k, j)] * f[j][c]).sum();
            let predicted = meq * rho[c] - w * xi_field[c];
            tr_res = tr_res.max((mk - predicted).abs());
        }
    }
    Ok((eq_res, tr_res))
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

/// Refinement study over the configured resolutions.
pub fn convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let spec = cfg.spec()?;
    let mut rows = Vec::new();
    for &n in &cfg.analysis.resolutions {
        let grid = cfg.grid_with_cells(n)?;
        let state = cfg.initial_state(&spec, grid);
        let mut sim = Simulation::new(spec.clone(), state)?;
        sim.advance(cfg.analysis.warmup);
        let (eq_res, tr_res) = lemma_residuals(&spec, sim.state())?;
        rows.push(ConvergenceRow {
            n,
            dt: sim.state().dt(),
            equilibrium_residual: eq_res,
            transition_residual: tr_res,
        });
    }
    let dts: Vec<f64> = rows.iter().map(|r| r.dt).collect();
    let eq: Vec<f64> = rows.iter().map(|r| r.equilibrium_residual).collect();
    let tr: Vec<f64> = rows.iter().map(|r| r.transition_residual).collect();
    let equilibrium_slope = fit_slope(&dts, &eq);
    let transition_slope = fit_slope(&dts, &tr);
    let transition_ratios: Vec<f64> = tr.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = match (equilibrium_slope, transition_slope) {
        (Slope::Floor, Slope::Floor) => true,
        (Slope::Fitted(a), Slope::Fitted(b)) => {
            within(a, EQUILIBRIUM_SLOPE)
                && within(b, TRANSITION_SLOPE)
                && transition_ratios.iter().all(|&r| within(r, TRANSITION_RATIO))
        }
        _ => false,
    };
    Ok(ConvergenceReport {
        warmup: cfg.analysis.warmup,
        rows,
        equilibrium_slope,
        transition_slope,
        transition_ratios,
        pass,
    })
}

pub fn cmd_convergence(cfg: &ExperimentConfig, out: &OutputTarget) -> Result<(ConvergenceReport, Vec<PathBuf>)> {
    let report = convergence_study(cfg)?;
    let path = match out.format {
        OutputFormat::Json => write_file(&out.dir, "convergence.json", &json::to_string(&report))?,
        OutputFormat::Csv => {
            let (path, mut w) = create(&out.dir, "convergence.csv")?;
            writeln!(w, "n,dt,equilibrium_residual,transition_residual")?;
            for r in &report.rows {
                writeln!(
                    w,
                    "{},{},{},{}",
                    r.n,
                    fmt_f64(r.dt),
                    fmt_f64(r.equilibrium_residual),
                    fmt_f64(r.transition_residual)
                )?;
            }
            w.flush()?;
            path
        }
    };
    Ok((report, vec![path]))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub u_tilde: Vec<f64>,
    pub report: DispersionReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct PredictorSection {
    pub sweep: Vec<SweepEntry>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceSection {
    /// Largest pairwise relative difference of `c` across the sweep.
    pub advection_spread: f64,
    /// Largest pairwise relative difference of `D` across the sweep.
    pub diffusion_spread: f64,
    /// Largest difference of the measured `μ₂` across the sweep.
    pub mu2_spread: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CrosscheckSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<CrosscheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransitionSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ConvergenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub predictor_vs_oracle: PredictorSection,
    pub u_invariance: InvarianceSection,
    pub transition_lemma: TransitionSection,
    pub dhumieres: CrosscheckSection,
    pub pass: bool,
}

impl VerificationReport {
    /// `(section, pass)` in report order.
    pub fn sections(&self) -> [(&'static str, bool); 4] {
        [
            ("predictor_vs_oracle", self.predictor_vs_oracle.pass),
            ("u_invariance", self.u_invariance.pass),
            ("transition_lemma", self.transition_lemma.pass),
            ("dhumieres", self.dhumieres.pass),
        ]
    }
}

fn sweep_specs(spec: &SchemeSpec, sweep: &[f64]) -> Result<Vec<SchemeSpec>> {
    sweep
        .iter()
        .map(|&u| {
            let shift = if u == 0.0 {
                ShiftMode::Zero
            } else {
                ShiftMode::Constant(vec![u * spec.lambda(); spec.dim()])
            };
            spec.with_shift(shift)
        })
        .collect()
}

fn spread<F: Fn(&EquivalentEquation) -> Vec<f64>>(eqs: &[EquivalentEquation], f: F) -> f64 {
    let vals: Vec<Vec<f64>> = eqs.iter().map(f).collect();
    let mut worst: f64 = 0.0;
    for a in &vals {
        for b in &vals {
            let scale = a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()));
            let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            worst = worst.max(if scale > 0.0 { diff / scale } else { diff });
        }
    }
    worst
}

pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<VerificationReport> {
    verify_with(cfg, |_| {})
}

/// [`cmd_verify`] with a hook applied to every predicted equation before it
/// meets the oracle.
pub fn verify_with<F>(cfg: &ExperimentConfig, alter: F) -> Result<VerificationReport>
where
    F: Fn(&mut EquivalentEquation),
{
    let base = cfg.spec()?;
    let ks = cfg.k_samples();
    let method = cfg.analysis.series_method();
    let specs = sweep_specs(&base, &cfg.analysis.u_sweep)?;

    let mut eqs = Vec::new();
    let mut sweep = Vec::new();
    for spec in &specs {
        let eq = derive_equivalent_equation(spec, 3)?;
        let mut altered = eq.clone();
        alter(&mut altered);
        let report = compare_with_equation(spec, &altered, &ks, &method, &cfg.analysis.tolerances)?;
        sweep.push(SweepEntry {
            u_tilde: spec.constant_shift()?,
            report,
        });
        eqs.push(eq);
    }
    let predictor = PredictorSection {
        pass: sweep.iter().all(|e| e.report.pass),
        sweep,
    };

    let advection_spread = spread(&eqs, EquivalentEquation::advection);
    let diffusion_spread = spread(&eqs, |e| e.diffusion().unwrap_or_default());
    let mut mu2_spread: f64 = 0.0;
    for i in 0..ks.len() {
        let mu2: Vec<Complex64> = predictor
            .sweep
            .iter()
            .filter_map(|e| e.report.samples.get(i).and_then(|s| s.mu.get(2).copied()))
            .collect();
        for a in &mu2 {
            for b in &mu2 {
                mu2_spread = mu2_spread.max((a - b).norm());
            }
        }
    }
    let invariance = InvarianceSection {
        advection_spread,
        diffusion_spread,
        mu2_spread,
        tolerance: INVARIANCE_TOLERANCE,
        pass: advection_spread <= INVARIANCE_TOLERANCE && diffusion_spread <= INVARIANCE_TOLERANCE,
    };

    let transition = match transition_config(cfg).and_then(|c| convergence_study(&c)) {
        Ok(r) => TransitionSection {
            pass: r.pass,
            report: Some(r),
            error: None,
        },
        Err(e) => TransitionSection {
            report: None,
            error: Some(e.to_string()),
            pass: false,
        },
    };

    let dhumieres = match base.with_shift(ShiftMode::Zero).and_then(|s| dhumieres_crosscheck(&s)) {
        Ok(r) => CrosscheckSection {
            report: Some(r),
            error: None,
            pass: true,
        },
        Err(e) => CrosscheckSection {
            report: None,
            error: Some(e.to_string()),
            pass: false,
        },
    };

    let pass = predictor.pass && invariance.pass && transition.pass && dhumieres.pass;
    Ok(VerificationReport {
        predictor_vs_oracle: predictor,
        u_invariance: invariance,
        transition_lemma: transition,
        dhumieres,
        pass,
    })
}

/// The refinement study needs a smooth non-uniform density.
fn transition_config(cfg: &ExperimentConfig) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    if c.initial.kind == InitialKind::Uniform || c.initial.amplitude == 0.0 {
        c.initial = InitialCondition {
            kind: InitialKind::Sine,
            rho0: cfg.initial.rho0,
            amplitude: 0.1,
            mode: vec![1; cfg.scheme.d],
        };
    }
    Ok(c)
}

pub fn write_verification(report: &VerificationReport, out: &OutputTarget) -> Result<PathBuf> {
    match out.format {
        OutputFormat::Json => write_file(&out.dir, "verification.json", &json::to_string(report)),
        OutputFormat::Csv => {
            let (path, mut w) = create(&out.dir, "verification.csv")?;
            writeln!(w, "section,pass")?;
            for (name, pass) in report.sections() {
                writeln!(w, "{name},{pass}")?;
            }
            writeln!(w, "overall,{}", report.pass)?;
            w.flush()?;
            Ok(path)
        }
    }
}

/// Exit status for a failed command: 2 for problems with the input, 1 for
/// everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Schema { .. }
        | Error::Validation(_)
        | Error::NonLatticeVelocity { .. }
        | Error::DimensionMismatch { .. }
        | Error::InvalidBasis(_)
        | Error::InvalidVelocitySet(_)
        | Error::SingularMatrix { .. }
        | Error::DivisionByZero { .. }
        | Error::NonConstantShift
        | Error::NonZeroShift
        | Error::OrderUnavailable { .. }
        | Error::Io(_) => 2,
        _ => 1,
    }
}
