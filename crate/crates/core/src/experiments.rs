//! Drivers turning each estimate of the construction into a measured scaling law, plus the
//! finite layered construction.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

use crate::error::{LabError, Result};
use crate::evolution::{support_radii, Integrator, NormTrace, SolverConfig, SolverState, TimeStep};
use crate::grid::{make_grid, GridSpec, ScalarField};
use crate::kernel_quad::{origin_deformation, KernelQuadOptions};
use crate::model_flow::{self, CertReport, DeformationSchedule};
use crate::profiles::{self, ConeStackSpec, HoleProfileSpec, OscillatorySpec, Profile};
use crate::spectral;

/// Background: hole profile plus cone stack on a periodic box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackgroundSpec {
    pub grid_n: usize,
    pub grid_l: f64,
    pub hole_k: usize,
    pub hole_lambda1: f64,
    pub hole_ratio: f64,
    pub stack_k: usize,
    pub delta0: f64,
    pub cone_constant: f64,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        BackgroundSpec {
            grid_n: 512,
            grid_l: 2.0,
            hole_k: 1,
            hole_lambda1: 1.25,
            hole_ratio: 2.1,
            stack_k: 2,
            delta0: 3.6,
            cone_constant: 2.0,
        }
    }
}

impl BackgroundSpec {
    pub fn grid(&self) -> Result<GridSpec> {
        make_grid(self.grid_n, self.grid_l)
    }

    pub fn hole(&self) -> Result<HoleProfileSpec> {
        HoleProfileSpec::geometric(self.hole_k, self.hole_lambda1, self.hole_ratio)
    }

    pub fn stack(&self) -> ConeStackSpec {
        ConeStackSpec::new(self.stack_k, self.delta0, self.cone_constant)
    }

    /// `ρ + x2` at `t = 0`.
    pub fn perturbation(&self) -> Result<ScalarField> {
        let g = self.grid()?;
        let hole = profiles::build_hole_profile(&self.hole()?, &g)?;
        let stack = profiles::build_cone_stack(&self.stack(), &g)?;
        Ok(hole.add(&stack))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentParams {
    pub eps0: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    /// Total construction budget `ε`.
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "K_bound")]
    pub k_bound: f64,
    pub d: f64,
    pub lambda_list: Vec<f64>,
    pub a_list: Vec<f64>,
    #[serde(rename = "A_list")]
    pub osc_list: Vec<f64>,
    #[serde(rename = "N_list")]
    pub n_list: Vec<u32>,
    pub layer_count: usize,
    pub theta0: f64,
    /// Output spacing of background runs.
    pub every: f64,
    pub background: BackgroundSpec,
    /// Grids for the gluing sweep and the construction loop (background
    /// otherwise unchanged).
    pub gluing_grid_n: usize,
    pub construction_grid_n: usize,
    /// Constant `k` and horizon of the model-flow experiments.
    pub model_k: f64,
    pub model_t_end: f64,
    pub model_grid_n: usize,
    pub model_grid_l: f64,
    /// Oscillation frequency `N` of the growth step.
    pub growth_n: u32,
    pub growth_grid_n: usize,
    pub osc_grid_n: usize,
    pub osc_grid_l: f64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            eps0: 0.5,
            eps1: 0.5,
            eps2: 0.5,
            eps3: 0.5,
            epsilon: 0.5,
            t_end: 0.2,
            m: 1.0,
            k_bound: 100.0,
            d: 1.0,
            lambda_list: vec![4.0, 8.0, 16.0, 32.0],
            a_list: vec![0.02, 0.04, 0.08, 0.16],
            osc_list: vec![16.0, 32.0, 64.0, 128.0],
            n_list: vec![8, 16, 32],
            layer_count: 3,
            theta0: 0.0,
            every: 0.02,
            background: BackgroundSpec::default(),
            gluing_grid_n: 1024,
            construction_grid_n: 1024,
            model_k: -1.0,
            model_t_end: 0.5,
            model_grid_n: 256,
            model_grid_l: 2.0,
            growth_n: 16,
            growth_grid_n: 256,
            osc_grid_n: 512,
            osc_grid_l: 2.0,
        }
    }
}

impl ExperimentParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps0", self.eps0),
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("eps3", self.eps3),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(LabError::Param(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        for (name, v) in [
            ("T", self.t_end),
            ("M", self.m),
            ("d", self.d),
            ("every", self.every),
        ] {
            if !(v > 0.0) {
                return Err(LabError::Param(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.k_bound > 1.0) {
            return Err(LabError::Param(format!(
                "K_bound = {} must exceed 1",
                self.k_bound
            )));
        }
        if !(self.model_t_end > 0.0) || !self.model_k.is_finite() {
            return Err(LabError::Param("model flow needs T > 0 and finite k".into()));
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}

/// Least-squares power law `y ≈ C x^p` (times `ln x` when `log_factor`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub abscissae: Vec<f64>,
    pub ordinates: Vec<f64>,
    pub exponent: f64,
    pub prefactor: f64,
    /// Root-mean-square deviation in log space.
    pub residual: f64,
    pub log_factor: bool,
}

fn fit_data(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(LabError::Numerical("a fit needs at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(LabError::Numerical(format!(
            "fit data must be positive and finite: x = {x:?}, y = {y:?}"
        )));
    }
    Ok(())
}

impl ScalingFit {
    /// Free exponent and prefactor.
    pub fn power_law(x: &[f64], y: &[f64]) -> Result<Self> {
        fit_data(x, y)?;
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let n = lx.len() as f64;
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
        let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        if !(sxx > 0.0) {
            return Err(LabError::Numerical("fit abscissae must not all coincide".into()));
        }
        let p = sxy / sxx;
        let c = my - p * mx;
        let res = lx
            .iter()
            .zip(&ly)
            .map(|(a, b)| (b - c - p * a).powi(2))
            .sum::<f64>()
            / n;
        Ok(ScalingFit {
            abscissae: x.to_vec(),
            ordinates: y.to_vec(),
            exponent: p,
            prefactor: c.exp(),
            residual: res.sqrt(),
            log_factor: false,
        })
    }

    /// Exponent held fixed; only the prefactor is fitted.
    pub fn fixed_exponent(x: &[f64], y: &[f64], exponent: f64, log_factor: bool) -> Result<Self> {
        fit_data(x, y)?;
        if log_factor && x.iter().any(|v| *v <= 1.0) {
            return Err(LabError::Numerical("ln x factor needs x > 1".into()));
        }
        let shape = |v: f64| exponent * v.ln() + if log_factor { v.ln().ln() } else { 0.0 };
        let devs: Vec<f64> = x.iter().zip(y).map(|(a, b)| b.ln() - shape(*a)).collect();
        let n = devs.len() as f64;
        let c = devs.iter().sum::<f64>() / n;
        let res = devs.iter().map(|d| (d - c).powi(2)).sum::<f64>() / n;
        Ok(ScalingFit {
            abscissae: x.to_vec(),
            ordinates: y.to_vec(),
            exponent,
            prefactor: c.exp(),
            residual: res.sqrt(),
            log_factor,
        })
    }

    pub fn model(&self, x: f64) -> f64 {
        let l = if self.log_factor { x.ln() } else { 1.0 };
        self.prefactor * l * x.powf(self.exponent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedFit {
    pub name: String,
    #[serde(flatten)]
    pub fit: ScalingFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub params: Value,
    pub fits: Vec<NamedFit>,
    pub checks: Vec<Check>,
}

fn finite_or(v: f64, alt: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        alt
    }
}

impl Report {
    pub fn new(experiment: &str, params: Value) -> Self {
        Report {
            experiment: experiment.into(),
            params,
            fits: Vec::new(),
            checks: Vec::new(),
        }
    }

    /// Records a check whose margin is nonnegative exactly when it passes.
    pub fn check(&mut self, name: &str, margin: f64) {
        self.checks.push(Check {
            name: name.into(),
            pass: margin >= 0.0,
            margin: finite_or(margin, -f64::MAX),
        });
    }

    pub fn fit(&mut self, name: &str, fit: &ScalingFit) {
        self.fits.push(NamedFit {
            name: name.into(),
            fit: fit.clone(),
        });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// `f(x) = x2 · exp(1 - 1/(1 - |x|²/R²))` with `R = 0.8`: smooth, symmetric,
/// used as interior data.
pub fn interior_profile() -> Profile {
    let r0: f64 = 0.8;
    Profile::new(
        move |x, y| {
            let s = (x * x + y * y) / (r0 * r0);
            if s >= 1.0 {
                0.0
            } else {
                y * (1.0 - 1.0 / (1.0 - s)).exp()
            }
        },
        0.0,
        r0,
    )
}

/// Even bump `exp(1 - 1/(1 - |x|²))` on the unit disk.
pub fn bump_profile() -> Profile {
    Profile::new(
        |x, y| {
            let s = x * x + y * y;
            if s >= 1.0 {
                0.0
            } else {
                (1.0 - 1.0 / (1.0 - s)).exp()
            }
        },
        0.0,
        1.0,
    )
}

fn max_speed(field: &ScalarField) -> f64 {
    let v = spectral::velocity(field);
    v.u1.values
        .iter()
        .zip(&v.u2.values)
        .map(|(a, b)| a.hypot(*b))
        .fold(0.0, f64::max)
}

/// Fixed step from the CFL rule at the initial state, with headroom, chosen
/// so an integer number of steps fills each output interval.
fn fixed_step(field: &ScalarField, k: f64, every: f64) -> (f64, usize) {
    let speed = max_speed(field) + k.abs() * field.grid.half_width;
    let dt = 0.3 * field.grid.spacing() / speed.max(1e-12);
    let per = (every / dt).ceil().max(1.0) as usize;
    (every / per as f64, per)
}

fn output_count(t_end: f64, every: f64) -> Result<usize> {
    let q = t_end / every;
    if (q - q.round()).abs() > 1e-9 || q.round() < 1.0 {
        return Err(LabError::Param(format!(
            "final time {t_end} must be a positive multiple of the output spacing {every}"
        )));
    }
    Ok(q.round() as usize)
}

fn stable_config(dt: f64) -> SolverConfig {
    SolverConfig {
        time_step: TimeStep::Fixed(dt),
        stable_mode: true,
        ..Default::default()
    }
}

fn plain_config(dt: f64) -> SolverConfig {
    SolverConfig {
        time_step: TimeStep::Fixed(dt),
        ..Default::default()
    }
}

/// A fixed-step reference run: the perturbation at every output time and the
/// deformation at every step.
#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub dt: f64,
    pub steps_per_output: usize,
    pub outputs: usize,
    pub trace: NormTrace,
    pub fields: Vec<ScalarField>,
    pub schedule: DeformationSchedule,
}

impl ReferenceRun {
    pub fn m(&self) -> f64 {
        self.trace.rows.last().map(|r| r.m).unwrap_or(0.0)
    }

    pub fn min_hole(&self) -> f64 {
        self.trace
            .rows
            .iter()
            .map(|r| r.s_sup)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Stable-form run of `P = ρ + x2` from `p0`.
pub fn run_reference(
    p0: &ScalarField,
    t_end: f64,
    every: f64,
    step: Option<(f64, usize)>,
) -> Result<ReferenceRun> {
    let outputs = output_count(t_end, every)?;
    let (dt, per) = step.unwrap_or_else(|| fixed_step(p0, 0.0, every));
    let mut integ = Integrator::single(&SolverState::new(p0.clone(), stable_config(dt)))?;
    let mut trace = NormTrace {
        support_threshold: integ.config().support_threshold,
        ..Default::default()
    };
    let (row, kq) = integ.trace_row(Some(0))?;
    trace.push(row, kq);
    let mut fields = vec![p0.clone()];
    let mut times = vec![0.0];
    let mut ks = vec![row.k];
    for _ in 0..outputs {
        for _ in 0..per {
            integ.step_limited(dt)?;
            times.push(integ.time);
            ks.push(integ.origin_k());
        }
        let (row, kq) = integ.trace_row(Some(0))?;
        trace.push(row, kq);
        fields.push(integ.field(0));
    }
    trace.steps = integ.steps;
    trace.max_symmetry_defect = integ.max_symmetry_defect;
    Ok(ReferenceRun {
        dt,
        steps_per_output: per,
        outputs,
        trace,
        fields,
        schedule: DeformationSchedule::new(times, ks)?,
    })
}

/// Background of the given spec evolved to `t_end`.
pub fn run_background(spec: &BackgroundSpec, t_end: f64, every: f64) -> Result<ReferenceRun> {
    run_reference(&spec.perturbation()?, t_end, every, None)
}

/// A layer `I` evolved jointly with an exterior perturbation `P`, compared
/// against a reference run sharing its time step.
#[derive(Debug, Clone)]
pub struct LayeredRun {
    /// Diagnostics of `I + P`.
    pub total: NormTrace,
    pub layer: NormTrace,
    pub ext: NormTrace,
    /// `‖I + P - P_ref‖_{C¹}` per output.
    pub c1_gap: Vec<f64>,
    /// `‖P - P_ref‖_{H³}` per output.
    pub h3_gap_ext: Vec<f64>,
    /// `S_sup(P) - S_inf(I)` per output; positive when supports separate.
    pub separation: Vec<f64>,
    pub layer_fields: Vec<ScalarField>,
    pub total_fields: Vec<ScalarField>,
    pub schedule: DeformationSchedule,
}

impl LayeredRun {
    pub fn m(&self) -> f64 {
        self.total.rows.last().map(|r| r.m).unwrap_or(0.0)
    }

    /// View as a reference for the next layer.
    pub fn as_reference(&self, reference: &ReferenceRun) -> ReferenceRun {
        ReferenceRun {
            dt: reference.dt,
            steps_per_output: reference.steps_per_output,
            outputs: reference.outputs,
            trace: self.total.clone(),
            fields: self.total_fields.clone(),
            schedule: self.schedule.clone(),
        }
    }
}

pub fn run_layered(reference: &ReferenceRun, layer: &ScalarField) -> Result<LayeredRun> {
    let dt = reference.dt;
    let p0 = &reference.fields[0];
    let inter = SolverState::new(layer.clone(), plain_config(dt));
    let ext = SolverState::new(p0.clone(), stable_config(dt));
    let mut integ = Integrator::coupled(&inter, &ext)?;
    let mut out = LayeredRun {
        total: NormTrace::default(),
        layer: NormTrace::default(),
        ext: NormTrace::default(),
        c1_gap: Vec::new(),
        h3_gap_ext: Vec::new(),
        separation: Vec::new(),
        layer_fields: Vec::new(),
        total_fields: Vec::new(),
        schedule: DeformationSchedule::constant(0.0, 1.0, 2)?,
    };
    let thr = integ.config().support_threshold;
    for t in [&mut out.total, &mut out.layer, &mut out.ext] {
        t.support_threshold = thr;
    }
    let mut times = vec![0.0];
    let mut ks = vec![integ.origin_k()];
    let record = |integ: &mut Integrator, o: usize, out: &mut LayeredRun| -> Result<()> {
        let (rt, kt) = integ.trace_row(None)?;
        let (rl, kl) = integ.trace_row(Some(0))?;
        let (re, ke) = integ.trace_row(Some(1))?;
        out.total.push(rt, kt);
        out.layer.push(rl, kl);
        out.ext.push(re, ke);
        let i = integ.field(0);
        let p = integ.field(1);
        let total = i.add(&p);
        out.c1_gap
            .push(spectral::c1_norm(&total.sub(&reference.fields[o])));
        out.h3_gap_ext
            .push(spectral::sobolev_norm(&p.sub(&reference.fields[o]), 3.0));
        out.separation.push(re.s_sup - rl.s_inf);
        out.layer_fields.push(i);
        out.total_fields.push(total);
        Ok(())
    };
    record(&mut integ, 0, &mut out)?;
    for o in 1..=reference.outputs {
        for _ in 0..reference.steps_per_output {
            integ.step_limited(dt)?;
            times.push(integ.time);
            ks.push(integ.origin_k());
        }
        record(&mut integ, o, &mut out)?;
    }
    for t in [&mut out.total, &mut out.layer, &mut out.ext] {
        t.steps = integ.steps;
        t.max_symmetry_defect = integ.max_symmetry_defect;
    }
    out.schedule = DeformationSchedule::new(times, ks)?;
    Ok(out)
}

/// Fields of a single-field run at `per`-step output intervals.
fn run_fixed(state: SolverState, dt: f64, per: usize, outputs: usize) -> Result<Vec<ScalarField>> {
    let mut integ = Integrator::single(&state)?;
    let mut fields = vec![state.rho_pert.clone()];
    for _ in 0..outputs {
        for _ in 0..per {
            integ.step_limited(dt)?;
        }
        fields.push(integ.field(0));
    }
    Ok(fields)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone)]
pub struct GluingOutcome {
    /// Scales that ran to completion, and those the grid cannot carry.
    pub resolved: Vec<f64>,
    pub unresolved: Vec<f64>,
    pub fit_ext: ScalingFit,
    pub fit_int: ScalingFit,
    pub initial_gap: f64,
    pub separation: f64,
    pub report: Report,
}

/// Gluing estimate: for each `λ` evolves interior `f(λx)/λ` jointly with the
/// background, against the background alone and the interior under the
/// model strain `k(t)` of the background.
pub fn sweep_gluing_error(p: &ExperimentParams) -> Result<GluingOutcome> {
    p.validate()?;
    let spec = BackgroundSpec {
        grid_n: p.gluing_grid_n,
        ..p.background.clone()
    };
    let bg = run_background(&spec, p.t_end, p.every)?;
    let grid = bg.fields[0].grid;
    let f = interior_profile();
    let mut resolved = Vec::new();
    let mut unresolved = Vec::new();
    let mut ext_gaps = Vec::new();
    let mut int_gaps = Vec::new();
    let mut initial_gap = 0.0f64;
    let mut separation = f64::INFINITY;
    let h = grid.spacing();
    for &lambda in &p.lambda_list {
        if f.support_radius / lambda < 4.0 * h {
            unresolved.push(lambda);
            continue;
        }
        let i0 = f.rescaled(lambda).sample(&grid);
        let run = match run_layered(&bg, &i0) {
            Err(LabError::Resolution(_)) => {
                unresolved.push(lambda);
                continue;
            }
            r => r?,
        };
        let model = SolverState::new(
            i0.clone(),
            SolverConfig {
                forcing: Some(bg.schedule.clone()),
                ..plain_config(bg.dt)
            },
        );
        let model_fields = run_fixed(model, bg.dt, bg.steps_per_output, bg.outputs)?;
        let int: Vec<f64> = run
            .layer_fields
            .iter()
            .zip(&model_fields)
            .map(|(a, b)| spectral::sobolev_norm_scaled(&a.sub(b), 3.0, lambda))
            .collect();
        // relative to the fields themselves; roundoff is amplified by the H³ weight
        let ext_scale = spectral::sobolev_norm(&bg.fields[0], 3.0);
        let int_scale = spectral::sobolev_norm_scaled(&i0, 3.0, lambda);
        initial_gap = initial_gap.max(run.h3_gap_ext[0] / ext_scale).max(int[0] / int_scale);
        separation = separation.min(min_of(&run.separation));
        resolved.push(lambda);
        ext_gaps.push(sup(&run.h3_gap_ext));
        int_gaps.push(sup(&int));
    }
    if resolved.len() < 2 {
        return Err(LabError::Resolution(format!(
            "gluing sweep resolved only {resolved:?} on {}^2; unresolved {unresolved:?}",
            grid.n()
        )));
    }
    let fit_ext = ScalingFit::power_law(&resolved, &ext_gaps)?;
    let fit_int = ScalingFit::power_law(&resolved, &int_gaps)?;
    let mut report = Report::new("gluing", p.to_value());
    report.fit("exterior_h3_gap", &fit_ext);
    report.fit("scaled_interior_h3_gap", &fit_int);
    report.check("all_scales_resolved", -(unresolved.len() as f64));
    report.check(
        "exterior_exponent_near_minus_one",
        0.3 - (fit_ext.exponent + 1.0).abs(),
    );
    report.check(
        "interior_exponent_near_minus_one",
        0.3 - (fit_int.exponent + 1.0).abs(),
    );
    report.check("exterior_fit_residual", 0.15 - fit_ext.residual);
    report.check("interior_fit_residual", 0.15 - fit_int.residual);
    report.check("zero_gap_at_t0", 1e-10 - initial_gap);
    report.check("support_separation", separation);
    Ok(GluingOutcome {
        resolved,
        unresolved,
        fit_ext,
        fit_int,
        initial_gap,
        separation,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct QuadraticOutcome {
    pub fit: ScalingFit,
    pub rate_fit: ScalingFit,
    pub gaps: Vec<f64>,
    pub report: Report,
}

/// Self-advected vs purely transported data of amplitude `a` under constant
/// strain `model_k`.
pub fn sweep_quadratic_error(p: &ExperimentParams) -> Result<QuadraticOutcome> {
    p.validate()?;
    if p.a_list.iter().any(|a| !(*a > 0.0)) {
        return Err(LabError::Param("amplitudes must be positive".into()));
    }
    let grid = make_grid(p.model_grid_n, p.model_grid_l)?;
    let g = interior_profile().sample(&grid);
    let schedule = DeformationSchedule::constant(p.model_k, p.model_t_end, 2)?;
    let every = p.model_t_end / 10.0;
    let amax = p.a_list.iter().cloned().fold(0.0, f64::max);
    let (dt, per) = fixed_step(&g.scale(amax), p.model_k, every);
    let mut gaps = Vec::new();
    let mut rates = Vec::new();
    for &a in &p.a_list {
        let data = g.scale(a);
        let cfg = SolverConfig {
            forcing: Some(schedule.clone()),
            ..plain_config(dt)
        };
        let full = SolverState::new(data.clone(), cfg.clone());
        let lin = SolverState::new(
            data.clone(),
            SolverConfig {
                self_advection: false,
                ..cfg
            },
        );
        let ff = run_fixed(full.clone(), dt, per, 10)?;
        let lf = run_fixed(lin.clone(), dt, per, 10)?;
        let gap = ff
            .iter()
            .zip(&lf)
            .map(|(x, y)| spectral::sobolev_norm(&x.sub(y), 3.0))
            .fold(0.0, f64::max);
        let f1 = run_fixed(full, dt, 1, 1)?;
        let l1 = run_fixed(lin, dt, 1, 1)?;
        rates.push(spectral::sobolev_norm(&f1[1].sub(&l1[1]), 3.0) / dt);
        gaps.push(gap);
    }
    let fit = ScalingFit::power_law(&p.a_list, &gaps)?;
    let rate_fit = ScalingFit::power_law(&p.a_list, &rates)?;
    let mut order: Vec<(f64, f64)> = p.a_list.iter().cloned().zip(gaps.iter().cloned()).collect();
    order.sort_by(|x, y| x.0.total_cmp(&y.0));
    let monotone = order
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / w[1].1)
        .fold(f64::INFINITY, f64::min);
    let mut report = Report::new("quadratic", p.to_value());
    report.fit("h3_gap", &fit);
    report.fit("one_step_rate", &rate_fit);
    report.check("exponent_near_two", 0.3 - (fit.exponent - 2.0).abs());
    report.check("fit_residual", 0.15 - fit.residual);
    report.check("rate_exponent_near_two", 0.3 - (rate_fit.exponent - 2.0).abs());
    report.check("gap_monotone_in_amplitude", monotone);
    Ok(QuadraticOutcome {
        fit,
        rate_fit,
        gaps,
        report,
    })
}

/// Exponent of the velocity bound for `f·sin(A x_dir)` with `j` derivatives.
pub fn velocity_bound_exponent(component: usize, direction: usize, j: usize) -> Result<f64> {
    let j = j as f64;
    match (component, direction) {
        (1, 1) | (2, 2) => Ok(j - 1.0),
        (2, 1) | (1, 2) => Ok(j),
        _ => Err(LabError::Param(format!(
            "component and direction must be 1 or 2, got ({component}, {direction})"
        ))),
    }
}

/// `C^j` norm (`j ≤ 1`) of one velocity component of `f·sin(A x_dir + θ0)`.
pub fn oscillatory_velocity_norm(
    grid: &GridSpec,
    f: &Profile,
    a: f64,
    j: usize,
    component: usize,
    direction: usize,
    theta0: f64,
) -> Result<f64> {
    velocity_bound_exponent(component, direction, j)?;
    if j > 1 {
        return Err(LabError::Param("only C^0 and C^1 norms are supported".into()));
    }
    if a * grid.spacing() > PI / 3.0 {
        return Err(LabError::Resolution(format!(
            "frequency {a} exceeds the dealiased band of spacing {}",
            grid.spacing()
        )));
    }
    let base = f.sample(grid);
    let field = ScalarField::from_fn(*grid, |x, y| {
        let s = if direction == 1 { x } else { y };
        (a * s + theta0).sin()
    });
    let rho = ScalarField::from_values(
        *grid,
        base.values
            .iter()
            .zip(&field.values)
            .map(|(p, q)| p * q)
            .collect(),
    )?;
    let v = spectral::velocity(&rho);
    let u = if component == 1 { v.u1 } else { v.u2 };
    let mut norm = u.max_abs();
    if j == 1 {
        let (g1, g2) = spectral::gradient(&u);
        norm = norm.max(g1.max_abs()).max(g2.max_abs());
    }
    Ok(norm)
}

#[derive(Debug, Clone, Serialize)]
pub struct OscillatoryCase {
    pub component: usize,
    pub direction: usize,
    pub j: usize,
    pub theta0: f64,
    pub bound_exponent: f64,
    /// Free log-log fit of the measured norms.
    pub fit: ScalingFit,
    /// `C ln(A) A^p`, `C` calibrated at the smallest `A`.
    pub envelope: ScalingFit,
    /// `min (envelope - measured)/envelope`.
    pub envelope_margin: f64,
}

pub fn sweep_oscillatory_velocity(
    a_list: &[f64],
    j: usize,
    component: usize,
    direction: usize,
    theta0: f64,
    grid: &GridSpec,
) -> Result<OscillatoryCase> {
    let p = velocity_bound_exponent(component, direction, j)?;
    let f = bump_profile();
    let mut measured = Vec::new();
    for &a in a_list {
        measured.push(oscillatory_velocity_norm(
            grid, &f, a, j, component, direction, theta0,
        )?);
    }
    let fit = ScalingFit::power_law(a_list, &measured)?;
    let mut envelope = ScalingFit::fixed_exponent(a_list, &measured, p, true)?;
    let (ia, _) = a_list
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .unwrap();
    envelope.prefactor = measured[ia] / (a_list[ia].ln() * a_list[ia].powf(p));
    let envelope_margin = a_list
        .iter()
        .zip(&measured)
        .map(|(a, m)| {
            let e = envelope.model(*a);
            (e - m) / e + 1e-12
        })
        .fold(f64::INFINITY, f64::min);
    Ok(OscillatoryCase {
        component,
        direction,
        j,
        theta0,
        bound_exponent: p,
        fit,
        envelope,
        envelope_margin,
    })
}

/// All four `(component, direction)` cases at `j = 0`, plus the phase check
/// at `θ0 = π/3`.
pub fn verify_oscillatory(p: &ExperimentParams) -> Result<(Vec<OscillatoryCase>, Report)> {
    p.validate()?;
    let grid = make_grid(p.osc_grid_n, p.osc_grid_l)?;
    let mut report = Report::new("oscillatory", p.to_value());
    let mut cases = Vec::new();
    for (c, d) in [(1, 1), (2, 1), (1, 2), (2, 2)] {
        let base = sweep_oscillatory_velocity(&p.osc_list, 0, c, d, p.theta0, &grid)?;
        let shifted = sweep_oscillatory_velocity(&p.osc_list, 0, c, d, p.theta0 + PI / 3.0, &grid)?;
        let tag = format!("u{c}_sin_x{d}");
        report.fit(&tag, &base.fit);
        report.check(&format!("{tag}_below_envelope"), base.envelope_margin);
        report.check(&format!("{tag}_log_residual"), 0.15 - base.fit.residual);
        let q = shifted.fit.prefactor * p.osc_list[0].powf(shifted.fit.exponent)
            / (base.fit.prefactor * p.osc_list[0].powf(base.fit.exponent));
        report.check(
            &format!("{tag}_phase_prefactor_within_2x"),
            2f64.ln() - q.ln().abs(),
        );
        cases.push(base);
        cases.push(shifted);
    }
    Ok((cases, report))
}

/// Unit cone layer `f(λx)/λ` for the deformation step.
fn deform_layer(cone_constant: f64, lambda: f64) -> Result<Profile> {
    Ok(profiles::cone_layer((1.0, 2.0), cone_constant)?.rescaled(lambda))
}

fn check_cone_resolved(lambda: f64, cone_constant: f64, grid: &GridSpec) -> Result<()> {
    let width = profiles::cone_half_angle(cone_constant) / lambda;
    if width < 2.0 * grid.spacing() {
        return Err(LabError::Resolution(format!(
            "cone layer at lambda = {lambda:.3} has angular width {width:.4} below two grid spacings"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DeformOutcome {
    pub background: NormTrace,
    pub layered: NormTrace,
    pub lambda: f64,
    pub amplitude: f64,
    pub gain: f64,
    /// `(amplitude, gain)` of the amplitude sweep.
    pub sweep: Vec<(f64, f64)>,
    pub report: Report,
}

/// Deformation gain, sign, closeness and separation of one added cone layer.
pub fn deform_step(
    reference: &ReferenceRun,
    cone_constant: f64,
    lambda: f64,
    amplitude: f64,
) -> Result<(LayeredRun, f64)> {
    let grid = reference.fields[0].grid;
    check_cone_resolved(lambda, cone_constant, &grid)?;
    let layer = deform_layer(cone_constant, lambda)?
        .scaled(amplitude)
        .sample(&grid);
    let run = run_layered(reference, &layer)?;
    let gain = run.m() - reference.m();
    Ok((run, gain))
}

/// `2.2/δ`, with `δ` the smallest hole radius of the reference: the layer's
/// outer edge `2/λ` stays inside the hole.
fn deform_scale(reference: &ReferenceRun) -> Result<f64> {
    let delta = reference.min_hole();
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(LabError::Hypothesis(
            "reference has no support-free disk at the origin".into(),
        ));
    }
    Ok(2.2 / delta)
}

pub fn run_deform_iteration(p: &ExperimentParams) -> Result<DeformOutcome> {
    p.validate()?;
    let bg = run_background(&p.background, p.t_end, p.every)?;
    let grid = bg.fields[0].grid;
    let ks = &bg.schedule.k;
    if ks.iter().any(|k| !(*k < 0.0)) {
        return Err(LabError::Hypothesis(
            "background deformation is not negative on [0, T]".into(),
        ));
    }
    let c = p.background.cone_constant;
    let lambda = deform_scale(&bg)?;
    let unit = deform_layer(c, lambda)?.sample(&grid);
    let amplitude = 0.5 * p.eps2 / spectral::c1_norm(&unit);
    let (run, gain) = deform_step(&bg, c, lambda, amplitude)?;
    let mut sweep = Vec::new();
    for frac in [0.25, 0.5] {
        let (_, g) = deform_step(&bg, c, lambda, amplitude * frac)?;
        sweep.push((amplitude * frac, g));
    }
    sweep.push((amplitude, gain));
    let kmax = run.schedule.k.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut report = Report::new("deform", p.to_value());
    report.check("gain_positive", gain);
    report.check("k_new_negative", -kmax);
    report.check("c1_closeness", p.eps2 - sup(&run.c1_gap));
    report.check("support_separation", min_of(&run.separation));
    let amps: Vec<f64> = sweep.iter().map(|s| s.0).collect();
    let gains: Vec<f64> = sweep.iter().map(|s| s.1).collect();
    match ScalingFit::power_law(&amps, &gains) {
        Ok(fit) => {
            report.check("gain_linear_in_amplitude", 0.2 - (fit.exponent - 1.0).abs());
            report.fit("gain_vs_amplitude", &fit);
        }
        Err(_) => report.check("gain_linear_in_amplitude", -1.0),
    }
    Ok(DeformOutcome {
        background: bg.trace.clone(),
        layered: run.total.clone(),
        lambda,
        amplitude,
        gain,
        sweep,
        report,
    })
}

/// Oscillatory layer evolved under the constant model strain.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthRun {
    pub n: u32,
    pub times: Vec<f64>,
    pub h2: Vec<f64>,
    pub h2_model: Vec<f64>,
    pub stretch: Vec<f64>,
    pub l2: Vec<f64>,
    /// `‖Nρ(·/N) - Nρ̄(·/N)‖_{H³}`.
    pub deviation: Vec<f64>,
    #[serde(skip)]
    pub trace: NormTrace,
}

pub fn growth_run(p: &ExperimentParams, n: u32, sign: f64) -> Result<GrowthRun> {
    let grid = make_grid(p.growth_grid_n, 4.0 / n as f64)?;
    let spec = OscillatorySpec {
        n,
        theta0: p.theta0,
        l2_target: p.eps2 / 2.0,
    };
    profiles::build_oscillatory_layer(&spec, &grid)?;
    let layer = profiles::oscillatory_layer(&spec)?.scaled(sign);
    let schedule = DeformationSchedule::constant(p.model_k, p.model_t_end, 2)?;
    let cfg = SolverConfig {
        forcing: Some(schedule.clone()),
        ..Default::default()
    };
    let every = p.model_t_end / 20.0;
    let mut out = GrowthRun {
        n,
        times: Vec::new(),
        h2: Vec::new(),
        h2_model: Vec::new(),
        stretch: Vec::new(),
        l2: Vec::new(),
        deviation: Vec::new(),
        trace: NormTrace::default(),
    };
    let state = SolverState::new(layer.sample(&grid), cfg);
    let (trace, _) = crate::evolution::run_with(&state, p.model_t_end, every, |t, integ| {
        let field = integ.field(0);
        let model = model_flow::transport_exact(&layer, &schedule, t.min(schedule.end()), &grid)?;
        out.times.push(t);
        out.h2.push(spectral::sobolev_norm(&field, 2.0));
        out.h2_model.push(spectral::sobolev_norm(&model, 2.0));
        out.stretch.push(schedule.stretch(t.min(schedule.end()))?);
        out.l2.push(field.l2_norm());
        out.deviation.push(spectral::sobolev_norm_scaled(
            &spectral::dealiased(&field.sub(&model)),
            3.0,
            n as f64,
        ));
        Ok(())
    })?;
    out.trace = trace;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GrowthOutcome {
    pub run: GrowthRun,
    pub sweep: Vec<GrowthRun>,
    pub deviation_fit: ScalingFit,
    pub report: Report,
}

pub fn run_growth_experiment(p: &ExperimentParams) -> Result<GrowthOutcome> {
    p.validate()?;
    if !(p.model_k < 0.0) {
        return Err(LabError::Hypothesis(
            "growth needs a negative model deformation".into(),
        ));
    }
    let run = growth_run(p, p.growth_n, 1.0)?;
    let half = 0.5 * p.model_t_end * (1.0 + 1e-9);
    let bound = run
        .times
        .iter()
        .zip(run.h2.iter().zip(&run.stretch))
        .filter(|(t, _)| **t <= half)
        .map(|(_, (h, d))| {
            let need = 0.75 * p.eps2 / 4.0 * d * d;
            (h - need) / need
        })
        .fold(f64::INFINITY, f64::min);
    let model_gap = run
        .h2
        .iter()
        .zip(&run.h2_model)
        .map(|(h, m)| 0.25 - (h - m).abs() / m)
        .fold(f64::INFINITY, f64::min);
    let schedule = DeformationSchedule::constant(p.model_k, p.model_t_end, 21)?;
    let stretch_margin = model_flow::stretch_lower_bound_margin(&schedule, p.d);
    let mut sweep = Vec::new();
    for &n in &p.n_list {
        sweep.push(if n == p.growth_n {
            run.clone()
        } else {
            growth_run(p, n, 1.0)?
        });
    }
    let ns: Vec<f64> = p.n_list.iter().map(|n| *n as f64).collect();
    let devs: Vec<f64> = sweep
        .iter()
        .map(|r| {
            r.times
                .iter()
                .zip(&r.deviation)
                .filter(|(t, _)| **t <= half)
                .map(|(_, d)| *d)
                .fold(0.0, f64::max)
        })
        .collect();
    let deviation_fit = ScalingFit::fixed_exponent(&ns, &devs, -0.1, true)?;
    let mut report = Report::new("growth", p.to_value());
    report.fit("model_deviation", &deviation_fit);
    report.fit("model_deviation_free", &ScalingFit::power_law(&ns, &devs)?);
    report.check("h2_lower_bound", bound);
    report.check("model_h2_agreement", model_gap);
    report.check("stretch_lower_bound", stretch_margin);
    report.check("l2_closeness", p.eps3 - sup(&run.l2));
    report.check("deviation_fit_residual", 0.2 - deviation_fit.residual);
    Ok(GrowthOutcome {
        run,
        sweep,
        deviation_fit,
        report,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerRecord {
    pub kind: String,
    pub scale: f64,
    pub amplitude: f64,
    pub h2_initial: f64,
    pub m_after: f64,
}

#[derive(Debug, Clone)]
pub struct ConstructionOutcome {
    /// `M_n` after each completed step, starting with the background.
    pub m: Vec<f64>,
    pub layers: Vec<LayerRecord>,
    pub h2_cost: f64,
    pub growth_factor: Option<f64>,
    pub traces: Vec<NormTrace>,
    pub report: Report,
}

/// Finite construction. Each step adds a deformation layer; after it a
/// growth layer is added when `e^{M}` first reaches `4^{k²}`, `k = 0, 1, 2`.
/// Deformation layers occupy successive octaves inward from the hole edge and
/// the growth layer sits innermost.
pub fn run_full_construction(p: &ExperimentParams) -> Result<ConstructionOutcome> {
    p.validate()?;
    if !(2..=5).contains(&p.layer_count) {
        return Err(LabError::Param(
            "layer_count must lie in 2..=5 at desk scale".into(),
        ));
    }
    let spec = BackgroundSpec {
        grid_n: p.construction_grid_n,
        ..p.background.clone()
    };
    let bg = run_background(&spec, p.t_end, p.every)?;
    let grid = bg.fields[0].grid;
    let c = spec.cone_constant;
    let mut report = Report::new("construct", p.to_value());
    let kmax = bg.schedule.k.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    report.check("background_k_negative", -kmax);
    // one growth layer at desk scale, so layer_count - 1 deformation octaves
    let lambda0 = deform_scale(&bg)?;
    let deform_total = p.layer_count - 1;
    let growth_n = (lambda0 * 2f64.powi(deform_total as i32 - 1)).ceil() as u32;
    let nu = p.epsilon / 2.0;
    let mut reference = bg.clone();
    let mut ms = vec![bg.m()];
    let mut layers = Vec::new();
    let mut traces = vec![bg.trace.clone()];
    let mut growth_factor = None;
    let mut cost2 = 0.0;
    let mut next_threshold = 0u32;
    let mut deforms = 0usize;
    while layers.len() < p.layer_count {
        let step = ms.len() - 1;
        // deformation layer
        let lambda = lambda0 * 2f64.powi(deforms as i32);
        check_cone_resolved(lambda, c, &grid)?;
        let unit = deform_layer(c, lambda)?.sample(&grid);
        let target = 0.9 * nu / (step + 1) as f64;
        let a = (target / spectral::sobolev_norm(&unit, 2.0)).min(target / spectral::c1_norm(&unit));
        let layer = unit.scale(a);
        deforms += 1;
        let h2 = spectral::sobolev_norm(&layer, 2.0);
        cost2 += h2 * h2;
        let run = run_layered(&reference, &layer)?;
        report.check(
            &format!("layer{}_separation", layers.len() + 1),
            min_of(&run.separation),
        );
        layers.push(LayerRecord {
            kind: "deform".into(),
            scale: lambda,
            amplitude: a,
            h2_initial: h2,
            m_after: run.m(),
        });
        traces.push(run.total.clone());
        reference = run.as_reference(&reference);
        // growth layer on crossing the next threshold
        let crossed =
            next_threshold <= 2 && reference.m().exp() >= 4f64.powi((next_threshold * next_threshold) as i32);
        if crossed && layers.len() < p.layer_count {
            if next_threshold > 0 {
                return Err(LabError::Param(
                    "a second growth layer has no planned scale".into(),
                ));
            }
            let eps2 = p.epsilon / 8.0 * 2f64.powi(-(next_threshold as i32));
            let ospec = OscillatorySpec {
                n: growth_n,
                theta0: p.theta0,
                l2_target: eps2 / 2.0,
            };
            let s = profiles::build_oscillatory_layer(&ospec, &grid)?;
            // the N^{-1/5}|D²f| part dominates H² at desk N, so cap by the measured norm
            let shrink = (eps2 / 2.0 / spectral::sobolev_norm(&s, 2.0)).min(1.0);
            // f is fixed up to sign; take the sign that does not weaken k
            let sign = if spectral::origin_deformation_spectral(&s) > 0.0 {
                -1.0
            } else {
                1.0
            };
            let layer = s.scale(sign * shrink);
            let h2 = spectral::sobolev_norm(&layer, 2.0);
            cost2 += h2 * h2;
            let run = run_layered(&reference, &layer)?;
            report.check(
                &format!("layer{}_separation", layers.len() + 1),
                min_of(&run.separation),
            );
            let mid = reference.outputs / 2;
            growth_factor = Some(run.layer.rows[mid].h2 / run.layer.rows[0].h2);
            layers.push(LayerRecord {
                kind: "growth".into(),
                scale: growth_n as f64,
                amplitude: sign * shrink * eps2 / 2.0,
                h2_initial: h2,
                m_after: run.m(),
            });
            traces.push(run.total.clone());
            reference = run.as_reference(&reference);
            next_threshold += 1;
        }
        ms.push(reference.m());
    }
    let increase = ms.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    report.check(
        "m_strictly_increasing",
        if increase > 0.0 {
            increase
        } else {
            increase - f64::MIN_POSITIVE
        },
    );
    let allowance: Vec<f64> = (0..ms.len())
        .map(|n| ms[n] + (0..n).map(|j| 4f64.powi(-(j as i32))).sum::<f64>())
        .collect();
    report.check(
        "m_plus_allowance_nondecreasing",
        allowance
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min),
    );
    let h2_cost = cost2.sqrt();
    report.check("initial_h2_cost_within_budget", p.epsilon - h2_cost);
    let m_last = *ms.last().unwrap();
    match growth_factor {
        Some(gf) => report.check("growth_factor", gf - 0.5 * (0.5 * m_last).exp()),
        None => report.check("growth_factor", -1.0),
    }
    Ok(ConstructionOutcome {
        m: ms,
        layers,
        h2_cost,
        growth_factor,
        traces,
        report,
    })
}

/// Two-run agreement checks: identical configurations, step halving and grid
/// refinement on smooth data.
pub fn uniqueness_smoke(p: &ExperimentParams) -> Result<Report> {
    p.validate()?;
    let mut report = Report::new("unique", p.to_value());
    let t_end = 0.4;
    let data = |n: usize| -> Result<ScalarField> {
        let g = make_grid(n, p.model_grid_l)?;
        Ok(interior_profile().scaled(0.5).sample(&g))
    };
    let cfg = |dt: f64| SolverConfig {
        time_step: TimeStep::Fixed(dt),
        ..Default::default()
    };
    let coarse = data(p.model_grid_n)?;
    let a = crate::evolution::run(&SolverState::new(coarse.clone(), cfg(0.02)), t_end, 0.1)?;
    let b = crate::evolution::run(&SolverState::new(coarse.clone(), cfg(0.02)), t_end, 0.1)?;
    let same = a.0.rows == b.0.rows && a.1.rho_pert.values == b.1.rho_pert.values;
    report.check("identical_configs_bitwise", if same { 0.0 } else { -1.0 });
    let r = rk4_convergence_factor(&coarse, t_end, 0.04)?;
    report.check("dt_halving_richardson", 0.2 - (r / 16.0 - 1.0).abs());
    let fine = data(2 * p.model_grid_n)?;
    let tc = crate::evolution::run(&SolverState::new(coarse, Default::default()), t_end, 0.1)?.0;
    let tf = crate::evolution::run(&SolverState::new(fine, Default::default()), t_end, 0.1)?.0;
    let gap = tc
        .rows
        .iter()
        .zip(&tf.rows)
        .map(|(x, y)| (x.h2 - y.h2).abs() / y.h2)
        .fold(0.0, f64::max);
    report.check("grid_refinement_h2_gap", 0.01 - gap);
    Ok(report)
}

/// `‖ρ_dt - ρ_{dt/2}‖ / ‖ρ_{dt/2} - ρ_{dt/4}‖` in `L²` at `t_end`.
pub fn rk4_convergence_factor(data: &ScalarField, t_end: f64, dt: f64) -> Result<f64> {
    let run = |h: f64| -> Result<ScalarField> {
        let cfg = SolverConfig {
            time_step: TimeStep::Fixed(h),
            ..Default::default()
        };
        Ok(
            crate::evolution::run(&SolverState::new(data.clone(), cfg), t_end, t_end)?
                .1
                .rho_pert,
        )
    };
    let r1 = run(dt)?;
    let r2 = run(dt / 2.0)?;
    let r3 = run(dt / 4.0)?;
    let e1 = r1.sub(&r2).l2_norm();
    let e2 = r2.sub(&r3).l2_norm();
    if !(e2 > 0.0) {
        return Err(LabError::Numerical(
            "step halving produced identical fields".into(),
        ));
    }
    Ok(e1 / e2)
}

/// Relative `L²` drift of pure model transport over `[0, t_end]`.
pub fn transport_l2_drift(data: &ScalarField, k: f64, t_end: f64) -> Result<f64> {
    let cfg = SolverConfig {
        forcing: Some(DeformationSchedule::constant(k, t_end, 2)?),
        self_advection: false,
        ..Default::default()
    };
    let (_, end) = crate::evolution::run(&SolverState::new(data.clone(), cfg), t_end, t_end)?;
    Ok((end.rho_pert.l2_norm() - data.l2_norm()).abs() / data.l2_norm())
}

/// Random admissible deformation schedule: negative, smooth, `-∫k = M`.
pub fn synthetic_schedule(
    rng: &mut impl Rng,
    m: f64,
    t_end: f64,
    samples: usize,
) -> Result<DeformationSchedule> {
    let b: f64 = rng.gen_range(0.0..0.8);
    let w: f64 = rng.gen_range(0.5..6.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let raw = DeformationSchedule::from_fn(|t| -(1.0 + b * (w * t + phi).sin()), t_end, samples)?;
    let scale = m / raw.total();
    DeformationSchedule::new(raw.times.clone(), raw.k.iter().map(|k| k * scale).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma23Case {
    pub m: f64,
    pub cone_constant: f64,
    pub cert: CertReport,
}

/// Certifies the model-flow lemma on `count` random schedules and cone data.
pub fn verify_lemma23_batch(count: usize, seed: u64, samples: usize) -> Result<(Vec<Lemma23Case>, Report)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o = KernelQuadOptions {
        rel_tol: 1e-9,
        ..Default::default()
    };
    let mut cases = Vec::new();
    let mut report = Report::new(
        "lemma23",
        serde_json::json!({"count": count, "seed": seed, "samples": samples}),
    );
    for i in 0..count {
        let m: f64 = rng.gen_range(0.1..2.0);
        let c: f64 = rng.gen_range(10f64.sqrt()..8.0);
        let r_in: f64 = rng.gen_range(0.5..2.0);
        let ratio: f64 = rng.gen_range(1.3..2.0);
        let schedule = synthetic_schedule(&mut rng, m, 1.0, samples)?;
        let rho = profiles::cone_layer((r_in, r_in * ratio), c)?.density();
        let cert = model_flow::verify_lemma23(&rho, &schedule, c, m, &o)?;
        report.check(&format!("case{i}_sign"), cert.margins.sign);
        report.check(&format!("case{i}_monotone"), cert.margins.monotone + 1e-8);
        report.check(&format!("case{i}_e7m"), cert.margins.e7m);
        cases.push(Lemma23Case {
            m,
            cone_constant: c,
            cert,
        });
    }
    Ok((cases, report))
}

/// Cone sign law on random admissible layers: `k < 0` for `x2 ρ ≤ 0` in the
/// `√3`-cone.
pub fn cone_sign_batch(count: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o = KernelQuadOptions::default();
    let mut out = Vec::new();
    for _ in 0..count {
        let c: f64 = rng.gen_range(3f64.sqrt()..8.0);
        let r_in: f64 = rng.gen_range(0.2..2.0);
        let ratio: f64 = rng.gen_range(1.2..2.5);
        let amp: f64 = rng.gen_range(0.1..3.0);
        let layer = profiles::cone_layer((r_in, r_in * ratio), c)?.scaled(amp);
        out.push(origin_deformation(&layer.density(), &o)?);
    }
    Ok(out)
}

/// `S_inf` of a field at the default relative threshold.
pub fn support_extent(field: &ScalarField) -> f64 {
    let thr = SolverConfig::default().support_threshold * field.max_abs();
    support_radii(field, thr).0
}

/// Solver hygiene: `L²` drift of pure transport over unit time, RK4
/// self-convergence, symmetry defect of the background run and byte-identical
/// reruns.
pub fn solver_hygiene(p: &ExperimentParams) -> Result<Report> {
    p.validate()?;
    let mut report = Report::new("hygiene", p.to_value());
    let grid = make_grid(p.model_grid_n, p.model_grid_l)?;
    let data = interior_profile().scaled(0.5).sample(&grid);
    let narrow = interior_profile().rescaled(4.0 / 3.0).sample(&grid);
    let drift = transport_l2_drift(&narrow, p.model_k, 1.0)?;
    report.check("transport_l2_drift", 1e-4 - drift);
    let r = rk4_convergence_factor(&data, 0.4, 0.04)?;
    report.check("rk4_factor_16", 0.2 - (r / 16.0 - 1.0).abs());
    let bg = run_background(&p.background, p.t_end, p.every)?;
    report.check("symmetry_defect", 1e-8 - bg.trace.max_symmetry_defect);
    let again = run_background(&p.background, p.t_end, p.every)?;
    let same = crate::io::trace_to_csv(&bg.trace) == crate::io::trace_to_csv(&again.trace)
        && bg.fields.last().map(|f| &f.values) == again.fields.last().map(|f| &f.values);
    report.check("byte_identical_rerun", if same { 0.0 } else { -1.0 });
    Ok(report)
}
