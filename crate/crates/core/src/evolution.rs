//! RK4 pseudospectral integrators for full IPM, stable IPM in perturbation
//! form, the forced model equation and the coupled interior/exterior pair.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::kernel_quad::origin_deformation_grid;
use crate::model_flow::DeformationSchedule;
use crate::profiles::cutoff;
use crate::spectral::{
    self, fft2_forward, forward_pair, inverse_pair, origin_deformation_spectral_hat, sobolev_norm_hat,
    sym_u1, sym_u2, SpectralField, Waves,
};

type Spectrum = Vec<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    Fixed(f64),
    Cfl(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub time_step: TimeStep,
    pub dealias: bool,
    pub filter_strength: f64,
    pub stable_mode: bool,
    pub forcing: Option<DeformationSchedule>,
    /// Include the `u[ρ]·∇ρ` term; off gives pure model transport.
    pub self_advection: bool,
    /// Abort when the energy fraction in the outer quarter of the retained
    /// band exceeds this.
    pub tail_limit: f64,
    /// Support threshold relative to `max|ρ_pert|`.
    pub support_threshold: f64,
    /// Evaluate `k` also by grid quadrature at output times.
    pub quadrature_k: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            time_step: TimeStep::Cfl(0.4),
            dealias: true,
            filter_strength: 0.0,
            stable_mode: false,
            forcing: None,
            self_advection: true,
            tail_limit: 1e-3,
            support_threshold: 1e-2,
            quadrature_k: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        match self.time_step {
            TimeStep::Fixed(dt) if !(dt > 0.0) => return Err(LabError::Param("dt must be positive".into())),
            TimeStep::Cfl(c) if !(c > 0.0) => return Err(LabError::Param("cfl must be positive".into())),
            _ => {}
        }
        if !(self.filter_strength >= 0.0) {
            return Err(LabError::Param("filter strength must be nonnegative".into()));
        }
        if !(self.support_threshold > 0.0) {
            return Err(LabError::Param("support threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub rho_pert: ScalarField,
    pub time: f64,
    pub config: SolverConfig,
}

impl SolverState {
    pub fn new(rho_pert: ScalarField, config: SolverConfig) -> Self {
        SolverState {
            rho_pert,
            time: 0.0,
            config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct TraceRow {
    pub t: f64,
    pub k: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "H2")]
    pub h2: f64,
    #[serde(rename = "H3")]
    pub h3: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "S_inf")]
    pub s_inf: f64,
    #[serde(rename = "S_sup")]
    pub s_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormTrace {
    pub rows: Vec<TraceRow>,
    /// `k` by grid quadrature at each row (NaN when not evaluated).
    pub k_quad: Vec<f64>,
    pub support_threshold: f64,
    pub max_symmetry_defect: f64,
    pub steps: usize,
}

impl NormTrace {
    /// Appends a row, filling `M` by the trapezoid rule on `k`.
    pub fn push(&mut self, mut row: TraceRow, k_quad: f64) {
        row.m = match self.rows.last() {
            Some(p) => p.m - 0.5 * (p.k + row.k) * (row.t - p.t),
            None => 0.0,
        };
        self.rows.push(row);
        self.k_quad.push(k_quad);
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn schedule(&self) -> Result<DeformationSchedule> {
        DeformationSchedule::new(self.times(), self.rows.iter().map(|r| r.k).collect())
    }

    /// Largest relative gap between spectral and quadrature `k`.
    pub fn max_k_gap(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.k_quad)
            .filter(|(_, q)| q.is_finite())
            .map(|(r, q)| (r.k - q).abs() / r.k.abs().max(1e-300))
            .fold(0.0, f64::max)
    }
}

/// Origin-centered support radii: `S_inf` bounds every value above
/// `threshold`, `S_sup` is the largest disk free of such values.
pub fn support_radii(rho: &ScalarField, threshold: f64) -> (f64, f64) {
    let n = rho.grid.n();
    let xs = rho.grid.coords();
    let mut s_inf = 0.0f64;
    let mut s_sup = f64::INFINITY;
    for j in 0..n {
        for i in 0..n {
            if rho.at(i, j).abs() > threshold {
                let r = xs[i].hypot(xs[j]);
                s_inf = s_inf.max(r);
                s_sup = s_sup.min(r);
            }
        }
    }
    if s_sup.is_infinite() {
        return (0.0, rho.grid.half_width);
    }
    (s_inf, s_sup)
}

/// Precomputed per-grid data.
struct Engine {
    grid: GridSpec,
    n: usize,
    waves: Waves,
    mask: Vec<f64>,
    filter: Option<Vec<f64>>,
    /// Grid coordinates with the self-mirrored point `-L` mapped to 0, so
    /// the strain term keeps the parity of its input exactly.
    xs: Vec<f64>,
    tail_band: Vec<bool>,
}

impl Engine {
    fn new(grid: GridSpec, cfg: &SolverConfig) -> Self {
        let n = grid.n();
        let waves = Waves::new(&grid);
        let half = (n / 2) as f64;
        let cut = 2.0 / 3.0 * half;
        let mut mask = vec![0.0; n * n];
        let mut tail_band = vec![false; n * n];
        let mut filter = cfg.filter_strength.gt(&0.0).then(|| vec![0.0; n * n]);
        for m1 in 0..n {
            let a = grid.mode(m1).unsigned_abs() as f64;
            for m2 in 0..n {
                let b = grid.mode(m2).unsigned_abs() as f64;
                let idx = m1 * n + m2;
                let nyq = m1 == n / 2 || m2 == n / 2;
                let keep = !nyq && (!cfg.dealias || (a < cut && b < cut));
                mask[idx] = if keep { 1.0 } else { 0.0 };
                tail_band[idx] = a.max(b) >= 0.75 * cut;
                if let Some(f) = filter.as_mut() {
                    let e = (a / half).powi(36) + (b / half).powi(36);
                    f[idx] = (-cfg.filter_strength * e).exp();
                }
            }
        }
        Engine {
            grid,
            n,
            waves,
            mask,
            filter,
            xs: {
                let mut xs = grid.coords();
                xs[0] = 0.0;
                xs
            },
            tail_band,
        }
    }

    fn masked(&self, hat: &[Complex64]) -> Spectrum {
        hat.iter().zip(&self.mask).map(|(z, m)| z * m).collect()
    }

    fn velocity(&self, d: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![Complex64::new(0.0, 0.0); self.n * self.n];
        let mut b = a.clone();
        self.waves.for_each(|idx, k1, k2| {
            a[idx] = d[idx] * sym_u1(k1, k2);
            b[idx] = d[idx] * sym_u2(k1, k2);
        });
        inverse_pair(&a, &b, self.n)
    }

    fn gradient(&self, d: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![Complex64::new(0.0, 0.0); self.n * self.n];
        let mut b = a.clone();
        self.waves.for_each(|idx, k1, k2| {
            a[idx] = d[idx] * Complex64::new(0.0, k1);
            b[idx] = d[idx] * Complex64::new(0.0, k2);
        });
        inverse_pair(&a, &b, self.n)
    }

    fn add_stable_term(&self, out: &mut [Complex64], hat: &[Complex64]) {
        self.waves
            .for_each(|idx, k1, k2| out[idx] += hat[idx] * sym_u2(k1, k2));
    }

    fn finish(&self, mut out: Spectrum) -> Spectrum {
        for (z, m) in out.iter_mut().zip(&self.mask) {
            *z *= m;
        }
        out[0] = Complex64::new(0.0, 0.0);
        out
    }

    fn check_finite(v: &[f64]) -> Result<()> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(LabError::Numerical("non-finite value in right-hand side".into()));
        }
        Ok(())
    }

    /// Right-hand side of the single-field systems.
    fn rhs_single(&self, hat: &[Complex64], t: f64, cfg: &SolverConfig) -> Result<(Spectrum, f64)> {
        let n = self.n;
        let d = self.masked(hat);
        let kf = match &cfg.forcing {
            Some(s) => s.k_at(t)?,
            None => 0.0,
        };
        let (g1, g2) = self.gradient(&d);
        let mut prod = vec![Complex64::new(0.0, 0.0); n * n];
        let mut speed = 0.0f64;
        if cfg.self_advection {
            let (u1, u2) = self.velocity(&d);
            Self::check_finite(&u1)?;
            Self::check_finite(&u2)?;
            for idx in 0..n * n {
                prod[idx].re = -(u1[idx] * g1[idx] + u2[idx] * g2[idx]);
                speed = speed.max(u1[idx].hypot(u2[idx]));
            }
        }
        if cfg.forcing.is_some() {
            for j in 0..n {
                let y = self.xs[j];
                for i in 0..n {
                    let idx = j * n + i;
                    prod[idx].re -= kf * (self.xs[i] * g1[idx] - y * g2[idx]);
                }
            }
            speed += kf.abs() * self.grid.half_width;
        }
        Self::check_finite(&g1)?;
        Self::check_finite(&g2)?;
        fft2_forward(&mut prod, n);
        let mut out = self.finish(prod);
        if cfg.stable_mode {
            self.add_stable_term(&mut out, hat);
            out[0] = Complex64::new(0.0, 0.0);
        }
        Ok((out, speed))
    }

    /// Right-hand side of the coupled pair `(I, P)`:
    /// `∂t I = -u[I+P]·∇I`, `∂t P = -u[I+P]·∇P + u2[I] + u2[P]`.
    fn rhs_coupled(
        &self,
        hi: &[Complex64],
        hp: &[Complex64],
        stable_ext: bool,
    ) -> Result<(Spectrum, Spectrum, f64)> {
        let n = self.n;
        let di = self.masked(hi);
        let dp = self.masked(hp);
        let sum: Spectrum = di.iter().zip(&dp).map(|(a, b)| a + b).collect();
        let (u1, u2) = self.velocity(&sum);
        let (a1, a2) = self.gradient(&di);
        let (b1, b2) = self.gradient(&dp);
        Self::check_finite(&u1)?;
        Self::check_finite(&u2)?;
        let mut ni = vec![0.0; n * n];
        let mut np = vec![0.0; n * n];
        let mut speed = 0.0f64;
        for idx in 0..n * n {
            ni[idx] = -(u1[idx] * a1[idx] + u2[idx] * a2[idx]);
            np[idx] = -(u1[idx] * b1[idx] + u2[idx] * b2[idx]);
            speed = speed.max(u1[idx].hypot(u2[idx]));
        }
        Self::check_finite(&ni)?;
        Self::check_finite(&np)?;
        let (fi, fp) = forward_pair(&ni, &np, n);
        let oi = self.finish(fi);
        let mut op = self.finish(fp);
        if stable_ext {
            self.add_stable_term(&mut op, hi);
            self.add_stable_term(&mut op, hp);
            op[0] = Complex64::new(0.0, 0.0);
        }
        Ok((oi, op, speed))
    }

    fn tail_fraction(&self, hat: &[Complex64]) -> f64 {
        let mut tail = 0.0;
        let mut total = 0.0;
        for (z, &t) in hat.iter().zip(&self.tail_band) {
            let e = z.norm_sqr();
            total += e;
            if t {
                tail += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Single,
    Coupled { stable_ext: bool },
}

/// Time integrator holding spectral state between steps.
pub struct Integrator {
    engine: Engine,
    config: SolverConfig,
    kind: Kind,
    fields: Vec<Spectrum>,
    pub time: f64,
    pub steps: usize,
    symmetric: bool,
    pub max_symmetry_defect: f64,
}

fn axpy(y: &[Spectrum], a: f64, x: &[Spectrum]) -> Vec<Spectrum> {
    y.iter()
        .zip(x)
        .map(|(yv, xv)| yv.iter().zip(xv).map(|(p, q)| p + q * a).collect())
        .collect()
}

impl Integrator {
    pub fn single(state: &SolverState) -> Result<Self> {
        state.config.validate()?;
        let engine = Engine::new(state.rho_pert.grid, &state.config);
        let mut hat = spectral::forward(&state.rho_pert).coeffs;
        hat[0] = Complex64::new(0.0, 0.0);
        Ok(Integrator {
            engine,
            config: state.config.clone(),
            kind: Kind::Single,
            fields: vec![hat],
            time: state.time,
            steps: 0,
            symmetric: state.rho_pert.symmetry_defect() <= 1e-12,
            max_symmetry_defect: 0.0,
        })
    }

    /// Interior `I` (first) and exterior perturbation `P` (second); the
    /// exterior is in perturbation form when its config has `stable_mode`.
    pub fn coupled(inter: &SolverState, ext: &SolverState) -> Result<Self> {
        if inter.rho_pert.grid != ext.rho_pert.grid {
            return Err(LabError::Grid("coupled fields must share a grid".into()));
        }
        ext.config.validate()?;
        let engine = Engine::new(ext.rho_pert.grid, &ext.config);
        let mut hi = spectral::forward(&inter.rho_pert).coeffs;
        let mut hp = spectral::forward(&ext.rho_pert).coeffs;
        hi[0] = Complex64::new(0.0, 0.0);
        hp[0] = Complex64::new(0.0, 0.0);
        Ok(Integrator {
            engine,
            config: ext.config.clone(),
            kind: Kind::Coupled {
                stable_ext: ext.config.stable_mode,
            },
            fields: vec![hi, hp],
            time: ext.time,
            steps: 0,
            symmetric: inter.rho_pert.symmetry_defect() <= 1e-12 && ext.rho_pert.symmetry_defect() <= 1e-12,
            max_symmetry_defect: 0.0,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn grid(&self) -> GridSpec {
        self.engine.grid
    }

    fn rhs(&self, y: &[Spectrum], t: f64) -> Result<(Vec<Spectrum>, f64)> {
        match self.kind {
            Kind::Single => {
                let (o, s) = self.engine.rhs_single(&y[0], t, &self.config)?;
                Ok((vec![o], s))
            }
            Kind::Coupled { stable_ext } => {
                let (a, b, s) = self.engine.rhs_coupled(&y[0], &y[1], stable_ext)?;
                Ok((vec![a, b], s))
            }
        }
    }

    fn cfl_dt(&self, speed: f64) -> f64 {
        let h = self.engine.grid.spacing();
        match self.config.time_step {
            TimeStep::Cfl(c) => {
                if speed > 0.0 {
                    c * h / speed
                } else {
                    f64::INFINITY
                }
            }
            TimeStep::Fixed(dt) => dt,
        }
    }

    /// One RK4 step of at most `max_dt` (the CFL or fixed step otherwise);
    /// returns the step taken.
    pub fn step_limited(&mut self, max_dt: f64) -> Result<f64> {
        let t = self.time;
        let (k1, speed) = self.rhs(&self.fields, t)?;
        let dt = self.cfl_dt(speed).min(max_dt);
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(LabError::Numerical(format!("invalid time step {dt}")));
        }
        let courant = dt * speed / self.engine.grid.spacing();
        if courant > 1.0 {
            return Err(LabError::Numerical(format!(
                "CFL violation: Courant number {courant:.3} exceeds 1"
            )));
        }
        let y2 = axpy(&self.fields, 0.5 * dt, &k1);
        let (k2, _) = self.rhs(&y2, t + 0.5 * dt)?;
        let y3 = axpy(&self.fields, 0.5 * dt, &k2);
        let (k3, _) = self.rhs(&y3, t + 0.5 * dt)?;
        let y4 = axpy(&self.fields, dt, &k3);
        let (k4, _) = self.rhs(&y4, t + dt)?;
        let c = dt / 6.0;
        for (f, field) in self.fields.iter_mut().enumerate() {
            for (idx, z) in field.iter_mut().enumerate() {
                *z += (k1[f][idx] + 2.0 * k2[f][idx] + 2.0 * k3[f][idx] + k4[f][idx]) * c;
            }
            if let Some(filt) = &self.engine.filter {
                for (z, s) in field.iter_mut().zip(filt) {
                    *z *= s;
                }
            }
            let tail = self.engine.tail_fraction(field);
            if tail > self.config.tail_limit {
                return Err(LabError::Resolution(format!(
                    "spectral tail fraction {tail:.3e} exceeds {:.3e} at t = {:.4}",
                    self.config.tail_limit,
                    t + dt
                )));
            }
        }
        self.time = t + dt;
        self.steps += 1;
        Ok(dt)
    }

    /// Advances exactly to `t_target`.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        while self.time < t_target {
            let remaining = t_target - self.time;
            let dt = match self.config.time_step {
                TimeStep::Fixed(dt) => {
                    // land on the target without a sliver step
                    let steps = (remaining / dt - 1e-9).ceil().max(1.0);
                    remaining / steps
                }
                TimeStep::Cfl(_) => remaining,
            };
            let taken = self.step_limited(dt)?;
            if (t_target - self.time).abs() <= 1e-12 * t_target.abs().max(1.0) && taken > 0.0 {
                self.time = t_target;
            }
        }
        Ok(())
    }

    pub fn spectrum(&self, which: usize) -> SpectralField {
        SpectralField {
            grid: self.engine.grid,
            coeffs: self.fields[which].clone(),
        }
    }

    pub fn field(&self, which: usize) -> ScalarField {
        spectral::inverse(&self.spectrum(which))
    }

    pub fn field_count(&self) -> usize {
        self.fields.len()
    }

    /// Deformation `∂x1 u1(0)` of the total field.
    pub fn origin_k(&self) -> f64 {
        let hat = self.total_spectrum();
        origin_deformation_spectral_hat(&hat)
    }

    pub fn total_spectrum(&self) -> SpectralField {
        let mut coeffs = self.fields[0].clone();
        for f in &self.fields[1..] {
            for (a, b) in coeffs.iter_mut().zip(f) {
                *a += b;
            }
        }
        SpectralField {
            grid: self.engine.grid,
            coeffs,
        }
    }

    /// Diagnostic row for field `which` (the total field when `None`).
    pub fn trace_row(&mut self, which: Option<usize>) -> Result<(TraceRow, f64)> {
        let hat = match which {
            Some(w) => self.spectrum(w),
            None => self.total_spectrum(),
        };
        let field = spectral::inverse(&hat);
        let k = origin_deformation_spectral_hat(&hat);
        let h2 = sobolev_norm_hat(&hat, 2.0);
        let h3 = sobolev_norm_hat(&hat, 3.0);
        let c1 = spectral::c1_norm(&field);
        let thr = self.config.support_threshold * field.max_abs();
        let stable = match self.kind {
            Kind::Single => self.config.stable_mode,
            Kind::Coupled { stable_ext } => stable_ext && which != Some(0),
        };
        let (s_inf, _) = support_radii(&field, thr);
        let s_sup = if stable {
            let full = ScalarField::from_fn(field.grid, |_, y| -y).add(&field);
            let mut inner = f64::INFINITY;
            let xs = field.grid.coords();
            let n = field.grid.n();
            for j in 0..n {
                for i in 0..n {
                    if full.at(i, j).abs() > thr {
                        inner = inner.min(xs[i].hypot(xs[j]));
                    }
                }
            }
            inner.min(field.grid.half_width)
        } else {
            support_radii(&field, thr).1
        };
        let k_quad = if self.config.quadrature_k {
            quadrature_k(&field, stable, s_sup)
        } else {
            f64::NAN
        };
        if self.symmetric {
            let d = field.symmetry_defect();
            self.max_symmetry_defect = self.max_symmetry_defect.max(d);
            if d > 1e-8 {
                return Err(LabError::Numerical(format!(
                    "symmetry class lost: defect {d:.3e} at t = {:.4}",
                    self.time
                )));
            }
        }
        Ok((
            TraceRow {
                t: self.time,
                k,
                m: 0.0,
                h2,
                h3,
                c1,
                s_inf,
                s_sup,
            },
            k_quad,
        ))
    }
}

/// Grid-quadrature deformation. In stable mode the perturbation equals `x2`
/// near the origin; the part `x2 χ(|x|)` is removed before summation and its
/// exact contribution `∂x1 u1[x2 χ](0) = 1/4` added back.
fn quadrature_k(field: &ScalarField, stable: bool, hole: f64) -> f64 {
    let h = field.grid.spacing();
    if stable {
        if hole < 6.0 * h {
            return f64::NAN;
        }
        let (a, b) = (0.3 * hole, 0.6 * hole);
        let n = field.grid.n();
        let xs = field.grid.coords();
        let mut core = field.clone();
        for j in 0..n {
            for i in 0..n {
                let r = xs[i].hypot(xs[j]);
                let v = &mut core.values[j * n + i];
                if r < a {
                    *v = 0.0;
                } else {
                    *v -= xs[j] * cutoff(r, a, b);
                }
            }
        }
        origin_deformation_grid(&core) + HOLE_DEFORMATION
    } else {
        let (_, s_sup) = support_radii(field, 1e-10 * field.max_abs());
        if s_sup < 2.0 * h {
            return f64::NAN;
        }
        origin_deformation_grid(field)
    }
}

/// `∂x1 u1(0)` of any `x2 χ(|x|)` with `χ = 1` near 0 and compact support.
pub const HOLE_DEFORMATION: f64 = 0.25;

/// Runs a single-field state to `t_end`, recording a trace row every `every`.
pub fn run(state: &SolverState, t_end: f64, every: f64) -> Result<(NormTrace, SolverState)> {
    run_with(state, t_end, every, |_, _| Ok(()))
}

/// As [`run`], calling `observe(time, integrator)` at every output time.
pub fn run_with(
    state: &SolverState,
    t_end: f64,
    every: f64,
    mut observe: impl FnMut(f64, &Integrator) -> Result<()>,
) -> Result<(NormTrace, SolverState)> {
    if !(t_end >= 0.0) {
        return Err(LabError::Param("final time must be nonnegative".into()));
    }
    let mut integ = Integrator::single(state)?;
    let mut trace = NormTrace {
        support_threshold: state.config.support_threshold,
        ..Default::default()
    };
    let (row, kq) = integ.trace_row(Some(0))?;
    trace.push(row, kq);
    observe(integ.time, &integ)?;
    let outputs = output_times(state.time, t_end, every);
    for t in outputs {
        integ.advance_to(t)?;
        let (row, kq) = integ.trace_row(Some(0))?;
        trace.push(row, kq);
        observe(integ.time, &integ)?;
    }
    trace.steps = integ.steps;
    trace.max_symmetry_defect = integ.max_symmetry_defect;
    let out = SolverState {
        rho_pert: integ.field(0),
        time: integ.time,
        config: state.config.clone(),
    };
    Ok((trace, out))
}

pub fn output_times(t0: f64, t_end: f64, every: f64) -> Vec<f64> {
    if !(t_end > t0) {
        return Vec::new();
    }
    let every = if every > 0.0 { every } else { t_end - t0 };
    let count = ((t_end - t0) / every - 1e-9).ceil().max(1.0) as usize;
    (1..=count)
        .map(|i| if i == count { t_end } else { t0 + every * i as f64 })
        .collect()
}

fn one_step(state: &SolverState, dt: f64, config: SolverConfig) -> Result<SolverState> {
    let s = SolverState {
        config: SolverConfig {
            time_step: TimeStep::Fixed(dt),
            ..config
        },
        ..state.clone()
    };
    let mut integ = Integrator::single(&s)?;
    integ.step_limited(dt)?;
    Ok(SolverState {
        rho_pert: integ.field(0),
        time: integ.time,
        config: state.config.clone(),
    })
}

/// One RK4 step of `∂t ρ = -u[ρ]·∇ρ`.
pub fn step_ipm(state: &SolverState, dt: f64) -> Result<SolverState> {
    let cfg = SolverConfig {
        stable_mode: false,
        forcing: None,
        ..state.config.clone()
    };
    one_step(state, dt, cfg)
}

/// One RK4 step of `∂t P + u[P]·∇P = u2[P]`.
pub fn step_stable_ipm(state: &SolverState, dt: f64) -> Result<SolverState> {
    if !state.config.stable_mode {
        return Err(LabError::Param("step_stable_ipm requires stable_mode".into()));
    }
    let cfg = SolverConfig {
        forcing: None,
        ..state.config.clone()
    };
    one_step(state, dt, cfg)
}

/// One RK4 step of `∂t ρ + u[ρ]·∇ρ + k(t)(x1, -x2)·∇ρ = 0`.
pub fn step_forced(state: &SolverState, dt: f64, schedule: &DeformationSchedule) -> Result<SolverState> {
    let cfg = SolverConfig {
        stable_mode: false,
        forcing: Some(schedule.clone()),
        ..state.config.clone()
    };
    one_step(state, dt, cfg)
}

/// One synchronized RK4 step of the coupled interior/exterior pair.
pub fn step_coupled(inter: &SolverState, ext: &SolverState, dt: f64) -> Result<(SolverState, SolverState)> {
    let e = SolverState {
        config: SolverConfig {
            time_step: TimeStep::Fixed(dt),
            ..ext.config.clone()
        },
        ..ext.clone()
    };
    let mut integ = Integrator::coupled(inter, &e)?;
    integ.step_limited(dt)?;
    Ok((
        SolverState {
            rho_pert: integ.field(0),
            time: integ.time,
            config: inter.config.clone(),
        },
        SolverState {
            rho_pert: integ.field(1),
            time: integ.time,
            config: ext.config.clone(),
        },
    ))
}
