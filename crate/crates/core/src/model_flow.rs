//! The exactly solvable hyperbolic model flow `∂t ρ + k(t)(x1, -x2)·∇ρ = 0`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::kernel_quad::{deformation_kernel, DensitySource, KernelQuadOptions, SampledDensity};
use crate::profiles::Profile;
use crate::quad::{integrate, QuadOptions};

/// Piecewise-linear `k(t)` on sample times with its exact running integral.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationSchedule {
    pub times: Vec<f64>,
    pub k: Vec<f64>,
    pub integral: Vec<f64>,
}

impl DeformationSchedule {
    /// Builds a schedule; times must start at 0 and increase strictly.
    pub fn new(times: Vec<f64>, k: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != k.len() {
            return Err(LabError::Param(
                "schedule needs matching, nonempty t and k".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(LabError::Param("schedule must start at t = 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LabError::Param("schedule times must increase strictly".into()));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Param("schedule k values must be finite".into()));
        }
        let mut integral = vec![0.0; times.len()];
        for i in 1..times.len() {
            integral[i] = integral[i - 1] + 0.5 * (k[i] + k[i - 1]) * (times[i] - times[i - 1]);
        }
        Ok(DeformationSchedule { times, k, integral })
    }

    pub fn constant(k: f64, t_end: f64, samples: usize) -> Result<Self> {
        let n = samples.max(2);
        let times: Vec<f64> = (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect();
        DeformationSchedule::new(times, vec![k; n])
    }

    pub fn from_fn(k: impl Fn(f64) -> f64, t_end: f64, samples: usize) -> Result<Self> {
        let n = samples.max(2);
        let times: Vec<f64> = (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect();
        let ks = times.iter().map(|&t| k(t)).collect();
        DeformationSchedule::new(times, ks)
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn locate(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t <= self.end() * (1.0 + 1e-12) + 1e-300) {
            return Err(LabError::Param(format!(
                "time {t} outside the schedule range [0, {}]",
                self.end()
            )));
        }
        let i = self.times.partition_point(|&s| s <= t);
        Ok(i.saturating_sub(1).min(self.times.len().saturating_sub(2)))
    }

    pub fn k_at(&self, t: f64) -> Result<f64> {
        if self.times.len() == 1 {
            return Ok(self.k[0]);
        }
        let i = self.locate(t)?;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        Ok(self.k[i] * (1.0 - w) + self.k[i + 1] * w)
    }

    /// `I(t) = ∫_0^t k`, exact for the piecewise-linear interpolant.
    pub fn integral_at(&self, t: f64) -> Result<f64> {
        if self.times.len() == 1 {
            return Ok(self.k[0] * t);
        }
        let i = self.locate(t)?;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let s = t - t0;
        let slope = (self.k[i + 1] - self.k[i]) / (t1 - t0);
        Ok(self.integral[i] + self.k[i] * s + 0.5 * slope * s * s)
    }

    /// `D(t) = e^{-I(t)}`.
    pub fn stretch(&self, t: f64) -> Result<f64> {
        Ok((-self.integral_at(t)?).exp())
    }

    /// `M = -I(T)`.
    pub fn total(&self) -> f64 {
        -*self.integral.last().unwrap()
    }

    /// Hypotheses: every `k < 0` and `0 < -I(T) ≤ M`.
    pub fn check_admissible(&self, m: f64) -> Result<()> {
        if let Some((i, v)) = self.k.iter().enumerate().find(|(_, v)| !(**v < 0.0)) {
            return Err(LabError::Hypothesis(format!(
                "k must be negative, sample {i} has k = {v}"
            )));
        }
        let total = self.total();
        if !(total > 0.0 && total <= m * (1.0 + 1e-12)) {
            return Err(LabError::Hypothesis(format!(
                "need 0 < -∫k <= M, got -∫k = {total} with M = {m}"
            )));
        }
        Ok(())
    }
}

/// `Φ(x) = (x1 e^{I}, x2 e^{-I})`.
pub fn flow_map(x: (f64, f64), integral: f64) -> (f64, f64) {
    (x.0 * integral.exp(), x.1 * (-integral).exp())
}

/// `ρ̃(x, t) = ρ_in(Φ^{-1}(x, I(t)))` sampled on the grid.
pub fn transport_exact(
    rho_in: &Profile,
    schedule: &DeformationSchedule,
    t: f64,
    grid: &GridSpec,
) -> Result<ScalarField> {
    let i = schedule.integral_at(t)?;
    Ok(transport_by_integral(rho_in, i, grid))
}

pub fn transport_by_integral(rho_in: &Profile, integral: f64, grid: &GridSpec) -> ScalarField {
    let f = &rho_in.f;
    let r = rho_in.support_radius;
    ScalarField::from_fn(*grid, |x, y| {
        let (a, b) = flow_map((x, y), -integral);
        if a * a + b * b >= r * r {
            0.0
        } else {
            f(a, b)
        }
    })
}

/// Checks `supp ρ ⊂ {|x2| > c|x1|}` and `x2 ρ ≤ 0` on a dense polar sample
/// (closures) or on grid nodes.
pub fn check_cone_support(rho: &SampledDensity, cone_constant: f64) -> Result<()> {
    let bad = |x: f64, y: f64, v: f64| -> Option<String> {
        if v == 0.0 {
            return None;
        }
        if y.abs() <= cone_constant * x.abs() {
            return Some(format!("density nonzero at ({x:.4}, {y:.4}) outside the cone"));
        }
        if y * v > 0.0 {
            return Some(format!("x2·ρ > 0 at ({x:.4}, {y:.4})"));
        }
        None
    };
    match &rho.source {
        DensitySource::Grid(field) => {
            let xs = field.grid.coords();
            let n = field.grid.n();
            for j in 0..n {
                for i in 0..n {
                    if let Some(m) = bad(xs[i], xs[j], field.at(i, j)) {
                        return Err(LabError::Hypothesis(m));
                    }
                }
            }
        }
        DensitySource::Closure(f) => {
            let (lo, hi) = (rho.inner_radius, rho.support_radius);
            for a in 0..2048 {
                let al = 2.0 * PI * (a as f64 + 0.5) / 2048.0;
                let (s, c) = al.sin_cos();
                for k in 0..64 {
                    let r = lo + (hi - lo) * (k as f64 + 0.5) / 64.0;
                    let (x, y) = (r * c, r * s);
                    if let Some(m) = bad(x, y, f(x, y)) {
                        return Err(LabError::Hypothesis(m));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Polar-coordinate integral of `w(y) ρ(y)` over the support annulus, `w`
/// supplied as a function of Cartesian `y`.
fn polar_integral(
    rho: &SampledDensity,
    weight: impl Fn(f64, f64) -> f64,
    o: &KernelQuadOptions,
) -> Result<f64> {
    let (lo, hi) = (rho.inner_radius, rho.support_radius);
    if !(lo > 0.0) {
        return Err(LabError::Hypothesis(
            "density must vanish on a disk around the origin".into(),
        ));
    }
    let inner = QuadOptions {
        abs_tol: o.abs_tol * 1e-2,
        rel_tol: o.rel_tol * 1e-2,
        initial_panels: 8,
        max_panels: 20000,
    };
    let outer = QuadOptions {
        abs_tol: o.abs_tol,
        rel_tol: o.rel_tol,
        initial_panels: 64,
        max_panels: 20000,
    };
    let mut failure = None;
    let res = integrate(
        |a| {
            if failure.is_some() {
                return 0.0;
            }
            let (s, c) = a.sin_cos();
            match integrate(
                |r| {
                    let (x, y) = (r * c, r * s);
                    let v = rho.eval(x, y);
                    if v == 0.0 {
                        0.0
                    } else {
                        weight(x, y) * v * r
                    }
                },
                lo,
                hi,
                &inner,
            ) {
                Ok(v) => v.value,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        0.0,
        2.0 * PI,
        &outer,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(res.value)
}

/// `k̃(I) = (1/π) ∬ φ2(φ2² - 3φ1²)/|Φ|⁶ ρ_in(y) dy` with `Φ = flow_map(y, I)`.
pub fn deformation_at_integral(rho_in: &SampledDensity, integral: f64, o: &KernelQuadOptions) -> Result<f64> {
    polar_integral(
        rho_in,
        |x, y| {
            let (p1, p2) = flow_map((x, y), integral);
            deformation_kernel(p1, p2)
        },
        o,
    )
}

/// Deformation at the origin of the transported density at time `t`,
/// by Lagrangian quadrature. Requires the √3-cone sign structure.
pub fn deformation_under_flow(
    rho_in: &SampledDensity,
    schedule: &DeformationSchedule,
    t: f64,
    o: &KernelQuadOptions,
) -> Result<f64> {
    check_cone_support(rho_in, 3f64.sqrt())?;
    deformation_at_integral(rho_in, schedule.integral_at(t)?, o)
}

#[derive(Debug, Clone, Serialize)]
pub struct CertMargins {
    /// `-max_t k̃(t)`; positive when the sign persists.
    pub sign: f64,
    /// Smallest finite-difference slope of `k̃`.
    pub monotone: f64,
    /// `min_t (e^{-7M} k̃(0) - k̃(t))`; nonnegative when the bound holds.
    pub e7m: f64,
    /// `min_t (e^{7 I(t)} k̃(0) - k̃(t))`, the sharper bound from the same proof.
    pub e7i: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertReport {
    pub sign_persists: bool,
    pub monotone: bool,
    pub e7m_bound: bool,
    pub margins: CertMargins,
    pub times: Vec<f64>,
    pub k_tilde: Vec<f64>,
}

impl CertReport {
    pub fn all_pass(&self) -> bool {
        self.sign_persists && self.monotone && self.e7m_bound
    }
}

/// Evaluates `k̃` on the schedule's sample times without hypothesis checks.
pub fn lemma23_quantities(
    rho_in: &SampledDensity,
    schedule: &DeformationSchedule,
    m: f64,
    o: &KernelQuadOptions,
) -> Result<CertReport> {
    let mut kt = Vec::with_capacity(schedule.times.len());
    for &i in &schedule.integral {
        kt.push(deformation_at_integral(rho_in, i, o)?);
    }
    let k0 = kt[0];
    let sign = -kt.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut slope = f64::INFINITY;
    for w in 0..kt.len().saturating_sub(1) {
        let dt = schedule.times[w + 1] - schedule.times[w];
        slope = slope.min((kt[w + 1] - kt[w]) / dt);
    }
    if kt.len() < 2 {
        slope = 0.0;
    }
    let bound = (-7.0 * m).exp() * k0;
    let e7m = kt.iter().map(|k| bound - k).fold(f64::INFINITY, f64::min);
    let e7i = kt
        .iter()
        .zip(&schedule.integral)
        .map(|(k, i)| (7.0 * i).exp() * k0 - k)
        .fold(f64::INFINITY, f64::min);
    Ok(CertReport {
        sign_persists: sign > 0.0,
        monotone: slope >= -1e-8,
        e7m_bound: e7m >= 0.0,
        margins: CertMargins {
            sign,
            monotone: slope,
            e7m,
            e7i,
        },
        times: schedule.times.clone(),
        k_tilde: kt,
    })
}

/// Certifies the three conclusions of the model-flow lemma: `k̃ < 0`,
/// `k̃` nondecreasing, and `k̃(t) ≤ e^{-7M} k̃(0)`.
pub fn verify_lemma23(
    rho_in: &SampledDensity,
    schedule: &DeformationSchedule,
    cone_constant: f64,
    m: f64,
    o: &KernelQuadOptions,
) -> Result<CertReport> {
    if !(cone_constant >= 10f64.sqrt()) {
        return Err(LabError::Hypothesis(format!(
            "cone constant {cone_constant} is below sqrt(10)"
        )));
    }
    schedule.check_admissible(m)?;
    check_cone_support(rho_in, cone_constant)?;
    lemma23_quantities(rho_in, schedule, m, o)
}

/// Checks `D(t) ≥ e^{tM/T - tTd/2}` at every sample, returning the smallest
/// `log D(t) - (tM/T - tTd/2)`. `M` is taken as `-∫_0^T k`.
pub fn stretch_lower_bound_margin(schedule: &DeformationSchedule, d: f64) -> f64 {
    let t_end = schedule.end();
    let m = schedule.total();
    schedule
        .times
        .iter()
        .zip(&schedule.integral)
        .map(|(&t, &i)| -i - (t * m / t_end - t * t_end * d / 2.0))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_of_linear_schedule_is_exact() {
        let s = DeformationSchedule::from_fn(|t| -1.0 + t, 1.0, 5).unwrap();
        let i = s.integral_at(0.3).unwrap();
        assert!((i - (-0.3 + 0.045)).abs() < 1e-15);
        assert!((s.total() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_time_rejected() {
        let s = DeformationSchedule::constant(-0.5, 1.0, 3).unwrap();
        assert!(s.integral_at(1.5).is_err());
        assert!(s.integral_at(-0.1).is_err());
    }
}
