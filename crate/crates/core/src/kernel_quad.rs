//! Real-space singular-integral evaluation of the IPM velocity and of the
//! origin deformation `∂x1 u1(0)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::grid::ScalarField;
use crate::quad::{integrate, QuadOptions};

pub type ProfileFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum DensitySource {
    Grid(ScalarField),
    Closure(ProfileFn),
}

/// A density with known support: `supp ρ ⊂ B_{support_radius} ∖ B_{inner_radius}`.
#[derive(Clone)]
pub struct SampledDensity {
    pub source: DensitySource,
    pub support_radius: f64,
    pub inner_radius: f64,
}

impl fmt::Debug for SampledDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.source {
            DensitySource::Grid(_) => "grid",
            DensitySource::Closure(_) => "closure",
        };
        f.debug_struct("SampledDensity")
            .field("source", &kind)
            .field("support_radius", &self.support_radius)
            .field("inner_radius", &self.inner_radius)
            .finish()
    }
}

impl SampledDensity {
    pub fn from_fn(
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        inner_radius: f64,
        support_radius: f64,
    ) -> Self {
        SampledDensity {
            source: DensitySource::Closure(Arc::new(f)),
            support_radius,
            inner_radius,
        }
    }

    /// Wraps grid samples; the support radii are measured from the values and
    /// `support_radius` is checked against them.
    pub fn from_field(field: ScalarField, support_radius: f64) -> Result<Self> {
        let scale = field.max_abs();
        let n = field.grid.n();
        let xs = field.grid.coords();
        let mut inner = f64::INFINITY;
        for j in 0..n {
            for i in 0..n {
                let v = field.at(i, j);
                let r = xs[i].hypot(xs[j]);
                if v.abs() > 1e-14 * scale {
                    if r > support_radius {
                        return Err(LabError::Param(format!(
                            "density nonzero at radius {r:.4} beyond support radius {support_radius}"
                        )));
                    }
                    inner = inner.min(r);
                }
            }
        }
        // the largest disk free of nonzero nodes, less one spacing for safety
        let inner = if inner.is_finite() {
            (inner - field.grid.spacing()).max(0.0)
        } else {
            support_radius
        };
        Ok(SampledDensity {
            source: DensitySource::Grid(field),
            support_radius,
            inner_radius: inner,
        })
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        if x1 * x1 + x2 * x2 > self.support_radius * self.support_radius {
            return 0.0;
        }
        match &self.source {
            DensitySource::Closure(f) => f(x1, x2),
            DensitySource::Grid(field) => interpolate(field, x1, x2),
        }
    }
}

/// Cubic Lagrange interpolation of grid samples (periodic indexing).
fn interpolate(field: &ScalarField, x1: f64, x2: f64) -> f64 {
    let g = field.grid;
    let n = g.n() as i64;
    let h = g.spacing();
    let s1 = (x1 + g.half_width) / h;
    let s2 = (x2 + g.half_width) / h;
    let i0 = s1.floor() as i64;
    let j0 = s2.floor() as i64;
    let t1 = s1 - i0 as f64;
    let t2 = s2 - j0 as f64;
    let w = |t: f64| {
        [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ]
    };
    let w1 = w(t1);
    let w2 = w(t2);
    let mut total = 0.0;
    for (b, wb) in w2.iter().enumerate() {
        let j = (j0 - 1 + b as i64).rem_euclid(n) as usize;
        let mut row = 0.0;
        for (a, wa) in w1.iter().enumerate() {
            let i = (i0 - 1 + a as i64).rem_euclid(n) as usize;
            row += wa * field.at(i, j);
        }
        total += wb * row;
    }
    total
}

#[derive(Debug, Clone, Copy)]
pub struct KernelQuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Outermost excision radius as a fraction of the support radius.
    pub excision: f64,
}

impl Default for KernelQuadOptions {
    fn default() -> Self {
        KernelQuadOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            excision: 1e-3,
        }
    }
}

fn opts(o: &KernelQuadOptions, panels: usize) -> QuadOptions {
    QuadOptions {
        abs_tol: o.abs_tol,
        rel_tol: o.rel_tol,
        initial_panels: panels,
        max_panels: 20000,
    }
}

/// Angular averages `(∫Ω1 ρ dα, ∫Ω2 ρ dα)` on the circle of radius `r` about `x`,
/// with `Ω1 = -cos α sin α / π`, `Ω2 = cos 2α / (2π)`.
/// `∫ Ω(α) ρ(x + r e_α) dα` with `Ω1 = -cos α sin α / π` (component 1) or
/// `Ω2 = cos 2α / (2π)` (component 2).
fn angular_moment(rho: &SampledDensity, x: (f64, f64), r: f64, comp: usize, o: &QuadOptions) -> Result<f64> {
    let res = integrate(
        |a| {
            let (s, c) = a.sin_cos();
            let w = if comp == 1 {
                -c * s / PI
            } else {
                (2.0 * a).cos() / (2.0 * PI)
            };
            w * rho.eval(x.0 + r * c, x.1 + r * s)
        },
        0.0,
        2.0 * PI,
        o,
    )?;
    Ok(res.value)
}

fn radial_integral(
    rho: &SampledDensity,
    x: (f64, f64),
    lo: f64,
    hi: f64,
    o: &KernelQuadOptions,
) -> Result<(f64, f64)> {
    if hi <= lo {
        return Ok((0.0, 0.0));
    }
    let ang = opts(o, 16);
    let rad = opts(o, 8);
    let mut out = [0.0; 2];
    for comp in 1..=2 {
        let mut failure = None;
        let res = integrate(
            |r| {
                if failure.is_some() {
                    return 0.0;
                }
                match angular_moment(rho, x, r, comp, &ang) {
                    Ok(m) => m / r,
                    Err(e) => {
                        failure = Some(e);
                        0.0
                    }
                }
            },
            lo,
            hi,
            &rad,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        out[comp - 1] = res.value;
    }
    Ok((out[0], out[1]))
}

/// Velocity at `x` from the principal-value convolution with the IPM kernels,
/// `u = PV(H1 ⋆ ρ, H2 ⋆ ρ) - (0, ρ(x)/2)`.
pub fn pv_velocity_at(rho: &SampledDensity, x: (f64, f64), o: &KernelQuadOptions) -> Result<(f64, f64)> {
    if !(x.0.is_finite() && x.1.is_finite()) {
        return Err(LabError::Param("evaluation point must be finite".into()));
    }
    let big_r = rho.support_radius;
    let d = x.0.hypot(x.1);
    let hi = d + big_r;
    if d > big_r {
        return radial_integral(rho, x, d - big_r, hi, o);
    }
    let eta = o.excision * big_r;
    let (j1, j2) = radial_integral(rho, x, eta, hi, o)?;
    let (p1, q1) = radial_integral(rho, x, eta / 2.0, eta, o)?;
    let (p2, q2) = radial_integral(rho, x, eta / 4.0, eta / 2.0, o)?;
    let extrapolate = |a: f64, b: f64, c: f64| {
        let i0 = a;
        let i1 = a + b;
        let i2 = a + b + c;
        let e1 = (4.0 * i1 - i0) / 3.0;
        let e2 = (4.0 * i2 - i1) / 3.0;
        (e2, (e2 - e1).abs())
    };
    let (u1, res1) = extrapolate(j1, p1, p2);
    let (v2, res2) = extrapolate(j2, q1, q2);
    let scale = u1.abs().max(v2.abs());
    let tol = 1e3 * (o.abs_tol + o.rel_tol * scale);
    if res1.max(res2) > tol {
        return Err(LabError::Quadrature(format!(
            "principal value extrapolation residual {:.3e} exceeds {tol:.3e}",
            res1.max(res2)
        )));
    }
    Ok((u1, v2 - 0.5 * rho.eval(x.0, x.1)))
}

/// Kernel of the origin deformation, `y2 (y2² - 3 y1²) / (π |y|⁶)`.
#[inline]
pub fn deformation_kernel(y1: f64, y2: f64) -> f64 {
    let q = y1 * y1 + y2 * y2;
    y2 * (y2 * y2 - 3.0 * y1 * y1) / (PI * q * q * q)
}

fn check_hole(rho: &SampledDensity) -> Result<()> {
    let eta = rho.inner_radius;
    if !(eta > 0.0) {
        return Err(LabError::Hypothesis(
            "density must vanish on a disk around the origin".into(),
        ));
    }
    match &rho.source {
        DensitySource::Grid(field) => {
            let n = field.grid.n();
            let xs = field.grid.coords();
            for j in 0..n {
                for i in 0..n {
                    if xs[i].hypot(xs[j]) < eta && field.at(i, j) != 0.0 {
                        return Err(LabError::Hypothesis(format!(
                            "density nonzero at ({:.4}, {:.4}) inside the excluded disk",
                            xs[i], xs[j]
                        )));
                    }
                }
            }
        }
        DensitySource::Closure(f) => {
            for a in 0..64 {
                let al = 2.0 * PI * a as f64 / 64.0;
                for k in 1..=16 {
                    let r = eta * k as f64 / 16.0 * (1.0 - 1e-9);
                    let v = f(r * al.cos(), r * al.sin());
                    if v != 0.0 {
                        return Err(LabError::Hypothesis(format!(
                            "density nonzero at radius {r:.4e} inside the excluded disk"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// `∂x1 u1(0) = (1/π) ∬ y2 (y2² - 3y1²)/|y|⁶ ρ(y) dy`, Cartesian quadrature.
/// Grid densities are summed by the trapezoid rule.
pub fn origin_deformation(rho: &SampledDensity, o: &KernelQuadOptions) -> Result<f64> {
    check_hole(rho)?;
    match &rho.source {
        DensitySource::Grid(field) => Ok(origin_deformation_grid(field)),
        DensitySource::Closure(_) => {
            let r = rho.support_radius;
            let inner = QuadOptions {
                abs_tol: o.abs_tol * 1e-2,
                rel_tol: o.rel_tol * 1e-2,
                initial_panels: 16,
                max_panels: 20000,
            };
            let outer = opts(o, 16);
            let res = crate::quad::integrate_2d(
                |y1, y2| {
                    let v = rho.eval(y1, y2);
                    if v == 0.0 {
                        0.0
                    } else {
                        deformation_kernel(y1, y2) * v
                    }
                },
                (-r, r),
                (-r, r),
                &outer,
                &inner,
            )?;
            Ok(res.value)
        }
    }
}

/// Trapezoid-rule evaluation of the deformation functional on grid samples;
/// the origin node is skipped.
pub fn origin_deformation_grid(field: &ScalarField) -> f64 {
    let n = field.grid.n();
    let h = field.grid.spacing();
    let xs = field.grid.coords();
    let mut total = 0.0;
    for j in 0..n {
        let mut row = 0.0;
        for i in 0..n {
            let v = field.at(i, j);
            if v != 0.0 && !(xs[i] == 0.0 && xs[j] == 0.0) {
                row += deformation_kernel(xs[i], xs[j]) * v;
            }
        }
        total += row;
    }
    total * h * h
}

/// Polar form `(1/π) ∫∫ -sin(3α)/r² ρ(r, α) dr dα`.
pub fn origin_deformation_polar(
    rho_polar: impl Fn(f64, f64) -> f64,
    r_min: f64,
    r_max: f64,
    o: &KernelQuadOptions,
) -> Result<f64> {
    if !(r_min > 0.0) {
        return Err(LabError::Param("r_min must be positive".into()));
    }
    if !(r_max > r_min) {
        return Err(LabError::Param("r_max must exceed r_min".into()));
    }
    let inner = QuadOptions {
        abs_tol: o.abs_tol * 1e-2,
        rel_tol: o.rel_tol * 1e-2,
        initial_panels: 8,
        max_panels: 20000,
    };
    let mut failure = None;
    let res = integrate(
        |a| {
            let s3 = (3.0 * a).sin();
            if s3 == 0.0 || failure.is_some() {
                return 0.0;
            }
            match integrate(|r| rho_polar(r, a) / (r * r), r_min, r_max, &inner) {
                Ok(v) => -s3 * v.value,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        0.0,
        2.0 * PI,
        &opts(o, 48),
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(res.value / PI)
}

/// Polar-form deformation of a sampled density over its support annulus.
pub fn origin_deformation_polar_of(rho: &SampledDensity, o: &KernelQuadOptions) -> Result<f64> {
    check_hole(rho)?;
    origin_deformation_polar(
        |r, a| rho.eval(r * a.cos(), r * a.sin()),
        rho.inner_radius,
        rho.support_radius,
        o,
    )
}
