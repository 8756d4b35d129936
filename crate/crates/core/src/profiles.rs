//! Initial-data families: the hole profile, cone layers and stacks, and the
//! oscillatory growth layer.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::kernel_quad::{ProfileFn, SampledDensity};
use crate::quad::{integrate, QuadOptions};

/// `e^{-1/s}` and its first two derivatives; zero below `s = 1/700`.
fn psi(s: f64) -> (f64, f64, f64) {
    if s <= 1.0 / 700.0 {
        return (0.0, 0.0, 0.0);
    }
    let p = (-1.0 / s).exp();
    let s2 = s * s;
    (p, p / s2, p * (1.0 / (s2 * s2) - 2.0 / (s2 * s)))
}

/// Cutoff value and first two derivatives in `r`. Requires `r0 < r1`.
pub fn cutoff_derivs(r: f64, r0: f64, r1: f64) -> (f64, f64, f64) {
    if r <= r0 {
        return (1.0, 0.0, 0.0);
    }
    if r >= r1 {
        return (0.0, 0.0, 0.0);
    }
    let w = r1 - r0;
    let s = (r1 - r) / w;
    let (a, a1, a2) = psi(s);
    let (b, b1, b2) = psi(1.0 - s);
    let q = a + b;
    let chi = a / q;
    let num1 = a1 * b + a * b1;
    let d1 = num1 / (q * q);
    let d2 = (a2 * b - a * b2) / (q * q) - 2.0 * num1 * (a1 - b1) / (q * q * q);
    let ds = -1.0 / w;
    (chi, d1 * ds, d2 * ds * ds)
}

#[inline]
pub(crate) fn cutoff(r: f64, r0: f64, r1: f64) -> f64 {
    if r <= r0 {
        return 1.0;
    }
    if r >= r1 {
        return 0.0;
    }
    let s = (r1 - r) / (r1 - r0);
    let a = psi(s).0;
    a / (a + psi(1.0 - s).0)
}

/// C^∞ transition equal to 1 for `r ≤ r0` and 0 for `r ≥ r1`.
pub fn smooth_cutoff(r: f64, r0: f64, r1: f64) -> Result<f64> {
    if !(r0 < r1) {
        return Err(LabError::Param(format!(
            "cutoff needs r0 < r1, got {r0} and {r1}"
        )));
    }
    Ok(cutoff(r, r0, r1))
}

pub fn harmonic_number(k: usize) -> Result<f64> {
    if k < 1 {
        return Err(LabError::Param("harmonic number needs K >= 1".into()));
    }
    Ok((1..=k).map(|i| 1.0 / i as f64).sum())
}

/// A closed-form density with known support annulus.
#[derive(Clone)]
pub struct Profile {
    pub f: ProfileFn,
    pub inner_radius: f64,
    pub support_radius: f64,
}

impl std::fmt::Debug for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Profile")
            .field("inner_radius", &self.inner_radius)
            .field("support_radius", &self.support_radius)
            .finish()
    }
}

impl Profile {
    pub fn new(
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        inner_radius: f64,
        support_radius: f64,
    ) -> Self {
        Profile {
            f: Arc::new(f),
            inner_radius,
            support_radius,
        }
    }

    pub fn zero() -> Self {
        Profile::new(|_, _| 0.0, 0.0, 0.0)
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        (self.f)(x1, x2)
    }

    pub fn sample(&self, grid: &GridSpec) -> ScalarField {
        let r2 = self.support_radius * self.support_radius;
        let f = &self.f;
        ScalarField::from_fn(*grid, |x, y| if x * x + y * y >= r2 { 0.0 } else { f(x, y) })
    }

    pub fn density(&self) -> SampledDensity {
        SampledDensity {
            source: crate::kernel_quad::DensitySource::Closure(self.f.clone()),
            support_radius: self.support_radius,
            inner_radius: self.inner_radius,
        }
    }

    /// `x ↦ f(λx)/λ`.
    pub fn rescaled(&self, lambda: f64) -> Profile {
        let f = self.f.clone();
        Profile::new(
            move |x, y| f(lambda * x, lambda * y) / lambda,
            self.inner_radius / lambda,
            self.support_radius / lambda,
        )
    }

    pub fn scaled(&self, c: f64) -> Profile {
        let f = self.f.clone();
        Profile::new(move |x, y| c * f(x, y), self.inner_radius, self.support_radius)
    }

    pub fn sum(parts: &[Profile]) -> Profile {
        if parts.is_empty() {
            return Profile::zero();
        }
        let fs: Vec<ProfileFn> = parts.iter().map(|p| p.f.clone()).collect();
        let radii: Vec<(f64, f64)> = parts.iter().map(|p| (p.inner_radius, p.support_radius)).collect();
        let inner = radii.iter().fold(f64::INFINITY, |m, r| m.min(r.0));
        let outer = radii.iter().fold(0.0f64, |m, r| m.max(r.1));
        Profile::new(
            move |x, y| {
                let r2 = x * x + y * y;
                let mut v = 0.0;
                for (f, (lo, hi)) in fs.iter().zip(&radii) {
                    if r2 >= lo * lo && r2 < hi * hi {
                        v += f(x, y);
                    }
                }
                v
            },
            inner,
            outer,
        )
    }
}

/// `f(x) = x2 · cutoff(|x|; 1/2, 1)`.
pub fn hole_base() -> Profile {
    Profile::new(|x, y| y * cutoff(x.hypot(y), 0.5, 1.0), 0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoleProfileSpec {
    pub lambda: Vec<f64>,
    pub amplitude: f64,
}

impl HoleProfileSpec {
    /// Scales `λ_i` with amplitude `1/𝔥_K`, validated.
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        let k = lambda.len();
        let amplitude = 1.0 / harmonic_number(k)?;
        let spec = HoleProfileSpec { lambda, amplitude };
        spec.validate()?;
        Ok(spec)
    }

    /// `λ_i = λ1 · ratio^{i-1}`.
    pub fn geometric(k: usize, lambda1: f64, ratio: f64) -> Result<Self> {
        HoleProfileSpec::new((0..k).map(|i| lambda1 * ratio.powi(i as i32)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_empty() {
            return Err(LabError::Param("hole profile needs K >= 1".into()));
        }
        if !(self.lambda[0] > 1.0) {
            return Err(LabError::Param("lambda_1 must exceed 1".into()));
        }
        for w in self.lambda.windows(2) {
            if !(w[1] > 2.0 * w[0]) {
                return Err(LabError::Param(format!(
                    "scales must satisfy lambda_(i+1) > 2 lambda_i, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    pub fn delta0(&self) -> f64 {
        0.5 / self.lambda[self.lambda.len() - 1]
    }

    /// Radial factor `g` with `ρ_in = x2 g(|x|)`, and its first two derivatives.
    fn radial(&self, r: f64) -> (f64, f64, f64) {
        let mut g = (0.0, 0.0, 0.0);
        for (i, &l) in self.lambda.iter().enumerate() {
            let w = self.amplitude / (i + 1) as f64;
            let (c, c1, c2) = cutoff_derivs(l * r, 0.5, 1.0);
            g.0 += w * c;
            g.1 += w * l * c1;
            g.2 += w * l * l * c2;
        }
        g
    }

    /// Squared `L²`, `Ḣ¹`, `Ḣ²` norms by one-dimensional radial quadrature.
    pub fn radial_norms(&self) -> Result<(f64, f64, f64)> {
        // ρ = h(r) sin α with h = r g
        let mut breaks = vec![0.0];
        let mut ls = self.lambda.clone();
        ls.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for l in ls {
            breaks.push(0.5 / l);
            breaks.push(1.0 / l);
        }
        let o = QuadOptions {
            abs_tol: 1e-15,
            rel_tol: 1e-12,
            initial_panels: 4,
            max_panels: 4000,
        };
        let mut tot = [0.0; 3];
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            for (k, slot) in tot.iter_mut().enumerate() {
                let v = integrate(
                    |r| {
                        let (g, g1, g2) = self.radial(r);
                        let h = r * g;
                        let h1 = g + r * g1;
                        match k {
                            0 => h * h * r,
                            1 => (h1 * h1 + g * g) * r,
                            _ => {
                                // h'' + h'/r - h/r² = 3 g' + r g''
                                let lap = 3.0 * g1 + r * g2;
                                lap * lap * r
                            }
                        }
                    },
                    a,
                    b,
                    &o,
                )?;
                *slot += PI * v.value;
            }
        }
        Ok((tot[0], tot[1], tot[2]))
    }

    /// `‖ρ_in‖_{H²}` on ℝ² by radial quadrature (no grid).
    pub fn h2_norm(&self) -> Result<f64> {
        let (l2, d1, d2) = self.radial_norms()?;
        Ok((l2 + 2.0 * d1 + d2).sqrt())
    }
}

/// `ρ_in(x) = a Σ f(λ_i x)/(i λ_i)` as a closed form.
pub fn hole_profile(spec: &HoleProfileSpec) -> Profile {
    let s = spec.clone();
    Profile::new(
        move |x, y| {
            let r = x.hypot(y);
            let mut g = 0.0;
            for (i, &l) in s.lambda.iter().enumerate() {
                g += cutoff(l * r, 0.5, 1.0) / (i + 1) as f64;
            }
            s.amplitude * y * g
        },
        0.0,
        1.0 / spec.lambda[0],
    )
}

fn check_inside(grid: &GridSpec, radius: f64) -> Result<()> {
    if radius > 0.5 * grid.half_width {
        return Err(LabError::Param(format!(
            "support radius {radius} exceeds half of the box half-width {}",
            grid.half_width
        )));
    }
    Ok(())
}

pub fn build_hole_profile(spec: &HoleProfileSpec, grid: &GridSpec) -> Result<ScalarField> {
    spec.validate()?;
    let lk = spec.lambda[spec.k() - 1];
    let ppd = 2.0 * PI / (lk * grid.spacing());
    if ppd < 8.0 {
        return Err(LabError::Resolution(format!(
            "finest hole layer has {ppd:.2} points per support diameter, need 8"
        )));
    }
    check_inside(grid, 1.0 / spec.lambda[0])?;
    Ok(hole_profile(spec).sample(grid))
}

/// Half-opening angle (from the x2 axis) of the cone support, with margin.
pub fn cone_half_angle(cone_constant: f64) -> f64 {
    (1.0 / (1.05 * cone_constant)).atan()
}

/// `f = -x2 · radial bump on (r_in, r_out) · angular bump`, supported in
/// `{|x2| ≥ 1.05 𝔠 |x1|}`.
pub fn cone_layer(annulus: (f64, f64), cone_constant: f64) -> Result<Profile> {
    let (r_in, r_out) = annulus;
    if !(r_in > 0.0 && r_in < r_out) {
        return Err(LabError::Param("cone annulus needs 0 < r_in < r_out".into()));
    }
    if !(cone_constant >= 3f64.sqrt()) {
        return Err(LabError::Hypothesis(format!(
            "cone constant {cone_constant} is below sqrt(3)"
        )));
    }
    let beta = cone_half_angle(cone_constant);
    let mid = 0.5 * (r_in + r_out);
    Ok(Profile::new(
        move |x, y| {
            let r = x.hypot(y);
            if r <= r_in || r >= r_out {
                return 0.0;
            }
            let theta = x.abs().atan2(y.abs());
            if theta >= beta {
                return 0.0;
            }
            let rb = (1.0 - cutoff(r, r_in, mid)) * cutoff(r, mid, r_out);
            -y * rb * cutoff(theta, 0.2 * beta, beta)
        },
        r_in,
        r_out,
    ))
}

pub fn build_cone_layer(grid: &GridSpec, annulus: (f64, f64), cone_constant: f64) -> Result<ScalarField> {
    let p = cone_layer(annulus, cone_constant)?;
    check_inside(grid, annulus.1)?;
    let beta = cone_half_angle(cone_constant);
    let width = annulus.0 * beta;
    if width < 2.0 * grid.spacing() {
        return Err(LabError::Resolution(format!(
            "cone of half-width {width:.4} at the inner radius is empty on spacing {}",
            grid.spacing()
        )));
    }
    let field = p.sample(grid);
    if field.max_abs() == 0.0 {
        return Err(LabError::Resolution(
            "cone layer has no support on the grid".into(),
        ));
    }
    Ok(field)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeStackSpec {
    pub k: usize,
    pub delta0: f64,
    pub cone_constant: f64,
    pub annulus: (f64, f64),
}

impl ConeStackSpec {
    pub fn new(k: usize, delta0: f64, cone_constant: f64) -> Self {
        ConeStackSpec {
            k,
            delta0,
            cone_constant,
            annulus: (1.0, 2.0),
        }
    }
}

/// Layers `δ0 f(2^i x)/(i 2^i)`, `i = 1..K`.
pub fn cone_stack_layers(spec: &ConeStackSpec) -> Result<Vec<Profile>> {
    if spec.k < 1 {
        return Err(LabError::Param("cone stack needs K >= 1".into()));
    }
    if spec.annulus.1 > 2.0 * spec.annulus.0 {
        return Err(LabError::Param(
            "cone annulus must satisfy r_out <= 2 r_in for disjoint layers".into(),
        ));
    }
    let f = cone_layer(spec.annulus, spec.cone_constant)?;
    Ok((1..=spec.k)
        .map(|i| {
            let s = 2f64.powi(i as i32);
            f.rescaled(s).scaled(spec.delta0 / i as f64)
        })
        .collect())
}

pub fn cone_stack(spec: &ConeStackSpec) -> Result<Profile> {
    Ok(Profile::sum(&cone_stack_layers(spec)?))
}

pub fn build_cone_stack(spec: &ConeStackSpec, grid: &GridSpec) -> Result<ScalarField> {
    let finest = 2f64.powi(spec.k as i32);
    let beta = cone_half_angle(spec.cone_constant);
    if spec.annulus.0 / finest * beta < 2.0 * grid.spacing() {
        return Err(LabError::Resolution(format!(
            "finest cone layer (scale 2^{}) is not resolved on spacing {}",
            spec.k,
            grid.spacing()
        )));
    }
    check_inside(grid, spec.annulus.1 / 2.0)?;
    Ok(cone_stack(spec)?.sample(grid))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorySpec {
    pub n: u32,
    pub theta0: f64,
    pub l2_target: f64,
}

/// Base bump `x1 x2/|x|² · b(|x|)`, `b` supported in `(1/10, 1)`, unnormalized.
fn oscillatory_base_raw(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    let r = r2.sqrt();
    if r <= 0.1 || r >= 1.0 {
        return 0.0;
    }
    let b = (1.0 - cutoff(r, 0.1, 0.55)) * cutoff(r, 0.55, 1.0);
    x * y / r2 * b
}

/// L² norm of the unnormalized base bump, `(π ∫ b² r dr / 2)^{1/2}`.
fn oscillatory_base_l2() -> f64 {
    let o = QuadOptions {
        abs_tol: 1e-16,
        rel_tol: 1e-13,
        initial_panels: 16,
        max_panels: 4000,
    };
    let v = integrate(
        |r| {
            let b = (1.0 - cutoff(r, 0.1, 0.55)) * cutoff(r, 0.55, 1.0);
            b * b * r
        },
        0.1,
        1.0,
        &o,
    )
    .expect("smooth radial integral");
    // ∫ cos²α sin²α dα = π/4
    (v.value * PI / 4.0).sqrt()
}

/// Base bump normalized to the requested L² norm; odd in each coordinate and
/// even under `x → -x`.
pub fn oscillatory_base(l2_target: f64) -> Profile {
    let c = l2_target / oscillatory_base_l2();
    Profile::new(move |x, y| c * oscillatory_base_raw(x, y), 0.1, 1.0)
}

/// `f(Nx) sin(N^{11/10} x1 + θ0) / N^{6/5}`.
pub fn oscillatory_layer(spec: &OscillatorySpec) -> Result<Profile> {
    if spec.n < 2 {
        return Err(LabError::Param("oscillatory layer needs N >= 2".into()));
    }
    let n = spec.n as f64;
    let freq = n.powf(1.1);
    let amp = n.powf(-1.2);
    let base = oscillatory_base(spec.l2_target);
    let theta0 = spec.theta0;
    Ok(Profile::new(
        move |x, y| base.eval(n * x, n * y) * (freq * x + theta0).sin() * amp,
        0.1 / n,
        1.0 / n,
    ))
}

pub fn build_oscillatory_layer(spec: &OscillatorySpec, grid: &GridSpec) -> Result<ScalarField> {
    let p = oscillatory_layer(spec)?;
    let n = spec.n as f64;
    let wavelength = 2.0 * PI / n.powf(1.1);
    if wavelength < 4.0 * grid.spacing() {
        return Err(LabError::Resolution(format!(
            "oscillation wavelength {wavelength:.4} has fewer than 4 points"
        )));
    }
    // the bump transitions have width 0.45/N
    if 0.45 / n < 4.0 * grid.spacing() {
        return Err(LabError::Resolution(format!(
            "bump transition width {:.4} has fewer than 4 points",
            0.45 / n
        )));
    }
    check_inside(grid, 1.0 / n)?;
    Ok(p.sample(grid))
}

/// True when no two fields are simultaneously nonzero at any node.
pub fn supports_disjoint(layers: &[ScalarField]) -> bool {
    if layers.is_empty() {
        return true;
    }
    let len = layers[0].values.len();
    (0..len).all(|idx| layers.iter().filter(|l| l.values[idx] != 0.0).count() <= 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_derivatives_match_differences() {
        for &r in &[0.55, 0.7, 0.81, 0.95] {
            let h = 1e-5;
            let (_, d1, d2) = cutoff_derivs(r, 0.5, 1.0);
            let f = |t| cutoff(t, 0.5, 1.0);
            let fd1 = (f(r + h) - f(r - h)) / (2.0 * h);
            let fd2 = (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h);
            assert!((d1 - fd1).abs() < 1e-7 * (1.0 + d1.abs()));
            assert!((d2 - fd2).abs() < 1e-3 * (1.0 + d2.abs()));
        }
    }

    #[test]
    fn cutoff_is_half_at_midpoint() {
        assert!((cutoff(0.75, 0.5, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn oscillatory_base_norm() {
        let p = oscillatory_base(0.3);
        let g = crate::grid::make_grid(512, 2.0).unwrap();
        let f = p.sample(&g);
        assert!((f.l2_norm() - 0.3).abs() < 1e-8);
    }

    #[test]
    fn rescaling_tracks_support() {
        let p = hole_base().rescaled(4.0);
        assert_eq!(p.support_radius, 0.25);
        assert!((p.eval(0.0, 0.1) - 0.1).abs() < 1e-15);
    }
}
