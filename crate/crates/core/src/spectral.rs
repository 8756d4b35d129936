//! Fourier transforms on the periodic box, Riesz-multiplier operators and
//! Sobolev / C¹ norm functionals.
//!
//! Spectral coefficients are stored transposed: `coeffs[m1 * n + m2]` holds the
//! mode with wavenumber `(ξ(m1), ξ(m2))`. Transforms are unnormalized forward,
//! `1/n²` inverse. Nyquist modes are dropped by every derivative operator.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{GridSpec, ScalarField};

struct Plan {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn plan(n: usize) -> Arc<Plan> {
    static PLANS: OnceLock<Mutex<HashMap<usize, Arc<Plan>>>> = OnceLock::new();
    let map = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = map.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plan {
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const B: usize = 32;
    let b = B.min(n);
    for jb in (0..n).step_by(b) {
        for ib in (0..n).step_by(b) {
            for j in jb..jb + b {
                for i in ib..ib + b {
                    dst[i * n + j] = src[j * n + i];
                }
            }
        }
    }
}

/// In-place 2D forward transform of physical-layout data; result in
/// transposed spectral layout.
pub(crate) fn fft2_forward(buf: &mut Vec<Complex64>, n: usize) {
    let p = plan(n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); p.fwd.get_inplace_scratch_len()];
    p.fwd.process_with_scratch(buf, &mut scratch);
    let mut tmp = vec![Complex64::new(0.0, 0.0); n * n];
    transpose(buf, &mut tmp, n);
    p.fwd.process_with_scratch(&mut tmp, &mut scratch);
    *buf = tmp;
}

/// Inverse of [`fft2_forward`], including the `1/n²` normalization.
pub(crate) fn fft2_inverse(buf: &mut Vec<Complex64>, n: usize) {
    let p = plan(n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); p.inv.get_inplace_scratch_len()];
    p.inv.process_with_scratch(buf, &mut scratch);
    let mut tmp = vec![Complex64::new(0.0, 0.0); n * n];
    transpose(buf, &mut tmp, n);
    p.inv.process_with_scratch(&mut tmp, &mut scratch);
    let s = 1.0 / (n * n) as f64;
    for z in tmp.iter_mut() {
        *z *= s;
    }
    *buf = tmp;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: GridSpec,
    pub coeffs: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub u1: ScalarField,
    pub u2: ScalarField,
}

/// Wavenumber tables for one grid.
#[derive(Debug, Clone)]
pub(crate) struct Waves {
    pub n: usize,
    pub k: Vec<f64>,
    pub nyq: usize,
}

impl Waves {
    pub fn new(grid: &GridSpec) -> Self {
        let n = grid.n();
        Waves {
            n,
            k: (0..n).map(|m| grid.wavenumber(m)).collect(),
            nyq: n / 2,
        }
    }

    /// Calls `f(index, ξ1, ξ2)` for every non-Nyquist mode.
    #[inline]
    pub fn for_each(&self, mut f: impl FnMut(usize, f64, f64)) {
        let n = self.n;
        for m1 in 0..n {
            if m1 == self.nyq {
                continue;
            }
            let k1 = self.k[m1];
            for m2 in 0..n {
                if m2 == self.nyq {
                    continue;
                }
                f(m1 * n + m2, k1, self.k[m2]);
            }
        }
    }
}

pub fn forward(rho: &ScalarField) -> SpectralField {
    let n = rho.grid.n();
    let mut buf: Vec<Complex64> = rho.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_forward(&mut buf, n);
    SpectralField {
        grid: rho.grid,
        coeffs: buf,
    }
}

pub fn inverse(field: &SpectralField) -> ScalarField {
    let n = field.grid.n();
    let mut buf = field.coeffs.clone();
    fft2_inverse(&mut buf, n);
    ScalarField {
        grid: field.grid,
        values: buf.into_iter().map(|z| z.re).collect(),
    }
}

/// Inverse-transforms two real-representable spectra with a single complex FFT.
pub(crate) fn inverse_pair(a: &[Complex64], b: &[Complex64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let i = Complex64::new(0.0, 1.0);
    let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x + i * y).collect();
    fft2_inverse(&mut buf, n);
    (
        buf.iter().map(|z| z.re).collect(),
        buf.iter().map(|z| z.im).collect(),
    )
}

/// Forward-transforms two real fields with a single complex FFT.
pub(crate) fn forward_pair(a: &[f64], b: &[f64], n: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
    fft2_forward(&mut buf, n);
    let mut fa = vec![Complex64::new(0.0, 0.0); n * n];
    let mut fb = vec![Complex64::new(0.0, 0.0); n * n];
    for m1 in 0..n {
        let r1 = (n - m1) % n;
        for m2 in 0..n {
            let r2 = (n - m2) % n;
            let z = buf[m1 * n + m2];
            let zc = buf[r1 * n + r2].conj();
            fa[m1 * n + m2] = (z + zc) * 0.5;
            fb[m1 * n + m2] = (z - zc) * Complex64::new(0.0, -0.5);
        }
    }
    (fa, fb)
}

fn apply(field: &SpectralField, mult: impl Fn(f64, f64) -> Complex64) -> SpectralField {
    let w = Waves::new(&field.grid);
    let mut out = vec![Complex64::new(0.0, 0.0); field.coeffs.len()];
    w.for_each(|idx, k1, k2| out[idx] = field.coeffs[idx] * mult(k1, k2));
    SpectralField {
        grid: field.grid,
        coeffs: out,
    }
}

/// Riesz transform: multiplier `iξ_axis/|ξ|`, zero at ξ = 0.
pub fn riesz(field: &SpectralField, axis: usize) -> SpectralField {
    assert!(axis == 1 || axis == 2, "axis must be 1 or 2");
    apply(field, |k1, k2| {
        let r = (k1 * k1 + k2 * k2).sqrt();
        if r == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let k = if axis == 1 { k1 } else { k2 };
        Complex64::new(0.0, k / r)
    })
}

/// Symbol of `u1 = -R2 R1 ρ`.
#[inline]
pub(crate) fn sym_u1(k1: f64, k2: f64) -> f64 {
    let q = k1 * k1 + k2 * k2;
    if q == 0.0 {
        0.0
    } else {
        k1 * k2 / q
    }
}

/// Symbol of `u2 = R1 R1 ρ`.
#[inline]
pub(crate) fn sym_u2(k1: f64, k2: f64) -> f64 {
    let q = k1 * k1 + k2 * k2;
    if q == 0.0 {
        0.0
    } else {
        -k1 * k1 / q
    }
}

pub fn velocity_from_spectrum(rho_hat: &SpectralField) -> VelocityField {
    let grid = rho_hat.grid;
    let n = grid.n();
    let w = Waves::new(&grid);
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    let mut b = vec![Complex64::new(0.0, 0.0); n * n];
    w.for_each(|idx, k1, k2| {
        a[idx] = rho_hat.coeffs[idx] * sym_u1(k1, k2);
        b[idx] = rho_hat.coeffs[idx] * sym_u2(k1, k2);
    });
    let (u1, u2) = inverse_pair(&a, &b, n);
    VelocityField {
        u1: ScalarField { grid, values: u1 },
        u2: ScalarField { grid, values: u2 },
    }
}

/// IPM velocity `u = (-R2 R1 ρ, R1 R1 ρ)`.
pub fn velocity(rho: &ScalarField) -> VelocityField {
    velocity_from_spectrum(&forward(rho))
}

/// Partial dissipation `R1² ρ`.
pub fn dissipation(rho: &ScalarField) -> ScalarField {
    let hat = forward(rho);
    inverse(&apply(&hat, |k1, k2| Complex64::new(sym_u2(k1, k2), 0.0)))
}

/// Spectral gradient `(∂1 ρ, ∂2 ρ)`.
pub fn gradient(rho: &ScalarField) -> (ScalarField, ScalarField) {
    let hat = forward(rho);
    let n = rho.grid.n();
    let w = Waves::new(&rho.grid);
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    let mut b = vec![Complex64::new(0.0, 0.0); n * n];
    w.for_each(|idx, k1, k2| {
        a[idx] = hat.coeffs[idx] * Complex64::new(0.0, k1);
        b[idx] = hat.coeffs[idx] * Complex64::new(0.0, k2);
    });
    let (g1, g2) = inverse_pair(&a, &b, n);
    (
        ScalarField {
            grid: rho.grid,
            values: g1,
        },
        ScalarField {
            grid: rho.grid,
            values: g2,
        },
    )
}

/// Max modulus of the spectral divergence of `v`, and max |û| for scale.
pub fn divergence_defect(v: &VelocityField) -> (f64, f64) {
    let a = forward(&v.u1);
    let b = forward(&v.u2);
    let w = Waves::new(&v.u1.grid);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    w.for_each(|idx, k1, k2| {
        let d = a.coeffs[idx] * Complex64::new(0.0, k1) + b.coeffs[idx] * Complex64::new(0.0, k2);
        worst = worst.max(d.norm());
        scale = scale.max(a.coeffs[idx].norm()).max(b.coeffs[idx].norm());
    });
    (worst, scale)
}

/// Sum of `weight(ξ1, ξ2) |ĉ|²` over all modes (Nyquist included), scaled to
/// the continuum: `(h/n)² Σ`.
fn weighted_energy(hat: &SpectralField, weight: impl Fn(f64, f64) -> f64) -> f64 {
    let grid = hat.grid;
    let n = grid.n();
    let h = grid.spacing();
    let k: Vec<f64> = (0..n).map(|m| grid.wavenumber(m)).collect();
    let mut total = 0.0;
    for m1 in 0..n {
        let mut row = 0.0;
        for m2 in 0..n {
            row += weight(k[m1], k[m2]) * hat.coeffs[m1 * n + m2].norm_sqr();
        }
        total += row;
    }
    total * (h / n as f64).powi(2)
}

pub fn sobolev_norm_hat(hat: &SpectralField, s: f64) -> f64 {
    weighted_energy(hat, |k1, k2| (1.0 + k1 * k1 + k2 * k2).powf(s)).sqrt()
}

/// `‖ρ‖_{H^s}` with weight `(1+|ξ|²)^s`, normalized so `s = 0` is the continuum L² norm.
pub fn sobolev_norm(rho: &ScalarField, s: f64) -> f64 {
    sobolev_norm_hat(&forward(rho), s)
}

/// `‖λ ρ(·/λ)‖_{H^s}` evaluated from the samples of `ρ`.
pub fn sobolev_norm_scaled(rho: &ScalarField, s: f64, lambda: f64) -> f64 {
    let hat = forward(rho);
    let l2 = lambda * lambda;
    (l2 * l2 * weighted_energy(&hat, |k1, k2| (1.0 + (k1 * k1 + k2 * k2) / l2).powf(s))).sqrt()
}

/// Projection onto the band the dealiased solver evolves: modes with
/// `|m1|, |m2| < n/3`, Nyquist lines removed.
pub fn dealiased(rho: &ScalarField) -> ScalarField {
    let grid = rho.grid;
    let n = grid.n();
    let cut = (n / 2) as f64 * 2.0 / 3.0;
    let mut hat = forward(rho);
    for m1 in 0..n {
        let a = grid.mode(m1).unsigned_abs() as f64;
        for m2 in 0..n {
            let b = grid.mode(m2).unsigned_abs() as f64;
            if m1 == n / 2 || m2 == n / 2 || a >= cut || b >= cut {
                hat.coeffs[m1 * n + m2] = Complex64::new(0.0, 0.0);
            }
        }
    }
    inverse(&hat)
}

/// Homogeneous seminorm `‖(-Δ)^{s/2} ρ‖_{L²}`.
pub fn homogeneous_norm(rho: &ScalarField, s: f64) -> f64 {
    weighted_energy(&forward(rho), |k1, k2| {
        let q = k1 * k1 + k2 * k2;
        if q == 0.0 {
            0.0
        } else {
            q.powf(s)
        }
    })
    .sqrt()
}

/// `max|ρ| + max|∇ρ|` with a spectral gradient.
pub fn c1_norm(rho: &ScalarField) -> f64 {
    let (g1, g2) = gradient(rho);
    let grad = g1
        .values
        .iter()
        .zip(&g2.values)
        .fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)));
    rho.max_abs() + grad
}

/// Value at the origin node of the field with spectrum `ĉ · mult`.
pub(crate) fn origin_value(hat: &SpectralField, mult: impl Fn(f64, f64) -> Complex64) -> f64 {
    let w = Waves::new(&hat.grid);
    let n = hat.grid.n();
    let mut total = Complex64::new(0.0, 0.0);
    w.for_each(|idx, k1, k2| {
        let m1 = idx / n;
        let m2 = idx % n;
        let sign = if (m1 + m2) % 2 == 0 { 1.0 } else { -1.0 };
        total += hat.coeffs[idx] * mult(k1, k2) * sign;
    });
    total.re / (n * n) as f64
}

/// `∂x1 u1(0)` from the spectrum of ρ.
pub fn origin_deformation_spectral_hat(hat: &SpectralField) -> f64 {
    origin_value(hat, |k1, k2| Complex64::new(0.0, k1 * sym_u1(k1, k2)))
}

/// `∂x1 u1(0)` computed spectrally.
pub fn origin_deformation_spectral(rho: &ScalarField) -> f64 {
    origin_deformation_spectral_hat(&forward(rho))
}

/// Velocity at the origin node.
pub fn origin_velocity(rho: &ScalarField) -> (f64, f64) {
    let hat = forward(rho);
    (
        origin_value(&hat, |k1, k2| Complex64::new(sym_u1(k1, k2), 0.0)),
        origin_value(&hat, |k1, k2| Complex64::new(sym_u2(k1, k2), 0.0)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn bump(grid: GridSpec) -> ScalarField {
        ScalarField::from_fn(grid, |x, y| {
            let r2 = (x - 0.3).powi(2) + (y + 0.2).powi(2);
            (-4.0 * r2).exp() * (1.0 + x)
        })
    }

    #[test]
    fn roundtrip() {
        let g = make_grid(32, 2.0).unwrap();
        let f = bump(g);
        let back = inverse(&forward(&f));
        for (a, b) in f.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn paired_transforms_match_single() {
        let g = make_grid(16, 1.0).unwrap();
        let a = bump(make_grid(16, 3.0).unwrap());
        let b = ScalarField::from_fn(g, |x, y| (PI * x).sin() * (PI * y).cos() + 0.1);
        let (fa, fb) = forward_pair(&a.values, &b.values, 16);
        let sa = forward(&a);
        let sb = forward(&b);
        for i in 0..256 {
            assert!((fa[i] - sa.coeffs[i]).norm() < 1e-10);
            assert!((fb[i] - sb.coeffs[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn single_mode_riesz() {
        let g = make_grid(16, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x, _| (3.0 * PI * x).cos());
        let r = inverse(&riesz(&forward(&f), 1));
        // R1 cos(kx) = -sin(kx) for k > 0
        for j in 0..16 {
            for i in 0..16 {
                let x = g.coord(i);
                assert!((r.at(i, j) + (3.0 * PI * x).sin()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn c1_of_sine() {
        let g = make_grid(64, 2.0).unwrap();
        let f = ScalarField::from_fn(g, |x, _| (PI * x / 2.0).sin());
        assert!((c1_norm(&f) - (1.0 + PI / 2.0)).abs() < 1e-6);
    }

    #[test]
    fn l2_parseval() {
        let g = make_grid(32, 2.0).unwrap();
        let f = bump(g);
        assert!((sobolev_norm(&f, 0.0) - f.l2_norm()).abs() < 1e-12 * f.l2_norm());
    }

    #[test]
    fn scaled_norm_matches_direct() {
        // λ ρ(x/λ) sampled on a grid λ times larger has the same samples.
        let g = make_grid(64, 2.0).unwrap();
        let f = bump(g);
        let big = ScalarField {
            grid: make_grid(64, 6.0).unwrap(),
            values: f.values.iter().map(|v| 3.0 * v).collect(),
        };
        let a = sobolev_norm_scaled(&f, 3.0, 3.0);
        let b = sobolev_norm(&big, 3.0);
        assert!((a - b).abs() < 1e-12 * b);
    }
}
