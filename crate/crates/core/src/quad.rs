//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{LabError, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Number of equal panels the interval is cut into before adapting.
    pub initial_panels: usize,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-13,
            rel_tol: 1e-10,
            initial_panels: 8,
            max_panels: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Integrates `f` over `[a, b]`, bisecting the worst panel until the summed
/// error estimate meets `max(abs_tol, rel_tol·|I|)`.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let m = opts.initial_panels.max(1);
    let w = (b - a) / m as f64;
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(m * 4);
    for i in 0..m {
        let lo = a + i as f64 * w;
        let hi = if i + 1 == m { b } else { lo + w };
        let (v, e) = gk15(&mut f, lo, hi);
        panels.push((lo, hi, v, e));
    }
    let mut evals = 15 * m;
    loop {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if !value.is_finite() {
            return Err(LabError::Quadrature("non-finite integrand".into()));
        }
        if error <= target {
            return Ok(QuadResult {
                value,
                error,
                evaluations: evals,
            });
        }
        if panels.len() >= opts.max_panels {
            return Err(LabError::Quadrature(format!(
                "error estimate {error:.3e} above target {target:.3e} after {} panels",
                panels.len()
            )));
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (lo, hi, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Err(LabError::Quadrature("panel width underflow".into()));
        }
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        evals += 30;
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

/// Nested rectangle integral `∫_{a2}^{b2} ∫_{a1}^{b1} f(x, y) dx dy`.
pub fn integrate_2d(
    f: impl Fn(f64, f64) -> f64,
    (a1, b1): (f64, f64),
    (a2, b2): (f64, f64),
    outer: &QuadOptions,
    inner: &QuadOptions,
) -> Result<QuadResult> {
    let mut failure: Option<LabError> = None;
    let mut evals = 0;
    let res = integrate(
        |y| {
            if failure.is_some() {
                return 0.0;
            }
            match integrate(|x| f(x, y), a1, b1, inner) {
                Ok(r) => {
                    evals += r.evaluations;
                    r.value
                }
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        a2,
        b2,
        outer,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(QuadResult {
        evaluations: evals,
        ..res
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, &QuadOptions::default()).unwrap();
        assert!((r.value - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
    }

    #[test]
    fn peaked_integrand() {
        let r = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, &QuadOptions::default()).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((r.value - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn nested_gaussian() {
        let o = QuadOptions::default();
        let r = integrate_2d(|x, y| (-(x * x + y * y)).exp(), (-6.0, 6.0), (-6.0, 6.0), &o, &o).unwrap();
        assert!((r.value - std::f64::consts::PI).abs() < 1e-9);
    }
}
