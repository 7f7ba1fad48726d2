//! Quadrature, bracketed root finding and small RNG helpers.

use alloc::format;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};

pub(crate) use libm::{exp, fabs, log, pow, sqrt};

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
///
/// Each bisection receives half the parent tolerance; a panel is accepted when
/// the Richardson error estimate `|S2 - S1| / 15` is below its share. Fails if
/// any panel still misses its tolerance at `max_depth`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut failed = false;
    let value = simpson_step(&f, a, fa, m, fm, b, fb, whole, tol, max_depth, &mut failed);
    if failed || !value.is_finite() {
        return Err(Error::NoConvergence {
            method: "adaptive Simpson",
            iterations: max_depth as usize,
            detail: format!("tolerance {tol:e} not met on [{a}, {b}] (estimate {value})"),
        });
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(
    f: &F,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    failed: &mut bool,
) -> f64
where
    F: Fn(f64) -> f64,
{
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if fabs(delta) <= 15.0 * tol || !delta.is_finite() {
        return left + right + delta / 15.0;
    }
    if depth == 0 || m == a || m == b {
        *failed = true;
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1, failed)
        + simpson_step(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1, failed)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = alloc::vec![0.0; order];
    let mut weights = alloc::vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5));
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if fabs(dx) < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(order, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[order - 1 - i] = x;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if order == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = order as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Solves `g(x) = target` for nondecreasing `g` on `[lo, hi]` with a
/// Newton step safeguarded by the bracket. Returns the clamped endpoint when
/// the target lies outside `[g(lo), g(hi)]`.
pub fn invert_increasing<G, D>(g: G, dg: D, target: f64, lo: f64, hi: f64, tol: f64) -> f64
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let glo = g(lo);
    if target <= glo {
        return lo;
    }
    let ghi = g(hi);
    if target >= ghi {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    // secant start is usually close for convex costs
    let mut x = a + (b - a) * (target - glo) / (ghi - glo);
    for _ in 0..200 {
        let fx = g(x) - target;
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let slope = dg(x);
        let mut next = x - fx / slope;
        if !(next > a && next < b) || !next.is_finite() {
            next = 0.5 * (a + b);
        }
        if fabs(next - x) <= tol || b - a <= tol {
            return next;
        }
        x = next;
    }
    0.5 * (a + b)
}

/// Bracketed root of a nondecreasing function using the Illinois variant of
/// regula falsi with a bisection fallback. `f(lo) < 0 < f(hi)` is required.
pub fn illinois<F>(f: F, mut lo: f64, mut hi: f64, ftol: f64, max_iter: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo >= 0.0 {
        return if flo <= ftol {
            Ok(lo)
        } else {
            Err(bracket_error(lo, hi, flo, fhi))
        };
    }
    if fhi <= 0.0 {
        return if -fhi <= ftol {
            Ok(hi)
        } else {
            Err(bracket_error(lo, hi, flo, fhi))
        };
    }
    let mut side = 0i8;
    for iter in 0..max_iter {
        let mut x = (lo * fhi - hi * flo) / (fhi - flo);
        // fall back to bisection every few steps so the bracket always shrinks
        if !(x > lo && x < hi) || iter % 8 == 7 {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fabs(fx) <= ftol || hi - lo <= 4.0 * f64::EPSILON * fabs(x).max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::NoConvergence {
        method: "bracketed root search",
        iterations: max_iter,
        detail: format!("bracket [{lo}, {hi}] residuals ({flo:e}, {fhi:e})"),
    })
}

fn bracket_error(lo: f64, hi: f64, flo: f64, fhi: f64) -> Error {
    Error::NoConvergence {
        method: "bracketed root search",
        iterations: 0,
        detail: format!("[{lo}, {hi}] does not bracket a root (f = {flo:e}, {fhi:e})"),
    }
}

/// Uniform draw on the open interval (0, 1) with 53 bits of resolution.
pub fn open_unit<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// `n` evenly spaced points covering `[a, b]` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![a],
        _ => (0..n)
            .map(|k| {
                if k == n - 1 {
                    b
                } else {
                    a + (b - a) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(libm::exp, 0.0, 1.0, 1e-12, 40).unwrap();
        assert!((v - (core::f64::consts::E - 1.0)).abs() < 1e-11);
        let v = adaptive_simpson(|x| 1.0 / x, 1.0, 2.0, 1e-12, 40).unwrap();
        assert!((v - core::f64::consts::LN_2).abs() < 1e-11);
    }

    #[test]
    fn simpson_reports_failure_on_singular_integrand() {
        let r = adaptive_simpson(|x| 1.0 / (x * x), 0.0, 1.0, 1e-10, 10);
        assert!(r.is_err());
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // degree 15 is integrated exactly
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * libm::pow(*x, 14.0)).sum();
        assert!((v - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn inversion_clamps_and_solves() {
        let g = |x: f64| x * x;
        let dg = |x: f64| 2.0 * x;
        assert_eq!(invert_increasing(g, dg, -1.0, 0.0, 2.0, 1e-14), 0.0);
        assert_eq!(invert_increasing(g, dg, 5.0, 0.0, 2.0, 1e-14), 2.0);
        let x = invert_increasing(g, dg, 2.0, 0.0, 2.0, 1e-15);
        assert!((x - core::f64::consts::SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn illinois_finds_root_of_monotone_function() {
        let r = illinois(|x| libm::exp(x) - 3.0, 0.0, 5.0, 1e-15, 200).unwrap();
        assert!((r - libm::log(3.0)).abs() < 1e-13);
        assert!(illinois(|x| x + 10.0, 0.0, 1.0, 1e-12, 50).is_err());
    }
}
