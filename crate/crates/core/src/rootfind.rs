//! Real-root extraction for low-degree polynomials plus a safeguarded
//! monotone scalar solver.
//!
//! The cubic and quartic closed forms are the primary path for the secular
//! equations of the QCQP-1 kernels. Closed forms are fragile near repeated
//! roots, so every root is polished with one Newton step and residual-checked;
//! on failure the solver falls back to companion-matrix eigenvalues.
//!
//! Coefficients are ascending: `coeffs[i]` multiplies `x^i`. Leading zeros
//! are allowed and reduce the effective degree.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RootfindError {
    #[error("all-zero polynomial has no well-defined roots")]
    AllZeroPolynomial,
    #[error("degree {0} exceeds the supported maximum of 4")]
    DegreeTooHigh(usize),
    #[error("no sign change on the bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
}

/// Relative spacing under which two roots are merged as one multiplicity.
const MERGE_TOL: f64 = 1e-8;
/// Residual acceptance for the closed forms before the fallback fires.
const RESIDUAL_TOL: f64 = 1e-9;

pub fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn poly_deriv_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (i, &c)| acc * x + c * i as f64)
}

fn newton_polish(coeffs: &[f64], x: f64) -> f64 {
    let f = poly_eval(coeffs, x);
    let d = poly_deriv_eval(coeffs, x);
    if d == 0.0 || !d.is_finite() {
        return x;
    }
    let candidate = x - f / d;
    if candidate.is_finite() && poly_eval(coeffs, candidate).abs() <= f.abs() {
        candidate
    } else {
        x
    }
}

fn merge_close(mut roots: Vec<f64>) -> Vec<f64> {
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<f64> = Vec::with_capacity(roots.len());
    for r in roots {
        match out.last() {
            Some(&prev) if (r - prev).abs() <= MERGE_TOL * (1.0 + r.abs()) => {}
            _ => out.push(r),
        }
    }
    out
}

fn residuals_ok(coeffs: &[f64], roots: &[f64]) -> bool {
    let scale = 1.0 + coeffs.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
    roots
        .iter()
        .all(|&r| r.is_finite() && poly_eval(coeffs, r).abs() <= RESIDUAL_TOL * scale)
}

/// Effective coefficients after dropping exactly-zero leading terms.
fn trim(coeffs: &[f64]) -> &[f64] {
    let mut end = coeffs.len();
    while end > 1 && coeffs[end - 1] == 0.0 {
        end -= 1;
    }
    &coeffs[..end]
}

/// All real roots of a polynomial of degree ≤ 3, multiplicities collapsed.
pub fn cubic_real_roots(coeffs: &[f64]) -> Result<Vec<f64>, RootfindError> {
    real_roots_up_to(coeffs, 3)
}

/// All real roots of a polynomial of degree ≤ 4, multiplicities collapsed.
pub fn quartic_real_roots(coeffs: &[f64]) -> Result<Vec<f64>, RootfindError> {
    real_roots_up_to(coeffs, 4)
}

fn real_roots_up_to(coeffs: &[f64], max_degree: usize) -> Result<Vec<f64>, RootfindError> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(RootfindError::AllZeroPolynomial);
    }
    let c = trim(coeffs);
    if c.len() == 1 && c[0] == 0.0 {
        return Err(RootfindError::AllZeroPolynomial);
    }
    if c.len() - 1 > max_degree {
        return Err(RootfindError::DegreeTooHigh(c.len() - 1));
    }
    let raw = match c.len() {
        1 => Vec::new(), // nonzero constant
        2 => vec![-c[0] / c[1]],
        3 => quadratic_roots(c[0], c[1], c[2]),
        4 => cubic_closed_form(c),
        5 => quartic_closed_form(c),
        _ => unreachable!(),
    };
    let polished: Vec<f64> = raw.into_iter().map(|r| newton_polish(c, r)).collect();
    if c.len() >= 4 && !residuals_ok(c, &polished) {
        return Ok(merge_close(companion_roots(c)));
    }
    Ok(merge_close(polished))
}

/// Stable quadratic formula (ascending coeffs c0 + c1 x + c2 x²).
fn quadratic_roots(c0: f64, c1: f64, c2: f64) -> Vec<f64> {
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    if sq == 0.0 {
        return vec![-c1 / (2.0 * c2)];
    }
    let q = -0.5 * (c1 + c1.signum() * sq);
    let r1 = q / c2;
    let r2 = if q != 0.0 { c0 / q } else { -c1 / c2 - r1 };
    vec![r1, r2]
}

/// Numerical-recipes style cubic: trigonometric branch for three real roots,
/// Cardano otherwise.
fn cubic_closed_form(c: &[f64]) -> Vec<f64> {
    let a = c[2] / c[3];
    let b = c[1] / c[3];
    let d = c[0] / c[3];
    let q = (a * a - 3.0 * b) / 9.0;
    let r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * d) / 54.0;
    let r2 = r * r;
    let q3 = q * q * q;
    if r2 <= q3 {
        if q3 <= 0.0 {
            // r = q = 0: triple root
            return vec![-a / 3.0];
        }
        let theta = (r / q3.sqrt()).clamp(-1.0, 1.0).acos();
        let sq = -2.0 * q.sqrt();
        let off = a / 3.0;
        (0..3)
            .map(|k| sq * ((theta + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() - off)
            .collect()
    } else {
        let big_a = -r.signum() * (r.abs() + (r2 - q3).sqrt()).cbrt();
        let big_b = if big_a != 0.0 { q / big_a } else { 0.0 };
        vec![big_a + big_b - a / 3.0]
    }
}

/// Ferrari-style quartic: depress, split into two quadratics through the
/// resolvent cubic in s² taken at its largest positive root.
fn quartic_closed_form(c: &[f64]) -> Vec<f64> {
    let a3 = c[3] / c[4];
    let a2 = c[2] / c[4];
    let a1 = c[1] / c[4];
    let a0 = c[0] / c[4];
    // y = x + a3/4 gives y⁴ + p y² + q y + r
    let shift = a3 / 4.0;
    let p = a2 - 3.0 * a3 * a3 / 8.0;
    let q = a1 - a3 * a2 / 2.0 + a3 * a3 * a3 / 8.0;
    let r = a0 - a3 * a1 / 4.0 + a3 * a3 * a2 / 16.0 - 3.0 * a3 * a3 * a3 * a3 / 256.0;

    let mut ys: Vec<f64> = Vec::new();
    if q == 0.0 {
        // biquadratic in y²
        for z in quadratic_roots(r, p, 1.0) {
            if z > 0.0 {
                ys.push(z.sqrt());
                ys.push(-z.sqrt());
            } else if z == 0.0 {
                ys.push(0.0);
            }
        }
    } else {
        // (y² + s y + u)(y² − s y + v) with S = s² solving the resolvent
        let resolvent = [-q * q, p * p - 4.0 * r, 2.0 * p, 1.0];
        let s2 = cubic_closed_form(&resolvent)
            .into_iter()
            .map(|z| newton_polish(&resolvent, z))
            .filter(|&z| z > 0.0)
            .fold(f64::NAN, f64::max);
        if !s2.is_finite() {
            return Vec::new(); // fallback path will handle it
        }
        let s = s2.sqrt();
        let u = (p + s2 - q / s) / 2.0;
        let v = (p + s2 + q / s) / 2.0;
        ys.extend(quadratic_roots(u, s, 1.0));
        ys.extend(quadratic_roots(v, -s, 1.0));
    }
    ys.into_iter().map(|y| y - shift).collect()
}

/// Eigenvalues of the companion matrix, filtered to (numerically) real ones.
/// Used as the fallback for ill-conditioned closed forms and as an
/// independent oracle in tests.
pub fn companion_roots(coeffs: &[f64]) -> Vec<f64> {
    let c = trim(coeffs);
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / lead;
    }
    let eigs = m.complex_eigenvalues();
    eigs.iter()
        .filter(|e| e.im.abs() <= 1e-8 * (1.0 + e.re.abs()))
        .map(|e| newton_polish(c, e.re))
        .collect()
}

/// Safeguarded root of a monotone continuous function on a sign-changing
/// bracket: Illinois-damped regula falsi with a bisection guard. Returns a
/// point with `|f| ≤ tol` or a bracket narrower than `tol`; the iterate
/// never leaves the initial bracket.
pub fn monotone_root<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, RootfindError> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootfindError::NoSignChange { lo, hi });
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let denom = fa - fb;
        let mut x = if denom != 0.0 && denom.is_finite() {
            (a * -fb + b * fa) / denom
        } else {
            0.5 * (a + b)
        };
        // keep strictly inside, else bisect
        if !(x > a.min(b) && x < a.max(b)) {
            x = 0.5 * (a + b);
        }
        let fx = f(x);
        if fx.abs() <= tol || (b - a).abs() <= tol {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}
