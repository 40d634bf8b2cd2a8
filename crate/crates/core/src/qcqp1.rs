//! Closed-form solvers for the small single-constraint subproblems that make
//! up the ADMM update steps.
//!
//! Five shapes appear in the engines:
//!
//! * the convex per-user gain update (linearized SINR constraint; dual
//!   multiplier from a cubic secular equation),
//! * its non-convex feasibility variant (original DC constraint; quartic
//!   secular equation, strong duality holds for QCQP-1),
//! * the per-antenna Euclidean ball projection,
//! * the joint per-antenna (copy, power-ratio) update of the MMF engine,
//! * the consensus-ADMM per-user update, which is the convex gain update
//!   lifted through the channel vector (rank-one correction).
//!
//! Every solver returns its dual scalar so callers can assert KKT residuals.

use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

use crate::rootfind::{cubic_real_roots, monotone_root, quartic_real_roots};

#[derive(Debug, Error, PartialEq)]
pub enum Qcqp1Error {
    /// The linearized constraint admits no point (zero Taylor term). The
    /// CCP layer reacts by restarting from a different point.
    #[error("linearized SINR constraint is infeasible for this subproblem")]
    InfeasibleSubproblem,
    #[error("numerical failure in dual root search: {0}")]
    NumericalFailure(String),
}

/// One user's gain-row subproblem.
///
/// `anchor[m]` is the unconstrained minimizer component for beam `m`
/// (`h_k^H w_m^j − λ_{k,m}^j` in the engines); `taylor_inner` is the fixed
/// linearization gain `h_k^H w_{m_k}^{(t)}`, only used by the convex variant.
#[derive(Debug, Clone)]
pub struct GammaSubproblem {
    pub anchor: Vec<Complex64>,
    pub own_group: usize,
    pub target: f64,
    pub noise_power: f64,
    pub taylor_inner: Complex64,
}

/// Linearized SINR constraint value at a gain row; feasible iff ≤ 0.
pub fn linearized_constraint_value(sub: &GammaSubproblem, row: &[Complex64]) -> f64 {
    let tau = sub.taylor_inner;
    let interference: f64 = row
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != sub.own_group)
        .map(|(_, g)| g.norm_sqr())
        .sum();
    sub.target * (interference + sub.noise_power) - 2.0 * (tau.conj() * row[sub.own_group]).re
        + tau.norm_sqr()
}

/// Original DC SINR constraint value at a gain row; feasible iff ≤ 0.
pub fn dc_constraint_value(sub: &GammaSubproblem, row: &[Complex64]) -> f64 {
    let interference: f64 = row
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != sub.own_group)
        .map(|(_, g)| g.norm_sqr())
        .sum();
    sub.target * (interference + sub.noise_power) - row[sub.own_group].norm_sqr()
}

/// Secular function g(π) = a/(π·den + 1)² + b·π + c with b ≤ 0, strictly
/// decreasing for π ≥ 0. Shared by the convex gain update and the consensus
/// per-user update (which rescales the denominator by ‖h‖²).
struct ConvexSecular {
    a: f64,
    b: f64,
    c: f64,
    den: f64,
}

impl ConvexSecular {
    fn eval(&self, pi: f64) -> f64 {
        self.a / (pi * self.den + 1.0).powi(2) + self.b * pi + self.c
    }

    /// Nonnegative dual scalar: 0 when inactive, else the unique root of the
    /// cubic (b·π + c)(π·den + 1)² + a. The closed form is the primary path;
    /// a safeguarded bracket search backs it up when cancellation spoils the
    /// residual.
    fn solve(&self) -> Result<f64, Qcqp1Error> {
        if self.a + self.c <= 0.0 {
            return Ok(0.0);
        }
        if self.b >= 0.0 {
            // g never crosses zero: constraint unsatisfiable
            return Err(Qcqp1Error::InfeasibleSubproblem);
        }
        let d = self.den;
        let coeffs = [
            self.c + self.a,
            self.b + 2.0 * self.c * d,
            2.0 * self.b * d + self.c * d * d,
            self.b * d * d,
        ];
        let scale = 1.0 + self.a.abs() + self.c.abs();
        let mut best: Option<f64> = None;
        if let Ok(roots) = cubic_real_roots(&coeffs) {
            // strict descent of g means at most one nonnegative root; under
            // float fuzz keep the smallest
            best = roots
                .into_iter()
                .filter(|&r| r >= -1e-12)
                .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.min(r))))
                .map(|r| r.max(0.0));
        }
        match best {
            Some(pi) if self.eval(pi).abs() <= 1e-9 * scale => Ok(pi),
            _ => {
                let mut hi = 1.0;
                while self.eval(hi) > 0.0 {
                    hi *= 2.0;
                    if !hi.is_finite() {
                        return Err(Qcqp1Error::NumericalFailure(
                            "no bracket for convex secular root".into(),
                        ));
                    }
                }
                monotone_root(|x| self.eval(x), 0.0, hi, 1e-13 * scale)
                    .map_err(|e| Qcqp1Error::NumericalFailure(e.to_string()))
            }
        }
    }
}

/// Threshold below which the Taylor gain counts as zero and the linearized
/// subproblem as infeasible (the constraint then cannot reach ≤ 0).
fn taylor_degenerate(tau_sq: f64, target: f64, noise: f64) -> bool {
    tau_sq <= 1e-12 * target * noise
}

/// Convex per-user gain update: projects the anchor row onto the linearized
/// SINR constraint. Returns the optimal row and dual scalar π ≥ 0.
pub fn gamma_update_convex(sub: &GammaSubproblem) -> Result<(Vec<Complex64>, f64), Qcqp1Error> {
    let gamma = sub.target;
    let tau = sub.taylor_inner;
    let tau_sq = tau.norm_sqr();
    let own = sub.own_group;
    let interf_sq: f64 = sub
        .anchor
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != own)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    let secular = ConvexSecular {
        a: gamma * interf_sq,
        b: -2.0 * tau_sq,
        c: gamma * sub.noise_power - 2.0 * (tau.conj() * sub.anchor[own]).re + tau_sq,
        den: gamma,
    };
    if secular.a + secular.c > 0.0 && taylor_degenerate(tau_sq, gamma, sub.noise_power) {
        return Err(Qcqp1Error::InfeasibleSubproblem);
    }
    let pi = secular.solve()?;
    let row = convex_row(&sub.anchor, own, gamma, pi, tau);
    Ok((row, pi))
}

fn convex_row(
    anchor: &[Complex64],
    own: usize,
    gamma: f64,
    pi: f64,
    tau: Complex64,
) -> Vec<Complex64> {
    anchor
        .iter()
        .enumerate()
        .map(|(m, &a)| {
            if m == own {
                a + tau * pi
            } else {
                a / (pi * gamma + 1.0)
            }
        })
        .collect()
}

/// Non-convex per-user feasibility update: projects the anchor row onto the
/// original DC SINR constraint. The dual scalar lives in [0, 1]; π = 1 only
/// in the degenerate case of a vanishing own-group anchor.
pub fn gamma_update_feasibility(
    sub: &GammaSubproblem,
) -> Result<(Vec<Complex64>, f64), Qcqp1Error> {
    let gamma = sub.target;
    let own = sub.own_group;
    let interf_sq: f64 = sub
        .anchor
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != own)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    let a = gamma * interf_sq;
    let b = gamma * sub.noise_power;
    let c = sub.anchor[own].norm_sqr();
    if a + b - c < 0.0 {
        return Ok((sub.anchor.clone(), 0.0));
    }
    if c <= 1e-28 * (a + b) {
        // π = 1 branch: own-group entry is free; grow it onto the constraint
        // boundary with a deterministic phase choice
        let mut row: Vec<Complex64> = sub.anchor.iter().map(|&x| x / (gamma + 1.0)).collect();
        let needed: f64 = gamma
            * (row
                .iter()
                .enumerate()
                .filter(|(m, _)| *m != own)
                .map(|(_, g)| g.norm_sqr())
                .sum::<f64>()
                + sub.noise_power);
        let phase = if sub.anchor[own].norm() > 0.0 {
            sub.anchor[own] / Complex64::new(sub.anchor[own].norm(), 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        };
        row[own] = phase * needed.sqrt();
        return Ok((row, 1.0));
    }
    let g_tilde = |pi: f64| a / (pi * gamma + 1.0).powi(2) + b - c / (1.0 - pi).powi(2);
    let coeffs = [
        b + a - c,
        2.0 * b * gamma - 2.0 * b - 2.0 * a - 2.0 * c * gamma,
        b * gamma * gamma + b - 4.0 * b * gamma + a - c * gamma * gamma,
        2.0 * b * gamma - 2.0 * b * gamma * gamma,
        b * gamma * gamma,
    ];
    let scale = 1.0 + a + b + c;
    let mut pi_opt: Option<f64> = None;
    if let Ok(roots) = quartic_real_roots(&coeffs) {
        let in_range: Vec<f64> = roots
            .into_iter()
            .filter(|&r| r >= -1e-12 && r < 1.0)
            .collect();
        if in_range.len() == 1 && g_tilde(in_range[0].max(0.0)).abs() <= 1e-8 * scale {
            pi_opt = Some(in_range[0].max(0.0));
        }
    }
    let pi = match pi_opt {
        Some(pi) => pi,
        None => {
            // bracket toward 1 from below; g̃ → −∞ there since c > 0
            let mut hi = 0.5;
            while g_tilde(hi) > 0.0 && 1.0 - hi > 1e-15 {
                hi = 0.5 * (hi + 1.0);
            }
            if g_tilde(hi) > 0.0 {
                return Err(Qcqp1Error::NumericalFailure(
                    "no dual root in [0, 1) for feasibility subproblem".into(),
                ));
            }
            monotone_root(g_tilde, 0.0, hi, 1e-13 * scale)
                .map_err(|e| Qcqp1Error::NumericalFailure(e.to_string()))?
        }
    };
    let row: Vec<Complex64> = sub
        .anchor
        .iter()
        .enumerate()
        .map(|(m, &x)| {
            if m == own {
                x / (1.0 - pi)
            } else {
                x / (pi * gamma + 1.0)
            }
        })
        .collect();
    Ok((row, pi))
}

/// Euclidean projection onto the origin-centered ball of the given radius.
pub fn project_ball(u: &[Complex64], radius: f64) -> Vec<Complex64> {
    let norm = u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm <= radius {
        u.to_vec()
    } else {
        let s = radius / norm;
        u.iter().map(|&c| c * s).collect()
    }
}

/// Joint per-antenna update of the MMF engine: minimizes
/// Σ_m |v_m − u_m|² + (ρ/2)(α − c)² subject to ‖v‖²/p ≤ α.
/// Returns (v, α, π).
pub fn v_alpha_update(u: &[Complex64], c: f64, p: f64, rho: f64) -> (Vec<Complex64>, f64, f64) {
    let usq: f64 = u.iter().map(|x| x.norm_sqr()).sum();
    let ratio = usq / p;
    if ratio <= c {
        return (u.to_vec(), c, 0.0);
    }
    // unique root of (usq/p)/(1+π/p)² = c + π/ρ
    let phi = |pi: f64| ratio / (1.0 + pi / p).powi(2) - c - pi / rho;
    let hi = rho * (ratio - c) * (1.0 + 1e-9) + 1e-30;
    let scale = 1.0 + ratio.abs() + c.abs();
    let pi = monotone_root(phi, 0.0, hi, 1e-14 * scale)
        .expect("bracket is valid by construction: phi(0) > 0 >= phi(hi)");
    let shrink = 1.0 / (1.0 + pi / p);
    let v: Vec<Complex64> = u.iter().map(|&x| x * shrink).collect();
    (v, c + pi / rho, pi)
}

/// Consensus-ADMM per-user update: the convex gain update lifted through the
/// channel. The constraint touches each `x_m` only via `h^H x_m`, so the
/// optimum is the anchor plus a correction along `h`; the dual scalar solves
/// the same secular shape with the denominator rescaled by ‖h‖².
pub fn consensus_x_update(
    channel: &DVector<Complex64>,
    anchors: &[DVector<Complex64>],
    own_group: usize,
    target: f64,
    noise_power: f64,
    taylor_inner: Complex64,
) -> Result<(Vec<DVector<Complex64>>, f64), Qcqp1Error> {
    let hsq = channel.norm_squared();
    let tau = taylor_inner;
    let tau_sq = tau.norm_sqr();
    let reduced: Vec<Complex64> = anchors.iter().map(|a| channel.dotc(a)).collect();
    let interf_sq: f64 = reduced
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != own_group)
        .map(|(_, g)| g.norm_sqr())
        .sum();
    let secular = ConvexSecular {
        a: target * interf_sq,
        b: -2.0 * hsq * tau_sq,
        c: target * noise_power - 2.0 * (tau.conj() * reduced[own_group]).re + tau_sq,
        den: target * hsq,
    };
    if secular.a + secular.c > 0.0 && (hsq == 0.0 || taylor_degenerate(tau_sq, target, noise_power))
    {
        return Err(Qcqp1Error::InfeasibleSubproblem);
    }
    let pi = secular.solve()?;
    let out = anchors
        .iter()
        .enumerate()
        .map(|(m, a)| {
            let target_gain = if m == own_group {
                reduced[m] + tau * (pi * hsq)
            } else {
                reduced[m] / (pi * target * hsq + 1.0)
            };
            let correction = (target_gain - reduced[m]) / hsq;
            a + channel * correction
        })
        .collect();
    Ok((out, pi))
}

/// Consensus-ADMM per-antenna update: only coordinate `antenna` of each
/// anchor is constrained; that M-vector of coordinates is projected onto the
/// ball of radius √p and everything else passes through.
pub fn consensus_y_update(
    anchors: &[DVector<Complex64>],
    antenna: usize,
    p: f64,
) -> Vec<DVector<Complex64>> {
    let coords: Vec<Complex64> = anchors.iter().map(|a| a[antenna]).collect();
    let projected = project_ball(&coords, p.sqrt());
    anchors
        .iter()
        .zip(projected)
        .map(|(a, c)| {
            let mut out = a.clone();
            out[antenna] = c;
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
        Complex64::new(
            (rng.gen::<f64>() - 0.5) * 2.0 * scale,
            (rng.gen::<f64>() - 0.5) * 2.0 * scale,
        )
    }

    fn random_subproblem(rng: &mut ChaCha8Rng, m: usize) -> GammaSubproblem {
        let own = rng.gen_range(0..m);
        GammaSubproblem {
            anchor: (0..m).map(|_| rand_c(rng, 2.0)).collect(),
            own_group: own,
            target: rng.gen::<f64>() * 8.0 + 0.2,
            noise_power: rng.gen::<f64>() * 2.0 + 0.1,
            taylor_inner: rand_c(rng, 2.0),
        }
    }

    fn objective(row: &[Complex64], anchor: &[Complex64]) -> f64 {
        row.iter().zip(anchor).map(|(g, a)| (g - a).norm_sqr()).sum()
    }

    /// Projection onto the linearized constraint set by pure bracketed
    /// bisection on the projection multiplier — no polynomial formulas.
    fn project_linearized(sub: &GammaSubproblem, point: &[Complex64]) -> Vec<Complex64> {
        if linearized_constraint_value(sub, point) <= 0.0 {
            return point.to_vec();
        }
        let gamma = sub.target;
        let tau = sub.taylor_inner;
        let build = |nu: f64| convex_row(point, sub.own_group, gamma, nu, tau);
        let mut top = 1.0;
        while linearized_constraint_value(sub, &build(top)) > 0.0 {
            top *= 2.0;
            assert!(top.is_finite());
        }
        let (mut lo, mut hi) = (0.0, top);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if linearized_constraint_value(sub, &build(mid)) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        build(hi)
    }

    /// Projected gradient with diminishing steps (capped at 1e5 iterations,
    /// early exit on stall); independent of the cubic closed form.
    fn projected_gradient_oracle(sub: &GammaSubproblem) -> f64 {
        let mut x = project_linearized(sub, &sub.anchor);
        for t in 1..=100_000usize {
            let eta = 0.5 / (1.0 + t as f64).sqrt().min(4.0);
            let stepped: Vec<Complex64> = x
                .iter()
                .zip(&sub.anchor)
                .map(|(xi, ai)| xi - (xi - ai) * 2.0 * eta)
                .collect();
            let next = project_linearized(sub, &stepped);
            let moved: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum();
            x = next;
            if moved < 1e-30 {
                break;
            }
        }
        objective(&x, &sub.anchor)
    }

    #[test]
    fn convex_inactive_constraint_returns_anchor() {
        // strong own-group anchor aligned with the taylor gain: already feasible
        let sub = GammaSubproblem {
            anchor: vec![Complex64::new(5.0, 0.0), Complex64::new(0.1, 0.0)],
            own_group: 0,
            target: 1.0,
            noise_power: 0.5,
            taylor_inner: Complex64::new(5.0, 0.0),
        };
        assert!(linearized_constraint_value(&sub, &sub.anchor) < 0.0);
        let (row, pi) = gamma_update_convex(&sub).unwrap();
        assert_eq!(pi, 0.0);
        assert_eq!(row, sub.anchor);
    }

    #[test]
    fn convex_degenerate_taylor_is_infeasible() {
        let sub = GammaSubproblem {
            anchor: vec![Complex64::new(0.3, 0.1), Complex64::new(0.2, 0.0)],
            own_group: 0,
            target: 2.0,
            noise_power: 1.0,
            taylor_inner: Complex64::new(0.0, 0.0),
        };
        assert_eq!(
            gamma_update_convex(&sub),
            Err(Qcqp1Error::InfeasibleSubproblem)
        );
    }

    #[test]
    fn convex_random_matches_projected_gradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut active = 0;
        for _ in 0..150 {
            let sub = random_subproblem(&mut rng, 3);
            let (row, pi) = gamma_update_convex(&sub).unwrap();
            let f = objective(&row, &sub.anchor);
            let f_oracle = projected_gradient_oracle(&sub);
            assert!(
                (f - f_oracle).abs() <= 1e-6 * f_oracle.max(1e-6),
                "objective {f} vs oracle {f_oracle} (pi={pi})"
            );
            if pi > 0.0 {
                active += 1;
            }
        }
        assert!(active > 30, "want a healthy share of active constraints");
    }

    #[test]
    fn convex_kkt_residuals_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        for _ in 0..300 {
            let m = rng.gen_range(1..=4);
            let sub = random_subproblem(&mut rng, m);
            let (row, pi) = gamma_update_convex(&sub).unwrap();
            let scale = 1.0
                + sub.anchor.iter().map(|a| a.norm_sqr()).sum::<f64>()
                + sub.taylor_inner.norm_sqr();
            let q = linearized_constraint_value(&sub, &row);
            assert!(pi >= 0.0);
            assert!(q <= 1e-8 * scale, "primal feasibility {q}");
            assert!((pi * q).abs() <= 1e-8 * scale, "complementary slackness");
            // stationarity: rebuild from the dual scalar
            for (m_idx, (&g, &a)) in row.iter().zip(&sub.anchor).enumerate() {
                let resid = if m_idx == sub.own_group {
                    g - (a + sub.taylor_inner * pi)
                } else {
                    g * (pi * sub.target + 1.0) - a
                };
                assert!(resid.norm() <= 1e-8 * scale, "stationarity {resid}");
            }
            if pi > 0.0 {
                assert!(q.abs() <= 1e-9 * scale, "active constraint residual {q}");
            }
        }
    }

    #[test]
    fn convex_objective_beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        for _ in 0..50 {
            let sub = random_subproblem(&mut rng, 3);
            let (row, _) = gamma_update_convex(&sub).unwrap();
            let f = objective(&row, &sub.anchor);
            for _ in 0..40 {
                let candidate: Vec<Complex64> = (0..3).map(|_| rand_c(&mut rng, 3.0)).collect();
                let feasible = project_linearized(&sub, &candidate);
                assert!(f <= objective(&feasible, &sub.anchor) + 1e-9);
            }
        }
    }

    // ---- feasibility (quartic) variant ----

    /// Dense-grid oracle over aligned magnitudes (the optimum keeps every
    /// entry colinear with its anchor, so the search space is real).
    fn grid_oracle(sub: &GammaSubproblem) -> f64 {
        let own = sub.own_group;
        let mags: Vec<f64> = sub.anchor.iter().map(|a| a.norm()).collect();
        let interf_bound: f64 = mags
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != own)
            .map(|(_, &a)| a * a)
            .sum();
        let own_hi = (sub.target * (interf_bound + sub.noise_power)).sqrt() + mags[own];
        let m = sub.anchor.len();
        let mut lo: Vec<f64> = (0..m)
            .map(|i| if i == own { mags[own] } else { 0.0 })
            .collect();
        let mut hi: Vec<f64> = (0..m)
            .map(|i| if i == own { own_hi } else { mags[i] })
            .collect();
        let steps = 20usize;
        let mut best = f64::INFINITY;
        let mut best_x = mags.clone();
        for _round in 0..4 {
            let mut idx = vec![0usize; m];
            loop {
                let x: Vec<f64> = (0..m)
                    .map(|i| lo[i] + (hi[i] - lo[i]) * idx[i] as f64 / steps as f64)
                    .collect();
                let interf: f64 = x
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != own)
                    .map(|(_, &v)| v * v)
                    .sum();
                if sub.target * (interf + sub.noise_power) <= x[own] * x[own] {
                    let f: f64 = x.iter().zip(&mags).map(|(&v, &a)| (v - a) * (v - a)).sum();
                    if f < best {
                        best = f;
                        best_x = x;
                    }
                }
                // odometer over the grid
                let mut d = 0;
                loop {
                    idx[d] += 1;
                    if idx[d] <= steps {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                    if d == m {
                        break;
                    }
                }
                if d == m {
                    break;
                }
            }
            for i in 0..m {
                let span = (hi[i] - lo[i]) / steps as f64;
                lo[i] = (best_x[i] - 1.5 * span).max(0.0);
                hi[i] = best_x[i] + 1.5 * span;
            }
        }
        best
    }

    #[test]
    fn feasibility_inactive_constraint_returns_anchor() {
        let sub = GammaSubproblem {
            anchor: vec![Complex64::new(4.0, 1.0), Complex64::new(0.1, -0.1)],
            own_group: 0,
            target: 1.0,
            noise_power: 0.5,
            taylor_inner: Complex64::new(0.0, 0.0),
        };
        assert!(dc_constraint_value(&sub, &sub.anchor) < 0.0);
        let (row, pi) = gamma_update_feasibility(&sub).unwrap();
        assert_eq!(pi, 0.0);
        assert_eq!(row, sub.anchor);
    }

    #[test]
    fn feasibility_random_unique_quartic_root_and_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let mut active = 0;
        for _ in 0..400 {
            let m = rng.gen_range(1..=4);
            let sub = random_subproblem(&mut rng, m);
            let (row, pi) = gamma_update_feasibility(&sub).unwrap();
            let scale = 1.0 + sub.anchor.iter().map(|a| a.norm_sqr()).sum::<f64>();
            let q = dc_constraint_value(&sub, &row);
            assert!((0.0..=1.0).contains(&pi), "pi = {pi}");
            assert!(q <= 1e-8 * scale, "primal feasibility {q}");
            assert!((pi * q).abs() <= 1e-8 * scale);
            if pi > 0.0 && pi < 1.0 {
                active += 1;
                assert!(q.abs() <= 1e-8 * scale, "active residual {q}");
                // unique dual root in [0,1): recompute the quartic directly
                let own = sub.own_group;
                let a: f64 = sub.target
                    * sub
                        .anchor
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != own)
                        .map(|(_, x)| x.norm_sqr())
                        .sum::<f64>();
                let b = sub.target * sub.noise_power;
                let c = sub.anchor[own].norm_sqr();
                let g = sub.target;
                let coeffs = [
                    b + a - c,
                    2.0 * b * g - 2.0 * b - 2.0 * a - 2.0 * c * g,
                    b * g * g + b - 4.0 * b * g + a - c * g * g,
                    2.0 * b * g - 2.0 * b * g * g,
                    b * g * g,
                ];
                let in_unit: Vec<f64> = quartic_real_roots(&coeffs)
                    .unwrap()
                    .into_iter()
                    .filter(|&r| (-1e-9..1.0).contains(&r))
                    .collect();
                assert_eq!(in_unit.len(), 1, "roots in [0,1): {in_unit:?}");
                assert!((in_unit[0] - pi).abs() <= 1e-7 * (1.0 + pi));
            }
        }
        assert!(active > 100);
    }

    #[test]
    fn feasibility_beats_dense_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        for _ in 0..60 {
            let m = rng.gen_range(1..=3);
            let sub = random_subproblem(&mut rng, m);
            let (row, _) = gamma_update_feasibility(&sub).unwrap();
            let f = objective(&row, &sub.anchor);
            let grid = grid_oracle(&sub);
            assert!(
                f <= grid + 1e-9 * (1.0 + grid),
                "closed form {f} vs grid {grid}"
            );
        }
    }

    #[test]
    fn feasibility_degenerate_own_anchor_takes_pi_one_branch() {
        let sub = GammaSubproblem {
            anchor: vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(0.4, 0.2),
                Complex64::new(-0.3, 0.6),
            ],
            own_group: 0,
            target: 2.0,
            noise_power: 1.0,
            taylor_inner: Complex64::new(0.0, 0.0),
        };
        let (row, pi) = gamma_update_feasibility(&sub).unwrap();
        assert_eq!(pi, 1.0);
        for m in 1..3 {
            let expect = sub.anchor[m] / (2.0 + 1.0);
            assert!((row[m] - expect).norm() < 1e-12);
        }
        let q = dc_constraint_value(&sub, &row);
        assert!(q.abs() <= 1e-10, "boundary residual {q}");
    }

    // ---- ball projection ----

    #[test]
    fn project_ball_identity_inside() {
        let u = vec![Complex64::new(0.3, 0.2), Complex64::new(-0.1, 0.4)];
        assert_eq!(project_ball(&u, 1.0), u);
        assert!(project_ball(&[], 1.0).is_empty());
        assert_eq!(
            project_ball(&[Complex64::new(0.0, 0.0)], 2.0),
            vec![Complex64::new(0.0, 0.0)]
        );
    }

    #[test]
    fn project_ball_scales_outside() {
        let u = vec![Complex64::new(2.0, 0.0)];
        let v = project_ball(&u, 1.0);
        assert!((v[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn project_ball_local_perturbation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        for _ in 0..100 {
            let m = rng.gen_range(1..=4);
            let u: Vec<Complex64> = (0..m).map(|_| rand_c(&mut rng, 2.0)).collect();
            let radius = rng.gen::<f64>() * 1.5 + 0.1;
            let v = project_ball(&u, radius);
            let dist: f64 = v.iter().zip(&u).map(|(a, b)| (a - b).norm_sqr()).sum();
            for _ in 0..60 {
                let candidate: Vec<Complex64> =
                    v.iter().map(|&x| x + rand_c(&mut rng, 0.05)).collect();
                let nrm: f64 = candidate.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                if nrm <= radius {
                    let d: f64 = candidate
                        .iter()
                        .zip(&u)
                        .map(|(a, b)| (a - b).norm_sqr())
                        .sum();
                    assert!(dist <= d + 1e-12);
                }
            }
        }
    }

    #[test]
    fn project_ball_idempotent_and_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(707);
        for _ in 0..100 {
            let u: Vec<Complex64> = (0..3).map(|_| rand_c(&mut rng, 3.0)).collect();
            let w: Vec<Complex64> = (0..3).map(|_| rand_c(&mut rng, 3.0)).collect();
            let r = rng.gen::<f64>() + 0.2;
            let pu = project_ball(&u, r);
            let ppu = project_ball(&pu, r);
            let d: f64 = pu.iter().zip(&ppu).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!(d <= 1e-28);
            let pw = project_ball(&w, r);
            let before: f64 = u.iter().zip(&w).map(|(a, b)| (a - b).norm_sqr()).sum();
            let after: f64 = pu.iter().zip(&pw).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!(after <= before + 1e-12);
        }
    }

    // ---- joint (v, α) update ----

    #[test]
    fn v_alpha_inactive() {
        let u = vec![Complex64::new(0.5, 0.0)];
        let (v, alpha, pi) = v_alpha_update(&u, 3.0, 1.0, 2.0);
        assert_eq!(v, u);
        assert_eq!(alpha, 3.0);
        assert_eq!(pi, 0.0);
    }

    #[test]
    fn v_alpha_unit_case_matches_secular_equation() {
        // u = 1, P = 1, c = 0, ρ = 2: π solves 1/(1+π)² = π/2
        let u = vec![Complex64::new(1.0, 0.0)];
        let (v, alpha, pi) = v_alpha_update(&u, 0.0, 1.0, 2.0);
        let resid = 1.0 / (1.0 + pi).powi(2) - pi / 2.0;
        assert!(resid.abs() < 1e-9, "secular residual {resid}");
        // constraint holds with equality at the optimum
        let vsq: f64 = v.iter().map(|c| c.norm_sqr()).sum();
        assert!((vsq - alpha).abs() < 1e-9);
        // independent cross-check via a fresh bisection on the same bracket
        let oracle =
            monotone_root(|x| 1.0 / (1.0 + x).powi(2) - x / 2.0, 0.0, 2.0, 1e-13).unwrap();
        assert!((pi - oracle).abs() < 1e-9);
    }

    #[test]
    fn v_alpha_random_beats_feasible_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        for _ in 0..80 {
            let m = rng.gen_range(1..=3);
            let u: Vec<Complex64> = (0..m).map(|_| rand_c(&mut rng, 2.0)).collect();
            let c = (rng.gen::<f64>() - 0.3) * 2.0;
            let p = rng.gen::<f64>() * 2.0 + 0.2;
            let rho = rng.gen::<f64>() * 3.0 + 0.1;
            let (v, alpha, pi) = v_alpha_update(&u, c, p, rho);
            let vsq: f64 = v.iter().map(|x| x.norm_sqr()).sum();
            assert!(vsq / p <= alpha + 1e-9, "feasibility");
            assert!(pi >= 0.0);
            let f = |vv: &[Complex64], aa: f64| -> f64 {
                vv.iter()
                    .zip(&u)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    + 0.5 * rho * (aa - c) * (aa - c)
            };
            let base = f(&v, alpha);
            for _ in 0..50 {
                let vv: Vec<Complex64> = v.iter().map(|&x| x + rand_c(&mut rng, 0.03)).collect();
                let aa = alpha + (rng.gen::<f64>() - 0.4) * 0.1;
                let sq: f64 = vv.iter().map(|x| x.norm_sqr()).sum();
                if sq / p <= aa {
                    assert!(base <= f(&vv, aa) + 1e-10);
                }
            }
        }
    }

    // ---- consensus kernels ----

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<Complex64> {
        DVector::from_fn(n, |_, _| rand_c(rng, 1.0))
    }

    #[test]
    fn consensus_x_identity_when_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(909);
        let n = 5;
        let h = random_vec(&mut rng, n);
        // strong aligned own anchor: constraint already satisfied
        let own_anchor = &h * Complex64::new(10.0 / h.norm_squared(), 0.0);
        let tau: Complex64 = h.dotc(&own_anchor);
        let anchors = vec![
            own_anchor.clone(),
            random_vec(&mut rng, n) * Complex64::new(0.01, 0.0),
        ];
        let (x, pi) = consensus_x_update(&h, &anchors, 0, 1.0, 0.1, tau).unwrap();
        assert_eq!(pi, 0.0);
        for (xi, ai) in x.iter().zip(&anchors) {
            assert!((xi - ai).norm() < 1e-12);
        }
    }

    #[test]
    fn consensus_x_gains_match_reduced_solution_and_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(1010);
        for _ in 0..100 {
            let n = rng.gen_range(2..=6);
            let m = rng.gen_range(1..=3);
            let own = rng.gen_range(0..m);
            let h = random_vec(&mut rng, n);
            let anchors: Vec<DVector<Complex64>> =
                (0..m).map(|_| random_vec(&mut rng, n)).collect();
            let target = rng.gen::<f64>() * 4.0 + 0.3;
            let noise = rng.gen::<f64>() + 0.1;
            let tau = rand_c(&mut rng, 1.5);
            let (x, pi) = consensus_x_update(&h, &anchors, own, target, noise, tau).unwrap();
            // the reduced gains solve the scaled secular stationarity exactly
            let hsq = h.norm_squared();
            for (mi, xi) in x.iter().enumerate() {
                let gain: Complex64 = h.dotc(xi);
                let reduced_anchor: Complex64 = h.dotc(&anchors[mi]);
                let expect = if mi == own {
                    reduced_anchor + tau * (pi * hsq)
                } else {
                    reduced_anchor / (pi * target * hsq + 1.0)
                };
                assert!(
                    (gain - expect).norm() <= 1e-10 * (1.0 + expect.norm()),
                    "gain {gain} vs reduced {expect}"
                );
            }
            // constraint satisfied
            let interf: f64 = x
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != own)
                .map(|(_, xi)| h.dotc(xi).norm_sqr())
                .sum();
            let q = target * (interf + noise) - 2.0 * (tau.conj() * h.dotc(&x[own])).re
                + tau.norm_sqr();
            assert!(q <= 1e-8 * (1.0 + tau.norm_sqr()), "feasibility {q}");
            assert!((pi * q).abs() <= 1e-8 * (1.0 + tau.norm_sqr()));
        }
    }

    #[test]
    fn consensus_x_objective_matches_projection_oracle() {
        // full-space projected gradient: project onto the lifted constraint
        // by bisection on the correction multiplier
        let mut rng = ChaCha8Rng::seed_from_u64(1111);
        for _ in 0..40 {
            let n = rng.gen_range(2..=5);
            let m = 3usize;
            let own = rng.gen_range(0..m);
            let h = random_vec(&mut rng, n);
            let anchors: Vec<DVector<Complex64>> =
                (0..m).map(|_| random_vec(&mut rng, n)).collect();
            let target = rng.gen::<f64>() * 3.0 + 0.3;
            let noise = rng.gen::<f64>() + 0.1;
            let tau = rand_c(&mut rng, 1.5);
            let (x, _) = consensus_x_update(&h, &anchors, own, target, noise, tau).unwrap();
            let f: f64 = x
                .iter()
                .zip(&anchors)
                .map(|(a, b)| (a - b).norm_squared())
                .sum();
            let q_of = |pts: &[DVector<Complex64>]| -> f64 {
                let interf: f64 = pts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != own)
                    .map(|(_, p)| h.dotc(p).norm_sqr())
                    .sum();
                target * (interf + noise) - 2.0 * (tau.conj() * h.dotc(&pts[own])).re
                    + tau.norm_sqr()
            };
            let project = |pts: &[DVector<Complex64>]| -> Vec<DVector<Complex64>> {
                if q_of(pts) <= 0.0 {
                    return pts.to_vec();
                }
                let hsq = h.norm_squared();
                let build = |nu: f64| -> Vec<DVector<Complex64>> {
                    pts.iter()
                        .enumerate()
                        .map(|(i, p)| {
                            if i == own {
                                p + &h * (tau * nu)
                            } else {
                                let shrink = nu * target * hsq + 1.0;
                                let g = h.dotc(p);
                                p + &h * ((g / shrink - g) / hsq)
                            }
                        })
                        .collect()
                };
                let mut top = 1.0;
                while q_of(&build(top)) > 0.0 {
                    top *= 2.0;
                }
                let (mut lo, mut hi) = (0.0, top);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if q_of(&build(mid)) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                build(hi)
            };
            let mut y = project(&anchors);
            for t in 1..=20_000usize {
                let eta = 0.5 / (1.0 + t as f64).sqrt().min(4.0);
                let stepped: Vec<DVector<Complex64>> = y
                    .iter()
                    .zip(&anchors)
                    .map(|(yi, ai)| yi - (yi - ai) * Complex64::new(2.0 * eta, 0.0))
                    .collect();
                let next = project(&stepped);
                let moved: f64 = next
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b).norm_squared())
                    .sum();
                y = next;
                if moved < 1e-30 {
                    break;
                }
            }
            let f_oracle: f64 = y
                .iter()
                .zip(&anchors)
                .map(|(a, b)| (a - b).norm_squared())
                .sum();
            assert!(
                (f - f_oracle).abs() <= 1e-6 * f_oracle.max(1e-6),
                "{f} vs oracle {f_oracle}"
            );
        }
    }

    #[test]
    fn consensus_y_identity_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1212);
        let anchors: Vec<DVector<Complex64>> = (0..2).map(|_| random_vec(&mut rng, 4)).collect();
        // generous cap: identity
        let out = consensus_y_update(&anchors, 1, 100.0);
        for (o, a) in out.iter().zip(&anchors) {
            assert!((o - a).norm() < 1e-15);
        }
        // tight cap: constrained coordinate scaled, others untouched
        let out = consensus_y_update(&anchors, 1, 1e-4);
        let coord_norm: f64 = out.iter().map(|o| o[1].norm_sqr()).sum::<f64>();
        assert!((coord_norm.sqrt() - 1e-2).abs() < 1e-12);
        for (o, a) in out.iter().zip(&anchors) {
            for i in [0usize, 2, 3] {
                assert_eq!(o[i], a[i]);
            }
        }
    }

    #[test]
    fn consensus_y_perturbation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1313);
        for _ in 0..40 {
            let anchors: Vec<DVector<Complex64>> =
                (0..3).map(|_| random_vec(&mut rng, 3)).collect();
            let p = rng.gen::<f64>() * 0.5 + 0.01;
            let n_idx = rng.gen_range(0..3);
            let out = consensus_y_update(&anchors, n_idx, p);
            let dist: f64 = out
                .iter()
                .zip(&anchors)
                .map(|(a, b)| (a - b).norm_squared())
                .sum();
            for _ in 0..40 {
                let candidate: Vec<DVector<Complex64>> = out
                    .iter()
                    .map(|o| o + random_vec(&mut rng, 3) * Complex64::new(0.02, 0.0))
                    .collect();
                let cap: f64 = candidate.iter().map(|c| c[n_idx].norm_sqr()).sum();
                if cap <= p {
                    let d: f64 = candidate
                        .iter()
                        .zip(&anchors)
                        .map(|(a, b)| (a - b).norm_squared())
                        .sum();
                    assert!(dist <= d + 1e-12);
                }
            }
        }
    }
}
