//! Closed-form and one-dimensional block updates of the dual decomposition.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::model::rate_unchecked;

/// Per-subcarrier Lagrangian term
/// `(1+ψ)·r̄(p) − (γ·s·λ + θ·φ)·p/φ` for one candidate pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreInputs {
    pub h_tilde: f64,
    /// Worst-case eavesdropper ratio `ḡ + ε`.
    pub g: f64,
    pub bandwidth_hz: f64,
    pub psi: f64,
    pub gamma: f64,
    pub theta: f64,
    pub s_bits: f64,
    pub lambda: f64,
    pub phi: f64,
}

impl ScoreInputs {
    /// Linear power price `γ·s·λ + θ·φ`.
    pub fn cost_coefficient(&self) -> f64 {
        self.gamma * self.s_bits * self.lambda + self.theta * self.phi
    }
}

pub fn subcarrier_score(p: f64, inputs: &ScoreInputs) -> Result<f64> {
    if !(inputs.phi > 0.0) {
        return Err(Error::domain(format!("phi must be > 0, got {}", inputs.phi)));
    }
    let rate = rate_unchecked(p, inputs.h_tilde, inputs.g, inputs.bandwidth_hz, false);
    Ok((1.0 + inputs.psi) * rate - inputs.cost_coefficient() * p / inputs.phi)
}

/// Stationary transmit power of the per-subcarrier term.
///
/// Returns 0 when `h̃ ≤ g`. Errors when the power price is not positive (the
/// term is then unbounded in `p`) or when `g = 0`, where the quadratic-root
/// expression is 0/0; see [`optimal_power_limit`].
pub fn optimal_power(inputs: &ScoreInputs) -> Result<f64> {
    if inputs.h_tilde <= inputs.g {
        return Ok(0.0);
    }
    if !(inputs.cost_coefficient() > 0.0) {
        return Err(Error::domain("power price γ·s·λ + θ·φ must be > 0"));
    }
    if inputs.g == 0.0 {
        return Err(Error::domain("eavesdropper ratio is zero; use the limiting form"));
    }
    Ok(stationary_power(inputs))
}

/// [`optimal_power`] that also accepts `g = 0`, where it returns the limit
/// `[(1+ψ)·B·φ/(cost·ln2) − 1/h̃]^+`.
pub fn optimal_power_limit(inputs: &ScoreInputs) -> Result<f64> {
    if inputs.h_tilde <= inputs.g {
        return Ok(0.0);
    }
    if !(inputs.cost_coefficient() > 0.0) {
        return Err(Error::domain("power price γ·s·λ + θ·φ must be > 0"));
    }
    Ok(stationary_power(inputs))
}

/// Root of the stationarity quadratic, written as `2(Q − 1)/(S + h̃ + g)` with
/// `Q = (h̃ − g)(1+ψ)φB/(cost·ln2)` and `S = √(4h̃gQ + (h̃ − g)²)`. This is the
/// printed quadratic-root formula with the numerator rationalized: it avoids
/// cancellation at high SNR and is continuous at `g = 0`.
fn stationary_power(inputs: &ScoreInputs) -> f64 {
    let (h, g) = (inputs.h_tilde, inputs.g);
    let q = (h - g) * (1.0 + inputs.psi) * inputs.phi * inputs.bandwidth_hz
        / (inputs.cost_coefficient() * LN_2);
    let s = (4.0 * h * g * q + (h - g) * (h - g)).sqrt();
    (2.0 * (q - 1.0) / (s + h + g)).max(0.0)
}

/// Unconstrained server share `√(β·s·λ·c_m / μ)` with `μ` floored.
pub fn optimal_mec_frequency_raw(beta: f64, s_bits: f64, lambda: f64, c_mec: f64, mu: f64, mu_floor: f64) -> f64 {
    let num = beta * s_bits * lambda * c_mec;
    if num <= 0.0 {
        return 0.0;
    }
    (num / mu.max(mu_floor)).sqrt()
}

/// Scales `shares` down proportionally so they sum to at most `capacity`.
pub fn project_capacity(shares: &mut [f64], capacity: f64) {
    let total: f64 = shares.iter().sum();
    if total > capacity && total > 0.0 {
        let scale = capacity / total;
        for s in shares.iter_mut() {
            *s *= scale;
        }
    }
}

/// Coefficients of the local-frequency stationarity condition
/// `α·c·s·u − 2γ·η·u·s·c·f³ − ϕ·f² = 0`, with `u = 1 − Σλ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalCubic {
    pub alpha: f64,
    pub gamma: f64,
    pub varphi: f64,
    pub eta: f64,
    pub c_cycles_per_bit: f64,
    pub s_bits: f64,
    pub residual_fraction: f64,
}

impl LocalCubic {
    pub fn eval(&self, f: f64) -> f64 {
        let cs = self.c_cycles_per_bit * self.s_bits * self.residual_fraction;
        self.alpha * cs - 2.0 * self.gamma * self.eta * cs * f * f * f - self.varphi * f * f
    }

    /// Residual divided by the constant term `α·c·s·u`.
    pub fn relative_residual(&self, f: f64) -> f64 {
        let a = self.alpha * self.c_cycles_per_bit * self.s_bits * self.residual_fraction;
        if a > 0.0 {
            self.eval(f) / a
        } else {
            self.eval(f)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    pub tol: f64,
    pub max_iter: usize,
}

/// Local CPU frequency maximizing the per-user Lagrangian term.
///
/// `u = 0` gives 0. With `α = 0` the term decreases in `f`, and the floor
/// `1e-6·F_local` stands in for the open lower end. A root beyond
/// `F_local` is clamped.
pub fn optimal_user_frequency(cubic: &LocalCubic, f_local_max: f64, opts: &RootOptions) -> Result<f64> {
    if cubic.residual_fraction <= 0.0 {
        return Ok(0.0);
    }
    let floor = 1e-6 * f_local_max;
    let cs = cubic.c_cycles_per_bit * cubic.s_bits * cubic.residual_fraction;
    let a = cubic.alpha * cs;
    let b = 2.0 * cubic.gamma * cubic.eta * cs;
    let d = cubic.varphi;
    if !(a > 0.0) {
        return Ok(floor);
    }
    if b <= 0.0 && d <= 0.0 {
        return Ok(f_local_max);
    }
    let mut hi = f64::INFINITY;
    if b > 0.0 {
        hi = hi.min((a / b).cbrt());
    }
    if d > 0.0 {
        hi = hi.min((a / d).sqrt());
    }
    if hi > f_local_max && cubic.eval(f_local_max) >= 0.0 {
        return Ok(f_local_max);
    }
    let hi = hi.min(f_local_max);
    // Scaled cubic on x = f/hi: 1 − B·x³ − D·x², root in (0, 1].
    let bs = b * hi * hi * hi / a;
    let ds = d * hi * hi / a;
    let g = |x: f64| 1.0 - bs * x * x * x - ds * x * x;
    if g(1.0) >= 0.0 {
        // Rounding in `bs` or `ds` put the root at the bracket end.
        return Ok(hi.clamp(floor, f_local_max));
    }
    let x = secant_root(g, 0.0, 1.0, opts)?;
    Ok((x * hi).clamp(floor, f_local_max))
}

/// Secant iteration kept inside a sign-change bracket; a step that leaves the
/// bracket or fails to shrink it enough is replaced by bisection.
pub fn secant_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64, opts: &RootOptions) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::domain("secant bracket has no sign change"));
    }
    let (mut x0, mut f0) = (lo, flo);
    let (mut x1, mut f1) = (hi, fhi);
    for _ in 0..opts.max_iter {
        let mut x = if f1 != f0 { x1 - f1 * (x1 - x0) / (f1 - f0) } else { f64::NAN };
        let width = hi - lo;
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx.abs() < opts.tol {
            return Ok(x);
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        // Force a bisection when the bracket stalls.
        if hi - lo > 0.5 * width {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            if fm.abs() < opts.tol {
                return Ok(mid);
            }
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        x0 = x1;
        f0 = f1;
        x1 = x;
        f1 = fx;
    }
    Err(Error::IterationLimit(format!(
        "secant did not reach residual {} in {} iterations",
        opts.tol, opts.max_iter
    )))
}

/// Auxiliary rate bound `√((β·s·λ + s·λ·γ·Σ x·p̃)/ψ)`, `ψ` floored.
pub fn optimal_phi_raw(beta: f64, gamma: f64, s_bits: f64, lambda: f64, pair_power_w: f64, psi: f64, psi_floor: f64) -> f64 {
    let num = s_bits * lambda * (beta + gamma * pair_power_w);
    (num.max(0.0) / psi.max(psi_floor)).sqrt()
}

/// Applies the convention for `Φ`: inactive pairs take the achieved rate;
/// active pairs are clamped to `(floor, rate]` whenever the rate is positive.
pub fn update_phi(raw: f64, lambda: f64, achieved_rate: f64, floor: f64) -> f64 {
    if lambda <= 0.0 {
        return achieved_rate;
    }
    if achieved_rate > 0.0 {
        raw.clamp(floor.min(achieved_rate), achieved_rate)
    } else {
        raw.max(floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(h: f64, g: f64) -> ScoreInputs {
        ScoreInputs {
            h_tilde: h,
            g,
            bandwidth_hz: 1.0,
            psi: 0.0,
            gamma: 1.0 / LN_2,
            theta: 0.0,
            s_bits: 1.0,
            lambda: 1.0,
            phi: 1.0,
        }
    }

    #[test]
    fn score_examples() {
        let mut i = inputs(3.0, 1.0);
        assert_eq!(subcarrier_score(0.0, &i).unwrap(), 0.0);
        i.gamma = 0.0;
        assert!((subcarrier_score(1.0, &i).unwrap() - 1.0).abs() < 1e-12);
        // ψ = 1, cost term 0.5.
        i.psi = 1.0;
        i.gamma = 0.5;
        assert!((subcarrier_score(1.0, &i).unwrap() - 1.5).abs() < 1e-12);
        i.phi = 0.0;
        assert!(subcarrier_score(1.0, &i).is_err());
    }

    #[test]
    fn power_examples() {
        assert_eq!(optimal_power(&inputs(2.0, 2.0)).unwrap(), 0.0);
        let p = optimal_power(&inputs(3.0, 1.0)).unwrap();
        assert!((p - 0.21525043702153024).abs() < 1e-12, "{p}");
        assert!((3.0 / (1.0 + 3.0 * p) - 1.0 / (1.0 + p) - 1.0).abs() < 1e-9);
        let p2 = optimal_power(&inputs(3.0, 0.5)).unwrap();
        assert!((p2 - 0.3699240762154812).abs() < 1e-12, "{p2}");
        assert!(p2 > p);
    }

    #[test]
    fn power_errors_and_limit() {
        let mut i = inputs(3.0, 1.0);
        i.gamma = 0.0;
        assert!(optimal_power(&i).is_err());
        let i = inputs(3.0, 0.0);
        assert!(optimal_power(&i).is_err());
        // (1+ψ)Bφ/(cost ln2) − 1/h = 1 − 1/3.
        let p = optimal_power_limit(&i).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
        let near = optimal_power(&inputs(3.0, 1e-12)).unwrap();
        assert!((near - p).abs() < 1e-9);
    }

    #[test]
    fn mec_frequency_examples() {
        assert_eq!(optimal_mec_frequency_raw(0.0, 1.0, 1.0, 1.0, 1.0, 1e-12), 0.0);
        assert_eq!(optimal_mec_frequency_raw(1.0, 1.0, 0.0, 1.0, 1.0, 1e-12), 0.0);
        let f = optimal_mec_frequency_raw(4.0, 1.0, 1.0, 1.0, 1.0, 1e-12);
        assert!((f - 2.0).abs() < 1e-15);
        assert!((4.0 / (f * f) - 1.0).abs() < 1e-15);
        let mut shares = [0.8, 0.6];
        project_capacity(&mut shares, 1.0);
        assert!((shares[0] - 0.8 / 1.4).abs() < 1e-15);
        assert!((shares.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    fn cubic(alpha: f64, gamma: f64, varphi: f64, u: f64) -> LocalCubic {
        LocalCubic {
            alpha,
            gamma,
            varphi,
            eta: 1.0,
            c_cycles_per_bit: 1.0,
            s_bits: 1.0,
            residual_fraction: u,
        }
    }

    const OPTS: RootOptions = RootOptions { tol: 1e-12, max_iter: 200 };

    #[test]
    fn user_frequency_examples() {
        assert_eq!(optimal_user_frequency(&cubic(2.0, 1.0, 1.0, 0.0), 10.0, &OPTS).unwrap(), 0.0);
        let f = optimal_user_frequency(&cubic(2.0, 1.0, 0.0, 1.0), 10.0, &OPTS).unwrap();
        assert!((f - 1.0).abs() < 1e-10, "{f}");
        let f = optimal_user_frequency(&cubic(2.0, 1.0, 1.0, 1.0), 10.0, &OPTS).unwrap();
        assert!((f - 0.8580943294965527).abs() < 1e-10, "{f}");
        // No cost at all: boundary optimum.
        assert_eq!(optimal_user_frequency(&cubic(2.0, 0.0, 0.0, 1.0), 10.0, &OPTS).unwrap(), 10.0);
        // Root beyond the cap.
        assert_eq!(optimal_user_frequency(&cubic(2.0, 1.0, 0.0, 1.0), 0.5, &OPTS).unwrap(), 0.5);
    }

    #[test]
    fn phi_examples() {
        let raw = optimal_phi_raw(9.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1e-12);
        assert!((raw - 3.0).abs() < 1e-15);
        assert!((9.0 / (raw * raw) - 1.0).abs() < 1e-15);
        assert_eq!(update_phi(raw, 0.0, 1.7, 1e-9), 1.7);
        assert_eq!(update_phi(raw, 0.5, 2.0, 1e-9), 2.0);
        assert_eq!(update_phi(1.5, 0.5, 2.0, 1e-9), 1.5);
    }

    #[test]
    fn secant_matches_bisection() {
        let f = |x: f64| x * x * x - 2.0 * x - 5.0;
        let r = secant_root(f, 2.0, 3.0, &OPTS).unwrap();
        assert!((r - 2.0945514815423265).abs() < 1e-12);
        assert!(secant_root(f, 3.0, 4.0, &OPTS).is_err());
    }
}
