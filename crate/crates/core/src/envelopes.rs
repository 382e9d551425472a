//! Theoretical envelopes: power and quantile bounds, level caps, the critical
//! level and the separation-rate bound, as diagnostic curves.
//!
//! `loglog n` is `ln(ln n)` throughout. Proof constants are free and default
//! to 1.

use serde::{Deserialize, Serialize};

use crate::basis::{WarpedBasis, MAX_GRAM_LEVEL};
use crate::design::{NoiseModel, RegressionFunction, DEFAULT_QUAD_POINTS};
use crate::{Error, Result};

/// Smallest sample size for which `ln ln n > 0` is comfortably positive.
pub const MIN_ENVELOPE_N: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConstants {
    pub c1: f64,
    pub c2: f64,
    pub c_alpha: f64,
    pub c_rate: f64,
    /// `||f||_inf^2 + sup sigma^2`.
    pub tau_inf: f64,
    /// `||f0||_inf^2 + sup sigma^2`.
    pub tau0_inf: f64,
    pub m: f64,
    pub f0_sup: f64,
}

impl Default for EnvelopeConstants {
    fn default() -> Self {
        EnvelopeConstants {
            c1: 1.0,
            c2: 1.0,
            c_alpha: 1.0,
            c_rate: 1.0,
            tau_inf: 1.0,
            tau0_inf: 1.0,
            m: 1.0,
            f0_sup: 1.0,
        }
    }
}

impl EnvelopeConstants {
    /// Unit proof constants with the `tau`'s, `M` and `||f0||_inf` read off
    /// the configured model.
    pub fn from_model(f: &RegressionFunction, f0: &RegressionFunction, noise: &NoiseModel) -> Self {
        let var = noise.sd().powi(2);
        EnvelopeConstants {
            tau_inf: f.sup_norm_bound().powi(2) + var,
            tau0_inf: f0.sup_norm_bound().powi(2) + var,
            m: noise.bound_m(),
            f0_sup: f0.sup_norm_bound(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("C1", self.c1),
            ("C2", self.c2),
            ("C_alpha", self.c_alpha),
            ("C_rate", self.c_rate),
            ("tau_inf", self.tau_inf),
            ("tau0_inf", self.tau0_inf),
            ("M", self.m),
            ("f0_sup", self.f0_sup),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// `ln(ln n)` for `n >= 16`.
pub fn loglog(n: u64) -> Result<f64> {
    if n < MIN_ENVELOPE_N {
        return Err(Error::Domain(format!("need n >= {MIN_ENVELOPE_N}, got {n}")));
    }
    Ok((n as f64).ln().ln())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

/// Power envelope `(C1/n)(tau sqrt(2^J) + (M^2/n) 2^J) + C2/n`.
pub fn v_envelope(n: u64, level: u32, c: &EnvelopeConstants) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("need n >= 2, got {n}")));
    }
    let n = n as f64;
    let cells = 2f64.powi(level as i32);
    Ok(c.c1 / n * (c.tau_inf * cells.sqrt() + c.m * c.m / n * cells) + c.c2 / n)
}

/// Quantile envelope of the null statistic at level `J`.
pub fn quantile_envelope(n: u64, level: u32, c: &EnvelopeConstants) -> Result<f64> {
    let ll = loglog(n)?;
    let n = n as f64;
    let cells = 2f64.powi(level as i32);
    let inner = c.tau0_inf * cells.sqrt() * ll.sqrt()
        + 2.0 * (c.tau0_inf + c.m * c.f0_sup / 3.0) * ll
        + c.m * c.m * cells * ll * ll / n;
    Ok(c.c_alpha / n * inner)
}

/// Largest level with `2^J <= n^2 / (loglog n)^3`.
pub fn j_bar(n: u64) -> Result<u32> {
    let ll = loglog(n)?;
    let x = (n as f64).powi(2) / ll.powi(3);
    Ok(x.log2().floor() as u32)
}

/// `log2 ((nR)^2 / loglog n)^{1/(1+4s)}` before rounding.
pub fn j_star_continuous(n: u64, r: f64, s: f64) -> Result<f64> {
    check_positive("R", r)?;
    check_positive("s", s)?;
    let ll = loglog(n)?;
    let base = (n as f64 * r).powi(2) / ll;
    Ok(base.log2() / (1.0 + 4.0 * s))
}

/// Critical level `floor(log2 ((nR)^2/loglog n)^{1/(1+4s)}) + 1`; may be
/// negative or exceed [`j_bar`].
pub fn j_star(n: u64, r: f64, s: f64) -> Result<i64> {
    Ok(j_star_continuous(n, r, s)?.floor() as i64 + 1)
}

/// `C_rate R^{1/(4s+1)} (sqrt(loglog n)/n)^{2s/(2s+1)}`.
pub fn separation_rate_bound(n: u64, r: f64, s: f64, c_rate: f64) -> Result<f64> {
    check_positive("R", r)?;
    check_positive("s", s)?;
    if !(c_rate >= 0.0 && c_rate.is_finite()) {
        return Err(Error::Domain(format!("C_rate must be >= 0, got {c_rate}")));
    }
    let ll = loglog(n)?;
    let base = ll.sqrt() / n as f64;
    Ok(c_rate * r.powf(1.0 / (4.0 * s + 1.0)) * base.powf(2.0 * s / (2.0 * s + 1.0)))
}

/// Radius window `[R_lower, R_upper]` over which the rate bound applies.
pub fn r_window(n: u64, s: f64) -> Result<(f64, f64)> {
    check_positive("s", s)?;
    let ll = loglog(n)?;
    let nf = n as f64;
    let lower = ll.powf(s) * (ll / nf).sqrt();
    let upper = nf.powf(2.0 * s) / ll.powf(3.0 * s + 0.5);
    if !(lower < upper) {
        return Err(Error::Domain(format!(
            "empty radius window [{lower}, {upper}] at n = {n}, s = {s}"
        )));
    }
    Ok((lower, upper))
}

/// Squared bias `R^2 2^{-2Js}` and stochastic term `2^{J/2} sqrt(loglog n)/n`
/// that the critical level balances. `level` may be fractional.
pub fn balance_terms(n: u64, r: f64, s: f64, level: f64) -> Result<(f64, f64)> {
    check_positive("R", r)?;
    check_positive("s", s)?;
    let ll = loglog(n)?;
    let bias = r * r * 2f64.powf(-2.0 * level * s);
    let variance = 2f64.powf(level / 2.0) * ll.sqrt() / n as f64;
    Ok((bias, variance))
}

/// Outcome of [`approx_space_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    /// `||f - Pi_J f||^2` for `J = 0..=J_max`.
    pub errors: Vec<f64>,
    /// Every error satisfies `err_J <= R^2 2^{-2Js}`.
    pub member: bool,
    /// Decay exponent from a least-squares fit of `ln err_J` on `J`;
    /// `None` with fewer than two nonzero errors.
    pub s_fit: Option<f64>,
    /// Smallest `R` admissible at `s_fit`.
    pub r_fit: Option<f64>,
}

/// Errors below this are treated as exact zeros in the decay fit.
const ZERO_ERROR: f64 = 1e-13;

/// Projection-error decay of `f` against the approximation-space bound.
pub fn approx_space_check(
    f: &RegressionFunction,
    basis: &WarpedBasis,
    s: f64,
    r: f64,
    j_max: u32,
) -> Result<DecayReport> {
    check_positive("s", s)?;
    check_positive("R", r)?;
    if j_max > MAX_GRAM_LEVEL {
        return Err(Error::InvalidParameter(format!("J_max must be <= {MAX_GRAM_LEVEL}, got {j_max}")));
    }
    let errors = (0..=j_max)
        .map(|j| basis.projection_error(f, j, DEFAULT_QUAD_POINTS.max(1 << (j + 6))))
        .collect::<Result<Vec<f64>>>()?;
    // a relative slack absorbs quadrature rounding on the boundary
    let member = errors
        .iter()
        .enumerate()
        .all(|(j, &e)| e <= r * r * 2f64.powf(-2.0 * j as f64 * s) * (1.0 + 1e-9) + ZERO_ERROR);

    let pts: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > ZERO_ERROR)
        .map(|(j, &e)| (j as f64, e.ln()))
        .collect();
    let s_fit = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(-sxy / sxx / (2.0 * std::f64::consts::LN_2))
    } else {
        None
    };
    let r_fit = s_fit.map(|sf| {
        errors
            .iter()
            .enumerate()
            .map(|(j, &e)| (e * 2f64.powf(2.0 * j as f64 * sf)).sqrt())
            .fold(0.0, f64::max)
    });
    Ok(DecayReport {
        errors,
        member,
        s_fit,
        r_fit,
    })
}
