//! Energy-detector reliability: false-alarm and miss probabilities, threshold
//! calibration against a miss-probability target, and the noisy sensing draw.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{gamma_upper_regularized, integrate_semi_infinite, marcum_q, QuadratureSpec};

/// Operating point of the energy detector shared by all SUs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorProfile {
    /// Number of collected samples.
    pub nu: u32,
    /// Detection threshold on the energy statistic.
    pub tau: f64,
    pub p_m: f64,
    pub p_f: f64,
    /// Mean PU SNR at the sensor (linear).
    pub pu_mean_snr: f64,
}

impl DetectorProfile {
    /// A profile with explicit error rates, bypassing calibration.
    pub fn with_rates(p_m: f64, p_f: f64) -> Result<Self> {
        for (name, v) in [("p_m", p_m), ("p_f", p_f)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} = {v} is not a probability")));
            }
        }
        Ok(Self {
            nu: 1,
            tau: f64::NAN,
            p_m,
            p_f,
            pu_mean_snr: f64::NAN,
        })
    }

    pub fn perfect() -> Self {
        Self::with_rates(0.0, 0.0).expect("valid rates")
    }
}

fn check_nu(nu: u32) -> Result<()> {
    if nu == 0 {
        return Err(Error::domain("sample count nu must be >= 1"));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("threshold must be >= 0, got {tau}")));
    }
    Ok(())
}

/// `Γ(ν, τ/2) / Γ(ν)`.
pub fn false_alarm_rate(nu: u32, tau: f64) -> Result<f64> {
    check_nu(nu)?;
    check_tau(tau)?;
    if tau.is_infinite() {
        return Ok(0.0);
    }
    gamma_upper_regularized(f64::from(nu), tau / 2.0)
}

/// Miss probability averaged over an exponentially distributed PU SNR λ with
/// mean `pu_mean_snr`: `1 - ∫ Q_ν(√(2νλ), √τ) f(λ) dλ`.
pub fn miss_rate(nu: u32, tau: f64, pu_mean_snr: f64) -> Result<f64> {
    check_nu(nu)?;
    check_tau(tau)?;
    if !(pu_mean_snr > 0.0 && pu_mean_snr.is_finite()) {
        return Err(Error::domain(format!("PU mean SNR must be positive, got {pu_mean_snr}")));
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    if tau.is_infinite() {
        return Ok(1.0);
    }
    let b = tau.sqrt();
    let scale = 2.0 * f64::from(nu) * pu_mean_snr;
    // substitute λ = λ̄·u so the weight is e^{-u} regardless of λ̄
    let integrand = |u: f64| -> f64 {
        let weight = (-u).exp();
        if weight == 0.0 {
            return 0.0;
        }
        marcum_q(nu, (scale * u).sqrt(), b).unwrap_or(f64::NAN) * weight
    };
    let detection = integrate_semi_infinite(integrand, &QuadratureSpec::default())?;
    Ok((1.0 - detection).clamp(0.0, 1.0))
}

const CALIBRATION_TOLERANCE: f64 = 1e-9;

/// Finds the threshold whose miss probability equals `target_pm` and
/// completes the profile with the matching false-alarm probability.
///
/// Bisection on τ; the upper bracket is doubled until it overshoots the target.
pub fn calibrate_threshold(nu: u32, target_pm: f64, pu_mean_snr: f64) -> Result<DetectorProfile> {
    check_nu(nu)?;
    if !(target_pm > 0.0 && target_pm < 1.0) {
        return Err(Error::config(format!("target p_m must lie in (0, 1), got {target_pm}")));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while miss_rate(nu, hi, pu_mean_snr)? <= target_pm {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::config(format!("cannot bracket target p_m = {target_pm}")));
        }
    }
    let mut tau = 0.5 * (lo + hi);
    for _ in 0..200 {
        tau = 0.5 * (lo + hi);
        let pm = miss_rate(nu, tau, pu_mean_snr)?;
        if (pm - target_pm).abs() < CALIBRATION_TOLERANCE {
            break;
        }
        if pm < target_pm {
            lo = tau;
        } else {
            hi = tau;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(DetectorProfile {
        nu,
        tau,
        p_m: miss_rate(nu, tau, pu_mean_snr)?,
        p_f: false_alarm_rate(nu, tau)?,
        pu_mean_snr,
    })
}

/// One noisy sensing outcome; returns whether the channel is *observed* idle.
///
/// Consumes exactly one uniform draw.
pub fn sense<R: Rng + ?Sized>(truly_idle: bool, profile: &DetectorProfile, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    if truly_idle {
        u >= profile.p_f
    } else {
        u < profile.p_m
    }
}
