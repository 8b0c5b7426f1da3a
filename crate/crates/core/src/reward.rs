//! Sensing rewards: bandwidth, Shannon capacity, continuous-rate adaptive
//! modulation, and the conditional-mean reward under CSI mismatch.

use serde::{Deserialize, Serialize};

use crate::channel::{conditional_snr_density, DensityForm, MismatchModel};
use crate::error::{Error, Result};
use crate::numerics::{integrate_semi_infinite_split, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Channel bandwidth, independent of CSI.
    Conventional,
    /// `B log2(1 + γ)`.
    Capacity,
    /// `B log2(1 - 1.5γ / ln(5 BER_T))`.
    AdaptiveModulation,
}

impl RewardKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardKind::Conventional => "conventional",
            RewardKind::Capacity => "capacity",
            RewardKind::AdaptiveModulation => "adaptive_modulation",
        }
    }

    pub fn depends_on_csi(self) -> bool {
        !matches!(self, RewardKind::Conventional)
    }
}

fn check_bandwidth(b: f64) -> Result<()> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::domain(format!("bandwidth must be positive, got {b}")));
    }
    Ok(())
}

fn check_snr(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!("SNR must be >= 0, got {gamma}")));
    }
    Ok(())
}

/// Checks `BER_T ∈ (0, 0.2)`, the range in which the rate expression is positive.
pub fn check_ber_target(ber_target: f64) -> Result<()> {
    if !(ber_target > 0.0 && ber_target < 0.2) {
        return Err(Error::config(format!("ber_target must lie in (0, 0.2), got {ber_target}")));
    }
    Ok(())
}

pub fn reward_conventional(bandwidth: f64) -> Result<f64> {
    check_bandwidth(bandwidth)?;
    Ok(bandwidth)
}

pub fn reward_capacity(bandwidth: f64, gamma: f64) -> Result<f64> {
    check_bandwidth(bandwidth)?;
    check_snr(gamma)?;
    Ok(bandwidth * gamma.ln_1p() / std::f64::consts::LN_2)
}

/// SNR gap factor `1.5 / |ln(5 BER_T)|` of continuous-rate M-QAM.
#[inline]
fn modulation_gain(ber_target: f64) -> f64 {
    -1.5 / (5.0 * ber_target).ln()
}

pub fn reward_adaptive_modulation(bandwidth: f64, gamma: f64, ber_target: f64) -> Result<f64> {
    check_bandwidth(bandwidth)?;
    check_snr(gamma)?;
    check_ber_target(ber_target)?;
    Ok(bandwidth * (modulation_gain(ber_target) * gamma).ln_1p() / std::f64::consts::LN_2)
}

/// A validated reward family with per-channel bandwidths.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    kind: RewardKind,
    bandwidth: Vec<f64>,
    ber_target: f64,
    gain: f64,
}

impl RewardModel {
    pub fn new(kind: RewardKind, bandwidth: Vec<f64>, ber_target: f64) -> Result<Self> {
        for &b in &bandwidth {
            check_bandwidth(b)?;
        }
        if kind == RewardKind::AdaptiveModulation {
            check_ber_target(ber_target)?;
        }
        let gain = match kind {
            RewardKind::AdaptiveModulation => modulation_gain(ber_target),
            _ => 1.0,
        };
        Ok(Self {
            kind,
            bandwidth,
            ber_target,
            gain,
        })
    }

    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    pub fn bandwidth(&self, channel: usize) -> f64 {
        self.bandwidth[channel]
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn ber_target(&self) -> f64 {
        self.ber_target
    }

    /// Rate per unit bandwidth at SNR `gamma` (1 for the conventional family).
    #[inline]
    pub fn unit_rate(&self, gamma: f64) -> f64 {
        match self.kind {
            RewardKind::Conventional => 1.0,
            RewardKind::Capacity | RewardKind::AdaptiveModulation => {
                (self.gain * gamma).ln_1p() / std::f64::consts::LN_2
            }
        }
    }

    /// Reward on `channel` at SNR `gamma`. Inputs are assumed validated.
    #[inline]
    pub fn rate(&self, channel: usize, gamma: f64) -> f64 {
        self.bandwidth[channel] * self.unit_rate(gamma)
    }
}

/// Conditional-mean reward `E[R(γ) | γ̂]` under the CSI error model.
///
/// Only the CSI-dependent families are accepted.
pub fn reward_mismatched(
    gamma_hat: f64,
    model: &MismatchModel,
    base: &RewardModel,
    channel: usize,
    form: DensityForm,
    spec: &QuadratureSpec,
) -> Result<f64> {
    Ok(base.bandwidth(channel) * unit_reward_mismatched(gamma_hat, model, base, form, spec)?)
}

fn unit_reward_mismatched(
    gamma_hat: f64,
    model: &MismatchModel,
    base: &RewardModel,
    form: DensityForm,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !base.kind.depends_on_csi() {
        return Err(Error::config("mismatched reward requires a CSI-dependent base reward"));
    }
    check_snr(gamma_hat)?;
    if !(model.nmse > 0.0 && model.nmse <= 1.0) {
        return Err(Error::domain(format!("mismatched reward needs nmse in (0, 1], got {}", model.nmse)));
    }
    let (mean, sd) = model.conditional_moments(gamma_hat, form);
    let breakpoints = [mean - 8.0 * sd, mean - 2.0 * sd, mean, mean + 2.0 * sd, mean + 8.0 * sd];
    let integrand = |g: f64| -> f64 {
        let f = conditional_snr_density(g, gamma_hat, model, form).unwrap_or(0.0);
        if f == 0.0 {
            0.0
        } else {
            base.unit_rate(g) * f
        }
    };
    integrate_semi_infinite_split(integrand, &breakpoints, sd.max(1e-12), spec)
}

/// Log-spaced estimate grid, relative to the mean SNR.
const TABLE_POINTS: usize = 512;
const TABLE_LO: f64 = 1e-4;
const TABLE_HI: f64 = 1e2;

/// Precomputed `E[R(γ) | γ̂]` per unit bandwidth on a 512-point log-spaced γ̂
/// grid (plus γ̂ = 0), linearly interpolated.
///
/// Beyond the top node the table extrapolates linearly in `ln γ̂`; estimates
/// that large occur with probability below e^-100 under Rayleigh fading.
#[derive(Debug, Clone)]
pub struct MismatchedRewardTable {
    nodes: Vec<f64>,
    values: Vec<f64>,
    log_lo: f64,
    log_step: f64,
}

impl MismatchedRewardTable {
    pub fn build(
        model: &MismatchModel,
        base: &RewardModel,
        form: DensityForm,
        spec: &QuadratureSpec,
    ) -> Result<Self> {
        let lo = TABLE_LO * model.mean_snr;
        let hi = TABLE_HI * model.mean_snr;
        let log_lo = lo.ln();
        let log_step = (hi.ln() - log_lo) / (TABLE_POINTS - 1) as f64;
        let mut nodes = Vec::with_capacity(TABLE_POINTS + 1);
        nodes.push(0.0);
        nodes.extend((0..TABLE_POINTS).map(|i| (log_lo + i as f64 * log_step).exp()));
        let values = nodes
            .iter()
            .map(|&gh| unit_reward_mismatched(gh, model, base, form, spec))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            nodes,
            values,
            log_lo,
            log_step,
        })
    }

    /// Interpolated reward per unit bandwidth at estimate `gamma_hat >= 0`.
    pub fn unit_value(&self, gamma_hat: f64) -> f64 {
        let last = self.nodes.len() - 1;
        if gamma_hat <= self.nodes[1] {
            let t = gamma_hat / self.nodes[1];
            return self.values[0] + t * (self.values[1] - self.values[0]);
        }
        if gamma_hat >= self.nodes[last] {
            let slope = (self.values[last] - self.values[last - 1]) / self.log_step;
            return self.values[last] + slope * (gamma_hat.ln() - self.nodes[last].ln());
        }
        // node i + 1 holds exp(log_lo + i·step)
        let pos = (gamma_hat.ln() - self.log_lo) / self.log_step;
        let i = (pos.floor() as usize + 1).clamp(1, last - 1);
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let t = ((gamma_hat - x0) / (x1 - x0)).clamp(0.0, 1.0);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }
}
