//! Sensing policies.
//!
//! Every policy consumes exactly one uniform draw from the SU's own stream per
//! decision, so policies fed identical inputs stay in lock-step.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Uniform over all channels.
    Random,
    /// Greedy on belief times bandwidth.
    Myopic,
    /// Samples channels in proportion to their expected reward.
    RandomizedMyopic,
    /// Myopic, with a randomized move away from the channel after a collision.
    MyopicCa,
    /// Greedy on belief times a CSI-dependent reward.
    CsiAided,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Random,
        StrategyKind::Myopic,
        StrategyKind::RandomizedMyopic,
        StrategyKind::MyopicCa,
        StrategyKind::CsiAided,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Myopic => "myopic",
            StrategyKind::RandomizedMyopic => "randomized_myopic",
            StrategyKind::MyopicCa => "myopic_ca",
            StrategyKind::CsiAided => "csi_aided",
        }
    }

    /// Whether the policy ranks channels by a CSI-dependent reward.
    pub fn uses_csi(self) -> bool {
        matches!(self, StrategyKind::CsiAided)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown strategy '{s}'")))
    }
}

/// What one SU knows when it picks a channel.
#[derive(Debug, Clone, Copy)]
pub struct SuContext<'a> {
    pub belief: &'a [f64],
    pub reward_per_channel: &'a [f64],
    /// Lost contention on an idle channel in the previous slot.
    pub last_slot_collided: bool,
    pub last_slot_channel: Option<usize>,
}

#[inline]
pub fn expected_reward(theta: f64, reward: f64) -> f64 {
    theta * reward
}

/// Picks uniformly among the maxima of `scores` using the draw `u ∈ [0, 1)`.
fn argmax_with_ties(scores: impl Iterator<Item = f64> + Clone, u: f64) -> usize {
    let best = scores.clone().fold(f64::NEG_INFINITY, f64::max);
    let ties = scores.clone().filter(|&s| s == best).count();
    let pick = ((u * ties as f64) as usize).min(ties - 1);
    scores
        .enumerate()
        .filter(|&(_, s)| s == best)
        .nth(pick)
        .map(|(i, _)| i)
        .expect("pick < ties")
}

/// Chooses the channel to sense this slot.
///
/// `ca_top_l` is the size of the candidate set a colliding MyopicCa SU
/// re-draws from.
pub fn select_channel<R: Rng + ?Sized>(
    kind: StrategyKind,
    ctx: &SuContext<'_>,
    ca_top_l: usize,
    rng: &mut R,
) -> Result<usize> {
    let n = ctx.belief.len();
    if n == 0 {
        return Err(Error::config("no channels to sense"));
    }
    if ctx.reward_per_channel.len() != n {
        return Err(Error::Contract(format!(
            "{} rewards for {n} channels",
            ctx.reward_per_channel.len()
        )));
    }
    let u: f64 = rng.random();
    let scores = ctx
        .belief
        .iter()
        .zip(ctx.reward_per_channel)
        .map(|(&t, &r)| expected_reward(t, r));

    let choice = match kind {
        StrategyKind::Random => ((u * n as f64) as usize).min(n - 1),
        StrategyKind::Myopic | StrategyKind::CsiAided => argmax_with_ties(scores, u),
        StrategyKind::RandomizedMyopic => {
            let total: f64 = scores.clone().sum();
            if total > 0.0 {
                let target = u * total;
                let mut acc = 0.0;
                let mut chosen = n - 1;
                for (i, s) in scores.enumerate() {
                    acc += s;
                    if target < acc && s > 0.0 {
                        chosen = i;
                        break;
                    }
                }
                chosen
            } else {
                ((u * n as f64) as usize).min(n - 1)
            }
        }
        StrategyKind::MyopicCa => {
            if ctx.last_slot_collided {
                let mut ranked: Vec<(usize, f64)> = scores
                    .enumerate()
                    .filter(|&(i, _)| Some(i) != ctx.last_slot_channel)
                    .collect();
                if ranked.is_empty() {
                    // a single channel leaves nowhere to move
                    0
                } else {
                    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                    let l = ca_top_l.clamp(1, ranked.len());
                    ranked[((u * l as f64) as usize).min(l - 1)].0
                }
            } else {
                argmax_with_ties(scores, u)
            }
        }
    };
    Ok(choice)
}
