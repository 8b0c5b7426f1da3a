//! Per-slot contention among SUs that found the same channel idle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pu_traffic::OccupancyState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuOutcome {
    Transmitted,
    /// Found the channel idle but another SU won it.
    LostContention,
    /// Observed the sensed channel busy.
    Slept,
    /// Transmitted over an active PU after a missed detection.
    CollidedWithPu,
}

/// SUs that sensed each channel and observed it idle.
#[derive(Debug, Clone)]
pub struct SlotClaims {
    su_count: usize,
    per_channel: Vec<Vec<usize>>,
}

impl SlotClaims {
    pub fn new(su_count: usize, channels: usize) -> Self {
        Self {
            su_count,
            per_channel: vec![Vec::new(); channels],
        }
    }

    pub fn claim(&mut self, channel: usize, su: usize) -> Result<()> {
        if su >= self.su_count {
            return Err(Error::Contract(format!("SU {su} out of range 0..{}", self.su_count)));
        }
        let n = self.per_channel.len();
        let list = self
            .per_channel
            .get_mut(channel)
            .ok_or_else(|| Error::Contract(format!("channel {channel} out of range 0..{n}")))?;
        list.push(su);
        Ok(())
    }

    pub fn su_count(&self) -> usize {
        self.su_count
    }

    pub fn channels(&self) -> usize {
        self.per_channel.len()
    }

    pub fn claimants(&self, channel: usize) -> &[usize] {
        &self.per_channel[channel]
    }

    fn check(&self) -> Result<()> {
        let mut seen = vec![false; self.su_count];
        for (ch, list) in self.per_channel.iter().enumerate() {
            for &su in list {
                if std::mem::replace(&mut seen[su], true) {
                    return Err(Error::Contract(format!("SU {su} claims more than one channel (again on {ch})")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub per_su: Vec<SuOutcome>,
    pub pu_disrupted: Vec<bool>,
}

impl SlotOutcome {
    pub fn count(&self, outcome: SuOutcome) -> usize {
        self.per_su.iter().filter(|&&o| o == outcome).count()
    }
}

/// Resolves who transmits on each channel.
///
/// SUs absent from every claim list slept. One uniform draw is taken per truly
/// idle channel with two or more claimants, in channel order. A busy channel
/// with claimants is lost to both sides: every claimant is `CollidedWithPu`
/// and the PU slot is disrupted.
pub fn resolve_contention<R: Rng + ?Sized>(
    claims: &SlotClaims,
    true_states: &OccupancyState,
    rng: &mut R,
) -> Result<SlotOutcome> {
    claims.check()?;
    if true_states.channels() != claims.channels() {
        return Err(Error::Contract(format!(
            "claims cover {} channels, occupancy has {}",
            claims.channels(),
            true_states.channels()
        )));
    }
    let mut per_su = vec![SuOutcome::Slept; claims.su_count];
    let mut pu_disrupted = vec![false; claims.channels()];
    for (ch, list) in claims.per_channel.iter().enumerate() {
        match list.len() {
            0 => {}
            _ if !true_states.is_idle(ch) => {
                pu_disrupted[ch] = true;
                for &su in list {
                    per_su[su] = SuOutcome::CollidedWithPu;
                }
            }
            1 => per_su[list[0]] = SuOutcome::Transmitted,
            k => {
                let u: f64 = rng.random();
                let winner = ((u * k as f64) as usize).min(k - 1);
                for (i, &su) in list.iter().enumerate() {
                    per_su[su] = if i == winner {
                        SuOutcome::Transmitted
                    } else {
                        SuOutcome::LostContention
                    };
                }
            }
        }
    }
    Ok(SlotOutcome { per_su, pu_disrupted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn occupancy(idle: &[bool]) -> OccupancyState {
        OccupancyState::new(idle.to_vec())
    }

    #[test]
    fn single_claimant_transmits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut claims = SlotClaims::new(2, 2);
        claims.claim(1, 0).unwrap();
        let out = resolve_contention(&claims, &occupancy(&[false, true]), &mut rng).unwrap();
        assert_eq!(out.per_su, vec![SuOutcome::Transmitted, SuOutcome::Slept]);
        assert_eq!(out.pu_disrupted, vec![false, false]);
    }

    #[test]
    fn three_way_contention_is_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut claims = SlotClaims::new(3, 1);
        for su in 0..3 {
            claims.claim(0, su).unwrap();
        }
        let idle = occupancy(&[true]);
        let trials = 100_000;
        let mut wins = [0usize; 3];
        for _ in 0..trials {
            let out = resolve_contention(&claims, &idle, &mut rng).unwrap();
            assert_eq!(out.count(SuOutcome::Transmitted), 1);
            assert_eq!(out.count(SuOutcome::LostContention), 2);
            wins[out.per_su.iter().position(|&o| o == SuOutcome::Transmitted).unwrap()] += 1;
        }
        for w in wins {
            assert!((w as f64 / trials as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn missed_detection_disrupts_pu() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut claims = SlotClaims::new(2, 1);
        claims.claim(0, 0).unwrap();
        claims.claim(0, 1).unwrap();
        let out = resolve_contention(&claims, &occupancy(&[false]), &mut rng).unwrap();
        assert_eq!(out.per_su, vec![SuOutcome::CollidedWithPu; 2]);
        assert_eq!(out.pu_disrupted, vec![true]);
    }

    #[test]
    fn malformed_claims_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut claims = SlotClaims::new(2, 2);
        claims.claim(0, 1).unwrap();
        claims.claim(1, 1).unwrap();
        assert!(matches!(
            resolve_contention(&claims, &occupancy(&[true, true]), &mut rng),
            Err(Error::Contract(_))
        ));
        assert!(claims.claim(2, 0).is_err());
        assert!(claims.claim(0, 2).is_err());
        let ok = SlotClaims::new(1, 2);
        assert!(resolve_contention(&ok, &occupancy(&[true]), &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn outcomes_are_conserved(
            idle in prop::collection::vec(any::<bool>(), 1..8),
            picks in prop::collection::vec(prop::option::of(any::<prop::sample::Index>()), 1..16),
            seed in any::<u64>(),
        ) {
            let n = idle.len();
            let m = picks.len();
            let mut claims = SlotClaims::new(m, n);
            for (su, p) in picks.iter().enumerate() {
                if let Some(ix) = p {
                    claims.claim(ix.index(n), su).unwrap();
                }
            }
            let states = occupancy(&idle);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = resolve_contention(&claims, &states, &mut rng).unwrap();
            let total = out.count(SuOutcome::Transmitted)
                + out.count(SuOutcome::LostContention)
                + out.count(SuOutcome::Slept)
                + out.count(SuOutcome::CollidedWithPu);
            prop_assert_eq!(total, m);
            for ch in 0..n {
                let winners = claims.claimants(ch).iter().filter(|&&su| out.per_su[su] == SuOutcome::Transmitted).count();
                prop_assert!(winners <= 1);
                prop_assert_eq!(out.pu_disrupted[ch], !idle[ch] && !claims.claimants(ch).is_empty());
            }
            for (su, p) in picks.iter().enumerate() {
                if p.is_none() {
                    prop_assert_eq!(out.per_su[su], SuOutcome::Slept);
                }
            }
            // claimants restricted to idle channels, as under perfect sensing, never hit a PU
            if idle.iter().all(|&b| b) {
                prop_assert_eq!(out.count(SuOutcome::CollidedWithPu), 0);
            }
        }
    }
}
