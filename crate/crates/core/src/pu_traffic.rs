//! Primary-user occupancy as independent two-state Markov chains, and the
//! secondary user's belief recursion over them.
//!
//! State 0 is busy, state 1 is idle. A belief entry is the conditional
//! probability that the channel is idle in the coming slot.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Per-channel PU transition probabilities `p_ij = P(next = j | now = i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionMatrix {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

impl TransitionMatrix {
    pub fn new(p00: f64, p01: f64, p10: f64, p11: f64) -> Result<Self> {
        let m = Self { p00, p01, p10, p11 };
        let problems = m.violations();
        if let Some(first) = problems.into_iter().next() {
            return Err(Error::config(format!("transition matrix: {}", first.1)));
        }
        Ok(m)
    }

    /// Builds a chain from its two switching probabilities.
    pub fn from_switching(p01: f64, p10: f64) -> Result<Self> {
        Self::new(1.0 - p01, p01, p10, 1.0 - p10)
    }

    /// The symmetric chain used throughout the reference scenarios.
    pub fn reference() -> Self {
        Self {
            p00: 0.8,
            p01: 0.2,
            p10: 0.2,
            p11: 0.8,
        }
    }

    /// Invariant violations as `(field, message)` pairs.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        for (name, v) in [("p00", self.p00), ("p01", self.p01), ("p10", self.p10), ("p11", self.p11)] {
            if !(0.0..=1.0).contains(&v) {
                out.push((name, format!("{name} = {v} is not a probability")));
            }
        }
        let row0 = self.p00 + self.p01;
        if (row0 - 1.0).abs() > ROW_SUM_TOLERANCE {
            out.push(("p01", format!("row sum p00 + p01 = {row0} != 1")));
        }
        let row1 = self.p10 + self.p11;
        if (row1 - 1.0).abs() > ROW_SUM_TOLERANCE {
            out.push(("p11", format!("row sum p10 + p11 = {row1} != 1")));
        }
        out
    }

    /// Next-slot idle probability given the current idle probability.
    #[inline]
    pub fn predict(&self, idle_probability: f64) -> f64 {
        idle_probability * self.p11 + (1.0 - idle_probability) * self.p01
    }
}

/// Stationary idle probability `p01 / (p01 + p10)`.
pub fn stationary_idle_probability(p: &TransitionMatrix) -> Result<f64> {
    let denom = p.p01 + p.p10;
    if denom <= 0.0 {
        return Err(Error::config(
            "absorbing chain (p01 = p10 = 0) has no unique stationary distribution",
        ));
    }
    Ok(p.p01 / denom)
}

/// True busy/idle state of every channel in one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyState {
    idle: Vec<bool>,
}

impl OccupancyState {
    pub fn new(idle: Vec<bool>) -> Self {
        Self { idle }
    }

    pub fn all(channels: usize, idle: bool) -> Self {
        Self {
            idle: vec![idle; channels],
        }
    }

    /// Draws each channel from its stationary distribution, one draw per channel.
    pub fn stationary<R: Rng + ?Sized>(matrices: &[TransitionMatrix], rng: &mut R) -> Result<Self> {
        let mut idle = Vec::with_capacity(matrices.len());
        for p in matrices {
            let pi = stationary_idle_probability(p)?;
            idle.push(rng.random::<f64>() < pi);
        }
        Ok(Self { idle })
    }

    pub fn channels(&self) -> usize {
        self.idle.len()
    }

    pub fn is_idle(&self, channel: usize) -> bool {
        self.idle[channel]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.idle
    }

    pub fn idle_count(&self) -> usize {
        self.idle.iter().filter(|&&b| b).count()
    }
}

/// Advances every channel one slot, consuming exactly one uniform draw per
/// channel in channel order.
pub fn evolve<R: Rng + ?Sized>(
    state: &OccupancyState,
    matrices: &[TransitionMatrix],
    rng: &mut R,
) -> Result<OccupancyState> {
    if matrices.len() != state.channels() {
        return Err(Error::Contract(format!(
            "{} transition matrices for {} channels",
            matrices.len(),
            state.channels()
        )));
    }
    let idle = state
        .idle
        .iter()
        .zip(matrices)
        .map(|(&idle, p)| {
            let u: f64 = rng.random();
            let to_idle = if idle { p.p11 } else { p.p01 };
            u < to_idle
        })
        .collect();
    Ok(OccupancyState { idle })
}

/// Per-channel idle probabilities held by one SU.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector {
    theta: Vec<f64>,
}

impl BeliefVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if let Some((n, v)) = theta.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("belief entry {n} = {v} is not a probability")));
        }
        Ok(Self { theta })
    }

    /// Initial belief: the stationary idle probability of every channel.
    pub fn stationary(matrices: &[TransitionMatrix]) -> Result<Self> {
        let theta = matrices
            .iter()
            .map(stationary_idle_probability)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { theta })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// A sensing result: which channel was sensed and whether it was observed idle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub channel: usize,
    pub idle: bool,
}

fn check_lengths(theta: &BeliefVector, matrices: &[TransitionMatrix], observation: Option<Observation>) -> Result<()> {
    if matrices.len() != theta.len() {
        return Err(Error::Contract(format!(
            "{} transition matrices for a belief over {} channels",
            matrices.len(),
            theta.len()
        )));
    }
    if let Some(obs) = observation {
        if obs.channel >= theta.len() {
            return Err(Error::domain(format!(
                "sensed channel {} out of range for {} channels",
                obs.channel,
                theta.len()
            )));
        }
    }
    Ok(())
}

/// Belief update after error-free sensing.
///
/// The sensed channel jumps to `p11` (observed idle) or `p01` (observed busy);
/// every other channel is propagated one step through its chain.
pub fn belief_update_perfect(
    theta: &BeliefVector,
    observation: Option<Observation>,
    matrices: &[TransitionMatrix],
) -> Result<BeliefVector> {
    check_lengths(theta, matrices, observation)?;
    let next = theta
        .theta
        .iter()
        .zip(matrices)
        .enumerate()
        .map(|(n, (&t, p))| match observation {
            Some(obs) if obs.channel == n => {
                if obs.idle {
                    p.p11
                } else {
                    p.p01
                }
            }
            _ => p.predict(t),
        })
        .collect();
    Ok(BeliefVector { theta: next })
}

/// Bayesian posterior on the sensed channel given a detector with miss
/// probability `p_m` and false-alarm probability `p_f`.
pub fn sensed_posterior(theta: f64, observed_idle: bool, p_m: f64, p_f: f64) -> Option<f64> {
    let (num, denom) = if observed_idle {
        let num = (1.0 - p_f) * theta;
        (num, num + p_m * (1.0 - theta))
    } else {
        let num = p_f * theta;
        (num, num + (1.0 - p_m) * (1.0 - theta))
    };
    if denom > 0.0 {
        Some((num / denom).clamp(0.0, 1.0))
    } else {
        None
    }
}

/// Belief update after error-prone sensing: posterior on the sensed channel,
/// then one-step prediction on every channel.
pub fn belief_update_noisy(
    theta: &BeliefVector,
    observation: Option<Observation>,
    p_m: f64,
    p_f: f64,
    matrices: &[TransitionMatrix],
) -> Result<BeliefVector> {
    for (name, v) in [("p_m", p_m), ("p_f", p_f)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("{name} = {v} is not a probability")));
        }
    }
    check_lengths(theta, matrices, observation)?;
    let mut next = Vec::with_capacity(theta.len());
    for (n, (&t, p)) in theta.theta.iter().zip(matrices).enumerate() {
        let posterior = match observation {
            Some(obs) if obs.channel == n => {
                sensed_posterior(t, obs.idle, p_m, p_f).ok_or(Error::DegenerateObservation { channel: n })?
            }
            _ => t,
        };
        next.push(p.predict(posterior));
    }
    Ok(BeliefVector { theta: next })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference(n: usize) -> Vec<TransitionMatrix> {
        vec![TransitionMatrix::reference(); n]
    }

    #[test]
    fn stationary_fixtures() {
        assert_eq!(stationary_idle_probability(&TransitionMatrix::reference()).unwrap(), 0.5);
        let p = TransitionMatrix::from_switching(0.3, 0.1).unwrap();
        assert!((stationary_idle_probability(&p).unwrap() - 0.75).abs() < 1e-15);
        let p = TransitionMatrix::from_switching(0.0, 0.5).unwrap();
        assert_eq!(stationary_idle_probability(&p).unwrap(), 0.0);
        let p = TransitionMatrix::from_switching(0.0, 0.0).unwrap();
        assert!(matches!(stationary_idle_probability(&p), Err(Error::Config(_))));
    }

    #[test]
    fn matrix_validation() {
        assert!(TransitionMatrix::new(0.8, 0.3, 0.2, 0.8).is_err());
        assert!(TransitionMatrix::new(1.2, -0.2, 0.2, 0.8).is_err());
        assert!(TransitionMatrix::new(0.8, 0.2, 0.2, 0.8).is_ok());
    }

    #[test]
    fn evolve_absorbing_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sticky = vec![TransitionMatrix::from_switching(0.2, 0.0).unwrap(); 3];
        let mut s = OccupancyState::all(3, true);
        for _ in 0..1000 {
            s = evolve(&s, &sticky, &mut rng).unwrap();
        }
        assert_eq!(s.idle_count(), 3);

        let never = vec![TransitionMatrix::from_switching(0.0, 0.4).unwrap(); 4];
        let mut s = OccupancyState::all(4, false);
        for _ in 0..1000 {
            s = evolve(&s, &never, &mut rng).unwrap();
        }
        assert_eq!(s.idle_count(), 0);
    }

    #[test]
    fn evolve_reaches_stationary_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = reference(1);
        let mut s = OccupancyState::all(1, false);
        let steps = 100_000;
        let mut idle = 0;
        for _ in 0..steps {
            s = evolve(&s, &p, &mut rng).unwrap();
            idle += usize::from(s.is_idle(0));
        }
        let frac = idle as f64 / steps as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn perfect_update_fixtures() {
        let p = reference(3);
        let theta = BeliefVector::new(vec![0.3, 0.5, 0.9]).unwrap();
        let next = belief_update_perfect(&theta, Some(Observation { channel: 0, idle: true }), &p).unwrap();
        assert!((next.as_slice()[0] - 0.8).abs() < 1e-15);
        assert!((next.as_slice()[1] - 0.5).abs() < 1e-15);
        let next = belief_update_perfect(&theta, Some(Observation { channel: 2, idle: false }), &p).unwrap();
        assert!((next.as_slice()[2] - 0.2).abs() < 1e-15);
        assert!(belief_update_perfect(&theta, Some(Observation { channel: 3, idle: true }), &p).is_err());
    }

    #[test]
    fn noisy_update_fixtures() {
        let p = reference(2);
        let theta = BeliefVector::new(vec![0.3, 0.5]).unwrap();
        let obs = Some(Observation { channel: 0, idle: true });
        let next = belief_update_noisy(&theta, obs, 0.0, 0.0, &p).unwrap();
        assert!((next.as_slice()[0] - 0.8).abs() < 1e-15);

        // uninformative sensor: posterior equals prior
        let next = belief_update_noisy(&theta, obs, 0.5, 0.5, &p).unwrap();
        assert!((next.as_slice()[0] - p[0].predict(0.3)).abs() < 1e-15);

        let theta = BeliefVector::new(vec![0.5, 0.5]).unwrap();
        let post = sensed_posterior(0.5, true, 0.2, 0.1).unwrap();
        assert!((post - 0.9 / 1.1).abs() < 1e-15);
        let next = belief_update_noisy(&theta, obs, 0.2, 0.1, &p).unwrap();
        assert!((next.as_slice()[0] - 0.690_909_090_909_090_9).abs() < 1e-12);
    }

    #[test]
    fn noisy_update_degenerate_denominator() {
        let p = reference(1);
        let theta = BeliefVector::new(vec![0.0]).unwrap();
        let obs = Some(Observation { channel: 0, idle: true });
        let err = belief_update_noisy(&theta, obs, 0.0, 1.0, &p).unwrap_err();
        assert!(matches!(err, Error::DegenerateObservation { channel: 0 }));
    }

    #[test]
    fn unsensed_updates_converge_geometrically() {
        let p = TransitionMatrix::from_switching(0.3, 0.1).unwrap();
        let pi = stationary_idle_probability(&p).unwrap();
        let rate = (p.p11 - p.p01).abs();
        let mut theta = BeliefVector::new(vec![0.02]).unwrap();
        let start = (0.02 - pi).abs();
        for t in 1..60 {
            theta = belief_update_perfect(&theta, None, &[p]).unwrap();
            let dev = (theta.as_slice()[0] - pi).abs();
            assert!(dev <= rate.powi(t) * start + 1e-15, "t={t}");
        }
    }

    fn matrix_strategy() -> impl Strategy<Value = TransitionMatrix> {
        (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b)| TransitionMatrix::from_switching(a, b).unwrap())
    }

    proptest! {
        #[test]
        fn updates_preserve_probabilities(
            theta in prop::collection::vec(0.0..=1.0f64, 1..8),
            p in matrix_strategy(),
            pm in 0.0..=1.0f64,
            pf in 0.0..=1.0f64,
            pick in any::<prop::sample::Index>(),
            idle in any::<bool>(),
        ) {
            let n = theta.len();
            let matrices = vec![p; n];
            let belief = BeliefVector::new(theta).unwrap();
            let obs = Some(Observation { channel: pick.index(n), idle });
            let next = belief_update_perfect(&belief, obs, &matrices).unwrap();
            prop_assert!(next.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
            if let Ok(next) = belief_update_noisy(&belief, obs, pm, pf, &matrices) {
                prop_assert!(next.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn perfect_sensor_reduces_to_error_free_update(
            theta in prop::collection::vec(0.0..=1.0f64, 1..8),
            p in matrix_strategy(),
            pick in any::<prop::sample::Index>(),
            idle in any::<bool>(),
        ) {
            let n = theta.len();
            let matrices = vec![p; n];
            let channel = pick.index(n);
            let t = theta[channel];
            prop_assume!(if idle { t > 0.0 } else { t < 1.0 });
            let belief = BeliefVector::new(theta).unwrap();
            let obs = Some(Observation { channel, idle });
            let a = belief_update_perfect(&belief, obs, &matrices).unwrap();
            let b = belief_update_noisy(&belief, obs, 0.0, 0.0, &matrices).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
