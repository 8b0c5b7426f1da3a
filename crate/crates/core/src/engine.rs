//! The slotted simulation loop, Monte Carlo replication and the throughput
//! metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    db_to_linear, lognormal_shadow_field, observe_with_mismatch, rayleigh_block_field, LinkGainField,
    MismatchModel,
};
use crate::config::{FadingModel, ScenarioConfig, Window};
use crate::detector::{calibrate_threshold, sense, DetectorProfile};
use crate::error::{Error, Result};
use crate::mac::{resolve_contention, SlotClaims, SuOutcome};
use crate::numerics::QuadratureSpec;
use crate::pu_traffic::{
    belief_update_noisy, belief_update_perfect, evolve, BeliefVector, Observation, OccupancyState,
    TransitionMatrix,
};
use crate::reward::{reward_capacity, MismatchedRewardTable, RewardKind, RewardModel};
use crate::strategy::{select_channel, SuContext};

const STREAM_PU: u64 = 0;
const STREAM_FADING: u64 = 1;
const STREAM_MISMATCH: u64 = 2;
const STREAM_MAC: u64 = 3;
const STREAM_SELECT: u64 = 1 << 32;
const STREAM_SENSE: u64 = 2 << 32;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index` under master seed `seed`.
pub fn replication_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

/// What one SU did in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuSlot {
    pub channel: usize,
    pub observed_idle: bool,
    pub outcome: SuOutcome,
    /// Reward delivered at the true SNR; zero unless the SU transmitted.
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    /// 1-based slot index.
    pub slot: usize,
    pub su: Vec<SuSlot>,
    pub channel_idle: Vec<bool>,
    pub pu_disrupted: Vec<bool>,
}

impl SlotRecord {
    pub fn total_su_reward(&self) -> f64 {
        self.su.iter().map(|s| s.reward).sum()
    }
}

/// How CSI-aided SUs rank channels.
#[derive(Debug, Clone)]
enum SelectionReward {
    Bandwidth,
    Instantaneous,
    Mismatched(MismatchedRewardTable),
}

/// A validated scenario with its precomputed detector and reward table.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    matrices: Vec<TransitionMatrix>,
    reward: RewardModel,
    selection: SelectionReward,
    detector: Option<DetectorProfile>,
    mismatch: Option<MismatchModel>,
    mean_snr: f64,
}

impl Simulation {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        let detector = if config.detector.enabled {
            let d = &config.detector;
            Some(calibrate_threshold(d.nu, d.target_pm, db_to_linear(d.pu_mean_snr_db))?)
        } else {
            None
        };
        Self::with_detector_profile(config, detector)
    }

    /// Like [`Simulation::new`] but with an explicit sensing profile
    /// (`None` for error-free sensing), ignoring the detector section.
    pub fn with_detector_profile(config: &ScenarioConfig, detector: Option<DetectorProfile>) -> Result<Self> {
        config.validate()?;
        let reward = RewardModel::new(config.reward.kind, config.bandwidths(), config.reward.ber_target)?;
        let mean_snr = config.mean_snr();
        let mismatch = if config.mismatch.nmse > 0.0 {
            Some(MismatchModel::new(config.mismatch.nmse, mean_snr)?)
        } else {
            None
        };
        let selection = match (config.reward.kind, mismatch) {
            (RewardKind::Conventional, _) => SelectionReward::Bandwidth,
            (_, None) => SelectionReward::Instantaneous,
            (_, Some(m)) => SelectionReward::Mismatched(MismatchedRewardTable::build(
                &m,
                &reward,
                config.mismatch.density_form,
                &QuadratureSpec::default(),
            )?),
        };
        Ok(Self {
            matrices: config.transition_matrices(),
            config: config.clone(),
            reward,
            selection,
            detector,
            mismatch,
            mean_snr,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn detector(&self) -> Option<&DetectorProfile> {
        self.detector.as_ref()
    }

    fn draw_field(&self, fading: &mut ChaCha8Rng, mismatch: &mut ChaCha8Rng) -> Result<LinkGainField> {
        let c = &self.config;
        let f = &c.fading;
        let field = match f.model {
            FadingModel::RayleighIid => {
                rayleigh_block_field(self.mean_snr, c.su_pairs, c.channels, f.coherence_slots, fading)?
            }
            FadingModel::LognormalCorr => lognormal_shadow_field(
                c.shadowing_rho(),
                f.mean_snr_db,
                f.sigma_db,
                c.su_pairs,
                c.channels,
                f.coherence_slots,
                fading,
            )?,
        };
        match &self.mismatch {
            Some(m) => observe_with_mismatch(&field, m, mismatch),
            None => Ok(field),
        }
    }

    /// Per-SU, per-channel rewards CSI-aided SUs rank by (row-major).
    fn csi_rewards(&self, field: &LinkGainField) -> Vec<f64> {
        let n = self.config.channels;
        let estimates = field.estimate_values();
        (0..estimates.len())
            .map(|i| {
                let ch = i % n;
                match &self.selection {
                    SelectionReward::Bandwidth => self.reward.bandwidth(ch),
                    SelectionReward::Instantaneous => self.reward.rate(ch, estimates[i]),
                    SelectionReward::Mismatched(t) => self.reward.bandwidth(ch) * t.unit_value(estimates[i]),
                }
            })
            .collect()
    }

    /// Runs one episode of the configured strategy.
    pub fn run_episode(&self, replication_seed: u64) -> Result<Vec<SlotRecord>> {
        let c = &self.config;
        let (m_count, n_count) = (c.su_pairs, c.channels);
        let kind = c.strategy.kind;
        let top_l = c.ca_top_l();
        let bandwidths = self.reward.bandwidths().to_vec();

        let mut pu_rng = stream(replication_seed, STREAM_PU);
        let mut fading_rng = stream(replication_seed, STREAM_FADING);
        let mut mismatch_rng = stream(replication_seed, STREAM_MISMATCH);
        let mut mac_rng = stream(replication_seed, STREAM_MAC);
        let mut select_rngs: Vec<ChaCha8Rng> =
            (0..m_count).map(|m| stream(replication_seed, STREAM_SELECT | m as u64)).collect();
        let mut sense_rngs: Vec<ChaCha8Rng> =
            (0..m_count).map(|m| stream(replication_seed, STREAM_SENSE | m as u64)).collect();

        let at = |slot: usize| move |e: Error| Error::Episode { slot, su: None, channel: None, source: Box::new(e) };

        let initial = BeliefVector::stationary(&self.matrices).map_err(at(1))?;
        let mut beliefs = vec![initial; m_count];
        let mut collided = vec![false; m_count];
        let mut last_channel: Vec<Option<usize>> = vec![None; m_count];
        let mut state = OccupancyState::all(n_count, false);
        let mut field: Option<LinkGainField> = None;
        let mut csi_rewards: Vec<f64> = Vec::new();
        let mut records = Vec::with_capacity(c.horizon);

        for t in 1..=c.horizon {
            state = if t == 1 {
                OccupancyState::stationary(&self.matrices, &mut pu_rng)
            } else {
                evolve(&state, &self.matrices, &mut pu_rng)
            }
            .map_err(at(t))?;

            if (t - 1) % c.fading.coherence_slots == 0 {
                let f = self.draw_field(&mut fading_rng, &mut mismatch_rng).map_err(at(t))?;
                if kind.uses_csi() {
                    csi_rewards = self.csi_rewards(&f);
                }
                field = Some(f);
            }
            let field = field.as_ref().expect("drawn at slot 1");

            let mut claims = SlotClaims::new(m_count, n_count);
            let mut chosen = Vec::with_capacity(m_count);
            for m in 0..m_count {
                let rewards = if kind.uses_csi() {
                    &csi_rewards[m * n_count..(m + 1) * n_count]
                } else {
                    &bandwidths[..]
                };
                let ctx = SuContext {
                    belief: beliefs[m].as_slice(),
                    reward_per_channel: rewards,
                    last_slot_collided: collided[m],
                    last_slot_channel: last_channel[m],
                };
                let ch = select_channel(kind, &ctx, top_l, &mut select_rngs[m]).map_err(|e| Error::Episode {
                    slot: t,
                    su: Some(m),
                    channel: None,
                    source: Box::new(e),
                })?;
                let profile = self.detector.unwrap_or_else(DetectorProfile::perfect);
                let observed_idle = sense(state.is_idle(ch), &profile, &mut sense_rngs[m]);
                if observed_idle {
                    claims.claim(ch, m).map_err(at(t))?;
                }
                chosen.push((ch, observed_idle));
            }

            let outcome = resolve_contention(&claims, &state, &mut mac_rng).map_err(at(t))?;

            let mut su = Vec::with_capacity(m_count);
            for m in 0..m_count {
                let (ch, observed_idle) = chosen[m];
                let result = outcome.per_su[m];
                let reward = if result == SuOutcome::Transmitted {
                    self.reward.rate(ch, field.snr(m, ch))
                } else {
                    0.0
                };
                let obs = Some(Observation { channel: ch, idle: observed_idle });
                let updated = match &self.detector {
                    Some(p) => belief_update_noisy(&beliefs[m], obs, p.p_m, p.p_f, &self.matrices),
                    None => belief_update_perfect(&beliefs[m], obs, &self.matrices),
                };
                beliefs[m] = updated.map_err(|e| Error::Episode {
                    slot: t,
                    su: Some(m),
                    channel: Some(ch),
                    source: Box::new(e),
                })?;
                collided[m] = result == SuOutcome::LostContention;
                last_channel[m] = Some(ch);
                su.push(SuSlot { channel: ch, observed_idle, outcome: result, reward });
            }
            records.push(SlotRecord {
                slot: t,
                su,
                channel_idle: state.as_slice().to_vec(),
                pu_disrupted: outcome.pu_disrupted,
            });
        }
        Ok(records)
    }

    /// Reduces one episode to the quantities aggregated across replications.
    pub fn summarize(&self, records: &[SlotRecord]) -> EpisodeSummary {
        let c = &self.config;
        let throughput = metric_avg_normalized_throughput(records, c.metrics.window, c.su_pairs);
        let tail = c.tail_slots().min(records.len());
        let tail_throughput = if tail == 0 {
            0.0
        } else {
            records[records.len() - tail..].iter().map(SlotRecord::total_su_reward).sum::<f64>()
                / (tail * c.su_pairs) as f64
        };
        let spectral_efficiency = metric_overall_spectral_efficiency(
            records,
            self.reward.bandwidths(),
            db_to_linear(c.metrics.pu_nominal_snr_db),
        );
        EpisodeSummary { throughput, tail_throughput, spectral_efficiency }
    }
}

/// Per-episode metric values.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub throughput: Vec<f64>,
    pub tail_throughput: f64,
    pub spectral_efficiency: f64,
}

/// Delivered SU reward per slot per SU pair, averaged over `window`.
pub fn metric_avg_normalized_throughput(records: &[SlotRecord], window: Window, su_pairs: usize) -> Vec<f64> {
    let totals: Vec<f64> = records.iter().map(SlotRecord::total_su_reward).collect();
    let mut prefix = Vec::with_capacity(totals.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in &totals {
        acc += v;
        prefix.push(acc);
    }
    (1..=totals.len())
        .map(|t| {
            let len = match window {
                Window::Cumulative => t,
                Window::Trailing(k) => k.min(t),
            };
            let sum = if len == t { prefix[t] } else { totals[t - len..t].iter().sum() };
            sum / (len * su_pairs) as f64
        })
        .collect()
}

/// Combined SU and PU delivered rate per channel per slot.
///
/// A busy channel whose PU was not disrupted delivers `B log2(1 + γ_pu)`.
pub fn metric_overall_spectral_efficiency(records: &[SlotRecord], bandwidths: &[f64], pu_nominal_snr: f64) -> f64 {
    if records.is_empty() || bandwidths.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for r in records {
        total += r.total_su_reward();
        for (ch, (&idle, &hit)) in r.channel_idle.iter().zip(&r.pu_disrupted).enumerate() {
            if !idle && !hit {
                total += reward_capacity(bandwidths[ch], pu_nominal_snr).unwrap_or(0.0);
            }
        }
    }
    total / (records.len() * bandwidths.len()) as f64
}

/// Mean and standard error across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(samples: impl Iterator<Item = f64> + Clone) -> Self {
        let n = samples.clone().count();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN };
        }
        let mean = samples.clone().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, stderr: 0.0 };
        }
        let ss: f64 = samples.map(|x| (x - mean) * (x - mean)).sum();
        Self { mean, stderr: (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSeries {
    /// Average normalised throughput at every slot.
    pub throughput: Vec<Estimate>,
    pub window: Window,
    /// Throughput averaged over the last `tail_slots` slots.
    pub tail_throughput: Estimate,
    pub tail_slots: usize,
    pub spectral_efficiency: Estimate,
    pub replications: usize,
}

impl MetricsSeries {
    pub fn aggregate(episodes: &[EpisodeSummary], window: Window, tail_slots: usize) -> Self {
        let horizon = episodes.first().map_or(0, |e| e.throughput.len());
        let throughput = (0..horizon)
            .map(|t| Estimate::from_samples(episodes.iter().map(move |e| e.throughput[t])))
            .collect();
        Self {
            throughput,
            window,
            tail_throughput: Estimate::from_samples(episodes.iter().map(|e| e.tail_throughput)),
            tail_slots,
            spectral_efficiency: Estimate::from_samples(episodes.iter().map(|e| e.spectral_efficiency)),
            replications: episodes.len(),
        }
    }

    /// Throughput at the final slot.
    pub fn final_throughput(&self) -> Estimate {
        *self.throughput.last().expect("horizon >= 1")
    }
}

/// How replications are scheduled. Results do not depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Data-parallel over replications; `threads` caps the worker count.
    /// Without the `parallel` feature this runs sequentially.
    Parallel { threads: Option<usize> },
}

impl Execution {
    /// Parallel, capped by `CRSENSE_THREADS` when it is set to a positive integer.
    pub fn from_env() -> Self {
        let threads = std::env::var("CRSENSE_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0);
        Execution::Parallel { threads }
    }
}

impl Default for Execution {
    fn default() -> Self {
        Execution::from_env()
    }
}

fn replicate(sim: &Simulation, index: usize) -> Result<EpisodeSummary> {
    let seed = replication_seed(sim.config.seed, index);
    sim.run_episode(seed)
        .map(|records| sim.summarize(&records))
        .map_err(|e| Error::Replication { index, source: Box::new(e) })
}

fn first_error(results: Vec<Result<EpisodeSummary>>) -> Result<Vec<EpisodeSummary>> {
    results.into_iter().collect()
}

#[cfg(feature = "parallel")]
fn run_parallel(sim: &Simulation, threads: Option<usize>) -> Result<Vec<EpisodeSummary>> {
    use rayon::prelude::*;
    let work = || -> Vec<Result<EpisodeSummary>> {
        (0..sim.config.replications).into_par_iter().map(|i| replicate(sim, i)).collect()
    };
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(work),
        None => work(),
    };
    first_error(results)
}

#[cfg(not(feature = "parallel"))]
fn run_parallel(sim: &Simulation, _threads: Option<usize>) -> Result<Vec<EpisodeSummary>> {
    run_sequential(sim)
}

fn run_sequential(sim: &Simulation) -> Result<Vec<EpisodeSummary>> {
    first_error((0..sim.config.replications).map(|i| replicate(sim, i)).collect())
}

impl Simulation {
    /// All replications' summaries, in replication order.
    pub fn run_replications(&self, execution: Execution) -> Result<Vec<EpisodeSummary>> {
        match execution {
            Execution::Sequential => run_sequential(self),
            Execution::Parallel { threads } => run_parallel(self, threads),
        }
    }

    pub fn run_monte_carlo(&self, execution: Execution) -> Result<MetricsSeries> {
        let episodes = self.run_replications(execution)?;
        Ok(MetricsSeries::aggregate(&episodes, self.config.metrics.window, self.config.tail_slots()))
    }
}

/// Builds the scenario and runs every replication with [`Execution::from_env`].
pub fn run_monte_carlo(config: &ScenarioConfig) -> Result<MetricsSeries> {
    Simulation::new(config)?.run_monte_carlo(Execution::from_env())
}

/// Convenience wrapper around [`Simulation::run_episode`].
pub fn run_episode(config: &ScenarioConfig, replication_seed: u64) -> Result<Vec<SlotRecord>> {
    Simulation::new(config)?.run_episode(replication_seed)
}
