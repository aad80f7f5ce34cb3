use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bp::{best_response, BeliefVector, RewardTable, TieBreak};
use crate::error::Result;
use crate::prob::sample_index;

use super::dataset::{ObservableTrajectory, ObservedRound};
use super::kernel::{belief_step, KernelContext};
use super::{EnvironmentSpec, InfoVector, MetaPolicy, RoundRecord};

/// A full realization of one episode, hidden parts included.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Index of `z`, drawn once.
    pub confounder: usize,
    /// Grid index of `b_i` per round.
    pub beliefs: Vec<usize>,
    pub rounds: Vec<RoundRecord>,
    pub receiver_rewards: Vec<f64>,
    pub sender_rewards: Vec<f64>,
}

impl Trajectory {
    /// `δ_i`: the first `i` rounds.
    pub fn info_vector(&self, i: usize) -> InfoVector {
        InfoVector::from_rounds(self.rounds[..i].to_vec())
    }

    /// The sender-visible part; drops `z` and the beliefs.
    pub fn observable(&self) -> ObservableTrajectory {
        ObservableTrajectory::new(
            self.rounds
                .iter()
                .zip(&self.receiver_rewards)
                .zip(&self.sender_rewards)
                .map(|((r, &rr), &rs)| ObservedRound {
                    s: r.state,
                    u: r.policy,
                    q: r.signal,
                    a: r.action,
                    rr,
                    rs,
                })
                .collect(),
        )
    }

    pub fn total_sender_reward(&self) -> f64 {
        self.sender_rewards.iter().sum()
    }
}

/// Derives the seed of episode `episode` from a master seed (splitmix64 over
/// the pair), so episodes can be generated in any order.
pub fn episode_seed(master: u64, episode: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(master) ^ episode)
}

/// Receiver best response; same contract and tie rule as
/// [`crate::bp::best_response`].
pub fn receiver_act(belief: &BeliefVector, rewards: &RewardTable, tie: TieBreak) -> Result<usize> {
    best_response(belief.probs(), rewards, tie)
}

/// Simulates one episode.
///
/// The stream is a `ChaCha8Rng` seeded with `seed`. One uniform `f64` is drawn
/// for `z`, then per round, in order, one each for `s_i`, `π_i`, `q_i`, `b_i`;
/// every draw maps to an index by inverse CDF.
pub fn simulate_episode(env: &EnvironmentSpec, meta: &MetaPolicy, seed: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = env.horizon();
    let z = sample_index(env.confounder().initial_dist(), rng.gen::<f64>());
    let mut info = InfoVector::new();
    let mut beliefs = Vec::with_capacity(horizon + 1);
    let mut rr_values = Vec::with_capacity(horizon + 1);
    let mut rs_values = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        let s = sample_index(env.prior().probs(), rng.gen::<f64>());
        let u = sample_index(meta.decide(&info, s)?, rng.gen::<f64>());
        let q = sample_index(env.policies()[u].row(s), rng.gen::<f64>());
        let ctx = match info.last() {
            None => KernelContext::Initial { signal: q, confounder: z, policy: u },
            Some(prev) => KernelContext::Step {
                belief: *beliefs.last().expect("belief recorded each round"),
                receiver_reward: prev.receiver_reward,
                action: prev.action,
                signal: q,
                confounder: z,
                policy: u,
            },
        };
        let b = sample_index(belief_step(env.kernel(), &ctx)?, rng.gen::<f64>());
        let a = env.grid_action(b);
        let rewards = env.rewards();
        let record = RoundRecord {
            state: s,
            policy: u,
            signal: q,
            action: a,
            receiver_reward: rewards.receiver_value_index(s, a),
        };
        beliefs.push(b);
        rr_values.push(rewards.receiver(s, a));
        rs_values.push(rewards.sender(s, a));
        info = info.extended(record);
    }
    Ok(Trajectory {
        confounder: z,
        beliefs,
        rounds: info.rounds().to_vec(),
        receiver_rewards: rr_values,
        sender_rewards: rs_values,
    })
}

/// Mean cumulative sender reward over `n` episodes seeded by
/// [`episode_seed`]. Computed from per-value counts, so the result does not
/// depend on episode order.
pub fn monte_carlo_value(env: &EnvironmentSpec, meta: &MetaPolicy, n: usize, seed: u64) -> Result<f64> {
    let values = env.rewards().sender_values().to_vec();
    let counts = (0..n as u64)
        .into_par_iter()
        .map(|ep| -> Result<Vec<u64>> {
            let traj = simulate_episode(env, meta, episode_seed(seed, ep))?;
            let mut c = vec![0u64; values.len()];
            for &r in &traj.sender_rewards {
                let i = values.iter().position(|&v| v == r).expect("reward in value set");
                c[i] += 1;
            }
            Ok(c)
        })
        .try_reduce(
            || vec![0u64; values.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    if n == 0 {
        return Ok(0.0);
    }
    Ok(values
        .iter()
        .zip(&counts)
        .map(|(v, &c)| v * (c as f64 / n as f64))
        .sum())
}
