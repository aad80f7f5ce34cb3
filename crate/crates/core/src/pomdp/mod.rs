//! The sequential process recast as a finite-horizon POMDP over epochs
//! `t = 0..=T+1`, with hidden state `x_t = (δ_t, s_t, b_{t−1}, z)` and
//! observation `y_t = (δ_t, s_t)`.

mod strategy;
mod validate;

pub use strategy::{lift_meta_policy, lower_meta_policy, ControlStrategy, ObservationStrategy};
pub use validate::{validate_markov, validate_time_disjointness, DisjointnessReport, MarkovReport};

use std::io::Write;

use indexmap::IndexSet;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spp::{EnvironmentSpec, InfoVector, KernelContext, RoundRecord};

/// Default cap on `Σ_t |𝒳_t|`.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Hidden state, tagged by epoch through its variant and history length.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PomdpState {
    /// `t = 0`: `(b_{−1}, s_0, z)`.
    Initial { belief_prev: usize, state: usize, confounder: usize },
    /// `1 ≤ t ≤ T`: `(δ_t, s_t, b_{t−1}, z)`.
    Mid { info: InfoVector, state: usize, belief_prev: usize, confounder: usize },
    /// `t = T+1`: `(δ_{T+1}, b_T)`.
    Final { info: InfoVector, belief: usize },
}

impl PomdpState {
    pub fn observation(&self) -> Observation {
        match self {
            PomdpState::Initial { state, .. } => Observation::Initial { state: *state },
            PomdpState::Mid { info, state, .. } => Observation::Mid { info: info.clone(), state: *state },
            PomdpState::Final { info, .. } => Observation::Final { info: info.clone() },
        }
    }

    /// Epoch implied by the variant and history length.
    pub fn time(&self) -> usize {
        match self {
            PomdpState::Initial { .. } => 0,
            PomdpState::Mid { info, .. } | PomdpState::Final { info, .. } => info.len(),
        }
    }

    pub fn info(&self) -> &[RoundRecord] {
        match self {
            PomdpState::Initial { .. } => &[],
            PomdpState::Mid { info, .. } | PomdpState::Final { info, .. } => info.rounds(),
        }
    }
}

impl std::fmt::Display for PomdpState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PomdpState::Initial { belief_prev, state, confounder } => {
                write!(f, "x0(b={belief_prev},s={state},z={confounder})")
            }
            PomdpState::Mid { info, state, belief_prev, confounder } => {
                write!(f, "x{}({info},s={state},b={belief_prev},z={confounder})", info.len())
            }
            PomdpState::Final { info, belief } => write!(f, "x{}({info},b={belief})", info.len()),
        }
    }
}

/// Sender observation: the hidden state with `b` and `z` removed, plus the
/// pre-initial token `y_{−1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Observation {
    PreInitial,
    Initial { state: usize },
    Mid { info: InfoVector, state: usize },
    Final { info: InfoVector },
}

impl Observation {
    /// `y_t` of a full history `δ_{T+1}` (`rounds.len() == T + 1`), for
    /// `t = 0..=T+1`.
    pub fn of_history(rounds: &[RoundRecord], t: usize) -> Self {
        let horizon_plus_one = rounds.len();
        if t == horizon_plus_one {
            Observation::Final { info: InfoVector::from_rounds(rounds.to_vec()) }
        } else if t == 0 {
            Observation::Initial { state: rounds[0].state }
        } else {
            Observation::Mid { info: InfoVector::from_rounds(rounds[..t].to_vec()), state: rounds[t].state }
        }
    }

    /// `None` for `y_{−1}`.
    pub fn time(&self) -> Option<usize> {
        match self {
            Observation::PreInitial => None,
            Observation::Initial { .. } => Some(0),
            Observation::Mid { info, .. } | Observation::Final { info } => Some(info.len()),
        }
    }

    pub fn history(&self) -> &[RoundRecord] {
        match self {
            Observation::PreInitial | Observation::Initial { .. } => &[],
            Observation::Mid { info, .. } | Observation::Final { info } => info.rounds(),
        }
    }

    pub fn state(&self) -> Option<usize> {
        match self {
            Observation::Initial { state } | Observation::Mid { state, .. } => Some(*state),
            _ => None,
        }
    }

    /// `u_{t−1}`, embedded in `δ_t`.
    pub fn last_action(&self) -> Option<usize> {
        self.history().last().map(|r| r.policy)
    }

    /// `y_{t−1}`; `y_0`'s parent is `y_{−1}`.
    pub fn parent(&self) -> Option<Observation> {
        match self {
            Observation::PreInitial => None,
            Observation::Initial { .. } => Some(Observation::PreInitial),
            Observation::Mid { info, .. } | Observation::Final { info } => {
                let r = info.rounds();
                let t = r.len();
                Some(if t == 1 {
                    Observation::Initial { state: r[0].state }
                } else {
                    Observation::Mid { info: info.prefix(t - 1), state: r[t - 1].state }
                })
            }
        }
    }
}

impl std::fmt::Display for Observation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Observation::PreInitial => write!(f, "y-1"),
            Observation::Initial { state } => write!(f, "y0(s={state})"),
            Observation::Mid { info, state } => write!(f, "y{}({info},s={state})", info.len()),
            Observation::Final { info } => write!(f, "y{}({info})", info.len()),
        }
    }
}

/// Index of a state within its epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId {
    pub time: usize,
    pub index: usize,
}

/// The reachable part of the lifted POMDP.
///
/// `transitions[t][x][u]` lists `(x', p)` with `x' ∈ 𝒳_{t+1}` for
/// `t = 0..=T`; `rewards[t][x']` is `r_t(x')`.
#[derive(Debug, Clone)]
pub struct LiftedPomdp {
    pub horizon: usize,
    pub num_actions: usize,
    pub environment_hash: String,
    pub states: Vec<IndexSet<PomdpState>>,
    pub observations: Vec<IndexSet<Observation>>,
    pub observation_of: Vec<Vec<usize>>,
    pub fibers: Vec<Vec<Vec<usize>>>,
    pub initial: Vec<(usize, f64)>,
    pub transitions: Vec<Vec<Vec<Vec<(StateId, f64)>>>>,
    pub rewards: Vec<Vec<f64>>,
    pub sender_values: Vec<f64>,
}

impl LiftedPomdp {
    pub fn num_epochs(&self) -> usize {
        self.horizon + 2
    }

    pub fn num_states(&self, t: usize) -> usize {
        self.states[t].len()
    }

    pub fn total_states(&self) -> usize {
        self.states.iter().map(|s| s.len()).sum()
    }

    pub fn state(&self, t: usize, x: usize) -> &PomdpState {
        &self.states[t][x]
    }

    pub fn observation(&self, t: usize, x: usize) -> &Observation {
        &self.observations[t][self.observation_of[t][x]]
    }

    pub fn transition(&self, t: usize, x: usize, u: usize) -> &[(StateId, f64)] {
        &self.transitions[t][x][u]
    }

    /// Diagnostic text: per-epoch sizes then one line per kernel entry.
    pub fn dump(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# lifted pomdp, environment {}", self.environment_hash)?;
        writeln!(w, "horizon {} actions {}", self.horizon, self.num_actions)?;
        for t in 0..self.num_epochs() {
            writeln!(w, "t {t} states {} observations {}", self.states[t].len(), self.observations[t].len())?;
        }
        for &(x, p) in &self.initial {
            writeln!(w, "init {} {p:.17}", self.states[0][x])?;
        }
        for (t, layer) in self.transitions.iter().enumerate() {
            for (x, per_u) in layer.iter().enumerate() {
                for (u, row) in per_u.iter().enumerate() {
                    for &(to, p) in row {
                        writeln!(
                            w,
                            "{t} {} u={u} -> {} p={p:.17} r={}",
                            self.states[t][x],
                            self.states[to.time][to.index],
                            self.rewards[t][to.index]
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Builds the lifted POMDP with the default size cap.
pub fn build_pomdp(env: &EnvironmentSpec) -> Result<LiftedPomdp> {
    build_pomdp_with_cap(env, DEFAULT_STATE_CAP)
}

/// Forward closure from the initial states over every action sequence.
pub fn build_pomdp_with_cap(env: &EnvironmentSpec, cap: usize) -> Result<LiftedPomdp> {
    let horizon = env.horizon();
    let num_actions = env.num_policies();
    let mu = env.prior().probs();
    let eta = env.confounder().initial_dist();
    let uniform = env.grid().uniform_index();

    let mut states: Vec<IndexSet<PomdpState>> = Vec::with_capacity(horizon + 2);
    let mut initial_layer = IndexSet::new();
    let mut initial = Vec::new();
    for (z, &pz) in eta.iter().enumerate() {
        for (s, &ps) in mu.iter().enumerate() {
            if pz > 0.0 && ps > 0.0 {
                let (i, _) = initial_layer.insert_full(PomdpState::Initial {
                    belief_prev: uniform,
                    state: s,
                    confounder: z,
                });
                initial.push((i, pz * ps));
            }
        }
    }
    let mut total = initial_layer.len();
    states.push(initial_layer);

    let mut transitions = Vec::with_capacity(horizon + 1);
    let mut rewards = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let layer = &states[t];
        let successors: Vec<Vec<Vec<(PomdpState, f64)>>> = layer
            .par_iter()
            .map(|x| (0..num_actions).map(|u| successors(env, x, u, t == horizon)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let mut next: IndexSet<PomdpState> = IndexSet::new();
        let mut layer_rows = Vec::with_capacity(successors.len());
        for per_u in successors {
            let mut rows = Vec::with_capacity(num_actions);
            for row in per_u {
                let mut out: Vec<(StateId, f64)> = Vec::with_capacity(row.len());
                for (x2, p) in row {
                    let (index, fresh) = next.insert_full(x2);
                    if fresh {
                        total += 1;
                        if total > cap {
                            return Err(Error::StateSpaceTooLarge { count: total, cap });
                        }
                    }
                    out.push((StateId { time: t + 1, index }, p));
                }
                rows.push(out);
            }
            layer_rows.push(rows);
        }
        let layer_rewards = next
            .iter()
            .map(|x2| {
                let rec = x2.info().last().expect("states after t = 0 carry a history");
                env.rewards().sender(rec.state, rec.action)
            })
            .collect();
        transitions.push(layer_rows);
        rewards.push(layer_rewards);
        states.push(next);
    }

    let mut observations = Vec::with_capacity(states.len());
    let mut observation_of = Vec::with_capacity(states.len());
    let mut fibers = Vec::with_capacity(states.len());
    for layer in &states {
        let mut obs: IndexSet<Observation> = IndexSet::new();
        let mut of = Vec::with_capacity(layer.len());
        let mut fib: Vec<Vec<usize>> = Vec::new();
        for (x, st) in layer.iter().enumerate() {
            let (i, fresh) = obs.insert_full(st.observation());
            if fresh {
                fib.push(Vec::new());
            }
            fib[i].push(x);
            of.push(i);
        }
        observations.push(obs);
        observation_of.push(of);
        fibers.push(fib);
    }

    Ok(LiftedPomdp {
        horizon,
        num_actions,
        environment_hash: env.hash().to_string(),
        states,
        observations,
        observation_of,
        fibers,
        initial,
        transitions,
        rewards,
        sender_values: env.rewards().sender_values().to_vec(),
    })
}

/// `p(x_{t+1} | x_t, u)`: signal, belief, best response, then the next state
/// (or the final state at `t = T`).
fn successors(env: &EnvironmentSpec, x: &PomdpState, u: usize, last: bool) -> Result<Vec<(PomdpState, f64)>> {
    let (info, s, belief_prev, z) = match x {
        PomdpState::Initial { belief_prev, state, confounder } => (InfoVector::new(), *state, *belief_prev, *confounder),
        PomdpState::Mid { info, state, belief_prev, confounder } => (info.clone(), *state, *belief_prev, *confounder),
        PomdpState::Final { .. } => return Err(Error::InternalInconsistency("no transitions out of the final epoch".into())),
    };
    let mut out = Vec::new();
    for (q, &pq) in env.policies()[u].row(s).iter().enumerate() {
        if pq <= 0.0 {
            continue;
        }
        let ctx = match info.last() {
            None => KernelContext::Initial { signal: q, confounder: z, policy: u },
            Some(prev) => KernelContext::Step {
                belief: belief_prev,
                receiver_reward: prev.receiver_reward,
                action: prev.action,
                signal: q,
                confounder: z,
                policy: u,
            },
        };
        let row = env.kernel().row(&ctx)?;
        for (b, &pb) in row.iter().enumerate() {
            if pb <= 0.0 {
                continue;
            }
            let a = env.grid_action(b);
            let record = RoundRecord {
                state: s,
                policy: u,
                signal: q,
                action: a,
                receiver_reward: env.rewards().receiver_value_index(s, a),
            };
            let next_info = info.extended(record);
            if last {
                out.push((PomdpState::Final { info: next_info, belief: b }, pq * pb));
            } else {
                for (s2, &ps) in env.prior().probs().iter().enumerate() {
                    if ps > 0.0 {
                        out.push((
                            PomdpState::Mid { info: next_info.clone(), state: s2, belief_prev: b, confounder: z },
                            pq * pb * ps,
                        ));
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn degenerate_pomdp_is_a_single_chain() {
        let env = EnvironmentSpec::from_config(presets::degenerate(0, 1.0)).unwrap();
        let p = build_pomdp(&env).unwrap();
        assert_eq!(p.num_states(0), 1);
        assert_eq!(p.num_states(1), 1);
        assert_eq!(p.transition(0, 0, 0), &[(StateId { time: 1, index: 0 }, 1.0)]);
    }

    #[test]
    fn rows_are_stochastic() {
        for confounded in [false, true] {
            let env = EnvironmentSpec::from_config(presets::e2(confounded, 1)).unwrap();
            let p = build_pomdp(&env).unwrap();
            let init: f64 = p.initial.iter().map(|(_, q)| q).sum();
            assert!((init - 1.0).abs() <= 1e-10);
            for layer in &p.transitions {
                for per_u in layer {
                    for row in per_u {
                        let s: f64 = row.iter().map(|(_, q)| q).sum();
                        assert!((s - 1.0).abs() <= 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn observation_is_a_projection_and_rewards_follow_the_tail() {
        let env = EnvironmentSpec::from_config(presets::e2(true, 2)).unwrap();
        let p = build_pomdp(&env).unwrap();
        for t in 0..p.num_epochs() {
            for (x, st) in p.states[t].iter().enumerate() {
                assert_eq!(st.time(), t);
                assert_eq!(p.observation(t, x), &st.observation());
                assert_eq!(st.observation().time(), Some(t));
            }
        }
        for t in 0..=p.horizon {
            for (x2, st) in p.states[t + 1].iter().enumerate() {
                let r = st.info()[t];
                assert_eq!(p.rewards[t][x2], env.rewards().sender(r.state, r.action));
            }
        }
    }

    #[test]
    fn parent_strips_the_last_round() {
        let r0 = RoundRecord { state: 1, policy: 0, signal: 1, action: 1, receiver_reward: 1 };
        let r1 = RoundRecord { state: 0, policy: 1, signal: 0, action: 0, receiver_reward: 1 };
        let full = [r0, r1];
        let y2 = Observation::of_history(&full, 2);
        assert_eq!(y2.parent(), Some(Observation::of_history(&full, 1)));
        assert_eq!(Observation::of_history(&full, 1).parent(), Some(Observation::Initial { state: 1 }));
        assert_eq!(Observation::Initial { state: 1 }.parent(), Some(Observation::PreInitial));
        assert_eq!(y2.last_action(), Some(1));
    }

    #[test]
    fn size_guard_reports_count() {
        let env = EnvironmentSpec::from_config(presets::e2(true, 2)).unwrap();
        match build_pomdp_with_cap(&env, 10) {
            Err(Error::StateSpaceTooLarge { count, cap }) => {
                assert_eq!(cap, 10);
                assert!(count > 10);
            }
            other => panic!("expected size guard, got {other:?}"),
        }
    }
}
