//! Exact forward computation on the lifted POMDP: trajectory laws, values,
//! reward distributions and population matrices.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ope::{Axis, ConditionalMatrix, HiddenMatrices, MatrixBundle, ObservableLaw, Provenance, SparseMatrix};
use crate::pomdp::{LiftedPomdp, Observation, ObservationStrategy, PomdpState};
use crate::spp::{EnvironmentSpec, InfoVector, KernelContext, MetaPolicy, RoundRecord};

/// Cap on the number of distinct trajectories kept per epoch.
pub const DEFAULT_TRAJECTORY_CAP: usize = 2_000_000;

/// Tolerance for the two value routes inside [`exact_value`].
pub const VALUE_ROUTE_TOL: f64 = 1e-10;

/// `(x_0..=x_t, u_0..u_{t−1})` as indices into their epochs.
pub type FullPath = (Vec<usize>, Vec<usize>);
/// `(y_0..=y_t, u_0..u_{t−1})` as indices into the epochs' observation sets.
pub type ObsPath = (Vec<usize>, Vec<usize>);
/// Observable path with the observations spelled out.
pub type ObservationPath = (Vec<Observation>, Vec<usize>);

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDistribution {
    pub horizon: usize,
    /// `full[t]`: `p^g_t(τ_t)` for `t = 0..=T+1`.
    pub full: Vec<BTreeMap<FullPath, f64>>,
    /// `observable[t]`: `p^{g,o}_t(τ^o_t)`.
    pub observable: Vec<BTreeMap<ObsPath, f64>>,
}

impl TrajectoryDistribution {
    /// `observable[t]` with observation values instead of indices.
    pub fn observation_paths(&self, pomdp: &LiftedPomdp, t: usize) -> BTreeMap<ObservationPath, f64> {
        self.observable[t]
            .iter()
            .map(|((ys, us), &p)| {
                let obs = ys.iter().enumerate().map(|(k, &y)| pomdp.observations[k][y].clone()).collect();
                ((obs, us.clone()), p)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RewardDistribution {
    pub t: usize,
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl RewardDistribution {
    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }
}

pub fn exact_traj_dist<S: ObservationStrategy + ?Sized>(pomdp: &LiftedPomdp, strategy: &S) -> Result<TrajectoryDistribution> {
    exact_traj_dist_with_cap(pomdp, strategy, DEFAULT_TRAJECTORY_CAP)
}

/// `p(τ_{t+1}) = p(x_0) · Π p(u_k | y_k) · Π p(x_{k+1} | x_k, u_k)`, by
/// forward enumeration.
pub fn exact_traj_dist_with_cap<S: ObservationStrategy + ?Sized>(
    pomdp: &LiftedPomdp,
    strategy: &S,
    cap: usize,
) -> Result<TrajectoryDistribution> {
    let mut full: Vec<BTreeMap<FullPath, f64>> = Vec::with_capacity(pomdp.num_epochs());
    full.push(pomdp.initial.iter().map(|&(x, p)| ((vec![x], vec![]), p)).collect());
    for t in 0..=pomdp.horizon {
        let mut next: BTreeMap<FullPath, f64> = BTreeMap::new();
        for ((xs, us), &p) in &full[t] {
            let x = *xs.last().expect("non-empty path");
            let g = strategy.action_dist(pomdp.observation(t, x))?;
            for (u, &gu) in g.iter().enumerate() {
                if gu == 0.0 {
                    continue;
                }
                for &(to, q) in pomdp.transition(t, x, u) {
                    let mut xs2 = xs.clone();
                    xs2.push(to.index);
                    let mut us2 = us.clone();
                    us2.push(u);
                    *next.entry((xs2, us2)).or_insert(0.0) += p * gu * q;
                }
            }
            if next.len() > cap {
                return Err(Error::StateSpaceTooLarge { count: next.len(), cap });
            }
        }
        full.push(next);
    }
    let observable = full
        .iter()
        .map(|layer| {
            let mut m: BTreeMap<ObsPath, f64> = BTreeMap::new();
            for ((xs, us), &p) in layer {
                let ys = xs.iter().enumerate().map(|(k, &x)| pomdp.observation_of[k][x]).collect();
                *m.entry((ys, us.clone())).or_insert(0.0) += p;
            }
            m
        })
        .collect();
    Ok(TrajectoryDistribution { horizon: pomdp.horizon, full, observable })
}

/// `p^g_t(x_t)` for every epoch, by the forward recursion on marginals.
pub fn state_marginals<S: ObservationStrategy + ?Sized>(pomdp: &LiftedPomdp, strategy: &S) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(pomdp.num_epochs());
    let mut p0 = vec![0.0; pomdp.num_states(0)];
    for &(x, p) in &pomdp.initial {
        p0[x] += p;
    }
    out.push(p0);
    for t in 0..=pomdp.horizon {
        let mut next = vec![0.0; pomdp.num_states(t + 1)];
        for (x, &px) in out[t].iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            let g = strategy.action_dist(pomdp.observation(t, x))?;
            for (u, &gu) in g.iter().enumerate() {
                if gu == 0.0 {
                    continue;
                }
                for &(to, q) in pomdp.transition(t, x, u) {
                    next[to.index] += px * gu * q;
                }
            }
        }
        out.push(next);
    }
    Ok(out)
}

fn push_rewards(pomdp: &LiftedPomdp, marginals: &[Vec<f64>]) -> Vec<RewardDistribution> {
    let values = pomdp.sender_values.clone();
    (0..=pomdp.horizon)
        .map(|t| {
            let mut probs = vec![0.0; values.len()];
            for (x2, &p) in marginals[t + 1].iter().enumerate() {
                let r = pomdp.rewards[t][x2];
                probs[values.iter().position(|&v| v == r).expect("reward in value set")] += p;
            }
            RewardDistribution { t, values: values.clone(), probs }
        })
        .collect()
}

/// `p^e(r_t)` for `t = 0..=T`.
pub fn exact_reward_dists<S: ObservationStrategy + ?Sized>(pomdp: &LiftedPomdp, strategy: &S) -> Result<Vec<RewardDistribution>> {
    Ok(push_rewards(pomdp, &state_marginals(pomdp, strategy)?))
}

pub fn exact_reward_dist<S: ObservationStrategy + ?Sized>(pomdp: &LiftedPomdp, strategy: &S, t: usize) -> Result<RewardDistribution> {
    if t > pomdp.horizon {
        return Err(Error::EpochOutOfRange { t, max: pomdp.horizon });
    }
    Ok(exact_reward_dists(pomdp, strategy)?.swap_remove(t))
}

/// `J(g)`: the expectation over complete trajectories, checked against
/// `Σ_t Σ_r r · p(r_t)` from the marginal recursion.
pub fn exact_value<S: ObservationStrategy + ?Sized>(pomdp: &LiftedPomdp, strategy: &S) -> Result<f64> {
    let dist = exact_traj_dist(pomdp, strategy)?;
    let direct: f64 = dist.full[pomdp.horizon + 1]
        .iter()
        .map(|((xs, _), &p)| p * (0..=pomdp.horizon).map(|t| pomdp.rewards[t][xs[t + 1]]).sum::<f64>())
        .sum();
    let via_rewards: f64 = exact_reward_dists(pomdp, strategy)?.iter().map(|d| d.mean()).sum();
    if (direct - via_rewards).abs() > VALUE_ROUTE_TOL {
        return Err(Error::InternalInconsistency(format!(
            "value routes disagree: trajectories {direct}, reward laws {via_rewards}"
        )));
    }
    Ok(via_rewards)
}

/// `J(g)` from the marginal recursion alone (no trajectory enumeration).
pub fn marginal_value<S: ObservationStrategy + ?Sized>(pomdp: &LiftedPomdp, strategy: &S) -> Result<f64> {
    Ok(exact_reward_dists(pomdp, strategy)?.iter().map(|d| d.mean()).sum())
}

/// `(s, a) → ρ^s(s, a)` for every round seen in the lifted state space.
fn reward_table(pomdp: &LiftedPomdp) -> BTreeMap<(usize, usize), f64> {
    let mut m = BTreeMap::new();
    for t in 0..=pomdp.horizon {
        for (x2, st) in pomdp.states[t + 1].iter().enumerate() {
            let r = st.info()[t];
            m.insert((r.state, r.action), pomdp.rewards[t][x2]);
        }
    }
    m
}

/// The exact observable law under `strategy`, as a mass over `δ_{T+1}`.
pub fn population_law<S: ObservationStrategy + ?Sized>(pomdp: &LiftedPomdp, strategy: &S) -> Result<ObservableLaw> {
    let marg = state_marginals(pomdp, strategy)?;
    let last = pomdp.horizon + 1;
    let mut weights: BTreeMap<InfoVector, f64> = BTreeMap::new();
    for (x, &p) in marg[last].iter().enumerate() {
        if p > 0.0 {
            match &pomdp.states[last][x] {
                PomdpState::Final { info, .. } => *weights.entry(info.clone()).or_insert(0.0) += p,
                other => return Err(Error::InternalInconsistency(format!("non-final state {other} at t={last}"))),
            }
        }
    }
    ObservableLaw::new(
        pomdp.horizon,
        pomdp.num_actions,
        pomdp.sender_values.clone(),
        weights,
        reward_table(pomdp),
        Provenance::Population,
    )
}

/// Population bundle under `behavioral`, including `P(X_t | Y_{t−1}, u_t)`.
/// Cells without behavioral mass stay empty (see [`population_matrices`]
/// for the strict variant).
pub fn population_bundle<S: ObservationStrategy + ?Sized>(pomdp: &LiftedPomdp, behavioral: &S) -> Result<MatrixBundle> {
    let marg = state_marginals(pomdp, behavioral)?;
    let bundle = MatrixBundle::from_law(&population_law(pomdp, behavioral)?)?;
    let mut state_given_prev = Vec::with_capacity(pomdp.horizon + 1);
    let mut hidden_counts = Vec::with_capacity(pomdp.num_epochs());
    for layer in &marg {
        hidden_counts.push(layer.iter().filter(|&&p| p > 0.0).count());
    }
    for t in 0..=pomdp.horizon {
        let tt = t as i64;
        let prev = bundle.space(tt - 1);
        let mut per_u = Vec::with_capacity(pomdp.num_actions);
        for u in 0..pomdp.num_actions {
            let mut num = Vec::new();
            let mut den = vec![0.0; prev.len()];
            for (x, &px) in marg[t].iter().enumerate() {
                if px == 0.0 {
                    continue;
                }
                let y = pomdp.observation(t, x);
                let gu = behavioral.action_dist(y)?[u];
                let parent = y.parent().expect("t ≥ 0");
                let j = prev
                    .get_index_of(&parent)
                    .ok_or_else(|| Error::InternalInconsistency(format!("{parent} missing from the population space")))?;
                num.push((x, j, px * gu));
                den[j] += px * gu;
            }
            let trip: Vec<_> =
                num.into_iter().filter(|&(_, j, v)| v > 0.0 && den[j] > 0.0).map(|(x, j, v)| (x, j, v / den[j])).collect();
            per_u.push(ConditionalMatrix {
                name: format!("G_{t}_u{u}"),
                context: format!("P(X_{t} | Y_{}, u_{t}={u})", tt - 1),
                rows: Axis::Hidden(t),
                cols: Axis::Observed(tt - 1),
                matrix: SparseMatrix::from_triplets(pomdp.num_states(t), prev.len(), trip),
            });
        }
        state_given_prev.push(per_u);
    }
    Ok(bundle.with_hidden(HiddenMatrices { state_given_prev, hidden_counts }))
}

/// Exact conditional matrices under a behavioral strategy with full
/// support on every reachable observation.
pub fn population_matrices<S: ObservationStrategy + ?Sized>(pomdp: &LiftedPomdp, behavioral: &S) -> Result<MatrixBundle> {
    let marg = state_marginals(pomdp, behavioral)?;
    for t in 0..=pomdp.horizon {
        for (yi, fiber) in pomdp.fibers[t].iter().enumerate() {
            if fiber.iter().all(|&x| marg[t][x] == 0.0) {
                continue;
            }
            let y = &pomdp.observations[t][yi];
            if let Some(u) = behavioral.action_dist(y)?.iter().position(|&g| g == 0.0) {
                return Err(Error::UnsupportedAction { context: format!("P(y_{t} = {y}, u_{t} = {u}) = 0") });
            }
        }
    }
    population_bundle(pomdp, behavioral)
}

/// `P(x_t, u_t, x_{t+1})` per `t = 0..=T`, summed from complete trajectories.
pub fn pair_joint(dist: &TrajectoryDistribution) -> Vec<BTreeMap<(usize, usize, usize), f64>> {
    let mut out = vec![BTreeMap::new(); dist.horizon + 1];
    for ((xs, us), &p) in &dist.full[dist.horizon + 1] {
        for t in 0..=dist.horizon {
            *out[t].entry((xs[t], us[t], xs[t + 1])).or_insert(0.0) += p;
        }
    }
    out
}

/// The observable-trajectory law of the original process under a
/// meta-policy, by direct enumeration of `z`, states, signals and beliefs.
pub fn spp_observable_dist(env: &EnvironmentSpec, meta: &MetaPolicy) -> Result<Vec<BTreeMap<ObservationPath, f64>>> {
    let mut out = vec![BTreeMap::new(); env.horizon() + 2];
    for (z, &pz) in env.confounder().initial_dist().iter().enumerate() {
        for (s, &ps) in env.prior().probs().iter().enumerate() {
            if pz * ps == 0.0 {
                continue;
            }
            let y0 = Observation::Initial { state: s };
            let mut w = SppWalk { env, meta, out: &mut out, obs: vec![y0], acts: vec![], rounds: vec![] };
            w.record(0, pz * ps);
            w.walk(0, s, None, z, pz * ps)?;
        }
    }
    Ok(out)
}

struct SppWalk<'a> {
    env: &'a EnvironmentSpec,
    meta: &'a MetaPolicy,
    out: &'a mut Vec<BTreeMap<ObservationPath, f64>>,
    obs: Vec<Observation>,
    acts: Vec<usize>,
    rounds: Vec<RoundRecord>,
}

impl SppWalk<'_> {
    fn record(&mut self, t: usize, p: f64) {
        *self.out[t].entry((self.obs.clone(), self.acts.clone())).or_insert(0.0) += p;
    }

    fn walk(&mut self, t: usize, s: usize, b_prev: Option<usize>, z: usize, mass: f64) -> Result<()> {
        let env = self.env;
        let info = InfoVector::from_rounds(self.rounds.clone());
        let g = self.meta.decide(&info, s)?.to_vec();
        for (u, &gu) in g.iter().enumerate() {
            if gu == 0.0 {
                continue;
            }
            for (q, &pq) in env.policies()[u].row(s).iter().enumerate() {
                if pq == 0.0 {
                    continue;
                }
                let ctx = match (self.rounds.last(), b_prev) {
                    (Some(prev), Some(b)) => KernelContext::Step {
                        belief: b,
                        receiver_reward: prev.receiver_reward,
                        action: prev.action,
                        signal: q,
                        confounder: z,
                        policy: u,
                    },
                    _ => KernelContext::Initial { signal: q, confounder: z, policy: u },
                };
                let row = env.kernel().row(&ctx)?.to_vec();
                for (b, &pb) in row.iter().enumerate() {
                    if pb == 0.0 {
                        continue;
                    }
                    let a = env.grid_action(b);
                    self.rounds.push(RoundRecord {
                        state: s,
                        policy: u,
                        signal: q,
                        action: a,
                        receiver_reward: env.rewards().receiver_value_index(s, a),
                    });
                    self.acts.push(u);
                    let p = mass * gu * pq * pb;
                    if t == env.horizon() {
                        self.obs.push(Observation::Final { info: InfoVector::from_rounds(self.rounds.clone()) });
                        self.record(t + 1, p);
                        self.obs.pop();
                    } else {
                        for (s2, &ps) in env.prior().probs().iter().enumerate() {
                            if ps == 0.0 {
                                continue;
                            }
                            self.obs.push(Observation::Mid { info: InfoVector::from_rounds(self.rounds.clone()), state: s2 });
                            self.record(t + 1, p * ps);
                            self.walk(t + 1, s2, Some(b), z, p * ps)?;
                            self.obs.pop();
                        }
                    }
                    self.acts.pop();
                    self.rounds.pop();
                }
            }
        }
        Ok(())
    }
}

/// Total variation between two mass functions over the same key type.
pub fn map_tv<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut s = 0.0;
    for (k, &p) in a {
        s += (p - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &q) in b {
        if !a.contains_key(k) {
            s += q.abs();
        }
    }
    0.5 * s
}
