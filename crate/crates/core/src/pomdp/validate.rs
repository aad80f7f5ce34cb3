use std::collections::{BTreeMap, HashMap};

use crate::error::Result;
use crate::spp::{EnvironmentSpec, InfoVector, KernelContext, RoundRecord};

use super::{LiftedPomdp, PomdpState, StateId};

#[derive(Debug, Clone, PartialEq)]
pub struct WorstHistory {
    pub t: usize,
    /// `x_0, …, x_t` as indices into their epochs.
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovReport {
    pub max_gap: f64,
    pub histories_checked: usize,
    pub worst: Option<WorstHistory>,
}

type HistoryKey = (Vec<usize>, Vec<usize>);

struct Enumerator<'a> {
    env: &'a EnvironmentSpec,
    pomdp: &'a LiftedPomdp,
    /// Per epoch: (x_{0:t}, u_{0:t}) → x_{t+1} → p(x_{0:t+1} | do u_{0:t}).
    joint: Vec<HashMap<HistoryKey, BTreeMap<usize, f64>>>,
    unknown: Option<(usize, HistoryKey, String)>,
}

impl Enumerator<'_> {
    /// Walks every primitive draw `(q_t, b_t, s_{t+1})` from the current
    /// hidden configuration under every action.
    #[allow(clippy::too_many_arguments)]
    fn walk(
        &mut self,
        t: usize,
        xs: &mut Vec<usize>,
        us: &mut Vec<usize>,
        mass: f64,
        info: &InfoVector,
        s: usize,
        b_prev: Option<usize>,
        z: usize,
    ) -> Result<()> {
        let env = self.env;
        let horizon = env.horizon();
        for u in 0..env.num_policies() {
            us.push(u);
            for q in 0..env.num_signals() {
                let pq = env.policies()[u].prob(s, q);
                if pq == 0.0 {
                    continue;
                }
                let ctx = match (info.last(), b_prev) {
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
                    let rec = RoundRecord {
                        state: s,
                        policy: u,
                        signal: q,
                        action: a,
                        receiver_reward: env.rewards().receiver_value_index(s, a),
                    };
                    let next_info = info.extended(rec);
                    if t == horizon {
                        let x2 = PomdpState::Final { info: next_info, belief: b };
                        self.record(t, xs, us, &x2, mass * pq * pb);
                        continue;
                    }
                    for s2 in 0..env.num_states() {
                        let ps = env.prior().probs()[s2];
                        if ps == 0.0 {
                            continue;
                        }
                        let x2 = PomdpState::Mid {
                            info: next_info.clone(),
                            state: s2,
                            belief_prev: b,
                            confounder: z,
                        };
                        let p = mass * pq * pb * ps;
                        if let Some(i2) = self.record(t, xs, us, &x2, p) {
                            xs.push(i2);
                            self.walk(t + 1, xs, us, p, &next_info, s2, Some(b), z)?;
                            xs.pop();
                        }
                    }
                }
            }
            us.pop();
        }
        Ok(())
    }

    fn record(&mut self, t: usize, xs: &[usize], us: &[usize], x2: &PomdpState, p: f64) -> Option<usize> {
        match self.pomdp.states[t + 1].get_index_of(x2) {
            Some(i2) => {
                *self.joint[t]
                    .entry((xs.to_vec(), us.to_vec()))
                    .or_default()
                    .entry(i2)
                    .or_insert(0.0) += p;
                Some(i2)
            }
            None => {
                if self.unknown.is_none() {
                    self.unknown = Some((t, (xs.to_vec(), us.to_vec()), x2.to_string()));
                }
                None
            }
        }
    }
}

/// Enumerates the generative process directly and compares
/// `p(x_{t+1} | x_{0:t}, u_{0:t})` with the kernel row `p(x_{t+1} | x_t, u_t)`
/// for every positive-probability history, in total variation.
///
/// Actions enter as interventions, so every action sequence is covered. A
/// generated state missing from the lifted space counts as a gap of 1.
pub fn validate_markov(env: &EnvironmentSpec, pomdp: &LiftedPomdp) -> Result<MarkovReport> {
    let mut e = Enumerator {
        env,
        pomdp,
        joint: vec![HashMap::new(); env.horizon() + 1],
        unknown: None,
    };
    let uniform = env.grid().uniform_index();
    for (z, &pz) in env.confounder().initial_dist().iter().enumerate() {
        for (s, &ps) in env.prior().probs().iter().enumerate() {
            if pz == 0.0 || ps == 0.0 {
                continue;
            }
            let x0 = PomdpState::Initial { belief_prev: uniform, state: s, confounder: z };
            let Some(i0) = pomdp.states[0].get_index_of(&x0) else {
                return Ok(MarkovReport {
                    max_gap: 1.0,
                    histories_checked: 0,
                    worst: Some(WorstHistory {
                        t: 0,
                        states: vec![],
                        actions: vec![],
                        description: format!("initial state {x0} missing from the lifted space"),
                    }),
                });
            };
            e.walk(0, &mut vec![i0], &mut Vec::new(), pz * ps, &InfoVector::new(), s, None, z)?;
        }
    }

    let mut report = MarkovReport { max_gap: 0.0, histories_checked: 0, worst: None };
    if let Some((t, (xs, us), desc)) = e.unknown.take() {
        report.max_gap = 1.0;
        report.worst = Some(WorstHistory {
            t,
            states: xs,
            actions: us,
            description: format!("generated state {desc} missing from the lifted space"),
        });
    }
    for (t, buckets) in e.joint.iter().enumerate() {
        let mut keys: Vec<&HistoryKey> = buckets.keys().collect();
        keys.sort();
        for key in keys {
            let next = &buckets[key];
            let total: f64 = next.values().sum();
            if total <= 0.0 {
                continue;
            }
            report.histories_checked += 1;
            let x = *key.0.last().expect("history is non-empty");
            let u = *key.1.last().expect("history has an action");
            let mut kernel: BTreeMap<usize, f64> = BTreeMap::new();
            for &(to, p) in pomdp.transition(t, x, u) {
                let idx = if to.time == t + 1 { to.index } else { usize::MAX };
                *kernel.entry(idx).or_insert(0.0) += p;
            }
            let mut gap = 0.0;
            for (&i, &k) in &kernel {
                let c = next.get(&i).copied().unwrap_or(0.0) / total;
                gap += (c - k).abs();
            }
            for (&i, &v) in next {
                if !kernel.contains_key(&i) {
                    gap += v / total;
                }
            }
            gap *= 0.5;
            if gap > report.max_gap {
                report.max_gap = gap;
                report.worst = Some(WorstHistory {
                    t,
                    states: key.0.clone(),
                    actions: key.1.clone(),
                    description: format!(
                        "row t={t} x={} u={u}: TV {gap:.3e}",
                        pomdp.states[t][x]
                    ),
                });
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisjointnessReport {
    pub ok: bool,
    pub offending: Vec<String>,
}

/// Checks that transitions only go from epoch `t` to `t + 1` and that state
/// and observation spaces of distinct epochs never share an element.
pub fn validate_time_disjointness(pomdp: &LiftedPomdp) -> DisjointnessReport {
    let mut offending = Vec::new();
    for (t, layer) in pomdp.transitions.iter().enumerate() {
        for (x, per_u) in layer.iter().enumerate() {
            for (u, row) in per_u.iter().enumerate() {
                for &(StateId { time, index }, p) in row {
                    if p > 0.0 && time != t + 1 {
                        offending.push(format!(
                            "transition (t={t}, x={x}, u={u}) -> (t={time}, x={index}) with p={p}"
                        ));
                    }
                }
            }
        }
    }
    let mut seen: HashMap<&PomdpState, usize> = HashMap::new();
    for (t, layer) in pomdp.states.iter().enumerate() {
        for st in layer {
            if st.time() != t {
                offending.push(format!("state {st} stored at t={t}"));
            }
            if let Some(t0) = seen.insert(st, t) {
                if t0 != t {
                    offending.push(format!("state {st} in both t={t0} and t={t}"));
                }
            }
        }
    }
    let mut seen_obs = HashMap::new();
    for (t, layer) in pomdp.observations.iter().enumerate() {
        for y in layer {
            if let Some(t0) = seen_obs.insert(y, t) {
                if t0 != t {
                    offending.push(format!("observation {y} in both t={t0} and t={t}"));
                }
            }
        }
    }
    DisjointnessReport { ok: offending.is_empty(), offending }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::build_pomdp;
    use crate::presets;

    #[test]
    fn degenerate_gap_is_zero() {
        let env = EnvironmentSpec::from_config(presets::degenerate(1, 1.0)).unwrap();
        let p = build_pomdp(&env).unwrap();
        let r = validate_markov(&env, &p).unwrap();
        assert_eq!(r.max_gap, 0.0);
        assert!(r.histories_checked > 0);
    }

    #[test]
    fn corrupted_row_is_found() {
        let env = EnvironmentSpec::from_config(presets::e2(true, 1)).unwrap();
        let mut p = build_pomdp(&env).unwrap();
        let (t, x, u) = (1, 3, 1);
        let row = &mut p.transitions[t][x][u];
        assert!(row.len() >= 2);
        let big = (0..row.len()).max_by(|&i, &j| row[i].1.total_cmp(&row[j].1)).unwrap();
        let other = (big + 1) % row.len();
        row[big].1 -= 0.1;
        row[other].1 += 0.1;
        let r = validate_markov(&env, &p).unwrap();
        assert!(r.max_gap >= 0.05, "{r:?}");
        let w = r.worst.unwrap();
        assert_eq!((w.t, *w.states.last().unwrap(), *w.actions.last().unwrap()), (t, x, u));
    }

    #[test]
    fn built_pomdps_are_time_disjoint() {
        for horizon in [0, 1, 2] {
            let env = EnvironmentSpec::from_config(presets::e2(true, horizon)).unwrap();
            let p = build_pomdp(&env).unwrap();
            assert!(validate_time_disjointness(&p).ok);
        }
    }

    #[test]
    fn cross_time_transition_is_reported() {
        let env = EnvironmentSpec::from_config(presets::e2(false, 1)).unwrap();
        let mut p = build_pomdp(&env).unwrap();
        p.transitions[0][0][0][0].0 = StateId { time: 0, index: 1 };
        let r = validate_time_disjointness(&p);
        assert!(!r.ok);
        assert!(r.offending[0].contains("t=0, x=0, u=0"), "{:?}", r.offending);
    }
}
