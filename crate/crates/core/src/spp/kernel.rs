use crate::bp::SignalingPolicy;
use crate::error::{Error, Result};
use crate::prob::checked_distribution;

use super::BeliefGrid;

/// Conditioning values of one belief-kernel row.
///
/// The first round has no previous belief, reward or action, so it gets its
/// own variant instead of a padding convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelContext {
    Initial {
        signal: usize,
        confounder: usize,
        policy: usize,
    },
    Step {
        belief: usize,
        receiver_reward: usize,
        action: usize,
        signal: usize,
        confounder: usize,
        policy: usize,
    },
}

impl std::fmt::Display for KernelContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelContext::Initial { signal, confounder, policy } => {
                write!(f, "initial(q={signal}, z={confounder}, pi={policy})")
            }
            KernelContext::Step { belief, receiver_reward, action, signal, confounder, policy } => write!(
                f,
                "step(b={belief}, rr={receiver_reward}, a={action}, q={signal}, z={confounder}, pi={policy})"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    Table,
    /// Bayes update under the previous belief with the likelihood raised to
    /// `1 + optimism[z]`, projected to the grid, then mixed with `noise` of
    /// uniform mass over the grid.
    DistortedBayes { optimism: Vec<f64>, noise: f64 },
}

/// Sizes of the index spaces a kernel is defined over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelDims {
    pub beliefs: usize,
    pub receiver_rewards: usize,
    pub actions: usize,
    pub signals: usize,
    pub confounders: usize,
    pub policies: usize,
}

/// Dense conditional table `p(b' | b_prev, ρ^r_prev, a_prev, q, z, π)` plus the
/// initial-round table `p(b_0 | q_0, z, π_0)`. Missing rows are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefKernel {
    dims: KernelDims,
    family: KernelFamily,
    initial: Vec<Option<Vec<f64>>>,
    step: Vec<Option<Vec<f64>>>,
}

impl BeliefKernel {
    /// An empty table; fill it with [`BeliefKernel::set_row`].
    pub fn empty(dims: KernelDims) -> Self {
        let n_init = dims.signals * dims.confounders * dims.policies;
        let n_step = dims.beliefs * dims.receiver_rewards * dims.actions * n_init;
        Self {
            dims,
            family: KernelFamily::Table,
            initial: vec![None; n_init],
            step: vec![None; n_step],
        }
    }

    pub fn dims(&self) -> KernelDims {
        self.dims
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    fn slot(&self, ctx: &KernelContext) -> Result<(bool, usize)> {
        let d = &self.dims;
        let check = |name: &str, v: usize, n: usize| -> Result<()> {
            if v >= n {
                Err(Error::UnindexedContext {
                    context: format!("{ctx} ({name} index {v} out of range {n})"),
                })
            } else {
                Ok(())
            }
        };
        match *ctx {
            KernelContext::Initial { signal, confounder, policy } => {
                check("signal", signal, d.signals)?;
                check("confounder", confounder, d.confounders)?;
                check("policy", policy, d.policies)?;
                Ok((true, (signal * d.confounders + confounder) * d.policies + policy))
            }
            KernelContext::Step { belief, receiver_reward, action, signal, confounder, policy } => {
                check("belief", belief, d.beliefs)?;
                check("receiver_reward", receiver_reward, d.receiver_rewards)?;
                check("action", action, d.actions)?;
                check("signal", signal, d.signals)?;
                check("confounder", confounder, d.confounders)?;
                check("policy", policy, d.policies)?;
                let i = ((((belief * d.receiver_rewards + receiver_reward) * d.actions + action)
                    * d.signals
                    + signal)
                    * d.confounders
                    + confounder)
                    * d.policies
                    + policy;
                Ok((false, i))
            }
        }
    }

    pub fn set_row(&mut self, ctx: KernelContext, row: &[f64]) -> Result<()> {
        if row.len() != self.dims.beliefs {
            return Err(Error::DimensionMismatch {
                what: format!("belief_kernel row {ctx}"),
                expected: self.dims.beliefs,
                got: row.len(),
            });
        }
        let row = checked_distribution(&format!("belief_kernel row {ctx}"), row)?;
        let (initial, i) = self.slot(&ctx)?;
        if initial {
            self.initial[i] = Some(row);
        } else {
            self.step[i] = Some(row);
        }
        Ok(())
    }

    pub fn row(&self, ctx: &KernelContext) -> Result<&[f64]> {
        let (initial, i) = self.slot(ctx)?;
        let slot = if initial { &self.initial[i] } else { &self.step[i] };
        slot.as_deref().ok_or_else(|| Error::UnindexedContext { context: ctx.to_string() })
    }

    /// Every context of the given dimensions, initial ones first.
    pub fn contexts(dims: KernelDims) -> Vec<KernelContext> {
        let mut out = Vec::new();
        for signal in 0..dims.signals {
            for confounder in 0..dims.confounders {
                for policy in 0..dims.policies {
                    out.push(KernelContext::Initial { signal, confounder, policy });
                }
            }
        }
        for belief in 0..dims.beliefs {
            for receiver_reward in 0..dims.receiver_rewards {
                for action in 0..dims.actions {
                    for signal in 0..dims.signals {
                        for confounder in 0..dims.confounders {
                            for policy in 0..dims.policies {
                                out.push(KernelContext::Step {
                                    belief,
                                    receiver_reward,
                                    action,
                                    signal,
                                    confounder,
                                    policy,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Contexts without a row.
    pub fn missing(&self) -> Vec<KernelContext> {
        Self::contexts(self.dims)
            .into_iter()
            .filter(|c| self.row(c).is_err())
            .collect()
    }

    /// The distorted-Bayes family. `optimism[z] = 0` for every `z` with
    /// `noise = 0` is the neutral Bayesian receiver.
    ///
    /// When the signal has zero probability under the previous belief the
    /// update falls back to a uniform working prior; if it has zero probability
    /// under every state the previous belief is kept.
    pub fn distorted_bayes(
        grid: &BeliefGrid,
        policies: &[SignalingPolicy],
        receiver_rewards: usize,
        actions: usize,
        optimism: &[f64],
        noise: f64,
    ) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::EmptyPolicySet);
        }
        for (z, &k) in optimism.iter().enumerate() {
            if !k.is_finite() || k <= -1.0 {
                return Err(Error::field(
                    format!("belief_kernel.optimism[{z}]"),
                    format!("must be finite and > -1, got {k}"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&noise) {
            return Err(Error::field("belief_kernel.noise", format!("must lie in [0, 1], got {noise}")));
        }
        let dims = KernelDims {
            beliefs: grid.len(),
            receiver_rewards,
            actions,
            signals: policies[0].num_signals(),
            confounders: optimism.len(),
            policies: policies.len(),
        };
        let mut kernel = Self::empty(dims);
        kernel.family = KernelFamily::DistortedBayes { optimism: optimism.to_vec(), noise };

        // The row only depends on (b_prev, q, z, π); compute each once.
        let mut cache = std::collections::HashMap::new();
        for ctx in Self::contexts(dims) {
            let (belief, signal, confounder, policy) = match ctx {
                KernelContext::Initial { signal, confounder, policy } => {
                    (grid.uniform_index(), signal, confounder, policy)
                }
                KernelContext::Step { belief, signal, confounder, policy, .. } => {
                    (belief, signal, confounder, policy)
                }
            };
            let key = (belief, signal, confounder, policy);
            let row = cache
                .entry(key)
                .or_insert_with(|| {
                    distorted_row(
                        grid,
                        &policies[policy],
                        belief,
                        signal,
                        1.0 + optimism[confounder],
                        noise,
                    )
                })
                .clone();
            kernel.set_row(ctx, &row)?;
        }
        Ok(kernel)
    }
}

fn distorted_row(
    grid: &BeliefGrid,
    policy: &SignalingPolicy,
    prev: usize,
    signal: usize,
    exponent: f64,
    noise: f64,
) -> Vec<f64> {
    let prior = grid.point(prev).probs();
    let n = prior.len();
    let lik: Vec<f64> = (0..n)
        .map(|s| {
            let p = policy.prob(s, signal);
            if p > 0.0 {
                p.powf(exponent)
            } else {
                0.0
            }
        })
        .collect();
    let mut post: Vec<f64> = prior.iter().zip(&lik).map(|(b, l)| b * l).collect();
    let mut total: f64 = post.iter().sum();
    if total <= 0.0 {
        post = lik.clone();
        total = post.iter().sum();
    }
    let target = if total <= 0.0 {
        prev
    } else {
        post.iter_mut().for_each(|x| *x /= total);
        grid.nearest(&post)
    };
    let m = grid.len();
    let mut row = vec![noise / m as f64; m];
    row[target] += 1.0 - noise;
    row
}

/// Looks up the kernel row for `ctx`.
pub fn belief_step<'a>(kernel: &'a BeliefKernel, ctx: &KernelContext) -> Result<&'a [f64]> {
    kernel.row(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp::posterior;

    fn grid() -> BeliefGrid {
        BeliefGrid::new(vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap()
    }

    fn policies() -> Vec<SignalingPolicy> {
        vec![
            SignalingPolicy::new("partial", vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap(),
            SignalingPolicy::fully_informative(2),
        ]
    }

    #[test]
    fn table_lookup_returns_stored_row() {
        let dims = KernelDims {
            beliefs: 3,
            receiver_rewards: 1,
            actions: 1,
            signals: 1,
            confounders: 1,
            policies: 1,
        };
        let mut k = BeliefKernel::empty(dims);
        let ctx = KernelContext::Initial { signal: 0, confounder: 0, policy: 0 };
        k.set_row(ctx, &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(belief_step(&k, &ctx).unwrap(), &[0.0, 0.0, 1.0]);
        let missing = KernelContext::Step {
            belief: 0,
            receiver_reward: 0,
            action: 0,
            signal: 0,
            confounder: 0,
            policy: 0,
        };
        assert!(matches!(belief_step(&k, &missing), Err(Error::UnindexedContext { .. })));
        assert!(k.set_row(ctx, &[0.5, 0.6, 0.0]).is_err());
    }

    #[test]
    fn neutral_family_projects_the_bayes_posterior() {
        let g = grid();
        let ps = policies();
        let k = BeliefKernel::distorted_bayes(&g, &ps, 2, 2, &[0.0], 0.0).unwrap();
        for (pi, policy) in ps.iter().enumerate() {
            for q in 0..2 {
                let ctx = KernelContext::Initial { signal: q, confounder: 0, policy: pi };
                let post = posterior(policy, &[0.5, 0.5], q).unwrap();
                // Brute-force nearest grid point.
                let mut best = 0;
                for j in 1..g.len() {
                    let dj: f64 = (0..2).map(|s| (g.point(j).probs()[s] - post.probs()[s]).abs()).sum();
                    let db: f64 = (0..2).map(|s| (g.point(best).probs()[s] - post.probs()[s]).abs()).sum();
                    if dj < db {
                        best = j;
                    }
                }
                let row = k.row(&ctx).unwrap();
                assert_eq!(row[best], 1.0, "policy {pi} signal {q}");
            }
        }
    }

    #[test]
    fn zero_optimism_matches_neutral_everywhere() {
        let g = grid();
        let ps = policies();
        let neutral = BeliefKernel::distorted_bayes(&g, &ps, 2, 2, &[0.0, 0.0], 0.1).unwrap();
        let distorted = BeliefKernel::distorted_bayes(&g, &ps, 2, 2, &[-0.5, 2.0], 0.1).unwrap();
        let flat = BeliefKernel::distorted_bayes(&g, &ps, 2, 2, &[0.0, 0.0], 0.1).unwrap();
        for ctx in BeliefKernel::contexts(neutral.dims()) {
            assert_eq!(neutral.row(&ctx).unwrap(), flat.row(&ctx).unwrap());
        }
        // Credulous receiver reads the partial signal q0 from the uniform
        // belief as decisive; the neutral one does not.
        let ctx = KernelContext::Initial { signal: 0, confounder: 1, policy: 0 };
        assert!(distorted.row(&ctx).unwrap()[0] > 0.9);
        let ctx = KernelContext::Initial { signal: 0, confounder: 0, policy: 0 };
        assert!(distorted.row(&ctx).unwrap()[1] > 0.9);
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = grid();
        let ps = policies();
        assert!(BeliefKernel::distorted_bayes(&g, &ps, 2, 2, &[-1.0], 0.0).is_err());
        assert!(BeliefKernel::distorted_bayes(&g, &ps, 2, 2, &[0.0], 1.5).is_err());
    }
}
