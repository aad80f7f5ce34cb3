use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pomdp::ObservationStrategy;

use super::bundle::MatrixBundle;
use super::law::Provenance;
use super::matrix::{pinv, SparseMatrix, SparseVec};

/// Conditioning of the reward head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardIndex {
    /// `P(r_t, y_{t+1} | Y_t, u_{t+1})`, chained with `W_0 … W_{t+1}`.
    Next,
    /// `P(r_t, y_{t+1} | Y_{t−1}, u_t)`, chained with `W_0 … W_t`.
    Lagged,
}

/// How `P(Y_k | Y_{k−1}, u_k)` is inverted inside `W_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseMode {
    /// Pseudo-inverse of the single row `y_k` that the trajectory realizes.
    Realized,
    /// Pseudo-inverse of the whole matrix (least squares).
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variant {
    pub reward: RewardIndex,
    /// Include `p^e(u_{t+1} | y_{t+1})` in the product (only matters for
    /// `t < T`).
    pub terminal_factor: bool,
    pub inverse: InverseMode,
}

impl Default for Variant {
    fn default() -> Self {
        Self { reward: RewardIndex::Next, terminal_factor: true, inverse: InverseMode::Realized }
    }
}

impl Variant {
    pub fn all() -> Vec<Variant> {
        let mut out = Vec::new();
        for reward in [RewardIndex::Next, RewardIndex::Lagged] {
            for terminal_factor in [true, false] {
                for inverse in [InverseMode::Realized, InverseMode::Full] {
                    out.push(Variant { reward, terminal_factor, inverse });
                }
            }
        }
        out
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let r = match self.reward {
            RewardIndex::Next => "next",
            RewardIndex::Lagged => "lagged",
        };
        let i = match self.inverse {
            InverseMode::Realized => "realized",
            InverseMode::Full => "full",
        };
        let term = if self.terminal_factor { "terminal" } else { "no-terminal" };
        write!(f, "{r}/{term}/{i}")
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("variant", format!("`{s}` is not of the form next|lagged / terminal|no-terminal / realized|full"));
        let parts: Vec<&str> = s.split('/').map(str::trim).collect();
        let [r, term, inv] = parts.as_slice() else { return Err(bad()) };
        let reward = match *r {
            "next" => RewardIndex::Next,
            "lagged" => RewardIndex::Lagged,
            _ => return Err(bad()),
        };
        let terminal_factor = match *term {
            "terminal" => true,
            "no-terminal" => false,
            _ => return Err(bad()),
        };
        let inverse = match *inv {
            "realized" => InverseMode::Realized,
            "full" => InverseMode::Full,
            _ => return Err(bad()),
        };
        Ok(Variant { reward, terminal_factor, inverse })
    }
}

/// One inverted cell: `(k, index of y_k, u_k)`; `u_k = None` at `k = T+1`.
pub type MissingCell = (usize, usize, Option<usize>);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardEstimate {
    pub t: usize,
    /// Before clipping.
    pub raw: Vec<f64>,
    pub probs: Vec<f64>,
    pub pre_normalization_mass: f64,
    pub negative_mass: f64,
    /// Plug-in estimate of the evaluation-strategy mass that reaches an
    /// observation-action cell never seen under the behavioral strategy.
    pub missing_mass: f64,
    pub missing_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpeEstimate {
    pub strategy: String,
    pub variant: Variant,
    pub provenance: Provenance,
    pub per_t: Vec<RewardEstimate>,
    pub value: f64,
    /// `Σ_t Σ_r r · raw(r_t)`.
    pub raw_value: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub k: usize,
    pub context: String,
    pub matrix: SparseMatrix,
}

fn pinv_row(row: &[(usize, f64)]) -> SparseVec {
    let n2: f64 = row.iter().map(|(_, v)| v * v).sum();
    if n2 <= 0.0 {
        return SparseVec::new();
    }
    row.iter().map(|&(j, v)| (j, v / n2)).collect()
}

fn dot(row: &[(usize, f64)], x: &SparseVec) -> f64 {
    row.iter().filter_map(|(j, a)| x.get(j).map(|b| a * b)).sum()
}

pub(crate) struct Chain<'a> {
    b: &'a MatrixBundle,
    mode: InverseMode,
    /// Transposed full pseudo-inverses `[k][u]` (last epoch: single entry).
    pinv_t: Vec<Vec<SparseMatrix>>,
}

impl<'a> Chain<'a> {
    pub(crate) fn new(b: &'a MatrixBundle, mode: InverseMode, rel_threshold: f64) -> Result<Self> {
        let mut pinv_t = Vec::new();
        if mode == InverseMode::Full {
            for k in 0..=b.horizon() + 1 {
                let us: Vec<Option<usize>> =
                    if k <= b.horizon() { (0..b.num_actions()).map(Some).collect() } else { vec![None] };
                let mut per = Vec::new();
                for u in us {
                    let (p, _) = pinv(&b.obs_given_prev(k, u)?.matrix, rel_threshold);
                    per.push(p.transpose());
                }
                pinv_t.push(per);
            }
        }
        Ok(Self { b, mode, pinv_t })
    }

    fn pinv_t(&self, k: usize, u: Option<usize>) -> &SparseMatrix {
        &self.pinv_t[k][u.unwrap_or(0)]
    }

    /// `W_k(y_k, u_k) · c` where `c` lives on `𝒴_{k−2}` (the unit space at
    /// `k = 0`); the result lives on `𝒴_{k−1}`.
    pub(crate) fn step(&self, k: usize, i: usize, u: Option<usize>, u_prev: Option<usize>, c: &SparseVec) -> Result<SparseVec> {
        let b = self.b;
        let cm = &b.obs_given_prev(k, u)?.matrix;
        let nm = if k == 0 { &b.prior().matrix } else { &b.two_step(k, u_prev.expect("k ≥ 1 has u_{k−1}"))?.matrix };
        Ok(match self.mode {
            InverseMode::Realized => {
                let s = dot(nm.row(i), c);
                let mut out = pinv_row(cm.row(i));
                out.values_mut().for_each(|v| *v *= s);
                out
            }
            InverseMode::Full => {
                let kt = k as i64;
                let siblings = b.children(kt - 1, if k == 0 { 0 } else { b.parent(kt, i) });
                let mut v = SparseVec::new();
                for &s in siblings {
                    if k > 0 && b.space(kt)[s].last_action() != u_prev {
                        continue;
                    }
                    let x = dot(nm.row(s), c);
                    if x != 0.0 {
                        v.insert(s, x);
                    }
                }
                self.pinv_t(k, u).left_mul_vec(&v)
            }
        })
    }
}

#[derive(Default)]
struct Acc {
    raw: Vec<f64>,
    missing_mass: f64,
    missing: Vec<MissingCell>,
}

struct Walk<'a, S: ?Sized> {
    chain: &'a Chain<'a>,
    eval: &'a S,
    t: usize,
    variant: Variant,
}

impl<S: ObservationStrategy + ?Sized> Walk<'_, S> {
    #[allow(clippy::too_many_arguments)]
    fn visit(&self, k: usize, i: usize, m: f64, weight: f64, u_prev: Option<usize>, c_prev: &SparseVec, acc: &mut Acc) -> Result<()> {
        let b = self.chain.b;
        let kt = k as i64;
        let g = self.eval.action_dist(&b.space(kt)[i])?;
        for (u, &gu) in g.iter().enumerate() {
            if gu == 0.0 {
                continue;
            }
            let pu = b.joint(k, i, u);
            if pu <= 0.0 {
                acc.missing_mass += m * gu;
                acc.missing.push((k, i, Some(u)));
                continue;
            }
            let c = self.chain.step(k, i, Some(u), u_prev, c_prev)?;
            for &ch in b.children(kt, i) {
                if b.space(kt + 1)[ch].last_action() != Some(u) {
                    continue;
                }
                let m2 = m * gu * b.prob(kt + 1, ch) / pu;
                if k < self.t {
                    self.visit(k + 1, ch, m2, weight * gu, Some(u), &c, acc)?;
                } else {
                    self.leaf(ch, m2, weight * gu, u, &c, acc)?;
                }
            }
        }
        Ok(())
    }

    /// At `y_{t+1}`; `c_t` lives on `𝒴_{t−1}`.
    fn leaf(&self, i: usize, m: f64, weight: f64, u_t: usize, c_t: &SparseVec, acc: &mut Acc) -> Result<()> {
        let b = self.chain.b;
        let t = self.t;
        let r = b.reward_index(t, i);
        let last = t == b.horizon();
        match self.variant.reward {
            RewardIndex::Next => {
                let next: Vec<(Option<usize>, f64)> = if last {
                    vec![(None, 1.0)]
                } else if self.variant.terminal_factor {
                    let g = self.eval.action_dist(&b.space(t as i64 + 1)[i])?;
                    g.iter().enumerate().map(|(u, &p)| (Some(u), p)).collect()
                } else {
                    (0..b.num_actions()).map(|u| (Some(u), 1.0)).collect()
                };
                for (un, ge) in next {
                    if ge == 0.0 {
                        continue;
                    }
                    if let Some(u) = un {
                        if b.joint(t + 1, i, u) <= 0.0 {
                            acc.missing_mass += m * ge;
                            acc.missing.push((t + 1, i, un));
                            continue;
                        }
                    }
                    let c = self.chain.step(t + 1, i, un, Some(u_t), c_t)?;
                    let head = &b.reward_next(t, un)?.matrix;
                    acc.raw[r] += weight * ge * dot(head.row(i), &c);
                }
            }
            RewardIndex::Lagged => {
                let mult = if last {
                    1.0
                } else if self.variant.terminal_factor {
                    self.eval.action_dist(&b.space(t as i64 + 1)[i])?.iter().sum()
                } else {
                    b.num_actions() as f64
                };
                let head = &b.reward_lag(t, u_t)?.matrix;
                acc.raw[r] += weight * mult * dot(head.row(i), c_t);
            }
        }
        Ok(())
    }
}

/// Default relative singular-value threshold.
pub const DEFAULT_REL_THRESHOLD: f64 = 1e-9;

/// `P̂^e(r_t)` by the weight-matrix chain, summed over the bundle's support.
pub fn estimated_reward_dist<S: ObservationStrategy + ?Sized>(
    bundle: &MatrixBundle,
    eval: &S,
    t: usize,
    variant: Variant,
) -> Result<RewardEstimate> {
    let chain = Chain::new(bundle, variant.inverse, DEFAULT_REL_THRESHOLD)?;
    reward_dist_with(&chain, eval, t, variant).map(|(r, _)| r)
}

fn reward_dist_with<S: ObservationStrategy + ?Sized>(
    chain: &Chain<'_>,
    eval: &S,
    t: usize,
    variant: Variant,
) -> Result<(RewardEstimate, Vec<MissingCell>)> {
    let b = chain.b;
    if t > b.horizon() {
        return Err(Error::EpochOutOfRange { t, max: b.horizon() });
    }
    let nv = b.sender_values().len();
    let walk = Walk { chain, eval, t, variant };
    let unit: SparseVec = [(0, 1.0)].into_iter().collect();
    let parts = (0..b.space(0).len())
        .into_par_iter()
        .map(|i| {
            let mut acc = Acc { raw: vec![0.0; nv], ..Default::default() };
            walk.visit(0, i, b.prob(0, i), 1.0, None, &unit, &mut acc)?;
            Ok(acc)
        })
        .collect::<Result<Vec<Acc>>>()?;
    let mut raw = vec![0.0; nv];
    let mut missing_mass = 0.0;
    let mut missing = Vec::new();
    for p in parts {
        for (r, v) in raw.iter_mut().zip(&p.raw) {
            *r += v;
        }
        missing_mass += p.missing_mass;
        missing.extend(p.missing);
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankConditionFailed(format!("non-finite reward mass at t={t}")));
    }
    let negative_mass: f64 = raw.iter().filter(|&&v| v < 0.0).fold(0.0, |a, v| a + v);
    let clipped: Vec<f64> = raw.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(Error::RankConditionFailed(format!("estimated reward distribution at t={t} has no positive mass")));
    }
    let est = RewardEstimate {
        t,
        pre_normalization_mass: raw.iter().sum(),
        probs: clipped.iter().map(|v| v / total).collect(),
        raw,
        negative_mass,
        missing_mass,
        missing_cells: missing.len(),
    };
    Ok((est, missing))
}

fn describe_cell(b: &MatrixBundle, (k, i, u): MissingCell) -> String {
    let y = &b.space(k as i64)[i];
    match u {
        Some(u) => format!("(t={k}, y={y}, u={u})"),
        None => format!("(t={k}, y={y})"),
    }
}

/// `Ĵ = Σ_t Σ_r r · P̂^e(r_t)`.
///
/// In population mode any evaluation mass on an unsupported cell is a rank
/// failure. In sample mode it is reported as incomplete support, unless the
/// evaluation strategy needs an action never logged at that epoch.
pub fn ope_value<S: ObservationStrategy + ?Sized>(bundle: &MatrixBundle, eval: &S, variant: Variant) -> Result<OpeEstimate> {
    ope_value_with_threshold(bundle, eval, variant, DEFAULT_REL_THRESHOLD)
}

pub fn ope_value_with_threshold<S: ObservationStrategy + ?Sized>(
    bundle: &MatrixBundle,
    eval: &S,
    variant: Variant,
    rel_threshold: f64,
) -> Result<OpeEstimate> {
    let chain = Chain::new(bundle, variant.inverse, rel_threshold)?;
    let sv = bundle.sender_values();
    let mut per_t = Vec::with_capacity(bundle.horizon() + 1);
    let mut warnings = Vec::new();
    for t in 0..=bundle.horizon() {
        let (est, missing) = reward_dist_with(&chain, eval, t, variant)?;
        if let Some(&cell) = missing.first() {
            match bundle.provenance() {
                Provenance::Population => {
                    return Err(Error::RankConditionFailed(format!(
                        "strategy `{}` reaches {} observation-action cells with no behavioral mass (first {}); P(Y_k | Y_(k-1), u_k) has a zero row there",
                        eval.name(),
                        missing.len(),
                        describe_cell(bundle, cell)
                    )));
                }
                Provenance::Sample { .. } => {
                    for &(k, _, u) in &missing {
                        if bundle.obs_given_prev(k, u)?.matrix.nnz() == 0 {
                            return Err(Error::RankConditionFailed(format!(
                                "strategy `{}` uses u={} at t={k}, which never occurs in the data",
                                eval.name(),
                                u.map_or("-".into(), |u| u.to_string())
                            )));
                        }
                    }
                    warnings.push(format!(
                        "incomplete support at t={t}: {} cells, estimated missing mass {:.3e}",
                        missing.len(),
                        est.missing_mass
                    ));
                }
            }
        }
        per_t.push(est);
    }
    let value = per_t.iter().map(|e| e.probs.iter().zip(sv).map(|(p, r)| p * r).sum::<f64>()).sum();
    let raw_value = per_t.iter().map(|e| e.raw.iter().zip(sv).map(|(p, r)| p * r).sum::<f64>()).sum();
    Ok(OpeEstimate {
        strategy: eval.name().to_string(),
        variant,
        provenance: bundle.provenance(),
        per_t,
        value,
        raw_value,
        warnings,
    })
}

/// `W_k` for the trajectory context ending in `y_k = space(k)[i]`, with the
/// action `u_k` (`None` at `k = T+1`).
///
/// `W_k = pinv(P(Y_k | Y_{k−1}, u_k)) · P(Y_k, y_{k−1} | Y_{k−2}, u_{k−1})`
/// and `W_0 = pinv(P(Y_0 | u_0, Y_{−1})) · P(Y_0)`. With
/// [`InverseMode::Realized`] both factors are restricted to the row `y_k`.
pub fn weight_matrix(bundle: &MatrixBundle, k: usize, i: usize, u: Option<usize>, mode: InverseMode) -> Result<WeightMatrix> {
    let kt = k as i64;
    let y = bundle
        .space(kt)
        .get_index(i)
        .ok_or_else(|| Error::MissingMatrix(format!("no observation #{i} at t={k}")))?;
    let cm = &bundle.obs_given_prev(k, u)?.matrix;
    let u_prev = y.last_action();
    let nm = if k == 0 { &bundle.prior().matrix } else { &bundle.two_step(k, u_prev.expect("history"))?.matrix };
    let matrix = match mode {
        InverseMode::Realized => {
            let left = pinv_row(cm.row(i));
            let trip: Vec<_> =
                left.iter().flat_map(|(&j, &a)| nm.row(i).iter().map(move |&(c, v)| (j, c, a * v))).collect();
            SparseMatrix::from_triplets(cm.ncols(), nm.ncols(), trip)
        }
        InverseMode::Full => {
            let p = if k == 0 { None } else { Some(bundle.parent(kt, i)) };
            let restricted = SparseMatrix::from_triplets(
                nm.nrows(),
                nm.ncols(),
                nm.entries()
                    .filter(|&(r, _, _)| p.map_or(true, |p| bundle.parent(kt, r) == p))
                    .collect::<Vec<_>>(),
            );
            pinv(cm, DEFAULT_REL_THRESHOLD).0.mul(&restricted)
        }
    };
    if !matrix.is_finite() {
        return Err(Error::RankConditionFailed(format!("non-finite weight matrix at t={k}, y={y}")));
    }
    Ok(WeightMatrix { k, context: format!("t={k} y={y} u={u:?}"), matrix })
}
