use std::collections::BTreeMap;
use std::path::Path;

use indexmap::IndexSet;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pomdp::Observation;

use super::law::{ObservableLaw, Provenance};
use super::matrix::{pinv, RankDiagnostics, SparseMatrix};

/// Index space of a matrix axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "t", rename_all = "snake_case")]
pub enum Axis {
    /// `𝒴_t` for `t ≥ −1`.
    Observed(i64),
    /// `(r_t, y_{t+1})` pairs; `r_t` is a function of `y_{t+1}`, so the
    /// index space is `𝒴_{t+1}`.
    RewardObserved(i64),
    /// `𝒳_t` of the lifted POMDP.
    Hidden(usize),
    /// One-element space (the column of an unconditional vector).
    Unit,
}

/// `P(row | column, context)` over labeled realization spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMatrix {
    pub name: String,
    pub context: String,
    pub rows: Axis,
    pub cols: Axis,
    pub matrix: SparseMatrix,
}

/// Observable-side conditional matrices built from an [`ObservableLaw`].
///
/// Epoch `t` runs from `−1` (the pre-initial token) to `T + 1`. Matrices:
///
/// - `C_t[u] = P(Y_t | Y_{t−1}, u_t = u)` for `t ≤ T`, and
///   `C_{T+1} = P(Y_{T+1} | Y_T)` (no control at the last epoch);
/// - `N_t[u] = P(Y_t, y_{t−1} | Y_{t−2}, u_{t−1} = u)` for `1 ≤ t ≤ T+1`,
///   stored with all `y_{t−1}` stacked (each row has a single parent);
/// - `P(Y_0)`.
///
/// The two reward heads are the same objects read with reward-labeled rows:
/// `P(r_t, Y_{t+1} | Y_t, u_{t+1}) = C_{t+1}[u_{t+1}]` and
/// `P(r_t, Y_{t+1} | Y_{t−1}, u_t) = N_{t+1}[u_t]`.
#[derive(Debug, Clone)]
pub struct MatrixBundle {
    horizon: usize,
    num_actions: usize,
    provenance: Provenance,
    sender_values: Vec<f64>,
    spaces: Vec<IndexSet<Observation>>,
    prob: Vec<Vec<f64>>,
    parent: Vec<Vec<usize>>,
    children: Vec<Vec<Vec<usize>>>,
    joint: Vec<Vec<Vec<f64>>>,
    denom: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<usize>>,
    obs_given_prev: Vec<Vec<ConditionalMatrix>>,
    two_step: Vec<Vec<ConditionalMatrix>>,
    prior: ConditionalMatrix,
    empty_cells: Vec<String>,
    hidden: Option<HiddenMatrices>,
}

/// `P(X_t | Y_{t−1}, u_t)` per `(t, u)`, available in population mode only.
#[derive(Debug, Clone)]
pub struct HiddenMatrices {
    pub state_given_prev: Vec<Vec<ConditionalMatrix>>,
    pub hidden_counts: Vec<usize>,
}

fn e(t: i64) -> usize {
    (t + 1) as usize
}

impl MatrixBundle {
    pub fn from_law(law: &ObservableLaw) -> Result<Self> {
        let horizon = law.horizon();
        let na = law.num_actions();
        let total = law.total();
        let epochs = horizon + 3;

        let mut mass: Vec<BTreeMap<Observation, f64>> = vec![BTreeMap::new(); epochs];
        mass[0].insert(Observation::PreInitial, total);
        for (info, &w) in law.weights() {
            for t in 0..=horizon + 1 {
                *mass[t + 1].entry(Observation::of_history(info.rounds(), t)).or_insert(0.0) += w;
            }
        }
        let spaces: Vec<IndexSet<Observation>> = mass.iter().map(|m| m.keys().cloned().collect()).collect();
        let prob: Vec<Vec<f64>> = mass.iter().map(|m| m.values().map(|w| w / total).collect()).collect();

        let mut parent = vec![Vec::new()];
        let mut children: Vec<Vec<Vec<usize>>> = spaces.iter().map(|s| vec![Vec::new(); s.len()]).collect();
        for ep in 1..epochs {
            let mut par = Vec::with_capacity(spaces[ep].len());
            for (i, y) in spaces[ep].iter().enumerate() {
                let p = y.parent().expect("epochs ≥ 0 have a parent");
                let j = spaces[ep - 1]
                    .get_index_of(&p)
                    .ok_or_else(|| Error::InternalInconsistency(format!("parent of {y} missing")))?;
                children[ep - 1][j].push(i);
                par.push(j);
            }
            parent.push(par);
        }
        children.pop();

        // joint[t][i][u] = P(y_t, u_t = u); denom[t][u][j] = P(y_{t−1} = j, u_t = u).
        let mut joint = Vec::with_capacity(horizon + 1);
        let mut denom = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon as i64 {
            let mut jt = vec![vec![0.0; na]; spaces[e(t)].len()];
            for (i, row) in jt.iter_mut().enumerate() {
                for &c in &children[e(t)][i] {
                    let u = spaces[e(t + 1)][c].last_action().expect("child carries an action");
                    row[u] += prob[e(t + 1)][c];
                }
            }
            let mut dt = vec![vec![0.0; spaces[e(t - 1)].len()]; na];
            for (i, row) in jt.iter().enumerate() {
                let j = parent[e(t)][i];
                for u in 0..na {
                    dt[u][j] += row[u];
                }
            }
            joint.push(jt);
            denom.push(dt);
        }

        let sv = law.sender_values();
        let reward = (0..=horizon)
            .map(|t| {
                spaces[t + 2]
                    .iter()
                    .map(|y| {
                        let r = y.history()[t];
                        let v = law.reward(r.state, r.action);
                        sv.iter().position(|&x| x == v).expect("law validated rewards")
                    })
                    .collect()
            })
            .collect();

        let mut b = MatrixBundle {
            horizon,
            num_actions: na,
            provenance: law.provenance(),
            sender_values: sv.to_vec(),
            spaces,
            prob,
            parent,
            children,
            joint,
            denom,
            reward,
            obs_given_prev: Vec::new(),
            two_step: Vec::new(),
            prior: ConditionalMatrix {
                name: String::new(),
                context: String::new(),
                rows: Axis::Unit,
                cols: Axis::Unit,
                matrix: SparseMatrix::zeros(0, 0),
            },
            empty_cells: Vec::new(),
            hidden: None,
        };
        b.build_matrices();
        Ok(b)
    }

    fn build_matrices(&mut self) {
        let h = self.horizon as i64;
        let na = self.num_actions;
        let mut empty = Vec::new();
        let mut obs = Vec::new();
        for t in 0..=h {
            let mut per_u = Vec::with_capacity(na);
            for u in 0..na {
                let d = &self.denom[t as usize][u];
                for (j, &dj) in d.iter().enumerate() {
                    if dj <= 0.0 {
                        empty.push(format!("C_{t}[u={u}] column {}", self.spaces[e(t - 1)][j]));
                    }
                }
                let trip = (0..self.spaces[e(t)].len()).filter_map(|i| {
                    let j = self.parent[e(t)][i];
                    let num = self.joint[t as usize][i][u];
                    (d[j] > 0.0 && num > 0.0).then(|| (i, j, num / d[j]))
                });
                per_u.push(ConditionalMatrix {
                    name: format!("C_{t}_u{u}"),
                    context: format!("P(Y_{t} | Y_{}, u_{t}={u})", t - 1),
                    rows: Axis::Observed(t),
                    cols: Axis::Observed(t - 1),
                    matrix: SparseMatrix::from_triplets(self.spaces[e(t)].len(), self.spaces[e(t - 1)].len(), trip.collect::<Vec<_>>()),
                });
            }
            obs.push(per_u);
        }
        let t = h + 1;
        let trip: Vec<_> = (0..self.spaces[e(t)].len())
            .map(|i| {
                let j = self.parent[e(t)][i];
                (i, j, self.prob[e(t)][i] / self.prob[e(t - 1)][j])
            })
            .collect();
        obs.push(vec![ConditionalMatrix {
            name: format!("C_{t}"),
            context: format!("P(Y_{t} | Y_{})", t - 1),
            rows: Axis::Observed(t),
            cols: Axis::Observed(t - 1),
            matrix: SparseMatrix::from_triplets(self.spaces[e(t)].len(), self.spaces[e(t - 1)].len(), trip),
        }]);

        let mut two = vec![Vec::new()];
        for t in 1..=h + 1 {
            let mut per_u = Vec::with_capacity(na);
            for u in 0..na {
                let d = &self.denom[(t - 1) as usize][u];
                let trip = (0..self.spaces[e(t)].len()).filter_map(|i| {
                    let y = &self.spaces[e(t)][i];
                    if y.last_action() != Some(u) {
                        return None;
                    }
                    let g = self.parent[e(t - 1)][self.parent[e(t)][i]];
                    (d[g] > 0.0).then(|| (i, g, self.prob[e(t)][i] / d[g]))
                });
                per_u.push(ConditionalMatrix {
                    name: format!("N_{t}_u{u}"),
                    context: format!("P(Y_{t}, y_{} | Y_{}, u_{}={u})", t - 1, t - 2, t - 1),
                    rows: Axis::Observed(t),
                    cols: Axis::Observed(t - 2),
                    matrix: SparseMatrix::from_triplets(self.spaces[e(t)].len(), self.spaces[e(t - 2)].len(), trip.collect::<Vec<_>>()),
                });
            }
            two.push(per_u);
        }
        self.prior = ConditionalMatrix {
            name: "P_Y0".into(),
            context: "P(Y_0)".into(),
            rows: Axis::Observed(0),
            cols: Axis::Unit,
            matrix: SparseMatrix::from_triplets(
                self.spaces[1].len(),
                1,
                self.prob[1].iter().enumerate().map(|(i, &p)| (i, 0, p)).collect::<Vec<_>>(),
            ),
        };
        self.obs_given_prev = obs;
        self.two_step = two;
        self.empty_cells = empty;
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn sender_values(&self) -> &[f64] {
        &self.sender_values
    }

    /// `𝒴_t` for `t = −1..=T+1`.
    pub fn space(&self, t: i64) -> &IndexSet<Observation> {
        &self.spaces[e(t)]
    }

    /// `P(y_t)` for the `i`-th element of `𝒴_t`.
    pub fn prob(&self, t: i64, i: usize) -> f64 {
        self.prob[e(t)][i]
    }

    /// Index of `y_{t−1}` for the `i`-th element of `𝒴_t` (`t ≥ 0`).
    pub fn parent(&self, t: i64, i: usize) -> usize {
        self.parent[e(t)][i]
    }

    /// Indices in `𝒴_{t+1}` of the continuations of `y_t = i` (`t ≤ T`).
    pub fn children(&self, t: i64, i: usize) -> &[usize] {
        &self.children[e(t)][i]
    }

    /// `P(y_t, u_t = u)` for `0 ≤ t ≤ T`.
    pub fn joint(&self, t: usize, i: usize, u: usize) -> f64 {
        self.joint[t][i][u]
    }

    /// Index of `r_t` in the sender value set, for the `i`-th element of `𝒴_{t+1}`.
    pub fn reward_index(&self, t: usize, i: usize) -> usize {
        self.reward[t][i]
    }

    /// `C_t[u]`; `u` must be `None` exactly at `t = T + 1`.
    pub fn obs_given_prev(&self, t: usize, u: Option<usize>) -> Result<&ConditionalMatrix> {
        let m = match u {
            Some(u) if t <= self.horizon => self.obs_given_prev[t].get(u),
            None if t == self.horizon + 1 => self.obs_given_prev[t].first(),
            _ => None,
        };
        m.ok_or_else(|| Error::MissingMatrix(format!("P(Y_{t} | Y_{}, u={u:?})", t as i64 - 1)))
    }

    /// `N_t[u]` for `1 ≤ t ≤ T + 1`.
    pub fn two_step(&self, t: usize, u: usize) -> Result<&ConditionalMatrix> {
        (1..=self.horizon + 1)
            .contains(&t)
            .then(|| self.two_step[t].get(u))
            .flatten()
            .ok_or_else(|| Error::MissingMatrix(format!("P(Y_{t}, y_{} | Y_{}, u={u})", t as i64 - 1, t as i64 - 2)))
    }

    pub fn prior(&self) -> &ConditionalMatrix {
        &self.prior
    }

    /// `P(r_t, Y_{t+1} | Y_t, u_{t+1})`.
    pub fn reward_next(&self, t: usize, u_next: Option<usize>) -> Result<&ConditionalMatrix> {
        self.obs_given_prev(t + 1, u_next)
    }

    /// `P(r_t, Y_{t+1} | Y_{t−1}, u_t)`.
    pub fn reward_lag(&self, t: usize, u: usize) -> Result<&ConditionalMatrix> {
        self.two_step(t + 1, u)
    }

    /// Conditioning cells with no mass (columns left empty, never imputed).
    pub fn empty_cells(&self) -> &[String] {
        &self.empty_cells
    }

    pub fn hidden(&self) -> Option<&HiddenMatrices> {
        self.hidden.as_ref()
    }

    pub fn with_hidden(mut self, hidden: HiddenMatrices) -> Self {
        self.hidden = Some(hidden);
        self
    }

    /// Every stored matrix in a fixed order.
    pub fn matrices(&self) -> Vec<&ConditionalMatrix> {
        let mut out = vec![&self.prior];
        for per_u in &self.obs_given_prev {
            out.extend(per_u);
        }
        for per_u in &self.two_step {
            out.extend(per_u);
        }
        if let Some(h) = &self.hidden {
            for per_u in &h.state_given_prev {
                out.extend(per_u);
            }
        }
        out
    }

    /// Singular-value diagnostics for every `C_t[u]`. The required rank is
    /// `|𝒳_t|` when hidden counts are known.
    pub fn rank_diagnostics(&self, rel_threshold: f64) -> Vec<RankDiagnostics> {
        let mut out = Vec::new();
        for (t, per_u) in self.obs_given_prev.iter().enumerate() {
            for m in per_u {
                let (_, mut d) = pinv(&m.matrix, rel_threshold);
                d.name = m.name.clone();
                if let Some(h) = &self.hidden {
                    d = d.require(h.hidden_counts[t]);
                }
                out.push(d);
            }
        }
        out
    }

    /// Observation-action cells `(y_t, u)` with `P(y_t) > 0` but
    /// `P(y_t, u_t = u) = 0`: the rows of `C_t[u]` that cannot be inverted.
    pub fn unsupported_rows(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for t in 0..=self.horizon {
            for (i, row) in self.joint[t].iter().enumerate() {
                for (u, &p) in row.iter().enumerate() {
                    if p <= 0.0 {
                        out.push((t, i, u));
                    }
                }
            }
        }
        out
    }

    pub fn label(&self, axis: Axis, i: usize) -> String {
        match axis {
            Axis::Observed(t) => self.spaces[e(t)][i].to_string(),
            Axis::RewardObserved(t) => {
                let r = self.sender_values[self.reward[t as usize][i]];
                format!("r={r}|{}", self.spaces[e(t + 1)][i])
            }
            Axis::Hidden(t) => format!("x{t}#{i}"),
            Axis::Unit => "1".into(),
        }
    }

    /// One CSV per matrix: a header row of column labels, then one line per
    /// row label. Only rows and columns with a nonzero entry are written.
    pub fn dump_csv(&self, dir: &Path, hidden_labels: Option<&dyn Fn(usize, usize) -> String>) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for m in self.matrices() {
            let label = |axis: Axis, i: usize| match (axis, hidden_labels) {
                (Axis::Hidden(t), Some(f)) => f(t, i),
                _ => self.label(axis, i),
            };
            write_matrix_csv(&dir.join(format!("{}.csv", m.name)), m, label)?;
        }
        Ok(())
    }
}

pub(crate) fn write_matrix_csv(path: &Path, m: &ConditionalMatrix, label: impl Fn(Axis, usize) -> String) -> Result<()> {
    let rows: Vec<usize> = (0..m.matrix.nrows()).filter(|&r| !m.matrix.row(r).is_empty()).collect();
    let mut cols: Vec<usize> = m.matrix.entries().map(|(_, c, _)| c).collect();
    cols.sort_unstable();
    cols.dedup();
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(std::fs::File::create(path)?));
    let mut header = vec![m.context.clone()];
    header.extend(cols.iter().map(|&c| label(m.cols, c)));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![label(m.rows, r)];
        rec.extend(cols.iter().map(|&c| m.matrix.get(r, c).to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spp::{generate_dataset, EnvironmentSpec, MetaPolicy};
    use crate::presets;

    fn sample_bundle(confounded: bool, horizon: usize, n: usize) -> MatrixBundle {
        let env = EnvironmentSpec::from_config(presets::e2(confounded, horizon)).unwrap();
        let d = generate_dataset(&env, &MetaPolicy::uniform(2).unwrap(), "uniform", n, 3).unwrap();
        MatrixBundle::from_law(&ObservableLaw::from_dataset(&d).unwrap()).unwrap()
    }

    #[test]
    fn identical_records_give_unit_matrices() {
        let env = EnvironmentSpec::from_config(presets::degenerate(2, 1.0)).unwrap();
        let d = generate_dataset(&env, &MetaPolicy::uniform(1).unwrap(), "uniform", 10, 0).unwrap();
        let b = MatrixBundle::from_law(&ObservableLaw::from_dataset(&d).unwrap()).unwrap();
        for m in b.matrices() {
            assert_eq!((m.matrix.nrows(), m.matrix.ncols()), (1, 1), "{}", m.name);
            assert_eq!(m.matrix.get(0, 0), 1.0, "{}", m.name);
        }
        assert!(b.empty_cells().is_empty());
    }

    #[test]
    fn conditional_columns_sum_to_one() {
        let b = sample_bundle(true, 2, 500);
        for m in b.matrices() {
            for (c, s) in m.matrix.column_sums().into_iter().enumerate() {
                assert!(s == 0.0 || (s - 1.0).abs() <= 1e-12, "{} column {c} sums to {s}", m.name);
            }
        }
    }

    #[test]
    fn single_record_flags_deficient_cells() {
        let b = sample_bundle(true, 1, 1);
        assert!(!b.empty_cells().is_empty());
        assert!(!b.unsupported_rows().is_empty());
        for d in b.rank_diagnostics(1e-9) {
            assert!(d.effective_rank <= 1);
        }
    }

    #[test]
    fn reward_heads_are_views_of_stored_matrices() {
        let b = sample_bundle(false, 1, 200);
        assert_eq!(b.reward_next(0, Some(1)).unwrap(), b.obs_given_prev(1, Some(1)).unwrap());
        assert_eq!(b.reward_lag(1, 0).unwrap(), b.two_step(2, 0).unwrap());
        assert!(matches!(b.reward_next(1, Some(0)), Err(Error::MissingMatrix(_))));
        assert!(matches!(b.two_step(0, 0), Err(Error::MissingMatrix(_))));
    }
}
