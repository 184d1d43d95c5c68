//! Exact reference computation of path probabilities.
//!
//! Works on the product of the state space with the remaining tick budget,
//! decomposes it into strongly connected components and, inside each
//! component, enumerates every memoryless deterministic scheduler and solves
//! the resulting linear system over big rationals. Deliberately slow and
//! simple; meant for cross-checking value iteration on small models.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{PathFormula, ProbCmp, Quantifier, StateFormula};
use crate::statespace::{Choice, Mdp, Transition};

/// Upper bound on the schedulers enumerated inside one component.
pub const POLICY_LIMIT: u64 = 1 << 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("component needs {0} schedulers, more than the enumeration limit")]
    TooLarge(u64),
    #[error("state {0} was not expanded")]
    Truncated(usize),
    #[error("atom {0} is not registered")]
    UnregisteredAtom(String),
    #[error("probability {0} is not a finite number")]
    NotFinite(f64),
}

fn to_big(t: &Transition) -> Result<BigRational, OracleError> {
    match t.exact {
        Some(r) => Ok(BigRational::new(
            BigInt::from(*r.numer()),
            BigInt::from(*r.denom()),
        )),
        None => BigRational::from_float(t.prob).ok_or(OracleError::NotFinite(t.prob)),
    }
}

fn bound_to_big(v: &crate::number::Real) -> Result<BigRational, OracleError> {
    match v.exact() {
        Some(r) => Ok(BigRational::new(
            BigInt::from(*r.numer()),
            BigInt::from(*r.denom()),
        )),
        None => BigRational::from_float(v.value()).ok_or(OracleError::NotFinite(v.value())),
    }
}

/// Exact satisfaction set of a state formula. Probability bounds use the
/// maximum for `<`/`<=`, the minimum for `>`/`>=` and both for `=`.
pub fn oracle_sat(mdp: &Mdp, f: &StateFormula) -> Result<Vec<bool>, OracleError> {
    let n = mdp.len();
    Ok(match f {
        StateFormula::True => vec![true; n],
        StateFormula::Atom(e) => {
            let i = mdp
                .atom_index(e)
                .ok_or_else(|| OracleError::UnregisteredAtom(e.to_string()))?;
            (0..n).map(|s| mdp.labels[i].contains(&s)).collect()
        }
        StateFormula::Not(x) => oracle_sat(mdp, x)?.into_iter().map(|b| !b).collect(),
        StateFormula::And(x, y) => oracle_sat(mdp, x)?
            .into_iter()
            .zip(oracle_sat(mdp, y)?)
            .map(|(a, b)| a && b)
            .collect(),
        StateFormula::Prob { cmp, bound, path } => {
            let p = bound_to_big(bound)?;
            let holds = |v: &BigRational| match cmp {
                ProbCmp::Lt => *v < p,
                ProbCmp::Le => *v <= p,
                ProbCmp::Gt => *v > p,
                ProbCmp::Ge => *v >= p,
                ProbCmp::Eq => *v == p,
            };
            let max = brute_force_prob(mdp, path, Quantifier::Max)?;
            let min = brute_force_prob(mdp, path, Quantifier::Min)?;
            (0..n)
                .map(|s| match cmp {
                    ProbCmp::Lt | ProbCmp::Le => holds(&max[s]),
                    ProbCmp::Gt | ProbCmp::Ge => holds(&min[s]),
                    ProbCmp::Eq => holds(&max[s]) && holds(&min[s]),
                })
                .collect()
        }
    })
}

/// Exact minimum or maximum probability of `path` from every state.
pub fn brute_force_prob(
    mdp: &Mdp,
    path: &PathFormula,
    q: Quantifier,
) -> Result<Vec<BigRational>, OracleError> {
    match path {
        PathFormula::Next(x) => next(mdp, &oracle_sat(mdp, x)?, q),
        PathFormula::Until(a, b) => {
            let (a, b) = (oracle_sat(mdp, a)?, oracle_sat(mdp, b)?);
            Product::new(mdp, &a, &b, None)?.solve(q)
        }
        PathFormula::BoundedUntil(a, b, k) => {
            let (a, b) = (oracle_sat(mdp, a)?, oracle_sat(mdp, b)?);
            Product::new(mdp, &a, &b, Some(*k as usize))?.solve(q)
        }
    }
}

fn indicator(b: bool) -> BigRational {
    if b {
        BigRational::one()
    } else {
        BigRational::zero()
    }
}

fn pick(q: Quantifier, a: BigRational, b: BigRational) -> BigRational {
    match q {
        Quantifier::Min => a.min(b),
        Quantifier::Max => a.max(b),
    }
}

fn next(mdp: &Mdp, goal: &[bool], q: Quantifier) -> Result<Vec<BigRational>, OracleError> {
    (0..mdp.len())
        .map(|s| match &mdp.choices[s] {
            Choice::Terminal => Ok(indicator(goal[s])),
            Choice::Truncated => Err(OracleError::Truncated(s)),
            Choice::Probabilistic(ts) => {
                let mut sum = BigRational::zero();
                for t in ts.iter().filter(|t| goal[t.target]) {
                    sum += to_big(t)?;
                }
                Ok(sum)
            }
            Choice::Nondeterministic(ts) => Ok(ts
                .iter()
                .map(|t| indicator(goal[t.target]))
                .reduce(|a, b| pick(q, a, b))
                .unwrap_or_else(BigRational::zero)),
        })
        .collect()
}

/// One action of a product node: a constant contribution plus weighted
/// edges to undetermined nodes.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Action {
    constant: BigRational,
    edges: BTreeMap<usize, BigRational>,
}

/// Product of states with the remaining tick budget. Node `s * layers + r`
/// is state `s` with `r` ticks left.
struct Product {
    layers: usize,
    value: Vec<Option<BigRational>>,
    /// Raw actions as (tick, target state, probability) lists.
    actions: Vec<Vec<Vec<(bool, usize, BigRational)>>>,
    bounded: bool,
}

impl Product {
    fn new(mdp: &Mdp, a: &[bool], b: &[bool], k: Option<usize>) -> Result<Product, OracleError> {
        let layers = k.map_or(1, |k| k + 1);
        let mut value = Vec::new();
        let mut actions = Vec::new();
        for s in 0..mdp.len() {
            let fixed = if b[s] {
                Some(BigRational::one())
            } else if !a[s] {
                Some(BigRational::zero())
            } else {
                match &mdp.choices[s] {
                    Choice::Terminal => Some(BigRational::zero()),
                    Choice::Truncated => return Err(OracleError::Truncated(s)),
                    _ => None,
                }
            };
            let acts: Vec<Vec<(bool, usize, BigRational)>> = match &mdp.choices[s] {
                Choice::Probabilistic(ts) => {
                    vec![ts
                        .iter()
                        .map(|t| Ok((t.tick, t.target, to_big(t)?)))
                        .collect::<Result<_, OracleError>>()?]
                }
                Choice::Nondeterministic(ts) => ts
                    .iter()
                    .map(|t| vec![(t.tick, t.target, BigRational::one())])
                    .collect(),
                _ => Vec::new(),
            };
            for _ in 0..layers {
                value.push(fixed.clone());
                actions.push(acts.clone());
            }
        }
        Ok(Product {
            layers,
            value,
            actions,
            bounded: k.is_some(),
        })
    }

    /// Where a raw transition from layer `r` leads: `None` when a tick
    /// exhausts the budget.
    fn target(&self, r: usize, tick: bool, s: usize) -> Option<usize> {
        if self.bounded && tick {
            (r > 0).then(|| s * self.layers + r - 1)
        } else {
            Some(s * self.layers + r)
        }
    }

    fn solve(mut self, q: Quantifier) -> Result<Vec<BigRational>, OracleError> {
        let n = self.value.len();
        let graph: Vec<Vec<usize>> = (0..n)
            .map(|v| {
                if self.value[v].is_some() {
                    return Vec::new();
                }
                let r = v % self.layers;
                let mut out: Vec<usize> = self.actions[v]
                    .iter()
                    .flatten()
                    .filter_map(|(tick, s, _)| self.target(r, *tick, *s))
                    .filter(|&w| self.value[w].is_none())
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect();
        for comp in tarjan(&graph) {
            if self.value[comp[0]].is_some() {
                continue;
            }
            self.solve_component(&comp, q)?;
        }
        let top = self.layers - 1;
        Ok((0..n / self.layers)
            .map(|s| {
                self.value[s * self.layers + top]
                    .clone()
                    .expect("all nodes solved")
            })
            .collect())
    }

    fn solve_component(&mut self, comp: &[usize], q: Quantifier) -> Result<(), OracleError> {
        let local: BTreeMap<usize, usize> = comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut options: Vec<Vec<Action>> = Vec::with_capacity(comp.len());
        for &v in comp {
            let r = v % self.layers;
            let mut acts: Vec<Action> = Vec::new();
            for raw in &self.actions[v] {
                let mut act = Action {
                    constant: BigRational::zero(),
                    edges: BTreeMap::new(),
                };
                for (tick, s, p) in raw {
                    match self.target(r, *tick, *s) {
                        None => {}
                        Some(w) => match local.get(&w) {
                            Some(&i) => *act.edges.entry(i).or_insert_with(BigRational::zero) += p,
                            None => {
                                let val = self.value[w]
                                    .as_ref()
                                    .expect("reachable components are solved first");
                                act.constant += p * val;
                            }
                        },
                    }
                }
                acts.push(act);
            }
            acts.sort();
            acts.dedup();
            options.push(acts);
        }
        let count = options
            .iter()
            .try_fold(1u64, |acc, o| acc.checked_mul(o.len() as u64))
            .unwrap_or(u64::MAX);
        if count > POLICY_LIMIT {
            return Err(OracleError::TooLarge(count));
        }
        let mut best: Option<Vec<BigRational>> = None;
        let mut choice = vec![0usize; comp.len()];
        loop {
            let policy: Vec<&Action> = choice.iter().zip(&options).map(|(&c, o)| &o[c]).collect();
            let x = solve_policy(&policy);
            best = Some(match best {
                None => x,
                Some(b) => b.into_iter().zip(x).map(|(a, b)| pick(q, a, b)).collect(),
            });
            // Advance the mixed-radix counter over action choices.
            let mut i = 0;
            loop {
                if i == choice.len() {
                    let best = best.expect("at least one scheduler");
                    for (&v, val) in comp.iter().zip(best) {
                        self.value[v] = Some(val);
                    }
                    return Ok(());
                }
                choice[i] += 1;
                if choice[i] < options[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }
}

/// Solves `x = A x + c` for one fixed scheduler. Nodes that cannot reach a
/// positive constant have value 0; the remaining system is nonsingular.
fn solve_policy(policy: &[&Action]) -> Vec<BigRational> {
    let n = policy.len();
    let mut live: Vec<bool> = policy.iter().map(|a| !a.constant.is_zero()).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            if !live[i]
                && policy[i]
                    .edges
                    .iter()
                    .any(|(&j, p)| live[j] && !p.is_zero())
            {
                live[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let idx: Vec<usize> = (0..n).filter(|&i| live[i]).collect();
    let pos: BTreeMap<usize, usize> = idx.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let m = idx.len();
    // Augmented matrix of (I - A) x = c.
    let mut mat: Vec<Vec<BigRational>> = idx
        .iter()
        .enumerate()
        .map(|(row, &i)| {
            let mut r = vec![BigRational::zero(); m + 1];
            r[row] = BigRational::one();
            for (j, p) in &policy[i].edges {
                if let Some(&col) = pos.get(j) {
                    r[col] -= p;
                }
            }
            r[m] = policy[i].constant.clone();
            r
        })
        .collect();
    for col in 0..m {
        let pivot = (col..m)
            .find(|&r| !mat[r][col].is_zero())
            .expect("reachability makes the system nonsingular");
        mat.swap(col, pivot);
        let inv = mat[col][col].recip();
        for v in mat[col].iter_mut() {
            *v *= &inv;
        }
        for r in 0..m {
            if r != col && !mat[r][col].is_zero() {
                let factor = mat[r][col].clone();
                for c in col..=m {
                    let delta = &factor * &mat[col][c];
                    mat[r][c] -= delta;
                }
            }
        }
    }
    let mut x = vec![BigRational::zero(); n];
    for (k, &i) in idx.iter().enumerate() {
        x[i] = mat[k][m].clone();
    }
    x
}

/// Strongly connected components, each listed after every component it
/// can reach.
fn tarjan(graph: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = graph.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut counter = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = work.last_mut() {
            if let Some(&w) = graph[v].get(*next) {
                *next += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("component root on stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    out.push(comp);
                }
            }
        }
    }
    out
}
