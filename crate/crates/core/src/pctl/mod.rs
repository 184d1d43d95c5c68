//! PCTL model checking over explored state spaces.
//!
//! State formulas are evaluated bottom-up into three-valued state sets:
//! a state of a truncated exploration may be undecided. Probabilities are
//! computed with Jacobi value iteration for both the minimising and the
//! maximising scheduler, once treating unexplored states as failures and
//! once as successes, which brackets the true value.
//!
//! Bounded until counts time in ticks: only `tick` transitions consume the
//! bound, any number of other steps may happen between two ticks.

mod formula;
mod oracle;

use std::fmt;

use crate::ast::BoolExpr;
use crate::statespace::{Choice, Mdp};

pub use formula::{PathFormula, ProbCmp, StateFormula};
pub use oracle::{brute_force_prob, oracle_sat, OracleError};

/// Absolute tolerance for value iteration convergence.
pub const VI_TOLERANCE: f64 = 1e-10;
/// Tolerance for comparisons against probability bounds.
pub const BOUND_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quantifier {
    Min,
    Max,
}

impl fmt::Display for Quantifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantifier::Min => "min",
            Quantifier::Max => "max",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    /// Forces one scheduler quantifier for every probability bound. By
    /// default `<`/`<=` use the maximum, `>`/`>=` the minimum and `=` both.
    pub quantifier: Option<Quantifier>,
    pub max_iterations: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            quantifier: None,
            max_iterations: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckError {
    #[error("atom {0} was not registered when the state space was built")]
    UnregisteredAtom(String),
    #[error(
        "value iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },
}

/// Three-valued truth of a state formula in one state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl Truth {
    fn not(self) -> Truth {
        match self {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Unknown => Truth::Unknown,
        }
    }

    fn and(self, other: Truth) -> Truth {
        match (self, other) {
            (Truth::False, _) | (_, Truth::False) => Truth::False,
            (Truth::True, Truth::True) => Truth::True,
            _ => Truth::Unknown,
        }
    }
}

/// Per-state probabilities of a path formula. `lo` vectors treat
/// unexplored states as failures, `hi` vectors as successes; on complete
/// state spaces they coincide.
#[derive(Clone, Debug, PartialEq)]
pub struct Probabilities {
    pub min_lo: Vec<f64>,
    pub min_hi: Vec<f64>,
    pub max_lo: Vec<f64>,
    pub max_hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    /// Truth of the formula in every state.
    pub truth: Vec<Truth>,
    pub verdict: bool,
    /// True when unexplored states leave the initial verdict undecided.
    pub approximate: bool,
    /// Probabilities of the outermost probability bound, leftmost first.
    pub probabilities: Option<Probabilities>,
    pub initial: usize,
}

impl CheckResult {
    pub fn satisfying_states(&self) -> Vec<usize> {
        self.truth
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == Truth::True)
            .map(|(i, _)| i)
            .collect()
    }

    /// Lower end of the minimum probability at the initial state.
    pub fn pmin(&self) -> Option<f64> {
        self.probabilities.as_ref().map(|p| p.min_lo[self.initial])
    }

    /// Upper end of the maximum probability at the initial state.
    pub fn pmax(&self) -> Option<f64> {
        self.probabilities.as_ref().map(|p| p.max_hi[self.initial])
    }
}

/// Checks `f` on every state of `mdp`; the verdict is the initial state's.
pub fn check(mdp: &Mdp, f: &StateFormula, opts: &CheckOptions) -> Result<CheckResult, CheckError> {
    let checker = Checker { mdp, opts };
    let (truth, probabilities) = checker.state(f)?;
    let t = truth[mdp.initial];
    Ok(CheckResult {
        verdict: t == Truth::True,
        approximate: t == Truth::Unknown,
        truth,
        probabilities,
        initial: mdp.initial,
    })
}

struct Checker<'a> {
    mdp: &'a Mdp,
    opts: &'a CheckOptions,
}

fn bound_holds(cmp: ProbCmp, v: f64, p: f64) -> bool {
    match cmp {
        ProbCmp::Lt => v < p - BOUND_TOLERANCE,
        ProbCmp::Le => v <= p + BOUND_TOLERANCE,
        ProbCmp::Gt => v > p + BOUND_TOLERANCE,
        ProbCmp::Ge => v >= p - BOUND_TOLERANCE,
        ProbCmp::Eq => (v - p).abs() <= BOUND_TOLERANCE,
    }
}

/// Which side of the bracket is being computed.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Lo,
    Hi,
}

impl Checker<'_> {
    fn atom(&self, e: &BoolExpr) -> Result<Vec<Truth>, CheckError> {
        let i = self
            .mdp
            .atom_index(e)
            .ok_or_else(|| CheckError::UnregisteredAtom(e.to_string()))?;
        Ok((0..self.mdp.len())
            .map(|s| {
                if self.mdp.labels[i].contains(&s) {
                    Truth::True
                } else {
                    Truth::False
                }
            })
            .collect())
    }

    fn state(&self, f: &StateFormula) -> Result<(Vec<Truth>, Option<Probabilities>), CheckError> {
        let n = self.mdp.len();
        Ok(match f {
            StateFormula::True => (vec![Truth::True; n], None),
            StateFormula::Atom(e) => (self.atom(e)?, None),
            StateFormula::Not(x) => {
                let (t, p) = self.state(x)?;
                (t.into_iter().map(Truth::not).collect(), p)
            }
            StateFormula::And(x, y) => {
                let ((a, pa), (b, pb)) = (self.state(x)?, self.state(y)?);
                (
                    a.into_iter().zip(b).map(|(a, b)| a.and(b)).collect(),
                    pa.or(pb),
                )
            }
            StateFormula::Prob { cmp, bound, path } => {
                let probs = self.path(path)?;
                let p = bound.value();
                let uses = |q: Quantifier| match self.opts.quantifier {
                    Some(forced) => forced == q,
                    None => match cmp {
                        ProbCmp::Lt | ProbCmp::Le => q == Quantifier::Max,
                        ProbCmp::Gt | ProbCmp::Ge => q == Quantifier::Min,
                        ProbCmp::Eq => true,
                    },
                };
                let truth = (0..n)
                    .map(|s| {
                        [
                            (Quantifier::Min, probs.min_lo[s], probs.min_hi[s]),
                            (Quantifier::Max, probs.max_lo[s], probs.max_hi[s]),
                        ]
                        .into_iter()
                        .filter(|(q, _, _)| uses(*q))
                        .map(|(_, lo, hi)| interval_truth(*cmp, lo, hi, p))
                        .fold(Truth::True, Truth::and)
                    })
                    .collect();
                (truth, Some(probs))
            }
        })
    }

    fn path(&self, path: &PathFormula) -> Result<Probabilities, CheckError> {
        let exact = !self.mdp.is_truncated();
        let run = |side: Side| -> Result<(Vec<f64>, Vec<f64>), CheckError> {
            Ok((
                self.path_side(path, Quantifier::Min, side)?,
                self.path_side(path, Quantifier::Max, side)?,
            ))
        };
        let (min_lo, max_lo) = run(Side::Lo)?;
        let (min_hi, max_hi) = if exact && !self.has_unknown(path)? {
            (min_lo.clone(), max_lo.clone())
        } else {
            run(Side::Hi)?
        };
        // Iteration from 0 under-approximates every vector, and the true
        // values satisfy min <= max and lo <= hi, so raising the larger side
        // to the smaller one stays below the true value.
        let raise = |v: Vec<f64>, floor: &[f64]| -> Vec<f64> {
            v.into_iter().zip(floor).map(|(x, f)| x.max(*f)).collect()
        };
        let max_lo = raise(max_lo, &min_lo);
        let min_hi = raise(min_hi, &min_lo);
        let max_hi = raise(raise(max_hi, &max_lo), &min_hi);
        Ok(Probabilities {
            min_lo,
            min_hi,
            max_lo,
            max_hi,
        })
    }

    fn has_unknown(&self, path: &PathFormula) -> Result<bool, CheckError> {
        let subs: Vec<&StateFormula> = match path {
            PathFormula::Next(x) => vec![x],
            PathFormula::BoundedUntil(a, b, _) | PathFormula::Until(a, b) => vec![a, b],
        };
        for f in subs {
            if self.state(f)?.0.contains(&Truth::Unknown) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// State set of a subformula on one side of the bracket: undecided
    /// states count as false on the low side and true on the high side.
    fn side_set(&self, f: &StateFormula, side: Side) -> Result<Vec<bool>, CheckError> {
        Ok(self
            .state(f)?
            .0
            .into_iter()
            .map(|t| t == Truth::True || (side == Side::Hi && t == Truth::Unknown))
            .collect())
    }

    fn path_side(
        &self,
        path: &PathFormula,
        q: Quantifier,
        side: Side,
    ) -> Result<Vec<f64>, CheckError> {
        let unexplored = if side == Side::Lo { 0.0 } else { 1.0 };
        match path {
            PathFormula::Next(x) => {
                let goal = self.side_set(x, side)?;
                Ok((0..self.mdp.len())
                    .map(|s| match &self.mdp.choices[s] {
                        Choice::Terminal => f64::from(u8::from(goal[s])),
                        Choice::Truncated => unexplored,
                        Choice::Probabilistic(ts) => {
                            ts.iter().filter(|t| goal[t.target]).map(|t| t.prob).sum()
                        }
                        Choice::Nondeterministic(ts) => {
                            optimum(q, ts.iter().map(|t| f64::from(u8::from(goal[t.target]))))
                        }
                    })
                    .collect())
            }
            PathFormula::Until(a, b) => {
                let (a, b) = (self.side_set(a, side)?, self.side_set(b, side)?);
                self.until(&a, &b, q, unexplored, None)
            }
            PathFormula::BoundedUntil(a, b, k) => {
                let (a, b) = (self.side_set(a, side)?, self.side_set(b, side)?);
                let mut below: Option<Vec<f64>> = None;
                for _ in 0..=*k {
                    let layer =
                        self.until(&a, &b, q, unexplored, Some(below.as_deref().unwrap_or(&[])))?;
                    below = Some(layer);
                }
                Ok(below.expect("at least one layer"))
            }
        }
    }

    /// Least fixpoint of `a U b`. With `ticks = Some(below)`, tick
    /// transitions leave the layer and are worth `below[target]` (0 when
    /// `below` is empty); other transitions stay in the layer.
    fn until(
        &self,
        a: &[bool],
        b: &[bool],
        q: Quantifier,
        unexplored: f64,
        ticks: Option<&[f64]>,
    ) -> Result<Vec<f64>, CheckError> {
        let n = self.mdp.len();
        let fixed: Vec<Option<f64>> = (0..n)
            .map(|s| {
                if b[s] {
                    Some(1.0)
                } else if !a[s] {
                    Some(0.0)
                } else {
                    match self.mdp.choices[s] {
                        Choice::Terminal => Some(0.0),
                        Choice::Truncated => Some(unexplored),
                        _ => None,
                    }
                }
            })
            .collect();
        let zero = self.prob0(&fixed, q, ticks);
        // Layers of a bounded until rarely have cycles, so value iteration is
        // exact there; unbounded untils get exact ones from the graph.
        let fixed: Vec<Option<f64>> = match ticks {
            None => {
                let one = self.prob1(&fixed, &zero, q);
                (0..n)
                    .map(|s| if one[s] { Some(1.0) } else { fixed[s] })
                    .collect()
            }
            Some(_) => fixed,
        };
        let mut x: Vec<f64> = (0..n).map(|s| fixed[s].unwrap_or(0.0)).collect();
        let value = |t: &crate::statespace::Transition, x: &[f64]| match ticks {
            Some(below) if t.tick => below.get(t.target).copied().unwrap_or(0.0),
            _ => x[t.target],
        };
        for iteration in 0..self.opts.max_iterations {
            let next: Vec<f64> = (0..n)
                .map(|s| {
                    if let Some(v) = fixed[s] {
                        return v;
                    }
                    if zero[s] {
                        return 0.0;
                    }
                    match &self.mdp.choices[s] {
                        Choice::Probabilistic(ts) => ts.iter().map(|t| t.prob * value(t, &x)).sum(),
                        Choice::Nondeterministic(ts) => optimum(q, ts.iter().map(|t| value(t, &x))),
                        _ => unreachable!("fixed above"),
                    }
                })
                .collect();
            let residual = next
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            x = next;
            if residual < VI_TOLERANCE {
                return Ok(x);
            }
            if iteration + 1 == self.opts.max_iterations {
                return Err(CheckError::NonConvergence {
                    iterations: iteration + 1,
                    residual,
                });
            }
        }
        Ok(x)
    }

    /// States whose probability is 0: for the maximum, those that cannot
    /// reach a positive fixed state at all; for the minimum, those where
    /// some scheduler avoids every positive fixed state forever.
    fn prob0(&self, fixed: &[Option<f64>], q: Quantifier, ticks: Option<&[f64]>) -> Vec<bool> {
        let n = self.mdp.len();
        // A transition leads somewhere positive if its target is in `pos`,
        // or it is a tick leaving the layer towards a positive value.
        let positive_exit = |t: &crate::statespace::Transition| match ticks {
            Some(below) if t.tick => Some(below.get(t.target).copied().unwrap_or(0.0) > 0.0),
            _ => None,
        };
        let mut pos: Vec<bool> = (0..n).map(|s| fixed[s].is_some_and(|v| v > 0.0)).collect();
        loop {
            let mut changed = false;
            for s in 0..n {
                if pos[s] || fixed[s].is_some() {
                    continue;
                }
                let reaches =
                    |t: &crate::statespace::Transition| positive_exit(t).unwrap_or(pos[t.target]);
                let now = match (&self.mdp.choices[s], q) {
                    (Choice::Probabilistic(ts), _) => ts.iter().any(|t| t.prob > 0.0 && reaches(t)),
                    (Choice::Nondeterministic(ts), Quantifier::Max) => ts.iter().any(reaches),
                    (Choice::Nondeterministic(ts), Quantifier::Min) => ts.iter().all(reaches),
                    _ => false,
                };
                if now {
                    pos[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        (0..n).map(|s| fixed[s].is_none() && !pos[s]).collect()
    }

    /// Undetermined states whose unbounded-until probability is exactly 1.
    /// For the minimum these are the states from which no path through
    /// undetermined states reaches a state of value 0; for the maximum, the
    /// greatest set in which some choice keeps every step inside the set
    /// while still making progress towards the goal.
    fn prob1(&self, fixed: &[Option<f64>], zero: &[bool], q: Quantifier) -> Vec<bool> {
        let n = self.mdp.len();
        let goal: Vec<bool> = (0..n).map(|s| fixed[s] == Some(1.0)).collect();
        let open = |s: usize| fixed[s].is_none() && !zero[s];
        match q {
            Quantifier::Min => {
                let mut bad: Vec<bool> = (0..n).map(|s| !goal[s] && !open(s)).collect();
                loop {
                    let mut changed = false;
                    for s in 0..n {
                        if !open(s) || bad[s] {
                            continue;
                        }
                        if self.mdp.choices[s]
                            .transitions()
                            .iter()
                            .any(|t| bad[t.target])
                        {
                            bad[s] = true;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                (0..n).map(|s| open(s) && !bad[s]).collect()
            }
            Quantifier::Max => {
                let mut inside: Vec<bool> = (0..n).map(|s| goal[s] || open(s)).collect();
                loop {
                    let mut reach = goal.clone();
                    loop {
                        let mut changed = false;
                        for s in 0..n {
                            if !inside[s] || reach[s] {
                                continue;
                            }
                            let now = match &self.mdp.choices[s] {
                                Choice::Probabilistic(ts) => {
                                    ts.iter().all(|t| inside[t.target])
                                        && ts.iter().any(|t| reach[t.target])
                                }
                                Choice::Nondeterministic(ts) => ts.iter().any(|t| reach[t.target]),
                                _ => false,
                            };
                            if now {
                                reach[s] = true;
                                changed = true;
                            }
                        }
                        if !changed {
                            break;
                        }
                    }
                    if reach == inside {
                        break;
                    }
                    inside = reach;
                }
                (0..n).map(|s| open(s) && inside[s]).collect()
            }
        }
    }
}

/// Truth of a bound for a probability known to lie in `[lo, hi]`.
fn interval_truth(cmp: ProbCmp, lo: f64, hi: f64, p: f64) -> Truth {
    let all = bound_holds(cmp, lo, p) && bound_holds(cmp, hi, p);
    let none = match cmp {
        ProbCmp::Eq => hi < p - BOUND_TOLERANCE || lo > p + BOUND_TOLERANCE,
        _ => !bound_holds(cmp, lo, p) && !bound_holds(cmp, hi, p),
    };
    match (all, none) {
        (true, _) => Truth::True,
        (_, true) => Truth::False,
        _ => Truth::Unknown,
    }
}

fn optimum(q: Quantifier, values: impl Iterator<Item = f64>) -> f64 {
    match q {
        Quantifier::Min => values.fold(f64::INFINITY, f64::min),
        Quantifier::Max => values.fold(f64::NEG_INFINITY, f64::max),
    }
}
