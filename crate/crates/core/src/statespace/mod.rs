//! Explicit-state exploration of a model into a Markov decision process.
//!
//! States are canonical configurations numbered in breadth-first order;
//! successors are visited in sorted order, so numbering is deterministic.
//! A state either offers one probability distribution, a set of labelled
//! nondeterministic actions (each leading to a single state), or nothing.

mod export;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::ast::{BoolExpr, Model};
use crate::env::{Ctx, EvalError};
use crate::number::{Rational, Real};
use crate::semantics::{
    successors, Configuration, ExploreOptions, Label, SemanticsError, StepKind, Successor,
};

pub use export::{export, export_to_strings, state_hash, ExportFiles};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub target: usize,
    pub prob: f64,
    /// Exact probability when every weight on the way was rational.
    pub exact: Option<Rational>,
    pub tick: bool,
    pub label: Option<Label>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Choice {
    /// No outgoing transitions.
    Terminal,
    /// Not expanded because an exploration bound was hit.
    Truncated,
    /// One distribution over successor states.
    Probabilistic(Vec<Transition>),
    /// Labelled actions, each a Dirac transition.
    Nondeterministic(Vec<Transition>),
}

impl Choice {
    pub fn transitions(&self) -> &[Transition] {
        match self {
            Choice::Probabilistic(t) | Choice::Nondeterministic(t) => t,
            _ => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    pub configs: Vec<Configuration>,
    pub initial: usize,
    pub choices: Vec<Choice>,
    pub atoms: Vec<BoolExpr>,
    /// For each atom, the states where it holds.
    pub labels: Vec<BTreeSet<usize>>,
    pub depth: Vec<usize>,
}

impl Mdp {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn atom_index(&self, e: &BoolExpr) -> Option<usize> {
        self.atoms.iter().position(|a| a == e)
    }

    pub fn transition_count(&self) -> usize {
        self.choices.iter().map(|c| c.transitions().len()).sum()
    }

    pub fn is_truncated(&self) -> bool {
        self.choices.iter().any(|c| matches!(c, Choice::Truncated))
    }

    /// Atom indices holding in `state`.
    pub fn state_atoms(&self, state: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, set)| set.contains(&state))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildReport {
    pub states: usize,
    pub transitions: usize,
    pub truncated: bool,
    pub truncation_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("in state {state}: {source}")]
    Semantics {
        state: String,
        source: SemanticsError,
    },
    #[error("atom {atom}: {source}")]
    Atom { atom: String, source: EvalError },
    #[error("atom {0} mentions `here`")]
    AtomMentionsHere(String),
}

impl BuildError {
    pub fn is_internal(&self) -> bool {
        matches!(self, BuildError::Semantics { source, .. } if source.is_internal())
    }
}

#[derive(Clone, Debug, Default)]
pub struct BuildOptions {
    pub explore: ExploreOptions,
    /// Worker threads for successor computation; 0 or 1 is sequential.
    pub threads: usize,
}

impl From<ExploreOptions> for BuildOptions {
    fn from(explore: ExploreOptions) -> Self {
        BuildOptions {
            explore,
            threads: 1,
        }
    }
}

enum Expansion {
    Done(Vec<Successor>),
    Bounded(String),
    AtDepth,
    AtTicks,
}

fn expand(
    c: &Configuration,
    depth: usize,
    ticks: u64,
    model: &Model,
    opts: &ExploreOptions,
) -> Result<Expansion, BuildError> {
    match successors(c, model, opts) {
        Ok(s) if s.is_empty() => Ok(Expansion::Done(s)),
        Ok(_) if opts.max_depth.is_some_and(|d| depth >= d) => Ok(Expansion::AtDepth),
        Ok(_) if opts.max_ticks.is_some_and(|k| ticks >= k) => Ok(Expansion::AtTicks),
        Ok(s) => Ok(Expansion::Done(s)),
        Err(e @ SemanticsError::StateBoundExceeded { .. }) => Ok(Expansion::Bounded(e.to_string())),
        Err(source) => Err(BuildError::Semantics {
            state: c.digest(),
            source,
        }),
    }
}

/// Merges equal probabilistic targets and sorts nondeterministic actions.
fn normalize(succ: Vec<Successor>) -> (bool, Vec<(Option<Label>, Real, Configuration)>) {
    let probabilistic = succ
        .first()
        .is_some_and(|s| matches!(s.kind, StepKind::Prob(_)));
    if probabilistic {
        let mut merged: BTreeMap<Configuration, Real> = BTreeMap::new();
        for s in succ {
            let StepKind::Prob(w) = s.kind else {
                unreachable!("fan-outs never mix")
            };
            let e = merged.entry(s.config).or_insert_with(Real::zero);
            *e = *e + w;
        }
        (
            true,
            merged.into_iter().map(|(c, w)| (None, w, c)).collect(),
        )
    } else {
        let mut actions: BTreeSet<(Label, Configuration)> = BTreeSet::new();
        for s in succ {
            let StepKind::Nondet(l) = s.kind else {
                unreachable!("fan-outs never mix")
            };
            actions.insert((l, s.config));
        }
        (
            false,
            actions
                .into_iter()
                .map(|(l, c)| (Some(l), Real::one(), c))
                .collect(),
        )
    }
}

/// Explores the reachable configurations of `model` breadth-first and labels
/// each state with the atoms that hold in its environment.
pub fn build(
    model: &Model,
    atoms: &[BoolExpr],
    opts: &BuildOptions,
) -> Result<(Mdp, BuildReport), BuildError> {
    for a in atoms {
        if a.mentions_here() {
            return Err(BuildError::AtomMentionsHere(a.to_string()));
        }
    }
    let pool = (opts.threads > 1)
        .then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(opts.threads)
                .build()
                .ok()
        })
        .flatten();

    let initial = Configuration::initial(model);
    let mut index: HashMap<Configuration, usize> = HashMap::new();
    let mut configs = vec![initial.clone()];
    let mut depth = vec![0usize];
    // Ticks on the path that first discovered each state.
    let mut ticks = vec![0u64];
    let mut choices: Vec<Option<Choice>> = vec![None];
    index.insert(initial, 0);
    let mut reason: Option<String> = None;

    let mut frontier: Vec<usize> = vec![0];
    while !frontier.is_empty() {
        let work = |&i: &usize| expand(&configs[i], depth[i], ticks[i], model, &opts.explore);
        let expanded: Vec<Result<Expansion, BuildError>> = match &pool {
            Some(pool) => pool.install(|| frontier.par_iter().map(work).collect()),
            None => frontier.iter().map(work).collect(),
        };
        let mut next = Vec::new();
        for (&i, exp) in frontier.iter().zip(expanded) {
            let succ = match exp? {
                Expansion::Done(s) => s,
                Expansion::Bounded(why) => {
                    reason.get_or_insert(why);
                    choices[i] = Some(Choice::Truncated);
                    continue;
                }
                Expansion::AtDepth => {
                    reason.get_or_insert_with(|| {
                        format!(
                            "depth bound {} reached",
                            opts.explore.max_depth.unwrap_or(0)
                        )
                    });
                    choices[i] = Some(Choice::Truncated);
                    continue;
                }
                Expansion::AtTicks => {
                    reason.get_or_insert_with(|| {
                        format!("tick bound {} reached", opts.explore.max_ticks.unwrap_or(0))
                    });
                    choices[i] = Some(Choice::Truncated);
                    continue;
                }
            };
            if succ.is_empty() {
                choices[i] = Some(Choice::Terminal);
                continue;
            }
            let (probabilistic, succ) = normalize(succ);
            if let Some(max) = opts.explore.max_states {
                let fresh = succ
                    .iter()
                    .filter(|(_, _, c)| !index.contains_key(c))
                    .collect::<BTreeSet<_>>()
                    .len();
                if configs.len() + fresh > max {
                    reason.get_or_insert_with(|| format!("state bound {max} reached"));
                    choices[i] = Some(Choice::Truncated);
                    continue;
                }
            }
            let mut transitions = Vec::with_capacity(succ.len());
            for (label, w, c) in succ {
                let target = match index.get(&c) {
                    Some(&t) => t,
                    None => {
                        let t = configs.len();
                        index.insert(c.clone(), t);
                        configs.push(c);
                        depth.push(depth[i] + 1);
                        ticks
                            .push(ticks[i] + u64::from(label.as_ref().is_some_and(Label::is_tick)));
                        choices.push(None);
                        next.push(t);
                        t
                    }
                };
                transitions.push(Transition {
                    target,
                    prob: w.value(),
                    exact: w.exact(),
                    tick: label.as_ref().is_some_and(Label::is_tick),
                    label,
                });
            }
            choices[i] = Some(if probabilistic {
                Choice::Probabilistic(transitions)
            } else {
                Choice::Nondeterministic(transitions)
            });
        }
        frontier = next;
    }

    let choices: Vec<Choice> = choices
        .into_iter()
        .map(|c| c.expect("every state visited"))
        .collect();
    let mut labels = vec![BTreeSet::new(); atoms.len()];
    for (s, c) in configs.iter().enumerate() {
        let ctx = Ctx::new(&c.env, model, None);
        for (i, a) in atoms.iter().enumerate() {
            let holds = ctx.sat(a).map_err(|source| BuildError::Atom {
                atom: a.to_string(),
                source,
            })?;
            if holds {
                labels[i].insert(s);
            }
        }
    }
    let mdp = Mdp {
        configs,
        initial: 0,
        choices,
        atoms: atoms.to_vec(),
        labels,
        depth,
    };
    let report = BuildReport {
        states: mdp.len(),
        transitions: mdp.transition_count(),
        truncated: mdp.is_truncated(),
        truncation_reason: reason,
    };
    Ok((mdp, report))
}

#[cfg(test)]
mod tests;
