//! Operational semantics: the outgoing transitions of a configuration.
//!
//! Individual rules live in [`individual_steps`]; [`system_steps`] combines
//! them through parallel composition, replication and restriction. A
//! configuration whose components enable any probabilistic step offers
//! only probabilistic steps: every component that can move probabilistically
//! does so at once and the branch weight is the product of the individual
//! weights. Otherwise the configuration offers nondeterministic steps:
//! single moves, synchronisations on a channel at one location, and global
//! ticks in which every component takes part.

mod rules;

use std::collections::BTreeSet;
use std::fmt;

use crate::ast::{Channel, LocationId, Model, SpeciesId, System};
use crate::env::{EnvDelta, Environment, EvalError, Undefined};
use crate::number::Real;

pub use rules::{analyze, individual_steps, system_steps, Analysis, Factors};

/// Tolerance for probability sums.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// What produced an internal step.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TauCause {
    Move {
        species: SpeciesId,
        from: LocationId,
        to: LocationId,
    },
    Sync {
        channel: Channel,
        at: LocationId,
    },
}

/// Labels of nondeterministic transitions. Internal steps print as `tau`
/// but remember their cause.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    In(Channel, LocationId),
    Out(Channel, LocationId),
    Tau(TauCause),
    Tick,
}

impl Label {
    pub fn is_tick(&self) -> bool {
        matches!(self, Label::Tick)
    }

    pub fn channel(&self) -> Option<&Channel> {
        match self {
            Label::In(c, _) | Label::Out(c, _) => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::In(c, l) => write!(f, "{c}@{l}"),
            Label::Out(c, l) => write!(f, "out_{c}@{l}"),
            Label::Tau(_) => f.write_str("tau"),
            Label::Tick => f.write_str("tick"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepKind {
    Nondet(Label),
    Prob(Real),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Step {
    pub kind: StepKind,
    pub delta: EnvDelta,
    pub target: System,
}

/// All outgoing steps of a configuration; the two kinds never mix.
#[derive(Clone, Debug, PartialEq)]
pub enum Fanout {
    Probabilistic(Vec<Step>),
    Nondeterministic(Vec<Step>),
    Terminal,
}

impl Fanout {
    pub fn steps(&self) -> &[Step] {
        match self {
            Fanout::Probabilistic(s) | Fanout::Nondeterministic(s) => s,
            Fanout::Terminal => &[],
        }
    }

    pub fn is_probabilistic(&self) -> bool {
        matches!(self, Fanout::Probabilistic(_))
    }
}

/// A state of the transition system: a canonical system term together with
/// its environment.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub env: Environment,
    pub system: System,
}

impl Configuration {
    pub fn initial(model: &Model) -> Self {
        let system = canonicalize(&model.system, model);
        Configuration {
            env: Environment::of(&system, model),
            system,
        }
    }

    /// True when no located individual is left.
    pub fn is_extinct(&self) -> bool {
        self.env.population() == 0
    }

    /// Canonical text used for hashing and export.
    pub fn digest(&self) -> String {
        let mut out = String::new();
        for (s, l, n) in self.env.iter() {
            out.push_str(&format!("{s}@{l}={n};"));
        }
        out.push('|');
        out.push_str(&self.system.to_string());
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExploreOptions {
    pub max_states: Option<usize>,
    pub max_depth: Option<usize>,
    /// Stop expanding states reached after this many ticks.
    pub max_ticks: Option<u64>,
    pub max_population_per_location: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SemanticsError {
    #[error("at {location}: probabilistic weights {weights} are not a distribution")]
    WeightError {
        location: LocationId,
        weights: String,
    },
    #[error("at {location}: {source}")]
    Eval {
        location: LocationId,
        source: EvalError,
    },
    #[error("undefined process constant {0}")]
    UndefinedConstant(String),
    #[error("unguarded recursion through {0}")]
    UnguardedRecursion(String),
    #[error("species {0} has no definition")]
    UndefinedSpecies(SpeciesId),
    #[error("location {0} has no neighbours")]
    NoNeighbors(LocationId),
    #[error("environment update undefined: {0}")]
    Undefined(#[from] Undefined),
    #[error("environment {expected} does not match the successor system (found {found})")]
    Incompatible { expected: String, found: String },
    #[error("population bound {bound} exceeded at {location}")]
    StateBoundExceeded { bound: u64, location: LocationId },
}

impl SemanticsError {
    /// Whether the error reveals a bug in the semantics rather than in the
    /// model.
    pub fn is_internal(&self) -> bool {
        matches!(
            self,
            SemanticsError::Undefined(_) | SemanticsError::Incompatible { .. }
        )
    }
}

/// One successor of a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Successor {
    pub kind: StepKind,
    pub config: Configuration,
}

/// The outgoing transitions of `c`, with every target canonicalised and its
/// environment checked against the target term.
pub fn successors(
    c: &Configuration,
    model: &Model,
    opts: &ExploreOptions,
) -> Result<Vec<Successor>, SemanticsError> {
    let fanout = system_steps(&c.env, &c.system, model)?;
    let mut out = Vec::with_capacity(fanout.steps().len());
    for step in fanout.steps() {
        let env = c.env.apply(&step.delta)?;
        let system = canonicalize(&step.target, model);
        let census = Environment::of(&system, model);
        if census != env {
            return Err(SemanticsError::Incompatible {
                expected: env_text(&env),
                found: env_text(&census),
            });
        }
        if let Some(bound) = opts.max_population_per_location {
            if env.max_per_location() > bound {
                let location = worst_location(&env).expect("a populated location");
                return Err(SemanticsError::StateBoundExceeded { bound, location });
            }
        }
        out.push(Successor {
            kind: step.kind.clone(),
            config: Configuration { env, system },
        });
    }
    Ok(out)
}

fn worst_location(env: &Environment) -> Option<LocationId> {
    let mut per = std::collections::BTreeMap::new();
    for (_, l, n) in env.iter() {
        *per.entry(l.clone()).or_insert(0u64) += n;
    }
    per.into_iter().max_by_key(|(_, n)| *n).map(|(l, _)| l)
}

fn env_text(env: &Environment) -> String {
    let parts: Vec<String> = env.iter().map(|(s, l, n)| format!("{s}@{l}={n}")).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Quotient of a system term by associativity and commutativity of `|`:
/// parallel compositions are flattened and sorted, dead individuals and
/// `0` dropped, stacked restrictions fused.
pub fn canonicalize(s: &System, model: &Model) -> System {
    match s {
        System::Nil => System::Nil,
        System::Located(p, _, _) if model.is_dead(p) => System::Nil,
        System::Located(..) | System::Species(_) => s.clone(),
        System::Par(items) => {
            let mut flat = Vec::new();
            for item in items {
                match canonicalize(item, model) {
                    System::Nil => {}
                    System::Par(inner) => flat.extend(inner),
                    other => flat.push(other),
                }
            }
            flat.sort();
            match flat.len() {
                0 => System::Nil,
                1 => flat.pop().expect("one item"),
                _ => System::Par(flat),
            }
        }
        System::Restrict(inner, l) => {
            let inner = canonicalize(inner, model);
            let (inner, l) = match inner {
                System::Restrict(i2, l2) => {
                    let mut all: BTreeSet<Channel> = l.clone();
                    all.extend(l2);
                    (*i2, all)
                }
                other => (other, l.clone()),
            };
            if inner == System::Nil || l.is_empty() {
                inner
            } else {
                System::Restrict(Box::new(inner), l)
            }
        }
    }
}
