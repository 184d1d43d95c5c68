//! Monte Carlo simulation of models.
//!
//! A run repeatedly resolves the behaviour of the current configuration:
//! probabilistic factors are sampled independently, nondeterministic steps
//! are picked by a scheduler. Each sample gets its own ChaCha stream keyed
//! by the sample index, so results do not depend on thread count.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::ast::Model;
use crate::env::{Ctx, Environment, EvalError};
use crate::pctl::{PathFormula, StateFormula};
use crate::semantics::{
    analyze, canonicalize, Analysis, Configuration, SemanticsError, Step, StepKind,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheduler {
    /// Uniform choice among the enabled nondeterministic steps.
    #[default]
    UniformRandom,
    /// Always the first enabled step in the canonical step order.
    FirstEnabled,
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub seed: u64,
    pub scheduler: Scheduler,
    /// A run stops after this many ticks.
    pub max_ticks: u64,
    /// A run stops after this many steps without a tick.
    pub max_steps_per_tick: u64,
    pub max_population_per_location: Option<u64>,
    /// Worker threads; 0 uses rayon's default.
    pub threads: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            seed: 0,
            scheduler: Scheduler::UniformRandom,
            max_ticks: 100,
            max_steps_per_tick: 1_000_000,
            max_population_per_location: None,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error("evaluating {formula}: {source}")]
    Eval { formula: String, source: EvalError },
    #[error("simulation estimates path formulas without nested probability bounds")]
    NestedProbability,
    #[error("could not start worker threads: {0}")]
    Threads(String),
}

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum End {
    /// No steps left and nobody alive.
    Extinct,
    /// No steps left although individuals remain.
    Deadlock,
    MaxTicks,
    /// Too many steps without a tick.
    StepLimit,
    PopulationBound,
}

impl End {
    pub fn as_str(self) -> &'static str {
        match self {
            End::Extinct => "extinct",
            End::Deadlock => "deadlock",
            End::MaxTicks => "max_ticks",
            End::StepLimit => "step_limit",
            End::PopulationBound => "population_bound",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    /// Environment at time 0 and after every tick.
    pub series: Vec<Environment>,
    pub ticks: u64,
    pub steps: u64,
    /// Scheduler decisions between two or more actions.
    pub choices: u64,
    pub end: End,
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn pick_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Chooses one step of `c`, or `None` when it has no steps. The flag tells
/// whether the scheduler had more than one action to pick from.
fn choose(
    c: &Configuration,
    model: &Model,
    opts: &SimOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(Option<Step>, bool), SimError> {
    Ok(match analyze(&c.env, &c.system, model)? {
        Analysis::Probabilistic(f) => {
            let choices: Vec<usize> = f
                .arities()
                .iter()
                .enumerate()
                .map(|(i, &n)| {
                    let w: Vec<f64> = (0..n).map(|j| f.weight(i, j).value()).collect();
                    pick_weighted(&w, rng)
                })
                .collect();
            (Some(f.joint(&choices)), false)
        }
        Analysis::Nondeterministic(steps) if steps.is_empty() => (None, false),
        Analysis::Nondeterministic(steps) => {
            // Distinct actions, as in the explored state space.
            let mut steps: Vec<Step> = steps
                .into_iter()
                .map(|s| Step {
                    target: canonicalize(&s.target, model),
                    ..s
                })
                .collect();
            steps.sort_by(|a, b| (&a.kind, &a.target).cmp(&(&b.kind, &b.target)));
            steps.dedup_by(|a, b| a.kind == b.kind && a.target == b.target);
            let several = steps.len() > 1;
            let step = match opts.scheduler {
                Scheduler::UniformRandom => steps.choose(rng).cloned(),
                Scheduler::FirstEnabled => steps.into_iter().next(),
            };
            (step, several)
        }
    })
}

/// Advances `c` by one step; returns whether the step was a tick.
fn advance(c: &mut Configuration, step: Step, model: &Model) -> Result<bool, SimError> {
    c.env = c.env.apply(&step.delta).map_err(SemanticsError::from)?;
    c.system = canonicalize(&step.target, model);
    Ok(matches!(step.kind, StepKind::Nondet(ref l) if l.is_tick()))
}

/// What a walk observer wants next.
enum Control {
    Continue,
    Stop,
}

/// Summary of one walk.
struct Walked {
    end: End,
    ticks: u64,
    steps: u64,
    choices: u64,
}

/// Walks one run, calling `observe(config, ticks, terminal)` on every
/// configuration visited, including the first one.
fn walk(
    model: &Model,
    opts: &SimOptions,
    rng: &mut ChaCha8Rng,
    mut observe: impl FnMut(&Configuration, u64, bool) -> Result<Control, SimError>,
) -> Result<Walked, SimError> {
    let mut c = Configuration::initial(model);
    let (mut ticks, mut steps, mut since_tick, mut choices) = (0u64, 0u64, 0u64, 0u64);
    let done = |end, ticks, steps, choices| {
        Ok(Walked {
            end,
            ticks,
            steps,
            choices,
        })
    };
    if let Control::Stop = observe(&c, ticks, false)? {
        return done(End::MaxTicks, ticks, steps, choices);
    }
    loop {
        let (step, several) = choose(&c, model, opts, rng)?;
        choices += u64::from(several);
        let Some(step) = step else {
            observe(&c, ticks, true)?;
            let end = if c.is_extinct() {
                End::Extinct
            } else {
                End::Deadlock
            };
            return done(end, ticks, steps, choices);
        };
        let ticked = advance(&mut c, step, model)?;
        steps += 1;
        if ticked {
            ticks += 1;
            since_tick = 0;
        } else {
            since_tick += 1;
        }
        if let Some(bound) = opts.max_population_per_location {
            if c.env.max_per_location() > bound {
                return done(End::PopulationBound, ticks, steps, choices);
            }
        }
        if let Control::Stop = observe(&c, ticks, false)? {
            return done(End::MaxTicks, ticks, steps, choices);
        }
        if ticks >= opts.max_ticks {
            return done(End::MaxTicks, ticks, steps, choices);
        }
        if since_tick >= opts.max_steps_per_tick {
            return done(End::StepLimit, ticks, steps, choices);
        }
    }
}

/// Runs sample number `index` and records the environment at every tick.
pub fn run(model: &Model, opts: &SimOptions, index: u64) -> Result<Trace, SimError> {
    let mut rng = sample_rng(opts.seed, index);
    let mut series = Vec::new();
    let w = walk(model, opts, &mut rng, |c, t, _| {
        if series.len() as u64 == t {
            series.push(c.env.clone());
        }
        Ok(Control::Continue)
    })?;
    Ok(Trace {
        series,
        ticks: w.ticks,
        steps: w.steps,
        choices: w.choices,
        end: w.end,
    })
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, SimError> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::Threads(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs `samples` independent traces in parallel, in sample order.
pub fn simulate(model: &Model, opts: &SimOptions, samples: u64) -> Result<Vec<Trace>, SimError> {
    in_pool(opts.threads, || {
        (0..samples)
            .into_par_iter()
            .map(|i| run(model, opts, i))
            .collect()
    })?
}

/// Outcome of checking a path formula on one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Holds,
    Fails,
    /// The run stopped before the formula was decided.
    Undecided,
}

fn eval_state(f: &StateFormula, c: &Configuration, model: &Model) -> Result<bool, SimError> {
    Ok(match f {
        StateFormula::True => true,
        StateFormula::Atom(e) => {
            Ctx::new(&c.env, model, None)
                .sat(e)
                .map_err(|source| SimError::Eval {
                    formula: e.to_string(),
                    source,
                })?
        }
        StateFormula::Not(x) => !eval_state(x, c, model)?,
        StateFormula::And(a, b) => eval_state(a, c, model)? && eval_state(b, c, model)?,
        StateFormula::Prob { .. } => return Err(SimError::NestedProbability),
    })
}

fn has_prob(f: &StateFormula) -> bool {
    match f {
        StateFormula::True | StateFormula::Atom(_) => false,
        StateFormula::Not(x) => has_prob(x),
        StateFormula::And(a, b) => has_prob(a) || has_prob(b),
        StateFormula::Prob { .. } => true,
    }
}

/// Checks `path` along sample number `index`; also returns the number of
/// scheduler decisions taken. A configuration without steps counts as
/// repeating itself forever.
pub fn sample_path(
    model: &Model,
    path: &PathFormula,
    opts: &SimOptions,
    index: u64,
) -> Result<(Outcome, u64), SimError> {
    let mut rng = sample_rng(opts.seed, index);
    let mut outcome = Outcome::Undecided;
    let mut first = true;
    let w = walk(model, opts, &mut rng, |c, ticks, terminal| {
        let decided = match path {
            PathFormula::Next(f) => {
                if first && !terminal {
                    None
                } else {
                    Some(eval_state(f, c, model)?)
                }
            }
            PathFormula::Until(a, b) | PathFormula::BoundedUntil(a, b, _) => {
                let bound = match path {
                    PathFormula::BoundedUntil(_, _, k) => Some(u64::from(*k)),
                    _ => None,
                };
                if bound.is_some_and(|k| ticks > k) {
                    Some(false)
                } else if eval_state(b, c, model)? {
                    Some(true)
                } else if !eval_state(a, c, model)? || terminal {
                    Some(false)
                } else {
                    None
                }
            }
        };
        first = false;
        Ok(match decided {
            Some(v) => {
                outcome = if v { Outcome::Holds } else { Outcome::Fails };
                Control::Stop
            }
            None => Control::Continue,
        })
    })?;
    Ok((outcome, w.choices))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub samples: u64,
    pub successes: u64,
    pub undecided: u64,
    /// Scheduler decisions over all runs; nonzero means the estimate
    /// depends on the scheduler.
    pub scheduler_choices: u64,
    pub p_hat: f64,
    pub confidence: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Wilson score interval for `successes` out of `n` at the given two-sided
/// confidence level.
pub fn wilson_interval(successes: u64, n: u64, confidence: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n_f)) / (1.0 + z2 / n_f);
    let half = z / (1.0 + z2 / n_f) * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    let lo = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if successes == n {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

/// Estimates the probability of `path` from `samples` runs. Undecided
/// runs count as failures and are reported separately.
pub fn estimate(
    model: &Model,
    path: &PathFormula,
    samples: u64,
    confidence: f64,
    opts: &SimOptions,
) -> Result<Estimate, SimError> {
    let subs: Vec<&StateFormula> = match path {
        PathFormula::Next(f) => vec![f],
        PathFormula::Until(a, b) | PathFormula::BoundedUntil(a, b, _) => vec![a, b],
    };
    if subs.into_iter().any(has_prob) {
        return Err(SimError::NestedProbability);
    }
    let outcomes: Vec<(Outcome, u64)> = in_pool(opts.threads, || {
        (0..samples)
            .into_par_iter()
            .map(|i| sample_path(model, path, opts, i))
            .collect::<Result<Vec<_>, _>>()
    })??;
    let successes = outcomes.iter().filter(|o| o.0 == Outcome::Holds).count() as u64;
    let undecided = outcomes
        .iter()
        .filter(|o| o.0 == Outcome::Undecided)
        .count() as u64;
    let scheduler_choices = outcomes.iter().map(|o| o.1).sum();
    let (ci_low, ci_high) = wilson_interval(successes, samples, confidence);
    Ok(Estimate {
        samples,
        successes,
        undecided,
        scheduler_choices,
        p_hat: if samples == 0 {
            0.0
        } else {
            successes as f64 / samples as f64
        },
        confidence,
        ci_low,
        ci_high,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    sample: usize,
    tick: usize,
    species: &'a str,
    location: &'a str,
    count: u64,
}

/// Writes one CSV row per sample, tick, species and location, zero counts
/// included.
pub fn write_csv<W: Write>(model: &Model, traces: &[Trace], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let species: Vec<_> = model.species_ids().cloned().collect();
    for (sample, t) in traces.iter().enumerate() {
        for (tick, env) in t.series.iter().enumerate() {
            for s in &species {
                for l in model.habitat.locations() {
                    w.serialize(CsvRow {
                        sample,
                        tick,
                        species: s.as_str(),
                        location: l.as_str(),
                        count: env.num(s, l),
                    })?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonTrace {
    sample: usize,
    end: End,
    ticks: u64,
    steps: u64,
    choices: u64,
    /// Per tick, `species@location` to count, nonzero entries only.
    series: Vec<std::collections::BTreeMap<String, u64>>,
}

/// Writes one JSON object per trace and line.
pub fn write_jsonl<W: Write>(traces: &[Trace], mut out: W) -> std::io::Result<()> {
    for (sample, t) in traces.iter().enumerate() {
        let series = t
            .series
            .iter()
            .map(|env| {
                env.iter()
                    .map(|(s, l, n)| (format!("{s}@{l}"), n))
                    .collect()
            })
            .collect();
        let rec = JsonTrace {
            sample,
            end: t.end,
            ticks: t.ticks,
            steps: t.steps,
            choices: t.choices,
            series,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
