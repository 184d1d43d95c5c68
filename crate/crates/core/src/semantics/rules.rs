use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{Fanout, Label, SemanticsError, Step, StepKind, TauCause, PROB_TOLERANCE};
use crate::ast::{
    expand_neighbor_sum, Action, Channel, ExpandError, LocRef, LocationId, Model, Proc, Process,
    SpeciesId, System,
};
use crate::env::{Ctx, EnvDelta, Environment};
use crate::number::Real;

/// A move of a single process term, before environment bookkeeping.
struct Move {
    kind: StepKind,
    next: Proc,
    at: LocationId,
}

fn eval_err(at: &LocationId) -> impl Fn(crate::env::EvalError) -> SemanticsError + '_ {
    move |source| SemanticsError::Eval {
        location: at.clone(),
        source,
    }
}

fn moves(
    env: &Environment,
    model: &Model,
    p: &Proc,
    s: &SpeciesId,
    here: &LocationId,
    unfolded: usize,
) -> Result<Vec<Move>, SemanticsError> {
    let ctx = Ctx::new(env, model, Some(here));
    match &**p {
        Process::Nil => Ok(vec![]),
        Process::Prefix(action, next) => {
            let (label, at) = match action {
                Action::Tick => (Label::Tick, here.clone()),
                Action::In(c) => (Label::In(c.clone(), here.clone()), here.clone()),
                Action::Out(c) => (Label::Out(c.clone(), here.clone()), here.clone()),
                Action::Go(target) => {
                    let to = match target {
                        LocRef::Named(l) => l.clone(),
                        LocRef::Here => here.clone(),
                        LocRef::Var(v) => {
                            return Err(SemanticsError::Eval {
                                location: here.clone(),
                                source: crate::env::EvalError::UnboundVar(v.clone()),
                            })
                        }
                    };
                    if !model.habitat.is_neighbor(here, &to) {
                        return Ok(vec![]);
                    }
                    let cause = TauCause::Move {
                        species: s.clone(),
                        from: here.clone(),
                        to: to.clone(),
                    };
                    (Label::Tau(cause), to)
                }
            };
            Ok(vec![Move {
                kind: StepKind::Nondet(label),
                next: next.clone(),
                at,
            }])
        }
        Process::Sum(branches) => {
            let mut weights = Vec::with_capacity(branches.len());
            for (w, _) in branches {
                weights.push(ctx.eval(&w.subst_myloc(here)).map_err(eval_err(here))?);
            }
            check_distribution(&weights, here)?;
            Ok(branches
                .iter()
                .zip(weights)
                .filter(|(_, w)| w.value() > 0.0)
                .map(|((_, next), w)| Move {
                    kind: StepKind::Prob(w),
                    next: next.clone(),
                    at: here.clone(),
                })
                .collect())
        }
        Process::NeighborSum { .. } => {
            let expanded = expand_neighbor_sum(p, here, &model.habitat).map_err(|e| match e {
                ExpandError::NoNeighbors(l) => SemanticsError::NoNeighbors(l),
                ExpandError::NotANeighborSum => unreachable!("matched a neighbour sum"),
            })?;
            moves(env, model, &Arc::new(expanded), s, here, unfolded)
        }
        Process::Cond(branches) => {
            for (guard, body) in branches {
                if ctx.sat(&guard.subst_myloc(here)).map_err(eval_err(here))? {
                    return moves(env, model, body, s, here, unfolded);
                }
            }
            Ok(vec![])
        }
        Process::Const(name) => {
            if unfolded > model.constants.len() {
                return Err(SemanticsError::UnguardedRecursion(name.to_string()));
            }
            let body = model
                .constant(name)
                .ok_or_else(|| SemanticsError::UndefinedConstant(name.to_string()))?;
            moves(env, model, body, s, here, unfolded + 1)
        }
    }
}

fn check_distribution(weights: &[Real], at: &LocationId) -> Result<(), SemanticsError> {
    let in_range = weights
        .iter()
        .all(|w| w.value() >= -PROB_TOLERANCE && w.value() <= 1.0 + PROB_TOLERANCE);
    let sum: f64 = weights.iter().map(Real::value).sum();
    if in_range && (sum - 1.0).abs() <= PROB_TOLERANCE {
        Ok(())
    } else {
        let text: Vec<String> = weights.iter().map(Real::to_string).collect();
        Err(SemanticsError::WeightError {
            location: at.clone(),
            weights: text.join(", "),
        })
    }
}

/// Count change for an individual of species `s` leaving `from` and
/// continuing as `next` at `to`; a continuation that is `0` leaves the
/// environment.
fn individual_delta(
    model: &Model,
    s: &SpeciesId,
    from: &LocationId,
    next: &Process,
    to: &LocationId,
) -> EnvDelta {
    let mut d = EnvDelta::new();
    d.add(s, from, -1);
    if !model.is_dead(next) {
        d.add(s, to, 1);
    }
    d
}

/// Steps of the located individual `p⟨s, here⟩` in isolation, including the
/// ever-present possibility of being preyed upon.
pub fn individual_steps(
    env: &Environment,
    model: &Model,
    p: &Proc,
    s: &SpeciesId,
    here: &LocationId,
) -> Result<Vec<Step>, SemanticsError> {
    if model.is_dead(p) {
        return Ok(vec![]);
    }
    let mut out: Vec<Step> = moves(env, model, p, s, here, 0)?
        .into_iter()
        .map(|m| Step {
            delta: individual_delta(model, s, here, &m.next, &m.at),
            target: System::Located(m.next, s.clone(), m.at),
            kind: m.kind,
        })
        .collect();
    let mut victim = EnvDelta::new();
    victim.add(s, here, -1);
    out.push(Step {
        kind: StepKind::Nondet(Label::In(Channel::Prey(s.clone()), here.clone())),
        delta: victim,
        target: System::Located(Process::nil(), s.clone(), here.clone()),
    });
    Ok(out)
}

type Path = Vec<usize>;

/// Per-leaf steps of a system term, addressed by child-index paths.
struct Leaves {
    steps: BTreeMap<Path, Vec<Step>>,
}

fn collect_leaves(
    env: &Environment,
    model: &Model,
    s: &System,
    path: &mut Path,
    out: &mut Leaves,
) -> Result<(), SemanticsError> {
    match s {
        System::Located(p, sp, l) => {
            out.steps
                .insert(path.clone(), individual_steps(env, model, p, sp, l)?);
        }
        System::Par(items) => {
            for (i, item) in items.iter().enumerate() {
                path.push(i);
                collect_leaves(env, model, item, path, out)?;
                path.pop();
            }
        }
        System::Restrict(inner, _) => {
            path.push(0);
            collect_leaves(env, model, inner, path, out)?;
            path.pop();
        }
        System::Species(sp) => {
            if model.species_def(sp).is_none() {
                return Err(SemanticsError::UndefinedSpecies(sp.clone()));
            }
        }
        System::Nil => {}
    }
    Ok(())
}

fn rebuild(s: &System, path: &mut Path, repl: &BTreeMap<Path, System>) -> System {
    if let Some(r) = repl.get(path) {
        return r.clone();
    }
    match s {
        System::Par(items) => System::Par(
            items
                .iter()
                .enumerate()
                .map(|(i, item)| {
                    path.push(i);
                    let r = rebuild(item, path, repl);
                    path.pop();
                    r
                })
                .collect(),
        ),
        System::Restrict(inner, l) => {
            path.push(0);
            let r = rebuild(inner, path, repl);
            path.pop();
            System::Restrict(Box::new(r), l.clone())
        }
        other => other.clone(),
    }
}

/// Independent probabilistic choices of the individuals of a system: one
/// factor per individual with a probabilistic step.
pub struct Factors {
    system: System,
    factors: Vec<(Path, Vec<Step>)>,
}

impl Factors {
    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Number of alternatives of each factor.
    pub fn arities(&self) -> Vec<usize> {
        self.factors.iter().map(|(_, alts)| alts.len()).collect()
    }

    pub fn weight(&self, factor: usize, choice: usize) -> Real {
        match &self.factors[factor].1[choice].kind {
            StepKind::Prob(w) => *w,
            StepKind::Nondet(_) => unreachable!("factors hold probabilistic steps"),
        }
    }

    /// The joint step picking alternative `choices[i]` of factor `i`.
    pub fn joint(&self, choices: &[usize]) -> Step {
        let mut weight = Real::one();
        let mut delta = EnvDelta::new();
        let mut repl = BTreeMap::new();
        for ((path, alts), &c) in self.factors.iter().zip(choices) {
            let step = &alts[c];
            if let StepKind::Prob(w) = step.kind {
                weight = weight * w;
            }
            delta.extend(&step.delta);
            repl.insert(path.clone(), step.target.clone());
        }
        Step {
            kind: StepKind::Prob(weight),
            delta,
            target: rebuild(&self.system, &mut Vec::new(), &repl),
        }
    }

    /// Every joint step, in lexicographic order of choices.
    pub fn enumerate(&self) -> Vec<Step> {
        let arities = self.arities();
        let mut out = Vec::new();
        let mut choice = vec![0usize; arities.len()];
        loop {
            out.push(self.joint(&choice));
            let mut i = arities.len();
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                choice[i] += 1;
                if choice[i] < arities[i] {
                    break;
                }
                choice[i] = 0;
            }
        }
    }
}

/// Either the independent probabilistic factors of a configuration, or
/// its nondeterministic steps.
pub enum Analysis {
    Probabilistic(Factors),
    Nondeterministic(Vec<Step>),
}

enum Tick {
    Blocked,
    Permissive,
    Steps(Vec<Step>),
}

struct Sub {
    moves: Vec<Step>,
    tick: Tick,
}

struct NondetCtx<'a> {
    model: &'a Model,
    leaves: &'a Leaves,
    demand: BTreeSet<(Channel, LocationId)>,
}

impl NondetCtx<'_> {
    fn wanted(&self, c: &Channel, l: &LocationId, restricted: &BTreeSet<Channel>) -> bool {
        !restricted.contains(c) || self.demand.contains(&(c.clone(), l.clone()))
    }

    fn sub(&self, s: &System, path: &mut Path, restricted: &BTreeSet<Channel>) -> Sub {
        match s {
            System::Nil => Sub {
                moves: vec![],
                tick: Tick::Permissive,
            },
            System::Located(p, _, _) => {
                if self.model.is_dead(p) {
                    return Sub {
                        moves: vec![],
                        tick: Tick::Permissive,
                    };
                }
                let mut moves = Vec::new();
                let mut ticks = Vec::new();
                for step in &self.leaves.steps[&*path] {
                    match &step.kind {
                        StepKind::Nondet(Label::Tick) => ticks.push(step.clone()),
                        StepKind::Nondet(Label::In(c @ Channel::Prey(_), l)) => {
                            if self.wanted(c, l, restricted) {
                                moves.push(step.clone());
                            }
                        }
                        StepKind::Nondet(_) => moves.push(step.clone()),
                        StepKind::Prob(_) => unreachable!("no probabilistic steps here"),
                    }
                }
                let tick = if ticks.is_empty() {
                    Tick::Blocked
                } else {
                    Tick::Steps(ticks)
                };
                Sub { moves, tick }
            }
            System::Species(sp) => {
                let body = &self
                    .model
                    .species_def(sp)
                    .expect("checked while collecting")
                    .body;
                let c = Channel::Rep(sp.clone());
                let moves = self
                    .model
                    .habitat
                    .locations()
                    .iter()
                    .filter(|l| self.wanted(&c, l, restricted))
                    .map(|l| {
                        let mut delta = EnvDelta::new();
                        if !self.model.is_dead(body) {
                            delta.add(sp, l, 1);
                        }
                        Step {
                            kind: StepKind::Nondet(Label::In(c.clone(), l.clone())),
                            delta,
                            target: System::Par(vec![
                                System::Located(body.clone(), sp.clone(), l.clone()),
                                System::Species(sp.clone()),
                            ]),
                        }
                    })
                    .collect();
                Sub {
                    moves,
                    tick: Tick::Permissive,
                }
            }
            System::Restrict(inner, l) => {
                let mut all = restricted.clone();
                all.extend(l.iter().cloned());
                path.push(0);
                let sub = self.sub(inner, path, &all);
                path.pop();
                let wrap = |step: Step| Step {
                    target: System::Restrict(Box::new(step.target), l.clone()),
                    ..step
                };
                let moves = sub
                    .moves
                    .into_iter()
                    .filter(|st| match &st.kind {
                        StepKind::Nondet(lab) => lab.channel().is_none_or(|c| !l.contains(c)),
                        StepKind::Prob(_) => true,
                    })
                    .map(wrap)
                    .collect();
                let tick = match sub.tick {
                    Tick::Steps(ts) => Tick::Steps(ts.into_iter().map(wrap).collect()),
                    other => other,
                };
                Sub { moves, tick }
            }
            System::Par(items) => {
                let subs: Vec<Sub> = items
                    .iter()
                    .enumerate()
                    .map(|(i, item)| {
                        path.push(i);
                        let r = self.sub(item, path, restricted);
                        path.pop();
                        r
                    })
                    .collect();
                let replace = |pairs: &[(usize, &System)]| {
                    let mut next = items.clone();
                    for (i, t) in pairs {
                        next[*i] = (*t).clone();
                    }
                    System::Par(next)
                };

                let mut moves = Vec::new();
                for (i, sub) in subs.iter().enumerate() {
                    for st in &sub.moves {
                        moves.push(Step {
                            kind: st.kind.clone(),
                            delta: st.delta.clone(),
                            target: replace(&[(i, &st.target)]),
                        });
                    }
                }
                // Outputs indexed by (channel, location), then matched with
                // inputs of a different component.
                let mut outputs: BTreeMap<(&Channel, &LocationId), Vec<(usize, &Step)>> =
                    BTreeMap::new();
                for (i, sub) in subs.iter().enumerate() {
                    for st in &sub.moves {
                        if let StepKind::Nondet(Label::Out(c, l)) = &st.kind {
                            outputs.entry((c, l)).or_default().push((i, st));
                        }
                    }
                }
                for (i, sub) in subs.iter().enumerate() {
                    for input in &sub.moves {
                        let StepKind::Nondet(Label::In(c, l)) = &input.kind else {
                            continue;
                        };
                        for (j, output) in outputs.get(&(c, l)).map(Vec::as_slice).unwrap_or(&[]) {
                            if *j == i {
                                continue;
                            }
                            moves.push(Step {
                                kind: StepKind::Nondet(Label::Tau(TauCause::Sync {
                                    channel: c.clone(),
                                    at: l.clone(),
                                })),
                                delta: input.delta.plus(&output.delta),
                                target: replace(&[(i, &input.target), (*j, &output.target)]),
                            });
                        }
                    }
                }

                let mut tick = Tick::Permissive;
                let mut ticking: Vec<(usize, &Vec<Step>)> = Vec::new();
                for (i, sub) in subs.iter().enumerate() {
                    match &sub.tick {
                        Tick::Blocked => {
                            tick = Tick::Blocked;
                            break;
                        }
                        Tick::Permissive => {}
                        Tick::Steps(ts) => ticking.push((i, ts)),
                    }
                }
                if !matches!(tick, Tick::Blocked) && !ticking.is_empty() {
                    let mut combos: Vec<(EnvDelta, Vec<(usize, &System)>)> =
                        vec![(EnvDelta::new(), vec![])];
                    for (i, ts) in &ticking {
                        let mut next = Vec::with_capacity(combos.len() * ts.len());
                        for (d, picks) in &combos {
                            for t in ts.iter() {
                                let mut p = picks.clone();
                                p.push((*i, &t.target));
                                next.push((d.plus(&t.delta), p));
                            }
                        }
                        combos = next;
                    }
                    tick = Tick::Steps(
                        combos
                            .into_iter()
                            .map(|(delta, picks)| Step {
                                kind: StepKind::Nondet(Label::Tick),
                                delta,
                                target: replace(&picks),
                            })
                            .collect(),
                    );
                }
                Sub { moves, tick }
            }
        }
    }
}

/// Splits the behaviour of `(env, system)` into probabilistic factors or
/// nondeterministic steps.
pub fn analyze(
    env: &Environment,
    system: &System,
    model: &Model,
) -> Result<Analysis, SemanticsError> {
    let mut leaves = Leaves {
        steps: BTreeMap::new(),
    };
    collect_leaves(env, model, system, &mut Vec::new(), &mut leaves)?;

    let factors: Vec<(Path, Vec<Step>)> = leaves
        .steps
        .iter()
        .filter_map(|(path, steps)| {
            let probs: Vec<Step> = steps
                .iter()
                .filter(|s| matches!(s.kind, StepKind::Prob(_)))
                .cloned()
                .collect();
            (!probs.is_empty()).then(|| (path.clone(), probs))
        })
        .collect();
    if !factors.is_empty() {
        return Ok(Analysis::Probabilistic(Factors {
            system: system.clone(),
            factors,
        }));
    }

    let demand = leaves
        .steps
        .values()
        .flatten()
        .filter_map(|s| match &s.kind {
            StepKind::Nondet(Label::Out(c, l)) => Some((c.clone(), l.clone())),
            _ => None,
        })
        .collect();
    let ctx = NondetCtx {
        model,
        leaves: &leaves,
        demand,
    };
    let sub = ctx.sub(system, &mut Vec::new(), &BTreeSet::new());
    let mut steps = sub.moves;
    if let Tick::Steps(ts) = sub.tick {
        steps.extend(ts);
    }
    Ok(Analysis::Nondeterministic(steps))
}

/// All outgoing steps of `(env, system)`. Targets are not canonicalised.
pub fn system_steps(
    env: &Environment,
    system: &System,
    model: &Model,
) -> Result<Fanout, SemanticsError> {
    Ok(match analyze(env, system, model)? {
        Analysis::Probabilistic(f) => Fanout::Probabilistic(f.enumerate()),
        Analysis::Nondeterministic(steps) if steps.is_empty() => Fanout::Terminal,
        Analysis::Nondeterministic(steps) => Fanout::Nondeterministic(steps),
    })
}
