//! Structural checks on the behaviour of corpus models.

use std::collections::{BTreeSet, HashSet, VecDeque};

use crate::ast::{Action, Channel, Model, Name, Process, SpeciesId, System};
use crate::semantics::{Label, TauCause};
use crate::statespace::{Choice, Mdp};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error(
    "cycle starting in state {start} ended in state {end} with {found} events, expected {expected}"
)]
pub struct CycleViolation {
    pub start: usize,
    pub end: usize,
    pub found: u64,
    pub expected: u64,
}

fn count_located(s: &System, name: &Name) -> u64 {
    match s {
        System::Located(p, _, _) => u64::from(matches!(&**p, Process::Const(c) if c == name)),
        System::Par(items) => items.iter().map(|i| count_located(i, name)).sum(),
        System::Restrict(inner, _) => count_located(inner, name),
        System::Nil | System::Species(_) => 0,
    }
}

/// Follows every tick-free path from each cycle start (the initial state and
/// every tick target) and reports `(start, end, counts)` whenever the path
/// reaches a tick or a terminal state. `count` maps a label to increments
/// of two counters. Truncated states end a path without a report.
fn cycles(mdp: &Mdp, count: impl Fn(&Label) -> [u64; 2]) -> Vec<(usize, usize, [u64; 2])> {
    let mut starts: BTreeSet<usize> = BTreeSet::from([mdp.initial]);
    for c in &mdp.choices {
        starts.extend(c.transitions().iter().filter(|t| t.tick).map(|t| t.target));
    }
    let mut out = Vec::new();
    for &start in &starts {
        let mut seen: HashSet<(usize, [u64; 2])> = HashSet::new();
        let mut queue = VecDeque::from([(start, [0u64; 2])]);
        while let Some((s, n)) = queue.pop_front() {
            if !seen.insert((s, n)) {
                continue;
            }
            match &mdp.choices[s] {
                Choice::Truncated => {}
                Choice::Terminal => out.push((start, s, n)),
                c => {
                    for t in c.transitions() {
                        if t.tick {
                            out.push((start, s, n));
                            continue;
                        }
                        let inc = t.label.as_ref().map_or([0, 0], &count);
                        queue.push_back((t.target, [n[0] + inc[0], n[1] + inc[1]]));
                    }
                }
            }
        }
    }
    out
}

fn is_sync_on(l: &Label, ch: &Channel) -> bool {
    matches!(l, Label::Tau(TauCause::Sync { channel, .. }) if channel == ch)
}

/// Checks that between consecutive ticks the number of `rep` synchronisations
/// of `species` equals `per_adult` times the individuals that started the
/// cycle as `adult`. Returns the number of cycle segments checked.
pub fn rep_outputs_per_cycle(
    mdp: &Mdp,
    species: &SpeciesId,
    adult: &Name,
    per_adult: u64,
) -> Result<usize, CycleViolation> {
    let rep = Channel::Rep(species.clone());
    let segments = cycles(mdp, |l| [u64::from(is_sync_on(l, &rep)), 0]);
    for &(start, end, [found, _]) in &segments {
        let expected = per_adult * count_located(&mdp.configs[start].system, adult);
        if found != expected {
            return Err(CycleViolation {
                start,
                end,
                found,
                expected,
            });
        }
    }
    Ok(segments.len())
}

/// Checks that between consecutive ticks the moves of `species` are at most
/// `limit` per individual present during the cycle (alive at its start or
/// born in it). Returns the number of cycle segments checked.
pub fn moves_per_cycle(
    mdp: &Mdp,
    species: &SpeciesId,
    limit: u64,
) -> Result<usize, CycleViolation> {
    let rep = Channel::Rep(species.clone());
    let segments = cycles(mdp, |l| match l {
        Label::Tau(TauCause::Move { species: s, .. }) if s == species => [1, 0],
        l if is_sync_on(l, &rep) => [0, 1],
        _ => [0, 0],
    });
    for &(start, end, [moves, births]) in &segments {
        let expected = limit * (mdp.configs[start].env.species_total(species) + births);
        if moves > expected {
            return Err(CycleViolation {
                start,
                end,
                found: moves,
                expected,
            });
        }
    }
    Ok(segments.len())
}

/// Tick counts at which paths reach a terminal state, or `None` when some
/// path can run forever or hits a truncated state.
pub fn starvation_ticks(mdp: &Mdp) -> Option<BTreeSet<u64>> {
    fn visit(
        mdp: &Mdp,
        s: usize,
        ticks: u64,
        on_path: &mut Vec<bool>,
        out: &mut BTreeSet<u64>,
    ) -> bool {
        if on_path[s] {
            return false;
        }
        match &mdp.choices[s] {
            Choice::Truncated => false,
            Choice::Terminal => {
                out.insert(ticks);
                true
            }
            c => {
                on_path[s] = true;
                let ok = c
                    .transitions()
                    .iter()
                    .all(|t| visit(mdp, t.target, ticks + u64::from(t.tick), on_path, out));
                on_path[s] = false;
                ok
            }
        }
    }
    let mut out = BTreeSet::new();
    visit(mdp, mdp.initial, 0, &mut vec![false; mdp.len()], &mut out).then_some(out)
}

/// Largest number of `go` actions an individual running constant `name` can
/// perform before its next tick, or `None` if a tick-free loop allows
/// unboundedly many.
pub fn max_moves_before_tick(model: &Model, name: &Name) -> Option<u64> {
    fn walk(model: &Model, p: &Process, stack: &mut Vec<Name>) -> Option<u64> {
        match p {
            Process::Nil => Some(0),
            Process::Prefix(Action::Tick, _) => Some(0),
            Process::Prefix(Action::Go(_), q) => walk(model, q, stack).map(|n| n + 1),
            Process::Prefix(_, q) => walk(model, q, stack),
            Process::Sum(branches) => branches
                .iter()
                .try_fold(0, |m, (_, q)| walk(model, q, stack).map(|n| m.max(n))),
            Process::NeighborSum { body, .. } => walk(model, body, stack),
            Process::Cond(branches) => branches
                .iter()
                .try_fold(0, |m, (_, q)| walk(model, q, stack).map(|n| m.max(n))),
            Process::Const(c) => {
                if stack.contains(c) {
                    return None;
                }
                let def = model.constant(c)?;
                stack.push(c.clone());
                let r = walk(model, def, stack);
                stack.pop();
                r
            }
        }
    }
    walk(model, &Process::Const(name.clone()), &mut Vec::new())
}
