//! Acceptance run. Prints one PASS or FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use common::{audit, random_model, Audit, Shape};
use palps_core::ast::{Action, LocRef, Model, Name, NeighborWeight, Proc, Process, SpeciesId, System};
use palps_core::corpus::{
    corpus_entry, corpus_list, max_moves_before_tick, moves_per_cycle, rep_outputs_per_cycle, starvation_ticks,
};
use palps_core::env::Environment;
use palps_core::number::Rational;
use palps_core::parser::{parse_formula, parse_formula_file, parse_model};
use palps_core::pctl::{
    brute_force_prob, check, oracle_sat, CheckOptions, OracleError, PathFormula, Quantifier, StateFormula, Truth,
};
use palps_core::semantics::{system_steps, ExploreOptions, Fanout, StepKind};
use palps_core::simulator::{estimate, simulate, SimOptions};
use palps_core::statespace::{build, export, export_to_strings, BuildOptions, Choice, Mdp};

/// Agreement required between the checker and the exact oracle.
const ORACLE_TOLERANCE: f64 = 1e-8;
/// Tolerance on probabilistic fan-out sums.
const SUM_TOLERANCE: f64 = 1e-9;
const MIN_TRANSITIONS: usize = 100_000;
const MIN_ORACLE_MODELS: usize = 20;
const SIM_SAMPLES: u64 = 100_000;
const SIM_CONFIDENCE: f64 = 0.99;
const SIM_SEED: u64 = 20_240_517;

type Outcome = Result<String, String>;
/// Random-model audit, corpus audit and the number of random models.
type Walk = (Audit, Audit, usize);

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("compatibility of environments", compatibility),
        ("probability conservation", conservation),
        ("first-step semantics against a direct expander", first_step),
        ("checker against the exact oracle on generated models", oracle_equivalence),
        ("bounded until counts ticks", tick_counting),
        ("extinction, recolonization and dominance on the small models", schemata),
        ("structural corpus checks", structure),
        ("simulator intervals and seed determinism", simulator),
        ("deterministic exports", exports),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} ({secs:.1} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail} ({secs:.1} s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn build_with(model: &Model, atoms: &[palps_core::ast::BoolExpr], max_states: usize) -> (Mdp, bool) {
    let opts = BuildOptions::from(ExploreOptions { max_states: Some(max_states), ..Default::default() });
    let (mdp, report) = build(model, atoms, &opts).expect("build");
    (mdp, report.truncated)
}

/// Walks random models until enough transitions are seen, then every
/// corpus model. Shared by the first two criteria.
fn walk_everything() -> &'static Walk {
    static WALK: std::sync::OnceLock<Walk> = std::sync::OnceLock::new();
    WALK.get_or_init(|| {
        let mut random = Audit::default();
        let mut models = 0;
        let mut seed = 0;
        while random.transitions < MIN_TRANSITIONS {
            audit(&random_model(seed, Shape::default()), 3000, 8, &mut random);
            seed += 1;
            models += 1;
        }
        let mut corpus = Audit::default();
        for e in corpus_list() {
            audit(&e.load().expect("corpus model"), 5000, 40, &mut corpus);
        }
        (random, corpus, models)
    })
}

fn compatibility() -> Outcome {
    let (random, corpus, models) = walk_everything();
    let total = random.transitions + corpus.transitions;
    let bad: Vec<&String> = random.incompatible.iter().chain(&corpus.incompatible).collect();
    ensure(bad.is_empty(), || format!("{} incompatible steps, first {}", bad.len(), bad[0]))?;
    ensure(total >= MIN_TRANSITIONS, || format!("only {total} transitions"))?;
    Ok(format!(
        "{total} transitions ({} from {models} random models, {} from the corpus), 0 violations",
        random.transitions, corpus.transitions
    ))
}

fn conservation() -> Outcome {
    let (random, corpus, _) = walk_everything();
    let fanouts = random.fanouts + corpus.fanouts;
    let bad: Vec<&String> = random.bad_sums.iter().chain(&corpus.bad_sums).collect();
    ensure(bad.is_empty(), || format!("{} fan-outs off by more than {SUM_TOLERANCE:e}, first {}", bad.len(), bad[0]))?;
    ensure(fanouts > 0, || "no probabilistic fan-outs seen".into())?;
    Ok(format!("{fanouts} probabilistic fan-outs sum to 1 within {SUM_TOLERANCE:e}"))
}

/// Direct application of the probabilistic rules to the raw system term:
/// unfold constants, expand neighbour sums over the neighbour list, take the
/// product over individuals. Nothing is sorted, merged or simplified.
mod expander {
    use super::*;

    fn subst(p: &Proc, var: &Name, to: &palps_core::ast::LocationId) -> Proc {
        match &**p {
            Process::Prefix(Action::Go(LocRef::Var(v)), q) if v == var => {
                Arc::new(Process::Prefix(Action::Go(LocRef::Named(to.clone())), subst(q, var, to)))
            }
            Process::Prefix(a, q) => Arc::new(Process::Prefix(a.clone(), subst(q, var, to))),
            // The bodies used here only mention the variable in `go`.
            _ => p.clone(),
        }
    }

    /// Probabilistic alternatives of one individual, or `None` if it has none.
    fn individual(model: &Model, p: &Proc, at: &palps_core::ast::LocationId) -> Option<Vec<(Rational, Proc)>> {
        match &**p {
            Process::Const(c) => individual(model, &model.constants[c], at),
            Process::NeighborSum { var, weight: NeighborWeight::Uniform, body } => {
                let nb = model.habitat.neighbors(at);
                let w = Rational::new(1, nb.len() as i64);
                Some(nb.iter().map(|n| (w, subst(body, var, n))).collect())
            }
            Process::Sum(_) | Process::NeighborSum { .. } => panic!("weights beyond uniform neighbour sums"),
            _ => None,
        }
    }

    pub fn expand(model: &Model, s: &System) -> Vec<(Rational, System)> {
        match s {
            System::Located(p, sp, l) => match individual(model, p, l) {
                Some(alts) => alts.into_iter().map(|(w, q)| (w, System::Located(q, sp.clone(), l.clone()))).collect(),
                None => vec![(Rational::from_integer(1), s.clone())],
            },
            System::Par(items) => {
                let mut acc: Vec<(Rational, Vec<System>)> = vec![(Rational::from_integer(1), Vec::new())];
                for item in items {
                    let alts = expand(model, item);
                    acc = acc
                        .into_iter()
                        .flat_map(|(w, prefix)| {
                            alts.iter().map(move |(v, t)| {
                                let mut next = prefix.clone();
                                next.push(t.clone());
                                (w * v, next)
                            })
                        })
                        .collect();
                }
                acc.into_iter().map(|(w, items)| (w, System::Par(items))).collect()
            }
            System::Restrict(inner, chans) => expand(model, inner)
                .into_iter()
                .map(|(w, t)| (w, System::Restrict(Box::new(t), chans.clone())))
                .collect(),
            System::Nil | System::Species(_) => vec![(Rational::from_integer(1), s.clone())],
        }
    }

    /// Individuals per (species, location), counted directly on the term.
    pub fn census(s: &System, out: &mut BTreeMap<(String, String), u64>) {
        match s {
            System::Located(_, sp, l) => *out.entry((sp.to_string(), l.to_string())).or_default() += 1,
            System::Par(items) => items.iter().for_each(|i| census(i, out)),
            System::Restrict(inner, _) => census(inner, out),
            System::Nil | System::Species(_) => {}
        }
    }
}

fn first_step() -> Outcome {
    let m = corpus_entry("tiny_dispersal").unwrap().load().map_err(|e| e.to_string())?;
    let mut expected = expander::expand(&m, &m.system);
    let Fanout::Probabilistic(steps) = system_steps(&Environment::of(&m.system, &m), &m.system, &m).map_err(|e| e.to_string())?
    else {
        return Err("first step is not probabilistic".into());
    };
    let mut got: Vec<(Rational, System)> = steps
        .iter()
        .map(|s| match &s.kind {
            StepKind::Prob(w) => (w.exact().expect("rational weight"), s.target.clone()),
            StepKind::Nondet(_) => unreachable!(),
        })
        .collect();
    ensure(expected.len() == 64 && got.len() == 64, || format!("{} and {} branches", expected.len(), got.len()))?;
    let w = Rational::new(1, 64);
    ensure(expected.iter().all(|(v, _)| *v == w), || "expander weights differ from 1/64".into())?;
    expected.sort();
    got.sort();
    ensure(expected == got, || "joint branches differ".into())?;

    // After merging, the explored initial distribution must carry the
    // expander's mass per resulting census.
    let mut want: BTreeMap<BTreeMap<(String, String), u64>, Rational> = BTreeMap::new();
    for (w, t) in &expected {
        let mut c = BTreeMap::new();
        expander::census(t, &mut c);
        *want.entry(c).or_insert_with(Rational::zero) += w;
    }
    let (mdp, _) = build_with(&m, &[], 100);
    let Choice::Probabilistic(ts) = &mdp.choices[mdp.initial] else {
        return Err("initial state is not probabilistic".into());
    };
    let mut have: BTreeMap<BTreeMap<(String, String), u64>, Rational> = BTreeMap::new();
    for t in ts {
        let c = mdp.configs[t.target].env.iter().map(|(s, l, n)| ((s.to_string(), l.to_string()), n)).collect();
        *have.entry(c).or_insert_with(Rational::zero) += t.exact.expect("rational probability");
    }
    ensure(want == have, || format!("merged distributions differ: {want:?} vs {have:?}"))?;
    Ok(format!("64 joint branches of weight 1/64 equal, {} merged successors equal", ts.len()))
}

/// Compares the checker with the oracle on every state for both
/// quantifiers. `Ok(None)` when the oracle declines.
fn compare(mdp: &Mdp, f: &StateFormula) -> Result<Option<(bool, bool)>, String> {
    let StateFormula::Prob { path, .. } = f else {
        return Err("not a probability formula".into());
    };
    let r = check(mdp, f, &CheckOptions::default()).map_err(|e| e.to_string())?;
    let p = r.probabilities.ok_or("no probabilities")?;
    let mut split = false;
    let mut inner = false;
    for (q, got) in [(Quantifier::Min, &p.min_lo), (Quantifier::Max, &p.max_hi)] {
        let exact = match brute_force_prob(mdp, path, q) {
            Err(OracleError::TooLarge(_)) => return Ok(None),
            r => r.map_err(|e| e.to_string())?,
        };
        for s in 0..mdp.len() {
            let want = to_f64(&exact[s]);
            if (got[s] - want).abs() > ORACLE_TOLERANCE {
                return Err(format!("{f}, {q}, state {s}: checker {} oracle {want}", got[s]));
            }
            inner |= want > 0.0 && want < 1.0;
        }
    }
    for s in 0..mdp.len() {
        split |= (p.min_lo[s] - p.max_hi[s]).abs() > 1e-6;
    }
    Ok(Some((split, inner)))
}

fn oracle_equivalence() -> Outcome {
    let shape = Shape { births: false, predator: false, sync: false, individuals: 2, ..Shape::default() };
    let (mut compared, mut declined, mut split, mut inner, mut formulas) = (0, 0, 0, 0, 0);
    let mut seed = 1000;
    while compared < 2 * MIN_ORACLE_MODELS && seed < 1000 + 500 {
        let m = random_model(seed, shape);
        let k = seed % 13;
        seed += 1;
        let texts = [
            "P>=0 [ X s@l1 >= 1 ]".to_string(),
            format!("P>=0 [ !(s@l0 = 0) U{{<={k}}} s@l1 >= 1 ]"),
            format!("P>=0 [ true U{{<={k}}} total(s) = 0 ]"),
            "P>=0 [ true U s@l1 = 0 ]".to_string(),
        ];
        let fs: Vec<StateFormula> = texts.iter().map(|t| parse_formula(t, &m).expect("formula")).collect();
        let atoms: Vec<_> = fs.iter().flat_map(|f| f.atoms()).collect();
        let (mdp, truncated) = build_with(&m, &atoms, 1000);
        if truncated || mdp.len() < 4 {
            continue;
        }
        let mut results = Vec::new();
        for f in &fs {
            match compare(&mdp, f)? {
                Some(r) => results.push(r),
                None => break,
            }
        }
        if results.len() < fs.len() {
            declined += 1;
            continue;
        }
        compared += 1;
        formulas += results.len();
        split += usize::from(results.iter().any(|r| r.0));
        inner += usize::from(results.iter().any(|r| r.1));
    }
    ensure(compared >= MIN_ORACLE_MODELS, || format!("only {compared} models compared"))?;
    ensure(split > 0, || "no generated model separates min and max".into())?;
    Ok(format!(
        "{compared} models, {formulas} formulas agree within {ORACLE_TOLERANCE:e} for min and max \
         ({split} with min != max, {inner} with values strictly inside (0, 1), {declined} skipped as too many schedulers)"
    ))
}

/// The walker loops through a tick-free cycle `a -> b -> a` with
/// probability 1/4 per round, dies with 1/4 and otherwise ticks once and
/// then reaches `c`. Within one tick the goal is reached with probability
/// 1/2 / (1 - 1/4) = 2/3, however many steps the cycle takes.
const TAU_CYCLE: &str = "locations {a, b, c}\nedges {a -- b, a -- c}\nspecies s = 0\n\
    process W = sum { 0.25: go b.go a.W + 0.25: tick.0 + 0.5: tick.G }\n\
    process G = go c.tick.0\n\
    system = W@(a, s) restrict {rep_s, prey_s}";

/// Step-bounded reachability over the same transitions, every step
/// consuming the budget, taking the maximum over schedulers.
fn step_bounded(mdp: &Mdp, goal: &[bool], k: usize) -> f64 {
    let mut x: Vec<f64> = goal.iter().map(|&g| f64::from(u8::from(g))).collect();
    for _ in 0..k {
        x = (0..mdp.len())
            .map(|s| {
                if goal[s] {
                    return 1.0;
                }
                match &mdp.choices[s] {
                    Choice::Probabilistic(ts) => ts.iter().map(|t| t.prob * x[t.target]).sum(),
                    Choice::Nondeterministic(ts) => ts.iter().map(|t| x[t.target]).fold(0.0, f64::max),
                    _ => 0.0,
                }
            })
            .collect();
    }
    x[mdp.initial]
}

fn tick_counting() -> Outcome {
    let m = parse_model(TAU_CYCLE).map_err(|e| e.to_string())?;
    let mut values = Vec::new();
    for k in 0..=2 {
        let f = parse_formula(&format!("P>=0 [ true U{{<={k}}} s@c = 1 ]"), &m).unwrap();
        let (mdp, truncated) = build_with(&m, &f.atoms(), 1000);
        ensure(!truncated, || "exploration truncated".into())?;
        compare(&mdp, &f)?.ok_or("oracle declined")?;
        let StateFormula::Prob { path, .. } = &f else { unreachable!() };
        let exact = brute_force_prob(&mdp, path, Quantifier::Min).map_err(|e| e.to_string())?;
        let value = exact[mdp.initial].clone();
        let checked = check(&mdp, &f, &CheckOptions::default()).unwrap().pmin().unwrap();
        values.push((k, value, checked, mdp));
    }
    let two_thirds = BigRational::new(2.into(), 3.into());
    ensure(values[0].1.is_zero(), || format!("k = 0 gives {}", values[0].1))?;
    ensure(values[1].1 == two_thirds && values[2].1 == two_thirds, || {
        format!("k = 1, 2 give {} and {}", values[1].1, values[2].1)
    })?;
    let mdp = &values[1].3;
    let idx = mdp.atom_index(&parse_formula("s@c = 1", &m).unwrap().atoms()[0]).unwrap();
    let goal: Vec<bool> = (0..mdp.len()).map(|s| mdp.labels[idx].contains(&s)).collect();
    let by_steps = step_bounded(mdp, &goal, 1);
    ensure((by_steps - 2.0 / 3.0).abs() > 0.1, || "a one-step bound gives the same value".into())?;
    Ok(format!(
        "P[true U<=1 s@c=1] = 2/3 exactly (checker {:.12}), U<=0 = 0, U<=2 = 2/3; a one-step bound would give {by_steps}",
        values[1].2
    ))
}

fn prob_part(f: &StateFormula) -> Option<&StateFormula> {
    match f {
        StateFormula::Prob { .. } => Some(f),
        StateFormula::Not(x) => prob_part(x),
        StateFormula::And(a, b) => prob_part(a).or_else(|| prob_part(b)),
        _ => None,
    }
}

fn schemata() -> Outcome {
    let mut lines = 0;
    for name in ["tiny_extinction", "tiny_predator_prey"] {
        let e = corpus_entry(name).unwrap();
        let m = e.load().map_err(|e| e.to_string())?;
        let formulas = parse_formula_file(e.properties, &m).map_err(|e| e.to_string())?;
        ensure(formulas.len() == 3, || format!("{name}: {} formulas", formulas.len()))?;
        let atoms: Vec<_> = formulas.iter().flat_map(|(_, f)| f.atoms()).collect();
        let (mdp, truncated) = build_with(&m, &atoms, 100_000);
        ensure(!truncated, || format!("{name}: exploration truncated"))?;
        for ((text, f), (_, min, max)) in formulas.iter().zip(e.expected_values()) {
            let p = prob_part(f).ok_or("no probability bound")?;
            compare(&mdp, p)?.ok_or_else(|| format!("{name}: oracle declined {text}"))?;
            let r = check(&mdp, f, &CheckOptions::default()).map_err(|e| e.to_string())?;
            let sat = oracle_sat(&mdp, f).map_err(|e| e.to_string())?;
            let truth: Vec<bool> = r.truth.iter().map(|t| *t == Truth::True).collect();
            ensure(truth == sat, || format!("{name}: {text}: satisfaction sets differ"))?;
            ensure(r.verdict, || format!("{name}: {text} does not hold"))?;
            let inner = check(&mdp, p, &CheckOptions::default()).unwrap();
            ensure(
                (inner.pmin().unwrap() - min).abs() <= ORACLE_TOLERANCE
                    && (inner.pmax().unwrap() - max).abs() <= ORACLE_TOLERANCE,
                || format!("{name}: {text}: recorded values differ"),
            )?;
            lines += 1;
        }
    }
    Ok(format!("{lines} properties on 2 models match the oracle within {ORACLE_TOLERANCE:e} in every state"))
}

fn structure() -> Outcome {
    let bounded = |m: &Model| {
        let explore = ExploreOptions { max_ticks: Some(5), max_states: Some(20_000), ..Default::default() };
        build(m, &[], &BuildOptions { explore, threads: 0 }).expect("build").0
    };
    let g = corpus_entry("genotypes").unwrap().load().unwrap();
    let mdp = bounded(&g);
    let mut segments = 0;
    for (s, a) in [("g1", "A1"), ("g2", "A2")] {
        segments += rep_outputs_per_cycle(&mdp, &SpeciesId::new(s), &Name::new(a), 3).map_err(|e| e.to_string())?;
    }

    let mut pp = corpus_entry("predator_prey").unwrap().load().unwrap();
    pp.system = System::Restrict(
        Box::new(System::Par(vec![
            System::located(Process::constant("Q"), "f", "0_0"),
            System::Species(SpeciesId::new("f")),
        ])),
        pp.top_restricted(),
    );
    let (mdp, _) = build(&pp, &[], &BuildOptions::default()).map_err(|e| e.to_string())?;
    let ticks = starvation_ticks(&mdp);
    ensure(ticks == Some([2].into()), || format!("lone predator dies after {ticks:?} ticks"))?;

    let w = corpus_entry("woodthrush").unwrap().load().unwrap();
    let worst = ["Juv", "AB", "Fl", "JA1", "BA1", "FA1", "FA2"]
        .iter()
        .map(|c| max_moves_before_tick(&w, &Name::new(c)).ok_or(format!("{c} can move without bound")))
        .collect::<Result<Vec<u64>, String>>()?
        .into_iter()
        .max()
        .unwrap_or(0);
    ensure(worst <= 2, || format!("a thrush can move {worst} times in a cycle"))?;
    let mdp = bounded(&w);
    let cycles = moves_per_cycle(&mdp, &SpeciesId::new("t"), 2).map_err(|e| e.to_string())?;
    Ok(format!(
        "3 rep outputs per adult over {segments} cycle segments, lone predator dies after 2 rounds, \
         at most 2 moves per thrush over {cycles} cycle segments (5 ticks)"
    ))
}

fn simulator() -> Outcome {
    let ext = corpus_entry("tiny_extinction").unwrap().load().unwrap();
    let tau = parse_model(TAU_CYCLE).unwrap();
    let mut detail = Vec::new();
    for (name, m, text) in [
        ("tiny_extinction", &ext, "P>=0 [ true U{<=10} total(s) = 0 ]"),
        ("tick-free cycle", &tau, "P>=0 [ true U{<=1} s@c = 1 ]"),
    ] {
        let f = parse_formula(text, m).unwrap();
        let (mdp, truncated) = build_with(m, &f.atoms(), 100_000);
        ensure(!truncated, || format!("{name}: exploration truncated"))?;
        let StateFormula::Prob { path, .. } = &f else { unreachable!() };
        let lo = brute_force_prob(&mdp, path, Quantifier::Min).map_err(|e| e.to_string())?;
        let hi = brute_force_prob(&mdp, path, Quantifier::Max).map_err(|e| e.to_string())?;
        ensure(lo[mdp.initial] == hi[mdp.initial], || format!("{name}: value depends on the scheduler"))?;
        let exact = to_f64(&lo[mdp.initial]);
        let path: &PathFormula = path;
        let opts = SimOptions { seed: SIM_SEED, threads: 0, ..Default::default() };
        let est = estimate(m, path, SIM_SAMPLES, SIM_CONFIDENCE, &opts).map_err(|e| e.to_string())?;
        ensure(est.ci_low <= exact && exact <= est.ci_high, || {
            format!("{name}: {exact} outside [{}, {}]", est.ci_low, est.ci_high)
        })?;
        let again = estimate(m, path, SIM_SAMPLES, SIM_CONFIDENCE, &SimOptions { threads: 1, ..opts.clone() })
            .map_err(|e| e.to_string())?;
        ensure(est == again, || format!("{name}: estimates differ between thread counts"))?;
        detail.push(format!("{name} {exact:.6} in [{:.6}, {:.6}]", est.ci_low, est.ci_high));
    }
    let opts = SimOptions { seed: SIM_SEED, max_ticks: 20, threads: 4, ..Default::default() };
    let a = simulate(&ext, &opts, 500).map_err(|e| e.to_string())?;
    let b = simulate(&ext, &SimOptions { threads: 1, ..opts }, 500).map_err(|e| e.to_string())?;
    ensure(a == b, || "traces differ between runs with the same seed".into())?;
    Ok(format!(
        "n = {SIM_SAMPLES}, {}% intervals: {}; repeated runs identical",
        SIM_CONFIDENCE * 100.0,
        detail.join(", ")
    ))
}

fn exports() -> Outcome {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-exports");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut files = 0;
    for e in corpus_list() {
        let m = e.load().unwrap();
        let atoms: Vec<_> = parse_formula_file(e.properties, &m)
            .unwrap()
            .iter()
            .flat_map(|(_, f)| f.atoms())
            .collect();
        let mut bytes = Vec::new();
        for (run, threads) in [(0, 1), (1, 4)] {
            let explore = ExploreOptions { max_states: Some(5000), ..Default::default() };
            let (mdp, _) = build(&m, &atoms, &BuildOptions { explore, threads }).map_err(|e| e.to_string())?;
            let stem = dir.join(format!("{}-{run}", e.name));
            let written = export(&mdp, &stem).map_err(|e| e.to_string())?;
            let strings = export_to_strings(&mdp);
            let contents: Vec<Vec<u8>> = written.iter().map(|p| std::fs::read(p).unwrap()).collect();
            ensure(contents == [strings.sta.into_bytes(), strings.tra.into_bytes(), strings.lab.into_bytes()], || {
                format!("{}: written files differ from the rendered text", e.name)
            })?;
            bytes.push(contents);
        }
        ensure(bytes[0] == bytes[1], || format!("{}: exports differ", e.name))?;
        files += 3;
    }
    Ok(format!("{files} files from {} corpus models byte-identical across two builds", corpus_list().len()))
}
