//! Random small models and helpers shared by the integration tests.

#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use palps_core::ast::Model;
use palps_core::env::Environment;
use palps_core::parser::parse_model;
use palps_core::semantics::{canonicalize, system_steps, Configuration, Fanout, StepKind};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which constructs a generated model may use.
#[derive(Clone, Copy, Debug)]
pub struct Shape {
    /// Offspring via `out rep_s`; the offspring lives for one round.
    pub births: bool,
    /// A predator species `f` preying on `s`.
    pub predator: bool,
    /// Tick-free loops through `go`.
    pub tau_loops: bool,
    /// Synchronisation on a restricted channel `c`.
    pub sync: bool,
    pub individuals: usize,
}

impl Default for Shape {
    fn default() -> Self {
        Shape { births: true, predator: true, tau_loops: true, sync: true, individuals: 3 }
    }
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    shape: Shape,
    locations: Vec<String>,
    consts: Vec<String>,
}

const WEIGHTS: &[&[&str]] = &[&["0.5", "0.5"], &["0.2", "0.8"], &["0.25", "0.75"], &["0.2", "0.3", "0.5"], &["1/3", "2/3"]];

impl Gen<'_> {
    fn cont(&mut self) -> String {
        if self.rng.gen_bool(0.1) {
            "0".into()
        } else {
            self.consts.choose(self.rng).unwrap().clone()
        }
    }

    fn loc(&mut self) -> String {
        self.locations.choose(self.rng).unwrap().clone()
    }

    fn guard(&mut self) -> String {
        let l = self.loc();
        match self.rng.gen_range(0..4) {
            0 => "s@here > 1".into(),
            1 => format!("s@{l} = 0"),
            2 => "total(s) >= 2".into(),
            _ => "s@here >= s@l0".into(),
        }
    }

    fn body(&mut self, depth: u32, predator: bool) -> String {
        let pick = if depth == 0 { 0 } else { self.rng.gen_range(0..40) };
        match pick {
            0..=3 => format!("tick.{}", self.cont()),
            4..=8 => {
                let ws = *WEIGHTS.choose(self.rng).unwrap();
                let parts: Vec<String> = ws.iter().map(|w| format!("{w}: {}", self.body(depth - 1, predator))).collect();
                format!("sum {{ {} }}", parts.join(" + "))
            }
            9..=12 => {
                let rest = if self.shape.tau_loops && self.rng.gen_bool(0.3) {
                    self.cont()
                } else {
                    format!("tick.{}", self.cont())
                };
                format!("sum over n in neigh(here) {{ uniform: go n.{rest} }}")
            }
            13..=15 => {
                let g = self.guard();
                let a = self.body(depth - 1, predator);
                let b = self.body(depth - 1, predator);
                format!("cond({g} -> {a}, true -> {b})")
            }
            16 | 17 if predator => format!("out prey_s.tick.{}", self.cont()),
            16 | 17 if self.shape.births => format!("out rep_s.{}", self.body(depth - 1, predator)),
            18 if self.shape.sync => format!("out c.{}", self.body(depth - 1, predator)),
            19 if self.shape.sync => format!("in c.{}", self.body(depth - 1, predator)),
            20..=27 => {
                let ws = *WEIGHTS.choose(self.rng).unwrap();
                let parts: Vec<String> = ws.iter().map(|w| format!("{w}: {}", self.body(depth - 1, predator))).collect();
                format!("sum {{ {} }}", parts.join(" + "))
            }
            28..=33 => format!("sum over n in neigh(here) {{ uniform: go n.tick.{} }}", self.cont()),
            _ => format!("tick.{}", self.cont()),
        }
    }
}

/// Source text of a random model with two or three locations.
pub fn random_model_text(seed: u64, shape: Shape) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=3);
    let locations: Vec<String> = (0..n).map(|i| format!("l{i}")).collect();
    let mut edges: Vec<String> = (1..n).map(|i| format!("l{} -- l{i}", i - 1)).collect();
    if n == 3 && rng.gen_bool(0.5) {
        edges.push("l0 -- l2".into());
    }
    let consts: Vec<String> = (0..rng.gen_range(1..=3)).map(|i| format!("P{i}")).collect();
    let mut gen = Gen { rng: &mut rng, shape, locations: locations.clone(), consts: consts.clone() };
    let mut text = format!("locations {{{}}}\nedges {{{}}}\n", locations.join(", "), edges.join(", "));
    text.push_str(if shape.births { "species s = tick.0\n" } else { "species s = 0\n" });
    for c in &consts {
        let body = gen.body(3, false);
        text.push_str(&format!("process {c} = {body}\n"));
    }
    let mut parts = Vec::new();
    for _ in 0..shape.individuals {
        let c = consts.choose(gen.rng).unwrap().clone();
        let l = gen.loc();
        parts.push(format!("{c}@({l}, s)"));
    }
    if shape.predator {
        text.push_str("species f = 0\n");
        gen.consts = vec!["Q".into()];
        let body = gen.body(3, true);
        text.push_str(&format!("process Q = {body}\n"));
        let l = gen.loc();
        parts.push(format!("Q@({l}, f)"));
    }
    parts.push("species s".into());
    text.push_str(&format!("system = ({}) restrict {{c}}\n", parts.join(" | ")));
    text
}

/// A parsed, well-formed random model with channels closed.
pub fn random_model(seed: u64, shape: Shape) -> Model {
    let text = random_model_text(seed, shape);
    let mut m = parse_model(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    let errors = palps_core::ast::check_wellformed(&m);
    assert!(errors.is_empty(), "{errors:?}\n{text}");
    m.close_channels();
    m
}

/// Tallies from walking the raw transition relation.
#[derive(Debug, Default)]
pub struct Audit {
    pub states: usize,
    pub transitions: usize,
    pub fanouts: usize,
    /// Steps whose updated environment differs from the census of the target.
    pub incompatible: Vec<String>,
    /// Probabilistic fan-outs whose weights do not sum to 1.
    pub bad_sums: Vec<String>,
}

/// Breadth-first walk from the initial configuration that checks every
/// step: the environment after the update must equal the census of the
/// target, both as produced and after canonicalisation. Configurations with
/// more than `max_population` individuals are not expanded.
pub fn audit(model: &Model, max_states: usize, max_population: u64, audit: &mut Audit) {
    let init = Configuration::initial(model);
    let mut seen: HashMap<Configuration, ()> = HashMap::from([(init.clone(), ())]);
    let mut queue = VecDeque::from([init]);
    while let Some(c) = queue.pop_front() {
        audit.states += 1;
        if c.env.population() > max_population {
            continue;
        }
        let fanout = match system_steps(&c.env, &c.system, model) {
            Ok(f) => f,
            Err(e) => panic!("{e}"),
        };
        if let Fanout::Probabilistic(steps) = &fanout {
            audit.fanouts += 1;
            let sum: f64 = steps.iter().map(|s| weight(&s.kind)).sum();
            if (sum - 1.0).abs() > 1e-9 {
                audit.bad_sums.push(format!("{sum} at {}", c.digest()));
            }
        }
        for step in fanout.steps() {
            audit.transitions += 1;
            let env = c.env.apply(&step.delta).expect("update defined");
            let system = canonicalize(&step.target, model);
            if Environment::of(&step.target, model) != env || Environment::of(&system, model) != env {
                audit.incompatible.push(format!("{} -> {}", c.digest(), step.target));
            }
            let next = Configuration { env, system };
            if seen.len() < max_states && !seen.contains_key(&next) {
                seen.insert(next.clone(), ());
                queue.push_back(next);
            }
        }
    }
}

pub fn weight(k: &StepKind) -> f64 {
    match k {
        StepKind::Prob(w) => w.value(),
        StepKind::Nondet(_) => 0.0,
    }
}
