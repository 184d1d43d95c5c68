//! Static well-formedness checks and lints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{Action, Arith, BoolExpr, Channel, LocRef, Model, Name, Process, System};
use crate::parser::SourceSpan;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub span: Option<SourceSpan>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match &self.span {
            Some(span) => write!(f, "{span}: {sev}: {}", self.message),
            None => write!(f, "{sev}: {}", self.message),
        }
    }
}

/// Where a term lives, for diagnostics.
#[derive(Clone)]
enum Owner {
    Constant(Name),
    Species(super::SpeciesId),
    System,
    Formula,
}

struct Checker<'m> {
    model: &'m Model,
    out: Vec<Diagnostic>,
    lints: Vec<Diagnostic>,
}

impl<'m> Checker<'m> {
    fn span(&self, owner: &Owner) -> Option<SourceSpan> {
        let src = &self.model.source;
        match owner {
            Owner::Constant(c) => src.constants.get(c).cloned(),
            Owner::Species(s) => src.species.get(s).cloned(),
            Owner::System => src.system.clone(),
            Owner::Formula => None,
        }
    }

    fn error(&mut self, owner: &Owner, message: String) {
        let span = self.span(owner);
        let d = Diagnostic {
            severity: Severity::Error,
            message,
            span,
        };
        if !self.out.contains(&d) {
            self.out.push(d);
        }
    }

    fn warn(&mut self, owner: &Owner, message: String) {
        let span = self.span(owner);
        let d = Diagnostic {
            severity: Severity::Warning,
            message,
            span,
        };
        if !self.lints.contains(&d) {
            self.lints.push(d);
        }
    }

    fn check_habitat(&mut self) {
        let h = &self.model.habitat;
        let span = self.model.source.habitat.clone();
        let mut errs = Vec::new();
        let mut seen = BTreeSet::new();
        for l in h.locations() {
            if !seen.insert(l) {
                errs.push(format!("duplicate location {l}"));
            }
        }
        for (l, ns) in h.neighbor_lists() {
            if !h.locations().contains(l) {
                errs.push(format!("undefined location {l}"));
            }
            if ns.contains(l) {
                errs.push(format!("self-neighbor {l}"));
            }
            for n in ns {
                if !h.neighbors(n).contains(l) {
                    errs.push(format!("asymmetric neighbours {l} -> {n}"));
                }
            }
        }
        if let super::Layout::Explicit { edges, .. } = h.layout() {
            let mut seen = BTreeSet::new();
            for (a, b) in edges {
                let key = if a <= b { (a, b) } else { (b, a) };
                if a != b && !seen.insert(key) {
                    errs.push(format!("duplicate edge {a} -- {b}"));
                }
            }
        }
        for (name, decl) in &h.attributes {
            for l in decl.values.keys() {
                if !h.contains(l) {
                    errs.push(format!("attribute {name} set at undefined location {l}"));
                }
            }
        }
        for (a, b) in h.dispersal.keys() {
            if !h.contains(a) || !h.contains(b) {
                errs.push(format!(
                    "dispersal entry {a} -> {b} uses an undefined location"
                ));
            } else if !h.is_neighbor(a, b) {
                errs.push(format!("dispersal entry {a} -> {b} joins non-neighbours"));
            }
        }
        for (a, p) in &h.dispersal {
            if !(0.0..=1.0).contains(&p.value()) {
                errs.push(format!(
                    "dispersal weight {} -> {} = {p} outside [0,1]",
                    a.0, a.1
                ));
            }
        }
        for message in errs {
            let d = Diagnostic {
                severity: Severity::Error,
                message,
                span: span.clone(),
            };
            if !self.out.contains(&d) {
                self.out.push(d);
            }
        }
    }

    fn check_loc(&mut self, owner: &Owner, l: &LocRef, bound: &[Name]) {
        match l {
            LocRef::Named(l) => {
                if !self.model.habitat.contains(l) {
                    self.error(owner, format!("undefined location {l}"));
                }
            }
            LocRef::Here => {}
            LocRef::Var(v) => {
                if !bound.contains(v) {
                    self.error(owner, format!("unbound location variable {v}"));
                }
            }
        }
    }

    fn check_arith(&mut self, owner: &Owner, w: &Arith, bound: &[Name]) {
        let mut nodes = Vec::new();
        w.visit(&mut |a| nodes.push(a.clone()));
        for a in nodes {
            match &a {
                Arith::Param(p) => {
                    if !self.model.params.contains_key(p) {
                        self.error(owner, format!("undefined parameter {p}"));
                    }
                }
                Arith::Attr(name, l) => {
                    self.check_loc(owner, l, bound);
                    match self.model.habitat.attributes.get(name) {
                        None => self.error(owner, format!("undefined attribute {name}")),
                        Some(decl) => {
                            let missing: Vec<String> = match l {
                                LocRef::Named(l) => {
                                    if decl.get(l).is_none() {
                                        vec![l.to_string()]
                                    } else {
                                        vec![]
                                    }
                                }
                                _ => self
                                    .model
                                    .habitat
                                    .locations()
                                    .iter()
                                    .filter(|l| decl.get(l).is_none())
                                    .map(|l| l.to_string())
                                    .collect(),
                            };
                            for l in missing {
                                self.error(owner, format!("attribute {name} has no value at {l}"));
                            }
                        }
                    }
                }
                Arith::Count(s, l) => {
                    self.check_loc(owner, l, bound);
                    if self.model.species_def(s).is_none() {
                        self.error(owner, format!("undefined species or attribute {s}"));
                    }
                }
                Arith::SpeciesTotal(s) => {
                    if self.model.species_def(s).is_none() {
                        self.error(owner, format!("undefined species {s}"));
                    }
                }
                Arith::Total(l) => self.check_loc(owner, l, bound),
                _ => {}
            }
        }
    }

    fn check_bool(&mut self, owner: &Owner, e: &BoolExpr, bound: &[Name]) {
        let mut ariths = Vec::new();
        e.visit_arith(&mut |a| ariths.push(a.clone()));
        for a in ariths {
            self.check_arith(owner, &a, bound);
        }
    }

    fn check_channel(&mut self, owner: &Owner, c: &Channel) {
        if let Some(s) = c.species() {
            if self.model.species_def(s).is_none() {
                self.error(owner, format!("channel {c} names undefined species {s}"));
            }
        }
    }

    fn check_process(&mut self, owner: &Owner, p: &Process, bound: &mut Vec<Name>) {
        match p {
            Process::Nil => {}
            Process::Const(c) => {
                if self.model.constant(c).is_none() {
                    self.error(owner, format!("undefined constant {c}"));
                }
            }
            Process::Prefix(a, next) => {
                match a {
                    Action::In(c) | Action::Out(c) => self.check_channel(owner, c),
                    Action::Go(l) => self.check_loc(owner, l, bound),
                    Action::Tick => {}
                }
                self.check_process(owner, next, bound);
            }
            Process::Sum(branches) => {
                if branches.is_empty() {
                    self.error(owner, "probabilistic sum without branches".into());
                }
                for (w, q) in branches {
                    self.check_arith(owner, w, bound);
                    self.check_process(owner, q, bound);
                }
            }
            Process::NeighborSum { var, weight, body } => {
                if *weight == super::NeighborWeight::Table
                    && self.model.habitat.dispersal.is_empty()
                {
                    self.error(
                        owner,
                        "dispersal-table sum but the model has no disptable".into(),
                    );
                }
                bound.push(var.clone());
                self.check_process(owner, body, bound);
                bound.pop();
            }
            Process::Cond(branches) => {
                if branches.is_empty() {
                    self.error(owner, "cond without branches".into());
                }
                for (e, q) in branches {
                    self.check_bool(owner, e, bound);
                    self.check_process(owner, q, bound);
                }
                if let Some((last, _)) = branches.last() {
                    if *last != BoolExpr::True {
                        self.warn(
                            owner,
                            "cond whose last guard is not `true` may block".into(),
                        );
                    }
                }
            }
        }
    }

    fn check_system(&mut self, s: &System) {
        let owner = Owner::System;
        match s {
            System::Nil => {}
            System::Located(p, sp, l) => {
                if self.model.species_def(sp).is_none() {
                    self.error(&owner, format!("undefined species {sp}"));
                }
                if !self.model.habitat.contains(l) {
                    self.error(&owner, format!("undefined location {l}"));
                }
                self.check_process(&owner, p, &mut Vec::new());
            }
            System::Species(sp) => {
                if self.model.species_def(sp).is_none() {
                    self.error(&owner, format!("undefined species {sp}"));
                }
            }
            System::Par(items) => items.iter().for_each(|i| self.check_system(i)),
            System::Restrict(inner, l) => {
                for c in l {
                    self.check_channel(&owner, c);
                }
                self.check_system(inner);
            }
        }
    }

    /// Constants reachable from `p` without passing a prefix or a
    /// probabilistic choice.
    fn unguarded_refs(p: &Process, out: &mut BTreeSet<Name>) {
        match p {
            Process::Const(c) => {
                out.insert(c.clone());
            }
            Process::Cond(branches) => {
                for (_, q) in branches {
                    Self::unguarded_refs(q, out);
                }
            }
            _ => {}
        }
    }

    fn check_recursion(&mut self) {
        let graph: BTreeMap<Name, BTreeSet<Name>> = self
            .model
            .constants
            .iter()
            .map(|(n, p)| {
                let mut refs = BTreeSet::new();
                Self::unguarded_refs(p, &mut refs);
                (n.clone(), refs)
            })
            .collect();
        // colour: 0 unvisited, 1 on stack, 2 done
        let mut colour: BTreeMap<&Name, u8> = BTreeMap::new();
        let mut cyclic = BTreeSet::new();
        fn dfs<'a>(
            n: &'a Name,
            graph: &'a BTreeMap<Name, BTreeSet<Name>>,
            colour: &mut BTreeMap<&'a Name, u8>,
            cyclic: &mut BTreeSet<Name>,
        ) {
            colour.insert(n, 1);
            for m in graph.get(n).into_iter().flatten() {
                match colour.get(m).copied().unwrap_or(0) {
                    0 if graph.contains_key(m) => dfs(m, graph, colour, cyclic),
                    1 => {
                        cyclic.insert(m.clone());
                    }
                    _ => {}
                }
            }
            colour.insert(n, 2);
        }
        for n in graph.keys() {
            if colour.get(n).copied().unwrap_or(0) == 0 {
                dfs(n, &graph, &mut colour, &mut cyclic);
            }
        }
        for c in cyclic {
            self.error(
                &Owner::Constant(c.clone()),
                format!("unguarded recursion through constant {c}"),
            );
        }
    }

    fn run(&mut self) {
        self.check_habitat();
        let mut seen = BTreeSet::new();
        for d in &self.model.species {
            if !seen.insert(&d.species) {
                self.error(
                    &Owner::Species(d.species.clone()),
                    format!("species {} defined twice", d.species),
                );
            }
        }
        for (n, p) in &self.model.constants {
            self.check_process(&Owner::Constant(n.clone()), p, &mut Vec::new());
        }
        for d in &self.model.species {
            self.check_process(&Owner::Species(d.species.clone()), &d.body, &mut Vec::new());
        }
        self.check_system(&self.model.system.clone());
        self.check_recursion();
    }
}

/// All well-formedness violations of `model`; empty when the model is valid.
pub fn check_wellformed(model: &Model) -> Vec<Diagnostic> {
    let mut c = Checker {
        model,
        out: Vec::new(),
        lints: Vec::new(),
    };
    c.run();
    c.out
}

/// Messages for names in a closed expression that `model` does not
/// declare, such as a misspelt species in a property.
pub fn check_expr_names(model: &Model, e: &BoolExpr) -> Vec<String> {
    let mut c = Checker {
        model,
        out: Vec::new(),
        lints: Vec::new(),
    };
    c.check_bool(&Owner::Formula, e, &[]);
    c.out.into_iter().map(|d| d.message).collect()
}

/// Warnings that do not make a model invalid.
pub fn lint(model: &Model) -> Vec<Diagnostic> {
    let mut c = Checker {
        model,
        out: Vec::new(),
        lints: Vec::new(),
    };
    c.run();
    c.lints
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{Habitat, LocationId, Proc, SpeciesDef, SpeciesId};
    use std::sync::Arc;

    fn two_cells() -> Habitat {
        Habitat::explicit(
            vec![LocationId::new("a"), LocationId::new("b")],
            vec![(LocationId::new("a"), LocationId::new("b"))],
        )
    }

    fn model_with(p: Proc) -> Model {
        let mut m = Model::new(two_cells());
        m.species.push(SpeciesDef {
            species: SpeciesId::new("s"),
            body: Process::nil(),
        });
        m.constants.insert(Name::new("P"), p);
        m.system = System::located(Process::constant("P"), "s", "a");
        m
    }

    #[test]
    fn undefined_constant_reported() {
        let m = model_with(Process::prefix(Action::Tick, Process::constant("Q")));
        let d = check_wellformed(&m);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].message, "undefined constant Q");
    }

    #[test]
    fn self_neighbour_reported() {
        let mut m = model_with(Process::nil());
        m.habitat = Habitat::explicit(
            vec![LocationId::new("a")],
            vec![(LocationId::new("a"), LocationId::new("a"))],
        );
        m.system = System::Nil;
        let d = check_wellformed(&m);
        assert!(d.iter().any(|d| d.message == "self-neighbor a"), "{d:?}");
    }

    #[test]
    fn unguarded_recursion_reported() {
        let mut m = model_with(Process::constant("Q"));
        m.constants.insert(
            Name::new("Q"),
            Arc::new(Process::Cond(vec![(
                BoolExpr::True,
                Process::constant("P"),
            )])),
        );
        let d = check_wellformed(&m);
        assert!(
            d.iter()
                .any(|d| d.message.starts_with("unguarded recursion")),
            "{d:?}"
        );
    }

    #[test]
    fn guarded_recursion_accepted() {
        let m = model_with(Process::prefix(Action::Tick, Process::constant("P")));
        assert!(check_wellformed(&m).is_empty());
    }

    #[test]
    fn cond_without_fallback_is_a_lint() {
        let guard = BoolExpr::cmp(
            Arith::Total(LocRef::Here),
            super::super::CmpOp::Ge,
            Arith::Const(crate::number::Real::one()),
        );
        let m = model_with(Arc::new(Process::Cond(vec![(guard, Process::nil())])));
        assert!(check_wellformed(&m).is_empty());
        assert_eq!(lint(&m).len(), 1);
    }
}
