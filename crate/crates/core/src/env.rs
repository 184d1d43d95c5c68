//! Population environments and expression evaluation.
//!
//! An [`Environment`] maps each (species, location) pair to the number of
//! live individuals there. Expressions are evaluated against an environment
//! plus the model's parameters and attributes; `here` is only meaningful
//! when evaluating on behalf of an individual.

use std::collections::BTreeMap;

use crate::ast::{
    Arith, BinaryOp, BoolExpr, LocRef, LocationId, Model, Name, SpeciesId, System, UnaryOp,
};
use crate::number::Real;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Environment {
    counts: BTreeMap<(SpeciesId, LocationId), u64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("`here` used outside an individual")]
    UnboundHere,
    #[error("unbound location variable {0}")]
    UnboundVar(Name),
    #[error("undefined parameter {0}")]
    UndefinedParam(Name),
    #[error("attribute {0} has no value at {1}")]
    UndefinedAttr(Name, LocationId),
    #[error("division by zero")]
    DivisionByZero,
    #[error("expression {0} is not a finite number")]
    NotFinite(String),
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts the live individuals of a system. Located terms whose process
    /// is `0`, directly or through constants, are not counted.
    pub fn of(system: &System, model: &Model) -> Self {
        let mut env = Environment::new();
        system.visit(&mut |s| {
            if let System::Located(p, sp, l) = s {
                if !model.is_dead(p) {
                    env.inc(sp, l);
                }
            }
        });
        env
    }

    pub fn num(&self, s: &SpeciesId, l: &LocationId) -> u64 {
        self.counts
            .get(&(s.clone(), l.clone()))
            .copied()
            .unwrap_or(0)
    }

    /// Individuals of every species at `l`.
    pub fn num_all(&self, l: &LocationId) -> u64 {
        self.counts
            .iter()
            .filter(|((_, loc), _)| loc == l)
            .map(|(_, n)| n)
            .sum()
    }

    /// Individuals of species `s` anywhere.
    pub fn species_total(&self, s: &SpeciesId) -> u64 {
        self.counts
            .iter()
            .filter(|((sp, _), _)| sp == s)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn population(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn inc(&mut self, s: &SpeciesId, l: &LocationId) {
        *self.counts.entry((s.clone(), l.clone())).or_insert(0) += 1;
    }

    /// Removes one individual; undefined when none is recorded there.
    pub fn dec(&mut self, s: &SpeciesId, l: &LocationId) -> Result<(), Undefined> {
        let key = (s.clone(), l.clone());
        let n = self
            .counts
            .get_mut(&key)
            .ok_or_else(|| Undefined(s.clone(), l.clone()))?;
        *n -= 1;
        if *n == 0 {
            self.counts.remove(&key);
        }
        Ok(())
    }

    /// Applies the pointwise sum of `deltas`.
    pub fn merge<'d>(
        &self,
        deltas: impl IntoIterator<Item = &'d EnvDelta>,
    ) -> Result<Environment, Undefined> {
        let mut total = EnvDelta::new();
        for d in deltas {
            total.extend(d);
        }
        self.apply(&total)
    }

    pub fn apply(&self, delta: &EnvDelta) -> Result<Environment, Undefined> {
        let mut out = self.clone();
        for ((s, l), &i) in &delta.changes {
            let key = (s.clone(), l.clone());
            let cur = out.counts.get(&key).copied().unwrap_or(0) as i64;
            let next = cur + i;
            if next < 0 {
                return Err(Undefined(s.clone(), l.clone()));
            }
            if next == 0 {
                out.counts.remove(&key);
            } else {
                out.counts.insert(key, next as u64);
            }
        }
        Ok(out)
    }

    /// Non-zero entries in (species, location) order.
    pub fn iter(&self) -> impl Iterator<Item = (&SpeciesId, &LocationId, u64)> {
        self.counts.iter().map(|((s, l), n)| (s, l, *n))
    }

    pub fn max_per_location(&self) -> u64 {
        let mut per: BTreeMap<&LocationId, u64> = BTreeMap::new();
        for ((_, l), n) in &self.counts {
            *per.entry(l).or_insert(0) += n;
        }
        per.values().copied().max().unwrap_or(0)
    }
}

/// A count would drop below zero: the environment is not compatible with
/// the system that produced the change.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("no individual of species {0} at {1} to remove")]
pub struct Undefined(pub SpeciesId, pub LocationId);

/// Signed per-(species, location) count changes carried by a transition.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnvDelta {
    changes: BTreeMap<(SpeciesId, LocationId), i64>,
}

impl EnvDelta {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, s: &SpeciesId, l: &LocationId, i: i64) {
        let key = (s.clone(), l.clone());
        let v = self.changes.entry(key.clone()).or_insert(0);
        *v += i;
        if *v == 0 {
            self.changes.remove(&key);
        }
    }

    pub fn extend(&mut self, other: &EnvDelta) {
        for ((s, l), &i) in &other.changes {
            self.add(s, l, i);
        }
    }

    pub fn plus(&self, other: &EnvDelta) -> EnvDelta {
        let mut out = self.clone();
        out.extend(other);
        out
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SpeciesId, &LocationId, i64)> {
        self.changes.iter().map(|((s, l), i)| (s, l, *i))
    }
}

/// Evaluation context: environment, model constants and the evaluating
/// individual's location, if any.
#[derive(Clone, Copy)]
pub struct Ctx<'a> {
    pub env: &'a Environment,
    pub model: &'a Model,
    pub here: Option<&'a LocationId>,
}

impl<'a> Ctx<'a> {
    pub fn new(env: &'a Environment, model: &'a Model, here: Option<&'a LocationId>) -> Self {
        Ctx { env, model, here }
    }

    fn loc(&self, r: &'a LocRef) -> Result<&'a LocationId, EvalError> {
        match r {
            LocRef::Named(l) => Ok(l),
            LocRef::Here => self.here.ok_or(EvalError::UnboundHere),
            LocRef::Var(v) => Err(EvalError::UnboundVar(v.clone())),
        }
    }

    pub fn eval(&self, a: &'a Arith) -> Result<Real, EvalError> {
        let count = |n: u64| Real::from_int(n as i64);
        let v = match a {
            Arith::Const(r) => *r,
            Arith::Param(p) => *self
                .model
                .params
                .get(p)
                .ok_or_else(|| EvalError::UndefinedParam(p.clone()))?,
            Arith::Attr(n, l) => {
                let l = self.loc(l)?;
                self.model
                    .habitat
                    .attribute(n, l)
                    .ok_or_else(|| EvalError::UndefinedAttr(n.clone(), l.clone()))?
            }
            Arith::Count(s, l) => count(self.env.num(s, self.loc(l)?)),
            Arith::Total(l) => count(self.env.num_all(self.loc(l)?)),
            Arith::SpeciesTotal(s) => count(self.env.species_total(s)),
            Arith::Unary(op, x) => {
                let x = self.eval(x)?;
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Abs => x.abs(),
                    UnaryOp::Sqrt => x.map_inexact(f64::sqrt),
                    UnaryOp::Exp => x.map_inexact(f64::exp),
                    UnaryOp::Ln => x.map_inexact(f64::ln),
                    UnaryOp::Floor => x.floor(),
                    UnaryOp::Ceil => x.ceil(),
                }
            }
            Arith::Binary(op, x, y) => {
                let (x, y) = (self.eval(x)?, self.eval(y)?);
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => {
                        if y.value() == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        x / y
                    }
                    BinaryOp::Pow => x.powr(y),
                    BinaryOp::Min => x.min(y),
                    BinaryOp::Max => x.max(y),
                }
            }
        };
        if !v.value().is_finite() {
            return Err(EvalError::NotFinite(a.to_string()));
        }
        Ok(v)
    }

    pub fn sat(&self, e: &'a BoolExpr) -> Result<bool, EvalError> {
        Ok(match e {
            BoolExpr::True => true,
            BoolExpr::Not(x) => !self.sat(x)?,
            BoolExpr::And(x, y) => self.sat(x)? && self.sat(y)?,
            BoolExpr::Cmp(a, op, b) => {
                let (a, b) = (self.eval(a)?, self.eval(b)?);
                match a.compare(&b) {
                    Some(ord) => op.holds(ord),
                    None => false,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_bool_expr, parse_model};

    fn model() -> Model {
        parse_model(
            "locations {a, b}\nedges {a -- b}\nattribute c { default: 2, b: 5 }\nparam k = 0.5\n\
             species s = tick.0\nspecies t = tick.0\n\
             system = tick.0@(a, s) | tick.0@(a, s) | tick.0@(b, t) | 0@(b, s)",
        )
        .unwrap()
    }

    #[test]
    fn counts_skip_dead_individuals() {
        let m = model();
        let env = Environment::of(&m.system, &m);
        let (a, b) = (LocationId::new("a"), LocationId::new("b"));
        assert_eq!(env.num(&SpeciesId::new("s"), &a), 2);
        assert_eq!(env.num(&SpeciesId::new("s"), &b), 0);
        assert_eq!(env.num_all(&b), 1);
        assert_eq!(env.species_total(&SpeciesId::new("s")), 2);
        assert_eq!(env.population(), 3);
    }

    #[test]
    fn evaluation_with_here() {
        let m = model();
        let env = Environment::of(&m.system, &m);
        let a = LocationId::new("a");
        let ctx = Ctx::new(&env, &m, Some(&a));
        let e = parse_bool_expr("s@here = 2 && c@here * k = 1 && @b < c@b", &m).unwrap();
        assert!(ctx.sat(&e).unwrap());
        let nohere = Ctx::new(&env, &m, None);
        assert_eq!(nohere.sat(&e), Err(EvalError::UnboundHere));
    }

    #[test]
    fn inc_dec_roundtrip() {
        let mut env = Environment::new();
        let (s, l) = (SpeciesId::new("s"), LocationId::new("l"));
        env.inc(&s, &l);
        env.inc(&s, &l);
        env.dec(&s, &l).unwrap();
        env.dec(&s, &l).unwrap();
        assert_eq!(env, Environment::new());
        assert_eq!(env.dec(&s, &l), Err(Undefined(s.clone(), l.clone())));
    }

    #[test]
    fn merge_adds_deltas() {
        let (s, a, b) = (
            SpeciesId::new("s"),
            LocationId::new("a"),
            LocationId::new("b"),
        );
        let mut env = Environment::new();
        env.inc(&s, &a);
        env.inc(&s, &a);
        let mut go = EnvDelta::new();
        go.add(&s, &a, -1);
        go.add(&s, &b, 1);
        let mut prey = EnvDelta::new();
        prey.add(&s, &a, -1);
        let out = env.merge([&go, &prey]).unwrap();
        assert_eq!(out.num(&s, &a), 0);
        assert_eq!(out.num(&s, &b), 1);
        assert_eq!(env.merge([&go, &prey]), env.merge([&prey, &go]));
        assert_eq!(env.merge([]).unwrap(), env);
        assert!(env.merge([&prey, &prey, &prey]).is_err());
    }
}
