//! Abstract syntax of PALPS models.
//!
//! Three syntactic levels: individual processes ([`Process`]), species
//! replicators ([`SpeciesDef`]) and systems ([`System`]). Expressions over
//! the environment come in two flavours, [`Arith`] and [`BoolExpr`]. All
//! values are immutable once built; process terms are shared through
//! [`Proc`] (`Arc<Process>`).

mod habitat;
mod wellformed;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

pub use habitat::{AttributeDecl, Habitat, Layout};
pub use wellformed::{check_expr_names, check_wellformed, lint, Diagnostic, Severity};

use crate::number::{Rational, Real};
use crate::parser::SourceSpan;

macro_rules! interned_name {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(s: &str) -> Self {
                $name(Arc::from(s))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name::new(s)
            }
        }
    };
}

interned_name!(
    /// A habitat location.
    LocationId
);
interned_name!(
    /// A species label.
    SpeciesId
);
interned_name!(
    /// Process constants, parameters, attributes, plain channels and bound
    /// location variables.
    Name
);

/// A location reference inside an expression or a `go` action.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LocRef {
    Named(LocationId),
    /// `here`: the location of the individual evaluating the expression.
    Here,
    /// A location variable bound by a neighbour sum.
    Var(Name),
}

impl LocRef {
    fn subst_here(&self, loc: &LocationId) -> LocRef {
        match self {
            LocRef::Here => LocRef::Named(loc.clone()),
            other => other.clone(),
        }
    }

    fn subst_var(&self, var: &Name, loc: &LocationId) -> LocRef {
        match self {
            LocRef::Var(v) if v == var => LocRef::Named(loc.clone()),
            other => other.clone(),
        }
    }

    fn is_here(&self) -> bool {
        matches!(self, LocRef::Here)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryOp {
    Neg,
    Abs,
    Sqrt,
    Exp,
    Ln,
    Floor,
    Ceil,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

/// Arithmetic expressions over the environment.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arith {
    Const(Real),
    Param(Name),
    /// Attribute value `psi@l`.
    Attr(Name, LocRef),
    /// Number of individuals of a species at a location, `s@l`.
    Count(SpeciesId, LocRef),
    /// Number of individuals of every species at a location, `@l`.
    Total(LocRef),
    /// `total(s)`: the sum of `s@l` over every declared location.
    SpeciesTotal(SpeciesId),
    Unary(UnaryOp, Box<Arith>),
    Binary(BinaryOp, Box<Arith>, Box<Arith>),
}

impl Arith {
    pub fn constant(r: Real) -> Self {
        Arith::Const(r)
    }

    pub fn binary(op: BinaryOp, a: Arith, b: Arith) -> Self {
        Arith::Binary(op, Box::new(a), Box::new(b))
    }

    /// `w[l/here]`.
    pub fn subst_myloc(&self, loc: &LocationId) -> Arith {
        self.map_locs(&|r| r.subst_here(loc))
    }

    pub fn subst_var(&self, var: &Name, loc: &LocationId) -> Arith {
        self.map_locs(&|r| r.subst_var(var, loc))
    }

    fn map_locs(&self, f: &impl Fn(&LocRef) -> LocRef) -> Arith {
        match self {
            Arith::Const(_) | Arith::Param(_) | Arith::SpeciesTotal(_) => self.clone(),
            Arith::Attr(n, l) => Arith::Attr(n.clone(), f(l)),
            Arith::Count(s, l) => Arith::Count(s.clone(), f(l)),
            Arith::Total(l) => Arith::Total(f(l)),
            Arith::Unary(op, a) => Arith::Unary(*op, Box::new(a.map_locs(f))),
            Arith::Binary(op, a, b) => {
                Arith::Binary(*op, Box::new(a.map_locs(f)), Box::new(b.map_locs(f)))
            }
        }
    }

    pub fn mentions_here(&self) -> bool {
        let mut found = false;
        self.visit_locs(&mut |l| found |= l.is_here());
        found
    }

    pub(crate) fn visit_locs(&self, f: &mut impl FnMut(&LocRef)) {
        match self {
            Arith::Const(_) | Arith::Param(_) | Arith::SpeciesTotal(_) => {}
            Arith::Attr(_, l) | Arith::Count(_, l) | Arith::Total(l) => f(l),
            Arith::Unary(_, a) => a.visit_locs(f),
            Arith::Binary(_, a, b) => {
                a.visit_locs(f);
                b.visit_locs(f);
            }
        }
    }

    pub(crate) fn visit(&self, f: &mut impl FnMut(&Arith)) {
        f(self);
        match self {
            Arith::Unary(_, a) => a.visit(f),
            Arith::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

/// Logical expressions over the environment.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoolExpr {
    True,
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Cmp(Arith, CmpOp, Arith),
}

impl BoolExpr {
    pub fn not(e: BoolExpr) -> Self {
        BoolExpr::Not(Box::new(e))
    }

    pub fn and(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::And(Box::new(a), Box::new(b))
    }

    pub fn cmp(a: Arith, op: CmpOp, b: Arith) -> Self {
        BoolExpr::Cmp(a, op, b)
    }

    pub fn subst_myloc(&self, loc: &LocationId) -> BoolExpr {
        match self {
            BoolExpr::True => BoolExpr::True,
            BoolExpr::Not(e) => BoolExpr::not(e.subst_myloc(loc)),
            BoolExpr::And(a, b) => BoolExpr::and(a.subst_myloc(loc), b.subst_myloc(loc)),
            BoolExpr::Cmp(a, op, b) => BoolExpr::Cmp(a.subst_myloc(loc), *op, b.subst_myloc(loc)),
        }
    }

    pub fn subst_var(&self, var: &Name, loc: &LocationId) -> BoolExpr {
        match self {
            BoolExpr::True => BoolExpr::True,
            BoolExpr::Not(e) => BoolExpr::not(e.subst_var(var, loc)),
            BoolExpr::And(a, b) => BoolExpr::and(a.subst_var(var, loc), b.subst_var(var, loc)),
            BoolExpr::Cmp(a, op, b) => {
                BoolExpr::Cmp(a.subst_var(var, loc), *op, b.subst_var(var, loc))
            }
        }
    }

    pub fn mentions_here(&self) -> bool {
        let mut found = false;
        self.visit_arith(&mut |a| found |= a.mentions_here());
        found
    }

    pub(crate) fn visit_arith(&self, f: &mut impl FnMut(&Arith)) {
        match self {
            BoolExpr::True => {}
            BoolExpr::Not(e) => e.visit_arith(f),
            BoolExpr::And(a, b) => {
                a.visit_arith(f);
                b.visit_arith(f);
            }
            BoolExpr::Cmp(a, _, b) => {
                f(a);
                f(b);
            }
        }
    }
}

/// A communication channel. `rep_s` and `prey_s` are recognised by name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Plain(Name),
    Rep(SpeciesId),
    Prey(SpeciesId),
}

impl Channel {
    pub fn from_name(name: &str) -> Channel {
        if let Some(s) = name.strip_prefix("rep_").filter(|s| !s.is_empty()) {
            Channel::Rep(SpeciesId::new(s))
        } else if let Some(s) = name.strip_prefix("prey_").filter(|s| !s.is_empty()) {
            Channel::Prey(SpeciesId::new(s))
        } else {
            Channel::Plain(Name::new(name))
        }
    }

    pub fn species(&self) -> Option<&SpeciesId> {
        match self {
            Channel::Plain(_) => None,
            Channel::Rep(s) | Channel::Prey(s) => Some(s),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Plain(n) => write!(f, "{n}"),
            Channel::Rep(s) => write!(f, "rep_{s}"),
            Channel::Prey(s) => write!(f, "prey_{s}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    In(Channel),
    Out(Channel),
    Go(LocRef),
    Tick,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NeighborWeight {
    /// `1/|Nb(l)|` for every neighbour entry.
    Uniform,
    /// Weight read from the model's dispersal table, `p(here, n)`.
    Table,
}

pub type Proc = Arc<Process>;

/// Individual-level process terms.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Process {
    Nil,
    Prefix(Action, Proc),
    /// Probabilistic choice `sum { w1: P1 + ... }`.
    Sum(Vec<(Arith, Proc)>),
    /// Probabilistic choice over the neighbours of the current location;
    /// `var` is bound to each neighbour in `body`.
    NeighborSum {
        var: Name,
        weight: NeighborWeight,
        body: Proc,
    },
    /// First branch whose guard holds.
    Cond(Vec<(BoolExpr, Proc)>),
    Const(Name),
}

impl Process {
    pub fn nil() -> Proc {
        Arc::new(Process::Nil)
    }

    pub fn prefix(a: Action, p: Proc) -> Proc {
        Arc::new(Process::Prefix(a, p))
    }

    pub fn constant(name: &str) -> Proc {
        Arc::new(Process::Const(Name::new(name)))
    }

    pub fn is_nil(&self) -> bool {
        matches!(self, Process::Nil)
    }

    /// Replaces the bound location variable `var` with `loc`, stopping at
    /// inner binders of the same name.
    pub fn subst_var(self: &Proc, var: &Name, loc: &LocationId) -> Proc {
        match &**self {
            Process::Nil | Process::Const(_) => self.clone(),
            Process::Prefix(a, p) => {
                let a = match a {
                    Action::Go(l) => Action::Go(l.subst_var(var, loc)),
                    other => other.clone(),
                };
                Process::prefix(a, p.subst_var(var, loc))
            }
            Process::Sum(branches) => Arc::new(Process::Sum(
                branches
                    .iter()
                    .map(|(w, p)| (w.subst_var(var, loc), p.subst_var(var, loc)))
                    .collect(),
            )),
            Process::NeighborSum {
                var: inner,
                weight,
                body,
            } => {
                if inner == var {
                    self.clone()
                } else {
                    Arc::new(Process::NeighborSum {
                        var: inner.clone(),
                        weight: *weight,
                        body: body.subst_var(var, loc),
                    })
                }
            }
            Process::Cond(branches) => Arc::new(Process::Cond(
                branches
                    .iter()
                    .map(|(e, p)| (e.subst_var(var, loc), p.subst_var(var, loc)))
                    .collect(),
            )),
        }
    }
}

/// Replaces a neighbour sum by the ordinary probabilistic sum it denotes at
/// location `loc`: one branch per neighbour entry of `loc`.
pub fn expand_neighbor_sum(
    p: &Process,
    loc: &LocationId,
    habitat: &Habitat,
) -> Result<Process, ExpandError> {
    let Process::NeighborSum { var, weight, body } = p else {
        return Err(ExpandError::NotANeighborSum);
    };
    let neighbors = habitat.neighbors(loc);
    if neighbors.is_empty() {
        return Err(ExpandError::NoNeighbors(loc.clone()));
    }
    let uniform = Real::from_rational(Rational::new(1, neighbors.len() as i64));
    let branches = neighbors
        .iter()
        .map(|n| {
            let w = match weight {
                NeighborWeight::Uniform => uniform,
                NeighborWeight::Table => habitat.dispersal(loc, n).unwrap_or_else(Real::zero),
            };
            (Arith::Const(w), body.subst_var(var, n))
        })
        .collect();
    Ok(Process::Sum(branches))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExpandError {
    #[error("location {0} has no neighbours")]
    NoNeighbors(LocationId),
    #[error("term is not a neighbour sum")]
    NotANeighborSum,
}

/// `!rep_s.P`: the replicator of species `s`, spawning `body` per offspring.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpeciesDef {
    pub species: SpeciesId,
    pub body: Proc,
}

/// System-level terms.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum System {
    Nil,
    Located(Proc, SpeciesId, LocationId),
    /// The replicator of a species, defined by the model's [`SpeciesDef`].
    Species(SpeciesId),
    Par(Vec<System>),
    Restrict(Box<System>, BTreeSet<Channel>),
}

impl System {
    pub fn located(p: Proc, s: &str, l: &str) -> System {
        System::Located(p, SpeciesId::new(s), LocationId::new(l))
    }

    pub fn restrict(s: System, channels: impl IntoIterator<Item = Channel>) -> System {
        System::Restrict(Box::new(s), channels.into_iter().collect())
    }

    pub(crate) fn visit(&self, f: &mut impl FnMut(&System)) {
        f(self);
        match self {
            System::Par(items) => items.iter().for_each(|s| s.visit(f)),
            System::Restrict(s, _) => s.visit(f),
            _ => {}
        }
    }
}

/// Source locations of top-level declarations. Ignored by equality so that
/// a reparsed model compares equal to the original.
#[derive(Clone, Debug, Default)]
pub struct SourceMap {
    pub constants: BTreeMap<Name, SourceSpan>,
    pub species: BTreeMap<SpeciesId, SourceSpan>,
    pub system: Option<SourceSpan>,
    pub habitat: Option<SourceSpan>,
}

impl PartialEq for SourceMap {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// A complete PALPS model.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub habitat: Habitat,
    pub params: BTreeMap<Name, Real>,
    pub constants: BTreeMap<Name, Proc>,
    pub species: Vec<SpeciesDef>,
    pub system: System,
    pub source: SourceMap,
}

impl Model {
    pub fn new(habitat: Habitat) -> Self {
        Model {
            habitat,
            params: BTreeMap::new(),
            constants: BTreeMap::new(),
            species: Vec::new(),
            system: System::Nil,
            source: SourceMap::default(),
        }
    }

    pub fn constant(&self, name: &Name) -> Option<&Proc> {
        self.constants.get(name)
    }

    pub fn species_def(&self, s: &SpeciesId) -> Option<&SpeciesDef> {
        self.species.iter().find(|d| &d.species == s)
    }

    pub fn species_ids(&self) -> impl Iterator<Item = &SpeciesId> {
        self.species.iter().map(|d| &d.species)
    }

    /// True when `p` is `0`, directly or through a chain of constants.
    pub fn is_dead(&self, p: &Process) -> bool {
        let mut cur = p;
        for _ in 0..=self.constants.len() {
            match cur {
                Process::Nil => return true,
                Process::Const(c) => match self.constants.get(c) {
                    Some(body) => cur = body,
                    None => return false,
                },
                _ => return false,
            }
        }
        false
    }

    /// Channels restricted at the top of the system term.
    pub fn top_restricted(&self) -> BTreeSet<Channel> {
        let mut out = BTreeSet::new();
        let mut cur = &self.system;
        while let System::Restrict(inner, l) = cur {
            out.extend(l.iter().cloned());
            cur = inner;
        }
        out
    }

    /// Restricts every `rep_s` and `prey_s` channel at the top level that
    /// the model does not already restrict there.
    pub fn close_channels(&mut self) {
        let already = self.top_restricted();
        let missing: BTreeSet<Channel> = self
            .species_ids()
            .flat_map(|s| [Channel::Rep(s.clone()), Channel::Prey(s.clone())])
            .filter(|c| !already.contains(c))
            .collect();
        if missing.is_empty() {
            return;
        }
        let system = std::mem::replace(&mut self.system, System::Nil);
        self.system = match system {
            System::Restrict(inner, mut l) => {
                l.extend(missing);
                System::Restrict(inner, l)
            }
            other => System::Restrict(Box::new(other), missing),
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(s: &str, l: LocRef) -> Arith {
        Arith::Count(SpeciesId::new(s), l)
    }

    #[test]
    fn subst_myloc_replaces_only_here() {
        let e = BoolExpr::cmp(
            count("s", LocRef::Here),
            CmpOp::Eq,
            Arith::Const(Real::one()),
        );
        let a = LocationId::new("a");
        assert_eq!(
            e.subst_myloc(&a),
            BoolExpr::cmp(
                count("s", LocRef::Named(a.clone())),
                CmpOp::Eq,
                Arith::Const(Real::one())
            )
        );

        let c = Arith::Const(Real::parse_decimal("0.25").unwrap());
        assert_eq!(c.subst_myloc(&a), c);

        let w = Arith::binary(
            BinaryOp::Add,
            Arith::Attr(Name::new("psi"), LocRef::Named(LocationId::new("b"))),
            Arith::Total(LocRef::Here),
        );
        let expected = Arith::binary(
            BinaryOp::Add,
            Arith::Attr(Name::new("psi"), LocRef::Named(LocationId::new("b"))),
            Arith::Total(LocRef::Named(a.clone())),
        );
        assert_eq!(w.subst_myloc(&a), expected);
        assert!(!w.subst_myloc(&a).mentions_here());
    }

    fn go_var_body() -> Proc {
        Process::prefix(
            Action::Go(LocRef::Var(Name::new("n"))),
            Process::prefix(Action::Tick, Process::nil()),
        )
    }

    #[test]
    fn uniform_expansion_on_four_neighbours() {
        let h = Habitat::grid(3, 3, true);
        let l = LocationId::new("1_1");
        let p = Process::NeighborSum {
            var: Name::new("n"),
            weight: NeighborWeight::Uniform,
            body: go_var_body(),
        };
        let Process::Sum(branches) = expand_neighbor_sum(&p, &l, &h).unwrap() else {
            panic!()
        };
        assert_eq!(branches.len(), 4);
        let mut total = Rational::from_integer(0);
        for (w, body) in &branches {
            let Arith::Const(r) = w else { panic!() };
            assert_eq!(r.exact(), Some(Rational::new(1, 4)));
            total += r.exact().unwrap();
            let Process::Prefix(Action::Go(LocRef::Named(t)), _) = &**body else {
                panic!()
            };
            assert!(h.is_neighbor(&l, t));
        }
        assert_eq!(total, Rational::from_integer(1));
    }

    #[test]
    fn uniform_expansion_single_neighbour() {
        let h = Habitat::explicit(
            vec![LocationId::new("a"), LocationId::new("b")],
            vec![(LocationId::new("a"), LocationId::new("b"))],
        );
        let p = Process::NeighborSum {
            var: Name::new("n"),
            weight: NeighborWeight::Uniform,
            body: go_var_body(),
        };
        let Process::Sum(branches) = expand_neighbor_sum(&p, &LocationId::new("a"), &h).unwrap()
        else {
            panic!()
        };
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].0, Arith::Const(Real::one()));
    }

    #[test]
    fn table_expansion_reads_dispersal_table() {
        let (a, b, c) = (
            LocationId::new("a"),
            LocationId::new("b"),
            LocationId::new("c"),
        );
        let mut h = Habitat::explicit(
            vec![a.clone(), b.clone(), c.clone()],
            vec![(a.clone(), b.clone()), (a.clone(), c.clone())],
        );
        h.set_dispersal(a.clone(), b.clone(), Real::parse_decimal("0.3").unwrap());
        h.set_dispersal(a.clone(), c.clone(), Real::parse_decimal("0.7").unwrap());
        let p = Process::NeighborSum {
            var: Name::new("n"),
            weight: NeighborWeight::Table,
            body: go_var_body(),
        };
        let Process::Sum(branches) = expand_neighbor_sum(&p, &a, &h).unwrap() else {
            panic!()
        };
        let weights: Vec<f64> = branches
            .iter()
            .map(|(w, _)| match w {
                Arith::Const(r) => r.value(),
                _ => panic!(),
            })
            .collect();
        assert_eq!(weights, vec![0.3, 0.7]);
        let Process::Prefix(Action::Go(LocRef::Named(t)), _) = &*branches[1].1 else {
            panic!()
        };
        assert_eq!(t, &c);
    }

    #[test]
    fn expansion_without_neighbours_fails() {
        let h = Habitat::explicit(vec![LocationId::new("a")], vec![]);
        let p = Process::NeighborSum {
            var: Name::new("n"),
            weight: NeighborWeight::Uniform,
            body: go_var_body(),
        };
        assert_eq!(
            expand_neighbor_sum(&p, &LocationId::new("a"), &h),
            Err(ExpandError::NoNeighbors(LocationId::new("a")))
        );
    }

    #[test]
    fn inner_binder_shadows() {
        let inner = Arc::new(Process::NeighborSum {
            var: Name::new("n"),
            weight: NeighborWeight::Uniform,
            body: go_var_body(),
        });
        assert_eq!(
            inner.subst_var(&Name::new("n"), &LocationId::new("a")),
            inner
        );
    }

    #[test]
    fn channel_names() {
        assert_eq!(
            Channel::from_name("rep_s"),
            Channel::Rep(SpeciesId::new("s"))
        );
        assert_eq!(
            Channel::from_name("prey_fox"),
            Channel::Prey(SpeciesId::new("fox"))
        );
        assert_eq!(Channel::from_name("rep"), Channel::Plain(Name::new("rep")));
        assert_eq!(Channel::Rep(SpeciesId::new("s")).to_string(), "rep_s");
    }
}
