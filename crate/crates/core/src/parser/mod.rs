//! Concrete syntax for models (`.palps`) and PCTL formulas (`.pctl`).
//!
//! The grammar is documented in `docs/grammar.md`. Parsing stops at the
//! first error. [`pretty`] renders a model back into text that reparses to
//! a structurally equal model.

mod lexer;
mod pretty;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

pub use lexer::{LexError, SourceSpan};
pub use pretty::pretty;

use lexer::{tokenize, Tok, Token};

use crate::ast::{
    Action, Arith, AttributeDecl, BinaryOp, BoolExpr, Channel, CmpOp, Habitat, LocRef, LocationId,
    Model, Name, NeighborWeight, Proc, Process, SourceMap, SpeciesDef, SpeciesId, System, UnaryOp,
};
use crate::number::Real;
use crate::pctl::{PathFormula, ProbCmp, StateFormula};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    pub expected: Vec<String>,
}

impl From<LexError> for ParseError {
    fn from(e: LexError) -> Self {
        ParseError {
            span: e.span,
            message: format!("unexpected character {:?}", e.ch),
            expected: vec![],
        }
    }
}

type PResult<T> = Result<T, ParseError>;

const UNARY_FUNCS: &[(&str, UnaryOp)] = &[
    ("abs", UnaryOp::Abs),
    ("sqrt", UnaryOp::Sqrt),
    ("exp", UnaryOp::Exp),
    ("ln", UnaryOp::Ln),
    ("floor", UnaryOp::Floor),
    ("ceil", UnaryOp::Ceil),
];
const BINARY_FUNCS: &[(&str, BinaryOp)] = &[
    ("min", BinaryOp::Min),
    ("max", BinaryOp::Max),
    ("pow", BinaryOp::Pow),
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Location variables bound by enclosing neighbour sums.
    bound: Vec<Name>,
    /// Whether `here` may appear (false inside PCTL atoms).
    allow_here: bool,
}

impl Parser {
    fn new(text: &str, file: Option<Arc<str>>) -> PResult<Self> {
        Ok(Parser {
            toks: tokenize(text, file)?,
            pos: 0,
            bound: Vec::new(),
            allow_here: true,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].span.clone()
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        let found = self.peek().to_string();
        let expected: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
        Err(ParseError {
            span: self.span(),
            message: format!("expected {}, found {found}", expected.join(" or ")),
            expected,
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, s: &str) -> bool {
        if self.is_kw(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(&[&format!("`{s}`")])
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.eat_kw(s) {
            Ok(())
        } else {
            self.error(&[&format!("`{s}`")])
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn number(&mut self) -> PResult<Real> {
        match self.peek().clone() {
            Tok::Number(s) => {
                let r = Real::parse_decimal(&s);
                match r {
                    Some(r) => {
                        self.bump();
                        Ok(r)
                    }
                    None => self.error(&["number"]),
                }
            }
            _ => self.error(&["number"]),
        }
    }

    fn signed_number(&mut self) -> PResult<Real> {
        if self.eat_sym("-") {
            Ok(-self.number()?)
        } else {
            self.number()
        }
    }

    fn integer(&mut self) -> PResult<usize> {
        match self.peek().clone() {
            Tok::Number(s) if s.chars().all(|c| c.is_ascii_digit()) => {
                self.bump();
                s.parse().or_else(|_| self.error(&["integer"]))
            }
            _ => self.error(&["integer"]),
        }
    }

    // ---- expressions ----

    fn locref(&mut self) -> PResult<LocRef> {
        let span = self.span();
        let name = self.ident()?;
        if name == "here" || name == "myloc" {
            if !self.allow_here {
                return Err(ParseError {
                    span,
                    message: "`here` has no referent in a state formula".into(),
                    expected: vec![],
                });
            }
            return Ok(LocRef::Here);
        }
        let n = Name::new(&name);
        if self.bound.contains(&n) {
            Ok(LocRef::Var(n))
        } else {
            Ok(LocRef::Named(LocationId::new(&name)))
        }
    }

    fn arith(&mut self) -> PResult<Arith> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.is_sym("+") {
                BinaryOp::Add
            } else if self.is_sym("-") {
                BinaryOp::Sub
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Arith::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> PResult<Arith> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.is_sym("*") {
                BinaryOp::Mul
            } else if self.is_sym("/") {
                BinaryOp::Div
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Arith::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> PResult<Arith> {
        if self.eat_sym("-") {
            if let Tok::Number(_) = self.peek() {
                if !matches!(self.peek_at(1), Tok::Sym("^")) {
                    return Ok(Arith::Const(-self.number()?));
                }
            }
            let inner = self.unary()?;
            return Ok(Arith::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Arith> {
        let base = self.arith_atom()?;
        if self.eat_sym("^") {
            let exp = self.unary()?;
            return Ok(Arith::binary(BinaryOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn arith_atom(&mut self) -> PResult<Arith> {
        match self.peek().clone() {
            Tok::Number(_) => Ok(Arith::Const(self.number()?)),
            Tok::Sym("@") => {
                self.bump();
                Ok(Arith::Total(self.locref()?))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.arith()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.eat_sym("@") {
                    return Ok(Arith::Count(SpeciesId::new(&name), self.locref()?));
                }
                if self.is_sym("(") {
                    return self.call(&name);
                }
                Ok(Arith::Param(Name::new(&name)))
            }
            _ => self.error(&["arithmetic expression"]),
        }
    }

    fn call(&mut self, name: &str) -> PResult<Arith> {
        let span = self.span();
        self.expect_sym("(")?;
        let e = match name {
            "count" => {
                let s = self.ident()?;
                self.expect_sym(",")?;
                let l = self.locref()?;
                Arith::Count(SpeciesId::new(&s), l)
            }
            "total" => Arith::SpeciesTotal(SpeciesId::new(&self.ident()?)),
            _ => {
                if let Some((_, op)) = UNARY_FUNCS.iter().find(|(n, _)| *n == name) {
                    Arith::Unary(*op, Box::new(self.arith()?))
                } else if let Some((_, op)) = BINARY_FUNCS.iter().find(|(n, _)| *n == name) {
                    let a = self.arith()?;
                    self.expect_sym(",")?;
                    let b = self.arith()?;
                    Arith::binary(*op, a, b)
                } else {
                    return Err(ParseError {
                        span,
                        message: format!("unknown function {name}"),
                        expected: vec![],
                    });
                }
            }
        };
        self.expect_sym(")")?;
        Ok(e)
    }

    fn cmp_op(&mut self) -> PResult<CmpOp> {
        let op = match self.peek() {
            Tok::Sym("=") | Tok::Sym("==") => CmpOp::Eq,
            Tok::Sym("!=") => CmpOp::Ne,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            _ => return self.error(&["comparison operator"]),
        };
        self.bump();
        Ok(op)
    }

    fn comparison(&mut self) -> PResult<BoolExpr> {
        let a = self.arith()?;
        let op = self.cmp_op()?;
        let b = self.arith()?;
        Ok(BoolExpr::Cmp(a, op, b))
    }

    fn bool_expr(&mut self) -> PResult<BoolExpr> {
        let mut lhs = self.bool_and()?;
        while self.eat_sym("||") || self.eat_kw("or") {
            let rhs = self.bool_and()?;
            lhs = BoolExpr::not(BoolExpr::and(BoolExpr::not(lhs), BoolExpr::not(rhs)));
        }
        Ok(lhs)
    }

    fn bool_and(&mut self) -> PResult<BoolExpr> {
        let mut lhs = self.bool_not()?;
        while self.eat_sym("&&") || self.eat_kw("and") {
            let rhs = self.bool_not()?;
            lhs = BoolExpr::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn bool_not(&mut self) -> PResult<BoolExpr> {
        if self.eat_sym("!") || self.eat_kw("not") {
            return Ok(BoolExpr::not(self.bool_not()?));
        }
        if self.eat_kw("true") {
            return Ok(BoolExpr::True);
        }
        if self.eat_kw("false") {
            return Ok(BoolExpr::not(BoolExpr::True));
        }
        if self.is_sym("(") {
            let save = self.pos;
            self.bump();
            if let Ok(e) = self.bool_expr() {
                if self.eat_sym(")") && !self.continues_arith() {
                    return Ok(e);
                }
            }
            self.pos = save;
        }
        self.comparison()
    }

    /// After a parenthesised group: does an arithmetic or comparison
    /// operator follow, making the group an arithmetic operand?
    fn continues_arith(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Sym("+" | "-" | "*" | "/" | "^" | "=" | "==" | "!=" | "<" | "<=" | ">" | ">=")
        )
    }

    // ---- processes ----

    fn channel(&mut self) -> PResult<Channel> {
        Ok(Channel::from_name(&self.ident()?))
    }

    fn process(&mut self) -> PResult<Proc> {
        match self.peek().clone() {
            Tok::Number(n) if n == "0" => {
                self.bump();
                Ok(Process::nil())
            }
            Tok::Sym("(") => {
                self.bump();
                let p = self.process()?;
                self.expect_sym(")")?;
                Ok(p)
            }
            Tok::Ident(kw) => match kw.as_str() {
                "tick" => {
                    self.bump();
                    self.prefix_rest(Action::Tick)
                }
                "out" => {
                    self.bump();
                    let c = self.channel()?;
                    self.prefix_rest(Action::Out(c))
                }
                "in" if matches!(self.peek_at(1), Tok::Ident(_)) => {
                    self.bump();
                    let c = self.channel()?;
                    self.prefix_rest(Action::In(c))
                }
                "go" => {
                    self.bump();
                    let l = self.locref()?;
                    self.prefix_rest(Action::Go(l))
                }
                "sum" => {
                    self.bump();
                    self.sum()
                }
                "cond" => {
                    self.bump();
                    self.cond()
                }
                _ => {
                    self.bump();
                    if self.is_sym(".") {
                        self.prefix_rest(Action::In(Channel::from_name(&kw)))
                    } else {
                        Ok(Arc::new(Process::Const(Name::new(&kw))))
                    }
                }
            },
            _ => self.error(&["process"]),
        }
    }

    fn prefix_rest(&mut self, a: Action) -> PResult<Proc> {
        self.expect_sym(".")?;
        let p = self.process()?;
        Ok(Process::prefix(a, p))
    }

    fn sum(&mut self) -> PResult<Proc> {
        if self.eat_kw("over") {
            let var = Name::new(&self.ident()?);
            self.expect_kw("in")?;
            self.expect_kw("neigh")?;
            self.expect_sym("(")?;
            if !(self.eat_kw("here") || self.eat_kw("myloc")) {
                return self.error(&["`here`"]);
            }
            self.expect_sym(")")?;
            self.expect_sym("{")?;
            let weight = if self.eat_kw("uniform") {
                NeighborWeight::Uniform
            } else if self.eat_kw("disptable") {
                NeighborWeight::Table
            } else {
                return self.error(&["`uniform`", "`disptable`"]);
            };
            self.expect_sym(":")?;
            self.bound.push(var.clone());
            let body = self.process();
            self.bound.pop();
            let body = body?;
            self.expect_sym("}")?;
            return Ok(Arc::new(Process::NeighborSum { var, weight, body }));
        }
        self.expect_sym("{")?;
        let mut branches = Vec::new();
        loop {
            let w = self.arith()?;
            self.expect_sym(":")?;
            let p = self.process()?;
            branches.push((w, p));
            if !self.eat_sym("+") {
                break;
            }
        }
        self.expect_sym("}")?;
        Ok(Arc::new(Process::Sum(branches)))
    }

    fn cond(&mut self) -> PResult<Proc> {
        self.expect_sym("(")?;
        let mut branches = Vec::new();
        loop {
            let e = self.bool_expr()?;
            self.expect_sym("->")?;
            let p = self.process()?;
            branches.push((e, p));
            if !(self.eat_sym(",") || self.eat_sym(";")) {
                break;
            }
        }
        self.expect_sym(")")?;
        Ok(Arc::new(Process::Cond(branches)))
    }

    // ---- systems ----

    fn system(&mut self) -> PResult<System> {
        let mut s = self.par()?;
        while self.eat_kw("restrict") {
            self.expect_sym("{")?;
            let mut l = BTreeSet::new();
            if !self.is_sym("}") {
                loop {
                    l.insert(self.channel()?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym("}")?;
            s = System::Restrict(Box::new(s), l);
        }
        Ok(s)
    }

    fn par(&mut self) -> PResult<System> {
        let first = self.sys_atom()?;
        if !self.is_sym("|") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_sym("|") {
            items.push(self.sys_atom()?);
        }
        Ok(System::Par(items))
    }

    fn sys_atom(&mut self) -> PResult<System> {
        if self.is_kw("species") && matches!(self.peek_at(1), Tok::Ident(_)) {
            self.bump();
            return Ok(System::Species(SpeciesId::new(&self.ident()?)));
        }
        if matches!(self.peek(), Tok::Number(n) if n == "0")
            && !matches!(self.peek_at(1), Tok::Sym("@"))
        {
            self.bump();
            return Ok(System::Nil);
        }
        let save = self.pos;
        let located = self.process().and_then(|p| {
            self.expect_sym("@")?;
            self.expect_sym("(")?;
            let l = self.ident()?;
            self.expect_sym(",")?;
            let s = self.ident()?;
            self.expect_sym(")")?;
            Ok(System::Located(p, SpeciesId::new(&s), LocationId::new(&l)))
        });
        match located {
            Ok(s) => Ok(s),
            Err(e) => {
                self.pos = save;
                if self.eat_sym("(") {
                    if let Ok(s) = self.system() {
                        if self.eat_sym(")") {
                            return Ok(s);
                        }
                    }
                }
                Err(e)
            }
        }
    }

    // ---- models ----

    fn model(&mut self) -> PResult<Model> {
        let mut layout: Option<(SourceSpan, Habitat)> = None;
        let mut explicit_locs: Option<Vec<LocationId>> = None;
        let mut edges: Vec<(LocationId, LocationId)> = Vec::new();
        let mut attributes = BTreeMap::new();
        let mut dispersal = BTreeMap::new();
        let mut params = BTreeMap::new();
        let mut constants = BTreeMap::new();
        let mut species = Vec::new();
        let mut system = None;
        let mut source = SourceMap::default();

        while *self.peek() != Tok::Eof {
            let span = self.span();
            let kw = self.ident()?;
            match kw.as_str() {
                "grid" => {
                    self.expect_sym("(")?;
                    let cols = self.integer()?;
                    self.expect_sym(",")?;
                    let rows = self.integer()?;
                    self.expect_sym(",")?;
                    let torus = if self.eat_kw("torus") {
                        true
                    } else if self.eat_kw("bounded") {
                        false
                    } else {
                        return self.error(&["`torus`", "`bounded`"]);
                    };
                    self.expect_sym(")")?;
                    if layout.is_some() || explicit_locs.is_some() {
                        return Err(dup(span, "habitat"));
                    }
                    layout = Some((span, Habitat::grid(cols, rows, torus)));
                }
                "locations" => {
                    self.expect_sym("{")?;
                    let mut locs = Vec::new();
                    loop {
                        locs.push(LocationId::new(&self.ident()?));
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                    self.expect_sym("}")?;
                    if layout.is_some() || explicit_locs.is_some() {
                        return Err(dup(span, "habitat"));
                    }
                    source.habitat = Some(span);
                    explicit_locs = Some(locs);
                }
                "edges" => {
                    self.expect_sym("{")?;
                    if !self.is_sym("}") {
                        loop {
                            let a = LocationId::new(&self.ident()?);
                            self.expect_sym("--")?;
                            let b = LocationId::new(&self.ident()?);
                            edges.push((a, b));
                            if !self.eat_sym(",") {
                                break;
                            }
                        }
                    }
                    self.expect_sym("}")?;
                }
                "attribute" => {
                    let name = Name::new(&self.ident()?);
                    let mut decl = AttributeDecl::default();
                    if self.eat_sym("=") {
                        decl.default = Some(self.signed_number()?);
                    } else {
                        self.expect_sym("{")?;
                        while !self.is_sym("}") {
                            let key = self.ident()?;
                            self.expect_sym(":")?;
                            let v = self.signed_number()?;
                            if key == "default" {
                                decl.default = Some(v);
                            } else {
                                decl.values.insert(LocationId::new(&key), v);
                            }
                            if !self.eat_sym(",") {
                                break;
                            }
                        }
                        self.expect_sym("}")?;
                    }
                    if attributes.insert(name.clone(), decl).is_some() {
                        return Err(dup(span, &format!("attribute {name}")));
                    }
                }
                "param" => {
                    let name = Name::new(&self.ident()?);
                    self.expect_sym("=")?;
                    let v = self.signed_number()?;
                    if params.insert(name.clone(), v).is_some() {
                        return Err(dup(span, &format!("parameter {name}")));
                    }
                }
                "disptable" => {
                    self.expect_sym("{")?;
                    if !self.is_sym("}") {
                        loop {
                            let a = LocationId::new(&self.ident()?);
                            self.expect_sym("->")?;
                            let b = LocationId::new(&self.ident()?);
                            self.expect_sym(":")?;
                            let p = self.signed_number()?;
                            dispersal.insert((a, b), p);
                            if !self.eat_sym(",") {
                                break;
                            }
                        }
                    }
                    self.expect_sym("}")?;
                }
                "species" => {
                    let s = SpeciesId::new(&self.ident()?);
                    self.expect_sym("=")?;
                    let body = self.process()?;
                    if species.iter().any(|d: &SpeciesDef| d.species == s) {
                        return Err(dup(span, &format!("species {s}")));
                    }
                    source.species.insert(s.clone(), span);
                    species.push(SpeciesDef { species: s, body });
                }
                "process" => {
                    let name = Name::new(&self.ident()?);
                    self.expect_sym("=")?;
                    let body = self.process()?;
                    if constants.insert(name.clone(), body).is_some() {
                        return Err(dup(span, &format!("process {name}")));
                    }
                    source.constants.insert(name, span);
                }
                "system" => {
                    self.expect_sym("=")?;
                    let s = self.system()?;
                    if system.is_some() {
                        return Err(dup(span, "system"));
                    }
                    source.system = Some(span);
                    system = Some(s);
                }
                _ => {
                    self.pos -= 1;
                    return self.error(&[
                        "`grid`",
                        "`locations`",
                        "`edges`",
                        "`attribute`",
                        "`param`",
                        "`disptable`",
                        "`species`",
                        "`process`",
                        "`system`",
                    ]);
                }
            }
        }

        let mut habitat = match (layout, explicit_locs) {
            (Some((span, h)), None) => {
                if !edges.is_empty() {
                    return Err(ParseError {
                        span,
                        message: "`edges` cannot be combined with `grid`".into(),
                        expected: vec![],
                    });
                }
                source.habitat = Some(span);
                h
            }
            (None, Some(locs)) => Habitat::explicit(locs, edges),
            (None, None) => Habitat::explicit(Vec::new(), edges),
            (Some(_), Some(_)) => unreachable!(),
        };
        habitat.attributes = attributes;
        habitat.dispersal = dispersal;

        let mut model = Model {
            habitat,
            params,
            constants,
            species,
            system: system.unwrap_or(System::Nil),
            source,
        };
        resolve_model(&mut model);
        Ok(model)
    }

    // ---- formulas ----

    fn state_formula(&mut self) -> PResult<StateFormula> {
        let lhs = self.sf_or()?;
        if self.eat_sym("->") {
            let rhs = self.state_formula()?;
            return Ok(StateFormula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn sf_or(&mut self) -> PResult<StateFormula> {
        let mut lhs = self.sf_and()?;
        while self.eat_sym("||") || self.eat_kw("or") {
            let rhs = self.sf_and()?;
            lhs = StateFormula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn sf_and(&mut self) -> PResult<StateFormula> {
        let mut lhs = self.sf_not()?;
        while self.eat_sym("&&") || self.eat_kw("and") {
            let rhs = self.sf_not()?;
            lhs = StateFormula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn prob_cmp(&mut self) -> Option<ProbCmp> {
        let c = match self.peek() {
            Tok::Sym("<") => ProbCmp::Lt,
            Tok::Sym("<=") => ProbCmp::Le,
            Tok::Sym(">") => ProbCmp::Gt,
            Tok::Sym(">=") => ProbCmp::Ge,
            Tok::Sym("=") | Tok::Sym("==") => ProbCmp::Eq,
            _ => return None,
        };
        self.bump();
        Some(c)
    }

    fn sf_not(&mut self) -> PResult<StateFormula> {
        if self.eat_sym("!") || self.eat_kw("not") {
            return Ok(StateFormula::not(self.sf_not()?));
        }
        if self.is_kw("true") && !self.continues_after(1) {
            self.bump();
            return Ok(StateFormula::True);
        }
        if self.is_kw("false") && !self.continues_after(1) {
            self.bump();
            return Ok(StateFormula::not(StateFormula::True));
        }
        if self.is_kw("P")
            && matches!(
                self.peek_at(1),
                Tok::Sym("<" | "<=" | ">" | ">=" | "=" | "==")
            )
        {
            self.bump();
            let cmp = self.prob_cmp().expect("checked above");
            let span = self.span();
            let bound = self.number()?;
            if !(0.0..=1.0).contains(&bound.value()) {
                return Err(ParseError {
                    span,
                    message: "probability bound outside [0,1]".into(),
                    expected: vec![],
                });
            }
            self.expect_sym("[")?;
            let path = self.path_formula()?;
            self.expect_sym("]")?;
            return Ok(StateFormula::Prob {
                cmp,
                bound,
                path: Box::new(path),
            });
        }
        if self.is_sym("(") {
            let save = self.pos;
            self.bump();
            if let Ok(f) = self.state_formula() {
                if self.eat_sym(")") && !self.continues_arith() {
                    return Ok(f);
                }
            }
            self.pos = save;
        }
        Ok(StateFormula::Atom(self.comparison()?))
    }

    fn continues_after(&self, k: usize) -> bool {
        matches!(
            self.peek_at(k),
            Tok::Sym("=" | "==" | "!=" | "<" | "<=" | ">" | ">=" | "@")
        )
    }

    fn path_formula(&mut self) -> PResult<PathFormula> {
        if self.eat_kw("X") {
            return Ok(PathFormula::Next(self.state_formula()?));
        }
        let lhs = self.state_formula()?;
        self.expect_kw("U")?;
        let bound = if self.eat_sym("{") {
            self.expect_sym("<=")?;
            let k = self.integer()?;
            self.expect_sym("}")?;
            Some(k)
        } else if self.eat_sym("<=") {
            Some(self.integer()?)
        } else {
            None
        };
        let rhs = self.state_formula()?;
        Ok(match bound {
            Some(k) => PathFormula::BoundedUntil(lhs, rhs, k as u32),
            None => PathFormula::Until(lhs, rhs),
        })
    }
}

fn dup(span: SourceSpan, what: &str) -> ParseError {
    ParseError {
        span,
        message: format!("duplicate definition of {what}"),
        expected: vec![],
    }
}

/// `name@l` parses as a species count; names that are attributes (and not
/// species) are rewritten to attribute lookups once all declarations are
/// known.
fn resolve_arith(a: &Arith, species: &BTreeSet<SpeciesId>, attrs: &BTreeSet<Name>) -> Arith {
    match a {
        Arith::Count(s, l) if !species.contains(s) && attrs.contains(&Name::new(s.as_str())) => {
            Arith::Attr(Name::new(s.as_str()), l.clone())
        }
        Arith::Unary(op, x) => Arith::Unary(*op, Box::new(resolve_arith(x, species, attrs))),
        Arith::Binary(op, x, y) => Arith::Binary(
            *op,
            Box::new(resolve_arith(x, species, attrs)),
            Box::new(resolve_arith(y, species, attrs)),
        ),
        other => other.clone(),
    }
}

fn resolve_bool(e: &BoolExpr, species: &BTreeSet<SpeciesId>, attrs: &BTreeSet<Name>) -> BoolExpr {
    match e {
        BoolExpr::True => BoolExpr::True,
        BoolExpr::Not(x) => BoolExpr::not(resolve_bool(x, species, attrs)),
        BoolExpr::And(x, y) => BoolExpr::and(
            resolve_bool(x, species, attrs),
            resolve_bool(y, species, attrs),
        ),
        BoolExpr::Cmp(a, op, b) => BoolExpr::Cmp(
            resolve_arith(a, species, attrs),
            *op,
            resolve_arith(b, species, attrs),
        ),
    }
}

fn resolve_process(p: &Proc, species: &BTreeSet<SpeciesId>, attrs: &BTreeSet<Name>) -> Proc {
    match &**p {
        Process::Nil | Process::Const(_) => p.clone(),
        Process::Prefix(a, q) => Process::prefix(a.clone(), resolve_process(q, species, attrs)),
        Process::Sum(bs) => Arc::new(Process::Sum(
            bs.iter()
                .map(|(w, q)| {
                    (
                        resolve_arith(w, species, attrs),
                        resolve_process(q, species, attrs),
                    )
                })
                .collect(),
        )),
        Process::NeighborSum { var, weight, body } => Arc::new(Process::NeighborSum {
            var: var.clone(),
            weight: *weight,
            body: resolve_process(body, species, attrs),
        }),
        Process::Cond(bs) => Arc::new(Process::Cond(
            bs.iter()
                .map(|(e, q)| {
                    (
                        resolve_bool(e, species, attrs),
                        resolve_process(q, species, attrs),
                    )
                })
                .collect(),
        )),
    }
}

fn resolve_system(s: &System, species: &BTreeSet<SpeciesId>, attrs: &BTreeSet<Name>) -> System {
    match s {
        System::Located(p, sp, l) => {
            System::Located(resolve_process(p, species, attrs), sp.clone(), l.clone())
        }
        System::Par(items) => System::Par(
            items
                .iter()
                .map(|i| resolve_system(i, species, attrs))
                .collect(),
        ),
        System::Restrict(inner, l) => {
            System::Restrict(Box::new(resolve_system(inner, species, attrs)), l.clone())
        }
        other => other.clone(),
    }
}

fn names(model: &Model) -> (BTreeSet<SpeciesId>, BTreeSet<Name>) {
    (
        model.species_ids().cloned().collect(),
        model.habitat.attributes.keys().cloned().collect(),
    )
}

fn resolve_model(model: &mut Model) {
    let (species, attrs) = names(model);
    for p in model.constants.values_mut() {
        *p = resolve_process(p, &species, &attrs);
    }
    for d in &mut model.species {
        d.body = resolve_process(&d.body, &species, &attrs);
    }
    model.system = resolve_system(&model.system, &species, &attrs);
}

fn resolve_formula(
    f: &StateFormula,
    species: &BTreeSet<SpeciesId>,
    attrs: &BTreeSet<Name>,
) -> StateFormula {
    match f {
        StateFormula::True => StateFormula::True,
        StateFormula::Atom(e) => StateFormula::Atom(resolve_bool(e, species, attrs)),
        StateFormula::Not(x) => StateFormula::not(resolve_formula(x, species, attrs)),
        StateFormula::And(x, y) => StateFormula::and(
            resolve_formula(x, species, attrs),
            resolve_formula(y, species, attrs),
        ),
        StateFormula::Prob { cmp, bound, path } => {
            let path = match &**path {
                PathFormula::Next(x) => PathFormula::Next(resolve_formula(x, species, attrs)),
                PathFormula::BoundedUntil(a, b, k) => PathFormula::BoundedUntil(
                    resolve_formula(a, species, attrs),
                    resolve_formula(b, species, attrs),
                    *k,
                ),
                PathFormula::Until(a, b) => PathFormula::Until(
                    resolve_formula(a, species, attrs),
                    resolve_formula(b, species, attrs),
                ),
            };
            StateFormula::Prob {
                cmp: *cmp,
                bound: *bound,
                path: Box::new(path),
            }
        }
    }
}

pub fn parse_model(text: &str) -> Result<Model, ParseError> {
    Parser::new(text, None)?.model()
}

pub fn parse_model_file(path: &std::path::Path) -> Result<Model, crate::Error> {
    let text = std::fs::read_to_string(path).map_err(|source| crate::Error::Read { path: path.to_owned(), source })?;
    let file: Arc<str> = Arc::from(path.display().to_string());
    Ok(Parser::new(&text, Some(file))?.model()?)
}

/// Parses one state formula. Names are resolved against `model`
/// (attributes versus species).
pub fn parse_formula(text: &str, model: &Model) -> Result<StateFormula, ParseError> {
    let mut p = Parser::new(text, None)?;
    p.allow_here = false;
    let f = p.state_formula()?;
    if *p.peek() != Tok::Eof {
        return p.error(&["end of formula"]);
    }
    let (species, attrs) = names(model);
    let f = resolve_formula(&f, &species, &attrs);
    let errors: Vec<String> =
        f.atoms().iter().flat_map(|a| crate::ast::check_expr_names(model, a)).collect();
    if !errors.is_empty() {
        let span = SourceSpan { file: None, line: 1, column: 1, length: text.len() };
        return Err(ParseError { span, message: errors.join("; "), expected: Vec::new() });
    }
    Ok(f)
}

/// Parses a `.pctl` file body: one formula per non-empty line, `#` comments.
pub fn parse_formula_file(
    text: &str,
    model: &Model,
) -> Result<Vec<(String, StateFormula)>, ParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let f = parse_formula(body, model).map_err(|mut e| {
            e.span.line = i + 1;
            e
        })?;
        out.push((body.to_string(), f));
    }
    Ok(out)
}

/// Parses a standalone process term (used by tests and bindings).
pub fn parse_process(text: &str) -> Result<Proc, ParseError> {
    let mut p = Parser::new(text, None)?;
    let proc = p.process()?;
    if *p.peek() != Tok::Eof {
        return p.error(&["end of process"]);
    }
    Ok(proc)
}

/// Parses a standalone logical expression, resolving names against `model`.
pub fn parse_bool_expr(text: &str, model: &Model) -> Result<BoolExpr, ParseError> {
    let mut p = Parser::new(text, None)?;
    let e = p.bool_expr()?;
    if *p.peek() != Tok::Eof {
        return p.error(&["end of expression"]);
    }
    let (species, attrs) = names(model);
    Ok(resolve_bool(&e, &species, &attrs))
}

#[cfg(test)]
mod tests;
