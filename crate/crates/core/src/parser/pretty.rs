use std::fmt::{self, Display, Formatter, Write as _};

use crate::ast::{
    Action, Arith, BinaryOp, BoolExpr, CmpOp, Layout, LocRef, Model, NeighborWeight, Process,
    System, UnaryOp,
};
use crate::pctl::{PathFormula, StateFormula};

// Arithmetic precedence levels; higher binds tighter.
const ADD: u8 = 1;
const MUL: u8 = 2;
const NEG: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

const KEYWORDS: &[&str] = &[
    "tick", "out", "in", "go", "sum", "cond", "species", "restrict",
];

impl Display for LocRef {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            LocRef::Named(l) => write!(f, "{l}"),
            LocRef::Here => f.write_str("here"),
            LocRef::Var(v) => write!(f, "{v}"),
        }
    }
}

impl Display for CmpOp {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        })
    }
}

fn arith_prec(a: &Arith) -> u8 {
    match a {
        Arith::Const(r)
            if r.value() < 0.0 || (r.value() == 0.0 && r.value().is_sign_negative()) =>
        {
            NEG
        }
        Arith::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => ADD,
        Arith::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => MUL,
        Arith::Binary(BinaryOp::Pow, ..) => POW,
        Arith::Unary(UnaryOp::Neg, _) => NEG,
        _ => ATOM,
    }
}

fn write_arith(f: &mut Formatter<'_>, a: &Arith, min: u8) -> fmt::Result {
    if arith_prec(a) < min {
        f.write_char('(')?;
        write_arith(f, a, 0)?;
        return f.write_char(')');
    }
    match a {
        Arith::Const(r) => write!(f, "{r}"),
        Arith::Param(n) => write!(f, "{n}"),
        Arith::Attr(n, l) => write!(f, "{n}@{l}"),
        Arith::Count(s, l) => write!(f, "{s}@{l}"),
        Arith::Total(l) => write!(f, "@{l}"),
        Arith::SpeciesTotal(s) => write!(f, "total({s})"),
        Arith::Unary(UnaryOp::Neg, x) => {
            let inner = match &**x {
                // `-0.5` would read back as a literal
                Arith::Const(r) if arith_prec(x) == ATOM => format!("({r})"),
                other => ArithAt(other, NEG).to_string(),
            };
            if inner.starts_with('-') {
                write!(f, "- {inner}")
            } else {
                write!(f, "-{inner}")
            }
        }
        Arith::Unary(op, x) => {
            let name = match op {
                UnaryOp::Abs => "abs",
                UnaryOp::Sqrt => "sqrt",
                UnaryOp::Exp => "exp",
                UnaryOp::Ln => "ln",
                UnaryOp::Floor => "floor",
                UnaryOp::Ceil => "ceil",
                UnaryOp::Neg => unreachable!(),
            };
            write!(f, "{name}(")?;
            write_arith(f, x, 0)?;
            f.write_char(')')
        }
        Arith::Binary(op, x, y) => match op {
            BinaryOp::Add | BinaryOp::Sub => {
                write_arith(f, x, ADD)?;
                f.write_str(if *op == BinaryOp::Add { " + " } else { " - " })?;
                write_arith(f, y, MUL)
            }
            BinaryOp::Mul | BinaryOp::Div => {
                write_arith(f, x, MUL)?;
                f.write_str(if *op == BinaryOp::Mul { " * " } else { " / " })?;
                write_arith(f, y, NEG)
            }
            BinaryOp::Pow => {
                write_arith(f, x, ATOM)?;
                f.write_char('^')?;
                write_arith(f, y, NEG)
            }
            BinaryOp::Min | BinaryOp::Max => {
                f.write_str(if *op == BinaryOp::Min { "min(" } else { "max(" })?;
                write_arith(f, x, 0)?;
                f.write_str(", ")?;
                write_arith(f, y, 0)?;
                f.write_char(')')
            }
        },
    }
}

struct ArithAt<'a>(&'a Arith, u8);

impl Display for ArithAt<'_> {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_arith(f, self.0, self.1)
    }
}

impl Display for Arith {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_arith(f, self, 0)
    }
}

fn write_bool(f: &mut Formatter<'_>, e: &BoolExpr, min: u8) -> fmt::Result {
    match e {
        BoolExpr::True => f.write_str("true"),
        BoolExpr::Cmp(a, op, b) => write!(f, "{a} {op} {b}"),
        BoolExpr::Not(x) => {
            f.write_char('!')?;
            write_bool(f, x, 2)
        }
        BoolExpr::And(x, y) => {
            if min > 1 {
                f.write_char('(')?;
            }
            write_bool(f, x, 1)?;
            f.write_str(" && ")?;
            write_bool(f, y, 2)?;
            if min > 1 {
                f.write_char(')')?;
            }
            Ok(())
        }
    }
}

impl Display for BoolExpr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_bool(f, self, 0)
    }
}

impl Display for Action {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Action::Tick => f.write_str("tick"),
            Action::Out(c) => write!(f, "out {c}"),
            Action::Go(l) => write!(f, "go {l}"),
            Action::In(c) => {
                let name = c.to_string();
                if KEYWORDS.contains(&name.as_str()) {
                    write!(f, "in {name}")
                } else {
                    f.write_str(&name)
                }
            }
        }
    }
}

impl Display for Process {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Process::Nil => f.write_char('0'),
            Process::Const(n) => write!(f, "{n}"),
            Process::Prefix(a, p) => write!(f, "{a}.{p}"),
            Process::Sum(branches) => {
                f.write_str("sum { ")?;
                for (i, (w, p)) in branches.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "{w}: {p}")?;
                }
                f.write_str(" }")
            }
            Process::NeighborSum { var, weight, body } => {
                let w = match weight {
                    NeighborWeight::Uniform => "uniform",
                    NeighborWeight::Table => "disptable",
                };
                write!(f, "sum over {var} in neigh(here) {{ {w}: {body} }}")
            }
            Process::Cond(branches) => {
                f.write_str("cond(")?;
                for (i, (e, p)) in branches.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{e} -> {p}")?;
                }
                f.write_char(')')
            }
        }
    }
}

fn write_system(f: &mut Formatter<'_>, s: &System, atom: bool) -> fmt::Result {
    match s {
        System::Nil => f.write_char('0'),
        System::Located(p, sp, l) => write!(f, "{p}@({l}, {sp})"),
        System::Species(sp) => write!(f, "species {sp}"),
        System::Par(items) if !atom => {
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    f.write_str(" | ")?;
                }
                write_system(f, item, true)?;
            }
            Ok(())
        }
        System::Restrict(inner, chans) if !atom => {
            write_system(f, inner, false)?;
            f.write_str(" restrict {")?;
            for (i, c) in chans.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{c}")?;
            }
            f.write_char('}')
        }
        _ => {
            f.write_char('(')?;
            write_system(f, s, false)?;
            f.write_char(')')
        }
    }
}

impl Display for System {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_system(f, self, false)
    }
}

fn write_state(f: &mut Formatter<'_>, s: &StateFormula, min: u8) -> fmt::Result {
    match s {
        StateFormula::True => f.write_str("true"),
        StateFormula::Atom(e) => write_bool(f, e, 2),
        StateFormula::Not(x) => {
            f.write_char('!')?;
            write_state(f, x, 2)
        }
        StateFormula::And(x, y) => {
            if min > 1 {
                f.write_char('(')?;
            }
            write_state(f, x, 1)?;
            f.write_str(" && ")?;
            write_state(f, y, 2)?;
            if min > 1 {
                f.write_char(')')?;
            }
            Ok(())
        }
        StateFormula::Prob { cmp, bound, path } => {
            write!(f, "P{}{} [ {} ]", cmp.symbol(), bound, path)
        }
    }
}

impl Display for StateFormula {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_state(f, self, 0)
    }
}

impl Display for PathFormula {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            PathFormula::Next(x) => write!(f, "X {x}"),
            PathFormula::BoundedUntil(a, b, k) => write!(f, "{a} U{{<={k}}} {b}"),
            PathFormula::Until(a, b) => write!(f, "{a} U {b}"),
        }
    }
}

/// Renders a model in concrete syntax; the output parses back to an equal
/// model.
pub fn pretty(model: &Model) -> String {
    model.to_string()
}

impl Display for Model {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        let h = &self.habitat;
        match h.layout() {
            Layout::Grid { cols, rows, torus } => {
                writeln!(
                    f,
                    "grid({cols}, {rows}, {})",
                    if *torus { "torus" } else { "bounded" }
                )?;
            }
            Layout::Explicit { locations, edges } => {
                if !locations.is_empty() {
                    let names: Vec<String> = locations.iter().map(|l| l.to_string()).collect();
                    writeln!(f, "locations {{{}}}", names.join(", "))?;
                }
                if !edges.is_empty() {
                    let es: Vec<String> =
                        edges.iter().map(|(a, b)| format!("{a} -- {b}")).collect();
                    writeln!(f, "edges {{{}}}", es.join(", "))?;
                }
            }
        }
        for (name, decl) in &h.attributes {
            match decl.default {
                Some(d) if decl.values.is_empty() => writeln!(f, "attribute {name} = {d}")?,
                _ => {
                    let mut entries = Vec::new();
                    if let Some(d) = decl.default {
                        entries.push(format!("default: {d}"));
                    }
                    entries.extend(decl.values.iter().map(|(l, v)| format!("{l}: {v}")));
                    writeln!(f, "attribute {name} {{ {} }}", entries.join(", "))?;
                }
            }
        }
        if !h.dispersal.is_empty() {
            let es: Vec<String> = h
                .dispersal
                .iter()
                .map(|((a, b), p)| format!("{a} -> {b}: {p}"))
                .collect();
            writeln!(f, "disptable {{ {} }}", es.join(", "))?;
        }
        for (name, v) in &self.params {
            writeln!(f, "param {name} = {v}")?;
        }
        for (name, body) in &self.constants {
            writeln!(f, "process {name} = {body}")?;
        }
        for d in &self.species {
            writeln!(f, "species {} = {}", d.species, d.body)?;
        }
        writeln!(f, "system = {}", self.system)
    }
}
