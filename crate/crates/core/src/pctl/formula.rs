use crate::ast::BoolExpr;
use crate::number::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProbCmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl ProbCmp {
    pub fn symbol(self) -> &'static str {
        match self {
            ProbCmp::Lt => "<",
            ProbCmp::Le => "<=",
            ProbCmp::Gt => ">",
            ProbCmp::Ge => ">=",
            ProbCmp::Eq => "=",
        }
    }
}

/// PCTL state formulas; atoms are logical expressions over the environment.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum StateFormula {
    True,
    Atom(BoolExpr),
    Not(Box<StateFormula>),
    And(Box<StateFormula>, Box<StateFormula>),
    Prob {
        cmp: ProbCmp,
        bound: Real,
        path: Box<PathFormula>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PathFormula {
    Next(StateFormula),
    /// `lhs U{<=k} rhs`, with `k` counted in ticks.
    BoundedUntil(StateFormula, StateFormula, u32),
    Until(StateFormula, StateFormula),
}

impl StateFormula {
    pub fn not(f: StateFormula) -> Self {
        StateFormula::Not(Box::new(f))
    }

    pub fn and(a: StateFormula, b: StateFormula) -> Self {
        StateFormula::And(Box::new(a), Box::new(b))
    }

    /// `a -> b`, encoded as `!(a && !b)`.
    pub fn implies(a: StateFormula, b: StateFormula) -> Self {
        Self::not(Self::and(a, Self::not(b)))
    }

    /// `a || b`, encoded as `!(!a && !b)`.
    pub fn or(a: StateFormula, b: StateFormula) -> Self {
        Self::not(Self::and(Self::not(a), Self::not(b)))
    }

    pub fn prob(cmp: ProbCmp, bound: f64, path: PathFormula) -> Self {
        StateFormula::Prob {
            cmp,
            bound: Real::from_f64(bound),
            path: Box::new(path),
        }
    }

    /// Every atomic expression, in first-occurrence order.
    pub fn atoms(&self) -> Vec<BoolExpr> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    pub(crate) fn collect_atoms(&self, out: &mut Vec<BoolExpr>) {
        match self {
            StateFormula::True => {}
            StateFormula::Atom(e) => {
                if !out.contains(e) {
                    out.push(e.clone());
                }
            }
            StateFormula::Not(f) => f.collect_atoms(out),
            StateFormula::And(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            StateFormula::Prob { path, .. } => path.collect_atoms(out),
        }
    }
}

impl PathFormula {
    pub fn atoms(&self) -> Vec<BoolExpr> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut Vec<BoolExpr>) {
        match self {
            PathFormula::Next(f) => f.collect_atoms(out),
            PathFormula::BoundedUntil(a, b, _) | PathFormula::Until(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }
}
