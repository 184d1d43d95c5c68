use super::*;
use crate::ast::NeighborWeight;

fn num(s: &str) -> Arith {
    Arith::Const(Real::parse_decimal(s).unwrap())
}

fn arith(text: &str) -> Arith {
    let mut p = Parser::new(text, None).unwrap();
    let a = p.arith().unwrap();
    assert_eq!(*p.peek(), Tok::Eof, "trailing input in {text}");
    a
}

#[test]
fn arithmetic_precedence() {
    assert_eq!(
        arith("1 + 2 * 3"),
        Arith::binary(
            BinaryOp::Add,
            num("1"),
            Arith::binary(BinaryOp::Mul, num("2"), num("3"))
        )
    );
    assert_eq!(
        arith("1 - 2 - 3"),
        Arith::binary(
            BinaryOp::Sub,
            Arith::binary(BinaryOp::Sub, num("1"), num("2")),
            num("3")
        )
    );
    assert_eq!(
        arith("2 ^ 3 ^ 2"),
        Arith::binary(
            BinaryOp::Pow,
            num("2"),
            Arith::binary(BinaryOp::Pow, num("3"), num("2"))
        )
    );
    assert_eq!(
        arith("-2 ^ 2"),
        Arith::Unary(
            UnaryOp::Neg,
            Box::new(Arith::binary(BinaryOp::Pow, num("2"), num("2")))
        )
    );
    assert_eq!(
        arith("x ^ -0.5"),
        Arith::binary(BinaryOp::Pow, Arith::Param(Name::new("x")), num("-0.5"))
    );
}

#[test]
fn location_expressions() {
    assert_eq!(
        arith("s@here"),
        Arith::Count(SpeciesId::new("s"), LocRef::Here)
    );
    assert_eq!(
        arith("count(s, a)"),
        Arith::Count(SpeciesId::new("s"), LocRef::Named(LocationId::new("a")))
    );
    assert_eq!(arith("@myloc"), Arith::Total(LocRef::Here));
    assert_eq!(arith("total(s)"), Arith::SpeciesTotal(SpeciesId::new("s")));
}

#[test]
fn attributes_are_resolved() {
    let m = parse_model("locations {a}\nattribute alpha = 2\nspecies s = tick.0\nsystem = sum { alpha@here / 2 : 0 + s@a: 0 }@(a, s)").unwrap();
    let System::Located(p, _, _) = &m.system else {
        panic!()
    };
    let Process::Sum(b) = &**p else { panic!() };
    assert!(
        matches!(&b[0].0, Arith::Binary(BinaryOp::Div, x, _) if matches!(**x, Arith::Attr(..)))
    );
    assert!(matches!(&b[1].0, Arith::Count(..)));
}

#[test]
fn process_forms() {
    let p = parse_process("tick.go a.rep_s.out c.in tick.0").unwrap();
    let Process::Prefix(Action::Tick, p) = &*p else {
        panic!()
    };
    let Process::Prefix(Action::Go(LocRef::Named(_)), p) = &**p else {
        panic!()
    };
    let Process::Prefix(Action::In(Channel::Rep(_)), p) = &**p else {
        panic!()
    };
    let Process::Prefix(Action::Out(Channel::Plain(_)), p) = &**p else {
        panic!()
    };
    let Process::Prefix(Action::In(Channel::Plain(c)), _) = &**p else {
        panic!()
    };
    assert_eq!(c.as_str(), "tick");

    let p = parse_process("sum over n in neigh(here) { uniform: go n.P }").unwrap();
    let Process::NeighborSum {
        weight: NeighborWeight::Uniform,
        body,
        ..
    } = &*p
    else {
        panic!()
    };
    assert!(matches!(
        &**body,
        Process::Prefix(Action::Go(LocRef::Var(_)), _)
    ));

    let p = parse_process("cond(s@here > 1 -> Q1, true -> Q2)").unwrap();
    assert!(matches!(&*p, Process::Cond(b) if b.len() == 2));
}

#[test]
fn systems_and_restriction() {
    let m = parse_model(
        "locations {a, b}\nedges {a -- b}\nspecies s = P\nprocess P = tick.P\n\
         system = (P@(a, s) | (P@(b, s))) | species s restrict {rep_s}",
    )
    .unwrap();
    let System::Restrict(inner, l) = &m.system else {
        panic!("{:?}", m.system)
    };
    assert!(l.contains(&Channel::Rep(SpeciesId::new("s"))));
    let System::Par(items) = &**inner else {
        panic!()
    };
    assert_eq!(items.len(), 2);
    assert!(matches!(items[1], System::Species(_)));
}

#[test]
fn error_positions() {
    let e = parse_model("locations {a}\nsystem = tick.@(a, s)").unwrap_err();
    assert_eq!((e.span.line, e.span.column), (2, 15));
    let e = parse_model("grid(2, 2, round)").unwrap_err();
    assert!(e.expected.contains(&"`torus`".to_string()));
}

#[test]
fn formulas() {
    let m = parse_model("locations {a}\nspecies s = tick.0\nsystem = 0").unwrap();
    let f = parse_formula("P<=0.1 [ true U{<=10} total(s) = 0 ]", &m).unwrap();
    let StateFormula::Prob {
        cmp: ProbCmp::Le,
        path,
        ..
    } = &f
    else {
        panic!()
    };
    assert!(matches!(
        **path,
        PathFormula::BoundedUntil(StateFormula::True, StateFormula::Atom(_), 10)
    ));
    assert!(parse_formula("P>=0.5 [ X s@here > 0 ]", &m).is_err());
    let f = parse_formula("(s@a > 0 || s@a = 0) -> P>0 [ true U s@a = 1 ]", &m).unwrap();
    assert_eq!(
        f.to_string(),
        parse_formula(&f.to_string(), &m).unwrap().to_string()
    );
    assert!(parse_formula("P<=1.5 [ X true ]", &m).is_err());
}

#[test]
fn formulas_with_undeclared_names_are_rejected() {
    let m = parse_model("locations {a, b}\nspecies s = tick.0\nsystem = 0@(a, s)").unwrap();
    let e = parse_formula("P>=0.5 [ true U<=3 total(prey) = 0 ]", &m).unwrap_err();
    assert!(e.message.contains("undefined species prey"), "{}", e.message);
    assert!(parse_formula("s@c > 0", &m).unwrap_err().message.contains("undefined location c"));
    assert!(parse_formula("q@a > 0", &m).is_err());
    assert!(parse_formula("rate > 0", &m).is_err());
    assert!(parse_formula("s@a + s@b = total(s)", &m).is_ok());
}

#[test]
fn pretty_roundtrip_examples() {
    let text = "grid(3, 2, torus)\nattribute c { default: 1, 0_0: -2.5 }\nparam q = 0.25\n\
        disptable { 0_0 -> 1_0: 0.5 }\n\
        process P = sum { q: tick.P + 1 - q: cond(s@here > -1 && !(@here = 2) -> go 1_1.0, true -> 0) }\n\
        species s = sum over n in neigh(here) { uniform: go n.tick.P }\n\
        system = (P@(0_0, s) | 0@(1_1, s)) | species s restrict {rep_s, prey_s}";
    let m = parse_model(text).unwrap();
    let printed = pretty(&m);
    let again = parse_model(&printed).unwrap();
    assert_eq!(m, again, "{printed}");
}
