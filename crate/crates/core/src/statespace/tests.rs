use super::*;
use crate::parser::{parse_bool_expr, parse_model};

#[test]
fn single_tick_to_nil() {
    let m = parse_model("locations {a}\nspecies s = 0\nsystem = tick.0@(a, s) restrict {prey_s}")
        .unwrap();
    let atom = parse_bool_expr("s@a = 0", &m).unwrap();
    let (mdp, report) = build(&m, &[atom], &BuildOptions::default()).unwrap();
    assert_eq!(report.states, 2);
    assert_eq!(report.transitions, 1);
    assert!(!report.truncated);
    assert_eq!(mdp.labels[0], BTreeSet::from([1]));
    let files = export_to_strings(&mdp);
    assert_eq!(files.sta.lines().count(), 2);
    assert_eq!(files.tra, "0 0 1 1 1 tick\n");
    assert_eq!(files.lab, "#atoms: 1\n1: 0\n");
}

#[test]
fn symmetric_branches_merge() {
    let m = parse_model("locations {a}\nspecies s = 0\nprocess C = sum { 0.5: tick.C + 0.5: tick.C }\nsystem = C@(a, s) restrict {prey_s}")
        .unwrap();
    let (mdp, _) = build(&m, &[], &BuildOptions::default()).unwrap();
    let Choice::Probabilistic(ts) = &mdp.choices[0] else {
        panic!()
    };
    assert_eq!(ts.len(), 1);
    assert_eq!(ts[0].exact, Some(Rational::from_integer(1)));
    assert_eq!(mdp.len(), 2);
    assert_eq!(export_to_strings(&mdp).lab, "#atoms: 0\n");
}

fn dispersal() -> Model {
    parse_model(
        "grid(2, 2, torus)\nspecies s = P\n\
         process P = sum over n in neigh(here) { uniform: go n.tick.P }\n\
         system = (P@(0_0, s) | P@(0_0, s) | P@(1_0, s) | species s) restrict {rep_s, prey_s}",
    )
    .unwrap()
}

#[test]
fn builds_are_deterministic() {
    let m = dispersal();
    let atom = parse_bool_expr("s@0_0 >= 2", &m).unwrap();
    let opts = BuildOptions {
        explore: ExploreOptions {
            max_depth: Some(6),
            ..Default::default()
        },
        threads: 1,
    };
    let (a, _) = build(&m, std::slice::from_ref(&atom), &opts).unwrap();
    let (b, _) = build(
        &m,
        std::slice::from_ref(&atom),
        &BuildOptions { threads: 4, ..opts },
    )
    .unwrap();
    assert_eq!(a, b);
    assert_eq!(export_to_strings(&a), export_to_strings(&b));
}

#[test]
fn state_bound_truncates() {
    let m = dispersal();
    let opts = BuildOptions {
        explore: ExploreOptions {
            max_states: Some(10),
            ..Default::default()
        },
        threads: 1,
    };
    let (mdp, report) = build(&m, &[], &opts).unwrap();
    assert!(report.truncated);
    assert!(mdp.len() <= 10);
    assert!(report.truncation_reason.unwrap().contains("state bound"));
}

#[test]
fn distributions_sum_to_one() {
    let (mdp, report) = build(&dispersal(), &[], &BuildOptions::default()).unwrap();
    assert!(!report.truncated);
    for c in &mdp.choices {
        if let Choice::Probabilistic(ts) = c {
            let sum: f64 = ts.iter().map(|t| t.prob).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
