//! Bundled example models with their property files and expected results.
//!
//! Models are loaded with every replication and predation channel closed at
//! the top level, as the command-line tool does by default.

mod checks;

use crate::ast::Model;
use crate::parser::{parse_model, ParseError};

pub use checks::{
    max_moves_before_tick, moves_per_cycle, rep_outputs_per_cycle, starvation_ticks, CycleViolation,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub model: &'static str,
    /// Model parameters as (symbol, value, meaning).
    pub parameters: &'static [(&'static str, &'static str, &'static str)],
    pub properties: &'static str,
    /// `formula = value` lines for the minimum and maximum probabilities.
    pub expected: &'static str,
}

impl CorpusEntry {
    pub fn load(&self) -> Result<Model, ParseError> {
        let mut m = parse_model(self.model)?;
        m.close_channels();
        Ok(m)
    }

    /// Expected values as (formula, min, max).
    pub fn expected_values(&self) -> Vec<(&'static str, f64, f64)> {
        self.expected
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .filter_map(|l| {
                let (f, rest) = l.rsplit_once(" => ")?;
                let (min, max) = rest.split_once(' ')?;
                Some((f.trim(), min.trim().parse().ok()?, max.trim().parse().ok()?))
            })
            .collect()
    }
}

macro_rules! file {
    ($name:literal) => {
        include_str!(concat!("../../../../corpus/", $name))
    };
}

const DISPERSAL_PARAMS: &[(&str, &str, &str)] = &[(
    "p",
    "0.5",
    "probability of producing one offspring rather than two",
)];

pub fn corpus_list() -> Vec<CorpusEntry> {
    vec![
        CorpusEntry {
            name: "dispersal",
            model: file!("dispersal.palps"),
            parameters: DISPERSAL_PARAMS,
            properties: file!("dispersal.pctl"),
            expected: "",
        },
        CorpusEntry {
            name: "predator_prey",
            model: file!("predator_prey.palps"),
            parameters: DISPERSAL_PARAMS,
            properties: file!("predator_prey.pctl"),
            expected: "",
        },
        CorpusEntry {
            name: "genotypes",
            model: file!("genotypes.palps"),
            parameters: &[
                (
                    "lambda",
                    "3",
                    "offspring per adult, fixed by the three rep outputs",
                ),
                (
                    "beta",
                    "-1",
                    "competition exponent, negative so survival stays in (0, 1]",
                ),
                ("alpha", "0.5 (1 at 1_1)", "patch quality"),
                ("p1", "0.2", "dispersal probability of genotype 1"),
                ("p2", "0.6", "dispersal probability of genotype 2"),
            ],
            properties: file!("genotypes.pctl"),
            expected: "",
        },
        CorpusEntry {
            name: "woodthrush",
            model: file!("woodthrush.palps"),
            parameters: &[
                ("rb", "0.6", "breeder reproduction"),
                ("qb", "0.8", "breeder survival"),
                ("qj", "0.3", "juvenile survival"),
                ("qf", "0.5", "floater survival"),
                ("pb", "0.1", "breeder dispersal"),
                ("pj", "0.7", "juvenile dispersal"),
                ("pf", "0.5", "floater dispersal"),
                ("p_ij", "disptable", "patch to patch dispersal"),
                ("c", "2 (1 at w3)", "patch capacity"),
            ],
            properties: file!("woodthrush.pctl"),
            expected: "",
        },
        CorpusEntry {
            name: "tiny_dispersal",
            model: file!("tiny_dispersal.palps"),
            parameters: DISPERSAL_PARAMS,
            properties: file!("tiny_dispersal.pctl"),
            expected: "",
        },
        CorpusEntry {
            name: "tiny_extinction",
            model: file!("tiny_extinction.palps"),
            parameters: &[
                ("d", "0.1", "death per round"),
                ("m", "0.6", "staying put per round"),
            ],
            properties: file!("tiny_extinction.pctl"),
            expected: file!("tiny_extinction.expected"),
        },
        CorpusEntry {
            name: "tiny_predator_prey",
            model: file!("tiny_predator_prey.palps"),
            parameters: &[("d", "0.2", "prey death per round")],
            properties: file!("tiny_predator_prey.pctl"),
            expected: file!("tiny_predator_prey.expected"),
        },
    ]
}

pub fn corpus_entry(name: &str) -> Option<CorpusEntry> {
    corpus_list().into_iter().find(|e| e.name == name)
}
