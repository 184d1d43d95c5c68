use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{Choice, Mdp};

/// First 16 hex digits of the SHA-256 of a state's digest.
pub fn state_hash(digest: &str) -> String {
    let hash = Sha256::digest(digest.as_bytes());
    hash.iter()
        .take(8)
        .fold(String::with_capacity(16), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportFiles {
    pub sta: String,
    pub tra: String,
    pub lab: String,
}

/// Renders the three explicit-state files.
///
/// `.tra` lines are `<from> <choice> <to> <prob> <tick> <label>`. A
/// probabilistic state has the single choice 0 and label `-`; each
/// nondeterministic action gets its own choice index and probability 1.
pub fn export_to_strings(mdp: &Mdp) -> ExportFiles {
    let mut sta = String::new();
    for (i, c) in mdp.configs.iter().enumerate() {
        let _ = writeln!(sta, "{i}:{}", state_hash(&c.digest()));
    }
    let mut tra = String::new();
    for (from, choice) in mdp.choices.iter().enumerate() {
        match choice {
            Choice::Probabilistic(ts) => {
                for t in ts {
                    let _ = writeln!(
                        tra,
                        "{from} 0 {} {} {} -",
                        t.target,
                        t.prob,
                        u8::from(t.tick)
                    );
                }
            }
            Choice::Nondeterministic(ts) => {
                for (j, t) in ts.iter().enumerate() {
                    let label = t
                        .label
                        .as_ref()
                        .map(|l| l.to_string())
                        .unwrap_or_else(|| "-".into());
                    let _ = writeln!(
                        tra,
                        "{from} {j} {} 1 {} {label}",
                        t.target,
                        u8::from(t.tick)
                    );
                }
            }
            Choice::Terminal | Choice::Truncated => {}
        }
    }
    let mut lab = format!("#atoms: {}\n", mdp.atoms.len());
    for s in 0..mdp.len() {
        let atoms = mdp.state_atoms(s);
        if !atoms.is_empty() {
            let list: Vec<String> = atoms.iter().map(usize::to_string).collect();
            let _ = writeln!(lab, "{s}: {}", list.join(" "));
        }
    }
    ExportFiles { sta, tra, lab }
}

/// Writes `<stem>.sta`, `<stem>.tra` and `<stem>.lab`; returns their paths.
pub fn export(mdp: &Mdp, stem: &Path) -> std::io::Result<[PathBuf; 3]> {
    let files = export_to_strings(mdp);
    let paths = [
        stem.with_extension("sta"),
        stem.with_extension("tra"),
        stem.with_extension("lab"),
    ];
    std::fs::write(&paths[0], files.sta)?;
    std::fs::write(&paths[1], files.tra)?;
    std::fs::write(&paths[2], files.lab)?;
    Ok(paths)
}
