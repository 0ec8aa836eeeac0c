//! JSON dump/load of standard-form programs, for debugging and the CLI.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{ConeSpec, ConicProgram};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct BlockJson {
    kind: String,
    n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct EqJson {
    terms: Vec<(usize, f64)>,
    rhs: f64,
}

/// On-disk schema: cone blocks, objective terms over global coordinates,
/// equality rows.
#[derive(Debug, Serialize, Deserialize)]
pub struct ProgramJson {
    blocks: Vec<BlockJson>,
    objective: Vec<(usize, f64)>,
    #[serde(default)]
    objective_constant: f64,
    equalities: Vec<EqJson>,
}

impl ProgramJson {
    pub fn from_program(p: &ConicProgram) -> Self {
        let blocks = p
            .blocks
            .iter()
            .map(|b| {
                let (kind, n) = match *b {
                    ConeSpec::Psd(n) => ("psd", n),
                    ConeSpec::Qre(n) => ("qre", n),
                    ConeSpec::Ore(n) => ("ore", n),
                    ConeSpec::Nonneg(k) => ("nonneg", k),
                    ConeSpec::Free(k) => ("free", k),
                };
                BlockJson {
                    kind: kind.into(),
                    n,
                }
            })
            .collect();
        ProgramJson {
            blocks,
            objective: p.objective.terms.clone(),
            objective_constant: p.objective_constant,
            equalities: p
                .equalities
                .iter()
                .map(|e| EqJson {
                    terms: e.terms.terms.clone(),
                    rhs: e.rhs,
                })
                .collect(),
        }
    }

    pub fn into_program(self) -> Result<ConicProgram> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| match b.kind.as_str() {
                "psd" => Ok(ConeSpec::Psd(b.n)),
                "qre" => Ok(ConeSpec::Qre(b.n)),
                "ore" => Ok(ConeSpec::Ore(b.n)),
                "nonneg" => Ok(ConeSpec::Nonneg(b.n)),
                "free" => Ok(ConeSpec::Free(b.n)),
                other => Err(Error::InvalidArgument(format!("unknown cone kind {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut p = ConicProgram::new(blocks);
        let total = p.total_dim();
        let check = |i: usize| -> Result<()> {
            if i >= total {
                return Err(Error::InvalidArgument(format!(
                    "coordinate {i} out of range {total}"
                )));
            }
            Ok(())
        };
        for &(i, _) in &self.objective {
            check(i)?;
        }
        p.set_objective(self.objective, self.objective_constant);
        for eq in self.equalities {
            for &(i, _) in &eq.terms {
                check(i)?;
            }
            p.push_equality(eq.terms, eq.rhs);
        }
        Ok(p)
    }
}

pub fn save_program(p: &ConicProgram, path: &Path) -> Result<()> {
    let json = ProgramJson::from_program(p);
    let s = serde_json::to_string_pretty(&json)?;
    std::fs::write(path, s)?;
    Ok(())
}

pub fn load_program(path: &Path) -> Result<ConicProgram> {
    let s = std::fs::read_to_string(path)?;
    let json: ProgramJson = serde_json::from_str(&s)?;
    json.into_program()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut p = ConicProgram::new(vec![ConeSpec::Psd(2), ConeSpec::Nonneg(1), ConeSpec::Qre(3)]);
        p.set_objective(vec![(0, 1.0), (4, -2.0)], 0.5);
        p.push_equality(vec![(1, 1.0), (4, 1.0)], 1.0);
        let j = ProgramJson::from_program(&p);
        let s = serde_json::to_string(&j).unwrap();
        let back: ProgramJson = serde_json::from_str(&s).unwrap();
        let p2 = back.into_program().unwrap();
        assert_eq!(p2.blocks, p.blocks);
        assert_eq!(p2.objective.terms, p.objective.terms);
        assert_eq!(p2.equalities.len(), 1);
    }
}
