//! Molecular graphs, SMILES I/O, kekulization and canonicalization.

pub mod aromatic;
pub mod canon;
pub mod graph;
pub mod kekule;
pub mod periodic;
pub mod rings;
pub mod smiles_parse;
pub mod valence;

pub use aromatic::{perceive_aromaticity, perceive_aromaticity_with};
pub use canon::{canonical_smiles, canonical_smiles_with};
pub use graph::{Atom, Bond, BondOrder, MolGraph};
pub use kekule::{kekulize, kekulize_with};
pub use periodic::{Element, ElementInfo, PeriodicTable};
pub use smiles_parse::{parse_smiles, parse_smiles_with};

use crate::error::ChemError;

/// Split "reactants>>products" into its two sides without parsing them.
pub fn split_reaction(text: &str) -> Result<(&str, &str), ChemError> {
    let Some(pos) = text.find(">>") else {
        return Err(ChemError::Syntax {
            offset: 0,
            message: "reaction string has no '>>'".into(),
        });
    };
    let (lhs, rhs) = (&text[..pos], &text[pos + 2..]);
    if rhs.contains(">>") {
        return Err(ChemError::Syntax {
            offset: pos + 2 + rhs.find(">>").unwrap_or(0),
            message: "more than one '>>'".into(),
        });
    }
    Ok((lhs.trim(), rhs.trim()))
}

/// Parse both sides of a reaction string.
pub fn parse_reaction(text: &str) -> Result<(MolGraph, MolGraph), ChemError> {
    let (lhs, rhs) = split_reaction(text)?;
    let offset = text.find(">>").unwrap_or(0) + 2;
    let reactants = parse_smiles(lhs)?;
    let products = parse_smiles(rhs).map_err(|e| shift_offset(e, offset))?;
    Ok((reactants, products))
}

fn shift_offset(e: ChemError, by: usize) -> ChemError {
    match e {
        ChemError::Syntax { offset, message } => ChemError::Syntax { offset: offset + by, message },
        ChemError::UnknownElement { symbol, offset } => ChemError::UnknownElement { symbol, offset: offset + by },
        ChemError::UnclosedRing { label, offset } => ChemError::UnclosedRing { label, offset: offset + by },
        ChemError::UnclosedBranch { offset } => ChemError::UnclosedBranch { offset: offset + by },
        other => other,
    }
}

/// Canonical SMILES of a parsed string with maps stripped, the equality key
/// used throughout evaluation.
pub fn canonicalize(text: &str) -> Result<String, ChemError> {
    canonical_smiles(&parse_smiles(text)?, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reaction_sides() {
        let (a, b) = parse_reaction("[OH-:1].[H:2][Cl:3]>>[OH:1][H:2].[Cl-:3]").unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(b.len(), 3);
        assert!(parse_reaction("CCO").is_err());
        match parse_reaction("C>>C(") {
            Err(ChemError::UnclosedBranch { offset }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
    }
}
