use std::collections::HashMap;
use std::path::Path;

use crate::chem::{canonical_smiles_with, parse_smiles_with, PeriodicTable};
use crate::error::DataError;

/// An acid, its conjugate base and the acid's pKa.
#[derive(Clone, Debug, PartialEq)]
pub struct PkaEntry {
    pub acid: String,
    pub base: String,
    pub pka: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PkaTable {
    entries: Vec<PkaEntry>,
    by_acid: HashMap<String, usize>,
    by_base: HashMap<String, usize>,
}

/// Which role the partner must play.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Need {
    Acid,
    Base,
}

/// A selected partner and what it turns into.
#[derive(Clone, Debug, PartialEq)]
pub struct Partner {
    pub species: String,
    pub conjugate: String,
    pub pka: f64,
}

impl PkaTable {
    /// Parse `acid<TAB>base<TAB>pKa` lines. Blank lines and `#` comments are
    /// ignored. Species are canonicalized; each pair must differ by exactly
    /// one proton.
    pub fn parse(text: &str, table: &PeriodicTable) -> Result<Self, DataError> {
        let mut out = PkaTable::default();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = body.split('\t').map(str::trim).collect();
            if f.len() != 3 {
                return Err(DataError::Malformed { line, message: format!("expected 3 fields, found {}", f.len()) });
            }
            let pka: f64 =
                f[2].parse().map_err(|_| DataError::Malformed { line, message: format!("bad pKa '{}'", f[2]) })?;
            let acid = parse_smiles_with(f[0], table)?;
            let base = parse_smiles_with(f[1], table)?;
            let hydrogens = |g: &crate::chem::MolGraph| {
                g.with_explicit_hydrogens().element_counts().get(&crate::chem::Element::H).copied().unwrap_or(0)
            };
            let heavy = |g: &crate::chem::MolGraph| {
                let mut c = g.with_explicit_hydrogens().element_counts();
                c.remove(&crate::chem::Element::H);
                c
            };
            if acid.total_charge() - 1 != base.total_charge()
                || hydrogens(&acid) != hydrogens(&base) + 1
                || heavy(&acid) != heavy(&base)
            {
                return Err(DataError::Malformed {
                    line,
                    message: format!("{} is not {} minus one proton", f[1], f[0]),
                });
            }
            out.push(PkaEntry {
                acid: canonical_smiles_with(&acid, false, table)?,
                base: canonical_smiles_with(&base, false, table)?,
                pka,
            });
        }
        Ok(out)
    }

    pub fn load(path: &Path, table: &PeriodicTable) -> Result<Self, DataError> {
        Self::parse(&std::fs::read_to_string(path)?, table)
    }

    /// The small table shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(include_str!("../../data/pka.tsv"), PeriodicTable::default_table()).expect("bundled pKa table parses")
    }

    fn push(&mut self, e: PkaEntry) {
        let k = self.entries.len();
        self.by_acid.entry(e.acid.clone()).or_insert(k);
        self.by_base.entry(e.base.clone()).or_insert(k);
        self.entries.push(e);
    }

    pub fn entries(&self) -> &[PkaEntry] {
        &self.entries
    }

    pub fn as_acid(&self, species: &str) -> Option<&PkaEntry> {
        self.by_acid.get(species).map(|&k| &self.entries[k])
    }

    pub fn as_base(&self, species: &str) -> Option<&PkaEntry> {
        self.by_base.get(species).map(|&k| &self.entries[k])
    }
}

/// Pick the first species in `pool` (input order, not strength order) that
/// can serve: an acid needs pKa below `threshold`, a base needs its conjugate
/// acid's pKa above it. Pool entries must be canonical SMILES.
pub fn select_partner(pool: &[String], need: Need, threshold: f64, pka: &PkaTable) -> Option<Partner> {
    pool.iter().find_map(|s| match need {
        Need::Acid => pka
            .as_acid(s)
            .filter(|e| e.pka < threshold)
            .map(|e| Partner { species: e.acid.clone(), conjugate: e.base.clone(), pka: e.pka }),
        Need::Base => pka
            .as_base(s)
            .filter(|e| e.pka > threshold)
            .map(|e| Partner { species: e.base.clone(), conjugate: e.acid.clone(), pka: e.pka }),
    })
}

/// Standardized pKa of an alpha proton, a typical caller threshold.
pub const ALPHA_PROTON_PKA: f64 = 9.0;
