use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::ChemError;

/// An element, identified by atomic number. Properties live in a [`PeriodicTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Element(pub u8);

impl Element {
    pub const H: Element = Element(1);
    pub const C: Element = Element(6);

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn is_hydrogen(self) -> bool {
        self.0 == 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementInfo {
    pub symbol: String,
    pub atomic_number: u8,
    pub group_valence_electrons: i32,
    /// Valences of the neutral atom, ascending.
    pub allowed_valences: Vec<i32>,
    #[serde(default)]
    pub default_aromatic_capable: bool,
}

impl ElementInfo {
    /// Organic-subset atoms may be written without brackets.
    pub fn in_organic_subset(&self) -> bool {
        matches!(
            self.symbol.as_str(),
            "B" | "C" | "N" | "O" | "P" | "S" | "F" | "Cl" | "Br" | "I"
        )
    }

    /// More than eight valence electrons: transition metals get lenient valence rules.
    pub fn is_transition_metal(&self) -> bool {
        self.group_valence_electrons > 8
    }

    /// Valences allowed for this element carrying `charge`.
    ///
    /// Neutral atoms use the configured list. Charged main-group atoms use the
    /// isoelectronic rule: with `e = group electrons - charge`, the base valence is
    /// `e` when `e <= 4` (duet for hydrogen) and `8 - e` otherwise, extended by
    /// steps of two for elements that are hypervalent when neutral.
    pub fn valence_options(&self, charge: i32) -> Vec<i32> {
        if charge == 0 {
            return self.allowed_valences.clone();
        }
        if self.is_transition_metal() {
            return (0..=6).collect();
        }
        let e = self.group_valence_electrons - charge;
        if e < 0 {
            return Vec::new();
        }
        if self.atomic_number == 1 {
            return if e <= 2 { vec![e.min(2 - e)] } else { Vec::new() };
        }
        if e > 8 {
            return Vec::new();
        }
        let base = if e <= 4 { e } else { 8 - e };
        let mut out = vec![base];
        if self.allowed_valences.len() > 1 {
            let mut v = base + 2;
            while v <= e {
                out.push(v);
                v += 2;
            }
        }
        out
    }
}

/// Element knowledge used by parsing, kekulization and BE-matrix bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicTable {
    entries: Vec<ElementInfo>,
    by_symbol: HashMap<String, usize>,
    by_number: HashMap<u8, usize>,
}

#[derive(Deserialize)]
struct TableFile {
    element: Vec<ElementInfo>,
}

impl PeriodicTable {
    pub fn new(mut entries: Vec<ElementInfo>) -> Result<Self, ChemError> {
        entries.sort_by_key(|e| e.atomic_number);
        let mut by_symbol = HashMap::new();
        let mut by_number = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.allowed_valences.is_empty() {
                return Err(ChemError::Config(format!("{} has no allowed valences", e.symbol)));
            }
            if by_symbol.insert(e.symbol.clone(), i).is_some()
                || by_number.insert(e.atomic_number, i).is_some()
            {
                return Err(ChemError::Config(format!("duplicate element {}", e.symbol)));
            }
        }
        for e in &mut entries {
            e.allowed_valences.sort_unstable();
        }
        Ok(PeriodicTable { entries, by_symbol, by_number })
    }

    /// Parse a table from TOML: a list of `[[element]]` tables with the
    /// fields of [`ElementInfo`].
    pub fn from_toml_str(text: &str) -> Result<Self, ChemError> {
        let file: TableFile =
            toml::from_str(text).map_err(|e| ChemError::Config(e.to_string()))?;
        Self::new(file.element)
    }

    /// The shipped element set.
    pub fn default_table() -> &'static PeriodicTable {
        static TABLE: OnceLock<PeriodicTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let e = |symbol: &str, z: u8, v: i32, val: &[i32], arom: bool| ElementInfo {
                symbol: symbol.to_string(),
                atomic_number: z,
                group_valence_electrons: v,
                allowed_valences: val.to_vec(),
                default_aromatic_capable: arom,
            };
            PeriodicTable::new(vec![
                e("H", 1, 1, &[1], false),
                e("Li", 3, 1, &[1], false),
                e("B", 5, 3, &[3], true),
                e("C", 6, 4, &[4], true),
                e("N", 7, 5, &[3], true),
                e("O", 8, 6, &[2], true),
                e("F", 9, 7, &[1], false),
                e("Na", 11, 1, &[1], false),
                e("Mg", 12, 2, &[2], false),
                e("Si", 14, 4, &[4], false),
                e("P", 15, 5, &[3, 5], true),
                e("S", 16, 6, &[2, 4, 6], true),
                e("Cl", 17, 7, &[1, 3, 5, 7], false),
                e("K", 19, 1, &[1], false),
                e("Zn", 30, 2, &[2], false),
                e("Br", 35, 7, &[1, 3, 5, 7], false),
                e("Pd", 46, 10, &[0, 2, 4], false),
                e("Ag", 47, 1, &[1], false),
                e("I", 53, 7, &[1, 3, 5, 7], false),
            ])
            .expect("default periodic table is consistent")
        })
    }

    pub fn lookup(&self, symbol: &str) -> Option<Element> {
        self.by_symbol
            .get(symbol)
            .map(|&i| Element(self.entries[i].atomic_number))
    }

    pub fn get(&self, element: Element) -> Option<&ElementInfo> {
        self.by_number.get(&element.0).map(|&i| &self.entries[i])
    }

    /// Properties of an element known to be in this table.
    ///
    /// Panics for elements from a different table; elements are only minted by
    /// [`PeriodicTable::lookup`].
    pub fn info(&self, element: Element) -> &ElementInfo {
        self.get(element)
            .unwrap_or_else(|| panic!("element Z={} missing from periodic table", element.0))
    }

    pub fn symbol(&self, element: Element) -> &str {
        &self.info(element).symbol
    }

    /// Position of the element in the table, used for one-hot features.
    pub fn index_of(&self, element: Element) -> Option<usize> {
        self.by_number.get(&element.0).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn elements(&self) -> impl Iterator<Item = &ElementInfo> {
        self.entries.iter()
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match PeriodicTable::default_table().get(*self) {
            Some(info) => f.write_str(&info.symbol),
            None => write!(f, "Z{}", self.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charged_valences_follow_isoelectronic_rule() {
        let t = PeriodicTable::default_table();
        let info = |s: &str| t.info(t.lookup(s).unwrap()).clone();
        assert_eq!(info("N").valence_options(1), vec![4]);
        assert_eq!(info("O").valence_options(1), vec![3]);
        assert_eq!(info("O").valence_options(-1), vec![1]);
        assert_eq!(info("C").valence_options(-1), vec![3]);
        assert_eq!(info("C").valence_options(1), vec![3]);
        assert_eq!(info("B").valence_options(-1), vec![4]);
        assert_eq!(info("H").valence_options(1), vec![0]);
        assert_eq!(info("H").valence_options(-1), vec![0]);
        assert_eq!(info("Na").valence_options(1), vec![0]);
        assert_eq!(info("S").valence_options(1), vec![3, 5]);
    }

    #[test]
    fn toml_table_round_trip() {
        let text = r#"
            [[element]]
            symbol = "C"
            atomic_number = 6
            group_valence_electrons = 4
            allowed_valences = [4]
            default_aromatic_capable = true
        "#;
        let t = PeriodicTable::from_toml_str(text).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.lookup("N").is_none());
        assert_eq!(t.symbol(t.lookup("C").unwrap()), "C");
    }
}
