//! SMILES reader for the subset used by reaction corpora: organic-subset and
//! bracket atoms, branches, ring closures (`1`..`9`, `%nn`), bond symbols and
//! dot-separated components. Stereo marks are accepted and dropped.
//!
//! Bracket atoms accept one extension: `^n` after the charge sets the radical
//! electron count explicitly, e.g. `[CH2^2]`.

use std::collections::HashMap;

use log::warn;

use crate::chem::graph::{Atom, Bond, BondOrder, MolGraph};
use crate::chem::periodic::{Element, PeriodicTable};
use crate::chem::valence;
use crate::error::ChemError;

const ALL_SYMBOLS: &[&str] = &[
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Parse with the default periodic table.
pub fn parse_smiles(text: &str) -> Result<MolGraph, ChemError> {
    parse_smiles_with(text, PeriodicTable::default_table())
}

pub fn parse_smiles_with(text: &str, table: &PeriodicTable) -> Result<MolGraph, ChemError> {
    Parser::new(text, table).run()
}

struct PendingBond {
    order: BondOrder,
    offset: usize,
}

struct RawBond {
    a: usize,
    b: usize,
    order: BondOrder,
    /// Implied aromatic bond between two lowercase atoms (no ':' written).
    implicit_aromatic: bool,
}

struct Parser<'a> {
    bytes: &'a [u8],
    text: &'a str,
    pos: usize,
    table: &'a PeriodicTable,
    atoms: Vec<Atom>,
    bracketed: Vec<bool>,
    explicit_radicals: Vec<bool>,
    bonds: Vec<RawBond>,
    prev: Option<usize>,
    pending: Option<PendingBond>,
    branches: Vec<(Option<usize>, usize)>,
    rings: HashMap<u32, (usize, Option<BondOrder>, usize)>,
    warned_stereo: bool,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, table: &'a PeriodicTable) -> Self {
        Parser {
            bytes: text.as_bytes(),
            text,
            pos: 0,
            table,
            atoms: Vec::new(),
            bracketed: Vec::new(),
            explicit_radicals: Vec::new(),
            bonds: Vec::new(),
            prev: None,
            pending: None,
            branches: Vec::new(),
            rings: HashMap::new(),
            warned_stereo: false,
        }
    }

    fn syntax<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, ChemError> {
        Err(ChemError::Syntax { offset, message: message.into() })
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn stereo_warning(&mut self) {
        if !self.warned_stereo {
            warn!("stereochemistry in '{}' ignored", self.text);
            self.warned_stereo = true;
        }
    }

    fn run(mut self) -> Result<MolGraph, ChemError> {
        if self.bytes.is_empty() {
            return self.syntax(0, "empty SMILES");
        }
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    if self.prev.is_none() {
                        return self.syntax(start, "branch without a preceding atom");
                    }
                    if self.pending.is_some() {
                        return self.syntax(start, "bond symbol before branch");
                    }
                    self.branches.push((self.prev, start));
                    self.pos += 1;
                }
                b')' => {
                    if self.pending.is_some() {
                        return self.syntax(start, "dangling bond symbol");
                    }
                    match self.branches.pop() {
                        Some((prev, _)) => self.prev = prev,
                        None => return self.syntax(start, "unmatched ')'"),
                    }
                    self.pos += 1;
                }
                b'.' => {
                    if self.pending.is_some() {
                        return self.syntax(start, "bond symbol before '.'");
                    }
                    if !self.branches.is_empty() {
                        return self.syntax(start, "'.' inside a branch");
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.pending.is_some() {
                        return self.syntax(start, "two consecutive bond symbols");
                    }
                    let order = match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        b'/' | b'\\' => {
                            self.stereo_warning();
                            BondOrder::Single
                        }
                        _ => BondOrder::Single,
                    };
                    self.pending = Some(PendingBond { order, offset: start });
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => self.ring_closure()?,
                b'[' => {
                    let (atom, radical_token) = self.bracket_atom()?;
                    self.push_atom(atom, true, radical_token)?;
                }
                b'A'..=b'Z' | b'a'..=b'z' => {
                    let atom = self.organic_atom()?;
                    self.push_atom(atom, false, false)?;
                }
                _ => return self.syntax(start, format!("unexpected character '{}'", c as char)),
            }
        }
        if let Some(p) = &self.pending {
            return self.syntax(p.offset, "dangling bond symbol at end of input");
        }
        if let Some(&(_, offset)) = self.branches.last() {
            return Err(ChemError::UnclosedBranch { offset });
        }
        if let Some((&label, &(_, _, offset))) = self.rings.iter().min_by_key(|(_, v)| v.2) {
            return Err(ChemError::UnclosedRing { label, offset });
        }
        self.finish()
    }

    fn default_order(&self, a: usize, b: usize) -> (BondOrder, bool) {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            (BondOrder::Aromatic, true)
        } else {
            (BondOrder::Single, false)
        }
    }

    fn push_atom(&mut self, atom: Atom, bracket: bool, radical_token: bool) -> Result<(), ChemError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        self.bracketed.push(bracket);
        self.explicit_radicals.push(radical_token);
        if let Some(prev) = self.prev {
            let (order, implicit) = match self.pending.take() {
                Some(p) => (p.order, false),
                None => self.default_order(prev, idx),
            };
            self.add_bond(prev, idx, order, implicit, self.pos)?;
        } else if let Some(p) = &self.pending {
            return self.syntax(p.offset, "bond symbol without a preceding atom");
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        order: BondOrder,
        implicit_aromatic: bool,
        offset: usize,
    ) -> Result<(), ChemError> {
        if a == b {
            return self.syntax(offset, "ring closure onto the same atom");
        }
        if self.bonds.iter().any(|r| (r.a == a && r.b == b) || (r.a == b && r.b == a)) {
            return self.syntax(offset, "duplicate bond");
        }
        self.bonds.push(RawBond { a, b, order, implicit_aromatic });
        Ok(())
    }

    fn ring_closure(&mut self) -> Result<(), ChemError> {
        let start = self.pos;
        let label = if self.bytes[self.pos] == b'%' {
            let digits = self.bytes.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    ((d[0] - b'0') as u32) * 10 + (d[1] - b'0') as u32
                }
                _ => return self.syntax(start, "'%' must be followed by two digits"),
            }
        } else {
            self.pos += 1;
            (self.bytes[start] - b'0') as u32
        };
        let Some(current) = self.prev else {
            return self.syntax(start, "ring closure without a preceding atom");
        };
        let written = self.pending.take().map(|p| p.order);
        match self.rings.remove(&label) {
            Some((other, opened, _)) => {
                let (order, implicit) = match (opened, written) {
                    (Some(x), Some(y)) if x != y => {
                        return self.syntax(start, "conflicting ring-closure bond orders")
                    }
                    (Some(x), _) | (None, Some(x)) => (x, false),
                    (None, None) => self.default_order(other, current),
                };
                self.add_bond(other, current, order, implicit, start)?;
            }
            None => {
                self.rings.insert(label, (current, written, start));
            }
        }
        Ok(())
    }

    fn element(&self, symbol: &str, offset: usize) -> Result<Element, ChemError> {
        self.table.lookup(symbol).ok_or_else(|| ChemError::UnknownElement {
            symbol: symbol.to_string(),
            offset,
        })
    }

    fn organic_atom(&mut self) -> Result<Atom, ChemError> {
        let start = self.pos;
        let rest = &self.text[start..];
        let (symbol, aromatic, len) = if rest.starts_with("Cl") {
            ("Cl".to_string(), false, 2)
        } else if rest.starts_with("Br") {
            ("Br".to_string(), false, 2)
        } else {
            let c = self.bytes[start] as char;
            match c {
                'B' | 'C' | 'N' | 'O' | 'P' | 'S' | 'F' | 'I' => (c.to_string(), false, 1),
                'b' | 'c' | 'n' | 'o' | 'p' | 's' => (c.to_ascii_uppercase().to_string(), true, 1),
                _ => {
                    // a real element outside the organic subset still needs brackets
                    let two = rest.get(..2).filter(|s| ALL_SYMBOLS.contains(s));
                    let one = rest.get(..1).filter(|s| ALL_SYMBOLS.contains(s));
                    return match two.or(one) {
                        Some(s) => self.syntax(start, format!("element '{s}' must be bracketed")),
                        None => self.syntax(start, format!("unexpected character '{c}'")),
                    };
                }
            }
        };
        let element = self.element(&symbol, start)?;
        if aromatic && !self.table.info(element).default_aromatic_capable {
            return self.syntax(start, format!("element '{symbol}' cannot be aromatic"));
        }
        self.pos += len;
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        Ok(atom)
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            None
        } else {
            self.text[start..self.pos].parse().ok()
        }
    }

    fn bracket_atom(&mut self) -> Result<(Atom, bool), ChemError> {
        let open = self.pos;
        self.pos += 1;
        let isotope = self.read_number();
        let sym_start = self.pos;
        let rest = &self.text[sym_start..];
        let mut aromatic = false;
        let symbol: String = {
            let first = rest.chars().next();
            match first {
                Some(c) if c.is_ascii_uppercase() => {
                    let two = rest.get(..2).filter(|s| ALL_SYMBOLS.contains(s));
                    match two {
                        Some(s) => s.to_string(),
                        None => c.to_string(),
                    }
                }
                Some(c) if c.is_ascii_lowercase() => {
                    aromatic = true;
                    let two = rest.get(..2).filter(|s| matches!(*s, "se" | "as"));
                    match two {
                        Some(s) => s.to_string(),
                        None => c.to_string(),
                    }
                }
                _ => return self.syntax(sym_start, "expected element symbol in bracket atom"),
            }
        };
        self.pos += symbol.len();
        let canonical_symbol = if aromatic {
            let mut cs = symbol.chars();
            let f = cs.next().unwrap().to_ascii_uppercase();
            std::iter::once(f).chain(cs).collect::<String>()
        } else {
            symbol.clone()
        };
        if !ALL_SYMBOLS.contains(&canonical_symbol.as_str()) {
            return self.syntax(sym_start, format!("unknown symbol '{symbol}'"));
        }
        let element = self.element(&canonical_symbol, sym_start)?;
        if aromatic && !self.table.info(element).default_aromatic_capable {
            return self.syntax(sym_start, format!("element '{symbol}' cannot be aromatic"));
        }
        // chirality
        if self.peek() == Some(b'@') {
            self.stereo_warning();
            while self.peek() == Some(b'@') {
                self.pos += 1;
            }
            while self.peek().is_some_and(|c| c.is_ascii_uppercase() && c != b'H') {
                self.pos += 1;
            }
            self.read_number();
        }
        let mut h_count = 0;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            h_count = self.read_number().unwrap_or(1);
        }
        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.read_number() {
                charge = unit * n as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    charge += unit;
                    self.pos += 1;
                }
            }
        }
        let mut radicals = None;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            match self.read_number() {
                Some(n) => radicals = Some(n),
                None => return self.syntax(self.pos, "expected radical count after '^'"),
            }
        }
        let mut atom_map = None;
        if self.peek() == Some(b':') {
            self.pos += 1;
            match self.read_number() {
                Some(0) | None => return self.syntax(self.pos, "atom map must be a positive integer"),
                Some(n) => atom_map = Some(n),
            }
        }
        if self.peek() != Some(b']') {
            return match self.peek() {
                None => self.syntax(open, "unclosed bracket atom"),
                Some(c) => self.syntax(self.pos, format!("unexpected '{}' in bracket atom", c as char)),
            };
        }
        self.pos += 1;
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        atom.h_count = h_count;
        atom.formal_charge = charge;
        atom.atom_map = atom_map;
        atom.isotope = isotope.map(|i| i as u16);
        if let Some(r) = radicals {
            atom.radical_electrons = r;
        }
        Ok((atom, radicals.is_some()))
    }

    fn finish(self) -> Result<MolGraph, ChemError> {
        let Parser { table, mut atoms, bracketed, explicit_radicals, bonds, .. } = self;
        let plain: Vec<Bond> = bonds
            .iter()
            .map(|r| Bond { a: r.a, b: r.b, order: r.order })
            .collect();
        let probe = MolGraph::new(atoms.clone(), plain)?;
        let ring = probe.ring_bonds();
        let mut final_bonds = Vec::with_capacity(bonds.len());
        for (idx, r) in bonds.iter().enumerate() {
            let order = if r.implicit_aromatic && !ring[idx] {
                BondOrder::Single
            } else {
                r.order
            };
            final_bonds.push(Bond { a: r.a, b: r.b, order });
        }
        let probe = MolGraph::new(atoms.clone(), final_bonds.clone())?;
        for i in 0..atoms.len() {
            let info = table.info(atoms[i].element);
            let bond_valence = probe.bond_valence(i);
            if !bracketed[i] {
                match valence::implicit_hydrogens(info, atoms[i].aromatic, bond_valence) {
                    Some(h) => atoms[i].h_count = h,
                    None => {
                        return Err(ChemError::Valence { atom: i, symbol: info.symbol.clone() })
                    }
                }
            } else if !info.is_transition_metal()
                && valence::lone_electrons(info, atoms[i].formal_charge, bond_valence + atoms[i].h_count) < 0
            {
                return Err(ChemError::Valence { atom: i, symbol: info.symbol.clone() });
            }
        }
        let mut graph = MolGraph::new(atoms, final_bonds)?;
        for i in 0..graph.len() {
            if !explicit_radicals[i] {
                let r = valence::default_radicals(&graph, i, table);
                graph.atoms_mut()[i].radical_electrons = r;
            }
        }
        Ok(graph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> &'static PeriodicTable {
        PeriodicTable::default_table()
    }

    #[test]
    fn water_has_two_implicit_hydrogens() {
        let g = parse_smiles("O").unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.atom(0).h_count, 2);
        assert_eq!(t().symbol(g.atom(0).element), "O");
    }

    #[test]
    fn hydronium_bracket() {
        let g = parse_smiles("[OH3+]").unwrap();
        let a = g.atom(0);
        assert_eq!((a.formal_charge, a.h_count), (1, 3));
    }

    #[test]
    fn naphthalene_topology() {
        let g = parse_smiles("c1ccc2ccccc2c1").unwrap();
        assert_eq!(g.len(), 10);
        assert!(g.atoms().iter().all(|a| a.aromatic));
        assert_eq!(g.bonds().len(), 11);
        assert!(g.bonds().iter().all(|b| b.order == BondOrder::Aromatic));
        let fusion: Vec<usize> = (0..10).filter(|&i| g.neighbors(i).len() == 3).collect();
        assert_eq!(fusion.len(), 2);
        for &f in &fusion {
            assert_eq!(g.atom(f).h_count, 0);
        }
        assert_eq!(g.atoms().iter().map(|a| a.h_count).sum::<u32>(), 8);
    }

    #[test]
    fn biphenyl_link_is_single() {
        let g = parse_smiles("c1ccccc1-c1ccccc1").unwrap();
        let singles = g.bonds().iter().filter(|b| b.order == BondOrder::Single).count();
        assert_eq!(singles, 1);
        let g2 = parse_smiles("c1ccccc1c1ccccc1").unwrap();
        assert_eq!(g2.bonds().iter().filter(|b| b.order == BondOrder::Single).count(), 1);
    }

    #[test]
    fn maps_charges_isotopes_and_radicals() {
        let g = parse_smiles("[13CH3:7][O-:2].[CH3^1]").unwrap();
        assert_eq!(g.atom(0).isotope, Some(13));
        assert_eq!(g.atom(0).atom_map, Some(7));
        assert_eq!(g.atom(1).formal_charge, -1);
        assert_eq!(g.atom(2).radical_electrons, 1);
        let g = parse_smiles("[CH3]").unwrap();
        assert_eq!(g.atom(0).radical_electrons, 1);
        let g = parse_smiles("[Cu+2]").err().unwrap();
        assert!(matches!(g, ChemError::UnknownElement { .. }));
        assert_eq!(parse_smiles("[Mg++]").unwrap().atom(0).formal_charge, 2);
    }

    #[test]
    fn stereo_is_dropped() {
        let a = parse_smiles("C/C=C/C").unwrap();
        let b = parse_smiles("CC=CC").unwrap();
        assert_eq!(a, b);
        let c = parse_smiles("N[C@@H](C)C(=O)O").unwrap();
        assert_eq!(c.atom(1).h_count, 1);
    }

    #[test]
    fn errors_carry_offsets() {
        match parse_smiles("CC(C").unwrap_err() {
            ChemError::UnclosedBranch { offset } => assert_eq!(offset, 2),
            e => panic!("{e:?}"),
        }
        match parse_smiles("C1CC").unwrap_err() {
            ChemError::UnclosedRing { label, offset } => assert_eq!((label, offset), (1, 1)),
            e => panic!("{e:?}"),
        }
        match parse_smiles("CC)").unwrap_err() {
            ChemError::Syntax { offset, .. } => assert_eq!(offset, 2),
            e => panic!("{e:?}"),
        }
        match parse_smiles("C[Xx]").unwrap_err() {
            ChemError::Syntax { offset, .. } => assert_eq!(offset, 2),
            e => panic!("{e:?}"),
        }
        assert!(matches!(parse_smiles("C(C)(C)(C)(C)C"), Err(ChemError::Valence { .. })));
        assert!(matches!(parse_smiles("[CH5]"), Err(ChemError::Valence { .. })));
        assert!(matches!(parse_smiles("Fe"), Err(ChemError::Syntax { .. })));
        assert!(parse_smiles("").is_err());
        assert!(parse_smiles("C==C").is_err());
    }

    #[test]
    fn percent_ring_labels() {
        let g = parse_smiles("C%10CCCC%10").unwrap();
        assert_eq!(g.bonds().len(), 5);
    }

    #[test]
    fn aromatic_hydrogen_rules() {
        let pyrrole = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(pyrrole.atom(3).h_count, 1);
        let pyridine = parse_smiles("c1ccncc1").unwrap();
        assert_eq!(pyridine.atom(3).h_count, 0);
        let furan = parse_smiles("c1ccoc1").unwrap();
        assert_eq!(furan.atom(3).h_count, 0);
        assert!(furan.atoms().iter().all(|a| a.radical_electrons == 0));
    }
}
