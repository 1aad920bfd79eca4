//! Bond-electron matrices: encoding, reconstruction and conservation checks.
//!
//! Diagonal entries hold the non-bonding valence electrons of an atom,
//! off-diagonal entries the electrons shared in a bond (2, 4 or 6). Rows beyond
//! the atom list are padding and stay zero.

mod state;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;

use crate::chem::{kekulize_with, Atom, Bond, BondOrder, Element, MolGraph, PeriodicTable};
use crate::error::{BeError, ReconstructError};

pub use state::{ContinuousState, DeltaBE};

/// One row of the matrix: which element, and which mapped atom if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BeAtom {
    pub element: Element,
    pub atom_map: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BEMatrix {
    atoms: Vec<BeAtom>,
    entries: Array2<i32>,
}

impl BEMatrix {
    /// Wrap raw entries. The matrix may be padded (larger than the atom list);
    /// padded rows and columns must be zero. No chemical validity is implied.
    pub fn new(atoms: Vec<BeAtom>, entries: Array2<i32>) -> Result<Self, BeError> {
        let (r, c) = entries.dim();
        if r != c || r < atoms.len() {
            return Err(BeError::Padding { size: atoms.len(), padding: r.min(c) });
        }
        let n = atoms.len();
        for ((i, j), &v) in entries.indexed_iter() {
            if (i >= n || j >= n) && v != 0 {
                return Err(BeError::Dump(format!("padding entry ({i}, {j}) is {v}")));
            }
        }
        Ok(BEMatrix { atoms, entries })
    }

    pub fn atoms(&self) -> &[BeAtom] {
        &self.atoms
    }

    /// Full (possibly padded) entry matrix.
    pub fn entries(&self) -> &Array2<i32> {
        &self.entries
    }

    /// Number of real atoms.
    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Padded side length.
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.size()).map(|i| i < self.atoms.len()).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> i32 {
        self.entries[[i, j]]
    }

    /// Same atoms, new entries of the same shape.
    pub fn with_entries(&self, entries: Array2<i32>) -> Result<Self, BeError> {
        if entries.dim() != self.entries.dim() {
            return Err(BeError::AtomListMismatch(format!(
                "shape {:?} vs {:?}",
                entries.dim(),
                self.entries.dim()
            )));
        }
        BEMatrix::new(self.atoms.clone(), entries)
    }

    pub fn row_sum(&self, i: usize) -> i64 {
        self.entries.row(i).iter().map(|&v| v as i64).sum()
    }

    pub fn row_sums(&self) -> Vec<i64> {
        (0..self.n_atoms()).map(|i| self.row_sum(i)).collect()
    }

    /// Sum of every entry: the conserved electron total.
    pub fn total(&self) -> i64 {
        self.entries.iter().map(|&v| v as i64).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries == self.entries.t()
    }

    pub fn formal_charge(&self, i: usize, table: &PeriodicTable) -> i32 {
        formal_charge_with(self, i, table)
    }

    /// Entries as floats over the padded shape.
    pub fn to_f64(&self) -> Array2<f64> {
        self.entries.mapv(|v| v as f64)
    }

    /// Copy with a larger padded size.
    pub fn padded(&self, size: usize) -> Result<Self, BeError> {
        if size < self.n_atoms() {
            return Err(BeError::Padding { size: self.n_atoms(), padding: size });
        }
        let n = self.n_atoms();
        let mut e = Array2::zeros((size, size));
        e.slice_mut(ndarray::s![..n, ..n])
            .assign(&self.entries.slice(ndarray::s![..n, ..n]));
        Ok(BEMatrix { atoms: self.atoms.clone(), entries: e })
    }

    /// Copy without padding.
    pub fn unpadded(&self) -> Self {
        let n = self.n_atoms();
        BEMatrix {
            atoms: self.atoms.clone(),
            entries: self.entries.slice(ndarray::s![..n, ..n]).to_owned(),
        }
    }

    pub fn hydrogen_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element.is_hydrogen()).count()
    }

    /// Non-hydrogen element multiset.
    pub fn heavy_counts(&self) -> BTreeMap<Element, usize> {
        let mut m = BTreeMap::new();
        for a in self.atoms.iter().filter(|a| !a.element.is_hydrogen()) {
            *m.entry(a.element).or_insert(0) += 1;
        }
        m
    }

    /// Text dump: a header of atom labels (`C:3`, or bare `H` when unmapped),
    /// then one line of space-separated integers per atom.
    pub fn dump(&self, table: &PeriodicTable) -> String {
        let mut s = String::new();
        let labels: Vec<String> = self
            .atoms
            .iter()
            .map(|a| match a.atom_map {
                Some(m) => format!("{}:{m}", table.symbol(a.element)),
                None => table.symbol(a.element).to_string(),
            })
            .collect();
        s.push_str(&labels.join(" "));
        s.push('\n');
        let n = self.n_atoms();
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| self.entries[[i, j]].to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn from_dump(text: &str, table: &PeriodicTable) -> Result<Self, BeError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| BeError::Dump("empty dump".into()))?;
        let mut atoms = Vec::new();
        for label in header.split_whitespace() {
            let (sym, map) = match label.split_once(':') {
                Some((s, m)) => {
                    let m: u32 = m.parse().map_err(|_| BeError::Dump(format!("bad map in '{label}'")))?;
                    (s, Some(m))
                }
                None => (label, None),
            };
            let element = table
                .lookup(sym)
                .ok_or_else(|| BeError::Dump(format!("unknown element '{sym}'")))?;
            atoms.push(BeAtom { element, atom_map: map });
        }
        let n = atoms.len();
        let mut entries = Array2::zeros((n, n));
        for i in 0..n {
            let line = lines.next().ok_or_else(|| BeError::Dump(format!("missing row {i}")))?;
            let vals: Vec<i32> = line
                .split_whitespace()
                .map(|v| v.parse::<i32>().map_err(|_| BeError::Dump(format!("bad entry '{v}' in row {i}"))))
                .collect::<Result<_, _>>()?;
            if vals.len() != n {
                return Err(BeError::Dump(format!("row {i} has {} entries, expected {n}", vals.len())));
            }
            for (j, v) in vals.into_iter().enumerate() {
                entries[[i, j]] = v;
            }
        }
        if lines.next().is_some() {
            return Err(BeError::Dump("trailing rows".into()));
        }
        BEMatrix::new(atoms, entries)
    }
}

/// Build the BE matrix of a set of species.
///
/// Aromatic systems are kekulized and carried hydrogens become explicit atoms.
/// Row order: mapped atoms by ascending map, then unmapped atoms in input order
/// (hydrogens hanging off a single heavy atom excepted), then those hydrogens
/// in the order of their parents.
pub fn build_be(mols: &[MolGraph], padding: Option<usize>) -> Result<BEMatrix, BeError> {
    build_be_with(mols, padding, PeriodicTable::default_table())
}

pub fn build_be_with(
    mols: &[MolGraph],
    padding: Option<usize>,
    table: &PeriodicTable,
) -> Result<BEMatrix, BeError> {
    let union = MolGraph::union(mols);
    union.check_unique_maps()?;
    let g = kekulize_with(&union, table)?.with_explicit_hydrogens();
    let order = atom_order(&g);
    let n = g.len();
    let size = padding.unwrap_or(n);
    if size < n {
        return Err(BeError::Padding { size: n, padding: size });
    }
    let mut pos = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        pos[i] = k;
    }
    let mut entries = Array2::zeros((size, size));
    let mut atoms = Vec::with_capacity(n);
    for (k, &i) in order.iter().enumerate() {
        let a = g.atom(i);
        let info = table
            .get(a.element)
            .ok_or_else(|| crate::error::ChemError::UnknownElement { symbol: a.element.to_string(), offset: 0 })?;
        let lone = info.group_valence_electrons - a.formal_charge - g.bond_valence(i) as i32;
        if lone < 0 {
            return Err(BeError::NegativeLonePairs { atom: k, symbol: info.symbol.clone() });
        }
        entries[[k, k]] = lone;
        atoms.push(BeAtom { element: a.element, atom_map: a.atom_map });
    }
    for bond in g.bonds() {
        let (p, q) = (pos[bond.a], pos[bond.b]);
        let e = 2 * bond.order.valence() as i32;
        entries[[p, q]] = e;
        entries[[q, p]] = e;
    }
    Ok(BEMatrix { atoms, entries })
}

fn atom_order(g: &MolGraph) -> Vec<usize> {
    let n = g.len();
    let mut mapped: Vec<(u32, usize)> = (0..n).filter_map(|i| g.atom(i).atom_map.map(|m| (m, i))).collect();
    mapped.sort_unstable();
    let hanging_h = |i: usize| -> Option<usize> {
        let a = g.atom(i);
        if !a.element.is_hydrogen() || a.atom_map.is_some() || g.neighbors(i).len() != 1 {
            return None;
        }
        let parent = g.neighbors(i)[0].0;
        (!g.atom(parent).element.is_hydrogen()).then_some(parent)
    };
    let mut order: Vec<usize> = mapped.into_iter().map(|(_, i)| i).collect();
    let mut hanging = Vec::new();
    for i in 0..n {
        if g.atom(i).atom_map.is_some() {
            continue;
        }
        match hanging_h(i) {
            Some(parent) => hanging.push((parent, i)),
            None => order.push(i),
        }
    }
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in order.iter().enumerate() {
        pos[i] = k;
    }
    hanging.sort_by_key(|&(parent, i)| (pos[parent], i));
    order.extend(hanging.into_iter().map(|(_, i)| i));
    order
}

/// `V − lone electrons − bonds`, where bonds count shared electrons halved.
pub fn formal_charge(be: &BEMatrix, i: usize) -> i32 {
    formal_charge_with(be, i, PeriodicTable::default_table())
}

pub fn formal_charge_with(be: &BEMatrix, i: usize, table: &PeriodicTable) -> i32 {
    let v = table.info(be.atoms[i].element).group_valence_electrons;
    let shared: i32 = (0..be.n_atoms()).filter(|&j| j != i).map(|j| be.entries[[i, j]]).sum();
    v - be.entries[[i, i]] - shared.div_euclid(2)
}

/// Turn a matrix back into molecules, one graph per connected component.
///
/// Hydrogens stay explicit atoms; maps are carried over.
pub fn reconstruct(be: &BEMatrix) -> Result<Vec<MolGraph>, ReconstructError> {
    reconstruct_with(be, PeriodicTable::default_table())
}

pub fn reconstruct_with(be: &BEMatrix, table: &PeriodicTable) -> Result<Vec<MolGraph>, ReconstructError> {
    Ok(reconstruct_graph_with(be, table)?.split_components())
}

/// Like [`reconstruct_with`] but keeps every component in one graph.
pub fn reconstruct_graph_with(be: &BEMatrix, table: &PeriodicTable) -> Result<MolGraph, ReconstructError> {
    let n = be.n_atoms();
    let e = &be.entries;
    for i in 0..n {
        for j in 0..n {
            if e[[i, j]] < 0 {
                return Err(ReconstructError::NegativeEntry { row: i, col: j, value: e[[i, j]] });
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if e[[i, j]] != e[[j, i]] {
                return Err(ReconstructError::Asymmetric { row: i, col: j });
            }
            if e[[i, j]] % 2 != 0 {
                return Err(ReconstructError::OddBondElectrons { row: i, col: j, value: e[[i, j]] });
            }
        }
    }
    let mut bonds = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if e[[i, j]] == 0 {
                continue;
            }
            let order = (e[[i, j]] / 2) as u32;
            let order = BondOrder::from_valence(order).ok_or_else(|| ReconstructError::ValenceViolation {
                atom: i,
                symbol: table.symbol(be.atoms[i].element).to_string(),
                reason: format!("bond of order {order} to atom {j}"),
            })?;
            bonds.push(Bond { a: i, b: j, order });
        }
    }
    let mut atoms = Vec::with_capacity(n);
    for i in 0..n {
        let element = be.atoms[i].element;
        let mut atom = Atom::new(element);
        atom.atom_map = be.atoms[i].atom_map;
        atom.formal_charge = formal_charge_with(be, i, table);
        atom.radical_electrons = (e[[i, i]] % 2) as u32;
        atoms.push(atom);
    }
    let g = MolGraph::new(atoms, bonds).map_err(|err| ReconstructError::ValenceViolation {
        atom: 0,
        symbol: String::new(),
        reason: err.to_string(),
    })?;
    for i in 0..n {
        check_atom(&g, i, e[[i, i]], table)?;
    }
    Ok(g)
}

fn check_atom(g: &MolGraph, i: usize, lone: i32, table: &PeriodicTable) -> Result<(), ReconstructError> {
    let atom = g.atom(i);
    let info = table.info(atom.element);
    let fail = |reason: String| ReconstructError::ValenceViolation { atom: i, symbol: info.symbol.clone(), reason };
    let v = g.bond_valence(i) as i32;
    let q = atom.formal_charge;
    if info.is_transition_metal() {
        return if (0..=6).contains(&v) && (-4..=4).contains(&q) {
            Ok(())
        } else {
            Err(fail(format!("{v} bonds with charge {q}")))
        };
    }
    if info.atomic_number != 1 {
        let metal = info.group_valence_electrons <= 2;
        let charge_ok = if metal { (0..=info.group_valence_electrons).contains(&q) } else { q.abs() <= 1 };
        if !charge_ok {
            return Err(fail(format!("charge {q}")));
        }
        // an unbonded s-block or zinc atom keeps its valence electrons, e.g. [Zn]
        if metal && v == 0 {
            return Ok(());
        }
        let shell = lone + 2 * v;
        if info.allowed_valences.len() == 1 && shell > 8 {
            return Err(fail(format!("{shell} valence electrons")));
        }
    }
    let effective = v + atom.radical_electrons as i32;
    if info.valence_options(q).contains(&effective) {
        Ok(())
    } else {
        Err(fail(format!("valence {effective} with charge {q}")))
    }
}

/// Outcome of comparing the element and electron content of two states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConservationReport {
    pub heavy_atoms: bool,
    pub protons: bool,
    pub electrons: bool,
    pub reactant_hydrogens: usize,
    pub product_hydrogens: usize,
    pub reactant_electrons: i64,
    pub product_electrons: i64,
}

impl ConservationReport {
    pub fn all(&self) -> bool {
        self.heavy_atoms && self.protons && self.electrons
    }
}

pub fn check_conservation(reactant: &BEMatrix, product: &BEMatrix) -> ConservationReport {
    ConservationReport {
        heavy_atoms: reactant.heavy_counts() == product.heavy_counts(),
        protons: reactant.hydrogen_count() == product.hydrogen_count(),
        electrons: reactant.total() == product.total(),
        reactant_hydrogens: reactant.hydrogen_count(),
        product_hydrogens: product.hydrogen_count(),
        reactant_electrons: reactant.total(),
        product_electrons: product.total(),
    }
}

/// `product − reactant` over a shared atom list.
pub fn delta(reactant: &BEMatrix, product: &BEMatrix) -> Result<DeltaBE, BeError> {
    if reactant.atoms != product.atoms || reactant.size() != product.size() {
        return Err(BeError::AtomListMismatch(format!(
            "{} atoms (size {}) vs {} atoms (size {})",
            reactant.n_atoms(),
            reactant.size(),
            product.n_atoms(),
            product.size()
        )));
    }
    let d = (&product.entries - &reactant.entries).mapv(|v| v as f64);
    let sum: f64 = d.sum();
    if sum != 0.0 {
        return Err(BeError::NonZeroDelta(sum));
    }
    Ok(DeltaBE::new(d))
}

/// Build the matrices of both sides of a mapped reaction string.
pub fn build_reaction(text: &str, padding: Option<usize>) -> Result<(BEMatrix, BEMatrix), BeError> {
    let (r, p) = crate::chem::parse_reaction(text)?;
    Ok((build_be(&[r], padding)?, build_be(&[p], padding)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{canonical_smiles, parse_smiles};

    fn be(smi: &str) -> BEMatrix {
        build_be(&[parse_smiles(smi).unwrap()], None).unwrap()
    }

    #[test]
    fn water() {
        let m = be("O");
        assert_eq!(m.n_atoms(), 3);
        assert_eq!(m.get(0, 0), 4);
        assert_eq!(m.get(0, 1), 2);
        assert_eq!(m.get(0, 2), 2);
        assert_eq!(m.get(1, 1), 0);
        assert_eq!(m.row_sums(), vec![8, 2, 2]);
        assert_eq!(formal_charge(&m, 0), 0);
    }

    #[test]
    fn hydroxide_and_hydronium() {
        let m = be("[OH-]");
        assert_eq!(m.get(0, 0), 6);
        assert_eq!(m.row_sums(), vec![8, 2]);
        assert_eq!(formal_charge(&m, 0), -1);
        let h3o = be("[OH3+]");
        assert_eq!(h3o.get(0, 0), 2);
        assert_eq!(formal_charge(&h3o, 0), 1);
        let meo = be("C[O-]");
        assert_eq!(formal_charge(&meo, 1), -1);
    }

    #[test]
    fn naphthalene_fusion_rows() {
        let m = be("c1ccc2ccccc2c1");
        for i in 0..10 {
            assert_eq!(m.row_sum(i), 8);
        }
        // fusion carbons are the ones without hydrogens
        let fusion: Vec<usize> = (0..10)
            .filter(|&i| (0..m.n_atoms()).all(|j| m.get(i, j) == 0 || !m.atoms()[j].element.is_hydrogen()))
            .collect();
        assert_eq!(fusion.len(), 2);
        for &f in &fusion {
            assert_eq!(m.get(f, f), 0);
            let mut offs: Vec<i32> = (0..m.n_atoms()).filter(|&j| j != f && m.get(f, j) > 0).map(|j| m.get(f, j)).collect();
            offs.sort_unstable();
            assert_eq!(offs, vec![2, 2, 4]);
        }
    }

    #[test]
    fn mapped_order_and_padding() {
        let m = build_be(&[parse_smiles("[OH2:5].[CH3:2][Cl:1]").unwrap()], Some(12)).unwrap();
        let maps: Vec<Option<u32>> = m.atoms().iter().map(|a| a.atom_map).collect();
        assert_eq!(&maps[..3], &[Some(1), Some(2), Some(5)]);
        assert_eq!(m.size(), 12);
        assert_eq!(m.mask().iter().filter(|&&b| b).count(), 8);
        assert!(m.entries().row(10).iter().all(|&v| v == 0));
        assert!(matches!(
            build_be(&[parse_smiles("CCO").unwrap()], Some(3)),
            Err(BeError::Padding { .. })
        ));
        assert!(matches!(
            build_be(&[parse_smiles("[CH4:1].[OH2:1]").unwrap()], None),
            Err(BeError::Chem(_))
        ));
    }

    #[test]
    fn round_trip_through_reconstruct() {
        for smi in ["O", "[OH-]", "CC(=O)[O-]", "c1ccc2ccccc2c1", "C[Pd]Br", "CC[Zn]CC", "[Na+].[Cl-]", "C[CH2^1]", "O=[N+]([O-])c1ccccc1", "[Zn+2]", "[Zn]", "Cl[Pd-2](Cl)(Cl)Cl"] {
            let g = parse_smiles(smi).unwrap();
            let m = be(smi);
            let back = reconstruct(&m).unwrap();
            let joined = MolGraph::union(&back);
            assert_eq!(
                canonical_smiles(&joined, false).unwrap(),
                canonical_smiles(&g, false).unwrap(),
                "{smi}"
            );
            assert_eq!(build_be(&back, None).unwrap(), m, "{smi}");
        }
    }

    #[test]
    fn reconstruct_failures() {
        let m = be("CC");
        let mut e = m.entries().clone();
        e[[0, 1]] = 3;
        e[[1, 0]] = 3;
        assert!(matches!(
            reconstruct(&m.with_entries(e.clone()).unwrap()),
            Err(ReconstructError::OddBondElectrons { .. })
        ));
        e[[1, 0]] = 2;
        assert!(matches!(reconstruct(&m.with_entries(e).unwrap()), Err(ReconstructError::Asymmetric { .. })));

        // oxygen bonded to four carbons with no charge bookkeeping
        let text = "O C C C C\n2 2 2 2 2\n2 6 0 0 0\n2 0 6 0 0\n2 0 0 6 0\n2 0 0 0 6\n";
        let m = BEMatrix::from_dump(text, PeriodicTable::default_table()).unwrap();
        assert!(matches!(reconstruct(&m), Err(ReconstructError::ValenceViolation { .. })));

        // pentavalent neutral carbon
        let m = be("C");
        let mut e = m.entries().clone();
        e[[0, 0]] = 0;
        let mut bigger = Array2::zeros((6, 6));
        bigger.slice_mut(ndarray::s![..5, ..5]).assign(&e);
        let mut atoms = m.atoms().to_vec();
        atoms.push(BeAtom { element: Element::H, atom_map: None });
        bigger[[0, 5]] = 2;
        bigger[[5, 0]] = 2;
        let m = BEMatrix::new(atoms, bigger).unwrap();
        assert!(matches!(reconstruct(&m), Err(ReconstructError::ValenceViolation { .. })));
    }

    #[test]
    fn conservation() {
        let (r, p) = build_reaction("[OH-:1].[H:2][OH:3]>>[OH:1][H:2].[OH-:3]", None).unwrap();
        let rep = check_conservation(&r, &p);
        assert!(rep.all());
        assert!(check_conservation(&r, &r).all());

        // delete one hydrogen row and column from the product
        let n = p.n_atoms();
        let keep: Vec<usize> = (0..n).filter(|&i| i != n - 1).collect();
        let e = p.entries().select(ndarray::Axis(0), &keep).select(ndarray::Axis(1), &keep);
        let cut = BEMatrix::new(keep.iter().map(|&i| p.atoms()[i]).collect(), e).unwrap();
        let rep = check_conservation(&r, &cut);
        assert!(rep.heavy_atoms && !rep.protons && !rep.electrons);
        // independent count: every row of a closed-shell H is 2, so losing one
        // terminal H removes its row (2) and its bond share in the parent row (2)
        assert_eq!(rep.reactant_electrons - rep.product_electrons, 4);
    }

    #[test]
    fn water_deprotonation_delta() {
        let (r, p) = build_reaction("[OH-:1].[H:2][OH:3]>>[OH:1][H:2].[OH-:3]", None).unwrap();
        let d = delta(&r, &p).unwrap();
        assert_eq!(d.sum(), 0.0);
        assert!(d.is_symmetric());
        // one pair moves O1 lone pair -> O1-H2 bond, one pair H2-O3 bond -> O3 lone pair
        let nonzero = d.entries().iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzero, 6);
        let (a, b) = (r.atoms().iter().position(|a| a.atom_map == Some(1)).unwrap(), r.atoms().iter().position(|a| a.atom_map == Some(2)).unwrap());
        assert_eq!(d.entries()[[a, a]], -2.0);
        assert_eq!(d.entries()[[a, b]], 2.0);
        assert!(delta(&r, &be("O")).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let t = PeriodicTable::default_table();
        let m = be("[CH3:1][OH:2]");
        let text = m.dump(t);
        assert!(text.starts_with("C:1 O:2 H H H H\n"));
        assert_eq!(BEMatrix::from_dump(&text, t).unwrap(), m);
        assert!(BEMatrix::from_dump("C O\n4 2\n", t).is_err());
    }
}
