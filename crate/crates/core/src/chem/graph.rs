use crate::chem::periodic::{Element, PeriodicTable};
use crate::error::ChemError;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i32,
    /// Hydrogens carried on this atom (bracket count or valence-derived
    /// implicit count, never both). Explicit `[H]` neighbours are separate atoms.
    pub h_count: u32,
    pub atom_map: Option<u32>,
    pub aromatic: bool,
    pub radical_electrons: u32,
    pub isotope: Option<u16>,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            formal_charge: 0,
            h_count: 0,
            atom_map: None,
            aromatic: false,
            radical_electrons: 0,
            isotope: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integer order; aromatic bonds count as 1 before kekulization.
    pub fn valence(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn from_valence(order: u32) -> Option<Self> {
        match order {
            1 => Some(BondOrder::Single),
            2 => Some(BondOrder::Double),
            3 => Some(BondOrder::Triple),
            _ => None,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// Atoms and bonds of one or more molecules; connected components are the
/// individual species.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolGraph {
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, ChemError> {
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (idx, bond) in bonds.iter().enumerate() {
            if bond.a == bond.b {
                return Err(ChemError::InvalidBond(format!("self-bond on atom {}", bond.a)));
            }
            if bond.a >= atoms.len() || bond.b >= atoms.len() {
                return Err(ChemError::InvalidBond(format!(
                    "bond {}-{} references a missing atom",
                    bond.a, bond.b
                )));
            }
            if adjacency[bond.a].iter().any(|&(n, _)| n == bond.b) {
                return Err(ChemError::InvalidBond(format!(
                    "duplicate bond {}-{}",
                    bond.a, bond.b
                )));
            }
            adjacency[bond.a].push((bond.b, idx));
            adjacency[bond.b].push((bond.a, idx));
        }
        Ok(MolGraph { atoms, bonds, adjacency })
    }

    pub fn empty() -> Self {
        MolGraph { atoms: Vec::new(), bonds: Vec::new(), adjacency: Vec::new() }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `(neighbour, bond index)` pairs of atom `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, idx)| &self.bonds[idx])
    }

    /// Sum of bond orders (aromatic counted as 1) plus carried hydrogens.
    pub fn valence(&self, i: usize) -> u32 {
        self.bond_valence(i) + self.atoms[i].h_count
    }

    pub fn bond_valence(&self, i: usize) -> u32 {
        self.adjacency[i]
            .iter()
            .map(|&(_, b)| self.bonds[b].order.valence())
            .sum()
    }

    pub fn total_charge(&self) -> i32 {
        self.atoms.iter().map(|a| a.formal_charge).sum()
    }

    /// Atom index sets of connected components, each sorted, ordered by lowest index.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Induced subgraph over `indices` (in that order).
    pub fn subgraph(&self, indices: &[usize]) -> MolGraph {
        let mut remap = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in indices.iter().enumerate() {
            remap[old] = new;
        }
        let atoms = indices.iter().map(|&i| self.atoms[i].clone()).collect();
        let bonds = self
            .bonds
            .iter()
            .filter(|b| remap[b.a] != usize::MAX && remap[b.b] != usize::MAX)
            .map(|b| Bond { a: remap[b.a], b: remap[b.b], order: b.order })
            .collect();
        MolGraph::new(atoms, bonds).expect("subgraph of a valid graph is valid")
    }

    /// Split into one graph per connected component.
    pub fn split_components(&self) -> Vec<MolGraph> {
        self.components().iter().map(|c| self.subgraph(c)).collect()
    }

    /// Disjoint union, atoms of `other` appended after ours.
    pub fn union(graphs: &[MolGraph]) -> MolGraph {
        let mut atoms = Vec::new();
        let mut bonds = Vec::new();
        for g in graphs {
            let offset = atoms.len();
            atoms.extend(g.atoms.iter().cloned());
            bonds.extend(g.bonds.iter().map(|b| Bond { a: b.a + offset, b: b.b + offset, order: b.order }));
        }
        MolGraph::new(atoms, bonds).expect("union of valid graphs is valid")
    }

    /// Permute atoms: new atom `k` is old atom `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> MolGraph {
        assert_eq!(order.len(), self.atoms.len());
        self.subgraph(order)
    }

    /// Every carried hydrogen becomes an explicit, unmapped `H` atom bonded to
    /// its parent. New atoms are appended in parent order.
    pub fn with_explicit_hydrogens(&self) -> MolGraph {
        let mut atoms = self.atoms.clone();
        let mut bonds = self.bonds.clone();
        for i in 0..self.atoms.len() {
            let n = self.atoms[i].h_count;
            atoms[i].h_count = 0;
            for _ in 0..n {
                let idx = atoms.len();
                atoms.push(Atom::new(Element::H));
                bonds.push(Bond { a: i, b: idx, order: BondOrder::Single });
            }
        }
        MolGraph::new(atoms, bonds).expect("adding terminal hydrogens keeps the graph valid")
    }

    /// Inverse of [`with_explicit_hydrogens`](Self::with_explicit_hydrogens):
    /// neutral, unlabelled hydrogens with exactly one non-hydrogen single-bonded
    /// neighbour are folded into that neighbour's count. With `keep_maps`,
    /// mapped hydrogens stay explicit.
    pub fn with_folded_hydrogens(&self, keep_maps: bool) -> MolGraph {
        let foldable: Vec<bool> = (0..self.atoms.len())
            .map(|i| {
                let a = &self.atoms[i];
                a.element.is_hydrogen()
                    && a.formal_charge == 0
                    && a.isotope.is_none()
                    && a.h_count == 0
                    && a.radical_electrons == 0
                    && !(keep_maps && a.atom_map.is_some())
                    && self.adjacency[i].len() == 1
                    && {
                        let (n, b) = self.adjacency[i][0];
                        !self.atoms[n].element.is_hydrogen()
                            && self.bonds[b].order == BondOrder::Single
                    }
            })
            .collect();
        let mut atoms = self.atoms.clone();
        for i in 0..self.atoms.len() {
            if foldable[i] {
                let (n, _) = self.adjacency[i][0];
                atoms[n].h_count += 1;
            }
        }
        let keep: Vec<usize> = (0..self.atoms.len()).filter(|&i| !foldable[i]).collect();
        let tmp = MolGraph::new(atoms, self.bonds.clone()).expect("valid");
        tmp.subgraph(&keep)
    }

    pub fn strip_maps(&self) -> MolGraph {
        let mut g = self.clone();
        for a in &mut g.atoms {
            a.atom_map = None;
        }
        g
    }

    /// Maps must be unique across the graph.
    pub fn check_unique_maps(&self) -> Result<(), ChemError> {
        let mut seen = std::collections::HashSet::new();
        for a in &self.atoms {
            if let Some(m) = a.atom_map {
                if !seen.insert(m) {
                    return Err(ChemError::DuplicateMap(m));
                }
            }
        }
        Ok(())
    }

    /// Bonds that lie on at least one cycle (i.e. are not bridges).
    pub fn ring_bonds(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut is_bridge = vec![false; self.bonds.len()];
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // iterative DFS: (node, parent bond, next neighbour position)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(top) = stack.last_mut() {
                let (u, pb) = (top.0, top.1);
                if top.2 < self.adjacency[u].len() {
                    let (v, b) = self.adjacency[u][top.2];
                    top.2 += 1;
                    if b == pb {
                        continue;
                    }
                    if disc[v] == usize::MAX {
                        disc[v] = timer;
                        low[v] = timer;
                        timer += 1;
                        stack.push((v, b, 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[u]);
                        if low[u] > disc[p] {
                            is_bridge[pb] = true;
                        }
                    }
                }
            }
        }
        is_bridge.iter().map(|b| !b).collect()
    }

    pub(crate) fn atoms_mut(&mut self) -> &mut [Atom] {
        &mut self.atoms
    }

    pub(crate) fn set_bond_order(&mut self, bond: usize, order: BondOrder) {
        self.bonds[bond].order = order;
    }

    /// Formula-style element counts, hydrogens included (carried and explicit).
    pub fn element_counts(&self) -> std::collections::BTreeMap<Element, usize> {
        let mut counts = std::collections::BTreeMap::new();
        for a in &self.atoms {
            *counts.entry(a.element).or_insert(0) += 1;
            if a.h_count > 0 {
                *counts.entry(Element::H).or_insert(0) += a.h_count as usize;
            }
        }
        counts
    }

    /// Total valence electrons: group electrons of every atom (carried H
    /// included) minus net charge.
    pub fn valence_electron_total(&self, table: &PeriodicTable) -> i64 {
        self.atoms
            .iter()
            .map(|a| {
                table.info(a.element).group_valence_electrons as i64 + a.h_count as i64
                    - a.formal_charge as i64
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    #[test]
    fn ring_bonds_distinguish_bridges() {
        let g = parse_smiles("C1CC1CC").unwrap();
        let rb = g.ring_bonds();
        assert_eq!(rb.iter().filter(|&&r| r).count(), 3);
        assert_eq!(rb.len(), 5);
    }

    #[test]
    fn explicit_and_folded_hydrogens_are_inverse() {
        let g = parse_smiles("CCO").unwrap();
        let h = g.with_explicit_hydrogens();
        assert_eq!(h.len(), 9);
        assert_eq!(h.with_folded_hydrogens(false), g);
    }

    #[test]
    fn duplicate_bonds_rejected() {
        let atoms = vec![Atom::new(Element::C), Atom::new(Element::C)];
        let b = Bond { a: 0, b: 1, order: BondOrder::Single };
        assert!(MolGraph::new(atoms, vec![b, Bond { a: 1, b: 0, order: BondOrder::Double }]).is_err());
    }
}
