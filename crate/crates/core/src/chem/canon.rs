//! Canonical SMILES.
//!
//! Pipeline: kekulize (validates the aromatic system), fold plain hydrogens,
//! perceive aromaticity so that the Kekulé choice is erased, then label each
//! component canonically and write it. Labels come from iterative refinement
//! of atom invariants; remaining ties are broken by trying every member of the
//! first tied class and keeping the lexicographically smallest string.

use std::fmt::Write as _;

use crate::chem::aromatic::perceive_aromaticity_with;
use crate::chem::graph::{BondOrder, MolGraph};
use crate::chem::kekule::kekulize_with;
use crate::chem::periodic::PeriodicTable;
use crate::chem::valence;
use crate::error::ChemError;

/// Upper bound on fully-labelled strings tried per component. Past it, ties are
/// broken by the first member only, which is exact whenever the tied atoms are
/// symmetry-equivalent.
const LEAF_BUDGET: usize = 2048;

pub fn canonical_smiles(mol: &MolGraph, keep_maps: bool) -> Result<String, ChemError> {
    canonical_smiles_with(mol, keep_maps, PeriodicTable::default_table())
}

pub fn canonical_smiles_with(
    mol: &MolGraph,
    keep_maps: bool,
    table: &PeriodicTable,
) -> Result<String, ChemError> {
    let g = if keep_maps { mol.clone() } else { mol.strip_maps() };
    let g = kekulize_with(&g, table)?;
    let g = g.with_folded_hydrogens(keep_maps);
    let g = perceive_aromaticity_with(&g, table);
    let mut parts: Vec<String> = g
        .split_components()
        .iter()
        .map(|c| canonical_component(c, table))
        .collect();
    parts.sort();
    Ok(parts.join("."))
}

fn canonical_component(mol: &MolGraph, table: &PeriodicTable) -> String {
    let n = mol.len();
    let invariants: Vec<(u8, bool, i32, u32, usize, u32, u16, u32)> = (0..n)
        .map(|i| {
            let a = mol.atom(i);
            (
                a.element.atomic_number(),
                a.aromatic,
                a.formal_charge,
                a.h_count,
                mol.neighbors(i).len(),
                a.radical_electrons,
                a.isotope.unwrap_or(0),
                a.atom_map.unwrap_or(0),
            )
        })
        .collect();
    let ranks = refine(mol, dense_ranks(&invariants));
    let mut budget = LEAF_BUDGET;
    let mut best: Option<String> = None;
    search(mol, table, ranks, &mut budget, &mut best);
    best.expect("at least one labelling is written")
}

fn dense_ranks<T: Ord + Clone>(keys: &[T]) -> Vec<usize> {
    let mut sorted: Vec<T> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("key present"))
        .collect()
}

fn class_count(ranks: &[usize]) -> usize {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    r.dedup();
    r.len()
}

fn refine(mol: &MolGraph, mut ranks: Vec<usize>) -> Vec<usize> {
    let mut classes = class_count(&ranks);
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..mol.len())
            .map(|i| {
                let mut nb: Vec<(usize, u8)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(j, b)| (ranks[j], mol.bonds()[b].order.code()))
                    .collect();
                nb.sort_unstable();
                (ranks[i], nb)
            })
            .collect();
        let next = dense_ranks(&keys);
        let next_classes = class_count(&next);
        ranks = next;
        if next_classes == classes {
            return ranks;
        }
        classes = next_classes;
    }
}

fn search(
    mol: &MolGraph,
    table: &PeriodicTable,
    ranks: Vec<usize>,
    budget: &mut usize,
    best: &mut Option<String>,
) {
    let n = ranks.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &r) in ranks.iter().enumerate() {
        members[r].push(i);
    }
    let tied = members.iter().find(|m| m.len() > 1);
    let Some(tied) = tied else {
        let s = write_labelled(mol, &ranks, table);
        if best.as_ref().is_none_or(|b| s < *b) {
            *best = Some(s);
        }
        *budget = budget.saturating_sub(1);
        return;
    };
    let tied = tied.clone();
    let class = ranks[tied[0]];
    for (k, &chosen) in tied.iter().enumerate() {
        if k > 0 && *budget == 0 {
            break;
        }
        let split: Vec<usize> = ranks
            .iter()
            .enumerate()
            .map(|(i, &r)| 2 * r + usize::from(r == class && i != chosen))
            .collect();
        let split = refine(mol, dense_ranks(&split));
        search(mol, table, split, budget, best);
    }
}

fn bond_symbol(mol: &MolGraph, a: usize, b: usize, order: BondOrder) -> &'static str {
    let both_aromatic = mol.atom(a).aromatic && mol.atom(b).aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

/// Atom text as the parser would read it back to the same atom.
pub(crate) fn atom_token(mol: &MolGraph, i: usize, table: &PeriodicTable) -> String {
    let atom = mol.atom(i);
    let info = table.info(atom.element);
    let symbol = if atom.aromatic {
        info.symbol.to_ascii_lowercase()
    } else {
        info.symbol.clone()
    };
    let default_radicals = valence::default_radicals(mol, i, table);
    let plain = info.in_organic_subset()
        && atom.formal_charge == 0
        && atom.isotope.is_none()
        && atom.atom_map.is_none()
        && atom.radical_electrons == default_radicals
        && valence::implicit_hydrogens(info, atom.aromatic, mol.bond_valence(i))
            == Some(atom.h_count);
    if plain {
        return symbol;
    }
    let mut s = String::from("[");
    if let Some(iso) = atom.isotope {
        let _ = write!(s, "{iso}");
    }
    s.push_str(&symbol);
    match atom.h_count {
        0 => {}
        1 => s.push('H'),
        h => {
            let _ = write!(s, "H{h}");
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        q if q > 0 => {
            let _ = write!(s, "+{q}");
        }
        q => {
            let _ = write!(s, "-{}", -q);
        }
    }
    if atom.radical_electrons != default_radicals {
        let _ = write!(s, "^{}", atom.radical_electrons);
    }
    if let Some(m) = atom.atom_map {
        let _ = write!(s, ":{m}");
    }
    s.push(']');
    s
}

fn ring_label(d: usize) -> String {
    if d < 10 {
        d.to_string()
    } else {
        format!("%{d:02}")
    }
}

/// Write a connected graph whose `ranks` are all distinct.
fn write_labelled(mol: &MolGraph, ranks: &[usize], table: &PeriodicTable) -> String {
    let n = mol.len();
    if n == 0 {
        return String::new();
    }
    let mut sorted_nbrs: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|i| {
            let mut v = mol.neighbors(i).to_vec();
            v.sort_by_key(|&(j, _)| ranks[j]);
            v
        })
        .collect();
    let start = (0..n)
        .min_by_key(|&i| (mol.neighbors(i).len(), ranks[i]))
        .expect("nonempty");

    // pass 1: spanning tree and ring closures
    let mut visited = vec![false; n];
    let mut closure_seen = vec![false; mol.bonds().len()];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    // closures per atom: (bond, partner)
    let mut closures: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut stack: Vec<(usize, usize, usize)> = vec![(start, usize::MAX, 0)];
    visited[start] = true;
    while let Some(top) = stack.last_mut() {
        let (u, pb) = (top.0, top.1);
        if top.2 >= sorted_nbrs[u].len() {
            stack.pop();
            continue;
        }
        let (v, b) = sorted_nbrs[u][top.2];
        top.2 += 1;
        if b == pb {
            continue;
        }
        if visited[v] {
            if !closure_seen[b] {
                closure_seen[b] = true;
                closures[v].push((b, u));
                closures[u].push((b, v));
            }
        } else {
            visited[v] = true;
            children[u].push((v, b));
            stack.push((v, b, 0));
        }
    }
    sorted_nbrs.clear();

    // pass 2: emit
    let mut out = String::new();
    let mut digit_of_bond: Vec<Option<usize>> = vec![None; mol.bonds().len()];
    let mut free_digits: Vec<bool> = vec![true; 100];
    free_digits[0] = false;
    enum Item {
        Atom(usize, usize),
        Open,
        Close,
    }
    let mut work = vec![Item::Atom(start, usize::MAX)];
    while let Some(item) = work.pop() {
        match item {
            Item::Open => out.push('('),
            Item::Close => out.push(')'),
            Item::Atom(u, via) => {
                if via != usize::MAX {
                    let bond = mol.bonds()[via];
                    out.push_str(bond_symbol(mol, bond.a, bond.b, bond.order));
                }
                out.push_str(&atom_token(mol, u, table));
                let mut cl = closures[u].clone();
                cl.sort_by_key(|&(_, partner)| ranks[partner]);
                for (b, partner) in cl {
                    match digit_of_bond[b] {
                        Some(d) => {
                            out.push_str(&ring_label(d));
                            free_digits[d] = true;
                        }
                        None => {
                            let d = free_digits.iter().position(|&f| f).expect("ring labels exhausted");
                            free_digits[d] = false;
                            digit_of_bond[b] = Some(d);
                            let bond = mol.bonds()[b];
                            out.push_str(bond_symbol(mol, u, partner, bond.order));
                            out.push_str(&ring_label(d));
                        }
                    }
                }
                let kids = &children[u];
                // push in reverse so the lowest-ranked child is written first
                for (k, &(v, b)) in kids.iter().enumerate().rev() {
                    let last = k + 1 == kids.len();
                    if last {
                        work.push(Item::Atom(v, b));
                    } else {
                        work.push(Item::Close);
                        work.push(Item::Atom(v, b));
                        work.push(Item::Open);
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn canon(s: &str) -> String {
        canonical_smiles(&parse_smiles(s).unwrap(), false).unwrap()
    }

    #[test]
    fn same_molecule_same_string() {
        assert_eq!(canon("OCC"), canon("CCO"));
        assert_eq!(canon("C1=CC=CC=C1"), canon("c1ccccc1"));
        assert_eq!(canon("[CH3:1][OH:2]"), canon("CO"));
        assert_eq!(canon("[H]OC([H])([H])[H]"), canon("CO"));
        assert_eq!(canon("O.[Na+].[Cl-]"), canon("[Cl-].[Na+].O"));
        assert_ne!(canon("CCO"), canon("COC"));
    }

    #[test]
    fn keep_maps_writes_maps() {
        let g = parse_smiles("[CH3:1][OH:2]").unwrap();
        let s = canonical_smiles(&g, true).unwrap();
        assert!(s.contains(":1]") && s.contains(":2]"), "{s}");
        assert_eq!(canonical_smiles(&parse_smiles(&s).unwrap(), true).unwrap(), s);
    }

    #[test]
    fn aromatic_output_reparses() {
        for smi in ["c1ccc2ccccc2c1", "c1cc[nH+]cc1", "O=c1cccc[nH]1", "Cc1ccc(O)cc1", "c1ccc(-c2ccccc2)cc1"] {
            let a = canon(smi);
            assert_eq!(canon(&a), a, "{smi} -> {a}");
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for smi in [
            "CC(C)(C)c1ccc(O)cc1C(=O)OCC[N+](C)(C)C",
            "OC1C(O)C(O)C(O)C(O)C1O",
            "c1ccc2cc3ccccc3cc2c1",
            "CC(C)(C)C(C(C)(C)C)C(C)(C)C",
        ] {
            let g = parse_smiles(smi).unwrap();
            let reference = canonical_smiles(&g, false).unwrap();
            let mut order: Vec<usize> = (0..g.len()).collect();
            for _ in 0..100 {
                order.shuffle(&mut rng);
                let p = g.permuted(&order);
                assert_eq!(canonical_smiles(&p, false).unwrap(), reference, "{smi}");
            }
        }
    }
}
