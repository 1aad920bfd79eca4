use crate::chem::graph::{BondOrder, MolGraph};
use crate::chem::periodic::PeriodicTable;
use crate::chem::valence::needs_pi_bond;
use crate::error::ChemError;

const SEARCH_LIMIT: usize = 1_000_000;

pub fn kekulize(mol: &MolGraph) -> Result<MolGraph, ChemError> {
    kekulize_with(mol, PeriodicTable::default_table())
}

/// Replace aromatic bonds by alternating single/double bonds.
///
/// The atoms that need a pi bond must be perfectly matched over aromatic
/// bonds. The search always extends the most constrained atom first (ties by
/// lowest index) and tries partners by ascending index, so the result is
/// deterministic for a given atom order.
pub fn kekulize_with(mol: &MolGraph, table: &PeriodicTable) -> Result<MolGraph, ChemError> {
    let has_aromatic = mol.atoms().iter().any(|a| a.aromatic)
        || mol.bonds().iter().any(|b| b.order == BondOrder::Aromatic);
    if !has_aromatic {
        return Ok(mol.clone());
    }
    let n = mol.len();
    let need: Vec<bool> = (0..n).map(|i| needs_pi_bond(mol, i, table)).collect();
    // candidate partners per atom: (neighbour, bond), ascending neighbour
    let mut options: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for i in 0..n {
        if !need[i] {
            continue;
        }
        for &(j, b) in mol.neighbors(i) {
            if need[j] && mol.bonds()[b].order == BondOrder::Aromatic {
                options[i].push((j, b));
            }
        }
        options[i].sort_unstable();
    }
    let mut partner: Vec<Option<usize>> = vec![None; n];
    let mut chosen: Vec<usize> = Vec::new();
    let mut budget = SEARCH_LIMIT;
    if !search(&need, &options, &mut partner, &mut chosen, &mut budget) {
        let reason = if budget == 0 {
            "search limit exceeded".to_string()
        } else {
            let open: Vec<usize> = (0..n).filter(|&i| need[i]).collect();
            format!("no perfect matching over pi atoms {open:?}")
        };
        return Err(ChemError::Kekulization(reason));
    }
    let mut out = mol.clone();
    for (idx, bond) in mol.bonds().iter().enumerate() {
        if bond.order == BondOrder::Aromatic {
            out.set_bond_order(idx, BondOrder::Single);
        }
    }
    for b in chosen {
        out.set_bond_order(b, BondOrder::Double);
    }
    for a in out.atoms_mut() {
        a.aromatic = false;
    }
    Ok(out)
}

fn search(
    need: &[bool],
    options: &[Vec<(usize, usize)>],
    partner: &mut [Option<usize>],
    chosen: &mut Vec<usize>,
    budget: &mut usize,
) -> bool {
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    // most constrained unmatched atom
    let mut pick: Option<(usize, usize)> = None;
    for i in 0..need.len() {
        if !need[i] || partner[i].is_some() {
            continue;
        }
        let avail = options[i].iter().filter(|&&(j, _)| partner[j].is_none()).count();
        if avail == 0 {
            return false;
        }
        if pick.is_none_or(|(_, best)| avail < best) {
            pick = Some((i, avail));
        }
    }
    let Some((i, _)) = pick else {
        return true;
    };
    for &(j, b) in &options[i] {
        if partner[j].is_some() {
            continue;
        }
        partner[i] = Some(j);
        partner[j] = Some(i);
        chosen.push(b);
        if search(need, options, partner, chosen, budget) {
            return true;
        }
        chosen.pop();
        partner[i] = None;
        partner[j] = None;
        if *budget == 0 {
            return false;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn doubles(g: &MolGraph) -> usize {
        g.bonds().iter().filter(|b| b.order == BondOrder::Double).count()
    }

    #[test]
    fn benzene_alternates() {
        let k = kekulize(&parse_smiles("c1ccccc1").unwrap()).unwrap();
        assert_eq!(doubles(&k), 3);
        for i in 0..6 {
            let d = k
                .neighbors(i)
                .iter()
                .filter(|&&(_, b)| k.bonds()[b].order == BondOrder::Double)
                .count();
            assert_eq!(d, 1);
        }
        assert!(k.atoms().iter().all(|a| !a.aromatic && a.radical_electrons == 0));
    }

    #[test]
    fn naphthalene_fusion_atoms_have_one_double_bond() {
        let k = kekulize(&parse_smiles("c1ccc2ccccc2c1").unwrap()).unwrap();
        assert_eq!(doubles(&k), 5);
        for i in 0..10 {
            let d = k
                .neighbors(i)
                .iter()
                .filter(|&&(_, b)| k.bonds()[b].order == BondOrder::Double)
                .count();
            assert_eq!(d, 1, "atom {i}");
        }
    }

    #[test]
    fn heteroaromatics() {
        for smi in ["c1cc[nH]c1", "c1ccoc1", "c1ccsc1", "c1ccncc1", "Cn1cccc1", "O=c1cccc[nH]1", "c1cc[cH-]c1"] {
            let k = kekulize(&parse_smiles(smi).unwrap());
            assert!(k.is_ok(), "{smi}: {k:?}");
        }
        assert!(matches!(
            kekulize(&parse_smiles("c1cccc1").unwrap()),
            Err(ChemError::Kekulization(_))
        ));
        assert!(kekulize(&parse_smiles("c1ccnc1").unwrap()).is_err());
    }

    /// Enumerate every subset of aromatic bonds and keep the perfect matchings
    /// of pi atoms; the kekulizer must pick one of them.
    #[test]
    fn pyridinium_matches_brute_force() {
        let g = parse_smiles("c1cc[nH+]cc1").unwrap();
        let t = PeriodicTable::default_table();
        let pi: Vec<bool> = (0..g.len()).map(|i| needs_pi_bond(&g, i, t)).collect();
        assert!(pi.iter().all(|&p| p), "nitrogen participates");
        let arom: Vec<usize> = (0..g.bonds().len())
            .filter(|&b| g.bonds()[b].order == BondOrder::Aromatic)
            .collect();
        let mut valid = Vec::new();
        for mask in 0u32..(1 << arom.len()) {
            let mut deg = vec![0; g.len()];
            for (k, &b) in arom.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    deg[g.bonds()[b].a] += 1;
                    deg[g.bonds()[b].b] += 1;
                }
            }
            if deg.iter().zip(&pi).all(|(&d, &p)| d == usize::from(p)) {
                valid.push(mask);
            }
        }
        assert_eq!(valid.len(), 2);
        let k = kekulize(&g).unwrap();
        let mut got = 0u32;
        for (kk, &b) in arom.iter().enumerate() {
            if k.bonds()[b].order == BondOrder::Double {
                got |= 1 << kk;
            }
        }
        assert!(valid.contains(&got));
    }
}
