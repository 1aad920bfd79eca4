use std::collections::{HashSet, VecDeque};

use crate::chem::graph::MolGraph;

/// A ring as an ordered cycle of atoms plus the set of its bond indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ring {
    pub atoms: Vec<usize>,
    pub bonds: Vec<usize>,
}

/// Smallest set of smallest rings.
///
/// Candidates are the shortest cycle through each ring bond; they are taken in
/// size order while linearly independent over GF(2) until the cycle rank is
/// reached. This is exact for ordinary fused and bridged organic ring systems.
pub fn smallest_rings(mol: &MolGraph) -> Vec<Ring> {
    let nb = mol.bonds().len();
    let ring_bond = mol.ring_bonds();
    let components = mol.components().len();
    let rank = (nb + components).saturating_sub(mol.len());
    if rank == 0 {
        return Vec::new();
    }
    let mut candidates: Vec<Ring> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    for (b, bond) in mol.bonds().iter().enumerate() {
        if !ring_bond[b] {
            continue;
        }
        if let Some(path) = shortest_path_avoiding(mol, bond.a, bond.b, b, &ring_bond) {
            let mut bonds: Vec<usize> = path
                .windows(2)
                .map(|w| {
                    mol.neighbors(w[0])
                        .iter()
                        .find(|&&(n, _)| n == w[1])
                        .map(|&(_, bi)| bi)
                        .expect("path follows bonds")
                })
                .collect();
            bonds.push(b);
            let mut key = bonds.clone();
            key.sort_unstable();
            if seen.insert(key.clone()) {
                candidates.push(Ring { atoms: path, bonds: key });
            }
        }
    }
    candidates.sort_by(|a, b| a.bonds.len().cmp(&b.bonds.len()).then_with(|| a.bonds.cmp(&b.bonds)));

    let words = nb.div_ceil(64);
    let mut basis: Vec<Vec<u64>> = Vec::new();
    let mut out = Vec::new();
    for ring in candidates {
        let mut v = vec![0u64; words];
        for &b in &ring.bonds {
            v[b / 64] |= 1 << (b % 64);
        }
        if reduce(&mut v, &basis) {
            basis.push(v);
            basis.sort_by_key(|row| std::cmp::Reverse(leading_bit(row)));
            out.push(ring);
            if out.len() == rank {
                break;
            }
        }
    }
    out
}

/// Gaussian elimination step over a basis kept in descending-pivot order;
/// returns true when `v` is independent of `basis`.
fn reduce(v: &mut [u64], basis: &[Vec<u64>]) -> bool {
    for row in basis {
        let pivot = leading_bit(row);
        if let Some(p) = pivot {
            if v[p / 64] & (1 << (p % 64)) != 0 {
                for (x, y) in v.iter_mut().zip(row) {
                    *x ^= y;
                }
            }
        }
    }
    v.iter().any(|&w| w != 0)
}

fn leading_bit(v: &[u64]) -> Option<usize> {
    for (i, &w) in v.iter().enumerate().rev() {
        if w != 0 {
            return Some(i * 64 + 63 - w.leading_zeros() as usize);
        }
    }
    None
}

fn shortest_path_avoiding(
    mol: &MolGraph,
    from: usize,
    to: usize,
    banned: usize,
    ring_bond: &[bool],
) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; mol.len()];
    let mut queue = VecDeque::new();
    prev[from] = from;
    queue.push_back(from);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        let mut nbrs: Vec<(usize, usize)> = mol.neighbors(u).to_vec();
        nbrs.sort_unstable();
        for (v, b) in nbrs {
            if b == banned || !ring_bond[b] || prev[v] != usize::MAX {
                continue;
            }
            prev[v] = u;
            queue.push_back(v);
        }
    }
    if prev[to] == usize::MAX {
        return None;
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn sizes(smi: &str) -> Vec<usize> {
        let mut s: Vec<usize> = smallest_rings(&parse_smiles(smi).unwrap())
            .iter()
            .map(|r| r.atoms.len())
            .collect();
        s.sort_unstable();
        s
    }

    #[test]
    fn ring_sets() {
        assert_eq!(sizes("CCO"), Vec::<usize>::new());
        assert_eq!(sizes("c1ccccc1"), vec![6]);
        assert_eq!(sizes("c1ccc2ccccc2c1"), vec![6, 6]);
        assert_eq!(sizes("C1CC2CCC1C2"), vec![5, 5]);
        assert_eq!(sizes("c1ccc2cc3ccccc3cc2c1"), vec![6, 6, 6]);
        assert_eq!(sizes("C1CC1.C1CCC1"), vec![3, 4]);
    }
}
