//! Valence rules shared by the parser, kekulizer, writer and BE reconstruction.

use crate::chem::graph::MolGraph;
use crate::chem::periodic::{ElementInfo, PeriodicTable};

/// Implicit hydrogens on an unbracketed organic-subset atom, or `None` when
/// the explicit bonds already exceed every allowed valence.
pub fn implicit_hydrogens(info: &ElementInfo, aromatic: bool, bond_valence: u32) -> Option<u32> {
    let bonds = bond_valence as i32;
    let max = *info.allowed_valences.last()?;
    if bonds > max {
        return None;
    }
    if aromatic {
        // one valence unit is reserved for the pi system
        let v0 = info.allowed_valences[0];
        return Some((v0 - bonds - 1).max(0) as u32);
    }
    info.allowed_valences
        .iter()
        .find(|&&v| v >= bonds)
        .map(|&v| (v - bonds) as u32)
}

/// Lone (non-bonding) valence electrons given a total valence.
pub fn lone_electrons(info: &ElementInfo, charge: i32, valence: u32) -> i32 {
    info.group_valence_electrons - charge - valence as i32
}

/// Whether aromatic atom `i` must receive one double bond during kekulization:
/// its valence with every aromatic bond counted as single falls short of the
/// smallest allowed valence.
pub fn needs_pi_bond(mol: &MolGraph, i: usize, table: &PeriodicTable) -> bool {
    mol.atom(i).aromatic && needs_pi_bond_plain(mol, i, table)
}

fn default_radicals_raw(info: &ElementInfo, charge: i32, valence: u32) -> u32 {
    let lone = lone_electrons(info, charge, valence);
    if lone > 0 {
        (lone % 2) as u32
    } else {
        0
    }
}

/// Radical electrons implied by valence parity, counting the pending pi bond of
/// aromatic atoms.
pub fn default_radicals(mol: &MolGraph, i: usize, table: &PeriodicTable) -> u32 {
    let atom = mol.atom(i);
    let info = table.info(atom.element);
    let mut valence = mol.valence(i);
    if needs_pi_bond(mol, i, table) {
        valence += 1;
    }
    default_radicals_raw(info, atom.formal_charge, valence)
}

fn needs_pi_bond_plain(mol: &MolGraph, i: usize, table: &PeriodicTable) -> bool {
    let atom = mol.atom(i);
    let info = table.info(atom.element);
    let current = mol.valence(i) as i32;
    info.valence_options(atom.formal_charge)
        .into_iter()
        .find(|&v| v >= current)
        .is_some_and(|target| target > current)
}
