//! Writes the bundled toy corpus (`data/toy_corpus.tsv`) from arrow-pushing
//! descriptions of a handful of textbook mechanisms.
//!
//! Arrow syntax, atoms named by map number:
//!   `L a b`    lone pair on a forms a bond a-b
//!   `B a b`    one bond a-b breaks, its electrons go to b
//!   `P a b c`  one bond a-b becomes a bond b-c
//!
//! Run with `cargo run -p beflow --example make_toy_corpus [out.tsv]`.

use beflow::bematrix::{build_be, reconstruct_graph_with, BEMatrix};
use beflow::chem::{canonical_smiles, parse_smiles, MolGraph, PeriodicTable};
use beflow::dataio::{clean, write_corpus, StepRecord};

struct Rx {
    id: String,
    tag: &'static str,
    start: String,
    steps: Vec<&'static str>,
}

fn automap(g: &MolGraph) -> MolGraph {
    let mut next = g.atoms().iter().filter_map(|a| a.atom_map).max().unwrap_or(0).max(20);
    let mut atoms = g.atoms().to_vec();
    for a in atoms.iter_mut().filter(|a| a.atom_map.is_none() && !a.element.is_hydrogen()) {
        next += 1;
        a.atom_map = Some(next);
    }
    MolGraph::new(atoms, g.bonds().to_vec()).expect("same bonds")
}

fn index_of(be: &BEMatrix, map: u32) -> usize {
    be.atoms().iter().position(|a| a.atom_map == Some(map)).unwrap_or_else(|| panic!("no atom with map {map}"))
}

fn apply(be: &BEMatrix, arrows: &str) -> BEMatrix {
    let mut m = be.entries().clone();
    for arrow in arrows.split(';') {
        let f: Vec<&str> = arrow.split_whitespace().collect();
        let idx: Vec<usize> = f[1..].iter().map(|s| index_of(be, s.parse().expect("map number"))).collect();
        let bond = |m: &mut ndarray::Array2<i32>, a: usize, b: usize, d: i32| {
            m[[a, b]] += d;
            m[[b, a]] += d;
        };
        match (f[0], idx.as_slice()) {
            ("L", &[a, b]) => {
                m[[a, a]] -= 2;
                bond(&mut m, a, b, 2);
            }
            ("B", &[a, b]) => {
                bond(&mut m, a, b, -2);
                m[[b, b]] += 2;
            }
            ("P", &[a, b, c]) => {
                bond(&mut m, a, b, -2);
                bond(&mut m, b, c, 2);
            }
            _ => panic!("bad arrow '{arrow}'"),
        }
    }
    be.with_entries(m).expect("same shape")
}

fn records(rx: &Rx) -> Vec<StepRecord> {
    let table = PeriodicTable::default_table();
    let g = automap(&parse_smiles(&rx.start).unwrap_or_else(|e| panic!("{}: {e}", rx.id)));
    let mut be = build_be(&[g.clone()], None).unwrap();
    let mut text = canonical_smiles(&g, true).unwrap();
    let mut out = Vec::new();
    for (k, arrows) in rx.steps.iter().enumerate() {
        let next = apply(&be, arrows);
        let graph = reconstruct_graph_with(&next, table).unwrap_or_else(|e| panic!("{} step {k}: {e}", rx.id));
        let next_text = canonical_smiles(&graph, true).unwrap();
        out.push(StepRecord::new(&rx.id, k, &format!("{text}>>{next_text}"), rx.tag));
        be = build_be(&[graph], None).unwrap();
        text = next_text;
    }
    out.push(StepRecord::new(&rx.id, rx.steps.len(), &format!("{text}>>{text}"), "stable"));
    out
}

fn reactions() -> Vec<Rx> {
    let mut v = Vec::new();
    let mut add = |id: String, tag: &'static str, start: String, steps: Vec<&'static str>| {
        v.push(Rx { id, tag, start, steps });
    };

    // acid (H:2 on atom 3) + base (atom 1)
    let acids = [
        "[Cl:3][H:2]",
        "[Br:3][H:2]",
        "CC(=O)[O:3][H:2]",
        "O=C[O:3][H:2]",
        "CCC(=O)[O:3][H:2]",
        "N#[C:3][H:2]",
        "c1ccccc1[O:3][H:2]",
    ];
    let bases = ["[OH-:1]", "C[O-:1]", "CC[O-:1]", "CC(C)(C)[O-:1]", "C[N:1](C)C"];
    let pairs = [(0, 0), (0, 4), (1, 1), (1, 3), (2, 0), (2, 2), (2, 4), (3, 1), (4, 3), (4, 0), (5, 0), (5, 2), (6, 0), (6, 3)];
    for (k, &(a, b)) in pairs.iter().enumerate() {
        add(format!("pt{k:02}"), "proton_transfer", format!("{}.{}", acids[a], bases[b]), vec!["L 1 2; B 2 3"]);
    }

    // nucleophile (1) + carbon (2) bearing leaving group (3)
    let nucs = ["[C-:1]#N", "[OH-:1]", "C[O-:1]", "CC[O-:1]", "[SH-:1]", "[I-:1]", "C[S-:1]"];
    let subs = [
        "[CH3:2][Br:3]",
        "[CH3:2][I:3]",
        "C[CH2:2][Br:3]",
        "CC[CH2:2][Br:3]",
        "[CH3:2][Cl:3]",
        "CCC[CH2:2][Br:3]",
        "C=C[CH2:2][Br:3]",
        "c1ccccc1[CH2:2][Br:3]",
    ];
    let pairs = [
        (0, 0), (0, 2), (0, 7), (1, 0), (1, 3), (2, 4), (2, 5), (3, 0),
        (3, 6), (4, 1), (4, 2), (5, 0), (5, 3), (6, 4), (6, 7), (1, 6),
    ];
    for (k, &(n, s)) in pairs.iter().enumerate() {
        add(format!("sn2_{k:02}"), "sn2", format!("{}.{}", nucs[n], subs[s]), vec!["L 1 2; B 2 3"]);
    }

    // base (1) takes the unique beta H (2) from C3; C4 loses X (5)
    let subs = [
        "C[CH:4]([Br:5])[C:3]([H:2])(C)C",
        "C[C:4](C)([Br:5])[C:3]([H:2])(C)C",
        "CC[CH:4]([Br:5])[C:3]([H:2])(C)C",
        "C[CH:4]([Cl:5])[C:3]([H:2])(C)C",
        "[Br:5][CH:4]1CCCC[C:3]1([H:2])C",
    ];
    let bases = ["[OH-:1]", "CC[O-:1]", "CC(C)(C)[O-:1]"];
    let pairs = [(0, 0), (0, 2), (1, 1), (1, 2), (2, 0), (2, 1), (3, 2), (3, 1), (4, 2), (4, 0)];
    for (k, &(s, b)) in pairs.iter().enumerate() {
        add(format!("e2_{k:02}"), "e2", format!("{}.{}", subs[s], bases[b]), vec!["L 1 2; P 2 3 4; B 4 5"]);
    }

    // one substrate, two outcomes
    let fork = "CC[O-:1].[Br:5][CH2:4][C:3]([H:2])(C)C".to_string();
    add("fork_sn2".into(), "sn2", fork.clone(), vec!["L 1 4; B 4 5"]);
    add("fork_e2".into(), "e2", fork, vec!["L 1 2; P 2 3 4; B 4 5"]);

    // cyanide adds to C2=O3, then O3 takes H4 from HCN (C5)
    let carbonyls = [
        "C[CH:2]=[O:3]",
        "CC[CH:2]=[O:3]",
        "C[C:2](C)=[O:3]",
        "CC[C:2](C)=[O:3]",
        "[CH2:2]=[O:3]",
        "c1ccccc1[CH:2]=[O:3]",
        "CC(C)[CH:2]=[O:3]",
        "[O:3]=[C:2]1CCCCC1",
    ];
    for (k, c) in carbonyls.iter().enumerate() {
        add(
            format!("cyanohydrin{k}"),
            "addition",
            format!("{c}.[C-:1]#N.N#[C:5][H:4]"),
            vec!["L 1 2; B 2 3", "L 3 4; B 4 5"],
        );
    }

    // hydroxide (O1-H5) attacks ester C2, alkoxide O4 leaves, then takes H5
    let esters = [
        "C[C:2](=[O:3])[O:4]C",
        "C[C:2](=[O:3])[O:4]CC",
        "CC[C:2](=[O:3])[O:4]C",
        "CC[C:2](=[O:3])[O:4]CC",
        "[CH:2](=[O:3])[O:4]C",
        "c1ccccc1[C:2](=[O:3])[O:4]C",
        "C[C:2](=[O:3])[O:4]C(C)C",
        "CCC[C:2](=[O:3])[O:4]C",
    ];
    for (k, e) in esters.iter().enumerate() {
        add(
            format!("ester{k}"),
            "acyl_substitution",
            format!("{e}.[O-:1][H:5]"),
            vec!["L 1 2; B 2 3", "L 3 2; B 2 4", "L 4 5; B 5 1"],
        );
    }

    // amine N1 (H6) attacks acid chloride C2, chloride (4) leaves,
    // trimethylamine (5) removes H6
    let amines = ["C[N:1]([H:6])C", "CC[N:1]([H:6])CC", "[N:1]1([H:6])CCCC1"];
    let chlorides = ["C[C:2](=[O:3])[Cl:4]", "CC[C:2](=[O:3])[Cl:4]", "c1ccccc1[C:2](=[O:3])[Cl:4]"];
    let pairs = [(0, 0), (0, 1), (1, 0), (2, 0), (2, 2), (0, 2)];
    for (k, &(a, c)) in pairs.iter().enumerate() {
        add(
            format!("amide{k}"),
            "acyl_substitution",
            format!("{}.{}.C[N:5](C)C", chlorides[c], amines[a]),
            vec!["L 1 2; B 2 3", "L 3 2; B 2 4", "L 5 6; B 6 1"],
        );
    }

    // tert-butoxide removes the unique alpha H (2) from C4, the carbanion
    // then displaces X (6) from C5
    let ketones = ["C[C:3](=O)[C:4]([H:2])(C)C", "c1ccccc1C(=O)[C:4]([H:2])(C)C", "CCC(=O)[C:4]([H:2])(C)C"];
    let electrophiles = ["[CH3:5][I:6]", "C[CH2:5][Br:6]", "C=C[CH2:5][Br:6]"];
    let pairs = [(0, 0), (0, 1), (1, 0), (1, 2), (2, 0), (2, 2)];
    for (k, &(kt, el)) in pairs.iter().enumerate() {
        add(
            format!("enolate{k}"),
            "alkylation",
            format!("{}.{}.CC(C)(C)[O-:1]", ketones[kt], electrophiles[el]),
            vec!["L 1 2; B 2 4", "L 4 5; B 5 6"],
        );
    }

    for (k, s) in ["CCO", "CC(=O)O", "c1ccccc1", "CC#N"].iter().enumerate() {
        add(format!("stable{k}"), "stable", s.to_string(), vec![]);
    }
    v
}

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "crates/core/data/toy_corpus.tsv".into());
    let recs: Vec<StepRecord> = reactions().iter().flat_map(records).collect();
    let report = clean(&recs, PeriodicTable::default_table());
    for (r, why) in &report.rejected {
        eprintln!("rejected {} {}: {why}\n  {}", r.reaction_id, r.step_index, r.rxn_smiles);
    }
    assert!(report.rejected.is_empty(), "generated corpus must clean");
    std::fs::write(&out, write_corpus(&recs)).expect("write corpus");
    eprintln!("{} reactions, {} steps -> {out}", reactions().len(), recs.len());
}
