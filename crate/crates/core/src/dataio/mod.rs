//! Elementary-step corpora: loading, cleaning, splitting, acid/base partner
//! selection and spectator duplication.

mod pka;

pub use pka::{select_partner, Need, Partner, PkaEntry, PkaTable, ALPHA_PROTON_PKA};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bematrix::{build_be_with, check_conservation, reconstruct_with, BEMatrix};
use crate::chem::{
    canonical_smiles_with, kekulize_with, parse_smiles_with, split_reaction, Element, MolGraph, PeriodicTable,
};
use crate::error::DataError;

/// One line of a corpus: a mapped elementary step within a reaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub reaction_id: String,
    pub step_index: usize,
    pub rxn_smiles: String,
    pub tag: String,
    /// 1-based source line, 0 when built in memory.
    pub line: usize,
}

impl StepRecord {
    pub fn new(reaction_id: &str, step_index: usize, rxn_smiles: &str, tag: &str) -> Self {
        StepRecord {
            reaction_id: reaction_id.to_string(),
            step_index,
            rxn_smiles: rxn_smiles.to_string(),
            tag: tag.to_string(),
            line: 0,
        }
    }

    pub fn to_tsv(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.reaction_id, self.step_index, self.rxn_smiles, self.tag)
    }
}

pub const CORPUS_HEADER: &str = "reaction_id\tstep_index\trxn_smiles\ttag";

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub records: Vec<StepRecord>,
    /// (line, message) for each skipped line.
    pub malformed: Vec<(usize, String)>,
}

/// Parse corpus text: tab-separated `reaction_id, step_index, rxn_smiles,
/// tag`. An optional header line, blank lines and `#` comments are skipped;
/// malformed lines are recorded and skipped.
pub fn parse_corpus(text: &str) -> Corpus {
    let mut corpus = Corpus::default();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.trim_end_matches('\r');
        if body.trim().is_empty() || body.starts_with('#') || (line == 1 && body.starts_with("reaction_id\t")) {
            continue;
        }
        match parse_line(body) {
            Ok(mut r) => {
                r.line = line;
                corpus.records.push(r);
            }
            Err(msg) => {
                log::warn!("corpus line {line}: {msg}");
                corpus.malformed.push((line, msg));
            }
        }
    }
    corpus
}

fn parse_line(body: &str) -> Result<StepRecord, String> {
    let f: Vec<&str> = body.split('\t').collect();
    if f.len() != 3 && f.len() != 4 {
        return Err(format!("expected 4 tab-separated fields, found {}", f.len()));
    }
    if f[0].is_empty() {
        return Err("empty reaction_id".into());
    }
    let step_index = f[1].trim().parse().map_err(|_| format!("bad step_index '{}'", f[1]))?;
    split_reaction(f[2].trim()).map_err(|e| e.to_string())?;
    Ok(StepRecord {
        reaction_id: f[0].to_string(),
        step_index,
        rxn_smiles: f[2].trim().to_string(),
        tag: f.get(3).map(|t| t.trim().to_string()).unwrap_or_default(),
        line: 0,
    })
}

pub fn load_corpus(path: &Path) -> Result<Corpus, DataError> {
    Ok(parse_corpus(&std::fs::read_to_string(path)?))
}

pub fn write_corpus(records: &[StepRecord]) -> String {
    let mut s = String::from(CORPUS_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.to_tsv());
        s.push('\n');
    }
    s
}

/// Why a record was not accepted.
#[derive(Clone, Debug, PartialEq)]
pub enum RejectReason {
    Parse(String),
    Mapping(String),
    Kekulization(String),
    BeValidity(String),
    ChemValidity(String),
    ElectronSum { reactants: i64, products: i64 },
    /// Another step of the same reaction failed, or the step list is broken.
    PathwayIntegrity(String),
}

impl RejectReason {
    pub fn kind(&self) -> &'static str {
        match self {
            RejectReason::Parse(_) => "parse",
            RejectReason::Mapping(_) => "mapping",
            RejectReason::Kekulization(_) => "kekulization",
            RejectReason::BeValidity(_) => "be_validity",
            RejectReason::ChemValidity(_) => "chem_validity",
            RejectReason::ElectronSum { .. } => "electron_sum",
            RejectReason::PathwayIntegrity(_) => "pathway_integrity",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::ElectronSum { reactants, products } => {
                write!(f, "electron_sum: {reactants} vs {products}")
            }
            RejectReason::Parse(m)
            | RejectReason::Mapping(m)
            | RejectReason::Kekulization(m)
            | RejectReason::BeValidity(m)
            | RejectReason::ChemValidity(m)
            | RejectReason::PathwayIntegrity(m) => write!(f, "{}: {m}", self.kind()),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct CleanReport {
    pub accepted: Vec<StepRecord>,
    pub rejected: Vec<(StepRecord, RejectReason)>,
}

impl CleanReport {
    pub fn counts(&self) -> BTreeMap<&'static str, usize> {
        let mut c = BTreeMap::new();
        for (_, r) in &self.rejected {
            *c.entry(r.kind()).or_insert(0) += 1;
        }
        c
    }
}

fn map_elements(g: &MolGraph) -> Result<BTreeMap<u32, Element>, String> {
    g.check_unique_maps().map_err(|e| e.to_string())?;
    let mut out = BTreeMap::new();
    for (i, a) in g.atoms().iter().enumerate() {
        match a.atom_map {
            Some(m) => {
                out.insert(m, a.element);
            }
            None if !a.element.is_hydrogen() => return Err(format!("heavy atom {i} has no map")),
            None => {}
        }
    }
    Ok(out)
}

/// Build both matrices of a step after every per-step check.
pub fn check_step(rxn: &str, table: &PeriodicTable) -> Result<(BEMatrix, BEMatrix), RejectReason> {
    let (lhs, rhs) = split_reaction(rxn).map_err(|e| RejectReason::Parse(e.to_string()))?;
    let r = parse_smiles_with(lhs, table).map_err(|e| RejectReason::Parse(e.to_string()))?;
    let p = parse_smiles_with(rhs, table).map_err(|e| RejectReason::Parse(e.to_string()))?;
    let mr = map_elements(&r).map_err(|m| RejectReason::Mapping(format!("reactants: {m}")))?;
    let mp = map_elements(&p).map_err(|m| RejectReason::Mapping(format!("products: {m}")))?;
    if mr != mp {
        return Err(RejectReason::Mapping("maps or mapped elements differ between sides".into()));
    }
    for g in [&r, &p] {
        kekulize_with(g, table).map_err(|e| RejectReason::Kekulization(e.to_string()))?;
    }
    let x0 = build_be_with(&[r], None, table).map_err(|e| RejectReason::BeValidity(e.to_string()))?;
    let x1 = build_be_with(&[p], None, table).map_err(|e| RejectReason::BeValidity(e.to_string()))?;
    if x0.atoms() != x1.atoms() {
        return Err(RejectReason::Mapping("unmapped hydrogens differ between sides".into()));
    }
    for (side, m) in [("reactants", &x0), ("products", &x1)] {
        if !m.is_symmetric() || m.entries().iter().any(|&v| v < 0) {
            return Err(RejectReason::BeValidity(format!("{side} matrix not symmetric and nonnegative")));
        }
        reconstruct_with(m, table).map_err(|e| RejectReason::ChemValidity(format!("{side}: {e}")))?;
    }
    if x0.total() != x1.total() {
        return Err(RejectReason::ElectronSum { reactants: x0.total(), products: x1.total() });
    }
    Ok((x0, x1))
}

/// Run every check; a reaction with any failing step loses all its steps.
pub fn clean(records: &[StepRecord], table: &PeriodicTable) -> CleanReport {
    let verdicts: Vec<Option<RejectReason>> =
        records.par_iter().map(|r| check_step(&r.rxn_smiles, table).err()).collect();
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (k, r) in records.iter().enumerate() {
        groups.entry(r.reaction_id.as_str()).or_default().push(k);
    }
    let mut broken: HashMap<&str, String> = HashMap::new();
    for (id, members) in &groups {
        if let Some(&k) = members.iter().find(|&&k| verdicts[k].is_some()) {
            broken.insert(id, format!("step {} of reaction {id} failed", records[k].step_index));
            continue;
        }
        let mut idx: Vec<usize> = members.iter().map(|&k| records[k].step_index).collect();
        idx.sort_unstable();
        if idx.windows(2).any(|w| w[0] == w[1]) {
            broken.insert(id, format!("reaction {id} has duplicate step indices"));
        }
    }
    let mut report = CleanReport::default();
    for (rec, verdict) in records.iter().zip(verdicts) {
        match (verdict, broken.get(rec.reaction_id.as_str())) {
            (Some(reason), _) => report.rejected.push((rec.clone(), reason)),
            (None, Some(why)) => report.rejected.push((rec.clone(), RejectReason::PathwayIntegrity(why.clone()))),
            (None, None) => report.accepted.push(rec.clone()),
        }
    }
    report
}

/// Steps grouped by reaction and ordered by step index; reactions in first
/// appearance order.
pub fn group_pathways(records: &[StepRecord]) -> Vec<(String, Vec<StepRecord>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<StepRecord>> = HashMap::new();
    for r in records {
        if !groups.contains_key(&r.reaction_id) {
            order.push(r.reaction_id.clone());
        }
        groups.entry(r.reaction_id.clone()).or_default().push(r.clone());
    }
    order
        .into_iter()
        .map(|id| {
            let mut steps = groups.remove(&id).expect("grouped");
            steps.sort_by_key(|s| s.step_index);
            (id, steps)
        })
        .collect()
}

/// Partition by reaction id under `ratios` (train, validation, test).
///
/// Reaction ids are sorted, shuffled with `seed` and cut at rounded
/// boundaries; any partition with a positive ratio gets at least one
/// reaction.
pub fn split(records: &[StepRecord], ratios: [f64; 3], seed: u64) -> Result<[Vec<StepRecord>; 3], DataError> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::Ratios(format!("{ratios:?} must be nonnegative and sum to 1")));
    }
    let mut ids: Vec<&str> = records.iter().map(|r| r.reaction_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    let needed = ratios.iter().filter(|&&r| r > 0.0).count();
    if ids.len() < needed.max(2) {
        return Err(DataError::TooFewReactions { needed: needed.max(2), found: ids.len() });
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let mut sizes = [0usize; 3];
    sizes[1] = (ratios[1] * n as f64).round() as usize;
    sizes[2] = (ratios[2] * n as f64).round() as usize;
    for k in 1..3 {
        if ratios[k] > 0.0 {
            sizes[k] = sizes[k].max(1);
        }
    }
    // rounding up the small splits can exceed n; shrink the larger one
    while sizes[1] + sizes[2] + usize::from(ratios[0] > 0.0) > n {
        let k = if sizes[1] > sizes[2] { 1 } else { 2 };
        sizes[k] -= 1;
    }
    sizes[0] = n - sizes[1] - sizes[2];
    let mut part: HashMap<&str, usize> = HashMap::new();
    for (k, id) in ids.iter().enumerate() {
        let p = if k < sizes[0] {
            0
        } else if k < sizes[0] + sizes[1] {
            1
        } else {
            2
        };
        part.insert(id, p);
    }
    let mut out: [Vec<StepRecord>; 3] = Default::default();
    for r in records {
        out[part[r.reaction_id.as_str()]].push(r.clone());
    }
    Ok(out)
}

fn component_counts(side: &str, table: &PeriodicTable) -> Result<BTreeMap<String, usize>, DataError> {
    let g = parse_smiles_with(side, table)?;
    let mut out = BTreeMap::new();
    for c in g.split_components() {
        *out.entry(canonical_smiles_with(&c, false, table)?).or_insert(0) += 1;
    }
    Ok(out)
}

fn max_map(rxn: &str, table: &PeriodicTable) -> Result<u32, DataError> {
    let (l, r) = split_reaction(rxn)?;
    let mut m = 0;
    for side in [l, r] {
        for a in parse_smiles_with(side, table)?.atoms() {
            m = m.max(a.atom_map.unwrap_or(0));
        }
    }
    Ok(m)
}

/// Make a pathway carry enough copies of `species` for a later step.
///
/// Finds the first step whose reactants hold more copies of `species` than
/// the previous step's products did (a fresh equivalent appearing from
/// nowhere), and adds `count` spectator copies with fresh atom maps to both
/// sides of every earlier step. Without such a step the pathway is returned
/// unchanged. Every revised step is re-checked for conservation.
pub fn ensure_equivalents(
    pathway: &[StepRecord],
    species: &str,
    count: usize,
    table: &PeriodicTable,
) -> Result<Vec<StepRecord>, DataError> {
    let mol = parse_smiles_with(species, table)?;
    let key = canonical_smiles_with(&mol, false, table)?;
    let mut consumer = None;
    for k in 1..pathway.len() {
        let (_, prev_products) = split_reaction(&pathway[k - 1].rxn_smiles)?;
        let (reactants, _) = split_reaction(&pathway[k].rxn_smiles)?;
        let before = component_counts(prev_products, table)?.get(&key).copied().unwrap_or(0);
        let now = component_counts(reactants, table)?.get(&key).copied().unwrap_or(0);
        if now > before {
            consumer = Some(k);
            break;
        }
    }
    let Some(consumer) = consumer else {
        return Ok(pathway.to_vec());
    };
    let mut next_map = 0;
    for r in pathway {
        next_map = next_map.max(max_map(&r.rxn_smiles, table)?);
    }
    let mut copies = Vec::with_capacity(count);
    for _ in 0..count {
        let mut g = mol.strip_maps();
        let mut atoms = g.atoms().to_vec();
        for a in atoms.iter_mut().filter(|a| !a.element.is_hydrogen()) {
            next_map += 1;
            a.atom_map = Some(next_map);
        }
        g = MolGraph::new(atoms, g.bonds().to_vec())?;
        copies.push(canonical_smiles_with(&g, true, table)?);
    }
    let extra = copies.join(".");
    let mut out = pathway.to_vec();
    for rec in out.iter_mut().take(consumer) {
        let (l, r) = split_reaction(&rec.rxn_smiles)?;
        rec.rxn_smiles = format!("{l}.{extra}>>{r}.{extra}");
    }
    for (old, new) in pathway.iter().zip(&out).take(consumer) {
        let (a0, a1) = crate::bematrix::build_reaction(&old.rxn_smiles, None)?;
        let (b0, b1) = crate::bematrix::build_reaction(&new.rxn_smiles, None)?;
        let c = check_conservation(&b0, &b1);
        if !c.all() || b0.total() - a0.total() != b1.total() - a1.total() {
            return Err(DataError::ConservationBreach(format!(
                "reaction {} step {}",
                new.reaction_id, new.step_index
            )));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> &'static PeriodicTable {
        PeriodicTable::default_table()
    }

    #[test]
    fn loads_and_skips_malformed() {
        let c = parse_corpus(
            "reaction_id\tstep_index\trxn_smiles\ttag\nr1\t0\t[OH-:1].[H:2][Cl:3]>>[OH:1][H:2].[Cl-:3]\tpt\nr1\tx\tA>>B\tpt\nr2\t0\tCC\tpt\n",
        );
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.malformed.len(), 2);
        assert_eq!(c.malformed[0].0, 3);
        assert!(parse_corpus("").records.is_empty());
    }

    #[test]
    fn clean_accepts_proton_transfer_and_rejects_duplicate_maps() {
        let good = StepRecord::new("r1", 0, "[OH-:1].[H:2][Cl:3]>>[OH:1][H:2].[Cl-:3]", "pt");
        let dup = StepRecord::new("r2", 0, "[OH-:1].[H:1][Cl:3]>>[OH:1][H:1].[Cl-:3]", "pt");
        let rep = clean(&[good.clone(), dup], table());
        assert_eq!(rep.accepted, vec![good]);
        assert_eq!(rep.rejected[0].1.kind(), "mapping");
    }

    #[test]
    fn electron_sum_mismatch() {
        let r = check_step("[OH-:1]>>[OH:1]", table());
        assert_eq!(r.unwrap_err(), RejectReason::ElectronSum { reactants: 10, products: 9 });
    }

    #[test]
    fn pka_pairs() {
        let pka = PkaTable::bundled();
        let pick = select_partner(&["CC(=O)O".to_string()], Need::Acid, 9.0, &pka).unwrap();
        assert_eq!(pick.pka, 4.76);
        assert_eq!(pick.conjugate, "CC([O-])=O");
        assert!(select_partner(&["O".to_string()], Need::Acid, 9.0, &pka).is_none());
        assert!(select_partner(&[], Need::Acid, 9.0, &pka).is_none());
        let base = select_partner(&["O".to_string(), "[OH-]".to_string()], Need::Base, 9.0, &pka).unwrap();
        assert_eq!(base.species, "[OH-]");
        assert!(PkaTable::parse("O\t[O-2]\t3\n", table()).is_err());
    }
}
