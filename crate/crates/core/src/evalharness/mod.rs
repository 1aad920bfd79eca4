//! Validity, conservation, top-k step and pathway accuracy, failure counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::bematrix::{build_be_with, check_conservation, reconstruct_with, BEMatrix};
use crate::chem::{parse_smiles_with, PeriodicTable};
use crate::error::EvalError;
use crate::mechsearch::{beam_search, Pathway, StepDistribution, StepSampler};
use crate::postprocess::FailureMode;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub predictions: usize,
    pub validity_rate: f64,
    pub heavy_atom_rate: f64,
    pub proton_rate: f64,
    pub electron_rate: f64,
    pub cumulative_conservation_rate: f64,
    pub topk_step: BTreeMap<usize, f64>,
    pub topk_pathway: BTreeMap<usize, f64>,
    pub failure_histogram: BTreeMap<FailureMode, usize>,
}

impl MetricsReport {
    /// Merge conservation rates into the report.
    pub fn with_conservation(mut self, c: &ConservationRates) -> Self {
        self.predictions = c.count;
        self.validity_rate = c.validity;
        self.heavy_atom_rate = c.heavy_atoms;
        self.proton_rate = c.protons;
        self.electron_rate = c.electrons;
        self.cumulative_conservation_rate = c.cumulative;
        self
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "predictions           {}", self.predictions);
        let _ = writeln!(s, "validity              {:.4}", self.validity_rate);
        let _ = writeln!(s, "heavy atom conserved  {:.4}", self.heavy_atom_rate);
        let _ = writeln!(s, "protons conserved     {:.4}", self.proton_rate);
        let _ = writeln!(s, "electrons conserved   {:.4}", self.electron_rate);
        let _ = writeln!(s, "all conserved         {:.4}", self.cumulative_conservation_rate);
        for (k, r) in &self.topk_step {
            let _ = writeln!(s, "top-{k} step accuracy   {r:.4}");
        }
        for (k, r) in &self.topk_pathway {
            let _ = writeln!(s, "top-{k} pathway accuracy {r:.4}");
        }
        s.push_str("failure modes\n");
        for (m, c) in &self.failure_histogram {
            let _ = writeln!(s, "  {:<24} {c}", m.name());
        }
        s
    }

    /// One `key<TAB>value` line per metric, in a fixed key order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "predictions\t{}", self.predictions);
        let _ = writeln!(s, "validity_rate\t{}", self.validity_rate);
        let _ = writeln!(s, "heavy_atom_rate\t{}", self.heavy_atom_rate);
        let _ = writeln!(s, "proton_rate\t{}", self.proton_rate);
        let _ = writeln!(s, "electron_rate\t{}", self.electron_rate);
        let _ = writeln!(s, "cumulative_conservation_rate\t{}", self.cumulative_conservation_rate);
        for (k, r) in &self.topk_step {
            let _ = writeln!(s, "top{k}_step\t{r}");
        }
        for (k, r) in &self.topk_pathway {
            let _ = writeln!(s, "top{k}_pathway\t{r}");
        }
        for (m, c) in &self.failure_histogram {
            let _ = writeln!(s, "failure.{}\t{c}", m.name());
        }
        s
    }
}

/// Histogram over the four failure bins; every bin is present, possibly zero.
pub fn failure_histogram<'a, I: IntoIterator<Item = &'a StepDistribution>>(dists: I) -> BTreeMap<FailureMode, usize> {
    let mut h: BTreeMap<FailureMode, usize> =
        FailureMode::ALL.iter().filter(|m| m.is_failure()).map(|&m| (m, 0)).collect();
    for d in dists {
        for (m, c) in &d.failures {
            *h.entry(*m).or_insert(0) += c;
        }
    }
    h
}

/// Fraction of steps whose reference is among the first `k` ranked products.
///
/// `ranked[i]` lists the distinct predicted products for step `i`, best first.
/// Product equality is exact string equality, so both sides must be
/// canonical SMILES with maps stripped.
pub fn step_accuracy(
    ranked: &[Vec<String>],
    references: &[String],
    ks: &[usize],
) -> Result<BTreeMap<usize, f64>, EvalError> {
    if references.len() < ranked.len() {
        return Err(EvalError::MissingReference(references.len()));
    }
    if let Some(i) = references.iter().position(|r| r.is_empty()) {
        return Err(EvalError::MissingReference(i));
    }
    let positions: Vec<Option<usize>> =
        ranked.iter().zip(references).map(|(list, r)| list.iter().position(|p| p == r)).collect();
    Ok(rates_from_positions(&positions, ks))
}

fn rates_from_positions(hits: &[Option<usize>], ks: &[usize]) -> BTreeMap<usize, f64> {
    ks.iter()
        .map(|&k| {
            let count = hits.iter().filter(|p| p.is_some_and(|p| p < k)).count();
            let rate = if hits.is_empty() { 0.0 } else { count as f64 / hits.len() as f64 };
            (k, rate)
        })
        .collect()
}

/// Whether some returned pathway reproduces the reference product sequence.
pub fn pathway_found(pathways: &[Pathway], reference: &[String]) -> bool {
    pathways.iter().any(|p| p.products() == reference)
}

/// A reaction with its recorded mechanism.
#[derive(Clone, Debug)]
pub struct PathwayCase {
    pub reactants: BEMatrix,
    /// Canonical products of each recorded step, in order, without the
    /// identity step.
    pub steps: Vec<String>,
}

/// Smallest beam width (up to `max_width`) whose search recovers each
/// reference, or `None`.
pub fn min_pathway_widths<S: StepSampler>(
    sampler: &S,
    cases: &[PathwayCase],
    max_width: usize,
    depth: usize,
) -> Vec<Option<usize>> {
    cases
        .par_iter()
        .map(|c| (1..=max_width).find(|&w| pathway_found(&beam_search(sampler, &c.reactants, w, depth), &c.steps)))
        .collect()
}

/// A reaction counts at `k` when a search of width at most `k` recovers its
/// whole recorded sequence.
pub fn pathway_accuracy<S: StepSampler>(
    sampler: &S,
    cases: &[PathwayCase],
    ks: &[usize],
    depth: usize,
) -> BTreeMap<usize, f64> {
    let max = ks.iter().copied().max().unwrap_or(0);
    let widths = min_pathway_widths(sampler, cases, max, depth);
    let positions: Vec<Option<usize>> = widths.iter().map(|w| w.map(|w| w - 1)).collect();
    rates_from_positions(&positions, ks)
}

/// A prediction to score against its reactants.
#[derive(Clone, Debug)]
pub enum Prediction {
    /// Text output, e.g. from a sequence model; parsed and rebuilt.
    Smiles(String),
    /// Native matrix output over the reactant atom list.
    Matrix(BEMatrix),
    /// Nothing usable was produced.
    Invalid,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConservationRates {
    pub count: usize,
    pub validity: f64,
    pub heavy_atoms: f64,
    pub protons: f64,
    pub electrons: f64,
    pub cumulative: f64,
}

/// Per-prediction validity and conservation; every rate is over all
/// predictions. Unparseable text conserves nothing. A matrix is compared
/// directly, whether or not it reconstructs.
pub fn conservation_rates(cases: &[(BEMatrix, Prediction)], table: &PeriodicTable) -> ConservationRates {
    let flags: Vec<[bool; 5]> = cases
        .par_iter()
        .map(|(reactant, pred)| {
            let product = match pred {
                Prediction::Invalid => return [false; 5],
                Prediction::Matrix(m) => {
                    let valid = reconstruct_with(m, table).is_ok();
                    (m.clone(), valid)
                }
                Prediction::Smiles(s) => {
                    let built = parse_smiles_with(s, table).map_err(Into::into).and_then(|g| build_be_with(&[g], None, table));
                    match built {
                        Ok(m) => (m, true),
                        Err(_) => return [false; 5],
                    }
                }
            };
            let c = check_conservation(reactant, &product.0);
            [product.1, c.heavy_atoms, c.protons, c.electrons, c.all()]
        })
        .collect();
    let n = flags.len();
    let rate = |k: usize| {
        if n == 0 {
            0.0
        } else {
            flags.iter().filter(|f| f[k]).count() as f64 / n as f64
        }
    };
    ConservationRates {
        count: n,
        validity: rate(0),
        heavy_atoms: rate(1),
        protons: rate(2),
        electrons: rate(3),
        cumulative: rate(4),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bematrix::build_be;
    use crate::chem::parse_smiles;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn reference_first_everywhere() {
        let r = step_accuracy(&[s(&["A", "B"]), s(&["C"])], &s(&["A", "C"]), &[1, 2, 3]).unwrap();
        assert!(r.values().all(|&v| v == 1.0));
    }

    #[test]
    fn reference_second_everywhere() {
        let r = step_accuracy(&[s(&["B", "A"]), s(&["D", "C"])], &s(&["A", "C"]), &[1, 2]).unwrap();
        assert_eq!(r[&1], 0.0);
        assert_eq!(r[&2], 1.0);
    }

    #[test]
    fn missing_reference_is_an_error() {
        assert!(step_accuracy(&[s(&["A"])], &[], &[1]).is_err());
        assert!(step_accuracy(&[s(&["A"])], &s(&[""]), &[1]).is_err());
    }

    #[test]
    fn deleted_atom_shows_in_heavy_rate() {
        let table = PeriodicTable::default_table();
        let r = build_be(&[parse_smiles("CCO").unwrap()], None).unwrap();
        let cases = vec![
            (r.clone(), Prediction::Smiles("OCC".into())),
            (r.clone(), Prediction::Smiles("CC".into())),
            (r.clone(), Prediction::Smiles("C(".into())),
            (r.clone(), Prediction::Matrix(r.clone())),
        ];
        let c = conservation_rates(&cases, table);
        assert_eq!(c.validity, 0.75);
        assert_eq!(c.heavy_atoms, 0.5);
        assert_eq!(c.cumulative, 0.5);
    }

    #[test]
    fn histogram_has_every_bin() {
        let h = failure_histogram(std::iter::empty());
        assert_eq!(h.len(), 4);
        assert!(!h.contains_key(&FailureMode::None));
        let kv = MetricsReport { failure_histogram: h, ..Default::default() }.to_kv();
        assert!(kv.contains("failure.negative_and_asymmetric\t0"));
    }
}
