//! Mechanism prediction from a single-step sampler: frequency-ranked step
//! outcomes, greedy rollout and beam search over pathways.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bematrix::{reconstruct_graph_with, BEMatrix};
use crate::chem::{canonical_smiles_with, PeriodicTable};
use crate::flowcore::{euler_integrate, sample_noise, FlowConfig, VectorField};
use crate::postprocess::{discretize, Discretized, FailureMode, PostConfig};

/// One distinct product among the samples of a step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    /// Canonical SMILES, maps stripped.
    pub product: String,
    /// Matrix of the first sample that produced this product.
    pub be: BEMatrix,
    pub frequency: usize,
}

/// Everything learned from sampling one state `samples` times.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDistribution {
    pub samples: usize,
    /// Valid outcomes, most frequent first, ties by product string.
    pub outcomes: Vec<StepOutcome>,
    pub invalid: usize,
    pub failures: BTreeMap<FailureMode, usize>,
}

impl StepDistribution {
    pub fn top(&self) -> Option<&StepOutcome> {
        self.outcomes.first()
    }

    /// Group per-sample results (in sample order) into ranked outcomes.
    pub fn from_samples(samples: Vec<Result<(String, BEMatrix), FailureMode>>) -> Self {
        let total = samples.len();
        let mut by_product: HashMap<String, StepOutcome> = HashMap::new();
        let mut invalid = 0;
        let mut failures = BTreeMap::new();
        for s in samples {
            match s {
                Ok((product, be)) => {
                    by_product
                        .entry(product.clone())
                        .or_insert(StepOutcome { product, be, frequency: 0 })
                        .frequency += 1;
                }
                Err(mode) => {
                    invalid += 1;
                    *failures.entry(mode).or_insert(0) += 1;
                }
            }
        }
        let mut outcomes: Vec<StepOutcome> = by_product.into_values().collect();
        outcomes.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.product.cmp(&b.product)));
        StepDistribution { samples: total, outcomes, invalid, failures }
    }
}

/// Anything that proposes next states for a BE matrix.
pub trait StepSampler: Sync {
    fn sample_step(&self, state: &BEMatrix) -> StepDistribution;

    /// Canonical SMILES (maps stripped) of a state; `None` if it does not
    /// reconstruct.
    fn canonical(&self, state: &BEMatrix) -> Option<String> {
        state_smiles(state, PeriodicTable::default_table())
    }
}

pub fn state_smiles(state: &BEMatrix, table: &PeriodicTable) -> Option<String> {
    let g = reconstruct_graph_with(state, table).ok()?;
    canonical_smiles_with(&g, false, table).ok()
}

/// FNV-1a over atom labels and entries; keys the per-state RNG streams.
pub fn state_key(state: &BEMatrix) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for a in state.atoms() {
        eat(&[a.element.0]);
        eat(&a.atom_map.unwrap_or(0).to_le_bytes());
    }
    let n = state.n_atoms();
    for i in 0..n {
        for j in 0..n {
            eat(&state.get(i, j).to_le_bytes());
        }
    }
    h
}

/// Repeated noisy inference with a vector field.
pub struct FlowSampler<'a, F: VectorField> {
    pub field: &'a F,
    pub flow: FlowConfig,
    pub samples: usize,
    pub post: PostConfig,
    pub table: &'a PeriodicTable,
}

impl<F: VectorField> FlowSampler<'_, F> {
    /// One inference: noise the state, integrate, discretize. Sample `index`
    /// draws from its own stream keyed by `(state, seed, index)`.
    pub fn sample_once(&self, state: &BEMatrix, index: usize) -> Discretized {
        let mut rng = ChaCha8Rng::seed_from_u64(state_key(state) ^ self.flow.seed);
        rng.set_stream(index as u64);
        let n = state.n_atoms();
        let mut x = state.to_f64();
        x += sample_noise(state.size(), n, self.flow.sigma, &mut rng).entries();
        let end = euler_integrate(|t, x| self.field.velocity(state, x, t), &x, self.flow.euler_steps);
        match end {
            Ok(x1) => discretize(state, &x1, self.post, self.table),
            Err(e) => {
                log::warn!("integration failed: {e}");
                Discretized {
                    matrix: state.entries().clone(),
                    fix: crate::postprocess::FixStatus::NotApplicable,
                    failure: FailureMode::ChemInvalid,
                    product: None,
                }
            }
        }
    }
}

impl<F: VectorField> FlowSampler<'_, F> {
    /// All `samples` raw inferences for a state, in sample order.
    pub fn sample_all(&self, state: &BEMatrix) -> Vec<Discretized> {
        (0..self.samples).into_par_iter().map(|k| self.sample_once(state, k)).collect()
    }

    /// Rank raw inferences by canonical product.
    pub fn group(&self, samples: Vec<Discretized>) -> StepDistribution {
        let results = samples
            .into_iter()
            .map(|d| match d.product {
                Some((be, g)) => match canonical_smiles_with(&g, false, self.table) {
                    Ok(s) => Ok((s, be)),
                    Err(_) => Err(FailureMode::ChemInvalid),
                },
                None => Err(d.failure),
            })
            .collect();
        StepDistribution::from_samples(results)
    }
}

impl<F: VectorField> StepSampler for FlowSampler<'_, F> {
    fn sample_step(&self, state: &BEMatrix) -> StepDistribution {
        self.group(self.sample_all(state))
    }

    fn canonical(&self, state: &BEMatrix) -> Option<String> {
        state_smiles(state, self.table)
    }
}

/// One transition of a pathway.
#[derive(Clone, Debug, PartialEq)]
pub struct PathwayStep {
    pub reactants: String,
    pub products: String,
    pub frequency: usize,
    pub samples: usize,
    /// State after the step.
    pub state: BEMatrix,
}

impl PathwayStep {
    pub fn is_identity(&self) -> bool {
        self.reactants == self.products
    }
}

/// A partial or finished mechanism.
#[derive(Clone, Debug, PartialEq)]
pub struct Pathway {
    /// Steps in order; a finished pathway ends with its identity pseudo-step.
    pub steps: Vec<PathwayStep>,
    /// Sum of `ln(frequency / samples)` over the steps.
    pub score: f64,
    pub terminal: bool,
    /// Stopped by the depth limit rather than by termination.
    pub exhausted: bool,
}

impl Pathway {
    /// Products of the real (non-identity) steps.
    pub fn products(&self) -> Vec<String> {
        self.steps.iter().filter(|s| !s.is_identity()).map(|s| s.products.clone()).collect()
    }

    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    /// Text block: a header with rank and score, then one
    /// `reactants>>products (f/S)` line per step.
    pub fn render(&self, rank: usize) -> String {
        let mut s = format!("pathway {rank}\tscore {:.6}", self.score);
        if self.terminal {
            s.push_str("\tterminal");
        }
        if self.exhausted {
            s.push_str("\texhausted");
        }
        s.push('\n');
        for st in &self.steps {
            let _ = writeln!(s, "{}>>{} ({}/{})", st.reactants, st.products, st.frequency, st.samples);
        }
        s
    }
}

struct Node {
    state: BEMatrix,
    smiles: String,
    path: Pathway,
}

fn tie_key(p: &Pathway) -> Vec<String> {
    p.products()
}

/// Level-synchronous beam search.
///
/// Each level samples every live node once. A node whose top outcome is the
/// node itself retires as terminal; otherwise its `width` best non-identity
/// outcomes become children scored by cumulative log relative frequency, and
/// the `width` best children over the whole level survive. `depth` bounds the
/// number of levels. Nodes still alive at the end, or without any valid
/// outcome, are returned flagged as exhausted.
pub fn beam_search<S: StepSampler>(sampler: &S, root: &BEMatrix, width: usize, depth: usize) -> Vec<Pathway> {
    let width = width.max(1);
    let Some(root_smiles) = sampler.canonical(root) else {
        return Vec::new();
    };
    let cache: Mutex<HashMap<BEMatrix, StepDistribution>> = Mutex::new(HashMap::new());
    let lookup = |state: &BEMatrix| -> StepDistribution {
        if let Some(d) = cache.lock().expect("cache lock").get(state) {
            return d.clone();
        }
        let d = sampler.sample_step(state);
        cache.lock().expect("cache lock").insert(state.clone(), d.clone());
        d
    };
    let mut live = vec![Node {
        state: root.clone(),
        smiles: root_smiles,
        path: Pathway { steps: Vec::new(), score: 0.0, terminal: false, exhausted: false },
    }];
    let mut done: Vec<Pathway> = Vec::new();
    for _level in 0..depth.max(1) {
        if live.is_empty() {
            break;
        }
        let dists: Vec<StepDistribution> = live.par_iter().map(|n| lookup(&n.state)).collect();
        let mut children: Vec<Node> = Vec::new();
        for (node, dist) in live.into_iter().zip(dists) {
            let s = dist.samples.max(1) as f64;
            match dist.top() {
                None => {
                    let mut p = node.path;
                    p.exhausted = true;
                    done.push(p);
                }
                Some(top) if top.product == node.smiles => {
                    let mut p = node.path;
                    p.score += (top.frequency as f64 / s).ln();
                    p.steps.push(PathwayStep {
                        reactants: node.smiles.clone(),
                        products: node.smiles.clone(),
                        frequency: top.frequency,
                        samples: dist.samples,
                        state: node.state.clone(),
                    });
                    p.terminal = true;
                    done.push(p);
                }
                Some(_) => {
                    for o in dist.outcomes.iter().take(width).filter(|o| o.product != node.smiles) {
                        let mut p = node.path.clone();
                        p.score += (o.frequency as f64 / s).ln();
                        p.steps.push(PathwayStep {
                            reactants: node.smiles.clone(),
                            products: o.product.clone(),
                            frequency: o.frequency,
                            samples: dist.samples,
                            state: o.be.clone(),
                        });
                        children.push(Node { state: o.be.clone(), smiles: o.product.clone(), path: p });
                    }
                }
            }
        }
        children.sort_by(|a, b| {
            b.path.score.total_cmp(&a.path.score).then_with(|| tie_key(&a.path).cmp(&tie_key(&b.path)))
        });
        children.truncate(width);
        live = children;
    }
    for node in live {
        let mut p = node.path;
        p.exhausted = true;
        done.push(p);
    }
    done.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| tie_key(a).cmp(&tie_key(b))));
    done
}

/// Follow the most frequent outcome until the state maps onto itself or
/// `max_depth` levels are used.
pub fn rollout<S: StepSampler>(sampler: &S, root: &BEMatrix, max_depth: usize) -> Option<Pathway> {
    beam_search(sampler, root, 1, max_depth).into_iter().next()
}

/// A sampler that replays fixed distributions, keyed by the canonical SMILES
/// of the state. States without an entry map onto themselves. Useful for
/// exercising search and metrics against known answers.
#[derive(Clone, Debug, Default)]
pub struct ScriptedSampler {
    pub samples: usize,
    pub table: HashMap<String, Vec<(BEMatrix, usize)>>,
    pub invalid: HashMap<String, usize>,
}

impl ScriptedSampler {
    pub fn new(samples: usize) -> Self {
        ScriptedSampler { samples, table: HashMap::new(), invalid: HashMap::new() }
    }

    /// Register outcomes (matrix, count) for `state`; counts plus the invalid
    /// count must not exceed `samples`.
    pub fn insert(&mut self, state: &BEMatrix, outcomes: Vec<(BEMatrix, usize)>, invalid: usize) {
        let key = state_smiles(state, PeriodicTable::default_table()).expect("scripted state reconstructs");
        self.table.insert(key.clone(), outcomes);
        self.invalid.insert(key, invalid);
    }
}

impl StepSampler for ScriptedSampler {
    fn sample_step(&self, state: &BEMatrix) -> StepDistribution {
        let table = PeriodicTable::default_table();
        let key = state_smiles(state, table).unwrap_or_default();
        let mut samples = Vec::new();
        match self.table.get(&key) {
            Some(outs) => {
                for (be, count) in outs {
                    let s = state_smiles(be, table).expect("scripted outcome reconstructs");
                    for _ in 0..*count {
                        samples.push(Ok((s.clone(), be.clone())));
                    }
                }
                for _ in 0..self.invalid.get(&key).copied().unwrap_or(0) {
                    samples.push(Err(FailureMode::ChemInvalid));
                }
            }
            None => {
                for _ in 0..self.samples {
                    samples.push(Ok((key.clone(), state.clone())));
                }
            }
        }
        let mut d = StepDistribution::from_samples(samples);
        d.samples = self.samples;
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bematrix::build_be;
    use crate::chem::parse_smiles;

    fn be(smi: &str) -> BEMatrix {
        build_be(&[parse_smiles(smi).unwrap()], None).unwrap()
    }

    #[test]
    fn ranking_breaks_ties_lexicographically() {
        let a = be("[OH-:1].[H:2][Cl:3]");
        let b = be("[OH:1][H:2].[Cl-:3]");
        let d = StepDistribution::from_samples(vec![
            Ok(("B".into(), b.clone())),
            Ok(("A".into(), a.clone())),
            Err(FailureMode::NegativeOnly),
        ]);
        assert_eq!(d.outcomes[0].product, "A");
        assert_eq!(d.invalid, 1);
        assert_eq!(d.outcomes.iter().map(|o| o.frequency).sum::<usize>() + d.invalid, 3);
    }

    #[test]
    fn cyclic_script_hits_depth_limit() {
        let a = be("[OH-:1].[H:2][Cl:3]");
        let b = be("[OH:1][H:2].[Cl-:3]");
        let mut s = ScriptedSampler::new(4);
        s.insert(&a, vec![(b.clone(), 4)], 0);
        s.insert(&b, vec![(a.clone(), 4)], 0);
        let p = rollout(&s, &a, 5).unwrap();
        assert!(p.exhausted && !p.terminal);
        assert_eq!(p.steps.len(), 5);
    }

    #[test]
    fn stable_input_is_terminal_at_depth_one() {
        let a = be("O");
        let s = ScriptedSampler::new(8);
        let p = rollout(&s, &a, 9).unwrap();
        assert!(p.terminal);
        assert_eq!(p.depth(), 1);
        assert!(p.products().is_empty());
        assert_eq!(p.score, 0.0);
        assert!(p.render(1).contains("O>>O (8/8)"));
    }
}
