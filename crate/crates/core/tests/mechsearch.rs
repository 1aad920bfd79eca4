use beflow::bematrix::{build_reaction, check_conservation, BEMatrix};
use beflow::chem::PeriodicTable;
use beflow::flowcore::{sample_noise, FlowConfig, VectorField};
use beflow::mechsearch::{beam_search, rollout, state_smiles, FlowSampler, StepSampler};
use beflow::postprocess::PostConfig;
use beflow::FlowError;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus_step(id: &str) -> String {
    include_str!("../data/toy_corpus.tsv")
        .lines()
        .find(|l| l.starts_with(&format!("{id}\t0\t")))
        .map(|l| l.split('\t').nth(2).unwrap().to_string())
        .unwrap()
}

/// Moves every state along one of two fixed deltas, chosen by the sign of the
/// noise on a diagonal entry neither delta touches.
struct Fork {
    x0: BEMatrix,
    a: Array2<f64>,
    b: Array2<f64>,
    probe: usize,
    cut: f64,
}

impl Fork {
    fn new(cut: f64) -> Self {
        let (x0, xa) = build_reaction(&corpus_step("fork_sn2"), None).unwrap();
        let (_, xb) = build_reaction(&corpus_step("fork_e2"), None).unwrap();
        let a = xa.to_f64() - x0.to_f64();
        let b = xb.to_f64() - x0.to_f64();
        let probe = (0..x0.n_atoms()).find(|&i| a[[i, i]] == 0.0 && b[[i, i]] == 0.0).unwrap();
        Fork { x0, a, b, probe, cut }
    }
}

impl VectorField for Fork {
    fn velocity(&self, reactant: &BEMatrix, x: &Array2<f64>, _t: f64) -> Result<Array2<f64>, FlowError> {
        if reactant != &self.x0 {
            return Ok(Array2::zeros(x.dim()));
        }
        let p = self.probe;
        Ok(if x[[p, p]] - self.x0.to_f64()[[p, p]] > self.cut { self.a.clone() } else { self.b.clone() })
    }
}

fn sampler(field: &Fork, sigma: f64, samples: usize) -> FlowSampler<'_, Fork> {
    FlowSampler {
        field,
        flow: FlowConfig { sigma, ..FlowConfig::default() },
        samples,
        post: PostConfig::default(),
        table: PeriodicTable::default_table(),
    }
}

#[test]
fn deterministic_field_gives_one_outcome() {
    let f = Fork::new(0.0);
    let d = sampler(&f, 0.0, 3).sample_step(&f.x0);
    assert_eq!(d.outcomes.len(), 1);
    assert_eq!(d.outcomes[0].frequency, 3);
    assert_eq!(d.invalid, 0);
}

#[test]
fn bimodal_field_matches_monte_carlo_ratio() {
    // small enough that no entry's noise crosses a rounding boundary
    let f = Fork::new(0.02);
    let sigma = 0.08;
    // oracle: the same noise law, drawn independently
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let draws = 200_000;
    let n = f.x0.n_atoms();
    let hits = (0..draws)
        .filter(|_| sample_noise(n, n, sigma, &mut rng).entries()[[f.probe, f.probe]] > 0.02)
        .count();
    let p = hits as f64 / draws as f64;

    let s = 4000;
    let d = sampler(&f, sigma, s).sample_step(&f.x0);
    assert_eq!(d.outcomes.len(), 2);
    assert_eq!(d.invalid, 0);
    let table = PeriodicTable::default_table();
    let sn2 = state_smiles(&build_reaction(&corpus_step("fork_sn2"), None).unwrap().1, table).unwrap();
    let got = d.outcomes.iter().find(|o| o.product == sn2).unwrap().frequency as f64 / s as f64;
    let se = (p * (1.0 - p) / s as f64).sqrt();
    assert!((got - p).abs() < 4.0 * se + 1e-3, "sampled {got}, oracle {p}");
}

#[test]
fn width_two_finds_both_branches_and_conserves() {
    let f = Fork::new(0.0);
    let s = sampler(&f, 0.08, 32);
    let paths = beam_search(&s, &f.x0, 2, 4);
    assert_eq!(paths.len(), 2);
    assert!(paths.iter().all(|p| p.terminal && p.steps.len() == 2));
    for p in &paths {
        for st in &p.steps {
            assert!(check_conservation(&f.x0, &st.state).all());
        }
        let freq: usize = p.steps[0].frequency;
        assert!(freq < 32);
    }
    let one = rollout(&s, &f.x0, 4).unwrap();
    assert_eq!(one, beam_search(&s, &f.x0, 1, 4)[0]);
}

#[test]
fn thread_count_does_not_change_outcomes() {
    let f = Fork::new(0.0);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| sampler(&f, 0.08, 64).sample_step(&f.x0))
    };
    assert_eq!(run(1), run(3));
}
