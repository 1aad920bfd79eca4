use std::collections::BTreeSet;

use beflow::bematrix::{build_be, reconstruct};
use beflow::chem::{canonical_smiles, parse_smiles, MolGraph};
use beflow::dataio::{split, StepRecord};
use beflow::flowcore::sample_noise;
use beflow::postprocess::{sum_safe_round, sum_safe_round_vec, validity_fix, RoundingMode};
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn molecules() -> Vec<&'static str> {
    include_str!("../data/molecules.smi")
        .lines()
        .filter_map(|l| l.split_whitespace().next())
        .filter(|s| !s.starts_with('#'))
        .collect()
}

/// Smallest weighted L1 distortion over all integer vectors within one of
/// round-to-nearest that hit the target.
fn oracle_cost(x: &[f64], w: &[i64], target: i64) -> Option<f64> {
    let base: Vec<i64> = x.iter().map(|v| v.round() as i64).collect();
    let mut best: Option<f64> = None;
    let combos = 3usize.pow(x.len() as u32);
    for mut c in 0..combos {
        let mut sum = 0;
        let mut cost = 0.0;
        for k in 0..x.len() {
            let r = base[k] + (c % 3) as i64 - 1;
            c /= 3;
            sum += r * w[k];
            cost += (r as f64 - x[k]).abs() * w[k] as f64;
        }
        if sum == target && best.is_none_or(|b| cost < b) {
            best = Some(cost);
        }
    }
    best
}

#[test]
fn rounding_worked_examples() {
    assert_eq!(sum_safe_round_vec(&[0.4, 0.4, 0.2], 1).unwrap(), vec![1, 0, 0]);
    assert_eq!(sum_safe_round_vec(&[1.0, 2.0, 3.0], 6).unwrap(), vec![1, 2, 3]);
    assert!(sum_safe_round_vec(&[0.0, 0.0], 5).is_err());
}

#[test]
fn noise_variance_matches_mean_subtraction() {
    let (n, sigma, draws) = (12, 0.15, 100_000);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cells = [(0, 0), (0, 1), (5, 9)];
    let mut sq = [0.0; 3];
    for _ in 0..draws {
        let z = sample_noise(n, n, sigma, &mut rng);
        for (k, &(i, j)) in cells.iter().enumerate() {
            sq[k] += z.entries()[[i, j]].powi(2);
        }
    }
    let m = (n * n) as f64;
    let want = sigma * (1.0 - 1.0 / m).sqrt();
    for (k, s) in sq.iter().enumerate() {
        let std = (s / draws as f64).sqrt();
        assert!((std / want - 1.0).abs() < 0.02, "cell {:?}: {std} vs {want}", cells[k]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn vector_rounding_is_exact_and_minimal(
        x in prop::collection::vec(-3.0f64..10.0, 1..7),
        shift in -3i64..=3,
    ) {
        let sum: f64 = x.iter().sum();
        let target = sum.round() as i64 + shift;
        prop_assume!((sum - target as f64).abs() < 0.5 * x.len() as f64);
        let r = sum_safe_round_vec(&x, target).unwrap();
        prop_assert_eq!(r.iter().sum::<i64>(), target);
        for (v, xv) in r.iter().zip(&x) {
            prop_assert!((*v - xv.round() as i64).abs() <= 1);
        }
        let w = vec![1; x.len()];
        let cost: f64 = r.iter().zip(&x).map(|(v, xv)| (*v as f64 - xv).abs()).sum();
        let best = oracle_cost(&x, &w, target).unwrap();
        prop_assert!((cost - best).abs() < 1e-9, "cost {} vs oracle {}", cost, best);
    }

    #[test]
    fn matrix_rounding_keeps_sum_and_symmetry(
        n in 1usize..4,
        pad in 0usize..2,
        vals in prop::collection::vec(-1.0f64..9.0, 16),
        shift in -4i64..=4,
    ) {
        let size = n + pad;
        let mut x = Array2::zeros((size, size));
        for i in 0..n {
            for j in 0..n {
                x[[i, j]] = vals[i * 4 + j];
            }
        }
        let sum: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| x[[i, j]]).sum();
        let target = sum.round() as i64 + shift;
        prop_assume!((sum - target as f64).abs() < 0.5 * (n * n) as f64);
        let full = sum_safe_round(&x, n, target, RoundingMode::FullMatrix).unwrap();
        prop_assert_eq!(full.iter().map(|&v| v as i64).sum::<i64>(), target);
        if let Ok(sym) = sum_safe_round(&x, n, target, RoundingMode::SymmetricSafe) {
            prop_assert_eq!(sym.iter().map(|&v| v as i64).sum::<i64>(), target);
            prop_assert_eq!(&sym, &sym.t());
            // weighted oracle over diagonal and upper triangle
            let mut xs = Vec::new();
            let mut ws = Vec::new();
            for i in 0..n {
                for j in i..n {
                    xs.push(if i == j { x[[i, i]] } else { 0.5 * (x[[i, j]] + x[[j, i]]) });
                    ws.push(if i == j { 1 } else { 2 });
                }
            }
            let mut cost = 0.0;
            let mut k = 0;
            for i in 0..n {
                for j in i..n {
                    cost += (sym[[i, j]] as f64 - xs[k]).abs() * ws[k] as f64;
                    k += 1;
                }
            }
            let best = oracle_cost(&xs, &ws, target).unwrap();
            prop_assert!((cost - best).abs() < 1e-9);
        }
    }

    #[test]
    fn validity_fix_is_idempotent_and_keeps_total(
        idx in 0usize..200,
        moves in prop::collection::vec((0usize..64, 0usize..64, -4i32..=4), 0..4),
    ) {
        let mols = molecules();
        let m = build_be(&[parse_smiles(mols[idx % mols.len()]).unwrap()], None).unwrap();
        let n = m.n_atoms();
        let mut p = m.entries().clone();
        for (i, j, d) in moves {
            let (i, j) = (i % n, j % n);
            p[[i, j]] += d;
            if i != j {
                p[[j, i]] += d;
            }
        }
        let (once, _) = validity_fix(&m, &p);
        let (twice, _) = validity_fix(&m, &once);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.sum(), p.sum());
    }

    #[test]
    fn canonical_form_ignores_atom_order(idx in 0usize..400, seed in any::<u64>()) {
        let mols = molecules();
        let g = parse_smiles(mols[idx % mols.len()]).unwrap();
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled: MolGraph = g.permuted(&order);
        prop_assert_eq!(canonical_smiles(&g, false).unwrap(), canonical_smiles(&shuffled, false).unwrap());
    }

    #[test]
    fn be_matrix_round_trips(idx in 0usize..400) {
        let mols = molecules();
        let g = parse_smiles(mols[idx % mols.len()]).unwrap();
        // isotope labels are not part of the matrix
        prop_assume!(g.atoms().iter().all(|a| a.isotope.is_none()));
        let m = build_be(&[g.clone()], None).unwrap();
        prop_assert!(m.is_symmetric());
        for i in 0..m.n_atoms() {
            for j in 0..m.n_atoms() {
                prop_assert!(m.get(i, j) >= 0);
                if i != j {
                    prop_assert_eq!(m.get(i, j) % 2, 0);
                }
            }
        }
        let back = MolGraph::union(&reconstruct(&m).unwrap());
        prop_assert_eq!(canonical_smiles(&back, false).unwrap(), canonical_smiles(&g, false).unwrap());
        prop_assert_eq!(back.total_charge(), g.total_charge());
    }

    #[test]
    fn split_partitions_reactions(n in 2usize..40, seed in any::<u64>(), a in 1u32..10, b in 0u32..10, c in 1u32..10) {
        let records: Vec<StepRecord> = (0..n)
            .flat_map(|r| (0..1 + r % 3).map(move |s| StepRecord::new(&format!("r{r}"), s, "C>>C", "")))
            .collect();
        let total = (a + b + c) as f64;
        let ratios = [a as f64 / total, b as f64 / total, c as f64 / total];
        let need = ratios.iter().filter(|&&r| r > 0.0).count().max(2);
        match split(&records, ratios, seed) {
            Ok(parts) => {
                prop_assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), records.len());
                let ids: Vec<BTreeSet<&str>> =
                    parts.iter().map(|p| p.iter().map(|r| r.reaction_id.as_str()).collect()).collect();
                for i in 0..3 {
                    for j in i + 1..3 {
                        prop_assert!(ids[i].is_disjoint(&ids[j]));
                    }
                }
                prop_assert_eq!(ids.iter().map(|s| s.len()).sum::<usize>(), n);
                prop_assert_eq!(split(&records, ratios, seed).unwrap(), parts);
            }
            Err(_) => prop_assert!(n < need),
        }
    }
}
