//! From continuous samples back to discrete BE matrices.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bematrix::{reconstruct_graph_with, BEMatrix};
use crate::chem::{MolGraph, PeriodicTable};
use crate::error::{ReconstructError, RoundingError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingMode {
    /// Every entry rounded independently; symmetry is not guaranteed.
    FullMatrix,
    /// Diagonal and upper triangle rounded, then mirrored.
    #[default]
    SymmetricSafe,
}

impl FromStr for RoundingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full_matrix" => Ok(RoundingMode::FullMatrix),
            "symmetric_safe" => Ok(RoundingMode::SymmetricSafe),
            other => Err(format!("unknown rounding mode '{other}' (full_matrix | symmetric_safe)")),
        }
    }
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoundingMode::FullMatrix => "full_matrix",
            RoundingMode::SymmetricSafe => "symmetric_safe",
        })
    }
}

/// Failure bins, in precedence order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FailureMode {
    NegativeAndAsymmetric,
    NegativeOnly,
    AsymmetricOnly,
    ChemInvalid,
    None,
}

impl FailureMode {
    pub const ALL: [FailureMode; 5] = [
        FailureMode::NegativeAndAsymmetric,
        FailureMode::NegativeOnly,
        FailureMode::AsymmetricOnly,
        FailureMode::ChemInvalid,
        FailureMode::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FailureMode::NegativeAndAsymmetric => "negative_and_asymmetric",
            FailureMode::NegativeOnly => "negative_only",
            FailureMode::AsymmetricOnly => "asymmetric_only",
            FailureMode::ChemInvalid => "chem_invalid",
            FailureMode::None => "none",
        }
    }

    pub fn is_failure(self) -> bool {
        self != FailureMode::None
    }
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FailureMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FailureMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown failure mode '{s}'"))
    }
}

/// Round a vector so that it sums to `target` exactly.
///
/// Entries start at round-to-nearest. A shortfall is made up by incrementing
/// the entries with the largest `x - round(x)`, a surplus by decrementing those
/// with the smallest; ties go to the lowest index and no entry moves twice.
pub fn sum_safe_round_vec(x: &[f64], target: i64) -> Result<Vec<i64>, RoundingError> {
    let weights = vec![1; x.len()];
    weighted_round(x, &weights, target)
}

/// Round the active `n × n` block of `x` to integers summing to `target`.
pub fn sum_safe_round(
    x: &Array2<f64>,
    n: usize,
    target: i64,
    mode: RoundingMode,
) -> Result<Array2<i32>, RoundingError> {
    let size = x.nrows();
    let mut out = Array2::zeros((size, size));
    match mode {
        RoundingMode::FullMatrix => {
            let flat: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| x[[i, j]]).collect();
            let r = sum_safe_round_vec(&flat, target)?;
            for (k, v) in r.into_iter().enumerate() {
                out[[k / n, k % n]] = v as i32;
            }
        }
        RoundingMode::SymmetricSafe => {
            let mut cells = Vec::new();
            let mut values = Vec::new();
            let mut weights = Vec::new();
            for i in 0..n {
                for j in i..n {
                    cells.push((i, j));
                    values.push(if i == j { x[[i, i]] } else { 0.5 * (x[[i, j]] + x[[j, i]]) });
                    weights.push(if i == j { 1 } else { 2 });
                }
            }
            let r = weighted_round(&values, &weights, target).map_err(|_| RoundingError::InfeasibleTarget {
                target,
                sum: x.slice(ndarray::s![..n, ..n]).sum(),
                count: n * n,
            })?;
            for ((i, j), v) in cells.into_iter().zip(r) {
                out[[i, j]] = v as i32;
                out[[j, i]] = v as i32;
            }
        }
    }
    Ok(out)
}

/// Sum-safe rounding where entry `k` counts `weights[k]` times (1 or 2).
///
/// With mixed weights the shortfall `D` splits as `a + 2b` with `a`, `b` of
/// either sign; every split is tried and the one with the smallest added L1
/// distortion wins (smaller `|b|` on ties). Within each weight class the
/// usual residual order applies.
fn weighted_round(x: &[f64], weights: &[i64], target: i64) -> Result<Vec<i64>, RoundingError> {
    let weighted_sum: f64 = x.iter().zip(weights).map(|(v, &w)| v * w as f64).sum();
    let count: usize = weights.iter().map(|&w| w as usize).sum();
    let infeasible = || RoundingError::InfeasibleTarget { target, sum: weighted_sum, count };
    if !weighted_sum.is_finite() || (weighted_sum - target as f64).abs() >= 0.5 * count.max(1) as f64 {
        return Err(infeasible());
    }
    let mut out: Vec<i64> = x.iter().map(|v| v.round() as i64).collect();
    let rounded: i64 = out.iter().zip(weights).map(|(v, w)| v * w).sum();
    let deficit = target - rounded;
    if deficit == 0 {
        return Ok(out);
    }
    let diff = |k: usize| x[k] - x[k].round();
    // candidates of one weight class moved one unit up or down, cheapest first
    let class = |w: i64, up: bool| -> Vec<(usize, f64)> {
        let mut idx: Vec<usize> = (0..x.len()).filter(|&k| weights[k] == w).collect();
        idx.sort_by(|&a, &b| {
            let (da, db) = (diff(a), diff(b));
            let ord = if up { db.total_cmp(&da) } else { da.total_cmp(&db) };
            ord.then(a.cmp(&b))
        });
        idx.into_iter()
            .map(|k| {
                let d = diff(k);
                let cost = if up { 1.0 - d - d.abs() } else { 1.0 + d - d.abs() };
                (k, cost * w as f64)
            })
            .collect()
    };
    let prefix = |v: &[(usize, f64)]| -> Vec<f64> {
        let mut p = vec![0.0];
        for &(_, c) in v {
            p.push(p.last().copied().unwrap_or(0.0) + c);
        }
        p
    };
    let (ones_up, ones_down) = (class(1, true), class(1, false));
    let (twos_up, twos_down) = (class(2, true), class(2, false));
    let (p1u, p1d) = (prefix(&ones_up), prefix(&ones_down));
    let (p2u, p2d) = (prefix(&twos_up), prefix(&twos_down));
    let (n1, n2) = (ones_up.len() as i64, twos_up.len() as i64);
    // signed split deficit = a + 2b; the two classes may move in opposite directions
    let mut best: Option<(f64, i64, i64)> = None;
    for b in -n2..=n2 {
        let a = deficit - 2 * b;
        if a.abs() > n1 {
            continue;
        }
        let ca = if a >= 0 { p1u[a as usize] } else { p1d[a.unsigned_abs() as usize] };
        let cb = if b >= 0 { p2u[b as usize] } else { p2d[b.unsigned_abs() as usize] };
        let cost = ca + cb;
        let better = match best {
            None => true,
            Some((c, _, bb)) => cost < c - 1e-12 || (cost <= c + 1e-12 && b.abs() < bb.abs()),
        };
        if better {
            best = Some((cost, a, b));
        }
    }
    let (_, a, b) = best.ok_or_else(infeasible)?;
    let moves = |list: &[(usize, f64)], count: i64| list.iter().take(count.unsigned_abs() as usize).map(|&(k, _)| k).collect::<Vec<_>>();
    for k in moves(if a >= 0 { &ones_up } else { &ones_down }, a) {
        out[k] += a.signum();
    }
    for k in moves(if b >= 0 { &twos_up } else { &twos_down }, b) {
        out[k] += b.signum();
    }
    Ok(out)
}

/// Result of [`validity_fix`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixStatus {
    /// Row sums already matched the reactant.
    Clean,
    /// Diagonal entries were moved to restore the reactant row sums.
    Repaired,
    /// Differences do not cancel, or a repair would go negative.
    NotApplicable,
    /// The fix was turned off.
    Disabled,
}

/// Move lone-pair electrons so every atom regains its reactant row sum.
pub fn validity_fix(reactant: &BEMatrix, predicted: &Array2<i32>) -> (Array2<i32>, FixStatus) {
    let n = reactant.n_atoms();
    let rows: Vec<i64> = (0..n).map(|i| predicted.row(i).iter().map(|&v| v as i64).sum()).collect();
    let d: Vec<i64> = rows.iter().zip(reactant.row_sums()).map(|(p, r)| p - r).collect();
    if d.iter().all(|&v| v == 0) {
        return (predicted.clone(), FixStatus::Clean);
    }
    if d.iter().sum::<i64>() != 0 {
        return (predicted.clone(), FixStatus::NotApplicable);
    }
    let mut out = predicted.clone();
    for (i, &di) in d.iter().enumerate() {
        let v = out[[i, i]] as i64 - di;
        if v < 0 {
            return (predicted.clone(), FixStatus::NotApplicable);
        }
        out[[i, i]] = v as i32;
    }
    (out, FixStatus::Repaired)
}

/// Assign a failure bin; `reconstruction` is the outcome of rebuilding
/// molecules from `predicted` (only consulted when the matrix itself is sound).
pub fn classify_failure<T>(
    predicted: &Array2<i32>,
    n: usize,
    reconstruction: &Result<T, ReconstructError>,
) -> FailureMode {
    let mut negative = false;
    let mut asymmetric = false;
    for i in 0..n {
        for j in 0..n {
            let v = predicted[[i, j]];
            negative |= v < 0;
            if i != j {
                asymmetric |= v != predicted[[j, i]] || v % 2 != 0;
            }
        }
    }
    match (negative, asymmetric) {
        (true, true) => FailureMode::NegativeAndAsymmetric,
        (true, false) => FailureMode::NegativeOnly,
        (false, true) => FailureMode::AsymmetricOnly,
        (false, false) if reconstruction.is_err() => FailureMode::ChemInvalid,
        _ => FailureMode::None,
    }
}

/// Knobs of the discretization pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PostConfig {
    pub rounding: RoundingMode,
    pub validity_fix: bool,
}

impl Default for PostConfig {
    fn default() -> Self {
        PostConfig { rounding: RoundingMode::SymmetricSafe, validity_fix: true }
    }
}

/// A discretized sample.
#[derive(Clone, Debug)]
pub struct Discretized {
    pub matrix: Array2<i32>,
    pub fix: FixStatus,
    pub failure: FailureMode,
    /// Present exactly when `failure` is `None`.
    pub product: Option<(BEMatrix, MolGraph)>,
}

/// Round, optionally fix, reconstruct and classify a continuous end state that
/// started from `reactant`. Rounding targets the reactant's electron total.
pub fn discretize(reactant: &BEMatrix, x: &Array2<f64>, config: PostConfig, table: &PeriodicTable) -> Discretized {
    let n = reactant.n_atoms();
    let rounded = match sum_safe_round(x, n, reactant.total(), config.rounding) {
        Ok(r) => r,
        Err(_) => {
            // unreachable target: fall back to nearest rounding and let the
            // checks below classify the damage
            let mut r = Array2::zeros(x.dim());
            for i in 0..n {
                for j in 0..n {
                    r[[i, j]] = x[[i, j]].round() as i32;
                }
            }
            r
        }
    };
    let (matrix, fix) = if config.validity_fix {
        validity_fix(reactant, &rounded)
    } else {
        (rounded, FixStatus::Disabled)
    };
    let be = reactant.with_entries(matrix.clone()).expect("shape preserved");
    let rebuilt = reconstruct_graph_with(&be, table);
    let mut failure = classify_failure(&matrix, n, &rebuilt);
    if failure == FailureMode::None && be.total() != reactant.total() {
        // only reachable through the fallback above; never report a product
        // that gained or lost electrons
        failure = FailureMode::ChemInvalid;
    }
    let product = match (failure, rebuilt) {
        (FailureMode::None, Ok(g)) => Some((be, g)),
        _ => None,
    };
    Discretized { matrix, fix, failure, product }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bematrix::build_be;
    use crate::chem::parse_smiles;

    #[test]
    fn vector_examples() {
        assert_eq!(sum_safe_round_vec(&[0.4, 0.4, 0.2], 1).unwrap(), vec![1, 0, 0]);
        assert_eq!(sum_safe_round_vec(&[1.0, 2.0, 3.0], 6).unwrap(), vec![1, 2, 3]);
        assert_eq!(sum_safe_round_vec(&[0.6, 0.6, 0.8], 1).unwrap(), vec![0, 0, 1]);
        assert!(matches!(
            sum_safe_round_vec(&[0.0, 0.0], 3),
            Err(RoundingError::InfeasibleTarget { .. })
        ));
        assert_eq!(sum_safe_round_vec(&[], 0).unwrap(), Vec::<i64>::new());
    }

    #[test]
    fn symmetric_mode_mirrors() {
        let x = ndarray::arr2(&[[0.4, 1.6, 0.0], [1.4, 0.3, 0.0], [0.0, 0.0, 0.0]]);
        let r = sum_safe_round(&x, 2, 4, RoundingMode::SymmetricSafe).unwrap();
        assert_eq!(r, r.t());
        assert_eq!(r.sum(), 4);
        let r = sum_safe_round(&x, 2, 3, RoundingMode::SymmetricSafe).unwrap();
        assert_eq!(r.sum(), 3);
        assert_eq!(r, r.t());
    }

    #[test]
    fn worked_validity_fix() {
        // rows [2,8,8,8,8,2] for H-C...; encoded as a diagonal-only toy
        let atoms: Vec<crate::bematrix::BeAtom> = (0..6)
            .map(|i| crate::bematrix::BeAtom { element: crate::chem::Element(if i == 0 || i == 5 { 1 } else { 6 }), atom_map: Some(i + 1) })
            .collect();
        let reactant = BEMatrix::new(atoms, Array2::from_diag(&ndarray::arr1(&[2, 8, 8, 8, 8, 2]))).unwrap();
        let predicted = Array2::from_diag(&ndarray::arr1(&[2, 6, 8, 8, 10, 2]));
        let (fixed, status) = validity_fix(&reactant, &predicted);
        assert_eq!(status, FixStatus::Repaired);
        let rows: Vec<i32> = fixed.rows().into_iter().map(|r| r.sum()).collect();
        assert_eq!(rows, vec![2, 8, 8, 8, 8, 2]);
        assert_eq!(fixed[[1, 1]], 8);
        assert_eq!(fixed[[4, 4]], 8);
        let (again, s2) = validity_fix(&reactant, &fixed);
        assert_eq!(again, fixed);
        assert_eq!(s2, FixStatus::Clean);

        let surplus = Array2::from_diag(&ndarray::arr1(&[2, 8, 8, 8, 10, 2]));
        assert_eq!(validity_fix(&reactant, &surplus), (surplus.clone(), FixStatus::NotApplicable));
    }

    #[test]
    fn failure_bins() {
        let ok: Result<(), ReconstructError> = Ok(());
        let bad: Result<(), ReconstructError> = Err(ReconstructError::ValenceViolation {
            atom: 0,
            symbol: "C".into(),
            reason: String::new(),
        });
        let m = ndarray::arr2(&[[-2, 2], [4, 0]]);
        assert_eq!(classify_failure(&m, 2, &ok), FailureMode::NegativeAndAsymmetric);
        let m = ndarray::arr2(&[[-2, 2], [2, 0]]);
        assert_eq!(classify_failure(&m, 2, &ok), FailureMode::NegativeOnly);
        let m = ndarray::arr2(&[[4, 3], [3, 0]]);
        assert_eq!(classify_failure(&m, 2, &ok), FailureMode::AsymmetricOnly);
        let m = ndarray::arr2(&[[4, 2], [2, 0]]);
        assert_eq!(classify_failure(&m, 2, &bad), FailureMode::ChemInvalid);
        assert_eq!(classify_failure(&m, 2, &ok), FailureMode::None);
    }

    #[test]
    fn discretize_recovers_exact_product() {
        let r = build_be(&[parse_smiles("[OH-:1].[H:2][OH:3]").unwrap()], None).unwrap();
        let p = build_be(&[parse_smiles("[OH:1][H:2].[OH-:3]").unwrap()], None).unwrap();
        let mut x = p.to_f64();
        x[[0, 0]] += 0.3;
        x[[1, 1]] -= 0.3;
        let d = discretize(&r, &x, PostConfig::default(), PeriodicTable::default_table());
        assert_eq!(d.failure, FailureMode::None);
        assert_eq!(d.product.unwrap().0, p);
    }
}
