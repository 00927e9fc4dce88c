use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

/// Fractional ranks (ties share the mean of the positions they span) of
/// `values`, rank 1 being the best.
pub fn rank_row(values: &[f64], direction: Direction) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| match direction {
        Direction::LowerBetter => values[a].total_cmp(&values[b]),
        Direction::HigherBetter => values[b].total_cmp(&values[a]),
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Average rank of each method across datasets. `values[method][dataset]`;
/// `None` or `NaN` marks a missing result. A dataset with missing entries
/// ranks only the methods present on it, and each method is averaged over
/// the datasets where it has a value.
pub fn average_ranks(values: &[Vec<Option<f64>>], direction: Direction) -> Result<Vec<f64>, EvalError> {
    let k = values.len();
    if k < 2 {
        return Err(EvalError::Degenerate(format!("ranking needs at least 2 methods, got {k}")));
    }
    let n = values[0].len();
    if n == 0 || values.iter().any(|v| v.len() != n) {
        return Err(EvalError::Degenerate("every method needs a value slot for each dataset".into()));
    }
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for d in 0..n {
        let present: Vec<usize> = (0..k).filter(|&m| values[m][d].is_some_and(|v| !v.is_nan())).collect();
        if present.len() < k {
            log::warn!("dataset {d}: {} of {k} methods have no value and are left out of its ranking", k - present.len());
        }
        let row: Vec<f64> = present.iter().map(|&m| values[m][d].unwrap()).collect();
        for (&m, r) in present.iter().zip(rank_row(&row, direction)) {
            sums[m] += r;
            counts[m] += 1;
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi_square: f64,
    /// Iman–Davenport statistic.
    pub f_statistic: f64,
    pub df_numerator: usize,
    pub df_denominator: usize,
    pub p_value: f64,
}

/// Friedman test on the average ranks of `k = ranks.len()` methods over `n`
/// datasets, with the Iman–Davenport F correction.
pub fn friedman(ranks: &[f64], n: usize) -> Result<FriedmanResult, EvalError> {
    let k = ranks.len();
    if k < 3 || n < 2 {
        return Err(EvalError::Degenerate(format!("friedman test needs k ≥ 3 and n ≥ 2, got k = {k}, n = {n}")));
    }
    if ranks.iter().any(|r| !r.is_finite()) {
        return Err(EvalError::Degenerate("ranks must be finite".into()));
    }
    let (kf, nf) = (k as f64, n as f64);
    let sum_sq: f64 = ranks.iter().map(|r| r * r).sum();
    let chi_square = 12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0);
    let (df1, df2) = (k - 1, (k - 1) * (n - 1));
    let denom = nf * (kf - 1.0) - chi_square;
    let (f_statistic, p_value) = if denom <= 1e-12 * nf * kf {
        // Every dataset ranks the methods identically.
        (f64::INFINITY, 0.0)
    } else {
        let f = (nf - 1.0) * chi_square / denom;
        let dist = FisherSnedecor::new(df1 as f64, df2 as f64).expect("positive degrees of freedom");
        (f, dist.sf(f.max(0.0)))
    };
    Ok(FriedmanResult { chi_square, f_statistic, df_numerator: df1, df_denominator: df2, p_value })
}

/// Two-tailed studentized range quantiles divided by √2, for k = 2..=20.
const Q_05: [f64; 19] = [
    1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.94832, 3.030878, 3.10173, 3.163684, 3.218654, 3.268004,
    3.312739, 3.353618, 3.39123, 3.426041, 3.458425, 3.488685, 3.517073, 3.543799,
];
const Q_10: [f64; 19] = [
    1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884, 2.854606, 2.919889, 2.977768, 3.029694,
    3.076733, 3.119693, 3.159199, 3.195743, 3.229723, 3.261461, 3.291224, 3.319233,
];

/// Nemenyi critical distance `q_α(k)·√(k(k+1)/(6n))`.
pub fn nemenyi_cd(k: usize, n: usize, alpha: f64) -> Result<f64, EvalError> {
    let table = if alpha == 0.05 {
        &Q_05
    } else if alpha == 0.10 {
        &Q_10
    } else {
        return Err(EvalError::Unsupported(format!("alpha {alpha}; supported values are 0.05 and 0.10")));
    };
    if !(2..=20).contains(&k) {
        return Err(EvalError::Unsupported(format!("k = {k}; supported range is 2..=20")));
    }
    if n == 0 {
        return Err(EvalError::Degenerate("n must be positive".into()));
    }
    let (kf, nf) = (k as f64, n as f64);
    Ok(table[k - 2] * (kf * (kf + 1.0) / (6.0 * nf)).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AusScore {
    pub value: f64,
    /// `value` over the all-ranks-one maximum `(N/2)·sin(2π/N)`.
    pub ratio: f64,
}

/// Spider-plot area with vertices at radius `1/R_i`:
/// `½·sin(2π/N)·Σ 1/(R_i·R_{i+1})`, wrapping around. Order-sensitive.
pub fn aus(ranks: &[f64]) -> Result<AusScore, EvalError> {
    let n = ranks.len();
    if n < 3 {
        return Err(EvalError::Degenerate(format!("spider area needs at least 3 metrics, got {n}")));
    }
    if let Some(r) = ranks.iter().find(|r| !(**r >= 1.0)) {
        return Err(EvalError::Degenerate(format!("ranks must be at least 1, got {r}")));
    }
    let s = (2.0 * std::f64::consts::PI / n as f64).sin();
    let sum: f64 = (0..n).map(|i| 1.0 / (ranks[i] * ranks[(i + 1) % n])).sum();
    let value = 0.5 * s * sum;
    Ok(AusScore { value, ratio: value / (n as f64 / 2.0 * s) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn some(rows: &[&[f64]]) -> Vec<Vec<Option<f64>>> {
        rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect()
    }

    #[test]
    fn two_methods_one_dataset() {
        assert_eq!(average_ranks(&some(&[&[0.1], &[0.9]]), Direction::LowerBetter).unwrap(), vec![1.0, 2.0]);
        assert_eq!(average_ranks(&some(&[&[0.1], &[0.9]]), Direction::HigherBetter).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn ties_share_the_mid_rank() {
        assert_eq!(average_ranks(&some(&[&[0.5], &[0.5]]), Direction::LowerBetter).unwrap(), vec![1.5, 1.5]);
        assert_eq!(rank_row(&[3.0, 1.0, 3.0, 2.0], Direction::LowerBetter), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn hand_built_three_by_four_table() {
        // Datasets (columns): ranks per dataset worked out by hand.
        // d0: 0.2 0.5 0.9 -> 1 2 3
        // d1: 0.7 0.1 0.4 -> 3 1 2
        // d2: 0.3 0.3 0.8 -> 1.5 1.5 3
        // d3: 0.6 0.9 0.2 -> 2 3 1
        let v = some(&[&[0.2, 0.7, 0.3, 0.6], &[0.5, 0.1, 0.3, 0.9], &[0.9, 0.4, 0.8, 0.2]]);
        let r = average_ranks(&v, Direction::LowerBetter).unwrap();
        let expected = [(1.0 + 3.0 + 1.5 + 2.0) / 4.0, (2.0 + 1.0 + 1.5 + 3.0) / 4.0, (3.0 + 2.0 + 3.0 + 1.0) / 4.0];
        for (a, b) in r.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_values_are_ranked_among_present_methods() {
        let v = vec![vec![Some(0.1), None], vec![Some(0.2), Some(0.3)], vec![Some(0.3), Some(0.1)]];
        let r = average_ranks(&v, Direction::LowerBetter).unwrap();
        // Method 1 is second on both datasets; method 2 is third, then first.
        assert_eq!(r, vec![1.0, 2.0, 2.0]);
    }

    #[test]
    fn friedman_degrees_of_freedom() {
        let ranks = [2.86, 3.54, 4.16, 5.74, 5.89, 4.21, 5.98, 3.61];
        let f = friedman(&ranks, 140).unwrap();
        assert_eq!((f.df_numerator, f.df_denominator), (7, 973));
    }

    #[test]
    fn identical_rankings_give_maximal_statistic() {
        let k = 5;
        let ranks: Vec<f64> = (1..=k).map(f64::from).collect();
        let f = friedman(&ranks, 30).unwrap();
        assert!((f.chi_square - 30.0 * (k as f64 - 1.0)).abs() < 1e-9);
        assert_eq!(f.p_value, 0.0);
    }

    fn null_p(seed: u64, k: usize, n: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sums = vec![0.0; k];
        for _ in 0..n {
            let mut perm: Vec<usize> = (1..=k).collect();
            perm.shuffle(&mut rng);
            for (s, r) in sums.iter_mut().zip(perm) {
                *s += r as f64;
            }
        }
        let avg: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        friedman(&avg, n).unwrap().p_value
    }

    #[test]
    fn random_rankings_are_not_significant() {
        assert!(null_p(2024, 6, 200) > 0.01);
        // Under the null the p-value is roughly uniform.
        let rejected = (0..400).filter(|&s| null_p(s, 5, 60) < 0.05).count();
        assert!((4..=40).contains(&rejected), "{rejected}/400");
    }

    #[test]
    fn standard_critical_distance() {
        let cd = nemenyi_cd(8, 140, 0.05).unwrap();
        // Independent evaluation of the closed form with q = 3.030878.
        let expected = 3.030878 * (8.0f64 * 9.0 / (6.0 * 140.0)).sqrt();
        assert!((cd - expected).abs() < 1e-12);
        assert!((cd - 0.887).abs() < 0.001);
        assert!(nemenyi_cd(8, 140, 0.01).is_err());
        assert!(nemenyi_cd(21, 140, 0.05).is_err());
    }

    #[test]
    fn critical_distance_vanishes_with_many_datasets() {
        assert!(nemenyi_cd(8, 1_000_000_000, 0.05).unwrap() < 1e-3);
    }

    #[test]
    fn spider_area_examples() {
        let top = aus(&[1.0; 7]).unwrap();
        assert!((top.value - 2.7364).abs() < 1e-4);
        assert!((top.ratio - 1.0).abs() < 1e-12);
        let second = aus(&[2.0; 7]).unwrap();
        assert!((second.value - 0.6841).abs() < 1e-4);
        assert!((second.value - top.value / 4.0).abs() < 1e-12);
        assert!(aus(&[1.0, 0.5, 2.0]).is_err());
        assert!(aus(&[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn rank_columns_sum_to_the_constant(values in prop::collection::vec(prop::collection::vec(0u8..5, 6), 2..7)) {
            let k = values.len();
            let n = 6;
            let v: Vec<Vec<Option<f64>>> = values.iter().map(|r| r.iter().map(|&x| Some(f64::from(x))).collect()).collect();
            let r = average_ranks(&v, Direction::LowerBetter).unwrap();
            let total: f64 = r.iter().map(|x| x * n as f64).sum();
            prop_assert!((total - (n * k * (k + 1)) as f64 / 2.0).abs() < 1e-9);
            prop_assert!(r.iter().all(|&x| (1.0..=k as f64).contains(&x)));
        }

        #[test]
        fn spider_area_is_rotation_invariant(ranks in prop::collection::vec(1.0f64..8.0, 3..9), shift in 0usize..9) {
            let mut rotated = ranks.clone();
            rotated.rotate_left(shift % ranks.len());
            prop_assert!((aus(&ranks).unwrap().value - aus(&rotated).unwrap().value).abs() < 1e-12);
        }

        #[test]
        fn critical_distance_is_monotone(k in 2usize..20, n in 1usize..500) {
            let cd = nemenyi_cd(k, n, 0.05).unwrap();
            prop_assert!(nemenyi_cd(k, n + 1, 0.05).unwrap() < cd);
            prop_assert!(nemenyi_cd(k + 1, n, 0.05).unwrap() > cd);
            prop_assert!(nemenyi_cd(k, n, 0.10).unwrap() < cd);
        }
    }
}
