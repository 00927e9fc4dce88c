//! Seeded synthetic datasets with known structure, and a CSV writer.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DataError, Dataset, FeatureSpec};

/// Builds a dataset of continuous features `x0..` whose domains are the
/// observed column ranges. Classes are labelled by their index.
pub fn dataset(rows: Vec<Vec<f64>>, target: Vec<usize>) -> Dataset {
    let m = rows[0].len();
    let features = (0..m)
        .map(|j| {
            let col = rows.iter().map(|r| r[j]);
            let min = col.clone().fold(f64::INFINITY, f64::min);
            let max = col.fold(f64::NEG_INFINITY, f64::max);
            FeatureSpec::continuous(format!("x{j}"), min, max)
        })
        .collect();
    let classes = target.iter().max().map_or(1, |&c| c + 1);
    Dataset::new(features, rows, target, (0..classes).map(|c| c.to_string()).collect())
        .expect("generated rows lie in their observed ranges")
}

/// Two separable blobs, class 0 around (−2, −2) and class 1 around (2, 2).
/// Rows alternate between the classes.
pub fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let center = if c == 0 { -2.0 } else { 2.0 };
        // Irwin–Hall approximation of a unit normal.
        let gauss = |rng: &mut ChaCha8Rng| -> f64 { (0..6).map(|_| rng.random::<f64>()).sum::<f64>() - 3.0 };
        rows.push(vec![center + gauss(&mut rng), center + gauss(&mut rng)]);
        target.push(c);
    }
    dataset(rows, target)
}

/// Four features on a known linear graph with uniform noise:
///
/// ```text
/// x1 = 0.8·x0 + e1        x3 = 0.6·x1 − 0.7·x2 + e3
/// ```
///
/// with `x0, x2 ~ U(−1, 1)`. The label is `x1 + x3 > 0`, so moving a
/// counterfactual along the graph is what keeps it plausible.
pub fn linear_graph(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let x0: f64 = rng.random_range(-1.0..1.0);
        let x2: f64 = rng.random_range(-1.0..1.0);
        let x1 = 0.8 * x0 + rng.random_range(-0.5..0.5);
        let x3 = 0.6 * x1 - 0.7 * x2 + rng.random_range(-0.4..0.4);
        target.push(usize::from(x1 + x3 > 0.0));
        rows.push(vec![x0, x1, x2, x3]);
    }
    dataset(rows, target)
}

/// Two features with `x1 = 2·x0 + U(−0.3, 0.3)` and `x0 ~ U(−1, 1)`,
/// single class.
pub fn linear_pair(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x1: Vec<f64> = x0.iter().map(|v| 2.0 * v + rng.random_range(-0.3..0.3)).collect();
    dataset(x0.into_iter().zip(x1).map(|(a, b)| vec![a, b]).collect(), vec![0; n])
}

/// Edge weights of [`linear_graph`] as `(parent, child, weight)`.
pub const LINEAR_GRAPH_EDGES: [(usize, usize, f64); 3] = [(0, 1, 0.8), (1, 3, 0.6), (2, 3, -0.7)];

/// Data from a random strictly lower-triangular linear model with uniform
/// noise. Every entry below the diagonal is an edge whose weight magnitude
/// is drawn from [0.5, 2] with a random sign. Returns the dataset (single
/// class) and `b[child][parent]`.
pub fn triangular_lingam(m: usize, n: usize, seed: u64) -> (Dataset, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = vec![vec![0.0; m]; m];
    for (i, row) in b.iter_mut().enumerate() {
        for w in row.iter_mut().take(i) {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            *w = sign * rng.random_range(0.5..=2.0);
        }
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut x = vec![0.0; m];
            for i in 0..m {
                x[i] = (0..i).map(|j| b[i][j] * x[j]).sum::<f64>() + rng.random_range(-1.0..1.0);
            }
            x
        })
        .collect();
    (dataset(rows, vec![0; n]), b)
}

/// Writes feature columns followed by a label column named `target_column`.
pub fn write_csv<W: Write>(ds: &Dataset, target_column: &str, writer: W) -> Result<(), DataError> {
    let err = |e: csv::Error| DataError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds.features.iter().map(|f| f.name.as_str()).collect();
    header.push(target_column);
    w.write_record(&header).map_err(err)?;
    for (row, &t) in ds.rows.iter().zip(&ds.target) {
        let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
        rec.push(ds.class_labels[t].clone());
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| DataError::Io(e.to_string()))
}
