//! Seeded synthetic binary dataset used for desk-scale end-to-end checks.
//!
//! Features are uniform on `[0, 1]`. The clean label is
//! `x0 + x1^2 + 0.5 x2 x3 - 0.5 x4 > 0.7`; the remaining features carry no
//! signal. Label noise is injected by flipping a fixed fraction of labels.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{split, ColumnKind, ColumnSpec, DataError, DatasetSplit, FeatureSchema, SplitRatios};

pub const MIN_FEATURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub features: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            rows: 5000,
            features: 10,
            noise: 0.05,
            seed: 2024,
        }
    }
}

pub fn rule(x: &[f64]) -> u8 {
    let s = x[0] + x[1] * x[1] + 0.5 * x[2] * x[3] - 0.5 * x[4];
    u8::from(s > 0.7)
}

/// Rows with noise-free labels.
pub fn generate_clean(spec: &SyntheticSpec) -> DatasetSplit {
    assert!(spec.features >= MIN_FEATURES, "rule needs at least {MIN_FEATURES} features");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Vec::with_capacity(spec.rows * spec.features);
    let mut labels = Vec::with_capacity(spec.rows);
    for _ in 0..spec.rows {
        let start = features.len();
        features.extend((0..spec.features).map(|_| rng.random::<f64>()));
        labels.push(rule(&features[start..]));
    }
    DatasetSplit::new(spec.features, features, labels)
}

/// Flips exactly `round(rate * n)` labels chosen by a seeded shuffle.
pub fn flip_labels(ds: &DatasetSplit, rate: f64, seed: u64) -> DatasetSplit {
    let n = ds.n_rows();
    let k = ((n as f64) * rate).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f11b));
    let mut out = ds.clone();
    for &i in &idx[..k.min(n)] {
        out.labels[i] ^= 1;
    }
    out
}

/// All rows with noise applied across the whole table.
pub fn generate(spec: &SyntheticSpec) -> DatasetSplit {
    flip_labels(&generate_clean(spec), spec.noise, spec.seed)
}

/// Train / validation / test splits where only the training labels carry
/// noise; validation and test are scored against the rule itself.
pub fn noisy_train_splits(
    spec: &SyntheticSpec,
    ratios: SplitRatios,
) -> Result<(DatasetSplit, DatasetSplit, DatasetSplit), DataError> {
    let clean = generate_clean(spec);
    let (train, val, test) = split(&clean, ratios, spec.seed)?;
    Ok((flip_labels(&train, spec.noise, spec.seed), val, test))
}

/// Schema matching [`to_csv`]: numeric `f0..f{n-1}` plus `label`.
pub fn schema(features: usize) -> FeatureSchema {
    let names: Vec<String> = (0..features).map(|i| format!("f{i}")).collect();
    let mut columns: Vec<ColumnSpec> = names
        .iter()
        .map(|n| ColumnSpec {
            name: n.clone(),
            kind: ColumnKind::Numeric,
        })
        .collect();
    columns.push(ColumnSpec {
        name: "label".into(),
        kind: ColumnKind::Label,
    });
    FeatureSchema {
        columns,
        selected_features: names,
    }
}

/// CSV text with columns `f0..f{n-1},label`.
pub fn to_csv(ds: &DatasetSplit) -> String {
    let mut s: String = (0..ds.n_features).map(|i| format!("f{i},")).collect();
    s.push_str("label\n");
    for r in 0..ds.n_rows() {
        for v in ds.row(r) {
            s.push_str(&format!("{v},"));
        }
        s.push_str(&format!("{}\n", ds.labels[r]));
    }
    s
}
