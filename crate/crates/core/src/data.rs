//! Tabular flow-record ingestion: CSV loading, categorical label encoding,
//! min-max normalization, seeded splitting and the `EIDD` dataset file.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::write_atomic;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("input has no data rows")]
    EmptyFile,
    #[error("column `{0}` is missing from the CSV header")]
    MissingColumn(String),
    #[error("cannot parse value on row {row}, column `{col}`")]
    ParseError { row: usize, col: String },
    #[error("missing value on row {row}, column `{col}`")]
    MissingValue { row: usize, col: String },
    #[error("label on row {row} must be 0 or 1, got `{value}`")]
    BadLabel { row: usize, value: String },
    #[error("unknown category `{value}` in column `{col}`")]
    UnknownCategory { value: String, col: String },
    #[error("invalid schema: {0}")]
    BadSchema(String),
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("malformed dataset file: {0}")]
    BadDatasetFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Column layout of the input CSV plus the ordered list of features fed to
/// the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSchema {
    pub columns: Vec<ColumnSpec>,
    pub selected_features: Vec<String>,
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(DataError::BadSchema(format!("duplicate column `{}`", c.name)));
            }
        }
        let labels = self.columns.iter().filter(|c| c.kind == ColumnKind::Label).count();
        if labels != 1 {
            return Err(DataError::BadSchema(format!(
                "exactly one label column required, found {labels}"
            )));
        }
        if self.selected_features.is_empty() {
            return Err(DataError::BadSchema("no selected features".into()));
        }
        let mut sel = HashSet::new();
        for name in &self.selected_features {
            match self.kind_of(name) {
                None => {
                    return Err(DataError::BadSchema(format!("selected feature `{name}` is not a column")))
                }
                Some(ColumnKind::Label) => {
                    return Err(DataError::BadSchema(format!("label column `{name}` cannot be a feature")))
                }
                Some(_) => {}
            }
            if !sel.insert(name.as_str()) {
                return Err(DataError::BadSchema(format!("feature `{name}` selected twice")));
            }
        }
        Ok(())
    }

    pub fn kind_of(&self, name: &str) -> Option<ColumnKind> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.kind)
    }

    pub fn label_column(&self) -> &str {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::Label)
            .map(|c| c.name.as_str())
            .unwrap_or("label")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

/// Typed rows for the schema's columns, in schema column order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<ColumnSpec>,
    pub rows: Vec<Vec<Cell>>,
    /// Index of each row in the source file (0-based, header excluded).
    pub row_ids: Vec<usize>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn subset(&self, indices: &[usize]) -> RawTable {
        RawTable {
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }
}

pub fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<RawTable, DataError> {
    let file = fs::File::open(path)?;
    read_csv(file, schema)
}

/// Parses CSV text against `schema`. Row numbers in errors are 1-based data
/// rows (the header is not counted).
pub fn read_csv<R: Read>(input: R, schema: &FeatureSchema) -> Result<RawTable, DataError> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::EmptyFile);
    }
    let mut positions = Vec::with_capacity(schema.columns.len());
    for c in &schema.columns {
        let pos = headers
            .iter()
            .position(|h| h.trim() == c.name)
            .ok_or_else(|| DataError::MissingColumn(c.name.clone()))?;
        positions.push(pos);
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let mut row = Vec::with_capacity(positions.len());
        for (spec, &pos) in schema.columns.iter().zip(&positions) {
            let raw = record.get(pos).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(DataError::MissingValue {
                    row: row_no,
                    col: spec.name.clone(),
                });
            }
            let cell = match spec.kind {
                ColumnKind::Categorical => Cell::Text(raw.to_string()),
                ColumnKind::Numeric => match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Cell::Num(v),
                    _ => {
                        return Err(DataError::ParseError {
                            row: row_no,
                            col: spec.name.clone(),
                        })
                    }
                },
                ColumnKind::Label => match raw.parse::<f64>() {
                    Ok(v) if v == 0.0 || v == 1.0 => Cell::Num(v),
                    _ => {
                        return Err(DataError::BadLabel {
                            row: row_no,
                            value: raw.to_string(),
                        })
                    }
                },
            };
            row.push(cell);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let n = rows.len();
    Ok(RawTable {
        columns: schema.columns.clone(),
        rows,
        row_ids: (0..n).collect(),
    })
}

/// Per categorical column, distinct value -> 0-based code in lexicographic
/// order of the values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodingMap {
    pub columns: BTreeMap<String, BTreeMap<String, u32>>,
}

impl EncodingMap {
    pub fn encode(&self, col: &str, value: &str) -> Option<u32> {
        self.columns.get(col)?.get(value).copied()
    }

    pub fn decode(&self, col: &str, code: u32) -> Option<&str> {
        self.columns
            .get(col)?
            .iter()
            .find(|(_, &c)| c == code)
            .map(|(v, _)| v.as_str())
    }
}

pub fn fit_label_encoding(table: &RawTable, schema: &FeatureSchema) -> EncodingMap {
    let mut columns = BTreeMap::new();
    for (ci, spec) in schema.columns.iter().enumerate() {
        if spec.kind != ColumnKind::Categorical {
            continue;
        }
        let distinct: BTreeSet<&str> = table
            .rows
            .iter()
            .filter_map(|r| match &r[ci] {
                Cell::Text(s) => Some(s.as_str()),
                Cell::Num(_) => None,
            })
            .collect();
        let codes = distinct
            .into_iter()
            .enumerate()
            .map(|(i, v)| (v.to_string(), i as u32))
            .collect();
        columns.insert(spec.name.clone(), codes);
    }
    EncodingMap { columns }
}

/// Selected features as raw numbers (categoricals replaced by their codes),
/// before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTable {
    pub feature_names: Vec<String>,
    pub values: Vec<f64>,
    pub labels: Vec<u8>,
    pub row_ids: Vec<usize>,
}

impl EncodedTable {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }
}

pub fn encode(
    table: &RawTable,
    schema: &FeatureSchema,
    enc: &EncodingMap,
) -> Result<EncodedTable, DataError> {
    let mut cols = Vec::with_capacity(schema.selected_features.len());
    for name in &schema.selected_features {
        let idx = table
            .column_index(name)
            .ok_or_else(|| DataError::MissingColumn(name.clone()))?;
        cols.push((name.as_str(), idx));
    }
    let label_idx = table
        .column_index(schema.label_column())
        .ok_or_else(|| DataError::MissingColumn(schema.label_column().to_string()))?;

    let mut values = Vec::with_capacity(table.len() * cols.len());
    let mut labels = Vec::with_capacity(table.len());
    for row in &table.rows {
        for &(name, idx) in &cols {
            let v = match &row[idx] {
                Cell::Num(v) => *v,
                Cell::Text(s) => enc.encode(name, s).ok_or_else(|| DataError::UnknownCategory {
                    value: s.clone(),
                    col: name.to_string(),
                })? as f64,
            };
            values.push(v);
        }
        labels.push(match &row[label_idx] {
            Cell::Num(v) if *v == 1.0 => 1,
            _ => 0,
        });
    }
    Ok(EncodedTable {
        feature_names: schema.selected_features.clone(),
        values,
        labels,
        row_ids: table.row_ids.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    fn empty() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn observe(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    pub fn merge(self, other: ColumnRange) -> ColumnRange {
        ColumnRange {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    /// Min-max scaling into `[0, 1]`; constant columns map to 0.
    pub fn normalize(&self, x: f64) -> f64 {
        let span = self.max - self.min;
        if span <= 0.0 {
            return 0.0;
        }
        ((x - self.min) / span).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub feature_names: Vec<String>,
    pub ranges: Vec<ColumnRange>,
}

impl NormStats {
    /// Column-wise union of two statistics over the same features.
    pub fn merge(&self, other: &NormStats) -> NormStats {
        NormStats {
            feature_names: self.feature_names.clone(),
            ranges: self
                .ranges
                .iter()
                .zip(&other.ranges)
                .map(|(a, b)| a.merge(*b))
                .collect(),
        }
    }
}

/// Per-column min and max over the given (training) rows.
pub fn fit_minmax(train: &EncodedTable) -> NormStats {
    let nf = train.n_features();
    let mut ranges = vec![ColumnRange::empty(); nf];
    for row in train.values.chunks(nf.max(1)) {
        for (r, &v) in ranges.iter_mut().zip(row) {
            r.observe(v);
        }
    }
    // An empty table leaves +inf/-inf; collapse to a degenerate range.
    for r in &mut ranges {
        if r.min > r.max {
            *r = ColumnRange { min: 0.0, max: 0.0 };
        }
    }
    NormStats {
        feature_names: train.feature_names.clone(),
        ranges,
    }
}

/// Normalized features in `[0, 1]` with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub n_features: usize,
    pub features: Vec<f64>,
    pub labels: Vec<u8>,
    pub row_ids: Vec<usize>,
}

impl DatasetSplit {
    pub fn new(n_features: usize, features: Vec<f64>, labels: Vec<u8>) -> Self {
        assert_eq!(features.len(), n_features * labels.len());
        let n = labels.len();
        Self {
            n_features,
            features,
            labels,
            row_ids: (0..n).collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn subset(&self, indices: &[usize]) -> DatasetSplit {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        DatasetSplit {
            n_features: self.n_features,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }
}

pub fn apply_transform(
    table: &RawTable,
    schema: &FeatureSchema,
    enc: &EncodingMap,
    stats: &NormStats,
) -> Result<DatasetSplit, DataError> {
    let encoded = encode(table, schema, enc)?;
    Ok(normalize(&encoded, stats))
}

pub fn normalize(encoded: &EncodedTable, stats: &NormStats) -> DatasetSplit {
    let nf = encoded.n_features();
    let features = encoded
        .values
        .chunks(nf.max(1))
        .flat_map(|row| row.iter().zip(&stats.ranges).map(|(&v, r)| r.normalize(v)))
        .collect();
    DatasetSplit {
        n_features: nf,
        features,
        labels: encoded.labels.clone(),
        row_ids: encoded.row_ids.clone(),
    }
}

pub type SplitRatios = (f64, f64, f64);

pub fn validate_ratios(ratios: SplitRatios) -> Result<(), DataError> {
    let (a, b, c) = ratios;
    let ok = [a, b, c].iter().all(|r| r.is_finite() && *r > 0.0) && ((a + b + c) - 1.0).abs() <= 1e-9;
    if ok {
        Ok(())
    } else {
        Err(DataError::BadRatios(ratios))
    }
}

/// Seeded shuffle of `0..n` partitioned into train/validation/test index
/// lists. Sizes are `round(n * r)` for the first two parts; the test part
/// takes the remainder.
pub fn split_indices(
    n: usize,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), DataError> {
    validate_ratios(ratios)?;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = ((n as f64) * ratios.0).round() as usize;
    let n_train = n_train.min(n);
    let n_val = (((n as f64) * ratios.1).round() as usize).min(n - n_train);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok((idx, val, test))
}

pub fn split(
    dataset: &DatasetSplit,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(DatasetSplit, DatasetSplit, DatasetSplit), DataError> {
    let (a, b, c) = split_indices(dataset.n_rows(), ratios, seed)?;
    Ok((dataset.subset(&a), dataset.subset(&b), dataset.subset(&c)))
}

/// Everything `preprocess` produces: the three normalized splits and the
/// fitted encoders.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub train: DatasetSplit,
    pub val: DatasetSplit,
    pub test: DatasetSplit,
    pub sidecar: Sidecar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub schema: FeatureSchema,
    pub encoding: EncodingMap,
    pub norm_stats: NormStats,
}

/// Splits the raw table, fits encoders and min-max statistics on the training
/// part only, then transforms all three parts.
pub fn preprocess(
    table: &RawTable,
    schema: &FeatureSchema,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Preprocessed, DataError> {
    schema.validate()?;
    if table.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let (tr, va, te) = split_indices(table.len(), ratios, seed)?;
    let (train_raw, val_raw, test_raw) = (table.subset(&tr), table.subset(&va), table.subset(&te));
    let encoding = fit_label_encoding(&train_raw, schema);
    let train_enc = encode(&train_raw, schema, &encoding)?;
    let norm_stats = fit_minmax(&train_enc);
    let train = normalize(&train_enc, &norm_stats);
    let val = apply_transform(&val_raw, schema, &encoding, &norm_stats)?;
    let test = apply_transform(&test_raw, schema, &encoding, &norm_stats)?;
    Ok(Preprocessed {
        train,
        val,
        test,
        sidecar: Sidecar {
            schema: schema.clone(),
            encoding,
            norm_stats,
        },
    })
}

const DATASET_MAGIC: &[u8; 4] = b"EIDD";
const DATASET_VERSION: u16 = 1;

/// Serializes a split in the `EIDD` layout: magic, u16 version, u32 rows,
/// u16 features, row-major f32 payload, one label byte per row.
pub fn encode_dataset(split: &DatasetSplit) -> Result<Vec<u8>, DataError> {
    let n_rows = u32::try_from(split.n_rows())
        .map_err(|_| DataError::BadDatasetFile("too many rows".into()))?;
    let n_features = u16::try_from(split.n_features)
        .map_err(|_| DataError::BadDatasetFile("too many features".into()))?;
    let mut out = Vec::with_capacity(12 + split.features.len() * 4 + split.labels.len());
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&n_rows.to_le_bytes());
    out.extend_from_slice(&n_features.to_le_bytes());
    for &v in &split.features {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(&split.labels);
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<DatasetSplit, DataError> {
    let bad = |m: &str| DataError::BadDatasetFile(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != DATASET_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != DATASET_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n_rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let n_features = u16::from_le_bytes([bytes[10], bytes[11]]) as usize;
    let payload = n_rows * n_features * 4;
    if bytes.len() != 12 + payload + n_rows {
        return Err(bad("length does not match header"));
    }
    let features = bytes[12..12 + payload]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let labels = bytes[12 + payload..].to_vec();
    if labels.iter().any(|&l| l > 1) {
        return Err(bad("labels must be 0 or 1"));
    }
    Ok(DatasetSplit {
        n_features,
        features,
        labels,
        row_ids: (0..n_rows).collect(),
    })
}

pub fn write_dataset(path: &Path, split: &DatasetSplit) -> Result<(), DataError> {
    write_atomic(path, &encode_dataset(split)?)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<DatasetSplit, DataError> {
    decode_dataset(&fs::read(path)?)
}

pub fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<(), DataError> {
    let mut buf = serde_json::to_vec_pretty(sidecar)
        .map_err(|e| DataError::BadDatasetFile(e.to_string()))?;
    buf.write_all(b"\n")?;
    write_atomic(path, &buf)?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar, DataError> {
    serde_json::from_slice(&fs::read(path)?).map_err(|e| DataError::BadDatasetFile(e.to_string()))
}
