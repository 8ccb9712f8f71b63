//! Column packing, CSV ingestion, synthetic inputs and error metrics.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::emulator::{Ciphertext, EvalContext};
use crate::error::{Error, Result};

/// A column of values packed into consecutive ciphertexts.
///
/// Only the first `n_valid` slots (across chunks) carry data. At encode time
/// the remaining slots of the last chunk are zero; derived columns such as
/// z-scores may hold arbitrary values there.
#[derive(Debug, Clone)]
pub struct EncryptedColumn {
    chunks: Vec<Ciphertext>,
    n_valid: usize,
    name: String,
}

impl EncryptedColumn {
    pub fn new(chunks: Vec<Ciphertext>, n_valid: usize, name: impl Into<String>, slot_count: usize) -> Result<Self> {
        if n_valid > chunks.len() * slot_count {
            return Err(Error::TooManyValues {
                given: n_valid,
                slots: chunks.len() * slot_count,
            });
        }
        Ok(Self {
            chunks,
            n_valid,
            name: name.into(),
        })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn chunks(&self) -> &[Ciphertext] {
        &self.chunks
    }

    pub fn n_valid(&self) -> usize {
        self.n_valid
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of data slots in chunk `i`.
    pub fn valid_in_chunk(&self, i: usize) -> usize {
        let slots = self.chunks.first().map_or(0, Ciphertext::slot_count);
        self.n_valid.saturating_sub(i * slots).min(slots)
    }
}

/// Splits `values` into `ceil(n / slot_count)` fresh ciphertexts.
pub fn encode_column(ctx: &EvalContext, values: &[f64]) -> Result<EncryptedColumn> {
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { index });
    }
    let chunks = values
        .chunks(ctx.slot_count())
        .map(|chunk| ctx.encrypt(chunk))
        .collect::<Result<Vec<_>>>()?;
    EncryptedColumn::new(chunks, values.len(), "", ctx.slot_count())
}

/// Concatenated slot values, truncated to the valid count.
pub fn decode_column(col: &EncryptedColumn) -> Vec<f64> {
    col.chunks
        .iter()
        .flat_map(|c| c.slots().iter().copied())
        .take(col.n_valid)
        .collect()
}

/// How a raw CSV cell becomes a number.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Identity,
    /// Label to value, e.g. `yes → 1`, `no → 0`.
    Categorical(BTreeMap<String, f64>),
    /// Parse, then multiply by the factor.
    Rescale(f64),
}

impl Transform {
    pub fn yes_no() -> Self {
        Transform::Categorical(BTreeMap::from([("yes".into(), 1.0), ("no".into(), 0.0)]))
    }

    fn apply(&self, raw: &str) -> Option<f64> {
        match self {
            Transform::Identity => raw.parse().ok(),
            Transform::Rescale(f) => raw.parse::<f64>().ok().map(|v| v * f),
            Transform::Categorical(map) => map.get(raw).copied(),
        }
        .filter(|v: &f64| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub path: PathBuf,
    /// Columns not listed here are parsed as plain numbers.
    pub feature_map: BTreeMap<String, Transform>,
}

impl DatasetSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            feature_map: BTreeMap::new(),
        }
    }

    pub fn with_transform(mut self, column: impl Into<String>, t: Transform) -> Self {
        self.feature_map.insert(column.into(), t);
        self
    }

    /// Adult census extract: `age`, `education-num`, `hours-per-week` used as is.
    pub fn adult(path: impl Into<PathBuf>) -> Self {
        Self::new(path)
    }

    /// Medical insurance: `smoker` as yes/no indicator, `charges` in thousands.
    pub fn insurance(path: impl Into<PathBuf>) -> Self {
        Self::new(path)
            .with_transform("smoker", Transform::yes_no())
            .with_transform("charges", Transform::Rescale(1e-3))
    }

    fn transform(&self, column: &str) -> &Transform {
        self.feature_map.get(column).unwrap_or(&Transform::Identity)
    }
}

/// Numeric columns read from a CSV file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<(String, Vec<f64>)>,
    /// Rows skipped because a selected cell was empty or `?`.
    pub dropped_rows: usize,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |(_, v)| v.len())
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "?"
}

/// Reads the selected columns. Cells are trimmed; rows where any selected
/// cell is empty or `?` are dropped and counted. Row numbers in errors are
/// 1-based data rows (the header is row 0).
pub fn load_csv(spec: &DatasetSpec, features: &[&str]) -> Result<Table> {
    let file = File::open(&spec.path).map_err(|source| Error::Io {
        path: spec.path.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let indices = features
        .iter()
        .map(|f| {
            headers
                .iter()
                .position(|h| h == *f)
                .ok_or_else(|| Error::MissingColumn((*f).to_string()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); features.len()];
    let mut dropped_rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cells: Vec<&str> = indices.iter().map(|&i| record.get(i).unwrap_or("")).collect();
        if cells.iter().any(|c| is_missing(c)) {
            dropped_rows += 1;
            continue;
        }
        for ((cell, name), out) in cells.iter().zip(features).zip(columns.iter_mut()) {
            let value = spec.transform(name).apply(cell).ok_or_else(|| Error::UnparsableCell {
                row: row + 1,
                column: (*name).to_string(),
                value: (*cell).to_string(),
            })?;
            out.push(value);
        }
    }
    Ok(Table {
        columns: features.iter().map(|f| f.to_string()).zip(columns).collect(),
        dropped_rows,
    })
}

/// `n` pseudo-random uniforms on `[lo, hi)`, reproducible from `seed`.
pub fn synthetic_uniform(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(lo, hi);
    dist.sample_iter(&mut rng).take(n).collect()
}

/// `n` evenly spaced points with both endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

/// `n` points on `[lo, mid]` followed by `n` points on `[mid, hi]`. The
/// shared endpoint `mid` appears twice.
pub fn two_range_grid(lo: f64, mid: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut grid = linspace(lo, mid, n);
    grid.extend(linspace(mid, hi, n));
    grid
}

/// The 32,768-point inverse-square-root benchmark grid over `[0.001, 100]`.
pub fn invsqrt_grid() -> Vec<f64> {
    two_range_grid(0.001, 1.0, 100.0, 16_384)
}

/// Mean relative error `mean(|aᵢ − eᵢ| / |eᵢ|)`.
pub fn mre(approx: &[f64], exact: &[f64]) -> Result<f64> {
    if approx.len() != exact.len() {
        return Err(Error::ColumnLengthMismatch {
            left: approx.len(),
            right: exact.len(),
        });
    }
    if exact.is_empty() {
        return Err(Error::EmptyColumn);
    }
    if let Some(index) = exact.iter().position(|&e| e == 0.0) {
        return Err(Error::ZeroReference { index });
    }
    let total: f64 = approx.iter().zip(exact).map(|(a, e)| ((a - e) / e).abs()).sum();
    Ok(total / exact.len() as f64)
}

/// Largest absolute difference.
pub fn max_abs_error(approx: &[f64], exact: &[f64]) -> f64 {
    approx.iter().zip(exact).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max)
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_rows(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(create(path)?);
    writeln!(out, "{header}").map_err(io)?;
    for row in rows {
        writeln!(out, "{row}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Synthetic stand-in with the Adult schema subset used here. A few rows
/// carry `?` in `hours-per-week` to exercise the missing-value path.
pub fn write_adult_fixture(path: &Path, rows: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines = (0..rows).map(move |i| {
        let age = 17 + (rng.gen::<f64>().powf(1.6) * 73.0) as u32;
        let edu = (1 + rng.gen_range(0..16)).min(16);
        let hours = if rng.gen_bool(0.6) { 40 } else { rng.gen_range(1..=99) };
        let hours = if i % 97 == 5 {
            "?".to_string()
        } else {
            hours.to_string()
        };
        format!("{age}, Private, {edu}, {hours}, <=50K")
    });
    write_rows(path, "age,workclass,education-num,hours-per-week,income", lines)
}

/// Synthetic stand-in with the Insurance schema.
pub fn write_insurance_fixture(path: &Path, rows: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines = (0..rows).map(move |_| {
        let age: u32 = rng.gen_range(18..=64);
        let bmi = 18.0 + rng.gen::<f64>() * 25.0;
        let smoker = rng.gen_bool(0.2);
        let base = 1_121.87 + 250.0 * (age - 18) as f64 + rng.gen::<f64>() * 6_000.0;
        let charges = if smoker {
            base + 20_000.0 + 400.0 * (bmi - 18.0)
        } else {
            base
        };
        let sex = if rng.gen_bool(0.5) { "female" } else { "male" };
        let smoker = if smoker { "yes" } else { "no" };
        format!("{age},{sex},{bmi:.3},0,{smoker},southeast,{charges:.2}")
    });
    write_rows(path, "age,sex,bmi,children,smoker,region,charges", lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::CkksParams;

    fn ctx(slots: usize) -> EvalContext {
        EvalContext::new(CkksParams::default().with_slot_count(slots)).unwrap()
    }

    #[test]
    fn encode_chunk_arithmetic() {
        let c = ctx(32_768);
        let col = encode_column(&c, &vec![1.0; 1_000_000]).unwrap();
        assert_eq!(col.chunks().len(), 31);
        assert_eq!(col.valid_in_chunk(30), 16_960);
        assert_eq!(col.valid_in_chunk(0), 32_768);
        let small = encode_column(&c, &[2.0; 10]).unwrap();
        assert_eq!(small.chunks().len(), 1);
        assert_eq!(small.n_valid(), 10);
    }

    #[test]
    fn encode_decode_round_trip() {
        let c = ctx(4);
        let values = [0.5, -1.25, 3.0, 7.0, 11.0, 1e-3];
        let col = encode_column(&c, &values).unwrap();
        assert_eq!(col.chunks()[1].slots(), &[11.0, 1e-3, 0.0, 0.0]);
        assert_eq!(decode_column(&col), values);
        assert!(decode_column(&encode_column(&c, &[]).unwrap()).is_empty());
        assert!(matches!(
            encode_column(&c, &[1.0, f64::NAN]),
            Err(Error::NonFiniteValue { index: 1 })
        ));
    }

    #[test]
    fn grid_spacing() {
        let g = linspace(0.001, 1.0, 16_384);
        assert!((g[1] - g[0] - 6.10e-5).abs() < 1e-7);
        let g = linspace(1.0, 100.0, 16_384);
        assert!((g[1] - g[0] - 6.04e-3).abs() < 1e-5);
        let full = invsqrt_grid();
        assert_eq!(full.len(), 32_768);
        assert_eq!(full[16_383], 1.0);
        assert_eq!(full[16_384], 1.0);
        assert_eq!(*full.last().unwrap(), 100.0);
    }

    #[test]
    fn uniform_is_deterministic() {
        let a = synthetic_uniform(7, 100, 0.0, 20.0);
        assert_eq!(a, synthetic_uniform(7, 100, 0.0, 20.0));
        assert_ne!(a, synthetic_uniform(8, 100, 0.0, 20.0));
        assert!(a.iter().all(|v| (0.0..20.0).contains(v)));
    }

    #[test]
    fn mre_examples() {
        assert_eq!(mre(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let exact = [1.0, -4.0, 0.5];
        let scaled: Vec<f64> = exact.iter().map(|e| 1.01 * e).collect();
        assert!((mre(&scaled, &exact).unwrap() - 0.01).abs() < 1e-12);
        // |1.1−1|/1 = 0.1, |−3−(−4)|/4 = 0.25, |0.5−0.5| = 0
        let m = mre(&[1.1, -3.0, 0.5], &exact).unwrap();
        assert!((m - 0.35 / 3.0).abs() < 1e-12);
        assert!(matches!(mre(&[1.0], &[0.0]), Err(Error::ZeroReference { index: 0 })));
    }

    #[test]
    fn csv_transforms_and_missing_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ins.csv");
        std::fs::write(
            &path,
            "age,smoker,charges\n19, yes ,16884.924\n18,no,1121.8739\n?,no,3000\n",
        )
        .unwrap();
        let t = load_csv(&DatasetSpec::insurance(&path), &["age", "smoker", "charges"]).unwrap();
        assert_eq!(t.dropped_rows, 1);
        assert_eq!(t.column("smoker").unwrap(), &[1.0, 0.0]);
        let charges = t.column("charges").unwrap();
        assert!((charges[1] - 1.1218739).abs() < 1e-12);

        let header_only = dir.path().join("h.csv");
        std::fs::write(&header_only, "age,bmi\n").unwrap();
        let t = load_csv(&DatasetSpec::new(&header_only), &["age"]).unwrap();
        assert_eq!(t.rows(), 0);
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "age,smoker\n20,no\n21,maybe\n").unwrap();
        let spec = DatasetSpec::insurance(&path);
        assert!(matches!(
            load_csv(&spec, &["bmi"]),
            Err(Error::MissingColumn(c)) if c == "bmi"
        ));
        assert!(matches!(
            load_csv(&spec, &["smoker"]),
            Err(Error::UnparsableCell { row: 2, .. })
        ));
        assert!(load_csv(&DatasetSpec::new(dir.path().join("none.csv")), &["a"])
            .unwrap_err()
            .is_io_error());
    }

    #[test]
    fn fixtures_parse() {
        let dir = tempfile::tempdir().unwrap();
        let adult = dir.path().join("adult.csv");
        write_adult_fixture(&adult, 500, 1).unwrap();
        let t = load_csv(&DatasetSpec::adult(&adult), &["age", "education-num", "hours-per-week"]).unwrap();
        assert!(t.dropped_rows > 0);
        assert_eq!(t.rows() + t.dropped_rows, 500);
        let ins = dir.path().join("ins.csv");
        write_insurance_fixture(&ins, 300, 1).unwrap();
        let t = load_csv(&DatasetSpec::insurance(&ins), &["smoker", "charges"]).unwrap();
        assert_eq!(t.rows(), 300);
        assert!(t.column("charges").unwrap().iter().all(|&c| c >= 1.12));
        let again = load_csv(&DatasetSpec::insurance(&ins), &["smoker", "charges"]).unwrap();
        assert_eq!(t, again);
    }
}
