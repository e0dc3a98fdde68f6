//! Datasets, normalisation and train/validation/test split generation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Minimum number of rows accepted from a CSV file.
pub const MIN_ROWS: usize = 10;

/// Fraction of the training set carved out for validation.
pub const VAL_FRACTION: f64 = 0.1;

/// Environment variable naming the directory with `<name>.csv` files.
pub const DATA_DIR_ENV: &str = "BNN_DATA_DIR";

/// Dataset names of the UCI regression suite, in table column order.
pub const UCI_DATASETS: [&str; 9] =
    ["boston", "concrete", "energy", "kin8nm", "naval", "power", "protein", "wine", "yacht"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: PathBuf,
    pub sha256: String,
}

/// Regression data: `x` is `N × D`, `y` is `N × K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix,
    pub y: Matrix,
    pub provenance: Option<Provenance>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::DimensionMismatch { context: "dataset rows", expected: x.rows(), got: y.rows() });
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Config("dataset contains non-finite values".into()));
        }
        Ok(Self { name: name.into(), x, y, provenance: None })
    }

    /// Scalar-output dataset from column vectors.
    pub fn from_xy(name: impl Into<String>, xs: &[Vec<f64>], ys: &[f64]) -> Result<Self> {
        let y = Matrix::from_vec(ys.len(), 1, ys.to_vec())?;
        Self::new(name, Matrix::from_rows(xs), y)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.y.cols()
    }

    /// Content hash of the source file, or of the values for in-memory data.
    pub fn hash(&self) -> String {
        match &self.provenance {
            Some(p) => p.sha256.clone(),
            None => {
                let mut h = Sha256::new();
                for v in self.x.as_slice().iter().chain(self.y.as_slice()) {
                    h.update(v.to_le_bytes());
                }
                hex(&h.finalize())
            }
        }
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let pick = |m: &Matrix| {
            let mut data = Vec::with_capacity(idx.len() * m.cols());
            for &i in idx {
                data.extend_from_slice(m.row(i));
            }
            Matrix::from_vec(idx.len(), m.cols(), data).expect("sizes agree")
        };
        Dataset { name: self.name.clone(), x: pick(&self.x), y: pick(&self.y), provenance: self.provenance.clone() }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Column layout of a CSV file: a header row, then inputs, with the final
/// `n_targets` columns as targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "one")]
    pub n_targets: usize,
    /// Header names of columns to ignore.
    #[serde(default)]
    pub drop_columns: Vec<String>,
}

fn one() -> usize {
    1
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { name: None, n_targets: 1, drop_columns: Vec::new() }
    }
}

impl CsvSchema {
    /// Reads `<stem>.schema.json` next to `csv_path`, or the default schema.
    pub fn for_csv(csv_path: &Path) -> Result<Self> {
        let schema_path = csv_path.with_extension("schema.json");
        if schema_path.exists() {
            Ok(serde_json::from_str(&fs::read_to_string(schema_path)?)?)
        } else {
            Ok(Self::default())
        }
    }
}

/// Parses CSV text. Row numbers in errors count data rows from 1.
pub fn parse_csv(text: &str, name: &str, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, column: 0, message: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let keep: Vec<usize> = (0..headers.len()).filter(|&i| !schema.drop_columns.contains(&headers[i])).collect();
    if schema.n_targets == 0 || keep.len() <= schema.n_targets {
        return Err(Error::Config(format!("{name}: need at least one input and {} target column(s)", schema.n_targets)));
    }
    let d = keep.len() - schema.n_targets;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (ri, rec) in rdr.records().enumerate() {
        let row = ri + 1;
        let rec = rec.map_err(|e| Error::Parse { row, column: 0, message: e.to_string() })?;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: rec.len().min(headers.len()) + 1,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        for (pos, &ci) in keep.iter().enumerate() {
            let field = rec[ci].trim();
            if field.is_empty() || field == "NA" || field == "?" || field.eq_ignore_ascii_case("nan") {
                return Err(Error::MissingValue { row, column: ci + 1 });
            }
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse { row, column: ci + 1, message: format!("not a number: {field:?}") })?;
            if pos < d {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let n = xs.len() / d;
    Dataset::new(name, Matrix::from_vec(n, d, xs)?, Matrix::from_vec(n, schema.n_targets, ys)?)
}

/// Loads a CSV file and records its content hash.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::DatasetNotFound(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    let text = String::from_utf8_lossy(&bytes);
    let name = schema
        .name
        .clone()
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let mut ds = parse_csv(&text, &name, schema)?;
    if ds.len() < MIN_ROWS {
        return Err(Error::Config(format!("{name}: {} rows, need at least {MIN_ROWS}", ds.len())));
    }
    ds.provenance = Some(Provenance { path: path.to_path_buf(), sha256: sha256_hex(&bytes) });
    Ok(ds)
}

/// Loads `<dir>/<name>.csv` with its optional schema file.
pub fn load_named(dir: &Path, name: &str) -> Result<Dataset> {
    let path = dir.join(format!("{name}.csv"));
    let schema = CsvSchema::for_csv(&path)?;
    load_csv(&path, &schema)
}

/// Dataset directory from [`DATA_DIR_ENV`], if set.
pub fn data_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SplitKind {
    Standard { seed: u64, fraction: f64 },
    Gap { d: usize, seed: u64 },
}

/// Disjoint train / validation / test indices into a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub dataset_hash: String,
    #[serde(flatten)]
    pub kind: SplitKind,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitManifest {
    /// Stable identifier such as `gap-3` or `std-0-s17`.
    pub fn id(&self) -> String {
        match &self.kind {
            SplitKind::Gap { d, .. } => format!("gap-{d}"),
            SplitKind::Standard { seed, .. } => format!("std-{seed}"),
        }
    }

    /// Train and validation indices together, sorted.
    pub fn train_val(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.train.iter().chain(&self.val).copied().collect();
        v.sort_unstable();
        v
    }

    /// Checks disjointness, range and a nonempty test set.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::Config(format!("split index {i} out of range {n}")));
            }
            if seen[i] {
                return Err(Error::Config(format!("split index {i} appears twice")));
            }
            seen[i] = true;
        }
        if self.test.is_empty() {
            return Err(Error::Config("empty test set".into()));
        }
        Ok(())
    }

    /// Compact JSON with a trailing newline; byte-stable for equal manifests.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Loads a manifest and checks it was produced for `dataset`.
    pub fn load_for(path: &Path, dataset: &Dataset) -> Result<Self> {
        let m = Self::load(path)?;
        let h = dataset.hash();
        if m.dataset_hash != h {
            return Err(Error::HashMismatch { name: dataset.name.clone(), expected: m.dataset_hash, got: h });
        }
        m.validate(dataset.len())?;
        Ok(m)
    }
}

fn carve_validation(mut train: Vec<usize>, rng: &mut RngStream) -> (Vec<usize>, Vec<usize>) {
    let n_val = ((train.len() as f64) * VAL_FRACTION).round().max(1.0) as usize;
    let n_val = n_val.min(train.len().saturating_sub(1));
    train.sort_unstable();
    let perm = rng.permutation(train.len());
    let mut val: Vec<usize> = perm[..n_val].iter().map(|&p| train[p]).collect();
    let mut rest: Vec<usize> = perm[n_val..].iter().map(|&p| train[p]).collect();
    val.sort_unstable();
    rest.sort_unstable();
    (rest, val)
}

/// Start and length of the held-out middle block for `n` sorted points.
pub fn middle_third(n: usize) -> (usize, usize) {
    (n / 3, n.div_ceil(3))
}

/// One gap split per input dimension.
///
/// Points are stably sorted along dimension `d` (ties keep original order);
/// sorted positions `[⌊N/3⌋, ⌊N/3⌋ + ⌈N/3⌉)` form the test set and the rest
/// is training data, of which a seeded 10% becomes validation.
pub fn make_gap_splits(dataset: &Dataset, seed: u64) -> Result<Vec<SplitManifest>> {
    let n = dataset.len();
    if n < 3 {
        return Err(Error::Config(format!("gap splits need at least 3 points, got {n}")));
    }
    let hash = dataset.hash();
    let (start, len) = middle_third(n);
    (0..dataset.input_dim())
        .map(|d| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| dataset.x[(a, d)].total_cmp(&dataset.x[(b, d)]));
            let mut test: Vec<usize> = order[start..start + len].to_vec();
            test.sort_unstable();
            let train: Vec<usize> = order[..start].iter().chain(&order[start + len..]).copied().collect();
            let mut rng = RngStream::substream(seed, d as u64);
            let (train, val) = carve_validation(train, &mut rng);
            Ok(SplitManifest { dataset_hash: hash.clone(), kind: SplitKind::Gap { d, seed }, train, val, test })
        })
        .collect()
}

/// Uniformly random splits; split `i` uses seed `seed + i`.
pub fn make_standard_splits(
    dataset: &Dataset,
    n_splits: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<Vec<SplitManifest>> {
    let n = dataset.len();
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let n_train = ((n as f64) * train_fraction).round() as usize;
    if n_train < 2 || n_train >= n {
        return Err(Error::Config(format!("cannot split {n} points with fraction {train_fraction}")));
    }
    let hash = dataset.hash();
    Ok((0..n_splits)
        .map(|i| {
            let s = seed + i as u64;
            let mut rng = RngStream::new(s);
            let perm = rng.permutation(n);
            let mut test = perm[n_train..].to_vec();
            test.sort_unstable();
            let (train, val) = carve_validation(perm[..n_train].to_vec(), &mut rng);
            SplitManifest {
                dataset_hash: hash.clone(),
                kind: SplitKind::Standard { seed: s, fraction: train_fraction },
                train,
                val,
                test,
            }
        })
        .collect())
}

/// Two-cluster noisy sine regression task in one dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineTask {
    pub clusters: Vec<(f64, f64)>,
    pub n_per_cluster: usize,
    pub noise_std: f64,
    pub frequency: f64,
}

impl Default for SineTask {
    fn default() -> Self {
        Self { clusters: vec![(-2.0, -1.0), (1.0, 2.0)], n_per_cluster: 20, noise_std: 0.1, frequency: 0.75 }
    }
}

impl SineTask {
    pub fn wave(&self, x: f64) -> f64 {
        (self.frequency * x).sin()
    }

    /// Open interval between the first two clusters.
    pub fn gap(&self) -> (f64, f64) {
        let mut c = self.clusters.clone();
        c.sort_by(|a, b| a.0.total_cmp(&b.0));
        (c[0].1, c[1].0)
    }
}

/// Samples `x` uniformly in each cluster and `y = sin(freq·x) + N(0, σ²)`.
pub fn synth_sine(task: &SineTask, seed: u64) -> Result<Dataset> {
    let mut sorted = task.clusters.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.iter().any(|(lo, hi)| !(lo < hi)) || sorted.windows(2).any(|w| w[0].1 > w[1].0) {
        return Err(Error::Config("cluster ranges must be nonempty and disjoint".into()));
    }
    let mut rng = RngStream::new(seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(lo, hi) in &task.clusters {
        for _ in 0..task.n_per_cluster {
            let x = rng.uniform_range(lo, hi);
            let noise = rng.normal();
            xs.push(vec![x]);
            ys.push(task.wave(x) + task.noise_std * noise);
        }
    }
    Dataset::from_xy("sine1d", &xs, &ys)
}

/// Per-column affine normalisation fitted on training (and validation) rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

fn column_stats(m: &Matrix, rows: &[usize], what: &str) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    (0..m.cols())
        .map(|c| {
            let mean = rows.iter().map(|&r| m[(r, c)]).sum::<f64>() / n;
            let var = rows.iter().map(|&r| (m[(r, c)] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if std > 0.0 {
                (mean, std)
            } else {
                log::warn!("constant {what} column {c}; using unit scale");
                (mean, 1.0)
            }
        })
        .unzip()
}

impl Normalizer {
    /// Fits on the given rows only; pass train ∪ validation, never test rows.
    pub fn fit(data: &Dataset, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("normalizer needs at least one row".into()));
        }
        let (x_mean, x_std) = column_stats(&data.x, rows, "input");
        let (y_mean, y_std) = column_stats(&data.y, rows, "output");
        Ok(Self { x_mean, x_std, y_mean, y_std })
    }

    pub fn identity(d: usize, k: usize) -> Self {
        Self { x_mean: vec![0.0; d], x_std: vec![1.0; d], y_mean: vec![0.0; k], y_std: vec![1.0; k] }
    }

    pub fn normalize_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.x_mean).zip(&self.x_std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn normalize_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.y_mean).zip(&self.y_std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn denormalize_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.x_mean).zip(&self.x_std).map(|((v, m), s)| v * s + m).collect()
    }

    pub fn denormalize_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.y_mean).zip(&self.y_std).map(|((v, m), s)| v * s + m).collect()
    }

    /// Normalised copy of the given rows.
    pub fn apply(&self, data: &Dataset, rows: &[usize]) -> Dataset {
        let sub = data.subset(rows);
        let mut x = sub.x.clone();
        let mut y = sub.y.clone();
        for r in 0..x.rows() {
            let nx = self.normalize_x(sub.x.row(r));
            x.row_mut(r).copy_from_slice(&nx);
            let ny = self.normalize_y(sub.y.row(r));
            y.row_mut(r).copy_from_slice(&ny);
        }
        Dataset { name: data.name.clone(), x, y, provenance: data.provenance.clone() }
    }

    /// Added to a per-point log likelihood computed in normalised units to
    /// express it in original target units.
    pub fn ll_unit_correction(&self) -> f64 {
        -self.y_std.iter().map(|s| s.ln()).sum::<f64>()
    }
}
