//! Binary classification datasets: CSV ingestion, splitting, subsampling and
//! the generator behind the bundled benchmark file.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::derive_seed;
use crate::error::{Error, Result};

const SUBSAMPLE_RETRIES: u64 = 10;
const MIN_SPLIT_ROWS: usize = 2;

/// Feature matrix (`n × F`, finite) plus 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: DVector<f64>,
    feature_names: Vec<String>,
    label_name: String,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Schema(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::Schema(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema("feature matrix contains non-finite values".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Schema(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self {
            features,
            labels: DVector::from_iterator(labels.len(), labels.iter().map(|&l| l as f64)),
            feature_names,
            label_name: "label".into(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    /// Labels as 0.0 / 1.0.
    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1.0).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let p = self.positives();
        p > 0 && p < self.n_rows()
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: self.labels.select_rows(idx),
            feature_names: self.feature_names.clone(),
            label_name: self.label_name.clone(),
        }
    }

    pub(crate) fn with_features(&self, features: DMatrix<f64>) -> Dataset {
        Dataset {
            features,
            ..self.clone()
        }
    }
}

/// Reads a headered CSV whose last column is the 0/1 label and whose other
/// columns are numeric features.
pub fn load_csv_dataset(path: &Path) -> Result<Dataset> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.len() < 2 {
        return Err(Error::Schema(format!(
            "need at least one feature column and a label column, header has {} columns",
            headers.len()
        )));
    }
    let n_feat = headers.len() - 1;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: "-".into(),
            message: e.to_string(),
        })?;
        if rec.len() != headers.len() {
            return Err(Error::Schema(format!(
                "row {row} has {} fields, header has {}",
                rec.len(),
                headers.len()
            )));
        }
        for (j, cell) in rec.iter().enumerate() {
            let parse_err = |message: String| Error::Parse {
                row,
                column: headers[j].clone(),
                message,
            };
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("cannot parse {cell:?} as a number")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value {cell:?}")));
            }
            if j < n_feat {
                values.push(v);
            } else if v == 0.0 || v == 1.0 {
                labels.push(v as u8);
            } else {
                return Err(Error::Schema(format!(
                    "row {row}: label column {:?} has value {cell}, expected 0 or 1",
                    headers[j]
                )));
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Schema("dataset has no rows".into()));
    }
    let features = DMatrix::from_row_slice(labels.len(), n_feat, &values);
    let mut ds = Dataset::new(features, labels, headers[..n_feat].to_vec())?;
    ds.label_name = headers[n_feat].clone();
    Ok(ds)
}

/// Writes `ds` in the format [`load_csv_dataset`] reads.
pub fn write_csv_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(e.into()))?;
    let mut header = ds.feature_names.clone();
    header.push(ds.label_name.clone());
    w.write_record(&header).map_err(|e| io_err(e.into()))?;
    for i in 0..ds.n_rows() {
        let mut rec: Vec<String> = ds.features.row(i).iter().map(|v| format!("{v:.6}")).collect();
        rec.push(format!("{}", ds.labels[i] as u8));
        w.write_record(&rec).map_err(|e| io_err(e.into()))?;
    }
    w.flush().map_err(io_err)
}

/// Shuffled index partition into train / validation / held-out blocks.
/// Block sizes are `round(frac · n)` for the first two; the rest is held out.
pub fn split_indices(
    n: usize,
    train_frac: f64,
    valid_frac: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && valid_frac > 0.0 && train_frac + valid_frac < 1.0) {
        return Err(Error::Split(format!(
            "fractions must be positive and sum below 1, got train={train_frac} valid={valid_frac}"
        )));
    }
    let n_train = (train_frac * n as f64).round() as usize;
    let n_valid = (valid_frac * n as f64).round() as usize;
    if n_train < MIN_SPLIT_ROWS || n_valid < MIN_SPLIT_ROWS || n < n_train + n_valid + MIN_SPLIT_ROWS {
        return Err(Error::Split(format!(
            "{n} rows are too few for a {train_frac}/{valid_frac} split"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let heldout = idx.split_off(n_train + n_valid);
    let valid = idx.split_off(n_train);
    Ok((idx, valid, heldout))
}

/// Splits into (train, validation, held-out). Every block must contain both classes.
pub fn split_dataset(ds: &Dataset, train_frac: f64, valid_frac: f64, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = split_indices(ds.n_rows(), train_frac, valid_frac, seed)?;
    let parts = (ds.select(&a), ds.select(&b), ds.select(&c));
    for (name, part) in [("train", &parts.0), ("validation", &parts.1), ("held-out", &parts.2)] {
        if !part.has_both_classes() {
            return Err(Error::Split(format!("{name} split contains a single class")));
        }
    }
    Ok(parts)
}

/// Uniform draw of `ceil(fraction · n)` rows without replacement. Redraws up
/// to ten times if the sample holds a single class.
pub fn subsample(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "subset fraction {fraction} not in (0, 1]"
        )));
    }
    let n = ds.n_rows();
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    for attempt in 0..SUBSAMPLE_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt));
        let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
        idx.sort_unstable();
        let sub = ds.select(&idx);
        if sub.has_both_classes() {
            return Ok(sub);
        }
    }
    Err(Error::Split(format!(
        "no two-class subsample of {k} rows found in {SUBSAMPLE_RETRIES} draws"
    )))
}

/// Gaussian features, the first `informative` of which drive a noisy linear
/// label rule; the remainder are pure noise.
pub fn generate_classification(n: usize, n_features: usize, informative: usize, seed: u64) -> Result<Dataset> {
    if informative == 0 || informative > n_features {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= informative <= features, got {informative} of {n_features}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..informative)
        .map(|j| {
            let mag = 1.5 - j as f64 * (1.0 / informative as f64);
            if j % 2 == 0 {
                mag
            } else {
                -mag
            }
        })
        .collect();
    let mut features = DMatrix::zeros(n, n_features);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut score = 0.0;
        for j in 0..n_features {
            let v: f64 = StandardNormal.sample(&mut rng);
            features[(i, j)] = v;
            if j < informative {
                score += weights[j] * v;
            }
        }
        let eps: f64 = StandardNormal.sample(&mut rng);
        labels.push(u8::from(score + eps > 0.0));
    }
    let names = (0..n_features).map(|j| format!("x{}", j + 1)).collect();
    Dataset::new(features, labels, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_small_file() {
        let f = write("a,b,y\n0.1,2,0\n0.3,1,1\n-1,0,1\n");
        let ds = load_csv_dataset(f.path()).unwrap();
        assert_eq!((ds.n_rows(), ds.n_features()), (3, 2));
        assert_eq!(ds.feature_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.label_name(), "y");
        assert_eq!(ds.features()[(2, 0)], -1.0);
        assert_eq!(ds.positives(), 2);
    }

    #[test]
    fn nan_cell_is_parse_error() {
        let f = write("a,b,y\n0.1,NaN,0\n");
        match load_csv_dataset(f.path()) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (1, "b")),
            other => panic!("{other:?}"),
        }
        let f = write("a,b,y\n0.1,abc,0\n");
        assert!(matches!(load_csv_dataset(f.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn bad_label_is_schema_error() {
        let f = write("a,y\n0.1,2\n");
        assert!(matches!(load_csv_dataset(f.path()), Err(Error::Schema(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_csv_dataset(Path::new("/nonexistent/data.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let (a, b, c) = split_indices(10, 0.6, 0.2, 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (6, 2, 2));
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.6, 0.2, 3).unwrap(), (a, b, c));
        assert!(split_indices(4, 0.6, 0.2, 3).is_err());
    }

    #[test]
    fn subsample_size_and_full_fraction() {
        let ds = generate_classification(200, 4, 2, 1).unwrap();
        let sub = subsample(&ds, 0.1, 9).unwrap();
        assert_eq!(sub.n_rows(), 20);
        assert!(sub.has_both_classes());
        let all = subsample(&ds, 1.0, 9).unwrap();
        assert_eq!(all, ds);
        assert_eq!(subsample(&ds, 0.101, 9).unwrap().n_rows(), 21);
    }

    #[test]
    fn roundtrip_csv() {
        let ds = generate_classification(30, 3, 2, 4).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv_dataset(&ds, f.path()).unwrap();
        let back = load_csv_dataset(f.path()).unwrap();
        assert_eq!(back.labels(), ds.labels());
        assert!((back.features() - ds.features()).amax() < 1e-6);
    }

    #[test]
    fn generator_is_balanced_enough() {
        let ds = generate_classification(2000, 20, 5, 7).unwrap();
        let p = ds.positives() as f64 / 2000.0;
        assert!((0.4..0.6).contains(&p));
    }
}
