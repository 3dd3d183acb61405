//! File ingestion and serialization: dense and triplet relevance matrices,
//! geographic relevance scoring, synthetic instance generation, and the
//! allocation and report formats.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::Seed;
use crate::metrics::MetricsReport;
use crate::types::{validate_instance, Allocation, Instance, InstanceError, RelevanceMatrix};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("file contains no data rows")]
    Empty,
    #[error("row {row} has {got} columns, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("cannot parse number {text:?} at row {row}, column {col}")]
    BadNumber { row: usize, col: usize, text: String },
    #[error("invalid score {value} at row {row}, column {col}: must be finite and nonnegative")]
    BadScore { row: usize, col: usize, value: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown product key {key:?} at line {line}")]
    UnknownKey { line: usize, key: String },
    #[error("invalid coordinate ({lat}, {lon}): latitude must be in [-90, 90], longitude in [-180, 180]")]
    BadCoordinate { lat: f64, lon: f64 },
    #[error("product id {id} has no key in the entity index")]
    UnmappedId { id: usize },
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// One sparse rating-style record.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletRecord {
    pub customer_key: String,
    pub product_key: String,
    pub score: f64,
}

/// Maps external string keys to dense 0-based ids, in first-appearance order.
#[derive(Debug, Clone, Default)]
pub struct EntityIndex {
    customer_keys: Vec<String>,
    product_keys: Vec<String>,
    product_ids: HashMap<String, usize>,
}

impl EntityIndex {
    pub fn customer_keys(&self) -> &[String] {
        &self.customer_keys
    }

    pub fn product_keys(&self) -> &[String] {
        &self.product_keys
    }

    pub fn product_id(&self, key: &str) -> Option<usize> {
        self.product_ids.get(key).copied()
    }
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64, IoError> {
    let text = cell.trim();
    let value: f64 = text.parse().map_err(|_| IoError::BadNumber {
        row,
        col,
        text: text.to_string(),
    })?;
    if !value.is_finite() || value < 0.0 {
        return Err(IoError::BadScore { row, col, value });
    }
    Ok(value)
}

/// Loads a rectangular numeric CSV as a relevance matrix; a single header
/// row is skipped when its first cell is not numeric.
pub fn load_dense_csv<P: AsRef<Path>>(path: P) -> Result<RelevanceMatrix, IoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut values: Vec<f64> = Vec::new();
    let mut n = 0usize;
    let mut rows = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let row_number = idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if rows == 0 && idx == 0 {
            // Header row: non-numeric first cell.
            if cells[0].trim().parse::<f64>().is_err() {
                continue;
            }
        }
        if rows == 0 {
            n = cells.len();
        } else if cells.len() != n {
            return Err(IoError::Ragged {
                row: row_number,
                expected: n,
                got: cells.len(),
            });
        }
        for (col, cell) in cells.iter().enumerate() {
            values.push(parse_cell(cell, row_number, col + 1)?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(IoError::Empty);
    }
    Ok(RelevanceMatrix::new(rows, n, values)?)
}

/// Loads a `customer,product,score` CSV, densifying missing entries to zero.
/// Duplicate (customer, product) pairs resolve to the last value seen.
pub fn load_triplets_csv<P: AsRef<Path>>(
    path: P,
) -> Result<(RelevanceMatrix, EntityIndex), IoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        None => return Err(IoError::Empty),
        Some((_, line)) => line?,
    };
    let expected = ["customer", "product", "score"];
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_lowercase()).collect();
    if cols != expected {
        return Err(IoError::Parse {
            line: 1,
            msg: format!("expected header \"customer,product,score\", got {header:?}"),
        });
    }

    let mut records: Vec<TripletRecord> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line_number = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return Err(IoError::Parse {
                line: line_number,
                msg: format!("expected 3 fields, got {}", cells.len()),
            });
        }
        records.push(TripletRecord {
            customer_key: cells[0].trim().to_string(),
            product_key: cells[1].trim().to_string(),
            score: parse_cell(cells[2], line_number, 3)?,
        });
    }
    if records.is_empty() {
        return Err(IoError::Empty);
    }
    Ok(densify(&records))
}

/// Assigns dense ids in first-appearance order and spreads the records over
/// a zero-filled matrix; later records overwrite earlier duplicates.
fn densify(records: &[TripletRecord]) -> (RelevanceMatrix, EntityIndex) {
    let mut index = EntityIndex::default();
    let mut customer_ids: HashMap<&str, usize> = HashMap::new();
    let mut cells: Vec<(usize, usize, f64)> = Vec::with_capacity(records.len());
    for record in records {
        let u = *customer_ids
            .entry(record.customer_key.as_str())
            .or_insert_with(|| {
                index.customer_keys.push(record.customer_key.clone());
                index.customer_keys.len() - 1
            });
        let p = *index
            .product_ids
            .entry(record.product_key.clone())
            .or_insert_with(|| {
                index.product_keys.push(record.product_key.clone());
                index.product_keys.len() - 1
            });
        cells.push((u, p, record.score));
    }
    let (m, n) = (index.customer_keys.len(), index.product_keys.len());
    let mut values = vec![0.0; m * n];
    for (u, p, score) in cells {
        values[u * n + p] = score;
    }
    let rel = RelevanceMatrix::new(m, n, values).expect("scores validated during parsing");
    (rel, index)
}

const EARTH_RADIUS_KM: f64 = 6371.0;
const MIN_DISTANCE_KM: f64 = 1e-6;

fn check_coordinate(lat: f64, lon: f64) -> Result<(), IoError> {
    if !lat.is_finite() || !lon.is_finite() || lat.abs() > 90.0 || lon.abs() > 180.0 {
        return Err(IoError::BadCoordinate { lat, lon });
    }
    Ok(())
}

/// Great-circle distance in kilometers.
fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Relevance as rating over geographic distance: entry (u, p) is
/// `rating(p) / max(distance_km(u, p), epsilon)`, the epsilon guarding
/// co-located pairs.
pub fn gl_custom_scores(
    ratings: &[f64],
    customer_coords: &[(f64, f64)],
    product_coords: &[(f64, f64)],
) -> Result<RelevanceMatrix, IoError> {
    assert_eq!(ratings.len(), product_coords.len());
    for (p, &r) in ratings.iter().enumerate() {
        if !r.is_finite() || r < 0.0 {
            return Err(IoError::BadScore {
                row: p + 1,
                col: 1,
                value: r,
            });
        }
    }
    for &(lat, lon) in customer_coords.iter().chain(product_coords) {
        check_coordinate(lat, lon)?;
    }
    let (m, n) = (customer_coords.len(), product_coords.len());
    let mut values = Vec::with_capacity(m * n);
    for &cu in customer_coords {
        for (p, &pr) in product_coords.iter().enumerate() {
            let distance = haversine_km(cu, pr).max(MIN_DISTANCE_KM);
            values.push(ratings[p] / distance);
        }
    }
    Ok(RelevanceMatrix::new(m, n, values)?)
}

/// Value distribution for synthetic instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthDistribution {
    /// Independent uniform values in [0, 1).
    Uniform01,
    /// Uniform values damped by 1/(p+1) per column, so earlier products are
    /// more popular in expectation.
    ZipfPopularity,
}

/// Deterministic synthetic instance: same seed, same matrix.
pub fn synth_instance(
    m: usize,
    n: usize,
    k: usize,
    seed: Seed,
    distribution: SynthDistribution,
) -> Result<Instance, InstanceError> {
    let mut rng = seed.rng();
    let mut values = Vec::with_capacity(m * n);
    for _ in 0..m {
        for p in 0..n {
            let noise: f64 = rng.gen();
            let v = match distribution {
                SynthDistribution::Uniform01 => noise,
                SynthDistribution::ZipfPopularity => noise / (p + 1) as f64,
            };
            values.push(v);
        }
    }
    validate_instance(RelevanceMatrix::new(m, n, values)?, k)
}

/// Writes a relevance matrix as a plain numeric CSV, one customer per row.
/// Values use shortest round-trip formatting, so a write-then-load cycle
/// reproduces the matrix exactly.
pub fn write_dense_csv<P: AsRef<Path>>(rel: &RelevanceMatrix, path: P) -> Result<(), IoError> {
    let mut out = String::new();
    for u in 0..rel.m() {
        for (p, v) in rel.row(u).iter().enumerate() {
            if p > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Writes one bundle per line, product keys (or integer ids) separated by
/// commas, LF line endings.
pub fn write_allocation<P: AsRef<Path>>(
    alloc: &Allocation,
    index: Option<&EntityIndex>,
    path: P,
) -> Result<(), IoError> {
    let mut out = String::new();
    for bundle in alloc.bundles() {
        let mut first = true;
        for &p in bundle {
            if !first {
                out.push(',');
            }
            match index {
                Some(idx) => {
                    let key = idx
                        .product_keys
                        .get(p)
                        .ok_or(IoError::UnmappedId { id: p })?;
                    out.push_str(key);
                }
                None => out.push_str(&p.to_string()),
            }
            first = false;
        }
        out.push('\n');
    }
    File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads an allocation file into raw per-customer id lists, preserving order
/// and duplicates so callers can verify distinctness themselves.
pub fn read_allocation_lists<P: AsRef<Path>>(
    path: P,
    index: Option<&EntityIndex>,
) -> Result<Vec<Vec<usize>>, IoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lists = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_number = idx + 1;
        if line.is_empty() {
            lists.push(Vec::new());
            continue;
        }
        let mut ids = Vec::new();
        for token in line.split(',') {
            let token = token.trim();
            let id = match index {
                Some(index) => index.product_id(token).ok_or_else(|| IoError::UnknownKey {
                    line: line_number,
                    key: token.to_string(),
                })?,
                None => token.parse().map_err(|_| IoError::Parse {
                    line: line_number,
                    msg: format!("cannot parse product id {token:?}"),
                })?,
            };
            ids.push(id);
        }
        lists.push(ids);
    }
    Ok(lists)
}

/// Reads an allocation file written by [`write_allocation`].
pub fn read_allocation<P: AsRef<Path>>(
    path: P,
    index: Option<&EntityIndex>,
) -> Result<Allocation, IoError> {
    let lists = read_allocation_lists(path, index)?;
    Ok(Allocation::new(
        lists
            .into_iter()
            .map(|ids| ids.into_iter().collect())
            .collect(),
    ))
}

/// Run descriptors attached to a serialized metrics report.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    pub algorithm: String,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub elapsed_ms: Option<f64>,
}

/// Flat serialized form of a run: metadata first, then every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub algorithm: String,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub h: f64,
    pub z: f64,
    pub l: f64,
    pub y: f64,
    pub mu_phi: f64,
    pub std_phi: f64,
    pub ef1: bool,
    pub alpha_mms_fraction: f64,
    pub elapsed_ms: Option<f64>,
}

pub const REPORT_CSV_HEADER: &str =
    "algorithm,m,n,k,alpha,seed,h,z,l,y,mu_phi,std_phi,ef1,alpha_mms_fraction,elapsed_ms";

fn float_field(v: f64) -> String {
    // Debug formatting keeps a trailing ".0" on integral values.
    format!("{v:?}")
}

fn optional<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

impl ReportRecord {
    pub fn new(report: &MetricsReport, metadata: &RunMetadata) -> Self {
        Self {
            algorithm: metadata.algorithm.clone(),
            m: metadata.m,
            n: metadata.n,
            k: metadata.k,
            alpha: metadata.alpha,
            seed: metadata.seed,
            h: report.h,
            z: report.z,
            l: report.l,
            y: report.y,
            mu_phi: report.mu_phi,
            std_phi: report.std_phi,
            ef1: report.ef1,
            alpha_mms_fraction: report.alpha_mms_fraction,
            elapsed_ms: metadata.elapsed_ms,
        }
    }

    /// Pretty-printed JSON form, identical to what [`write_report`] emits.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV data row in [`REPORT_CSV_HEADER`] column order.
    pub fn to_csv_row(&self) -> String {
        [
            self.algorithm.clone(),
            self.m.to_string(),
            self.n.to_string(),
            self.k.to_string(),
            self.alpha.map(float_field).unwrap_or_default(),
            optional(&self.seed),
            float_field(self.h),
            float_field(self.z),
            float_field(self.l),
            float_field(self.y),
            float_field(self.mu_phi),
            float_field(self.std_phi),
            self.ef1.to_string(),
            float_field(self.alpha_mms_fraction),
            self.elapsed_ms.map(float_field).unwrap_or_default(),
        ]
        .join(",")
    }
}

/// Serialization target for reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// One flat JSON object per file.
    Json,
    /// Appends one CSV row, writing the header on first use of the file.
    CsvRow,
}

/// Writes a metrics report with its run metadata to `path`.
pub fn write_report<P: AsRef<Path>>(
    report: &MetricsReport,
    metadata: &RunMetadata,
    path: P,
    format: ReportFormat,
) -> Result<(), IoError> {
    write_report_record(&ReportRecord::new(report, metadata), path, format)
}

/// Writes an already-assembled report record to `path`.
pub fn write_report_record<P: AsRef<Path>>(
    record: &ReportRecord,
    path: P,
    format: ReportFormat,
) -> Result<(), IoError> {
    match format {
        ReportFormat::Json => {
            File::create(path)?.write_all(record.to_json().as_bytes())?;
        }
        ReportFormat::CsvRow => {
            append_csv_rows(path, std::iter::once(record.to_csv_row()))?;
        }
    }
    Ok(())
}

/// Appends data rows to a CSV report file, emitting the header exactly once.
pub fn append_csv_rows<P: AsRef<Path>>(
    path: P,
    rows: impl Iterator<Item = String>,
) -> Result<(), IoError> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if file.metadata()?.len() == 0 {
        writeln!(file, "{REPORT_CSV_HEADER}")?;
    }
    for row in rows {
        writeln!(file, "{row}")?;
    }
    Ok(())
}

/// Loads a one-column file of numbers, one value per line.
pub fn load_column<P: AsRef<Path>>(path: P) -> Result<Vec<f64>, IoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut values = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: f64 = line.trim().parse().map_err(|_| IoError::BadNumber {
            row: idx + 1,
            col: 1,
            text: line.trim().to_string(),
        })?;
        values.push(value);
    }
    if values.is_empty() {
        return Err(IoError::Empty);
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn temp_with(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn dense_parses_plain_grid() {
        let f = temp_with("1,2\n3,4\n");
        let rel = load_dense_csv(f.path()).unwrap();
        assert_eq!((rel.m(), rel.n()), (2, 2));
        assert_eq!(rel.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn dense_skips_header() {
        let f = temp_with("a,b\n1,2\n");
        let rel = load_dense_csv(f.path()).unwrap();
        assert_eq!((rel.m(), rel.n()), (1, 2));
    }

    #[test]
    fn dense_reports_ragged_row() {
        let f = temp_with("1,2\n3\n");
        match load_dense_csv(f.path()).unwrap_err() {
            IoError::Ragged { row, expected, got } => {
                assert_eq!((row, expected, got), (2, 2, 1));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn dense_locates_bad_cells() {
        let f = temp_with("1,x\n");
        match load_dense_csv(f.path()).unwrap_err() {
            IoError::BadNumber { row, col, text } => {
                assert_eq!((row, col, text.as_str()), (1, 2, "x"));
            }
            other => panic!("unexpected error {other:?}"),
        }

        let f = temp_with("1,-2\n");
        assert!(matches!(
            load_dense_csv(f.path()).unwrap_err(),
            IoError::BadScore { row: 1, col: 2, .. }
        ));

        let f = temp_with("");
        assert!(matches!(load_dense_csv(f.path()).unwrap_err(), IoError::Empty));
    }

    #[test]
    fn triplets_densify_in_appearance_order() {
        let f = temp_with("customer,product,score\na,x,1\nb,y,2\n");
        let (rel, index) = load_triplets_csv(f.path()).unwrap();
        assert_eq!(index.customer_keys(), &["a", "b"]);
        assert_eq!(index.product_keys(), &["x", "y"]);
        assert_eq!(rel.values(), &[1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn triplets_last_write_wins() {
        let f = temp_with("customer,product,score\na,x,1\na,x,3\n");
        let (rel, _) = load_triplets_csv(f.path()).unwrap();
        assert_eq!(rel.values(), &[3.0]);
    }

    #[test]
    fn triplets_require_header() {
        let f = temp_with("a,x,1\n");
        assert!(matches!(
            load_triplets_csv(f.path()).unwrap_err(),
            IoError::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn triplets_round_trip_keys() {
        let mut content = String::from("customer,product,score\n");
        let mut expected = Vec::new();
        for i in 0..50 {
            let (c, p, s) = (format!("c{}", i % 7), format!("p{}", i % 11), i as f64);
            content.push_str(&format!("{c},{p},{s}\n"));
            expected.push((c, p, s));
        }
        let f = temp_with(&content);
        let (rel, index) = load_triplets_csv(f.path()).unwrap();
        // Every triplet is recoverable through the index (last write wins).
        let mut last: HashMap<(String, String), f64> = HashMap::new();
        for (c, p, s) in expected {
            last.insert((c, p), s);
        }
        for ((c, p), s) in last {
            let u = index.customer_keys().iter().position(|k| k == &c).unwrap();
            let pid = index.product_id(&p).unwrap();
            assert_eq!(rel.value(u, pid), s);
        }
    }

    #[test]
    fn gl_scores_are_rating_over_distance() {
        // Two points on the same meridian, two kilometers apart.
        let deg_per_km = 1.0 / (EARTH_RADIUS_KM * std::f64::consts::PI / 180.0);
        let rel = gl_custom_scores(
            &[4.0],
            &[(0.0, 0.0)],
            &[(2.0 * deg_per_km, 0.0)],
        )
        .unwrap();
        assert!((rel.value(0, 0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn gl_guards_co_located_pairs() {
        let rel = gl_custom_scores(&[4.0], &[(10.0, 20.0)], &[(10.0, 20.0)]).unwrap();
        assert!((rel.value(0, 0) - 4.0 / MIN_DISTANCE_KM).abs() < 1e-3);
        assert!(rel.value(0, 0).is_finite());
    }

    #[test]
    fn gl_scores_preserve_rating_ratio() {
        let rel = gl_custom_scores(
            &[5.0, 3.0],
            &[(0.0, 0.0)],
            &[(1.0, 0.0), (-1.0, 0.0)],
        )
        .unwrap();
        assert!((rel.value(0, 0) / rel.value(0, 1) - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gl_rejects_bad_coordinates() {
        assert!(matches!(
            gl_custom_scores(&[1.0], &[(95.0, 0.0)], &[(0.0, 0.0)]).unwrap_err(),
            IoError::BadCoordinate { .. }
        ));
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_instance(3, 5, 2, Seed::from(9), SynthDistribution::Uniform01).unwrap();
        let b = synth_instance(3, 5, 2, Seed::from(9), SynthDistribution::Uniform01).unwrap();
        assert_eq!(a.rel().values(), b.rel().values());
        // Regime boundary m = n = k+1.
        assert!(synth_instance(4, 4, 3, Seed::from(1), SynthDistribution::Uniform01).is_ok());
    }

    #[test]
    fn zipf_columns_decay() {
        let n = 6;
        let mut means = vec![0.0f64; n];
        for seed in 0..100u64 {
            let inst =
                synth_instance(8, n, 3, Seed::from(seed), SynthDistribution::ZipfPopularity)
                    .unwrap();
            for u in 0..8 {
                for (p, mean) in means.iter_mut().enumerate() {
                    *mean += inst.rel().value(u, p);
                }
            }
        }
        for p in 1..n {
            assert!(means[p - 1] > means[p], "column means {means:?}");
        }
    }

    #[test]
    fn dense_write_read_round_trips() {
        let rel = RelevanceMatrix::new(2, 3, vec![0.1, 0.2, 1.0, 0.4, 0.5, 0.6]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_dense_csv(&rel, f.path()).unwrap();
        let back = load_dense_csv(f.path()).unwrap();
        assert_eq!(rel, back);
    }

    #[test]
    fn allocation_round_trips() {
        let alloc = Allocation::new(vec![
            BTreeSet::from([0, 2]),
            BTreeSet::new(),
            BTreeSet::from([1]),
        ]);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_allocation(&alloc, None, f.path()).unwrap();
        let back = read_allocation(f.path(), None).unwrap();
        assert_eq!(alloc, back);
    }

    #[test]
    fn allocation_unknown_key_is_an_error() {
        let f = temp_with("customer,product,score\na,x,1\nb,y,2\n");
        let (_, index) = load_triplets_csv(f.path()).unwrap();
        let alloc_file = temp_with("x\nz\n");
        assert!(matches!(
            read_allocation(alloc_file.path(), Some(&index)).unwrap_err(),
            IoError::UnknownKey { line: 2, .. }
        ));
    }

    fn sample_report() -> (MetricsReport, RunMetadata) {
        (
            MetricsReport {
                h: 1.0,
                z: 0.87654321,
                l: 0.125,
                y: 0.0,
                mu_phi: 0.999,
                std_phi: 0.001,
                ef1: true,
                alpha_mms_fraction: 1.0,
            },
            RunMetadata {
                algorithm: "fairrec".into(),
                m: 4,
                n: 8,
                k: 2,
                alpha: Some(0.5),
                seed: Some(7),
                elapsed_ms: Some(1.25),
            },
        )
    }

    #[test]
    fn report_json_round_trips() {
        let (report, metadata) = sample_report();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_report(&report, &metadata, f.path(), ReportFormat::Json).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        // Stable numeric formatting: integral floats keep their decimal.
        assert!(text.contains("\"h\": 1.0"));
        let back: ReportRecord = serde_json::from_str(&text).unwrap();
        let original = ReportRecord::new(&report, &metadata);
        assert!((back.z - original.z).abs() < 1e-12);
        assert_eq!(back, original);
    }

    #[test]
    fn report_csv_appends_with_single_header() {
        let (report, metadata) = sample_report();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_report(&report, &metadata, f.path(), ReportFormat::CsvRow).unwrap();
        write_report(&report, &metadata, f.path(), ReportFormat::CsvRow).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], REPORT_CSV_HEADER);
        assert_eq!(lines[1], lines[2]);
        assert!(lines[1].contains("1.0"));
    }

    #[test]
    fn column_loader_reports_position() {
        let f = temp_with("0.5\n0.7\n");
        assert_eq!(load_column(f.path()).unwrap(), vec![0.5, 0.7]);
        let bad = temp_with("0.5\nnope\n");
        assert!(matches!(
            load_column(bad.path()).unwrap_err(),
            IoError::BadNumber { row: 2, .. }
        ));
    }
}
