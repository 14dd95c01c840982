//! File formats: measure collections, distance matrices and report bundles.
//!
//! JSON output is canonical: fixed key order, shortest round-trip float
//! formatting, two-space indentation and a trailing newline, so re-emitting
//! a loaded value reproduces the file byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::heterogeneity::{estimate, HeterogeneityReport};
use crate::measures::{
    validate_measure, DiscreteItem, Empirical1DItem, Family, GaussianDiagItem, GaussianItem, Measure,
    MeasureCollection, MeasureSpec,
};
use crate::normal;
use crate::numeric::dense_rank_descending;
use crate::plugin::PluginReport;
use crate::simulate::{CellSummary, SimulationResult};
use crate::transforms::{Transform, TransformSpec};
use crate::twosample::TwoSampleReport;
use crate::wasserstein::DistanceMatrix;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Canonical pretty JSON with a trailing newline.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    write_file(path, to_canonical_json(value)?.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// measure collections

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CollectionFile {
    family: Family,
    dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    items: Vec<Value>,
}

fn item_spec(family: Family, value: Value) -> std::result::Result<MeasureSpec, serde_json::Error> {
    Ok(match family {
        Family::Gaussian => MeasureSpec::Gaussian(serde_json::from_value::<GaussianItem>(value)?),
        Family::GaussianDiag => MeasureSpec::GaussianDiag(serde_json::from_value::<GaussianDiagItem>(value)?),
        Family::Discrete => MeasureSpec::Discrete(serde_json::from_value::<DiscreteItem>(value)?),
        Family::Empirical1D => MeasureSpec::Empirical1D(serde_json::from_value::<Empirical1DItem>(value)?),
    })
}

fn item_value(spec: &MeasureSpec) -> Value {
    let v = match spec {
        MeasureSpec::Gaussian(x) => serde_json::to_value(x),
        MeasureSpec::GaussianDiag(x) => serde_json::to_value(x),
        MeasureSpec::Discrete(x) => serde_json::to_value(x),
        MeasureSpec::Empirical1D(x) => serde_json::to_value(x),
    };
    v.expect("measure items always serialize")
}

/// Parses a collection document. Returns the collection and any
/// non-fatal warnings (such as covariance eigenvalue clamping).
pub fn parse_measures(text: &str) -> Result<(MeasureCollection, Vec<String>)> {
    let file: CollectionFile = serde_json::from_str(text).map_err(|e| Error::Schema {
        path: "$".into(),
        message: e.to_string(),
    })?;
    if file.items.is_empty() {
        return Err(Error::Schema {
            path: "$.items".into(),
            message: "items must not be empty".into(),
        });
    }
    if let Some(l) = &file.labels {
        if l.len() != file.items.len() {
            return Err(Error::Schema {
                path: "$.labels".into(),
                message: format!("{} labels for {} items", l.len(), file.items.len()),
            });
        }
    }
    let mut warnings = Vec::new();
    let mut items = Vec::with_capacity(file.items.len());
    for (i, value) in file.items.into_iter().enumerate() {
        let path = format!("$.items[{i}]");
        let spec = item_spec(file.family, value).map_err(|e| Error::Schema {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let check = validate_measure(&spec);
        if let Some(v) = check.violation {
            return Err(Error::Schema { path, message: v });
        }
        warnings.extend(check.warnings.into_iter().map(|w| format!("{path}: {w}")));
        let m = Measure::try_from(&spec)?;
        if m.dim() != file.dimension {
            return Err(Error::Schema {
                path,
                message: format!("dimension {} does not match declared dimension {}", m.dim(), file.dimension),
            });
        }
        items.push(m);
    }
    let c = MeasureCollection::new(items, file.labels).map_err(|e| Error::Schema {
        path: "$".into(),
        message: e.to_string(),
    })?;
    Ok((c, warnings))
}

pub fn load_measures(path: &Path) -> Result<(MeasureCollection, Vec<String>)> {
    parse_measures(&read_to_string(path)?).map_err(|e| match e {
        Error::Schema { path: p, message } => Error::Schema {
            path: format!("{}: {p}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn measures_to_json(c: &MeasureCollection) -> Result<String> {
    let file = CollectionFile {
        family: c.family(),
        dimension: c.dimension(),
        labels: c.labels().map(|l| l.to_vec()),
        items: c.items().iter().map(|m| item_value(&m.to_spec())).collect(),
    };
    to_canonical_json(&file)
}

pub fn save_measures(c: &MeasureCollection, path: &Path) -> Result<()> {
    write_file(path, measures_to_json(c)?.as_bytes())
}

// ---------------------------------------------------------------------------
// distance matrices

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceFormat {
    /// First line `n`, then `n` comma-separated rows.
    Csv,
    /// `{"n": n, "labels": [...], "distances": [[...], ...]}`.
    Json,
}

impl DistanceFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
            Some("csv") => Ok(DistanceFormat::Csv),
            Some("json") => Ok(DistanceFormat::Json),
            _ => Err(Error::Parse(format!(
                "cannot infer distance format of {} (expected .csv or .json)",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistanceFile {
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    distances: Vec<Vec<f64>>,
}

fn parse_distance_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Parse("distance CSV is empty".into()))?
        .map_err(|e| Error::Parse(e.to_string()))?;
    let n: usize = header
        .get(0)
        .filter(|_| header.len() == 1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse("first line of a distance CSV must be the single integer n".into()))?;
    let mut rows = Vec::with_capacity(n);
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {i}, column {j}: `{s}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.len() != n {
        return Err(Error::Parse(format!("header says n = {n} but found {} rows", rows.len())));
    }
    Ok(rows)
}

/// Parses and validates a distance matrix; returns ingestion warnings.
pub fn parse_distance_matrix(text: &str, format: DistanceFormat) -> Result<(DistanceMatrix, Vec<String>)> {
    let (rows, labels) = match format {
        DistanceFormat::Csv => (parse_distance_csv(text)?, None),
        DistanceFormat::Json => {
            let f: DistanceFile = serde_json::from_str(text).map_err(|e| Error::Schema {
                path: "$".into(),
                message: e.to_string(),
            })?;
            if f.distances.len() != f.n {
                return Err(Error::Schema {
                    path: "$.distances".into(),
                    message: format!("n = {} but {} rows", f.n, f.distances.len()),
                });
            }
            (f.distances, f.labels)
        }
    };
    DistanceMatrix::from_rows(rows, labels)
}

pub fn load_distance_matrix(path: &Path, format: Option<DistanceFormat>) -> Result<(DistanceMatrix, Vec<String>)> {
    let format = match format {
        Some(f) => f,
        None => DistanceFormat::from_path(path)?,
    };
    parse_distance_matrix(&read_to_string(path)?, format).map_err(|e| match e {
        Error::InvalidDistanceMatrix(m) => Error::InvalidDistanceMatrix(format!("{}: {m}", path.display())),
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn distance_matrix_to_string(d: &DistanceMatrix, format: DistanceFormat) -> Result<String> {
    match format {
        DistanceFormat::Csv => {
            let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
            let err = |e: csv::Error| Error::Parse(e.to_string());
            w.write_record([d.n().to_string()]).map_err(err)?;
            for i in 0..d.n() {
                w.write_record(d.row(i).iter().map(|x| x.to_string())).map_err(err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        DistanceFormat::Json => to_canonical_json(&DistanceFile {
            n: d.n(),
            labels: d.labels().map(|l| l.to_vec()),
            distances: d.rows(),
        }),
    }
}

pub fn save_distance_matrix(d: &DistanceMatrix, path: &Path, format: DistanceFormat) -> Result<()> {
    write_file(path, distance_matrix_to_string(d, format)?.as_bytes())
}

// ---------------------------------------------------------------------------
// report bundles

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    /// Transform as requested (`bounded:auto` stays visible here).
    pub transform: Option<String>,
    /// Transform actually applied.
    pub transform_used: Option<Transform>,
    pub level: Option<f64>,
    /// `z_{(1+level)/2}` used for the intervals.
    pub z_quantile: Option<f64>,
}

impl Provenance {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            tool: "whet".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            inputs: Vec::new(),
            seed: None,
            transform: None,
            transform_used: None,
            level: None,
            z_quantile: None,
        }
    }

    pub fn with_inputs(mut self, paths: &[&Path]) -> Result<Self> {
        for p in paths {
            self.inputs.push(InputDigest::of(p)?);
        }
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_transform(mut self, requested: &TransformSpec, used: Option<Transform>) -> Self {
        self.transform = Some(requested.to_string());
        self.transform_used = used;
        self
    }

    pub fn with_level(mut self, level: f64) -> Result<Self> {
        self.z_quantile = Some(normal::two_sided_critical(level)?);
        self.level = Some(level);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub created_unix: u64,
}

impl Timestamps {
    pub fn now() -> Self {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self { created_unix: secs }
    }
}

/// A report together with what produced it. Timestamps are opt-in so that
/// repeated runs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBundle<T> {
    pub provenance: Provenance,
    pub payload: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Timestamps>,
}

impl<T> AnalysisBundle<T> {
    pub fn new(provenance: Provenance, payload: T) -> Self {
        Self {
            provenance,
            payload,
            timestamps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Reports with a plot-ready tabular form.
pub trait CsvTable {
    fn csv_header(&self) -> Vec<String>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

fn strings<const N: usize>(xs: [&str; N]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub fn csv_to_string(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Renders a bundle. CSV output starts with `# ` comment lines carrying the
/// provenance as compact JSON.
pub fn render_report<T: Serialize + CsvTable>(bundle: &AnalysisBundle<T>, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => to_canonical_json(bundle),
        ReportFormat::Csv => {
            let prov = serde_json::to_string(&bundle.provenance).map_err(|e| Error::Parse(e.to_string()))?;
            let mut out = format!("# provenance {prov}\n");
            if let Some(t) = &bundle.timestamps {
                out.push_str(&format!("# created_unix {}\n", t.created_unix));
            }
            out.push_str(&csv_to_string(&bundle.payload.csv_header(), &bundle.payload.csv_rows())?);
            Ok(out)
        }
    }
}

pub fn emit_report<T: Serialize + CsvTable>(bundle: &AnalysisBundle<T>, path: &Path, format: ReportFormat) -> Result<()> {
    write_file(path, render_report(bundle, format)?.as_bytes())
}

pub fn load_report<T: DeserializeOwned>(path: &Path) -> Result<AnalysisBundle<T>> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EccentricityRow {
    /// 1 = most eccentric.
    pub rank: usize,
    pub index: usize,
    pub label: Option<String>,
    pub eccentricity: f64,
}

/// Eccentricities sorted in decreasing order (ties by index).
pub fn eccentricity_table(r: &HeterogeneityReport) -> Vec<EccentricityRow> {
    let mut order: Vec<usize> = (0..r.n).collect();
    order.sort_by(|&a, &b| r.eccentricities[b].total_cmp(&r.eccentricities[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .enumerate()
        .map(|(k, i)| EccentricityRow {
            rank: k + 1,
            index: i,
            label: r.labels.as_ref().map(|l| l[i].clone()),
            eccentricity: r.eccentricities[i],
        })
        .collect()
}

impl CsvTable for HeterogeneityReport {
    fn csv_header(&self) -> Vec<String> {
        strings(["rank", "index", "label", "eccentricity"])
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        eccentricity_table(self)
            .into_iter()
            .map(|r| vec![r.rank.to_string(), r.index.to_string(), r.label.unwrap_or_default(), r.eccentricity.to_string()])
            .collect()
    }
}

impl CsvTable for TwoSampleReport {
    fn csv_header(&self) -> Vec<String> {
        strings(["n_a", "n_b", "u_a", "u_b", "delta_hat", "delta0", "se_pooled", "z", "p_value", "ci_lower", "ci_upper"])
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.n_a.to_string(),
            self.n_b.to_string(),
            self.u_a.to_string(),
            self.u_b.to_string(),
            self.delta_hat.to_string(),
            self.delta0.to_string(),
            self.se_pooled.to_string(),
            self.z.to_string(),
            self.p_value.to_string(),
            self.ci.0.to_string(),
            self.ci.1.to_string(),
        ]]
    }
}

impl CsvTable for PluginReport {
    fn csv_header(&self) -> Vec<String> {
        strings(["unit", "w2_error"])
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.per_unit_errors
            .iter()
            .enumerate()
            .map(|(i, e)| vec![i.to_string(), e.to_string()])
            .collect()
    }
}

impl CsvTable for SimulationResult {
    fn csv_header(&self) -> Vec<String> {
        CellSummary::CSV_COLUMNS.iter().map(|s| s.to_string()).collect()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.cells.iter().map(|c| c.csv_values()).collect()
    }
}

impl CsvTable for DistanceMatrix {
    fn csv_header(&self) -> Vec<String> {
        match self.labels() {
            Some(l) => l.to_vec(),
            None => (0..self.n()).map(|i| i.to_string()).collect(),
        }
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        (0..self.n()).map(|i| self.row(i).iter().map(|x| x.to_string()).collect()).collect()
    }
}

// ---------------------------------------------------------------------------
// per-group summary table

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub n: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    /// Dense rank of the estimate, 1 = largest.
    pub rank: usize,
    pub degeneracy_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTable {
    pub transform_used: Transform,
    pub level: f64,
    pub z_quantile: f64,
    pub rows: Vec<GroupRow>,
}

/// Estimate, standard error, interval and rank for each group. A
/// `bounded:auto` transform is calibrated once on all groups pooled.
pub fn group_table(groups: &[(String, DistanceMatrix)], t: &TransformSpec, level: f64) -> Result<GroupTable> {
    if groups.is_empty() {
        return Err(Error::arg("groups", "need at least one distance matrix"));
    }
    let mats: Vec<&DistanceMatrix> = groups.iter().map(|(_, d)| d).collect();
    let used = t.resolve(&mats)?;
    let reports: Vec<HeterogeneityReport> = groups
        .iter()
        .map(|(_, d)| estimate(d, used, level))
        .collect::<Result<_>>()?;
    let ranks = dense_rank_descending(&reports.iter().map(|r| r.u_stat).collect::<Vec<_>>());
    let rows = groups
        .iter()
        .zip(&reports)
        .zip(ranks)
        .map(|(((name, _), r), rank)| GroupRow {
            group: name.clone(),
            n: r.n,
            estimate: r.u_stat,
            std_error: r.std_error,
            lower: r.ci.0,
            upper: r.ci.1,
            rank,
            degeneracy_flag: r.degeneracy_flag,
        })
        .collect();
    Ok(GroupTable {
        transform_used: used,
        level,
        z_quantile: normal::two_sided_critical(level)?,
        rows,
    })
}

impl CsvTable for GroupTable {
    fn csv_header(&self) -> Vec<String> {
        strings(["group", "n", "estimate", "se", "lower", "upper", "rank", "degeneracy_flag"])
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.group.clone(),
                    r.n.to_string(),
                    r.estimate.to_string(),
                    r.std_error.to_string(),
                    r.lower.to_string(),
                    r.upper.to_string(),
                    r.rank.to_string(),
                    r.degeneracy_flag.to_string(),
                ]
            })
            .collect()
    }
}

/// Distance files (`.csv` / `.json`) in `dir`, sorted by file name.
pub fn distance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && DistanceFormat::from_path(p).is_ok())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::arg("dir", format!("no .csv or .json distance files in {}", dir.display())));
    }
    Ok(files)
}

/// Group name for a distance file: its stem.
pub fn group_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
