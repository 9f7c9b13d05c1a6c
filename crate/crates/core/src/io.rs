//! JSON and CSV formats for tables, mask specifications, spectra and reports.
//!
//! Every writer is byte-stable: pretty JSON with a trailing newline, fields in
//! declaration order, floats in shortest round-trip form.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::extraction::{generalization_report, OrderProfile, PrimitiveSet, Selection};
use crate::interactions::{matching_error, matching_precision, EffectKind, InteractionSpectrum, ValueTable};
use crate::lattice::{check_capacity, LatticeVector, SubsetIndex};
use crate::objective::{LossConfig, LossMode};
use crate::optimizer::TraceRecord;

pub const FORMAT_VERSION: u32 = 1;

fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

fn check_labels(path: &Path, labels: &[String], n: usize) -> Result<()> {
    if !labels.is_empty() && labels.len() != n {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("{} variable labels for n={n}", labels.len()),
        });
    }
    Ok(())
}

/// Pretty JSON plus trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory JSON serialization");
    out.push(b'\n');
    out
}

pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Replace bare `NaN` / `Infinity` / `-Infinity` tokens outside strings with `null`,
/// so tables written by permissive encoders still parse and get a precise diagnostic.
fn sanitize_non_finite(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if in_string {
            if escaped {
                escaped = false;
            } else if c == b'\\' {
                escaped = true;
            } else if c == b'"' {
                in_string = false;
            }
        } else if c == b'"' {
            in_string = true;
        } else {
            let rest = &text[i..];
            if let Some(token) = ["-Infinity", "Infinity", "NaN"]
                .into_iter()
                .find(|t| rest.starts_with(t))
            {
                out.push_str("null");
                i += token.len();
                continue;
            }
        }
        // multi-byte characters only occur inside strings and are copied whole
        let ch = text[i..].chars().next().expect("in bounds");
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Parse a versioned JSON document, checking `field` before anything else.
fn read_versioned<T: DeserializeOwned>(path: &Path, field: &str) -> Result<T> {
    let text = sanitize_non_finite(&read_text(path)?);
    let value: serde_json::Value = parse_json(path, &text)?;
    let found = value.get(field).and_then(|v| v.as_u64()).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        message: format!("missing or non-integer {field}"),
    })?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTableFile {
    pub format_version: u32,
    pub n: usize,
    pub model_id: String,
    #[serde(default)]
    pub sample_id: String,
    #[serde(default)]
    pub variable_labels: Vec<String>,
    #[serde(default)]
    pub output_semantics: String,
    /// `v(x_T)` in ascending bitmask order, bit `i` set when variable `i` is unmasked.
    pub values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawValueTableFile {
    n: usize,
    model_id: String,
    #[serde(default)]
    sample_id: String,
    #[serde(default)]
    variable_labels: Vec<String>,
    #[serde(default)]
    output_semantics: String,
    values: Vec<Option<f64>>,
}

impl ValueTableFile {
    pub fn from_table(table: &ValueTable, sample_id: impl Into<String>, labels: Vec<String>) -> Self {
        ValueTableFile {
            format_version: FORMAT_VERSION,
            n: table.n(),
            model_id: table.model_id.clone(),
            sample_id: sample_id.into(),
            variable_labels: if labels.is_empty() {
                default_labels(table.n())
            } else {
                labels
            },
            output_semantics: table.baseline_note.clone(),
            values: table.values.values().to_vec(),
        }
    }

    pub fn to_table(&self) -> Result<ValueTable> {
        let mut table = ValueTable::new(
            self.model_id.clone(),
            LatticeVector::from_values(self.n, self.values.clone())?,
        )?;
        table.baseline_note = self.output_semantics.clone();
        Ok(table)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        to_json_bytes(self)
    }
}

pub fn read_value_table_file(path: impl AsRef<Path>) -> Result<ValueTableFile> {
    let path = path.as_ref();
    let raw: RawValueTableFile = read_versioned(path, "format_version")?;
    check_capacity(raw.n).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let expected = 1usize << raw.n;
    if raw.values.len() != expected {
        return Err(Error::ValueCount {
            path: path.to_path_buf(),
            n: raw.n,
            expected,
            found: raw.values.len(),
        });
    }
    if let Some(mask) = raw.values.iter().position(|v| !v.is_some_and(f64::is_finite)) {
        return Err(Error::NonFiniteValue {
            path: path.to_path_buf(),
            mask,
        });
    }
    check_labels(path, &raw.variable_labels, raw.n)?;
    Ok(ValueTableFile {
        format_version: FORMAT_VERSION,
        n: raw.n,
        model_id: raw.model_id,
        sample_id: raw.sample_id,
        variable_labels: raw.variable_labels,
        output_semantics: raw.output_semantics,
        values: raw.values.into_iter().flatten().collect(),
    })
}

/// Read and cross-validate table files: equal `n`, distinct model ids.
pub fn read_value_table_files<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<ValueTableFile>> {
    let mut files: Vec<ValueTableFile> = Vec::with_capacity(paths.len());
    let mut seen = BTreeSet::new();
    for path in paths {
        let path = path.as_ref();
        let file = read_value_table_file(path)?;
        if let Some(first) = files.first() {
            if first.n != file.n {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("n={} differs from n={} of the first table", file.n, first.n),
                });
            }
        }
        if !seen.insert(file.model_id.clone()) {
            return Err(Error::DuplicateModel {
                path: path.to_path_buf(),
                model_id: file.model_id,
            });
        }
        files.push(file);
    }
    Ok(files)
}

pub fn read_value_tables<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<ValueTable>> {
    read_value_table_files(paths)?
        .iter()
        .map(ValueTableFile::to_table)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub bits: u32,
    /// `unmasked[i]` is true when variable `i` keeps its input value.
    pub unmasked: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpecFile {
    pub format_version: u32,
    pub n: usize,
    pub variable_labels: Vec<String>,
    pub masks: Vec<MaskEntry>,
}

impl MaskSpecFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        to_json_bytes(self)
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        check_capacity(self.n).map_err(|e| bad(e.to_string()))?;
        check_labels(path, &self.variable_labels, self.n)?;
        if self.masks.len() != 1 << self.n {
            return Err(bad(format!(
                "{} masks listed, n={} needs {}",
                self.masks.len(),
                self.n,
                1usize << self.n
            )));
        }
        for (i, m) in self.masks.iter().enumerate() {
            let flags_ok = m.unmasked.len() == self.n
                && m.unmasked.iter().enumerate().all(|(v, &u)| u == (m.bits >> v & 1 == 1));
            if m.bits as usize != i || !flags_ok {
                return Err(bad(format!("mask entry {i} is not canonical")));
            }
        }
        Ok(())
    }
}

/// Canonical enumeration of all `2^n` masks in ascending bitmask order.
pub fn write_mask_spec(n: usize, labels: &[String]) -> Result<MaskSpecFile> {
    check_capacity(n)?;
    if !labels.is_empty() && labels.len() != n {
        return Err(Error::Length {
            expected: n,
            found: labels.len(),
        });
    }
    let masks = (0..1u32 << n)
        .map(|bits| MaskEntry {
            bits,
            unmasked: (0..n).map(|v| bits >> v & 1 == 1).collect(),
        })
        .collect();
    Ok(MaskSpecFile {
        format_version: FORMAT_VERSION,
        n,
        variable_labels: if labels.is_empty() {
            default_labels(n)
        } else {
            labels.to_vec()
        },
        masks,
    })
}

pub fn read_mask_spec(path: impl AsRef<Path>) -> Result<MaskSpecFile> {
    let path = path.as_ref();
    let spec: MaskSpecFile = read_versioned(path, "format_version")?;
    spec.validate(path)?;
    Ok(spec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFile {
    pub format_version: u32,
    pub model_id: String,
    pub n: usize,
    pub and_effects: Vec<f64>,
    pub or_effects: Vec<f64>,
}

impl SpectrumFile {
    pub fn from_spectrum(s: &InteractionSpectrum) -> Self {
        SpectrumFile {
            format_version: FORMAT_VERSION,
            model_id: s.model_id.clone(),
            n: s.n(),
            and_effects: s.and_effects.values().to_vec(),
            or_effects: s.or_effects.values().to_vec(),
        }
    }

    pub fn to_spectrum(&self) -> Result<InteractionSpectrum> {
        Ok(InteractionSpectrum {
            model_id: self.model_id.clone(),
            and_effects: LatticeVector::from_values(self.n, self.and_effects.clone())?,
            or_effects: LatticeVector::from_values(self.n, self.or_effects.clone())?,
        })
    }
}

pub fn read_spectrum(path: impl AsRef<Path>) -> Result<InteractionSpectrum> {
    let path = path.as_ref();
    let file: SpectrumFile = read_versioned(path, "format_version")?;
    file.to_spectrum().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionFile {
    pub format_version: u32,
    pub model_ids: Vec<String>,
    pub decomposition: Decomposition,
}

pub fn read_decomposition(path: impl AsRef<Path>) -> Result<DecompositionFile> {
    let path = path.as_ref();
    let file: DecompositionFile = read_versioned(path, "format_version")?;
    let d = &file.decomposition;
    let m = d.gamma_hat.len();
    let len = 1usize << d.n.min(crate::lattice::MAX_VARS);
    let blocks_ok = d.gamma_shared.iter().chain(&d.gamma_hat).chain(&d.epsilon).all(|v| {
        v.n() == d.n && v.len() == len
    });
    let bases = match d.coupling {
        crate::decomposition::Coupling::Shared => 1,
        crate::decomposition::Coupling::Independent => m,
    };
    if check_capacity(d.n).is_err()
        || !blocks_ok
        || m == 0
        || d.epsilon.len() != m
        || d.gamma_shared.len() != bases
        || d.tau_gamma.len() != m
        || d.tau_epsilon.len() != m
        || file.model_ids.len() != m
    {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "decomposition blocks inconsistent with n and model count".into(),
        });
    }
    Ok(file)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSetFile {
    pub format_version: u32,
    pub primitives: PrimitiveSet,
}

pub fn read_primitive_set(path: impl AsRef<Path>) -> Result<PrimitiveSet> {
    let file: PrimitiveSetFile = read_versioned(path.as_ref(), "format_version")?;
    Ok(file.primitives)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityPoint {
    pub rank: usize,
    pub magnitude: f64,
    pub kind: EffectKind,
    pub model: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingSummary {
    pub model: String,
    pub primitives: usize,
    pub max_error: f64,
    pub mean_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPoint {
    pub model: String,
    pub k: usize,
    pub precision: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub format_version: u32,
    pub mode: Option<LossMode>,
    pub alpha: Option<f64>,
    pub selection: Option<Selection>,
    pub model_ids: Vec<String>,
    pub s_and: Vec<f64>,
    pub s_or: Vec<f64>,
    pub shared_and: Vec<SubsetIndex>,
    pub shared_or: Vec<SubsetIndex>,
    pub order_profiles: Vec<OrderProfile>,
    pub sparsity: Vec<SparsityPoint>,
    pub matching: Vec<MatchingSummary>,
    pub precision: Vec<PrecisionPoint>,
    pub loss_trace: Vec<TraceRecord>,
}

impl Default for ExtractionReport {
    fn default() -> Self {
        ExtractionReport {
            format_version: FORMAT_VERSION,
            mode: None,
            alpha: None,
            selection: None,
            model_ids: Vec::new(),
            s_and: Vec::new(),
            s_or: Vec::new(),
            shared_and: Vec::new(),
            shared_or: Vec::new(),
            order_profiles: Vec::new(),
            sparsity: Vec::new(),
            matching: Vec::new(),
            precision: Vec::new(),
            loss_trace: Vec::new(),
        }
    }
}

/// Every non-empty effect of every model, strongest first, ranks starting at 1.
pub fn sparsity_curve(spectra: &[InteractionSpectrum]) -> Vec<SparsityPoint> {
    let mut points = Vec::new();
    for s in spectra {
        for (rank, e) in s.ranked_effects().into_iter().enumerate() {
            points.push(SparsityPoint {
                rank: rank + 1,
                magnitude: e.value.abs(),
                kind: e.kind,
                model: s.model_id.clone(),
            });
        }
    }
    points
}

pub struct ReportInputs<'a> {
    pub tables: &'a [ValueTable],
    pub spectra: &'a [InteractionSpectrum],
    pub sets: &'a [PrimitiveSet],
    pub loss: Option<LossConfig>,
    pub trace: &'a [TraceRecord],
    pub precision_ks: &'a [usize],
}

/// Assemble generalization metrics, order profiles, matching quality and the
/// sparsity curve for one extraction.
pub fn build_report(inputs: &ReportInputs<'_>) -> Result<ExtractionReport> {
    let gen = generalization_report(inputs.spectra, inputs.sets)?;
    let mut matching = Vec::new();
    let mut precision = Vec::new();
    for ((table, spectrum), set) in inputs.tables.iter().zip(inputs.spectra).zip(inputs.sets) {
        let err = matching_error(table, spectrum, &set.and_subsets(), &set.or_subsets())?;
        matching.push(MatchingSummary {
            model: spectrum.model_id.clone(),
            primitives: set.len(),
            max_error: err.max_abs(),
            mean_error: err.l1_norm() / err.len() as f64,
        });
        let pool = 2 * ((1usize << spectrum.n()) - 1);
        for &k in inputs.precision_ks.iter().filter(|&&k| k >= 1 && k <= pool) {
            precision.push(PrecisionPoint {
                model: spectrum.model_id.clone(),
                k,
                precision: matching_precision(table, spectrum, k)?,
            });
        }
    }
    Ok(ExtractionReport {
        format_version: FORMAT_VERSION,
        mode: inputs.loss.map(|l| l.mode),
        alpha: inputs.loss.map(|l| l.alpha),
        selection: inputs.sets.first().map(|s| s.selection),
        model_ids: gen.model_ids,
        s_and: gen.s_and,
        s_or: gen.s_or,
        shared_and: gen.shared_and,
        shared_or: gen.shared_or,
        order_profiles: gen.order_profiles,
        sparsity: sparsity_curve(inputs.spectra),
        matching,
        precision,
        loss_trace: inputs.trace.to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    /// `rank,magnitude,kind,model`, strongest first within each model.
    SparsityCsv,
    /// `model,order,shared_pos,shared_neg,all_pos,all_neg`.
    OrderProfileCsv,
    /// `model,s_and,s_or`.
    MetricsCsv,
}

fn csv_bytes<R: Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory CSV");
    for row in rows {
        w.serialize(row).expect("in-memory CSV");
    }
    w.into_inner().expect("in-memory CSV")
}

pub fn write_report(report: &ExtractionReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => to_json_bytes(report),
        ReportFormat::SparsityCsv => csv_bytes(
            &["rank", "magnitude", "kind", "model"],
            report
                .sparsity
                .iter()
                .map(|p| (p.rank, p.magnitude, p.kind, &p.model)),
        ),
        ReportFormat::OrderProfileCsv => csv_bytes(
            &["model", "order", "shared_pos", "shared_neg", "all_pos", "all_neg"],
            report.order_profiles.iter().map(|o| {
                (&o.model_id, o.order, o.shared_pos, o.shared_neg, o.all_pos, o.all_neg)
            }),
        ),
        ReportFormat::MetricsCsv => csv_bytes(
            &["model", "s_and", "s_or"],
            report
                .model_ids
                .iter()
                .zip(&report.s_and)
                .zip(&report.s_or)
                .map(|((m, a), o)| (m, a, o)),
        ),
    }
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ExtractionReport> {
    read_versioned(path.as_ref(), "format_version")
}

/// `dir/name`, for output layouts.
pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
