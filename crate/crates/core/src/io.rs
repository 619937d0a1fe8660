//! File formats: PVEC embeddings, label and truth CSVs, decision CSVs and
//! the JSON model file.
//!
//! PVEC layout (little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PVEC"
//! 4       1     version = 1
//! 5       1     dtype = 1 (f32)
//! 6       2     reserved = 0
//! 8       4     count (u32)
//! 12      4     dim (u32)
//! 16      4*count*dim  row-major f32 payload
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::detect::verdict_word;
use crate::error::{Error, Result};
use crate::model::{Decision, DetectorModel, Embedding, Verdict, FORMAT_VERSION};

pub const PVEC_MAGIC: [u8; 4] = *b"PVEC";
pub const PVEC_VERSION: u8 = 1;
pub const PVEC_DTYPE_F32: u8 = 1;
pub const PVEC_HEADER_LEN: usize = 16;

/// Scientific notation with 9 significant digits, e.g. `1.00000000e0`.
pub fn format_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Encode a PVEC image from a flat row-major payload.
pub fn encode_pvec(count: usize, dim: usize, payload: &[f32]) -> Result<Vec<u8>> {
    if count > 0 && dim == 0 {
        return Err(Error::ZeroDimension);
    }
    if payload.len() != count * dim {
        return Err(Error::InvalidConfig(format!(
            "payload has {} values, expected {count} x {dim}",
            payload.len()
        )));
    }
    let count32 = u32::try_from(count).map_err(|_| Error::InvalidConfig("count exceeds u32".into()))?;
    let dim32 = u32::try_from(dim).map_err(|_| Error::InvalidConfig("dim exceeds u32".into()))?;
    if let Some(i) = payload.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { row: i / dim.max(1) });
    }

    let mut out = Vec::with_capacity(PVEC_HEADER_LEN + 4 * payload.len());
    out.extend_from_slice(&PVEC_MAGIC);
    out.push(PVEC_VERSION);
    out.push(PVEC_DTYPE_F32);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&count32.to_le_bytes());
    out.extend_from_slice(&dim32.to_le_bytes());
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Encode embeddings, narrowing to f32. An empty list yields a header with
/// `count = dim = 0`.
pub fn encode_embeddings(embeddings: &[Embedding]) -> Result<Vec<u8>> {
    let dim = embeddings.first().map_or(0, Embedding::dim);
    let mut payload = Vec::with_capacity(embeddings.len() * dim);
    for (row, e) in embeddings.iter().enumerate() {
        if e.dim() != dim {
            return Err(Error::RowDimensionMismatch {
                row,
                expected: dim,
                found: e.dim(),
            });
        }
        for &v in e.values() {
            let narrow = v as f32;
            if !narrow.is_finite() {
                return Err(Error::NonFiniteValue { row });
            }
            payload.push(narrow);
        }
    }
    encode_pvec(embeddings.len(), dim, &payload)
}

/// Decode a PVEC image, widening to f64.
pub fn decode_pvec(bytes: &[u8]) -> Result<Vec<Embedding>> {
    if bytes.len() < PVEC_HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != PVEC_MAGIC {
            return Err(Error::BadMagic);
        }
        return Err(Error::TruncatedFile {
            expected: PVEC_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if bytes[..4] != PVEC_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes[4] != PVEC_VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    if bytes[5] != PVEC_DTYPE_F32 {
        return Err(Error::UnsupportedDtype(bytes[5]));
    }
    if bytes[6..8] != [0, 0] {
        return Err(Error::BadHeader("reserved bytes are not zero".into()));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if count > 0 && dim == 0 {
        return Err(Error::BadHeader(format!("{count} rows of dimension 0")));
    }

    let expected = PVEC_HEADER_LEN as u64 + 4 * count as u64 * dim as u64;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::TruncatedFile { expected, actual });
    }
    if actual > expected {
        return Err(Error::TrailingData { expected, actual });
    }

    let payload = &bytes[PVEC_HEADER_LEN..];
    let mut out = Vec::with_capacity(count);
    for row in 0..count {
        let values: Vec<f64> = payload[row * dim * 4..(row + 1) * dim * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row });
        }
        out.push(Embedding::new(values)?);
    }
    Ok(out)
}

pub fn read_pvec(path: impl AsRef<Path>) -> Result<Vec<Embedding>> {
    decode_pvec(&fs::read(path)?)
}

pub fn write_pvec(path: impl AsRef<Path>, embeddings: &[Embedding]) -> Result<()> {
    let bytes = encode_embeddings(embeddings)?;
    fs::write(path, bytes)?;
    Ok(())
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::HeaderMismatch(format!(
            "expected `{}`, found `{}`",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn parse_row(field: &str) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::HeaderMismatch(format!("row {field:?} is not a non-negative integer")))
}

/// Collect `(row, value)` pairs into a vector indexed by row, requiring
/// rows to be unique and contiguous from zero.
fn dense_rows<T>(pairs: Vec<(usize, T)>) -> Result<Vec<T>> {
    let mut map = BTreeMap::new();
    for (row, v) in pairs {
        if map.insert(row, v).is_some() {
            return Err(Error::DuplicateRow(row));
        }
    }
    map.into_iter()
        .enumerate()
        .map(|(i, (row, v))| if row == i { Ok(v) } else { Err(Error::MissingRow(i)) })
        .collect()
}

/// Parse a `row,class_name` CSV into names indexed by row.
pub fn parse_labels<R: Read>(input: R) -> Result<Vec<String>> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, &["row", "class_name"])?;
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = parse_row(&record[0])?;
        pairs.push((row, record[1].to_string()));
    }
    dense_rows(pairs)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<String>> {
    parse_labels(fs::File::open(path)?)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "class_name"])?;
    for (row, name) in labels.iter().enumerate() {
        w.write_record([row.to_string().as_str(), name])?;
    }
    w.flush()?;
    Ok(())
}

/// Dense class ids in first-appearance order. Returns the distinct names
/// (indexed by id) and the id of every label.
pub fn assign_class_ids(labels: &[String]) -> (Vec<String>, Vec<usize>) {
    let mut names: Vec<String> = Vec::new();
    let mut ids = Vec::with_capacity(labels.len());
    for label in labels {
        let id = match names.iter().position(|n| n == label) {
            Some(id) => id,
            None => {
                names.push(label.clone());
                names.len() - 1
            }
        };
        ids.push(id);
    }
    (names, ids)
}

/// Ground truth for a probe: a known class name or an outlier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TruthLabel {
    Class(String),
    Outlier,
}

/// Parse a `row,class_name,outlier` CSV. `outlier` is `0` or `1`; the class
/// name is ignored (and may be empty) for outliers.
pub fn parse_truth<R: Read>(input: R) -> Result<Vec<TruthLabel>> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, &["row", "class_name", "outlier"])?;
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = parse_row(&record[0])?;
        let label = match record[2].trim() {
            "1" => TruthLabel::Outlier,
            "0" => TruthLabel::Class(record[1].to_string()),
            other => return Err(Error::HeaderMismatch(format!("outlier flag {other:?} on row {row}"))),
        };
        pairs.push((row, label));
    }
    dense_rows(pairs)
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<TruthLabel>> {
    parse_truth(fs::File::open(path)?)
}

pub fn write_truth(path: impl AsRef<Path>, truth: &[TruthLabel]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "class_name", "outlier"])?;
    for (row, t) in truth.iter().enumerate() {
        let row = row.to_string();
        match t {
            TruthLabel::Class(name) => w.write_record([row.as_str(), name, "0"])?,
            TruthLabel::Outlier => w.write_record([row.as_str(), "", "1"])?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Write decisions as `sample,verdict,class_name,score,threshold`.
pub fn write_decisions<W: Write>(out: W, decisions: &[Decision], model: &DetectorModel) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample", "verdict", "class_name", "score", "threshold"])?;
    for (i, d) in decisions.iter().enumerate() {
        let name = match d.verdict {
            Verdict::Class(id) => model
                .classes
                .get(id)
                .map(|c| c.class_name.as_str())
                .ok_or_else(|| Error::UnknownClass(id.to_string()))?,
            Verdict::Novel => "",
        };
        w.write_record([
            i.to_string().as_str(),
            verdict_word(d.verdict),
            name,
            &format_sig9(d.chosen_score),
            &format_sig9(d.threshold_value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A row of a decisions CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub sample: usize,
    /// `None` for novel samples.
    pub class_name: Option<String>,
    pub score: f64,
    pub threshold: f64,
}

pub fn parse_decisions<R: Read>(input: R) -> Result<Vec<DecisionRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, &["sample", "verdict", "class_name", "score", "threshold"])?;
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record?;
        let sample = parse_row(&record[0])?;
        let class_name = match &record[1] {
            "class" => Some(record[2].to_string()),
            "deepfake" => None,
            other => return Err(Error::HeaderMismatch(format!("verdict {other:?}"))),
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::HeaderMismatch(format!("bad number {s:?}")))
        };
        pairs.push((
            sample,
            DecisionRecord {
                sample,
                class_name,
                score: num(&record[3])?,
                threshold: num(&record[4])?,
            },
        ));
    }
    dense_rows(pairs)
}

pub fn model_to_string(model: &DetectorModel) -> Result<String> {
    let mut text = serde_json::to_string_pretty(model)?;
    text.push('\n');
    Ok(text)
}

/// Parse and validate a model file. The schema version is checked before
/// the body is interpreted.
pub fn model_from_str(text: &str) -> Result<DetectorModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::CorruptModel("missing format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::SchemaVersionMismatch {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let model: DetectorModel = serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
    model.validate().map_err(|e| match e {
        Error::InvalidModel(msg) => Error::CorruptModel(msg),
        other => other,
    })?;
    Ok(model)
}

pub fn save_model(model: &DetectorModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DetectorModel> {
    model_from_str(&fs::read_to_string(path)?)
}
