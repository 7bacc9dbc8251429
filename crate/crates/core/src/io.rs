//! Prediction and label files.
//!
//! Predictions come as CSV with the header
//! `patient_id,image_id,model_kind,num_classes,mc_sample,outputs,is_probability`
//! (outputs joined by `;`, `mc_sample` empty for deterministic rows,
//! `is_probability` 0/1 for multi-class and empty otherwise) or as JSON
//! lines with the same field names. Labels are CSV with
//! `patient_id,image_id,true_class`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{validate_record, LabeledExample, ModelFamily, ModelKind, PredictionRecord};

/// At most this many violations are listed in an error.
pub const MAX_LISTED_VIOLATIONS: usize = 20;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {total} invalid record(s):\n{}", listed.join("\n"))]
    Invalid {
        path: PathBuf,
        total: usize,
        listed: Vec<String>,
    },
    #[error("{path}:{line}: duplicate label for {patient_id}/{image_id}")]
    DuplicateLabel {
        path: PathBuf,
        line: u64,
        patient_id: String,
        image_id: String,
    },
    #[error("cannot infer the format of {0}; pass --format csv or --format jsonl")]
    UnknownFormat(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            other => Err(format!("unknown format {other:?} (expected csv or jsonl)")),
        }
    }
}

impl Format {
    /// `explicit` if given, else from the extension.
    pub fn resolve(explicit: Option<Format>, path: &Path) -> Result<Format, IoError> {
        if let Some(f) = explicit {
            return Ok(f);
        }
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
        {
            Some(e) if e == "csv" => Ok(Format::Csv),
            Some(e) if e == "jsonl" || e == "ndjson" => Ok(Format::Jsonl),
            _ => Err(IoError::UnknownFormat(path.to_path_buf())),
        }
    }
}

pub const PREDICTION_HEADER: [&str; 7] = [
    "patient_id",
    "image_id",
    "model_kind",
    "num_classes",
    "mc_sample",
    "outputs",
    "is_probability",
];

#[derive(Debug, Deserialize)]
struct CsvRow {
    patient_id: String,
    image_id: String,
    model_kind: String,
    num_classes: String,
    mc_sample: String,
    outputs: String,
    is_probability: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum JsonOutputs {
    List(Vec<f64>),
    Joined(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum JsonFlag {
    Bool(bool),
    Int(u8),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    patient_id: String,
    image_id: String,
    model_kind: String,
    num_classes: usize,
    #[serde(default)]
    mc_sample: Option<u32>,
    outputs: JsonOutputs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    is_probability: Option<JsonFlag>,
}

fn error_line(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::Open {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_outputs(text: &str) -> Result<Vec<f64>, String> {
    if text.trim().is_empty() {
        return Err("outputs are empty".into());
    }
    text.split(';')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("output {t:?} is not a number"))
        })
        .collect()
}

fn parse_flag(text: &str, family: ModelFamily) -> Result<bool, String> {
    match (text.trim(), family) {
        ("", ModelFamily::MultiClass) => {
            Err("is_probability (0/1) is required for multiclass".into())
        }
        ("", _) => Ok(false),
        ("1" | "true", ModelFamily::MultiClass) => Ok(true),
        ("0" | "false", ModelFamily::MultiClass) => Ok(false),
        (other, ModelFamily::MultiClass) => Err(format!("is_probability {other:?} is not 0 or 1")),
        (_, _) => Err("is_probability applies to multiclass rows only".into()),
    }
}

fn build_record(
    patient_id: String,
    image_id: String,
    model_kind: &str,
    num_classes: usize,
    mc_sample: Option<u32>,
    outputs: Vec<f64>,
    is_probability: bool,
) -> Result<PredictionRecord, String> {
    let family: ModelFamily = model_kind
        .parse()
        .map_err(|e: crate::types::TypeError| e.to_string())?;
    let kind = ModelKind::new(family, num_classes).map_err(|e| e.to_string())?;
    Ok(PredictionRecord {
        patient_id,
        image_id,
        mc_sample,
        outputs,
        kind,
        is_probability,
    })
}

fn csv_record(row: CsvRow) -> Result<PredictionRecord, String> {
    let num_classes = row.num_classes.trim().parse::<usize>().map_err(|_| {
        format!(
            "num_classes {:?} is not a non-negative integer",
            row.num_classes
        )
    })?;
    let mc_sample = match row.mc_sample.trim() {
        "" => None,
        t => Some(
            t.parse::<u32>()
                .map_err(|_| format!("mc_sample {t:?} is not a non-negative integer"))?,
        ),
    };
    let family: ModelFamily = row
        .model_kind
        .parse()
        .map_err(|e: crate::types::TypeError| e.to_string())?;
    let is_probability = parse_flag(&row.is_probability, family)?;
    build_record(
        row.patient_id,
        row.image_id,
        &row.model_kind,
        num_classes,
        mc_sample,
        parse_outputs(&row.outputs)?,
        is_probability,
    )
}

fn json_record(row: JsonRow) -> Result<PredictionRecord, String> {
    let family: ModelFamily = row
        .model_kind
        .parse()
        .map_err(|e: crate::types::TypeError| e.to_string())?;
    let is_probability = match (row.is_probability, family) {
        (None, ModelFamily::MultiClass) => {
            return Err("is_probability is required for multiclass".into())
        }
        (None, _) => false,
        (Some(_), f) if f != ModelFamily::MultiClass => {
            return Err("is_probability applies to multiclass rows only".into())
        }
        (Some(JsonFlag::Bool(b)), _) => b,
        (Some(JsonFlag::Int(0)), _) => false,
        (Some(JsonFlag::Int(1)), _) => true,
        (Some(JsonFlag::Int(v)), _) => return Err(format!("is_probability {v} is not 0 or 1")),
    };
    let outputs = match row.outputs {
        JsonOutputs::List(v) => v,
        JsonOutputs::Joined(s) => parse_outputs(&s)?,
    };
    build_record(
        row.patient_id,
        row.image_id,
        &row.model_kind,
        row.num_classes,
        row.mc_sample,
        outputs,
        is_probability,
    )
}

fn check_all(path: &Path, records: &[(u64, PredictionRecord)]) -> Result<(), IoError> {
    let mut listed = Vec::new();
    let mut total = 0;
    for (line, r) in records {
        if let Err(violations) = validate_record(r) {
            total += 1;
            if listed.len() < MAX_LISTED_VIOLATIONS {
                let v: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                listed.push(format!(
                    "  line {line} ({}/{}): {}",
                    r.patient_id,
                    r.image_id,
                    v.join("; ")
                ));
            }
        }
    }
    if total > 0 {
        if total > listed.len() {
            listed.push(format!("  ... and {} more", total - listed.len()));
        }
        return Err(IoError::Invalid {
            path: path.to_path_buf(),
            total,
            listed,
        });
    }
    Ok(())
}

fn read_csv_predictions(path: &Path) -> Result<Vec<(u64, PredictionRecord)>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(open(path)?);
    let parse_err = |line: u64, message: String| IoError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != PREDICTION_HEADER {
        return Err(parse_err(
            1,
            format!(
                "header must be {}, found {}",
                PREDICTION_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for result in reader.records() {
        let raw = result.map_err(|e| parse_err(error_line(&e), e.to_string()))?;
        let line = raw.position().map_or(0, |p| p.line());
        let row: CsvRow = raw
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        let record = csv_record(row).map_err(|m| parse_err(line, m))?;
        out.push((line, record));
    }
    Ok(out)
}

fn read_jsonl_predictions(path: &Path) -> Result<Vec<(u64, PredictionRecord)>, IoError> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i as u64 + 1;
        let parse_err = |message: String| IoError::Parse {
            path: path.to_path_buf(),
            line: n,
            message,
        };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        out.push((n, json_record(row).map_err(parse_err)?));
    }
    Ok(out)
}

/// Reads and validates a prediction file.
pub fn read_predictions(path: &Path, format: Format) -> Result<Vec<PredictionRecord>, IoError> {
    let records = match format {
        Format::Csv => read_csv_predictions(path)?,
        Format::Jsonl => read_jsonl_predictions(path)?,
    };
    check_all(path, &records)?;
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

fn join_outputs(outputs: &[f64]) -> String {
    outputs
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

pub fn write_predictions(
    path: &Path,
    records: &[PredictionRecord],
    format: Format,
) -> Result<(), IoError> {
    let werr = |source: std::io::Error| IoError::Write {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(werr)?;
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(file);
            let to_io = |e: csv::Error| werr(std::io::Error::other(e));
            w.write_record(PREDICTION_HEADER).map_err(to_io)?;
            for r in records {
                let multiclass = r.kind.family() == ModelFamily::MultiClass;
                w.write_record([
                    r.patient_id.clone(),
                    r.image_id.clone(),
                    r.kind.family().as_str().to_string(),
                    r.kind.num_classes().to_string(),
                    r.mc_sample.map(|s| s.to_string()).unwrap_or_default(),
                    join_outputs(&r.outputs),
                    if multiclass {
                        u8::from(r.is_probability).to_string()
                    } else {
                        String::new()
                    },
                ])
                .map_err(to_io)?;
            }
            w.flush().map_err(werr)?;
        }
        Format::Jsonl => {
            let mut w = BufWriter::new(file);
            for r in records {
                let row = JsonRow {
                    patient_id: r.patient_id.clone(),
                    image_id: r.image_id.clone(),
                    model_kind: r.kind.family().as_str().to_string(),
                    num_classes: r.kind.num_classes(),
                    mc_sample: r.mc_sample,
                    outputs: JsonOutputs::List(r.outputs.clone()),
                    is_probability: (r.kind.family() == ModelFamily::MultiClass)
                        .then_some(JsonFlag::Bool(r.is_probability)),
                };
                let line = serde_json::to_string(&row).map_err(|e| werr(e.into()))?;
                writeln!(w, "{line}").map_err(werr)?;
            }
            w.flush().map_err(werr)?;
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    patient_id: String,
    image_id: String,
    true_class: String,
}

/// Reads a label file, rejecting duplicate `(patient_id, image_id)` keys.
pub fn read_labels(path: &Path) -> Result<Vec<LabeledExample>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let parse_err = |line: u64, message: String| IoError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["patient_id", "image_id", "true_class"] {
        return Err(parse_err(
            1,
            "header must be patient_id,image_id,true_class".into(),
        ));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for result in reader.records() {
        let raw = result.map_err(|e| parse_err(error_line(&e), e.to_string()))?;
        let line = raw.position().map_or(0, |p| p.line());
        let row: LabelRow = raw
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        let true_class = row.true_class.parse::<usize>().map_err(|_| {
            parse_err(
                line,
                format!("true_class {:?} is not a class index", row.true_class),
            )
        })?;
        if !seen.insert((row.patient_id.clone(), row.image_id.clone())) {
            return Err(IoError::DuplicateLabel {
                path: path.to_path_buf(),
                line,
                patient_id: row.patient_id,
                image_id: row.image_id,
            });
        }
        out.push(LabeledExample {
            patient_id: row.patient_id,
            image_id: row.image_id,
            true_class,
        });
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[LabeledExample]) -> Result<(), IoError> {
    let werr = |source: std::io::Error| IoError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| werr(std::io::Error::other(e)))?;
    let to_io = |e: csv::Error| werr(std::io::Error::other(e));
    w.write_record(["patient_id", "image_id", "true_class"])
        .map_err(to_io)?;
    for l in labels {
        w.write_record([
            l.patient_id.clone(),
            l.image_id.clone(),
            l.true_class.to_string(),
        ])
        .map_err(to_io)?;
    }
    w.flush().map_err(werr)
}
