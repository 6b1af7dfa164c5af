use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{preprocess, CorpusError, Dataset, Label, LabeledExample, Provenance, Side};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Jsonl,
}

impl DatasetFormat {
    /// Infers the format from a file extension (`.csv`, `.jsonl`, `.json`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(DatasetFormat::Csv),
            "jsonl" | "json" | "ndjson" => Some(DatasetFormat::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(DatasetFormat::Csv),
            "jsonl" => Ok(DatasetFormat::Jsonl),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

/// Result of [`load_dataset`].
#[derive(Clone, Debug)]
pub struct Loaded {
    pub dataset: Dataset,
    /// Rows whose text normalized to the empty string.
    pub dropped_empty: usize,
}

/// One CSV row or JSONL object. Only `text` and `label` are required; the
/// provenance columns are written by this crate and read back when present.
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    text: String,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generated: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl Record {
    fn from_example(e: &LabeledExample) -> Self {
        Record {
            text: e.text.clone(),
            label: e.label.as_str().to_owned(),
            source: Some(e.provenance.source.clone()),
            split: Some(e.provenance.split.as_str().to_owned()),
            generated: Some(e.provenance.generated),
            seed: e.provenance.seed,
        }
    }

    fn into_example(self, name: &str, line: u64) -> Result<Option<LabeledExample>, CorpusError> {
        let label = Label::from_str(self.label.trim()).map_err(|value| CorpusError::UnknownLabel { value, line })?;
        let split = match self.split.as_deref() {
            Some(s) => Side::from_str(s).map_err(|v| CorpusError::MalformedRow {
                line,
                reason: format!("unknown split {v:?}"),
            })?,
            None => Side::Unsplit,
        };
        let text = preprocess(&self.text);
        if text.is_empty() {
            return Ok(None);
        }
        Ok(Some(LabeledExample {
            text,
            label,
            provenance: Provenance {
                source: self.source.filter(|s| !s.is_empty()).unwrap_or_else(|| name.to_owned()),
                split,
                generated: self.generated.unwrap_or(false),
                seed: self.seed,
            },
        }))
    }
}

/// Loads a labeled dataset, normalizing every text with [`preprocess`].
pub fn load_dataset(path: &Path, format: DatasetFormat, name: &str) -> Result<Loaded, CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.display().to_string()));
    }
    let file = File::open(path)?;
    match format {
        DatasetFormat::Csv => read_csv(BufReader::new(file), name),
        DatasetFormat::Jsonl => read_jsonl(BufReader::new(file), name),
    }
}

fn read_csv<R: std::io::Read>(reader: R, name: &str) -> Result<Loaded, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    for required in ["text", "label"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CorpusError::MalformedRow {
                line: 1,
                reason: format!("missing header column {required:?}"),
            });
        }
    }
    let mut examples = Vec::new();
    let mut dropped_empty = 0;
    for (i, row) in rdr.records().enumerate() {
        let fallback_line = i as u64 + 2;
        let row = row.map_err(|e| CorpusError::MalformedRow {
            line: e.position().map_or(fallback_line, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(fallback_line, |p| p.line());
        let rec: Record = row.deserialize(Some(&headers)).map_err(|e| CorpusError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        match rec.into_example(name, line)? {
            Some(e) => examples.push(e),
            None => dropped_empty += 1,
        }
    }
    Ok(Loaded {
        dataset: Dataset::new(name, examples),
        dropped_empty,
    })
}

fn read_jsonl<R: BufRead>(reader: R, name: &str) -> Result<Loaded, CorpusError> {
    let mut examples = Vec::new();
    let mut dropped_empty = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRow {
            line: line_no,
            reason: e.to_string(),
        })?;
        match rec.into_example(name, line_no)? {
            Some(e) => examples.push(e),
            None => dropped_empty += 1,
        }
    }
    Ok(Loaded {
        dataset: Dataset::new(name, examples),
        dropped_empty,
    })
}

/// Writes `text,label,source,split,generated,seed` rows.
pub fn write_csv(d: &Dataset, path: &Path) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["text", "label", "source", "split", "generated", "seed"])
        .map_err(csv_io)?;
    for e in &d.examples {
        let seed = e.provenance.seed.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([
            e.text.as_str(),
            e.label.as_str(),
            e.provenance.source.as_str(),
            e.provenance.split.as_str(),
            if e.provenance.generated { "true" } else { "false" },
            seed.as_str(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl(d: &Dataset, path: &Path) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in &d.examples {
        serde_json::to_writer(&mut w, &Record::from_example(e)).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(d: &Dataset, path: &Path, format: DatasetFormat) -> Result<(), CorpusError> {
    match format {
        DatasetFormat::Csv => write_csv(d, path),
        DatasetFormat::Jsonl => write_jsonl(d, path),
    }
}

fn csv_io(e: csv::Error) -> CorpusError {
    CorpusError::Io(std::io::Error::other(e))
}
