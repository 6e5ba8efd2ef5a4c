//! Reading expression tables and group maps, and number formatting for reports.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use ebmix_core::ExpressionMatrix;
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Field separator of a delimited text file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Tsv,
}

impl Format {
    pub fn delimiter(self) -> u8 {
        match self {
            Format::Csv => b',',
            Format::Tsv => b'\t',
        }
    }

    /// `.csv` files are comma-separated; anything else is read as TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Tsv,
        }
    }
}

/// Where the sample-to-group assignment comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupSource {
    /// One label per sample column, in order.
    Labels(Vec<String>),
    /// Sample name to group label.
    Map(HashMap<String, String>),
    /// A row whose first cell is `#group`, directly below the header.
    Header,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub matrix: ExpressionMatrix<f64>,
    pub sample_names: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn data_err(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

fn is_group_row(first: &str) -> bool {
    first.trim().eq_ignore_ascii_case("#group")
}

/// Reads a gene-by-sample table: a header of sample names after a gene-id
/// column, then one row per gene. Duplicate gene ids get `_2`, `_3`, ...
/// suffixes and a warning.
pub fn ingest<R: Read>(reader: R, format: Format, groups: &GroupSource) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .has_headers(false)
        .flexible(true)
        .comment(None)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| data_err(format!("line 1: {e}")))?,
        None => return Err(data_err("input is empty")),
    };
    if header.len() < 2 {
        return Err(data_err("line 1: header needs a gene-id column and at least one sample"));
    }
    let sample_names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let width = header.len();

    let mut labels: Option<Vec<String>> = match groups {
        GroupSource::Labels(l) => {
            if l.len() != sample_names.len() {
                return Err(CliError::Usage(format!(
                    "{} group labels given for {} samples",
                    l.len(),
                    sample_names.len()
                )));
            }
            Some(l.clone())
        }
        GroupSource::Map(map) => Some(
            sample_names
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    map.get(s)
                        .cloned()
                        .ok_or_else(|| data_err(format!("sample {s:?} (column {}) has no group in the map", j + 2)))
                })
                .collect::<Result<_>>()?,
        ),
        GroupSource::Header => None,
    };

    let mut warnings = Vec::new();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (k, rec) in records.enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| data_err(format!("line {line}: {e}")))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if is_group_row(&rec[0]) {
            if rec.len() != width {
                return Err(data_err(format!(
                    "line {line}: group row has {} fields, expected {width}",
                    rec.len()
                )));
            }
            if labels.is_some() {
                warnings.push(format!("line {line}: #group row ignored, groups given explicitly"));
            } else if !ids.is_empty() {
                return Err(data_err(format!("line {line}: #group row must directly follow the header")));
            } else {
                labels = Some(rec.iter().skip(1).map(|s| s.trim().to_string()).collect());
            }
            continue;
        }
        if rec.len() != width {
            return Err(data_err(format!(
                "line {line}: gene {:?} has {} fields, expected {width}",
                rec[0].trim(),
                rec.len()
            )));
        }
        let raw_id = rec[0].trim().to_string();
        if raw_id.is_empty() {
            return Err(data_err(format!("line {line}: empty gene id")));
        }
        let count = seen.entry(raw_id.clone()).or_insert(0);
        *count += 1;
        let id = if *count > 1 {
            let renamed = format!("{raw_id}_{count}");
            warnings.push(format!("line {line}: duplicate gene id {raw_id:?} renamed to {renamed:?}"));
            renamed
        } else {
            raw_id
        };
        let values = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, cell)| {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    data_err(format!(
                        "line {line}, column {}: gene {id:?} sample {:?} has non-numeric value {cell:?}",
                        j + 2,
                        sample_names[j]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(data_err(format!(
                        "line {line}, column {}: gene {id:?} sample {:?} is not finite",
                        j + 2,
                        sample_names[j]
                    )));
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        ids.push(id);
        rows.push(values);
    }
    let labels = labels.ok_or_else(|| {
        CliError::Usage("no group assignment: pass --groups, --group-file, or add a #group row".into())
    })?;
    if ids.is_empty() {
        return Err(data_err("input has no gene rows"));
    }
    let matrix = ExpressionMatrix::new(ids, &labels, rows)?;
    Ok(Ingested {
        matrix,
        sample_names,
        warnings,
    })
}

/// Two-column `sample, group` map, comma- or tab-separated. Lines starting
/// with `#` and a leading `sample,group` header are skipped.
pub fn read_group_map<R: Read>(reader: R) -> Result<HashMap<String, String>> {
    let mut text = String::new();
    BufReader::new(reader)
        .read_to_string(&mut text)
        .map_err(|e| data_err(format!("group map: {e}")))?;
    let mut map = HashMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let sep = if line.contains('\t') { '\t' } else { ',' };
        let cells: Vec<&str> = line.split(sep).map(str::trim).collect();
        if cells.len() != 2 {
            return Err(data_err(format!("group map line {}: expected 2 fields, found {}", k + 1, cells.len())));
        }
        if map.is_empty() && cells[0].eq_ignore_ascii_case("sample") && cells[1].eq_ignore_ascii_case("group") {
            continue;
        }
        if map.insert(cells[0].to_string(), cells[1].to_string()).is_some() {
            return Err(data_err(format!("group map line {}: sample {:?} listed twice", k + 1, cells[0])));
        }
    }
    Ok(map)
}

/// Writes a matrix in the format [`ingest`] reads, with a `#group` row.
/// Values use the shortest representation that parses back to the same bits.
pub fn write_matrix<W: Write>(writer: W, matrix: &ExpressionMatrix<f64>, sample_names: &[String], format: Format) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(format.delimiter()).from_writer(writer);
    let wr = |e: csv::Error| data_err(format!("writing matrix: {e}"));
    let mut header = vec!["gene".to_string()];
    header.extend(sample_names.iter().cloned());
    w.write_record(&header).map_err(wr)?;
    let mut groups = vec!["#group".to_string()];
    groups.extend(matrix.group_of_sample().iter().map(|&k| matrix.group_labels()[k].clone()));
    w.write_record(&groups).map_err(wr)?;
    for (g, id) in matrix.gene_ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(matrix.row(g).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(wr)?;
    }
    w.flush().map_err(|e| data_err(format!("writing matrix: {e}")))
}

/// Rounds to 10 significant digits and prints the shortest form of the
/// rounded value; scientific notation outside `[1e-5, 1e15)`.
pub fn sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.9e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if (1e-5..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}
