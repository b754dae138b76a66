//! Delimited hypothesis tables: input parsing and the per-hypothesis fit
//! output with its `#` metadata header.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::surrogate::PValue;

pub const PVALUE_COLUMN: &str = "pvalue";

#[derive(Debug, Error)]
pub enum TableError {
    #[error("input table is empty")]
    Empty,

    #[error("duplicate column header '{0}'")]
    DuplicateHeader(String),

    #[error("no column named '{PVALUE_COLUMN}'")]
    MissingPValueColumn,

    #[error("line {line}, column '{column}': non-numeric value '{value}'")]
    NonNumeric { line: usize, column: String, value: String },

    #[error("row {row} (line {line}): missing value in column '{column}'")]
    MissingCell { row: usize, line: usize, column: String },

    #[error("line {line}: p-value {value} outside [0, 1]")]
    PValueOutOfRange { line: usize, value: f64 },

    #[error("malformed fit output: {0}")]
    Malformed(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("cannot read table: {0}")]
    Io(#[from] std::io::Error),
}

type TResult<T> = std::result::Result<T, TableError>;

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisTable {
    pub pvalues: Vec<PValue>,
    /// The p-values exactly as read, before clamping.
    pub raw_pvalues: Vec<f64>,
    pub covariate_names: Vec<String>,
    /// Column-major covariates, in header order.
    pub covariates: Vec<Vec<f64>>,
    /// Number of p-values moved by clamping away from 0 or 1.
    pub clamp_count: usize,
}

impl HypothesisTable {
    pub fn len(&self) -> usize {
        self.pvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pvalues.is_empty()
    }
}

fn detect_delimiter(text: &str) -> u8 {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

pub fn parse_table(path: impl AsRef<Path>) -> TResult<HypothesisTable> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_table_str(&text)
}

/// Parse comma- or tab-delimited text with a header row.
pub fn parse_table_str(text: &str) -> TResult<HypothesisTable> {
    if text.trim().is_empty() {
        return Err(TableError::Empty);
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(text))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    for (i, h) in headers.iter().enumerate() {
        if headers[..i].contains(h) {
            return Err(TableError::DuplicateHeader(h.clone()));
        }
    }
    let p_col = headers
        .iter()
        .position(|h| h == PVALUE_COLUMN)
        .ok_or(TableError::MissingPValueColumn)?;
    let cov_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != p_col).collect();

    let mut raw_pvalues = Vec::new();
    let mut pvalues = Vec::new();
    let mut covariates = vec![Vec::new(); cov_cols.len()];
    let mut clamp_count = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row + 2, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let cell = |c: usize| -> TResult<f64> {
            match record.get(c) {
                None | Some("") => Err(TableError::MissingCell {
                    row: row + 1,
                    line,
                    column: headers[c].clone(),
                }),
                Some(v) => v.parse::<f64>().ok().filter(|x| !x.is_nan()).ok_or_else(|| {
                    TableError::NonNumeric { line, column: headers[c].clone(), value: v.to_owned() }
                }),
            }
        };
        let p = cell(p_col)?;
        let (pv, clamped) =
            PValue::new_flagged(p).map_err(|_| TableError::PValueOutOfRange { line, value: p })?;
        clamp_count += usize::from(clamped);
        raw_pvalues.push(p);
        pvalues.push(pv);
        for (j, &c) in cov_cols.iter().enumerate() {
            covariates[j].push(cell(c)?);
        }
    }
    if pvalues.is_empty() {
        return Err(TableError::Empty);
    }
    Ok(HypothesisTable {
        pvalues,
        raw_pvalues,
        covariate_names: cov_cols.iter().map(|&c| headers[c].clone()).collect(),
        covariates,
        clamp_count,
    })
}

/// Per-hypothesis output of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutput {
    /// `key=value` pairs written as `# key=value` lines, in order.
    pub metadata: Vec<(String, String)>,
    pub covariate_names: Vec<String>,
    pub pvalue: Vec<f64>,
    pub covariates: Vec<Vec<f64>>,
    pub pi0_hat: Vec<f64>,
    pub k_hat: Vec<f64>,
    pub psi_stat: Vec<f64>,
    pub rejected: Vec<bool>,
}

impl FitOutput {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Floats use shortest round-trip formatting, so reading the file back
    /// reproduces every value exactly.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}={v}")?;
        }
        let mut header = vec!["index".to_owned(), PVALUE_COLUMN.to_owned()];
        header.extend(self.covariate_names.iter().cloned());
        header.extend(["pi0_hat", "k_hat", "psi_stat", "rejected"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.pvalue.len() {
            let mut line = format!("{},{}", i + 1, self.pvalue[i]);
            for col in &self.covariates {
                line.push_str(&format!(",{}", col[i]));
            }
            line.push_str(&format!(
                ",{},{},{},{}",
                self.pi0_hat[i],
                self.k_hat[i],
                self.psi_stat[i],
                u8::from(self.rejected[i])
            ));
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> TResult<Self> {
        let mut metadata = Vec::new();
        let mut body = String::new();
        for line in BufReader::new(input).lines() {
            let line = line?;
            match line.strip_prefix('#') {
                Some(meta) => {
                    let (k, v) = meta
                        .trim()
                        .split_once('=')
                        .ok_or_else(|| TableError::Malformed(format!("metadata line '{line}'")))?;
                    metadata.push((k.to_owned(), v.to_owned()));
                }
                None => {
                    body.push_str(&line);
                    body.push('\n');
                }
            }
        }
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let n = headers.len();
        if n < 6 || headers[0] != "index" || headers[1] != PVALUE_COLUMN {
            return Err(TableError::Malformed(format!("unexpected header {headers:?}")));
        }
        let covariate_names = headers[2..n - 4].to_vec();
        let mut out = FitOutput {
            metadata,
            covariate_names,
            pvalue: Vec::new(),
            covariates: vec![Vec::new(); n - 6],
            pi0_hat: Vec::new(),
            k_hat: Vec::new(),
            psi_stat: Vec::new(),
            rejected: Vec::new(),
        };
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let num = |c: usize| -> TResult<f64> {
                let v = record.get(c).unwrap_or("");
                v.parse().map_err(|_| TableError::NonNumeric {
                    line,
                    column: headers[c].clone(),
                    value: v.to_owned(),
                })
            };
            out.pvalue.push(num(1)?);
            for j in 0..n - 6 {
                out.covariates[j].push(num(2 + j)?);
            }
            out.pi0_hat.push(num(n - 4)?);
            out.k_hat.push(num(n - 3)?);
            out.psi_stat.push(num(n - 2)?);
            out.rejected.push(num(n - 1)? != 0.0);
        }
        Ok(out)
    }

    /// Metadata as a map, for lookups that do not care about order.
    pub fn metadata_map(&self) -> BTreeMap<&str, &str> {
        self.metadata.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
    }
}
