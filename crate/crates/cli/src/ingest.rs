//! Query files: JSONL objects or long-format CSV rows.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use expohedron::{MeritVector, QueryInstance, RelevanceVector};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: u64, message: String },
    #[error("unknown input format for {0}; use --input-format jsonl|csv")]
    UnknownFormat(String),
    #[error("no queries in input")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => Some(Self::Jsonl),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }
}

/// Divides graded labels by `scale` before range checks.
#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub scale: Option<f64>,
}

pub fn read_queries(
    path: &Path,
    format: Option<InputFormat>,
    options: IngestOptions,
) -> Result<Vec<QueryInstance>, IngestError> {
    let format = format
        .or_else(|| InputFormat::from_path(path))
        .ok_or_else(|| IngestError::UnknownFormat(path.display().to_string()))?;
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        InputFormat::Jsonl => parse_jsonl(BufReader::new(file), options),
        InputFormat::Csv => parse_csv(file, options),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonQuery {
    query_id: String,
    relevances: Vec<f64>,
    #[serde(default)]
    merits: Option<Vec<f64>>,
}

pub fn parse_jsonl(
    reader: impl BufRead,
    options: IngestOptions,
) -> Result<Vec<QueryInstance>, IngestError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let line = i as u64 + 1;
        let text = text.map_err(|e| IngestError::Line {
            line,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let q: JsonQuery = serde_json::from_str(&text).map_err(|e| IngestError::Line {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(q.query_id.clone()) {
            return Err(IngestError::Line {
                line,
                message: format!("duplicate query_id {:?}", q.query_id),
            });
        }
        let relevances = q
            .relevances
            .into_iter()
            .map(|r| scaled(r, options))
            .collect();
        out.push(build(q.query_id, relevances, q.merits, line)?);
    }
    if out.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct CsvRow {
    query_id: String,
    item_id: String,
    relevance: f64,
    #[serde(default)]
    merit: Option<f64>,
}

struct PendingQuery {
    first_line: u64,
    items: Vec<(String, f64, Option<f64>)>,
}

pub fn parse_csv(
    reader: impl Read,
    options: IngestOptions,
) -> Result<Vec<QueryInstance>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, PendingQuery> = HashMap::new();
    let mut items_seen: HashSet<(String, String)> = HashSet::new();

    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Line {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    for record in rdr.records() {
        let record = record.map_err(|e| IngestError::Line {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: CsvRow = record
            .deserialize(Some(&headers))
            .map_err(|e| IngestError::Line {
                line,
                message: e.to_string(),
            })?;
        if !items_seen.insert((row.query_id.clone(), row.item_id.clone())) {
            return Err(IngestError::Line {
                line,
                message: format!(
                    "duplicate item {:?} in query {:?}",
                    row.item_id, row.query_id
                ),
            });
        }
        let relevance = scaled(row.relevance, options);
        check_relevance(relevance, line)?;
        let group = groups.entry(row.query_id.clone()).or_insert_with(|| {
            order.push(row.query_id.clone());
            PendingQuery {
                first_line: line,
                items: Vec::new(),
            }
        });
        group.items.push((row.item_id, relevance, row.merit));
    }

    let mut out = Vec::with_capacity(order.len());
    for query_id in order {
        let mut group = groups.remove(&query_id).expect("grouped query");
        sort_items(&mut group.items);
        let line = group.first_line;
        let with_merit = group.items.iter().filter(|(_, _, m)| m.is_some()).count();
        let merits = match with_merit {
            0 => None,
            k if k == group.items.len() => {
                Some(group.items.iter().map(|(_, _, m)| m.unwrap()).collect())
            }
            _ => {
                return Err(IngestError::Line {
                    line,
                    message: format!("query {query_id:?} has merits for only some items"),
                })
            }
        };
        let relevances = group.items.iter().map(|(_, r, _)| *r).collect();
        out.push(build(query_id, relevances, merits, line)?);
    }
    if out.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(out)
}

/// Numeric item ids sort numerically, anything else lexicographically.
fn sort_items(items: &mut [(String, f64, Option<f64>)]) {
    if items.iter().all(|(id, _, _)| id.parse::<i64>().is_ok()) {
        items.sort_by_key(|(id, _, _)| id.parse::<i64>().unwrap());
    } else {
        items.sort_by(|a, b| a.0.cmp(&b.0));
    }
}

fn scaled(value: f64, options: IngestOptions) -> f64 {
    match options.scale {
        Some(s) => value / s,
        None => value,
    }
}

fn check_relevance(r: f64, line: u64) -> Result<(), IngestError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(IngestError::Line {
            line,
            message: format!("relevance {r} is outside [0, 1]; graded labels need --scale-labels"),
        });
    }
    Ok(())
}

fn build(
    query_id: String,
    relevances: Vec<f64>,
    merits: Option<Vec<f64>>,
    line: u64,
) -> Result<QueryInstance, IngestError> {
    let at_line = |e: expohedron::Error| IngestError::Line {
        line,
        message: e.to_string(),
    };
    for &r in &relevances {
        check_relevance(r, line)?;
    }
    let relevances = RelevanceVector::new(relevances).map_err(at_line)?;
    let merits = merits.map(MeritVector::new).transpose().map_err(at_line)?;
    QueryInstance::new(query_id, relevances, merits).map_err(at_line)
}
