//! File formats: headerless 0/1 CSV for Q-matrices and responses, JSON
//! hierarchies, CSV profile sets.

use std::path::Path;

use crate::error::{Error, Result};
use crate::models::ResponseMatrix;
use crate::qmatrix::{Hierarchy, ProfileSet, QMatrix};

/// Parses headerless comma-separated 0/1 rows. Blank lines are skipped;
/// every row must have the same width.
pub fn parse_binary_csv(text: &str) -> Result<Vec<Vec<u8>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            column: 0,
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        for (c, field) in rec.iter().enumerate() {
            let v = match field {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Parse {
                        line,
                        column: c + 1,
                        msg: format!("expected 0 or 1, found '{other}'"),
                    })
                }
            };
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line,
                    column: row.len().min(first.len()) + 1,
                    msg: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            msg: "no data rows".into(),
        });
    }
    Ok(rows)
}

pub fn to_binary_csv(rows: &[Vec<u8>]) -> String {
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().map(u8::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse {
        line: 0,
        column: 0,
        msg: format!("{}: {e}", path.display()),
    })
}

pub fn parse_q(text: &str) -> Result<QMatrix> {
    QMatrix::new(&parse_binary_csv(text)?)
}

pub fn read_q(path: &Path) -> Result<QMatrix> {
    parse_q(&read(path)?)
}

pub fn parse_responses(text: &str) -> Result<ResponseMatrix> {
    ResponseMatrix::new(&parse_binary_csv(text)?)
}

pub fn read_responses(path: &Path) -> Result<ResponseMatrix> {
    parse_responses(&read(path)?)
}

/// `{"K": k, "edges": [[prerequisite, dependent], ...]}`, 1-based.
pub fn parse_hierarchy(text: &str) -> Result<Hierarchy> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })
}

pub fn read_hierarchy(path: &Path) -> Result<Hierarchy> {
    parse_hierarchy(&read(path)?)
}

pub fn profile_set_csv(set: &ProfileSet) -> String {
    to_binary_csv(&set.to_rows())
}
