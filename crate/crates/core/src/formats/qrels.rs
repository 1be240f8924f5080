//! Qrels files: `qid 0 docid grade`.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::model::Judgment;

/// Parses a qrels file, keeping row order. Duplicate (query, passage) pairs are rejected.
pub fn parse_qrels(text: &str) -> Result<Vec<Judgment>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                "qrels",
                line_no,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let grade: i32 = cols[3]
            .parse()
            .map_err(|_| Error::parse("qrels", line_no, format!("grade {:?} is not an integer", cols[3])))?;
        if !seen.insert((cols[0], cols[2])) {
            return Err(Error::Validation(format!(
                "qrels line {line_no}: duplicate judgment for query {} passage {}",
                cols[0], cols[2]
            )));
        }
        out.push(Judgment::new(cols[0], cols[2], grade));
    }
    Ok(out)
}

/// Emits qrels rows sorted by (query, passage), one `qid 0 docid grade` line each.
pub fn write_qrels(labels: &[Judgment]) -> String {
    let mut sorted: Vec<&Judgment> = labels.iter().collect();
    sorted.sort_by(|a, b| (&a.query_id, &a.passage_id).cmp(&(&b.query_id, &b.passage_id)));
    let mut out = String::new();
    for j in sorted {
        let _ = writeln!(out, "{} 0 {} {}", j.query_id, j.passage_id, j.grade);
    }
    out
}
