//! TREC run files: `qid Q0 docid rank score tag`.

use std::fmt::Write;

use log::warn;

use crate::error::{Error, Result};
use crate::model::{Run, RunEntry};

/// Parses a TREC run file.
///
/// The run tag is taken from the first row. Rows carrying a different tag
/// are kept, with a warning. Column 2 may be `Q0` or `0`; its value is ignored.
pub fn parse_run_file(text: &str) -> Result<Run> {
    let mut tag: Option<String> = None;
    let mut mismatched_tags = 0usize;
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::parse(
                "run",
                line_no,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        let rank: u32 = cols[3]
            .parse()
            .map_err(|_| Error::parse("run", line_no, format!("rank {:?} is not a positive integer", cols[3])))?;
        if rank == 0 {
            return Err(Error::parse("run", line_no, "rank must be >= 1"));
        }
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| Error::parse("run", line_no, format!("score {:?} is not a number", cols[4])))?;
        match &tag {
            None => tag = Some(cols[5].to_string()),
            Some(t) if t != cols[5] => mismatched_tags += 1,
            Some(_) => {}
        }
        entries.push(RunEntry {
            query_id: cols[0].to_string(),
            passage_id: cols[2].to_string(),
            rank,
            score,
        });
    }
    let tag = tag.unwrap_or_default();
    if mismatched_tags > 0 {
        warn!("run {tag}: {mismatched_tags} rows carry a different run tag; keeping {tag}");
    }
    Run::new(tag, entries)
}

/// Serializes a run in TREC format, ordered by query then rank.
pub fn write_run(run: &Run) -> String {
    let mut out = String::new();
    for e in run.entries() {
        let _ = writeln!(
            out,
            "{} Q0 {} {} {} {}",
            e.query_id,
            e.passage_id,
            e.rank,
            e.score,
            run.run_tag()
        );
    }
    out
}
