use std::collections::BTreeMap;
use std::fmt::{self, Write};
use std::str::FromStr;

use super::{build_qrels, GradeIndex};
use crate::error::{Error, Result};
use crate::model::{GradePolicy, Judgment, QuestionBank, MAX_RATING};

/// Largest official judgment grade shown as its own column.
const MAX_JUDGMENT: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct KappaResult {
    pub overall: f64,
    /// One-vs-rest kappa of each category; `None` when degenerate.
    pub per_row: Vec<Option<f64>>,
}

/// Cohen's kappa of a square confusion matrix (rows: one rater, columns:
/// the other, same category order).
pub fn cohens_kappa(counts: &[Vec<u64>]) -> Result<KappaResult> {
    let n = counts.len();
    if n == 0 || counts.iter().any(|row| row.len() != n) {
        return Err(Error::Contract("kappa needs a non-empty square matrix".into()));
    }
    let total: u64 = counts.iter().flatten().sum();
    if total == 0 {
        return Err(Error::Undefined("kappa of an empty table".into()));
    }
    let rows: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..n).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
    let nf = total as f64;
    let po = (0..n).map(|i| counts[i][i]).sum::<u64>() as f64 / nf;
    let pe = (0..n).map(|i| rows[i] as f64 * cols[i] as f64).sum::<f64>() / (nf * nf);
    if (1.0 - pe).abs() < 1e-15 {
        return Err(Error::Undefined("kappa with degenerate marginals".into()));
    }
    let per_row = (0..n)
        .map(|i| one_vs_rest(counts[i][i], rows[i], cols[i], total))
        .collect();
    Ok(KappaResult {
        overall: (po - pe) / (1.0 - pe),
        per_row,
    })
}

/// Kappa of the 2x2 table "category vs everything else".
fn one_vs_rest(hit: u64, row: u64, col: u64, total: u64) -> Option<f64> {
    let n = total as f64;
    let (a, r, c) = (hit as f64, row as f64, col as f64);
    let both_rest = n - r - c + a;
    let po = (a + both_rest) / n;
    let pe = (r * c + (n - r) * (n - c)) / (n * n);
    if (1.0 - pe).abs() < 1e-15 {
        None
    } else {
        Some((po - pe) / (1.0 - pe))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollapseKind {
    Graded,
    Lenient,
    Strict,
    Binary,
    Custom,
}

impl CollapseKind {
    pub fn name(self) -> &'static str {
        match self {
            CollapseKind::Graded => "graded",
            CollapseKind::Lenient => "lenient",
            CollapseKind::Strict => "strict",
            CollapseKind::Binary => "binary",
            CollapseKind::Custom => "custom",
        }
    }
}

/// Each inner list is one row or column: the grades merged into it.
type Groups = Vec<Vec<u32>>;

/// How labels (rows) and official judgments (columns) are grouped.
///
/// `judgment_level` is the smallest official grade counted as relevant:
/// 1 for CAR-style judgments, 2 for DL-style.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollapseSpec {
    kind: CollapseKind,
    judgment_level: u32,
    custom: Option<(Groups, Groups)>,
}

struct Layout {
    rows: Vec<Vec<u32>>,
    cols: Vec<Vec<u32>>,
    targets: Vec<Option<usize>>,
}

impl CollapseSpec {
    fn simple(kind: CollapseKind, judgment_level: u32) -> Result<Self> {
        if !(1..=MAX_JUDGMENT).contains(&judgment_level) {
            return Err(Error::Validation(format!(
                "judgment level must be in 1..={MAX_JUDGMENT}, got {judgment_level}"
            )));
        }
        Ok(CollapseSpec {
            kind,
            judgment_level,
            custom: None,
        })
    }

    /// Every label value against every judgment grade.
    pub fn graded(judgment_level: u32) -> Result<Self> {
        Self::simple(CollapseKind::Graded, judgment_level)
    }

    /// Ratings 1-5 against 0.
    pub fn lenient(judgment_level: u32) -> Result<Self> {
        Self::simple(CollapseKind::Lenient, judgment_level)
    }

    /// Ratings 4-5 against 0-3.
    pub fn strict(judgment_level: u32) -> Result<Self> {
        Self::simple(CollapseKind::Strict, judgment_level)
    }

    /// Binary labels 1 against 0.
    pub fn binary(judgment_level: u32) -> Result<Self> {
        Self::simple(CollapseKind::Binary, judgment_level)
    }

    /// Explicit groups; row group i is mapped to column group i.
    pub fn custom(label_groups: Vec<Vec<u32>>, judgment_groups: Vec<Vec<u32>>) -> Result<Self> {
        check_partition(&label_groups, "label")?;
        check_partition(&judgment_groups, "judgment")?;
        Ok(CollapseSpec {
            kind: CollapseKind::Custom,
            judgment_level: 1,
            custom: Some((label_groups, judgment_groups)),
        })
    }

    pub fn kind(&self) -> CollapseKind {
        self.kind
    }

    pub fn judgment_level(&self) -> u32 {
        self.judgment_level
    }

    fn judgment_split(&self) -> Vec<Vec<u32>> {
        vec![
            (self.judgment_level..=MAX_JUDGMENT).collect(),
            (0..self.judgment_level).collect(),
        ]
    }

    fn layout(&self, binary_labels: bool) -> Result<Layout> {
        let two_by_two = |rows: Vec<Vec<u32>>| Layout {
            rows,
            cols: self.judgment_split(),
            targets: vec![Some(0), Some(1)],
        };
        Ok(match self.kind {
            CollapseKind::Graded => {
                let cols: Vec<Vec<u32>> = (0..=MAX_JUDGMENT).rev().map(|g| vec![g]).collect();
                let col_of = |g: u32| Some((MAX_JUDGMENT - g) as usize);
                let top = self.judgment_level.clamp(2, MAX_JUDGMENT);
                if binary_labels {
                    Layout {
                        rows: vec![vec![1], vec![0]],
                        cols,
                        targets: vec![col_of(top), col_of(0)],
                    }
                } else {
                    let target = |r: u8| match r {
                        4.. => col_of(top),
                        1..=3 => col_of(1),
                        0 => col_of(0),
                    };
                    Layout {
                        rows: (0..=MAX_RATING).rev().map(|r| vec![u32::from(r)]).collect(),
                        cols,
                        targets: (0..=MAX_RATING).rev().map(target).collect(),
                    }
                }
            }
            CollapseKind::Binary => two_by_two(vec![vec![1], vec![0]]),
            CollapseKind::Lenient if binary_labels => two_by_two(vec![vec![1], vec![0]]),
            CollapseKind::Lenient => two_by_two(vec![(1..=u32::from(MAX_RATING)).collect(), vec![0]]),
            CollapseKind::Strict if binary_labels => {
                return Err(Error::Validation("strict collapse needs graded labels".into()))
            }
            CollapseKind::Strict => two_by_two(vec![vec![4, 5], vec![0, 1, 2, 3]]),
            CollapseKind::Custom => {
                let (rows, cols) = self.custom.clone().expect("custom spec carries groups");
                let targets = (0..rows.len()).map(|i| (i < cols.len()).then_some(i)).collect();
                Layout { rows, cols, targets }
            }
        })
    }
}

fn check_partition(groups: &[Vec<u32>], what: &str) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    if groups.is_empty() || groups.iter().any(Vec::is_empty) {
        return Err(Error::Validation(format!("{what} groups must be non-empty")));
    }
    for v in groups.iter().flatten() {
        if !seen.insert(*v) {
            return Err(Error::Validation(format!("{what} value {v} is in two groups")));
        }
    }
    Ok(())
}

impl fmt::Display for CollapseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.custom {
            Some((rows, cols)) => {
                let side = |gs: &[Vec<u32>]| gs.iter().map(|g| group_label(g)).collect::<Vec<_>>().join(",");
                write!(f, "custom:{}:{}", side(rows), side(cols))
            }
            None => f.write_str(self.kind.name()),
        }
    }
}

impl FromStr for CollapseSpec {
    type Err = Error;

    /// `graded`, `lenient`, `strict`, `binary` (judgment level 1), or
    /// `custom:<label groups>:<judgment groups>` such as `custom:4+5,0+1+2+3:2+3,0+1`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graded" => Self::graded(1),
            "lenient" => Self::lenient(1),
            "strict" => Self::strict(1),
            "binary" => Self::binary(1),
            _ => {
                let bad = || Error::Validation(format!("unknown collapse {s:?}"));
                let rest = s.strip_prefix("custom:").ok_or_else(bad)?;
                let (rows, cols) = rest.split_once(':').ok_or_else(bad)?;
                let side = |text: &str| -> Result<Vec<Vec<u32>>> {
                    text.split(',')
                        .map(|g| {
                            g.split('+')
                                .map(|v| v.trim().parse::<u32>().map_err(|_| bad()))
                                .collect()
                        })
                        .collect()
                };
                Self::custom(side(rows)?, side(cols)?)
            }
        }
    }
}

fn group_label(values: &[u32]) -> String {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    sorted.iter().map(u32::to_string).collect::<Vec<_>>().join("+")
}

/// Counts of labels (rows) against judgments (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionTable {
    pub name: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    /// The column each row is expected to agree with (boxed in the text layout).
    pub row_targets: Vec<Option<usize>>,
    pub kappa_overall: Option<f64>,
    pub kappa_per_row: Vec<Option<f64>>,
}

impl ConfusionTable {
    /// Builds a table and its kappa values. Overall kappa merges rows that
    /// share a target column into one category; rows without a target are
    /// left out of it.
    pub fn new(
        name: impl Into<String>,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        counts: Vec<Vec<u64>>,
        row_targets: Vec<Option<usize>>,
    ) -> Result<Self> {
        let (nr, nc) = (row_labels.len(), col_labels.len());
        if counts.len() != nr || counts.iter().any(|r| r.len() != nc) || row_targets.len() != nr {
            return Err(Error::Contract("confusion table shape mismatch".into()));
        }
        if row_targets.iter().flatten().any(|&t| t >= nc) {
            return Err(Error::Contract("row target out of range".into()));
        }
        let total: u64 = counts.iter().flatten().sum();
        let cols: Vec<u64> = (0..nc).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        let kappa_per_row = (0..nr)
            .map(|i| {
                let t = row_targets[i]?;
                if total == 0 {
                    return None;
                }
                one_vs_rest(counts[i][t], counts[i].iter().sum(), cols[t], total)
            })
            .collect();
        let mut square = vec![vec![0u64; nc]; nc];
        for (i, row) in counts.iter().enumerate() {
            if let Some(t) = row_targets[i] {
                for (j, v) in row.iter().enumerate() {
                    square[t][j] += v;
                }
            }
        }
        let kappa_overall = cohens_kappa(&square).ok().map(|k| k.overall);
        Ok(ConfusionTable {
            name: name.into(),
            row_labels,
            col_labels,
            counts,
            row_targets,
            kappa_overall,
            kappa_per_row,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.name);
        let _ = writeln!(out, "label\t{}\ttotal\tkappa", self.col_labels.join("\t"));
        for (i, row) in self.counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                self.row_labels[i],
                cells.join("\t"),
                row.iter().sum::<u64>(),
                fmt_kappa(self.kappa_per_row[i])
            );
        }
        let _ = writeln!(out, "# kappa_overall\t{}", fmt_kappa(self.kappa_overall));
        out
    }

    /// Plain-text table with the expected cell of each row in brackets.
    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["Label".to_string()];
        header.extend(self.col_labels.iter().cloned());
        header.extend(["Total".to_string(), "Cohen's kappa".to_string()]);
        grid.push(header);
        for (i, row) in self.counts.iter().enumerate() {
            let mut line = vec![self.row_labels[i].clone()];
            for (j, v) in row.iter().enumerate() {
                line.push(if self.row_targets[i] == Some(j) {
                    format!("[{v}]")
                } else {
                    v.to_string()
                });
            }
            line.push(row.iter().sum::<u64>().to_string());
            line.push(fmt_kappa(self.kappa_per_row[i]));
            grid.push(line);
        }
        let ncols = grid[0].len();
        let widths: Vec<usize> = (0..ncols)
            .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!("{}\n", self.name.to_uppercase());
        for (r, line) in grid.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    if c == 0 {
                        format!("{cell:<w$}", w = widths[c])
                    } else {
                        format!("{cell:>w$}", w = widths[c])
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if r == 0 {
                let rule: usize = widths.iter().sum::<usize>() + 2 * (ncols - 1);
                out.push_str(&"-".repeat(rule));
                out.push('\n');
            }
        }
        let _ = writeln!(out, "overall kappa: {}", fmt_kappa(self.kappa_overall));
        out
    }
}

fn fmt_kappa(k: Option<f64>) -> String {
    k.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    pub tables: Vec<ConfusionTable>,
    /// (query, passage) pairs with both a label and a judgment.
    pub joined: usize,
    pub labels_without_judgment: usize,
    pub judgments_without_label: usize,
}

impl AgreementReport {
    pub fn to_tsv(&self) -> String {
        self.tables
            .iter()
            .map(ConfusionTable::to_tsv)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn to_text(&self) -> String {
        self.tables
            .iter()
            .map(ConfusionTable::to_text)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Joins EXAM labels with official judgments on (query, passage) and
/// tabulates them under each collapse. Negative judgments count as 0.
pub fn agreement_tables(
    labels: &[Judgment],
    judgments: &[Judgment],
    specs: &[CollapseSpec],
) -> Result<AgreementReport> {
    agreement_tables_named(labels, judgments, specs, "")
}

fn agreement_tables_named(
    labels: &[Judgment],
    judgments: &[Judgment],
    specs: &[CollapseSpec],
    suffix: &str,
) -> Result<AgreementReport> {
    let official: BTreeMap<(&str, &str), u32> = judgments
        .iter()
        .map(|j| ((j.query_id.as_str(), j.passage_id.as_str()), j.relevance()))
        .collect();
    let mut pairs = Vec::new();
    let mut matched = std::collections::BTreeSet::new();
    for l in labels {
        let key = (l.query_id.as_str(), l.passage_id.as_str());
        if l.grade < 0 || l.grade > i32::from(MAX_RATING) {
            return Err(Error::Validation(format!(
                "label {} for {}/{} is outside 0..={MAX_RATING}",
                l.grade, l.query_id, l.passage_id
            )));
        }
        if let Some(&j) = official.get(&key) {
            if matched.insert(key) {
                pairs.push((l.grade as u32, j));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Validation(
            "no (query, passage) pair has both a label and a judgment".into(),
        ));
    }
    let binary_labels = pairs.iter().all(|&(l, _)| l <= 1);

    let mut tables = Vec::with_capacity(specs.len());
    for spec in specs {
        let layout = spec.layout(binary_labels)?;
        let locate = |groups: &[Vec<u32>], v: u32, what: &str| -> Result<usize> {
            groups
                .iter()
                .position(|g| g.contains(&v))
                .ok_or_else(|| Error::Validation(format!("{what} {v} is not covered by the {spec} collapse")))
        };
        let mut counts = vec![vec![0u64; layout.cols.len()]; layout.rows.len()];
        for &(l, j) in &pairs {
            let r = locate(&layout.rows, l, "label")?;
            let c = locate(&layout.cols, j, "judgment")?;
            counts[r][c] += 1;
        }
        let labels_of = |groups: &[Vec<u32>]| groups.iter().map(|g| group_label(g)).collect();
        tables.push(ConfusionTable::new(
            format!("{}{suffix}", spec.kind().name()),
            labels_of(&layout.rows),
            labels_of(&layout.cols),
            counts,
            layout.targets,
        )?);
    }
    Ok(AgreementReport {
        tables,
        joined: pairs.len(),
        labels_without_judgment: labels.len() - pairs.len(),
        judgments_without_label: official.len() - matched.len(),
    })
}

/// Binary and graded tables of binary EXAM labels for each `min_answers`
/// value, in the given order.
pub fn min_answers_sweep(
    grades: &GradeIndex,
    bank: &QuestionBank,
    policy: &GradePolicy,
    judgments: &[Judgment],
    min_answers: &[u32],
    judgment_level: u32,
) -> Result<Vec<(u32, AgreementReport)>> {
    let specs = [
        CollapseSpec::binary(judgment_level)?,
        CollapseSpec::graded(judgment_level)?,
    ];
    let mut out = Vec::with_capacity(min_answers.len());
    for &n in min_answers {
        let policy = policy.with_min_answers(n)?;
        let labels = build_qrels(grades, bank, &policy, false)?;
        let report = agreement_tables_named(&labels, judgments, &specs, &format!(" min-answers={n}"))?;
        out.push((n, report));
    }
    Ok(out)
}
