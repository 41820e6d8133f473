use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{MetricRow, METRIC_CSV_HEADER};

/// Metric rows merged from a results directory, with the per-dataset best
/// method of every column marked.
#[derive(Debug, Clone)]
pub struct Report {
    /// Sorted by `(dataset, method)`.
    pub rows: Vec<MetricRow>,
    /// `best[i][c]`: row `i` holds the best mean of column `c` in its dataset.
    pub best: Vec<[bool; 6]>,
}

fn csv_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            csv_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "csv") {
            out.push(path);
        }
    }
    Ok(())
}

/// Reads every metric CSV under `dir` (recursively).
pub fn build_report(dir: &Path) -> Result<Report> {
    let mut files = Vec::new();
    csv_files(dir, &mut files)?;
    files.sort();
    let mut rows = Vec::new();
    for f in &files {
        let text = fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(METRIC_CSV_HEADER) {
            continue;
        }
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let row = MetricRow::from_csv(line).ok_or_else(|| Error::Format {
                path: f.clone(),
                reason: format!("bad metric row {line:?}"),
            })?;
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(Error::Format {
            path: dir.to_path_buf(),
            reason: "no metric CSV found".into(),
        });
    }
    rows.sort_by(|a, b| (&a.dataset, &a.method).cmp(&(&b.dataset, &b.method)));
    let best = mark_best(&rows);
    Ok(Report { rows, best })
}

/// Strict improvement only, so on ties the row met first (lowest method name)
/// keeps the mark.
fn mark_best(rows: &[MetricRow]) -> Vec<[bool; 6]> {
    let mut best = vec![[false; 6]; rows.len()];
    let mut start = 0;
    while start < rows.len() {
        let end = start + rows[start..].iter().take_while(|r| r.dataset == rows[start].dataset).count();
        for (c, &(_, higher)) in MetricRow::COLUMNS.iter().enumerate() {
            let mut winner: Option<(usize, f64)> = None;
            for (i, row) in rows.iter().enumerate().take(end).skip(start) {
                let v = row.columns()[c].mean;
                if v.is_nan() {
                    continue;
                }
                let better = match winner {
                    None => true,
                    Some((_, w)) => {
                        if higher {
                            v > w
                        } else {
                            v < w
                        }
                    }
                };
                if better {
                    winner = Some((i, v));
                }
            }
            if let Some((i, _)) = winner {
                best[i][c] = true;
            }
        }
        start = end;
    }
    best
}

impl Report {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| dataset | method |");
        for (name, higher) in MetricRow::COLUMNS {
            let arrow = if higher { "↑" } else { "↓" };
            let _ = write!(s, " {name} {arrow} |");
        }
        s.push_str("\n|---|---|");
        s.push_str(&"---|".repeat(6));
        s.push('\n');
        for (row, best) in self.rows.iter().zip(&self.best) {
            let _ = write!(s, "| {} | {} |", row.dataset, row.method);
            for (c, ms) in row.columns().iter().enumerate() {
                let cell = format!("{:.4e} ± {:.2e}", ms.mean, ms.std);
                if best[c] {
                    let _ = write!(s, " **{cell}** |");
                } else {
                    let _ = write!(s, " {cell} |");
                }
            }
            s.push('\n');
        }
        s.push_str("\nBold marks the best mean per dataset and column; ties go to the lexicographically first method.\n");
        s
    }
}
