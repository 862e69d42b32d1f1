//! `compare`: final-metric table and mean-accuracy curves across runs.
//! Run directories are only read.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::run::{MANIFEST, SUMMARY_CSV};

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SummaryRow {
    pub round: usize,
    pub mean: f64,
    pub best10: f64,
    pub worst10: f64,
    pub std: f64,
    pub conflicts: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub rows: Vec<SummaryRow>,
}

impl RunSummary {
    pub fn last(&self) -> &SummaryRow {
        self.rows.last().expect("loaded runs have at least one row")
    }
}

pub fn load_run(dir: &Path) -> Result<RunSummary> {
    let incomplete = |message: String| CliError::IncompleteRun {
        path: dir.to_path_buf(),
        message,
    };
    if !dir.join(MANIFEST).is_file() {
        return Err(incomplete(format!("missing {MANIFEST}")));
    }
    let path = dir.join(SUMMARY_CSV);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| incomplete(format!("{SUMMARY_CSV}: {e}")))?;
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<SummaryRow>, _>>()
        .map_err(|e| incomplete(format!("{SUMMARY_CSV}: {e}")))?;
    if rows.is_empty() {
        return Err(incomplete(format!("{SUMMARY_CSV} has no rows")));
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(RunSummary { name, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Better {
    Higher,
    Lower,
}

const COLUMNS: [(&str, Better); 4] = [
    ("Mean", Better::Higher),
    ("Best10", Better::Higher),
    ("Worst10", Better::Higher),
    ("Std", Better::Lower),
];

fn column(row: &SummaryRow, c: usize) -> f64 {
    [row.mean, row.best10, row.worst10, row.std][c]
}

/// Per column: marks (`*` best, `_` second best, blank) for each run.
fn marks(runs: &[RunSummary]) -> Vec<Vec<char>> {
    let mut out = vec![vec![' '; COLUMNS.len()]; runs.len()];
    for (c, &(_, better)) in COLUMNS.iter().enumerate() {
        let mut order: Vec<usize> = (0..runs.len()).collect();
        order.sort_by(|&a, &b| {
            let (va, vb) = (column(runs[a].last(), c), column(runs[b].last(), c));
            let by_value = match better {
                Better::Higher => vb.total_cmp(&va),
                Better::Lower => va.total_cmp(&vb),
            };
            match by_value {
                Ordering::Equal => runs[a].name.cmp(&runs[b].name),
                o => o,
            }
        });
        for (rank, &i) in order.iter().take(2).enumerate() {
            out[i][c] = if rank == 0 { '*' } else { '_' };
        }
    }
    out
}

/// Aligned text table of final metrics, one row per run.
pub fn render_table(runs: &[RunSummary]) -> String {
    let marks = marks(runs);
    let width = runs.iter().map(|r| r.name.len()).max().unwrap_or(0).max(3);
    let mut s = format!("{:<width$}  {:>6}", "run", "round");
    for (name, _) in COLUMNS {
        let _ = write!(s, "  {name:>8}");
    }
    s.push('\n');
    for (run, m) in runs.iter().zip(&marks) {
        let last = run.last();
        let _ = write!(s, "{:<width$}  {:>6}", run.name, last.round);
        for (c, mark) in m.iter().enumerate() {
            let _ = write!(s, "  {:>7.4}{mark}", column(last, c));
        }
        s.push('\n');
    }
    s
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Mean accuracy against round, one polyline per run.
pub fn render_svg(runs: &[RunSummary]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let max_round = runs
        .iter()
        .flat_map(|r| r.rows.iter().map(|row| row.round))
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let x = |round: usize| pad + (w - 2.0 * pad) * round as f64 / max_round;
    let y = |acc: f64| h - pad - (h - 2.0 * pad) * acc.clamp(0.0, 1.0);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-size="10" text-anchor="end">{tick}</text>"#,
            pad - 6.0,
            y(tick) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">round</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">mean accuracy</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, run) in runs.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = run
            .rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", x(r.round), y(r.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            points.join(" "),
            escape(&run.name)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            w - pad - 120.0,
            pad + 14.0 * (i as f64 + 1.0),
            escape(&run.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Load every run, write the SVG to `svg_out` and return the table.
pub fn cmd_compare(dirs: &[PathBuf], svg_out: &Path) -> Result<String> {
    if dirs.len() < 2 {
        return Err(CliError::IncompleteRun {
            path: dirs.first().cloned().unwrap_or_default(),
            message: "compare needs at least two run directories".into(),
        });
    }
    let runs = dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    std::fs::write(svg_out, render_svg(&runs)).map_err(|e| CliError::io("cannot write", svg_out, e))?;
    Ok(render_table(&runs))
}
