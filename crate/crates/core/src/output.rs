//! Sweep artifacts: `records.csv`, per-method heatmap CSVs, `summary.json` and optional SVGs.
//!
//! `records.csv` holds only deterministic columns, so re-running a sweep reproduces it byte for
//! byte. Wall-clock timings go to `summary.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nc1::Log10Summary;
use crate::sweep::{CellSummary, Method, SweepResult};

/// Version of the `summary.json` layout.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Column order of `records.csv`.
pub const RECORD_COLUMNS: [&str; 13] = [
    "method",
    "N",
    "d0",
    "seed_index",
    "seed",
    "partition",
    "status",
    "tr_within",
    "tr_between",
    "nc1",
    "log10_nc1",
    "relative_nc1",
    "message",
];

/// Fixed colour range of the SVG heatmaps, in log10 NC1.
pub const SVG_RANGE: (f64, f64) = (-3.0, 0.0);

#[derive(Debug, Serialize)]
struct Summary<'a> {
    schema_version: u32,
    dataset: &'a str,
    n_grid: &'a [usize],
    d0_grid: &'a [usize],
    seeds: usize,
    master_seed: u64,
    methods: Vec<String>,
    records: usize,
    status_counts: serde_json::Map<String, serde_json::Value>,
    cells: &'a [CellSummary],
    total_record_seconds: f64,
    wall_seconds: f64,
    config: &'a crate::sweep::SweepConfig,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let io = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    Error::io(path, io)
}

pub fn records_csv(result: &SweepResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| csv_error(Path::new("records.csv"), e);
    w.write_record(RECORD_COLUMNS).map_err(fail)?;
    for r in &result.records {
        let partition = r.partition.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
        let rep = r.report.as_ref();
        w.write_record([
            r.method.clone(),
            r.n.to_string(),
            r.d0.to_string(),
            r.seed_index.to_string(),
            r.seed.to_string(),
            partition,
            r.status.name().to_string(),
            opt(rep.map(|x| x.tr_within)),
            opt(rep.map(|x| x.tr_between)),
            opt(rep.map(|x| x.nc1)),
            opt(rep.map(|x| x.log10_nc1)),
            opt(rep.and_then(|x| x.relative_nc1)),
            r.message.clone().unwrap_or_default(),
        ])
        .map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::io("records.csv", std::io::Error::other(e.to_string())))
}

/// Grid of mean log10 NC1 for one method, `N` down the rows and `d0` across the columns.
pub fn heatmap_grid(result: &SweepResult, method: &str) -> Vec<Vec<Option<Log10Summary>>> {
    let cfg = &result.config;
    cfg.n_grid
        .iter()
        .map(|&n| cfg.d0_grid.iter().map(|&d0| result.cell(method, n, d0).and_then(|c| c.log10_nc1)).collect())
        .collect()
}

pub fn heatmap_csv(result: &SweepResult, method: &str) -> String {
    let cfg = &result.config;
    let mut out = String::from("N\\d0");
    for d0 in &cfg.d0_grid {
        out.push_str(&format!(",{d0}"));
    }
    out.push('\n');
    for (n, row) in cfg.n_grid.iter().zip(heatmap_grid(result, method)) {
        out.push_str(&n.to_string());
        for cell in row {
            out.push(',');
            out.push_str(&opt(cell.map(|s| s.mean)));
        }
        out.push('\n');
    }
    out
}

/// Piecewise-linear viridis approximation on `t ∈ [0, 1]`.
fn colormap(t: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

pub fn heatmap_svg(result: &SweepResult, method: &str) -> String {
    let cfg = &result.config;
    let (cw, ch, left, top) = (64.0, 40.0, 70.0, 40.0);
    let width = left + cw * cfg.d0_grid.len() as f64 + 20.0;
    let height = top + ch * cfg.n_grid.len() as f64 + 40.0;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    s.push_str(&format!("<text x=\"{left}\" y=\"20\">{method}: mean log10 NC1</text>\n"));
    let (lo, hi) = SVG_RANGE;
    // largest N on top, as in the paper's heatmaps
    for (row, (n, cells)) in cfg.n_grid.iter().zip(heatmap_grid(result, method)).rev().enumerate() {
        let y = top + ch * row as f64;
        s.push_str(&format!("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{n}</text>\n", left - 6.0, y + ch / 2.0 + 4.0));
        for (col, cell) in cells.iter().enumerate() {
            let x = left + cw * col as f64;
            let (fill, label) = match cell {
                Some(c) => {
                    let (r, g, b) = colormap((c.mean - lo) / (hi - lo));
                    (format!("rgb({r},{g},{b})"), format!("{:.2}", c.mean))
                }
                None => ("#cccccc".to_string(), "n/a".to_string()),
            };
            s.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cw}\" height=\"{ch}\" fill=\"{fill}\" stroke=\"white\"/>\n"
            ));
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"white\">{label}</text>\n",
                x + cw / 2.0,
                y + ch / 2.0 + 4.0
            ));
        }
    }
    let base = top + ch * cfg.n_grid.len() as f64;
    for (col, d0) in cfg.d0_grid.iter().enumerate() {
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{d0}</text>\n",
            left + cw * col as f64 + cw / 2.0,
            base + 16.0
        ));
    }
    s.push_str(&format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">d0</text>\n", left + cw * cfg.d0_grid.len() as f64 / 2.0, base + 34.0));
    s.push_str("</svg>\n");
    s
}

pub fn summary_json(result: &SweepResult) -> Result<String> {
    let cfg = &result.config;
    let status_counts = result
        .status_counts()
        .into_iter()
        .map(|(s, c)| (s.name().to_string(), serde_json::Value::from(c)))
        .collect();
    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        dataset: cfg.dataset.name(),
        n_grid: &cfg.n_grid,
        d0_grid: &cfg.d0_grid,
        seeds: cfg.seeds,
        master_seed: cfg.master_seed,
        methods: cfg.methods.iter().map(Method::label).collect(),
        records: result.records.len(),
        status_counts,
        cells: &result.cells,
        total_record_seconds: result.records.iter().map(|r| r.seconds).sum(),
        wall_seconds: result.seconds,
        config: cfg,
    };
    serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))
}

/// Writes all artifacts into `dir`, creating it if needed, and returns the paths written.
pub fn emit_outputs(result: &SweepResult, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let path = dir.join("records.csv");
    write(&path, &records_csv(result)?)?;
    written.push(path);
    for method in result.config.methods.iter().map(Method::label) {
        let path = dir.join(format!("heatmap_{method}.csv"));
        write(&path, heatmap_csv(result, &method).as_bytes())?;
        written.push(path);
        if svg {
            let path = dir.join(format!("heatmap_{method}.svg"));
            write(&path, heatmap_svg(result, &method).as_bytes())?;
            written.push(path);
        }
    }
    let path = dir.join("summary.json");
    write(&path, summary_json(result)?.as_bytes())?;
    written.push(path);
    Ok(written)
}
