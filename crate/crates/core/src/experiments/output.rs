//! Report, trace, table and heat-map files.
//!
//! `report.json` holds only seed-determined content. Wall-clock times go to
//! `timing.json` so that repeated runs give byte-identical reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engines::{IterationTrace, Termination};
use crate::error::{Error, Result};

use super::montecarlo::MonteCarloReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Per-run summary written into `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub iterations: usize,
    pub termination: Termination,
    pub final_proximity: f64,
    pub final_targets: Vec<f64>,
    pub accepted_step_sum: f64,
    pub emitted_step_sum: f64,
    pub restarts: usize,
    pub guard_exhaustions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_iterate: Option<Vec<f64>>,
}

impl RunSummary {
    /// `with_iterate` copies the final point into the summary.
    pub fn new(algorithm: &str, trace: &IterationTrace, with_iterate: bool) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            iterations: trace.iterations,
            termination: trace.termination,
            final_proximity: trace.final_proximity(),
            final_targets: trace.final_targets().to_vec(),
            accepted_step_sum: trace.accepted_step_sum,
            emitted_step_sum: trace.emitted_step_sum,
            restarts: trace.restarts,
            guard_exhaustions: trace.guard_exhaustions,
            final_iterate: with_iterate.then(|| trace.final_iterate.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct TimingEntry<'a> {
    name: &'a str,
    seconds: f64,
}

/// An output directory; files are created on demand.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    format: OutputFormat,
    written: Vec<PathBuf>,
}

fn num(v: f64) -> String {
    format!("{v}")
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>, format: OutputFormat) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            format,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn format(&self) -> OutputFormat {
        self.format
    }

    /// Files written so far, in order.
    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.root.join(name);
        self.written.push(p.clone());
        p
    }

    fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    fn csv_writer(&mut self, name: &str) -> Result<csv::Writer<fs::File>> {
        let path = self.path(name);
        csv::WriterBuilder::new()
            .flexible(false)
            .from_path(path)
            .map_err(csv_error)
    }

    pub fn report<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<()> {
        self.write_json("report.json", value)
    }

    pub fn timing(&mut self, entries: &[(String, f64)]) -> Result<()> {
        let rows: Vec<TimingEntry> = entries
            .iter()
            .map(|(name, seconds)| TimingEntry {
                name,
                seconds: *seconds,
            })
            .collect();
        self.write_json("timing.json", &rows)
    }

    /// `trace_<algo>.csv` or `trace_<algo>.json`. Iterate columns appear only
    /// when the trace was recorded in full.
    pub fn trace(&mut self, algo: &str, trace: &IterationTrace) -> Result<()> {
        if self.format == OutputFormat::Json {
            return self.write_json(&format!("trace_{algo}.json"), trace);
        }
        let mut w = self.csv_writer(&format!("trace_{algo}.csv"))?;
        let targets = trace.records.first().map_or(0, |r| r.targets.len());
        let dim = trace.initial.len();
        let full = trace.records.first().is_some_and(|r| r.iterate.is_some());
        let mut header = vec!["k".to_string(), "proximity".into()];
        header.extend((0..targets).map(|b| format!("target_{b}")));
        header.extend(["step".into(), "candidates".into(), "restart".into()]);
        if full {
            header.extend((0..dim).map(|i| format!("z_{i}")));
            header.extend((0..dim).map(|i| format!("perturbed_{i}")));
        }
        w.write_record(&header).map_err(csv_error)?;
        for r in &trace.records {
            let mut row = vec![r.k.to_string(), num(r.proximity)];
            row.extend(r.targets.iter().map(|&v| num(v)));
            row.extend([num(r.step), r.candidates.to_string(), u8::from(r.restart).to_string()]);
            if full {
                for part in [&r.iterate, &r.perturbed] {
                    row.extend(part.iter().flatten().map(|&v| num(v)));
                }
            }
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `table1.csv`: one row per kernel, win percentages per method pair.
    pub fn table1(&mut self, report: &MonteCarloReport) -> Result<()> {
        if self.format == OutputFormat::Json {
            return self.write_json("table1.json", &report.rows);
        }
        let mut w = self.csv_writer("table1.csv")?;
        w.write_record([
            "alpha",
            "ap_vs_sup_ap",
            "ap_vs_sup_sup",
            "ap_vs_sup_res_ap",
            "ap_vs_sup_res_sup_res",
            "sup_vs_sup_res_sup",
            "sup_vs_sup_res_sup_res",
        ])
        .map_err(csv_error)?;
        for row in &report.rows {
            let cells = [
                row.alpha,
                row.ap_vs_sup.first_wins,
                row.ap_vs_sup.second_wins,
                row.ap_vs_sup_res.first_wins,
                row.ap_vs_sup_res.second_wins,
                row.sup_vs_sup_res.first_wins,
                row.sup_vs_sup_res.second_wins,
            ];
            w.write_record(cells.iter().map(|&v| num(v))).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `heatmap_<algo>.csv`, one grid row per line.
    pub fn heatmap(&mut self, algo: &str, grid: &[Vec<f64>]) -> Result<()> {
        let mut w = self.csv_writer(&format!("heatmap_{algo}.csv"))?;
        for row in grid {
            w.write_record(row.iter().map(|&v| num(v))).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `heatmap_<algo>.pgm`: plain greymap scaled to `0..=255` over `[0, max]`.
    pub fn pgm(&mut self, algo: &str, grid: &[Vec<f64>], max: f64) -> Result<()> {
        let path = self.path(&format!("heatmap_{algo}.pgm"));
        let cols = grid.first().map_or(0, Vec::len);
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(f, "P2\n{cols} {}\n255", grid.len())?;
        for row in grid {
            let line: Vec<String> = row
                .iter()
                .map(|&v| {
                    let s = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
                    ((s * 255.0).round() as u8).to_string()
                })
                .collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        f.flush()?;
        Ok(())
    }

    /// Raw little-endian `f64` values, row-major.
    pub fn matrix_bin(&mut self, name: &str, values: impl Iterator<Item = f64>) -> Result<()> {
        let path = self.path(name);
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        for v in values {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write_json(name, value)
    }
}

/// Reads `rows * cols` little-endian `f64` values.
pub fn read_matrix_bin(path: &Path, rows: usize, cols: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Config(format!(
            "{} holds {} bytes, expected {rows} x {cols} doubles",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of eight bytes")))
        .collect())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv output failed: {other:?}")),
    }
}
