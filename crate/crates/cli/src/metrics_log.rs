//! Per-update metrics as CSV with a schema line ahead of the header.

use std::io::Write;
use std::path::Path;

use rpg_core::trainer::StepRecord;

use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "rpg-metrics/1";
pub const COLUMNS: [&str; 7] = ["step", "return", "div", "hessian_trace", "ratio", "gate", "wall_ms"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: f64,
    pub ret: f64,
    pub div: f64,
    pub hessian_trace: f64,
    pub ratio: f64,
    /// 1 when the plain gradient replaced the regularized direction.
    pub gate: f64,
    pub wall_ms: f64,
}

impl From<&StepRecord> for LogRow {
    fn from(r: &StepRecord) -> Self {
        Self {
            step: r.step as f64,
            ret: r.eval_return,
            div: r.div,
            hessian_trace: r.hessian_trace,
            ratio: r.ratio,
            gate: if r.gated { 1.0 } else { 0.0 },
            wall_ms: r.wall_ms,
        }
    }
}

impl LogRow {
    fn fields(&self) -> [f64; 7] {
        [self.step, self.ret, self.div, self.hessian_trace, self.ratio, self.gate, self.wall_ms]
    }
}

/// Streams rows to any writer; floats use the shortest round-trip form.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W) -> CliResult<Self> {
        writeln!(out, "#schema={SCHEMA}").map_err(csv::Error::from)?;
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(COLUMNS)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &LogRow) -> CliResult<()> {
        self.inner.write_record(row.fields().iter().map(|v| v.to_string()))?;
        Ok(())
    }

    pub fn flush(&mut self) -> CliResult<()> {
        self.inner.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn parse_log(text: &str, path: &Path) -> CliResult<Vec<LogRow>> {
    let bad = |line: usize, message: String| CliError::Log { path: path.to_path_buf(), line, message };
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let version = first.trim_end().strip_prefix("#schema=rpg-metrics/").ok_or_else(|| bad(1, "missing #schema line".into()))?;
    if version != "1" {
        return Err(bad(1, format!("unsupported schema version {version}")));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header = reader.headers().map_err(|e| bad(2, e.to_string()))?;
    if header.iter().ne(COLUMNS) {
        return Err(bad(2, format!("expected columns {}", COLUMNS.join(","))));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 3;
        let record = record.map_err(|e| bad(line, e.to_string()))?;
        let mut v = [0.0; 7];
        for (slot, (field, name)) in v.iter_mut().zip(record.iter().zip(COLUMNS)) {
            *slot = field.trim().parse().map_err(|_| bad(line, format!("{name}: {field:?} is not a number")))?;
        }
        rows.push(LogRow { step: v[0], ret: v[1], div: v[2], hessian_trace: v[3], ratio: v[4], gate: v[5], wall_ms: v[6] });
    }
    Ok(rows)
}

pub fn read_log(path: &Path) -> CliResult<Vec<LogRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_log(&text, path)
}

/// Fraction of rows with a finite ratio below one, over rows with a finite ratio.
pub fn ratio_below_one(rows: &[LogRow]) -> f64 {
    let finite: Vec<f64> = rows.iter().map(|r| r.ratio).filter(|r| r.is_finite()).collect();
    if finite.is_empty() {
        return 0.0;
    }
    finite.iter().filter(|&&r| r < 1.0).count() as f64 / finite.len() as f64
}
