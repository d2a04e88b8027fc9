//! Reading CSV inputs, formatting numbers, and writing outputs atomically.

use anyhow::{anyhow, bail, Context, Result};
use robust_scatter::linalg::Matrix;
use robust_scatter::portfolio::ReturnSeries;
use serde_json::{Map, Number, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

/// Seventeen significant digits, enough to round-trip any double.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(Number::from_str(&fmt_num(x)).expect("formatted double is a JSON number"))
    } else {
        Value::Null
    }
}

pub fn nums(xs: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(xs.into_iter().map(num).collect())
}

pub fn matrix_rows(m: &Matrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| nums(m.row(i).iter().copied()))
            .collect(),
    )
}

/// Serialize and rewrite every floating-point number with 17 digits.
pub fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    Ok(fix_precision(serde_json::to_value(v)?))
}

pub fn fix_precision(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n.as_f64().map_or(Value::Null, num),
        Value::Array(a) => Value::Array(a.into_iter().map(fix_precision).collect()),
        Value::Object(o) => {
            Value::Object(o.into_iter().map(|(k, v)| (k, fix_precision(v))).collect())
        }
        other => other,
    }
}

fn parse_cell(text: &str, line: u64, col: usize) -> Result<f64> {
    let t = text.trim();
    let v: f64 = t
        .parse()
        .map_err(|_| anyhow!("line {line}, column {col}: `{t}` is not a number"))?;
    if !v.is_finite() {
        bail!("line {line}, column {col}: `{t}` is not finite");
    }
    Ok(v)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))
}

fn records(path: &Path) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in csv_reader(path)?.records() {
        let rec = rec.map_err(|e| match e.position() {
            Some(pos) => anyhow!("{}: line {}: {e}", path.display(), pos.line()),
            None => anyhow!("{}: {e}", path.display()),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

/// Numeric data, one observation per row. A first row that does not parse
/// as numbers is taken as a header.
pub fn read_data(path: &Path) -> Result<(Option<Vec<String>>, Matrix)> {
    let mut recs = records(path)?;
    if recs.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let header = if recs[0].1.iter().any(|c| c.trim().parse::<f64>().is_err()) {
        let (_, h) = recs.remove(0);
        Some(h.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>())
    } else {
        None
    };
    if recs.is_empty() {
        bail!("{}: no data rows after the header", path.display());
    }
    let p = header.as_ref().map_or(recs[0].1.len(), Vec::len);
    let mut values = Vec::with_capacity(recs.len() * p);
    for (line, rec) in &recs {
        if rec.len() != p {
            bail!(
                "{}: line {line}: expected {p} fields, found {}",
                path.display(),
                rec.len()
            );
        }
        for (j, cell) in rec.iter().enumerate() {
            values.push(
                parse_cell(cell, *line, j + 1).map_err(|e| anyhow!("{}: {e}", path.display()))?,
            );
        }
    }
    Ok((header, Matrix::from_row_slice(recs.len(), p, &values)))
}

/// Returns with a header of asset names; the first column holds dates.
pub fn read_returns(path: &Path) -> Result<ReturnSeries> {
    let recs = records(path)?;
    let Some(((_, head), rows)) = recs.split_first() else {
        bail!("{}: empty file", path.display());
    };
    if head.len() < 2 {
        bail!(
            "{}: line 1: need a date column and at least one asset",
            path.display()
        );
    }
    let assets: Vec<String> = head.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let p = assets.len();
    if rows.is_empty() {
        bail!("{}: no data rows after the header", path.display());
    }
    let mut dates = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * p);
    for (line, rec) in rows {
        if rec.len() != p + 1 {
            bail!(
                "{}: line {line}: expected {} fields, found {}",
                path.display(),
                p + 1,
                rec.len()
            );
        }
        dates.push(rec[0].trim().to_string());
        for j in 0..p {
            values.push(
                parse_cell(&rec[j + 1], *line, j + 2)
                    .map_err(|e| anyhow!("{}: {e}", path.display()))?,
            );
        }
    }
    Ok(ReturnSeries::new(
        dates,
        assets,
        Matrix::from_row_slice(rows.len(), p, &values),
    )?)
}

/// CSV text with a header row and LF line endings.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| anyhow!("{e}"))
}

/// Output directory plus the record of what has been written.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<(PathBuf, u64)>,
    started: Instant,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Write through a temporary file in the same directory, then rename.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&self.dir, &path, bytes)?;
        self.written.push((path.clone(), bytes.len() as u64));
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, v: &Value) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(v)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Manifest listing every output, written last.
    pub fn finish(
        mut self,
        command: &str,
        config: &Map<String, Value>,
        seed: u64,
        threads: usize,
    ) -> Result<()> {
        for (p, _) in &self.written {
            if !p.is_file() {
                bail!("output {} is missing", p.display());
            }
        }
        let outputs: Vec<Value> = self
            .written
            .iter()
            .map(|(p, n)| {
                let name = p.file_name().map_or_else(
                    || p.display().to_string(),
                    |f| f.to_string_lossy().into_owned(),
                );
                serde_json::json!({"path": name, "bytes": n})
            })
            .collect();
        let manifest = serde_json::json!({
            "command": command,
            "config": config,
            "seed": seed,
            "threads": threads,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_clock_seconds": num(self.started.elapsed().as_secs_f64()),
            "outputs": outputs,
        });
        self.written.clear();
        self.write_json("manifest.json", &manifest)?;
        Ok(())
    }
}

fn write_atomic(dir: &Path, path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| anyhow!("cannot write {}: {}", path.display(), e.error))?;
    Ok(())
}
