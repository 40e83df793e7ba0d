//! Waypoint files and CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Parses one waypoint per line as three numbers separated by commas or
/// whitespace. Blank lines and `#` comments are ignored.
pub fn parse_waypoints(text: &str, origin: &str) -> Result<Vec<Vector3<f64>>, IoError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| IoError::Parse { path: origin.to_string(), line: i + 1, msg };
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 coordinates, found {}", fields.len())));
        }
        let mut p = [0.0; 3];
        for (k, f) in fields.iter().enumerate() {
            p[k] = f.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| err(format!("invalid number '{f}'")))?;
        }
        out.push(Vector3::from(p));
    }
    Ok(out)
}

pub fn read_waypoints(path: &Path) -> Result<Vec<Vector3<f64>>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::File { path: path.display().to_string(), source })?;
    parse_waypoints(&text, &path.display().to_string())
}

/// Writes a header and rows to `path`, replacing any existing file.
pub fn write_csv<I, R, S>(path: &Path, header: &[&str], rows: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut w = CsvSink::create(path, header)?;
    for r in rows {
        w.row(r)?;
    }
    w.flush()
}

/// Incremental CSV writer, used for logs that grow during a run.
pub struct CsvSink {
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, IoError> {
        let f = File::create(path).map_err(|source| IoError::File { path: path.display().to_string(), source })?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(f));
        inner.write_record(header)?;
        Ok(Self { inner })
    }

    /// Opens for appending without writing a header.
    pub fn append(path: &Path) -> Result<Self, IoError> {
        let f = std::fs::OpenOptions::new().append(true).open(path).map_err(|source| IoError::File { path: path.display().to_string(), source })?;
        Ok(Self { inner: csv::Writer::from_writer(BufWriter::new(f)) })
    }

    pub fn row<R, S>(&mut self, fields: R) -> Result<(), IoError>
    where
        R: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.inner.write_record(fields.into_iter().map(|s| s.as_ref().to_string()))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), IoError> {
        self.inner.flush().map_err(|e| IoError::Csv(e.into()))?;
        Ok(())
    }
}

impl Drop for CsvSink {
    fn drop(&mut self) {
        let _ = self.inner.flush();
    }
}

/// Writes text through a buffered file.
pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let f = File::create(path).map_err(|source| IoError::File { path: path.display().to_string(), source })?;
    let mut w = BufWriter::new(f);
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|source| IoError::File { path: path.display().to_string(), source })
}
