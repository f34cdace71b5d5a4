//! Result tables: a metadata line, a header row, then data rows.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const META_PREFIX: &str = "# semiperc";

/// Provenance written as the first line of every table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Meta {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn line(&self) -> String {
        format!(
            "{META_PREFIX} version={VERSION} command={} config_hash={} seed={}",
            self.command, self.config_hash, self.seed
        )
    }

    /// Inverse of [`Meta::line`].
    pub fn parse(line: &str) -> Option<Self> {
        let rest = line.strip_prefix(META_PREFIX)?;
        let mut command = None;
        let mut hash = None;
        let mut seed = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=')? {
                ("command", v) => command = Some(v.to_string()),
                ("config_hash", v) => hash = Some(v.to_string()),
                ("seed", v) => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some(Self { command: command?, config_hash: hash?, seed: seed? })
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub struct Table {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl Table {
    pub fn create(path: &Path, meta: &Meta, header: &[&str]) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut buf = BufWriter::new(file);
        writeln!(buf, "{}", meta.line()).map_err(|e| HarnessError::io(path, e))?;
        let mut writer = csv::Writer::from_writer(buf);
        writer.write_record(header).map_err(|e| csv_err(path, e))?;
        Ok(Self { path: path.to_path_buf(), writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| csv_err(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| HarnessError::io(&self.path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::io(path, std::io::Error::other(e))
}

/// A table read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub meta: Meta,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Loaded {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric value of `name` in `row`; `None` for an empty field.
    pub fn get(&self, row: &[String], name: &str) -> Option<f64> {
        let i = self.column(name)?;
        row.get(i).filter(|s| !s.is_empty()).and_then(|s| s.parse().ok())
    }
}

pub fn load(path: &Path) -> Result<Loaded> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| HarnessError::io(path, e))?;
    let meta = Meta::parse(first.trim_end()).ok_or_else(|| HarnessError::Format {
        path: path.to_path_buf(),
        reason: "missing metadata line".into(),
    })?;
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec.map_err(|e| csv_err(path, e))?.iter().map(String::from).collect());
    }
    Ok(Loaded { meta, header, rows })
}
