//! File I/O: atomic writes, raw float arrays with header sidecars, and the
//! CSV outputs.
//!
//! A series `name` is stored as `name.f64` (little-endian values in the
//! series' layout), `name.hdr` (one line:
//! `rows=<r> n_time=<t> layout=<layout> kind=<kind>`) and `name.csv`
//! (`row,step,value`).

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use ltibayes_core::archive::{f64s_from_bytes, f64s_to_bytes};
use ltibayes_core::layout::{Series, SeriesKind};
use ltibayes_core::Layout;

use crate::error::{CliError, Result};

/// Writes `bytes` to a temporary file beside `path` and renames it into
/// place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn with_ext(dir: &Path, stem: &str, ext: &str) -> PathBuf {
    dir.join(format!("{stem}.{ext}"))
}

pub fn header_line<K: SeriesKind>(s: &Series<K>) -> String {
    format!("rows={} n_time={} layout={} kind={}\n", s.rows(), s.n_time(), s.layout(), K::NAME)
}

/// Writes `stem.f64`, `stem.hdr` and `stem.csv` into `dir`.
pub fn write_series<K: SeriesKind>(dir: &Path, stem: &str, s: &Series<K>) -> Result<()> {
    atomic_write(&with_ext(dir, stem, "f64"), &f64s_to_bytes(s.values()))?;
    atomic_write(&with_ext(dir, stem, "hdr"), header_line(s).as_bytes())?;
    let mut csv = String::from("row,step,value\n");
    for r in 0..s.rows() {
        for t in 0..s.n_time() {
            writeln!(csv, "{r},{t},{:e}", s.get(r, t)).unwrap();
        }
    }
    atomic_write(&with_ext(dir, stem, "csv"), csv.as_bytes())
}

/// Reads a series from its `.f64` file and the `.hdr` next to it.
pub fn read_series<K: SeriesKind>(path: &Path) -> Result<Series<K>> {
    let hdr_path = path.with_extension("hdr");
    let hdr = std::fs::read_to_string(&hdr_path).map_err(|e| CliError::io(&hdr_path, e))?;
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", hdr_path.display()));
    let (mut rows, mut nt, mut layout, mut kind) = (None, None, None, None);
    for field in hdr.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(|| bad(format!("malformed field '{field}'")))?;
        match k {
            "rows" => rows = v.parse::<usize>().ok(),
            "n_time" => nt = v.parse::<usize>().ok(),
            "layout" => layout = v.parse::<Layout>().ok(),
            "kind" => kind = Some(v.to_string()),
            other => return Err(bad(format!("unknown field '{other}'"))),
        }
    }
    let (rows, nt, layout) = match (rows, nt, layout) {
        (Some(r), Some(t), Some(l)) => (r, t, l),
        _ => return Err(bad("header needs rows, n_time and layout".into())),
    };
    if let Some(kind) = kind {
        if kind != K::NAME {
            return Err(bad(format!("holds a {kind} series, expected {}", K::NAME)));
        }
    }
    let values = f64s_from_bytes(&read_bytes(path)?)?;
    Ok(Series::new(values, rows, nt, layout)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, text.as_bytes())
}

pub fn read_sigma(path: &Path) -> Result<f64> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Config(format!("{}: expected one number, got '{}'", path.display(), text.trim())))
}
