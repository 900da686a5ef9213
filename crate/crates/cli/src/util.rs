use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use photostat::units::Kelvin;
use photostat::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::OUT_DIR_ENV;

/// Resolves a relative output path against `$PHOTOSTAT_OUT_DIR` and creates
/// its parent directory.
pub fn resolve_out(path: &Path) -> Result<PathBuf> {
    let path = match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() && !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(path)
}

/// `dir/name.ext` → `dir/name.<suffix>`.
pub fn beside(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Opens an input file, naming it in the error.
pub fn open_input(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Fails early, naming the file, when an input cannot be opened.
pub fn require_input(path: &Path) -> Result<&Path> {
    open_input(path).map(|_| path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(open_input(path)?))?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Numeric columns of a CSV with a header row. Every row needs at least
/// `required` fields; at most `max` are read and empty trailing fields are
/// `None`.
pub fn read_columns(path: &Path, required: usize, max: usize) -> Result<Vec<Vec<Option<f64>>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(open_input(path)?));
    let mut rows = Vec::new();
    for (index, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(max);
        for k in 0..max {
            let field = rec.get(k).unwrap_or("");
            if field.is_empty() {
                if k < required {
                    return Err(Error::MalformedRecord {
                        index,
                        reason: format!("column {} is missing", k + 1),
                    });
                }
                row.push(None);
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::MalformedRecord {
                index,
                reason: format!("column {}: {field:?} is not a number", k + 1),
            })?;
            row.push(Some(v));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Splits `START:STOP:STEP`.
fn split_range(s: &str) -> Result<[&str; 3]> {
    let parts: Vec<&str> = s.split(':').collect();
    <[&str; 3]>::try_from(parts)
        .map_err(|_| Error::InvalidConfig(format!("range {s:?} is not START:STOP:STEP")))
}

fn positive_step(s: &str, whole: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .trim_end_matches(['C', 'c', 'K', 'k'])
        .trim_end_matches('°')
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad step in range {whole:?}")))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "range {whole:?} needs a positive step"
        )));
    }
    Ok(v)
}

/// Grid `start, start + step, …` up to `stop`; `inclusive` keeps a final
/// point that lands on `stop` within roundoff.
fn grid(start: f64, stop: f64, step: f64, inclusive: bool) -> Vec<f64> {
    let span = (stop - start) / step;
    let n = if inclusive {
        (span + 1e-9).floor() as i64 + 1
    } else {
        (span - 1e-9).ceil() as i64
    };
    (0..n.max(0)).map(|k| start + k as f64 * step).collect()
}

/// Temperatures from `130C:260C:1C`, in kelvin, both ends included. Steps
/// are temperature differences, so `1C` and `1K` agree.
pub fn temperature_range(s: &str) -> Result<Vec<f64>> {
    let [a, b, step] = split_range(s)?;
    let start: Kelvin = a.parse()?;
    let stop: Kelvin = b.parse()?;
    let step = positive_step(step, s)?;
    Ok(grid(start.0, stop.0, step, true))
}

/// Angles from `0:180:15`, degrees, stop excluded.
pub fn angle_range(s: &str) -> Result<Vec<f64>> {
    let [a, b, step] = split_range(s)?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidConfig(format!("bad angle {v:?} in range {s:?}")))
    };
    Ok(grid(parse(a)?, parse(b)?, positive_step(step, s)?, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        let t = temperature_range("130C:260C:1C").unwrap();
        assert_eq!(t.len(), 131);
        assert!((t[0] - 403.15).abs() < 1e-9 && (t[130] - 533.15).abs() < 1e-9);
        let a = angle_range("0:180:15").unwrap();
        assert_eq!(a.len(), 12);
        assert_eq!(a[11], 165.0);
        assert!(angle_range("0:180").is_err());
        assert!(angle_range("0:180:0").is_err());
        assert!(temperature_range("300:200:1").unwrap().is_empty());
    }

    #[test]
    fn beside_replaces_extension() {
        assert_eq!(
            beside(Path::new("out/hist.csv"), "manifest.json"),
            Path::new("out/hist.manifest.json")
        );
    }
}
