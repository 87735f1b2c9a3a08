//! Versioned CSV emission and parsing.
//!
//! Every data file starts with a schema line `#episcale-csv v1 <name>`
//! followed by the column header; readers reject unknown versions or
//! mismatched schema names. Floats are written with Rust's shortest
//! round-trip formatting, so identical runs produce byte-identical files.

use crate::HarnessError;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const CSV_VERSION: &str = "v1";

pub struct CsvFile {
    out: BufWriter<File>,
    columns: usize,
}

impl CsvFile {
    pub fn create(path: &Path, schema: &str, columns: &[&str]) -> Result<CsvFile, HarnessError> {
        let file = File::create(path)?;
        let mut out = BufWriter::new(file);
        writeln!(out, "#episcale-csv {CSV_VERSION} {schema}")?;
        writeln!(out, "{}", columns.join(","))?;
        Ok(CsvFile {
            out,
            columns: columns.len(),
        })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<(), HarnessError> {
        debug_assert_eq!(fields.len(), self.columns);
        writeln!(self.out, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), HarnessError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Format helper: shortest round-trip for floats.
pub fn f(v: f64) -> String {
    format!("{v}")
}

/// Read a versioned CSV, checking the version and schema name; returns
/// (columns, rows of fields).
pub fn read_versioned(
    path: &Path,
    expect_schema: &str,
) -> Result<(Vec<String>, Vec<Vec<String>>), HarnessError> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let version_line = lines
        .next()
        .ok_or_else(|| HarnessError::Config(format!("{}: empty file", path.display())))??;
    let parts: Vec<&str> = version_line.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "#episcale-csv" {
        return Err(HarnessError::Config(format!(
            "{}: missing schema line",
            path.display()
        )));
    }
    if parts[1] != CSV_VERSION {
        return Err(HarnessError::Config(format!(
            "{}: unsupported schema version {}",
            path.display(),
            parts[1]
        )));
    }
    if parts[2] != expect_schema {
        return Err(HarnessError::Config(format!(
            "{}: schema {} where {} was expected",
            path.display(),
            parts[2],
            expect_schema
        )));
    }
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Config(format!("{}: missing header", path.display())))??;
    let columns: Vec<String> = header.split(',').map(str::to_owned).collect();
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        rows.push(line.split(',').map(str::to_owned).collect());
    }
    Ok((columns, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_version_check() {
        let dir = std::env::temp_dir().join(format!("episcale-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        let mut w = CsvFile::create(&path, "test", &["a", "b"]).unwrap();
        w.row(&[f(1.5), f(2.0)]).unwrap();
        w.finish().unwrap();
        let (cols, rows) = read_versioned(&path, "test").unwrap();
        assert_eq!(cols, vec!["a", "b"]);
        assert_eq!(rows, vec![vec!["1.5".to_string(), "2".to_string()]]);
        assert!(read_versioned(&path, "other").is_err());

        // Unknown version is rejected.
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("v1", "v9")).unwrap();
        assert!(read_versioned(&path, "test").is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
