//! JSONL and JSON files with atomic writes and `.meta.json` sidecars.
//!
//! Every artifact a stage writes gets a sidecar recording the stage name and
//! the config hash it was produced under. Readers compare that hash with the
//! one the current config expects and refuse stale inputs unless forced.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub stage: String,
    pub config_hash: String,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut BufWriter<&mut File>) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, |w| {
        for row in rows {
            serde_json::to_writer(&mut *w, row)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

/// Reads one JSON value per non-blank line. Errors carry the line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_meta(path: &Path, stage: &str, config_hash: &str) -> Result<()> {
    write_json(
        &meta_path(path),
        &Meta {
            stage: stage.to_owned(),
            config_hash: config_hash.to_owned(),
        },
    )
}

pub fn read_meta(path: &Path) -> Result<Option<Meta>> {
    let meta = meta_path(path);
    if !meta.exists() {
        return Ok(None);
    }
    read_json(&meta).map(Some)
}

/// Compares an input's sidecar hash with `expected`. A missing sidecar only
/// warns; a mismatch is an error unless `force` is set.
pub fn check_input(path: &Path, expected: &str, force: bool) -> Result<()> {
    match read_meta(path)? {
        None => {
            log::warn!("{}: no metadata sidecar, cannot check provenance", path.display());
            Ok(())
        }
        Some(meta) if meta.config_hash == expected => Ok(()),
        Some(meta) if force => {
            log::warn!(
                "{}: config hash {} differs from expected {}, continuing (forced)",
                path.display(),
                meta.config_hash,
                expected
            );
            Ok(())
        }
        Some(meta) => Err(Error::StaleInput {
            path: path.to_owned(),
            found: meta.config_hash,
            expected: expected.to_owned(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        a: u32,
    }

    #[test]
    fn jsonl_roundtrip_and_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rows.jsonl");
        write_jsonl(&p, &[Row { a: 1 }, Row { a: 2 }]).unwrap();
        assert_eq!(read_jsonl::<Row>(&p).unwrap(), vec![Row { a: 1 }, Row { a: 2 }]);

        std::fs::write(&p, "{\"a\":1}\n\n{\"a\":\"x\"}\n").unwrap();
        match read_jsonl::<Row>(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn stale_inputs_need_force() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        write_jsonl::<Row>(&p, &[]).unwrap();
        check_input(&p, "abc", false).unwrap();
        write_meta(&p, "sample", "abc").unwrap();
        assert_eq!(meta_path(&p), dir.path().join("x.jsonl.meta.json"));
        check_input(&p, "abc", false).unwrap();
        assert!(matches!(check_input(&p, "def", false), Err(Error::StaleInput { .. })));
        check_input(&p, "def", true).unwrap();
    }
}
