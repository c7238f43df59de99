//! Single-file archives: a magic header line, a JSON manifest line, then one
//! JSON record per line. Files are written atomically (temp file + rename).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a {kind} archive")]
    NotAnArchive { path: String, kind: &'static str },
    #[error("{path}: unsupported {kind} archive version {found} (expected {expected})")]
    IncompatibleVersion { path: String, kind: &'static str, found: String, expected: u32 },
    #[error("{path}:{line}: malformed archive entry: {source}")]
    Malformed {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: manifest declares {declared} records but {found} were read")]
    CountMismatch { path: String, declared: usize, found: usize },
}

/// Identifies one archive family and its current format version.
#[derive(Debug, Clone, Copy)]
pub struct ArchiveKind {
    pub magic: &'static str,
    pub version: u32,
}

impl ArchiveKind {
    fn header(&self) -> String {
        format!("{}/{}", self.magic, self.version)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io { path: path.display().to_string(), source }
}

/// Writes `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write<'a, M, R, I>(path: &Path, kind: ArchiveKind, manifest: &M, records: I) -> Result<(), ArchiveError>
where
    M: Serialize,
    R: Serialize + 'a,
    I: IntoIterator<Item = &'a R>,
{
    let mut buf = BufWriter::new(Vec::new());
    let to_io = |e: serde_json::Error| std::io::Error::other(e);
    (|| -> std::io::Result<()> {
        writeln!(buf, "{}", kind.header())?;
        serde_json::to_writer(&mut buf, manifest).map_err(to_io)?;
        buf.write_all(b"\n")?;
        for record in records {
            serde_json::to_writer(&mut buf, record).map_err(to_io)?;
            buf.write_all(b"\n")?;
        }
        Ok(())
    })()
    .map_err(io_err(path))?;
    let bytes = buf.into_inner().map_err(|e| io_err(path)(e.into_error()))?;
    write_atomic(path, &bytes).map_err(io_err(path))
}

/// Reads an archive, rejecting files whose header names another kind or
/// another format version.
pub fn read<M, R>(path: &Path, kind: ArchiveKind, count: impl Fn(&M) -> usize) -> Result<(M, Vec<R>), ArchiveError>
where
    M: DeserializeOwned,
    R: DeserializeOwned,
{
    let shown = path.display().to_string();
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(line) => line.map_err(io_err(path))?,
        None => return Err(ArchiveError::NotAnArchive { path: shown, kind: kind.magic }),
    };
    match header.split_once('/') {
        Some((magic, version)) if magic == kind.magic => {
            if version != kind.version.to_string() {
                return Err(ArchiveError::IncompatibleVersion {
                    path: shown,
                    kind: kind.magic,
                    found: version.to_string(),
                    expected: kind.version,
                });
            }
        }
        _ => return Err(ArchiveError::NotAnArchive { path: shown, kind: kind.magic }),
    }
    let manifest_line = match lines.next() {
        Some(line) => line.map_err(io_err(path))?,
        None => return Err(ArchiveError::NotAnArchive { path: shown, kind: kind.magic }),
    };
    let manifest: M = serde_json::from_str(&manifest_line).map_err(|source| ArchiveError::Malformed {
        path: shown.clone(),
        line: 2,
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| ArchiveError::Malformed {
            path: shown.clone(),
            line: i + 3,
            source,
        })?;
        records.push(record);
    }
    let declared = count(&manifest);
    if declared != records.len() {
        return Err(ArchiveError::CountMismatch { path: shown, declared, found: records.len() });
    }
    Ok((manifest, records))
}
