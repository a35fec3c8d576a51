//! Helpers for the versioned newline-delimited file formats.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Reads a file, checks its one-line version header, and returns the body as
/// (1-based line number, line) pairs. A missing or mismatched header is a
/// hard error.
pub(crate) fn read_body(path: &Path, header: &str) -> Result<Vec<(usize, String)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    match lines.next() {
        Some((_, Ok(first))) if first == header => {}
        Some((_, Ok(first))) => {
            return Err(Error::parse(
                path,
                1,
                format!("expected header {header:?}, found {first:?}"),
            ));
        }
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => return Err(Error::parse(path, 1, format!("missing header {header:?}"))),
    }
    let mut body = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.is_empty() {
            body.push((i + 1, line));
        }
    }
    Ok(body)
}

/// Writes a header line followed by the given lines.
pub(crate) fn write_body<I, S>(path: &Path, header: &str, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut write = |s: &str| -> Result<()> {
        out.write_all(s.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    };
    write(header)?;
    for line in lines {
        write(line.as_ref())?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
