//! Small file-format helpers shared by the modules: PGM parsing, CSV text
//! and atomic file writes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::FormatError;

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], FormatError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(FormatError::BadHeader(
            "unexpected end of PGM header".into(),
        ));
    }
    Ok(&bytes[start..*pos])
}

fn parse_num(tok: &[u8]) -> Result<usize, FormatError> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            FormatError::BadHeader(format!("bad number {:?}", String::from_utf8_lossy(tok)))
        })
}

/// Parses a binary 8-bit PGM (P5) into `(width, height, samples)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), FormatError> {
    let mut pos = 0;
    if next_token(bytes, &mut pos)? != b"P5" {
        return Err(FormatError::BadHeader("expected P5".into()));
    }
    let w = parse_num(next_token(bytes, &mut pos)?)?;
    let h = parse_num(next_token(bytes, &mut pos)?)?;
    let maxval = parse_num(next_token(bytes, &mut pos)?)?;
    if w == 0 || h == 0 || maxval == 0 || maxval > 255 {
        return Err(FormatError::BadHeader(format!(
            "unsupported PGM {w}x{h} maxval {maxval}"
        )));
    }
    pos += 1; // single whitespace byte before the raster
    let data = bytes.get(pos..).unwrap_or_default();
    if data.len() < w * h {
        return Err(FormatError::Truncated {
            expected: w * h,
            got: data.len(),
        });
    }
    Ok((w, h, data[..w * h].to_vec()))
}

/// Writes via a sibling temp file and rename so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// CSV text from a header and rows of already formatted cells.
pub fn csv_text<R, C>(header: &[&str], rows: R) -> String
where
    R: IntoIterator<Item = C>,
    C: IntoIterator<Item = String>,
{
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}
