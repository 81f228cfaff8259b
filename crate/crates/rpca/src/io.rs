//! File formats: the BMAT binary matrix layout, a plain CSV dialect, and
//! grayscale PGM images with stack/unstack helpers that turn an image
//! sequence into a pixels-by-frames column matrix.
//!
//! BMAT layout: 8-byte magic "RPCAMAT1", rows (u64 LE), cols (u64 LE),
//! then rows x cols IEEE-754 f64 values, little endian, row major.

use crate::numerics::{DenseMatrix, NumericsError};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const BMAT_MAGIC: &[u8; 8] = b"RPCAMAT1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: bad magic, not a BMAT file")]
    BadMagic { path: PathBuf },
    #[error("{path}: declared shape {rows}x{cols} overflows or disagrees with file size")]
    ShapeOverflow { path: PathBuf, rows: u64, cols: u64 },
    #[error("{path}:{line}: {message}")]
    ParseError {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("image {path} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        path: PathBuf,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("{path}: unsupported format: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Bmat,
}

/// Format by extension: ".csv" is CSV, everything else BMAT.
pub fn format_for(path: &Path) -> MatrixFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
        _ => MatrixFormat::Bmat,
    }
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix, IoError> {
    match format_for(path) {
        MatrixFormat::Csv => read_csv(path, false),
        MatrixFormat::Bmat => read_bmat(path),
    }
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<(), IoError> {
    match format_for(path) {
        MatrixFormat::Csv => write_csv(path, m),
        MatrixFormat::Bmat => write_bmat(path, m),
    }
}

pub fn read_bmat(path: &Path) -> Result<DenseMatrix, IoError> {
    let mut file = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != BMAT_MAGIC {
        return Err(IoError::BadMagic { path: path.into() });
    }
    let mut word = [0u8; 8];
    file.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word);
    file.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word);
    let count = rows
        .checked_mul(cols)
        .filter(|&c| c <= (usize::MAX / 8) as u64)
        .ok_or(IoError::ShapeOverflow {
            path: path.into(),
            rows,
            cols,
        })? as usize;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(IoError::ShapeOverflow {
            path: path.into(),
            rows,
            cols,
        });
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DenseMatrix::from_vec_checked(
        rows as usize,
        cols as usize,
        data,
    )?)
}

pub fn write_bmat(path: &Path, m: &DenseMatrix) -> Result<(), IoError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(BMAT_MAGIC)?;
    out.write_all(&(m.rows() as u64).to_le_bytes())?;
    out.write_all(&(m.cols() as u64).to_le_bytes())?;
    for &v in m.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// CSV with '.' decimals, ',' separators and no header by default.
pub fn read_csv(path: &Path, skip_header: bool) -> Result<DenseMatrix, IoError> {
    let file = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if skip_header && idx == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, cell) in line.split(',').enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| IoError::ParseError {
                path: path.into(),
                line: line_no,
                message: format!("cannot parse '{}' in column {}", cell.trim(), col + 1),
            })?;
            row.push(value);
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(IoError::ParseError {
                    path: path.into(),
                    line: line_no,
                    message: format!("ragged row: {} cells, expected {w}", row.len()),
                });
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    let cols = width.unwrap_or(0);
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    let n_rows = if cols == 0 { 0 } else { data.len() / cols };
    Ok(DenseMatrix::from_vec_checked(n_rows, cols, data)?)
}

pub fn write_csv(path: &Path, m: &DenseMatrix) -> Result<(), IoError> {
    let mut out = BufWriter::new(File::create(path)?);
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// A sequence of same-sized grayscale frames as a (width * height) x
/// frames matrix; each column is one frame in row-by-row scan order,
/// values in [0, 1].
#[derive(Clone, Debug)]
pub struct ImageColumnStack {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub matrix: DenseMatrix,
}

struct Pgm {
    width: usize,
    height: usize,
    maxval: u32,
    samples: Vec<u32>,
}

fn pgm_error(path: &Path, detail: impl Into<String>) -> IoError {
    IoError::UnsupportedFormat {
        path: path.into(),
        detail: detail.into(),
    }
}

fn read_pgm(path: &Path) -> Result<Pgm, IoError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 2 {
        return Err(pgm_error(path, "file too short"));
    }
    let ascii = match &bytes[..2] {
        b"P2" => true,
        b"P5" => false,
        _ => return Err(pgm_error(path, "missing P2/P5 signature")),
    };

    // Header token scanner: whitespace-separated integers, '#' comments.
    let mut pos = 2usize;
    let mut next_token = |bytes: &[u8]| -> Option<(usize, u32)> {
        let mut i = pos;
        loop {
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            break;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == start {
            return None;
        }
        let value: u32 = std::str::from_utf8(&bytes[start..i]).ok()?.parse().ok()?;
        pos = i;
        Some((i, value))
    };

    let (_, width) = next_token(&bytes).ok_or_else(|| pgm_error(path, "bad width"))?;
    let (_, height) = next_token(&bytes).ok_or_else(|| pgm_error(path, "bad height"))?;
    let (end, maxval) = next_token(&bytes).ok_or_else(|| pgm_error(path, "bad maxval"))?;
    if maxval == 0 || maxval > 65535 {
        return Err(pgm_error(path, format!("maxval {maxval} out of range")));
    }
    let (width, height) = (width as usize, height as usize);
    let count = width * height;
    let mut samples = Vec::with_capacity(count);

    if ascii {
        let body = std::str::from_utf8(&bytes[end..])
            .map_err(|_| pgm_error(path, "non-UTF8 ASCII body"))?;
        for tok in body.split_ascii_whitespace() {
            let v: u32 = tok
                .parse()
                .map_err(|_| pgm_error(path, format!("bad sample '{tok}'")))?;
            samples.push(v);
        }
    } else {
        // Single whitespace byte separates header from binary body.
        let body = &bytes[end + 1..];
        if maxval < 256 {
            samples.extend(body.iter().map(|&b| b as u32));
        } else {
            // 16-bit samples are big endian per the format.
            samples.extend(
                body.chunks_exact(2)
                    .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]]))),
            );
        }
    }
    if samples.len() < count {
        return Err(pgm_error(
            path,
            format!("expected {count} samples, found {}", samples.len()),
        ));
    }
    samples.truncate(count);
    if let Some(&bad) = samples.iter().find(|&&v| v > maxval) {
        return Err(pgm_error(path, format!("sample {bad} exceeds maxval {maxval}")));
    }
    Ok(Pgm {
        width,
        height,
        maxval,
        samples,
    })
}

/// Stacks same-sized grayscale PGM frames into columns, scaled to [0, 1].
pub fn stack_images(paths: &[PathBuf]) -> Result<ImageColumnStack, IoError> {
    if paths.is_empty() {
        return Err(IoError::UnsupportedFormat {
            path: PathBuf::new(),
            detail: "no input images".into(),
        });
    }
    let first = read_pgm(&paths[0])?;
    let (width, height) = (first.width, first.height);
    let pixels = width * height;
    let mut matrix = DenseMatrix::zeros(pixels, paths.len());
    for (frame, path) in paths.iter().enumerate() {
        let img = if frame == 0 {
            // already read
            Pgm {
                width: first.width,
                height: first.height,
                maxval: first.maxval,
                samples: first.samples.clone(),
            }
        } else {
            read_pgm(path)?
        };
        if img.width != width || img.height != height {
            return Err(IoError::DimensionMismatch {
                path: path.clone(),
                want_w: width,
                want_h: height,
                got_w: img.width,
                got_h: img.height,
            });
        }
        let scale = 1.0 / img.maxval as f64;
        for (p, &s) in img.samples.iter().enumerate() {
            matrix[(p, frame)] = s as f64 * scale;
        }
    }
    Ok(ImageColumnStack {
        width,
        height,
        frames: paths.len(),
        matrix,
    })
}

/// Writes one 8-bit binary PGM per column into `out_dir`, values clamped
/// to [0, 1] and quantized to maxval 255. Returns the written paths.
pub fn unstack_to_images(stack: &ImageColumnStack, out_dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::with_capacity(stack.frames);
    for frame in 0..stack.frames {
        let path = out_dir.join(format!("frame_{frame:04}.pgm"));
        let mut out = BufWriter::new(File::create(&path)?);
        write!(out, "P5\n{} {}\n255\n", stack.width, stack.height)?;
        for p in 0..stack.width * stack.height {
            let v = stack.matrix[(p, frame)].clamp(0.0, 1.0);
            out.write_all(&[(v * 255.0).round() as u8])?;
        }
        out.flush()?;
        written.push(path);
    }
    Ok(written)
}
