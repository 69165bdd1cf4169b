//! On-disk formats: the instance container, trace CSV, and the snapshot
//! sidecar used by identification analysis. All binary payloads are
//! little-endian; all CSV floats carry 17 significant digits so they
//! round-trip `f64` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::engine::{IterateSnapshot, SolverTrace, TraceRow};
use crate::linalg::DenseMatrix;
use crate::model::{L1LsInstance, ModelError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

const INSTANCE_MAGIC: &[u8; 8] = b"L1LSINST";
const INSTANCE_VERSION: u32 = 1;
const SNAPSHOT_MAGIC: &[u8; 8] = b"IFBSSNAP";
const SNAPSHOT_VERSION: u32 = 1;

/// 17-significant-digit float rendering (exact round trip for `f64`).
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<(), IoError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<(), IoError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<(), IoError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N], IoError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32, IoError> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64, IoError> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_f64(r: &mut impl Read) -> Result<f64, IoError> {
    Ok(f64::from_le_bytes(read_exact::<8>(r)?))
}

/// Writes the instance container: magic, version, `m`, `n`, `rho`, then `A`
/// row-major and `b`, all as little-endian `f64`.
pub fn write_instance(path: &Path, inst: &L1LsInstance<f64>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(INSTANCE_MAGIC)?;
    write_u32(&mut w, INSTANCE_VERSION)?;
    write_u64(&mut w, inst.rows() as u64)?;
    write_u64(&mut w, inst.matrix().cols() as u64)?;
    write_f64(&mut w, inst.rho())?;
    for &v in inst.matrix().entries() {
        write_f64(&mut w, v)?;
    }
    for &v in inst.offset() {
        write_f64(&mut w, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an instance container. The Lipschitz constant is recomputed on
/// load (the estimate is deterministic).
pub fn read_instance(path: &Path) -> Result<L1LsInstance<f64>, IoError> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact::<8>(&mut r)?;
    if &magic != INSTANCE_MAGIC {
        return Err(IoError::Format(format!(
            "{} is not an instance container (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != INSTANCE_VERSION {
        return Err(IoError::Format(format!(
            "unsupported instance container version {version}"
        )));
    }
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let rho = read_f64(&mut r)?;
    if rows == 0 || cols == 0 || rows.checked_mul(cols).is_none() {
        return Err(IoError::Format("invalid dimensions in container".into()));
    }
    let mut entries = vec![0.0; rows * cols];
    for e in &mut entries {
        *e = read_f64(&mut r)?;
    }
    let mut offset = vec![0.0; rows];
    for b in &mut offset {
        *b = read_f64(&mut r)?;
    }
    let matrix = DenseMatrix::new(rows, cols, entries)?;
    Ok(L1LsInstance::new(matrix, offset, rho)?)
}

fn parse_csv_numbers(path: &Path) -> Result<Vec<Vec<f64>>, IoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> = trimmed.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match row {
            Ok(r) => rows.push(r),
            Err(e) => {
                return Err(IoError::Format(format!(
                    "{}:{}: {e}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(rows)
}

/// Builds an instance from `A.csv` (one matrix row per line) and `b.csv`
/// (one value per line, or a single comma-separated line).
pub fn import_csv_instance(
    a_path: &Path,
    b_path: &Path,
    rho: f64,
) -> Result<L1LsInstance<f64>, IoError> {
    let a_rows = parse_csv_numbers(a_path)?;
    if a_rows.is_empty() {
        return Err(IoError::Format(format!("{}: empty matrix", a_path.display())));
    }
    let cols = a_rows[0].len();
    if a_rows.iter().any(|r| r.len() != cols) {
        return Err(IoError::Format(format!(
            "{}: ragged rows (expected {cols} columns everywhere)",
            a_path.display()
        )));
    }
    let rows = a_rows.len();
    let entries: Vec<f64> = a_rows.into_iter().flatten().collect();
    let b_values: Vec<f64> = parse_csv_numbers(b_path)?.into_iter().flatten().collect();
    if b_values.len() != rows {
        return Err(IoError::Format(format!(
            "{}: expected {rows} values, got {}",
            b_path.display(),
            b_values.len()
        )));
    }
    let matrix = DenseMatrix::new(rows, cols, entries)?;
    Ok(L1LsInstance::new(matrix, b_values, rho)?)
}

pub const TRACE_CSV_HEADER: &str = "k,obj,gap,step_norm,alpha,lambda,energy,restart,switch";

/// Writes the per-iteration trace. Booleans are rendered as `0`/`1`.
pub fn write_trace_csv(path: &Path, trace: &SolverTrace<f64>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for row in &trace.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            row.k,
            format_float(row.objective),
            format_float(row.gap),
            format_float(row.step_norm),
            format_float(row.alpha),
            format_float(row.lambda),
            format_float(row.energy),
            u8::from(row.restarted),
            u8::from(row.switched),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow<f64>>, IoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == TRACE_CSV_HEADER => {}
        _ => {
            return Err(IoError::Format(format!(
                "{}: missing or unexpected header",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(IoError::Format(format!(
                "{}:{}: expected 9 fields, got {}",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64, IoError> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| IoError::Format(format!("{}: bad {what}: {e}", path.display())))
        };
        rows.push(TraceRow {
            k: fields[0]
                .trim()
                .parse::<u64>()
                .map_err(|e| IoError::Format(format!("{}: bad k: {e}", path.display())))?,
            objective: parse_f(fields[1], "obj")?,
            gap: parse_f(fields[2], "gap")?,
            step_norm: parse_f(fields[3], "step_norm")?,
            alpha: parse_f(fields[4], "alpha")?,
            lambda: parse_f(fields[5], "lambda")?,
            energy: parse_f(fields[6], "energy")?,
            restarted: fields[7].trim() == "1",
            switched: fields[8].trim() == "1",
        });
    }
    Ok(rows)
}

/// Writes the snapshot sidecar: header (magic, version, `n`, stride, count)
/// followed by `count` records of `k`, `x`, `y`, `z`.
pub fn write_snapshots(
    path: &Path,
    snapshots: &[IterateSnapshot<f64>],
    stride: u64,
    dim: usize,
) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SNAPSHOT_MAGIC)?;
    write_u32(&mut w, SNAPSHOT_VERSION)?;
    write_u64(&mut w, dim as u64)?;
    write_u64(&mut w, stride)?;
    write_u64(&mut w, snapshots.len() as u64)?;
    for s in snapshots {
        write_u64(&mut w, s.k)?;
        for vec in [&s.x, &s.y, &s.z] {
            if vec.len() != dim {
                return Err(IoError::Format("snapshot dimension mismatch".into()));
            }
            for &v in vec.iter() {
                write_f64(&mut w, v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot sidecar, returning `(snapshots, stride)`.
pub fn read_snapshots(path: &Path) -> Result<(Vec<IterateSnapshot<f64>>, u64), IoError> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact::<8>(&mut r)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(IoError::Format(format!(
            "{} is not a snapshot sidecar (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != SNAPSHOT_VERSION {
        return Err(IoError::Format(format!(
            "unsupported snapshot sidecar version {version}"
        )));
    }
    let dim = read_u64(&mut r)? as usize;
    let stride = read_u64(&mut r)?;
    let count = read_u64(&mut r)? as usize;
    let mut snapshots = Vec::with_capacity(count);
    for _ in 0..count {
        let k = read_u64(&mut r)?;
        let mut read_vec = |n: usize| -> Result<Vec<f64>, IoError> {
            let mut v = vec![0.0; n];
            for e in &mut v {
                *e = read_f64(&mut r)?;
            }
            Ok(v)
        };
        let x = read_vec(dim)?;
        let y = read_vec(dim)?;
        let z = read_vec(dim)?;
        snapshots.push(IterateSnapshot { k, x, y, z });
    }
    Ok((snapshots, stride))
}
