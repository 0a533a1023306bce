//! Run outputs: the per-step ledger as CSV, field snapshots as raw
//! binary, and the summary text.
//!
//! The snapshot format is 16 magic bytes, little-endian 32-bit `dim` and
//! `n`, then the n^dim field values as little-endian 64-bit floats in
//! row-major order. The decoder validates every header field and the
//! exact payload length before allocating, so it is safe on untrusted
//! bytes (it is one of the fuzz targets).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::driver::StepRecord;
use crate::grid::{Field, Grid};
use crate::mc::EnsembleStats;
use crate::multiplicative::PicardTraceEntry;
use crate::viscosity::SweepReport;

/// "SPLAPFLD" followed by seven zero bytes and a format version of 1.
pub const SNAPSHOT_MAGIC: [u8; 16] = *b"SPLAPFLD\0\0\0\0\0\0\0\x01";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("snapshot shorter than the 24-byte header")]
    Truncated,
    #[error("bad magic bytes")]
    BadMagic,
    #[error("dimension {0} outside 1..=3")]
    BadDimension(u32),
    #[error("points per axis {0} outside 2..=1048576")]
    BadAxisCount(u32),
    #[error("payload length {found} does not match n^dim = {expected} values")]
    LengthMismatch { expected: usize, found: usize },
}

/// Encode a field; see the module header for the layout.
pub fn write_snapshot(w: &mut impl Write, field: &Field) -> std::io::Result<()> {
    let g = field.grid();
    w.write_all(&SNAPSHOT_MAGIC)?;
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    w.write_all(&(g.points_per_axis() as u32).to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Decode header and values from untrusted bytes.
pub fn parse_snapshot(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>), SnapshotError> {
    if bytes.len() < 24 {
        return Err(SnapshotError::Truncated);
    }
    if bytes[..16] != SNAPSHOT_MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let n = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
    if !(1..=3).contains(&dim) {
        return Err(SnapshotError::BadDimension(dim));
    }
    if !(2..=1 << 20).contains(&n) {
        return Err(SnapshotError::BadAxisCount(n));
    }
    let expected = (n as usize)
        .checked_pow(dim)
        .ok_or(SnapshotError::BadAxisCount(n))?;
    let payload = &bytes[24..];
    if payload.len() != expected * 8 {
        return Err(SnapshotError::LengthMismatch {
            expected,
            found: payload.len() / 8,
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dim as usize, n as usize, values))
}

/// Decode a snapshot that must live on `grid` (the header carries no box
/// half-width, so the grid comes from the caller).
pub fn read_snapshot(bytes: &[u8], grid: Grid) -> Result<Field, SnapshotError> {
    let (dim, n, values) = parse_snapshot(bytes)?;
    if dim != grid.dim() {
        return Err(SnapshotError::BadDimension(dim as u32));
    }
    if n != grid.points_per_axis() {
        return Err(SnapshotError::BadAxisCount(n as u32));
    }
    Ok(Field::from_values(grid, values))
}

pub fn write_snapshot_file(path: &Path, field: &Field) -> Result<(), OutputError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    write_snapshot(&mut w, field).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_snapshot_file(path: &Path, grid: Grid) -> Result<Field, OutputError> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    read_snapshot(&bytes, grid).map_err(|e| OutputError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}

const LEDGER_HEADER: &[&str] = &[
    "path",
    "step",
    "time",
    "l2_sq",
    "grad_pp",
    "lp_pp",
    "dissipation",
    "inc_sq",
    "noise_sq",
    "step_inner",
    "noise_pair",
    "rhs_l2",
    "solver_iterations",
    "solver_residual",
];

/// One RFC 4180 row per (path, step), `paths * (steps + 1)` rows plus the
/// header.
pub fn write_ledger_csv(path: &Path, ledgers: &[Vec<StepRecord>]) -> Result<(), OutputError> {
    let csv_err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(LEDGER_HEADER).map_err(csv_err)?;
    for (path_idx, ledger) in ledgers.iter().enumerate() {
        for r in ledger {
            w.write_record([
                path_idx.to_string(),
                r.step.to_string(),
                r.time.to_string(),
                r.l2_sq.to_string(),
                r.grad_pp.to_string(),
                r.lp_pp.to_string(),
                r.dissipation.to_string(),
                r.inc_sq.to_string(),
                r.noise_sq.to_string(),
                r.step_inner.to_string(),
                r.noise_pair.to_string(),
                r.rhs_l2.to_string(),
                r.solver_iterations.to_string(),
                r.solver_residual.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Per-time-level ensemble means and standard errors.
pub fn write_stats_csv(path: &Path, stats: &EnsembleStats) -> Result<(), OutputError> {
    let csv_err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "level",
        "time",
        "mean_l2_sq",
        "se_l2_sq",
        "mean_grad_pp",
        "se_grad_pp",
    ])
    .map_err(csv_err)?;
    for k in 0..=stats.steps {
        w.write_record([
            k.to_string(),
            (k as f64 * stats.tau).to_string(),
            stats.mean_l2_sq[k].to_string(),
            stats.se_l2_sq[k].to_string(),
            stats.mean_grad_pp[k].to_string(),
            stats.se_grad_pp[k].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Fixed-point iteration trace: iteration index, weighted distance, wall
/// time.
pub fn write_picard_trace_csv(path: &Path, trace: &[PicardTraceEntry]) -> Result<(), OutputError> {
    let csv_err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["iteration", "weighted_distance", "wall_seconds"])
        .map_err(csv_err)?;
    for entry in trace {
        w.write_record([
            entry.iteration.to_string(),
            entry.weighted_distance.to_string(),
            entry.wall_seconds.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Regularization sweep rows.
pub fn write_sweep_csv(path: &Path, report: &SweepReport) -> Result<(), OutputError> {
    let csv_err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "eps",
        "distance_sq",
        "bound_quantity",
        "second_moment",
        "max_identity_residual",
    ])
    .map_err(csv_err)?;
    for row in &report.rows {
        w.write_record([
            row.eps.to_string(),
            row.distance_sq.to_string(),
            row.bound_quantity.to_string(),
            row.second_moment.to_string(),
            row.max_identity_residual.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_summary(path: &Path, text: &str) -> Result<(), OutputError> {
    std::fs::write(path, text).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::norm_l2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn snapshot_round_trips_bit_exactly() {
        let grid = Grid::new(2, 6, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let field = Field::from_values(
            grid,
            (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &field).unwrap();
        let back = read_snapshot(&bytes, grid).unwrap();
        assert_eq!(back.values(), field.values());
        // identical bits mean the norm agrees to 0 ulps
        assert_eq!(norm_l2(&back).to_bits(), norm_l2(&field).to_bits());

        let zero = Field::zeros(grid);
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &zero).unwrap();
        let back = read_snapshot(&bytes, grid).unwrap();
        assert_eq!(back.values(), zero.values());
    }

    #[test]
    fn snapshot_decoder_rejects_malformed_input() {
        assert_eq!(parse_snapshot(b"short"), Err(SnapshotError::Truncated));

        let mut bad_magic = vec![0u8; 24];
        bad_magic[..16].copy_from_slice(b"NOTAMAGICNUMBER!");
        assert_eq!(parse_snapshot(&bad_magic), Err(SnapshotError::BadMagic));

        let mut bad_dim = Vec::new();
        bad_dim.extend_from_slice(&SNAPSHOT_MAGIC);
        bad_dim.extend_from_slice(&7u32.to_le_bytes());
        bad_dim.extend_from_slice(&4u32.to_le_bytes());
        assert_eq!(
            parse_snapshot(&bad_dim),
            Err(SnapshotError::BadDimension(7))
        );

        let mut short_payload = Vec::new();
        short_payload.extend_from_slice(&SNAPSHOT_MAGIC);
        short_payload.extend_from_slice(&1u32.to_le_bytes());
        short_payload.extend_from_slice(&4u32.to_le_bytes());
        short_payload.extend_from_slice(&[0u8; 8]);
        assert!(matches!(
            parse_snapshot(&short_payload),
            Err(SnapshotError::LengthMismatch { expected: 4, .. })
        ));

        // huge axis count must be rejected before any allocation
        let mut huge = Vec::new();
        huge.extend_from_slice(&SNAPSHOT_MAGIC);
        huge.extend_from_slice(&3u32.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert_eq!(
            parse_snapshot(&huge),
            Err(SnapshotError::BadAxisCount(u32::MAX))
        );
    }

    #[test]
    fn snapshot_grid_mismatch_is_an_error() {
        let grid = Grid::new(1, 8, 1.0);
        let field = Field::zeros(grid);
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &field).unwrap();
        let other = Grid::new(1, 16, 1.0);
        assert!(read_snapshot(&bytes, other).is_err());
    }

    #[test]
    fn ledger_row_count_is_paths_times_levels() {
        use crate::driver::{sample_config_path, solve_additive, SimConfig};
        use crate::plap::PLaplaceParams;
        let grid = Grid::new(1, 8, 1.0);
        let mut cfg = SimConfig::new(grid, PLaplaceParams::new(2.0), 0.2, 3);
        cfg.modes = 2;
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("ledger.csv");
        let mut ledgers = Vec::new();
        for i in 0..4 {
            let path = sample_config_path(&cfg, i);
            ledgers.push(solve_additive(&cfg, &path).unwrap().records().to_vec());
        }
        write_ledger_csv(&csv_path, &ledgers).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let rows = text.lines().count();
        assert_eq!(rows, 1 + 4 * (3 + 1), "header plus paths * (steps + 1)");
    }
}
