//! Environment dumps and versioned text tables.
//!
//! Binary environment layout (little endian):
//!
//! | bytes | field |
//! |---|---|
//! | 8 | magic `BLPPENV1` |
//! | 4 | format version (`u32`, currently 1) |
//! | 1 | origin: 0 seeded, 1 injected |
//! | 8 | seed (`u64`, 0 when injected) |
//! | 8 + 8 | `line_min`, `line_max` (`i64`) |
//! | 8 + 8 | `x0`, `delta` (`f64`) |
//! | 8 + 8 | `num_cells`, `anchor_index` (`u64`) |
//! | 8 per value | payload, `f64`, line-major |

use crate::ensembles::LineEnsemble;
use crate::environment::{Environment, GridSpec, Origin};
use crate::error::{LppError, Result};
use crate::scalar::Scalar;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

pub const ENV_MAGIC: &[u8; 8] = b"BLPPENV1";
pub const ENV_VERSION: u32 = 1;
pub const ENSEMBLE_FORMAT: &str = "blpp-ensemble v1";
pub const EVENTS_FORMAT: &str = "blpp-events v1";

pub fn write_environment<T: Scalar, W: Write>(env: &Environment<T>, mut w: W) -> Result<()> {
    let g = env.grid();
    w.write_all(ENV_MAGIC)?;
    w.write_all(&ENV_VERSION.to_le_bytes())?;
    let (tag, seed) = match env.origin() {
        Origin::Seeded(s) => (0u8, s),
        Origin::Injected => (1u8, 0),
    };
    w.write_all(&[tag])?;
    w.write_all(&seed.to_le_bytes())?;
    w.write_all(&env.line_min().to_le_bytes())?;
    w.write_all(&env.line_max().to_le_bytes())?;
    w.write_all(&g.x0.to_le_bytes())?;
    w.write_all(&g.delta.to_le_bytes())?;
    w.write_all(&(g.num_cells as u64).to_le_bytes())?;
    w.write_all(&(g.anchor_index as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(env.values().len() * 8);
    for v in env.values() {
        buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| LppError::Format(format!("truncated header: {e}")))?;
    Ok(b)
}

pub fn read_environment<T: Scalar, R: Read>(mut r: R) -> Result<Environment<T>> {
    let magic: [u8; 8] = take(&mut r)?;
    if &magic != ENV_MAGIC {
        return Err(LppError::Format("not an environment dump".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != ENV_VERSION {
        return Err(LppError::Format(format!("unsupported dump version {version}")));
    }
    let [tag] = take::<1, _>(&mut r)?;
    let seed = u64::from_le_bytes(take(&mut r)?);
    let line_min = i64::from_le_bytes(take(&mut r)?);
    let line_max = i64::from_le_bytes(take(&mut r)?);
    let x0 = f64::from_le_bytes(take(&mut r)?);
    let delta = f64::from_le_bytes(take(&mut r)?);
    let num_cells = u64::from_le_bytes(take(&mut r)?) as usize;
    let anchor = u64::from_le_bytes(take(&mut r)?) as usize;
    let origin = match tag {
        0 => Origin::Seeded(seed),
        1 => Origin::Injected,
        t => return Err(LppError::Format(format!("unknown origin tag {t}"))),
    };
    let grid = GridSpec::new(x0, delta, num_cells, anchor).map_err(|e| LppError::Format(e.to_string()))?;
    if line_min > line_max {
        return Err(LppError::Format("line range is empty".into()));
    }
    let count = ((line_max - line_min + 1) as usize)
        .checked_mul(grid.num_points())
        .filter(|&c| c <= 1 << 31)
        .ok_or_else(|| LppError::Format("payload too large".into()))?;
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes).map_err(|e| LppError::Format(format!("truncated payload: {e}")))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(LppError::Format("trailing bytes after payload".into()));
    }
    let values: Vec<T> = bytes
        .chunks_exact(8)
        .map(|c| T::from_f64_lossy(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(Environment::from_values(line_min, line_max, grid, values)?.with_origin(origin))
}

pub fn save_environment<T: Scalar>(env: &Environment<T>, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_environment(env, std::io::BufWriter::new(f))
}

pub fn load_environment<T: Scalar>(path: &Path) -> Result<Environment<T>> {
    let f = std::fs::File::open(path)?;
    read_environment(std::io::BufReader::new(f))
}

/// Long-format CSV: one row per `(curve, sample)`.
pub fn ensemble_csv<T: Scalar>(l: &LineEnsemble<T>) -> String {
    let mut s = format!("# {ENSEMBLE_FORMAT}\n");
    let _ = writeln!(
        s,
        "# kind={:?} n={} t1={} t2={} root_x={} root_t={}",
        l.kind,
        l.triple.n(),
        l.triple.t1(),
        l.triple.t2(),
        l.root.x,
        l.root.t
    );
    s.push_str("curve,index,z,value\n");
    for (i, curve) in l.values.iter().enumerate() {
        for (j, v) in curve.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", i + 1, j, l.domain[j], v);
        }
    }
    s
}

/// Quotes a CSV field when needed.
pub fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}
