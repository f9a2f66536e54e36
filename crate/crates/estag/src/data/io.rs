//! Binary dataset files and plain-text trajectory ingestion.
//!
//! Layout (all little-endian, row-major):
//!
//! ```text
//! magic   4 bytes  "ESTG"
//! version u32      1
//! N       u32      visible node count
//! C       u32      channels per node
//! F       u32      frame count
//! c       u32      feature width
//! feats   N*c f64
//! pos     F*N*C*3 f64
//! ```
//!
//! Only visible nodes are written; hidden simulator state never reaches
//! disk. `read(write(x))` is bitwise exact on the stored fields.

use std::fs;
use std::path::Path;

use super::Trajectory;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 4] = b"ESTG";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset(traj: &Trajectory, path: &Path) -> Result<()> {
    let n = traj.visible;
    let c = traj.channels();
    let f = traj.frames();
    let feat = traj.feat_dim();
    let total = traj.total_nodes();

    let mut bytes = Vec::with_capacity(24 + (n * feat + f * n * c * 3) * 8);
    bytes.extend_from_slice(DATASET_MAGIC);
    for v in [DATASET_VERSION, n as u32, c as u32, f as u32, feat as u32] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for x in traj.node_feats.data() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    let data = traj.positions.data();
    for frame in 0..f {
        for node in 0..n {
            let base = ((frame * total + node) * c) * 3;
            for x in &data[base..base + c * 3] {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.offset + len > self.bytes.len() {
            return Err(Error::DataFormat {
                offset: self.offset as u64,
                message: format!(
                    "truncated while reading {what}: need {len} bytes, have {}",
                    self.bytes.len() - self.offset
                ),
            });
        }
        let out = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let b = self.take(count * 8, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_dataset(path: &Path) -> Result<Trajectory> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        offset: 0,
    };

    let magic = cur.take(4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::DataFormat {
            offset: 0,
            message: format!("bad magic {magic:?}, expected {DATASET_MAGIC:?}"),
        });
    }
    let version = cur.u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::DataFormat {
            offset: 4,
            message: format!("unsupported version {version}, expected {DATASET_VERSION}"),
        });
    }
    let n = cur.u32("node count")? as usize;
    let c = cur.u32("channel count")? as usize;
    let f = cur.u32("frame count")? as usize;
    let feat = cur.u32("feature width")? as usize;
    if n == 0 || c == 0 || f == 0 || feat == 0 {
        return Err(Error::DataFormat {
            offset: 8,
            message: format!("degenerate header: N={n}, C={c}, F={f}, c={feat}"),
        });
    }

    let feats = cur.f64s(n * feat, "node features")?;
    let positions = cur.f64s(f * n * c * 3, "positions")?;
    if cur.offset != bytes.len() {
        return Err(Error::DataFormat {
            offset: cur.offset as u64,
            message: format!("{} trailing bytes", bytes.len() - cur.offset),
        });
    }

    Ok(Trajectory {
        positions: Tensor::new(vec![f, n, c, 3], positions)?,
        visible: n,
        node_feats: Tensor::new(vec![n, feat], feats)?,
        meta: None,
    })
}

/// Ingest a whitespace-delimited text trajectory of `frame node x y z`
/// rows (single-channel, all-ones features). Frames and nodes must form
/// a dense 0-based grid; `#`-prefixed lines are comments.
pub fn read_csv_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<(usize, usize, [f64; 3])> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Config(format!(
                "{}: line {}: expected 'frame node x y z', got {} fields",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let parse_idx = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| {
                Error::Config(format!(
                    "{}: line {}: bad {what} '{s}'",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                Error::Config(format!(
                    "{}: line {}: bad coordinate '{s}'",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        rows.push((
            parse_idx(fields[0], "frame index")?,
            parse_idx(fields[1], "node index")?,
            [parse_f(fields[2])?, parse_f(fields[3])?, parse_f(fields[4])?],
        ));
    }
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let f = rows.iter().map(|r| r.0).max().unwrap() + 1;
    let n = rows.iter().map(|r| r.1).max().unwrap() + 1;
    let mut seen = vec![false; f * n];
    let mut positions = vec![0.0; f * n * 3];
    for (frame, node, xyz) in rows {
        let cell = frame * n + node;
        if seen[cell] {
            return Err(Error::Config(format!(
                "{}: duplicate entry for frame {frame}, node {node}",
                path.display()
            )));
        }
        seen[cell] = true;
        positions[cell * 3..cell * 3 + 3].copy_from_slice(&xyz);
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::Config(format!(
            "{}: missing entry for frame {}, node {}",
            path.display(),
            missing / n,
            missing % n
        )));
    }
    Ok(Trajectory {
        positions: Tensor::new(vec![f, n, 1, 3], positions)?,
        visible: n,
        node_feats: Tensor::filled(vec![n, 1], 1.0),
        meta: None,
    })
}
