//! KBF: a flat little-endian file holding every block of `K`.
//!
//! Layout (all integers `u32`, all reals `f64`, little-endian):
//!
//! | offset        | field                                   |
//! |---------------|-----------------------------------------|
//! | 0             | magic `KBF1`                            |
//! | 4             | version (1)                             |
//! | 8             | `N_d`                                   |
//! | 12            | `N_t`                                   |
//! | 16            | dtype code (1 = f64)                    |
//! | 20            | block ordering code (0 = block-row-major) |
//! | 24            | `N_d` noise variances                   |
//! | …             | zero padding to a multiple of 16        |
//! | header        | `N_d²` blocks of `N_t²` reals           |
//!
//! Block `(i, j)` starts at `header + (i·N_d + j)·N_t²·8` and is row-major.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use crate::lti::DataSpaceHessian;
use crate::source::{check_block_request, BlockSource};

pub const MAGIC: &[u8; 4] = b"KBF1";
pub const VERSION: u32 = 1;
pub const DTYPE_F64: u32 = 1;
pub const ORDER_BLOCK_ROW_MAJOR: u32 = 0;

const FIXED_HEADER: usize = 24;

/// Relative asymmetry tolerated by [`write_k`].
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt KBF file: {0}")]
    CorruptFile(String),
    #[error("block ({i}, {j}) out of range for {n_sensors} sensors")]
    IndexOutOfRange { i: usize, j: usize, n_sensors: usize },
    #[error("output buffer holds {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("refusing to write matrix: {0}")]
    InvalidMatrix(String),
}

/// Header size in bytes for `n_sensors` candidates.
pub fn header_len(n_sensors: usize) -> usize {
    (FIXED_HEADER + 8 * n_sensors).div_ceil(16) * 16
}

/// Exact file size of a store with the given shape.
pub fn file_len(n_sensors: usize, n_steps: usize) -> u64 {
    header_len(n_sensors) as u64 + (n_sensors * n_sensors * n_steps * n_steps * 8) as u64
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write `k` as a KBF file. The matrix must be symmetric to within
/// [`SYMMETRY_TOL`] relative.
pub fn write_k(k: &DataSpaceHessian, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let asym = k.max_asymmetry();
    if !(asym <= SYMMETRY_TOL) {
        return Err(StoreError::InvalidMatrix(format!(
            "relative asymmetry {asym:e} exceeds {SYMMETRY_TOL:e}"
        )));
    }
    if k.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(StoreError::InvalidMatrix("non-finite entry".into()));
    }
    let (nd, nt) = (k.n_sensors(), k.n_steps());
    let to_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| StoreError::InvalidMatrix(format!("dimension {v} exceeds u32")))
    };
    let mut header = Vec::with_capacity(header_len(nd));
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&to_u32(nd)?.to_le_bytes());
    header.extend_from_slice(&to_u32(nt)?.to_le_bytes());
    header.extend_from_slice(&DTYPE_F64.to_le_bytes());
    header.extend_from_slice(&ORDER_BLOCK_ROW_MAJOR.to_le_bytes());
    for v in k.noise_diag() {
        header.extend_from_slice(&v.to_le_bytes());
    }
    header.resize(header_len(nd), 0);

    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    w.write_all(&header).map_err(io_err(path))?;
    for v in k.as_slice() {
        w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
    }
    let file = w.into_inner().map_err(|e| io_err(path)(e.into_error()))?;
    file.sync_all().map_err(io_err(path))?;
    Ok(())
}

/// Read-only handle on a KBF file.
///
/// Reads use positioned I/O, so one handle can serve any number of threads.
#[derive(Debug)]
pub struct KStore {
    file: File,
    path: PathBuf,
    n_sensors: usize,
    n_steps: usize,
    noise: Vec<f64>,
    header_len: u64,
}

impl KStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let mut file = File::open(path).map_err(io_err(path))?;
        let mut fixed = [0u8; FIXED_HEADER];
        file.read_exact(&mut fixed).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => StoreError::CorruptFile("header truncated".into()),
            _ => io_err(path)(e),
        })?;
        if &fixed[0..4] != MAGIC {
            return Err(StoreError::CorruptFile("bad magic".into()));
        }
        let word = |o: usize| u32::from_le_bytes(fixed[o..o + 4].try_into().unwrap());
        if word(4) != VERSION {
            return Err(StoreError::CorruptFile(format!("unsupported version {}", word(4))));
        }
        let (nd, nt) = (word(8) as usize, word(12) as usize);
        if word(16) != DTYPE_F64 {
            return Err(StoreError::CorruptFile(format!("unsupported dtype {}", word(16))));
        }
        if word(20) != ORDER_BLOCK_ROW_MAJOR {
            return Err(StoreError::CorruptFile(format!("unsupported ordering {}", word(20))));
        }
        let actual = file.metadata().map_err(io_err(path))?.len();
        let expected = (nd as u64)
            .checked_mul(nd as u64)
            .and_then(|v| v.checked_mul(nt as u64 * nt as u64))
            .and_then(|v| v.checked_mul(8))
            .and_then(|v| v.checked_add(header_len(nd) as u64))
            .ok_or_else(|| StoreError::CorruptFile(format!("implausible shape {nd} × {nt}")))?;
        if actual != expected {
            return Err(StoreError::CorruptFile(format!(
                "file is {actual} bytes, header implies {expected}"
            )));
        }
        let mut raw = vec![0u8; 8 * nd];
        file.read_exact(&mut raw).map_err(io_err(path))?;
        let noise = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            file,
            path: path.to_path_buf(),
            n_sensors: nd,
            n_steps: nt,
            noise,
            header_len: header_len(nd) as u64,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Byte offset of block `(i, j)`.
    pub fn block_offset(&self, i: usize, j: usize) -> u64 {
        let nb = (self.n_steps * self.n_steps * 8) as u64;
        self.header_len + (i * self.n_sensors + j) as u64 * nb
    }

    /// Read the whole matrix into memory.
    pub fn load(&self) -> Result<DataSpaceHessian, StoreError> {
        let (nd, nt) = (self.n_sensors, self.n_steps);
        let nb = nt * nt;
        let mut data = vec![0.0; nd * nd * nb];
        for (q, blk) in data.chunks_exact_mut(nb.max(1)).enumerate().take(nd * nd) {
            self.read_block(q / nd, q % nd, blk)?;
        }
        DataSpaceHessian::from_blocks(nd, nt, data, self.noise.clone())
            .map_err(|e| StoreError::CorruptFile(e.to_string()))
    }
}

impl BlockSource for KStore {
    fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn noise_variance(&self, i: usize) -> f64 {
        self.noise[i]
    }

    fn read_block(&self, i: usize, j: usize, out: &mut [f64]) -> Result<(), StoreError> {
        check_block_request(self.n_sensors, self.n_steps, i, j, out.len())?;
        let off = self.block_offset(i, j);
        self.file
            .read_exact_at(bytemuck::cast_slice_mut(out), off)
            .map_err(|e| match e.kind() {
                io::ErrorKind::UnexpectedEof => StoreError::CorruptFile(format!(
                    "block ({i}, {j}) at offset {off} extends past end of file"
                )),
                _ => io_err(&self.path)(e),
            })?;
        #[cfg(target_endian = "big")]
        for v in out.iter_mut() {
            *v = f64::from_bits(u64::from_le(v.to_bits()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_sixteen_byte_aligned() {
        assert_eq!(header_len(0), 32);
        assert_eq!(header_len(1), 32);
        assert_eq!(header_len(3), 48);
        assert_eq!(header_len(8), 96);
        assert_eq!(file_len(8, 16), 96 + 8 * 8 * 16 * 16 * 8);
    }
}
