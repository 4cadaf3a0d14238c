//! Model checkpoints.
//!
//! Binary layout, all little-endian:
//!
//! | bytes | content                 |
//! |-------|-------------------------|
//! | 4     | magic `DPFS`            |
//! | 4     | format version (u32), 1 |
//! | 8     | parameter count d (u64) |
//! | 8 d   | parameters (f64)        |
//!
//! The model architecture is stored next to it as JSON in `<path>.json`.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{ModelSpec, ParamVector};

pub const MAGIC: [u8; 4] = *b"DPFS";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint has {found} parameters but its model needs {expected}")]
    Length { expected: usize, found: u64 },
    #[error("trailing bytes after {0} parameters")]
    Trailing(u64),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

pub fn write_params<W: Write>(mut w: W, params: &[f64]) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_params<R: Read>(mut r: R) -> Result<ParamVector, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let d = u64::from_le_bytes(b8);
    let mut params = Vec::with_capacity(d.min(1 << 24) as usize);
    for _ in 0..d {
        r.read_exact(&mut b8)?;
        params.push(f64::from_le_bytes(b8));
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(CheckpointError::Trailing(d));
    }
    Ok(params)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the parameters to `path` and the architecture to its sidecar.
pub fn save(path: &Path, spec: &ModelSpec, params: &[f64]) -> Result<(), CheckpointError> {
    if params.len() != spec.param_count() {
        return Err(CheckpointError::Length {
            expected: spec.param_count(),
            found: params.len() as u64,
        });
    }
    write_params(io::BufWriter::new(fs::File::create(path)?), params)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(spec)? + "\n")?;
    Ok(())
}

/// Reads a checkpoint and its sidecar and checks they agree.
pub fn load(path: &Path) -> Result<(ModelSpec, ParamVector), CheckpointError> {
    let spec: ModelSpec = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let params = read_params(io::BufReader::new(fs::File::open(path)?))?;
    if params.len() != spec.param_count() {
        return Err(CheckpointError::Length {
            expected: spec.param_count(),
            found: params.len() as u64,
        });
    }
    Ok((spec, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, Activation};

    #[test]
    fn layout_and_round_trip() {
        let mut buf = Vec::new();
        write_params(&mut buf, &[1.5, -0.0]).unwrap();
        assert_eq!(&buf[..4], b"DPFS");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        assert_eq!(&buf[8..16], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&buf[16..24], &1.5f64.to_le_bytes());
        assert_eq!(buf.len(), 32);
        let back = read_params(&buf[..]).unwrap();
        assert_eq!(back[0], 1.5);
        assert!(back[1] == 0.0 && back[1].is_sign_negative());

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_params(&bad[..]), Err(CheckpointError::BadMagic(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_params(&long[..]), Err(CheckpointError::Trailing(2))));
        assert!(read_params(&buf[..20]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let spec = ModelSpec::new(vec![2, 3, 2], Activation::Tanh).unwrap();
        let params = init_params(&spec, 5);
        save(&path, &spec, &params).unwrap();
        assert_eq!(load(&path).unwrap(), (spec.clone(), params));
        assert!(save(&path, &spec, &[0.0]).is_err());
    }
}
