//! Binary model checkpoints.
//!
//! Layout: magic bytes `AFCK`, u32 LE version (currently 1), u32 LE count of
//! layer sizes, the sizes as u32 LE, then the N parameters as f64 LE in
//! canonical flat order.

use crate::error::{Error, Result};
use crate::model::ModelState;
use std::path::Path;

const MAGIC: [u8; 4] = *b"AFCK";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, model: &ModelState) -> Result<()> {
    let sizes = model.layer_sizes();
    let params = model.flat_params();
    let mut bytes = Vec::with_capacity(12 + 4 * sizes.len() + 8 * params.len());
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &s in sizes {
        bytes.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for v in &params {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let need = |expected: usize| -> Result<()> {
        if bytes.len() < expected {
            Err(Error::CheckpointTruncated {
                expected_bytes: expected,
                got_bytes: bytes.len(),
            })
        } else {
            Ok(())
        }
    };

    need(12)?;
    if bytes[..4] != MAGIC {
        return Err(Error::CheckpointMagic {
            got: [bytes[0], bytes[1], bytes[2], bytes[3]],
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            expected: VERSION,
            got: version,
        });
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    need(12 + 4 * count)?;
    let sizes: Vec<usize> = (0..count)
        .map(|i| {
            let at = 12 + 4 * i;
            u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
        })
        .collect();
    if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidLayerSizes { sizes });
    }

    let n: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let header = 12 + 4 * count;
    let expected_total = header + 8 * n;
    need(expected_total)?;
    if bytes.len() != expected_total {
        return Err(Error::CheckpointSize {
            expected: expected_total,
            got: bytes.len(),
        });
    }

    let params: Vec<f64> = (0..n)
        .map(|i| {
            let at = header + 8 * i;
            f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
        })
        .collect();
    ModelState::from_flat(&sizes, &params)
}
