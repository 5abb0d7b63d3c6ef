//! Versioned binary checkpoints.

use std::io::Write;
use std::path::{Path, PathBuf};

use cfl_core::pipeline::TrainState;
use cfl_core::CflError;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

const MAGIC: &[u8; 8] = b"CFLCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    /// Last completed stage (0 while stage 1 is in progress).
    pub stage: u8,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, CflError> {
        let mut out = Vec::with_capacity(MAGIC.len() + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        bincode::serialize_into(&mut out, self).map_err(|e| CflError::Contract(format!("checkpoint encode: {e}")))?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CflError> {
        let header = MAGIC.len() + 4;
        if bytes.len() < header || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CflError::Contract("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[MAGIC.len()..header].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(CflError::Contract(format!(
                "checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        bincode::deserialize(&bytes[header..]).map_err(|e| CflError::Contract(format!("corrupt checkpoint: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<(), CflError> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self, CflError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CflError::Contract(format!("cannot read checkpoint {}: {e}", path.display())))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            CflError::Contract(m) => CflError::Contract(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Write through a sibling temp file and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CflError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = PathBuf::from(path);
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    tmp.set_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
