//! Binary parameter checkpoints.
//!
//! ```text
//! offset  size  field
//!      0     6  magic "ILORA1"
//!      6     4  format version, u32 LE (currently 1)
//!     10     8  parameter count n, u64 LE
//!     18     4  task index, u32 LE (0 before any task)
//!     22     8  run seed, u64 LE
//!     30     1  role: 0 working, 1 long-term, 2 backbone
//!     31    8n  parameters, f64 LE
//! ```
//!
//! Adapter checkpoints store the adapter layout (A1, B1, A2, B2, each
//! row-major). Backbone checkpoints store W1, b1, W2, b2, Whead, bhead.

use std::fs;
use std::path::Path;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 6] = b"ILORA1";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Working,
    LongTerm,
    Backbone,
}

impl Role {
    fn flag(self) -> u8 {
        match self {
            Role::Working => 0,
            Role::LongTerm => 1,
            Role::Backbone => 2,
        }
    }

    fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(Role::Working),
            1 => Some(Role::LongTerm),
            2 => Some(Role::Backbone),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub task: u32,
    pub seed: u64,
    pub role: Role,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.task.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.push(self.role.flag());
        for v in &self.params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a checkpoint; the error string describes the first problem.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < HEADER_LEN {
            return Err(format!("{} bytes is shorter than the header", bytes.len()));
        }
        if &bytes[..6] != MAGIC {
            return Err("bad magic".into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(6);
        if version != VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let count = u64_at(10);
        let task = u32_at(18);
        let seed = u64_at(22);
        let role =
            Role::from_flag(bytes[30]).ok_or_else(|| format!("unknown role flag {}", bytes[30]))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() as u64 != count.saturating_mul(8) {
            return Err(format!(
                "header declares {count} parameters but payload holds {} bytes",
                payload.len()
            ));
        }
        let params = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            task,
            seed,
            role,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_bytes()).map_err(|e| CliError::writing(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::reading(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| CliError::InvalidArtifact {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Loads and checks role and length against what the caller expects.
    pub fn load_expecting(path: &Path, role: Role, len: usize) -> CliResult<Self> {
        let ckpt = Self::load(path)?;
        if ckpt.role != role || ckpt.params.len() != len {
            return Err(CliError::InvalidArtifact {
                path: path.to_path_buf(),
                reason: format!(
                    "expected {role:?} checkpoint with {len} parameters, found {:?} with {}",
                    ckpt.role,
                    ckpt.params.len()
                ),
            });
        }
        Ok(ckpt)
    }
}
