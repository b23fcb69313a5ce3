//! Binary checkpoints.
//!
//! Layout (all little-endian):
//!
//! | field        | type        |
//! |--------------|-------------|
//! | magic        | `b"SPDR"`   |
//! | version      | `u16`       |
//! | model id     | `u8` (0 ns, 1 qg, 2 ou, 3 chain) |
//! | K            | `u32`       |
//! | time         | `f64`       |
//! | seed         | `u64`       |
//! | trajectory   | `u64`       |
//! | step         | `u64`       |
//! | payload      | `(re: f64, im: f64)` pairs |
//!
//! The payload is one array of `K²` coefficients in storage order for
//! Navier–Stokes, two for the two-layer model (upper layer first), `K`
//! real components (imaginary parts zero) for Ornstein–Uhlenbeck states, and
//! a single pair holding the state index for chains. Seed, trajectory and
//! step address the next noise draw, so a resumed run continues bit for bit.

use std::io::Write;
use std::path::Path;

use spdr_core::Complex64;

use crate::config::ModelKind;
use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"SPDR";
pub const VERSION: u16 = 1;
const HEADER: usize = 4 + 2 + 1 + 4 + 8 + 8 + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelKind,
    pub k: u32,
    pub time: f64,
    pub seed: u64,
    pub trajectory: u64,
    pub step: u64,
    pub arrays: Vec<Vec<Complex64>>,
}

fn shape(model: ModelKind, k: u32) -> (usize, usize) {
    let k = k as usize;
    match model {
        ModelKind::Ns => (1, k * k),
        ModelKind::Qg => (2, k * k),
        ModelKind::Ou => (1, k),
        ModelKind::Chain => (1, 1),
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + 16 * self.arrays.iter().map(Vec::len).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.model.id());
        out.extend_from_slice(&self.k.to_le_bytes());
        out.extend_from_slice(&self.time.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.trajectory.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        for c in self.arrays.iter().flatten() {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Err(CliError::Checkpoint(m.to_string()));
        if bytes.len() < HEADER || &bytes[..4] != MAGIC {
            return bad("not a checkpoint file");
        }
        let u16_at = |i: usize| u16::from_le_bytes(bytes[i..i + 2].try_into().unwrap());
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let version = u16_at(4);
        if version != VERSION {
            return Err(CliError::Checkpoint(format!("version {version} is not supported (expected {VERSION})")));
        }
        let model = match bytes[6] {
            0 => ModelKind::Ns,
            1 => ModelKind::Qg,
            2 => ModelKind::Ou,
            3 => ModelKind::Chain,
            id => return Err(CliError::Checkpoint(format!("unknown model id {id}"))),
        };
        let k = u32_at(7);
        let time = f64::from_bits(u64_at(11));
        let (seed, trajectory, step) = (u64_at(19), u64_at(27), u64_at(35));
        let (count, len) = shape(model, k);
        if bytes.len() != HEADER + 16 * count * len {
            return bad("payload length does not match the header");
        }
        let mut arrays = Vec::with_capacity(count);
        let mut at = HEADER;
        for _ in 0..count {
            let mut a = Vec::with_capacity(len);
            for _ in 0..len {
                a.push(Complex64::new(f64::from_bits(u64_at(at)), f64::from_bits(u64_at(at + 8))));
                at += 16;
            }
            arrays.push(a);
        }
        Ok(Checkpoint { model, k, time, seed, trajectory, step, arrays })
    }

    /// Writes to a temporary sibling and renames it into place, so an
    /// interrupted write never leaves a truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| CliError::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
