//! Magic-tagged, versioned binary containers for pipeline artifacts.
//!
//! Layout: 8 magic bytes, a little-endian `u32` format version, then a
//! bincode body. Mixing artifacts across format versions fails on load.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Kb,
    Pairs,
    Scorer,
}

impl Kind {
    fn magic(self) -> &'static [u8; 8] {
        match self {
            Kind::Kb => b"PLNKKB\0\0",
            Kind::Pairs => b"PLNKPAIR",
            Kind::Scorer => b"PLNKSCOR",
        }
    }

    fn version(self) -> u32 {
        1
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Kb => "knowledge base",
            Kind::Pairs => "training pairs",
            Kind::Scorer => "scorer model",
        }
    }
}

pub fn encode<T: Serialize + ?Sized>(kind: Kind, value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(kind.magic());
    out.extend_from_slice(&kind.version().to_le_bytes());
    bincode::serialize_into(&mut out, value)?;
    Ok(out)
}

pub fn decode<T: DeserializeOwned>(kind: Kind, bytes: &[u8]) -> Result<T> {
    if bytes.len() < 12 || &bytes[..8] != kind.magic() {
        return Err(Error::BadMagic(kind.name()));
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if found != kind.version() {
        return Err(Error::VersionMismatch {
            what: kind.name(),
            found,
            expected: kind.version(),
        });
    }
    Ok(bincode::deserialize(&bytes[12..])?)
}

pub fn write<T: Serialize + ?Sized>(path: &Path, kind: Kind, value: &T) -> Result<()> {
    let bytes = encode(kind, value)?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read<T: DeserializeOwned>(path: &Path, kind: Kind) -> Result<T> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(kind, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_foreign_magic_and_versions() {
        let bytes = encode(Kind::Kb, &vec![1u32, 2, 3]).unwrap();
        let back: Vec<u32> = decode(Kind::Kb, &bytes).unwrap();
        assert_eq!(back, vec![1, 2, 3]);
        assert!(matches!(
            decode::<Vec<u32>>(Kind::Scorer, &bytes),
            Err(Error::BadMagic(_))
        ));
        let mut bumped = bytes.clone();
        bumped[8] = 9;
        assert!(matches!(
            decode::<Vec<u32>>(Kind::Kb, &bumped),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
        assert!(decode::<Vec<u32>>(Kind::Kb, &bytes[..5]).is_err());
    }
}
