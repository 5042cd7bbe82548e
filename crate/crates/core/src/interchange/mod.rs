//! File formats shared between the token extractor and the encoder/evaluator.
//!
//! * VTE (`VTE\0`): per-image, per-layer spatial token embeddings as float32.
//! * VTD (`VTD\0`): one float64 descriptor per image, with an optional label.
//! * Split manifests: JSON documents describing classes and train/test folds.
//!
//! All binary integers and floats are little-endian. Both binary formats start
//! with a 4-byte magic followed by a `u32` version, i.e. an 8-byte header.

mod manifest;
mod vtd;
mod vte;

pub use manifest::{load_manifest, save_manifest, Fold, ManifestError, Protocol, SplitManifest};
pub use vtd::{read_vtd, write_vtd, DescriptorRecord, VtdReader, VtdWriter, VTD_MAGIC, VTD_VERSION};
pub use vte::{
    plain_record_bytes, read_vte, write_vte, EmbeddingRecord, VteIndex, VteIndexEntry, VteReader, VteWriter,
    VTE_MAGIC, VTE_VERSION_PLAIN, VTE_VERSION_SIDECAR,
};

use std::io::{self, Read};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum InterchangeError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("version mismatch: file has version {found}, supported {supported:?}")]
    VersionMismatch { found: u32, supported: &'static [u32] },
    #[error("truncated payload while reading {context}")]
    Truncated { context: String },
    #[error("record {image_id:?}: non-finite value at {location}")]
    NonFinite { image_id: String, location: String },
    #[error("record {image_id:?}: {reason}")]
    Shape { image_id: String, reason: String },
    #[error("record id is not valid UTF-8")]
    InvalidId,
    #[error("no records to write")]
    Empty,
    #[error("record index {index} out of range ({len} records)")]
    OutOfRange { index: usize, len: usize },
}

pub type Result<T, E = InterchangeError> = std::result::Result<T, E>;

/// Reads exactly `buf.len()` bytes, mapping a short read to `Truncated`.
pub(crate) fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8], context: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => InterchangeError::Truncated {
            context: context.to_string(),
        },
        _ => InterchangeError::Io(e),
    })
}

/// Reads `len` bytes without trusting `len` for the allocation size up front.
pub(crate) fn read_payload<R: Read>(r: &mut R, len: u64, context: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(len.min(1 << 24) as usize);
    r.take(len).read_to_end(&mut buf)?;
    if buf.len() as u64 != len {
        return Err(InterchangeError::Truncated {
            context: context.to_string(),
        });
    }
    Ok(buf)
}

/// Reads the leading `u32` of a record. `Ok(None)` on a clean end of file.
pub(crate) fn read_record_start<R: Read>(r: &mut R) -> Result<Option<u32>> {
    let mut buf = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(k) => filled += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    match filled {
        0 => Ok(None),
        4 => Ok(Some(u32::from_le_bytes(buf))),
        _ => Err(InterchangeError::Truncated {
            context: "record header".into(),
        }),
    }
}

pub(crate) fn read_header<R: Read>(r: &mut R, magic: [u8; 4], supported: &'static [u32]) -> Result<u32> {
    let mut found = [0u8; 4];
    read_exact_or_truncated(r, &mut found, "file magic")?;
    if found != magic {
        return Err(InterchangeError::BadMagic {
            expected: magic,
            found,
        });
    }
    let mut v = [0u8; 4];
    read_exact_or_truncated(r, &mut v, "file version")?;
    let version = u32::from_le_bytes(v);
    if !supported.contains(&version) {
        return Err(InterchangeError::VersionMismatch {
            found: version,
            supported,
        });
    }
    Ok(version)
}

pub(crate) fn read_id<R: Read>(r: &mut R, len: u32) -> Result<String> {
    let bytes = read_payload(r, len as u64, "record id")?;
    String::from_utf8(bytes).map_err(|_| InterchangeError::InvalidId)
}

pub(crate) fn read_u32<R: Read>(r: &mut R, context: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b, context)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn to_u32(value: usize, image_id: &str, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| InterchangeError::Shape {
        image_id: image_id.to_string(),
        reason: format!("{what} = {value} does not fit in u32"),
    })
}
