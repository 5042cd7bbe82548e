use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{read_exact_or_truncated, read_header, read_id, read_payload, read_record_start, read_u32, to_u32};
use super::{InterchangeError, Result};

pub const VTD_MAGIC: [u8; 4] = *b"VTD\0";
pub const VTD_VERSION: u32 = 1;
const SUPPORTED: &[u32] = &[VTD_VERSION];

/// One image descriptor. `label` is a class index, or -1 when unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorRecord {
    pub image_id: String,
    pub label: i32,
    pub features: Vec<f64>,
}

impl DescriptorRecord {
    pub fn new(image_id: impl Into<String>, label: i32, features: Vec<f64>) -> Self {
        Self {
            image_id: image_id.into(),
            label,
            features,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.label < -1 {
            return Err(InterchangeError::Shape {
                image_id: self.image_id.clone(),
                reason: format!("label {} is neither a class index nor -1", self.label),
            });
        }
        if let Some(pos) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(InterchangeError::NonFinite {
                image_id: self.image_id.clone(),
                location: format!("feature {pos}"),
            });
        }
        Ok(())
    }
}

pub struct VtdWriter<W: Write> {
    inner: W,
    dim: Option<usize>,
}

impl VtdWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> VtdWriter<W> {
    pub fn new(mut inner: W) -> Result<Self> {
        inner.write_all(&VTD_MAGIC)?;
        inner.write_all(&VTD_VERSION.to_le_bytes())?;
        Ok(Self { inner, dim: None })
    }

    /// Writes one descriptor. All descriptors in a file share one dimension.
    pub fn write(&mut self, record: &DescriptorRecord) -> Result<()> {
        record.validate()?;
        match self.dim {
            None => self.dim = Some(record.features.len()),
            Some(d) if d != record.features.len() => {
                return Err(InterchangeError::Shape {
                    image_id: record.image_id.clone(),
                    reason: format!("descriptor has d = {}, file has d = {d}", record.features.len()),
                })
            }
            _ => {}
        }
        let id = record.image_id.as_bytes();
        let w = &mut self.inner;
        w.write_all(&to_u32(id.len(), &record.image_id, "id length")?.to_le_bytes())?;
        w.write_all(id)?;
        w.write_all(&record.label.to_le_bytes())?;
        w.write_all(&to_u32(record.features.len(), &record.image_id, "d")?.to_le_bytes())?;
        let mut buf = Vec::with_capacity(record.features.len() * 8);
        for v in &record.features {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_vtd(records: &[DescriptorRecord], path: impl AsRef<Path>) -> Result<()> {
    for r in records {
        r.validate()?;
    }
    let mut w = VtdWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_vtd(path: impl AsRef<Path>) -> Result<Vec<DescriptorRecord>> {
    VtdReader::open(path)?.collect()
}

pub struct VtdReader<R: Read> {
    inner: R,
    failed: bool,
}

impl VtdReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> VtdReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        read_header(&mut inner, VTD_MAGIC, SUPPORTED)?;
        Ok(Self { inner, failed: false })
    }

    fn next_record(&mut self) -> Result<Option<DescriptorRecord>> {
        let Some(id_len) = read_record_start(&mut self.inner)? else {
            return Ok(None);
        };
        let r = &mut self.inner;
        let image_id = read_id(r, id_len)?;
        let mut label = [0u8; 4];
        read_exact_or_truncated(r, &mut label, "descriptor label")?;
        let dim = read_u32(r, "descriptor d")? as u64;
        let bytes = read_payload(r, dim * 8, "descriptor payload")?;
        let features = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let record = DescriptorRecord {
            image_id,
            label: i32::from_le_bytes(label),
            features,
        };
        record.validate()?;
        Ok(Some(record))
    }
}

impl<R: Read> Iterator for VtdReader<R> {
    type Item = Result<DescriptorRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let out = self.next_record().transpose();
        if matches!(out, Some(Err(_))) {
            self.failed = true;
        }
        out
    }
}
