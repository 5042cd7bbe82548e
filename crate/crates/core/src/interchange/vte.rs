use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{
    read_exact_or_truncated, read_header, read_id, read_payload, read_record_start, read_u32, to_u32,
    InterchangeError, Result,
};

pub const VTE_MAGIC: [u8; 4] = *b"VTE\0";
/// Records carry only `id, l, n, d` and the token payload.
pub const VTE_VERSION_PLAIN: u32 = 1;
/// Each record is followed by a sidecar: `u32 cls_len`, `cls_len` float32
/// values (the final-layer CLS token), `u32 meta_len` and UTF-8 metadata.
pub const VTE_VERSION_SIDECAR: u32 = 2;
const SUPPORTED: &[u32] = &[VTE_VERSION_PLAIN, VTE_VERSION_SIDECAR];

/// Spatial token embeddings of every transformer block for one image.
///
/// `data` holds `layers * tokens * dim` values in layer-major, then
/// token-major (row-major) order. The CLS token is never part of `data`;
/// when the producer kept it, it lives in `cls`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub image_id: String,
    pub layers: usize,
    pub tokens: usize,
    pub dim: usize,
    pub data: Vec<f32>,
    pub cls: Option<Vec<f32>>,
    pub metadata: Option<String>,
}

impl EmbeddingRecord {
    pub fn new(
        image_id: impl Into<String>,
        layers: usize,
        tokens: usize,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let record = Self {
            image_id: image_id.into(),
            layers,
            tokens,
            dim,
            data,
            cls: None,
            metadata: None,
        };
        record.validate()?;
        Ok(record)
    }

    /// Builds a record from per-layer token matrices (`layers[i][t]` is a token).
    pub fn from_layers(image_id: impl Into<String>, layers: &[Vec<Vec<f32>>]) -> Result<Self> {
        let image_id = image_id.into();
        let l = layers.len();
        let n = layers.first().map_or(0, |x| x.len());
        let d = layers.first().and_then(|x| x.first()).map_or(0, |t| t.len());
        let mut data = Vec::with_capacity(l * n * d);
        for (i, layer) in layers.iter().enumerate() {
            if layer.len() != n || layer.iter().any(|t| t.len() != d) {
                return Err(InterchangeError::Shape {
                    image_id,
                    reason: format!("layer {i} does not match the {n}x{d} shape of layer 0"),
                });
            }
            for token in layer {
                data.extend_from_slice(token);
            }
        }
        Self::new(image_id, l, n, d, data)
    }

    pub fn with_cls(mut self, cls: Vec<f32>) -> Result<Self> {
        self.cls = Some(cls);
        self.validate()?;
        Ok(self)
    }

    pub fn with_metadata(mut self, metadata: impl Into<String>) -> Self {
        self.metadata = Some(metadata.into());
        self
    }

    /// Checks the shape and that every value is finite.
    pub fn validate(&self) -> Result<()> {
        let shape_err = |reason: String| InterchangeError::Shape {
            image_id: self.image_id.clone(),
            reason,
        };
        if self.layers == 0 || self.tokens == 0 || self.dim == 0 {
            return Err(shape_err(format!(
                "l, n, d must be positive (got {}, {}, {})",
                self.layers, self.tokens, self.dim
            )));
        }
        let expected = self
            .layers
            .checked_mul(self.tokens)
            .and_then(|x| x.checked_mul(self.dim))
            .ok_or_else(|| shape_err("l*n*d overflows".into()))?;
        if self.data.len() != expected {
            return Err(shape_err(format!(
                "payload has {} values, expected l*n*d = {expected}",
                self.data.len()
            )));
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            let per_layer = self.tokens * self.dim;
            return Err(InterchangeError::NonFinite {
                image_id: self.image_id.clone(),
                location: format!(
                    "layer {}, token {}, feature {}",
                    pos / per_layer,
                    (pos % per_layer) / self.dim,
                    pos % self.dim
                ),
            });
        }
        if let Some(cls) = &self.cls {
            if cls.len() != self.dim {
                return Err(shape_err(format!("CLS has {} values, expected d = {}", cls.len(), self.dim)));
            }
            if let Some(pos) = cls.iter().position(|v| !v.is_finite()) {
                return Err(InterchangeError::NonFinite {
                    image_id: self.image_id.clone(),
                    location: format!("CLS feature {pos}"),
                });
            }
        }
        Ok(())
    }

    /// The `n x d` token block of layer `layer` (0-based), row-major.
    pub fn layer(&self, layer: usize) -> &[f32] {
        let block = self.tokens * self.dim;
        &self.data[layer * block..(layer + 1) * block]
    }

    pub fn token(&self, layer: usize, token: usize) -> &[f32] {
        let start = (layer * self.tokens + token) * self.dim;
        &self.data[start..start + self.dim]
    }

    fn has_sidecar(&self) -> bool {
        self.cls.is_some() || self.metadata.is_some()
    }
}

/// Streaming VTE writer. The version is fixed when the file is created.
pub struct VteWriter<W: Write> {
    inner: W,
    version: u32,
    dim: Option<usize>,
    written: usize,
}

impl VteWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, version: u32) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), version)
    }
}

impl<W: Write> VteWriter<W> {
    pub fn new(mut inner: W, version: u32) -> Result<Self> {
        if !SUPPORTED.contains(&version) {
            return Err(InterchangeError::VersionMismatch {
                found: version,
                supported: SUPPORTED,
            });
        }
        inner.write_all(&VTE_MAGIC)?;
        inner.write_all(&version.to_le_bytes())?;
        Ok(Self {
            inner,
            version,
            dim: None,
            written: 0,
        })
    }

    pub fn write(&mut self, record: &EmbeddingRecord) -> Result<()> {
        record.validate()?;
        if record.has_sidecar() && self.version == VTE_VERSION_PLAIN {
            return Err(InterchangeError::Shape {
                image_id: record.image_id.clone(),
                reason: "record carries CLS/metadata but the file is a plain (v1) VTE".into(),
            });
        }
        match self.dim {
            None => self.dim = Some(record.dim),
            Some(d) if d != record.dim => log::warn!(
                "VTE record {:?} has d = {}, earlier records have d = {d}",
                record.image_id,
                record.dim
            ),
            _ => {}
        }
        let id = record.image_id.as_bytes();
        let w = &mut self.inner;
        w.write_all(&to_u32(id.len(), &record.image_id, "id length")?.to_le_bytes())?;
        w.write_all(id)?;
        for (v, what) in [(record.layers, "l"), (record.tokens, "n"), (record.dim, "d")] {
            w.write_all(&to_u32(v, &record.image_id, what)?.to_le_bytes())?;
        }
        write_f32s(w, &record.data)?;
        if self.version == VTE_VERSION_SIDECAR {
            let cls = record.cls.as_deref().unwrap_or(&[]);
            w.write_all(&(cls.len() as u32).to_le_bytes())?;
            write_f32s(w, cls)?;
            let meta = record.metadata.as_deref().unwrap_or("").as_bytes();
            w.write_all(&to_u32(meta.len(), &record.image_id, "metadata length")?.to_le_bytes())?;
            w.write_all(meta)?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }

    pub fn written(&self) -> usize {
        self.written
    }
}

/// Bytes one record occupies in a plain (v1) file.
pub fn plain_record_bytes(image_id: &str, layers: usize, tokens: usize, dim: usize) -> u64 {
    4 + image_id.len() as u64 + 12 + 4 * (layers * tokens * dim) as u64
}

fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len().min(1 << 16) * 4);
    for chunk in values.chunks(1 << 16) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn f32s_from_le(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Writes all records to `path`. Plain v1 layout unless any record has a
/// CLS token or metadata, in which case the sidecar layout (v2) is used.
pub fn write_vte(records: &[EmbeddingRecord], path: impl AsRef<Path>) -> Result<()> {
    if records.is_empty() {
        return Err(InterchangeError::Empty);
    }
    // Validate everything before touching the file.
    for r in records {
        r.validate()?;
    }
    let version = if records.iter().any(EmbeddingRecord::has_sidecar) {
        VTE_VERSION_SIDECAR
    } else {
        VTE_VERSION_PLAIN
    };
    let mut w = VteWriter::create(path, version)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_vte(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRecord>> {
    VteReader::open(path)?.collect()
}

/// Streaming reader yielding one record at a time.
pub struct VteReader<R: Read> {
    inner: R,
    version: u32,
    failed: bool,
}

impl VteReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> VteReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let version = read_header(&mut inner, VTE_MAGIC, SUPPORTED)?;
        Ok(Self {
            inner,
            version,
            failed: false,
        })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    fn next_record(&mut self) -> Result<Option<EmbeddingRecord>> {
        let Some(id_len) = read_record_start(&mut self.inner)? else {
            return Ok(None);
        };
        read_record_body(&mut self.inner, self.version, id_len).map(Some)
    }
}

impl<R: Read> Iterator for VteReader<R> {
    type Item = Result<EmbeddingRecord>;

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

struct RecordHeader {
    image_id: String,
    layers: usize,
    tokens: usize,
    dim: usize,
}

fn read_record_header<R: Read>(r: &mut R, id_len: u32) -> Result<RecordHeader> {
    let image_id = read_id(r, id_len)?;
    let layers = read_u32(r, "record l")? as usize;
    let tokens = read_u32(r, "record n")? as usize;
    let dim = read_u32(r, "record d")? as usize;
    Ok(RecordHeader {
        image_id,
        layers,
        tokens,
        dim,
    })
}

fn payload_bytes(h: &RecordHeader) -> u64 {
    h.layers as u64 * h.tokens as u64 * h.dim as u64 * 4
}

fn read_record_body<R: Read>(r: &mut R, version: u32, id_len: u32) -> Result<EmbeddingRecord> {
    let h = read_record_header(r, id_len)?;
    let bytes = read_payload(r, payload_bytes(&h), "token payload")?;
    let data = f32s_from_le(&bytes);
    let (mut cls, mut metadata) = (None, None);
    if version == VTE_VERSION_SIDECAR {
        let cls_len = read_u32(r, "CLS length")?;
        if cls_len > 0 {
            let bytes = read_payload(r, cls_len as u64 * 4, "CLS payload")?;
            cls = Some(f32s_from_le(&bytes));
        }
        let meta_len = read_u32(r, "metadata length")?;
        if meta_len > 0 {
            let bytes = read_payload(r, meta_len as u64, "metadata")?;
            metadata = Some(String::from_utf8(bytes).map_err(|_| InterchangeError::InvalidId)?);
        }
    }
    let record = EmbeddingRecord {
        image_id: h.image_id,
        layers: h.layers,
        tokens: h.tokens,
        dim: h.dim,
        data,
        cls,
        metadata,
    };
    record.validate()?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VteIndexEntry {
    pub image_id: String,
    pub offset: u64,
    pub layers: usize,
    pub tokens: usize,
    pub dim: usize,
}

/// Offset table over a VTE file for random access.
///
/// Building the index reads only record headers. `read` opens its own file
/// handle, so one index can serve many threads reading distinct records.
#[derive(Debug, Clone)]
pub struct VteIndex {
    path: PathBuf,
    version: u32,
    entries: Vec<VteIndexEntry>,
}

impl VteIndex {
    pub fn build(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path)?;
        let file_len = file.metadata()?.len();
        let mut r = BufReader::new(file);
        let version = read_header(&mut r, VTE_MAGIC, SUPPORTED)?;
        let mut entries = Vec::new();
        let mut offset = 8u64;
        while let Some(id_len) = read_record_start(&mut r)? {
            let h = read_record_header(&mut r, id_len)?;
            let mut skip = payload_bytes(&h);
            let header_len = 4 + id_len as u64 + 12;
            let mut end = offset + header_len + skip;
            if end > file_len {
                return Err(InterchangeError::Truncated {
                    context: format!("token payload of {:?}", h.image_id),
                });
            }
            r.seek(SeekFrom::Current(skip as i64))?;
            if version == VTE_VERSION_SIDECAR {
                let cls_len = read_u32(&mut r, "CLS length")? as u64;
                r.seek(SeekFrom::Current((cls_len * 4) as i64))?;
                let meta_len = read_u32(&mut r, "metadata length")? as u64;
                r.seek(SeekFrom::Current(meta_len as i64))?;
                skip = 8 + cls_len * 4 + meta_len;
                end += skip;
                if end > file_len {
                    return Err(InterchangeError::Truncated {
                        context: format!("sidecar of {:?}", h.image_id),
                    });
                }
            }
            entries.push(VteIndexEntry {
                image_id: h.image_id,
                offset,
                layers: h.layers,
                tokens: h.tokens,
                dim: h.dim,
            });
            offset = end;
        }
        Ok(Self {
            path,
            version,
            entries,
        })
    }

    pub fn entries(&self) -> &[VteIndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, image_id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.image_id == image_id)
    }

    pub fn read(&self, index: usize) -> Result<EmbeddingRecord> {
        let entry = self.entries.get(index).ok_or(InterchangeError::OutOfRange {
            index,
            len: self.entries.len(),
        })?;
        let mut file = File::open(&self.path)?;
        file.seek(SeekFrom::Start(entry.offset))?;
        let mut r = BufReader::new(file);
        let mut id_len = [0u8; 4];
        read_exact_or_truncated(&mut r, &mut id_len, "record header")?;
        read_record_body(&mut r, self.version, u32::from_le_bytes(id_len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EmbeddingRecord {
        EmbeddingRecord::new("img", 1, 1, 2, vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn tiny_record_layout_is_bit_exact() {
        let mut w = VteWriter::new(Vec::new(), VTE_VERSION_PLAIN).unwrap();
        w.write(&tiny()).unwrap();
        let bytes = w.finish().unwrap();
        let mut expected = b"VTE\0".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&3u32.to_le_bytes());
        expected.extend_from_slice(b"img");
        for v in [1u32, 1, 2] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&[0u8; 8]);
        assert_eq!(bytes, expected);
        // header + id framing + 8 payload bytes
        assert_eq!(bytes.len(), 8 + 4 + 3 + 12 + 8);
    }

    #[test]
    fn nan_is_rejected_with_image_id() {
        let mut data = vec![0.0f32; 2 * 5 * 3];
        data[3 * 3] = f32::NAN;
        let err = EmbeddingRecord::new("cat_017", 2, 5, 3, data).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, InterchangeError::NonFinite { .. }));
        assert!(msg.contains("cat_017"), "{msg}");
        assert!(msg.contains("layer 0, token 3"), "{msg}");
    }

    #[test]
    fn writer_rejects_non_finite_record() {
        let mut r = tiny();
        r.data[1] = f32::INFINITY;
        let mut w = VteWriter::new(Vec::new(), VTE_VERSION_PLAIN).unwrap();
        assert!(matches!(w.write(&r), Err(InterchangeError::NonFinite { .. })));
    }

    #[test]
    fn bad_magic_truncation_and_version_are_distinct() {
        let mut w = VteWriter::new(Vec::new(), VTE_VERSION_PLAIN).unwrap();
        w.write(&tiny()).unwrap();
        let bytes = w.finish().unwrap();

        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(VteReader::new(&wrong[..]), Err(InterchangeError::BadMagic { .. })));

        let mut ver = bytes.clone();
        ver[4] = 9;
        assert!(matches!(
            VteReader::new(&ver[..]),
            Err(InterchangeError::VersionMismatch { found: 9, .. })
        ));

        let cut = &bytes[..bytes.len() - 3];
        let out: Result<Vec<_>> = VteReader::new(cut).unwrap().collect();
        assert!(matches!(out, Err(InterchangeError::Truncated { .. })));

        // A partial record length prefix is also a truncation.
        let mut partial = bytes.clone();
        partial.extend_from_slice(&[1, 0]);
        let out: Result<Vec<_>> = VteReader::new(&partial[..]).unwrap().collect();
        assert!(matches!(out, Err(InterchangeError::Truncated { .. })));
    }

    #[test]
    fn plain_writer_refuses_sidecar_records() {
        let r = tiny().with_cls(vec![1.0, 2.0]).unwrap();
        let mut w = VteWriter::new(Vec::new(), VTE_VERSION_PLAIN).unwrap();
        assert!(w.write(&r).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let r = EmbeddingRecord::new("a", 2, 2, 2, (0..8).map(|x| x as f32).collect())
            .unwrap()
            .with_cls(vec![0.5, -0.5])
            .unwrap()
            .with_metadata("{\"resize\":224}");
        let mut w = VteWriter::new(Vec::new(), VTE_VERSION_SIDECAR).unwrap();
        w.write(&r).unwrap();
        w.write(&tiny()).unwrap();
        let bytes = w.finish().unwrap();
        let back: Vec<_> = VteReader::new(&bytes[..]).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(back, vec![r, tiny()]);
    }

    #[test]
    fn cls_length_must_match_dim() {
        assert!(tiny().with_cls(vec![1.0]).is_err());
    }

    #[test]
    fn zero_sized_shapes_are_rejected() {
        assert!(EmbeddingRecord::new("z", 0, 1, 1, vec![]).is_err());
        assert!(EmbeddingRecord::new("z", 1, 1, 1, vec![]).is_err());
    }
}
