//! Versioned binary model files (`VTM\0`).
//!
//! Layout, little-endian: magic, `u32` version, `u8` standardizer flag
//! (followed by mean and scale vectors when set), `u8` model kind
//! (0 = knn, 1 = lda, 2 = svm) and the kind-specific payload. Vectors are a
//! `u64` length followed by `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{
    ClassifierError, LabeledSet, LdaModel, LinearSvmModel, Model, MulticlassScheme, NearestNeighborModel,
    Standardizer,
};

pub const VTM_MAGIC: [u8; 4] = *b"VTM\0";
pub const VTM_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Knn(NearestNeighborModel),
    Lda(LdaModel),
    Svm(LinearSvmModel),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Knn(_) => "knn",
            SavedModel::Lda(_) => "lda",
            SavedModel::Svm(_) => "svm",
        }
    }

    pub fn into_model(self) -> Box<dyn Model> {
        match self {
            SavedModel::Knn(m) => Box::new(m),
            SavedModel::Lda(m) => Box::new(m),
            SavedModel::Svm(m) => Box::new(m),
        }
    }
}

fn format_err(msg: impl Into<String>) -> ClassifierError {
    ClassifierError::Format(msg.into())
}

fn eof_as_truncated(e: std::io::Error) -> ClassifierError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        format_err("truncated model file")
    } else {
        ClassifierError::Io(e)
    }
}

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.0.write_u8(v)
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_u64::<LittleEndian>(v)
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_f64::<LittleEndian>(v)
    }
    fn f64s(&mut self, v: &[f64]) -> std::io::Result<()> {
        self.u64(v.len() as u64)?;
        v.iter().try_for_each(|&x| self.f64(x))
    }
    fn usizes(&mut self, v: &[usize]) -> std::io::Result<()> {
        self.u64(v.len() as u64)?;
        v.iter().try_for_each(|&x| self.u64(x as u64))
    }
    fn rows(&mut self, v: &[Vec<f64>]) -> std::io::Result<()> {
        self.u64(v.len() as u64)?;
        v.iter().try_for_each(|r| self.f64s(r))
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn u8(&mut self) -> Result<u8, ClassifierError> {
        self.0.read_u8().map_err(eof_as_truncated)
    }
    fn u64(&mut self) -> Result<u64, ClassifierError> {
        self.0.read_u64::<LittleEndian>().map_err(eof_as_truncated)
    }
    fn len(&mut self) -> Result<usize, ClassifierError> {
        let n = self.u64()?;
        usize::try_from(n).map_err(|_| format_err("length overflows usize"))
    }
    fn f64(&mut self) -> Result<f64, ClassifierError> {
        self.0.read_f64::<LittleEndian>().map_err(eof_as_truncated)
    }
    fn f64s(&mut self) -> Result<Vec<f64>, ClassifierError> {
        let n = self.len()?;
        // grow incrementally: a corrupt length must not trigger a huge allocation
        let mut v = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            v.push(self.f64()?);
        }
        Ok(v)
    }
    fn usizes(&mut self) -> Result<Vec<usize>, ClassifierError> {
        let n = self.len()?;
        let mut v = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            v.push(self.len()?);
        }
        Ok(v)
    }
    fn rows(&mut self) -> Result<Vec<Vec<f64>>, ClassifierError> {
        let n = self.len()?;
        let mut v = Vec::with_capacity(n.min(1 << 12));
        for _ in 0..n {
            v.push(self.f64s()?);
        }
        Ok(v)
    }
}

pub fn write_model<W: Write>(w: W, standardizer: Option<&Standardizer>, model: &SavedModel) -> Result<(), ClassifierError> {
    let mut o = Out(w);
    o.0.write_all(&VTM_MAGIC)?;
    o.0.write_u32::<LittleEndian>(VTM_VERSION)?;
    match standardizer {
        None => o.u8(0)?,
        Some(s) => {
            o.u8(1)?;
            o.f64s(&s.mean)?;
            o.f64s(&s.scale)?;
        }
    }
    match model {
        SavedModel::Knn(m) => {
            o.u8(0)?;
            o.u64(m.train.dim() as u64)?;
            o.usizes(m.train.labels())?;
            o.f64s(m.train.features())?;
        }
        SavedModel::Lda(m) => {
            o.u8(1)?;
            o.usizes(&m.classes)?;
            o.rows(&m.means)?;
            o.f64s(&m.priors)?;
            o.f64(m.shrinkage)?;
            o.rows(&m.coef)?;
            o.f64s(&m.intercept)?;
        }
        SavedModel::Svm(m) => {
            o.u8(2)?;
            o.u8(match m.scheme {
                MulticlassScheme::OneVsRest => 0,
                MulticlassScheme::OneVsOne => 1,
            })?;
            o.usizes(&m.classes)?;
            o.rows(&m.weights)?;
            o.f64s(&m.biases)?;
            let flat: Vec<usize> = m.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
            o.usizes(&flat)?;
            o.f64(m.c)?;
            o.f64s(&m.gaps)?;
        }
    }
    o.0.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<(Option<Standardizer>, SavedModel), ClassifierError> {
    let mut i = In(r);
    let mut magic = [0u8; 4];
    i.0.read_exact(&mut magic).map_err(eof_as_truncated)?;
    if magic != VTM_MAGIC {
        return Err(format_err(format!("bad magic {magic:?}")));
    }
    let version = i.0.read_u32::<LittleEndian>().map_err(eof_as_truncated)?;
    if version != VTM_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let standardizer = match i.u8()? {
        0 => None,
        1 => Some(Standardizer {
            mean: i.f64s()?,
            scale: i.f64s()?,
        }),
        x => return Err(format_err(format!("bad standardizer flag {x}"))),
    };
    let model = match i.u8()? {
        0 => {
            let dim = i.len()?;
            let labels = i.usizes()?;
            let features = i.f64s()?;
            SavedModel::Knn(NearestNeighborModel {
                train: LabeledSet::new(dim, features, labels)?,
            })
        }
        1 => SavedModel::Lda(LdaModel {
            classes: i.usizes()?,
            means: i.rows()?,
            priors: i.f64s()?,
            shrinkage: i.f64()?,
            coef: i.rows()?,
            intercept: i.f64s()?,
            covariance: None,
        }),
        2 => {
            let scheme = match i.u8()? {
                0 => MulticlassScheme::OneVsRest,
                1 => MulticlassScheme::OneVsOne,
                x => return Err(format_err(format!("bad multiclass scheme {x}"))),
            };
            let classes = i.usizes()?;
            let weights = i.rows()?;
            let biases = i.f64s()?;
            let flat = i.usizes()?;
            let pairs = flat.chunks_exact(2).map(|p| (p[0], p[1])).collect();
            SavedModel::Svm(LinearSvmModel {
                scheme,
                classes,
                weights,
                biases,
                pairs,
                c: i.f64()?,
                gaps: i.f64s()?,
            })
        }
        x => return Err(format_err(format!("unknown model kind {x}"))),
    };
    Ok((standardizer, model))
}

pub fn save_model(
    path: impl AsRef<Path>,
    standardizer: Option<&Standardizer>,
    model: &SavedModel,
) -> Result<(), ClassifierError> {
    write_model(BufWriter::new(File::create(path)?), standardizer, model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Option<Standardizer>, SavedModel), ClassifierError> {
    read_model(BufReader::new(File::open(path)?))
}
