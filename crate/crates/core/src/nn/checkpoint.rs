use std::io::{Read, Write};
use std::path::Path;

use super::{NnError, Parameterized, Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"XLNW";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One named tensor in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

/// Ordered collection of named f32 tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, dims: &[usize], data: Vec<f32>) {
        self.entries.push(CheckpointEntry {
            name: name.into(),
            dims: dims.to_vec(),
            data,
        });
    }

    pub fn get(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Snapshot of every tensor (trainable and buffer) of `model`.
    pub fn from_model<T: Scalar, P: Parameterized<T> + ?Sized>(model: &mut P) -> Self {
        let mut ck = Checkpoint::new();
        model.visit(&mut |name, t, _| {
            ck.push(name, t.shape(), t.data().iter().map(|v| v.as_f64() as f32).collect());
        });
        ck
    }

    /// Copies tensors into `model`. Every model tensor must be present with
    /// the same shape; extra entries are ignored.
    pub fn load_into<T: Scalar, P: Parameterized<T> + ?Sized>(&self, model: &mut P) -> Result<(), NnError> {
        let mut err = None;
        model.visit(&mut |name, t, _| {
            if err.is_some() {
                return;
            }
            match self.get(name) {
                None => err = Some(NnError::Checkpoint(format!("missing tensor {name}"))),
                Some(e) if e.dims != t.shape() => {
                    err = Some(NnError::Checkpoint(format!(
                        "tensor {name} has shape {:?}, model expects {:?}",
                        e.dims,
                        t.shape()
                    )))
                }
                Some(e) => {
                    for (d, &s) in t.data_mut().iter_mut().zip(&e.data) {
                        *d = T::of(s as f64);
                    }
                }
            }
        });
        err.map_or(Ok(()), Err)
    }

    /// Entry as a tensor of scalar type `T`.
    pub fn tensor<T: Scalar>(&self, name: &str) -> Option<Tensor<T>> {
        let e = self.get(name)?;
        Tensor::from_vec(&e.dims, e.data.iter().map(|&v| T::of(v as f64)).collect()).ok()
    }
}

fn io(context: &str) -> impl FnOnce(std::io::Error) -> NnError + '_ {
    move |source| NnError::Io {
        context: context.to_string(),
        source,
    }
}

pub fn write_checkpoint_to<W: Write>(ck: &Checkpoint, mut w: W) -> Result<(), NnError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(ck.entries.len() as u32).to_le_bytes());
    for e in &ck.entries {
        let name = e.name.as_bytes();
        let name_len = u16::try_from(name.len()).map_err(|_| NnError::Checkpoint(format!("name too long: {}", e.name)))?;
        if e.dims.len() > u8::MAX as usize {
            return Err(NnError::Checkpoint(format!("rank too large for {}", e.name)));
        }
        if e.dims.iter().product::<usize>() != e.data.len() {
            return Err(NnError::Checkpoint(format!("{} has dims {:?} but {} values", e.name, e.dims, e.data.len())));
        }
        buf.extend_from_slice(&name_len.to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(e.dims.len() as u8);
        for &d in &e.dims {
            let d = u32::try_from(d).map_err(|_| NnError::Checkpoint(format!("dimension too large in {}", e.name)))?;
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for &v in &e.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io("writing checkpoint"))
}

pub fn write_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), NnError> {
    let f = std::fs::File::create(path).map_err(io("creating checkpoint file"))?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint_to(ck, &mut w)?;
    w.flush().map_err(io("writing checkpoint"))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| NnError::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn read_checkpoint_from<R: Read>(mut r: R) -> Result<Checkpoint, NnError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(io("reading checkpoint"))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = c.u32()?;
    let mut ck = Checkpoint::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(c.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = c.take(1)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(c.u32()? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| NnError::Checkpoint(format!("dims of {name} overflow")))?;
        let bytes = c.take(n.checked_mul(4).ok_or_else(|| NnError::Checkpoint("size overflow".into()))?)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        ck.entries.push(CheckpointEntry { name, dims, data });
    }
    if c.pos != buf.len() {
        return Err(NnError::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(ck)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    let f = std::fs::File::open(path).map_err(io("opening checkpoint file"))?;
    read_checkpoint_from(std::io::BufReader::new(f))
}
