//! `XLCE` binary dataset files and the inspection CSV.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      4 bytes  "XLCE"
//! version    u32      = 1
//! M          u32
//! count      u32
//! snr_db     f32      NaN when the SNR varies per sample
//! count × { M × (re f32, im f32) of ĥ, then M × (re f32, im f32) of h }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{ChannelError, ComplexChannel};

pub const DATASET_MAGIC: [u8; 4] = *b"XLCE";
pub const DATASET_VERSION: u32 = 1;

/// One (LS estimate, ground truth) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub estimate: ComplexChannel,
    pub truth: ComplexChannel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub antennas: usize,
    /// Common SNR of every sample, or `None` when drawn per sample.
    pub snr_db: Option<f32>,
    pub samples: Vec<ChannelSample>,
}

impl ChannelDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Rounds every value to `f32`, the precision stored on disk.
    pub fn quantized(&self) -> ChannelDataset {
        let q = |c: &ComplexChannel| {
            ComplexChannel(
                c.as_slice()
                    .iter()
                    .map(|z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64))
                    .collect(),
            )
        };
        ChannelDataset {
            antennas: self.antennas,
            snr_db: self.snr_db,
            samples: self
                .samples
                .iter()
                .map(|s| ChannelSample {
                    estimate: q(&s.estimate),
                    truth: q(&s.truth),
                })
                .collect(),
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> ChannelError {
    let context = context.into();
    move |source| ChannelError::Io { context, source }
}

/// Serialises `ds` in the `XLCE` format.
pub fn write_dataset_to<W: Write>(ds: &ChannelDataset, mut w: W) -> Result<(), ChannelError> {
    let count = u32::try_from(ds.samples.len()).map_err(|_| ChannelError::Format("too many samples".into()))?;
    let m = u32::try_from(ds.antennas).map_err(|_| ChannelError::Format("antenna count overflows u32".into()))?;
    let mut buf = Vec::with_capacity(20 + ds.samples.len() * ds.antennas * 16);
    buf.extend_from_slice(&DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&m.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    buf.extend_from_slice(&ds.snr_db.unwrap_or(f32::NAN).to_le_bytes());
    for (i, s) in ds.samples.iter().enumerate() {
        for v in [&s.estimate, &s.truth] {
            if v.len() != ds.antennas {
                return Err(ChannelError::Format(format!(
                    "sample {i} has {} entries, dataset declares M = {}",
                    v.len(),
                    ds.antennas
                )));
            }
            for z in v.as_slice() {
                buf.extend_from_slice(&(z.re as f32).to_le_bytes());
                buf.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
        }
    }
    w.write_all(&buf).map_err(io_err("writing dataset"))
}

pub fn write_dataset(ds: &ChannelDataset, path: &Path) -> Result<(), ChannelError> {
    let ctx = format!("creating {}", path.display());
    let f = File::create(path).map_err(io_err(ctx))?;
    let mut w = BufWriter::new(f);
    write_dataset_to(ds, &mut w)?;
    w.flush().map_err(io_err(format!("writing {}", path.display())))
}

fn read_array<const N: usize, R: Read>(r: &mut R, what: &str) -> Result<[u8; N], ChannelError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(io_err(format!("reading {what}")))?;
    Ok(b)
}

/// Parses an `XLCE` stream.
pub fn read_dataset_from<R: Read>(mut r: R) -> Result<ChannelDataset, ChannelError> {
    let magic: [u8; 4] = read_array(&mut r, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(ChannelError::Format(format!("bad magic {magic:?}")));
    }
    let version = u32::from_le_bytes(read_array(&mut r, "version")?);
    if version != DATASET_VERSION {
        return Err(ChannelError::Format(format!("unsupported version {version}")));
    }
    let m = u32::from_le_bytes(read_array(&mut r, "M")?) as usize;
    let count = u32::from_le_bytes(read_array(&mut r, "sample count")?) as usize;
    let snr = f32::from_le_bytes(read_array(&mut r, "snr")?);
    let mut body = vec![0u8; m * 16];
    let mut samples = Vec::with_capacity(count);
    let decode = |bytes: &[u8]| {
        ComplexChannel(
            bytes
                .chunks_exact(8)
                .map(|c| {
                    let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                    let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                    Complex64::new(re as f64, im as f64)
                })
                .collect(),
        )
    };
    for i in 0..count {
        r.read_exact(&mut body).map_err(io_err(format!("reading sample {i} of {count}")))?;
        let (est, truth) = body.split_at(m * 8);
        samples.push(ChannelSample {
            estimate: decode(est),
            truth: decode(truth),
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io_err("checking for trailing bytes"))? != 0 {
        return Err(ChannelError::Format("trailing bytes after last sample".into()));
    }
    Ok(ChannelDataset {
        antennas: m,
        snr_db: (!snr.is_nan()).then_some(snr),
        samples,
    })
}

pub fn read_dataset(path: &Path) -> Result<ChannelDataset, ChannelError> {
    let f = File::open(path).map_err(io_err(format!("opening {}", path.display())))?;
    read_dataset_from(BufReader::new(f))
}

/// Writes `sample,antenna,re_h,im_h,re_hhat,im_hhat` rows.
pub fn write_channel_csv<W: Write>(ds: &ChannelDataset, mut w: W) -> Result<(), ChannelError> {
    let mut out = String::from("sample,antenna,re_h,im_h,re_hhat,im_hhat\n");
    for (i, s) in ds.samples.iter().enumerate() {
        for (a, (h, e)) in s.truth.as_slice().iter().zip(s.estimate.as_slice()).enumerate() {
            out.push_str(&format!("{i},{a},{},{},{},{}\n", h.re, h.im, e.re, e.im));
        }
    }
    w.write_all(out.as_bytes()).map_err(io_err("writing channel CSV"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ChannelDataset {
        let c = |a: f64| ComplexChannel(vec![Complex64::new(a, -a), Complex64::new(2.0 * a, 0.5)]);
        ChannelDataset {
            antennas: 2,
            snr_db: Some(10.0),
            samples: vec![
                ChannelSample {
                    estimate: c(1.0),
                    truth: c(0.25),
                },
                ChannelSample {
                    estimate: c(-3.0),
                    truth: c(0.75),
                },
            ],
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_dataset_to(&tiny(), &mut buf).unwrap();
        assert_eq!(&buf[..4], b"XLCE");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(buf[16..20].try_into().unwrap()), 10.0);
        assert_eq!(buf.len(), 20 + 2 * 2 * 2 * 8);
        // First value of sample 0 is Re(ĥ_0).
        assert_eq!(f32::from_le_bytes(buf[20..24].try_into().unwrap()), 1.0);
    }

    #[test]
    fn roundtrip_and_nan_snr() {
        let mut ds = tiny();
        ds.snr_db = None;
        let mut buf = Vec::new();
        write_dataset_to(&ds, &mut buf).unwrap();
        assert!(f32::from_le_bytes(buf[16..20].try_into().unwrap()).is_nan());
        assert_eq!(read_dataset_from(&buf[..]).unwrap(), ds);
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        write_dataset_to(&tiny(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'Y';
        assert!(read_dataset_from(&bad[..]).is_err());
        assert!(read_dataset_from(&buf[..buf.len() - 3]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_dataset_from(&long[..]).is_err());
    }

    #[test]
    fn csv_rows() {
        let mut out = Vec::new();
        write_channel_csv(&tiny(), &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "sample,antenna,re_h,im_h,re_hhat,im_hhat");
        assert_eq!(lines.len(), 1 + 4);
        assert_eq!(lines[1], "0,0,0.25,-0.25,1,-1");
    }
}
