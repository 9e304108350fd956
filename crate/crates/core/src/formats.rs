//! Little-endian binary containers: passage series (`BRM1`), encoded images
//! (`BRMI`) and tensor checkpoints (`BRMC`).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mtf::EncodedSample;
use crate::nn::Tensor;
use crate::sim::ClassLabel;

pub const SERIES_MAGIC: &[u8; 4] = b"BRM1";
pub const IMAGES_MAGIC: &[u8; 4] = b"BRMI";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BRMC";
pub const VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("{}: truncated at byte {}", self.what, self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| self.overflow())?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.overflow())?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn overflow(&self) -> Error {
        Error::Format(format!("{}: length overflow", self.what))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::Format(format!("{}: bad magic", self.what)));
        }
        let version = self.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("{}: unsupported version {version}", self.what)));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn label_from_byte(b: u8, what: &str) -> Result<ClassLabel> {
    ClassLabel::from_index(b as usize).map_err(|_| Error::Format(format!("{what}: bad label {b}")))
}

fn header(out: &mut Vec<u8>, magic: &[u8; 4], count: usize) -> Result<()> {
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(count).map_err(|_| Error::invalid("too many records"))?;
    out.extend_from_slice(&count.to_le_bytes());
    Ok(())
}

/// One stored passage: label plus equally long accel and strain series.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRecord {
    pub label: ClassLabel,
    pub accel: Vec<f32>,
    pub strain: Vec<f32>,
}

pub fn write_series(records: &[SeriesRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    header(&mut out, SERIES_MAGIC, records.len())?;
    for r in records {
        if r.accel.len() != r.strain.len() {
            return Err(Error::invalid("accel and strain lengths differ"));
        }
        out.push(r.label.index() as u8);
        let len = u32::try_from(r.accel.len()).map_err(|_| Error::invalid("series too long"))?;
        out.extend_from_slice(&len.to_le_bytes());
        for v in r.accel.iter().chain(&r.strain) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_series(bytes: &[u8]) -> Result<Vec<SeriesRecord>> {
    let mut r = Reader::new(bytes, "series file");
    r.header(SERIES_MAGIC)?;
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let label = label_from_byte(r.u8()?, "series file")?;
        let len = r.u32()? as usize;
        let accel = r.f32s(len)?;
        let strain = r.f32s(len)?;
        out.push(SeriesRecord { label, accel, strain });
    }
    r.finish()?;
    Ok(out)
}

/// All samples must share one plane layout: `channels × size × size`.
pub fn write_images(size: usize, samples: &[EncodedSample]) -> Result<Vec<u8>> {
    let side = u16::try_from(size).map_err(|_| Error::invalid("image size exceeds u16"))?;
    let mut out = Vec::new();
    header(&mut out, IMAGES_MAGIC, samples.len())?;
    out.extend_from_slice(&side.to_le_bytes());
    let per_sample = samples.first().map_or(0, |s| s.planes.len());
    if per_sample % (size * size) != 0 {
        return Err(Error::invalid("planes are not a whole number of images"));
    }
    for s in samples {
        if s.planes.len() != per_sample {
            return Err(Error::invalid("samples have differing channel counts"));
        }
        out.push(s.label.index() as u8);
        for v in &s.planes {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageFile {
    pub size: usize,
    /// Planes per sample, recovered from the file length (0 when empty).
    pub channels: usize,
    pub samples: Vec<EncodedSample>,
}

pub fn read_images(bytes: &[u8]) -> Result<ImageFile> {
    let mut r = Reader::new(bytes, "image file");
    r.header(IMAGES_MAGIC)?;
    let count = r.u32()? as usize;
    let size = r.u16()? as usize;
    let body = bytes.len() - r.pos;
    let channels = if count == 0 {
        0
    } else {
        let plane_bytes = 4 * size * size;
        let per = body / count;
        if body % count != 0 || per == 0 || plane_bytes == 0 || (per - 1) % plane_bytes != 0 {
            return Err(Error::Format("image file: length inconsistent with header".into()));
        }
        (per - 1) / plane_bytes
    };
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let label = label_from_byte(r.u8()?, "image file")?;
        let planes = r.f32s(channels * size * size)?;
        samples.push(EncodedSample { label, planes });
    }
    r.finish()?;
    Ok(ImageFile {
        size,
        channels,
        samples,
    })
}

/// Named tensors in the given order.
pub fn write_checkpoint(tensors: &[(String, Tensor)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    header(&mut out, CHECKPOINT_MAGIC, tensors.len())?;
    for (name, t) in tensors {
        let name_len = u16::try_from(name.len()).map_err(|_| Error::invalid("tensor name too long"))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let rank = u8::try_from(t.dims.len()).map_err(|_| Error::invalid("tensor rank too high"))?;
        out.push(rank);
        for &d in &t.dims {
            let d = u32::try_from(d).map_err(|_| Error::invalid("tensor dim exceeds u32"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader::new(bytes, "checkpoint");
    r.header(CHECKPOINT_MAGIC)?;
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 12));
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Format("checkpoint: tensor name is not UTF-8".into()))?;
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("checkpoint: tensor too large".into()))?;
        let data = r.f64s(len)?;
        out.push((name, Tensor { dims, data }));
    }
    r.finish()?;
    Ok(out)
}

pub fn checkpoint_map(tensors: Vec<(String, Tensor)>) -> Result<BTreeMap<String, Tensor>> {
    let mut map = BTreeMap::new();
    for (name, t) in tensors {
        if map.insert(name.clone(), t).is_some() {
            return Err(Error::Format(format!("checkpoint: duplicate tensor `{name}`")));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_round_trip() {
        let records = vec![
            SeriesRecord {
                label: ClassLabel::Flat,
                accel: vec![1.5, -2.0, f32::MIN_POSITIVE],
                strain: vec![0.0, 3.25, -0.0],
            },
            SeriesRecord {
                label: ClassLabel::Healthy,
                accel: vec![],
                strain: vec![],
            },
        ];
        let bytes = write_series(&records).unwrap();
        assert_eq!(&bytes[..4], b"BRM1");
        assert_eq!(bytes.len(), 12 + (5 + 24) + 5);
        assert_eq!(read_series(&bytes).unwrap(), records);
        assert!(read_series(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read_series(&extra).is_err());
    }

    #[test]
    fn images_round_trip_and_channel_inference() {
        let samples: Vec<EncodedSample> = (0..3)
            .map(|i| EncodedSample {
                label: ClassLabel::from_index(i).unwrap(),
                planes: (0..2 * 16).map(|v| v as f32 * 0.1 + i as f32).collect(),
            })
            .collect();
        let bytes = write_images(4, &samples).unwrap();
        let file = read_images(&bytes).unwrap();
        assert_eq!((file.size, file.channels), (4, 2));
        assert_eq!(file.samples, samples);
        let empty = read_images(&write_images(4, &[]).unwrap()).unwrap();
        assert_eq!(empty.channels, 0);
        let mut bad = bytes.clone();
        bad[14] = 7;
        assert!(read_images(&bad).is_err());
    }

    #[test]
    fn checkpoint_bit_exact() {
        let tensors = vec![
            (
                "trunk.conv1.weight".to_string(),
                Tensor::from_vec(&[2, 1, 1, 2], vec![1e-300, -0.0, f64::MAX, 0.1]).unwrap(),
            ),
            ("head.3.bias".to_string(), Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap()),
        ];
        let bytes = write_checkpoint(&tensors).unwrap();
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        for ((n1, t1), (n2, t2)) in tensors.iter().zip(&back) {
            assert_eq!(n1, n2);
            assert_eq!(t1.dims, t2.dims);
            let b1: Vec<u64> = t1.data.iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u64> = t2.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
        assert_eq!(write_checkpoint(&back).unwrap(), bytes);
        assert!(checkpoint_map(vec![tensors[0].clone(), tensors[0].clone()]).is_err());
    }
}
