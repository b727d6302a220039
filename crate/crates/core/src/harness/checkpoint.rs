//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! "RPL1" | version u32 | digest [u8; 32] | count u32
//! count x ( name_len u16 | name | dtype u8 | ndim u8 | dims u64* | payload )
//! crc32 u32 over every preceding byte
//! ```
//!
//! dtype codes: 1 = u8, 2 = i64, 3 = f64.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RPL1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    U8(Vec<u8>),
    I64(Vec<i64>),
    F64(Vec<f64>),
}

impl ArrayData {
    fn code(&self) -> u8 {
        match self {
            ArrayData::U8(_) => 1,
            ArrayData::I64(_) => 2,
            ArrayData::F64(_) => 3,
        }
    }

    fn len(&self) -> usize {
        match self {
            ArrayData::U8(v) => v.len(),
            ArrayData::I64(v) => v.len(),
            ArrayData::F64(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: ArrayData,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: ArrayData) -> Result<Self> {
        let name = name.into();
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::contract(format!(
                "array {name}: dims {dims:?} do not match {} values",
                data.len()
            )));
        }
        if name.len() > u16::MAX as usize || dims.len() > u8::MAX as usize {
            return Err(Error::contract(format!("array {name} cannot be encoded")));
        }
        Ok(NamedArray { name, dims, data })
    }

    pub fn bytes(name: impl Into<String>, bytes: &[u8]) -> Self {
        NamedArray {
            name: name.into(),
            dims: vec![bytes.len()],
            data: ArrayData::U8(bytes.to_vec()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub digest: [u8; 32],
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new(digest: [u8; 32]) -> Self {
        Checkpoint {
            version: VERSION,
            digest,
            arrays: Vec::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.digest);
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u16).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.push(a.data.code());
            out.push(a.dims.len() as u8);
            for &d in &a.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match &a.data {
                ArrayData::U8(v) => out.extend_from_slice(v),
                ArrayData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 + 4 + 4 {
            return Err(Error::Format(format!("checkpoint too short ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!("bad checkpoint magic {:02x?}", &bytes[..4])));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("array name is not UTF-8".into()))?;
            let code = r.take(1)?[0];
            let ndim = r.take(1)?[0] as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(usize::try_from(r.u64()?).map_err(|_| Error::Format(format!("array {name}: dim overflow")))?);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("array {name}: size overflow")))?;
            let width = match code {
                1 => 1,
                2 | 3 => 8,
                other => return Err(Error::Format(format!("array {name}: unknown dtype code {other}"))),
            };
            let raw = r.take(n.checked_mul(width).ok_or_else(|| Error::Format(format!("array {name}: size overflow")))?)?;
            let data = match code {
                1 => ArrayData::U8(raw.to_vec()),
                2 => ArrayData::I64(raw.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().expect("8"))).collect()),
                _ => ArrayData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect()),
            };
            arrays.push(NamedArray { name, dims, data });
        }
        if r.pos != body.len() {
            return Err(Error::Format(format!("{} trailing bytes in checkpoint", body.len() - r.pos)));
        }
        Ok(Checkpoint {
            version,
            digest,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("checkpoint truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
