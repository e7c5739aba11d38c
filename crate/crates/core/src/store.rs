//! Binary feature store.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "DSMF" | version: u16 | H: u32 | W: u32 | C: u32 | N: u32
//! N x ( id: u32 | H*W*C x f32 )
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::featex::FeatureVolume;

pub const STORE_MAGIC: &[u8; 4] = b"DSMF";
pub const STORE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 4;

#[derive(Debug, Clone, PartialEq)]
pub struct StoreRecord {
    pub id: u32,
    pub volume: FeatureVolume,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    pub dims: (usize, usize, usize),
    pub records: Vec<StoreRecord>,
}

impl FeatureStore {
    pub fn new(dims: (usize, usize, usize)) -> Self {
        Self {
            dims,
            records: Vec::new(),
        }
    }

    pub fn from_records(records: Vec<StoreRecord>) -> Result<Self> {
        let dims = records.first().map(|r| r.volume.dims()).ok_or_else(|| {
            Error::Validation("cannot infer dims from an empty record list".into())
        })?;
        let mut store = Self::new(dims);
        for r in records {
            store.push(r.id, r.volume)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, id: u32, volume: FeatureVolume) -> Result<()> {
        if volume.dims() != self.dims {
            return Err(Error::Dimension(format!(
                "record {id} has dims {:?}, store holds {:?}",
                volume.dims(),
                self.dims
            )));
        }
        self.records.push(StoreRecord { id, volume });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&FeatureVolume> {
        self.records.iter().find(|r| r.id == id).map(|r| &r.volume)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (h, w, c) = self.dims;
        let mut out = Vec::with_capacity(HEADER_LEN + self.records.len() * (4 + 4 * h * w * c));
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        for d in [h, w, c, self.records.len()] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for r in &self.records {
            out.extend_from_slice(&r.id.to_le_bytes());
            for v in r.volume.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "store header needs {HEADER_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        if &bytes[..4] != STORE_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"DSMF\"",
                String::from_utf8_lossy(&bytes[..4])
            )));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != STORE_VERSION {
            return Err(Error::Format(format!(
                "unsupported store version {version}"
            )));
        }
        let u32_at =
            |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        let (h, w, c, n) = (u32_at(6), u32_at(10), u32_at(14), u32_at(18));
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Format(format!(
                "store dims {h}x{w}x{c} must be positive"
            )));
        }
        let per_record = 4 + 4 * h * w * c;
        let expected = HEADER_LEN + n * per_record;
        if bytes.len() != expected {
            return Err(Error::Length(format!(
                "store declares {n} records of {h}x{w}x{c} ({expected} bytes), file has {} bytes",
                bytes.len()
            )));
        }
        let mut store = Self::new((h, w, c));
        store.records.reserve(n);
        for rec in bytes[HEADER_LEN..].chunks_exact(per_record) {
            let id = u32::from_le_bytes(rec[..4].try_into().unwrap());
            let data = rec[4..]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let volume = FeatureVolume::new(h, w, c, data)
                .map_err(|e| Error::Format(format!("record {id}: {e}")))?;
            store.records.push(StoreRecord { id, volume });
        }
        Ok(store)
    }
}

pub fn write_store(store: &FeatureStore, path: impl AsRef<Path>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&store.to_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn read_store(path: impl AsRef<Path>) -> Result<FeatureStore> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    FeatureStore::from_bytes(&bytes)
}
