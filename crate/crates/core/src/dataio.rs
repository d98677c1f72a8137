//! Deterministic single-file dataset container and the canonical data
//! splits.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic "OADX" (4 bytes) | version u16 = 1 | header_len u32 |
//! header JSON (UTF-8)    | records back-to-back
//! ```
//!
//! The header describes, per dataset: name, dtype (`f32`/`u8`/`i64`), shape
//! `(N, …)`, compression (`none`/`deflate`), absolute file offsets of its N
//! records and their CRC32s (computed over the stored bytes), plus a flat
//! string-to-string metadata object. Each record is one sample's row-major
//! bytes, independently compressed, so random access decompresses exactly
//! one record. Records are stored back-to-back in header order; a record's
//! stored length is the gap to the next offset (or to the end of file).
//!
//! Byte output is a pure function of the logical content (no timestamps),
//! so rewriting identical inputs reproduces the file bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"OADX";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    U8,
    I64,
}

impl DType {
    pub fn element_size(&self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
            DType::I64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compression {
    None,
    Deflate,
}

/// Typed flat buffer backing one dataset or one record.
#[derive(Debug, Clone, PartialEq)]
pub enum DataBuf {
    F32(Vec<f32>),
    U8(Vec<u8>),
    I64(Vec<i64>),
}

impl DataBuf {
    pub fn dtype(&self) -> DType {
        match self {
            DataBuf::F32(_) => DType::F32,
            DataBuf::U8(_) => DType::U8,
            DataBuf::I64(_) => DType::I64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            DataBuf::F32(v) => v.len(),
            DataBuf::U8(v) => v.len(),
            DataBuf::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn slice_bytes(&self, start: usize, count: usize) -> Vec<u8> {
        match self {
            DataBuf::F32(v) => v[start..start + count]
                .iter()
                .flat_map(|x| x.to_le_bytes())
                .collect(),
            DataBuf::U8(v) => v[start..start + count].to_vec(),
            DataBuf::I64(v) => v[start..start + count]
                .iter()
                .flat_map(|x| x.to_le_bytes())
                .collect(),
        }
    }

    fn from_le_bytes(dtype: DType, bytes: &[u8]) -> Result<DataBuf> {
        let es = dtype.element_size();
        if !bytes.len().is_multiple_of(es) {
            return Err(Error::ContainerFormat(format!(
                "record byte length {} not a multiple of element size {es}",
                bytes.len()
            )));
        }
        Ok(match dtype {
            DType::F32 => DataBuf::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::U8 => DataBuf::U8(bytes.to_vec()),
            DType::I64 => DataBuf::I64(
                bytes
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        })
    }

    pub fn as_f32(&self) -> Result<&[f32]> {
        match self {
            DataBuf::F32(v) => Ok(v),
            other => Err(Error::ContainerFormat(format!(
                "expected f32 data, found {:?}",
                other.dtype()
            ))),
        }
    }

    pub fn as_u8(&self) -> Result<&[u8]> {
        match self {
            DataBuf::U8(v) => Ok(v),
            other => Err(Error::ContainerFormat(format!(
                "expected u8 data, found {:?}",
                other.dtype()
            ))),
        }
    }

    pub fn as_i64(&self) -> Result<&[i64]> {
        match self {
            DataBuf::I64(v) => Ok(v),
            other => Err(Error::ContainerFormat(format!(
                "expected i64 data, found {:?}",
                other.dtype()
            ))),
        }
    }
}

/// One complete in-memory dataset handed to [`write_container`].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    /// Full shape including the leading record count, e.g. (N, 256, 256).
    pub shape: Vec<usize>,
    pub compression: Compression,
    pub data: DataBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HeaderDataset {
    name: String,
    dtype: DType,
    shape: Vec<u64>,
    compression: Compression,
    record_offsets: Vec<u64>,
    record_crc32: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    datasets: Vec<HeaderDataset>,
    metadata: BTreeMap<String, String>,
}

const PREAMBLE_LEN: u64 = 4 + 2 + 4;

fn deflate(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut enc = DeflateEncoder::new(Vec::new(), flate2::Compression::new(6));
    enc.write_all(bytes)?;
    Ok(enc.finish()?)
}

fn inflate(bytes: &[u8], expected_len: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(expected_len);
    DeflateDecoder::new(bytes).read_to_end(&mut out)?;
    if out.len() != expected_len {
        return Err(Error::ContainerFormat(format!(
            "decompressed {} bytes, expected {expected_len}",
            out.len()
        )));
    }
    Ok(out)
}

/// Incremental writer: datasets are appended record by record, then
/// [`ContainerWriter::finish`] lays the file out and fsyncs it.
#[derive(Debug, Default)]
pub struct ContainerWriter {
    datasets: Vec<PendingDataset>,
}

#[derive(Debug)]
struct PendingDataset {
    name: String,
    dtype: DType,
    record_shape: Vec<usize>,
    compression: Compression,
    blobs: Vec<Vec<u8>>,
    crcs: Vec<u32>,
}

impl ContainerWriter {
    pub fn new() -> Self {
        ContainerWriter::default()
    }

    /// Start a dataset; records are appended to the most recently begun one.
    pub fn begin_dataset(
        &mut self,
        name: &str,
        dtype: DType,
        record_shape: &[usize],
        compression: Compression,
    ) -> Result<()> {
        if name.is_empty() {
            return Err(Error::invalid("dataset name must not be empty"));
        }
        if self.datasets.iter().any(|d| d.name == name) {
            return Err(Error::invalid(format!("duplicate dataset name '{name}'")));
        }
        if record_shape.iter().product::<usize>() == 0 {
            return Err(Error::invalid("record shape must have nonzero volume"));
        }
        self.datasets.push(PendingDataset {
            name: name.to_string(),
            dtype,
            record_shape: record_shape.to_vec(),
            compression,
            blobs: Vec::new(),
            crcs: Vec::new(),
        });
        Ok(())
    }

    /// Append to the most recently begun dataset.
    pub fn append_record(&mut self, record: &DataBuf) -> Result<()> {
        let ds = self
            .datasets
            .last_mut()
            .ok_or_else(|| Error::invalid("append_record before begin_dataset"))?;
        Self::push_record(ds, record)
    }

    /// Append to a dataset by name; datasets may be filled in any
    /// interleaving, the file layout follows `begin_dataset` order.
    pub fn append_record_to(&mut self, name: &str, record: &DataBuf) -> Result<()> {
        let ds = self
            .datasets
            .iter_mut()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::invalid(format!("no dataset '{name}' begun")))?;
        Self::push_record(ds, record)
    }

    fn push_record(ds: &mut PendingDataset, record: &DataBuf) -> Result<()> {
        if record.dtype() != ds.dtype {
            return Err(Error::invalid(format!(
                "record dtype {:?} does not match dataset '{}' dtype {:?}",
                record.dtype(),
                ds.name,
                ds.dtype
            )));
        }
        let expect: usize = ds.record_shape.iter().product();
        if record.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "record has {} elements, dataset '{}' expects {expect}",
                record.len(),
                ds.name
            )));
        }
        let raw = record.slice_bytes(0, record.len());
        let blob = match ds.compression {
            Compression::None => raw,
            Compression::Deflate => deflate(&raw)?,
        };
        ds.crcs.push(crc32fast::hash(&blob));
        ds.blobs.push(blob);
        Ok(())
    }

    /// Write the container. Offsets are absolute file positions, which
    /// depend on the header length, which depends on the offsets' printed
    /// widths; the layout is iterated to a fixed point.
    pub fn finish<P: AsRef<Path>>(
        self,
        path: P,
        metadata: &BTreeMap<String, String>,
    ) -> Result<()> {
        let mut header = Header {
            datasets: self
                .datasets
                .iter()
                .map(|d| {
                    let mut shape = vec![d.blobs.len() as u64];
                    shape.extend(d.record_shape.iter().map(|&s| s as u64));
                    HeaderDataset {
                        name: d.name.clone(),
                        dtype: d.dtype,
                        shape,
                        compression: d.compression,
                        record_offsets: vec![0; d.blobs.len()],
                        record_crc32: d.crcs.clone(),
                    }
                })
                .collect(),
            metadata: metadata.clone(),
        };

        let assign_offsets = |header: &mut Header, base: u64| {
            let mut cursor = base;
            for (hd, pd) in header.datasets.iter_mut().zip(self.datasets.iter()) {
                for (off, blob) in hd.record_offsets.iter_mut().zip(pd.blobs.iter()) {
                    *off = cursor;
                    cursor += blob.len() as u64;
                }
            }
        };

        let mut header_json = serde_json::to_vec(&header)?;
        for _ in 0..64 {
            assign_offsets(&mut header, PREAMBLE_LEN + header_json.len() as u64);
            let next = serde_json::to_vec(&header)?;
            let stable = next.len() == header_json.len();
            header_json = next;
            if stable {
                break;
            }
        }
        // The written offsets must agree with the final header length.
        assign_offsets(&mut header, PREAMBLE_LEN + header_json.len() as u64);
        if serde_json::to_vec(&header)? != header_json {
            return Err(Error::ContainerFormat(
                "header layout did not reach a fixed point".into(),
            ));
        }

        let mut file = File::create(path)?;
        file.write_all(MAGIC)?;
        file.write_all(&FORMAT_VERSION.to_le_bytes())?;
        file.write_all(&(header_json.len() as u32).to_le_bytes())?;
        file.write_all(&header_json)?;
        for d in &self.datasets {
            for blob in &d.blobs {
                file.write_all(blob)?;
            }
        }
        file.sync_all()?;
        Ok(())
    }
}

/// Write complete in-memory datasets in one call.
pub fn write_container<P: AsRef<Path>>(
    path: P,
    datasets: &[Dataset],
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    let mut writer = ContainerWriter::new();
    for ds in datasets {
        if ds.shape.is_empty() {
            return Err(Error::invalid(format!(
                "dataset '{}' needs a shape with a leading record count",
                ds.name
            )));
        }
        let n = ds.shape[0];
        let record_shape = &ds.shape[1..];
        let record_len: usize = record_shape.iter().product();
        if ds.data.len() != n * record_len {
            return Err(Error::ShapeMismatch(format!(
                "dataset '{}': {} elements vs shape {:?}",
                ds.name,
                ds.data.len(),
                ds.shape
            )));
        }
        writer.begin_dataset(&ds.name, ds.data.dtype(), record_shape, ds.compression)?;
        for i in 0..n {
            let rec = match &ds.data {
                DataBuf::F32(v) => DataBuf::F32(v[i * record_len..(i + 1) * record_len].to_vec()),
                DataBuf::U8(v) => DataBuf::U8(v[i * record_len..(i + 1) * record_len].to_vec()),
                DataBuf::I64(v) => DataBuf::I64(v[i * record_len..(i + 1) * record_len].to_vec()),
            };
            writer.append_record(&rec)?;
        }
    }
    writer.finish(path, metadata)
}

/// Public view of one dataset's header entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetInfo {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub compression: Compression,
}

impl DatasetInfo {
    pub fn n_records(&self) -> usize {
        self.shape[0]
    }

    pub fn record_shape(&self) -> &[usize] {
        &self.shape[1..]
    }

    pub fn record_elements(&self) -> usize {
        self.record_shape().iter().product()
    }
}

/// Reader over any `Read + Seek` source. Opening parses the header; each
/// [`Container::read_record`] call then performs one seek and reads exactly
/// that record's stored bytes.
pub struct Container<R> {
    reader: R,
    header: Header,
    /// Sorted offsets of every record plus the file end, for span lookup.
    boundaries: Vec<u64>,
    file_len: u64,
}

impl Container<BufReader<File>> {
    pub fn open<P: AsRef<Path>>(path: P) -> Result<Self> {
        Container::from_reader(BufReader::new(File::open(path)?))
    }
}

impl<R: Read + Seek> Container<R> {
    pub fn from_reader(mut reader: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ContainerFormat(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let mut version = [0u8; 2];
        reader.read_exact(&mut version)?;
        let version = u16::from_le_bytes(version);
        if version != FORMAT_VERSION {
            return Err(Error::ContainerFormat(format!(
                "unsupported format version {version}"
            )));
        }
        let mut header_len = [0u8; 4];
        reader.read_exact(&mut header_len)?;
        let header_len = u32::from_le_bytes(header_len) as usize;
        let mut header_bytes = vec![0u8; header_len];
        reader.read_exact(&mut header_bytes)?;
        let header: Header = serde_json::from_slice(&header_bytes)?;

        let file_len = reader.seek(SeekFrom::End(0))?;
        let mut boundaries: Vec<u64> = header
            .datasets
            .iter()
            .flat_map(|d| d.record_offsets.iter().copied())
            .collect();
        boundaries.push(file_len);
        boundaries.sort_unstable();

        for d in &header.datasets {
            if d.shape.is_empty() || d.shape[0] as usize != d.record_offsets.len() {
                return Err(Error::ContainerFormat(format!(
                    "dataset '{}' offsets do not match its shape",
                    d.name
                )));
            }
            if d.record_crc32.len() != d.record_offsets.len() {
                return Err(Error::ContainerFormat(format!(
                    "dataset '{}' CRC count does not match its record count",
                    d.name
                )));
            }
        }

        Ok(Container {
            reader,
            header,
            boundaries,
            file_len,
        })
    }

    pub fn dataset_names(&self) -> Vec<&str> {
        self.header
            .datasets
            .iter()
            .map(|d| d.name.as_str())
            .collect()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.header.metadata
    }

    pub fn dataset_info(&self, name: &str) -> Result<DatasetInfo> {
        let d = self.find(name)?;
        Ok(DatasetInfo {
            name: d.name.clone(),
            dtype: d.dtype,
            shape: d.shape.iter().map(|&s| s as usize).collect(),
            compression: d.compression,
        })
    }

    fn find(&self, name: &str) -> Result<&HeaderDataset> {
        self.header
            .datasets
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::ContainerFormat(format!("no dataset named '{name}'")))
    }

    /// Absolute offset and stored byte length of one record.
    pub fn record_location(&self, name: &str, index: usize) -> Result<(u64, u64)> {
        let d = self.find(name)?;
        if index >= d.record_offsets.len() {
            return Err(Error::invalid(format!(
                "record index {index} out of range for dataset '{name}' with {} records",
                d.record_offsets.len()
            )));
        }
        let offset = d.record_offsets[index];
        let next = match self.boundaries.binary_search(&offset) {
            Ok(i) => self.boundaries.get(i + 1).copied().unwrap_or(self.file_len),
            Err(_) => {
                return Err(Error::ContainerFormat(format!(
                    "offset {offset} missing from layout"
                )))
            }
        };
        Ok((offset, next - offset))
    }

    /// Read one record: one seek plus exactly that record's stored bytes,
    /// CRC-checked and decompressed.
    pub fn read_record(&mut self, name: &str, index: usize) -> Result<DataBuf> {
        let (offset, len) = self.record_location(name, index)?;
        let d = self.find(name)?;
        let dtype = d.dtype;
        let compression = d.compression;
        let crc = d.record_crc32[index];
        let record_elements: usize = d.shape[1..].iter().map(|&s| s as usize).product();
        let raw_len = record_elements * dtype.element_size();

        let mut blob = vec![0u8; len as usize];
        self.reader.seek(SeekFrom::Start(offset))?;
        self.reader.read_exact(&mut blob)?;
        if crc32fast::hash(&blob) != crc {
            return Err(Error::ChecksumMismatch {
                dataset: name.to_string(),
                index,
            });
        }
        let bytes = match compression {
            Compression::None => blob,
            Compression::Deflate => inflate(&blob, raw_len)?,
        };
        if bytes.len() != raw_len {
            return Err(Error::ContainerFormat(format!(
                "record {index} of '{name}' has {} bytes, expected {raw_len}",
                bytes.len()
            )));
        }
        DataBuf::from_le_bytes(dtype, &bytes)
    }

    /// Read and concatenate all records of a dataset.
    pub fn read_all(&mut self, name: &str) -> Result<(DataBuf, Vec<usize>)> {
        let info = self.dataset_info(name)?;
        let mut out: Option<DataBuf> = None;
        for i in 0..info.n_records() {
            let rec = self.read_record(name, i)?;
            out = Some(match (out, rec) {
                (None, r) => r,
                (Some(DataBuf::F32(mut acc)), DataBuf::F32(r)) => {
                    acc.extend_from_slice(&r);
                    DataBuf::F32(acc)
                }
                (Some(DataBuf::U8(mut acc)), DataBuf::U8(r)) => {
                    acc.extend_from_slice(&r);
                    DataBuf::U8(acc)
                }
                (Some(DataBuf::I64(mut acc)), DataBuf::I64(r)) => {
                    acc.extend_from_slice(&r);
                    DataBuf::I64(acc)
                }
                _ => unreachable!("records of one dataset share a dtype"),
            });
        }
        let data = out.unwrap_or(match info.dtype {
            DType::F32 => DataBuf::F32(Vec::new()),
            DType::U8 => DataBuf::U8(Vec::new()),
            DType::I64 => DataBuf::I64(Vec::new()),
        });
        Ok((data, info.shape))
    }
}

/// Convenience single-record read.
pub fn read_record<P: AsRef<Path>>(path: P, dataset: &str, index: usize) -> Result<DataBuf> {
    Container::open(path)?.read_record(dataset, index)
}

// ---------------------------------------------------------------------------
// Canonical data splits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    /// Volunteer-ID split of the multispectral forearm acquisitions.
    Msfd,
    /// Volunteer-ID split of the single-wavelength forearm acquisitions.
    Swfd,
    /// Index split of the 20 000 simulated slices.
    Scd,
    /// Index split of the 100-sample mini subsets.
    Mini,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msfd" => Ok(SplitKind::Msfd),
            "swfd" => Ok(SplitKind::Swfd),
            "scd" => Ok(SplitKind::Scd),
            "mini" => Ok(SplitKind::Mini),
            other => Err(Error::invalid(format!("unknown split kind '{other}'"))),
        }
    }
}

/// The population a split is defined over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Population {
    VolunteerIds(Vec<u64>),
    SliceCount(u64),
}

/// Disjoint train/val/test sets covering the population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

pub const MSFD_VOLUNTEERS: [u64; 9] = [2, 5, 6, 7, 9, 10, 11, 14, 15];
pub const SWFD_VOLUNTEERS: [u64; 14] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14];
pub const SCD_SLICES: u64 = 20_000;
pub const MINI_SLICES: u64 = 100;

/// Build the canonical split for a dataset kind. The population must match
/// the kind exactly: the right volunteer-ID set for the experimental
/// layouts, 20 000 slices for the simulated set, 100 for the mini subsets.
pub fn make_split(kind: SplitKind, population: &Population) -> Result<SplitSpec> {
    let ids_match = |ids: &[u64], expect: &[u64]| -> bool {
        let a: BTreeSet<u64> = ids.iter().copied().collect();
        let b: BTreeSet<u64> = expect.iter().copied().collect();
        a == b
    };
    match (kind, population) {
        (SplitKind::Msfd, Population::VolunteerIds(ids)) => {
            if !ids_match(ids, &MSFD_VOLUNTEERS) {
                return Err(Error::invalid(format!(
                    "msfd split expects volunteer IDs {MSFD_VOLUNTEERS:?}, got {ids:?}"
                )));
            }
            Ok(SplitSpec {
                kind,
                train: vec![2, 5, 6, 7, 9],
                val: vec![10],
                test: vec![11, 14, 15],
            })
        }
        (SplitKind::Swfd, Population::VolunteerIds(ids)) => {
            if !ids_match(ids, &SWFD_VOLUNTEERS) {
                return Err(Error::invalid(format!(
                    "swfd split expects volunteer IDs {SWFD_VOLUNTEERS:?}, got {ids:?}"
                )));
            }
            Ok(SplitSpec {
                kind,
                train: (1..=8).collect(),
                val: vec![9],
                test: (10..=14).collect(),
            })
        }
        (SplitKind::Scd, Population::SliceCount(n)) => {
            if *n != SCD_SLICES {
                return Err(Error::invalid(format!(
                    "scd split is defined over {SCD_SLICES} slices, got {n}"
                )));
            }
            Ok(SplitSpec {
                kind,
                train: (0..14_000).collect(),
                val: (14_000..15_000).collect(),
                test: (15_000..20_000).collect(),
            })
        }
        (SplitKind::Mini, Population::SliceCount(n)) => {
            if *n != MINI_SLICES {
                return Err(Error::invalid(format!(
                    "mini split is defined over {MINI_SLICES} samples, got {n}"
                )));
            }
            Ok(SplitSpec {
                kind,
                train: (0..75).collect(),
                val: (75..80).collect(),
                test: (80..100).collect(),
            })
        }
        (kind, pop) => Err(Error::invalid(format!(
            "population {pop:?} does not match split kind {kind:?}"
        ))),
    }
}

impl SplitSpec {
    /// Disjointness and coverage over the population it was built from.
    pub fn verify(&self, population: &Population) -> Result<()> {
        let mut all: Vec<u64> = self
            .train
            .iter()
            .chain(self.val.iter())
            .chain(self.test.iter())
            .copied()
            .collect();
        let total = all.len();
        all.sort_unstable();
        all.dedup();
        if all.len() != total {
            return Err(Error::invalid("split sets overlap"));
        }
        let expected: Vec<u64> = match population {
            Population::VolunteerIds(ids) => {
                let mut v = ids.clone();
                v.sort_unstable();
                v
            }
            Population::SliceCount(n) => (0..*n).collect(),
        };
        if all != expected {
            return Err(Error::invalid("split does not cover the population"));
        }
        Ok(())
    }
}
