//! Dataset generation and the `CPAD` file format.
//!
//! ```text
//! "CPAD" | version u8 | header_len u32 | header (JSON)
//! per record: record_len u64 | meta_len u32 | meta (JSON)
//!             | value_count u32 | value_count × f32 (frames × bins × 3, channel-last)
//!             | intent one-hot 3 × u8 | rho f64
//! "CPAX" | record_count u64 | record_count × offset u64 | index_offset u64
//! ```
//!
//! Little-endian throughout. Offsets point at each record's `record_len`;
//! the final `u64` points at `"CPAX"` so a reader can seek to any record.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{CpaError, Result};
use crate::features::{feature_tensor, ChannelRanges, FeatureConfig, CHANNELS};
use crate::nn::TrainingSet;
use crate::seed::derive_seed;
use crate::signal::FrameConfig;
use crate::threat::{generate, ParameterSets, ThreatKind, ThreatScenario};

pub const MAGIC: &[u8; 4] = b"CPAD";
pub const INDEX_MAGIC: &[u8; 4] = b"CPAX";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub seed: u64,
    pub per_kind: usize,
    pub frame: FrameConfig,
    pub features: FeatureConfig,
    pub parameters: ParameterSets,
    pub frames: usize,
    pub bins: usize,
    pub channels: usize,
}

impl DatasetHeader {
    pub fn new(seed: u64, per_kind: usize, frame: FrameConfig, features: FeatureConfig, parameters: ParameterSets) -> Self {
        DatasetHeader {
            seed,
            per_kind,
            frame,
            features,
            parameters,
            frames: frame.n_symbols,
            bins: frame.n_subcarriers,
            channels: CHANNELS,
        }
    }

    pub fn sample_len(&self) -> usize {
        self.frames * self.bins * self.channels
    }

    pub fn len(&self) -> usize {
        self.per_kind * ThreatKind::ALL.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub index: u64,
    pub seed: u64,
    pub raw_ber: f64,
    pub legit_rx_power_dbw: f64,
    pub adversary_rx_power_dbw: Option<f64>,
    pub ranges: ChannelRanges,
    pub scenario: ThreatScenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub meta: RecordMeta,
    /// Normalized features, channel-last.
    pub features: Vec<f32>,
    pub kind: ThreatKind,
    pub rho: f64,
}

impl DatasetRecord {
    /// Channel-first `f64` copy for the network, optionally moved onto a
    /// shared per-channel range.
    pub fn to_chw(&self, frames: usize, bins: usize, shared: Option<&ChannelRanges>) -> Vec<f64> {
        let plane = frames * bins;
        let mut out = vec![0.0; plane * CHANNELS];
        for (p, px) in self.features.chunks_exact(CHANNELS).enumerate() {
            for c in 0..CHANNELS {
                let v = f64::from(px[c]);
                out[c * plane + p] = match shared {
                    Some(r) => r.rescale(v, c, &self.meta.ranges),
                    None => v,
                };
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<DatasetRecord>,
}

/// Kind of the `index`-th sample; kinds cycle so each appears `per_kind` times.
pub fn kind_at(index: usize) -> ThreatKind {
    ThreatKind::ALL[index % ThreatKind::ALL.len()]
}

pub fn make_record(header: &DatasetHeader, index: usize) -> Result<DatasetRecord> {
    let seed = derive_seed(header.seed, index as u64);
    let kind = kind_at(index);
    let scenario = header.parameters.sample_scenario(kind, header.frame, seed);
    let sample = generate(&scenario, seed).map_err(|e| CpaError::SampleInvariant {
        index,
        reason: e.to_string(),
    })?;
    let fail = |reason: &str| CpaError::SampleInvariant { index, reason: reason.into() };
    if !sample.received.is_finite() {
        return Err(fail("received series has non-finite samples"));
    }
    if !sample.rho.is_finite() || sample.rho > 0.0 {
        return Err(fail("capability label out of range"));
    }
    let (tensor, ranges) = feature_tensor(&sample.received, &header.frame, &header.features)
        .map_err(|e| fail(&e.to_string()))?;
    if tensor.data().iter().any(|v| !v.is_finite()) {
        return Err(fail("feature tensor has non-finite values"));
    }
    Ok(DatasetRecord {
        meta: RecordMeta {
            index: index as u64,
            seed,
            raw_ber: sample.raw_ber,
            legit_rx_power_dbw: sample.metadata.legit_rx_power_dbw,
            adversary_rx_power_dbw: sample.metadata.adversary_rx_power_dbw,
            ranges,
            scenario: sample.metadata.scenario,
        },
        features: tensor.data().iter().map(|&v| v as f32).collect(),
        kind,
        rho: sample.rho,
    })
}

/// Generates every record; samples are independent, so the result does not
/// depend on `threads`.
pub fn build_dataset(header: DatasetHeader, threads: usize) -> Result<Dataset> {
    header.frame.validate()?;
    header.parameters.validate()?;
    if header.is_empty() {
        return Err(CpaError::EmptyDataset);
    }
    let n = header.len();
    let threads = threads.clamp(1, n);
    let chunk = n.div_ceil(threads);
    let parts: Vec<Result<Vec<DatasetRecord>>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let header = &header;
                scope.spawn(move || {
                    (t * chunk..((t + 1) * chunk).min(n))
                        .map(|i| make_record(header, i))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("generator thread panicked")).collect()
    });
    let mut records = Vec::with_capacity(n);
    for part in parts {
        records.extend(part?);
    }
    Ok(Dataset { header, records })
}

pub fn default_threads() -> usize {
    thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn encode_record(r: &DatasetRecord) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&r.meta)?;
    let mut out = Vec::with_capacity(meta.len() + r.features.len() * 4 + 32);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(r.features.len() as u32).to_le_bytes());
    for v in &r.features {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&r.kind.one_hot());
    out.extend_from_slice(&r.rho.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CpaError::Format("record truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn decode_record(bytes: &[u8], sample_len: usize) -> Result<DatasetRecord> {
    let mut c = Cursor { bytes, pos: 0 };
    let meta_len = c.u32()? as usize;
    let meta: RecordMeta = serde_json::from_slice(c.take(meta_len)?)?;
    let count = c.u32()? as usize;
    if count != sample_len {
        return Err(CpaError::Format(format!("record has {count} values, header says {sample_len}")));
    }
    let features = c
        .take(count * 4)?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    let kind = ThreatKind::from_one_hot(c.take(3)?)?;
    let rho = f64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    if c.pos != bytes.len() {
        return Err(CpaError::Format("trailing bytes in record".into()));
    }
    Ok(DatasetRecord { meta, features, kind, rho })
}

fn read_array<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_header<R: Read>(r: &mut R) -> Result<DatasetHeader> {
    if &read_array::<4, _>(r)? != MAGIC {
        return Err(CpaError::Format("not a dataset file (bad magic)".into()));
    }
    let version = read_array::<1, _>(r)?[0];
    if version != VERSION {
        return Err(CpaError::Format(format!("unsupported dataset version {version}")));
    }
    let len = u32::from_le_bytes(read_array(r)?) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    Ok(serde_json::from_slice(&json)?)
}

impl Dataset {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        let mut offset = (4 + 1 + 4 + header.len()) as u64;
        let mut offsets = Vec::with_capacity(self.records.len());
        for r in &self.records {
            let body = encode_record(r)?;
            offsets.push(offset);
            w.write_all(&(body.len() as u64).to_le_bytes())?;
            w.write_all(&body)?;
            offset += 8 + body.len() as u64;
        }
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&(offsets.len() as u64).to_le_bytes())?;
        for o in &offsets {
            w.write_all(&o.to_le_bytes())?;
        }
        w.write_all(&offset.to_le_bytes())?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    /// Sequential read of a whole file image.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let header = read_header(r)?;
        let sample_len = header.sample_len();
        let mut records = Vec::new();
        loop {
            let tag = read_array::<4, _>(r)?;
            if &tag == INDEX_MAGIC {
                break;
            }
            let mut len_bytes = [0u8; 8];
            len_bytes[..4].copy_from_slice(&tag);
            r.read_exact(&mut len_bytes[4..])?;
            let len = u64::from_le_bytes(len_bytes) as usize;
            if len > (1 << 31) {
                return Err(CpaError::Format(format!("implausible record length {len}")));
            }
            let mut body = vec![0u8; len];
            r.read_exact(&mut body)?;
            records.push(decode_record(&body, sample_len)?);
        }
        let count = u64::from_le_bytes(read_array(r)?) as usize;
        if count != records.len() {
            return Err(CpaError::Format(format!("index lists {count} records, found {}", records.len())));
        }
        Ok(Dataset { header, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Dataset::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Channel-first inputs for every record, concatenated.
    pub fn inputs(&self, shared: Option<&ChannelRanges>) -> Vec<f64> {
        self.records
            .iter()
            .flat_map(|r| r.to_chw(self.header.frames, self.header.bins, shared))
            .collect()
    }

    /// Range covering the raw features of every record.
    pub fn shared_ranges(&self) -> Option<ChannelRanges> {
        ChannelRanges::cover(self.records.iter().map(|r| &r.meta.ranges))
    }

    pub fn training_set(&self, shared: Option<&ChannelRanges>) -> Result<TrainingSet> {
        if self.is_empty() {
            return Err(CpaError::EmptyDataset);
        }
        Ok(TrainingSet {
            channels: self.header.channels,
            height: self.header.frames,
            width: self.header.bins,
            inputs: self.inputs(shared),
            kinds: self.records.iter().map(|r| r.kind).collect(),
            rho: self.records.iter().map(|r| r.rho).collect(),
        })
    }
}

/// Random access to the records of a dataset file through its index.
pub struct DatasetReader {
    file: BufReader<File>,
    pub header: DatasetHeader,
    offsets: Vec<u64>,
}

impl DatasetReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = BufReader::new(File::open(path)?);
        let header = read_header(&mut file)?;
        file.seek(SeekFrom::End(-8))?;
        let index_at = u64::from_le_bytes(read_array(&mut file)?);
        file.seek(SeekFrom::Start(index_at))?;
        if &read_array::<4, _>(&mut file)? != INDEX_MAGIC {
            return Err(CpaError::Format("index footer missing".into()));
        }
        let count = u64::from_le_bytes(read_array(&mut file)?) as usize;
        let offsets = (0..count)
            .map(|_| Ok(u64::from_le_bytes(read_array(&mut file)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DatasetReader { file, header, offsets })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn record(&mut self, i: usize) -> Result<DatasetRecord> {
        let offset = *self
            .offsets
            .get(i)
            .ok_or_else(|| CpaError::Format(format!("record {i} out of range")))?;
        self.file.seek(SeekFrom::Start(offset))?;
        let len = u64::from_le_bytes(read_array(&mut self.file)?) as usize;
        let mut body = vec![0u8; len];
        self.file.read_exact(&mut body)?;
        decode_record(&body, self.header.sample_len())
    }
}
