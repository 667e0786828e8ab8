//! Fingerprint grids, train/validation/test splits and global input
//! standardization.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::channel::RoomScene;
use crate::error::{Error, Result};
use crate::signal::Supervector;

mod field;

pub use field::{FingerprintField, SampleSet, Sampling};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Lattice pitch, m.
    pub spacing: f64,
    /// Inset from every wall, m.
    pub margin: f64,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { spacing: 0.02, margin: 0.0, seed: 0 }
    }
}

fn lattice_count(extent: f64, margin: f64, spacing: f64) -> usize {
    ((extent - 2.0 * margin) / spacing + 1.0 + 1e-9).floor() as usize
}

/// Regular lattice of transmitter positions covering the room footprint,
/// row-major in `y` then `x`.
pub fn generate_grid(scene: &RoomScene, grid: &GridSpec) -> Result<Vec<[f64; 2]>> {
    if !(grid.spacing > 0.0) {
        return Err(Error::invalid("grid", "spacing must be positive"));
    }
    if !(grid.margin >= 0.0) || grid.margin >= scene.length.min(scene.width) / 2.0 {
        return Err(Error::EmptyGrid(format!(
            "margin {} leaves no room inside a {}×{} m footprint",
            grid.margin, scene.length, scene.width
        )));
    }
    let nx = lattice_count(scene.length, grid.margin, grid.spacing);
    let ny = lattice_count(scene.width, grid.margin, grid.spacing);
    if nx == 0 || ny == 0 {
        return Err(Error::EmptyGrid("no lattice points".into()));
    }
    let x0 = -scene.length / 2.0 + grid.margin;
    let y0 = -scene.width / 2.0 + grid.margin;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push([x0 + i as f64 * grid.spacing, y0 + j as f64 * grid.spacing]);
        }
    }
    Ok(out)
}

/// A fingerprint input and its ground-truth position in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintRecord {
    pub features: Vec<f64>,
    pub label: [f64; 2],
}

impl From<Supervector> for FingerprintRecord {
    fn from(s: Supervector) -> Self {
        FingerprintRecord { features: s.values, label: s.label }
    }
}

/// Global affine map `x ↦ (x - mean) / std` shared by every input element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    /// Mean and population standard deviation over every element of every
    /// record.
    pub fn fit<'a>(records: impl IntoIterator<Item = &'a FingerprintRecord>) -> Result<Self> {
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for r in records {
            for &x in &r.features {
                n += 1;
                let delta = x - mean;
                mean += delta / n as f64;
                m2 += delta * (x - mean);
            }
        }
        if n == 0 {
            return Err(Error::DegenerateData("no input elements".into()));
        }
        let std = (m2 / n as f64).sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::DegenerateData(format!("standard deviation is {std}")));
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn apply_record(&self, r: &mut FingerprintRecord) {
        r.features.iter_mut().for_each(|x| *x = self.apply(*x));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StandardizeMode {
    /// Statistics over the entire dataset.
    #[default]
    AllRecords,
    /// Statistics over the training split only.
    TrainOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<FingerprintRecord>,
    pub validation: Vec<FingerprintRecord>,
    pub test: Vec<FingerprintRecord>,
    pub standardizer: Option<Standardizer>,
}

impl SplitDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.train.first().map_or(0, |r| r.features.len())
    }

    pub fn records(&self) -> impl Iterator<Item = &FingerprintRecord> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }
}

/// Minimum number of records [`split`] accepts.
pub const MIN_SPLIT_RECORDS: usize = 10;

/// Shuffles and cuts the records 0.64 / 0.16 / 0.20.
///
/// Training and test sizes are `⌊0.64·n⌋` and `⌊0.20·n⌋`; validation takes
/// the remainder.
pub fn split(records: Vec<FingerprintRecord>, seed: u64) -> Result<SplitDataset> {
    let n = records.len();
    if n < MIN_SPLIT_RECORDS {
        return Err(Error::TooFewRecords { needed: MIN_SPLIT_RECORDS, got: n });
    }
    let n_train = n * 64 / 100;
    let n_test = n * 20 / 100;
    let n_val = n - n_train - n_test;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<FingerprintRecord>> = records.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| -> Vec<FingerprintRecord> {
        idx.iter().map(|&i| slots[i].take().expect("indices are a permutation")).collect()
    };
    let train = take(&order[..n_train]);
    let validation = take(&order[n_train..n_train + n_val]);
    let test = take(&order[n_train + n_val..]);
    Ok(SplitDataset { train, validation, test, standardizer: None })
}

/// Applies `(R - R̄) / S` to every input with statistics fitted per `mode`.
pub fn standardize(mut dataset: SplitDataset, mode: StandardizeMode) -> Result<SplitDataset> {
    let st = match mode {
        StandardizeMode::AllRecords => Standardizer::fit(dataset.records())?,
        StandardizeMode::TrainOnly => Standardizer::fit(&dataset.train)?,
    };
    for r in dataset.train.iter_mut().chain(&mut dataset.validation).chain(&mut dataset.test) {
        st.apply_record(r);
    }
    dataset.standardizer = Some(st);
    Ok(dataset)
}

const DATASET_MAGIC: &[u8; 8] = b"OCIRDS\0\x01";

/// Shape and provenance stored in front of a dataset body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    /// Number of photodetectors.
    pub q: u32,
    /// Samples per photodetector; 1 for DC features.
    pub samples_per_pd: u32,
    /// Sampling rate, Hz; 0 for DC features.
    pub rate: f64,
    pub grid_spacing: f64,
    pub grid_margin: f64,
}

impl DatasetHeader {
    pub fn record_len(&self) -> usize {
        self.q as usize * self.samples_per_pd as usize
    }
}

/// Writes the binary container: magic, header, record count, then per
/// record `x, y, features…`, every number little-endian.
pub fn write_dataset<W: Write>(mut w: W, header: &DatasetHeader, records: &[FingerprintRecord]) -> Result<()> {
    let len = header.record_len();
    let mut buf = Vec::with_capacity(48 + records.len() * (len + 2) * 8);
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&header.q.to_le_bytes());
    buf.extend_from_slice(&header.samples_per_pd.to_le_bytes());
    buf.extend_from_slice(&header.rate.to_le_bytes());
    buf.extend_from_slice(&header.grid_spacing.to_le_bytes());
    buf.extend_from_slice(&header.grid_margin.to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        if r.features.len() != len {
            return Err(Error::DimensionMismatch { expected: len, actual: r.features.len() });
        }
        buf.extend_from_slice(&r.label[0].to_le_bytes());
        buf.extend_from_slice(&r.label[1].to_le_bytes());
        for x in &r.features {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::io("<dataset>", e))
}

pub(crate) struct LeReader<R> {
    inner: R,
    kind: &'static str,
}

impl<R: Read> LeReader<R> {
    pub(crate) fn new(inner: R, kind: &'static str) -> Self {
        LeReader { inner, kind }
    }

    pub(crate) fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| Error::Format {
            kind: self.kind,
            reason: format!("truncated: {e}"),
        })?;
        Ok(b)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub(crate) fn expect_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Format { kind: self.kind, reason: "trailing bytes".into() }),
            Err(e) => Err(Error::Format { kind: self.kind, reason: e.to_string() }),
        }
    }
}

pub fn read_dataset<R: Read>(r: R) -> Result<(DatasetHeader, Vec<FingerprintRecord>)> {
    let mut r = LeReader::new(r, "dataset");
    if &r.bytes::<8>()? != DATASET_MAGIC {
        return Err(Error::Format { kind: "dataset", reason: "bad magic".into() });
    }
    let header = DatasetHeader {
        q: r.u32()?,
        samples_per_pd: r.u32()?,
        rate: r.f64()?,
        grid_spacing: r.f64()?,
        grid_margin: r.f64()?,
    };
    let count = r.u64()? as usize;
    let len = header.record_len();
    let mut records = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        let label = [r.f64()?, r.f64()?];
        records.push(FingerprintRecord { features: r.f64s(len)?, label });
    }
    r.expect_end()?;
    Ok((header, records))
}

/// CSV with columns `x_m, y_m, f0, f1, …`.
pub fn write_dataset_csv<W: Write>(mut w: W, records: &[FingerprintRecord]) -> std::io::Result<()> {
    let len = records.first().map_or(0, |r| r.features.len());
    write!(w, "x_m,y_m")?;
    for i in 0..len {
        write!(w, ",f{i}")?;
    }
    writeln!(w)?;
    for r in records {
        write!(w, "{},{}", r.label[0], r.label[1])?;
        for x in &r.features {
            write!(w, ",{x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
