//! Grayscale value to histogram bin mapping.
//!
//! 8-bit data uses the identity mapping over 256 bins. Float data uses the
//! sorted list of distinct values of the chunk at hand, and a value's bin is
//! found by binary search. When a whole chunk is indexed at once, the sort
//! that builds the list also records which voxels land in each bin, so the
//! kernel never searches.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::grid::{MeterGuard, StorageMeter};

/// Finite grayscale value used as a map key. Ordered numerically; `-0.0`
/// is stored as `0.0` so equal values always share one key.
#[derive(Clone, Copy, Debug)]
pub struct Threshold(f32);

impl Threshold {
    pub fn new(value: f32) -> Self {
        Threshold(if value == 0.0 { 0.0 } else { value })
    }

    pub fn get(self) -> f32 {
        self.0
    }
}

impl PartialEq for Threshold {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for Threshold {}

impl PartialOrd for Threshold {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Threshold {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ValueIndex {
    /// 256 implicit bins, `bin_of(v) == v`. `present` marks the values that
    /// occur in the chunk the index was built for.
    DenseU8 { present: Box<[bool; 256]> },
    /// Strictly increasing finite values.
    Sparse { values: Vec<f32> },
}

impl ValueIndex {
    pub fn dense_u8<I: IntoIterator<Item = u8>>(values: I) -> Self {
        let mut present = Box::new([false; 256]);
        for v in values {
            present[v as usize] = true;
        }
        ValueIndex::DenseU8 { present }
    }

    pub fn bin_count(&self) -> usize {
        match self {
            ValueIndex::DenseU8 { .. } => 256,
            ValueIndex::Sparse { values } => values.len(),
        }
    }

    /// Grayscale value of a bin.
    pub fn value_of(&self, bin: usize) -> f32 {
        match self {
            ValueIndex::DenseU8 { .. } => bin as f32,
            ValueIndex::Sparse { values } => values[bin],
        }
    }

    #[inline]
    pub fn try_bin_of(&self, value: f32) -> Option<usize> {
        match self {
            ValueIndex::DenseU8 { .. } => {
                let bin = value as usize;
                (bin as f32 == value && bin < 256).then_some(bin)
            }
            ValueIndex::Sparse { values } => {
                let bin = values.partition_point(|&x| x < value);
                (bin < values.len() && values[bin] == value).then_some(bin)
            }
        }
    }

    pub fn bin_of(&self, value: f32) -> Result<usize> {
        self.try_bin_of(value).ok_or(Error::ValueNotIndexed(value))
    }

    /// Bins that correspond to values actually present, with their values.
    pub fn occupied(&self) -> Box<dyn Iterator<Item = (usize, f32)> + '_> {
        match self {
            ValueIndex::DenseU8 { present } => Box::new(
                present
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p)
                    .map(|(b, _)| (b, b as f32)),
            ),
            ValueIndex::Sparse { values } => Box::new(values.iter().copied().enumerate()),
        }
    }

    /// Distinct values present, ascending.
    pub fn values(&self) -> Vec<f32> {
        self.occupied().map(|(_, v)| v).collect()
    }
}

/// Builds a sparse index from finite values. `-0.0` and `0.0` compare equal
/// and share the bin `0.0`.
pub fn build_index(values: &[f32]) -> Result<ValueIndex> {
    build_index_owned(values.to_vec())
}

pub(crate) fn build_index_owned(mut values: Vec<f32>) -> Result<ValueIndex> {
    if values.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(if bad.is_nan() {
            Error::NaN {
                index: values.iter().position(|v| v.is_nan()).unwrap_or(0),
            }
        } else {
            Error::NonFinite(bad)
        });
    }
    sort_values(&mut values);
    values.dedup_by(|a, b| a == b);
    for v in &mut values {
        if *v == 0.0 {
            *v = 0.0;
        }
    }
    Ok(ValueIndex::Sparse { values })
}

/// Bytes per voxel of working memory while ranking a chunk: sort keys, sort
/// scratch, voxel order and bin boundaries, and the change array the kernel
/// fills afterwards.
pub const RANK_BYTES_PER_VOXEL: usize = 21;

/// Value index of one chunk, optionally with the owned voxels grouped by bin.
#[derive(Debug)]
pub struct ChunkIndex {
    index: ValueIndex,
    ranks: Option<Ranks>,
    _meter: Option<MeterGuard>,
}

/// Voxel ordinals sorted by value; bin `b` owns `order[starts[b]..starts[b + 1]]`.
#[derive(Debug)]
pub struct Ranks {
    pub order: Vec<u32>,
    pub starts: Vec<u32>,
}

impl ChunkIndex {
    pub fn index(&self) -> &ValueIndex {
        &self.index
    }

    pub fn ranks(&self) -> Option<&Ranks> {
        self.ranks.as_ref()
    }

    pub fn bin_count(&self) -> usize {
        self.index.bin_count()
    }
}

/// Index whose bins are found by lookup.
impl From<ValueIndex> for ChunkIndex {
    fn from(index: ValueIndex) -> Self {
        ChunkIndex {
            index,
            ranks: None,
            _meter: None,
        }
    }
}

/// Order-preserving map of finite floats to `u32`; `-0.0` maps like `0.0`.
fn order_key(v: f32) -> u32 {
    let bits = if v == 0.0 { 0 } else { v.to_bits() };
    if bits >> 31 == 1 {
        !bits
    } else {
        bits | 1 << 31
    }
}

fn from_order_key(k: u32) -> f32 {
    f32::from_bits(if k >> 31 == 1 { k & !(1 << 31) } else { !k })
}

/// Sparse index of `values` with every position assigned to its bin.
pub fn rank_values(values: &[f32], parallel: bool) -> Result<ChunkIndex> {
    rank_values_metered(values.iter().copied(), values.len(), parallel, None)
}

pub(crate) fn rank_values_metered(
    values: impl IntoIterator<Item = f32>,
    count: usize,
    parallel: bool,
    meter: Option<&StorageMeter>,
) -> Result<ChunkIndex> {
    if count == 0 {
        return Err(Error::EmptyIndex);
    }
    if count > u32::MAX as usize {
        let values: Vec<f32> = values.into_iter().collect();
        return build_index_owned(values).map(ChunkIndex::from);
    }
    let scratch = meter.map(|m| m.charge(16 * count));
    let mut keys = Vec::with_capacity(count);
    for (i, v) in values.into_iter().enumerate() {
        if !v.is_finite() {
            return Err(if v.is_nan() { Error::NaN { index: i } } else { Error::NonFinite(v) });
        }
        keys.push((order_key(v) as u64) << 32 | i as u64);
    }
    sort_keys(&mut keys, parallel);

    let mut values = Vec::new();
    let mut starts = Vec::new();
    let mut order = Vec::with_capacity(count);
    let mut prev = None;
    for (j, &k) in keys.iter().enumerate() {
        let key = (k >> 32) as u32;
        if prev != Some(key) {
            prev = Some(key);
            values.push(from_order_key(key));
            starts.push(j as u32);
        }
        order.push(k as u32);
    }
    starts.push(count as u32);
    drop(keys);
    let held = meter.map(|m| m.charge(4 * (order.len() + starts.len() + values.len())));
    drop(scratch);
    Ok(ChunkIndex {
        index: ValueIndex::Sparse { values },
        ranks: Some(Ranks { order, starts }),
        _meter: held,
    })
}

fn sort_keys(keys: &mut [u64], parallel: bool) {
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::slice::ParallelSliceMut;
        return keys.par_sort_unstable();
    }
    let _ = parallel;
    radsort::sort_by_key(keys, |k| (k >> 32) as u32);
}

#[cfg(feature = "parallel")]
fn sort_values(values: &mut [f32]) {
    use rayon::slice::ParallelSliceMut;
    values.par_sort_unstable_by(f32::total_cmp);
}

#[cfg(not(feature = "parallel"))]
fn sort_values(values: &mut [f32]) {
    values.sort_unstable_by(f32::total_cmp);
}
