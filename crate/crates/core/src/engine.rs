//! Chunked, pipelined VCEC computation.
//!
//! The image is cut along axis 0 into slabs, so every chunk is one
//! contiguous byte span of a row-major file. A single ingestion thread reads
//! chunk `k + 1` and builds its value index while the worker pool runs the
//! kernel on chunk `k`; chunk-local histograms are merged into one global
//! map keyed by grayscale value. Merging is integer addition, so the result
//! does not depend on the chunking or on the number of workers.

use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::exec::Workers;
use crate::grid::{
    extract_padded_chunk_metered, Dims, Endian, Image, PaddedChunk, StorageMeter, ValueKind,
    Voxel,
};
use crate::index::{ChunkIndex, Threshold, ValueIndex, RANK_BYTES_PER_VOXEL};
use crate::kernel::{self, LocalVcec};

/// Padded chunks alive at once: the one in the kernel and the one being read.
pub const RESIDENT_CHUNKS: u64 = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkPlan {
    dims: Dims,
    ranges: Vec<Range<usize>>,
}

impl ChunkPlan {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    /// Number of chunks.
    pub fn c(&self) -> usize {
        self.ranges.len()
    }

    pub fn max_range_len(&self) -> usize {
        self.ranges.iter().map(|r| r.len()).max().unwrap_or(0)
    }

    /// Whole image as one chunk.
    pub fn single(dims: Dims) -> Self {
        ChunkPlan {
            dims,
            ranges: vec![0..dims.w0()],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChunkTarget {
    /// Requested chunk count; clamped to `w0`.
    Count(usize),
    /// Upper bound in bytes on the storage of any single padded chunk.
    Budget(u64),
}

/// Storage bytes of a padded chunk owning `len` rows.
pub fn padded_chunk_bytes(dims: Dims, kind: ValueKind, len: usize) -> u64 {
    ((len + 2) * (dims.w1() + 2) * (dims.w2() + 2) * kind.extended_bytes()) as u64
}

fn split_evenly(w0: usize, c: usize) -> Vec<Range<usize>> {
    let len = w0.div_ceil(c);
    (0..w0)
        .step_by(len)
        .map(|a| a..(a + len).min(w0))
        .collect()
}

/// Splits axis 0 into ranges of length `ceil(w0 / c)`, the last one taking
/// the remainder. The resulting chunk count can be below the requested one
/// (e.g. `w0 = 10, c = 6` gives five ranges of two rows).
pub fn plan_chunks(dims: Dims, kind: ValueKind, target: ChunkTarget) -> Result<ChunkPlan> {
    let w0 = dims.w0();
    let c = match target {
        ChunkTarget::Count(0) => return Err(Error::BadChunkCount(0)),
        ChunkTarget::Count(c) => c.min(w0),
        ChunkTarget::Budget(budget) => {
            let slab = padded_chunk_bytes(dims, kind, 0) / 2;
            let rows = budget / slab;
            if rows < 3 {
                return Err(Error::BudgetTooSmall {
                    budget,
                    minimum: 3 * slab,
                });
            }
            let max_len = ((rows - 2) as usize).min(w0);
            w0.div_ceil(max_len)
        }
    };
    Ok(ChunkPlan {
        dims,
        ranges: split_evenly(w0, c),
    })
}

/// Bytes of the ranking arrays built for a chunk owning `len` rows (float
/// data only; 8-bit data uses a fixed 256-bin index).
pub fn chunk_index_bytes(dims: Dims, kind: ValueKind, len: usize) -> u64 {
    match kind {
        ValueKind::U8 => 0,
        ValueKind::F32 => (len * dims.slab_len() * RANK_BYTES_PER_VOXEL) as u64,
    }
}

/// Peak bytes held for one chunk: padded storage plus its index arrays.
pub fn resident_chunk_bytes(dims: Dims, kind: ValueKind, len: usize) -> u64 {
    padded_chunk_bytes(dims, kind, len) + chunk_index_bytes(dims, kind, len)
}

/// Plan whose resident memory (the chunk in the kernel and the one being
/// ingested, each with its index arrays) stays within `total_budget` bytes.
pub fn plan_for_budget(dims: Dims, kind: ValueKind, total_budget: u64) -> Result<ChunkPlan> {
    let per_chunk = total_budget / RESIDENT_CHUNKS;
    let minimum = resident_chunk_bytes(dims, kind, 1);
    if per_chunk < minimum {
        return Err(Error::BudgetTooSmall {
            budget: total_budget,
            minimum: minimum * RESIDENT_CHUNKS,
        });
    }
    let fixed = padded_chunk_bytes(dims, kind, 0);
    let per_row = resident_chunk_bytes(dims, kind, 1) - fixed;
    let max_len = (((per_chunk - fixed) / per_row) as usize).min(dims.w0());
    plan_chunks(dims, kind, ChunkTarget::Count(dims.w0().div_ceil(max_len)))
}

/// Global VCEC: grayscale value to change in Euler characteristic, stored
/// as parallel arrays sorted by value.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GlobalVcec {
    keys: Vec<Threshold>,
    deltas: Vec<i64>,
}

impl GlobalVcec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f32, delta: i64) {
        debug_assert!(value.is_finite());
        let key = Threshold::new(value);
        match self.keys.binary_search(&key) {
            Ok(i) => self.deltas[i] += delta,
            Err(i) => {
                self.keys.insert(i, key);
                self.deltas.insert(i, delta);
            }
        }
    }

    pub fn get(&self, value: f32) -> Option<i64> {
        let i = self.keys.binary_search(&Threshold::new(value)).ok()?;
        Some(self.deltas[i])
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Entries in ascending value order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (f32, i64)> + '_ {
        self.keys.iter().zip(&self.deltas).map(|(t, &d)| (t.get(), d))
    }

    pub fn total(&self) -> i64 {
        self.deltas.iter().sum()
    }

    /// Union of two maps, adding deltas of shared keys.
    pub fn merged(&self, other: &GlobalVcec) -> GlobalVcec {
        let n = self.len() + other.len();
        let mut out = GlobalVcec {
            keys: Vec::with_capacity(n),
            deltas: Vec::with_capacity(n),
        };
        let (mut i, mut j) = (0, 0);
        while i < self.len() && j < other.len() {
            let (a, b) = (self.keys[i], other.keys[j]);
            if a < b {
                out.push(a, self.deltas[i]);
                i += 1;
            } else if b < a {
                out.push(b, other.deltas[j]);
                j += 1;
            } else {
                out.push(a, self.deltas[i] + other.deltas[j]);
                i += 1;
                j += 1;
            }
        }
        for k in i..self.len() {
            out.push(self.keys[k], self.deltas[k]);
        }
        for k in j..other.len() {
            out.push(other.keys[k], other.deltas[k]);
        }
        out
    }

    fn push(&mut self, key: Threshold, delta: i64) {
        debug_assert!(self.keys.last().is_none_or(|&last| last < key));
        self.keys.push(key);
        self.deltas.push(delta);
    }

    /// The entries of a chunk-local histogram.
    pub fn from_local(local: &LocalVcec, index: &ValueIndex) -> GlobalVcec {
        debug_assert_eq!(local.counts().len(), index.bin_count());
        let mut out = GlobalVcec::new();
        for (bin, value) in index.occupied() {
            out.push(Threshold::new(value), local.counts()[bin]);
        }
        out
    }
}

impl FromIterator<(f32, i64)> for GlobalVcec {
    fn from_iter<I: IntoIterator<Item = (f32, i64)>>(iter: I) -> Self {
        let mut pairs: Vec<(Threshold, i64)> = iter.into_iter().map(|(v, d)| (Threshold::new(v), d)).collect();
        pairs.sort_by_key(|&(k, _)| k);
        let mut g = GlobalVcec::new();
        for (k, d) in pairs {
            match g.keys.last() {
                Some(&last) if last == k => *g.deltas.last_mut().unwrap() += d,
                _ => g.push(k, d),
            }
        }
        g
    }
}

/// Adds a chunk-local histogram into the global VCEC.
pub fn merge_local(global: &mut GlobalVcec, local: &LocalVcec, index: &ValueIndex) {
    *global = global.merged(&GlobalVcec::from_local(local, index));
}

/// Merges chunk histograms as sorted runs. Runs of similar length are
/// combined eagerly, so each entry is copied O(log c) times over c chunks.
#[derive(Debug, Default)]
pub struct VcecMerger {
    runs: Vec<GlobalVcec>,
}

impl VcecMerger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, run: GlobalVcec) {
        self.runs.push(run);
        while let [.., a, b] = self.runs.as_slice() {
            if a.len() > 2 * b.len() {
                break;
            }
            let b = self.runs.pop().unwrap();
            let a = self.runs.pop().unwrap();
            self.runs.push(a.merged(&b));
        }
    }

    pub fn finish(mut self) -> GlobalVcec {
        let mut acc = self.runs.pop().unwrap_or_default();
        while let Some(run) = self.runs.pop() {
            acc = run.merged(&acc);
        }
        acc
    }
}

/// Supplies padded chunks of an image, one range at a time.
pub trait ChunkSource<T: Voxel>: Send {
    fn dims(&self) -> Dims;

    /// Reads the chunk owning `range`, charging its storage to `meter`.
    fn read_chunk(&mut self, range: Range<usize>, meter: Option<&StorageMeter>) -> Result<PaddedChunk<T>>;
}

/// Chunks cut from an image already in memory.
pub struct MemorySource<'a> {
    image: &'a Image,
}

impl<'a> MemorySource<'a> {
    pub fn new(image: &'a Image) -> Self {
        MemorySource { image }
    }
}

impl<T: Voxel> ChunkSource<T> for MemorySource<'_> {
    fn dims(&self) -> Dims {
        self.image.dims()
    }

    fn read_chunk(&mut self, range: Range<usize>, meter: Option<&StorageMeter>) -> Result<PaddedChunk<T>> {
        extract_padded_chunk_metered(self.image, range, meter)?.ok_or_else(|| Error::Parse {
            what: "image",
            detail: format!("expected {} values, image holds {}", T::KIND, self.image.kind()),
        })
    }
}

/// Chunks read from a headerless raw volume with seek + sequential reads.
/// Only the rows of one padded chunk are ever held in memory.
pub struct RawFileSource {
    path: PathBuf,
    file: File,
    dims: Dims,
    kind: ValueKind,
    endian: Endian,
    bytes: Vec<u8>,
}

impl RawFileSource {
    pub fn open(path: &Path, dims: Dims, kind: ValueKind, endian: Endian) -> Result<Self> {
        let file = File::open(path)?;
        let expected = (dims.voxel_count() * kind.bytes_per_value()) as u64;
        let actual = file.metadata()?.len();
        if actual != expected {
            return Err(Error::SizeMismatch {
                path: path.to_path_buf(),
                expected,
                actual,
            });
        }
        Ok(RawFileSource {
            path: path.to_path_buf(),
            file,
            dims,
            kind,
            endian,
            bytes: Vec::new(),
        })
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl<T: Voxel> ChunkSource<T> for RawFileSource {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn read_chunk(&mut self, range: Range<usize>, meter: Option<&StorageMeter>) -> Result<PaddedChunk<T>> {
        if T::KIND != self.kind {
            return Err(Error::Parse {
                what: "raw volume",
                detail: format!("file holds {} values, {} requested", self.kind, T::KIND),
            });
        }
        let mut chunk = PaddedChunk::<T>::sentinel(self.dims, range, meter)?;
        let rows = chunk.source_rows();
        let slab = self.dims.slab_len();
        let row_bytes = slab * self.kind.bytes_per_value();
        self.file.seek(SeekFrom::Start((rows.start * row_bytes) as u64))?;
        self.bytes.resize(row_bytes, 0);
        let mut row = Vec::with_capacity(slab);
        for x0 in rows {
            self.file.read_exact(&mut self.bytes)?;
            row.clear();
            T::decode(&self.bytes, self.endian, &mut row);
            if let Some(i) = T::first_nan(&row) {
                return Err(Error::NaN { index: x0 * slab + i });
            }
            chunk.fill_row(x0, &row);
        }
        Ok(chunk)
    }
}

/// Start and end of a pipeline stage, relative to the start of the run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Span {
    pub start: Duration,
    pub end: Duration,
}

impl Span {
    pub fn len(&self) -> Duration {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, other: &Span) -> Duration {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkTrace {
    pub range: Range<usize>,
    /// Reading the padded chunk.
    pub read: Span,
    /// Building its value index.
    pub index: Span,
    pub kernel: Span,
    pub merge: Span,
    pub bins: usize,
}

/// Per-chunk timestamps and phase totals of one engine run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub chunks: Vec<ChunkTrace>,
    /// Combining the merged runs after the last chunk.
    pub final_merge: Duration,
    pub total: Duration,
    /// Peak bytes of live chunk storage and chunk index arrays.
    pub peak_chunk_bytes: usize,
}

impl EngineStats {
    fn sum(&self, f: impl Fn(&ChunkTrace) -> Duration) -> Duration {
        self.chunks.iter().map(f).sum()
    }

    pub fn read_time(&self) -> Duration {
        self.sum(|c| c.read.len())
    }

    pub fn index_time(&self) -> Duration {
        self.sum(|c| c.index.len())
    }

    pub fn kernel_time(&self) -> Duration {
        self.sum(|c| c.kernel.len())
    }

    pub fn merge_time(&self) -> Duration {
        self.sum(|c| c.merge.len()) + self.final_merge
    }

    /// Time during which ingestion of chunk `k + 1` ran concurrently with the
    /// kernel on chunk `k`, summed over `k`.
    pub fn ingest_kernel_overlap(&self) -> Duration {
        self.chunks
            .windows(2)
            .map(|w| {
                let ingest = Span {
                    start: w[1].read.start,
                    end: w[1].index.end,
                };
                ingest.overlap(&w[0].kernel)
            })
            .sum()
    }
}

#[derive(Clone, Debug, Default)]
pub struct EngineOptions {
    /// Storage meter charged for every padded chunk; a fresh one is used
    /// when absent.
    pub meter: Option<StorageMeter>,
}

struct Ingested<T: Voxel> {
    chunk: PaddedChunk<T>,
    index: ChunkIndex,
    read: Span,
    index_span: Span,
}

/// VCEC of the image behind `source`, chunked per `plan`.
pub fn process_image<T: Voxel, S: ChunkSource<T>>(
    source: S,
    plan: &ChunkPlan,
    workers: &Workers,
) -> Result<GlobalVcec> {
    process_image_with(source, plan, workers, &EngineOptions::default()).map(|(v, _)| v)
}

pub fn process_image_with<T: Voxel, S: ChunkSource<T>>(
    mut source: S,
    plan: &ChunkPlan,
    workers: &Workers,
    options: &EngineOptions,
) -> Result<(GlobalVcec, EngineStats)> {
    if source.dims() != plan.dims() {
        return Err(Error::DimsMismatch {
            source_dims: source.dims().extents(),
            plan_dims: plan.dims().extents(),
        });
    }
    let meter = options.meter.clone().unwrap_or_default();
    let t0 = Instant::now();
    let since = |t: Instant| t.duration_since(t0);
    let chunk_err = |k: usize, e: Error| {
        let r = &plan.ranges()[k];
        Error::Chunk {
            chunk: k,
            start: r.start,
            end: r.end,
            source: Box::new(e),
        }
    };

    let mut merger = VcecMerger::new();
    let mut stats = EngineStats::default();

    std::thread::scope(|scope| -> Result<()> {
        // Rendezvous channel: the reader holds at most one finished chunk
        // while the kernel works on the previous one.
        let (tx, rx) = mpsc::sync_channel::<(usize, Result<Ingested<T>>)>(0);
        let meter = &meter;
        let reader = scope.spawn(move || {
            for (k, range) in plan.ranges().iter().enumerate() {
                let ingested = (|| {
                    let r0 = Instant::now();
                    let chunk = source.read_chunk(range.clone(), Some(meter))?;
                    let r1 = Instant::now();
                    let index = workers.run(|parallel| kernel::chunk_index_metered(&chunk, parallel, Some(meter)))?;
                    let r2 = Instant::now();
                    Ok(Ingested {
                        chunk,
                        index,
                        read: Span { start: since(r0), end: since(r1) },
                        index_span: Span { start: since(r1), end: since(r2) },
                    })
                })();
                let failed = ingested.is_err();
                if tx.send((k, ingested)).is_err() || failed {
                    break;
                }
            }
        });

        let mut outcome = Ok(());
        for (k, ingested) in rx {
            let item = match ingested {
                Ok(item) => item,
                Err(e) => {
                    outcome = Err(chunk_err(k, e));
                    break;
                }
            };
            let k0 = Instant::now();
            let local = workers.run(|parallel| run_kernel(&item.chunk, &item.index, parallel));
            let k1 = Instant::now();
            let local = match local {
                Ok(l) => l,
                Err(e) => {
                    outcome = Err(chunk_err(k, e));
                    break;
                }
            };
            merger.push(GlobalVcec::from_local(&local, item.index.index()));
            let k2 = Instant::now();
            stats.chunks.push(ChunkTrace {
                range: item.chunk.range(),
                read: item.read,
                index: item.index_span,
                kernel: Span { start: since(k0), end: since(k1) },
                merge: Span { start: since(k1), end: since(k2) },
                bins: item.index.bin_count(),
            });
        }
        // Dropping the receiver unblocks a reader waiting in `send`.
        reader.join().map_err(|_| Error::WorkerPanicked)?;
        outcome
    })?;

    let m0 = Instant::now();
    let global = merger.finish();
    stats.final_merge = m0.elapsed();
    stats.total = t0.elapsed();
    stats.peak_chunk_bytes = meter.peak();
    Ok((global, stats))
}

fn run_kernel<T: Voxel>(chunk: &PaddedChunk<T>, index: &ChunkIndex, parallel: bool) -> Result<LocalVcec> {
    #[cfg(feature = "parallel")]
    if parallel {
        return kernel::accumulate_chunk_parallel(chunk, index);
    }
    let _ = parallel;
    kernel::accumulate_chunk_sequential(chunk, index)
}

/// VCEC of an in-memory image of either value kind.
pub fn image_vcec(image: &Image, plan: &ChunkPlan, workers: &Workers) -> Result<GlobalVcec> {
    image_vcec_with(image, plan, workers, &EngineOptions::default()).map(|(v, _)| v)
}

pub fn image_vcec_with(
    image: &Image,
    plan: &ChunkPlan,
    workers: &Workers,
    options: &EngineOptions,
) -> Result<(GlobalVcec, EngineStats)> {
    let source = MemorySource::new(image);
    match image.kind() {
        ValueKind::U8 => process_image_with::<u8, _>(source, plan, workers, options),
        ValueKind::F32 => process_image_with::<f32, _>(source, plan, workers, options),
    }
}

/// VCEC of a raw volume file, streamed chunk by chunk.
pub fn file_vcec_with(
    source: RawFileSource,
    plan: &ChunkPlan,
    workers: &Workers,
    options: &EngineOptions,
) -> Result<(GlobalVcec, EngineStats)> {
    match source.kind() {
        ValueKind::U8 => process_image_with::<u8, _>(source, plan, workers, options),
        ValueKind::F32 => process_image_with::<f32, _>(source, plan, workers, options),
    }
}
