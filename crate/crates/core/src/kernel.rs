//! Per-voxel VCEC contributions and chunk-local histograms.
//!
//! A voxel *introduces* a face when it holds the smallest value among all
//! voxels containing that face, ties going to the voxel with the lower
//! row-major position. Every cell of the cubical complex is introduced by
//! exactly one voxel, so summing `(-1)^dim` over the faces each voxel
//! introduces, binned by the voxel's value, yields the VCEC.
//!
//! The tie-break never needs explicit index comparisons: a neighbor at offset
//! `s` precedes the voxel in row-major order iff the first nonzero component
//! of `s` is negative, so the voxel must be strictly smaller than earlier
//! neighbors and no larger than later ones.

use crate::error::{Error, Result};
use crate::grid::{PaddedChunk, StorageMeter, ValueKind, Voxel};
use crate::index::{rank_values_metered, ChunkIndex, Ranks, ValueIndex};

/// Offset from a voxel to one of its faces, `o ∈ {-1, 0, 1}^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FaceOffset {
    components: [i8; 3],
    rank: usize,
}

impl FaceOffset {
    pub fn new2(o: [i8; 2]) -> Self {
        debug_assert!(o.iter().all(|c| (-1..=1).contains(c)));
        FaceOffset {
            components: [o[0], o[1], 0],
            rank: 2,
        }
    }

    pub fn new3(o: [i8; 3]) -> Self {
        debug_assert!(o.iter().all(|c| (-1..=1).contains(c)));
        FaceOffset {
            components: o,
            rank: 3,
        }
    }

    pub fn components(&self) -> &[i8] {
        &self.components[..self.rank]
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|&c| c == 0)
    }

    /// Dimension of the face: `d` minus the number of nonzero components.
    pub fn face_dim(&self) -> usize {
        self.rank - self.components().iter().filter(|&&c| c != 0).count()
    }

    /// All nonzero offsets for an image of dimension `rank` (8 or 26).
    pub fn all_nonzero(rank: usize) -> Vec<FaceOffset> {
        let axis2: &[i8] = if rank == 3 { &[-1, 0, 1] } else { &[0] };
        let mut out = Vec::new();
        for a in [-1i8, 0, 1] {
            for b in [-1i8, 0, 1] {
                for &c in axis2 {
                    let f = FaceOffset {
                        components: [a, b, c],
                        rank,
                    };
                    if !f.is_zero() {
                        out.push(f);
                    }
                }
            }
        }
        out
    }

    /// Offsets of the other voxels containing this face:
    /// `{s : s_i ∈ {0, o_i}} \ {0}`.
    pub fn cofaces(&self) -> Vec<FaceOffset> {
        let mut out = Vec::new();
        for mask in 1u8..8 {
            let mut s = [0i8; 3];
            let mut valid = true;
            for (i, slot) in s.iter_mut().enumerate() {
                if mask & (1 << i) != 0 {
                    if self.components[i] == 0 {
                        valid = false;
                    }
                    *slot = self.components[i];
                }
            }
            if valid {
                out.push(FaceOffset {
                    components: s,
                    rank: self.rank,
                });
            }
        }
        out
    }
}

/// True iff the neighbor at offset `s` precedes the voxel in row-major order.
pub fn earlier(s: &[i8]) -> bool {
    s.iter().find(|&&c| c != 0).is_some_and(|&c| c < 0)
}

fn padded(v: [usize; 3]) -> [usize; 3] {
    [v[0] + 1, v[1] + 1, v[2] + 1]
}

fn owned_padded_coord<T: Voxel>(chunk: &PaddedChunk<T>, v: [usize; 3]) -> [usize; 3] {
    let range = chunk.range();
    debug_assert!(range.contains(&v[0]) && chunk.image_dims().contains(v));
    padded([v[0] - range.start, v[1], v[2]])
}

fn neighbor(p: [usize; 3], s: &FaceOffset) -> [usize; 3] {
    let mut q = p;
    for (qi, &si) in q.iter_mut().zip(s.components.iter()) {
        *qi = (*qi as isize + si as isize) as usize;
    }
    q
}

/// Whether the owned voxel at image coordinate `v` introduces the face at
/// offset `o`. Straightforward reference form of the unrolled kernel.
pub fn introduced<T: Voxel>(chunk: &PaddedChunk<T>, v: [usize; 3], o: FaceOffset) -> bool {
    let p = owned_padded_coord(chunk, v);
    let c = chunk.get(p);
    o.cofaces().iter().all(|s| {
        let n = chunk.get(neighbor(p, s));
        if earlier(s.components()) {
            c < n
        } else {
            c <= n
        }
    })
}

/// Signed count of the faces the owned voxel at `v` introduces, the voxel
/// itself included.
pub fn voxel_contribution<T: Voxel>(chunk: &PaddedChunk<T>, v: [usize; 3]) -> i64 {
    let rank = if chunk.image_dims().is_2d() { 2 } else { 3 };
    let sign = |dim: usize| if dim.is_multiple_of(2) { 1 } else { -1 };
    let mut change = sign(rank);
    for o in FaceOffset::all_nonzero(rank) {
        if introduced(chunk, v, o) {
            change += sign(o.face_dim());
        }
    }
    change
}

/// Chunk-local VCEC: one signed count per bin of the chunk's value index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalVcec {
    counts: Vec<i64>,
}

impl LocalVcec {
    pub fn zeros(bins: usize) -> Self {
        LocalVcec {
            counts: vec![0; bins],
        }
    }

    pub fn from_counts(counts: Vec<i64>) -> Self {
        LocalVcec { counts }
    }

    pub fn counts(&self) -> &[i64] {
        &self.counts
    }

    pub fn total(&self) -> i64 {
        self.counts.iter().sum()
    }
}

// Neighbor tables for the 3D kernel. Bit k of a voxel's comparison mask is
// set when the voxel wins against neighbor k (strictly smaller than earlier
// neighbors, no larger than later ones); a face is introduced when every
// neighbor sharing it is beaten.
const fn offset_3d(k: usize) -> [i8; 3] {
    let idx = if k < 13 { k } else { k + 1 };
    [
        (idx / 9) as i8 - 1,
        ((idx / 3) % 3) as i8 - 1,
        (idx % 3) as i8 - 1,
    ]
}

const fn earlier_3d(k: usize) -> bool {
    let s = offset_3d(k);
    if s[0] != 0 {
        s[0] < 0
    } else if s[1] != 0 {
        s[1] < 0
    } else {
        s[2] < 0
    }
}

const fn bit_of(s: [i8; 3]) -> usize {
    let idx = ((s[0] + 1) * 9 + (s[1] + 1) * 3 + (s[2] + 1)) as usize;
    if idx < 13 {
        idx
    } else {
        idx - 1
    }
}

const fn coface_mask_3d(k: usize) -> u32 {
    let o = offset_3d(k);
    let mut mask = 0u32;
    let mut sel = 1;
    while sel < 8 {
        let mut s = [0i8; 3];
        let mut valid = true;
        let mut i = 0;
        while i < 3 {
            if sel & (1 << i) != 0 {
                if o[i] == 0 {
                    valid = false;
                }
                s[i] = o[i];
            }
            i += 1;
        }
        if valid {
            mask |= 1 << bit_of(s);
        }
        sel += 1;
    }
    mask
}

const fn sign_3d(k: usize) -> i32 {
    let o = offset_3d(k);
    let nonzero = (o[0] != 0) as usize + (o[1] != 0) as usize + (o[2] != 0) as usize;
    // dim = 3 - nonzero: squares (+1), edges (-1), vertices (+1).
    if nonzero % 2 == 1 {
        1
    } else {
        -1
    }
}

const EARLIER_3D: [bool; 26] = {
    let mut t = [false; 26];
    let mut k = 0;
    while k < 26 {
        t[k] = earlier_3d(k);
        k += 1;
    }
    t
};

const MASK_3D: [u32; 26] = {
    let mut t = [0u32; 26];
    let mut k = 0;
    while k < 26 {
        t[k] = coface_mask_3d(k);
        k += 1;
    }
    t
};

const SIGN_3D: [i32; 26] = {
    let mut t = [0i32; 26];
    let mut k = 0;
    while k < 26 {
        t[k] = sign_3d(k);
        k += 1;
    }
    t
};

/// Contribution of the voxel at storage offset `i` of a 2D chunk (padded
/// shape `[s0, s1, 3]`, all data on plane 1 of axis 2).
#[inline(always)]
fn contribution_2d<E: Copy + PartialOrd>(st: &[E], i: usize, row: usize) -> i32 {
    let c = st[i];
    let t = st[i - row];
    let b = st[i + row];
    let l = st[i - 3];
    let r = st[i + 3];
    let mut change = 1;
    change += (c < l && c < t && c < st[i - row - 3]) as i32;
    change += (c < t && c <= r && c < st[i - row + 3]) as i32;
    change += (c < l && c <= b && c <= st[i + row - 3]) as i32;
    change += (c <= b && c <= r && c <= st[i + row + 3]) as i32;
    change -= (c < t) as i32 + (c < l) as i32 + (c <= r) as i32 + (c <= b) as i32;
    change
}

/// Contributions of a run of `out.len()` consecutive voxels starting at
/// storage offset `start` of a 3D chunk. Each neighbor direction is one pass
/// over contiguous slices, so the comparisons vectorize.
fn line_changes_3d<E: Copy + PartialOrd>(
    st: &[E],
    start: usize,
    offsets: &[isize; 26],
    wins: &mut [u32],
    out: &mut [i8],
) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2.
        return unsafe { line_changes_3d_avx2(st, start, offsets, wins, out) };
    }
    line_changes_3d_portable(st, start, offsets, wins, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn line_changes_3d_avx2<E: Copy + PartialOrd>(
    st: &[E],
    start: usize,
    offsets: &[isize; 26],
    wins: &mut [u32],
    out: &mut [i8],
) {
    line_changes_3d_portable(st, start, offsets, wins, out)
}

#[inline(always)]
fn line_changes_3d_portable<E: Copy + PartialOrd>(
    st: &[E],
    start: usize,
    offsets: &[isize; 26],
    wins: &mut [u32],
    out: &mut [i8],
) {
    let len = out.len();
    let c = &st[start..start + len];
    let wins = &mut wins[..len];
    wins.fill(0);
    for k in 0..26 {
        let s = (start as isize + offsets[k]) as usize;
        let n = &st[s..s + len];
        if EARLIER_3D[k] {
            for ((w, &a), &b) in wins.iter_mut().zip(c).zip(n) {
                *w |= ((a < b) as u32) << k;
            }
        } else {
            for ((w, &a), &b) in wins.iter_mut().zip(c).zip(n) {
                *w |= ((a <= b) as u32) << k;
            }
        }
    }
    out.fill(-1);
    for k in 0..26 {
        let (mask, sign) = (MASK_3D[k], SIGN_3D[k] as i8);
        // Partial sums stay within [-11, 13]; wrapping ops only keep the loop
        // free of overflow checks.
        for (o, &w) in out.iter_mut().zip(wins.iter()) {
            *o = o.wrapping_add(sign.wrapping_mul((w & mask == mask) as i8));
        }
    }
}

fn storage_offsets_3d(shape: [usize; 3]) -> [isize; 26] {
    let st0 = (shape[1] * shape[2]) as isize;
    let st1 = shape[2] as isize;
    let mut out = [0isize; 26];
    for (k, slot) in out.iter_mut().enumerate() {
        let s = offset_3d(k);
        *slot = s[0] as isize * st0 + s[1] as isize * st1 + s[2] as isize;
    }
    out
}

/// Length of a work unit: an image row in 2D, a line along axis 2 in 3D.
fn unit_len(dims: crate::grid::Dims) -> usize {
    if dims.is_2d() {
        dims.w1()
    } else {
        dims.w2()
    }
}

/// Storage offset of the first voxel of a unit and the stride between its
/// voxels.
fn unit_start<T: Voxel>(chunk: &PaddedChunk<T>, unit: usize) -> (usize, usize) {
    let [_, s1, s2] = chunk.shape();
    let dims = chunk.image_dims();
    if dims.is_2d() {
        ((unit + 1) * s1 * s2 + s2 + 1, s2)
    } else {
        let w1 = dims.w1();
        let (p0, p1) = (unit / w1 + 1, unit % w1 + 1);
        ((p0 * s1 + p1) * s2 + 1, 1)
    }
}

/// Fills `out` with the contributions of the voxels of one work unit.
fn unit_changes<T: Voxel>(
    chunk: &PaddedChunk<T>,
    unit: usize,
    offsets: &[isize; 26],
    wins: &mut Vec<u32>,
    out: &mut [i8],
) {
    let st = chunk.storage();
    let (start, stride) = unit_start(chunk, unit);
    if chunk.image_dims().is_2d() {
        let [_, s1, s2] = chunk.shape();
        for (x1, o) in out.iter_mut().enumerate() {
            *o = contribution_2d(st, start + x1 * stride, s1 * s2) as i8;
        }
    } else {
        wins.resize(out.len(), 0);
        line_changes_3d(st, start, offsets, wins, out);
    }
}

/// Contribution of every owned voxel, in row-major order.
pub fn chunk_changes_sequential<T: Voxel>(chunk: &PaddedChunk<T>) -> Vec<i8> {
    let offsets = storage_offsets_3d(chunk.shape());
    let len = unit_len(chunk.image_dims());
    let mut changes = vec![0i8; chunk.owned_voxel_count()];
    let mut wins = Vec::new();
    for (unit, out) in changes.chunks_mut(len).enumerate() {
        unit_changes(chunk, unit, &offsets, &mut wins, out);
    }
    changes
}

#[cfg(feature = "parallel")]
pub fn chunk_changes_parallel<T: Voxel>(chunk: &PaddedChunk<T>) -> Vec<i8> {
    use rayon::prelude::*;

    let offsets = storage_offsets_3d(chunk.shape());
    let len = unit_len(chunk.image_dims());
    let mut changes = vec![0i8; chunk.owned_voxel_count()];
    let min_units = (4096 / len).max(1);
    changes
        .par_chunks_mut(len)
        .enumerate()
        .with_min_len(min_units)
        .for_each_init(Vec::new, |wins, (unit, out)| {
            unit_changes(chunk, unit, &offsets, wins, out)
        });
    changes
}

/// Bins per histogram block; one block's prefix sums stay in cache.
const BIN_BLOCK: usize = 4096;

/// How far ahead in voxel order the histogram gather prefetches.
const PREFETCH_DISTANCE: usize = 64;

#[inline(always)]
fn prefetch(changes: &[i8], i: usize) {
    #[cfg(target_arch = "x86_64")]
    if i < changes.len() {
        // SAFETY: the address is in bounds; prefetching only hints the cache.
        unsafe { std::arch::x86_64::_mm_prefetch(changes.as_ptr().add(i), std::arch::x86_64::_MM_HINT_T0) }
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = (changes, i);
}

/// Sums the changes of the voxels of bins `starts.len() - 1` consecutive
/// bins. A running prefix sum over the block keeps the loops free of
/// data-dependent branches, which matters when most bins hold one voxel.
fn histogram_block(changes: &[i8], order: &[u32], starts: &[u32], out: &mut [i64], prefix: &mut Vec<i64>) {
    let lo = starts[0] as usize;
    let hi = starts[starts.len() - 1] as usize;
    prefix.clear();
    prefix.reserve(hi - lo + 1);
    prefix.push(0);
    let order = &order[lo..hi];
    let mut acc = 0i64;
    for (j, &i) in order.iter().enumerate() {
        if let Some(&ahead) = order.get(j + PREFETCH_DISTANCE) {
            prefetch(changes, ahead as usize);
        }
        acc += changes[i as usize] as i64;
        prefix.push(acc);
    }
    for (o, w) in out.iter_mut().zip(starts.windows(2)) {
        *o = prefix[w[1] as usize - lo] - prefix[w[0] as usize - lo];
    }
}

fn histogram_ranked(changes: &[i8], ranks: &Ranks, parallel: bool) -> LocalVcec {
    let bins = ranks.starts.len() - 1;
    let mut counts = vec![0i64; bins];
    let block = |b: usize, out: &mut [i64], prefix: &mut Vec<i64>| {
        let first = b * BIN_BLOCK;
        let starts = &ranks.starts[first..=first + out.len()];
        histogram_block(changes, &ranks.order, starts, out, prefix);
    };
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        counts
            .par_chunks_mut(BIN_BLOCK)
            .enumerate()
            .for_each_init(Vec::new, |prefix, (b, out)| block(b, out, prefix));
        return LocalVcec::from_counts(counts);
    }
    let _ = parallel;
    let mut prefix = Vec::new();
    for (b, out) in counts.chunks_mut(BIN_BLOCK).enumerate() {
        block(b, out, &mut prefix);
    }
    LocalVcec::from_counts(counts)
}

/// Bins each owned voxel by looking up its value, one lookup per run of
/// equal values.
fn histogram_lookup<T: Voxel>(chunk: &PaddedChunk<T>, changes: &[i8], index: &ValueIndex) -> Result<LocalVcec> {
    let mut local = LocalVcec::zeros(index.bin_count());
    if let (ValueIndex::DenseU8 { present }, ValueKind::U8) = (index, T::KIND) {
        for (value, &change) in chunk.owned_values().zip(changes) {
            let bin = T::ext_value(value) as u8 as usize;
            if !present[bin] {
                return Err(Error::ValueNotIndexed(bin as f32));
            }
            local.counts[bin] += change as i64;
        }
        return Ok(local);
    }
    let mut last: Option<(T::Ext, usize)> = None;
    for (value, &change) in chunk.owned_values().zip(changes) {
        let bin = match last {
            Some((v, b)) if v == value => b,
            _ => {
                let b = index
                    .try_bin_of(T::ext_value(value))
                    .ok_or(Error::ValueNotIndexed(T::ext_value(value)))?;
                last = Some((value, b));
                b
            }
        };
        local.counts[bin] += change as i64;
    }
    Ok(local)
}

fn accumulate<T: Voxel>(
    chunk: &PaddedChunk<T>,
    index: &ChunkIndex,
    changes: Vec<i8>,
    parallel: bool,
) -> Result<LocalVcec> {
    match index.ranks() {
        Some(ranks) if ranks.order.len() == changes.len() => Ok(histogram_ranked(&changes, ranks, parallel)),
        Some(_) => Err(Error::LengthMismatch {
            dims: chunk.image_dims().extents(),
            expected: changes.len(),
            actual: index.ranks().map_or(0, |r| r.order.len()),
        }),
        None => histogram_lookup(chunk, &changes, index.index()),
    }
}

/// Chunk-local VCEC on the calling thread.
pub fn accumulate_chunk_sequential<T: Voxel>(chunk: &PaddedChunk<T>, index: &ChunkIndex) -> Result<LocalVcec> {
    accumulate(chunk, index, chunk_changes_sequential(chunk), false)
}

/// Chunk-local VCEC, split across the current rayon pool. Workers fill
/// disjoint slices of the change array; ranked bins are then summed in
/// parallel, each bin by one worker.
#[cfg(feature = "parallel")]
pub fn accumulate_chunk_parallel<T: Voxel>(chunk: &PaddedChunk<T>, index: &ChunkIndex) -> Result<LocalVcec> {
    if rayon::current_num_threads() <= 1 {
        return accumulate_chunk_sequential(chunk, index);
    }
    accumulate(chunk, index, chunk_changes_parallel(chunk), true)
}

/// Chunk-local VCEC. Uses the current rayon pool when the `parallel`
/// feature is enabled.
pub fn accumulate_chunk<T: Voxel>(chunk: &PaddedChunk<T>, index: &ChunkIndex) -> Result<LocalVcec> {
    #[cfg(feature = "parallel")]
    return accumulate_chunk_parallel(chunk, index);
    #[cfg(not(feature = "parallel"))]
    accumulate_chunk_sequential(chunk, index)
}

/// Value index for the owned voxels of a chunk: dense for 8-bit data,
/// ranked distinct values otherwise.
pub fn chunk_index<T: Voxel>(chunk: &PaddedChunk<T>) -> Result<ChunkIndex> {
    chunk_index_metered(chunk, false, None)
}

pub(crate) fn chunk_index_metered<T: Voxel>(
    chunk: &PaddedChunk<T>,
    parallel: bool,
    meter: Option<&StorageMeter>,
) -> Result<ChunkIndex> {
    match T::KIND {
        ValueKind::U8 => Ok(ValueIndex::dense_u8(chunk.owned_values().map(|e| T::ext_value(e) as u8)).into()),
        ValueKind::F32 => rank_values_metered(
            chunk.owned_values().map(T::ext_value),
            chunk.owned_voxel_count(),
            parallel,
            meter,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{extract_padded_chunk, Dims, Image};
    use proptest::prelude::*;

    fn chunk2(rows: &[&[f32]]) -> PaddedChunk<f32> {
        let dims = Dims::new(rows.len(), rows[0].len(), 1).unwrap();
        let img = Image::from_f32(dims, rows.concat()).unwrap();
        extract_padded_chunk(&img, 0..dims.w0()).unwrap().unwrap()
    }

    #[test]
    fn earlier_examples() {
        assert!(earlier(&[0, -1, 0]));
        assert!(!earlier(&[0, 1, -1]));
        assert!(earlier(&[-1, 1, 1]));
        assert!(!earlier(&[0, 0, 1]));
    }

    #[test]
    fn earlier_matches_linear_index_order() {
        let dims = Dims::new(5, 5, 5).unwrap();
        let v = [2usize, 2, 2];
        let vi = dims.linear_index(v).unwrap();
        for s in FaceOffset::all_nonzero(3) {
            let n = neighbor(v, &s);
            let ni = dims.linear_index(n).unwrap();
            assert_eq!(earlier(s.components()), ni < vi, "{s:?}");
        }
    }

    #[test]
    fn offset_tables_are_consistent() {
        assert_eq!(FaceOffset::all_nonzero(2).len(), 8);
        assert_eq!(FaceOffset::all_nonzero(3).len(), 26);
        for k in 0..26 {
            let o = FaceOffset::new3(offset_3d(k));
            assert_eq!(bit_of(offset_3d(k)), k);
            assert_eq!(EARLIER_3D[k], earlier(o.components()));
            let mask: u32 = o.cofaces().iter().map(|s| 1u32 << bit_of(s.components)).sum();
            assert_eq!(MASK_3D[k], mask);
            assert_eq!(o.cofaces().len(), (1 << (3 - o.face_dim())) - 1);
            assert_eq!(SIGN_3D[k], if o.face_dim() % 2 == 0 { 1 } else { -1 });
        }
    }

    #[test]
    fn introduced_examples_2d() {
        // Centre 5 of a 3x3 image, with neighbors chosen per test.
        let grid = |t: f32, l: f32, r: f32, b: f32, tl: f32, tr: f32, bl: f32, br: f32| {
            chunk2(&[&[tl, t, tr], &[l, 5.0, r], &[bl, b, br]])
        };
        let v = [1, 1, 0];
        let top = FaceOffset::new2([-1, 0]);
        assert!(!introduced(&grid(5.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0), v, top));
        assert!(introduced(&grid(6.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0), v, top));
        let bottom = FaceOffset::new2([1, 0]);
        assert!(introduced(&grid(9.0, 9.0, 9.0, 5.0, 9.0, 9.0, 9.0, 9.0), v, bottom));

        let tl = FaceOffset::new2([-1, -1]);
        assert!(introduced(&grid(6.0, 6.0, 0.0, 0.0, 6.0, 0.0, 0.0, 0.0), v, tl));
        assert!(!introduced(&grid(6.0, 6.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0), v, tl));

        let br = FaceOffset::new2([1, 1]);
        assert!(introduced(&grid(0.0, 0.0, 5.0, 5.0, 0.0, 0.0, 0.0, 5.0), v, br));
        assert!(!introduced(&grid(0.0, 0.0, 5.0, 5.0, 0.0, 0.0, 0.0, 4.0), v, br));
    }

    #[test]
    fn single_voxel_introduces_everything() {
        let c = chunk2(&[&[3.0]]);
        for o in FaceOffset::all_nonzero(2) {
            assert!(introduced(&c, [0, 0, 0], o));
        }
        assert_eq!(voxel_contribution(&c, [0, 0, 0]), 1);

        let img = Image::from_u8(Dims::new(1, 1, 1).unwrap(), vec![9]).unwrap();
        let c3 = extract_padded_chunk::<u8>(&img, 0..1).unwrap().unwrap();
        assert_eq!(voxel_contribution(&c3, [0, 0, 0]), 1);
    }

    #[test]
    fn two_by_two_contributions() {
        let c = chunk2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let got: Vec<i64> = [[0, 0, 0], [0, 1, 0], [1, 0, 0], [1, 1, 0]]
            .iter()
            .map(|&v| voxel_contribution(&c, v))
            .collect();
        assert_eq!(got, vec![1, 0, 0, 0]);

        let c = chunk2(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let idx = chunk_index(&c).unwrap();
        let local = accumulate_chunk_sequential(&c, &idx).unwrap();
        assert_eq!(local.counts(), &[1, 0]);
    }

    #[test]
    fn accumulate_examples() {
        let c = chunk2(&[&[7.0]]);
        let idx = chunk_index(&c).unwrap();
        assert_eq!(accumulate_chunk(&c, &idx).unwrap().counts(), &[1]);

        let ring = chunk2(&[&[0.0, 0.0, 0.0], &[0.0, 9.0, 0.0], &[0.0, 0.0, 0.0]]);
        let idx = chunk_index(&ring).unwrap();
        assert_eq!(accumulate_chunk(&ring, &idx).unwrap().counts(), &[0, 1]);
    }

    #[test]
    fn missing_value_is_an_error() {
        let c = chunk2(&[&[1.0, 2.0]]);
        let idx = crate::index::build_index(&[1.0]).unwrap().into();
        assert!(matches!(
            accumulate_chunk_sequential(&c, &idx),
            Err(Error::ValueNotIndexed(v)) if v == 2.0
        ));
    }

    #[test]
    fn ranked_and_lookup_histograms_agree() {
        let dims = Dims::new(5, 9, 37).unwrap();
        let values: Vec<f32> = (0..dims.voxel_count()).map(|i| ((i * 7919) % 97) as f32 - 40.0).collect();
        let img = Image::from_f32(dims, values.clone()).unwrap();
        let chunk = extract_padded_chunk::<f32>(&img, 1..4).unwrap().unwrap();
        let ranked = chunk_index(&chunk).unwrap();
        assert!(ranked.ranks().is_some());
        let owned = &values[dims.slab_len()..4 * dims.slab_len()];
        let lookup: ChunkIndex = crate::index::build_index(owned).unwrap().into();
        let expected = accumulate_chunk_sequential(&chunk, &lookup).unwrap();
        assert_eq!(accumulate_chunk_sequential(&chunk, &ranked).unwrap(), expected);
        let pool = crate::exec::Workers::new(3).unwrap();
        assert_eq!(pool.run(|_| accumulate_chunk(&chunk, &ranked)).unwrap(), expected);
        assert_eq!(pool.run(|_| accumulate_chunk(&chunk, &lookup)).unwrap(), expected);
    }

    #[test]
    fn ranks_from_another_chunk_are_rejected() {
        let small = chunk2(&[&[1.0, 2.0]]);
        let big = chunk2(&[&[1.0, 2.0, 3.0]]);
        let idx = chunk_index(&big).unwrap();
        assert!(matches!(accumulate_chunk_sequential(&small, &idx), Err(Error::LengthMismatch { .. })));
    }

    fn image_strategy() -> impl Strategy<Value = Image> {
        (1usize..6, 1usize..6, prop_oneof![Just(1usize), 1usize..5])
            .prop_flat_map(|(a, b, c)| {
                let n = a * b * c;
                (Just((a, b, c)), prop::collection::vec(0u8..5, n))
            })
            .prop_map(|((a, b, c), v)| Image::from_u8(Dims::new(a, b, c).unwrap(), v).unwrap())
    }

    proptest! {
        #[test]
        fn unrolled_kernel_matches_reference(img in image_strategy()) {
            let dims = img.dims();
            let chunk = extract_padded_chunk::<u8>(&img, 0..dims.w0()).unwrap().unwrap();
            let idx = chunk_index(&chunk).unwrap();
            let mut expected = LocalVcec::zeros(256);
            let values = img.as_slice::<u8>().unwrap();
            for (i, &v) in values.iter().enumerate() {
                let c = voxel_contribution(&chunk, dims.coord_of(i));
                let bound = if dims.is_2d() { -3..=5 } else { -11..=13 };
                prop_assert!(bound.contains(&c));
                expected.counts[v as usize] += c;
            }
            let got = accumulate_chunk_sequential(&chunk, &idx).unwrap();
            prop_assert_eq!(&got, &expected);
            prop_assert_eq!(got.total(), 1);
            prop_assert_eq!(accumulate_chunk(&chunk, &idx).unwrap(), got);
        }
    }
}
