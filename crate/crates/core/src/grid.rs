//! Images, raw volume I/O, index arithmetic and padded chunks.
//!
//! Images are always three-dimensional in memory; a 2D image is stored with
//! `w2 == 1`. Values are row-major with axis 0 most significant, which makes
//! every slab along axis 0 a contiguous byte range of a raw file.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims([usize; 3]);

impl Dims {
    pub fn new(w0: usize, w1: usize, w2: usize) -> Result<Self> {
        if w0 == 0 || w1 == 0 || w2 == 0 {
            return Err(Error::InvalidDims(vec![w0, w1, w2]));
        }
        Ok(Dims([w0, w1, w2]))
    }

    /// Accepts two extents (a 2D image) or three.
    pub fn from_slice(extents: &[usize]) -> Result<Self> {
        match *extents {
            [w0, w1] => Dims::new(w0, w1, 1),
            [w0, w1, w2] => Dims::new(w0, w1, w2),
            _ => Err(Error::InvalidDims(extents.to_vec())),
        }
    }

    pub fn extents(&self) -> [usize; 3] {
        self.0
    }

    pub fn w0(&self) -> usize {
        self.0[0]
    }

    pub fn w1(&self) -> usize {
        self.0[1]
    }

    pub fn w2(&self) -> usize {
        self.0[2]
    }

    pub fn voxel_count(&self) -> usize {
        self.0.iter().product()
    }

    /// Voxels in one slab of thickness 1 along axis 0.
    pub fn slab_len(&self) -> usize {
        self.0[1] * self.0[2]
    }

    pub fn is_2d(&self) -> bool {
        self.0[2] == 1
    }

    pub fn contains(&self, coord: [usize; 3]) -> bool {
        coord.iter().zip(self.0.iter()).all(|(x, w)| x < w)
    }

    pub fn linear_index(&self, coord: [usize; 3]) -> Result<usize> {
        if !self.contains(coord) {
            return Err(Error::CoordOutOfRange {
                coord,
                dims: self.0,
            });
        }
        let [_, w1, w2] = self.0;
        Ok(coord[0] * w1 * w2 + coord[1] * w2 + coord[2])
    }

    pub fn coord_of(&self, index: usize) -> [usize; 3] {
        let [_, w1, w2] = self.0;
        [index / (w1 * w2), (index / w2) % w1, index % w2]
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [w0, w1, w2] = self.0;
        write!(f, "{w0}x{w1}x{w2}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ValueKind {
    U8,
    F32,
}

impl ValueKind {
    pub fn bytes_per_value(self) -> usize {
        match self {
            ValueKind::U8 => 1,
            ValueKind::F32 => 4,
        }
    }

    /// Bytes per element of padded-chunk storage (U8 is widened to `i16`).
    pub fn extended_bytes(self) -> usize {
        match self {
            ValueKind::U8 => std::mem::size_of::<i16>(),
            ValueKind::F32 => std::mem::size_of::<f32>(),
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::U8 => "u8",
            ValueKind::F32 => "f32",
        })
    }
}

impl FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u8" | "uint8" => Ok(ValueKind::U8),
            "f32" | "float32" | "float" => Ok(ValueKind::F32),
            other => Err(Error::Parse {
                what: "dtype",
                detail: format!("unknown dtype `{other}` (expected u8 or f32)"),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Endian {
    #[default]
    Little,
    Big,
}

mod sealed {
    pub trait Sealed {}
    impl Sealed for u8 {}
    impl Sealed for f32 {}
}

/// A stored voxel type together with its extended (sentinel-capable) domain.
pub trait Voxel: sealed::Sealed + Copy + PartialOrd + Send + Sync + fmt::Debug + 'static {
    /// Domain of padded-chunk storage; `SENTINEL` compares greater than any
    /// widened finite value.
    type Ext: Copy + PartialOrd + Send + Sync + fmt::Debug + 'static;

    const KIND: ValueKind;
    const SENTINEL: Self::Ext;

    fn to_ext(self) -> Self::Ext;

    /// Grayscale value of a widened finite voxel, as used for thresholds.
    fn ext_value(ext: Self::Ext) -> f32;

    fn slice(values: &Values) -> Option<&[Self]>;

    fn into_values(values: Vec<Self>) -> Values;

    /// Decodes `bytes.len() / KIND.bytes_per_value()` values into `out`.
    fn decode(bytes: &[u8], endian: Endian, out: &mut Vec<Self>);

    fn encode(values: &[Self], endian: Endian, out: &mut Vec<u8>);

    /// Returns the offset of the first NaN, if any.
    fn first_nan(values: &[Self]) -> Option<usize>;
}

impl Voxel for u8 {
    type Ext = i16;

    const KIND: ValueKind = ValueKind::U8;
    const SENTINEL: i16 = 256;

    #[inline(always)]
    fn to_ext(self) -> i16 {
        self as i16
    }

    #[inline(always)]
    fn ext_value(ext: i16) -> f32 {
        ext as f32
    }

    fn slice(values: &Values) -> Option<&[u8]> {
        match values {
            Values::U8(v) => Some(v),
            Values::F32(_) => None,
        }
    }

    fn into_values(values: Vec<u8>) -> Values {
        Values::U8(values)
    }

    fn decode(bytes: &[u8], _endian: Endian, out: &mut Vec<u8>) {
        out.extend_from_slice(bytes);
    }

    fn encode(values: &[u8], _endian: Endian, out: &mut Vec<u8>) {
        out.extend_from_slice(values);
    }

    fn first_nan(_values: &[u8]) -> Option<usize> {
        None
    }
}

impl Voxel for f32 {
    type Ext = f32;

    const KIND: ValueKind = ValueKind::F32;
    const SENTINEL: f32 = f32::INFINITY;

    #[inline(always)]
    fn to_ext(self) -> f32 {
        self
    }

    #[inline(always)]
    fn ext_value(ext: f32) -> f32 {
        ext
    }

    fn slice(values: &Values) -> Option<&[f32]> {
        match values {
            Values::F32(v) => Some(v),
            Values::U8(_) => None,
        }
    }

    fn into_values(values: Vec<f32>) -> Values {
        Values::F32(values)
    }

    fn decode(bytes: &[u8], endian: Endian, out: &mut Vec<f32>) {
        out.extend(bytes.chunks_exact(4).map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            match endian {
                Endian::Little => f32::from_le_bytes(b),
                Endian::Big => f32::from_be_bytes(b),
            }
        }));
    }

    fn encode(values: &[f32], endian: Endian, out: &mut Vec<u8>) {
        for v in values {
            out.extend_from_slice(&match endian {
                Endian::Little => v.to_le_bytes(),
                Endian::Big => v.to_be_bytes(),
            });
        }
    }

    fn first_nan(values: &[f32]) -> Option<usize> {
        values.iter().position(|v| v.is_nan())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Values {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl Values {
    pub fn len(&self) -> usize {
        match self {
            Values::U8(v) => v.len(),
            Values::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Values::U8(_) => ValueKind::U8,
            Values::F32(_) => ValueKind::F32,
        }
    }
}

/// Dense row-major grayscale image. Never contains NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    dims: Dims,
    values: Values,
}

impl Image {
    pub fn new(dims: Dims, values: Values) -> Result<Self> {
        if values.len() != dims.voxel_count() {
            return Err(Error::LengthMismatch {
                dims: dims.extents(),
                expected: dims.voxel_count(),
                actual: values.len(),
            });
        }
        if let Values::F32(v) = &values {
            if let Some(index) = f32::first_nan(v) {
                return Err(Error::NaN { index });
            }
        }
        Ok(Image { dims, values })
    }

    pub fn from_u8(dims: Dims, values: Vec<u8>) -> Result<Self> {
        Image::new(dims, Values::U8(values))
    }

    pub fn from_f32(dims: Dims, values: Vec<f32>) -> Result<Self> {
        Image::new(dims, Values::F32(values))
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn kind(&self) -> ValueKind {
        self.values.kind()
    }

    pub fn values(&self) -> &Values {
        &self.values
    }

    pub fn into_values(self) -> Values {
        self.values
    }

    pub fn as_slice<T: Voxel>(&self) -> Option<&[T]> {
        T::slice(&self.values)
    }

    /// Grayscale value at a linear index, widened to `f32`.
    pub fn value_f32(&self, index: usize) -> f32 {
        match &self.values {
            Values::U8(v) => v[index] as f32,
            Values::F32(v) => v[index],
        }
    }

    /// All values widened to `f32`; exact for both kinds.
    pub fn to_f32_vec(&self) -> Vec<f32> {
        match &self.values {
            Values::U8(v) => v.iter().map(|&x| x as f32).collect(),
            Values::F32(v) => v.clone(),
        }
    }

    pub fn to_f32(&self) -> Image {
        Image {
            dims: self.dims,
            values: Values::F32(self.to_f32_vec()),
        }
    }

    pub fn byte_len(&self) -> u64 {
        (self.dims.voxel_count() * self.kind().bytes_per_value()) as u64
    }
}

pub fn load_raw(path: &Path, dims: Dims, kind: ValueKind, endian: Endian) -> Result<Image> {
    let expected = (dims.voxel_count() * kind.bytes_per_value()) as u64;
    let actual = fs::metadata(path)?.len();
    if actual != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    let mut bytes = Vec::with_capacity(expected as usize);
    File::open(path)?.read_to_end(&mut bytes)?;
    let values = match kind {
        ValueKind::U8 => Values::U8(bytes),
        ValueKind::F32 => {
            let mut v = Vec::with_capacity(dims.voxel_count());
            f32::decode(&bytes, endian, &mut v);
            Values::F32(v)
        }
    };
    Image::new(dims, values)
}

pub fn write_raw(image: &Image, path: &Path, endian: Endian) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    // Encode in bounded pieces so large volumes never need a second full copy.
    const PIECE: usize = 1 << 20;
    let mut buf = Vec::new();
    match image.values() {
        Values::U8(v) => out.write_all(v)?,
        Values::F32(v) => {
            for piece in v.chunks(PIECE) {
                buf.clear();
                f32::encode(piece, endian, &mut buf);
                out.write_all(&buf)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Path of the sidecar metadata file describing a headerless raw volume.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    let mut name = raw.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

pub fn write_sidecar(raw: &Path, dims: Dims, kind: ValueKind) -> Result<()> {
    let [w0, w1, w2] = dims.extents();
    fs::write(sidecar_path(raw), format!("{w0} {w1} {w2} {kind}\n"))?;
    Ok(())
}

/// Reads `<raw>.meta` (one line: `w0 w1 w2 dtype`) when it exists.
pub fn read_sidecar(raw: &Path) -> Result<Option<(Dims, ValueKind)>> {
    let path = sidecar_path(raw);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    let fields: Vec<&str> = text.split_whitespace().collect();
    let bad = |detail: String| Error::Parse {
        what: "sidecar metadata",
        detail: format!("{}: {detail}", path.display()),
    };
    if fields.len() != 4 {
        return Err(bad(format!("expected `w0 w1 w2 dtype`, got {:?}", text.trim())));
    }
    let mut extents = [0usize; 3];
    for (slot, field) in extents.iter_mut().zip(&fields[..3]) {
        *slot = field
            .parse()
            .map_err(|_| bad(format!("`{field}` is not an extent")))?;
    }
    let dims = Dims::from_slice(&extents)?;
    Ok(Some((dims, fields[3].parse()?)))
}

/// Tracks bytes of live chunk storage (padded values and per-chunk index
/// arrays) and the high-water mark.
#[derive(Clone, Debug, Default)]
pub struct StorageMeter(Arc<MeterInner>);

#[derive(Debug, Default)]
struct MeterInner {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl StorageMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current(&self) -> usize {
        self.0.current.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.0.peak.load(Ordering::SeqCst)
    }

    pub(crate) fn charge(&self, bytes: usize) -> MeterGuard {
        let now = self.0.current.fetch_add(bytes, Ordering::SeqCst) + bytes;
        self.0.peak.fetch_max(now, Ordering::SeqCst);
        MeterGuard {
            meter: self.clone(),
            bytes,
        }
    }
}

#[derive(Debug)]
pub(crate) struct MeterGuard {
    meter: StorageMeter,
    bytes: usize,
}

impl Drop for MeterGuard {
    fn drop(&mut self) {
        self.meter.0.current.fetch_sub(self.bytes, Ordering::SeqCst);
    }
}

/// Slab `[a, b)` of an image along axis 0, surrounded by a one-voxel collar.
///
/// The collar holds the neighboring image rows `a - 1` and `b` when they
/// exist, and `T::SENTINEL` everywhere outside the image.
#[derive(Debug)]
pub struct PaddedChunk<T: Voxel> {
    range: Range<usize>,
    image_dims: Dims,
    shape: [usize; 3],
    storage: Vec<T::Ext>,
    _meter: Option<MeterGuard>,
}

impl<T: Voxel> PaddedChunk<T> {
    /// Sentinel-filled chunk for `range`; image rows are filled by the caller.
    pub(crate) fn sentinel(
        image_dims: Dims,
        range: Range<usize>,
        meter: Option<&StorageMeter>,
    ) -> Result<Self> {
        check_range(image_dims, &range)?;
        let shape = [
            range.len() + 2,
            image_dims.w1() + 2,
            image_dims.w2() + 2,
        ];
        let len = shape.iter().product::<usize>();
        let guard = meter.map(|m| m.charge(len * std::mem::size_of::<T::Ext>()));
        Ok(PaddedChunk {
            range,
            image_dims,
            shape,
            storage: vec![T::SENTINEL; len],
            _meter: guard,
        })
    }

    /// Rows of the image this chunk needs: the owned range plus one padding
    /// row on each side where the image has one.
    pub fn source_rows(&self) -> Range<usize> {
        self.range.start.saturating_sub(1)..(self.range.end + 1).min(self.image_dims.w0())
    }

    /// Copies image row `x0` (a `w1 * w2` slab) into the chunk.
    pub(crate) fn fill_row(&mut self, x0: usize, row: &[T]) {
        debug_assert!(self.source_rows().contains(&x0));
        debug_assert_eq!(row.len(), self.image_dims.slab_len());
        let p0 = x0 + 1 - self.range.start;
        let [_, s1, s2] = self.shape;
        let w2 = self.image_dims.w2();
        for (j, line) in row.chunks_exact(w2).enumerate() {
            let start = (p0 * s1 + j + 1) * s2 + 1;
            for (dst, &v) in self.storage[start..start + w2].iter_mut().zip(line) {
                *dst = v.to_ext();
            }
        }
    }

    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    pub fn image_dims(&self) -> Dims {
        self.image_dims
    }

    /// Extents of the padded storage: `(b - a + 2, w1 + 2, w2 + 2)`.
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn storage(&self) -> &[T::Ext] {
        &self.storage
    }

    pub fn storage_bytes(&self) -> usize {
        std::mem::size_of_val(self.storage.as_slice())
    }

    /// Value at a padded coordinate.
    pub fn get(&self, p: [usize; 3]) -> T::Ext {
        let [_, s1, s2] = self.shape;
        self.storage[(p[0] * s1 + p[1]) * s2 + p[2]]
    }

    pub fn owned_voxel_count(&self) -> usize {
        self.range.len() * self.image_dims.slab_len()
    }

    /// Owned voxel values in row-major order.
    pub fn owned_values(&self) -> impl Iterator<Item = T::Ext> + '_ {
        let [s0, s1, s2] = self.shape;
        (1..s0 - 1).flat_map(move |p0| {
            (1..s1 - 1).flat_map(move |p1| {
                let start = (p0 * s1 + p1) * s2 + 1;
                self.storage[start..start + s2 - 2].iter().copied()
            })
        })
    }
}

fn check_range(dims: Dims, range: &Range<usize>) -> Result<()> {
    if range.start >= range.end || range.end > dims.w0() {
        return Err(Error::BadRange {
            start: range.start,
            end: range.end,
            extent: dims.w0(),
        });
    }
    Ok(())
}

/// Extracts the padded chunk owning rows `range` of an in-memory image.
///
/// Returns `None` when the image does not hold values of type `T`.
pub fn extract_padded_chunk<T: Voxel>(
    image: &Image,
    range: Range<usize>,
) -> Result<Option<PaddedChunk<T>>> {
    extract_padded_chunk_metered(image, range, None)
}

pub(crate) fn extract_padded_chunk_metered<T: Voxel>(
    image: &Image,
    range: Range<usize>,
    meter: Option<&StorageMeter>,
) -> Result<Option<PaddedChunk<T>>> {
    let Some(values) = image.as_slice::<T>() else {
        return Ok(None);
    };
    let dims = image.dims();
    let mut chunk = PaddedChunk::sentinel(dims, range, meter)?;
    let slab = dims.slab_len();
    for x0 in chunk.source_rows() {
        chunk.fill_row(x0, &values[x0 * slab..(x0 + 1) * slab]);
    }
    Ok(Some(chunk))
}
