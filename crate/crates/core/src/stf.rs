//! STF tensor container plus PGM/PPM debug images.
//!
//! STF layout (little-endian): magic `STF1`, `u8` dtype code, `u8` semantic
//! tag, `u16` reserved (0), `u32` height, `u32` width, `u32` channels, then
//! the row-major `H×W×C` payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{
    ClassId, ContourMask, ContourProbMap, Grid, InstanceIds, OffsetField, PanopticMap,
    SemanticLabelMap, SemanticProbMap,
};

pub const MAGIC: &[u8; 4] = b"STF1";
pub const HEADER_LEN: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    U8 = 0,
    U16 = 1,
    U32 = 2,
    F32 = 3,
}

impl DType {
    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => DType::U8,
            1 => DType::U16,
            2 => DType::U32,
            3 => DType::F32,
            _ => return Err(Error::Format(format!("unknown dtype code {code}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::U16 => 2,
            DType::U32 | DType::F32 => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Tag {
    SemanticProbs = 0,
    Labels = 1,
    ContourProbs = 2,
    ContourMask = 3,
    Offsets = 4,
    InstanceIds = 5,
    PanopticEncoded = 6,
}

impl Tag {
    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => Tag::SemanticProbs,
            1 => Tag::Labels,
            2 => Tag::ContourProbs,
            3 => Tag::ContourMask,
            4 => Tag::Offsets,
            5 => Tag::InstanceIds,
            6 => Tag::PanopticEncoded,
            _ => return Err(Error::Format(format!("unknown semantic tag {code}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    U8(Vec<u8>),
    U16(Vec<u16>),
    U32(Vec<u32>),
    F32(Vec<f32>),
}

impl Payload {
    fn dtype(&self) -> DType {
        match self {
            Payload::U8(_) => DType::U8,
            Payload::U16(_) => DType::U16,
            Payload::U32(_) => DType::U32,
            Payload::F32(_) => DType::F32,
        }
    }

    fn len(&self) -> usize {
        match self {
            Payload::U8(v) => v.len(),
            Payload::U16(v) => v.len(),
            Payload::U32(v) => v.len(),
            Payload::F32(v) => v.len(),
        }
    }

    /// Widens any integer payload to `u32`.
    fn into_u32(self) -> Result<Vec<u32>> {
        Ok(match self {
            Payload::U8(v) => v.into_iter().map(u32::from).collect(),
            Payload::U16(v) => v.into_iter().map(u32::from).collect(),
            Payload::U32(v) => v,
            Payload::F32(_) => {
                return Err(Error::Format(
                    "expected an integer payload, found f32".into(),
                ))
            }
        })
    }

    fn into_f32(self) -> Result<Vec<f32>> {
        match self {
            Payload::F32(v) => Ok(v),
            other => Err(Error::Format(format!(
                "expected an f32 payload, found {:?}",
                other.dtype()
            ))),
        }
    }
}

/// Raw decoded STF tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct StfTensor {
    pub tag: Tag,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub payload: Payload,
}

impl StfTensor {
    pub fn to_bytes(&self) -> Vec<u8> {
        let dtype = self.payload.dtype();
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len() * dtype.size());
        out.extend_from_slice(MAGIC);
        out.push(dtype as u8);
        out.push(self.tag as u8);
        out.extend_from_slice(&0u16.to_le_bytes());
        for dim in [self.height, self.width, self.channels] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        match &self.payload {
            Payload::U8(v) => out.extend_from_slice(v),
            Payload::U16(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::U32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("missing STF1 magic bytes".into()));
        }
        let dtype = DType::from_code(bytes[4])?;
        let tag = Tag::from_code(bytes[5])?;
        let reserved = u16::from_le_bytes([bytes[6], bytes[7]]);
        if reserved != 0 {
            return Err(Error::Format(format!(
                "reserved header field is {reserved}, expected 0"
            )));
        }
        let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let (height, width, channels) = (dim(8), dim(12), dim(16));
        let count = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::Format("tensor dimensions overflow".into()))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != count * dtype.size() {
            return Err(Error::Format(format!(
                "payload is {} bytes, header implies {}",
                body.len(),
                count * dtype.size()
            )));
        }
        let payload = match dtype {
            DType::U8 => Payload::U8(body.to_vec()),
            DType::U16 => Payload::U16(
                body.chunks_exact(2)
                    .map(|b| u16::from_le_bytes([b[0], b[1]]))
                    .collect(),
            ),
            DType::U32 => Payload::U32(
                body.chunks_exact(4)
                    .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            ),
            DType::F32 => Payload::F32(
                body.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(StfTensor {
            tag,
            height,
            width,
            channels,
            payload,
        })
    }

    fn expect(&self, tag: Tag, channels: Option<usize>) -> Result<()> {
        if self.tag != tag {
            return Err(Error::Format(format!(
                "expected tensor tagged {tag:?}, found {:?}",
                self.tag
            )));
        }
        if let Some(c) = channels {
            if self.channels != c {
                return Err(Error::Format(format!(
                    "{tag:?} tensor must have {c} channel(s), found {}",
                    self.channels
                )));
            }
        }
        Ok(())
    }
}

/// A raster type with a fixed STF semantic tag.
pub trait StfRaster: Sized {
    const TAG: Tag;
    fn to_stf(&self) -> StfTensor;
    fn from_stf(t: StfTensor) -> Result<Self>;
}

impl StfRaster for SemanticProbMap {
    const TAG: Tag = Tag::SemanticProbs;

    fn to_stf(&self) -> StfTensor {
        StfTensor {
            tag: Self::TAG,
            height: self.height(),
            width: self.width(),
            channels: self.num_classes(),
            payload: Payload::F32(self.as_slice().to_vec()),
        }
    }

    fn from_stf(t: StfTensor) -> Result<Self> {
        t.expect(Self::TAG, None)?;
        SemanticProbMap::new(t.height, t.width, t.channels, t.payload.into_f32()?)
    }
}

impl StfRaster for SemanticLabelMap {
    const TAG: Tag = Tag::Labels;

    fn to_stf(&self) -> StfTensor {
        single_channel(Self::TAG, self, Payload::U16(self.as_slice().to_vec()))
    }

    fn from_stf(t: StfTensor) -> Result<Self> {
        t.expect(Self::TAG, Some(1))?;
        let (h, w) = (t.height, t.width);
        let values = t.payload.into_u32()?;
        let labels = narrow(values, w, "label", |v| ClassId::try_from(v).ok())?;
        Grid::from_vec(h, w, labels)
    }
}

impl StfRaster for ContourProbMap {
    const TAG: Tag = Tag::ContourProbs;

    fn to_stf(&self) -> StfTensor {
        single_channel(
            Self::TAG,
            self.grid(),
            Payload::F32(self.grid().as_slice().to_vec()),
        )
    }

    fn from_stf(t: StfTensor) -> Result<Self> {
        t.expect(Self::TAG, Some(1))?;
        ContourProbMap::new(Grid::from_vec(t.height, t.width, t.payload.into_f32()?)?)
    }
}

impl StfRaster for ContourMask {
    const TAG: Tag = Tag::ContourMask;

    fn to_stf(&self) -> StfTensor {
        single_channel(
            Self::TAG,
            self,
            Payload::U8(self.as_slice().iter().map(|&b| u8::from(b)).collect()),
        )
    }

    fn from_stf(t: StfTensor) -> Result<Self> {
        t.expect(Self::TAG, Some(1))?;
        let (h, w) = (t.height, t.width);
        let values = t.payload.into_u32()?;
        let mask = narrow(values, w, "mask value", |v| match v {
            0 => Some(false),
            1 => Some(true),
            _ => None,
        })?;
        Grid::from_vec(h, w, mask)
    }
}

impl StfRaster for OffsetField {
    const TAG: Tag = Tag::Offsets;

    fn to_stf(&self) -> StfTensor {
        let (height, width) = self.shape();
        StfTensor {
            tag: Self::TAG,
            height,
            width,
            channels: 2,
            payload: Payload::F32(self.as_slice().to_vec()),
        }
    }

    fn from_stf(t: StfTensor) -> Result<Self> {
        t.expect(Self::TAG, Some(2))?;
        OffsetField::new(t.height, t.width, t.payload.into_f32()?)
    }
}

impl StfRaster for InstanceIds {
    const TAG: Tag = Tag::InstanceIds;

    fn to_stf(&self) -> StfTensor {
        single_channel(Self::TAG, self, Payload::U32(self.as_slice().to_vec()))
    }

    fn from_stf(t: StfTensor) -> Result<Self> {
        t.expect(Self::TAG, Some(1))?;
        Grid::from_vec(t.height, t.width, t.payload.into_u32()?)
    }
}

impl StfRaster for PanopticMap {
    const TAG: Tag = Tag::PanopticEncoded;

    fn to_stf(&self) -> StfTensor {
        let encoded = self.to_encoded();
        single_channel(
            Self::TAG,
            &encoded,
            Payload::U32(encoded.as_slice().to_vec()),
        )
    }

    fn from_stf(t: StfTensor) -> Result<Self> {
        t.expect(Self::TAG, Some(1))?;
        let grid = Grid::from_vec(t.height, t.width, t.payload.into_u32()?)?;
        PanopticMap::from_encoded(&grid)
    }
}

fn single_channel<T>(tag: Tag, grid: &Grid<T>, payload: Payload) -> StfTensor {
    StfTensor {
        tag,
        height: grid.height(),
        width: grid.width(),
        channels: 1,
        payload,
    }
}

fn narrow<T>(
    values: Vec<u32>,
    width: usize,
    what: &str,
    f: impl Fn(u32) -> Option<T>,
) -> Result<Vec<T>> {
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            f(v).ok_or_else(|| {
                Error::Validation(format!(
                    "{what} {v} at pixel ({}, {}) is out of range",
                    i / width.max(1),
                    i % width.max(1)
                ))
            })
        })
        .collect()
}

/// Any raster readable from an STF file, dispatched on the semantic tag.
#[derive(Clone, Debug, PartialEq)]
pub enum Raster {
    SemanticProbs(SemanticProbMap),
    Labels(SemanticLabelMap),
    ContourProbs(ContourProbMap),
    ContourMask(ContourMask),
    Offsets(OffsetField),
    InstanceIds(InstanceIds),
    Panoptic(PanopticMap),
}

impl Raster {
    pub fn from_stf(t: StfTensor) -> Result<Self> {
        Ok(match t.tag {
            Tag::SemanticProbs => Raster::SemanticProbs(StfRaster::from_stf(t)?),
            Tag::Labels => Raster::Labels(StfRaster::from_stf(t)?),
            Tag::ContourProbs => Raster::ContourProbs(StfRaster::from_stf(t)?),
            Tag::ContourMask => Raster::ContourMask(StfRaster::from_stf(t)?),
            Tag::Offsets => Raster::Offsets(StfRaster::from_stf(t)?),
            Tag::InstanceIds => Raster::InstanceIds(StfRaster::from_stf(t)?),
            Tag::PanopticEncoded => Raster::Panoptic(StfRaster::from_stf(t)?),
        })
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads any STF raster, validating its invariants.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<Raster> {
    Raster::from_stf(StfTensor::from_bytes(&read_bytes(path.as_ref())?)?)
}

/// Reads an STF file that must hold raster type `T`.
pub fn read_as<T: StfRaster>(path: impl AsRef<Path>) -> Result<T> {
    T::from_stf(StfTensor::from_bytes(&read_bytes(path.as_ref())?)?)
}

pub fn write_tensor<T: StfRaster>(raster: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, raster.to_stf().to_bytes()).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// PGM / PPM
// ---------------------------------------------------------------------------

/// Writes a binary P5 PGM; maxval is 255 when every value fits, else 65535.
pub fn write_pgm<T: Copy + Into<u32>>(grid: &Grid<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let max = grid.as_slice().iter().map(|&v| v.into()).max().unwrap_or(0);
    if max > 65535 {
        return Err(Error::Validation(format!(
            "value {max} does not fit a 16-bit PGM"
        )));
    }
    let maxval = if max <= 255 { 255 } else { 65535 };
    let mut out = format!("P5\n{} {}\n{maxval}\n", grid.width(), grid.height()).into_bytes();
    for &v in grid.as_slice() {
        let v: u32 = v.into();
        if maxval == 255 {
            out.push(v as u8);
        } else {
            out.extend_from_slice(&(v as u16).to_be_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a binary P5 PGM (maxval up to 65535).
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Grid<u16>> {
    let bytes = read_bytes(path.as_ref())?;
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!(
            "expected P5 magic, found {}",
            fields[0]
        )));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM header field {s:?}")))
    };
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let body = &bytes[pos + 1.min(bytes.len() - pos)..];
    let sample = if maxval < 256 { 1 } else { 2 };
    if body.len() != width * height * sample {
        return Err(Error::Format(format!(
            "PGM body is {} bytes, expected {}",
            body.len(),
            width * height * sample
        )));
    }
    let data = if sample == 1 {
        body.iter().map(|&b| u16::from(b)).collect()
    } else {
        body.chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    };
    Grid::from_vec(height, width, data)
}

/// Deterministic debug rendering of a panoptic map as binary P6 PPM.
pub fn write_panoptic_ppm(map: &PanopticMap, path: impl AsRef<Path>) -> Result<()> {
    const PALETTE: [[u8; 3]; 12] = [
        [128, 64, 128],
        [70, 70, 70],
        [107, 142, 35],
        [70, 130, 180],
        [153, 153, 153],
        [220, 20, 60],
        [0, 0, 142],
        [0, 0, 70],
        [250, 170, 30],
        [119, 11, 32],
        [0, 80, 100],
        [244, 35, 232],
    ];
    let path = path.as_ref();
    let grid = map.grid();
    let mut out = format!("P6\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    for p in grid.as_slice() {
        let base = PALETTE[usize::from(p.class_id) % PALETTE.len()];
        // Shift instances of one class apart by a fixed per-instance step.
        let shift = (u32::from(p.instance_id) * 37 % 96) as u8;
        for ch in base {
            out.push(ch.wrapping_add(shift));
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::PanopticPixel;
    use proptest::prelude::*;

    #[test]
    fn label_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.stf");
        let labels: SemanticLabelMap = Grid::from_rows(vec![vec![0, 1], vec![1, 0]]);
        write_tensor(&labels, &path).unwrap();
        assert_eq!(read_as::<SemanticLabelMap>(&path).unwrap(), labels);
        assert_eq!(read_tensor(&path).unwrap(), Raster::Labels(labels));
    }

    #[test]
    fn missing_magic_is_format_error() {
        let labels: SemanticLabelMap = Grid::from_rows(vec![vec![0, 1]]);
        let mut bytes = labels.to_stf().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            StfTensor::from_bytes(&bytes),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn out_of_range_contour_probability_names_first_pixel() {
        let mut values = vec![0.5f32; 9];
        values[5] = 1.5;
        values[7] = 1.5;
        let t = StfTensor {
            tag: Tag::ContourProbs,
            height: 3,
            width: 3,
            channels: 1,
            payload: Payload::F32(values),
        };
        let err = Raster::from_stf(StfTensor::from_bytes(&t.to_bytes()).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("(1, 2)"), "{err}");
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let ids: InstanceIds = Grid::from_rows(vec![vec![1, 2, 3]]);
        let bytes = ids.to_stf().to_bytes();
        assert!(matches!(
            StfTensor::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn header_layout_is_fixed() {
        let ids: InstanceIds = Grid::from_rows(vec![vec![7]]);
        let bytes = ids.to_stf().to_bytes();
        assert_eq!(
            bytes,
            [b'S', b'T', b'F', b'1', 2, 5, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 7, 0, 0, 0]
        );
    }

    #[test]
    fn panoptic_is_stored_encoded() {
        let map = PanopticMap::new(Grid::from_rows(vec![vec![
            PanopticPixel::new(11, 2),
            PanopticPixel::new(3, 0),
        ]]))
        .unwrap();
        let t = map.to_stf();
        assert_eq!(t.payload, Payload::U32(vec![11002, 3000]));
        assert_eq!(PanopticMap::from_stf(t).unwrap(), map);
    }

    #[test]
    fn pgm_round_trip_8_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let small: Grid<u16> = Grid::from_rows(vec![vec![0, 255], vec![3, 4]]);
        let p = dir.path().join("a.pgm");
        write_pgm(&small, &p).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), small);
        let big: Grid<u16> = Grid::from_rows(vec![vec![0, 1000, 65535]]);
        write_pgm(&big, &p).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), big);
    }

    proptest! {
        #[test]
        fn float_and_integer_payloads_round_trip(
            h in 1usize..6, w in 1usize..6, seed in any::<u64>()
        ) {
            let n = h * w;
            let mut state = seed;
            let mut next = || { state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); state };
            let offsets: Vec<f32> = (0..2 * n).map(|_| f32::from_bits((next() >> 33) as u32 & 0x3fff_ffff) - 1.0).collect();
            let field = OffsetField::new(h, w, offsets).unwrap();
            let back = OffsetField::from_stf(StfTensor::from_bytes(&field.to_stf().to_bytes()).unwrap()).unwrap();
            let same_bits = back.as_slice().iter().zip(field.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same_bits);

            let ids: InstanceIds = Grid::from_vec(h, w, (0..n).map(|_| (next() >> 40) as u32).collect()).unwrap();
            let back = InstanceIds::from_stf(StfTensor::from_bytes(&ids.to_stf().to_bytes()).unwrap()).unwrap();
            prop_assert_eq!(back, ids);

            let pan = PanopticMap::new(Grid::from_vec(h, w, (0..n).map(|_| {
                let v = next();
                PanopticPixel::new((v >> 50) as u16 % 40, (v >> 20) as u16 % 1000)
            }).collect()).unwrap()).unwrap();
            let back = PanopticMap::from_encoded(&pan.to_encoded()).unwrap();
            prop_assert_eq!(back, pan);
        }
    }
}
