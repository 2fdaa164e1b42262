//! Raster and tensor domain types shared by every pipeline stage.
//!
//! All rasters are row-major. Multi-channel rasters interleave channels per
//! pixel (`H×W×C`). Float payloads are `f32` so that they round-trip through
//! the STF container bit-exactly.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_shape, Error, Result};

/// Semantic class identifier.
pub type ClassId = u16;

/// Tolerance on the per-pixel channel sum of a [`SemanticProbMap`].
pub const PROB_SUM_TOLERANCE: f64 = 1e-5;

/// Dense row-major 2-d grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Boolean mask (e.g. instance class mask).
pub type Mask = Grid<bool>;
/// Binary instance-contour mask, `true` on contour pixels.
pub type ContourMask = Grid<bool>;
/// Per-pixel semantic class ids.
pub type SemanticLabelMap = Grid<ClassId>;
/// Per-pixel instance ids, 0 meaning "no instance".
pub type InstanceIds = Grid<u32>;

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Grid {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

impl<T: Clone + Default> Grid<T> {
    pub fn new(height: usize, width: usize) -> Self {
        Self::filled(height, width, T::default())
    }
}

impl<T> Grid<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Validation(format!(
                "grid payload has {} elements, expected {}x{}={}",
                data.len(),
                height,
                width,
                height * width
            )));
        }
        Ok(Grid {
            height,
            width,
            data,
        })
    }

    /// Builds a grid from nested rows; panics on ragged input. Test helper.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == width), "ragged rows");
        Grid {
            height,
            width,
            data: rows.into_iter().flatten().collect(),
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    /// `(row, col)` of a linear offset.
    #[inline]
    pub fn position(&self, offset: usize) -> (usize, usize) {
        (offset / self.width, offset % self.width)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.width.max(1))
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    #[inline]
    fn index(&self, (row, col): (usize, usize)) -> &T {
        &self.data[self.offset(row, col)]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, (row, col): (usize, usize)) -> &mut T {
        let i = self.offset(row, col);
        &mut self.data[i]
    }
}

// ---------------------------------------------------------------------------
// Class catalog
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: ClassId,
    pub name: String,
    pub is_thing: bool,
}

/// Ordered list of semantic classes with contiguous ids `0..K`.
///
/// The id `K` is reserved for the void label used in panoptic output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CatalogRepr", into = "CatalogRepr")]
pub struct ClassCatalog {
    classes: Vec<ClassInfo>,
}

#[derive(Serialize, Deserialize)]
struct CatalogRepr {
    classes: Vec<ClassInfo>,
}

impl TryFrom<CatalogRepr> for ClassCatalog {
    type Error = Error;

    fn try_from(repr: CatalogRepr) -> Result<Self> {
        ClassCatalog::new(repr.classes)
    }
}

impl From<ClassCatalog> for CatalogRepr {
    fn from(c: ClassCatalog) -> Self {
        CatalogRepr { classes: c.classes }
    }
}

impl ClassCatalog {
    pub fn new(mut classes: Vec<ClassInfo>) -> Result<Self> {
        classes.sort_by_key(|c| c.id);
        for (i, c) in classes.iter().enumerate() {
            if usize::from(c.id) != i {
                return Err(Error::Validation(format!(
                    "class ids must be unique and contiguous from 0; found id {} at position {}",
                    c.id, i
                )));
            }
        }
        if classes.len() >= usize::from(ClassId::MAX) {
            return Err(Error::Validation("too many classes".into()));
        }
        Ok(ClassCatalog { classes })
    }

    /// Convenience constructor from `(name, is_thing)` pairs, ids assigned in order.
    pub fn from_names<S: Into<String>>(
        entries: impl IntoIterator<Item = (S, bool)>,
    ) -> Result<Self> {
        let classes = entries
            .into_iter()
            .enumerate()
            .map(|(i, (name, is_thing))| ClassInfo {
                id: i as ClassId,
                name: name.into(),
                is_thing,
            })
            .collect();
        Self::new(classes)
    }

    /// Catalog used by the synthetic scene generator.
    pub fn synthetic_default() -> Self {
        Self::from_names([
            ("road", false),
            ("building", false),
            ("vegetation", false),
            ("sky", false),
            ("pole", false),
            ("person", true),
            ("car", true),
            ("truck", true),
        ])
        .expect("static catalog is valid")
    }

    /// Fails unless at least one thing and one stuff class exist.
    pub fn require_panoptic(&self) -> Result<()> {
        if self.thing_ids().next().is_none() || self.stuff_ids().next().is_none() {
            return Err(Error::Validation(
                "panoptic operation needs at least one thing and one stuff class".into(),
            ));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Reserved void label, equal to `K`.
    pub fn void_id(&self) -> ClassId {
        self.classes.len() as ClassId
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn get(&self, id: ClassId) -> Option<&ClassInfo> {
        self.classes.get(usize::from(id))
    }

    pub fn contains(&self, id: ClassId) -> bool {
        usize::from(id) < self.classes.len()
    }

    pub fn is_thing(&self, id: ClassId) -> bool {
        self.get(id).is_some_and(|c| c.is_thing)
    }

    pub fn is_stuff(&self, id: ClassId) -> bool {
        self.get(id).is_some_and(|c| !c.is_thing)
    }

    pub fn thing_ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.iter().filter(|c| c.is_thing).map(|c| c.id)
    }

    pub fn stuff_ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.iter().filter(|c| !c.is_thing).map(|c| c.id)
    }

    /// Checks that every label is a catalog class.
    pub fn validate_labels(&self, labels: &SemanticLabelMap) -> Result<()> {
        if let Some(i) = labels.as_slice().iter().position(|&l| !self.contains(l)) {
            let (r, c) = labels.position(i);
            return Err(Error::Validation(format!(
                "label {} at pixel ({r}, {c}) is outside the catalog (K = {})",
                labels.as_slice()[i],
                self.num_classes()
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

// ---------------------------------------------------------------------------
// Probability maps and offsets
// ---------------------------------------------------------------------------

/// Per-pixel softmax output, `H×W×K`.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticProbMap {
    height: usize,
    width: usize,
    classes: usize,
    probs: Vec<f32>,
}

impl SemanticProbMap {
    pub fn new(height: usize, width: usize, classes: usize, probs: Vec<f32>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Validation(
                "semantic probabilities need K >= 1".into(),
            ));
        }
        if probs.len() != height * width * classes {
            return Err(Error::Validation(format!(
                "semantic payload has {} values, expected {height}x{width}x{classes}",
                probs.len()
            )));
        }
        for (i, px) in probs.chunks(classes).enumerate() {
            let (r, c) = (i / width, i % width);
            if let Some(&v) = px.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Validation(format!(
                    "semantic probability {v} outside [0,1] at pixel ({r}, {c})"
                )));
            }
            let sum: f64 = px.iter().map(|&v| f64::from(v)).sum();
            if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "semantic probabilities at pixel ({r}, {c}) sum to {sum}"
                )));
            }
        }
        Ok(SemanticProbMap {
            height,
            width,
            classes,
            probs,
        })
    }

    /// One-hot probabilities for the given labels.
    pub fn one_hot(labels: &SemanticLabelMap, classes: usize) -> Result<Self> {
        let mut probs = vec![0.0f32; labels.len() * classes];
        for (i, &l) in labels.as_slice().iter().enumerate() {
            let l = usize::from(l);
            if l >= classes {
                let (r, c) = labels.position(i);
                return Err(Error::Validation(format!(
                    "label {l} at pixel ({r}, {c}) exceeds K = {classes}"
                )));
            }
            probs[i * classes + l] = 1.0;
        }
        Ok(SemanticProbMap {
            height: labels.height(),
            width: labels.width(),
            classes,
            probs,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    /// Channel vector of the pixel at linear offset `i`.
    #[inline]
    pub fn pixel(&self, i: usize) -> &[f32] {
        &self.probs[i * self.classes..(i + 1) * self.classes]
    }

    #[inline]
    pub fn prob(&self, i: usize, class: usize) -> f32 {
        self.probs[i * self.classes + class]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.probs
    }
}

/// Per-pixel instance-contour probability (sigmoid output).
#[derive(Clone, Debug, PartialEq)]
pub struct ContourProbMap(Grid<f32>);

impl ContourProbMap {
    pub fn new(grid: Grid<f32>) -> Result<Self> {
        if let Some(i) = grid
            .as_slice()
            .iter()
            .position(|v| !(0.0..=1.0).contains(v))
        {
            let (r, c) = grid.position(i);
            return Err(Error::Validation(format!(
                "contour probability {} outside [0,1] at pixel ({r}, {c})",
                grid.as_slice()[i]
            )));
        }
        Ok(ContourProbMap(grid))
    }

    /// Probability 1 on mask pixels, 0 elsewhere.
    pub fn from_mask(mask: &ContourMask) -> Self {
        ContourProbMap(mask.map(|&b| if b { 1.0 } else { 0.0 }))
    }

    pub fn grid(&self) -> &Grid<f32> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<f32> {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }
}

/// Per-pixel `(Δrow, Δcol)` offsets towards the instance center, in pixels.
///
/// The predicted center of pixel `p` is `position(p) + offset(p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetField {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl OffsetField {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 2 {
            return Err(Error::Validation(format!(
                "offset payload has {} values, expected {height}x{width}x2",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let p = i / 2;
            return Err(Error::Validation(format!(
                "non-finite offset at pixel ({}, {})",
                p / width,
                p % width
            )));
        }
        Ok(OffsetField {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        OffsetField {
            height,
            width,
            data: vec![0.0; height * width * 2],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn offset(&self, i: usize) -> (f32, f32) {
        (self.data[2 * i], self.data[2 * i + 1])
    }

    #[inline]
    pub fn set(&mut self, i: usize, d_row: f32, d_col: f32) {
        self.data[2 * i] = d_row;
        self.data[2 * i + 1] = d_col;
    }

    /// Predicted instance center for the pixel at linear offset `i`.
    #[inline]
    pub fn predicted_center(&self, i: usize) -> (f64, f64) {
        let (dr, dc) = self.offset(i);
        (
            (i / self.width) as f64 + f64::from(dr),
            (i % self.width) as f64 + f64::from(dc),
        )
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

// ---------------------------------------------------------------------------
// Instances
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u32,
    pub class_id: ClassId,
    pub area: usize,
    /// Mean `(row, col)` of the instance pixels.
    pub centroid: (f64, f64),
    pub confidence: f64,
}

/// Pixel count and centroid of an instance id.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub area: usize,
    pub centroid: (f64, f64),
}

/// Area and centroid of every nonzero id, indexed by id (index 0 unused).
pub fn instance_geometry(ids: &InstanceIds) -> Vec<Option<Geometry>> {
    let max_id = ids.as_slice().iter().copied().max().unwrap_or(0) as usize;
    let mut acc = vec![(0usize, 0.0f64, 0.0f64); max_id + 1];
    for (r, row) in ids.rows().enumerate() {
        for (c, &id) in row.iter().enumerate() {
            if id != 0 {
                let a = &mut acc[id as usize];
                a.0 += 1;
                a.1 += r as f64;
                a.2 += c as f64;
            }
        }
    }
    acc.into_iter()
        .enumerate()
        .map(|(id, (n, sr, sc))| {
            (id != 0 && n > 0).then(|| Geometry {
                area: n,
                centroid: (sr / n as f64, sc / n as f64),
            })
        })
        .collect()
}

/// Instance id map plus one record per instance, records sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceLabelMap {
    ids: InstanceIds,
    records: Vec<InstanceRecord>,
}

impl InstanceLabelMap {
    /// Validates the record/id correspondence and geometric fields.
    pub fn new(ids: InstanceIds, mut records: Vec<InstanceRecord>) -> Result<Self> {
        records.sort_by_key(|r| r.id);
        let geometry = instance_geometry(&ids);
        let present = geometry.iter().filter(|g| g.is_some()).count();
        if present != records.len() {
            return Err(Error::Validation(format!(
                "{} instance ids present but {} records supplied",
                present,
                records.len()
            )));
        }
        for rec in &records {
            let g = geometry
                .get(rec.id as usize)
                .copied()
                .flatten()
                .ok_or_else(|| {
                    Error::Validation(format!("record for id {} has no pixels", rec.id))
                })?;
            if g.area != rec.area {
                return Err(Error::Validation(format!(
                    "record {} has area {} but id covers {} pixels",
                    rec.id, rec.area, g.area
                )));
            }
            let tol = 1e-6 * (1.0 + g.centroid.0.abs() + g.centroid.1.abs());
            if (g.centroid.0 - rec.centroid.0).abs() > tol
                || (g.centroid.1 - rec.centroid.1).abs() > tol
            {
                return Err(Error::Validation(format!(
                    "record {} centroid {:?} differs from pixel mean {:?}",
                    rec.id, rec.centroid, g.centroid
                )));
            }
            if !(0.0..=1.0).contains(&rec.confidence) {
                return Err(Error::Validation(format!(
                    "record {} confidence {} outside [0,1]",
                    rec.id, rec.confidence
                )));
            }
        }
        Ok(InstanceLabelMap { ids, records })
    }

    /// Additionally checks that every record class is a thing class.
    pub fn validate_classes(&self, catalog: &ClassCatalog) -> Result<()> {
        for rec in &self.records {
            if !catalog.is_thing(rec.class_id) {
                return Err(Error::Validation(format!(
                    "instance {} has class {} which is not a thing class",
                    rec.id, rec.class_id
                )));
            }
        }
        Ok(())
    }

    pub fn ids(&self) -> &InstanceIds {
        &self.ids
    }

    pub fn records(&self) -> &[InstanceRecord] {
        &self.records
    }

    pub fn record(&self, id: u32) -> Option<&InstanceRecord> {
        self.records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn shape(&self) -> (usize, usize) {
        self.ids.shape()
    }

    pub fn into_parts(self) -> (InstanceIds, Vec<InstanceRecord>) {
        (self.ids, self.records)
    }
}

// ---------------------------------------------------------------------------
// Panoptic
// ---------------------------------------------------------------------------

/// Divisor of the panoptic id encoding `class_id * 1000 + instance_id`.
pub const INSTANCE_DIVISOR: u32 = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PanopticPixel {
    pub class_id: ClassId,
    pub instance_id: u16,
}

impl PanopticPixel {
    pub fn new(class_id: ClassId, instance_id: u16) -> Self {
        PanopticPixel {
            class_id,
            instance_id,
        }
    }

    pub fn encode(self) -> u32 {
        u32::from(self.class_id) * INSTANCE_DIVISOR + u32::from(self.instance_id)
    }

    pub fn decode(encoded: u32) -> Result<Self> {
        let class = encoded / INSTANCE_DIVISOR;
        let class_id = ClassId::try_from(class).map_err(|_| {
            Error::Validation(format!("encoded panoptic id {encoded} out of range"))
        })?;
        Ok(PanopticPixel {
            class_id,
            instance_id: (encoded % INSTANCE_DIVISOR) as u16,
        })
    }
}

/// Per-pixel `(class_id, instance_id)` pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PanopticMap(Grid<PanopticPixel>);

impl PanopticMap {
    pub fn new(grid: Grid<PanopticPixel>) -> Result<Self> {
        if let Some(i) = grid
            .as_slice()
            .iter()
            .position(|p| u32::from(p.instance_id) >= INSTANCE_DIVISOR)
        {
            let (r, c) = grid.position(i);
            return Err(Error::Validation(format!(
                "instance id {} at pixel ({r}, {c}) does not fit the encoding",
                grid.as_slice()[i].instance_id
            )));
        }
        Ok(PanopticMap(grid))
    }

    pub fn from_encoded(encoded: &Grid<u32>) -> Result<Self> {
        let mut pixels = Vec::with_capacity(encoded.len());
        for &e in encoded.as_slice() {
            pixels.push(PanopticPixel::decode(e)?);
        }
        Ok(PanopticMap(Grid::from_vec(
            encoded.height(),
            encoded.width(),
            pixels,
        )?))
    }

    pub fn to_encoded(&self) -> Grid<u32> {
        self.0.map(|p| p.encode())
    }

    /// Checks the thing/stuff instance-id rules against a catalog (void = K allowed).
    pub fn validate(&self, catalog: &ClassCatalog) -> Result<()> {
        let void = catalog.void_id();
        for (i, p) in self.0.as_slice().iter().enumerate() {
            let (r, c) = self.0.position(i);
            let ok = if p.class_id == void {
                p.instance_id == 0
            } else if catalog.is_thing(p.class_id) {
                p.instance_id >= 1
            } else if catalog.is_stuff(p.class_id) {
                p.instance_id == 0
            } else {
                return Err(Error::Validation(format!(
                    "class {} at pixel ({r}, {c}) is not in the catalog",
                    p.class_id
                )));
            };
            if !ok {
                return Err(Error::Validation(format!(
                    "pixel ({r}, {c}) has invalid pair ({}, {})",
                    p.class_id, p.instance_id
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid<PanopticPixel> {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    /// Semantic labels carried by the map (void pixels keep the void id).
    pub fn class_labels(&self) -> SemanticLabelMap {
        self.0.map(|p| p.class_id)
    }
}

// ---------------------------------------------------------------------------

/// Per-pixel argmax over classes; ties go to the smallest class index.
pub fn argmax_semantic(probs: &SemanticProbMap) -> SemanticLabelMap {
    let n = probs.height * probs.width;
    let labels = (0..n)
        .map(|i| {
            let px = probs.pixel(i);
            let mut best = 0;
            for (k, &v) in px.iter().enumerate().skip(1) {
                if v > px[best] {
                    best = k;
                }
            }
            best as ClassId
        })
        .collect();
    Grid::from_vec(probs.height, probs.width, labels).expect("shape preserved")
}

pub(crate) fn check_shape<A, B>(a: &Grid<A>, b: &Grid<B>) -> Result<()> {
    ensure_same_shape(a.shape(), b.shape())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_picks_largest() {
        let p = SemanticProbMap::new(1, 1, 3, vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(argmax_semantic(&p).as_slice(), &[1]);
    }

    #[test]
    fn argmax_tie_prefers_smallest_index() {
        let p = SemanticProbMap::new(1, 1, 2, vec![0.5, 0.5]).unwrap();
        assert_eq!(argmax_semantic(&p).as_slice(), &[0]);
    }

    #[test]
    fn argmax_of_one_hot_is_identity() {
        let labels = Grid::from_rows(vec![vec![0u16, 2, 1], vec![1, 1, 0]]);
        let p = SemanticProbMap::one_hot(&labels, 3).unwrap();
        assert_eq!(argmax_semantic(&p), labels);
    }

    #[test]
    fn probability_sum_is_checked() {
        let err = SemanticProbMap::new(1, 2, 2, vec![0.5, 0.5, 0.6, 0.6]).unwrap_err();
        assert!(err.to_string().contains("(0, 1)"), "{err}");
    }

    #[test]
    fn contour_probability_out_of_range_names_pixel() {
        let mut g = Grid::filled(3, 3, 0.2f32);
        g[(1, 2)] = 1.5;
        g[(2, 0)] = 1.5;
        let err = ContourProbMap::new(g).unwrap_err();
        assert!(err.to_string().contains("(1, 2)"), "{err}");
    }

    #[test]
    fn panoptic_encoding() {
        assert_eq!(PanopticPixel::new(11, 2).encode(), 11002);
        assert_eq!(PanopticPixel::new(3, 0).encode(), 3000);
        assert_eq!(
            PanopticPixel::decode(11002).unwrap(),
            PanopticPixel::new(11, 2)
        );
    }

    #[test]
    fn catalog_requires_contiguous_ids() {
        let bad = vec![
            ClassInfo {
                id: 0,
                name: "a".into(),
                is_thing: false,
            },
            ClassInfo {
                id: 2,
                name: "b".into(),
                is_thing: true,
            },
        ];
        assert!(ClassCatalog::new(bad).is_err());
        let stuff_only = ClassCatalog::from_names([("a", false)]).unwrap();
        assert!(stuff_only.require_panoptic().is_err());
        let cat = ClassCatalog::synthetic_default();
        cat.require_panoptic().unwrap();
        assert_eq!(cat.void_id(), 8);
    }

    #[test]
    fn catalog_json_round_trip_validates() {
        let cat = ClassCatalog::synthetic_default();
        let text = serde_json::to_string(&cat).unwrap();
        assert_eq!(serde_json::from_str::<ClassCatalog>(&text).unwrap(), cat);
        let bad = r#"{"classes":[{"id":1,"name":"x","is_thing":true}]}"#;
        assert!(serde_json::from_str::<ClassCatalog>(bad).is_err());
    }

    #[test]
    fn instance_map_rejects_inconsistent_records() {
        let ids = Grid::from_rows(vec![vec![0u32, 1], vec![1, 0]]);
        let rec = InstanceRecord {
            id: 1,
            class_id: 5,
            area: 2,
            centroid: (0.5, 0.5),
            confidence: 1.0,
        };
        InstanceLabelMap::new(ids.clone(), vec![rec.clone()]).unwrap();
        let wrong_area = InstanceRecord {
            area: 3,
            ..rec.clone()
        };
        assert!(InstanceLabelMap::new(ids.clone(), vec![wrong_area]).is_err());
        assert!(InstanceLabelMap::new(ids, vec![]).is_err());
    }
}
