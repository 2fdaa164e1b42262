//! Synthetic scenes with known ground truth, plus simulated network outputs
//! whose degradation is controlled by independent noise knobs.
//!
//! Every knob draws its random numbers from its own stream and draws them
//! whether or not the knob is active, so raising one probability only adds
//! corruption on top of what a lower value produced.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::contour::{dilate_contours, extract_contours};
use crate::error::{Error, Result};
use crate::panoptic::merge_panoptic;
use crate::raster::{
    instance_geometry, ClassCatalog, ClassId, ContourMask, ContourProbMap, Grid, InstanceIds,
    InstanceLabelMap, InstanceRecord, OffsetField, PanopticMap, SemanticLabelMap, SemanticProbMap,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Rect,
    Ellipse,
}

/// Scene layout and prediction noise parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub n_instances: usize,
    pub shapes: Vec<ShapeKind>,
    /// Bounding-box side range, inclusive.
    pub min_size: usize,
    pub max_size: usize,
    pub catalog: ClassCatalog,
    pub thing_classes: Vec<ClassId>,
    /// Background bands from top to bottom.
    pub stuff_classes: Vec<ClassId>,
    pub occluder_class: ClassId,
    /// Minimum instance area in pixels, checked after occluders are drawn.
    pub min_area: usize,
    /// Minimum distance between instance centroids; 0 disables the check.
    pub min_separation: f64,
    /// Chance that an instance is placed flush against an earlier one.
    pub touching_prob: f64,
    pub max_attempts: usize,
    /// Radius used to thicken contours in the simulated contour map.
    pub dilation_rate: usize,
    /// Chance that a `break_tile`-square tile of the contour map is erased.
    pub contour_break_prob: f64,
    pub break_tile: usize,
    /// Per-pixel chance that the semantic argmax moves to a wrong class.
    pub semantic_flip_prob: f64,
    pub offset_noise_sigma: f64,
    /// Per-pixel chance of a spurious contour pixel.
    pub contour_false_positive_prob: f64,
    /// Per-instance chance of a thin vertical strip of `occluder_class`
    /// crossing it.
    pub occluder_prob: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            height: 256,
            width: 512,
            seed: 0,
            n_instances: 8,
            shapes: vec![ShapeKind::Rect, ShapeKind::Ellipse],
            min_size: 24,
            max_size: 72,
            catalog: ClassCatalog::synthetic_default(),
            thing_classes: vec![5, 6, 7],
            stuff_classes: vec![3, 1, 2, 0],
            occluder_class: 4,
            min_area: 400,
            min_separation: 40.0,
            touching_prob: 0.3,
            max_attempts: 2000,
            dilation_rate: crate::contour::DEFAULT_DILATION_RATE,
            contour_break_prob: 0.0,
            break_tile: 8,
            semantic_flip_prob: 0.0,
            offset_noise_sigma: 0.0,
            contour_false_positive_prob: 0.0,
            occluder_prob: 0.0,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{name} must lie in [0,1], got {p}"
        )))
    }
}

impl SceneSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        SceneSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Validation(
                "scene must have positive height and width".into(),
            ));
        }
        if self.min_size == 0 || self.min_size > self.max_size {
            return Err(Error::Validation(format!(
                "size range [{}, {}] is empty",
                self.min_size, self.max_size
            )));
        }
        if self.shapes.is_empty() {
            return Err(Error::Validation(
                "at least one shape kind is required".into(),
            ));
        }
        if self.break_tile == 0 {
            return Err(Error::Validation("break_tile must be positive".into()));
        }
        check_prob("touching_prob", self.touching_prob)?;
        check_prob("contour_break_prob", self.contour_break_prob)?;
        check_prob("semantic_flip_prob", self.semantic_flip_prob)?;
        check_prob(
            "contour_false_positive_prob",
            self.contour_false_positive_prob,
        )?;
        check_prob("occluder_prob", self.occluder_prob)?;
        if !(self.offset_noise_sigma >= 0.0 && self.offset_noise_sigma.is_finite()) {
            return Err(Error::Validation(format!(
                "offset_noise_sigma must be finite and non-negative, got {}",
                self.offset_noise_sigma
            )));
        }
        if !(self.min_separation >= 0.0 && self.min_separation.is_finite()) {
            return Err(Error::Validation(
                "min_separation must be finite and non-negative".into(),
            ));
        }
        self.catalog.require_panoptic()?;
        if self.n_instances > 0 && self.thing_classes.is_empty() {
            return Err(Error::Validation("thing_classes is empty".into()));
        }
        if let Some(c) = self
            .thing_classes
            .iter()
            .find(|&&c| !self.catalog.is_thing(c))
        {
            return Err(Error::Validation(format!("class {c} is not a thing class")));
        }
        if self.stuff_classes.is_empty() {
            return Err(Error::Validation("stuff_classes is empty".into()));
        }
        let stuff = self
            .stuff_classes
            .iter()
            .chain(std::iter::once(&self.occluder_class));
        for &c in stuff {
            if !self.catalog.is_stuff(c) {
                return Err(Error::Validation(format!("class {c} is not a stuff class")));
            }
        }
        Ok(())
    }
}

/// Ground-truth triple of a generated scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub labels: SemanticLabelMap,
    pub instances: InstanceLabelMap,
    pub panoptic: PanopticMap,
}

/// Simulated network outputs for a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedPredictions {
    pub probs: SemanticProbMap,
    pub contours: ContourProbMap,
    pub offsets: OffsetField,
}

#[derive(Clone, Copy, Debug)]
struct Shape {
    kind: ShapeKind,
    top: i64,
    left: i64,
    height: usize,
    width: usize,
}

impl Shape {
    fn contains(&self, r: i64, c: i64) -> bool {
        let (h, w) = (self.height as f64, self.width as f64);
        let dr = r - self.top;
        let dc = c - self.left;
        if dr < 0 || dc < 0 || dr >= self.height as i64 || dc >= self.width as i64 {
            return false;
        }
        match self.kind {
            ShapeKind::Rect => true,
            ShapeKind::Ellipse => {
                let y = (dr as f64 + 0.5 - h / 2.0) / (h / 2.0);
                let x = (dc as f64 + 0.5 - w / 2.0) / (w / 2.0);
                y * y + x * x <= 1.0
            }
        }
    }

    fn in_bounds(&self, height: usize, width: usize) -> bool {
        self.top >= 0
            && self.left >= 0
            && self.top as usize + self.height <= height
            && self.left as usize + self.width <= width
    }

    fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height as i64).flat_map(move |dr| {
            (0..self.width as i64).filter_map(move |dc| {
                let (r, c) = (self.top + dr, self.left + dc);
                self.contains(r, c).then_some((r as usize, c as usize))
            })
        })
    }
}

#[derive(Default)]
struct Rejections {
    bounds: usize,
    overlap: usize,
    area: usize,
    separation: usize,
}

impl Rejections {
    fn dominant(&self, spec: &SceneSpec) -> String {
        let mut reasons = [
            (
                self.separation,
                format!("centroid separation >= {}", spec.min_separation),
            ),
            (self.area, format!("area >= {}", spec.min_area)),
            (
                self.overlap,
                "no overlap with earlier instances".to_string(),
            ),
            (self.bounds, "inside the image".to_string()),
        ];
        reasons.sort_by_key(|r| std::cmp::Reverse(r.0));
        reasons[0].1.clone()
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const SCENE_STREAM: u64 = 0;
const FLIP_STREAM: u64 = 1;
const BREAK_STREAM: u64 = 2;
const FALSE_POSITIVE_STREAM: u64 = 3;
const OFFSET_STREAM: u64 = 4;

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

fn centroid(pixels: &[(usize, usize)]) -> (f64, f64) {
    let n = pixels.len() as f64;
    let (r, c) = pixels.iter().fold((0.0, 0.0), |acc, &(r, c)| {
        (acc.0 + r as f64, acc.1 + c as f64)
    });
    (r / n, c / n)
}

fn propose(rng: &mut ChaCha8Rng, spec: &SceneSpec, placed: &[Shape]) -> Shape {
    let kind = spec.shapes[rng.random_range(0..spec.shapes.len())];
    let height = rng.random_range(spec.min_size..=spec.max_size);
    let width = rng.random_range(spec.min_size..=spec.max_size);
    let touching = !placed.is_empty() && rng.random::<f64>() < spec.touching_prob;
    let (top, left) = if touching {
        let other = placed[rng.random_range(0..placed.len())];
        // Abut one side of the other bounding box, overlapping its extent
        // along that side by at least half of the shorter of the two.
        let (h, w) = (height as i64, width as i64);
        let (oh, ow) = (other.height as i64, other.width as i64);
        let slide = |len: i64, olen: i64, rng: &mut ChaCha8Rng| {
            let need = len.min(olen) / 2;
            rng.random_range(need - len..=olen - need)
        };
        match rng.random_range(0..4) {
            0 => (other.top - h, other.left + slide(w, ow, rng)),
            1 => (other.top + oh, other.left + slide(w, ow, rng)),
            2 => (other.top + slide(h, oh, rng), other.left - w),
            _ => (other.top + slide(h, oh, rng), other.left + ow),
        }
    } else {
        let max_top = spec.height.saturating_sub(height) as i64;
        let max_left = spec.width.saturating_sub(width) as i64;
        (
            rng.random_range(0..=max_top),
            rng.random_range(0..=max_left),
        )
    };
    Shape {
        kind,
        top,
        left,
        height,
        width,
    }
}

fn background(rng: &mut ChaCha8Rng, spec: &SceneSpec) -> SemanticLabelMap {
    let bands = spec.stuff_classes.len();
    // Band boundaries jitter around an even split.
    let mut cuts = Vec::with_capacity(bands + 1);
    cuts.push(0usize);
    for b in 1..bands {
        let base = spec.height as f64 * b as f64 / bands as f64;
        let jitter = spec.height as f64 / bands as f64 * 0.3;
        let cut = (base + rng.random_range(-1.0..=1.0) * jitter).round() as usize;
        cuts.push(cut.clamp(*cuts.last().unwrap(), spec.height));
    }
    cuts.push(spec.height);
    let mut labels = Grid::filled(spec.height, spec.width, spec.stuff_classes[0]);
    for (b, w) in cuts.windows(2).enumerate() {
        for r in w[0]..w[1] {
            for c in 0..spec.width {
                labels[(r, c)] = spec.stuff_classes[b];
            }
        }
    }
    labels
}

/// Generates a ground-truth scene; deterministic in `spec.seed`.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = stream(spec.seed, SCENE_STREAM);
    let (height, width) = (spec.height, spec.width);
    let mut labels = background(&mut rng, spec);
    let mut ids: InstanceIds = Grid::filled(height, width, 0);
    let mut shapes: Vec<Shape> = Vec::new();
    let mut classes: Vec<ClassId> = Vec::new();
    let mut centroids: Vec<(f64, f64)> = Vec::new();

    for k in 0..spec.n_instances {
        let mut why = Rejections::default();
        let mut accepted = None;
        for _ in 0..spec.max_attempts {
            let class = spec.thing_classes[rng.random_range(0..spec.thing_classes.len())];
            let shape = propose(&mut rng, spec, &shapes);
            if !shape.in_bounds(height, width) {
                why.bounds += 1;
                continue;
            }
            let pixels: Vec<(usize, usize)> = shape.pixels().collect();
            if pixels.len() < spec.min_area.max(1) {
                why.area += 1;
                continue;
            }
            if pixels.iter().any(|&(r, c)| ids[(r, c)] != 0) {
                why.overlap += 1;
                continue;
            }
            let center = centroid(&pixels);
            let sep2 = spec.min_separation * spec.min_separation;
            if centroids.iter().any(|&o| dist2(o, center) < sep2) {
                why.separation += 1;
                continue;
            }
            accepted = Some((class, shape, pixels, center));
            break;
        }
        let Some((class, shape, pixels, center)) = accepted else {
            return Err(Error::Placement(format!(
                "could not place instance {} of {} after {} attempts; most frequent violation: {}",
                k + 1,
                spec.n_instances,
                spec.max_attempts,
                why.dominant(spec)
            )));
        };
        let id = k as u32 + 1;
        for &(r, c) in &pixels {
            ids[(r, c)] = id;
            labels[(r, c)] = class;
        }
        shapes.push(shape);
        classes.push(class);
        centroids.push(center);
    }

    for k in 0..shapes.len() {
        let u: f64 = rng.random();
        let strip_width = rng.random_range(2..=4usize);
        let frac: f64 = rng.random_range(0.3..=0.7);
        if u >= spec.occluder_prob {
            continue;
        }
        let shape = shapes[k];
        let col0 =
            shape.left as usize + ((shape.width as f64 * frac) as usize).min(shape.width - 1);
        let cols = col0..(col0 + strip_width).min(width);
        let rows = shape.top.max(0) as usize..(shape.top as usize + shape.height).min(height);
        let mut trial = ids.clone();
        for r in rows.clone() {
            for c in cols.clone() {
                trial[(r, c)] = 0;
            }
        }
        if occlusion_keeps_constraints(&trial, shapes.len(), spec) {
            ids = trial;
            for r in rows {
                for c in cols.clone() {
                    labels[(r, c)] = spec.occluder_class;
                }
            }
        }
    }

    let geometry = instance_geometry(&ids);
    let records = (1..=shapes.len())
        .map(|id| {
            let g = geometry[id].expect("constraints keep every instance non-empty");
            InstanceRecord {
                id: id as u32,
                class_id: classes[id - 1],
                area: g.area,
                centroid: g.centroid,
                confidence: 1.0,
            }
        })
        .collect();
    let instances = InstanceLabelMap::new(ids, records)?;
    let panoptic = merge_panoptic(&labels, &instances, &spec.catalog)?;
    Ok(Scene {
        labels,
        instances,
        panoptic,
    })
}

fn occlusion_keeps_constraints(ids: &InstanceIds, n: usize, spec: &SceneSpec) -> bool {
    let geometry = instance_geometry(ids);
    let geoms: Vec<_> = (1..=n)
        .map(|id| geometry.get(id).copied().flatten())
        .collect();
    if geoms
        .iter()
        .any(|g| g.is_none_or(|g| g.area < spec.min_area.max(1)))
    {
        return false;
    }
    let sep2 = spec.min_separation * spec.min_separation;
    let cs: Vec<(f64, f64)> = geoms.iter().map(|g| g.unwrap().centroid).collect();
    (0..n).all(|a| (a + 1..n).all(|b| dist2(cs[a], cs[b]) >= sep2))
}

/// Ground-truth contours thickened at `rate`.
pub fn gt_contour_mask(scene: &Scene, rate: usize) -> ContourMask {
    dilate_contours(&extract_contours(scene.instances.ids()), rate)
}

/// Exact offsets: instance centroid minus pixel position, zero off instances.
pub fn exact_offsets(instances: &InstanceLabelMap) -> OffsetField {
    let (h, w) = instances.shape();
    let mut out = OffsetField::zeros(h, w);
    let mut centers = vec![(0.0, 0.0); instances.records().last().map_or(0, |r| r.id) as usize + 1];
    for r in instances.records() {
        centers[r.id as usize] = r.centroid;
    }
    for (i, &id) in instances.ids().as_slice().iter().enumerate() {
        if id != 0 {
            let (r, c) = (i / w, i % w);
            let (cr, cc) = centers[id as usize];
            out.set(i, (cr - r as f64) as f32, (cc - c as f64) as f32);
        }
    }
    out
}

/// Simulated outputs for `scene`; deterministic in `spec.seed`.
///
/// Without noise the semantic map is one-hot, the contour map is the
/// ground-truth contour mask dilated at `spec.dilation_rate` with
/// probability 1, and offsets are exact.
pub fn simulate_predictions(scene: &Scene, spec: &SceneSpec) -> Result<SimulatedPredictions> {
    spec.validate()?;
    let (h, w) = scene.labels.shape();
    let k = spec.catalog.num_classes();
    let n = h * w;

    let mut rng = stream(spec.seed, FLIP_STREAM);
    let mut probs = vec![0f32; n * k];
    for (i, &label) in scene.labels.as_slice().iter().enumerate() {
        let u: f64 = rng.random();
        let shift = rng.random_range(1..k.max(2));
        let px = &mut probs[i * k..(i + 1) * k];
        let label = usize::from(label);
        if u < spec.semantic_flip_prob && k > 1 {
            px[(label + shift) % k] = 0.6;
            px[label] = 0.4;
        } else {
            px[label] = 1.0;
        }
    }
    let probs = SemanticProbMap::new(h, w, k, probs)?;

    let mut contour = gt_contour_mask(scene, spec.dilation_rate);
    let mut rng = stream(spec.seed, BREAK_STREAM);
    let tile = spec.break_tile;
    for tr in (0..h).step_by(tile) {
        for tc in (0..w).step_by(tile) {
            let u: f64 = rng.random();
            if u < spec.contour_break_prob {
                for r in tr..(tr + tile).min(h) {
                    for c in tc..(tc + tile).min(w) {
                        contour[(r, c)] = false;
                    }
                }
            }
        }
    }
    let mut rng = stream(spec.seed, FALSE_POSITIVE_STREAM);
    for v in contour.as_mut_slice() {
        let u: f64 = rng.random();
        if u < spec.contour_false_positive_prob {
            *v = true;
        }
    }
    let contours = ContourProbMap::from_mask(&contour);

    let mut offsets = exact_offsets(&scene.instances);
    let mut rng = stream(spec.seed, OFFSET_STREAM);
    for i in 0..n {
        let nr: f64 = rng.sample(StandardNormal);
        let nc: f64 = rng.sample(StandardNormal);
        if spec.offset_noise_sigma > 0.0 && scene.instances.ids().as_slice()[i] != 0 {
            let (dr, dc) = offsets.offset(i);
            offsets.set(
                i,
                dr + (nr * spec.offset_noise_sigma) as f32,
                dc + (nc * spec.offset_noise_sigma) as f32,
            );
        }
    }
    Ok(SimulatedPredictions {
        probs,
        contours,
        offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_instances_gives_all_stuff() {
        let spec = SceneSpec {
            n_instances: 0,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        assert!(scene.instances.records().is_empty());
        assert!(scene
            .labels
            .as_slice()
            .iter()
            .all(|&l| spec.catalog.is_stuff(l)));
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec {
            seed: 7,
            occluder_prob: 0.5,
            ..SceneSpec::default()
        };
        assert_eq!(
            generate_scene(&spec).unwrap(),
            generate_scene(&spec).unwrap()
        );
        let a = simulate_predictions(&generate_scene(&spec).unwrap(), &spec).unwrap();
        let b = simulate_predictions(&generate_scene(&spec).unwrap(), &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scene_meets_constraints() {
        for seed in 0..10 {
            let spec = SceneSpec::default().with_seed(seed);
            let scene = generate_scene(&spec).unwrap();
            scene.panoptic.validate(&spec.catalog).unwrap();
            scene.instances.validate_classes(&spec.catalog).unwrap();
            assert_eq!(scene.instances.records().len(), spec.n_instances);
            let recs = scene.instances.records();
            for r in recs {
                assert!(r.area >= spec.min_area);
            }
            for a in 0..recs.len() {
                for b in a + 1..recs.len() {
                    assert!(dist2(recs[a].centroid, recs[b].centroid) >= 1600.0);
                }
            }
            // thing pixels are exactly the instance pixels
            for (&l, &id) in scene
                .labels
                .as_slice()
                .iter()
                .zip(scene.instances.ids().as_slice())
            {
                assert_eq!(spec.catalog.is_thing(l), id != 0);
            }
        }
    }

    #[test]
    fn impossible_layout_names_constraint() {
        let spec = SceneSpec {
            height: 64,
            width: 64,
            n_instances: 20,
            max_attempts: 50,
            ..SceneSpec::default()
        };
        let err = generate_scene(&spec).unwrap_err().to_string();
        assert!(err.contains("could not place instance"), "{err}");
    }

    #[test]
    fn zero_noise_predictions() {
        let spec = SceneSpec::default().with_seed(3);
        let scene = generate_scene(&spec).unwrap();
        let pred = simulate_predictions(&scene, &spec).unwrap();
        assert_eq!(crate::raster::argmax_semantic(&pred.probs), scene.labels);
        let mask = gt_contour_mask(&scene, spec.dilation_rate);
        assert_eq!(pred.contours, ContourProbMap::from_mask(&mask));
        for r in scene.instances.records() {
            let i = scene
                .instances
                .ids()
                .as_slice()
                .iter()
                .position(|&id| id == r.id)
                .unwrap();
            let (cr, cc) = pred.offsets.predicted_center(i);
            assert!((cr - r.centroid.0).abs() < 1e-3 && (cc - r.centroid.1).abs() < 1e-3);
        }
    }

    #[test]
    fn full_break_erases_contours() {
        let spec = SceneSpec {
            contour_break_prob: 1.0,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let pred = simulate_predictions(&scene, &spec).unwrap();
        assert!(pred.contours.grid().as_slice().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn breaks_are_nested_in_probability() {
        let base = SceneSpec::default().with_seed(11);
        let scene = generate_scene(&base).unwrap();
        let at = |p: f64| {
            let spec = SceneSpec {
                contour_break_prob: p,
                ..base.clone()
            };
            simulate_predictions(&scene, &spec).unwrap().contours
        };
        let (lo, hi) = (at(0.1), at(0.5));
        for (&a, &b) in lo.grid().as_slice().iter().zip(hi.grid().as_slice()) {
            assert!(b <= a);
        }
    }

    #[test]
    fn flips_keep_valid_probabilities() {
        let spec = SceneSpec {
            semantic_flip_prob: 0.5,
            offset_noise_sigma: 2.0,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let pred = simulate_predictions(&scene, &spec).unwrap();
        let labels = crate::raster::argmax_semantic(&pred.probs);
        let changed = labels
            .as_slice()
            .iter()
            .zip(scene.labels.as_slice())
            .filter(|(a, b)| a != b)
            .count();
        let frac = changed as f64 / labels.len() as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn spec_rejects_bad_knobs() {
        let spec = SceneSpec {
            contour_break_prob: 1.5,
            ..SceneSpec::default()
        };
        assert!(spec.validate().is_err());
        let spec = SceneSpec {
            thing_classes: vec![0],
            ..SceneSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn spec_json_defaults() {
        let spec: SceneSpec = serde_json::from_str(r#"{"seed": 5, "n_instances": 3}"#).unwrap();
        assert_eq!(spec.seed, 5);
        assert_eq!(spec.height, 256);
        assert!(serde_json::from_str::<SceneSpec>(r#"{"bogus": 1}"#).is_err());
    }
}
