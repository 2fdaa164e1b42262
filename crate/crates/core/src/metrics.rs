//! Evaluation metrics: panoptic quality (PQ/SQ/RQ), mean IoU and mask AP.
//!
//! All accumulators sum per-class tallies over images in insertion order and
//! only divide at the end, so results do not depend on how images are batched.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_shape, Error, Result};
use crate::panoptic::PanopticSegment;
use crate::raster::{
    check_shape, ClassCatalog, ClassId, Grid, InstanceLabelMap, PanopticMap, PanopticPixel,
    SemanticLabelMap,
};

/// Segments match when their IoU exceeds this value.
pub const PQ_MATCH_IOU: f64 = 0.5;

// ---------------------------------------------------------------------------
// Panoptic quality
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PqTally {
    pub iou_sum: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl PqTally {
    /// `(pq, sq, rq)`; `pq` is computed as `sq · rq`.
    pub fn scores(&self) -> (f64, f64, f64) {
        if self.tp == 0 {
            return (0.0, 0.0, 0.0);
        }
        let tp = self.tp as f64;
        let sq = self.iou_sum / tp;
        let rq = tp / (tp + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64);
        (sq * rq, sq, rq)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPq {
    pub class_id: ClassId,
    pub name: String,
    pub is_thing: bool,
    /// Whether the class has at least one ground-truth segment.
    pub in_gt: bool,
    #[serde(flatten)]
    pub tally: PqTally,
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanopticScores {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub pq_things: f64,
    pub sq_things: f64,
    pub rq_things: f64,
    pub pq_stuff: f64,
    pub sq_stuff: f64,
    pub rq_stuff: f64,
    pub per_class: Vec<ClassPq>,
}

/// A matched `(gt, pred)` segment pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentMatch {
    pub gt: PanopticPixel,
    pub pred: PanopticPixel,
    pub iou: f64,
}

/// Per-image matching result.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PqMatching {
    pub matches: Vec<SegmentMatch>,
    pub false_positives: Vec<PanopticPixel>,
    pub false_negatives: Vec<PanopticPixel>,
}

/// Matches segments of one image pair.
///
/// Ground-truth void pixels are excluded: they do not count in the IoU union
/// and a prediction lying mostly on void is not a false positive.
pub fn match_segments(
    pred: &PanopticMap,
    gt: &PanopticMap,
    catalog: &ClassCatalog,
) -> Result<PqMatching> {
    ensure_same_shape(pred.shape(), gt.shape())?;
    let void = catalog.void_id();
    for (i, p) in pred.grid().as_slice().iter().enumerate() {
        if p.class_id > void {
            let (r, c) = pred.grid().position(i);
            return Err(Error::Validation(format!(
                "predicted class {} at pixel ({r}, {c}) is not in the catalog",
                p.class_id
            )));
        }
    }
    let mut gt_area: BTreeMap<PanopticPixel, usize> = BTreeMap::new();
    let mut pred_area: BTreeMap<PanopticPixel, usize> = BTreeMap::new();
    let mut pred_on_void: HashMap<PanopticPixel, usize> = HashMap::new();
    let mut overlap: BTreeMap<(PanopticPixel, PanopticPixel), usize> = BTreeMap::new();
    for (&p, &g) in pred.grid().as_slice().iter().zip(gt.grid().as_slice()) {
        let p_void = p.class_id == void;
        let g_void = g.class_id == void;
        if !g_void {
            *gt_area.entry(g).or_default() += 1;
        }
        if !p_void {
            *pred_area.entry(p).or_default() += 1;
            if g_void {
                *pred_on_void.entry(p).or_default() += 1;
            }
        }
        if !p_void && !g_void {
            *overlap.entry((g, p)).or_default() += 1;
        }
    }
    let mut result = PqMatching::default();
    let mut gt_matched: HashMap<PanopticPixel, bool> = HashMap::new();
    let mut pred_matched: HashMap<PanopticPixel, bool> = HashMap::new();
    for (&(g, p), &inter) in &overlap {
        if g.class_id != p.class_id {
            continue;
        }
        let union =
            gt_area[&g] + pred_area[&p] - inter - pred_on_void.get(&p).copied().unwrap_or(0);
        let iou = inter as f64 / union as f64;
        if iou > PQ_MATCH_IOU {
            result.matches.push(SegmentMatch {
                gt: g,
                pred: p,
                iou,
            });
            gt_matched.insert(g, true);
            pred_matched.insert(p, true);
        }
    }
    for &g in gt_area.keys() {
        if !gt_matched.contains_key(&g) {
            result.false_negatives.push(g);
        }
    }
    for (&p, &area) in &pred_area {
        if pred_matched.contains_key(&p) {
            continue;
        }
        let on_void = pred_on_void.get(&p).copied().unwrap_or(0);
        if on_void as f64 / area as f64 > 0.5 {
            continue;
        }
        result.false_positives.push(p);
    }
    Ok(result)
}

/// Accumulates PQ tallies over images.
#[derive(Clone, Debug)]
pub struct PqAccumulator {
    tallies: Vec<PqTally>,
    in_gt: Vec<bool>,
}

impl PqAccumulator {
    pub fn new(catalog: &ClassCatalog) -> Self {
        PqAccumulator {
            tallies: vec![PqTally::default(); catalog.num_classes()],
            in_gt: vec![false; catalog.num_classes()],
        }
    }

    pub fn add(
        &mut self,
        pred: &PanopticMap,
        gt: &PanopticMap,
        catalog: &ClassCatalog,
    ) -> Result<()> {
        let m = match_segments(pred, gt, catalog)?;
        let void = catalog.void_id();
        for s in &m.matches {
            let t = &mut self.tallies[usize::from(s.gt.class_id)];
            t.tp += 1;
            t.iou_sum += s.iou;
            self.in_gt[usize::from(s.gt.class_id)] = true;
        }
        for g in &m.false_negatives {
            self.tallies[usize::from(g.class_id)].fn_ += 1;
            self.in_gt[usize::from(g.class_id)] = true;
        }
        for p in m.false_positives.iter().filter(|p| p.class_id != void) {
            self.tallies[usize::from(p.class_id)].fp += 1;
        }
        Ok(())
    }

    /// Adds the tallies of `other`, as if its images had been added here.
    pub fn merge(&mut self, other: &PqAccumulator) {
        for (a, b) in self.tallies.iter_mut().zip(&other.tallies) {
            a.iou_sum += b.iou_sum;
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
        }
        for (a, b) in self.in_gt.iter_mut().zip(&other.in_gt) {
            *a |= *b;
        }
    }

    /// Per-class scores averaged over classes present in the ground truth.
    pub fn finish(&self, catalog: &ClassCatalog) -> PanopticScores {
        let per_class: Vec<ClassPq> = catalog
            .classes()
            .iter()
            .map(|info| {
                let tally = self.tallies[usize::from(info.id)];
                let (pq, sq, rq) = tally.scores();
                ClassPq {
                    class_id: info.id,
                    name: info.name.clone(),
                    is_thing: info.is_thing,
                    in_gt: self.in_gt[usize::from(info.id)],
                    tally,
                    pq,
                    sq,
                    rq,
                }
            })
            .collect();
        let average = |filter: &dyn Fn(&ClassPq) -> bool| {
            let sel: Vec<&ClassPq> = per_class.iter().filter(|c| c.in_gt && filter(c)).collect();
            if sel.is_empty() {
                return (0.0, 0.0, 0.0);
            }
            let n = sel.len() as f64;
            (
                sel.iter().map(|c| c.pq).sum::<f64>() / n,
                sel.iter().map(|c| c.sq).sum::<f64>() / n,
                sel.iter().map(|c| c.rq).sum::<f64>() / n,
            )
        };
        let (pq, sq, rq) = average(&|_| true);
        let (pq_things, sq_things, rq_things) = average(&|c| c.is_thing);
        let (pq_stuff, sq_stuff, rq_stuff) = average(&|c| !c.is_thing);
        PanopticScores {
            pq,
            sq,
            rq,
            pq_things,
            sq_things,
            rq_things,
            pq_stuff,
            sq_stuff,
            rq_stuff,
            per_class,
        }
    }
}

/// PQ/SQ/RQ of a single image pair.
pub fn panoptic_quality(
    pred: &PanopticMap,
    gt: &PanopticMap,
    catalog: &ClassCatalog,
) -> Result<PanopticScores> {
    let mut acc = PqAccumulator::new(catalog);
    acc.add(pred, gt, catalog)?;
    Ok(acc.finish(catalog))
}

// ---------------------------------------------------------------------------
// Mean IoU
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub class_id: ClassId,
    pub name: String,
    pub intersection: u64,
    pub union: u64,
    /// `None` when the class is absent from both prediction and ground truth.
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanIou {
    pub miou: f64,
    pub per_class: Vec<ClassIou>,
}

/// Confusion matrix over `K` classes plus a void column for predictions.
///
/// Ground-truth pixels labeled void (id `K`) are ignored.
#[derive(Clone, Debug)]
pub struct ConfusionMatrix {
    k: usize,
    /// `counts[gt * (k + 1) + pred]`
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(catalog: &ClassCatalog) -> Self {
        let k = catalog.num_classes();
        ConfusionMatrix {
            k,
            counts: vec![0; k * (k + 1)],
        }
    }

    pub fn add(&mut self, pred: &SemanticLabelMap, gt: &SemanticLabelMap) -> Result<()> {
        check_shape(pred, gt)?;
        let k = self.k;
        for (i, (&p, &g)) in pred.as_slice().iter().zip(gt.as_slice()).enumerate() {
            let (p, g) = (usize::from(p), usize::from(g));
            if g == k {
                continue;
            }
            if g > k || p > k {
                let (r, c) = gt.position(i);
                return Err(Error::Validation(format!(
                    "label outside the catalog at pixel ({r}, {c})"
                )));
            }
            self.counts[g * (k + 1) + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += *b;
        }
    }

    /// Per-class IoU, averaged over classes present in prediction or ground truth.
    pub fn finish(&self, catalog: &ClassCatalog) -> MeanIou {
        let k = self.k;
        let per_class: Vec<ClassIou> = catalog
            .classes()
            .iter()
            .map(|info| {
                let c = usize::from(info.id);
                let inter = self.counts[c * (k + 1) + c];
                let gt_total: u64 = self.counts[c * (k + 1)..(c + 1) * (k + 1)].iter().sum();
                let pred_total: u64 = (0..k).map(|g| self.counts[g * (k + 1) + c]).sum();
                let union = gt_total + pred_total - inter;
                ClassIou {
                    class_id: info.id,
                    name: info.name.clone(),
                    intersection: inter,
                    union,
                    iou: (union > 0).then(|| inter as f64 / union as f64),
                }
            })
            .collect();
        let present: Vec<f64> = per_class.iter().filter_map(|c| c.iou).collect();
        let miou = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        MeanIou { miou, per_class }
    }
}

pub fn mean_iou(
    pred: &SemanticLabelMap,
    gt: &SemanticLabelMap,
    catalog: &ClassCatalog,
) -> Result<MeanIou> {
    let mut cm = ConfusionMatrix::new(catalog);
    cm.add(pred, gt)?;
    Ok(cm.finish(catalog))
}

// ---------------------------------------------------------------------------
// Mask AP
// ---------------------------------------------------------------------------

/// IoU thresholds `0.50, 0.55, …, 0.95`.
pub fn default_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub id: u32,
    pub class_id: ClassId,
    pub confidence: f64,
}

/// Instance masks given by an id map plus class and confidence per id.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceSet {
    pub ids: Grid<u32>,
    pub instances: Vec<ScoredInstance>,
}

impl InstanceSet {
    pub fn from_instances(map: &InstanceLabelMap) -> Self {
        InstanceSet {
            ids: map.ids().clone(),
            instances: map
                .records()
                .iter()
                .map(|r| ScoredInstance {
                    id: r.id,
                    class_id: r.class_id,
                    confidence: r.confidence,
                })
                .collect(),
        }
    }

    /// Thing segments of a panoptic map; confidences come from `segments`
    /// (matched by encoded id) and default to 1.
    pub fn from_panoptic(
        map: &PanopticMap,
        catalog: &ClassCatalog,
        segments: Option<&[PanopticSegment]>,
    ) -> Self {
        let confidence: HashMap<u32, f64> = segments
            .unwrap_or_default()
            .iter()
            .map(|s| (s.encoded_id, s.confidence))
            .collect();
        let ids = map.grid().map(|p| {
            if p.instance_id != 0 && catalog.is_thing(p.class_id) {
                p.encode()
            } else {
                0
            }
        });
        let mut seen: BTreeMap<u32, ClassId> = BTreeMap::new();
        for &e in ids.as_slice() {
            if e != 0 {
                seen.entry(e)
                    .or_insert((e / crate::raster::INSTANCE_DIVISOR) as ClassId);
            }
        }
        let instances = seen
            .into_iter()
            .map(|(id, class_id)| ScoredInstance {
                id,
                class_id,
                confidence: confidence.get(&id).copied().unwrap_or(1.0),
            })
            .collect();
        InstanceSet { ids, instances }
    }
}

#[derive(Clone, Copy, Debug)]
struct Detection {
    confidence: f64,
    image: usize,
    pred_id: u32,
    /// One flag per threshold.
    tp_mask: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub iou_threshold: f64,
    pub ap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: ClassId,
    pub gt_instances: usize,
    pub ap: f64,
    pub per_threshold: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    /// Mean over thresholds, then over classes present in the ground truth.
    pub ap: f64,
    pub per_threshold: Vec<ThresholdAp>,
    pub per_class: Vec<ClassAp>,
}

/// Accumulates mask-AP detections over images.
#[derive(Clone, Debug)]
pub struct ApAccumulator {
    thresholds: Vec<f64>,
    detections: BTreeMap<ClassId, Vec<Detection>>,
    gt_count: BTreeMap<ClassId, usize>,
    images: usize,
}

impl ApAccumulator {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() || thresholds.len() > 64 {
            return Err(Error::Validation(
                "between 1 and 64 IoU thresholds required".into(),
            ));
        }
        if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Validation(format!(
                "IoU threshold {t} outside [0,1]"
            )));
        }
        Ok(ApAccumulator {
            thresholds,
            detections: BTreeMap::new(),
            gt_count: BTreeMap::new(),
            images: 0,
        })
    }

    pub fn add(&mut self, pred: &InstanceSet, gt: &InstanceSet) -> Result<()> {
        check_shape(&pred.ids, &gt.ids)?;
        let image = self.images;
        self.images += 1;
        let mut pred_area: HashMap<u32, usize> = HashMap::new();
        let mut gt_area: HashMap<u32, usize> = HashMap::new();
        let mut overlap: HashMap<(u32, u32), usize> = HashMap::new();
        for (&p, &g) in pred.ids.as_slice().iter().zip(gt.ids.as_slice()) {
            if p != 0 {
                *pred_area.entry(p).or_default() += 1;
            }
            if g != 0 {
                *gt_area.entry(g).or_default() += 1;
            }
            if p != 0 && g != 0 {
                *overlap.entry((p, g)).or_default() += 1;
            }
        }
        let mut gt_sorted: Vec<&ScoredInstance> = gt
            .instances
            .iter()
            .filter(|g| gt_area.contains_key(&g.id))
            .collect();
        gt_sorted.sort_by_key(|g| g.id);
        for g in &gt_sorted {
            *self.gt_count.entry(g.class_id).or_default() += 1;
        }
        let mut preds: Vec<&ScoredInstance> = pred
            .instances
            .iter()
            .filter(|p| pred_area.contains_key(&p.id))
            .collect();
        preds.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.id.cmp(&b.id)));
        let iou = |p: &ScoredInstance, g: &ScoredInstance| -> f64 {
            let inter = overlap.get(&(p.id, g.id)).copied().unwrap_or(0);
            if inter == 0 {
                return 0.0;
            }
            inter as f64 / (pred_area[&p.id] + gt_area[&g.id] - inter) as f64
        };
        let mut tp_masks = vec![0u64; preds.len()];
        for (t, &thr) in self.thresholds.iter().enumerate() {
            let mut taken = vec![false; gt_sorted.len()];
            for (k, p) in preds.iter().enumerate() {
                let mut best: Option<(usize, f64)> = None;
                for (j, g) in gt_sorted.iter().enumerate() {
                    if taken[j] || g.class_id != p.class_id {
                        continue;
                    }
                    let v = iou(p, g);
                    if v >= thr && v > 0.0 && best.is_none_or(|(_, bv)| v > bv) {
                        best = Some((j, v));
                    }
                }
                if let Some((j, _)) = best {
                    taken[j] = true;
                    tp_masks[k] |= 1 << t;
                }
            }
        }
        for (p, mask) in preds.iter().zip(tp_masks) {
            self.detections
                .entry(p.class_id)
                .or_default()
                .push(Detection {
                    confidence: p.confidence,
                    image,
                    pred_id: p.id,
                    tp_mask: mask,
                });
        }
        Ok(())
    }

    /// Appends the images of `other` after the images already added.
    pub fn merge(&mut self, other: &ApAccumulator) {
        for (&class_id, dets) in &other.detections {
            let mine = self.detections.entry(class_id).or_default();
            mine.extend(dets.iter().map(|d| Detection {
                image: d.image + self.images,
                ..*d
            }));
        }
        for (&class_id, &n) in &other.gt_count {
            *self.gt_count.entry(class_id).or_default() += n;
        }
        self.images += other.images;
    }

    pub fn finish(&self) -> ApReport {
        let nt = self.thresholds.len();
        let mut per_class = Vec::new();
        for (&class_id, &n_gt) in &self.gt_count {
            if n_gt == 0 {
                continue;
            }
            let mut dets = self.detections.get(&class_id).cloned().unwrap_or_default();
            dets.sort_by(|a, b| {
                b.confidence
                    .total_cmp(&a.confidence)
                    .then(a.image.cmp(&b.image))
                    .then(a.pred_id.cmp(&b.pred_id))
            });
            let per_threshold: Vec<f64> = (0..nt)
                .map(|t| {
                    let flags: Vec<bool> = dets.iter().map(|d| d.tp_mask & (1 << t) != 0).collect();
                    average_precision(&flags, n_gt)
                })
                .collect();
            per_class.push(ClassAp {
                class_id,
                gt_instances: n_gt,
                ap: per_threshold.iter().sum::<f64>() / nt as f64,
                per_threshold,
            });
        }
        let n = per_class.len();
        let per_threshold = self
            .thresholds
            .iter()
            .enumerate()
            .map(|(t, &thr)| ThresholdAp {
                iou_threshold: thr,
                ap: if n == 0 {
                    0.0
                } else {
                    per_class.iter().map(|c| c.per_threshold[t]).sum::<f64>() / n as f64
                },
            })
            .collect();
        let ap = if n == 0 {
            0.0
        } else {
            per_class.iter().map(|c| c.ap).sum::<f64>() / n as f64
        };
        ApReport {
            ap,
            per_threshold,
            per_class,
        }
    }
}

/// Area under the precision-recall curve of a ranked detection list, with
/// precision replaced by its running maximum from the right.
pub fn average_precision(ranked_tp: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 || ranked_tp.is_empty() {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(ranked_tp.len());
    let mut recall = Vec::with_capacity(ranked_tp.len());
    let mut tp = 0usize;
    for (k, &hit) in ranked_tp.iter().enumerate() {
        if hit {
            tp += 1;
        }
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

pub fn mask_ap(pred: &InstanceSet, gt: &InstanceSet, iou_thresholds: &[f64]) -> Result<ApReport> {
    let mut acc = ApAccumulator::new(iou_thresholds.to_vec())?;
    acc.add(pred, gt)?;
    Ok(acc.finish())
}

// ---------------------------------------------------------------------------
// Combined report
// ---------------------------------------------------------------------------

/// Headline scores plus breakdowns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: usize,
    pub miou: f64,
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub pq_things: f64,
    pub sq_things: f64,
    pub rq_things: f64,
    pub pq_stuff: f64,
    pub ap: f64,
    pub ap50: f64,
    pub panoptic: PanopticScores,
    pub semantic: MeanIou,
    pub instance: ApReport,
}

/// Predicted or ground-truth outputs of one image.
#[derive(Clone, Copy, Debug)]
pub struct ImageOutputs<'a> {
    pub labels: &'a SemanticLabelMap,
    pub panoptic: &'a PanopticMap,
    /// Thing segment confidences; `None` means confidence 1 for every segment.
    pub segments: Option<&'a [PanopticSegment]>,
}

/// Runs all three metrics over a sequence of images.
#[derive(Clone, Debug)]
pub struct Evaluator {
    catalog: ClassCatalog,
    pq: PqAccumulator,
    confusion: ConfusionMatrix,
    ap: ApAccumulator,
    images: usize,
}

impl Evaluator {
    pub fn new(catalog: &ClassCatalog) -> Self {
        Evaluator {
            catalog: catalog.clone(),
            pq: PqAccumulator::new(catalog),
            confusion: ConfusionMatrix::new(catalog),
            ap: ApAccumulator::new(default_iou_thresholds()).expect("static thresholds"),
            images: 0,
        }
    }

    pub fn add(&mut self, pred: &ImageOutputs<'_>, gt: &ImageOutputs<'_>) -> Result<()> {
        self.pq.add(pred.panoptic, gt.panoptic, &self.catalog)?;
        self.confusion.add(pred.labels, gt.labels)?;
        let p = InstanceSet::from_panoptic(pred.panoptic, &self.catalog, pred.segments);
        let g = InstanceSet::from_panoptic(gt.panoptic, &self.catalog, gt.segments);
        self.ap.add(&p, &g)?;
        self.images += 1;
        Ok(())
    }

    /// Appends the images of `other`; merging in a fixed order gives the same
    /// report as adding every image to one evaluator.
    pub fn merge(&mut self, other: &Evaluator) {
        self.pq.merge(&other.pq);
        self.confusion.merge(&other.confusion);
        self.ap.merge(&other.ap);
        self.images += other.images;
    }

    pub fn finish(&self) -> EvalReport {
        let panoptic = self.pq.finish(&self.catalog);
        let semantic = self.confusion.finish(&self.catalog);
        let instance = self.ap.finish();
        EvalReport {
            images: self.images,
            miou: semantic.miou,
            pq: panoptic.pq,
            sq: panoptic.sq,
            rq: panoptic.rq,
            pq_things: panoptic.pq_things,
            sq_things: panoptic.sq_things,
            rq_things: panoptic.rq_things,
            pq_stuff: panoptic.pq_stuff,
            ap: instance.ap,
            ap50: instance.per_threshold.first().map_or(0.0, |t| t.ap),
            panoptic,
            semantic,
            instance,
        }
    }
}
