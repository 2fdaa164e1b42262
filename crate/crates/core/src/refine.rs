//! Instance refinement driven by center-offset predictions: split instances
//! whose predicted centers form distinct clusters, merge instances whose mean
//! predicted centers are close, then dissolve instances below a minimum area.

use serde::{Deserialize, Serialize};

use crate::dbscan::{dbscan, NOISE};
use crate::derive::{assign_class_and_confidence, centroid_table, nearest_centroid};
use crate::error::{ensure_same_shape, Result};
use crate::raster::{
    ClassCatalog, ClassId, InstanceIds, InstanceLabelMap, OffsetField, SemanticLabelMap,
    SemanticProbMap,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineParams {
    pub split: bool,
    pub merge: bool,
    /// Distance (pixels) at which cluster centers count as distinct.
    pub eps: f64,
    /// Fixed DBSCAN density; `None` means `max(10, ⌈0.01·area⌉)` per instance.
    pub min_samples: Option<usize>,
    /// Instances with fewer pixels are dissolved; 0 or 1 disables the filter.
    pub min_area: usize,
    /// Instances merge when mean predicted centers are strictly closer than this.
    pub merge_distance: f64,
    pub merge_same_class_only: bool,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            split: true,
            merge: true,
            eps: 20.0,
            min_samples: None,
            min_area: 300,
            merge_distance: 20.0,
            merge_same_class_only: true,
        }
    }
}

impl RefineParams {
    /// All refinement steps off.
    pub fn disabled() -> Self {
        RefineParams {
            split: false,
            merge: false,
            min_area: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Validation(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.merge_distance.is_nan() || self.merge_distance < 0.0 {
            return Err(Error::Validation(format!(
                "merge distance must be non-negative, got {}",
                self.merge_distance
            )));
        }
        if self.min_samples == Some(0) {
            return Err(Error::Validation("min_samples must be at least 1".into()));
        }
        Ok(())
    }

    fn min_samples_for(&self, area: usize) -> usize {
        self.min_samples
            .unwrap_or_else(|| 10.max(area.div_ceil(100)))
    }
}

/// Semantic outputs needed to re-vote classes after ids change.
#[derive(Clone, Copy, Debug)]
pub struct SemanticEvidence<'a> {
    pub labels: &'a SemanticLabelMap,
    pub probs: &'a SemanticProbMap,
    pub catalog: &'a ClassCatalog,
}

impl SemanticEvidence<'_> {
    fn rebuild(&self, ids: &InstanceIds) -> Result<InstanceLabelMap> {
        Ok(assign_class_and_confidence(ids, self.labels, self.probs, self.catalog)?.0)
    }
}

/// `position + offset` for each listed pixel.
pub fn predicted_centers(pixels: &[usize], offsets: &OffsetField) -> Vec<(f64, f64)> {
    pixels
        .iter()
        .map(|&i| offsets.predicted_center(i))
        .collect()
}

/// Pixel offsets of every id, indexed by id.
fn pixel_lists(ids: &InstanceIds) -> Vec<Vec<usize>> {
    let max_id = ids.as_slice().iter().copied().max().unwrap_or(0) as usize;
    let mut lists = vec![Vec::new(); max_id + 1];
    for (i, &id) in ids.as_slice().iter().enumerate() {
        if id != 0 {
            lists[id as usize].push(i);
        }
    }
    lists
}

fn mean(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let (mut n, mut r, mut c) = (0usize, 0.0, 0.0);
    for p in points {
        n += 1;
        r += p.0;
        c += p.1;
    }
    (r / n as f64, c / n as f64)
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Joins groups whose elements are linked; the root is always the smallest index.
fn union_min(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}

/// Splits instances whose predicted centers form clusters at least `eps` apart.
///
/// Clusters whose mean centers are closer than `eps` are kept together. Each
/// resulting part gets a fresh id; noise pixels go to the nearest part mean.
pub fn split_instances(
    instances: &InstanceLabelMap,
    offsets: &OffsetField,
    evidence: &SemanticEvidence<'_>,
    params: &RefineParams,
) -> Result<InstanceLabelMap> {
    params.validate()?;
    ensure_same_shape(instances.shape(), offsets.shape())?;
    let mut ids = instances.ids().clone();
    let lists = pixel_lists(&ids);
    let mut next_id = lists.len() as u32;
    let eps2 = params.eps * params.eps;
    let mut changed = false;
    for pixels in lists.iter().filter(|p| !p.is_empty()) {
        let centers = predicted_centers(pixels, offsets);
        let labels = dbscan(&centers, params.eps, params.min_samples_for(pixels.len()))?;
        let n_clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0)) as usize;
        if n_clusters < 2 {
            continue;
        }
        let cluster_means: Vec<(f64, f64)> = (0..n_clusters)
            .map(|k| {
                mean(
                    centers
                        .iter()
                        .zip(&labels)
                        .filter(|&(_, &l)| l == k as i32)
                        .map(|(&p, _)| p),
                )
            })
            .collect();
        let mut parent: Vec<usize> = (0..n_clusters).collect();
        for a in 0..n_clusters {
            for b in a + 1..n_clusters {
                if dist2(cluster_means[a], cluster_means[b]) < eps2 {
                    union_min(&mut parent, a, b);
                }
            }
        }
        let mut group_of_root = vec![usize::MAX; n_clusters];
        let mut n_groups = 0;
        let group: Vec<usize> = (0..n_clusters)
            .map(|k| {
                let r = find(&mut parent, k);
                if group_of_root[r] == usize::MAX {
                    group_of_root[r] = n_groups;
                    n_groups += 1;
                }
                group_of_root[r]
            })
            .collect();
        if n_groups < 2 {
            continue;
        }
        let group_means: Vec<(f64, f64)> = (0..n_groups)
            .map(|g| {
                mean(
                    centers
                        .iter()
                        .zip(&labels)
                        .filter(|&(_, &l)| l != NOISE && group[l as usize] == g)
                        .map(|(&p, _)| p),
                )
            })
            .collect();
        for ((&pixel, &label), &center) in pixels.iter().zip(&labels).zip(&centers) {
            let g = if label == NOISE {
                (0..n_groups)
                    .min_by(|&a, &b| {
                        dist2(group_means[a], center).total_cmp(&dist2(group_means[b], center))
                    })
                    .expect("at least two groups")
            } else {
                group[label as usize]
            };
            ids.as_mut_slice()[pixel] = next_id + g as u32;
        }
        next_id += n_groups as u32;
        changed = true;
    }
    if !changed {
        return Ok(instances.clone());
    }
    evidence.rebuild(&ids)
}

/// Merges instances whose mean predicted centers are closer than
/// `merge_distance` (transitively), into the smallest member id.
///
/// Merging is repeated until no pair qualifies, so the result is a fixed point.
pub fn merge_instances(
    instances: &InstanceLabelMap,
    offsets: &OffsetField,
    evidence: &SemanticEvidence<'_>,
    params: &RefineParams,
) -> Result<InstanceLabelMap> {
    params.validate()?;
    ensure_same_shape(instances.shape(), offsets.shape())?;
    let mut current = instances.clone();
    let limit2 = params.merge_distance * params.merge_distance;
    loop {
        let ids = current.ids();
        let lists = pixel_lists(ids);
        let nodes: Vec<(u32, ClassId, (f64, f64))> = current
            .records()
            .iter()
            .map(|r| {
                let pixels = &lists[r.id as usize];
                let c = mean(pixels.iter().map(|&i| offsets.predicted_center(i)));
                (r.id, r.class_id, c)
            })
            .collect();
        let mut parent: Vec<usize> = (0..nodes.len()).collect();
        let mut any = false;
        for a in 0..nodes.len() {
            for b in a + 1..nodes.len() {
                let same_class = nodes[a].1 == nodes[b].1;
                if (same_class || !params.merge_same_class_only)
                    && dist2(nodes[a].2, nodes[b].2) < limit2
                {
                    union_min(&mut parent, a, b);
                    any = true;
                }
            }
        }
        if !any {
            return Ok(current);
        }
        // Records are sorted by id, so the root index holds the smallest id.
        let mut target = vec![0u32; lists.len()];
        for k in 0..nodes.len() {
            let root = find(&mut parent, k);
            target[nodes[k].0 as usize] = nodes[root].0;
        }
        let merged = ids.map(|&id| if id == 0 { 0 } else { target[id as usize] });
        current = evidence.rebuild(&merged)?;
    }
}

/// Dissolves instances smaller than `min_area`; their pixels join the
/// surviving instance whose centroid is nearest to each pixel's predicted
/// center, or become unassigned when nothing survives.
pub fn filter_min_area(
    instances: &InstanceLabelMap,
    offsets: &OffsetField,
    evidence: &SemanticEvidence<'_>,
    params: &RefineParams,
) -> Result<InstanceLabelMap> {
    ensure_same_shape(instances.shape(), offsets.shape())?;
    let small: Vec<u32> = instances
        .records()
        .iter()
        .filter(|r| r.area < params.min_area)
        .map(|r| r.id)
        .collect();
    if small.is_empty() {
        return Ok(instances.clone());
    }
    let max_id = instances.records().last().map_or(0, |r| r.id) as usize;
    let mut dissolved = vec![false; max_id + 1];
    small.iter().for_each(|&id| dissolved[id as usize] = true);
    let survivors = instances
        .ids()
        .map(|&id| if dissolved[id as usize] { 0 } else { id });
    let table = centroid_table(&survivors);
    let mut ids = survivors;
    for (i, (slot, &orig)) in ids
        .as_mut_slice()
        .iter_mut()
        .zip(instances.ids().as_slice())
        .enumerate()
    {
        if dissolved[orig as usize] {
            *slot = nearest_centroid(&table, offsets.predicted_center(i)).unwrap_or(0);
        }
    }
    evidence.rebuild(&ids)
}

/// Runs the enabled steps in order: split, merge, min-area filter.
pub fn refine(
    instances: &InstanceLabelMap,
    offsets: &OffsetField,
    evidence: &SemanticEvidence<'_>,
    params: &RefineParams,
) -> Result<InstanceLabelMap> {
    params.validate()?;
    let mut current = instances.clone();
    if params.split {
        current = split_instances(&current, offsets, evidence, params)?;
    }
    if params.merge {
        current = merge_instances(&current, offsets, evidence, params)?;
    }
    if params.min_area > 1 {
        current = filter_min_area(&current, offsets, evidence, params)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Grid, SemanticProbMap};

    struct Fixture {
        labels: SemanticLabelMap,
        probs: SemanticProbMap,
        catalog: ClassCatalog,
    }

    impl Fixture {
        fn new(labels: SemanticLabelMap) -> Self {
            let catalog = ClassCatalog::synthetic_default();
            let probs = SemanticProbMap::one_hot(&labels, catalog.num_classes()).unwrap();
            Fixture {
                labels,
                probs,
                catalog,
            }
        }

        fn evidence(&self) -> SemanticEvidence<'_> {
            SemanticEvidence {
                labels: &self.labels,
                probs: &self.probs,
                catalog: &self.catalog,
            }
        }

        fn map(&self, ids: InstanceIds) -> InstanceLabelMap {
            self.evidence().rebuild(&ids).unwrap()
        }
    }

    /// Offsets that send every pixel of a rectangle to `center`.
    fn point_to(
        off: &mut OffsetField,
        w: usize,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
        center: (f64, f64),
    ) {
        for r in rows {
            for c in cols.clone() {
                off.set(
                    r * w + c,
                    (center.0 - r as f64) as f32,
                    (center.1 - c as f64) as f32,
                );
            }
        }
    }

    #[test]
    fn predicted_centers_add_offsets() {
        let mut off = OffsetField::zeros(20, 20);
        off.set(10 * 20 + 10, 5.0, -3.0);
        assert_eq!(predicted_centers(&[210], &off), vec![(15.0, 7.0)]);
        assert_eq!(predicted_centers(&[21], &off), vec![(1.0, 1.0)]);
    }

    #[test]
    fn split_two_center_blob() {
        let (h, w) = (20, 80);
        let mut ids: InstanceIds = Grid::new(h, w);
        for r in 5..15 {
            for c in 10..70 {
                ids[(r, c)] = 1;
            }
        }
        let fx = Fixture::new(ids.map(|&id| if id != 0 { 6 } else { 0 }));
        let mut off = OffsetField::zeros(h, w);
        point_to(&mut off, w, 5..15, 10..40, (10.0, 15.0));
        point_to(&mut off, w, 5..15, 40..70, (10.0, 65.0));
        let out = split_instances(
            &fx.map(ids.clone()),
            &off,
            &fx.evidence(),
            &RefineParams::default(),
        )
        .unwrap();
        assert_eq!(out.records().len(), 2);
        let left = out.ids()[(7, 12)];
        let right = out.ids()[(7, 60)];
        assert_ne!(left, right);
        for r in 5..15 {
            for c in 10..70 {
                assert_eq!(out.ids()[(r, c)], if c < 40 { left } else { right });
            }
        }
        assert!(left > 1 && right > 1, "fresh ids");
    }

    #[test]
    fn split_keeps_tight_centers_and_noise_only() {
        let (h, w) = (20, 40);
        let mut ids: InstanceIds = Grid::new(h, w);
        for r in 2..18 {
            for c in 2..38 {
                ids[(r, c)] = 1;
            }
        }
        let fx = Fixture::new(ids.map(|&id| if id != 0 { 6 } else { 0 }));
        let map = fx.map(ids.clone());
        // Centers within 5 px of each other.
        let mut off = OffsetField::zeros(h, w);
        point_to(&mut off, w, 2..18, 2..20, (10.0, 18.0));
        point_to(&mut off, w, 2..18, 20..38, (10.0, 22.0));
        let out = split_instances(&map, &off, &fx.evidence(), &RefineParams::default()).unwrap();
        assert_eq!(out, map);
        // Raw pixel positions with a huge min_samples: every point is noise.
        let zero = OffsetField::zeros(h, w);
        let p = RefineParams {
            min_samples: Some(10_000),
            ..RefineParams::default()
        };
        assert_eq!(
            split_instances(&map, &zero, &fx.evidence(), &p).unwrap(),
            map
        );
    }

    fn three_blobs(gaps: [f64; 3]) -> (Fixture, InstanceLabelMap, OffsetField) {
        let (h, w) = (10, 30);
        let mut ids: InstanceIds = Grid::new(h, w);
        for (k, cols) in [(1u32, 0..10), (2, 10..20), (3, 20..30)] {
            for r in 0..h {
                for c in cols.clone() {
                    ids[(r, c)] = k;
                }
            }
        }
        let fx = Fixture::new(ids.map(|_| 6));
        let mut off = OffsetField::zeros(h, w);
        let centers = [
            (100.0, 100.0),
            (100.0, 100.0 + gaps[0]),
            (100.0, 100.0 + gaps[0] + gaps[1]),
        ];
        point_to(&mut off, w, 0..h, 0..10, centers[0]);
        point_to(&mut off, w, 0..h, 10..20, centers[1]);
        point_to(&mut off, w, 0..h, 20..30, centers[2]);
        let map = fx.map(ids);
        (fx, map, off)
    }

    #[test]
    fn merge_close_fragments_and_strict_threshold() {
        let (fx, map, off) = three_blobs([10.0, 50.0, 0.0]);
        let out = merge_instances(&map, &off, &fx.evidence(), &RefineParams::default()).unwrap();
        assert_eq!(
            out.records().iter().map(|r| r.id).collect::<Vec<_>>(),
            vec![1, 3]
        );
        let (fx, map, off) = three_blobs([20.0, 50.0, 0.0]);
        let out = merge_instances(&map, &off, &fx.evidence(), &RefineParams::default()).unwrap();
        assert_eq!(out.records().len(), 3, "exactly 20 px apart must not merge");
    }

    #[test]
    fn merge_is_transitive_and_idempotent() {
        let (fx, map, off) = three_blobs([15.0, 15.0, 0.0]);
        let p = RefineParams::default();
        let once = merge_instances(&map, &off, &fx.evidence(), &p).unwrap();
        assert_eq!(once.records().len(), 1);
        assert_eq!(once.records()[0].id, 1);
        assert_eq!(
            merge_instances(&once, &off, &fx.evidence(), &p).unwrap(),
            once
        );
    }

    #[test]
    fn merge_respects_class_unless_disabled() {
        let (h, w) = (4, 8);
        let ids = Grid::from_vec(
            h,
            w,
            (0..h * w).map(|i| if i % w < 4 { 1 } else { 2 }).collect(),
        )
        .unwrap();
        let fx = Fixture::new(ids.map(|&id| if id == 1 { 5 } else { 6 }));
        let map = fx.map(ids);
        let off = OffsetField::zeros(h, w);
        let p = RefineParams::default();
        assert_eq!(
            merge_instances(&map, &off, &fx.evidence(), &p)
                .unwrap()
                .records()
                .len(),
            2
        );
        let any = RefineParams {
            merge_same_class_only: false,
            ..p
        };
        assert_eq!(
            merge_instances(&map, &off, &fx.evidence(), &any)
                .unwrap()
                .records()
                .len(),
            1
        );
    }

    #[test]
    fn filter_absorbs_small_fragment() {
        let (h, w) = (30, 40);
        let mut ids: InstanceIds = Grid::new(h, w);
        for r in 0..20 {
            for c in 0..20 {
                ids[(r, c)] = 1; // 400 px
            }
        }
        for r in 22..27 {
            for c in 30..40 {
                ids[(r, c)] = 2; // 50 px
            }
        }
        let fx = Fixture::new(ids.map(|&id| if id != 0 { 6 } else { 0 }));
        let map = fx.map(ids.clone());
        let off = OffsetField::zeros(h, w);
        let p = RefineParams::default();
        let out = filter_min_area(&map, &off, &fx.evidence(), &p).unwrap();
        assert_eq!(out.records().len(), 1);
        assert_eq!(out.record(1).unwrap().area, 450);
        // min_area 1 removes nothing
        let keep = RefineParams { min_area: 1, ..p };
        assert_eq!(
            filter_min_area(&map, &off, &fx.evidence(), &keep).unwrap(),
            map
        );
        // nothing survives a huge threshold
        let all = RefineParams {
            min_area: 10_000,
            ..p
        };
        let out = filter_min_area(&map, &off, &fx.evidence(), &all).unwrap();
        assert!(out.ids().as_slice().iter().all(|&id| id == 0));
        assert!(out.records().is_empty());
    }
}
