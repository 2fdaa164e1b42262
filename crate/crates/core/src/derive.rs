//! Instance derivation from semantic labels and contour probabilities.
//!
//! thing mask → minus thresholded contours → connected components →
//! contour-pixel reassignment → class vote and confidence.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_shape, Error, Result};
use crate::raster::{
    check_shape, instance_geometry, ClassCatalog, ClassId, ContourProbMap, Grid, InstanceIds,
    InstanceLabelMap, InstanceRecord, Mask, OffsetField, SemanticLabelMap, SemanticProbMap,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(Error::Validation(format!(
                "connectivity must be 4 or 8, got {v}"
            ))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeriveParams {
    /// Contour pixels are those with probability strictly above this value.
    pub contour_threshold: f64,
    pub connectivity: Connectivity,
}

impl Default for DeriveParams {
    fn default() -> Self {
        DeriveParams {
            contour_threshold: 0.5,
            connectivity: Connectivity::Four,
        }
    }
}

impl DeriveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.contour_threshold > 0.0 && self.contour_threshold < 1.0) {
            return Err(Error::Validation(format!(
                "contour threshold must lie strictly inside (0,1), got {}",
                self.contour_threshold
            )));
        }
        Ok(())
    }
}

/// Non-fatal anomalies noticed while deriving instances.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Instances whose most frequent label was a stuff class.
    pub stuff_majority_instances: Vec<u32>,
    /// Thing pixels left without an instance after reassignment.
    pub unassigned_thing_pixels: usize,
}

/// True where the semantic label is a thing class.
pub fn instance_class_mask(labels: &SemanticLabelMap, catalog: &ClassCatalog) -> Mask {
    labels.map(|&l| catalog.is_thing(l))
}

/// `class_mask AND NOT (contour_prob > threshold)`.
pub fn boundary_aware_mask(
    class_mask: &Mask,
    contours: &ContourProbMap,
    params: &DeriveParams,
) -> Result<Mask> {
    check_shape(class_mask, contours.grid())?;
    params.validate()?;
    let t = params.contour_threshold;
    let data = class_mask
        .as_slice()
        .iter()
        .zip(contours.grid().as_slice())
        .map(|(&m, &p)| m && f64::from(p) <= t)
        .collect();
    Grid::from_vec(class_mask.height(), class_mask.width(), data)
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) -> u32 {
    let (ra, rb) = (find(parent, a), find(parent, b));
    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
    parent[hi as usize] = lo;
    lo
}

/// Two-pass union-find labeling.
///
/// Ids are `1, 2, …` in order of each component's first pixel in row-major order.
pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> InstanceIds {
    let (h, w) = mask.shape();
    let m = mask.as_slice();
    let mut labels = vec![0u32; m.len()];
    // parent[0] is the background sentinel.
    let mut parent: Vec<u32> = vec![0];
    let eight = connectivity == Connectivity::Eight;
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !m[i] {
                continue;
            }
            let mut neighbors = [0u32; 4];
            let mut n = 0;
            if c > 0 && labels[i - 1] != 0 {
                neighbors[n] = labels[i - 1];
                n += 1;
            }
            if r > 0 {
                let up = i - w;
                if labels[up] != 0 {
                    neighbors[n] = labels[up];
                    n += 1;
                }
                if eight {
                    if c > 0 && labels[up - 1] != 0 {
                        neighbors[n] = labels[up - 1];
                        n += 1;
                    }
                    if c + 1 < w && labels[up + 1] != 0 {
                        neighbors[n] = labels[up + 1];
                        n += 1;
                    }
                }
            }
            labels[i] = if n == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                l
            } else {
                let mut root = find(&mut parent, neighbors[0]);
                for &nb in &neighbors[1..n] {
                    root = union(&mut parent, root, nb);
                }
                root
            };
        }
    }
    // Resolve roots and renumber by first encounter.
    let mut remap = vec![0u32; parent.len()];
    let mut next = 0u32;
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = find(&mut parent, *l) as usize;
        if remap[root] == 0 {
            next += 1;
            remap[root] = next;
        }
        *l = remap[root];
    }
    Grid::from_vec(h, w, labels).expect("shape preserved")
}

/// Recomputes all instance records from an id map.
///
/// The class is the most frequent thing label inside the instance (smallest
/// id on ties); the confidence is the mean probability of that class.
pub fn assign_class_and_confidence(
    ids: &InstanceIds,
    labels: &SemanticLabelMap,
    probs: &SemanticProbMap,
    catalog: &ClassCatalog,
) -> Result<(InstanceLabelMap, Diagnostics)> {
    check_shape(ids, labels)?;
    ensure_same_shape(ids.shape(), probs.shape())?;
    let k = catalog.num_classes();
    if probs.num_classes() != k {
        return Err(Error::Validation(format!(
            "semantic probabilities have {} channels but the catalog has {k} classes",
            probs.num_classes()
        )));
    }
    let geometry = instance_geometry(ids);
    let mut votes = vec![vec![0usize; k]; geometry.len()];
    for (&id, &l) in ids.as_slice().iter().zip(labels.as_slice()) {
        if id != 0 {
            let l = usize::from(l);
            if l >= k {
                return Err(Error::Validation(format!("label {l} outside the catalog")));
            }
            votes[id as usize][l] += 1;
        }
    }
    let mut diagnostics = Diagnostics::default();
    let fallback_thing = catalog.thing_ids().next().ok_or_else(|| {
        Error::Validation("catalog has no thing class to assign instances to".into())
    })?;
    let mut class_of = vec![0 as ClassId; geometry.len()];
    for (id, g) in geometry.iter().enumerate() {
        if g.is_none() {
            continue;
        }
        let v = &votes[id];
        let modal_any = argmax_count(v.iter().copied().enumerate());
        let modal_thing = argmax_count(
            v.iter()
                .copied()
                .enumerate()
                .filter(|&(c, n)| n > 0 && catalog.is_thing(c as ClassId)),
        );
        if modal_any.is_some_and(|c| !catalog.is_thing(c as ClassId)) {
            diagnostics.stuff_majority_instances.push(id as u32);
        }
        class_of[id] = modal_thing.map_or(fallback_thing, |c| c as ClassId);
    }
    let mut conf_sum = vec![0.0f64; geometry.len()];
    for (i, &id) in ids.as_slice().iter().enumerate() {
        if id != 0 {
            conf_sum[id as usize] += f64::from(probs.prob(i, usize::from(class_of[id as usize])));
        }
    }
    let records = geometry
        .iter()
        .enumerate()
        .filter_map(|(id, g)| {
            g.map(|g| InstanceRecord {
                id: id as u32,
                class_id: class_of[id],
                area: g.area,
                centroid: g.centroid,
                confidence: (conf_sum[id] / g.area as f64).clamp(0.0, 1.0),
            })
        })
        .collect();
    Ok((InstanceLabelMap::new(ids.clone(), records)?, diagnostics))
}

/// Index with the largest count; the first (smallest index) wins ties.
fn argmax_count(counts: impl Iterator<Item = (usize, usize)>) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, n) in counts {
        if best.is_none_or(|(_, bn)| n > bn) {
            best = Some((i, n));
        }
    }
    best.map(|(i, _)| i)
}

/// Gives an instance id to every `class_mask` pixel that has none.
///
/// With offsets, each pixel joins the instance whose centroid is nearest to
/// its predicted center. Without offsets, instances grow by multi-source BFS
/// over the class mask (4-connectivity), smaller ids winning ties.
pub fn reassign_contour_pixels(
    ids: &InstanceIds,
    class_mask: &Mask,
    offsets: Option<&OffsetField>,
) -> Result<InstanceIds> {
    check_shape(ids, class_mask)?;
    match offsets {
        Some(off) => {
            ensure_same_shape(ids.shape(), off.shape())?;
            Ok(reassign_by_centers(ids, class_mask, off))
        }
        None => Ok(reassign_by_bfs(ids, class_mask)),
    }
}

/// Surviving instances as `(id, centroid)` in id order.
pub(crate) fn centroid_table(ids: &InstanceIds) -> Vec<(u32, (f64, f64))> {
    instance_geometry(ids)
        .into_iter()
        .enumerate()
        .filter_map(|(id, g)| g.map(|g| (id as u32, g.centroid)))
        .collect()
}

/// Id of the centroid nearest to `point`; ties go to the smaller id.
pub(crate) fn nearest_centroid(table: &[(u32, (f64, f64))], point: (f64, f64)) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for &(id, (r, c)) in table {
        let d = (r - point.0).powi(2) + (c - point.1).powi(2);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((id, d));
        }
    }
    best.map(|(id, _)| id)
}

fn reassign_by_centers(ids: &InstanceIds, class_mask: &Mask, offsets: &OffsetField) -> InstanceIds {
    let table = centroid_table(ids);
    let mut out = ids.clone();
    if table.is_empty() {
        return out;
    }
    for (i, (slot, &thing)) in out
        .as_mut_slice()
        .iter_mut()
        .zip(class_mask.as_slice())
        .enumerate()
    {
        if thing && *slot == 0 {
            *slot = nearest_centroid(&table, offsets.predicted_center(i)).unwrap_or(0);
        }
    }
    out
}

fn reassign_by_bfs(ids: &InstanceIds, class_mask: &Mask) -> InstanceIds {
    let (h, w) = ids.shape();
    let mut out = ids.clone();
    let mut dist = vec![u32::MAX; out.len()];
    let mut queue = VecDeque::new();
    for (i, &id) in ids.as_slice().iter().enumerate() {
        if id != 0 {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    let mask = class_mask.as_slice();
    while let Some(i) = queue.pop_front() {
        let (r, c) = (i / w, i % w);
        let id = out.as_slice()[i];
        let d = dist[i] + 1;
        let mut visit = |j: usize| {
            if !mask[j] || ids.as_slice()[j] != 0 {
                return;
            }
            let slot = &mut out.as_mut_slice()[j];
            if dist[j] == u32::MAX {
                dist[j] = d;
                *slot = id;
                queue.push_back(j);
            } else if dist[j] == d && id < *slot {
                // Same BFS layer: the whole layer is settled before it expands.
                *slot = id;
            }
        };
        if r > 0 {
            visit(i - w);
        }
        if r + 1 < h {
            visit(i + w);
        }
        if c > 0 {
            visit(i - 1);
        }
        if c + 1 < w {
            visit(i + 1);
        }
    }
    out
}

/// Full derivation: threshold, label, reassign, then vote classes.
pub fn derive_instances(
    probs: &SemanticProbMap,
    contours: &ContourProbMap,
    offsets: Option<&OffsetField>,
    catalog: &ClassCatalog,
    params: &DeriveParams,
) -> Result<(InstanceLabelMap, Diagnostics)> {
    let labels = crate::raster::argmax_semantic(probs);
    derive_from_labels(&labels, probs, contours, offsets, catalog, params)
}

/// As [`derive_instances`] with precomputed argmax labels.
pub fn derive_from_labels(
    labels: &SemanticLabelMap,
    probs: &SemanticProbMap,
    contours: &ContourProbMap,
    offsets: Option<&OffsetField>,
    catalog: &ClassCatalog,
    params: &DeriveParams,
) -> Result<(InstanceLabelMap, Diagnostics)> {
    params.validate()?;
    let class_mask = instance_class_mask(labels, catalog);
    let interior = boundary_aware_mask(&class_mask, contours, params)?;
    let components = connected_components(&interior, params.connectivity);
    let ids = reassign_contour_pixels(&components, &class_mask, offsets)?;
    let (map, mut diagnostics) = assign_class_and_confidence(&ids, labels, probs, catalog)?;
    diagnostics.unassigned_thing_pixels = class_mask
        .as_slice()
        .iter()
        .zip(map.ids().as_slice())
        .filter(|&(&t, &id)| t && id == 0)
        .count();
    Ok((map, diagnostics))
}
