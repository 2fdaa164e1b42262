//! Panoptic fusion: stuff pixels keep their semantic label, thing pixels take
//! the class and a dense per-class index of their instance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{
    check_shape, ClassCatalog, ClassId, Grid, InstanceLabelMap, PanopticMap, PanopticPixel,
    SemanticLabelMap, INSTANCE_DIVISOR,
};

/// One thing segment of a panoptic map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanopticSegment {
    pub encoded_id: u32,
    pub class_id: ClassId,
    pub instance_id: u16,
    /// Id in the instance map the segment came from.
    pub source_id: u32,
    pub area: usize,
    pub confidence: f64,
}

pub fn merge_panoptic(
    labels: &SemanticLabelMap,
    instances: &InstanceLabelMap,
    catalog: &ClassCatalog,
) -> Result<PanopticMap> {
    Ok(merge_panoptic_with_segments(labels, instances, catalog)?.0)
}

/// As [`merge_panoptic`], also listing the thing segments.
///
/// Thing pixels without an instance become `(void, 0)` with void = `K`.
pub fn merge_panoptic_with_segments(
    labels: &SemanticLabelMap,
    instances: &InstanceLabelMap,
    catalog: &ClassCatalog,
) -> Result<(PanopticMap, Vec<PanopticSegment>)> {
    check_shape(labels, instances.ids())?;
    catalog.validate_labels(labels)?;
    instances.validate_classes(catalog)?;
    let records = instances.records();
    let max_id = records.last().map_or(0, |r| r.id) as usize;
    let mut dense = vec![PanopticPixel::default(); max_id + 1];
    let mut per_class = vec![0u32; catalog.num_classes()];
    let mut segments = Vec::with_capacity(records.len());
    for rec in records {
        let n = &mut per_class[usize::from(rec.class_id)];
        *n += 1;
        if *n >= INSTANCE_DIVISOR {
            return Err(Error::Validation(format!(
                "class {} has more than {} instances",
                rec.class_id,
                INSTANCE_DIVISOR - 1
            )));
        }
        let px = PanopticPixel::new(rec.class_id, *n as u16);
        dense[rec.id as usize] = px;
        segments.push(PanopticSegment {
            encoded_id: px.encode(),
            class_id: rec.class_id,
            instance_id: px.instance_id,
            source_id: rec.id,
            area: rec.area,
            confidence: rec.confidence,
        });
    }
    let void = PanopticPixel::new(catalog.void_id(), 0);
    let pixels = labels
        .as_slice()
        .iter()
        .zip(instances.ids().as_slice())
        .map(|(&label, &id)| {
            if !catalog.is_thing(label) {
                PanopticPixel::new(label, 0)
            } else if id == 0 {
                void
            } else {
                dense[id as usize]
            }
        })
        .collect();
    // Thing segments that lie only on stuff pixels vanish; keep areas exact.
    let map = PanopticMap::new(Grid::from_vec(labels.height(), labels.width(), pixels)?)?;
    let mut area = std::collections::HashMap::new();
    for p in map.grid().as_slice() {
        if p.instance_id != 0 {
            *area.entry(p.encode()).or_insert(0usize) += 1;
        }
    }
    segments.retain_mut(|s| match area.get(&s.encoded_id) {
        Some(&a) => {
            s.area = a;
            true
        }
        None => false,
    });
    Ok((map, segments))
}
