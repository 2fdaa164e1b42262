//! End-to-end post-processing (derive, refine, panoptic fusion), scene-level
//! evaluation on synthetic data, and the ablation driver.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive::{derive_from_labels, DeriveParams, Diagnostics};
use crate::error::{Error, Result};
use crate::losses::{compute_losses, ContourTerms, LossConfig, LossInputs, LossReport};
use crate::metrics::{EvalReport, Evaluator, ImageOutputs};
use crate::panoptic::{merge_panoptic_with_segments, PanopticSegment};
use crate::raster::{
    argmax_semantic, ClassCatalog, ContourProbMap, InstanceLabelMap, OffsetField, PanopticMap,
    SemanticLabelMap, SemanticProbMap,
};
use crate::refine::{refine, RefineParams, SemanticEvidence};
use crate::synth::{
    exact_offsets, generate_scene, gt_contour_mask, simulate_predictions, SceneSpec,
};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub derive: DeriveParams,
    pub refine: RefineParams,
    /// Skips every refinement step.
    pub no_refine: bool,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.derive.validate()?;
        self.refine.validate()
    }

    /// Refinement parameters actually applied.
    pub fn effective_refine(&self) -> RefineParams {
        if self.no_refine {
            RefineParams::disabled()
        } else {
            self.refine
        }
    }
}

/// Wall-clock milliseconds per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub derive_ms: f64,
    pub refine_ms: f64,
    pub panoptic_ms: f64,
    pub total_ms: f64,
}

/// Network outputs consumed by the pipeline.
#[derive(Clone, Copy, Debug)]
pub struct PipelineInputs<'a> {
    pub probs: &'a SemanticProbMap,
    pub contours: &'a ContourProbMap,
    pub offsets: Option<&'a OffsetField>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub labels: SemanticLabelMap,
    /// Instances straight out of derivation.
    pub derived: InstanceLabelMap,
    pub instances: InstanceLabelMap,
    pub panoptic: PanopticMap,
    pub segments: Vec<PanopticSegment>,
    pub diagnostics: Diagnostics,
    pub timings: StageTimings,
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs derive, refine and panoptic fusion; errors carry the stage name.
pub fn run_pipeline(
    inputs: &PipelineInputs<'_>,
    catalog: &ClassCatalog,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    config.validate()?;
    catalog.require_panoptic()?;
    let params = config.effective_refine();
    let refining = params.split || params.merge || params.min_area > 1;
    if refining && inputs.offsets.is_none() {
        return Err(Error::Validation(
            "refinement needs an offset field; supply offsets or disable refinement".into(),
        )
        .in_stage("refine"));
    }

    let t0 = Instant::now();
    let labels = argmax_semantic(inputs.probs);
    let (derived, diagnostics) = derive_from_labels(
        &labels,
        inputs.probs,
        inputs.contours,
        inputs.offsets,
        catalog,
        &config.derive,
    )
    .map_err(|e| e.in_stage("derive"))?;
    let derive_ms = ms(t0);

    let t1 = Instant::now();
    let instances = match inputs.offsets {
        Some(offsets) if refining => {
            let evidence = SemanticEvidence {
                labels: &labels,
                probs: inputs.probs,
                catalog,
            };
            refine(&derived, offsets, &evidence, &params).map_err(|e| e.in_stage("refine"))?
        }
        _ => derived.clone(),
    };
    let refine_ms = ms(t1);

    let t2 = Instant::now();
    let (panoptic, segments) = merge_panoptic_with_segments(&labels, &instances, catalog)
        .map_err(|e| e.in_stage("panoptic"))?;
    let panoptic_ms = ms(t2);

    Ok(PipelineOutput {
        labels,
        derived,
        instances,
        panoptic,
        segments,
        diagnostics,
        timings: StageTimings {
            derive_ms,
            refine_ms,
            panoptic_ms,
            total_ms: ms(t0),
        },
    })
}

/// Headline scores of a single scene.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneScores {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub pq_things: f64,
    pub sq_things: f64,
    pub rq_things: f64,
    pub pq_stuff: f64,
    pub miou: f64,
    pub ap: f64,
    pub ap50: f64,
}

impl From<&EvalReport> for SceneScores {
    fn from(r: &EvalReport) -> Self {
        SceneScores {
            pq: r.pq,
            sq: r.sq,
            rq: r.rq,
            pq_things: r.pq_things,
            sq_things: r.sq_things,
            rq_things: r.rq_things,
            pq_stuff: r.pq_stuff,
            miou: r.miou,
            ap: r.ap,
            ap50: r.ap50,
        }
    }
}

/// Result of running one synthetic scene end to end.
#[derive(Clone, Debug)]
pub struct SceneOutcome {
    pub seed: u64,
    pub scores: SceneScores,
    pub evaluator: Evaluator,
    pub losses: Option<LossReport>,
    pub timings: StageTimings,
}

/// Generates, simulates, post-processes and scores the scene `spec.seed`.
///
/// With `loss` set, the simulated outputs are also scored against the
/// ground truth by the configured losses.
pub fn evaluate_scene(
    spec: &SceneSpec,
    config: &PipelineConfig,
    loss: Option<&LossConfig>,
) -> Result<SceneOutcome> {
    let scene = generate_scene(spec).map_err(|e| e.in_stage("synth"))?;
    let pred = simulate_predictions(&scene, spec).map_err(|e| e.in_stage("synth"))?;
    let out = run_pipeline(
        &PipelineInputs {
            probs: &pred.probs,
            contours: &pred.contours,
            offsets: Some(&pred.offsets),
        },
        &spec.catalog,
        config,
    )?;
    let mut evaluator = Evaluator::new(&spec.catalog);
    evaluator
        .add(
            &ImageOutputs {
                labels: &out.labels,
                panoptic: &out.panoptic,
                segments: Some(&out.segments),
            },
            &ImageOutputs {
                labels: &scene.labels,
                panoptic: &scene.panoptic,
                segments: None,
            },
        )
        .map_err(|e| e.in_stage("eval"))?;
    let losses = match loss {
        Some(cfg) => {
            let gt_contours = gt_contour_mask(&scene, spec.dilation_rate);
            let gt_offsets = exact_offsets(&scene.instances);
            let mut report = compute_losses(
                &LossInputs {
                    semantic: Some((&pred.probs, &scene.labels)),
                    contour: Some((&pred.contours, &gt_contours)),
                    center: Some((&pred.offsets, &gt_offsets)),
                },
                cfg,
            )
            .map_err(|e| e.in_stage("loss"))?;
            report.gradients = None;
            Some(report)
        }
        None => None,
    };
    Ok(SceneOutcome {
        seed: spec.seed,
        scores: SceneScores::from(&evaluator.finish()),
        evaluator,
        losses,
        timings: out.timings,
    })
}

/// Aggregate over a suite of scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub scenes: usize,
    /// Per-scene scores averaged over scenes.
    pub mean: SceneScores,
    /// Scores of all scenes evaluated as one dataset.
    pub pooled: SceneScores,
    pub mean_contour_loss: Option<f64>,
    pub mean_total_loss: Option<f64>,
    pub per_scene: Vec<(u64, SceneScores)>,
}

/// Runs `evaluate_scene` for every seed, in parallel on the current rayon
/// pool; results are combined in seed order so they do not depend on the
/// number of threads.
pub fn run_suite(
    spec: &SceneSpec,
    seeds: &[u64],
    config: &PipelineConfig,
    loss: Option<&LossConfig>,
) -> Result<SuiteSummary> {
    spec.validate()?;
    config.validate()?;
    let outcomes: Vec<SceneOutcome> = seeds
        .par_iter()
        .map(|&seed| evaluate_scene(&spec.with_seed(seed), config, loss))
        .collect::<Result<_>>()?;
    Ok(summarize(&spec.catalog, &outcomes))
}

pub fn summarize(catalog: &ClassCatalog, outcomes: &[SceneOutcome]) -> SuiteSummary {
    let mut pooled = Evaluator::new(catalog);
    outcomes.iter().for_each(|o| pooled.merge(&o.evaluator));
    let n = outcomes.len().max(1) as f64;
    let avg = |f: fn(&SceneScores) -> f64| outcomes.iter().map(|o| f(&o.scores)).sum::<f64>() / n;
    let mean = SceneScores {
        pq: avg(|s| s.pq),
        sq: avg(|s| s.sq),
        rq: avg(|s| s.rq),
        pq_things: avg(|s| s.pq_things),
        sq_things: avg(|s| s.sq_things),
        rq_things: avg(|s| s.rq_things),
        pq_stuff: avg(|s| s.pq_stuff),
        miou: avg(|s| s.miou),
        ap: avg(|s| s.ap),
        ap50: avg(|s| s.ap50),
    };
    let loss_avg = |f: fn(&LossReport) -> f64| -> Option<f64> {
        let v: Option<Vec<f64>> = outcomes.iter().map(|o| o.losses.as_ref().map(f)).collect();
        v.filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    };
    SuiteSummary {
        scenes: outcomes.len(),
        mean,
        pooled: SceneScores::from(&pooled.finish()),
        mean_contour_loss: loss_avg(|r| r.wbce + r.huber_contour + r.nms),
        mean_total_loss: loss_avg(|r| r.total),
        per_scene: outcomes.iter().map(|o| (o.seed, o.scores)).collect(),
    }
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    DilationRate,
    MinArea,
    LossCombo,
    RefineFlags,
}

impl AblationAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dilation_rate" => Ok(AblationAxis::DilationRate),
            "min_area" => Ok(AblationAxis::MinArea),
            "loss_combo" => Ok(AblationAxis::LossCombo),
            "refine_flags" => Ok(AblationAxis::RefineFlags),
            other => Err(Error::Validation(format!(
                "unknown ablation axis {other:?}; expected dilation_rate, min_area, loss_combo or refine_flags"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::DilationRate => "dilation_rate",
            AblationAxis::MinArea => "min_area",
            AblationAxis::LossCombo => "loss_combo",
            AblationAxis::RefineFlags => "refine_flags",
        }
    }

    /// Grid used when none is given.
    pub fn default_grid(self) -> Vec<String> {
        let v: &[&str] = match self {
            AblationAxis::DilationRate => &["1", "2", "3"],
            AblationAxis::MinArea => &["1", "100", "300", "500"],
            AblationAxis::LossCombo => &["wbce", "wbce+huber", "wbce+huber+nms"],
            AblationAxis::RefineFlags => &["off", "split", "split+merge"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }
}

/// Base configuration of an ablation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub spec: SceneSpec,
    pub pipeline: PipelineConfig,
    pub loss: LossConfig,
    /// Seeds `spec.seed .. spec.seed + scenes`.
    pub scenes: usize,
}

impl Default for AblationConfig {
    /// Moderately noisy scenes, so that every axis has something to change.
    fn default() -> Self {
        AblationConfig {
            spec: SceneSpec {
                contour_break_prob: 0.15,
                occluder_prob: 0.3,
                contour_false_positive_prob: 0.02,
                semantic_flip_prob: 0.01,
                offset_noise_sigma: 0.5,
                ..SceneSpec::default()
            },
            pipeline: PipelineConfig::default(),
            loss: LossConfig::default(),
            scenes: 20,
        }
    }
}

/// A parsed grid value.
#[derive(Clone, Copy, Debug, PartialEq)]
enum GridValue {
    Count(usize),
    Terms(ContourTerms),
    Refine { split: bool, merge: bool },
}

fn parse_grid_value(axis: AblationAxis, raw: &str) -> Result<GridValue> {
    let bad =
        |why: &str| Error::Validation(format!("invalid {} grid value {raw:?}: {why}", axis.name()));
    match axis {
        AblationAxis::DilationRate | AblationAxis::MinArea => raw
            .trim()
            .parse::<usize>()
            .map(GridValue::Count)
            .map_err(|_| bad("expected a non-negative integer")),
        AblationAxis::LossCombo => ContourTerms::parse(raw)
            .map(GridValue::Terms)
            .map_err(|e| bad(&e.to_string())),
        AblationAxis::RefineFlags => match raw.trim() {
            "off" => Ok(GridValue::Refine {
                split: false,
                merge: false,
            }),
            "split" => Ok(GridValue::Refine {
                split: true,
                merge: false,
            }),
            "merge" => Ok(GridValue::Refine {
                split: false,
                merge: true,
            }),
            "split+merge" => Ok(GridValue::Refine {
                split: true,
                merge: true,
            }),
            _ => Err(bad("expected off, split, merge or split+merge")),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: String,
    pub ap: f64,
    pub pq: f64,
    pub pq_things: f64,
    pub sq_things: f64,
    pub rq_things: f64,
    pub pq_stuff: f64,
    pub miou: f64,
    /// Per-scene PQ averaged over scenes.
    pub mean_pq: f64,
    pub contour_loss: Option<f64>,
    pub total_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub config: AblationConfig,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub const CSV_HEADER: [&'static str; 11] = [
        "value",
        "ap",
        "pq",
        "pq_things",
        "sq_things",
        "rq_things",
        "pq_stuff",
        "miou",
        "mean_pq",
        "contour_loss",
        "total_loss",
    ];

    /// Rows as CSV fields, in [`Self::CSV_HEADER`] order.
    pub fn csv_records(&self) -> Vec<Vec<String>> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.value.clone(),
                    r.ap.to_string(),
                    r.pq.to_string(),
                    r.pq_things.to_string(),
                    r.sq_things.to_string(),
                    r.rq_things.to_string(),
                    r.pq_stuff.to_string(),
                    r.miou.to_string(),
                    r.mean_pq.to_string(),
                    opt(r.contour_loss),
                    opt(r.total_loss),
                ]
            })
            .collect()
    }
}

/// Evaluates the base configuration once per grid value along `axis`.
///
/// The whole grid is validated before any scene runs. The loss-combo axis
/// scores the simulated outputs with each set of contour terms; the
/// post-processing metrics do not depend on it.
pub fn run_ablation(
    axis: AblationAxis,
    grid: &[String],
    config: &AblationConfig,
) -> Result<AblationTable> {
    if grid.is_empty() {
        return Err(Error::Validation("ablation grid is empty".into()));
    }
    let values: Vec<GridValue> = grid
        .iter()
        .map(|raw| parse_grid_value(axis, raw))
        .collect::<Result<_>>()?;
    config.spec.validate()?;
    config.pipeline.validate()?;
    config.loss.weights.validate()?;
    if config.scenes == 0 {
        return Err(Error::Validation(
            "ablation needs at least one scene".into(),
        ));
    }
    let seeds: Vec<u64> = (0..config.scenes as u64)
        .map(|k| config.spec.seed + k)
        .collect();

    let mut rows = Vec::with_capacity(values.len());
    for (raw, value) in grid.iter().zip(values) {
        let mut spec = config.spec.clone();
        let mut pipeline = config.pipeline.clone();
        let mut loss = config.loss;
        match value {
            GridValue::Count(n) if axis == AblationAxis::DilationRate => spec.dilation_rate = n,
            GridValue::Count(n) => pipeline.refine.min_area = n,
            GridValue::Terms(t) => loss.terms = t,
            GridValue::Refine { split, merge } => {
                pipeline.refine.split = split;
                pipeline.refine.merge = merge;
            }
        }
        let with_loss = axis == AblationAxis::LossCombo;
        let summary = run_suite(&spec, &seeds, &pipeline, with_loss.then_some(&loss))?;
        rows.push(AblationRow {
            value: raw.trim().to_string(),
            ap: summary.pooled.ap,
            pq: summary.pooled.pq,
            pq_things: summary.pooled.pq_things,
            sq_things: summary.pooled.sq_things,
            rq_things: summary.pooled.rq_things,
            pq_stuff: summary.pooled.pq_stuff,
            miou: summary.pooled.miou,
            mean_pq: summary.mean.pq,
            contour_loss: summary.mean_contour_loss,
            total_loss: summary.mean_total_loss,
        });
    }
    Ok(AblationTable {
        axis,
        config: config.clone(),
        rows,
    })
}
