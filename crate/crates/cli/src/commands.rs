//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use contourpan_core::contour::{dilate_contours, extract_contours};
use contourpan_core::derive::{
    assign_class_and_confidence, derive_instances, DeriveParams, Diagnostics,
};
use contourpan_core::losses::{
    compute_losses, ContourTerms, LossConfig, LossInputs, LossReport, LossWeights,
};
use contourpan_core::metrics::{EvalReport, Evaluator, ImageOutputs};
use contourpan_core::panoptic::{merge_panoptic_with_segments, PanopticSegment};
use contourpan_core::pipeline::{
    run_ablation, run_pipeline, AblationAxis, AblationConfig, AblationTable, PipelineConfig,
    PipelineInputs, PipelineOutput, SceneScores, StageTimings,
};
use contourpan_core::refine::{refine as refine_instances, RefineParams, SemanticEvidence};
use contourpan_core::stf::{
    read_as, read_tensor, write_panoptic_ppm, write_pgm, write_tensor, Raster,
};
use contourpan_core::synth::{generate_scene, gt_contour_mask, simulate_predictions, SceneSpec};
use contourpan_core::{
    argmax_semantic, ClassCatalog, ContourMask, ContourProbMap, Error, InstanceIds,
    InstanceLabelMap, InstanceRecord, OffsetField, PanopticMap, SemanticLabelMap, SemanticProbMap,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::files::*;
use crate::{
    AblateArgs, DeriveArgs, EvalArgs, GtContoursArgs, LossArgs, PanopticArgs, PipelineArgs,
    RefineArgs, SynthArgs,
};

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::Validation(msg.into()).into()
}

fn check_classes(probs: &SemanticProbMap, catalog: &ClassCatalog) -> Result<()> {
    if probs.num_classes() != catalog.num_classes() {
        return Err(invalid(format!(
            "semantic probabilities have {} channels but the catalog has {} classes",
            probs.num_classes(),
            catalog.num_classes()
        )));
    }
    Ok(())
}

fn raster_kind(r: &Raster) -> &'static str {
    match r {
        Raster::SemanticProbs(_) => "semantic probabilities",
        Raster::Labels(_) => "labels",
        Raster::ContourProbs(_) => "contour probabilities",
        Raster::ContourMask(_) => "contour mask",
        Raster::Offsets(_) => "offsets",
        Raster::InstanceIds(_) => "instance ids",
        Raster::Panoptic(_) => "panoptic map",
    }
}

fn write_instances(map: &InstanceLabelMap, ids_path: &Path, records: Option<&Path>) -> Result<()> {
    write_tensor(map.ids(), ids_path)?;
    if let Some(p) = records {
        write_json(&map.records(), p)?;
    }
    Ok(())
}

pub fn gt_contours(a: &GtContoursArgs) -> Result<()> {
    let ids: InstanceIds = read_as(&a.instances)?;
    let mask = dilate_contours(&extract_contours(&ids), a.rate);
    write_tensor(&mask, &a.out)?;
    if let Some(p) = &a.pgm {
        write_pgm(&mask.map(|&b| if b { 255u8 } else { 0 }), p)?;
    }
    Ok(())
}

fn parse_weights(s: &str) -> Result<LossWeights> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let values: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| {
            invalid(format!(
                "weights must be three comma-separated numbers, got {s:?}"
            ))
        })?;
    if values.len() != 3 {
        return Err(invalid(format!(
            "expected three weights, got {}",
            values.len()
        )));
    }
    Ok(LossWeights::new(values[0], values[1], values[2])?)
}

#[derive(Serialize)]
struct LossCommandReport<'a> {
    inputs: Vec<(&'static str, &'a Path)>,
    config: LossConfig,
    #[serde(flatten)]
    losses: LossReport,
}

pub fn loss(a: &LossArgs) -> Result<()> {
    let config = LossConfig {
        weights: parse_weights(&a.weights)?,
        terms: ContourTerms::parse(&a.terms)?,
        nms_window: a.nms_window,
        ..LossConfig::default()
    };
    let named: [(&'static str, &Option<PathBuf>); 6] = [
        ("semantic_probs", &a.semantic_probs),
        ("semantic_gt", &a.semantic_gt),
        ("contours", &a.contours),
        ("contour_gt", &a.contour_gt),
        ("offsets", &a.offsets),
        ("offset_gt", &a.offset_gt),
    ];
    let inputs: Vec<(&'static str, &Path)> = named
        .iter()
        .filter_map(|(name, p)| p.as_deref().map(|p| (*name, p)))
        .collect();

    let semantic = match (&a.semantic_probs, &a.semantic_gt) {
        (Some(p), Some(g)) => Some((
            read_as::<SemanticProbMap>(p)?,
            read_as::<SemanticLabelMap>(g)?,
        )),
        _ => None,
    };
    let contour = match (&a.contours, &a.contour_gt) {
        (Some(p), Some(g)) => Some((read_as::<ContourProbMap>(p)?, read_as::<ContourMask>(g)?)),
        _ => None,
    };
    let center = match (&a.offsets, &a.offset_gt) {
        (Some(p), Some(g)) => Some((read_as::<OffsetField>(p)?, read_as::<OffsetField>(g)?)),
        _ => None,
    };
    if semantic.is_none() && contour.is_none() && center.is_none() {
        return Err(invalid("give at least one prediction / ground-truth pair"));
    }
    let mut losses = compute_losses(
        &LossInputs {
            semantic: semantic.as_ref().map(|(p, g)| (p, g)),
            contour: contour.as_ref().map(|(p, g)| (p, g)),
            center: center.as_ref().map(|(p, g)| (p, g)),
        },
        &config,
    )?;
    losses.gradients = None;
    emit_json(
        &LossCommandReport {
            inputs,
            config,
            losses,
        },
        a.report.as_deref(),
    )
}

#[derive(Serialize)]
struct DeriveSummary {
    instances: usize,
    diagnostics: Diagnostics,
}

pub fn derive(a: &DeriveArgs) -> Result<()> {
    let catalog = load_catalog(a.catalog.as_deref())?;
    let probs: SemanticProbMap = read_as(&a.semantic_probs)?;
    check_classes(&probs, &catalog)?;
    let contours: ContourProbMap = read_as(&a.contours)?;
    let offsets: Option<OffsetField> = a.offsets.as_ref().map(read_as).transpose()?;
    let mut params = DeriveParams::default();
    a.flags.apply(&mut params)?;
    let (map, diagnostics) =
        derive_instances(&probs, &contours, offsets.as_ref(), &catalog, &params)?;
    write_instances(&map, &a.out, a.records.as_deref())?;
    print!(
        "{}",
        to_json(&DeriveSummary {
            instances: map.records().len(),
            diagnostics,
        })?
    );
    Ok(())
}

pub fn refine(a: &RefineArgs) -> Result<()> {
    let catalog = load_catalog(a.catalog.as_deref())?;
    let ids: InstanceIds = read_as(&a.instances)?;
    let offsets: OffsetField = read_as(&a.offsets)?;
    let probs: SemanticProbMap = read_as(&a.semantic_probs)?;
    check_classes(&probs, &catalog)?;
    let mut params: RefineParams = match &a.config {
        Some(p) => read_json(p)?,
        None => RefineParams::default(),
    };
    a.flags.apply(&mut params)?;
    let labels = argmax_semantic(&probs);
    let (instances, _) = assign_class_and_confidence(&ids, &labels, &probs, &catalog)?;
    let evidence = SemanticEvidence {
        labels: &labels,
        probs: &probs,
        catalog: &catalog,
    };
    let refined = refine_instances(&instances, &offsets, &evidence, &params)?;
    write_instances(&refined, &a.out, a.records.as_deref())
}

pub fn panoptic(a: &PanopticArgs) -> Result<()> {
    let catalog = load_catalog(a.catalog.as_deref())?;
    let (labels, probs) = match read_tensor(&a.semantic)? {
        Raster::Labels(l) => (l, None),
        Raster::SemanticProbs(p) => {
            check_classes(&p, &catalog)?;
            (argmax_semantic(&p), Some(p))
        }
        other => {
            return Err(invalid(format!(
                "{} holds {}, expected labels or semantic probabilities",
                a.semantic.display(),
                raster_kind(&other)
            )))
        }
    };
    catalog.validate_labels(&labels)?;
    let ids: InstanceIds = read_as(&a.instances)?;
    let instances = match &a.records {
        Some(p) => {
            let records: Vec<InstanceRecord> = read_json(p)?;
            InstanceLabelMap::new(ids, records)?
        }
        None => {
            let probs = match probs {
                Some(p) => p,
                None => SemanticProbMap::one_hot(&labels, catalog.num_classes())?,
            };
            assign_class_and_confidence(&ids, &labels, &probs, &catalog)?.0
        }
    };
    let (map, segments) = merge_panoptic_with_segments(&labels, &instances, &catalog)?;
    write_tensor(&map, &a.out)?;
    if let Some(p) = &a.segments {
        write_json(&segments, p)?;
    }
    if let Some(p) = &a.debug_ppm {
        write_panoptic_ppm(&map, p)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SceneEval {
    name: String,
    scores: SceneScores,
}

#[derive(Serialize)]
struct EvalCommandReport {
    scenes: Vec<SceneEval>,
    metrics: EvalReport,
}

fn read_labels_or(dir: &Path, names: &[&str], panoptic: &PanopticMap) -> Result<SemanticLabelMap> {
    Ok(match first_existing(dir, names) {
        Some(p) => read_as(p)?,
        None => panoptic.class_labels(),
    })
}

fn evaluate_dirs(pred_dir: &Path, gt_dir: &Path, catalog: &ClassCatalog) -> Result<Evaluator> {
    let pred: PanopticMap = read_as(pred_dir.join(PANOPTIC))?;
    pred.validate(catalog)?;
    let pred_labels = read_labels_or(pred_dir, &[LABELS], &pred)?;
    let segments: Option<Vec<PanopticSegment>> = first_existing(pred_dir, &[SEGMENTS])
        .map(|p| read_json(&p))
        .transpose()?;
    let gt_path = first_existing(gt_dir, &[GT_PANOPTIC, PANOPTIC])
        .ok_or_else(|| invalid(format!("no ground truth in {}", gt_dir.display())))?;
    let gt: PanopticMap = read_as(gt_path)?;
    gt.validate(catalog)?;
    let gt_labels = read_labels_or(gt_dir, &[GT_LABELS, LABELS], &gt)?;
    let mut evaluator = Evaluator::new(catalog);
    evaluator.add(
        &ImageOutputs {
            labels: &pred_labels,
            panoptic: &pred,
            segments: segments.as_deref(),
        },
        &ImageOutputs {
            labels: &gt_labels,
            panoptic: &gt,
            segments: None,
        },
    )?;
    Ok(evaluator)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let catalog = load_catalog(a.catalog.as_deref())?;
    let scenes = scene_dirs(&a.gt_dir, &[GT_PANOPTIC, PANOPTIC])?;
    let evaluated: Vec<(String, Evaluator)> = scenes
        .par_iter()
        .map(|(name, gt_dir)| {
            let pred_dir = if name == "." {
                a.pred_dir.clone()
            } else {
                a.pred_dir.join(name)
            };
            let e = evaluate_dirs(&pred_dir, gt_dir, &catalog)
                .with_context(|| format!("evaluating scene {name}"))?;
            Ok((name.clone(), e))
        })
        .collect::<Result<_>>()?;
    let mut total = Evaluator::new(&catalog);
    let mut per_scene = Vec::with_capacity(evaluated.len());
    for (name, e) in &evaluated {
        total.merge(e);
        per_scene.push(SceneEval {
            name: name.clone(),
            scores: SceneScores::from(&e.finish()),
        });
    }
    emit_json(
        &EvalCommandReport {
            scenes: per_scene,
            metrics: total.finish(),
        },
        a.report.as_deref(),
    )
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ManifestEntry {
    name: String,
    seed: u64,
    instances: usize,
}

#[derive(Serialize)]
struct Manifest {
    spec: SceneSpec,
    scenes: Vec<ManifestEntry>,
}

fn load_spec(path: Option<&Path>) -> Result<SceneSpec> {
    let spec: SceneSpec = match path {
        Some(p) => read_json(p)?,
        None => SceneSpec::default(),
    };
    spec.validate()?;
    Ok(spec)
}

fn seeds(spec: &SceneSpec, count: usize) -> Result<Vec<u64>> {
    if count == 0 {
        return Err(invalid("--count must be at least 1"));
    }
    Ok((0..count as u64).map(|k| spec.seed + k).collect())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let spec = load_spec(a.spec.as_deref())?;
    let seeds = seeds(&spec, a.count)?;
    create_dir(&a.out_dir)?;
    let scenes: Vec<ManifestEntry> = seeds
        .par_iter()
        .map(|&seed| {
            let spec = spec.with_seed(seed);
            let scene = generate_scene(&spec)?;
            let pred = simulate_predictions(&scene, &spec)?;
            let name = scene_name(seed);
            let dir = a.out_dir.join(&name);
            create_dir(&dir)?;
            write_tensor(&pred.probs, dir.join(SEMANTIC_PROBS))?;
            write_tensor(&pred.contours, dir.join(CONTOUR_PROBS))?;
            write_tensor(&pred.offsets, dir.join(OFFSETS))?;
            write_tensor(&scene.labels, dir.join(GT_LABELS))?;
            write_tensor(scene.instances.ids(), dir.join(GT_INSTANCES))?;
            write_tensor(&scene.panoptic, dir.join(GT_PANOPTIC))?;
            write_tensor(
                &gt_contour_mask(&scene, spec.dilation_rate),
                dir.join(GT_CONTOURS),
            )?;
            write_json(&scene.instances.records(), &dir.join(GT_RECORDS))?;
            Ok(ManifestEntry {
                name,
                seed,
                instances: scene.instances.records().len(),
            })
        })
        .collect::<Result<_>>()?;
    write_json(&Manifest { spec, scenes }, &a.out_dir.join(MANIFEST))
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SourceEcho<'a> {
    Scenes {
        dir: &'a Path,
    },
    Spec {
        spec: SceneSpec,
        count: usize,
    },
    Tensors {
        semantic_probs: &'a Path,
        contours: &'a Path,
        offsets: Option<&'a Path>,
    },
}

#[derive(Serialize)]
struct SceneEntry {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    instances: usize,
    diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<SceneScores>,
    timings: StageTimings,
}

#[derive(Serialize)]
struct PipelineReport<'a> {
    config: &'a PipelineConfig,
    catalog: &'a ClassCatalog,
    source: SourceEcho<'a>,
    scenes: Vec<SceneEntry>,
    /// All scenes with ground truth, scored as one dataset.
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<EvalReport>,
}

struct SceneRun {
    entry: SceneEntry,
    evaluator: Option<Evaluator>,
}

struct GroundTruth {
    labels: SemanticLabelMap,
    panoptic: PanopticMap,
}

fn write_outputs(out: &PipelineOutput, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_tensor(&out.labels, dir.join(LABELS))?;
    write_tensor(out.derived.ids(), dir.join(DERIVED_INSTANCES))?;
    write_instances(
        &out.instances,
        &dir.join(INSTANCES),
        Some(&dir.join(RECORDS)),
    )?;
    write_tensor(&out.panoptic, dir.join(PANOPTIC))?;
    write_json(&out.segments, &dir.join(SEGMENTS))
}

fn finish_scene(
    name: String,
    seed: Option<u64>,
    out: PipelineOutput,
    gt: Option<GroundTruth>,
    catalog: &ClassCatalog,
    dir: &Path,
) -> Result<SceneRun> {
    write_outputs(&out, dir)?;
    let evaluator = match gt {
        Some(gt) => {
            let mut e = Evaluator::new(catalog);
            e.add(
                &ImageOutputs {
                    labels: &out.labels,
                    panoptic: &out.panoptic,
                    segments: Some(&out.segments),
                },
                &ImageOutputs {
                    labels: &gt.labels,
                    panoptic: &gt.panoptic,
                    segments: None,
                },
            )
            .map_err(|e| e.in_stage("eval"))?;
            Some(e)
        }
        None => None,
    };
    Ok(SceneRun {
        entry: SceneEntry {
            name,
            seed,
            instances: out.instances.records().len(),
            diagnostics: out.diagnostics.clone(),
            scores: evaluator.as_ref().map(|e| SceneScores::from(&e.finish())),
            timings: out.timings,
        },
        evaluator,
    })
}

fn run_tensors(
    probs: &SemanticProbMap,
    contours: &ContourProbMap,
    offsets: Option<&OffsetField>,
    catalog: &ClassCatalog,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    check_classes(probs, catalog)?;
    Ok(run_pipeline(
        &PipelineInputs {
            probs,
            contours,
            offsets,
        },
        catalog,
        config,
    )?)
}

fn run_scene_dir(
    name: &str,
    dir: &Path,
    out_dir: &Path,
    catalog: &ClassCatalog,
    config: &PipelineConfig,
) -> Result<SceneRun> {
    let probs: SemanticProbMap = read_as(dir.join(SEMANTIC_PROBS))?;
    let contours: ContourProbMap = read_as(dir.join(CONTOUR_PROBS))?;
    let offsets: Option<OffsetField> = first_existing(dir, &[OFFSETS]).map(read_as).transpose()?;
    let gt = match first_existing(dir, &[GT_PANOPTIC]) {
        Some(p) => {
            let panoptic: PanopticMap = read_as(p)?;
            let labels = read_labels_or(dir, &[GT_LABELS], &panoptic)?;
            Some(GroundTruth { labels, panoptic })
        }
        None => None,
    };
    let out = run_tensors(&probs, &contours, offsets.as_ref(), catalog, config)?;
    finish_scene(
        name.to_string(),
        None,
        out,
        gt,
        catalog,
        &out_dir.join(name),
    )
}

pub fn pipeline(a: &PipelineArgs) -> Result<()> {
    let config = a.config()?;
    create_dir(&a.out_dir)?;
    let (catalog, source, runs): (ClassCatalog, SourceEcho, Vec<SceneRun>) = if let Some(dir) =
        &a.scenes
    {
        let catalog = load_catalog(a.catalog.as_deref())?;
        let scenes = scene_dirs(dir, &[SEMANTIC_PROBS])?;
        let runs = scenes
            .par_iter()
            .map(|(name, d)| {
                run_scene_dir(name, d, &a.out_dir, &catalog, &config)
                    .with_context(|| format!("scene {name}"))
            })
            .collect::<Result<_>>()?;
        (catalog, SourceEcho::Scenes { dir }, runs)
    } else if let Some(spec_path) = &a.spec {
        if a.catalog.is_some() {
            return Err(invalid(
                "--catalog cannot be combined with --spec; the spec carries its catalog",
            ));
        }
        let spec = load_spec(Some(spec_path))?;
        let seeds = seeds(&spec, a.count)?;
        let catalog = spec.catalog.clone();
        let runs = seeds
            .par_iter()
            .map(|&seed| {
                let spec = spec.with_seed(seed);
                let name = scene_name(seed);
                let scene = generate_scene(&spec).map_err(|e| e.in_stage("synth"))?;
                let pred = simulate_predictions(&scene, &spec).map_err(|e| e.in_stage("synth"))?;
                let out = run_tensors(
                    &pred.probs,
                    &pred.contours,
                    Some(&pred.offsets),
                    &catalog,
                    &config,
                )?;
                let gt = GroundTruth {
                    labels: scene.labels,
                    panoptic: scene.panoptic,
                };
                finish_scene(
                    name.clone(),
                    Some(seed),
                    out,
                    Some(gt),
                    &catalog,
                    &a.out_dir.join(&name),
                )
                .with_context(|| format!("scene {name}"))
            })
            .collect::<Result<_>>()?;
        (
            catalog,
            SourceEcho::Spec {
                spec,
                count: a.count,
            },
            runs,
        )
    } else if let (Some(sp), Some(cp)) = (&a.semantic_probs, &a.contours) {
        let catalog = load_catalog(a.catalog.as_deref())?;
        let probs: SemanticProbMap = read_as(sp)?;
        let contours: ContourProbMap = read_as(cp)?;
        let offsets: Option<OffsetField> = a.offsets.as_ref().map(read_as).transpose()?;
        let out = run_tensors(&probs, &contours, offsets.as_ref(), &catalog, &config)?;
        let run = finish_scene(".".into(), None, out, None, &catalog, &a.out_dir)?;
        let source = SourceEcho::Tensors {
            semantic_probs: sp,
            contours: cp,
            offsets: a.offsets.as_deref(),
        };
        (catalog, source, vec![run])
    } else {
        bail!(Error::Validation(
            "give --scenes, --spec, or --semantic-probs with --contours".into()
        ));
    };

    let scored: Vec<&Evaluator> = runs.iter().filter_map(|r| r.evaluator.as_ref()).collect();
    let metrics = (!scored.is_empty()).then(|| {
        let mut total = Evaluator::new(&catalog);
        scored.iter().for_each(|e| total.merge(e));
        total.finish()
    });
    let report = PipelineReport {
        config: &config,
        catalog: &catalog,
        source,
        scenes: runs.into_iter().map(|r| r.entry).collect(),
        metrics,
    };
    write_json(&report, &a.out_dir.join(REPORT))?;
    if let Some(m) = &report.metrics {
        println!(
            "scenes {}  PQ {:.4}  SQ {:.4}  RQ {:.4}  mIoU {:.4}  AP {:.4}",
            m.images, m.pq, m.sq, m.rq, m.miou, m.ap
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

fn write_csv(table: &AblationTable, path: &Path) -> Result<()> {
    let context = || format!("writing {}", path.display());
    let mut w = csv::Writer::from_path(path).with_context(context)?;
    w.write_record(AblationTable::CSV_HEADER)
        .with_context(context)?;
    for rec in table.csv_records() {
        w.write_record(&rec).with_context(context)?;
    }
    w.flush().with_context(context)?;
    Ok(())
}

pub fn ablate(a: &AblateArgs) -> Result<()> {
    let axis = AblationAxis::parse(&a.axis)?;
    let mut config: AblationConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => AblationConfig::default(),
    };
    if let Some(n) = a.scenes {
        config.scenes = n;
    }
    if let Some(s) = a.seed {
        config.spec.seed = s;
    }
    let grid: Vec<String> = match &a.grid {
        Some(g) => g.split(',').map(|v| v.trim().to_string()).collect(),
        None => axis.default_grid(),
    };
    if a.out.extension().is_some_and(|e| e == "csv") {
        return Err(invalid(
            "--out names the JSON table; the CSV is written beside it",
        ));
    }
    let table = run_ablation(axis, &grid, &config)?;
    write_json(&table, &a.out)?;
    write_csv(&table, &a.out.with_extension("csv"))?;
    for row in &table.rows {
        let mut line = format!(
            "{}={:<14} AP {:.4}  PQ {:.4}  PQ_th {:.4}  SQ_th {:.4}  RQ_th {:.4}",
            axis.name(),
            row.value,
            row.ap,
            row.pq,
            row.pq_things,
            row.sq_things,
            row.rq_things
        );
        if let (Some(contour), Some(total)) = (row.contour_loss, row.total_loss) {
            line.push_str(&format!("  L_contour {contour:.2}  L_total {total:.2}"));
        }
        println!("{line}");
    }
    Ok(())
}
