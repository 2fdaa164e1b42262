//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::{
    brute_dbscan, brute_pq, brute_tallies, central_differences, flood_fill, max_relative_error,
};
use contourpan_core::contour::{dilate_contours, extract_contours};
use contourpan_core::dbscan::dbscan;
use contourpan_core::derive::{connected_components, Connectivity};
use contourpan_core::losses::{
    huber, nms_loss, semantic_ce, total_loss, weighted_bce, LossComponents, LossWeights,
};
use contourpan_core::metrics::{match_segments, PqAccumulator};
use contourpan_core::pipeline::{
    evaluate_scene, run_pipeline, run_suite, PipelineConfig, PipelineInputs,
};
use contourpan_core::synth::{generate_scene, simulate_predictions, SceneSpec};
use contourpan_core::{ClassCatalog, Grid, PanopticMap, PanopticPixel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

fn no_refine() -> PipelineConfig {
    PipelineConfig {
        no_refine: true,
        ..PipelineConfig::default()
    }
}

fn mean_pq(spec: &SceneSpec, n: u64, config: &PipelineConfig) -> Result<f64, String> {
    run_suite(spec, &seeds(n), config, None)
        .map(|s| s.mean.pq)
        .map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------

fn perfect_reconstruction() -> Outcome {
    let start = Instant::now();
    let spec = SceneSpec::default();
    let config = PipelineConfig::default();
    let mut imperfect = Vec::new();
    for seed in 0..50 {
        let s = evaluate_scene(&spec.with_seed(seed), &config, None)
            .map_err(|e| format!("seed {seed}: {e}"))?
            .scores;
        if [s.pq, s.sq, s.rq, s.miou, s.ap].iter().any(|&v| v != 1.0) {
            imperfect.push(seed);
        }
    }
    let elapsed = start.elapsed();
    check(
        imperfect.is_empty() && elapsed < Duration::from_secs(10),
        format!(
            "50 scenes, imperfect seeds {imperfect:?}, {:.2} s (limit 10 s)",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------

const STEP: f64 = 1e-4;

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn huber_case(rng: &mut ChaCha8Rng, delta: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..40);
    let gt = uniform(rng, n, -2.0, 2.0);
    let pred = gt
        .iter()
        .map(|&y| loop {
            let r: f64 = rng.random_range(-3.0..3.0);
            if (r.abs() - delta).abs() >= 1e-2 {
                break y + r;
            }
        })
        .collect();
    (pred, gt)
}

fn random_contours(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Grid<bool> {
    let mut ids = Grid::filled(h, w, 0u32);
    for id in 1..=rng.random_range(1..4u32) {
        let (r0, c0) = (rng.random_range(0..h - 4), rng.random_range(0..w - 4));
        let (r1, c1) = (rng.random_range(r0 + 3..h), rng.random_range(c0 + 3..w));
        for r in r0..r1 {
            for c in c0..c1 {
                ids[(r, c)] = id;
            }
        }
    }
    dilate_contours(&extract_contours(&ids), rng.random_range(0..2))
}

fn gradients() -> Outcome {
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut record = |name, err: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(err);
    };
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);

        let (n, k) = (rng.random_range(1..20), rng.random_range(2..6));
        let probs = uniform(&mut rng, n * k, 0.05, 0.95);
        let gt: Vec<u16> = (0..n).map(|_| rng.random_range(0..k as u16)).collect();
        let a = semantic_ce(&probs, k, &gt).unwrap().gradient;
        let d = central_differences(&probs, STEP, |p| semantic_ce(p, k, &gt).unwrap().value);
        record("semantic_ce", max_relative_error(&a, &d, 1e-9));

        let n = rng.random_range(2..40);
        let probs = uniform(&mut rng, n, 0.05, 0.95);
        let gt: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let a = weighted_bce(&probs, &gt).unwrap().gradient;
        let d = central_differences(&probs, STEP, |p| weighted_bce(p, &gt).unwrap().value);
        record("weighted_bce", max_relative_error(&a, &d, 1e-9));

        for (name, delta) in [("huber_0.3", 0.3), ("huber_1", 1.0)] {
            let (pred, gt) = huber_case(&mut rng, delta);
            let a = huber(&pred, &gt, delta).unwrap().gradient;
            let d = central_differences(&pred, STEP, |p| huber(p, &gt, delta).unwrap().value);
            record(name, max_relative_error(&a, &d, 1e-9));
        }

        let (h, w) = (rng.random_range(8..16), rng.random_range(8..16));
        let gt = random_contours(&mut rng, h, w);
        let probs = uniform(&mut rng, h * w, 0.05, 0.95);
        let a = nms_loss(&Grid::from_vec(h, w, probs.clone()).unwrap(), &gt, 9)
            .unwrap()
            .gradient;
        let d = central_differences(&probs, STEP, |p| {
            nms_loss(&Grid::from_vec(h, w, p.to_vec()).unwrap(), &gt, 9)
                .unwrap()
                .value
        });
        record("nms_loss", max_relative_error(&a, &d, 1e-9));
    }
    let ok = worst
        .iter()
        .all(|(&name, &e)| e < if name == "nms_loss" { 1e-4 } else { 1e-5 });
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(ok, format!("20 trials each, max rel err: {detail}"))
}

// ---------------------------------------------------------------------------

fn random_panoptic_pair(rng: &mut ChaCha8Rng) -> (PanopticMap, PanopticMap) {
    let (h, w) = (rng.random_range(1..8), rng.random_range(1..8));
    let pixel = |rng: &mut ChaCha8Rng| match rng.random_range(0..11) {
        0..=3 => PanopticPixel::new(rng.random_range(0..5), 0),
        4..=9 => PanopticPixel::new(rng.random_range(5..8), rng.random_range(1..4)),
        _ => PanopticPixel::new(8, 0),
    };
    let gt: Vec<_> = (0..h * w).map(|_| pixel(rng)).collect();
    let pred = gt
        .iter()
        .map(|&g| if rng.random_bool(0.3) { pixel(rng) } else { g })
        .collect();
    let wrap = |v| PanopticMap::new(Grid::from_vec(h, w, v).unwrap()).unwrap();
    (wrap(pred), wrap(gt))
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let mut ccl_bad = 0;
    for _ in 0..1000 {
        let density = rng.random_range(0.0..1.0);
        let mask = Grid::from_vec(
            32,
            32,
            (0..32 * 32).map(|_| rng.random_bool(density)).collect(),
        )
        .unwrap();
        for conn in [Connectivity::Four, Connectivity::Eight] {
            if connected_components(&mask, conn) != flood_fill(&mask, conn) {
                ccl_bad += 1;
            }
        }
    }

    let mut dbscan_bad = 0;
    for i in 0..500 {
        let n = rng.random_range(0..=200);
        let (points, eps): (Vec<(f64, f64)>, f64) = if i % 2 == 0 {
            let pts = (0..n)
                .map(|_| (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)))
                .collect();
            (pts, rng.random_range(1.0..25.0))
        } else {
            // Lattice points put many pairs exactly at distance eps.
            let pts = (0..n)
                .map(|_| {
                    (
                        rng.random_range(0..30) as f64,
                        rng.random_range(0..30) as f64,
                    )
                })
                .collect();
            (pts, [1.0, 2.0, 5.0_f64.sqrt(), 3.0][rng.random_range(0..4)])
        };
        let min_samples = rng.random_range(1..12);
        if dbscan(&points, eps, min_samples).unwrap() != brute_dbscan(&points, eps, min_samples) {
            dbscan_bad += 1;
        }
    }

    let catalog = ClassCatalog::synthetic_default();
    let mut pq_bad = 0;
    for _ in 0..500 {
        let (pred, gt) = random_panoptic_pair(&mut rng);
        let fast = match_segments(&pred, &gt, &catalog).unwrap();
        let slow = brute_pq(&pred, &gt, &catalog);
        let mut fast_pairs: Vec<_> = fast.matches.iter().map(|m| (m.gt, m.pred)).collect();
        let mut slow_pairs: Vec<_> = slow.matches.iter().map(|m| (m.gt, m.pred)).collect();
        fast_pairs.sort();
        slow_pairs.sort();
        let mut same = fast_pairs == slow_pairs
            && fast
                .false_positives
                .iter()
                .copied()
                .collect::<std::collections::BTreeSet<_>>()
                == slow.false_positives
            && fast
                .false_negatives
                .iter()
                .copied()
                .collect::<std::collections::BTreeSet<_>>()
                == slow.false_negatives;
        let mut acc = PqAccumulator::new(&catalog);
        acc.add(&pred, &gt, &catalog).unwrap();
        let scores = acc.finish(&catalog);
        for (class, (iou_sum, tp, fp, fn_)) in brute_tallies(&slow) {
            let t = scores.per_class[usize::from(class)].tally;
            same &= (t.tp, t.fp, t.fn_) == (tp, fp, fn_) && (t.iou_sum - iou_sum).abs() < 1e-12;
        }
        if !same {
            pq_bad += 1;
        }
    }

    check(
        ccl_bad + dbscan_bad + pq_bad == 0,
        format!("mismatches: ccl {ccl_bad}/2000, dbscan {dbscan_bad}/500, pq {pq_bad}/500"),
    )
}

// ---------------------------------------------------------------------------

fn loss_pins() -> Outcome {
    let bce = weighted_bce(&[0.8, 0.2], &[true, false])
        .map_err(|e| e.to_string())?
        .value;
    let hub = huber(&[1.0], &[0.0], 0.3).map_err(|e| e.to_string())?.value;
    let weights = LossWeights::default();
    let ones = LossComponents {
        semantic: 1.0,
        wbce: 1.0,
        huber_contour: 0.0,
        nms: 0.0,
        center: 1.0,
    };
    let total = total_loss(&ones, &weights).total;
    let doubled = total_loss(
        &LossComponents {
            semantic: 2.0,
            wbce: 2.0,
            center: 2.0,
            ..ones
        },
        &weights,
    )
    .total;
    let default_weights = (
        weights.lambda_semantic,
        weights.lambda_contour,
        weights.lambda_center,
    );
    check(
        (bce - 0.22314).abs() <= 1e-5
            && hub == 0.255
            && default_weights == (1.0, 50.0, 0.1)
            && (total - 51.1).abs() < 1e-12
            && (doubled - 2.0 * total).abs() < 1e-12,
        format!("wbce {bce:.6}, huber {hub}, weights {default_weights:?}, total {total}, doubled {doubled}"),
    )
}

// ---------------------------------------------------------------------------

fn refinement_trend() -> Outcome {
    let start = Instant::now();
    let spec = SceneSpec {
        contour_break_prob: 0.15,
        occluder_prob: 0.3,
        ..SceneSpec::default()
    };
    let with = mean_pq(&spec, 100, &PipelineConfig::default())?;
    let without = mean_pq(&spec, 100, &no_refine())?;
    let elapsed = start.elapsed();
    check(
        with - without >= 0.01 && elapsed < Duration::from_secs(60),
        format!(
            "100 scenes, mean PQ refined {with:.4} vs unrefined {without:.4} (gain {:.4}, need >= 0.01), {:.2} s",
            with - without,
            elapsed.as_secs_f64()
        ),
    )
}

fn min_area_trend() -> Outcome {
    let spec = SceneSpec {
        contour_false_positive_prob: 0.2,
        ..SceneSpec::default()
    };
    let at = |min_area, merge| {
        let mut config = PipelineConfig::default();
        config.refine.min_area = min_area;
        config.refine.merge = merge;
        mean_pq(&spec, 100, &config)
    };
    let (big, small) = (at(300, true)?, at(1, true)?);
    // Informational: without merging, fragments are left for the filter alone.
    let (big_nm, small_nm) = (at(300, false)?, at(1, false)?);
    check(
        big >= small,
        format!(
            "100 scenes, mean PQ min_area 300 {big:.4} vs min_area 1 {small:.4} \
             (merge off: {big_nm:.4} vs {small_nm:.4})"
        ),
    )
}

fn noise_monotonicity() -> Outcome {
    let mut pqs = Vec::new();
    for p in [0.0, 0.1, 0.25, 0.5] {
        let spec = SceneSpec {
            contour_break_prob: p,
            ..SceneSpec::default()
        };
        pqs.push((p, mean_pq(&spec, 50, &no_refine())?));
    }
    let ok = pqs.windows(2).all(|w| w[1].1 <= w[0].1 + 0.005);
    let detail = pqs
        .iter()
        .map(|(p, q)| format!("{p}: {q:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(ok, format!("50 scenes, mean PQ by break prob {detail}"))
}

// ---------------------------------------------------------------------------

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("timings");
            map.values_mut().for_each(strip_timings);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SceneSpec {
        seed: 40,
        contour_break_prob: 0.15,
        occluder_prob: 0.3,
        semantic_flip_prob: 0.02,
        offset_noise_sigma: 0.5,
        contour_false_positive_prob: 0.01,
        ..SceneSpec::default()
    };
    let spec_path = tmp.path().join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
    let run = |threads: &str| -> Result<PathBuf, String> {
        let out = tmp.path().join(format!("threads_{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_contourpan"))
            .args(["--threads", threads, "pipeline", "--spec"])
            .arg(&spec_path)
            .args(["--count", "10", "--out-dir"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!(
                "--threads {threads} failed: {}",
                String::from_utf8_lossy(&status.stderr)
            ));
        }
        Ok(out)
    };
    let (a, b) = (run("1")?, run("8")?);
    let files = files_under(&a);
    if files != files_under(&b) {
        return Err("output file sets differ".into());
    }
    let mut differing = Vec::new();
    for f in &files {
        let (x, y) = (
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
        );
        let same = if f.file_name().is_some_and(|n| n == "report.json") {
            let parse = |bytes: &[u8]| {
                let mut v: Value = serde_json::from_slice(bytes).unwrap();
                strip_timings(&mut v);
                v
            };
            parse(&x) == parse(&y)
        } else {
            x == y
        };
        if !same {
            differing.push(f.display().to_string());
        }
    }
    let stf = files
        .iter()
        .filter(|f| f.extension().is_some_and(|e| e == "stf"))
        .count();
    check(
        differing.is_empty() && stf >= 10,
        format!("{} files ({stf} STF), differing {differing:?}", files.len()),
    )
}

// ---------------------------------------------------------------------------

fn performance() -> Outcome {
    let spec = SceneSpec {
        height: 1024,
        width: 2048,
        n_instances: 50,
        min_size: 32,
        max_size: 160,
        seed: 9,
        contour_break_prob: 0.15,
        occluder_prob: 0.3,
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec).map_err(|e| e.to_string())?;
    let pred = simulate_predictions(&scene, &spec).map_err(|e| e.to_string())?;
    let inputs = PipelineInputs {
        probs: &pred.probs,
        contours: &pred.contours,
        offsets: Some(&pred.offsets),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let mut times = pool.install(|| {
        (0..5)
            .map(|_| {
                let start = Instant::now();
                run_pipeline(&inputs, &spec.catalog, &PipelineConfig::default()).unwrap();
                start.elapsed().as_secs_f64() * 1e3
            })
            .collect::<Vec<_>>()
    });
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    check(
        median < 500.0,
        format!(
            "1024x2048, 50 instances, 1 thread, median of 5 runs {median:.1} ms (limit 500 ms)"
        ),
    )
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("perfect reconstruction", perfect_reconstruction),
        ("gradient correctness", gradients),
        ("oracle equivalence", oracles),
        ("loss value pins", loss_pins),
        ("refinement trend", refinement_trend),
        ("min-area trend", min_area_trend),
        ("noise monotonicity", noise_monotonicity),
        ("determinism across threads", determinism),
        ("performance", performance),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {name:<28} {tag}  {detail}", i + 1);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
