//! Slow reference implementations used as test oracles.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use contourpan_core::derive::Connectivity;
use contourpan_core::{ClassCatalog, Grid, Mask, PanopticMap, PanopticPixel};

/// Breadth-first flood fill; components numbered by first pixel in row-major order.
pub fn flood_fill(mask: &Mask, conn: Connectivity) -> Grid<u32> {
    let (h, w) = mask.shape();
    let mut out = Grid::filled(h, w, 0u32);
    let steps: &[(i64, i64)] = match conn {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ],
    };
    let mut next = 0;
    for r in 0..h {
        for c in 0..w {
            if !mask[(r, c)] || out[(r, c)] != 0 {
                continue;
            }
            next += 1;
            out[(r, c)] = next;
            let mut queue = VecDeque::from([(r, c)]);
            while let Some((y, x)) = queue.pop_front() {
                for &(dy, dx) in steps {
                    let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                    if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                        continue;
                    }
                    let (ny, nx) = (ny as usize, nx as usize);
                    if mask[(ny, nx)] && out[(ny, nx)] == 0 {
                        out[(ny, nx)] = next;
                        queue.push_back((ny, nx));
                    }
                }
            }
        }
    }
    out
}

/// Textbook sequential DBSCAN with brute-force neighborhoods.
pub fn brute_dbscan(points: &[(f64, f64)], eps: f64, min_samples: usize) -> Vec<i32> {
    const UNSEEN: i32 = -2;
    const NOISE: i32 = -1;
    let n = points.len();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| {
                let dy = points[i].0 - points[j].0;
                let dx = points[i].1 - points[j].1;
                dy * dy + dx * dx <= eps * eps
            })
            .collect()
    };
    let mut labels = vec![UNSEEN; n];
    let mut cluster = 0;
    for i in 0..n {
        if labels[i] != UNSEEN {
            continue;
        }
        let nb = neighbors(i);
        if nb.len() < min_samples {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = cluster;
        let mut queue: VecDeque<usize> = nb.into_iter().collect();
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = cluster;
            }
            if labels[q] != UNSEEN {
                continue;
            }
            labels[q] = cluster;
            let nq = neighbors(q);
            if nq.len() >= min_samples {
                queue.extend(nq);
            }
        }
        cluster += 1;
    }
    labels
}

/// One matched pair found by exhaustive search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BruteMatch {
    pub gt: PanopticPixel,
    pub pred: PanopticPixel,
    pub iou: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BrutePq {
    pub matches: Vec<BruteMatch>,
    pub false_positives: BTreeSet<PanopticPixel>,
    pub false_negatives: BTreeSet<PanopticPixel>,
}

/// All-pairs segment matching computed by rescanning the image per pair.
pub fn brute_pq(pred: &PanopticMap, gt: &PanopticMap, catalog: &ClassCatalog) -> BrutePq {
    let void = catalog.void_id();
    let p = pred.grid().as_slice();
    let g = gt.grid().as_slice();
    let gt_segs: BTreeSet<PanopticPixel> =
        g.iter().copied().filter(|s| s.class_id != void).collect();
    let pred_segs: BTreeSet<PanopticPixel> =
        p.iter().copied().filter(|s| s.class_id != void).collect();
    let mut out = BrutePq::default();
    let mut matched_gt = BTreeSet::new();
    let mut matched_pred = BTreeSet::new();
    for &gs in &gt_segs {
        for &ps in &pred_segs {
            if gs.class_id != ps.class_id {
                continue;
            }
            let mut inter = 0usize;
            let mut union = 0usize;
            for i in 0..p.len() {
                let in_p = p[i] == ps;
                let in_g = g[i] == gs;
                if in_p && in_g {
                    inter += 1;
                }
                // pred pixels on ground-truth void leave the union
                if in_g || (in_p && g[i].class_id != void) {
                    union += 1;
                }
            }
            if inter == 0 {
                continue;
            }
            let iou = inter as f64 / union as f64;
            if iou > 0.5 {
                out.matches.push(BruteMatch {
                    gt: gs,
                    pred: ps,
                    iou,
                });
                matched_gt.insert(gs);
                matched_pred.insert(ps);
            }
        }
    }
    for &gs in &gt_segs {
        if !matched_gt.contains(&gs) {
            out.false_negatives.insert(gs);
        }
    }
    for &ps in &pred_segs {
        if matched_pred.contains(&ps) {
            continue;
        }
        let area = p.iter().filter(|&&s| s == ps).count();
        let on_void = (0..p.len())
            .filter(|&i| p[i] == ps && g[i].class_id == void)
            .count();
        if on_void * 2 <= area {
            out.false_positives.insert(ps);
        }
    }
    out
}

/// Per-class `(iou_sum, tp, fp, fn)` implied by a brute-force matching.
pub fn brute_tallies(m: &BrutePq) -> BTreeMap<u16, (f64, usize, usize, usize)> {
    let mut t: BTreeMap<u16, (f64, usize, usize, usize)> = BTreeMap::new();
    for x in &m.matches {
        let e = t.entry(x.gt.class_id).or_default();
        e.0 += x.iou;
        e.1 += 1;
    }
    for x in &m.false_positives {
        t.entry(x.class_id).or_default().2 += 1;
    }
    for x in &m.false_negatives {
        t.entry(x.class_id).or_default().3 += 1;
    }
    t
}

/// Largest relative difference between analytic and numeric gradients.
///
/// Elements where both are below `floor` in magnitude are compared absolutely.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs());
            if scale < floor {
                (a - n).abs()
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_differences(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}
