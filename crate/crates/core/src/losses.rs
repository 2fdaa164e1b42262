//! Training losses with analytic gradients.
//!
//! Conventions: the semantic cross-entropy is averaged over pixels; the
//! contour terms (weighted BCE, Huber, NMS) and the center Huber are summed
//! over elements. Every logarithm clamps its argument below at [`LOG_EPS`].

use serde::{Deserialize, Serialize};

use crate::contour::distance_transform;
use crate::error::{Error, Result};
use crate::raster::{
    check_shape, ClassId, ContourMask, ContourProbMap, Grid, OffsetField, SemanticLabelMap,
    SemanticProbMap,
};

pub const LOG_EPS: f64 = 1e-12;
/// Huber threshold for the contour map.
pub const CONTOUR_HUBER_DELTA: f64 = 0.3;
/// Huber threshold for center offsets.
pub const CENTER_HUBER_DELTA: f64 = 1.0;
pub const DEFAULT_NMS_WINDOW: usize = 9;

/// Loss value and gradient with respect to the prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{what}: prediction has {a} elements, ground truth {b}"
        )))
    }
}

/// Pixel-averaged cross-entropy of `N×K` probabilities against class labels.
pub fn semantic_ce(probs: &[f64], classes: usize, gt: &[ClassId]) -> Result<LossValue> {
    check_len(probs.len(), gt.len() * classes, "semantic_ce")?;
    let n = gt.len();
    let mut gradient = vec![0.0; probs.len()];
    if n == 0 {
        return Ok(LossValue {
            value: 0.0,
            gradient,
        });
    }
    let inv_n = 1.0 / n as f64;
    let mut value = 0.0;
    for (i, &label) in gt.iter().enumerate() {
        let k = usize::from(label);
        if k >= classes {
            return Err(Error::Validation(format!(
                "label {k} at element {i} exceeds K = {classes}"
            )));
        }
        let p = probs[i * classes + k];
        if p > LOG_EPS {
            value -= p.ln();
            gradient[i * classes + k] = -inv_n / p;
        } else {
            value -= LOG_EPS.ln();
        }
    }
    Ok(LossValue {
        value: value * inv_n,
        gradient,
    })
}

/// Class-balanced binary cross-entropy, summed over pixels.
///
/// `β` is the fraction of non-edge pixels; edge pixels are weighted by `β`
/// and non-edge pixels by `1 − β`.
pub fn weighted_bce(probs: &[f64], gt: &[bool]) -> Result<LossValue> {
    check_len(probs.len(), gt.len(), "weighted_bce")?;
    let n = gt.len();
    let mut gradient = vec![0.0; n];
    if n == 0 {
        return Ok(LossValue {
            value: 0.0,
            gradient,
        });
    }
    let beta = gt.iter().filter(|&&e| !e).count() as f64 / n as f64;
    let mut value = 0.0;
    for (i, (&p, &edge)) in probs.iter().zip(gt).enumerate() {
        if edge {
            if p > LOG_EPS {
                value -= beta * p.ln();
                gradient[i] = -beta / p;
            } else {
                value -= beta * LOG_EPS.ln();
            }
        } else {
            let q = 1.0 - p;
            if q > LOG_EPS {
                value -= (1.0 - beta) * q.ln();
                gradient[i] = (1.0 - beta) / q;
            } else {
                value -= (1.0 - beta) * LOG_EPS.ln();
            }
        }
    }
    Ok(LossValue { value, gradient })
}

/// Symmetric Huber loss summed over elements, residual `pred − gt`.
pub fn huber(pred: &[f64], gt: &[f64], delta: f64) -> Result<LossValue> {
    check_len(pred.len(), gt.len(), "huber")?;
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::Validation(format!(
            "huber delta must be positive, got {delta}"
        )));
    }
    let mut value = 0.0;
    let gradient = pred
        .iter()
        .zip(gt)
        .map(|(&p, &y)| {
            let r = p - y;
            if r.abs() <= delta {
                value += 0.5 * r * r;
                r
            } else {
                value += delta * r.abs() - 0.5 * delta * delta;
                delta * r.signum()
            }
        })
        .collect();
    Ok(LossValue { value, gradient })
}

/// Result of [`nms_loss`]: value, gradient over the probability grid, and
/// how many boundary pixels were evaluated or skipped for a degenerate normal.
#[derive(Clone, Debug, PartialEq)]
pub struct NmsLoss {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Unit normal `(row, col)` at every ground-truth boundary pixel, or `None`
/// where the distance-transform gradients give no preferred direction.
pub fn boundary_normals(gt: &ContourMask) -> Vec<(usize, Option<(f64, f64)>)> {
    let (h, w) = gt.shape();
    let boundary: Vec<usize> = (0..gt.len()).filter(|&i| gt.as_slice()[i]).collect();
    if boundary.is_empty() {
        return Vec::new();
    }
    let dist = distance_transform(gt);
    let grad = |r: usize, c: usize| -> (f64, f64) {
        let d = |rr: usize, cc: usize| dist[(rr, cc)];
        let gr = match (r > 0, r + 1 < h) {
            (true, true) => 0.5 * (d(r + 1, c) - d(r - 1, c)),
            (false, true) => d(r + 1, c) - d(r, c),
            (true, false) => d(r, c) - d(r - 1, c),
            (false, false) => 0.0,
        };
        let gc = match (c > 0, c + 1 < w) {
            (true, true) => 0.5 * (d(r, c + 1) - d(r, c - 1)),
            (false, true) => d(r, c + 1) - d(r, c),
            (true, false) => d(r, c) - d(r, c - 1),
            (false, false) => 0.0,
        };
        (gr, gc)
    };
    boundary
        .into_iter()
        .map(|i| {
            let (r, c) = gt.position(i);
            // Structure tensor of the distance gradient over the 3x3 window;
            // the gradient flips sign across a thin contour, its outer product does not.
            let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
            for rr in r.saturating_sub(1)..(r + 2).min(h) {
                for cc in c.saturating_sub(1)..(c + 2).min(w) {
                    let (gr, gc) = grad(rr, cc);
                    a += gr * gr;
                    b += gr * gc;
                    d += gc * gc;
                }
            }
            let trace = a + d;
            let gap = ((a - d).powi(2) + 4.0 * b * b).sqrt();
            if trace <= 0.0 || gap <= 1e-9 * trace {
                return (i, None);
            }
            let theta = 0.5 * (2.0 * b).atan2(a - d);
            (i, Some((theta.cos(), theta.sin())))
        })
        .collect()
}

/// Bilinear sample with edge clamping; returns the four `(offset, weight)` taps.
fn bilinear_taps(h: usize, w: usize, y: f64, x: f64) -> [(usize, f64); 4] {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    [
        (y0 * w + x0, (1.0 - fy) * (1.0 - fx)),
        (y0 * w + x1, (1.0 - fy) * fx),
        (y1 * w + x0, fy * (1.0 - fx)),
        (y1 * w + x1, fy * fx),
    ]
}

/// Non-maximum-suppression loss along ground-truth boundary normals.
///
/// For each boundary pixel, `window` unit-spaced samples of `probs` are taken
/// along the normal (bilinear, edge-clamped) and the loss is `−log(h + ε)`
/// with `h` the softmax of the samples at the center position.
pub fn nms_loss(probs: &Grid<f64>, gt: &ContourMask, window: usize) -> Result<NmsLoss> {
    check_shape(probs, gt)?;
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Validation(format!(
            "NMS window must be an odd integer >= 3, got {window}"
        )));
    }
    let (h, w) = probs.shape();
    let half = (window / 2) as isize;
    let center = window / 2;
    let p = probs.as_slice();
    let mut gradient = vec![0.0; p.len()];
    let mut value = 0.0;
    let (mut evaluated, mut skipped) = (0, 0);
    let mut taps = Vec::with_capacity(window);
    let mut scores = vec![0.0; window];
    for (i, normal) in boundary_normals(gt) {
        let Some((nr, nc)) = normal else {
            skipped += 1;
            continue;
        };
        let (r, c) = gt.position(i);
        taps.clear();
        for (k, k_off) in (-half..=half).enumerate() {
            let t = bilinear_taps(
                h,
                w,
                r as f64 + k_off as f64 * nr,
                c as f64 + k_off as f64 * nc,
            );
            scores[k] = t.iter().map(|&(j, wt)| wt * p[j]).sum();
            taps.push(t);
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let hval = exps[center] / total;
        value -= (hval + LOG_EPS).ln();
        evaluated += 1;
        let scale = hval / (hval + LOG_EPS);
        for (k, t) in taps.iter().enumerate() {
            let sigma = exps[k] / total;
            let indicator = if k == center { 1.0 } else { 0.0 };
            let d_score = -scale * (indicator - sigma);
            for &(j, wt) in t {
                gradient[j] += d_score * wt;
            }
        }
    }
    Ok(NmsLoss {
        value,
        gradient,
        evaluated,
        skipped,
    })
}

// ---------------------------------------------------------------------------
// Combination
// ---------------------------------------------------------------------------

/// Weights of the semantic, contour and center terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_semantic: f64,
    pub lambda_contour: f64,
    pub lambda_center: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_semantic: 1.0,
            lambda_contour: 50.0,
            lambda_center: 0.1,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_semantic: f64, lambda_contour: f64, lambda_center: f64) -> Result<Self> {
        let w = LossWeights {
            lambda_semantic,
            lambda_contour,
            lambda_center,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for v in [
            self.lambda_semantic,
            self.lambda_contour,
            self.lambda_center,
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "loss weights must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Which contour loss terms contribute to the contour loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContourTerms {
    pub wbce: bool,
    pub huber: bool,
    pub nms: bool,
}

impl Default for ContourTerms {
    fn default() -> Self {
        ContourTerms {
            wbce: true,
            huber: true,
            nms: true,
        }
    }
}

impl ContourTerms {
    /// Parses `wbce`, `wbce+huber`, `wbce+huber+nms`, ...
    pub fn parse(s: &str) -> Result<Self> {
        let mut t = ContourTerms {
            wbce: false,
            huber: false,
            nms: false,
        };
        for part in s.split('+').map(str::trim) {
            match part.to_ascii_lowercase().as_str() {
                "wbce" => t.wbce = true,
                "huber" => t.huber = true,
                "nms" => t.nms = true,
                other => {
                    return Err(Error::Validation(format!(
                        "unknown contour loss term {other:?}"
                    )))
                }
            }
        }
        Ok(t)
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.wbce {
            parts.push("wbce");
        }
        if self.huber {
            parts.push("huber");
        }
        if self.nms {
            parts.push("nms");
        }
        parts.join("+")
    }
}

/// Scalar loss components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub semantic: f64,
    pub wbce: f64,
    pub huber_contour: f64,
    pub nms: f64,
    pub center: f64,
}

/// Gradients of the weighted total with respect to each supplied prediction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossGradients {
    pub semantic_probs: Option<Vec<f64>>,
    pub contour_probs: Option<Vec<f64>>,
    pub offsets: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub semantic: f64,
    pub wbce: f64,
    pub huber_contour: f64,
    pub nms: f64,
    pub center: f64,
    pub total: f64,
    pub weights: LossWeights,
    /// Boundary pixels the NMS term skipped for lack of a usable normal.
    #[serde(default)]
    pub nms_skipped: usize,
    #[serde(skip)]
    pub gradients: Option<LossGradients>,
}

/// Weighted sum `λ₁·semantic + λ₂·(wbce + huber + nms) + λ₃·center`.
pub fn total_loss(components: &LossComponents, weights: &LossWeights) -> LossReport {
    let contour = components.wbce + components.huber_contour + components.nms;
    LossReport {
        semantic: components.semantic,
        wbce: components.wbce,
        huber_contour: components.huber_contour,
        nms: components.nms,
        center: components.center,
        total: weights.lambda_semantic * components.semantic
            + weights.lambda_contour * contour
            + weights.lambda_center * components.center,
        weights: *weights,
        nms_skipped: 0,
        gradients: None,
    }
}

/// Predictions paired with their ground truth; absent pairs contribute 0.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossInputs<'a> {
    pub semantic: Option<(&'a SemanticProbMap, &'a SemanticLabelMap)>,
    pub contour: Option<(&'a ContourProbMap, &'a ContourMask)>,
    pub center: Option<(&'a OffsetField, &'a OffsetField)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub terms: ContourTerms,
    pub contour_delta: f64,
    pub center_delta: f64,
    pub nms_window: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            weights: LossWeights::default(),
            terms: ContourTerms::default(),
            contour_delta: CONTOUR_HUBER_DELTA,
            center_delta: CENTER_HUBER_DELTA,
            nms_window: DEFAULT_NMS_WINDOW,
        }
    }
}

/// Evaluates every supplied term, then combines them with the configured weights.
pub fn compute_losses(inputs: &LossInputs<'_>, config: &LossConfig) -> Result<LossReport> {
    config.weights.validate()?;
    let w = &config.weights;
    let mut comps = LossComponents::default();
    let mut grads = LossGradients::default();
    let mut nms_skipped = 0;

    if let Some((probs, gt)) = inputs.semantic {
        crate::error::ensure_same_shape(probs.shape(), gt.shape())?;
        let p: Vec<f64> = probs.as_slice().iter().map(|&v| f64::from(v)).collect();
        let l = semantic_ce(&p, probs.num_classes(), gt.as_slice())?;
        comps.semantic = l.value;
        grads.semantic_probs = Some(scaled(l.gradient, w.lambda_semantic));
    }

    if let Some((probs, gt)) = inputs.contour {
        check_shape(probs.grid(), gt)?;
        let p: Vec<f64> = probs
            .grid()
            .as_slice()
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        let mut g = vec![0.0; p.len()];
        if config.terms.wbce {
            let l = weighted_bce(&p, gt.as_slice())?;
            comps.wbce = l.value;
            accumulate(&mut g, &l.gradient);
        }
        if config.terms.huber {
            let y: Vec<f64> = gt
                .as_slice()
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect();
            let l = huber(&p, &y, config.contour_delta)?;
            comps.huber_contour = l.value;
            accumulate(&mut g, &l.gradient);
        }
        if config.terms.nms {
            let grid = Grid::from_vec(gt.height(), gt.width(), p)?;
            let l = nms_loss(&grid, gt, config.nms_window)?;
            comps.nms = l.value;
            nms_skipped = l.skipped;
            accumulate(&mut g, &l.gradient);
        }
        grads.contour_probs = Some(scaled(g, w.lambda_contour));
    }

    if let Some((pred, gt)) = inputs.center {
        crate::error::ensure_same_shape(pred.shape(), gt.shape())?;
        let p: Vec<f64> = pred.as_slice().iter().map(|&v| f64::from(v)).collect();
        let y: Vec<f64> = gt.as_slice().iter().map(|&v| f64::from(v)).collect();
        let l = huber(&p, &y, config.center_delta)?;
        comps.center = l.value;
        grads.offsets = Some(scaled(l.gradient, w.lambda_center));
    }

    let mut report = total_loss(&comps, w);
    report.nms_skipped = nms_skipped;
    report.gradients = Some(grads);
    Ok(report)
}

fn scaled(mut v: Vec<f64>, s: f64) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x *= s);
    v
}

fn accumulate(acc: &mut [f64], g: &[f64]) {
    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
}
