//! Ground-truth instance contours: inner-boundary extraction, square
//! dilation, and the Euclidean distance transform used by the NMS loss.

use crate::raster::{ContourMask, Grid, InstanceIds};

/// Default dilation rate for ground-truth contours.
pub const DEFAULT_DILATION_RATE: usize = 2;

/// Marks every instance pixel whose 8-neighborhood holds a different id.
///
/// Pixels outside the image count as a different id, so instances touching
/// the frame get a contour along the border too.
pub fn extract_contours(ids: &InstanceIds) -> ContourMask {
    let (h, w) = ids.shape();
    let mut mask = Grid::filled(h, w, false);
    for r in 0..h {
        for c in 0..w {
            let id = ids[(r, c)];
            if id == 0 {
                continue;
            }
            let on_border = r == 0 || c == 0 || r + 1 == h || c + 1 == w;
            let boundary = on_border || {
                let mut differs = false;
                'scan: for rr in r - 1..=r + 1 {
                    for cc in c - 1..=c + 1 {
                        if ids[(rr, cc)] != id {
                            differs = true;
                            break 'scan;
                        }
                    }
                }
                differs
            };
            mask[(r, c)] = boundary;
        }
    }
    mask
}

/// Morphological dilation with a `(2·rate+1)²` square; rate 0 is the identity.
pub fn dilate_contours(mask: &ContourMask, rate: usize) -> ContourMask {
    if rate == 0 {
        return mask.clone();
    }
    let (h, w) = mask.shape();
    let mut horizontal = Grid::filled(h, w, false);
    let mut line = Vec::with_capacity(h.max(w));
    for r in 0..h {
        line.clear();
        line.extend((0..w).map(|c| mask[(r, c)]));
        let out = dilate_line(&line, rate);
        for (c, v) in out.into_iter().enumerate() {
            horizontal[(r, c)] = v;
        }
    }
    let mut result = Grid::filled(h, w, false);
    for c in 0..w {
        line.clear();
        line.extend((0..h).map(|r| horizontal[(r, c)]));
        let out = dilate_line(&line, rate);
        for (r, v) in out.into_iter().enumerate() {
            result[(r, c)] = v;
        }
    }
    result
}

/// 1-d dilation: true where some input within `rate` positions is true.
fn dilate_line(line: &[bool], rate: usize) -> Vec<bool> {
    let n = line.len();
    let mut out = vec![false; n];
    let mut last: Option<usize> = None;
    for i in 0..n {
        if line[i] {
            last = Some(i);
        }
        out[i] = last.is_some_and(|j| i - j <= rate);
    }
    let mut next: Option<usize> = None;
    for i in (0..n).rev() {
        if line[i] {
            next = Some(i);
        }
        out[i] |= next.is_some_and(|j| j - i <= rate);
    }
    out
}

/// Euclidean distance from every pixel to the nearest `true` pixel.
///
/// Exact separable transform (lower envelope of parabolas). Returns
/// `f64::INFINITY` everywhere when the mask is empty.
pub fn distance_transform(mask: &Grid<bool>) -> Grid<f64> {
    let (h, w) = mask.shape();
    let mut sq = mask.map(|&b| if b { 0.0 } else { f64::INFINITY });
    let mut buf = Vec::with_capacity(h.max(w));
    for c in 0..w {
        buf.clear();
        buf.extend((0..h).map(|r| sq[(r, c)]));
        let d = squared_distance_1d(&buf);
        for (r, v) in d.into_iter().enumerate() {
            sq[(r, c)] = v;
        }
    }
    for r in 0..h {
        buf.clear();
        buf.extend((0..w).map(|c| sq[(r, c)]));
        let d = squared_distance_1d(&buf);
        for (c, v) in d.into_iter().enumerate() {
            sq[(r, c)] = v;
        }
    }
    sq.map(|v| v.sqrt())
}

fn squared_distance_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![f64::INFINITY; n];
    let sites: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if sites.is_empty() {
        return out;
    }
    // Lower envelope of parabolas rooted at finite samples.
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    let intersect = |p: usize, q: usize| {
        let (pf, qf) = (p as f64, q as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
    };
    for &q in &sites {
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = intersect(p, q);
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                        if v.is_empty() {
                            continue;
                        }
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    let mut k = 0;
    for (x, slot) in out.iter_mut().enumerate() {
        let xf = x as f64;
        while k + 1 < v.len() && z[k + 1] < xf {
            k += 1;
        }
        let d = xf - v[k] as f64;
        *slot = d * d + f[v[k]];
    }
    out
}
