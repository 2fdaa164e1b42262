//! Exact DBSCAN over 2-d points with a uniform grid index.
//!
//! Cells have side `eps / 1.5`, so any two points sharing a cell are within
//! `eps` of each other and neighbors lie at most two cells away. A cell
//! holding at least `min_samples` points is entirely core without counting.
//!
//! Labels: clusters are numbered `0, 1, …` in order of their first core point
//! in the input; border points reachable from several clusters take the
//! lowest-numbered one; unreachable points are [`NOISE`]. This matches the
//! classic sequential algorithm visiting points in input order.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const NOISE: i32 = -1;

type Cell = (i64, i64);

fn within(a: (f64, f64), b: (f64, f64), eps2: f64) -> bool {
    let dy = a.0 - b.0;
    let dx = a.1 - b.1;
    dy * dy + dx * dx <= eps2
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Density clustering; neighborhoods are closed balls that include the point itself.
pub fn dbscan(points: &[(f64, f64)], eps: f64, min_samples: usize) -> Result<Vec<i32>> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::Validation(format!(
            "dbscan eps must be positive, got {eps}"
        )));
    }
    if min_samples == 0 {
        return Err(Error::Validation(
            "dbscan min_samples must be at least 1".into(),
        ));
    }
    let n = points.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if let Some(p) = points.iter().find(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::Validation(format!(
            "dbscan point {p:?} is not finite"
        )));
    }
    let eps2 = eps * eps;
    let side = eps / 1.5;
    let cell_of =
        |p: (f64, f64)| -> Cell { ((p.0 / side).floor() as i64, (p.1 / side).floor() as i64) };

    let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
    let mut order: Vec<Cell> = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        let key = cell_of(p);
        cells
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(i);
    }
    let neighbors =
        |key: Cell| (-2..=2).flat_map(move |dy| (-2..=2).map(move |dx| (key.0 + dy, key.1 + dx)));

    // Core points.
    let mut core = vec![false; n];
    for &key in &order {
        let members = &cells[&key];
        if members.len() >= min_samples {
            members.iter().for_each(|&i| core[i] = true);
            continue;
        }
        for &i in members {
            let mut count = members.len();
            'count: for nk in neighbors(key).filter(|&k| k != key) {
                if let Some(other) = cells.get(&nk) {
                    for &j in other {
                        if within(points[i], points[j], eps2) {
                            count += 1;
                            if count >= min_samples {
                                break 'count;
                            }
                        }
                    }
                }
            }
            core[i] = count >= min_samples;
        }
    }

    // Connect core points: whole cells at once, then across neighboring cells.
    let core_in: HashMap<Cell, Vec<usize>> = order
        .iter()
        .filter_map(|k| {
            let c: Vec<usize> = cells[k].iter().copied().filter(|&i| core[i]).collect();
            (!c.is_empty()).then_some((*k, c))
        })
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for members in core_in.values() {
        let root = members[0];
        for &i in &members[1..] {
            let r = find(&mut parent, i);
            parent[r] = find(&mut parent, root);
        }
    }
    for &key in &order {
        let Some(mine) = core_in.get(&key) else {
            continue;
        };
        for nk in neighbors(key) {
            // Visit each unordered cell pair once.
            if nk <= key {
                continue;
            }
            let Some(theirs) = core_in.get(&nk) else {
                continue;
            };
            if find(&mut parent, mine[0]) == find(&mut parent, theirs[0]) {
                continue;
            }
            let linked = mine
                .iter()
                .any(|&i| theirs.iter().any(|&j| within(points[i], points[j], eps2)));
            if linked {
                let (a, b) = (find(&mut parent, mine[0]), find(&mut parent, theirs[0]));
                parent[a.max(b)] = a.min(b);
            }
        }
    }

    // Number clusters by their smallest core index.
    let mut labels = vec![NOISE; n];
    let mut cluster_of_root: HashMap<usize, i32> = HashMap::new();
    for i in 0..n {
        if core[i] {
            let root = find(&mut parent, i);
            let next = cluster_of_root.len() as i32;
            labels[i] = *cluster_of_root.entry(root).or_insert(next);
        }
    }

    // Border points.
    for &key in &order {
        for &i in &cells[&key] {
            if core[i] {
                continue;
            }
            let mut best = NOISE;
            for nk in neighbors(key) {
                let Some(cores) = core_in.get(&nk) else {
                    continue;
                };
                for &j in cores {
                    let l = labels[j];
                    if (best == NOISE || l < best) && within(points[i], points[j], eps2) {
                        best = l;
                    }
                }
            }
            labels[i] = best;
        }
    }
    Ok(labels)
}
