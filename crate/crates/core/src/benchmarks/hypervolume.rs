use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Exact hypervolume dominated by `front` relative to `ref_point`
/// (maximisation). Points not strictly above the reference in every
/// coordinate contribute nothing and are dropped.
pub fn hypervolume(front: &[Vec<f64>], ref_point: &[f64]) -> Result<f64> {
    let n_o = ref_point.len();
    if !(2..=3).contains(&n_o) {
        return Err(Error::Unsupported(format!("hypervolume for {n_o} objectives")));
    }
    if let Some(p) = front.iter().find(|p| p.len() != n_o) {
        return Err(Error::Dimension { expected: n_o, got: p.len() });
    }
    if front.iter().flatten().chain(ref_point).any(|v| !v.is_finite()) {
        return Err(Error::param("hypervolume inputs must be finite"));
    }
    let kept: Vec<&Vec<f64>> = front
        .iter()
        .filter(|p| p.iter().zip(ref_point).all(|(a, r)| a > r))
        .collect();
    Ok(match n_o {
        2 => sweep_2d(kept.iter().map(|p| (p[0], p[1])).collect(), ref_point[0], ref_point[1]),
        _ => sweep_3d(&kept, ref_point),
    })
}

/// Area dominated by 2-D points above `(rx, ry)`.
fn sweep_2d(mut pts: Vec<(f64, f64)>, rx: f64, ry: f64) -> f64 {
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut prev_y = ry;
    for (x, y) in pts {
        if y > prev_y {
            area += (x - rx) * (y - prev_y);
            prev_y = y;
        }
    }
    area
}

/// Order-preserving map of finite floats onto integers.
fn key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | 1 << 63
    }
}

/// Non-dominated 2-D staircase (x ascending, y descending) and the area it
/// dominates above the reference corner.
struct Staircase {
    steps: BTreeMap<u64, (f64, f64)>,
    rx: f64,
    ry: f64,
    area: f64,
}

impl Staircase {
    /// Adds `(x, y)`, updating the area by the part it newly covers.
    fn insert(&mut self, x: f64, y: f64) {
        let kx = key(x);
        if self.steps.range(kx..).next().is_some_and(|(_, q)| q.1 >= y) {
            return;
        }
        // Heights to the right of x are all below y; the nearest one bounds
        // the newly covered strip directly left of x.
        let mut height = self.steps.range(kx..).next().map_or(self.ry, |(_, q)| q.1);
        let mut right = x;
        let mut beaten = Vec::new();
        for (&k, &(qx, qy)) in self.steps.range(..=kx).rev() {
            self.area += (right - qx) * (y - height);
            if qy > y {
                right = qx;
                height = y;
                break;
            }
            beaten.push(k);
            right = qx;
            height = qy;
        }
        if height < y {
            self.area += (right - self.rx) * (y - height);
        }
        for k in beaten {
            self.steps.remove(&k);
        }
        self.steps.insert(kx, (x, y));
    }
}

/// Volume by sweeping down the third objective: between consecutive
/// heights the cross-section is the area dominated by every point at least
/// that high, maintained incrementally.
fn sweep_3d(pts: &[&Vec<f64>], r: &[f64]) -> f64 {
    let mut order: Vec<&Vec<f64>> = pts.to_vec();
    order.sort_by(|a, b| b[2].total_cmp(&a[2]));
    let mut stair = Staircase { steps: BTreeMap::new(), rx: r[0], ry: r[1], area: 0.0 };
    let mut volume = 0.0;
    for (i, p) in order.iter().enumerate() {
        stair.insert(p[0], p[1]);
        let next_z = order.get(i + 1).map_or(r[2], |q| q[2]);
        volume += stair.area * (p[2] - next_z);
    }
    volume
}
