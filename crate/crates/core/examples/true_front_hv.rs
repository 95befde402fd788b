//! Recomputes the reference points and true-front hypervolumes stored in
//! `benchmarks/problems.rs`.
//!
//! ZDT1, ZDT2 and DTLZ1 have closed-form Pareto sets and are sampled along
//! them. The other problems are approximated by a dense random sample that
//! is then refined by shrinking local perturbations of the current front.
//! Each front is thinned to at most 10^5 points before measuring.
//!
//! Run with `cargo run --release -p choicebo-core --example true_front_hv [names...]`.

use choicebo_core::benchmarks::{hypervolume, BenchmarkProblem};
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const FRONT_SAMPLES: usize = 100_000;

fn front_filter(mut pts: Vec<(Vec<f64>, Vec<f64>)>) -> Vec<(Vec<f64>, Vec<f64>)> {
    pts.sort_by(|a, b| {
        (0..a.1.len())
            .map(|d| b.1[d].total_cmp(&a.1[d]))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = Vec::new();
    if pts[0].1.len() == 2 {
        let mut best = f64::NEG_INFINITY;
        for p in pts {
            if p.1[1] > best {
                best = p.1[1];
                out.push(p);
            }
        }
        return out;
    }
    // Points arrive with f0 non-increasing, so a point is dominated iff some
    // earlier point is at least as good in (f1, f2). The staircase of those
    // earlier points is kept with f2 decreasing as f1 increases.
    let mut stair: BTreeMap<u64, f64> = BTreeMap::new();
    for p in pts {
        let (f1, f2) = (ordered(p.1[1]), p.1[2]);
        if stair.range(f1..).next().is_some_and(|(_, &v)| v >= f2) {
            continue;
        }
        let beaten: Vec<u64> = stair.range(..=f1).rev().take_while(|(_, &v)| v <= f2).map(|(&k, _)| k).collect();
        for k in beaten {
            stair.remove(&k);
        }
        stair.insert(f1, f2);
        out.push(p);
    }
    out
}

/// Order-preserving map of finite floats onto integers.
fn ordered(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | 1 << 63
    }
}

fn evaluate(p: &BenchmarkProblem, x: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let y = p.eval(&x).unwrap();
    (x, y)
}

fn analytic_front(p: &BenchmarkProblem) -> Vec<(Vec<f64>, Vec<f64>)> {
    let rest = if p.name == "dtlz1" { 0.5 } else { 0.0 };
    (0..FRONT_SAMPLES)
        .map(|i| {
            let mut x = vec![rest; p.n_x];
            x[0] = i as f64 / (FRONT_SAMPLES - 1) as f64;
            evaluate(p, x)
        })
        .collect()
}

fn searched_front(p: &BenchmarkProblem, rng: &mut ChaCha8Rng) -> Vec<(Vec<f64>, Vec<f64>)> {
    let uniform = |rng: &mut ChaCha8Rng| -> Vec<f64> { p.bounds.iter().map(|b| rng.random_range(b[0]..=b[1])).collect() };
    let initial = if p.n_o == 2 { 1_000_000 } else { 200_000 };
    let mut pts: Vec<_> = (0..initial).map(|_| evaluate(p, uniform(rng))).collect();
    pts = front_filter(pts);
    let cap = if p.n_o == 2 { 50_000 } else { 8_000 };
    let rounds = 40;
    for r in 0..rounds {
        let step = 0.05 * (1e-4f64 / 0.05).powf(r as f64 / (rounds - 1) as f64);
        let parents = thin(&pts, cap);
        let per = (4 * cap / parents.len().max(1)).clamp(2, 64);
        let mut next = pts.clone();
        for (x, _) in &parents {
            for _ in 0..per {
                let child: Vec<f64> = x
                    .iter()
                    .zip(&p.bounds)
                    .map(|(&v, b)| {
                        let z: f64 = rng.sample(StandardNormal);
                        (v + step * (b[1] - b[0]) * z).clamp(b[0], b[1])
                    })
                    .collect();
                next.push(evaluate(p, child));
            }
        }
        pts = front_filter(next);
        eprintln!("{}: round {r}, step {step:.2e}, front {}", p.name, pts.len());
    }
    pts
}

/// Evenly spaced subsample keeping at most `cap` points.
fn thin(pts: &[(Vec<f64>, Vec<f64>)], cap: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    if pts.len() <= cap {
        return pts.to_vec();
    }
    (0..cap).map(|i| pts[i * pts.len() / cap].clone()).collect()
}

fn main() {
    let only: Vec<String> = std::env::args().skip(1).collect();
    for p in BenchmarkProblem::all() {
        if !only.is_empty() && !only.iter().any(|n| n == p.name) {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
        let front = match p.name {
            "zdt1" | "zdt2" | "dtlz1" => analytic_front(&p),
            _ => searched_front(&p, &mut rng),
        };
        let front = thin(&front, FRONT_SAMPLES);
        let ys: Vec<Vec<f64>> = front.iter().map(|f| f.1.clone()).collect();
        let reference: Vec<f64> = (0..p.n_o)
            .map(|d| {
                let lo = ys.iter().map(|y| y[d]).fold(f64::INFINITY, f64::min);
                let hi = ys.iter().map(|y| y[d]).fold(f64::NEG_INFINITY, f64::max);
                lo - 0.1 * (hi - lo)
            })
            .collect();
        let hv = hypervolume(&ys, &reference).unwrap();
        println!("{}: front {} points, ref {:?}, hv {:?}", p.name, ys.len(), reference, hv);
    }
}
