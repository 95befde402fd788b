use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};

/// The test functions, stated in their usual minimisation form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    BraninCurrin,
    Zdt1,
    Zdt2,
    Dtlz1,
    Kursawe,
    VehicleSafety,
}

/// A benchmark with maximisation objectives (the minimisation form negated).
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkProblem {
    pub name: &'static str,
    pub kind: ProblemKind,
    pub n_x: usize,
    pub n_o: usize,
    pub bounds: Vec<[f64; 2]>,
    pub ref_point: Vec<f64>,
    pub true_front_hv: f64,
}

// Reference points and front hypervolumes come from
// `cargo run --release --example true_front_hv`; regenerate them together
// if a formula changes. ZDT1, ZDT2 and DTLZ1 store the closed-form area
// under their analytic fronts, which the sampled value matches to 1e-5.
const BRANIN_CURRIN_REF: [f64; 2] = [-19.2186479341589, -12.007921789461031];
const BRANIN_CURRIN_HV: f64 = 178.27350917696106;
const ZDT1_REF: [f64; 2] = [-1.1, -1.1];
const ZDT1_HV: f64 = 0.21 + 2.0 / 3.0;
const ZDT2_REF: [f64; 2] = [-1.1, -1.1];
const ZDT2_HV: f64 = 0.21 + 1.0 / 3.0;
const DTLZ1_REF: [f64; 2] = [-0.55, -0.55];
const DTLZ1_HV: f64 = 0.1775;
const KURSAWE_REF: [f64; 2] = [13.88205774206712, -1.1693137054930236];
const KURSAWE_HV: f64 = 39.83936399486611;
const VEHICLE_REF: [f64; 3] = [-1693.4370058930308, -10.651505101132136, -0.28605826798431255];
const VEHICLE_HV: f64 = 26.92230423482818;

pub const PROBLEM_NAMES: [&str; 6] = ["branin-currin", "zdt1", "zdt2", "dtlz1", "kursawe", "vehicle-safety"];

impl BenchmarkProblem {
    pub fn by_name(name: &str) -> Result<Self> {
        let p = |name, kind, n_x, lo, hi, r: &[f64], hv| BenchmarkProblem {
            name,
            kind,
            n_x,
            n_o: r.len(),
            bounds: vec![[lo, hi]; n_x],
            ref_point: r.to_vec(),
            true_front_hv: hv,
        };
        Ok(match name {
            "branin-currin" => p("branin-currin", ProblemKind::BraninCurrin, 2, 0.0, 1.0, &BRANIN_CURRIN_REF, BRANIN_CURRIN_HV),
            "zdt1" => p("zdt1", ProblemKind::Zdt1, 4, 0.0, 1.0, &ZDT1_REF, ZDT1_HV),
            "zdt2" => p("zdt2", ProblemKind::Zdt2, 3, 0.0, 1.0, &ZDT2_REF, ZDT2_HV),
            "dtlz1" => p("dtlz1", ProblemKind::Dtlz1, 3, 0.0, 1.0, &DTLZ1_REF, DTLZ1_HV),
            "kursawe" => p("kursawe", ProblemKind::Kursawe, 3, -5.0, 5.0, &KURSAWE_REF, KURSAWE_HV),
            "vehicle-safety" => p("vehicle-safety", ProblemKind::VehicleSafety, 5, 1.0, 3.0, &VEHICLE_REF, VEHICLE_HV),
            other => return Err(Error::param(format!("unknown benchmark '{other}'"))),
        })
    }

    pub fn all() -> Vec<Self> {
        PROBLEM_NAMES.iter().map(|n| Self::by_name(n).expect("known name")).collect()
    }

    pub fn bounds_tuples(&self) -> Vec<(f64, f64)> {
        self.bounds.iter().map(|b| (b[0], b[1])).collect()
    }

    /// Maximisation objectives at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_x {
            return Err(Error::Dimension { expected: self.n_x, got: x.len() });
        }
        for (i, (&v, b)) in x.iter().zip(&self.bounds).enumerate() {
            if !(v >= b[0] && v <= b[1]) {
                return Err(Error::Domain(format!("{}: x[{i}] = {v} outside [{}, {}]", self.name, b[0], b[1])));
            }
        }
        Ok(self.minimisation_objectives(x).into_iter().map(|v| -v).collect())
    }

    /// The published objectives before negation; `x` is assumed in bounds.
    pub fn minimisation_objectives(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            ProblemKind::BraninCurrin => branin_currin(x),
            ProblemKind::Zdt1 => zdt(x, |f1, g| 1.0 - (f1 / g).sqrt()),
            ProblemKind::Zdt2 => zdt(x, |f1, g| 1.0 - (f1 / g).powi(2)),
            ProblemKind::Dtlz1 => dtlz1(x),
            ProblemKind::Kursawe => kursawe(x),
            ProblemKind::VehicleSafety => vehicle_safety(x),
        }
    }
}

pub fn evaluate_benchmark(name: &str, x: &[f64]) -> Result<Vec<f64>> {
    BenchmarkProblem::by_name(name)?.eval(x)
}

fn branin_currin(x: &[f64]) -> Vec<f64> {
    let (u, v) = (15.0 * x[0] - 5.0, 15.0 * x[1]);
    let branin = (v - 5.1 / (4.0 * PI * PI) * u * u + 5.0 / PI * u - 6.0).powi(2)
        + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * u.cos()
        + 10.0;
    let (a, b) = (x[0], x[1]);
    // exp(-1/0) is 0, so the factor is 1 on the b = 0 edge.
    let factor = 1.0 - (-1.0 / (2.0 * b)).exp();
    let currin = factor * (2300.0 * a.powi(3) + 1900.0 * a * a + 2092.0 * a + 60.0)
        / (100.0 * a.powi(3) + 500.0 * a * a + 4.0 * a + 20.0);
    vec![branin, currin]
}

fn zdt(x: &[f64], h: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let f1 = x[0];
    let rest = &x[1..];
    let g = 1.0 + 9.0 * rest.iter().sum::<f64>() / rest.len() as f64;
    vec![f1, g * h(f1, g)]
}

fn dtlz1(x: &[f64]) -> Vec<f64> {
    let tail = &x[1..];
    let g = 100.0
        * (tail.len() as f64
            + tail
                .iter()
                .map(|&v| (v - 0.5).powi(2) - (20.0 * PI * (v - 0.5)).cos())
                .sum::<f64>());
    vec![0.5 * x[0] * (1.0 + g), 0.5 * (1.0 - x[0]) * (1.0 + g)]
}

fn kursawe(x: &[f64]) -> Vec<f64> {
    let f1 = x
        .windows(2)
        .map(|w| -10.0 * (-0.2 * (w[0] * w[0] + w[1] * w[1]).sqrt()).exp())
        .sum();
    let f2 = x.iter().map(|&v| v.abs().powf(0.8) + 5.0 * v.powi(3).sin()).sum();
    vec![f1, f2]
}

struct Term {
    objective: usize,
    coef: f64,
    powers: [i32; 5],
}

fn vehicle_terms() -> &'static [Term] {
    static TERMS: OnceLock<Vec<Term>> = OnceLock::new();
    TERMS.get_or_init(|| {
        include_str!("../../data/vehicle_safety.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let f: Vec<&str> = l.split_whitespace().collect();
                let mut powers = [0; 5];
                for (p, s) in powers.iter_mut().zip(&f[2..7]) {
                    *p = s.parse().expect("vendored exponent");
                }
                Term {
                    objective: f[0].parse().expect("vendored objective"),
                    coef: f[1].parse().expect("vendored coefficient"),
                    powers,
                }
            })
            .collect()
    })
}

fn vehicle_safety(x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; 3];
    for t in vehicle_terms() {
        let mono: f64 = x.iter().zip(&t.powers).map(|(v, &p)| v.powi(p)).product();
        out[t.objective] += t.coef * mono;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn published_reference_values() {
        let zdt1 = BenchmarkProblem::by_name("zdt1").unwrap();
        assert!(close(&zdt1.minimisation_objectives(&[0.0; 4]), &[0.0, 1.0], 1e-15));
        let kur = BenchmarkProblem::by_name("kursawe").unwrap();
        assert!(close(&kur.minimisation_objectives(&[0.0; 3]), &[-20.0, 0.0], 1e-12));
        assert!(close(&evaluate_benchmark("kursawe", &[0.0; 3]).unwrap(), &[20.0, 0.0], 1e-12));
        // Branin minimiser (pi, 2.275) maps to (0.5428..., 0.15166...).
        let bc = BenchmarkProblem::by_name("branin-currin").unwrap();
        let f = bc.minimisation_objectives(&[(PI + 5.0) / 15.0, 2.275 / 15.0]);
        assert!((f[0] - 0.397887).abs() < 1e-5);
        assert!(bc.minimisation_objectives(&[0.3, 0.0]).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dtlz1_optima_lie_on_the_plane() {
        let p = BenchmarkProblem::by_name("dtlz1").unwrap();
        for i in 0..=10 {
            let f = p.minimisation_objectives(&[i as f64 / 10.0, 0.5, 0.5]);
            assert!((f.iter().sum::<f64>() - 0.5).abs() < 1e-12);
        }
        let off = p.minimisation_objectives(&[0.3, 0.2, 0.5]);
        assert!(off.iter().sum::<f64>() > 0.5);
    }

    #[test]
    fn vehicle_safety_matches_the_expanded_polynomial() {
        let x = [1.3, 2.1, 1.7, 2.9, 1.05];
        let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
        let f1 = 1640.2823 + 2.3573285 * x1 + 2.3220035 * x2 + 4.5688768 * x3 + 7.7213633 * x4 + 4.4559504 * x5;
        let f2 = 6.5856 + 1.15 * x1 - 1.0427 * x2 + 0.9738 * x3 + 0.8364 * x4 - 0.3695 * x1 * x4
            + 0.0861 * x1 * x5
            + 0.3628 * x2 * x4
            - 0.1106 * x1 * x1
            - 0.3437 * x3 * x3
            + 0.1764 * x4 * x4;
        let f3 = -0.0551 + 0.0181 * x1 + 0.1024 * x2 + 0.0421 * x3 - 0.0073 * x1 * x2 + 0.024 * x2 * x3
            - 0.0118 * x2 * x4
            - 0.0204 * x3 * x4
            - 0.008 * x3 * x5
            - 0.0241 * x2 * x2
            + 0.0109 * x4 * x4;
        let p = BenchmarkProblem::by_name("vehicle-safety").unwrap();
        assert!(close(&p.minimisation_objectives(&x), &[f1, f2, f3], 1e-10));
    }

    #[test]
    fn domain_is_enforced() {
        assert!(matches!(evaluate_benchmark("zdt1", &[1.1, 0.0, 0.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(evaluate_benchmark("zdt1", &[f64::NAN, 0.0, 0.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(evaluate_benchmark("zdt1", &[0.5]), Err(Error::Dimension { .. })));
        assert!(evaluate_benchmark("nope", &[0.0]).is_err());
    }

    #[test]
    fn objectives_finite_on_corners() {
        for p in BenchmarkProblem::all() {
            for mask in 0..(1u32 << p.n_x) {
                let x: Vec<f64> = (0..p.n_x).map(|d| p.bounds[d][(mask >> d & 1) as usize]).collect();
                assert!(p.eval(&x).unwrap().iter().all(|v| v.is_finite()), "{}", p.name);
            }
        }
    }
}
