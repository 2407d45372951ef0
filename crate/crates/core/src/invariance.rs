//! Randomized checks of reflection, rotation and permutation invariance of
//! the uniformity measures.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discrepancy::{mixture_discrepancy, star_discrepancy_exact, UnitPointSet};
use crate::geometry::{AxisBox, SampleSet};
use crate::moments::{moment_uniformity_test, MomentTolerances};

/// Relative tolerance for discrepancy values under symmetry maps.
pub const MIXTURE_REL_TOL: f64 = 1e-12;
/// Smallest change in star discrepancy reported as a counterexample.
const STAR_GAP: f64 = 1e-3;
const STAR_ATTEMPTS: usize = 10_000;

/// Reflect coordinate `axis` of every point: `y -> 1 - y`.
pub fn reflect_unit(data: &[f64], d: usize, axis: usize) -> Vec<f64> {
    let mut out = data.to_vec();
    for row in out.chunks_exact_mut(d) {
        row[axis] = 1.0 - row[axis];
    }
    out
}

/// Quarter turn in the `(i, j)` plane about the cube centre:
/// `(y_i, y_j) -> (1 - y_j, y_i)`.
pub fn rotate_unit(data: &[f64], d: usize, i: usize, j: usize) -> Vec<f64> {
    let mut out = data.to_vec();
    for row in out.chunks_exact_mut(d) {
        let (a, b) = (row[i], row[j]);
        row[i] = 1.0 - b;
        row[j] = a;
    }
    out
}

/// Reorder coordinates: output axis `k` is input axis `perm[k]`.
pub fn permute_axes(data: &[f64], d: usize, perm: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks_exact(d) {
        out.extend(perm.iter().map(|&k| row[k]));
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InvarianceReport {
    pub trials: usize,
    pub seed: u64,
    pub mixture_checks: usize,
    pub mixture_max_rel_dev: f64,
    pub moment_checks: usize,
    /// Subsets accepted by the moment test before transformation.
    pub moment_accepts: usize,
    pub failures: Vec<String>,
    /// Three points in the unit square whose star discrepancy changes under
    /// reflection, with both values.
    pub star_counterexample: Option<(Vec<[f64; 2]>, f64, f64)>,
}

impl InvarianceReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for InvarianceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.trials == 0 {
            writeln!(f, "warning: 0 trials requested, nothing was checked")?;
        }
        writeln!(f, "seed {} trials {}", self.seed, self.trials)?;
        writeln!(
            f,
            "mixture discrepancy: {} checks, max relative deviation {:.3e} (tolerance {:.0e})",
            self.mixture_checks, self.mixture_max_rel_dev, MIXTURE_REL_TOL
        )?;
        writeln!(
            f,
            "moment test: {} checks over {} subsets ({} accepted)",
            self.moment_checks, self.trials, self.moment_accepts
        )?;
        match &self.star_counterexample {
            Some((pts, a, b)) => writeln!(
                f,
                "star discrepancy: reflection changes {a:.6} to {b:.6} for points {pts:?}"
            )?,
            None => writeln!(f, "star discrepancy: no reflection counterexample found")?,
        }
        for fail in &self.failures {
            writeln!(f, "FAIL {fail}")?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

fn rel_dev(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn mixture_of(d: usize, data: Vec<f64>) -> f64 {
    mixture_discrepancy(&UnitPointSet::new(d, data).expect("coordinates stay in the unit cube"))
}

/// One random point set per trial, checked under a reflection, a rotation
/// (when d >= 2) and a coordinate permutation.
fn mixture_suite(rng: &mut ChaCha8Rng, trials: usize, report: &mut InvarianceReport) {
    for t in 0..trials {
        let n = rng.random_range(2..=64);
        let d = rng.random_range(1..=6);
        let data: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
        let base = mixture_of(d, data.clone());

        let mut variants = vec![("reflection", reflect_unit(&data, d, rng.random_range(0..d)))];
        if d >= 2 {
            let i = rng.random_range(0..d);
            let j = (i + rng.random_range(1..d)) % d;
            variants.push(("rotation", rotate_unit(&data, d, i, j)));
        }
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(rng);
        variants.push(("permutation", permute_axes(&data, d, &perm)));

        for (name, moved) in variants {
            let dev = rel_dev(base, mixture_of(d, moved));
            report.mixture_checks += 1;
            report.mixture_max_rel_dev = report.mixture_max_rel_dev.max(dev);
            if dev > MIXTURE_REL_TOL {
                report.failures.push(format!(
                    "mixture {name} trial {t} (n={n}, d={d}): relative deviation {dev:.3e}"
                ));
            }
        }
    }
}

fn random_box(rng: &mut ChaCha8Rng, d: usize) -> AxisBox {
    let lo: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let w = rng.random_range(0.1..3.0);
    // equal extents so that any quarter turn maps the box onto itself
    let hi = lo.iter().map(|l| l + w).collect();
    AxisBox::new(lo, hi).expect("positive widths")
}

/// Random leaf subsets, uniform or skewed, checked under box-centred
/// reflection and quarter turns of an equal-extent box.
fn moment_suite(rng: &mut ChaCha8Rng, trials: usize, report: &mut InvarianceReport) {
    for t in 0..trials {
        let d = rng.random_range(1..=6);
        let n = rng.random_range(2..=400);
        let bounds = random_box(rng, d);
        let power: f64 = if rng.random_bool(0.5) {
            1.0
        } else {
            rng.random_range(1.0..3.0)
        };
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            for j in 0..d {
                let u: f64 = rng.random::<f64>().powf(power);
                data.push(bounds.lo()[j] + u * bounds.width(j));
            }
        }
        let eps = rng.random_range(0.02..0.3);
        let tol = MomentTolerances::uniform(eps).expect("positive");
        let outcome = |points: Vec<f64>| {
            let s = SampleSet::new(d, points).expect("finite");
            moment_uniformity_test(&s.full_view().view(), &bounds, &tol).expect("nonempty")
        };
        let base = outcome(data.clone());
        if base {
            report.moment_accepts += 1;
        }

        let c = bounds.center();
        let axis = rng.random_range(0..d);
        let mut reflected = data.clone();
        for row in reflected.chunks_exact_mut(d) {
            row[axis] = 2.0 * c[axis] - row[axis];
        }
        let mut variants = vec![("reflection", reflected)];
        if d >= 2 {
            let i = rng.random_range(0..d);
            let j = (i + rng.random_range(1..d)) % d;
            let mut rotated = data.clone();
            for row in rotated.chunks_exact_mut(d) {
                let (a, b) = (row[i] - c[i], row[j] - c[j]);
                row[i] = c[i] - b;
                row[j] = c[j] + a;
            }
            variants.push(("rotation", rotated));
        }
        for (name, moved) in variants {
            report.moment_checks += 1;
            if outcome(moved) != base {
                report.failures.push(format!(
                    "moment {name} trial {t} (n={n}, d={d}, eps={eps:.3}): outcome changed"
                ));
            }
        }
    }
}

/// Search for three points in the unit square whose exact star
/// discrepancy is not reflection invariant.
fn star_search(rng: &mut ChaCha8Rng) -> Option<(Vec<[f64; 2]>, f64, f64)> {
    for _ in 0..STAR_ATTEMPTS {
        let pts: Vec<[f64; 2]> = (0..3).map(|_| [rng.random(), rng.random()]).collect();
        let data: Vec<f64> = pts.iter().flatten().copied().collect();
        let a = star_discrepancy_exact(&UnitPointSet::new(2, data.clone()).ok()?)
            .ok()?
            .value;
        let b = star_discrepancy_exact(&UnitPointSet::new(2, reflect_unit(&data, 2, 0)).ok()?)
            .ok()?
            .value;
        if (a - b).abs() > STAR_GAP {
            return Some((pts, a, b));
        }
    }
    None
}

/// Run all suites with `trials` random instances each.
pub fn run_invariance_suite(trials: usize, seed: u64) -> InvarianceReport {
    let mut report = InvarianceReport {
        trials,
        seed,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mixture_suite(&mut rng, trials, &mut report);
    moment_suite(&mut rng, trials, &mut report);
    if trials > 0 {
        report.star_counterexample = star_search(&mut rng);
    }
    report
}
