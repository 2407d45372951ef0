//! L2 relative error against a reference density, and the benchmark
//! harness that produces timed error records.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::engine::{
    estimate, EngineConfig, MixtureRule, PiecewiseConstantDensity, StarSolverConfig,
    UniformityCriterion,
};
use crate::error::{Error, Result};
use crate::models::{sample, MixtureSpec, ReferenceDensity};
use crate::moments::MomentTolerances;
use crate::numeric::{mix_seed, NeumaierSum};

/// Relative L2 distance between the estimator and `reference`, both
/// evaluated by leaf-centre quadrature on the estimator's partition.
pub fn l2_relative_error(
    pcd: &PiecewiseConstantDensity,
    reference: &ReferenceDensity,
) -> Result<f64> {
    if pcd.domain() != reference.domain() {
        return Err(Error::InvalidParameter(
            "estimator and reference are defined on different domains".into(),
        ));
    }
    let mut num = NeumaierSum::new();
    let mut den = NeumaierSum::new();
    for leaf in pcd.leaves() {
        let v = leaf.bounds.volume();
        let r = reference.pdf(&leaf.bounds.center());
        num.add((leaf.density - r).powi(2) * v);
        den.add(r * r * v);
    }
    let den = den.total();
    if den <= 0.0 {
        return Err(Error::ZeroReferenceNorm);
    }
    Ok((num.total() / den).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Dsp,
    DspMix,
    Msp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dsp, Method::DspMix, Method::Msp];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Dsp => "DSP",
            Method::DspMix => "DSP-mix",
            Method::Msp => "MSP",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dsp" => Ok(Method::Dsp),
            "dsp-mix" | "dspmix" => Ok(Method::DspMix),
            "msp" => Ok(Method::Msp),
            other => Err(Error::InvalidParameter(format!(
                "unknown method {other}; expected dsp, dsp-mix or msp"
            ))),
        }
    }
}

/// Engine and criterion parameters shared by a benchmark run.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchParams {
    pub theta: f64,
    pub mixture_rule: MixtureRule,
    pub tol: MomentTolerances,
    pub engine: EngineConfig,
    pub star: StarSolverConfig,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            theta: 0.1,
            mixture_rule: MixtureRule::default(),
            tol: MomentTolerances::default(),
            engine: EngineConfig::default(),
            star: StarSolverConfig::default(),
        }
    }
}

impl BenchParams {
    /// Criterion for `method`; the star solver seed is derived from `seed`.
    pub fn criterion(&self, method: Method, seed: u64) -> Result<UniformityCriterion> {
        match method {
            Method::DspMix => Ok(UniformityCriterion {
                mixture_rule: self.mixture_rule,
                ..UniformityCriterion::mixture(self.theta)?
            }),
            Method::Msp => Ok(UniformityCriterion::moment(self.tol)),
            Method::Dsp => UniformityCriterion::star(
                self.theta,
                StarSolverConfig {
                    seed: mix_seed(seed, self.star.seed),
                    ..self.star.clone()
                },
            ),
        }
    }
}

/// A named model with its normalized reference density.
#[derive(Debug)]
pub struct BenchCase {
    pub name: String,
    pub spec: MixtureSpec,
    pub reference: ReferenceDensity,
}

impl BenchCase {
    pub fn new(
        name: impl Into<String>,
        spec: MixtureSpec,
        normalizer_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let reference = ReferenceDensity::new(&spec, normalizer_samples, seed)?;
        Ok(Self {
            name: name.into(),
            spec,
            reference,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub method: Method,
    pub spec: String,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub error: f64,
    pub wall_time_s: f64,
    pub leaves: usize,
}

/// Stages of a benchmark run, reported to the caller's hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Sampled,
    Estimated,
    Evaluated,
}

/// Sample, estimate and evaluate one cell. Only the estimate is timed.
pub fn run_benchmark(
    case: &BenchCase,
    method: Method,
    n: usize,
    seed: u64,
    params: &BenchParams,
) -> Result<BenchRecord> {
    run_benchmark_with_hook(case, method, n, seed, params, &mut |_| {})
}

pub fn run_benchmark_with_hook(
    case: &BenchCase,
    method: Method,
    n: usize,
    seed: u64,
    params: &BenchParams,
    hook: &mut dyn FnMut(Phase),
) -> Result<BenchRecord> {
    let samples = sample(&case.spec, n, seed)?;
    hook(Phase::Sampled);
    let criterion = params.criterion(method, seed)?;
    let start = Instant::now();
    let pcd = estimate(&samples, &case.spec.domain(), &criterion, &params.engine)?;
    let wall_time_s = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    hook(Phase::Estimated);
    let error = l2_relative_error(&pcd, &case.reference)?;
    hook(Phase::Evaluated);
    Ok(BenchRecord {
        method,
        spec: case.name.clone(),
        d: case.dim(),
        n,
        seed,
        error,
        wall_time_s,
        leaves: pcd.leaf_count(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Theta,
    Eps,
    N,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "theta" => Ok(SweepParam::Theta),
            "eps" => Ok(SweepParam::Eps),
            "n" => Ok(SweepParam::N),
            other => Err(Error::InvalidParameter(format!(
                "unknown sweep parameter {other}"
            ))),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Theta => "theta",
            SweepParam::Eps => "eps",
            SweepParam::N => "N",
        })
    }
}

/// Everything in a sweep except the swept parameter.
pub struct SweepContext<'a> {
    pub case: &'a BenchCase,
    pub method: Method,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub params: BenchParams,
}

/// One record per grid value and seed, tagged with the grid value.
pub fn sweep(
    param: SweepParam,
    grid: &[f64],
    ctx: &SweepContext<'_>,
) -> Result<Vec<(f64, BenchRecord)>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    let mut out = Vec::with_capacity(grid.len() * ctx.seeds.len());
    for &value in grid {
        let mut params = ctx.params.clone();
        let mut n = ctx.n;
        match param {
            SweepParam::Theta => params.theta = value,
            SweepParam::Eps => params.tol = MomentTolerances::uniform(value)?,
            SweepParam::N => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "N must be a positive integer, got {value}"
                    )));
                }
                n = value as usize;
            }
        }
        for &seed in &ctx.seeds {
            out.push((
                value,
                run_benchmark(ctx.case, ctx.method, n, seed, &params)?,
            ));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    method: String,
    spec: &'a str,
    d: usize,
    #[serde(rename = "N")]
    n: usize,
    seed: u64,
    error: f64,
    wall_time_s: f64,
    leaves: usize,
}

impl<'a> From<&'a BenchRecord> for CsvRow<'a> {
    fn from(r: &'a BenchRecord) -> Self {
        Self {
            method: r.method.to_string(),
            spec: &r.spec,
            d: r.d,
            n: r.n,
            seed: r.seed,
            error: r.error,
            wall_time_s: r.wall_time_s,
            leaves: r.leaves,
        }
    }
}

/// Write records as CSV with a header row.
pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow::from(r)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Write sweep results as CSV: the swept parameter, its value, then the
/// benchmark columns.
pub fn write_sweep_csv<W: Write>(
    param: SweepParam,
    rows: &[(f64, BenchRecord)],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "param",
        "value",
        "method",
        "spec",
        "d",
        "N",
        "seed",
        "error",
        "wall_time_s",
        "leaves",
    ])
    .map_err(csv_error)?;
    for (v, r) in rows {
        w.write_record([
            param.to_string(),
            v.to_string(),
            r.method.to_string(),
            r.spec.clone(),
            r.d.to_string(),
            r.n.to_string(),
            r.seed.to_string(),
            r.error.to_string(),
            r.wall_time_s.to_string(),
            r.leaves.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Group records by (spec, d, N, method) and format mean +- sd per group.
pub fn format_table(records: &[BenchRecord]) -> String {
    use std::collections::BTreeMap;
    type Key = (String, usize, usize, Method);
    let mut groups: BTreeMap<Key, Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.spec.clone(), r.d, r.n, r.method))
            .or_default()
            .push(r);
    }
    let header = [
        "spec", "d", "N", "method", "seeds", "error", "time_s", "leaves",
    ];
    let mut rows: Vec<[String; 8]> = vec![header.map(String::from)];
    for ((spec, d, n, method), rs) in &groups {
        let (e, es) = mean_sd(&rs.iter().map(|r| r.error).collect::<Vec<_>>());
        let (t, ts) = mean_sd(&rs.iter().map(|r| r.wall_time_s).collect::<Vec<_>>());
        let (l, _) = mean_sd(&rs.iter().map(|r| r.leaves as f64).collect::<Vec<_>>());
        rows.push([
            spec.clone(),
            d.to_string(),
            n.to_string(),
            method.to_string(),
            rs.len().to_string(),
            format!("{e:.4} ± {es:.4}"),
            format!("{t:.4} ± {ts:.4}"),
            format!("{l:.0}"),
        ]);
    }
    let widths: Vec<usize> = (0..8)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| {
                let pad = w - cell.chars().count();
                if c == 0 || c == 3 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Leaf;
    use crate::geometry::AxisBox;
    use crate::models::BetaMixtureSpec;

    fn uniform_ref(d: usize) -> ReferenceDensity {
        let spec = MixtureSpec::Beta(BetaMixtureSpec {
            weights: vec![1.0],
            components: vec![vec![(1.0, 1.0); d]],
        });
        ReferenceDensity::with_normalizer(&spec, 1.0, 0.0).unwrap()
    }

    fn pcd(leaves: &[(f64, f64, f64)]) -> PiecewiseConstantDensity {
        let leaves = leaves
            .iter()
            .map(|&(lo, hi, c)| Leaf {
                bounds: AxisBox::new(vec![lo], vec![hi]).unwrap(),
                density: c,
                count: 1,
            })
            .collect();
        PiecewiseConstantDensity::from_leaves(AxisBox::unit(1), 2, leaves, false).unwrap()
    }

    #[test]
    fn error_examples() {
        let r = uniform_ref(1);
        assert!(l2_relative_error(&pcd(&[(0.0, 1.0, 1.0)]), &r).unwrap() < 1e-14);
        assert!((l2_relative_error(&pcd(&[(0.0, 1.0, 2.0)]), &r).unwrap() - 1.0).abs() < 1e-14);
        let e = l2_relative_error(&pcd(&[(0.0, 0.5, 1.5), (0.5, 1.0, 0.5)]), &r).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
    }

    #[test]
    fn domain_mismatch_is_an_error() {
        let wide = PiecewiseConstantDensity::from_leaves(
            AxisBox::new(vec![0.0], vec![2.0]).unwrap(),
            1,
            vec![Leaf {
                bounds: AxisBox::new(vec![0.0], vec![2.0]).unwrap(),
                density: 0.5,
                count: 1,
            }],
            false,
        )
        .unwrap();
        assert!(l2_relative_error(&wide, &uniform_ref(1)).is_err());
    }

    #[test]
    fn vanishing_reference_is_an_error() {
        // the reference underflows to 0 at every leaf centre
        let spec = MixtureSpec::Gaussian(crate::models::GaussianMixtureSpec {
            weights: vec![1.0],
            means: vec![vec![50.0]],
            covariances: vec![vec![1e-4]],
            domain: AxisBox::unit(1),
        });
        let r = ReferenceDensity::with_normalizer(&spec, 1.0, 0.0).unwrap();
        let p = pcd(&[(0.0, 0.5, 1.0), (0.5, 1.0, 1.0)]);
        assert!(matches!(
            l2_relative_error(&p, &r),
            Err(Error::ZeroReferenceNorm)
        ));
    }

    #[test]
    fn error_is_scale_consistent() {
        let spec = MixtureSpec::Beta(BetaMixtureSpec {
            weights: vec![1.0],
            components: vec![vec![(2.0, 3.0)]],
        });
        let r = ReferenceDensity::with_normalizer(&spec, 1.0, 0.0).unwrap();
        let r2 = ReferenceDensity::with_normalizer(&spec, 0.5, 0.0).unwrap();
        let a = pcd(&[(0.0, 0.25, 1.2), (0.25, 0.6, 1.7), (0.6, 1.0, 0.4)]);
        let b = pcd(&[(0.0, 0.25, 2.4), (0.25, 0.6, 3.4), (0.6, 1.0, 0.8)]);
        let ea = l2_relative_error(&a, &r).unwrap();
        let eb = l2_relative_error(&b, &r2).unwrap();
        assert!((ea - eb).abs() < 1e-14 && ea > 0.0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            let s = m.to_string();
            assert_eq!(s.parse::<Method>().unwrap(), m);
        }
        assert_eq!("dsp-mix".parse::<Method>().unwrap(), Method::DspMix);
        assert!("kde".parse::<Method>().is_err());
    }

    #[test]
    fn mean_sd_values() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_has_spec_columns() {
        let r = BenchRecord {
            method: Method::DspMix,
            spec: "gauss2d".into(),
            d: 2,
            n: 100,
            seed: 1,
            error: 0.25,
            wall_time_s: 0.5,
            leaves: 7,
        };
        let mut buf = Vec::new();
        write_csv(&[r.clone(), r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "method,spec,d,N,seed,error,wall_time_s,leaves"
        );
        assert_eq!(lines.next().unwrap(), "DSP-mix,gauss2d,2,100,1,0.25,0.5,7");
        assert_eq!(lines.count(), 1);
    }
}
