//! Reference distributions: truncated Gaussian mixtures and mixtures of
//! Beta products, with seeded sampling and normalized density evaluation.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::geometry::{AxisBox, SampleSet};
use crate::numeric::mix_seed;

/// Samples drawn per independently seeded chunk.
const CHUNK: usize = 1 << 16;
/// Untruncated draws used to detect a degenerate truncation.
const PROBE_DRAWS: usize = 1_000_000;
const MIN_ACCEPTANCE: f64 = 1e-6;
/// Monte Carlo draws used for the truncation mass by default.
pub const DEFAULT_NORMALIZER_SAMPLES: usize = 4_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// One `d x d` row-major matrix per component.
    pub covariances: Vec<Vec<f64>>,
    /// Truncation region.
    pub domain: AxisBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaMixtureSpec {
    pub weights: Vec<f64>,
    /// Per component, one `(alpha, beta)` pair per axis.
    pub components: Vec<Vec<(f64, f64)>>,
}

/// A mixture model, stored in spec files as JSON with a `kind` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MixtureSpec {
    Gaussian(GaussianMixtureSpec),
    Beta(BetaMixtureSpec),
}

impl MixtureSpec {
    pub fn dim(&self) -> usize {
        match self {
            MixtureSpec::Gaussian(g) => g.domain.dim(),
            MixtureSpec::Beta(b) => b.components.first().map_or(0, Vec::len),
        }
    }

    pub fn domain(&self) -> AxisBox {
        match self {
            MixtureSpec::Gaussian(g) => g.domain.clone(),
            MixtureSpec::Beta(_) => AxisBox::unit(self.dim()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Compiled::new(self).map(|_| ())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line() as u64,
            msg: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

fn check_weights(weights: &[f64], components: usize) -> Result<()> {
    if weights.is_empty() || weights.len() != components {
        return Err(Error::InvalidParameter(format!(
            "{} weights for {components} components",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter(
            "weights must be nonnegative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "weights sum to {total}, not 1"
        )));
    }
    Ok(())
}

struct GaussComponent {
    mean: Vec<f64>,
    /// Cholesky factor, row-major lower triangle.
    chol: Vec<f64>,
    /// `-d/2 ln(2 pi) - 1/2 ln det`.
    log_scale: f64,
}

impl GaussComponent {
    fn draw<R: Rng>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        let d = self.mean.len();
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i + 1];
            out[i] = self.mean[i] + row.iter().zip(z.iter()).map(|(l, z)| l * z).sum::<f64>();
        }
    }

    fn log_pdf(&self, p: &[f64]) -> f64 {
        let d = self.mean.len();
        // forward substitution L y = p - mean
        let mut y = vec![0.0; d];
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i];
            let s: f64 = row.iter().zip(&y).map(|(l, y)| l * y).sum();
            y[i] = (p[i] - self.mean[i] - s) / self.chol[i * d + i];
        }
        self.log_scale - 0.5 * y.iter().map(|v| v * v).sum::<f64>()
    }
}

struct BetaComponent {
    shapes: Vec<(f64, f64)>,
    draws: Vec<Beta<f64>>,
    log_norm: f64,
}

/// `a ln x`, taken as 0 when `a` is 0 so that shape 1 gives finite values
/// on the boundary.
fn xlogy(a: f64, x: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * x.ln()
    }
}

impl BetaComponent {
    fn log_pdf(&self, p: &[f64]) -> f64 {
        let mut s = -self.log_norm;
        for (&(a, b), &x) in self.shapes.iter().zip(p) {
            s += xlogy(a - 1.0, x) + xlogy(b - 1.0, 1.0 - x);
        }
        s
    }
}

enum Components {
    Gaussian(Vec<GaussComponent>, AxisBox),
    Beta(Vec<BetaComponent>),
}

/// Validated spec with factorizations ready for sampling and evaluation.
struct Compiled {
    dim: usize,
    weights: Vec<f64>,
    pick: WeightedIndex<f64>,
    components: Components,
}

impl Compiled {
    fn new(spec: &MixtureSpec) -> Result<Self> {
        match spec {
            MixtureSpec::Gaussian(g) => {
                let d = g.domain.dim();
                let k = g.means.len();
                check_weights(&g.weights, k)?;
                if g.covariances.len() != k {
                    return Err(Error::InvalidParameter(format!(
                        "{} covariances for {k} means",
                        g.covariances.len()
                    )));
                }
                let mut comps = Vec::with_capacity(k);
                for (i, (mean, cov)) in g.means.iter().zip(&g.covariances).enumerate() {
                    if mean.len() != d {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: mean.len(),
                        });
                    }
                    if cov.len() != d * d {
                        return Err(Error::DimensionMismatch {
                            expected: d * d,
                            got: cov.len(),
                        });
                    }
                    if mean.iter().chain(cov).any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite(i));
                    }
                    let m = DMatrix::from_row_slice(d, d, cov);
                    if (0..d).any(|r| {
                        (0..r).any(|c| {
                            (m[(r, c)] - m[(c, r)]).abs() > 1e-12 * m[(r, c)].abs().max(1.0)
                        })
                    }) {
                        return Err(Error::NotPositiveDefinite(i));
                    }
                    let chol = m.cholesky().ok_or(Error::NotPositiveDefinite(i))?;
                    let l = chol.l();
                    let log_det: f64 = 2.0 * (0..d).map(|j| l[(j, j)].ln()).sum::<f64>();
                    let mut flat = vec![0.0; d * d];
                    for r in 0..d {
                        for c in 0..=r {
                            flat[r * d + c] = l[(r, c)];
                        }
                    }
                    comps.push(GaussComponent {
                        mean: mean.clone(),
                        chol: flat,
                        log_scale: -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
                            - 0.5 * log_det,
                    });
                }
                Ok(Self {
                    dim: d,
                    weights: g.weights.clone(),
                    pick: WeightedIndex::new(&g.weights)
                        .map_err(|e| Error::InvalidParameter(format!("weights: {e}")))?,
                    components: Components::Gaussian(comps, g.domain.clone()),
                })
            }
            MixtureSpec::Beta(b) => {
                let k = b.components.len();
                check_weights(&b.weights, k)?;
                let d = b.components[0].len();
                if d == 0 {
                    return Err(Error::InvalidParameter(
                        "beta component with no axes".into(),
                    ));
                }
                let mut comps = Vec::with_capacity(k);
                for shapes in &b.components {
                    if shapes.len() != d {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: shapes.len(),
                        });
                    }
                    let mut draws = Vec::with_capacity(d);
                    let mut log_norm = 0.0;
                    for &(a, bb) in shapes {
                        if !(a > 0.0 && bb > 0.0 && a.is_finite() && bb.is_finite()) {
                            return Err(Error::InvalidParameter(format!(
                                "beta shapes ({a}, {bb}) must be > 0"
                            )));
                        }
                        draws.push(
                            Beta::new(a, bb).map_err(|e| Error::InvalidParameter(e.to_string()))?,
                        );
                        log_norm += ln_beta(a, bb);
                    }
                    comps.push(BetaComponent {
                        shapes: shapes.clone(),
                        draws,
                        log_norm,
                    });
                }
                Ok(Self {
                    dim: d,
                    weights: b.weights.clone(),
                    pick: WeightedIndex::new(&b.weights)
                        .map_err(|e| Error::InvalidParameter(format!("weights: {e}")))?,
                    components: Components::Beta(comps),
                })
            }
        }
    }

    /// One untruncated draw into `out`.
    fn draw<R: Rng>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        let c = self.pick.sample(rng);
        match &self.components {
            Components::Gaussian(comps, _) => comps[c].draw(rng, z, out),
            Components::Beta(comps) => {
                for (o, dist) in out.iter_mut().zip(&comps[c].draws) {
                    *o = dist.sample(rng);
                }
            }
        }
    }

    fn truncation(&self) -> Option<&AxisBox> {
        match &self.components {
            Components::Gaussian(_, domain) => Some(domain),
            Components::Beta(_) => None,
        }
    }

    /// Untruncated mixture density.
    fn mixture_pdf(&self, p: &[f64]) -> f64 {
        match &self.components {
            Components::Gaussian(comps, _) => comps
                .iter()
                .zip(&self.weights)
                .map(|(c, w)| w * c.log_pdf(p).exp())
                .sum(),
            Components::Beta(comps) => comps
                .iter()
                .zip(&self.weights)
                .map(|(c, w)| w * c.log_pdf(p).exp())
                .sum(),
        }
    }
}

/// Count of in-domain points among `draws` untruncated draws from one stream.
fn count_inside(model: &Compiled, domain: &AxisBox, draws: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; model.dim];
    let mut x = vec![0.0; model.dim];
    let mut inside = 0;
    for _ in 0..draws {
        model.draw(&mut rng, &mut z, &mut x);
        if domain.contains_closed(&x) {
            inside += 1;
        }
    }
    inside
}

/// Draw `n` samples restricted to the spec's domain by rejection.
///
/// The output depends only on `(spec, n, seed)`; chunks are seeded
/// independently and may run on any number of threads.
pub fn sample(spec: &MixtureSpec, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be >= 1".into()));
    }
    let model = Compiled::new(spec)?;
    let d = model.dim;
    if let Some(domain) = model.truncation() {
        let probe = count_inside(&model, domain, PROBE_DRAWS, mix_seed(seed, u64::MAX));
        let rate = probe as f64 / PROBE_DRAWS as f64;
        if rate < MIN_ACCEPTANCE {
            return Err(Error::DegenerateTruncation {
                rate,
                draws: PROBE_DRAWS,
            });
        }
    }
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let want = CHUNK.min(n - c * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, c as u64));
            let mut out = Vec::with_capacity(want * d);
            let mut z = vec![0.0; d];
            let mut x = vec![0.0; d];
            while out.len() < want * d {
                model.draw(&mut rng, &mut z, &mut x);
                if model.truncation().is_none_or(|dom| dom.contains_closed(&x)) {
                    out.extend_from_slice(&x);
                }
            }
            out
        })
        .collect();
    SampleSet::new(d, parts.concat())
}

/// Monte Carlo estimate of the mass the untruncated mixture puts on its
/// domain, with its binomial standard error.
pub fn estimate_normalizer(spec: &MixtureSpec, mc_samples: usize, seed: u64) -> Result<(f64, f64)> {
    let model = Compiled::new(spec)?;
    let Some(domain) = model.truncation() else {
        return Ok((1.0, 0.0));
    };
    if mc_samples < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "normalizer needs at least 1e4 draws, got {mc_samples}"
        )));
    }
    let chunks = mc_samples.div_ceil(CHUNK);
    let inside: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let draws = CHUNK.min(mc_samples - c * CHUNK);
            count_inside(&model, domain, draws, mix_seed(seed, c as u64))
        })
        .sum();
    let z = inside as f64 / mc_samples as f64;
    if inside == 0 {
        return Err(Error::DegenerateTruncation {
            rate: 0.0,
            draws: mc_samples,
        });
    }
    Ok((z, (z * (1.0 - z) / mc_samples as f64).sqrt()))
}

/// Mixture density renormalized over its domain.
pub struct ReferenceDensity {
    spec: MixtureSpec,
    model: Compiled,
    domain: AxisBox,
    log_normalizer: f64,
    normalizer_se: f64,
}

impl std::fmt::Debug for ReferenceDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferenceDensity")
            .field("spec", &self.spec)
            .field("log_normalizer", &self.log_normalizer)
            .field("normalizer_se", &self.normalizer_se)
            .finish()
    }
}

impl ReferenceDensity {
    pub fn new(spec: &MixtureSpec, mc_samples: usize, seed: u64) -> Result<Self> {
        let (z, se) = estimate_normalizer(spec, mc_samples, seed)?;
        Self::with_normalizer(spec, z, se)
    }

    pub fn with_normalizer(spec: &MixtureSpec, z: f64, se: f64) -> Result<Self> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "normalizer must be > 0, got {z}"
            )));
        }
        Ok(Self {
            spec: spec.clone(),
            model: Compiled::new(spec)?,
            domain: spec.domain(),
            log_normalizer: z.ln(),
            normalizer_se: se,
        })
    }

    pub fn spec(&self) -> &MixtureSpec {
        &self.spec
    }

    pub fn domain(&self) -> &AxisBox {
        &self.domain
    }

    pub fn normalizer(&self) -> f64 {
        self.log_normalizer.exp()
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn normalizer_se(&self) -> f64 {
        self.normalizer_se
    }

    /// Density at `p`; 0 outside the domain.
    pub fn pdf(&self, p: &[f64]) -> f64 {
        if p.len() != self.domain.dim() || !self.domain.contains_closed(p) {
            return 0.0;
        }
        self.model.mixture_pdf(p) / self.normalizer()
    }
}

/// Names of the built-in models.
pub const PRESETS: [&str; 5] = [
    "gauss2d",
    "gaussmix2d",
    "betamix2d",
    "gaussmixNd",
    "betamixNd",
];

/// Built-in model by name; `dim` is used by the `Nd` presets and must be 2
/// for the others.
pub fn preset(name: &str, dim: usize) -> Result<MixtureSpec> {
    let fixed_2d = |dim: usize| {
        if dim == 2 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "preset {name} is two-dimensional, got d = {dim}"
            )))
        }
    };
    let spec = match name.to_ascii_lowercase().as_str() {
        "gauss2d" => {
            fixed_2d(dim)?;
            MixtureSpec::Gaussian(GaussianMixtureSpec {
                weights: vec![1.0],
                means: vec![vec![0.5, 0.5]],
                covariances: vec![vec![0.08, 0.02, 0.02, 0.02]],
                domain: AxisBox::unit(2),
            })
        }
        "gaussmix2d" => {
            fixed_2d(dim)?;
            let cov = vec![0.04, 0.01, 0.01, 0.01];
            MixtureSpec::Gaussian(GaussianMixtureSpec {
                weights: vec![0.5, 0.5],
                means: vec![vec![0.5, 0.25], vec![0.5, 0.75]],
                covariances: vec![cov.clone(), cov],
                domain: AxisBox::unit(2),
            })
        }
        "betamix2d" => {
            fixed_2d(dim)?;
            MixtureSpec::Beta(BetaMixtureSpec {
                weights: vec![1.0 / 3.0; 3],
                components: vec![
                    vec![(2.0, 5.0), (5.0, 2.0)],
                    vec![(4.0, 2.0), (2.0, 4.0)],
                    vec![(1.0, 3.0), (3.0, 1.0)],
                ],
            })
        }
        "gaussmixnd" => {
            if dim == 0 {
                return Err(Error::InvalidParameter("d must be >= 1".into()));
            }
            let identity = |s: f64| {
                let mut m = vec![0.0; dim * dim];
                for j in 0..dim {
                    m[j * dim + j] = s;
                }
                m
            };
            MixtureSpec::Gaussian(GaussianMixtureSpec {
                weights: vec![0.4, 0.3, 0.2, 0.1],
                means: [0.3, 0.4, 0.5, 0.6].iter().map(|&m| vec![m; dim]).collect(),
                covariances: [0.01, 0.02, 0.01, 0.02]
                    .iter()
                    .map(|&s| identity(s))
                    .collect(),
                domain: AxisBox::unit(dim),
            })
        }
        "betamixnd" => {
            if dim == 0 {
                return Err(Error::InvalidParameter("d must be >= 1".into()));
            }
            MixtureSpec::Beta(BetaMixtureSpec {
                weights: vec![1.0 / 3.0; 3],
                components: [(15.0, 5.0), (10.0, 10.0), (5.0, 15.0)]
                    .iter()
                    .map(|&s| vec![s; dim])
                    .collect(),
            })
        }
        _ => {
            return Err(Error::InvalidParameter(format!(
                "unknown preset {name}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(spec)
}

/// Density of a single untruncated Gaussian.
pub fn gaussian_density(mean: &[f64], cov: &[f64], p: &[f64]) -> Result<f64> {
    let d = mean.len();
    let m = DMatrix::from_row_slice(d, d, cov);
    let chol = m.cholesky().ok_or(Error::NotPositiveDefinite(0))?;
    let diff = DVector::from_iterator(d, p.iter().zip(mean).map(|(a, b)| a - b));
    let y = chol
        .l()
        .solve_lower_triangular(&diff)
        .ok_or(Error::NotPositiveDefinite(0))?;
    let det = chol.determinant();
    Ok(
        (-0.5 * y.norm_squared()).exp()
            / ((2.0 * std::f64::consts::PI).powi(d as i32) * det).sqrt(),
    )
}
