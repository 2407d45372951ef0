//! Sequential binary partitioning of the domain.
//!
//! Every leaf is tested for uniformity independently of the others, so the
//! final partition depends only on each leaf's own samples and the global
//! sample count. The leaves of one generation are therefore decided in
//! parallel and applied in a fixed order, and the result is the same for any
//! worker count and for any processing order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrepancy::{
    exact_star_work, mixture_discrepancy_sq, mixture_discrepancy_sq_raw,
    mixture_marginal_lower_bound_sq, mixture_pairwise_lower_bound_sq, mixture_sq_upper_bound,
    star_discrepancy_exact_with_budget, star_marginal_lower_bound, ThresholdAccepting,
    UnitPointSet, DEFAULT_EXACT_BUDGET,
};
use crate::error::{Error, Result};
use crate::geometry::{scale_to_unit, AxisBox, SampleSet, SubsetView};
use crate::moments::{moment_uniformity_test, MomentTolerances};
use crate::numeric::{mix_seed, NeumaierSum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionKind {
    Star,
    Mixture,
    Moment,
}

/// Settings for the star-discrepancy solver used by the `Star` criterion.
#[derive(Clone, Debug, PartialEq)]
pub struct StarSolverConfig {
    /// Largest exact-solver workload, in point-box tests.
    pub exact_budget: f64,
    pub search: ThresholdAccepting,
    pub seed: u64,
}

impl Default for StarSolverConfig {
    fn default() -> Self {
        Self {
            exact_budget: DEFAULT_EXACT_BUDGET,
            search: ThresholdAccepting::default(),
            seed: 0,
        }
    }
}

/// How the mixture discrepancy is compared with the threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureRule {
    /// The closed-form value, i.e. the square of the discrepancy.
    #[default]
    Squared,
    /// Its square root.
    Root,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniformityCriterion {
    pub kind: CriterionKind,
    pub theta: f64,
    pub mixture_rule: MixtureRule,
    pub tol: MomentTolerances,
    pub star: StarSolverConfig,
}

impl UniformityCriterion {
    pub fn mixture(theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self {
            kind: CriterionKind::Mixture,
            theta,
            mixture_rule: MixtureRule::default(),
            tol: MomentTolerances::default(),
            star: StarSolverConfig::default(),
        })
    }

    pub fn star(theta: f64, solver: StarSolverConfig) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self {
            kind: CriterionKind::Star,
            theta,
            mixture_rule: MixtureRule::default(),
            tol: MomentTolerances::default(),
            star: solver,
        })
    }

    pub fn moment(tol: MomentTolerances) -> Self {
        Self {
            kind: CriterionKind::Moment,
            theta: 0.1,
            mixture_rule: MixtureRule::default(),
            tol,
            star: StarSolverConfig::default(),
        }
    }

    /// Discrepancy threshold `theta * sqrt(N) / n`.
    pub fn threshold(&self, n: usize, total_n: usize) -> f64 {
        self.theta * (total_n as f64).sqrt() / n as f64
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "theta must be > 0, got {theta}"
        )))
    }
}

/// Order in which pending leaves are taken from the worklist.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Traversal {
    /// Generation by generation; leaves of one generation run in parallel.
    #[default]
    Fifo,
    /// Depth first, single threaded.
    Lifo,
    /// Rescan the leaf list from the start after every split.
    Restart,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    /// Candidate splits per axis are at `i/m`, `i = 1..m-1`.
    pub m: usize,
    /// Leaves with at most this many samples are not split.
    pub n_min: usize,
    pub max_depth: usize,
    pub max_leaves: usize,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    pub traversal: Traversal,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            m: 10,
            n_min: 10,
            max_depth: 50,
            max_leaves: 1_000_000,
            workers: 0,
            traversal: Traversal::Fifo,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidParameter(format!(
                "m must be >= 2, got {}",
                self.m
            )));
        }
        if self.n_min < 1 {
            return Err(Error::InvalidParameter("n_min must be >= 1".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::InvalidParameter("max_depth must be >= 1".into()));
        }
        if self.max_leaves < 1 {
            return Err(Error::InvalidParameter("max_leaves must be >= 1".into()));
        }
        Ok(())
    }
}

/// A chosen cut: axis, candidate index `i` (cut at `i/m`), position, score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub axis: usize,
    pub index: usize,
    pub value: f64,
    pub score: f64,
}

/// Pick the candidate cut whose lower part deviates most from its uniform
/// share, `|n_lower / n - i / m|`. Ties go to the smallest axis, then the
/// smallest index.
pub fn choose_split(bounds: &AxisBox, subset: &SubsetView<'_>, m: usize) -> Result<Split> {
    if subset.is_empty() {
        return Err(Error::EmptySet);
    }
    if m < 2 {
        return Err(Error::InvalidParameter(format!("m must be >= 2, got {m}")));
    }
    let d = bounds.dim();
    if subset.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: subset.dim(),
        });
    }
    let n = subset.len() as f64;
    let mf = m as f64;
    let mut best: Option<Split> = None;
    let mut counts = vec![0usize; m + 1];
    for axis in 0..d {
        let lo = bounds.lo()[axis];
        let width = bounds.width(axis);
        let cuts: Vec<f64> = (1..m).map(|i| lo + (i as f64 / mf) * width).collect();
        // histogram by candidate bucket, then cumulate: n_i = #{y < cut_i}
        counts.iter_mut().for_each(|c| *c = 0);
        for p in subset.points() {
            let bucket = cuts.partition_point(|&c| c <= p[axis]);
            counts[bucket] += 1;
        }
        let mut below = 0usize;
        for (k, &value) in cuts.iter().enumerate() {
            below += counts[k];
            let index = k + 1;
            let score = (below as f64 / n - index as f64 / mf).abs();
            if best.is_none_or(|b| score > b.score) {
                best = Some(Split {
                    axis,
                    index,
                    value,
                    score,
                });
            }
        }
    }
    Ok(best.expect("m >= 2 and d >= 1 give at least one candidate"))
}

/// Cut a box in two along `axis` at `value`.
pub fn split_box(bounds: &AxisBox, axis: usize, value: f64) -> Result<(AxisBox, AxisBox)> {
    bounds.split(axis, value)
}

/// Uniformity test of a leaf's samples under `criterion`.
pub fn is_uniform(
    subset: &SubsetView<'_>,
    bounds: &AxisBox,
    criterion: &UniformityCriterion,
    total_n: usize,
) -> Result<bool> {
    is_uniform_seeded(subset, bounds, criterion, total_n, criterion.star.seed)
}

/// Margin below which a cheap lower bound is not trusted to reject.
const BOUND_MARGIN: f64 = 1e-12;

fn is_uniform_seeded(
    subset: &SubsetView<'_>,
    bounds: &AxisBox,
    criterion: &UniformityCriterion,
    total_n: usize,
    seed: u64,
) -> Result<bool> {
    if subset.is_empty() {
        return Err(Error::EmptySet);
    }
    let n = subset.len();
    match criterion.kind {
        CriterionKind::Moment => moment_uniformity_test(subset, bounds, &criterion.tol),
        CriterionKind::Mixture => {
            let t = criterion.threshold(n, total_n);
            let limit = match criterion.mixture_rule {
                MixtureRule::Squared => t,
                MixtureRule::Root => t * t,
            };
            if limit >= mixture_sq_upper_bound(bounds.dim()) {
                return Ok(true);
            }
            let unit = UnitPointSet::new(bounds.dim(), scale_to_unit(subset, bounds)?)?;
            if unit.dim() <= 2 {
                return Ok(mixture_discrepancy_sq(&unit) <= limit);
            }
            // projections contribute nonnegative terms to the full value
            if mixture_marginal_lower_bound_sq(&unit) - BOUND_MARGIN > limit
                || mixture_pairwise_lower_bound_sq(&unit) - BOUND_MARGIN > limit
            {
                return Ok(false);
            }
            Ok(mixture_discrepancy_sq_raw(&unit) <= limit)
        }
        CriterionKind::Star => {
            let t = criterion.threshold(n, total_n);
            if t >= 1.0 {
                return Ok(true);
            }
            let unit = UnitPointSet::new(bounds.dim(), scale_to_unit(subset, bounds)?)?;
            if star_marginal_lower_bound(&unit) > t {
                return Ok(false);
            }
            let value = if exact_star_work(&unit) <= criterion.star.exact_budget {
                star_discrepancy_exact_with_budget(&unit, criterion.star.exact_budget)?.value
            } else {
                let search = ThresholdAccepting {
                    stop_above: Some(t),
                    ..criterion.star.search.clone()
                };
                search.run(&unit, seed).value
            };
            Ok(value <= t)
        }
    }
}

/// Leaf of the estimator: box, constant density `c`, sample count.
#[derive(Clone, Debug, PartialEq)]
pub struct Leaf {
    pub bounds: AxisBox,
    pub density: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(usize),
    Split {
        axis: usize,
        value: f64,
        lower: usize,
        upper: usize,
    },
}

/// Piecewise-constant density `sum_l c_l 1{x in leaf_l}` with
/// `c_l = count_l / (N |leaf_l|)`.
#[derive(Clone, Debug)]
pub struct PiecewiseConstantDensity {
    domain: AxisBox,
    total_n: usize,
    leaves: Vec<Leaf>,
    nodes: Vec<Node>,
    truncated: bool,
}

/// Equal when the partitions, counts and constants agree; the lookup tree
/// is not compared.
impl PartialEq for PiecewiseConstantDensity {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain
            && self.total_n == other.total_n
            && self.leaves == other.leaves
            && self.truncated == other.truncated
    }
}

impl PiecewiseConstantDensity {
    pub fn domain(&self) -> &AxisBox {
        &self.domain
    }

    pub fn total_n(&self) -> usize {
        self.total_n
    }

    /// Leaves in depth-first order, lower child first.
    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Set when `max_leaves` stopped the partition early.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn total_mass(&self) -> f64 {
        self.leaves
            .iter()
            .map(|l| l.density * l.bounds.volume())
            .collect::<NeumaierSum>()
            .total()
    }

    /// Index of the leaf containing `p`, by tree descent.
    pub fn locate(&self, p: &[f64]) -> Result<usize> {
        if p.len() != self.domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.domain.dim(),
                got: p.len(),
            });
        }
        if !self.domain.contains_closed(p) {
            return Err(Error::OutsideBox { index: 0 });
        }
        let mut node = 0;
        loop {
            match self.nodes[node] {
                Node::Leaf(idx) => return Ok(idx),
                Node::Split {
                    axis,
                    value,
                    lower,
                    upper,
                } => node = if p[axis] < value { lower } else { upper },
            }
        }
    }

    /// Estimated density at `p`.
    pub fn density_eval(&self, p: &[f64]) -> Result<f64> {
        Ok(self.leaves[self.locate(p)?].density)
    }

    /// Rebuild an estimator from its leaves, e.g. after reading a partition
    /// file. The leaves must form a guillotine partition listed depth first.
    pub fn from_leaves(
        domain: AxisBox,
        total_n: usize,
        leaves: Vec<Leaf>,
        truncated: bool,
    ) -> Result<Self> {
        if leaves.is_empty() {
            return Err(Error::EmptySet);
        }
        if let Some(l) = leaves.iter().find(|l| l.bounds.dim() != domain.dim()) {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: l.bounds.dim(),
            });
        }
        let mut nodes = Vec::with_capacity(2 * leaves.len());
        rebuild(&leaves, 0, leaves.len(), &domain, &mut nodes)?;
        Ok(Self {
            domain,
            total_n,
            leaves,
            nodes,
            truncated,
        })
    }
}

fn rebuild(
    leaves: &[Leaf],
    start: usize,
    end: usize,
    bounds: &AxisBox,
    nodes: &mut Vec<Node>,
) -> Result<usize> {
    let me = nodes.len();
    if end - start == 1 {
        if leaves[start].bounds != *bounds {
            return Err(Error::InvalidBox(format!(
                "leaf {start} does not match the region it must cover"
            )));
        }
        nodes.push(Node::Leaf(start));
        return Ok(me);
    }
    // a cut after the k-th leaf on `axis` is valid when every earlier leaf
    // ends where every later one begins
    let d = bounds.dim();
    let range = &leaves[start..end];
    let mut suffix_lo = vec![f64::INFINITY; range.len() * d];
    for i in (0..range.len() - 1).rev() {
        for j in 0..d {
            let next = if i + 2 < range.len() {
                suffix_lo[(i + 1) * d + j]
            } else {
                f64::INFINITY
            };
            suffix_lo[i * d + j] = next.min(range[i + 1].bounds.lo()[j]);
        }
    }
    let mut prefix_hi = vec![f64::NEG_INFINITY; d];
    for k in 1..range.len() {
        for (j, h) in prefix_hi.iter_mut().enumerate() {
            *h = h.max(range[k - 1].bounds.hi()[j]);
        }
        for (axis, &value) in prefix_hi.iter().enumerate() {
            if value == suffix_lo[(k - 1) * d + axis]
                && value > bounds.lo()[axis]
                && value < bounds.hi()[axis]
            {
                let (lo_box, hi_box) = bounds.split(axis, value)?;
                nodes.push(Node::Leaf(usize::MAX));
                let lower = rebuild(leaves, start, start + k, &lo_box, nodes)?;
                let upper = rebuild(leaves, start + k, end, &hi_box, nodes)?;
                nodes[me] = Node::Split {
                    axis,
                    value,
                    lower,
                    upper,
                };
                return Ok(me);
            }
        }
    }
    Err(Error::InvalidBox(format!(
        "leaves {start}..{end} do not form a sequential partition"
    )))
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

struct Pending {
    bounds: AxisBox,
    indices: Vec<usize>,
    depth: usize,
    seed: u64,
    node: usize,
}

enum Decision {
    Keep,
    Split {
        axis: usize,
        value: f64,
        lower: (AxisBox, Vec<usize>),
        upper: (AxisBox, Vec<usize>),
    },
}

struct Ctx<'a> {
    samples: &'a SampleSet,
    criterion: &'a UniformityCriterion,
    config: &'a EngineConfig,
    total_n: usize,
}

impl Ctx<'_> {
    fn decide(&self, p: &Pending) -> Result<Decision> {
        let n = p.indices.len();
        if n == 0 || n <= self.config.n_min || p.depth >= self.config.max_depth {
            return Ok(Decision::Keep);
        }
        let view = SubsetView::new_unchecked(self.samples, &p.indices);
        if is_uniform_seeded(&view, &p.bounds, self.criterion, self.total_n, p.seed)? {
            return Ok(Decision::Keep);
        }
        let split = choose_split(&p.bounds, &view, self.config.m)?;
        let Ok((lo_box, hi_box)) = split_box(&p.bounds, split.axis, split.value) else {
            // box narrower than floating-point resolution
            return Ok(Decision::Keep);
        };
        let (lo_idx, hi_idx): (Vec<usize>, Vec<usize>) = p
            .indices
            .iter()
            .partition(|&&i| self.samples.row(i)[split.axis] < split.value);
        Ok(Decision::Split {
            axis: split.axis,
            value: split.value,
            lower: (lo_box, lo_idx),
            upper: (hi_box, hi_idx),
        })
    }
}

struct Builder {
    nodes: Vec<Option<Node>>,
    kept: Vec<(usize, AxisBox, usize)>,
    leaf_count: usize,
    truncated: bool,
}

impl Builder {
    /// Apply a decision; returns the children to enqueue.
    fn apply(&mut self, p: Pending, decision: Decision, max_leaves: usize) -> Option<[Pending; 2]> {
        match decision {
            Decision::Split {
                axis,
                value,
                lower,
                upper,
            } if self.leaf_count < max_leaves => {
                self.leaf_count += 1;
                let lo_node = self.nodes.len();
                self.nodes.push(None);
                self.nodes.push(None);
                self.nodes[p.node] = Some(Node::Split {
                    axis,
                    value,
                    lower: lo_node,
                    upper: lo_node + 1,
                });
                let child =
                    |(bounds, indices): (AxisBox, Vec<usize>), node: usize, tag: u64| Pending {
                        bounds,
                        indices,
                        depth: p.depth + 1,
                        seed: mix_seed(p.seed, tag),
                        node,
                    };
                Some([child(lower, lo_node, 1), child(upper, lo_node + 1, 2)])
            }
            decision => {
                if matches!(decision, Decision::Split { .. }) {
                    self.truncated = true;
                }
                let slot = self.kept.len();
                self.nodes[p.node] = Some(Node::Leaf(slot));
                self.kept.push((p.node, p.bounds, p.indices.len()));
                None
            }
        }
    }
}

/// Build the adaptive partition and its piecewise-constant estimator.
pub fn estimate(
    samples: &SampleSet,
    domain: &AxisBox,
    criterion: &UniformityCriterion,
    config: &EngineConfig,
) -> Result<PiecewiseConstantDensity> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySet);
    }
    samples.check_within(domain)?;
    if config.workers == 0 {
        build(samples, domain, criterion, config)
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| build(samples, domain, criterion, config))
    }
}

fn build(
    samples: &SampleSet,
    domain: &AxisBox,
    criterion: &UniformityCriterion,
    config: &EngineConfig,
) -> Result<PiecewiseConstantDensity> {
    let ctx = Ctx {
        samples,
        criterion,
        config,
        total_n: samples.len(),
    };
    let mut builder = Builder {
        nodes: vec![None],
        kept: Vec::new(),
        leaf_count: 1,
        truncated: false,
    };
    let root = Pending {
        bounds: domain.clone(),
        indices: (0..samples.len()).collect(),
        depth: 0,
        seed: criterion.star.seed,
        node: 0,
    };

    match config.traversal {
        Traversal::Fifo => {
            let mut frontier = vec![root];
            while !frontier.is_empty() {
                let decisions: Vec<Result<Decision>> =
                    frontier.par_iter().map(|p| ctx.decide(p)).collect();
                let mut next = Vec::with_capacity(2 * frontier.len());
                for (p, d) in frontier.into_iter().zip(decisions) {
                    if let Some(children) = builder.apply(p, d?, config.max_leaves) {
                        next.extend(children);
                    }
                }
                frontier = next;
            }
        }
        Traversal::Lifo => {
            let mut stack = vec![root];
            while let Some(p) = stack.pop() {
                let d = ctx.decide(&p)?;
                if let Some([lower, upper]) = builder.apply(p, d, config.max_leaves) {
                    stack.push(upper);
                    stack.push(lower);
                }
            }
        }
        Traversal::Restart => {
            // Scan from the first leaf; split the first one that fails, put
            // its lower half in place and its upper half at the end, rescan.
            let mut list: Vec<(Pending, bool)> = vec![(root, false)];
            while let Some(l) = list.iter().position(|(_, done)| !done) {
                match ctx.decide(&list[l].0)? {
                    Decision::Keep => list[l].1 = true,
                    split => {
                        let (p, _) = list.remove(l);
                        if let Some([lower, upper]) = builder.apply(p, split, config.max_leaves) {
                            list.insert(l, (lower, false));
                            list.push((upper, false));
                        }
                    }
                }
            }
            for (p, _) in list {
                builder.apply(p, Decision::Keep, config.max_leaves);
            }
        }
    }

    finish(builder, domain, samples.len())
}

fn finish(builder: Builder, domain: &AxisBox, total_n: usize) -> Result<PiecewiseConstantDensity> {
    let raw: Vec<Node> = builder
        .nodes
        .into_iter()
        .map(|n| n.expect("every node resolved"))
        .collect();
    // renumber nodes and leaves in depth-first order so that the layout
    // does not depend on the order in which leaves were processed
    let mut order = Vec::with_capacity(builder.kept.len());
    let mut nodes = Vec::with_capacity(raw.len());
    let mut stack = vec![(0usize, None::<(usize, bool)>)];
    while let Some((i, parent)) = stack.pop() {
        let here = nodes.len();
        if let Some((p, is_upper)) = parent {
            if let Node::Split { lower, upper, .. } = &mut nodes[p] {
                *(if is_upper { upper } else { lower }) = here;
            }
        }
        match raw[i] {
            Node::Leaf(slot) => {
                nodes.push(Node::Leaf(order.len()));
                order.push(slot);
            }
            Node::Split {
                axis,
                value,
                lower,
                upper,
            } => {
                nodes.push(Node::Split {
                    axis,
                    value,
                    lower: 0,
                    upper: 0,
                });
                stack.push((upper, Some((here, true))));
                stack.push((lower, Some((here, false))));
            }
        }
    }
    let mut rank = vec![0usize; builder.kept.len()];
    for (r, &slot) in order.iter().enumerate() {
        rank[slot] = r;
    }
    let nf = total_n as f64;
    let mut leaves: Vec<Option<Leaf>> = vec![None; builder.kept.len()];
    for (slot, (_, bounds, count)) in builder.kept.into_iter().enumerate() {
        let density = count as f64 / (nf * bounds.volume());
        leaves[rank[slot]] = Some(Leaf {
            bounds,
            density,
            count,
        });
    }
    Ok(PiecewiseConstantDensity {
        domain: domain.clone(),
        total_n,
        leaves: leaves.into_iter().map(|l| l.expect("leaf")).collect(),
        nodes,
        truncated: builder.truncated,
    })
}

/// Structural checks on an estimator against the samples it was built
/// from: mass, counts, and `lookups` random points that must each fall in
/// exactly one leaf.
pub fn verify_partition(
    pcd: &PiecewiseConstantDensity,
    samples: &SampleSet,
    lookups: usize,
    seed: u64,
) -> std::result::Result<(), String> {
    use rand::{Rng, SeedableRng};

    let mass = pcd.total_mass();
    if (mass - 1.0).abs() > 1e-10 {
        return Err(format!("total mass {mass} != 1"));
    }
    let counted: usize = pcd.leaves().iter().map(|l| l.count).sum();
    if counted != samples.len() {
        return Err(format!(
            "leaf counts sum to {counted}, expected {}",
            samples.len()
        ));
    }
    let domain = pcd.domain();
    let flags: Vec<Vec<bool>> = pcd
        .leaves()
        .iter()
        .map(|l| l.bounds.upper_flags_within(domain))
        .collect();
    let hits = |p: &[f64]| -> std::result::Result<usize, String> {
        let mut found = 0;
        for (l, f) in pcd.leaves().iter().zip(&flags) {
            if l.bounds.contains(p, f).map_err(|e| e.to_string())? {
                found += 1;
            }
        }
        Ok(found)
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = domain.dim();
    let mut p = vec![0.0; d];
    for t in 0..lookups {
        for j in 0..d {
            // every fourth probe snaps a coordinate to a leaf face
            p[j] = if t % 4 == 3 {
                let leaf = &pcd.leaves()[rng.random_range(0..pcd.leaf_count())];
                if rng.random_bool(0.5) {
                    leaf.bounds.lo()[j]
                } else {
                    leaf.bounds.hi()[j]
                }
            } else {
                domain.lo()[j] + rng.random::<f64>() * domain.width(j)
            };
        }
        let found = hits(&p)?;
        if found != 1 {
            return Err(format!("point {p:?} is in {found} leaves"));
        }
        let via_tree = pcd.locate(&p).map_err(|e| e.to_string())?;
        if !pcd.leaves()[via_tree]
            .bounds
            .contains(&p, &flags[via_tree])
            .map_err(|e| e.to_string())?
        {
            return Err(format!(
                "tree lookup of {p:?} returned a leaf not containing it"
            ));
        }
    }
    for (i, row) in samples.rows().enumerate() {
        let leaf = pcd.locate(row).map_err(|e| e.to_string())?;
        if !pcd.leaves()[leaf]
            .bounds
            .contains(row, &flags[leaf])
            .unwrap_or(false)
        {
            return Err(format!(
                "sample {i} located in a leaf that does not contain it"
            ));
        }
    }
    Ok(())
}
