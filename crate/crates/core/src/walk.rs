//! Witness-free core sampling by lazy expander walks, and closeness checks
//! between "graph first" and "core first" sampling orders.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::graph::{ColoredGraph, QueryContext};
use crate::rng::{stream_rng, LabRng};
use crate::sampler::{sample_pml, DistributionParams, SampleOutcome};
use crate::stats::{binomial_sigma, bonferroni_z, tvd_with_uncertainty, Estimate, TvdReport};

pub const WALK_LABEL: &str = "walk";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkSampleParams {
    /// Target core size.
    pub m: usize,
    /// Lazy steps between retained vertices.
    pub t: usize,
    /// Retained vertices.
    pub r: usize,
}

impl WalkSampleParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.t == 0 || self.r < self.m {
            return Err(LabError::Params(format!("need m >= 1, t >= 1, r >= m: {self:?}")));
        }
        Ok(())
    }

    /// r = 100 m and t = ceil(N^0.02).
    pub fn asymptotic_schedule(m: usize, n: usize) -> Self {
        Self { m, t: ((n as f64).powf(0.02).ceil() as usize).max(1), r: 100 * m }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FSampleOutcome {
    /// First `m` distinct retained vertices, or `None` on abort.
    pub f_prime: Option<Vec<usize>>,
    pub v0: usize,
    pub retained: Vec<usize>,
    pub moves: u64,
}

impl FSampleOutcome {
    pub fn aborted(&self) -> bool {
        self.f_prime.is_none()
    }
}

/// Walk from `v0`, retaining every `t`-th vertex starting with `v0` itself.
/// Each non-lazy step is one oracle query.
pub fn walk_from(
    ctx: &mut QueryContext,
    g: &ColoredGraph,
    v0: usize,
    params: &WalkSampleParams,
    rng: &mut LabRng,
) -> Result<FSampleOutcome> {
    params.validate()?;
    g.check(v0, 0)?;
    let d = g.degree();
    let mut oracle = ctx.oracle(g, WALK_LABEL);
    let mut v = v0;
    let mut retained = Vec::with_capacity(params.r);
    retained.push(v0);
    let mut moves = 0u64;
    for _ in 1..params.r {
        for _ in 0..params.t {
            if rng.random::<bool>() {
                v = oracle.neighbor(v, rng.random_range(0..d))?;
                moves += 1;
            }
        }
        retained.push(v);
    }
    let mut seen = vec![false; g.n_vertices()];
    let mut f = Vec::with_capacity(params.m);
    for &x in &retained {
        if !seen[x] {
            seen[x] = true;
            f.push(x);
            if f.len() == params.m {
                break;
            }
        }
    }
    let f_prime = (f.len() == params.m).then_some(f);
    Ok(FSampleOutcome { f_prime, v0, retained, moves })
}

/// The walk sampler with a uniform start vertex.
pub fn expander_walk_sample_f(
    ctx: &mut QueryContext,
    g: &ColoredGraph,
    params: &WalkSampleParams,
    rng: &mut LabRng,
) -> Result<FSampleOutcome> {
    let v0 = rng.random_range(0..g.n_vertices());
    walk_from(ctx, g, v0, params, rng)
}

/// delta = (1 - alpha/2)^t.
pub fn walk_delta(alpha: f64, t: usize) -> f64 {
    (1.0 - alpha / 2.0).powi(t as i32)
}

/// exp(-r/16) + 10 r K delta.
pub fn abort_envelope(r: usize, k: usize, delta: f64) -> f64 {
    (-(r as f64) / 16.0).exp() + 10.0 * r as f64 * k as f64 * delta
}

/// rK delta + (rK delta)^2 / (1 - rK delta); `None` when rK delta >= 1.
pub fn event_deviation_bound(r: usize, k: usize, delta: f64) -> Option<f64> {
    let x = r as f64 * k as f64 * delta;
    (x < 1.0).then(|| x + x * x / (1.0 - x))
}

/// t = ceil(2 ln N / alpha).
pub fn log_schedule_t(n: usize, alpha: f64) -> usize {
    ((2.0 * (n as f64).ln() / alpha).ceil() as usize).max(1)
}

/// Smallest t with r K (1 - alpha/2)^t <= target.
pub fn t_for_target(r: usize, k: usize, alpha: f64, target: f64) -> usize {
    let need = (target / (r as f64 * k as f64)).ln() / (1.0 - alpha / 2.0).ln();
    (need.ceil() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub trials: usize,
    pub component_size: usize,
    pub aborts: usize,
    /// Bound on |Pr_walk[E] - Pr_unif[E]| for any event; `None` when the
    /// regime condition rK delta < 1 fails.
    pub bound: Option<f64>,
    pub regime_violation: bool,
    pub max_vertex_deviation: f64,
    pub max_pair_deviation: f64,
    /// Largest |deviation| / sigma over all features.
    pub max_z: f64,
    /// Critical value used for the simultaneous check.
    pub z_crit: f64,
    /// Largest |deviation| - z_crit sigma over all features.
    pub max_excess: f64,
    pub pass: bool,
}

impl DeviationReport {
    /// Whether every feature is within `allowance + z_crit sigma`.
    pub fn within(&self, allowance: f64) -> bool {
        self.max_excess <= allowance
    }
}

/// Compares inclusion and co-inclusion frequencies of walk-sampled cores
/// inside `component` with those of a uniform m-subset.
pub fn walk_vs_uniform_deviation(
    g: &ColoredGraph,
    component: &[usize],
    params: &WalkSampleParams,
    alpha: f64,
    n_trials: usize,
    rng: &mut LabRng,
) -> Result<DeviationReport> {
    params.validate()?;
    let k = component.len();
    if k < params.m || k < 2 {
        return Err(LabError::Params("component smaller than the core".into()));
    }
    let mut local = vec![usize::MAX; g.n_vertices()];
    for (i, &v) in component.iter().enumerate() {
        local[v] = i;
    }
    let mut ctx = QueryContext::new();
    let mut single = vec![0u64; k];
    let mut pair = vec![0u64; k * k];
    let mut aborts = 0;
    for _ in 0..n_trials {
        let v0 = *component.choose(rng).expect("nonempty");
        let out = walk_from(&mut ctx, g, v0, params, rng)?;
        let Some(f) = out.f_prime else {
            aborts += 1;
            continue;
        };
        let ids: Vec<usize> = f.iter().map(|&v| local[v]).collect();
        if ids.contains(&usize::MAX) {
            return Err(LabError::Params("walk left the supplied component".into()));
        }
        for (a, &i) in ids.iter().enumerate() {
            single[i] += 1;
            for &j in &ids[a + 1..] {
                let (x, y) = if i < j { (i, j) } else { (j, i) };
                pair[x * k + y] += 1;
            }
        }
    }
    let m = params.m as f64;
    let kf = k as f64;
    let p_single = m / kf;
    let p_pair = m * (m - 1.0) / (kf * (kf - 1.0));
    let features = k + k * (k - 1) / 2;
    let z_crit = bonferroni_z(0.0027, features);
    let nt = n_trials as f64;
    let (s_single, s_pair) = (binomial_sigma(p_single, n_trials), binomial_sigma(p_pair, n_trials));
    let mut max_vertex_deviation: f64 = 0.0;
    let mut max_pair_deviation: f64 = 0.0;
    let mut max_z: f64 = 0.0;
    let mut max_excess = f64::NEG_INFINITY;
    for &c in &single {
        let dev = (c as f64 / nt - p_single).abs();
        max_vertex_deviation = max_vertex_deviation.max(dev);
        max_z = max_z.max(dev / s_single);
        max_excess = max_excess.max(dev - z_crit * s_single);
    }
    if params.m >= 2 {
        for i in 0..k {
            for j in (i + 1)..k {
                let dev = (pair[i * k + j] as f64 / nt - p_pair).abs();
                max_pair_deviation = max_pair_deviation.max(dev);
                max_z = max_z.max(dev / s_pair);
                max_excess = max_excess.max(dev - z_crit * s_pair);
            }
        }
    }
    let delta = walk_delta(alpha, params.t);
    let bound = event_deviation_bound(params.r, k, delta);
    // Uniform iid sampling may itself abort with probability <= exp(-r/16).
    let allowance = bound.map(|b| b + (-(params.r as f64) / 16.0).exp());
    Ok(DeviationReport {
        trials: n_trials,
        component_size: k,
        aborts,
        bound,
        regime_violation: bound.is_none(),
        max_vertex_deviation,
        max_pair_deviation,
        max_z,
        z_crit,
        max_excess,
        pass: allowance.is_none_or(|a| max_excess <= a),
    })
}

/// A projected feature value; special atoms keep aborts visible.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    Abort,
    /// The core could not be drawn (component smaller than m).
    Short,
    Empty,
    Split,
    Bin(i64),
}

fn standardized_bin(x: f64, centre: f64, scale: f64, width: f64) -> i64 {
    ((x - centre) / (scale * width)).round().clamp(-12.0, 12.0) as i64
}

struct PairDraw {
    f: Option<Vec<usize>>,
    outcome: SampleOutcome,
}

fn features(params: &DistributionParams, draw: &PairDraw) -> [Feature; 4] {
    let o = &draw.outcome;
    let z = params.z();
    let sd = (z * (1.0 - 1.0 / params.l as f64)).sqrt().max(1.0);
    let parts = o.graph().components();
    let count = if o.aborted { Feature::Abort } else { Feature::Bin(parts.count().min(params.l + 2) as i64) };
    let (size, pattern, weight) = match (&draw.f, o.aborted) {
        (_, true) => (Feature::Abort, Feature::Abort, Feature::Abort),
        (None, false) => (Feature::Short, Feature::Short, Feature::Short),
        (Some(f), false) if f.is_empty() => (Feature::Empty, Feature::Empty, Feature::Empty),
        (Some(f), false) => {
            let mut labels: Vec<usize> = f.iter().map(|&v| parts.label(v)).collect();
            labels.sort_unstable();
            labels.dedup();
            let size = if labels.len() == 1 {
                Feature::Bin(standardized_bin(parts.sizes[labels[0]] as f64, z, sd, 0.5))
            } else {
                Feature::Split
            };
            let block = o.k_map[f[0]];
            let w = o.k_map.iter().filter(|&&k| k == block).count();
            (size, Feature::Bin(labels.len() as i64), Feature::Bin(standardized_bin(w as f64, z, sd, 0.5)))
        }
    };
    [size, pattern, count, weight]
}

pub const FEATURE_NAMES: [&str; 4] = ["core_component_size", "core_component_count", "component_count", "core_block_weight"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTvd {
    pub name: String,
    pub report: TvdReport,
    /// Point TVD minus the permutation reference level.
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightCheck {
    pub d1: Estimate,
    pub d1_expected: f64,
    pub d2: Estimate,
    pub d2_expected: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    pub n: usize,
    pub l: usize,
    pub m: usize,
    pub samples: usize,
    pub features: Vec<FeatureTvd>,
    pub max_tvd: f64,
    pub max_excess: f64,
    pub abort_rate_d1: f64,
    pub abort_rate_d2: f64,
    /// Size of block 0 in the transcripts.
    pub block0_weight: WeightCheck,
}

/// D1: G from P_{M,l}, then F uniform inside the component of a uniform
/// vertex. D2: F uniform in [N], then G from P_{M,l}(F). Sample `i` of each
/// side uses its own stream of `seed`, so the result is independent of
/// thread scheduling.
pub fn compare_f_then_g_vs_g_then_f(
    params: &DistributionParams,
    m: usize,
    n_samples: usize,
    seed: u64,
    resamples: usize,
) -> Result<ClosenessReport> {
    let base = params.with_f(Vec::new());
    base.validate()?;
    if m > base.zeta() || m > base.n {
        return Err(LabError::Params(format!("m={m} too large")));
    }
    let draw_d1 = |i: usize| -> Result<PairDraw> {
        let mut rng = stream_rng(seed, 2 * i as u64);
        let outcome = sample_pml(&base, &mut rng)?;
        let v = rng.random_range(0..base.n);
        let parts = outcome.graph().components();
        let mut comp = parts.members(parts.label(v));
        let f = if comp.len() < m {
            None
        } else {
            let (chosen, _) = comp.partial_shuffle(&mut rng, m);
            let mut f = chosen.to_vec();
            f.sort_unstable();
            Some(f)
        };
        Ok(PairDraw { f, outcome })
    };
    let draw_d2 = |i: usize| -> Result<PairDraw> {
        let mut rng = stream_rng(seed, 2 * i as u64 + 1);
        let mut all: Vec<usize> = (0..base.n).collect();
        let (chosen, _) = all.partial_shuffle(&mut rng, m);
        let mut f = chosen.to_vec();
        f.sort_unstable();
        let outcome = sample_pml(&base.with_f(f.clone()), &mut rng)?;
        Ok(PairDraw { f: Some(f), outcome })
    };
    let summarize = |d: &PairDraw| (features(&base, d), d.outcome.aborted, d.outcome.block_sizes(base.l)[0]);
    let d1: Vec<_> = (0..n_samples).into_par_iter().map(|i| draw_d1(i).map(|d| summarize(&d))).collect::<Result<_>>()?;
    let d2: Vec<_> = (0..n_samples).into_par_iter().map(|i| draw_d2(i).map(|d| summarize(&d))).collect::<Result<_>>()?;

    let mut rng = stream_rng(seed, u64::MAX);
    let mut feats = Vec::new();
    for (fi, name) in FEATURE_NAMES.iter().enumerate() {
        let a: Vec<Feature> = d1.iter().map(|x| x.0[fi]).collect();
        let b: Vec<Feature> = d2.iter().map(|x| x.0[fi]).collect();
        let report = tvd_with_uncertainty(&a, &b, resamples, &mut rng);
        let excess = report.tvd - report.null_mean;
        feats.push(FeatureTvd { name: name.to_string(), report, excess });
    }
    let rate = |v: &[([Feature; 4], bool, usize)]| v.iter().filter(|x| x.1).count() as f64 / v.len().max(1) as f64;
    let w1: Vec<f64> = d1.iter().map(|x| x.2 as f64).collect();
    let w2: Vec<f64> = d2.iter().map(|x| x.2 as f64).collect();
    let (e1, e2) = (Estimate::from_values(&w1)?, Estimate::from_values(&w2)?);
    let nf = base.n as f64;
    let lf = base.l as f64;
    let (x1, x2) = (nf / lf, m as f64 + (nf - m as f64) / lf);
    let ok = |e: &Estimate, x: f64| (e.mean - x).abs() <= 3.0 * e.stderr.max(1e-12);
    Ok(ClosenessReport {
        n: base.n,
        l: base.l,
        m,
        samples: n_samples,
        max_tvd: feats.iter().map(|f| f.report.tvd).fold(0.0, f64::max),
        max_excess: feats.iter().map(|f| f.excess).fold(f64::NEG_INFINITY, f64::max),
        features: feats,
        abort_rate_d1: rate(&d1),
        abort_rate_d2: rate(&d2),
        block0_weight: WeightCheck { pass: ok(&e1, x1) && ok(&e2, x2), d1: e1, d1_expected: x1, d2: e2, d2_expected: x2 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_core_vertex_never_aborts() {
        let g = ColoredGraph::cycle(16).unwrap();
        let p = WalkSampleParams { m: 1, t: 3, r: 5 };
        let mut ctx = QueryContext::new();
        let mut rng = stream_rng(1, 0);
        for _ in 0..20 {
            let o = expander_walk_sample_f(&mut ctx, &g, &p, &mut rng).unwrap();
            assert_eq!(o.f_prime, Some(vec![o.v0]));
        }
    }

    #[test]
    fn self_loop_graph_always_aborts() {
        let g = ColoredGraph::self_loops(8, 3);
        let p = WalkSampleParams { m: 2, t: 4, r: 10 };
        let mut ctx = QueryContext::new();
        let mut rng = stream_rng(2, 0);
        for _ in 0..20 {
            assert!(expander_walk_sample_f(&mut ctx, &g, &p, &mut rng).unwrap().aborted());
        }
    }

    #[test]
    fn bounds_and_schedules() {
        assert_eq!(event_deviation_bound(10, 10, 0.01), None);
        let b = event_deviation_bound(10, 10, 0.005).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
        let t = t_for_target(400, 256, 0.3, 0.5);
        assert!(400.0 * 256.0 * walk_delta(0.3, t) <= 0.5);
        assert!(400.0 * 256.0 * walk_delta(0.3, t - 1) > 0.5);
    }
}
