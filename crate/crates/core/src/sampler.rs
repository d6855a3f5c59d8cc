//! Block-structured random graph distributions and the triangle statistic.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{LabError, Result};
use crate::graph::{ColoredGraph, ComponentPartition};
use crate::rng::{Coins, LabRng};

/// Parameters of P_{M,l}(F).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionParams {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub d: usize,
    #[serde(default)]
    pub f: Vec<usize>,
}

impl DistributionParams {
    pub fn validate(&self) -> Result<()> {
        let p = |m: String| Err(LabError::Params(m));
        if self.n == 0 || self.d == 0 || self.l == 0 {
            return p(format!("N, d, l must be positive ({self:?})"));
        }
        if self.m < self.n {
            return p(format!("M={} < N={}", self.m, self.n));
        }
        if self.m % self.l != 0 {
            return p(format!("l={} does not divide M={}", self.l, self.m));
        }
        if self.zeta() % 2 != 0 {
            return p(format!("block size M/l={} is odd", self.zeta()));
        }
        if self.f.len() > self.zeta() {
            return p(format!("|F|={} exceeds block size {}", self.f.len(), self.zeta()));
        }
        let mut seen = vec![false; self.n];
        for &v in &self.f {
            if v >= self.n || seen[v] {
                return p(format!("F contains {v} twice or out of range"));
            }
            seen[v] = true;
        }
        Ok(())
    }

    /// z = N / l.
    pub fn z(&self) -> f64 {
        self.n as f64 / self.l as f64
    }

    /// zeta = M / l, the block size.
    pub fn zeta(&self) -> usize {
        self.m / self.l
    }

    pub fn with_f(&self, f: Vec<usize>) -> Self {
        Self { f, ..self.clone() }
    }

    pub fn with_l(&self, l: usize) -> Self {
        Self { l, ..self.clone() }
    }
}

/// Named constant sets. `gamma` fixes both M and the component size window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub l: usize,
    pub gamma: f64,
}

impl Preset {
    /// d = 8, l = 4, gamma = 5/16.
    pub fn desk(n: usize) -> Self {
        Self { name: "desk".into(), n, d: 8, l: 4, gamma: 5.0 / 16.0 }
    }

    /// d = 100, l = N^(1/10), gamma = N^(-1/10).
    pub fn asymptotic(n: usize) -> Self {
        let root = (n as f64).powf(0.1);
        Self {
            name: "asymptotic".into(),
            n,
            d: 100,
            l: (root.round() as usize).max(1),
            gamma: 1.0 / root,
        }
    }

    pub fn by_name(name: &str, n: usize) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk(n)),
            "asymptotic" => Ok(Self::asymptotic(n)),
            other => Err(LabError::Params(format!("unknown preset {other:?}"))),
        }
    }

    /// Smallest multiple of 2l that is at least (1+gamma)N.
    pub fn m(&self) -> usize {
        let step = 2 * self.l;
        let target = (1.0 + self.gamma) * self.n as f64;
        let k = ((target - 1e-9) / step as f64).ceil().max(1.0) as usize;
        k * step
    }

    pub fn params(&self, f: Vec<usize>) -> DistributionParams {
        DistributionParams { n: self.n, m: self.m(), l: self.l, d: self.d, f }
    }

    /// Integer size range [(1-gamma)z, (1+gamma)z].
    pub fn window(&self) -> (usize, usize) {
        size_window(self.n, self.l, self.gamma)
    }
}

pub fn size_window(n: usize, l: usize, gamma: f64) -> (usize, usize) {
    let z = n as f64 / l as f64;
    let lo = ((1.0 - gamma) * z - 1e-9).ceil().max(0.0) as usize;
    let hi = ((1.0 + gamma) * z + 1e-9).floor() as usize;
    (lo, hi)
}

/// A sampled graph with its generation transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutcome {
    pub graph: ColoredGraph,
    pub k_map: Vec<u32>,
    pub iota: Option<Vec<u32>>,
    pub aborted: bool,
    pub coins: Coins,
}

/// Serializable transcript of a draw, without the graph itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub k_map: Vec<u32>,
    pub iota: Option<Vec<u32>>,
    pub aborted: bool,
    pub coins: Coins,
}

impl SampleOutcome {
    pub fn graph(&self) -> &ColoredGraph {
        &self.graph
    }

    pub fn transcript(&self) -> Transcript {
        Transcript {
            k_map: self.k_map.clone(),
            iota: self.iota.clone(),
            aborted: self.aborted,
            coins: self.coins.clone(),
        }
    }

    /// Vertices assigned to block `b`.
    pub fn block(&self, b: usize) -> Vec<usize> {
        (0..self.k_map.len()).filter(|&j| self.k_map[j] as usize == b).collect()
    }

    pub fn block_sizes(&self, l: usize) -> Vec<usize> {
        let mut s = vec![0; l];
        for &k in &self.k_map {
            s[k as usize] += 1;
        }
        s
    }
}

/// Result of a sampler with a retry budget.
#[derive(Clone, Debug, PartialEq)]
pub enum Retry<T> {
    Accepted { value: T, tries: usize },
    Exhausted { tries: usize },
}

impl<T> Retry<T> {
    pub fn accepted(self) -> Option<T> {
        match self {
            Retry::Accepted { value, .. } => Some(value),
            Retry::Exhausted { .. } => None,
        }
    }

    pub fn tries(&self) -> usize {
        match self {
            Retry::Accepted { tries, .. } | Retry::Exhausted { tries } => *tries,
        }
    }
}

fn random_matching<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..size).collect();
    order.shuffle(rng);
    order
}

/// Union of d independent uniform perfect matchings on `block_size` vertices.
pub fn sample_block_graph<R: Rng + ?Sized>(block_size: usize, d: usize, rng: &mut R) -> Result<ColoredGraph> {
    if block_size < 2 || block_size % 2 != 0 {
        return Err(LabError::Params(format!("block size {block_size} must be even and >= 2")));
    }
    let mut adj = vec![0u32; block_size * d];
    for c in 0..d {
        let order = random_matching(block_size, rng);
        for pair in order.chunks_exact(2) {
            adj[pair[0] * d + c] = pair[1] as u32;
            adj[pair[1] * d + c] = pair[0] as u32;
        }
    }
    ColoredGraph::new(block_size, d, adj)
}

/// One draw from P_{M,l}(F). Block 0 plays the role of the block that must
/// hold F. An overflowing block aborts with the all-self-loop graph.
pub fn sample_pml(params: &DistributionParams, rng: &mut LabRng) -> Result<SampleOutcome> {
    params.validate()?;
    let (n, d, l, zeta) = (params.n, params.d, params.l, params.zeta());
    let mark = Coins::begin(rng);

    let mut super_adj = vec![0u32; params.m * d];
    for b in 0..l {
        let base = b * zeta;
        for c in 0..d {
            let order = random_matching(zeta, rng);
            for pair in order.chunks_exact(2) {
                let (x, y) = (base + pair[0], base + pair[1]);
                super_adj[x * d + c] = y as u32;
                super_adj[y * d + c] = x as u32;
            }
        }
    }

    let mut k_map = vec![u32::MAX; n];
    for &v in &params.f {
        k_map[v] = 0;
    }
    for slot in k_map.iter_mut() {
        if *slot == u32::MAX {
            *slot = rng.random_range(0..l as u32);
        }
    }

    let mut members = vec![Vec::new(); l];
    for (j, &k) in k_map.iter().enumerate() {
        members[k as usize].push(j);
    }
    if members.iter().any(|m| m.len() > zeta) {
        let coins = mark.finish(rng);
        return Ok(SampleOutcome {
            graph: ColoredGraph::self_loops(n, d),
            k_map,
            iota: None,
            aborted: true,
            coins,
        });
    }

    let mut iota = vec![0u32; n];
    let mut pre = vec![u32::MAX; params.m];
    let mut slots: Vec<usize> = (0..zeta).collect();
    for (b, mem) in members.iter().enumerate() {
        slots.sort_unstable();
        let (chosen, _) = slots.partial_shuffle(rng, mem.len());
        for (&j, &s) in mem.iter().zip(chosen.iter()) {
            let sv = b * zeta + s;
            iota[j] = sv as u32;
            pre[sv] = j as u32;
        }
    }

    let mut adj = vec![0u32; n * d];
    for j in 0..n {
        let sv = iota[j] as usize;
        for c in 0..d {
            let t = pre[super_adj[sv * d + c] as usize];
            adj[j * d + c] = if t == u32::MAX { j as u32 } else { t };
        }
    }
    let coins = mark.finish(rng);
    Ok(SampleOutcome {
        graph: ColoredGraph::new(n, d, adj)?,
        k_map,
        iota: Some(iota),
        aborted: false,
        coins,
    })
}

/// True when some connected component lies inside `s` (G ◁ S).
pub fn has_component_inside(parts: &ComponentPartition, s: &[usize]) -> bool {
    let mut inside = vec![0usize; parts.count()];
    for &v in s {
        inside[parts.label(v)] += 1;
    }
    inside.iter().zip(&parts.sizes).any(|(a, b)| a == b)
}

/// Rejection sampler for B_S: draws from P_{M,l} with F empty until a
/// non-aborted graph has a component inside `s`.
pub fn sample_bs(
    params: &DistributionParams,
    s: &[usize],
    rng: &mut LabRng,
    max_retries: usize,
) -> Result<Retry<SampleOutcome>> {
    if s.len() != params.zeta() {
        return Err(LabError::Params(format!("|S|={} but zeta={}", s.len(), params.zeta())));
    }
    if s.iter().any(|&v| v >= params.n) {
        return Err(LabError::Params("S not inside [N]".into()));
    }
    let base = params.with_f(Vec::new());
    for tries in 1..=max_retries {
        let out = sample_pml(&base, rng)?;
        if !out.aborted && has_component_inside(&out.graph().components(), s) {
            return Ok(Retry::Accepted { value: out, tries });
        }
    }
    Ok(Retry::Exhausted { tries: max_retries })
}

/// Rejection sampler for a predicate on the sampled graph and its components.
pub fn condition_on_profile<P>(
    params: &DistributionParams,
    rng: &mut LabRng,
    predicate: P,
    max_retries: usize,
) -> Result<Retry<SampleOutcome>>
where
    P: Fn(&SampleOutcome, &ComponentPartition) -> bool,
{
    for tries in 1..=max_retries {
        let out = sample_pml(params, rng)?;
        let parts = out.graph().components();
        if predicate(&out, &parts) {
            return Ok(Retry::Accepted { value: out, tries });
        }
    }
    Ok(Retry::Exhausted { tries: max_retries })
}

/// Ready-made profile predicates.
pub mod profile {
    use super::SampleOutcome;
    use crate::graph::ComponentPartition;

    pub fn always(_: &SampleOutcome, _: &ComponentPartition) -> bool {
        true
    }

    pub fn connected(o: &SampleOutcome, p: &ComponentPartition) -> bool {
        !o.aborted && p.is_connected()
    }

    pub fn exactly(l: usize) -> impl Fn(&SampleOutcome, &ComponentPartition) -> bool {
        move |o, p| !o.aborted && p.count() == l
    }

    /// Exactly `l` components, each with size in `[lo, hi]`.
    pub fn good(l: usize, lo: usize, hi: usize) -> impl Fn(&SampleOutcome, &ComponentPartition) -> bool {
        move |o, p| !o.aborted && p.count() == l && p.sizes.iter().all(|&s| lo <= s && s <= hi)
    }
}

/// A B̃_S draw obtained by planting S around a component, with the
/// importance weight that turns the planted law into the uniform mixture
/// over S of B̃_S.
#[derive(Clone, Debug)]
pub struct PlantedBs {
    pub outcome: SampleOutcome,
    pub s: Vec<usize>,
    pub log_weight: f64,
}

/// Draws G from P_{M,l} restricted to good profiles, picks a component C
/// of size at most zeta uniformly and fills S = C plus uniform extra
/// vertices. The weight is 1 / q(S | G) where q sums over every component
/// inside S.
pub fn sample_bs_tilde_planted(
    params: &DistributionParams,
    window: (usize, usize),
    rng: &mut LabRng,
    max_retries: usize,
) -> Result<Retry<PlantedBs>> {
    let base = params.with_f(Vec::new());
    let (n, zeta) = (base.n, base.zeta());
    if zeta > n {
        return Err(LabError::Params("zeta exceeds N".into()));
    }
    let good = profile::good(base.l, window.0, window.1);
    let drawn = condition_on_profile(&base, rng, &good, max_retries)?;
    let tries = drawn.tries();
    let Some(outcome) = drawn.accepted() else {
        return Ok(Retry::Exhausted { tries });
    };
    let parts = outcome.graph().components();
    let eligible: Vec<usize> = (0..parts.count()).filter(|&c| parts.sizes[c] <= zeta).collect();
    if eligible.is_empty() {
        return Ok(Retry::Exhausted { tries });
    }
    let c = eligible[rng.random_range(0..eligible.len())];
    let mut s = parts.members(c);
    let mut rest: Vec<usize> = (0..n).filter(|&v| parts.label(v) != c).collect();
    let extra = zeta - s.len();
    let (fill, _) = rest.partial_shuffle(rng, extra);
    s.extend_from_slice(fill);
    s.sort_unstable();

    let mut inside = vec![0usize; parts.count()];
    for &v in &s {
        inside[parts.label(v)] += 1;
    }
    let ln_c = (eligible.len() as f64).ln();
    let terms: Vec<f64> = eligible
        .iter()
        .filter(|&&e| inside[e] == parts.sizes[e])
        .map(|&e| {
            let size = parts.sizes[e] as u64;
            -ln_c - ln_binomial(n as u64 - size, zeta as u64 - size)
        })
        .collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ln_q = top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();
    Ok(Retry::Accepted { value: PlantedBs { outcome, s, log_weight: -ln_q }, tries })
}

/// Triangle count of the underlying simple graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriangleReport {
    pub count: u64,
    pub per_component: Vec<u64>,
}

pub fn triangle_count(g: &ColoredGraph) -> TriangleReport {
    let parts = g.components();
    let nbrs: Vec<Vec<usize>> = (0..g.n_vertices()).map(|j| g.simple_neighbors(j)).collect();
    let mut per_component = vec![0u64; parts.count()];
    for a in 0..g.n_vertices() {
        for &b in nbrs[a].iter().filter(|&&b| b > a) {
            for &c in nbrs[b].iter().filter(|&&c| c > b) {
                if nbrs[a].binary_search(&c).is_ok() {
                    per_component[parts.label(a)] += 1;
                }
            }
        }
    }
    TriangleReport { count: per_component.iter().sum(), per_component }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn desk_preset_constants() {
        let p = Preset::desk(256);
        assert_eq!(p.m(), 336);
        assert_eq!(p.params(vec![]).zeta(), 84);
        assert_eq!(p.window(), (44, 84));
    }

    #[test]
    fn two_vertex_block_is_forced() {
        let mut rng = stream_rng(1, 0);
        let g = sample_block_graph(2, 3, &mut rng).unwrap();
        for c in 0..3 {
            assert_eq!(g.follow(0, c), 1);
        }
        assert!(sample_block_graph(3, 1, &mut rng).is_err());
    }

    #[test]
    fn single_block_never_aborts() {
        let params = DistributionParams { n: 16, m: 16, l: 1, d: 3, f: vec![] };
        let mut rng = stream_rng(2, 0);
        for _ in 0..50 {
            let o = sample_pml(&params, &mut rng).unwrap();
            assert!(!o.aborted);
            assert_eq!(o.graph().self_loop_count(), 0);
        }
    }

    #[test]
    fn aborted_sample_is_all_self_loops() {
        let params = DistributionParams { n: 8, m: 8, l: 2, d: 2, f: vec![0, 1] };
        let mut rng = stream_rng(3, 0);
        let o = (0..100)
            .map(|_| sample_pml(&params, &mut rng).unwrap())
            .find(|o| o.aborted)
            .expect("aborts are common here");
        assert_eq!(o.graph(), &ColoredGraph::self_loops(8, 2));
        assert!(o.iota.is_none());
    }

    #[test]
    fn triangles_of_k4() {
        assert_eq!(triangle_count(&ColoredGraph::complete4()).count, 4);
        assert_eq!(triangle_count(&ColoredGraph::self_loops(5, 2)).count, 0);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut rng = stream_rng(0, 0);
        let odd = DistributionParams { n: 6, m: 6, l: 2, d: 2, f: vec![] };
        assert!(sample_pml(&odd, &mut rng).is_err());
        let big_f = DistributionParams { n: 8, m: 8, l: 4, d: 2, f: vec![0, 1, 2] };
        assert!(sample_pml(&big_f, &mut rng).is_err());
    }
}
