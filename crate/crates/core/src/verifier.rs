//! Two-query walk verifier: witnesses, closed-form and state-vector
//! acceptance, the optimal witness and repetition.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{LabError, Result};
use crate::graph::{ColoredGraph, QueryContext};
use crate::linalg::symmetric_eigenvalues;
use crate::scalar::{dot, norm_sq, Real};
use crate::spectral::{apply_into, normalized_adjacency_dense, normalized_adjacency_apply};
use crate::stats::Estimate;

/// Oracle queries one run of the verifier makes.
pub const QUERIES_PER_RUN: u64 = 2;
pub const VERIFIER_LABEL: &str = "verifier";

/// Unit vector of real amplitudes over the vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessState<T> {
    amps: Vec<T>,
}

impl<T: Real> WitnessState<T> {
    /// Accepts a vector whose norm is 1 up to `sqrt(eps)`, then renormalizes.
    pub fn new(amps: Vec<T>) -> Result<Self> {
        let nrm = norm_sq(&amps).sqrt();
        if amps.is_empty() || (nrm - T::one()).abs() > T::epsilon().sqrt() {
            return Err(LabError::Params(format!("witness norm {nrm} is not 1")));
        }
        Ok(Self { amps: amps.into_iter().map(|a| a / nrm).collect() })
    }

    pub fn normalized(amps: Vec<T>) -> Result<Self> {
        let nrm = norm_sq(&amps).sqrt();
        if nrm == T::zero() || !nrm.is_finite() {
            return Err(LabError::Params("cannot normalize a zero vector".into()));
        }
        Ok(Self { amps: amps.into_iter().map(|a| a / nrm).collect() })
    }

    pub fn uniform(n: usize) -> Self {
        let a = T::one() / T::count(n).sqrt();
        Self { amps: vec![a; n] }
    }

    pub fn basis(n: usize, j: usize) -> Result<Self> {
        if j >= n {
            return Err(LabError::VertexOutOfRange { vertex: j, n });
        }
        let mut amps = vec![T::zero(); n];
        amps[j] = T::one();
        Ok(Self { amps })
    }

    /// Normalized indicator |S>.
    pub fn subset(n: usize, s: &[usize]) -> Result<Self> {
        let mask = subset_mask(n, s)?;
        if s.is_empty() {
            return Err(LabError::Params("empty subset".into()));
        }
        let a = T::one() / T::count(s.len()).sqrt();
        Ok(Self { amps: mask.iter().map(|&m| if m { a } else { T::zero() }).collect() })
    }

    /// sqrt(|T|/N) |S> - sqrt(|S|/N) |T> with T the complement of S.
    pub fn ideal(n: usize, s: &[usize]) -> Result<Self> {
        let mask = subset_mask(n, s)?;
        let k = s.len();
        if k == 0 || k == n {
            return Err(LabError::Params("ideal witness needs a proper nonempty subset".into()));
        }
        let nn = T::count(n);
        let in_s = (T::count(n - k) / nn).sqrt() / T::count(k).sqrt();
        let out_s = (T::count(k) / nn).sqrt() / T::count(n - k).sqrt();
        Ok(Self { amps: mask.iter().map(|&m| if m { in_s } else { -out_s }).collect() })
    }

    /// Entries uniform in [-1, 1], normalized.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        loop {
            let amps: Vec<T> = (0..n).map(|_| T::of(rng.random_range(-1.0..=1.0))).collect();
            if let Ok(w) = Self::normalized(amps) {
                return w;
            }
        }
    }

    pub fn amps(&self) -> &[T] {
        &self.amps
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn overlap(&self, other: &Self) -> T {
        dot(&self.amps, &other.amps)
    }
}

fn subset_mask(n: usize, s: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for &v in s {
        if v >= n {
            return Err(LabError::VertexOutOfRange { vertex: v, n });
        }
        if mask[v] {
            return Err(LabError::Params(format!("vertex {v} repeated in subset")));
        }
        mask[v] = true;
    }
    Ok(mask)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifierOutcome<T> {
    /// Probability that the control reads + and the color register reads
    /// the uniform color state.
    pub p_step2: T,
    pub p_accept: T,
    /// Weight of the post-selected state on the uniform vertex state.
    pub overlap_uniform: T,
}

fn outcome_from_post_selected<T: Real>(psi: &[T]) -> VerifierOutcome<T> {
    let p_step2 = norm_sq(psi);
    let sum: T = psi.iter().copied().sum();
    let overlap_uniform = sum * sum / T::count(psi.len());
    VerifierOutcome { p_step2, p_accept: (p_step2 - overlap_uniform).max(T::zero()), overlap_uniform }
}

/// Acceptance from psi' = (w + A w) / 2.
pub fn acceptance_probability<T: Real>(g: &ColoredGraph, w: &WitnessState<T>) -> Result<VerifierOutcome<T>> {
    let aw = normalized_adjacency_apply(g, w.amps())?;
    let half = T::half();
    let psi: Vec<T> = w.amps().iter().zip(&aw).map(|(&a, &b)| half * (a + b)).collect();
    Ok(outcome_from_post_selected(&psi))
}

/// 1/4 + <w, A^2 w>/4 + <w, A w>/2.
pub fn test_score_formula<T: Real>(g: &ColoredGraph, w: &WitnessState<T>) -> Result<T> {
    let aw = normalized_adjacency_apply(g, w.amps())?;
    let quarter = T::of(0.25);
    Ok(quarter + quarter * norm_sq(&aw) + T::half() * dot(w.amps(), &aw))
}

/// Upper end of the soundness chain: 1/2 + <w, A w>/2.
pub fn test_score_upper<T: Real>(g: &ColoredGraph, w: &WitnessState<T>) -> Result<T> {
    let aw = normalized_adjacency_apply(g, w.amps())?;
    Ok(T::half() + T::half() * dot(w.amps(), &aw))
}

/// Simulates the full control ⊗ vertex ⊗ color ⊗ ancilla register. The walk
/// step is built from two controlled oracle calls: compute the neighbor into
/// a zeroed ancilla, swap it with the vertex register, then uncompute the
/// ancilla with a second call. Charges two queries to `ctx`.
pub fn brute_force_acceptance<T: Real>(
    ctx: &mut QueryContext,
    g: &ColoredGraph,
    w: &WitnessState<T>,
) -> Result<VerifierOutcome<T>> {
    let n = g.n_vertices();
    if w.len() != n {
        return Err(LabError::SizeMismatch { expected: n, got: w.len() });
    }
    let d = g.degree();
    let p = n.next_power_of_two();
    let idx = |c: usize, j: usize, k: usize, a: usize| ((c * n + j) * d + k) * p + a;
    let mut state = vec![T::zero(); 2 * n * d * p];
    let amp0 = T::one() / (T::count(2) * T::count(d)).sqrt();
    for c in 0..2 {
        for j in 0..n {
            for k in 0..d {
                state[idx(c, j, k, 0)] = amp0 * w.amps()[j];
            }
        }
    }

    let mut oracle = ctx.oracle(g, VERIFIER_LABEL);
    let controlled_query = |state: &mut Vec<T>, oracle: &mut crate::graph::Oracle<'_>| {
        oracle.charge_superposed();
        let g = oracle.graph();
        let mut next = state.clone();
        for j in 0..n {
            for k in 0..d {
                let t = g.follow(j, k);
                for a in 0..p {
                    next[idx(1, j, k, a ^ t)] = state[idx(1, j, k, a)];
                }
            }
        }
        *state = next;
    };

    controlled_query(&mut state, &mut oracle);
    let mut swapped = state.clone();
    for j in 0..n {
        for k in 0..d {
            for a in 0..p {
                let v = state[idx(1, j, k, a)];
                if a >= n {
                    if v != T::zero() {
                        return Err(LabError::Degenerate("ancilla left the vertex range".into()));
                    }
                    continue;
                }
                swapped[idx(1, a, k, j)] = v;
            }
        }
    }
    state = swapped;
    controlled_query(&mut state, &mut oracle);

    let leak: T = (0..2)
        .flat_map(|c| (0..n).flat_map(move |j| (0..d).flat_map(move |k| (1..p).map(move |a| (c, j, k, a)))))
        .map(|(c, j, k, a)| state[idx(c, j, k, a)] * state[idx(c, j, k, a)])
        .sum();
    if leak > T::epsilon().sqrt() {
        return Err(LabError::Degenerate(format!("ancilla not returned to zero (weight {leak})")));
    }

    let inv_sqrt2 = T::one() / T::count(2).sqrt();
    let inv_sqrt_d = T::one() / T::count(d).sqrt();
    let mut psi = vec![T::zero(); n];
    for (j, out) in psi.iter_mut().enumerate() {
        let mut acc = T::zero();
        for k in 0..d {
            acc += (state[idx(0, j, k, 0)] + state[idx(1, j, k, 0)]) * inv_sqrt2;
        }
        *out = acc * inv_sqrt_d;
    }
    Ok(outcome_from_post_selected(&psi))
}

/// Largest eigenvalue of W (I - P_uniform) W with W = (I + A)/2, i.e. the
/// best acceptance probability over all witnesses.
pub fn optimal_acceptance<T: Real>(g: &ColoredGraph, dense_threshold: usize) -> Result<T> {
    let n = g.n_vertices();
    if n > dense_threshold {
        return Err(LabError::TooLarge(format!("optimal acceptance is dense-only, N={n}")));
    }
    let a = normalized_adjacency_dense::<T>(g);
    let half = T::half();
    let mut w = a;
    for (i, x) in w.iter_mut().enumerate() {
        *x *= half;
        if i % (n + 1) == 0 {
            *x += half;
        }
    }
    let inv_n = T::one() / T::count(n);
    let mut m = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = (0..n).map(|k| w[i * n + k] * w[k * n + j]).sum::<T>() - inv_n;
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
    }
    Ok(symmetric_eigenvalues(&m, n)?[0])
}

/// ((1 + lambda2) / 2)^2, the same optimum written through the spectrum.
pub fn optimal_acceptance_from_lambda2<T: Real>(lambda2: T) -> T {
    let h = (T::one() + lambda2) * T::half();
    h * h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepetitionRule {
    AllAccept,
    Majority,
}

/// Acceptance of `reps` independent runs combined by `rule`.
pub fn repeated_acceptance<T: Real>(p: T, reps: u64, rule: RepetitionRule) -> Result<T> {
    if !(T::zero()..=T::one()).contains(&p) {
        return Err(LabError::Params(format!("probability {p} outside [0, 1]")));
    }
    if reps == 0 {
        return Ok(T::one());
    }
    match rule {
        RepetitionRule::AllAccept => Ok(p.powf(T::of(reps as f64))),
        RepetitionRule::Majority => {
            let k = reps / 2 + 1;
            let pf = p.f64();
            let v = if pf == 0.0 {
                0.0
            } else if pf == 1.0 {
                1.0
            } else {
                beta_reg(k as f64, (reps - k + 1) as f64, pf)
            };
            Ok(T::of(v))
        }
    }
}

/// Smallest number of all-accept repetitions pushing `p_no` to `target`:
/// `ceil(ln target / ln p_no)`. `None` when `p_no = 1`.
pub fn solve_reps(p_no: f64, target: f64) -> Option<u64> {
    if !(0.0..1.0).contains(&p_no) || !(0.0..1.0).contains(&target) || target == 0.0 {
        return None;
    }
    if p_no == 0.0 {
        return Some(1);
    }
    Some(((target.ln() / p_no.ln()) - 1e-12).ceil().max(1.0) as u64)
}

/// Whether repetitions reuse one graph or draw a fresh one each time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepetitionMode {
    PerGraph,
    PerDistribution,
}

/// Repetition applied to a sample of per-graph acceptance probabilities.
pub fn repeat_over_samples<T: Real>(
    probs: &[T],
    reps: u64,
    rule: RepetitionRule,
    mode: RepetitionMode,
) -> Result<T> {
    if probs.is_empty() {
        return Err(LabError::Degenerate("no samples".into()));
    }
    let k = T::count(probs.len());
    match mode {
        RepetitionMode::PerGraph => {
            let mut acc = T::zero();
            for &p in probs {
                acc += repeated_acceptance(p, reps, rule)?;
            }
            Ok(acc / k)
        }
        RepetitionMode::PerDistribution => {
            let mean = probs.iter().copied().sum::<T>() / k;
            repeated_acceptance(mean.min(T::one()), reps, rule)
        }
    }
}

/// Monte Carlo mean of the exact acceptance probability over graphs drawn
/// by `sampler`.
pub fn expectation_over_distribution<T, R, S>(
    mut sampler: S,
    w: &WitnessState<T>,
    n_samples: usize,
    rng: &mut R,
) -> Result<Estimate>
where
    T: Real,
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> Result<ColoredGraph>,
{
    let mut values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let g = sampler(rng)?;
        values.push(acceptance_probability(&g, w)?.p_accept.f64());
    }
    Estimate::from_values(&values)
}

/// Post-selected state for a witness, exposed for diagnostics.
pub fn post_selected_state<T: Real>(g: &ColoredGraph, w: &WitnessState<T>) -> Result<Vec<T>> {
    let mut aw = vec![T::zero(); w.len()];
    apply_into(g, w.amps(), &mut aw)?;
    Ok(w.amps().iter().zip(&aw).map(|(&a, &b)| T::half() * (a + b)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_ideal_witness() {
        let w = WitnessState::<f64>::ideal(2, &[0]).unwrap();
        let r = 0.5f64.sqrt();
        assert!((w.amps()[0] - r).abs() < 1e-15 && (w.amps()[1] + r).abs() < 1e-15);
        assert!(WitnessState::<f64>::ideal(3, &[]).is_err());
        assert!(WitnessState::<f64>::ideal(2, &[0, 1]).is_err());
    }

    #[test]
    fn uniform_witness_is_rejected() {
        let g = ColoredGraph::cycle(8).unwrap();
        let out = acceptance_probability(&g, &WitnessState::<f64>::uniform(8)).unwrap();
        assert!(out.p_accept.abs() < 1e-15);
    }

    #[test]
    fn solve_reps_plugs_back() {
        let p = 0.9;
        let r = solve_reps(p, 0.01).unwrap();
        assert!(p.powi(r as i32) <= 0.01 && p.powi(r as i32 - 1) > 0.01);
        assert_eq!(solve_reps(1.0, 0.01), None);
    }

    #[test]
    fn majority_of_three() {
        let p = 0.7f64;
        let want = p.powi(3) + 3.0 * p * p * (1.0 - p);
        let got = repeated_acceptance(p, 3, RepetitionRule::Majority).unwrap();
        assert!((got - want).abs() < 1e-12);
    }
}
