//! Normalized adjacency operator, second eigenvalue, lazy walks and exact
//! expansion for tiny graphs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::graph::ColoredGraph;
use crate::linalg::symmetric_eigenvalues;
use crate::rng::stream_rng;
use crate::scalar::{dot, norm_sq, Real};

/// `(A v)_j = (1/d) Σ_c v[adj(j, c)]`; a self-loop slot contributes `v_j / d`.
pub fn normalized_adjacency_apply<T: Real>(g: &ColoredGraph, v: &[T]) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); v.len()];
    apply_into(g, v, &mut out)?;
    Ok(out)
}

pub(crate) fn apply_into<T: Real>(g: &ColoredGraph, v: &[T], out: &mut [T]) -> Result<()> {
    let n = g.n_vertices();
    if v.len() != n || out.len() != n {
        return Err(LabError::SizeMismatch { expected: n, got: v.len().min(out.len()) });
    }
    let d = g.degree();
    let inv_d = T::one() / T::count(d);
    let table = g.table();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &table[j * d..(j + 1) * d];
        let mut acc = T::zero();
        for &t in row {
            acc += v[t as usize];
        }
        *o = acc * inv_d;
    }
    Ok(())
}

/// Dense row-major normalized adjacency matrix.
pub fn normalized_adjacency_dense<T: Real>(g: &ColoredGraph) -> Vec<T> {
    let n = g.n_vertices();
    let d = g.degree();
    let w = T::one() / T::count(d);
    let mut a = vec![T::zero(); n * n];
    for j in 0..n {
        for c in 0..d {
            a[j * n + g.follow(j, c)] += w;
        }
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dense,
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub dense_threshold: usize,
    pub method: MethodChoice,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100_000, dense_threshold: 4096, method: MethodChoice::Auto }
    }
}

impl SpectralOptions {
    pub fn with_method(self, method: MethodChoice) -> Self {
        Self { method, ..self }
    }
}

/// Second-largest eigenvalue estimate with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lambda2<T> {
    pub value: T,
    pub method: Method,
    pub converged: bool,
    pub iterations: usize,
}

pub fn second_eigenvalue<T: Real>(g: &ColoredGraph, opts: &SpectralOptions) -> Result<Lambda2<T>> {
    if g.n_vertices() < 2 {
        return Err(LabError::Degenerate("a single vertex has no second eigenvalue".into()));
    }
    let dense = match opts.method {
        MethodChoice::Dense => true,
        MethodChoice::Iterative => false,
        MethodChoice::Auto => g.n_vertices() <= opts.dense_threshold,
    };
    if dense {
        let vals = symmetric_eigenvalues(&normalized_adjacency_dense::<T>(g), g.n_vertices())?;
        Ok(Lambda2 { value: vals[1], method: Method::Dense, converged: true, iterations: 0 })
    } else {
        Ok(deflated_power_iteration(g, T::of(opts.tol), opts.max_iter))
    }
}

fn remove_mean<T: Real>(x: &mut [T]) {
    let mean = x.iter().copied().sum::<T>() / T::count(x.len());
    for v in x.iter_mut() {
        *v -= mean;
    }
}

const RHO_WINDOW: usize = 16;

/// Power iteration on the lazy operator (I + A)/2, which is positive
/// semidefinite, restricted to the complement of the uniform vector.
/// Stops once the Rayleigh quotient step, extrapolated geometrically with
/// the largest recent contraction ratio, falls below `tol`, or once the
/// residual itself does.
fn deflated_power_iteration<T: Real>(g: &ColoredGraph, tol: T, max_iter: usize) -> Lambda2<T> {
    let n = g.n_vertices();
    let half = T::half();
    let mut rng = stream_rng(0x5eed_1a2b, 0);
    let mut x: Vec<T> = (0..n).map(|_| T::of(rng.random::<f64>() - 0.5)).collect();
    remove_mean(&mut x);
    let nrm = norm_sq(&x).sqrt();
    x.iter_mut().for_each(|v| *v /= nrm);
    let mut ax = vec![T::zero(); n];
    let mut theta_prev: Option<T> = None;
    let mut step_prev: Option<T> = None;
    let mut ratios = [T::zero(); RHO_WINDOW];
    for it in 1..=max_iter {
        apply_into(g, &x, &mut ax).expect("sizes match");
        let mut y: Vec<T> = x.iter().zip(&ax).map(|(&a, &b)| half * (a + b)).collect();
        remove_mean(&mut y);
        let theta = dot(&x, &y);
        let residual = y
            .iter()
            .zip(&x)
            .map(|(&yi, &xi)| (yi - theta * xi) * (yi - theta * xi))
            .sum::<T>()
            .sqrt();
        let ny = norm_sq(&y).sqrt();
        let lambda = theta + theta - T::one();
        if ny == T::zero() || residual <= tol {
            return Lambda2 { value: lambda, method: Method::Iterative, converged: true, iterations: it };
        }
        if let Some(prev) = theta_prev {
            // Steps in lambda units; lambda = 2 theta - 1.
            let step = (theta - prev).abs() * (T::one() + T::one());
            if let Some(sp) = step_prev {
                let r = if sp > T::zero() { (step / sp).min(T::of(0.999_999)) } else { T::zero() };
                ratios[it % RHO_WINDOW] = r;
                let rho = ratios.iter().copied().fold(T::zero(), T::max);
                if it > RHO_WINDOW && step <= tol * (T::one() - rho) {
                    return Lambda2 {
                        value: lambda,
                        method: Method::Iterative,
                        converged: true,
                        iterations: it,
                    };
                }
            }
            step_prev = Some(step);
        }
        theta_prev = Some(theta);
        x = y.into_iter().map(|v| v / ny).collect();
    }
    let theta = theta_prev.unwrap_or(T::one());
    Lambda2 { value: theta + theta - T::one(), method: Method::Iterative, converged: false, iterations: max_iter }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport<T> {
    pub n_vertices: usize,
    pub lambda2: T,
    /// 1 - lambda2 for a connected graph.
    pub spectral_gap: Option<T>,
    /// Gap of each component; `None` for a single vertex.
    pub component_gaps: Vec<Option<T>>,
    pub component_sizes: Vec<usize>,
    pub method: Method,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Real> SpectralReport<T> {
    pub fn is_alpha_expander(&self, alpha: T) -> bool {
        self.component_sizes.len() == 1 && self.lambda2 <= T::one() - alpha
    }

    /// Smallest gap over components with at least two vertices.
    pub fn min_component_gap(&self) -> Option<T> {
        self.component_gaps.iter().flatten().copied().reduce(T::min)
    }
}

pub fn spectral_report<T: Real>(g: &ColoredGraph, opts: &SpectralOptions) -> Result<SpectralReport<T>> {
    let l2 = second_eigenvalue::<T>(g, opts)?;
    let parts = g.components();
    let mut component_gaps = Vec::with_capacity(parts.count());
    let mut converged = l2.converged;
    if parts.is_connected() {
        component_gaps.push(Some(T::one() - l2.value));
    } else {
        for members in parts.all_members() {
            if members.len() < 2 {
                component_gaps.push(None);
                continue;
            }
            let sub = g.induced(&members)?;
            let s = second_eigenvalue::<T>(&sub, opts)?;
            converged &= s.converged;
            component_gaps.push(Some(T::one() - s.value));
        }
    }
    Ok(SpectralReport {
        n_vertices: g.n_vertices(),
        lambda2: l2.value,
        spectral_gap: parts.is_connected().then(|| T::one() - l2.value),
        component_gaps,
        component_sizes: parts.sizes.clone(),
        method: l2.method,
        converged,
        iterations: l2.iterations,
    })
}

/// Exact lazy-walk distribution after `steps` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkDistribution<T> {
    pub probs: Vec<T>,
    pub steps: usize,
}

impl<T: Real> WalkDistribution<T> {
    pub fn max_deviation_from_uniform(&self) -> T {
        let u = T::one() / T::count(self.probs.len());
        self.probs.iter().map(|&p| (p - u).abs()).fold(T::zero(), T::max)
    }
}

pub fn lazy_walk<T: Real>(g: &ColoredGraph, start: &[T], steps: usize) -> Result<WalkDistribution<T>> {
    let n = g.n_vertices();
    if start.len() != n {
        return Err(LabError::SizeMismatch { expected: n, got: start.len() });
    }
    let total: T = start.iter().copied().sum();
    if start.iter().any(|&p| p < T::zero()) || (total - T::one()).abs() > T::of(1e-6) {
        return Err(LabError::Params("start is not a probability vector".into()));
    }
    let half = T::half();
    let mut p = start.to_vec();
    let mut ap = vec![T::zero(); n];
    for _ in 0..steps {
        apply_into(g, &p, &mut ap)?;
        for (pi, &a) in p.iter_mut().zip(&ap) {
            *pi = half * (*pi + a);
        }
    }
    Ok(WalkDistribution { probs: p, steps })
}

/// `(1 - alpha/2)^steps`.
pub fn mixing_bound<T: Real>(alpha: T, steps: usize) -> T {
    (T::one() - alpha * T::half()).powi(steps as i32)
}

/// Exact expansion of a small graph. `vertex` is the minimum of
/// |N(U) \ U| / |U| and `edge` the minimum of |E(U, U^c)| / |U|, both over
/// 1 <= |U| <= N/2, with self-loops ignored and parallel edges counted
/// once in `vertex` but with multiplicity in `edge`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub vertex: f64,
    pub edge: f64,
    pub vertex_witness: Vec<usize>,
    pub edge_witness: Vec<usize>,
}

pub const MAX_EXACT_EXPANSION_N: usize = 24;

pub fn edge_expansion_exact(g: &ColoredGraph) -> Result<Expansion> {
    let n = g.n_vertices();
    if n > MAX_EXACT_EXPANSION_N {
        return Err(LabError::TooLarge(format!("exact expansion needs N <= 24, got {n}")));
    }
    if n < 2 {
        return Err(LabError::Degenerate("expansion needs N >= 2".into()));
    }
    let d = g.degree();
    let mut in_u = 0u32;
    let mut cnt = vec![0u32; n];
    let (mut size, mut eb, mut vb) = (0usize, 0usize, 0usize);
    // Best ratios kept as (numerator, denominator, set).
    let mut best_v = (usize::MAX, 1usize, 0u32);
    let mut best_e = (usize::MAX, 1usize, 0u32);
    for i in 1u64..(1u64 << n) {
        let x = i.trailing_zeros() as usize;
        let bit = 1u32 << x;
        if in_u & bit == 0 {
            if cnt[x] > 0 {
                vb -= 1;
            }
            in_u |= bit;
            size += 1;
            for c in 0..d {
                let t = g.follow(x, c);
                if t == x {
                    continue;
                }
                if in_u & (1 << t) != 0 {
                    eb -= 1;
                } else {
                    eb += 1;
                }
                cnt[t] += 1;
                if cnt[t] == 1 && in_u & (1 << t) == 0 {
                    vb += 1;
                }
            }
        } else {
            in_u &= !bit;
            size -= 1;
            for c in 0..d {
                let t = g.follow(x, c);
                if t == x {
                    continue;
                }
                if in_u & (1 << t) != 0 {
                    eb += 1;
                } else {
                    eb -= 1;
                }
                cnt[t] -= 1;
                if cnt[t] == 0 && in_u & (1 << t) == 0 {
                    vb -= 1;
                }
            }
            if cnt[x] > 0 {
                vb += 1;
            }
        }
        if size >= 1 && 2 * size <= n {
            if best_v.0 == usize::MAX || vb * best_v.1 < best_v.0 * size {
                best_v = (vb, size, in_u);
            }
            if best_e.0 == usize::MAX || eb * best_e.1 < best_e.0 * size {
                best_e = (eb, size, in_u);
            }
        }
    }
    let members = |mask: u32| (0..n).filter(|&v| mask & (1 << v) != 0).collect::<Vec<_>>();
    Ok(Expansion {
        vertex: best_v.0 as f64 / best_v.1 as f64,
        edge: best_e.0 as f64 / best_e.1 as f64,
        vertex_witness: members(best_v.2),
        edge_witness: members(best_e.2),
    })
}

/// Two-sided Cheeger window for the edge expansion of a d-regular graph
/// with normalized gap `gap`: `d gap / 2 <= h <= d sqrt(2 gap)`.
pub fn cheeger_window<T: Real>(gap: T, d: usize) -> (T, T) {
    let dd = T::count(d);
    let two = T::one() + T::one();
    (dd * gap / two, dd * (two * gap.max(T::zero())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_loops_are_identity() {
        let g = ColoredGraph::self_loops(5, 3);
        let v = vec![1.0, -2.0, 0.5, 3.0, 0.0];
        assert_eq!(normalized_adjacency_apply(&g, &v).unwrap(), v);
        let l2 = second_eigenvalue::<f64>(&g, &SpectralOptions::default()).unwrap();
        assert!((l2.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k4_expansion() {
        let e = edge_expansion_exact(&ColoredGraph::complete4()).unwrap();
        assert_eq!(e.vertex, 1.0);
        assert_eq!(e.edge, 2.0);
        assert_eq!(edge_expansion_exact(&ColoredGraph::self_loops(6, 2)).unwrap().edge, 0.0);
    }

    #[test]
    fn walk_from_uniform_stays_uniform() {
        let g = ColoredGraph::cycle(10).unwrap();
        let u = vec![0.1f64; 10];
        let w = lazy_walk(&g, &u, 7).unwrap();
        assert!(w.max_deviation_from_uniform() < 1e-15);
        assert!(lazy_walk(&g, &[0.5; 10], 1).is_err());
    }

    #[test]
    fn refuses_large_exact_expansion() {
        assert!(edge_expansion_exact(&ColoredGraph::self_loops(25, 1)).is_err());
    }
}
