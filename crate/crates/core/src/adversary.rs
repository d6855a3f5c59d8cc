//! Adversary relations between permutation oracles, their brute-force
//! degree statistics and the resulting query lower bounds.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::graph::Permutation;
use crate::scalar::Real;
use crate::sunflower::{meets_threshold, verify_sunflower, Sunflower};
use crate::Mu;

pub const MAX_PERM_N: usize = 8;

/// Oracle string of a permutation: forward table then inverse table,
/// tagged with the size of the target prefix [k].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaggedOracle {
    pub k: usize,
    pub table: Vec<u8>,
}

impl TaggedOracle {
    pub fn of(k: usize, p: &Permutation) -> Self {
        let table = p.forward().iter().chain(p.backward()).map(|&v| v as u8).collect();
        Self { k, table }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermRelation {
    pub n: usize,
    pub xs: Vec<TaggedOracle>,
    pub ys: Vec<TaggedOracle>,
    pub pairs: Vec<(usize, usize)>,
}

/// The canonical chi for (S_x, S_y): S_x ∩ S_y onto the smallest targets,
/// then S_x \ S_y onto the rest of [k], then everything else in order.
pub fn canonical_chi(n: usize, k: usize, sx: &[usize], sy: &[usize]) -> Result<Permutation> {
    let both: Vec<usize> = sx.iter().copied().filter(|v| sy.contains(v)).collect();
    let only_x: Vec<usize> = sx.iter().copied().filter(|v| !sy.contains(v)).collect();
    let rest: Vec<usize> = (0..n).filter(|v| !sx.contains(v)).collect();
    if both.len() + only_x.len() != k {
        return Err(LabError::Params(format!("|S_x| = {} but k = {k}", sx.len())));
    }
    let mut map = vec![0usize; n];
    for (target, &v) in both.iter().chain(&only_x).chain(&rest).enumerate() {
        map[v] = target;
    }
    Permutation::new(map)
}

/// psi agrees with chi off the symmetric difference and swaps the images
/// of the i-th elements of S_x \ S_y and S_y \ S_x.
pub fn forced_psi(chi: &Permutation, sx: &[usize], sy: &[usize]) -> Result<Permutation> {
    let only_x: Vec<usize> = sx.iter().copied().filter(|v| !sy.contains(v)).collect();
    let only_y: Vec<usize> = sy.iter().copied().filter(|v| !sx.contains(v)).collect();
    if only_x.len() != only_y.len() {
        return Err(LabError::Params("S_x and S_y differ in size".into()));
    }
    let mut map: Vec<usize> = (0..chi.len()).map(|i| chi.apply(i)).collect();
    for (&a, &b) in only_x.iter().zip(&only_y) {
        map[b] = chi.apply(a);
        map[a] = chi.apply(b);
    }
    Permutation::new(map)
}

/// Checks the three construction conditions for one (chi, psi) pair.
pub fn construction_holds(chi: &Permutation, psi: &Permutation, k: usize, sx: &[usize], sy: &[usize]) -> bool {
    let n = chi.len();
    let onto_prefix = |p: &Permutation, s: &[usize]| s.len() == k && s.iter().all(|&v| p.apply(v) < k);
    if !onto_prefix(chi, sx) || !onto_prefix(psi, sy) {
        return false;
    }
    let only_x: Vec<usize> = sx.iter().copied().filter(|v| !sy.contains(v)).collect();
    let only_y: Vec<usize> = sy.iter().copied().filter(|v| !sx.contains(v)).collect();
    let agree = (0..n)
        .filter(|v| !only_x.contains(v) && !only_y.contains(v))
        .all(|v| chi.apply(v) == psi.apply(v));
    let swapped = only_x
        .iter()
        .zip(&only_y)
        .all(|(&a, &b)| psi.apply(b) == chi.apply(a) && psi.apply(a) == chi.apply(b));
    agree && swapped
}

fn permutations_of(items: &[usize]) -> Vec<Vec<usize>> {
    let mut cur = items.to_vec();
    cur.sort_unstable();
    let mut out = vec![cur.clone()];
    // Lexicographic successor.
    loop {
        let Some(i) = (1..cur.len()).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..cur.len()).rev().find(|&j| cur[j] > cur[i - 1]).expect("successor exists");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// Every permutation tau of [n] with tau([k]) = [k].
pub fn prefix_stabilizer(n: usize, k: usize) -> Vec<Permutation> {
    let low: Vec<usize> = (0..k).collect();
    let high: Vec<usize> = (k..n).collect();
    let lows = permutations_of(&low);
    let highs = permutations_of(&high);
    let mut out = Vec::with_capacity(lows.len() * highs.len());
    for a in &lows {
        for b in &highs {
            let map: Vec<usize> = a.iter().chain(b).copied().collect();
            out.push(Permutation::new(map).expect("block permutation"));
        }
    }
    out
}

fn check_family(fam: &[Vec<usize>], n: usize, k: usize, what: &str) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::with_capacity(fam.len());
    for s in fam {
        let mut s = s.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != k || s.iter().any(|&v| v >= n) {
            return Err(LabError::Params(format!("{what} set {s:?} is not a {k}-subset of [{n}]")));
        }
        out.push(s);
    }
    Ok(out)
}

/// Relation {(tau chi_xy, tau psi_xy)} over all pairs of sets and every
/// tau fixing [k], on permutations of [n] with n <= 8.
pub fn build_perm_relation(
    sunflower_sets: &[Vec<usize>],
    ideal_sets: &[Vec<usize>],
    k: usize,
    n: usize,
) -> Result<PermRelation> {
    if n > MAX_PERM_N {
        return Err(LabError::TooLarge(format!("permutation relations need N <= {MAX_PERM_N}, got {n}")));
    }
    if k > n {
        return Err(LabError::Params("k exceeds N".into()));
    }
    let sf = check_family(sunflower_sets, n, k, "sunflower")?;
    let ideal = check_family(ideal_sets, n, k, "ideal")?;
    let taus = prefix_stabilizer(n, k);
    let mut x_index: HashMap<TaggedOracle, usize> = HashMap::new();
    let mut y_index: HashMap<TaggedOracle, usize> = HashMap::new();
    let mut rel = PermRelation { n, xs: Vec::new(), ys: Vec::new(), pairs: Vec::new() };
    let intern = |map: &mut HashMap<TaggedOracle, usize>, list: &mut Vec<TaggedOracle>, o: TaggedOracle| {
        *map.entry(o.clone()).or_insert_with(|| {
            list.push(o);
            list.len() - 1
        })
    };
    for sx in &sf {
        for sy in &ideal {
            let chi = canonical_chi(n, k, sx, sy)?;
            let psi = forced_psi(&chi, sx, sy)?;
            for tau in &taus {
                let x = TaggedOracle::of(k, &tau.compose(&chi));
                let y = TaggedOracle::of(k, &tau.compose(&psi));
                let xi = intern(&mut x_index, &mut rel.xs, x);
                let yi = intern(&mut y_index, &mut rel.ys, y);
                rel.pairs.push((xi, yi));
            }
        }
    }
    Ok(rel)
}

impl PermRelation {
    /// Union of relations whose oracles carry distinct tags.
    pub fn union(parts: &[PermRelation]) -> Result<PermRelation> {
        let n = parts.first().ok_or_else(|| LabError::Degenerate("empty union".into()))?.n;
        let mut out = PermRelation { n, xs: Vec::new(), ys: Vec::new(), pairs: Vec::new() };
        for p in parts {
            if p.n != n {
                return Err(LabError::Params("relations over different N".into()));
            }
            let (ox, oy) = (out.xs.len(), out.ys.len());
            out.xs.extend(p.xs.iter().cloned());
            out.ys.extend(p.ys.iter().cloned());
            out.pairs.extend(p.pairs.iter().map(|&(x, y)| (x + ox, y + oy)));
        }
        let mut xs = out.xs.clone();
        xs.sort();
        xs.dedup();
        let mut ys = out.ys.clone();
        ys.sort();
        ys.dedup();
        if xs.len() != out.xs.len() || ys.len() != out.ys.len() {
            return Err(LabError::Params("relation supports overlap".into()));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationStats {
    pub m_lo: u64,
    pub m_hi: u64,
    pub mp_lo: u64,
    pub mp_hi: u64,
    pub l_max: u64,
    /// l_max restricted to forward-table positions.
    pub l_max_forward: u64,
    /// l_max restricted to inverse-table positions.
    pub l_max_inverse: u64,
    pub pairs: u64,
    pub x_count: u64,
    pub y_count: u64,
}

/// Brute-force degrees and the largest product l_{x,i} l_{y,i} over related
/// pairs differing at oracle position i.
pub fn relation_stats(r: &PermRelation) -> Result<RelationStats> {
    if r.pairs.is_empty() {
        return Err(LabError::Degenerate("empty relation".into()));
    }
    let width = 2 * r.n;
    let mut deg_x = vec![0u64; r.xs.len()];
    let mut deg_y = vec![0u64; r.ys.len()];
    let mut lx = vec![0u64; r.xs.len() * width];
    let mut ly = vec![0u64; r.ys.len() * width];
    for &(x, y) in &r.pairs {
        deg_x[x] += 1;
        deg_y[y] += 1;
        let (a, b) = (&r.xs[x].table, &r.ys[y].table);
        for i in 0..width {
            if a[i] != b[i] {
                lx[x * width + i] += 1;
                ly[y * width + i] += 1;
            }
        }
    }
    let mut split = [0u64; 2];
    for &(x, y) in &r.pairs {
        let (a, b) = (&r.xs[x].table, &r.ys[y].table);
        for i in 0..width {
            if a[i] != b[i] {
                let side = &mut split[i / r.n];
                *side = (*side).max(lx[x * width + i] * ly[y * width + i]);
            }
        }
    }
    Ok(RelationStats {
        m_lo: *deg_x.iter().min().expect("nonempty"),
        m_hi: *deg_x.iter().max().expect("nonempty"),
        mp_lo: *deg_y.iter().min().expect("nonempty"),
        mp_hi: *deg_y.iter().max().expect("nonempty"),
        l_max: split[0].max(split[1]),
        l_max_forward: split[0],
        l_max_inverse: split[1],
        pairs: r.pairs.len() as u64,
        x_count: r.xs.len() as u64,
        y_count: r.ys.len() as u64,
    })
}

/// Stats of a union of tagged relations, combined from the parts.
pub fn combine_stats(parts: &[RelationStats]) -> Option<RelationStats> {
    let first = parts.first()?.clone();
    Some(parts[1..].iter().fold(first, |a, b| RelationStats {
        m_lo: a.m_lo.min(b.m_lo),
        m_hi: a.m_hi.max(b.m_hi),
        mp_lo: a.mp_lo.min(b.mp_lo),
        mp_hi: a.mp_hi.max(b.mp_hi),
        l_max: a.l_max.max(b.l_max),
        l_max_forward: a.l_max_forward.max(b.l_max_forward),
        l_max_inverse: a.l_max_inverse.max(b.l_max_inverse),
        pairs: a.pairs + b.pairs,
        x_count: a.x_count + b.x_count,
        y_count: a.y_count + b.y_count,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBound<T> {
    pub value: T,
    /// True when a degree term or the prefactor is non-positive, so the
    /// bound says nothing.
    pub vacuous: bool,
}

/// (1 - 2 sqrt(eps(1-eps))) sqrt((m_lo - 2 eps m_hi)(mp_lo - 2 eps mp_hi) / l_max),
/// with negative degree terms clamped to zero and flagged.
pub fn query_lower_bound<T: Real>(stats: &RelationStats, eps: T) -> Result<LowerBound<T>> {
    let half = T::half();
    if !(eps >= T::zero() && eps <= half) {
        return Err(LabError::Params(format!("eps={eps} outside [0, 1/2]")));
    }
    if stats.l_max == 0 {
        return Err(LabError::Degenerate("l_max = 0".into()));
    }
    let two = T::one() + T::one();
    let c = |v: u64| T::of(v as f64);
    let pref = T::one() - two * (eps * (T::one() - eps)).sqrt();
    let a = c(stats.m_lo) - two * eps * c(stats.m_hi);
    let b = c(stats.mp_lo) - two * eps * c(stats.mp_hi);
    let vacuous = a <= T::zero() || b <= T::zero() || pref <= T::zero();
    let value = pref.max(T::zero()) * (a.max(T::zero()) * b.max(T::zero()) / c(stats.l_max)).sqrt();
    Ok(LowerBound { value, vacuous })
}

/// Distinguishing with advantage governed by delta: eps = 2 delta.
pub fn distinguishing_lower_bound<T: Real>(stats: &RelationStats, delta: T) -> Result<LowerBound<T>> {
    if !(delta >= T::zero() && delta <= T::of(0.25)) {
        return Err(LabError::Params(format!("delta={delta} outside [0, 1/4]")));
    }
    query_lower_bound(stats, delta + delta)
}

/// (1 - 2 sqrt(2 delta (1 - 2 delta))) (1 - 4 delta) sqrt((N/zeta)^(1-mu)).
pub fn closed_form_permutation_bound<T: Real>(n: usize, zeta: usize, mu: T, delta: T) -> T {
    let two = T::one() + T::one();
    let four = two + two;
    let pref = T::one() - two * (two * delta * (T::one() - two * delta)).sqrt();
    pref * (T::one() - four * delta) * (T::count(n) / T::count(zeta)).powf(T::one() - mu).sqrt()
}

/// The graph version pays two graph queries per permutation query.
pub fn closed_form_graph_bound<T: Real>(n: usize, zeta: usize, mu: T, delta: T) -> T {
    T::half() * closed_form_permutation_bound(n, zeta, mu, delta)
}

/// (zeta/N)^(1-mu) |sunflower| |ideal|.
pub fn analytic_l_max_bound(n: usize, zeta: usize, mu: f64, sunflower_size: usize, ideal_size: usize) -> f64 {
    (zeta as f64 / n as f64).powf(1.0 - mu) * sunflower_size as f64 * ideal_size as f64
}

/// The analytic l_max bound is claimed for a valid sunflower paired with
/// the full ideal family of its core, provided the ideal family is itself
/// light: (zeta - |F|)/(N - |F|) <= (zeta/N)^(1-mu).
pub fn analytic_preconditions(sf: &Sunflower, ideal_sets: &[Vec<usize>], n: usize) -> bool {
    if verify_sunflower(sf, n).is_err() {
        return false;
    }
    let f = sf.core.len();
    let want = crate::sunflower::ideal_sunflower(n, sf.zeta, &sf.core).unwrap_or_default();
    let mut got: Vec<Vec<usize>> = ideal_sets
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.sort_unstable();
            s
        })
        .collect();
    got.sort();
    if got != want || f >= n {
        return false;
    }
    light_ideal(n, sf.zeta, f, sf.mu)
}

fn light_ideal(n: usize, zeta: usize, f: usize, mu: Mu) -> bool {
    // Light means not strictly above the threshold.
    let c = zeta - f;
    let t = n - f;
    !meets_threshold(c, t, n, zeta, mu) || {
        let (p, q) = (*mu.numer() as u32, *mu.denom() as u32);
        let lhs = num_bigint::BigUint::from(c).pow(q) * num_bigint::BigUint::from(n).pow(q - p);
        let rhs = num_bigint::BigUint::from(t).pow(q) * num_bigint::BigUint::from(zeta).pow(q - p);
        lhs == rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stabilizer_size() {
        assert_eq!(prefix_stabilizer(5, 2).len(), 2 * 6);
        assert!(prefix_stabilizer(5, 2).iter().all(|t| t.apply(0) < 2 && t.apply(1) < 2));
    }

    #[test]
    fn equal_sets_give_equal_permutations() {
        let chi = canonical_chi(6, 2, &[1, 4], &[1, 4]).unwrap();
        let psi = forced_psi(&chi, &[1, 4], &[1, 4]).unwrap();
        assert_eq!(chi, psi);
        assert!(construction_holds(&chi, &psi, 2, &[1, 4], &[1, 4]));
    }

    #[test]
    fn swapped_construction() {
        let (sx, sy) = ([0, 1], [0, 2]);
        let chi = canonical_chi(5, 2, &sx, &sy).unwrap();
        let psi = forced_psi(&chi, &sx, &sy).unwrap();
        assert!(construction_holds(&chi, &psi, 2, &sx, &sy));
        assert_eq!(chi.apply(0), 0);
        assert_eq!(chi.apply(1), 1);
        assert_eq!(psi.apply(2), 1);
    }

    #[test]
    fn bound_identities() {
        let s = RelationStats { m_lo: 4, m_hi: 4, mp_lo: 9, mp_hi: 9, l_max: 4, l_max_forward: 4, l_max_inverse: 0, pairs: 1, x_count: 1, y_count: 1 };
        let b = query_lower_bound(&s, 0.5f64).unwrap();
        assert_eq!(b.value, 0.0);
        assert!(b.vacuous);
        let b = query_lower_bound(&s, 0.0f64).unwrap();
        assert_eq!(b.value, 3.0);
        assert!(!b.vacuous);
        assert_eq!(distinguishing_lower_bound(&s, 0.25f64).unwrap().value, 0.0);
        let zero = RelationStats { l_max: 0, ..s };
        assert!(query_lower_bound(&zero, 0.1f64).is_err());
    }
}
