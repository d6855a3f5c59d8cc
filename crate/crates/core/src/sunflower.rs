//! Greedy sunflower extraction from a witness map, with exact frequency
//! thresholds.

use num_bigint::BigUint;
use num_integer::binomial;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::scalar::Real;
use crate::Mu;

/// Each set of a family is stored sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessEntry {
    pub set: Vec<usize>,
    pub witness: String,
}

/// Assignment of a q-bit witness to every set of a declared domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessMap {
    n: usize,
    zeta: usize,
    q: usize,
    entries: Vec<WitnessEntry>,
}

impl WitnessMap {
    pub fn new(n: usize, zeta: usize, entries: Vec<WitnessEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(LabError::Degenerate("empty witness map".into()));
        }
        let q = entries[0].witness.len();
        let mut seen = std::collections::BTreeSet::new();
        let mut clean = Vec::with_capacity(entries.len());
        for mut e in entries {
            e.set.sort_unstable();
            check_set(&e.set, n, zeta)?;
            if e.witness.len() != q || !e.witness.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(LabError::Format(format!("witness {:?} is not a {q}-bit string", e.witness)));
            }
            if !seen.insert(e.set.clone()) {
                return Err(LabError::Format(format!("set {:?} listed twice", e.set)));
            }
            clean.push(e);
        }
        Ok(Self { n, zeta, q, entries: clean })
    }

    /// Map over every zeta-subset of [n].
    pub fn full_domain<F: FnMut(&[usize]) -> String>(n: usize, zeta: usize, mut f: F) -> Result<Self> {
        let entries = combinations(n, zeta)
            .into_iter()
            .map(|set| {
                let witness = f(&set);
                WitnessEntry { set, witness }
            })
            .collect();
        Self::new(n, zeta, entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn zeta(&self) -> usize {
        self.zeta
    }

    /// Witness length in bits.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn entries(&self) -> &[WitnessEntry] {
        &self.entries
    }

    pub fn from_jsonl(text: &str, n: usize, zeta: usize) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: WitnessEntry = serde_json::from_str(line)
                .map_err(|err| LabError::Format(format!("line {}: {err}", i + 1)))?;
            entries.push(e);
        }
        Self::new(n, zeta, entries)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries.iter().map(|e| serde_json::to_string(e).expect("plain data") + "\n").collect()
    }
}

fn check_set(set: &[usize], n: usize, zeta: usize) -> Result<()> {
    if set.len() != zeta {
        return Err(LabError::Format(format!("set {set:?} does not have size {zeta}")));
    }
    if set.windows(2).any(|w| w[0] == w[1]) || set.iter().any(|&v| v >= n) {
        return Err(LabError::Format(format!("set {set:?} has repeats or leaves [{n}]")));
    }
    Ok(())
}

/// Family of zeta-subsets with a common core in which non-core elements
/// are light.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sunflower {
    pub sets: Vec<Vec<usize>>,
    pub core: Vec<usize>,
    pub mu: Mu,
    pub zeta: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SunflowerViolation {
    Empty,
    WrongSize { set_index: usize },
    MissingCore { set_index: usize, vertex: usize },
    Heavy { vertex: usize, count: usize, total: usize },
}

/// `count / total >= (zeta/n)^(1 - mu)`, decided exactly.
pub fn meets_threshold(count: usize, total: usize, n: usize, zeta: usize, mu: Mu) -> bool {
    let (p, q) = (*mu.numer(), *mu.denom());
    let (q32, gap) = (q as u32, (q - p) as u32);
    let lhs = BigUint::from(count).pow(q32) * BigUint::from(n).pow(gap);
    let rhs = BigUint::from(total).pow(q32) * BigUint::from(zeta).pow(gap);
    lhs >= rhs
}

fn check_mu(mu: Mu) -> Result<()> {
    if mu <= Mu::zero() || mu >= Mu::one() {
        return Err(LabError::Params(format!("mu={mu} must lie in (0, 1)")));
    }
    Ok(())
}

fn frequencies(sets: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut c = vec![0; n];
    for s in sets {
        for &v in s {
            c[v] += 1;
        }
    }
    c
}

pub fn verify_sunflower(sf: &Sunflower, n: usize) -> std::result::Result<(), SunflowerViolation> {
    if sf.sets.is_empty() {
        return Err(SunflowerViolation::Empty);
    }
    for (i, s) in sf.sets.iter().enumerate() {
        if s.len() != sf.zeta {
            return Err(SunflowerViolation::WrongSize { set_index: i });
        }
        if let Some(&v) = sf.core.iter().find(|v| !s.contains(v)) {
            return Err(SunflowerViolation::MissingCore { set_index: i, vertex: v });
        }
    }
    let counts = frequencies(&sf.sets, n);
    let total = sf.sets.len();
    for (v, &c) in counts.iter().enumerate() {
        if c == 0 || sf.core.contains(&v) {
            continue;
        }
        let threshold_equal = meets_threshold(c, total, n, sf.zeta, sf.mu);
        let strictly_above = threshold_equal && !meets_threshold_eq(c, total, n, sf.zeta, sf.mu);
        if strictly_above {
            return Err(SunflowerViolation::Heavy { vertex: v, count: c, total });
        }
    }
    Ok(())
}

fn meets_threshold_eq(count: usize, total: usize, n: usize, zeta: usize, mu: Mu) -> bool {
    let (p, q) = (*mu.numer(), *mu.denom());
    let (q32, gap) = (q as u32, (q - p) as u32);
    BigUint::from(count).pow(q32) * BigUint::from(n).pow(gap)
        == BigUint::from(total).pow(q32) * BigUint::from(zeta).pow(gap)
}

/// One greedy restriction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub pivot: usize,
    pub before: usize,
    pub after: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub sunflower: Sunflower,
    pub witness: String,
    /// Size of the most popular witness class.
    pub popular_count: usize,
    pub domain_size: usize,
    pub q: usize,
    pub steps: Vec<Step>,
}

impl Extraction {
    /// |popular class| * 2^q >= |domain|.
    pub fn counting_bound_holds(&self) -> bool {
        BigUint::from(self.popular_count) << self.q >= BigUint::from(self.domain_size)
    }
}

/// Greedy core growth on an explicit family: while some non-core vertex
/// meets the threshold, keep only the sets containing the smallest such
/// vertex and add it to the core.
pub fn greedy_core(sets: Vec<Vec<usize>>, n: usize, zeta: usize, mu: Mu) -> Result<(Sunflower, Vec<Step>)> {
    check_mu(mu)?;
    if sets.is_empty() {
        return Err(LabError::Degenerate("empty family".into()));
    }
    if zeta > n {
        return Err(LabError::Params("zeta exceeds N".into()));
    }
    let mut current = sets;
    let mut core: Vec<usize> = Vec::new();
    let mut steps = Vec::new();
    loop {
        let counts = frequencies(&current, n);
        let total = current.len();
        let pivot = (0..n).find(|v| !core.contains(v) && counts[*v] > 0 && meets_threshold(counts[*v], total, n, zeta, mu));
        let Some(j) = pivot else { break };
        current.retain(|s| s.binary_search(&j).is_ok());
        steps.push(Step { pivot: j, before: total, after: current.len() });
        core.push(j);
    }
    core.sort_unstable();
    Ok((Sunflower { sets: current, core, mu, zeta }, steps))
}

/// Most popular witness (ties broken by the smaller bit string), then the
/// greedy core on its preimage.
pub fn extract_sunflower(wm: &WitnessMap, mu: Mu) -> Result<Extraction> {
    check_mu(mu)?;
    let mut classes: std::collections::BTreeMap<&str, Vec<Vec<usize>>> = Default::default();
    for e in wm.entries() {
        classes.entry(e.witness.as_str()).or_default().push(e.set.clone());
    }
    let (witness, family) = classes
        .into_iter()
        .fold(None::<(&str, Vec<Vec<usize>>)>, |best, (w, f)| match best {
            Some((bw, bf)) if bf.len() >= f.len() => Some((bw, bf)),
            _ => Some((w, f)),
        })
        .ok_or_else(|| LabError::Degenerate("empty witness map".into()))?;
    let popular_count = family.len();
    let (sunflower, steps) = greedy_core(family, wm.n(), wm.zeta(), mu)?;
    Ok(Extraction {
        sunflower,
        witness: witness.to_string(),
        popular_count,
        domain_size: wm.entries().len(),
        q: wm.q(),
        steps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreBound<T> {
    /// q / (mu log2(N / zeta)).
    pub strict: T,
    /// 2q / (mu log2 l), when l > 1 is supplied.
    pub relaxed: Option<T>,
}

pub fn core_size_bound<T: Real>(q: usize, mu: T, n: usize, zeta: usize, l: Option<usize>) -> Result<CoreBound<T>> {
    if zeta >= n || zeta == 0 {
        return Err(LabError::Params(format!("need 0 < zeta < N, got zeta={zeta}, N={n}")));
    }
    if mu <= T::zero() {
        return Err(LabError::Params("mu must be positive".into()));
    }
    let qf = T::count(q);
    let strict = qf / (mu * (T::count(n) / T::count(zeta)).log2());
    let relaxed = l.filter(|&l| l > 1).map(|l| (qf + qf) / (mu * T::count(l).log2()));
    Ok(CoreBound { strict, relaxed })
}

/// All zeta-supersets of `core` inside [n].
pub fn ideal_sunflower(n: usize, zeta: usize, core: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut core = core.to_vec();
    core.sort_unstable();
    core.dedup();
    if core.len() > zeta || core.iter().any(|&v| v >= n) {
        return Err(LabError::Params("core does not fit".into()));
    }
    let rest: Vec<usize> = (0..n).filter(|v| core.binary_search(v).is_err()).collect();
    Ok(combinations(rest.len(), zeta - core.len())
        .into_iter()
        .map(|pick| {
            let mut s: Vec<usize> = core.iter().copied().chain(pick.into_iter().map(|i| rest[i])).collect();
            s.sort_unstable();
            s
        })
        .collect())
}

/// All k-subsets of [n] in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if c[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        c[i] += 1;
        for j in i + 1..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

/// C(n, k) as an exact integer.
pub fn binomial_big(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    binomial(BigUint::from(n), BigUint::from(k))
}

/// C(n, k) when it fits in a `u64`.
pub fn binomial_u64(n: usize, k: usize) -> Option<u64> {
    binomial_big(n, k).to_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_count() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(4, 0), vec![Vec::<usize>::new()]);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert!(combinations(2, 3).is_empty());
        assert_eq!(binomial_u64(12, 3), Some(220));
    }

    #[test]
    fn uniform_map_has_empty_core() {
        let wm = WitnessMap::full_domain(8, 2, |_| "0".into()).unwrap();
        let ex = extract_sunflower(&wm, Mu::new(1, 2)).unwrap();
        assert!(ex.sunflower.core.is_empty());
        assert_eq!(ex.sunflower.sets.len(), 28);
        assert_eq!(verify_sunflower(&ex.sunflower, 8), Ok(()));
    }

    #[test]
    fn threshold_is_exact() {
        // (2/8)^(1/2) = 1/2 exactly.
        assert!(meets_threshold(1, 2, 8, 2, Mu::new(1, 2)));
        assert!(!meets_threshold(49, 100, 8, 2, Mu::new(1, 2)));
    }

    #[test]
    fn core_bound_arithmetic() {
        let b = core_size_bound(4, 0.5f64, 16, 4, Some(4)).unwrap();
        assert!((b.strict - 4.0).abs() < 1e-12);
        assert!((b.relaxed.unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(core_size_bound(0, 0.5f64, 16, 4, None).unwrap().strict, 0.0);
        assert!(core_size_bound(1, 0.5f64, 4, 4, None).is_err());
    }
}
