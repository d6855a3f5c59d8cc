//! Colored regular graphs used as classical oracles.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

const MAGIC: &[u8; 4] = b"XPGR";
const FORMAT_VERSION: u32 = 1;

/// First defect found while checking an adjacency table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    WrongLength { expected: usize, got: usize },
    OutOfRange { vertex: usize, color: usize, target: usize },
    NotInvolution { vertex: usize, color: usize, target: usize, back: usize },
}

impl Violation {
    /// The offending (vertex, color) slot, if the table had the right length.
    pub fn slot(&self) -> Option<(usize, usize)> {
        match *self {
            Violation::WrongLength { .. } => None,
            Violation::OutOfRange { vertex, color, .. }
            | Violation::NotInvolution { vertex, color, .. } => Some((vertex, color)),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongLength { expected, got } => {
                write!(f, "table has {got} entries, expected {expected}")
            }
            Violation::OutOfRange { vertex, color, target } => {
                write!(f, "adj({vertex},{color}) = {target} is not a vertex")
            }
            Violation::NotInvolution { vertex, color, target, back } => write!(
                f,
                "adj({vertex},{color}) = {target} but adj({target},{color}) = {back}"
            ),
        }
    }
}

/// Checks totality and the per-color involution property of a raw table
/// stored row-major as `adj[j * d + color]`.
pub fn validate_table(n: usize, d: usize, adj: &[u32]) -> std::result::Result<(), Violation> {
    if adj.len() != n * d {
        return Err(Violation::WrongLength { expected: n * d, got: adj.len() });
    }
    for j in 0..n {
        for c in 0..d {
            let t = adj[j * d + c] as usize;
            if t >= n {
                return Err(Violation::OutOfRange { vertex: j, color: c, target: t });
            }
            let back = adj[t * d + c] as usize;
            if back != j {
                return Err(Violation::NotInvolution { vertex: j, color: c, target: t, back });
            }
        }
    }
    Ok(())
}

/// A d-regular graph whose edges carry colors `0..d`, each color class being
/// a perfect matching once self-loops are allowed.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ColoredGraph {
    n: usize,
    d: usize,
    adj: Vec<u32>,
}

impl ColoredGraph {
    pub fn new(n: usize, d: usize, adj: Vec<u32>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(LabError::Params(format!("need N >= 1 and d >= 1, got N={n}, d={d}")));
        }
        if n > u32::MAX as usize {
            return Err(LabError::TooLarge(format!("N={n}")));
        }
        validate_table(n, d, &adj).map_err(LabError::InvalidGraph)?;
        Ok(Self { n, d, adj })
    }

    /// Every slot is a self-loop; adjacency is the identity.
    pub fn self_loops(n: usize, d: usize) -> Self {
        assert!(n > 0 && d > 0);
        let adj = (0..n).flat_map(|j| std::iter::repeat_n(j as u32, d)).collect();
        Self { n, d, adj }
    }

    /// Builds a graph from one partial matching per color; unmatched slots
    /// become self-loops.
    pub fn from_matchings(n: usize, matchings: &[Vec<(usize, usize)>]) -> Result<Self> {
        let d = matchings.len();
        if n == 0 || d == 0 {
            return Err(LabError::Params("need N >= 1 and at least one color".into()));
        }
        let mut adj: Vec<u32> = (0..n).flat_map(|j| std::iter::repeat_n(j as u32, d)).collect();
        let mut used = vec![false; n * d];
        for (c, m) in matchings.iter().enumerate() {
            for &(a, b) in m {
                for v in [a, b] {
                    if v >= n {
                        return Err(LabError::VertexOutOfRange { vertex: v, n });
                    }
                    if used[v * d + c] {
                        return Err(LabError::Params(format!(
                            "vertex {v} matched twice in color {c}"
                        )));
                    }
                    used[v * d + c] = true;
                }
                if a == b {
                    return Err(LabError::Params(format!("pair ({a},{a}) in color {c}")));
                }
                adj[a * d + c] = b as u32;
                adj[b * d + c] = a as u32;
            }
        }
        Self::new(n, d, adj)
    }

    /// The 2-colored cycle: color 0 joins (2i, 2i+1), color 1 joins
    /// (2i+1, 2i+2 mod N). `n` must be even.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(LabError::Params(format!("cycle needs even N >= 2, got {n}")));
        }
        let even: Vec<_> = (0..n / 2).map(|i| (2 * i, 2 * i + 1)).collect();
        let odd: Vec<_> = if n == 2 {
            vec![(0, 1)]
        } else {
            (0..n / 2).map(|i| (2 * i + 1, (2 * i + 2) % n)).collect()
        };
        Self::from_matchings(n, &[even, odd])
    }

    /// K4 with its proper 3-edge-coloring.
    pub fn complete4() -> Self {
        Self::from_matchings(
            4,
            &[vec![(0, 1), (2, 3)], vec![(0, 2), (1, 3)], vec![(0, 3), (1, 2)]],
        )
        .expect("K4 coloring is valid")
    }

    /// Vertex-disjoint union; vertices of `parts[i]` are shifted past the
    /// earlier parts.
    pub fn disjoint_union(parts: &[ColoredGraph]) -> Result<Self> {
        let d = parts.first().ok_or_else(|| LabError::Params("empty union".into()))?.d;
        let mut adj = Vec::new();
        let mut offset = 0u32;
        for p in parts {
            if p.d != d {
                return Err(LabError::Params("union of graphs with different degrees".into()));
            }
            adj.extend(p.adj.iter().map(|&t| t + offset));
            offset += p.n as u32;
        }
        Self::new(offset as usize, d, adj)
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    /// Raw row-major table, `table()[j * d + color]`.
    pub fn table(&self) -> &[u32] {
        &self.adj
    }

    /// Uncounted table lookup for analysis code. Panics when out of range;
    /// oracle access goes through [`QueryContext`].
    #[inline]
    pub fn follow(&self, j: usize, color: usize) -> usize {
        assert!(color < self.d, "color {color} out of range");
        self.adj[j * self.d + color] as usize
    }

    pub fn check(&self, j: usize, color: usize) -> Result<()> {
        if j >= self.n {
            return Err(LabError::VertexOutOfRange { vertex: j, n: self.n });
        }
        if color >= self.d {
            return Err(LabError::ColorOutOfRange { color, d: self.d });
        }
        Ok(())
    }

    pub fn validate(&self) -> std::result::Result<(), Violation> {
        validate_table(self.n, self.d, &self.adj)
    }

    pub fn is_self_loop(&self, j: usize, color: usize) -> bool {
        self.follow(j, color) == j
    }

    pub fn self_loop_count(&self) -> usize {
        (0..self.n).map(|j| (0..self.d).filter(|&c| self.is_self_loop(j, c)).count()).sum()
    }

    /// `g'(j, c) = pi^-1(g(pi(j), c))`.
    pub fn relabel(&self, pi: &Permutation) -> Result<Self> {
        if pi.len() != self.n {
            return Err(LabError::SizeMismatch { expected: self.n, got: pi.len() });
        }
        let mut adj = vec![0u32; self.n * self.d];
        for j in 0..self.n {
            let pj = pi.apply(j);
            for c in 0..self.d {
                adj[j * self.d + c] = pi.apply_inverse(self.follow(pj, c)) as u32;
            }
        }
        Ok(Self { n: self.n, d: self.d, adj })
    }

    /// Subgraph on a vertex set closed under every color, with vertices
    /// renumbered in the given order.
    pub fn induced(&self, members: &[usize]) -> Result<Self> {
        let mut local = vec![u32::MAX; self.n];
        for (i, &v) in members.iter().enumerate() {
            self.check(v, 0)?;
            local[v] = i as u32;
        }
        let mut adj = Vec::with_capacity(members.len() * self.d);
        for &v in members {
            for c in 0..self.d {
                let t = local[self.follow(v, c)];
                if t == u32::MAX {
                    return Err(LabError::Params(format!("vertex set not closed at ({v},{c})")));
                }
                adj.push(t);
            }
        }
        Self::new(members.len(), self.d, adj)
    }

    pub fn components(&self) -> ComponentPartition {
        ComponentPartition::of(self)
    }

    /// Sorted distinct neighbors other than `j` itself.
    pub fn simple_neighbors(&self, j: usize) -> Vec<usize> {
        let mut v: Vec<usize> =
            (0..self.d).map(|c| self.follow(j, c)).filter(|&t| t != j).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.adj.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        for &t in &self.adj {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| LabError::Format(m.to_string());
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(bad("missing graph header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(LabError::Format(format!("unsupported graph format version {version}")));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if n.checked_mul(d).and_then(|x| x.checked_mul(4)) != Some(body.len()) {
            return Err(bad("body length does not match header"));
        }
        let adj = body.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        Self::new(n, d, adj)
    }

    /// Text form: a `j,color,neighbor` header followed by one row per slot.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,color,neighbor\n");
        for j in 0..self.n {
            for c in 0..self.d {
                s.push_str(&format!("{j},{c},{}\n", self.follow(j, c)));
            }
        }
        s
    }

    /// Parses the text form. N and d are inferred from the largest indices;
    /// every slot must appear exactly once. Blank lines and `#` comments are
    /// skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("j,") {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(LabError::Format(format!("line {}: expected 3 fields", lineno + 1)));
            }
            let mut vals = [0usize; 3];
            for (v, p) in vals.iter_mut().zip(&parts) {
                *v = p
                    .parse()
                    .map_err(|_| LabError::Format(format!("line {}: bad integer {p:?}", lineno + 1)))?;
            }
            rows.push(vals);
        }
        let n = rows.iter().map(|r| r[0].max(r[2]) + 1).max().unwrap_or(0);
        let d = rows.iter().map(|r| r[1] + 1).max().unwrap_or(0);
        if n == 0 || d == 0 {
            return Err(LabError::Format("no rows".into()));
        }
        let mut adj = vec![u32::MAX; n * d];
        for [j, c, t] in rows {
            let slot = &mut adj[j * d + c];
            if *slot != u32::MAX {
                return Err(LabError::Format(format!("slot ({j},{c}) given twice")));
            }
            *slot = t as u32;
        }
        if let Some(i) = adj.iter().position(|&t| t == u32::MAX) {
            return Err(LabError::Format(format!("slot ({},{}) missing", i / d, i % d)));
        }
        Self::new(n, d, adj)
    }

    /// Accepts either the binary or the text form.
    pub fn parse_any(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(MAGIC) {
            Self::from_bytes(bytes)
        } else {
            let text = std::str::from_utf8(bytes).map_err(|_| LabError::Format("not UTF-8".into()))?;
            Self::from_csv(text)
        }
    }
}

/// Bijection on `0..n` with its inverse cached.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    map: Vec<u32>,
    inv: Vec<u32>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut inv = vec![u32::MAX; n];
        for (i, &m) in map.iter().enumerate() {
            if m >= n {
                return Err(LabError::InvalidPermutation(format!("image {m} of {i} out of range")));
            }
            if inv[m] != u32::MAX {
                return Err(LabError::InvalidPermutation(format!("{m} hit twice")));
            }
            inv[m] = i as u32;
        }
        Ok(Self { map: map.into_iter().map(|m| m as u32).collect(), inv })
    }

    pub fn identity(n: usize) -> Self {
        let map: Vec<u32> = (0..n as u32).collect();
        Self { inv: map.clone(), map }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        map.shuffle(rng);
        Self::new(map).expect("shuffle is a bijection")
    }

    /// Transposition of `a` and `b`.
    pub fn swap(n: usize, a: usize, b: usize) -> Result<Self> {
        let mut map: Vec<usize> = (0..n).collect();
        if a >= n || b >= n {
            return Err(LabError::InvalidPermutation("swap index out of range".into()));
        }
        map.swap(a, b);
        Self::new(map)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.map[i] as usize
    }

    #[inline]
    pub fn apply_inverse(&self, i: usize) -> usize {
        self.inv[i] as usize
    }

    pub fn inverse(&self) -> Self {
        Self { map: self.inv.clone(), inv: self.map.clone() }
    }

    /// `(self ∘ other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        let map: Vec<usize> = (0..self.len()).map(|i| self.apply(other.apply(i))).collect();
        Self::new(map).expect("composition of bijections")
    }

    pub fn forward(&self) -> &[u32] {
        &self.map
    }

    pub fn backward(&self) -> &[u32] {
        &self.inv
    }
}

/// Connected components, labelled in order of their smallest vertex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentPartition {
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
}

impl ComponentPartition {
    pub fn of(g: &ColoredGraph) -> Self {
        let n = g.n_vertices();
        let mut labels = vec![u32::MAX; n];
        let mut sizes = Vec::new();
        let mut queue = VecDeque::new();
        for s in 0..n {
            if labels[s] != u32::MAX {
                continue;
            }
            let id = sizes.len() as u32;
            labels[s] = id;
            queue.push_back(s);
            let mut size = 0;
            while let Some(v) = queue.pop_front() {
                size += 1;
                for c in 0..g.degree() {
                    let t = g.follow(v, c);
                    if labels[t] == u32::MAX {
                        labels[t] = id;
                        queue.push_back(t);
                    }
                }
            }
            sizes.push(size);
        }
        Self { labels, sizes }
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v] as usize
    }

    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&v| self.labels[v] as usize == c).collect()
    }

    pub fn all_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count()];
        for (v, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(v);
        }
        out
    }

    pub fn sorted_sizes(&self) -> Vec<usize> {
        let mut s = self.sizes.clone();
        s.sort_unstable();
        s
    }

    pub fn is_connected(&self) -> bool {
        self.count() == 1
    }
}

/// Per-label oracle query counters. The total is always the sum of labels.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryContext {
    charges: BTreeMap<String, u64>,
}

impl QueryContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// Handle that charges every lookup to `label`.
    pub fn oracle<'a>(&'a mut self, g: &'a ColoredGraph, label: &str) -> Oracle<'a> {
        self.charges.entry(label.to_string()).or_insert(0);
        Oracle { g, ctx: self, label: label.to_string() }
    }

    pub fn charge(&mut self, label: &str, n: u64) {
        *self.charges.entry(label.to_string()).or_insert(0) += n;
    }

    pub fn total(&self) -> u64 {
        self.charges.values().sum()
    }

    pub fn charges(&self) -> &BTreeMap<String, u64> {
        &self.charges
    }

    pub fn get(&self, label: &str) -> u64 {
        self.charges.get(label).copied().unwrap_or(0)
    }

    pub fn absorb(&mut self, other: &QueryContext) {
        for (k, v) in &other.charges {
            self.charge(k, *v);
        }
    }
}

/// Counted access to a graph oracle.
pub struct Oracle<'a> {
    g: &'a ColoredGraph,
    ctx: &'a mut QueryContext,
    label: String,
}

impl Oracle<'_> {
    /// One classical oracle query.
    pub fn neighbor(&mut self, j: usize, color: usize) -> Result<usize> {
        self.g.check(j, color)?;
        *self.ctx.charges.get_mut(&self.label).expect("label registered") += 1;
        Ok(self.g.follow(j, color))
    }

    /// Records one query made in superposition by a simulated circuit.
    pub fn charge_superposed(&mut self) {
        *self.ctx.charges.get_mut(&self.label).expect("label registered") += 1;
    }

    pub fn graph(&self) -> &ColoredGraph {
        self.g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_loops_are_valid() {
        let g = ColoredGraph::self_loops(8, 3);
        assert_eq!(g.validate(), Ok(()));
        assert_eq!(g.follow(3, 2), 3);
        assert_eq!(g.components().sizes, vec![1; 8]);
    }

    #[test]
    fn broken_involution_reported_at_first_slot() {
        let mut adj: Vec<u32> = (0..4u32).flat_map(|j| [j, j]).collect();
        adj[1] = 1; // adj(0,1) = 1
        adj[3] = 2; // adj(1,1) = 2
        adj[5] = 1; // adj(2,1) = 1
        let err = validate_table(4, 2, &adj).unwrap_err();
        assert_eq!(err.slot(), Some((0, 1)));
        assert!(ColoredGraph::new(4, 2, adj).is_err());
    }

    #[test]
    fn cycle_neighbors() {
        let g = ColoredGraph::cycle(8).unwrap();
        assert_eq!(g.follow(0, 0), 1);
        assert_eq!(g.follow(1, 0), 0);
        assert_eq!(g.follow(1, 1), 2);
        assert_eq!(g.follow(7, 1), 0);
        assert!(g.components().is_connected());
    }

    #[test]
    fn queries_are_counted_and_checked() {
        let g = ColoredGraph::cycle(4).unwrap();
        let mut ctx = QueryContext::new();
        let mut o = ctx.oracle(&g, "probe");
        assert_eq!(o.neighbor(0, 0).unwrap(), 1);
        assert!(o.neighbor(4, 0).is_err());
        assert!(o.neighbor(0, 2).is_err());
        assert_eq!(ctx.total(), 1);
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let g = ColoredGraph::complete4();
        assert_eq!(ColoredGraph::from_csv(&g.to_csv()).unwrap(), g);
        assert_eq!(ColoredGraph::from_bytes(&g.to_bytes()).unwrap(), g);
        assert_eq!(ColoredGraph::parse_any(&g.to_bytes()).unwrap(), g);
        assert_eq!(ColoredGraph::parse_any(g.to_csv().as_bytes()).unwrap(), g);
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(ColoredGraph::from_csv("0,0,1\n").is_err());
        assert!(ColoredGraph::from_bytes(b"XPGR").is_err());
        let mut b = ColoredGraph::complete4().to_bytes();
        b.pop();
        assert!(ColoredGraph::from_bytes(&b).is_err());
    }
}
