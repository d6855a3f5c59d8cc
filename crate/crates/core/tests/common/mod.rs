#![allow(dead_code)]

use expander_lab::graph::{ColoredGraph, Permutation};
use expander_lab::sampler::{sample_pml, Preset};
use expander_lab::stream_rng;

/// Random graph on `n` vertices built from `d` independent uniform matchings
/// (n even).
pub fn random_matchings(n: usize, d: usize, seed: u64) -> ColoredGraph {
    let mut rng = stream_rng(seed, 77);
    let matchings: Vec<Vec<(usize, usize)>> = (0..d)
        .map(|_| {
            let p = Permutation::random(n, &mut rng);
            (0..n / 2).map(|i| (p.apply(2 * i), p.apply(2 * i + 1))).collect()
        })
        .collect();
    ColoredGraph::from_matchings(n, &matchings).unwrap()
}

/// Named graphs used wherever a test quantifies over "the corpus".
pub fn corpus() -> Vec<(String, ColoredGraph)> {
    let mut out = Vec::new();
    for n in [4, 6, 8, 16, 64, 100] {
        out.push((format!("cycle{n}"), ColoredGraph::cycle(n).unwrap()));
    }
    out.push(("k4".into(), ColoredGraph::complete4()));
    out.push(("loops8".into(), ColoredGraph::self_loops(8, 3)));
    let k4 = ColoredGraph::complete4();
    let c8 = ColoredGraph::cycle(8).unwrap();
    let c8_3 = ColoredGraph::from_matchings(8, &[
        (0..4).map(|i| (2 * i, 2 * i + 1)).collect(),
        (0..4).map(|i| (2 * i + 1, (2 * i + 2) % 8)).collect(),
        vec![],
    ])
    .unwrap();
    out.push(("k4+k4".into(), ColoredGraph::disjoint_union(&[k4.clone(), k4]).unwrap()));
    out.push(("cycle8+loops".into(), ColoredGraph::disjoint_union(&[c8_3, ColoredGraph::self_loops(4, 3)]).unwrap()));
    out.push(("cycle8".into(), c8));
    for (i, n) in [16usize, 32, 64, 128].into_iter().enumerate() {
        out.push((format!("matchings{n}"), random_matchings(n, 4, i as u64)));
    }
    for (i, (n, l)) in [(64usize, 1usize), (64, 4), (256, 1), (256, 4), (128, 2)].into_iter().enumerate() {
        let mut rng = stream_rng(1234, i as u64);
        let g = sample_pml(&Preset::desk(n).params(vec![0, 1]).with_l(l), &mut rng).unwrap().graph;
        out.push((format!("pml{n}l{l}"), g));
    }
    out
}
