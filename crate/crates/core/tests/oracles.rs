mod common;

use std::collections::BTreeMap;

use expander_lab::adversary::{build_perm_relation, relation_stats, PermRelation, RelationStats};
use expander_lab::graph::{ColoredGraph, QueryContext};
use expander_lab::linalg::symmetric_eigenvalues;
use expander_lab::sampler::{
    condition_on_profile, sample_block_graph, sample_bs, sample_pml, triangle_count, DistributionParams, Preset,
};
use expander_lab::spectral::{
    lazy_walk, normalized_adjacency_dense, second_eigenvalue, MethodChoice, SpectralOptions,
};
use expander_lab::stats::tvd;
use expander_lab::sunflower::{binomial_u64, ideal_sunflower, meets_threshold};
use expander_lab::verifier::{
    acceptance_probability, brute_force_acceptance, repeated_acceptance, test_score_formula, RepetitionRule,
    WitnessState,
};
use expander_lab::{stream_rng, Mu};
use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::Pow;

fn sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn block_graph_matchings_are_uniform() {
    // Four points have exactly three perfect matchings.
    let mut rng = stream_rng(3, 0);
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    let trials = 30_000;
    for _ in 0..trials {
        let g = sample_block_graph(4, 1, &mut rng).unwrap();
        *counts.entry(g.follow(0, 0) as u32).or_default() += 1;
    }
    assert_eq!(counts.len(), 3);
    for &c in counts.values() {
        let p = c as f64 / trials as f64;
        assert!((p - 1.0 / 3.0).abs() < 5.0 * sigma(1.0 / 3.0, trials), "{counts:?}");
    }
}

#[test]
fn abort_probability_matches_binomial() {
    // Block 0 holds F plus Bin(6, 1/2) others; only an even split fits.
    let params = DistributionParams { n: 8, m: 8, l: 2, d: 2, f: vec![0, 1] };
    let exact = 1.0 - binomial_u64(6, 2).unwrap() as f64 / 64.0;
    assert_eq!(exact, 49.0 / 64.0);
    let mut rng = stream_rng(4, 0);
    let trials = 40_000;
    let aborts = (0..trials).filter(|_| sample_pml(&params, &mut rng).unwrap().aborted).count();
    let p = aborts as f64 / trials as f64;
    assert!((p - exact).abs() < 5.0 * sigma(exact, trials), "p={p}");
}

/// P(every block holds between lo and hi vertices) for F in block 0 and the
/// other vertices uniform over l blocks. Block b takes Bin(r, 1/(l-b)) of
/// the r vertices not yet placed.
fn exact_window_probability(n: usize, l: usize, f: usize, lo: usize, hi: usize) -> f64 {
    let ln_fact: Vec<f64> = (0..=n)
        .scan(0.0, |acc, k| {
            if k > 0 {
                *acc += (k as f64).ln();
            }
            Some(*acc)
        })
        .collect();
    let pmf = |r: usize, k: usize, p: f64| -> f64 {
        if p >= 1.0 {
            return if k == r { 1.0 } else { 0.0 };
        }
        (ln_fact[r] - ln_fact[k] - ln_fact[r - k] + k as f64 * p.ln() + (r - k) as f64 * (1.0 - p).ln()).exp()
    };
    let free = n - f;
    // left[r] = probability that r free vertices remain unplaced.
    let mut left = vec![0.0f64; free + 1];
    left[free] = 1.0;
    for b in 0..l {
        let p = 1.0 / (l - b) as f64;
        let mut next = vec![0.0; free + 1];
        for r in 0..=free {
            if left[r] == 0.0 {
                continue;
            }
            for k in 0..=r {
                let size = k + if b == 0 { f } else { 0 };
                if lo <= size && size <= hi {
                    next[r - k] += left[r] * pmf(r, k, p);
                }
            }
        }
        left = next;
    }
    left[0]
}

#[test]
fn window_probability_oracle() {
    let preset = Preset::desk(64);
    let (lo, hi) = preset.window();
    let params = preset.params(vec![0, 1]);
    let exact = exact_window_probability(64, preset.l, 2, lo, hi.min(params.zeta()));
    let mut rng = stream_rng(5, 0);
    let trials = 20_000;
    let inside = |sizes: &[usize]| sizes.iter().all(|&s| lo <= s && s <= hi);
    let mut hits = 0;
    for _ in 0..trials {
        let o = sample_pml(&params, &mut rng).unwrap();
        if !o.aborted && inside(&o.block_sizes(preset.l)) {
            hits += 1;
        }
    }
    let p = hits as f64 / trials as f64;
    assert!((p - exact).abs() < 5.0 * sigma(exact, trials), "p={p} exact={exact}");

    let desk = Preset::desk(256);
    let (lo, hi) = desk.window();
    let at_desk = exact_window_probability(256, desk.l, 2, lo, hi.min(desk.params(vec![]).zeta()));
    assert!(at_desk >= 0.9, "{at_desk}");
    // With M = N + 2l each block has only two spare slots, so even avoiding
    // an abort is unlikely.
    let tight = exact_window_probability(256, 4, 2, 0, 66);
    assert!(tight < 0.5, "{tight}");
    let params = DistributionParams { n: 256, m: 264, l: 4, d: 8, f: vec![0, 1] };
    let ok = (0..4000).filter(|_| !sample_pml(&params, &mut rng).unwrap().aborted).count();
    assert!((ok as f64 / 4000.0 - tight).abs() < 5.0 * sigma(tight, 4000));
}

#[test]
fn bs_sampler_matches_filtered_pml() {
    let params = DistributionParams { n: 8, m: 8, l: 2, d: 2, f: vec![] };
    let s = [0, 1, 2, 3];
    let sizes = |g: &ColoredGraph| g.components().sorted_sizes();
    let mut rng = stream_rng(6, 0);
    let a: Vec<Vec<usize>> = (0..6000)
        .map(|_| sizes(sample_bs(&params, &s, &mut rng, 10_000).unwrap().accepted().unwrap().graph()))
        .collect();
    let mut rng = stream_rng(6, 1);
    let inside = |o: &expander_lab::SampleOutcome, p: &expander_lab::ComponentPartition| {
        !o.aborted && expander_lab::sampler::has_component_inside(p, &s)
    };
    let b: Vec<Vec<usize>> = (0..6000)
        .map(|_| sizes(condition_on_profile(&params, &mut rng, inside, 10_000).unwrap().accepted().unwrap().graph()))
        .collect();
    assert!(tvd(&a, &b) < 0.04, "{}", tvd(&a, &b));
}

#[test]
fn cycle_eigenvalues_match_cosines() {
    for n in [6usize, 10, 32, 100] {
        let g = ColoredGraph::cycle(n).unwrap();
        let want = (2.0 * std::f64::consts::PI / n as f64).cos();
        for m in [MethodChoice::Dense, MethodChoice::Iterative] {
            let got = second_eigenvalue::<f64>(&g, &SpectralOptions::default().with_method(m)).unwrap();
            assert!((got.value - want).abs() < 1e-9, "n={n} {m:?} {} vs {want}", got.value);
        }
        let all = symmetric_eigenvalues(&normalized_adjacency_dense::<f64>(&g), n).unwrap();
        let mut expect: Vec<f64> = (0..n).map(|k| (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()).collect();
        expect.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in all.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn eigensolver_matches_nalgebra() {
    for (name, g) in common::corpus() {
        let n = g.n_vertices();
        let a = normalized_adjacency_dense::<f64>(&g);
        let ours = symmetric_eigenvalues(&a, n).unwrap();
        let mut theirs: Vec<f64> = DMatrix::from_row_slice(n, n, &a).symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (x, y) in ours.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-10, "{name}: {x} vs {y}");
        }
    }
}

#[test]
fn lazy_walk_matches_matrix_power() {
    for (name, g) in common::corpus().into_iter().filter(|(_, g)| g.n_vertices() <= 64) {
        let n = g.n_vertices();
        let a = DMatrix::from_row_slice(n, n, &normalized_adjacency_dense::<f64>(&g));
        let w = (DMatrix::identity(n, n) + a) * 0.5;
        let mut start = vec![0.0; n];
        start[n - 1] = 1.0;
        let ours = lazy_walk(&g, &start, 13).unwrap();
        let theirs = w.pow(13) * nalgebra::DVector::from_vec(start);
        for (x, y) in ours.probs.iter().zip(theirs.iter()) {
            assert!((x - y).abs() < 1e-12, "{name}");
        }
    }
}

#[test]
fn verifier_closed_form_matches_state_vector() {
    let mut rng = stream_rng(8, 0);
    for (i, n) in [4usize, 6, 8, 12, 16].into_iter().enumerate() {
        let g = common::random_matchings(n, 3, 100 + i as u64);
        for _ in 0..5 {
            let w = WitnessState::<f64>::random(n, &mut rng);
            let fast = acceptance_probability(&g, &w).unwrap();
            let mut ctx = QueryContext::new();
            let slow = brute_force_acceptance(&mut ctx, &g, &w).unwrap();
            assert!((fast.p_step2 - slow.p_step2).abs() < 1e-12);
            assert!((fast.p_accept - slow.p_accept).abs() < 1e-12);
            assert!((fast.p_step2 - test_score_formula(&g, &w).unwrap()).abs() < 1e-12);
            assert_eq!(ctx.total(), 2);
        }
    }
}

#[test]
fn majority_matches_binomial_sum() {
    for reps in [1u64, 3, 5, 9, 21] {
        for p in [0.1f64, 0.45, 0.5, 0.8] {
            let k = reps / 2 + 1;
            let direct: f64 = (k..=reps)
                .map(|j| binomial_u64(reps as usize, j as usize).unwrap() as f64 * p.powi(j as i32) * (1.0 - p).powi((reps - j) as i32))
                .sum();
            let got = repeated_acceptance(p, reps, RepetitionRule::Majority).unwrap();
            assert!((got - direct).abs() < 1e-12, "reps={reps} p={p}");
        }
    }
}

#[test]
fn threshold_matches_rational_powers() {
    // count/total > (zeta/N)^(1-mu)  <=>  (count/total)^q > (zeta/N)^(q-p)
    for n in [6usize, 9, 12, 20] {
        for zeta in 1..n {
            for total in 1..12usize {
                for count in 0..=total {
                    for (p, q) in [(1u64, 2u64), (1, 3), (2, 3), (3, 4)] {
                        let freq = BigRational::new(count.into(), total.into());
                        let base = BigRational::new(zeta.into(), n.into());
                        let lhs: BigRational = Pow::pow(freq, q as u32);
                        let rhs: BigRational = Pow::pow(base, (q - p) as u32);
                        let want = lhs >= rhs;
                        assert_eq!(meets_threshold(count, total, n, zeta, Mu::new(p, q)), want);
                    }
                }
            }
        }
    }
}

/// Recounts l_{x,i} and l_{y,i} for every related pair straight from the
/// definition, with no shared accumulators.
fn slow_stats(r: &PermRelation) -> RelationStats {
    let width = 2 * r.n;
    let partners_x = |x: usize| r.pairs.iter().filter(move |p| p.0 == x).map(|p| p.1);
    let partners_y = |y: usize| r.pairs.iter().filter(move |p| p.1 == y).map(|p| p.0);
    let deg_x: Vec<u64> = (0..r.xs.len()).map(|x| partners_x(x).count() as u64).collect();
    let deg_y: Vec<u64> = (0..r.ys.len()).map(|y| partners_y(y).count() as u64).collect();
    let mut best = [0u64; 2];
    for &(x, y) in &r.pairs {
        for i in 0..width {
            if r.xs[x].table[i] == r.ys[y].table[i] {
                continue;
            }
            let lx = partners_x(x).filter(|&y2| r.ys[y2].table[i] != r.xs[x].table[i]).count() as u64;
            let ly = partners_y(y).filter(|&x2| r.xs[x2].table[i] != r.ys[y].table[i]).count() as u64;
            best[i / r.n] = best[i / r.n].max(lx * ly);
        }
    }
    RelationStats {
        m_lo: *deg_x.iter().min().unwrap(),
        m_hi: *deg_x.iter().max().unwrap(),
        mp_lo: *deg_y.iter().min().unwrap(),
        mp_hi: *deg_y.iter().max().unwrap(),
        l_max: best[0].max(best[1]),
        l_max_forward: best[0],
        l_max_inverse: best[1],
        pairs: r.pairs.len() as u64,
        x_count: r.xs.len() as u64,
        y_count: r.ys.len() as u64,
    }
}

#[test]
fn relation_stats_match_slow_recount() {
    let n = 5;
    for core in [vec![], vec![2]] {
        let ideal = ideal_sunflower(n, 2, &core).unwrap();
        for sunflower in [ideal.clone(), ideal.iter().step_by(2).cloned().collect(), vec![ideal[1].clone()]] {
            let r = build_perm_relation(&sunflower, &ideal, 2, n).unwrap();
            assert_eq!(relation_stats(&r).unwrap(), slow_stats(&r));
            // Related pairs differ exactly on the symmetric difference, in
            // both tables.
            for &(x, y) in &r.pairs {
                let diff = (0..n).filter(|&i| r.xs[x].table[i] != r.ys[y].table[i]).count();
                let diff_inv = (n..2 * n).filter(|&i| r.xs[x].table[i] != r.ys[y].table[i]).count();
                assert_eq!(diff, diff_inv);
                assert!(diff % 2 == 0 && diff <= 4);
            }
        }
    }
}

#[test]
fn triangle_count_matches_trace() {
    // For a simple graph, 6 * triangles = trace(B^3) with B the 0/1 adjacency.
    for (name, g) in common::corpus() {
        let n = g.n_vertices();
        let mut b = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            for k in g.simple_neighbors(j) {
                b[(j, k)] = 1.0;
            }
        }
        let trace = (&b * &b * &b).trace();
        assert_eq!(6 * triangle_count(&g).count, trace.round() as u64, "{name}");
    }
}
