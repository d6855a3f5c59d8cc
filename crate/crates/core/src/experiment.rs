//! Scripted experiments: a versioned TOML config in, a JSON report and a
//! long-format CSV table out.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, IteratorRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    analytic_l_max_bound, analytic_preconditions, build_perm_relation, closed_form_graph_bound,
    closed_form_permutation_bound, combine_stats, distinguishing_lower_bound, query_lower_bound, relation_stats,
    PermRelation,
};
use crate::error::{LabError, Result};
use crate::graph::{ColoredGraph, QueryContext};
use crate::rng::{stream_rng, LabRng};
use crate::sampler::{
    condition_on_profile, profile, sample_bs_tilde_planted, sample_pml, triangle_count, DistributionParams, Preset,
};
use crate::spectral::{second_eigenvalue, SpectralOptions};
use crate::stats::{wilson_interval, Estimate};
use crate::sunflower::{core_size_bound, extract_sunflower, ideal_sunflower, verify_sunflower, Sunflower, WitnessMap};
use crate::verifier::{
    acceptance_probability, optimal_acceptance, optimal_acceptance_from_lambda2, repeated_acceptance, solve_reps,
    RepetitionRule, WitnessState, QUERIES_PER_RUN, VERIFIER_LABEL,
};
use crate::walk::{
    abort_envelope, expander_walk_sample_f, log_schedule_t, t_for_target, walk_delta, walk_vs_uniform_deviation,
    WalkSampleParams,
};
use crate::Mu;

pub const CONFIG_VERSION: u32 = 1;

pub const EXPERIMENTS: [&str; 9] = [
    "concentration",
    "qma-completeness",
    "qma-soundness",
    "walk-abort",
    "d1-vs-d2",
    "sunflower-pipeline",
    "adversary-tiny",
    "triangles",
    "wrapup",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub experiment: String,
    pub seed: u64,
    pub preset: String,
    pub n: usize,
    pub n_samples: usize,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default)]
    pub options: Options,
    /// Output directory; relative paths resolve against the config file.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// Experiment-specific knobs. Unset fields take the documented defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation_trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resamples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_retries: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_threshold: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_core: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_map: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completeness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soundness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completeness_report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soundness_report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<RepetitionRule>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Format(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(LabError::Format(format!("config version {} (expected {CONFIG_VERSION})", self.version)));
        }
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(LabError::Params(format!("unknown experiment {:?}", self.experiment)));
        }
        Preset::by_name(&self.preset, self.n)?;
        if self.n < 2 {
            return Err(LabError::Params("n must be at least 2".into()));
        }
        if let Some(mu) = &self.options.mu {
            parse_mu(mu)?;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        match &self.base_dir {
            Some(b) if Path::new(p).is_relative() => b.join(p),
            _ => PathBuf::from(p),
        }
    }

    /// Every referenced input file must exist.
    pub fn check_files(&self) -> Result<()> {
        let o = &self.options;
        for p in [&o.witness_map, &o.completeness_report, &o.soundness_report].into_iter().flatten() {
            let path = self.resolve(p);
            if !path.is_file() {
                return Err(LabError::Params(format!("referenced file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.output.as_deref().map(|p| self.resolve(p))
    }

    fn threshold(&self, key: &str) -> Result<f64> {
        self.thresholds
            .get(key)
            .copied()
            .ok_or_else(|| LabError::Params(format!("experiment {} needs threshold `{key}`", self.experiment)))
    }

    fn preset_at(&self, n: usize) -> Result<Preset> {
        Preset::by_name(&self.preset, n)
    }

    fn mu(&self) -> Result<Mu> {
        parse_mu(self.options.mu.as_deref().unwrap_or("1/2"))
    }
}

/// Parses "p/q" with 0 < p/q < 1.
pub fn parse_mu(s: &str) -> Result<Mu> {
    let (p, q) = s.split_once('/').ok_or_else(|| LabError::Format(format!("mu {s:?} is not p/q")))?;
    let p: u64 = p.trim().parse().map_err(|_| LabError::Format(format!("bad mu numerator in {s:?}")))?;
    let q: u64 = q.trim().parse().map_err(|_| LabError::Format(format!("bad mu denominator in {s:?}")))?;
    if p == 0 || q == 0 || p >= q || q > 64 {
        return Err(LabError::Params(format!("mu={s} must satisfy 0 < mu < 1 with denominator <= 64")));
    }
    Ok(Mu::new(p, q))
}

fn mu_f64(mu: Mu) -> f64 {
    *mu.numer() as f64 / *mu.denom() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    AtLeast,
    AtMost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub threshold: String,
    pub direction: Direction,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    /// The statement this metric tests.
    pub claim: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<[f64; 2]>,
    pub checks: Vec<Check>,
}

impl Metric {
    pub fn new(name: &str, claim: &str, value: f64) -> Self {
        Self { name: name.into(), claim: claim.into(), n: None, l: None, value, ci: None, checks: Vec::new() }
    }

    pub fn at(mut self, n: usize, l: usize) -> Self {
        self.n = Some(n);
        self.l = Some(l);
        self
    }

    pub fn ci(mut self, lo: f64, hi: f64) -> Self {
        self.ci = Some([lo, hi]);
        self
    }

    /// Adds a check of `value` against `bound`, recorded under the config
    /// threshold `key` that produced it.
    pub fn check(mut self, key: &str, direction: Direction, bound: f64) -> Self {
        let pass = match direction {
            Direction::AtLeast => self.value >= bound,
            Direction::AtMost => self.value <= bound,
        };
        self.checks.push(Check { threshold: key.into(), direction, bound, pass });
        self
    }

    pub fn at_least(self, cfg: &ExperimentConfig, key: &str) -> Result<Self> {
        let b = cfg.threshold(key)?;
        Ok(self.check(key, Direction::AtLeast, b))
    }

    pub fn at_most(self, cfg: &ExperimentConfig, key: &str) -> Result<Self> {
        let b = cfg.threshold(key)?;
        Ok(self.check(key, Direction::AtMost, b))
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub metrics: Vec<Metric>,
    pub queries: BTreeMap<String, u64>,
    pub total_queries: u64,
    pub pass: bool,
}

impl ExperimentReport {
    fn assemble(cfg: &ExperimentConfig, metrics: Vec<Metric>, ctx: &QueryContext) -> Self {
        Self {
            experiment: cfg.experiment.clone(),
            config: cfg.clone(),
            pass: metrics.iter().all(Metric::pass),
            metrics,
            queries: ctx.charges().clone(),
            total_queries: ctx.total(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| LabError::Format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Format(format!("report: {e}")))
    }
}

pub const PLOT_HEADER: &str = "experiment,metric,n,l,value,ci_lo,ci_hi,pass";

/// One row per metric in long format.
pub fn plot_table(report: &ExperimentReport) -> String {
    let mut out = String::from(PLOT_HEADER);
    out.push('\n');
    let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
    for m in &report.metrics {
        let (lo, hi) = m.ci.map(|[a, b]| (a.to_string(), b.to_string())).unwrap_or_default();
        let pass = if m.checks.is_empty() { String::new() } else { m.pass().to_string() };
        let _ = writeln!(out, "{},{},{},{},{},{},{},{}", report.experiment, m.name, opt(m.n), opt(m.l), m.value, lo, hi, pass);
    }
    out
}

/// Writes `<experiment>.csv` into `dir` and returns its path.
pub fn emit_plot_tables(report: &ExperimentReport, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(format!("{}.csv", report.experiment));
    std::fs::create_dir_all(dir).map_err(|e| LabError::Format(format!("{}: {e}", dir.display())))?;
    std::fs::write(&path, plot_table(report)).map_err(|e| LabError::Format(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Writes `<experiment>.json` into `dir` and returns its path.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(format!("{}.json", report.experiment));
    std::fs::create_dir_all(dir).map_err(|e| LabError::Format(format!("{}: {e}", dir.display())))?;
    std::fs::write(&path, report.to_json()?).map_err(|e| LabError::Format(format!("{}: {e}", path.display())))?;
    Ok(path)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut ctx = QueryContext::new();
    let metrics = match cfg.experiment.as_str() {
        "concentration" => concentration(cfg)?,
        "qma-completeness" => completeness(cfg, &mut ctx)?,
        "qma-soundness" => soundness(cfg)?,
        "walk-abort" => walk_abort(cfg, &mut ctx)?,
        "d1-vs-d2" => d1_vs_d2(cfg)?,
        "sunflower-pipeline" => sunflower_pipeline(cfg)?,
        "adversary-tiny" => adversary_tiny(cfg)?,
        "triangles" => triangles(cfg)?,
        "wrapup" => wrapup(cfg, &mut ctx)?,
        other => return Err(LabError::Params(format!("unknown experiment {other:?}"))),
    };
    Ok(ExperimentReport::assemble(cfg, metrics, &ctx))
}

fn stream(phase: u64, i: usize) -> u64 {
    (phase << 40) | i as u64
}

/// Runs `f` on every index in parallel, keeping index order.
fn fan_out<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..count).into_par_iter().map(f).collect()
}

fn random_subset(n: usize, k: usize, rng: &mut LabRng) -> Vec<usize> {
    let mut s = (0..n).choose_multiple(rng, k);
    s.sort_unstable();
    s
}

fn concentration(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let ns = cfg.options.ns.clone().unwrap_or_else(|| vec![cfg.n]);
    let f_size = cfg.options.f_size.unwrap_or(2);
    let mut metrics = Vec::new();
    let mut fractions = Vec::new();
    for (phase, &n) in ns.iter().enumerate() {
        let preset = cfg.preset_at(n)?;
        let (lo, hi) = preset.window();
        let good = profile::good(preset.l, lo, hi);
        let flags = fan_out(cfg.n_samples, |i| {
            let mut rng = stream_rng(cfg.seed, stream(phase as u64, i));
            let f = random_subset(n, f_size, &mut rng);
            let out = sample_pml(&preset.params(f), &mut rng)?;
            let parts = out.graph().components();
            Ok((good(&out, &parts), out.aborted))
        })?;
        let hits = flags.iter().filter(|x| x.0).count();
        let aborts = flags.iter().filter(|x| x.1).count();
        let frac = hits as f64 / cfg.n_samples.max(1) as f64;
        let (ci_lo, ci_hi) = wilson_interval(hits, cfg.n_samples, 1.96);
        let mut m = Metric::new(
            "fraction_good",
            "samples with exactly l connected blocks of size within [(1-gamma)z, (1+gamma)z]",
            frac,
        )
        .at(n, preset.l)
        .ci(ci_lo, ci_hi);
        if n == cfg.n {
            m = m.at_least(cfg, "fraction_good_min")?;
        }
        metrics.push(m);
        metrics.push(
            Metric::new("abort_fraction", "samples whose block assignment overflowed", aborts as f64 / cfg.n_samples.max(1) as f64)
                .at(n, preset.l),
        );
        fractions.push(frac);
    }
    if fractions.len() > 1 {
        let step = fractions.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        metrics.push(
            Metric::new("fraction_good_min_step", "the good fraction improves as N grows", step)
                .at_least(cfg, "trend_min_step")?,
        );
    }
    Ok(metrics)
}

fn charge_runs(ctx: &mut QueryContext, runs: u64) {
    ctx.charge(VERIFIER_LABEL, runs * QUERIES_PER_RUN);
}

fn completeness(cfg: &ExperimentConfig, ctx: &mut QueryContext) -> Result<Vec<Metric>> {
    let preset = cfg.preset_at(cfg.n)?;
    let params = preset.params(Vec::new());
    let window = preset.window();
    let retries = cfg.options.max_retries.unwrap_or(1000);
    let n = cfg.n;
    let gamma = preset.gamma;
    struct Row {
        ideal_dev: f64,
        subset_margin: f64,
        s_accept: f64,
        log_weight: f64,
        runs: u64,
    }
    let rows = fan_out(cfg.n_samples, |i| {
        let mut rng = stream_rng(cfg.seed, stream(0, i));
        let Some(p) = sample_bs_tilde_planted(&params, window, &mut rng, retries)?.accepted() else {
            return Ok(None);
        };
        let g = p.outcome.graph();
        let mut ideal_dev: f64 = 0.0;
        let mut subset_margin = f64::INFINITY;
        let mut runs = 0;
        for comp in g.components().all_members() {
            if comp.len() == n {
                continue;
            }
            let pi = acceptance_probability(g, &WitnessState::<f64>::ideal(n, &comp)?)?.p_accept;
            ideal_dev = ideal_dev.max((1.0 - pi).abs());
            let ps = acceptance_probability(g, &WitnessState::<f64>::subset(n, &comp)?)?.p_accept;
            subset_margin = subset_margin.min(ps - (1.0 - (comp.len() as f64 / n as f64).sqrt()));
            runs += 2;
        }
        let s_accept = acceptance_probability(g, &WitnessState::<f64>::subset(n, &p.s)?)?.p_accept;
        Ok(Some(Row { ideal_dev, subset_margin, s_accept, log_weight: p.log_weight, runs: runs + 1 }))
    })?;
    let rows: Vec<Row> = rows.into_iter().flatten().collect();
    charge_runs(ctx, rows.iter().map(|r| r.runs).sum());
    let used = rows.len();
    let dev = rows.iter().map(|r| r.ideal_dev).fold(0.0, f64::max);
    let sub = rows.iter().map(|r| r.subset_margin).fold(f64::INFINITY, f64::min);
    let bs_floor = 1.0 - 3.0 * gamma.sqrt();
    let bs = rows.iter().map(|r| r.s_accept - bs_floor).fold(f64::INFINITY, f64::min);
    let values: Vec<f64> = rows.iter().map(|r| r.s_accept).collect();
    let weights: Vec<f64> = rows.iter().map(|r| r.log_weight).collect();
    let mut metrics = vec![
        Metric::new("yes_samples", "non-abort YES samples evaluated", used as f64)
            .at(n, preset.l)
            .at_least(cfg, "samples_min")?,
        Metric::new("ideal_witness_max_deviation", "the ideal witness of every component is accepted with certainty", dev)
            .at(n, preset.l)
            .at_most(cfg, "ideal_tol")?,
        Metric::new(
            "subset_witness_min_margin",
            "the uniform superposition over a component is accepted with probability at least 1 - sqrt(|S|/N)",
            sub,
        )
        .at(n, preset.l)
        .at_least(cfg, "subset_margin_min")?,
        Metric::new(
            "bs_witness_min_margin",
            "on B_S the uniform superposition over S is accepted with probability at least 1 - 3 sqrt(gamma)",
            bs,
        )
        .at(n, preset.l)
        .at_least(cfg, "bs_margin_min")?,
    ];
    if !rows.is_empty() {
        let e = Estimate::weighted(&values, &weights)?;
        let (lo, hi) = e.interval(1.96);
        metrics.push(
            Metric::new("bs_witness_mean_acceptance", "expected acceptance of |S> over B_S, importance weighted", e.mean)
                .at(n, preset.l)
                .ci(lo, hi),
        );
    }
    Ok(metrics)
}

fn soundness(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let preset = cfg.preset_at(cfg.n)?;
    let params = preset.params(Vec::new()).with_l(1);
    let retries = cfg.options.max_retries.unwrap_or(1000);
    let dense = cfg.options.dense_threshold.unwrap_or(4096);
    let opts = SpectralOptions::default();
    let rows = fan_out(cfg.n_samples, |i| {
        let mut rng = stream_rng(cfg.seed, stream(0, i));
        let Some(out) = condition_on_profile(&params, &mut rng, profile::connected, retries)?.accepted() else {
            return Ok(None);
        };
        let g = out.graph();
        let l2 = second_eigenvalue::<f64>(g, &opts)?.value;
        let opt = optimal_acceptance::<f64>(g, dense)?;
        Ok(Some((l2, opt)))
    })?;
    let rows: Vec<(f64, f64)> = rows.into_iter().flatten().collect();
    let margin = rows.iter().map(|&(l2, opt)| 1.0 - (1.0 - l2) / 4.0 - opt).fold(f64::INFINITY, f64::min);
    let identity = rows.iter().map(|&(l2, opt)| (opt - optimal_acceptance_from_lambda2(l2)).abs()).fold(0.0, f64::max);
    let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let gaps: Vec<f64> = rows.iter().map(|r| 1.0 - r.0).collect();
    let mut metrics = vec![
        Metric::new("no_samples", "connected single-block NO samples evaluated", rows.len() as f64)
            .at(cfg.n, 1)
            .at_least(cfg, "samples_min")?,
        Metric::new(
            "soundness_min_margin",
            "every witness is accepted with probability at most 1 - alpha/4 on an alpha-expander",
            margin,
        )
        .at(cfg.n, 1)
        .at_least(cfg, "soundness_margin_min")?,
        Metric::new(
            "optimum_identity_max_error",
            "the best acceptance equals ((1 + lambda2)/2)^2",
            identity,
        )
        .at(cfg.n, 1)
        .at_most(cfg, "identity_tol")?,
        Metric::new("max_optimal_acceptance", "largest acceptance any witness achieves on a NO sample", worst).at(cfg.n, 1),
    ];
    if !gaps.is_empty() {
        let e = Estimate::from_values(&gaps)?;
        let (lo, hi) = e.interval(1.96);
        metrics.push(Metric::new("mean_spectral_gap", "mean 1 - lambda2 of NO samples", e.mean).at(cfg.n, 1).ci(lo, hi));
    }
    if let Some(reps) = solve_reps(worst, 0.01) {
        metrics.push(Metric::new("reps_for_soundness_0.01", "all-accept repetitions pushing soundness below 0.01", reps as f64));
    }
    Ok(metrics)
}

fn walk_abort(cfg: &ExperimentConfig, ctx: &mut QueryContext) -> Result<Vec<Metric>> {
    let preset = cfg.preset_at(cfg.n)?;
    let n = cfg.n;
    let params = preset.params(Vec::new()).with_l(1);
    let retries = cfg.options.max_retries.unwrap_or(1000);
    let mut rng = stream_rng(cfg.seed, stream(0, 0));
    let g = condition_on_profile(&params, &mut rng, profile::connected, retries)?
        .accepted()
        .ok_or_else(|| LabError::Degenerate("no connected expander sample".into()))?
        .graph;
    let alpha = 1.0 - second_eigenvalue::<f64>(&g, &SpectralOptions::default())?.value;
    let m = cfg.options.m.unwrap_or(4);
    let r = cfg.options.r.unwrap_or(100 * m);
    let target = cfg.options.envelope_target.unwrap_or(0.01);
    let t = cfg.options.t.unwrap_or_else(|| t_for_target(r, n, alpha, target / 10.0));
    let wp = WalkSampleParams { m, t, r };
    wp.validate()?;
    let trials = cfg.options.trials.unwrap_or(cfg.n_samples);
    let run = |graph: &ColoredGraph, phase: u64, count: usize| -> Result<(usize, QueryContext)> {
        let rows = fan_out(count, |i| {
            let mut rng = stream_rng(cfg.seed, stream(phase, i));
            let mut local = QueryContext::new();
            let out = expander_walk_sample_f(&mut local, graph, &wp, &mut rng)?;
            Ok((out.aborted(), local))
        })?;
        let mut total = QueryContext::new();
        let mut aborts = 0;
        for (a, c) in &rows {
            aborts += *a as usize;
            total.absorb(c);
        }
        Ok((aborts, total))
    };
    let (aborts, used) = run(&g, 1, trials)?;
    ctx.absorb(&used);
    let rate = aborts as f64 / trials.max(1) as f64;
    let env = abort_envelope(r, n, walk_delta(alpha, t));
    let z = cfg.threshold("abort_sigma")?;
    let sigma = (env.min(1.0) * (1.0 - env.min(1.0)) / trials.max(1) as f64).sqrt();
    let (lo, hi) = wilson_interval(aborts, trials, 1.96);

    let control = ColoredGraph::self_loops(n, preset.d);
    let control_trials = trials.min(1000);
    let (control_aborts, used) = run(&control, 2, control_trials)?;
    ctx.absorb(&used);

    let t_log = log_schedule_t(n, alpha);
    let env_log = abort_envelope(r, n, walk_delta(alpha, t_log));
    let mut metrics = vec![
        Metric::new("spectral_gap", "alpha of the expander used for walking", alpha).at(n, 1),
        Metric::new("walk_t", "lazy steps between retained vertices", t as f64),
        Metric::new("abort_envelope", "exp(-r/16) + 10 r K delta", env).at(n, 1),
        Metric::new("abort_rate", "walk sampling on an expander aborts within the envelope", rate)
            .at(n, 1)
            .ci(lo, hi)
            .check("abort_sigma", Direction::AtMost, env + z * sigma),
        Metric::new("control_abort_rate", "walk sampling on an all-self-loop graph always aborts", control_aborts as f64 / control_trials.max(1) as f64)
            .at(n, 1)
            .at_least(cfg, "control_abort_min")?,
        Metric::new("log_schedule_t", "t = ceil(2 ln N / alpha)", t_log as f64),
        Metric::new("log_schedule_envelope", "abort envelope at the logarithmic schedule", env_log).at(n, 1),
    ];
    let dev_trials = cfg.options.deviation_trials.unwrap_or(0);
    if dev_trials > 0 {
        let all: Vec<usize> = (0..n).collect();
        let mut rng = stream_rng(cfg.seed, stream(3, 0));
        let rep = walk_vs_uniform_deviation(&g, &all, &wp, alpha, dev_trials, &mut rng)?;
        let allowance = rep.bound.map(|b| b + (-(r as f64) / 16.0).exp()).unwrap_or(f64::INFINITY);
        metrics.push(
            Metric::new(
                "inclusion_excess",
                "walk-sampled cores are close to uniform m-subsets on every inclusion and co-inclusion event",
                rep.max_excess - allowance,
            )
            .at(n, 1)
            .at_most(cfg, "deviation_margin_max")?,
        );
    }
    Ok(metrics)
}

fn d1_vs_d2(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let ns = cfg.options.ns.clone().unwrap_or_else(|| vec![cfg.n]);
    let m = cfg.options.m.unwrap_or(2);
    let resamples = cfg.options.resamples.unwrap_or(200);
    let mut metrics = Vec::new();
    let mut tvds = Vec::new();
    for (phase, &n) in ns.iter().enumerate() {
        let preset = cfg.preset_at(n)?;
        let seed = cfg.seed ^ ((phase as u64 + 1) << 48);
        let rep = crate::walk::compare_f_then_g_vs_g_then_f(&preset.params(Vec::new()), m, cfg.n_samples, seed, resamples)?;
        for f in &rep.features {
            metrics.push(
                Metric::new(&format!("tvd_{}", f.name), "feature law of graph-first and core-first sampling", f.report.tvd)
                    .at(n, preset.l)
                    .ci(f.report.ci_lo, f.report.ci_hi),
            );
        }
        let worst = rep
            .features
            .iter()
            .max_by(|a, b| a.report.tvd.total_cmp(&b.report.tvd))
            .expect("features are nonempty");
        metrics.push(
            Metric::new("max_feature_tvd", "graph-first and core-first sampling are statistically close", rep.max_tvd)
                .at(n, preset.l)
                .ci(worst.report.ci_lo, worst.report.ci_hi),
        );
        let mut excess = Metric::new("max_feature_excess", "feature TVD beyond the permutation null level", rep.max_excess)
            .at(n, preset.l);
        if n == cfg.n {
            excess = excess.at_most(cfg, "tvd_excess_max")?;
        }
        metrics.push(excess);
        let w = &rep.block0_weight;
        let zmax = [(w.d1, w.d1_expected), (w.d2, w.d2_expected)]
            .iter()
            .map(|(e, x)| (e.mean - x).abs() / e.stderr.max(1e-12))
            .fold(0.0, f64::max);
        metrics.push(
            Metric::new("block0_weight_z", "block 0 holds N/l vertices under D1 and m + (N-m)/l under D2", zmax)
                .at(n, preset.l)
                .at_most(cfg, "weight_z_max")?,
        );
        tvds.push(rep.max_tvd);
    }
    if tvds.len() > 1 {
        let step = tvds.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        metrics.push(
            Metric::new("max_feature_tvd_max_step", "feature TVD shrinks as N grows", step).at_most(cfg, "tvd_trend_max_step")?,
        );
    }
    Ok(metrics)
}

/// A witness map where sets through a planted core mostly share one witness.
fn synthetic_witness_map(n: usize, zeta: usize, q: usize, rng: &mut LabRng) -> Result<WitnessMap> {
    let core_size = rng.random_range(0..zeta);
    let core = random_subset(n, core_size, rng);
    let bias: f64 = rng.random_range(0.3..0.95);
    let favourite: String = (0..q).map(|_| if rng.random::<bool>() { '1' } else { '0' }).collect();
    WitnessMap::full_domain(n, zeta, |s| {
        if core.iter().all(|c| s.contains(c)) && rng.random::<f64>() < bias {
            favourite.clone()
        } else {
            (0..q).map(|_| if rng.random::<bool>() { '1' } else { '0' }).collect()
        }
    })
}

fn sunflower_pipeline(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let n = cfg.n;
    let zeta = cfg.options.zeta.unwrap_or(3);
    let q = cfg.options.q.unwrap_or(4);
    let mu = cfg.mu()?;
    let bound = core_size_bound::<f64>(q, mu_f64(mu), n, zeta, None)?.strict;
    let check = |wm: &WitnessMap| -> Result<(bool, bool, bool, usize)> {
        let ex = extract_sunflower(wm, mu)?;
        let valid = verify_sunflower(&ex.sunflower, n).is_ok();
        let core_ok = ex.sunflower.core.len() as f64 <= core_size_bound::<f64>(wm.q(), mu_f64(mu), n, zeta, None)?.strict;
        Ok((valid, ex.counting_bound_holds(), core_ok, ex.sunflower.core.len()))
    };
    let mut rows = fan_out(cfg.n_samples, |i| {
        let mut rng = stream_rng(cfg.seed, stream(0, i));
        check(&synthetic_witness_map(n, zeta, q, &mut rng)?)
    })?;
    if let Some(p) = &cfg.options.witness_map {
        let path = cfg.resolve(p);
        let text = std::fs::read_to_string(&path).map_err(|e| LabError::Format(format!("{}: {e}", path.display())))?;
        rows.push(check(&WitnessMap::from_jsonl(&text, n, zeta)?)?);
    }
    let count = |f: fn(&(bool, bool, bool, usize)) -> bool| rows.iter().filter(|r| !f(r)).count() as f64;
    let cores: Vec<f64> = rows.iter().map(|r| r.3 as f64).collect();
    let mean_core = if cores.is_empty() { 0.0 } else { cores.iter().sum::<f64>() / cores.len() as f64 };
    Ok(vec![
        Metric::new("witness_maps", "witness maps processed", rows.len() as f64),
        Metric::new("invalid_sunflowers", "every extracted family is a sunflower with light petals", count(|r| r.0))
            .at_most(cfg, "failures_max")?,
        Metric::new("counting_bound_failures", "the popular family covers at least a 2^-q fraction of the domain", count(|r| r.1))
            .at_most(cfg, "failures_max")?,
        Metric::new("core_bound_failures", "|F| <= q / (mu log2(N/zeta))", count(|r| r.2)).at_most(cfg, "failures_max")?,
        Metric::new("mean_core_size", "mean extracted core size", mean_core),
        Metric::new("core_size_bound", "q / (mu log2(N/zeta))", bound),
    ])
}

fn adversary_tiny(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let n = cfg.n;
    let zeta = cfg.options.zeta.unwrap_or(3);
    let mu = cfg.mu()?;
    let max_core = cfg.options.max_core.unwrap_or(2).min(zeta.saturating_sub(1));
    let delta = cfg.options.delta.unwrap_or(0.01);
    struct Row {
        identity: bool,
        pre: bool,
        lmax_ok: bool,
        forward_ok: bool,
        order_ok: bool,
        eps_ok: bool,
        union_ok: bool,
        bound: f64,
    }
    let rows = fan_out(cfg.n_samples, |i| {
        let mut rng = stream_rng(cfg.seed, stream(0, i));
        let core_size = rng.random_range(0..=max_core);
        let core = random_subset(n, core_size, &mut rng);
        let ideal = ideal_sunflower(n, zeta, &core)?;
        let mut sets: Vec<Vec<usize>> = ideal.iter().filter(|_| rng.random::<bool>()).cloned().collect();
        if sets.is_empty() {
            sets.push(ideal.choose(&mut rng).expect("ideal family is nonempty").clone());
        }
        let rel = build_perm_relation(&sets, &ideal, zeta, n)?;
        let st = relation_stats(&rel)?;
        let identity = st.m_lo == ideal.len() as u64
            && st.m_hi == ideal.len() as u64
            && st.mp_lo == sets.len() as u64
            && st.mp_hi == sets.len() as u64;
        let sf = Sunflower { sets: sets.clone(), core: core.clone(), mu, zeta };
        let pre = analytic_preconditions(&sf, &ideal, n);
        let analytic = analytic_l_max_bound(n, zeta, mu_f64(mu), sets.len(), ideal.len()) + 1e-9;
        let lmax_ok = st.l_max as f64 <= analytic;
        let forward_ok = st.l_max_forward as f64 <= analytic;
        let b = distinguishing_lower_bound(&st, delta)?;
        let order_ok = b.value >= closed_form_permutation_bound(n, zeta, mu_f64(mu), delta) - 1e-12;
        let half = query_lower_bound(&st, 0.5f64)?;
        let zero = query_lower_bound(&st, 0.0f64)?;
        let exact = ((st.m_lo * st.mp_lo) as f64 / st.l_max as f64).sqrt();
        let eps_ok = half.value == 0.0 && zero.value == exact;
        // A second relation with a smaller prefix; tagged supports are disjoint.
        let union_ok = if zeta >= 2 && core.len() < zeta - 1 {
            let small_ideal = ideal_sunflower(n, zeta - 1, &core)?;
            let other = build_perm_relation(&small_ideal, &small_ideal, zeta - 1, n)?;
            let st2 = relation_stats(&other)?;
            let joined = relation_stats(&PermRelation::union(&[rel, other])?)?;
            Some(joined) == combine_stats(&[st.clone(), st2])
        } else {
            true
        };
        Ok(Row { identity, pre, lmax_ok, forward_ok, order_ok, eps_ok, union_ok, bound: b.value })
    })?;
    let bad = |f: fn(&Row) -> bool| rows.iter().filter(|r| !f(r)).count() as f64;
    let with_pre: Vec<&Row> = rows.iter().filter(|r| r.pre).collect();
    let lmax_bad = with_pre.iter().filter(|r| !r.lmax_ok).count() as f64;
    let forward_bad = with_pre.iter().filter(|r| !r.forward_ok).count() as f64;
    let order_bad = with_pre.iter().filter(|r| !r.order_ok).count() as f64;
    let best = rows.iter().map(|r| r.bound).fold(0.0, f64::max);
    let closed = closed_form_permutation_bound(n, zeta, mu_f64(mu), delta);
    Ok(vec![
        Metric::new("families", "sunflower and ideal family pairs enumerated", rows.len() as f64),
        Metric::new("families_with_preconditions", "pairs where the analytic l_max bound is claimed", with_pre.len() as f64),
        Metric::new("degree_identity_failures", "each YES oracle has |ideal| partners and each NO oracle |sunflower|", bad(|r| r.identity))
            .at_most(cfg, "failures_max")?,
        Metric::new("l_max_bound_failures", "l_max <= (zeta/N)^(1-mu) |sunflower| |ideal|", lmax_bad)
            .at_most(cfg, "analytic_failures_max")?,
        Metric::new(
            "l_max_forward_bound_failures",
            "the analytic l_max bound restricted to forward-table positions",
            forward_bad,
        )
        .at_most(cfg, "failures_max")?,
        Metric::new("closed_form_order_failures", "the brute-force bound is at least the closed form", order_bad)
            .at_most(cfg, "analytic_failures_max")?,
        Metric::new("eps_identity_failures", "the bound vanishes at eps = 1/2 and equals sqrt(m m'/l_max) at eps = 0", bad(|r| r.eps_ok))
            .at_most(cfg, "failures_max")?,
        Metric::new("tagged_union_failures", "relations with distinct k combine without interaction", bad(|r| r.union_ok))
            .at_most(cfg, "failures_max")?,
        Metric::new("best_query_bound", "largest brute-force permutation query bound", best),
        Metric::new("closed_form_permutation_bound", "(1-2sqrt(2d(1-2d)))(1-4d)sqrt((N/zeta)^(1-mu))", closed),
        Metric::new("closed_form_graph_bound", "half the permutation bound", closed_form_graph_bound(n, zeta, mu_f64(mu), delta)),
    ])
}

fn triangles(cfg: &ExperimentConfig) -> Result<Vec<Metric>> {
    let preset = cfg.preset_at(cfg.n)?;
    let params = preset.params(Vec::new());
    let single = params.with_l(1);
    let count = |p: &DistributionParams, phase: u64| -> Result<Vec<f64>> {
        fan_out(cfg.n_samples, |i| {
            let mut rng = stream_rng(cfg.seed, stream(phase, i));
            let out = sample_pml(p, &mut rng)?;
            Ok(triangle_count(out.graph()).count as f64)
        })
    };
    let a = Estimate::from_values(&count(&params, 0)?)?;
    let b = Estimate::from_values(&count(&single, 1)?)?;
    let l = preset.l as f64;
    let ratio = a.mean / b.mean / l;
    let rel = ((a.stderr / a.mean).powi(2) + (b.stderr / b.mean).powi(2)).sqrt();
    let (lo, hi) = (ratio * (1.0 - 1.96 * rel), ratio * (1.0 + 1.96 * rel));
    Ok(vec![
        Metric::new("mean_triangles", "triangles of a block graph", a.mean).at(cfg.n, preset.l).ci(a.interval(1.96).0, a.interval(1.96).1),
        Metric::new("mean_triangles_single_block", "triangles of the one-block baseline", b.mean)
            .at(cfg.n, 1)
            .ci(b.interval(1.96).0, b.interval(1.96).1),
        Metric::new("triangle_ratio_over_l", "l blocks carry l times the triangles of one block", ratio)
            .at(cfg.n, preset.l)
            .ci(lo, hi)
            .at_least(cfg, "ratio_over_l_min")?
            .at_most(cfg, "ratio_over_l_max")?,
    ])
}

fn metric_from_report(cfg: &ExperimentConfig, path: &str, name: &str) -> Result<f64> {
    let p = cfg.resolve(path);
    let text = std::fs::read_to_string(&p).map_err(|e| LabError::Format(format!("{}: {e}", p.display())))?;
    let rep = ExperimentReport::from_json(&text)?;
    rep.metric(name)
        .map(|m| m.value)
        .ok_or_else(|| LabError::Format(format!("{} has no metric {name}", p.display())))
}

fn wrapup(cfg: &ExperimentConfig, ctx: &mut QueryContext) -> Result<Vec<Metric>> {
    let o = &cfg.options;
    let p_yes = match (o.completeness, &o.completeness_report) {
        (Some(v), _) => v,
        (None, Some(p)) => 1.0 - metric_from_report(cfg, p, "ideal_witness_max_deviation")?,
        _ => return Err(LabError::Params("wrapup needs completeness or completeness_report".into())),
    };
    let p_no = match (o.soundness, &o.soundness_report) {
        (Some(v), _) => v,
        (None, Some(p)) => metric_from_report(cfg, p, "max_optimal_acceptance")?,
        _ => return Err(LabError::Params("wrapup needs soundness or soundness_report".into())),
    };
    let rule = o.rule.unwrap_or(RepetitionRule::AllAccept);
    let yes_target = cfg.threshold("completeness_target")?;
    let no_target = cfg.threshold("soundness_target")?;
    let reps = match o.reps {
        Some(r) => r,
        None => solve_reps(p_no, no_target).ok_or_else(|| LabError::Degenerate(format!("soundness {p_no} cannot be amplified")))?,
    };
    let yes = repeated_acceptance(p_yes.clamp(0.0, 1.0), reps, rule)?;
    let no = repeated_acceptance(p_no.clamp(0.0, 1.0), reps, rule)?;
    charge_runs(ctx, reps);
    let preset = cfg.preset_at(cfg.n)?;
    let zeta = preset.params(Vec::new()).zeta();
    let mu = cfg.mu()?;
    let delta = o.delta.unwrap_or(0.01);
    Ok(vec![
        Metric::new("single_run_completeness", "acceptance of a YES instance in one run", p_yes),
        Metric::new("single_run_soundness", "largest acceptance of a NO instance in one run", p_no),
        Metric::new("repetitions", "verifier repetitions", reps as f64),
        Metric::new("completeness_margin", "repeated YES acceptance minus the completeness target", yes - yes_target)
            .at_least(cfg, "margin_min")?,
        Metric::new("soundness_margin", "soundness target minus repeated NO acceptance", no_target - no).at_least(cfg, "margin_min")?,
        Metric::new("verifier_queries", "queries spent by the repeated verifier", (reps * QUERIES_PER_RUN) as f64),
        Metric::new(
            "classical_witness_query_bound",
            "graph-query lower bound for any classical witness of the given length",
            closed_form_graph_bound(cfg.n, zeta, mu_f64(mu), delta),
        )
        .at(cfg.n, preset.l),
    ])
}
