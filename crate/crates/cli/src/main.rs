use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use expander_lab::adversary::{
    analytic_l_max_bound, analytic_preconditions, build_perm_relation, closed_form_graph_bound,
    closed_form_permutation_bound, distinguishing_lower_bound, query_lower_bound, relation_stats,
};
use expander_lab::experiment::{emit_plot_tables, parse_mu, run_experiment, write_report, ExperimentConfig};
use expander_lab::sampler::{sample_pml, triangle_count};
use expander_lab::spectral::{spectral_report, MethodChoice, SpectralOptions};
use expander_lab::sunflower::{core_size_bound, extract_sunflower, ideal_sunflower, verify_sunflower, Sunflower, WitnessMap};
use expander_lab::verifier::{
    acceptance_probability, expectation_over_distribution, optimal_acceptance, repeated_acceptance, RepetitionRule,
    WitnessState,
};
use expander_lab::walk::{expander_walk_sample_f, compare_f_then_g_vs_g_then_f, WalkSampleParams};
use expander_lab::{stream_rng, ColoredGraph, LabError, Preset, QueryContext};

const OUT_ENV: &str = "EXPANDER_LAB_OUT";

#[derive(Parser)]
#[command(name = "expander-lab", version, about = "Desk-scale expander graph lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one graph from P_{M,l}(F).
    SampleGraph(SampleGraph),
    /// Second eigenvalue, gaps and components of a graph file.
    SpectralReport(SpectralReportArgs),
    /// Exact acceptance of one witness on one graph.
    Verify(Verify),
    /// Mean acceptance of a fixed witness over sampled graphs.
    VerifyDist(VerifyDist),
    /// Run the lazy-walk subset sampler on a graph file.
    WalkSample(WalkSample),
    /// Compare the two orders of drawing F and G.
    DistCompare(DistCompare),
    /// Extract a sunflower from a witness map (JSON lines).
    SunflowerExtract(SunflowerExtract),
    /// Brute-force adversary relation stats and query bounds.
    AdversaryBound(AdversaryBound),
    /// Triangle counts of a graph file or of sampled graphs.
    Triangles(Triangles),
    /// Scripted experiments.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
}

#[derive(Subcommand)]
enum ExperimentAction {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config and $EXPANDER_LAB_OUT.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Dist {
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long, default_value_t = 256)]
    n: usize,
    /// Override the number of blocks.
    #[arg(long)]
    l: Option<usize>,
    /// Vertices forced into the first block.
    #[arg(long, value_delimiter = ',')]
    f: Vec<usize>,
}

impl Dist {
    fn params(&self) -> expander_lab::Result<expander_lab::DistributionParams> {
        let p = Preset::by_name(&self.preset, self.n)?.params(self.f.clone());
        let p = match self.l {
            Some(l) => p.with_l(l),
            None => p,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct SampleGraph {
    #[command(flatten)]
    dist: Dist,
    #[arg(long)]
    seed: u64,
    /// Graph file to write (`.csv` for text, anything else binary). Without
    /// it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    Dense,
    Iterative,
}

#[derive(Args)]
struct SpectralReportArgs {
    graph: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
}

#[derive(Args)]
struct Verify {
    graph: PathBuf,
    /// uniform | basis:J | subset:a,b,.. | ideal:a,b,.. | random | amplitudes file (JSON array)
    #[arg(long)]
    witness: String,
    /// Needed for `random` witnesses.
    #[arg(long)]
    seed: Option<u64>,
    /// Also report the best acceptance over all witnesses (dense).
    #[arg(long)]
    optimal: bool,
}

#[derive(Args)]
struct VerifyDist {
    #[command(flatten)]
    dist: Dist,
    #[arg(long)]
    witness: String,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: u64,
    #[arg(long, value_enum, default_value = "all-accept")]
    rule: RuleArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    AllAccept,
    Majority,
}

#[derive(Args)]
struct WalkSample {
    graph: PathBuf,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    t: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct DistCompare {
    #[command(flatten)]
    dist: Dist,
    /// Size of F.
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 200)]
    resamples: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct SunflowerExtract {
    witness_map: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    zeta: usize,
    #[arg(long, default_value = "1/2")]
    mu: String,
}

#[derive(Args)]
struct AdversaryBound {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    zeta: usize,
    #[arg(long, value_delimiter = ',')]
    core: Vec<usize>,
    /// Sunflower sets as `a b c;a b d`; defaults to the ideal family of the core.
    #[arg(long)]
    sets: Option<String>,
    #[arg(long, default_value = "1/2")]
    mu: String,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
}

#[derive(Args)]
struct Triangles {
    /// Graph file; without it graphs are sampled.
    graph: Option<PathBuf>,
    #[command(flatten)]
    dist: Dist,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Usage(String),
    Check,
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::SampleGraph(a) => sample_graph(a),
        Command::SpectralReport(a) => spectral(a),
        Command::Verify(a) => verify(a),
        Command::VerifyDist(a) => verify_dist(a),
        Command::WalkSample(a) => walk_sample(a),
        Command::DistCompare(a) => dist_compare(a),
        Command::SunflowerExtract(a) => sunflower(a),
        Command::AdversaryBound(a) => adversary(a),
        Command::Triangles(a) => triangles(a),
        Command::Experiment { action: ExperimentAction::Run { config, out } } => experiment(&config, out),
    }
}

fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print(v: &serde_json::Value) {
    emit(&format!("{}\n", serde_json::to_string_pretty(v).expect("json values serialize")));
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn load_graph(path: &Path) -> Result<ColoredGraph, Failure> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(ColoredGraph::parse_any(&bytes)?)
}

fn parse_list(s: &str) -> Result<Vec<usize>, Failure> {
    s.split([',', ' '])
        .filter(|t| !t.is_empty())
        .map(|t| t.trim().parse().map_err(|_| Failure::Usage(format!("bad vertex {t:?}"))))
        .collect()
}

fn witness(spec: &str, n: usize, seed: Option<u64>) -> Result<WitnessState<f64>, Failure> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    Ok(match kind {
        "uniform" => WitnessState::uniform(n),
        "basis" => {
            let j = rest.parse().map_err(|_| Failure::Usage(format!("bad basis vertex {rest:?}")))?;
            WitnessState::basis(n, j)?
        }
        "subset" => WitnessState::subset(n, &parse_list(rest)?)?,
        "ideal" => WitnessState::ideal(n, &parse_list(rest)?)?,
        "random" => {
            let seed = seed.ok_or_else(|| Failure::Usage("random witnesses need --seed".into()))?;
            WitnessState::random(n, &mut stream_rng(seed, 0))
        }
        _ => {
            let path = Path::new(spec);
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let amps: Vec<f64> =
                serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            if amps.len() != n {
                return Err(LabError::SizeMismatch { expected: n, got: amps.len() }.into());
            }
            WitnessState::normalized(amps)?
        }
    })
}

fn sample_graph(a: SampleGraph) -> Outcome {
    let params = a.dist.params()?;
    let out = sample_pml(&params, &mut stream_rng(a.seed, 0))?;
    match &a.out {
        None => emit(&out.graph().to_csv()),
        Some(path) => {
            let body = if path.extension().is_some_and(|e| e == "csv") {
                out.graph().to_csv().into_bytes()
            } else {
                out.graph().to_bytes()
            };
            std::fs::write(path, body).map_err(|e| io_err(path, e))?;
            let parts = out.graph().components();
            print(&json!({
                "params": params,
                "transcript": out.transcript(),
                "components": parts.sorted_sizes(),
            }));
        }
    }
    Ok(())
}

fn spectral(a: SpectralReportArgs) -> Outcome {
    let g = load_graph(&a.graph)?;
    let method = match a.method {
        MethodArg::Auto => MethodChoice::Auto,
        MethodArg::Dense => MethodChoice::Dense,
        MethodArg::Iterative => MethodChoice::Iterative,
    };
    let rep = spectral_report::<f64>(&g, &SpectralOptions::default().with_method(method))?;
    print(&json!(rep));
    Ok(())
}

fn verify(a: Verify) -> Outcome {
    let g = load_graph(&a.graph)?;
    let w = witness(&a.witness, g.n_vertices(), a.seed)?;
    let o = acceptance_probability(&g, &w)?;
    let mut v = json!(o);
    if a.optimal {
        v["optimal_acceptance"] = json!(optimal_acceptance::<f64>(&g, usize::MAX)?);
    }
    print(&v);
    Ok(())
}

fn verify_dist(a: VerifyDist) -> Outcome {
    let params = a.dist.params()?;
    let w = witness(&a.witness, params.n, Some(a.seed))?;
    let mut rng = stream_rng(a.seed, 1);
    let est = expectation_over_distribution(|r| Ok(sample_pml(&params, r)?.graph), &w, a.samples, &mut rng)?;
    let rule = match a.rule {
        RuleArg::AllAccept => RepetitionRule::AllAccept,
        RuleArg::Majority => RepetitionRule::Majority,
    };
    let repeated = repeated_acceptance(est.mean.clamp(0.0, 1.0), a.reps, rule)?;
    print(&json!({ "params": params, "estimate": est, "reps": a.reps, "repeated_acceptance": repeated }));
    Ok(())
}

fn walk_sample(a: WalkSample) -> Outcome {
    let g = load_graph(&a.graph)?;
    let params = WalkSampleParams { m: a.m, t: a.t, r: a.r };
    let mut ctx = QueryContext::new();
    let mut aborts = 0usize;
    let mut first = None;
    for i in 0..a.trials {
        let out = expander_walk_sample_f(&mut ctx, &g, &params, &mut stream_rng(a.seed, i as u64))?;
        aborts += usize::from(out.aborted());
        first.get_or_insert(out);
    }
    print(&json!({
        "params": params,
        "trials": a.trials,
        "aborts": aborts,
        "abort_rate": aborts as f64 / a.trials.max(1) as f64,
        "queries": ctx.total(),
        "first": first,
    }));
    Ok(())
}

fn dist_compare(a: DistCompare) -> Outcome {
    let params = a.dist.params()?;
    let rep = compare_f_then_g_vs_g_then_f(&params, a.m, a.samples, a.seed, a.resamples)?;
    print(&json!(rep));
    Ok(())
}

fn sunflower(a: SunflowerExtract) -> Outcome {
    let text = std::fs::read_to_string(&a.witness_map).map_err(|e| io_err(&a.witness_map, e))?;
    let wm = WitnessMap::from_jsonl(&text, a.n, a.zeta)?;
    let mu = parse_mu(&a.mu)?;
    let ex = extract_sunflower(&wm, mu)?;
    let mu_f = *mu.numer() as f64 / *mu.denom() as f64;
    let bound = core_size_bound::<f64>(wm.q(), mu_f, a.n, a.zeta, None)?;
    let valid = verify_sunflower(&ex.sunflower, a.n);
    print(&json!({
        "extraction": ex,
        "valid": valid.is_ok(),
        "violation": valid.err(),
        "counting_bound_holds": ex.counting_bound_holds(),
        "core_bound": bound,
    }));
    Ok(())
}

fn adversary(a: AdversaryBound) -> Outcome {
    let mu = parse_mu(&a.mu)?;
    let mu_f = *mu.numer() as f64 / *mu.denom() as f64;
    let ideal = ideal_sunflower(a.n, a.zeta, &a.core)?;
    let sets = match &a.sets {
        Some(s) => s.split(';').map(parse_list).collect::<Result<Vec<_>, _>>()?,
        None => ideal.clone(),
    };
    let rel = build_perm_relation(&sets, &ideal, a.zeta, a.n)?;
    let st = relation_stats(&rel)?;
    let sf = Sunflower { sets: sets.clone(), core: a.core.clone(), mu, zeta: a.zeta };
    print(&json!({
        "stats": st,
        "sunflower_size": sets.len(),
        "ideal_size": ideal.len(),
        "query_bound_eps_zero": query_lower_bound::<f64>(&st, 0.0)?,
        "distinguishing_bound": distinguishing_lower_bound::<f64>(&st, a.delta)?,
        "closed_form_permutation_bound": closed_form_permutation_bound(a.n, a.zeta, mu_f, a.delta),
        "closed_form_graph_bound": closed_form_graph_bound(a.n, a.zeta, mu_f, a.delta),
        "analytic_l_max_bound": analytic_l_max_bound(a.n, a.zeta, mu_f, sets.len(), ideal.len()),
        "analytic_preconditions": analytic_preconditions(&sf, &ideal, a.n),
    }));
    Ok(())
}

fn triangles(a: Triangles) -> Outcome {
    if let Some(path) = &a.graph {
        print(&json!(triangle_count(&load_graph(path)?)));
        return Ok(());
    }
    let seed = a.seed.ok_or_else(|| Failure::Usage("sampling triangles needs --seed".into()))?;
    let params = a.dist.params()?;
    let mut counts = Vec::with_capacity(a.samples);
    for i in 0..a.samples {
        let out = sample_pml(&params, &mut stream_rng(seed, i as u64))?;
        counts.push(triangle_count(out.graph()).count as f64);
    }
    let est = expander_lab::stats::Estimate::from_values(&counts)?;
    print(&json!({ "params": params, "triangles": est }));
    Ok(())
}

fn experiment(config: &Path, out: Option<PathBuf>) -> Outcome {
    let cfg = ExperimentConfig::from_file(config)?;
    let dir = out
        .or_else(|| cfg.output_dir())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let start = Instant::now();
    let report = run_experiment(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let json_path = write_report(&report, &dir)?;
    let csv_path = emit_plot_tables(&report, &dir)?;
    let timing = dir.join(format!("{}.timing.json", report.experiment));
    let body = json!({ "experiment": report.experiment, "wall_clock_seconds": secs });
    std::fs::write(&timing, format!("{body}\n")).map_err(|e| io_err(&timing, e))?;
    for m in &report.metrics {
        let mark = match (m.checks.is_empty(), m.pass()) {
            (true, _) => "    ",
            (false, true) => "pass",
            (false, false) => "FAIL",
        };
        eprintln!("{mark} {} = {}", m.name, m.value);
    }
    eprintln!("{} in {secs:.2}s; wrote {} and {}", report.experiment, json_path.display(), csv_path.display());
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}
