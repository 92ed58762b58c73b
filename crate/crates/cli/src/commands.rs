use std::fs::File;
use std::io::{self, BufWriter, Write};

use anyhow::{bail, Context, Result};
use netlearn::harness::bench::{run_bench, write_ndjson, write_summary_csv, BenchSpec};
use netlearn::harness::{
    diagnose, generate_instance, practical_params, theory_params, InstanceKind, InstanceKnobs, LearnConfig, MomentMode,
    Oracle, ParamSet,
};
use netlearn::network::{exact_l2_distance, mc_l2_distance, sample_dataset, SamplesFile};
use netlearn::rng::derive_seed;
use netlearn::search::{ScoringRule, SearchBudget};
use serde::Serialize;

use crate::files::{print_stdout, read_input, read_json, read_network, read_params, write_json, Input, ParamsFile};
use crate::{BenchArgs, DiagArgs, EvalArgs, GenArgs, LearnArgs, Mode, RunArgs};

const DEFAULT_EPSILON: f64 = 0.15;
const DEFAULT_C: f64 = 0.1;

pub fn gen(a: GenArgs) -> Result<u8> {
    let kind: InstanceKind = a.kind.parse()?;
    let defaults = InstanceKnobs::default();
    let knobs = InstanceKnobs {
        separation: a.separation.unwrap_or(defaults.separation),
        pair_distance: a.pair_distance.unwrap_or(defaults.pair_distance),
        pair_cancellation: a.pair_cancellation.unwrap_or(defaults.pair_cancellation),
        lambdas: a.lambdas,
        orthogonal: a.orthogonal,
        linear_term: a.linear_term,
    };
    let inst = generate_instance(kind, a.k, a.d, a.norm_bound, a.seed, &knobs)?;
    write_json(a.out.as_deref(), &inst.to_file())?;
    if let Some(path) = a.samples_out {
        let train = sample_dataset(&inst.network, a.n_train, derive_seed(a.seed, "gen-train"))?;
        let holdout = sample_dataset(&inst.network, a.n_holdout, derive_seed(a.seed, "gen-holdout"))?;
        write_json(Some(&path), &SamplesFile::new(&train, &holdout))?;
    }
    Ok(0)
}

/// `key=value` pairs separated by commas.
fn parse_budget(spec: Option<&str>, base: SearchBudget) -> Result<SearchBudget> {
    let mut b = base;
    let Some(spec) = spec else { return Ok(b) };
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item.split_once('=').with_context(|| format!("budget entry {item:?} is not key=value"))?;
        match key.trim() {
            "net_points" => b.max_net_points = value.trim().parse()?,
            "candidates" => b.max_candidates = value.trim().parse::<f64>()? as u64,
            "seconds" => b.wall_clock_secs = value.trim().parse()?,
            other => bail!("unknown budget key {other:?} (expected net_points, candidates, seconds)"),
        }
    }
    b.check()?;
    Ok(b)
}

fn build_params(mode: Mode, k: usize, d: usize, r: f64, eps: f64, pf: &ParamsFile) -> Result<ParamSet> {
    Ok(match mode {
        Mode::Theory => theory_params(k, d, r, eps, pf.c.unwrap_or(DEFAULT_C))?,
        Mode::Practical | Mode::ExactMoments => practical_params(k, d, r, eps, &pf.overrides)?,
    })
}

fn build_config(run: &RunArgs, k: Option<usize>, d: usize, r: Option<f64>) -> Result<LearnConfig> {
    let pf = read_params(run.params.as_deref())?;
    let k = pf.k.or(k).context("k is unknown; set it in the --params file")?.max(1);
    let r = pf.norm_bound.or(r).context("R is unknown; set it in the --params file")?.max(1.0);
    let eps = run.eps.or(pf.epsilon).unwrap_or(DEFAULT_EPSILON);
    let params = build_params(run.mode, k, d, r, eps, &pf)?;
    let mut config = LearnConfig::new(params, run.seed);
    config.budget = parse_budget(run.budget.as_deref(), SearchBudget::default())?;
    if run.best_of_all {
        config.scoring = ScoringRule::CsqBestOfAll;
    }
    if run.mode == Mode::ExactMoments {
        config.moment_mode = MomentMode::Exact;
    }
    Ok(config)
}

pub fn learn(a: LearnArgs) -> Result<u8> {
    let input = read_input(&a.input)?;
    let config = match &input {
        Input::Network { net, .. } => build_config(&a.run, Some(net.width()), net.dim(), Some(net.norm_bound()))?,
        Input::Samples { train, .. } => build_config(&a.run, None, train.dim(), None)?,
    };
    if config.params.refuses_estimation() {
        eprintln!(
            "theory-mode sample count N = {} exceeds the run limit; printing parameters instead of estimating",
            config.params.n_samples
        );
        write_json(a.out.as_deref(), &config.params)?;
        return Ok(0);
    }
    let oracle = match &input {
        Input::Network { net, descriptor } => Oracle::Network { net, instance: descriptor.as_ref() },
        Input::Samples { train, holdout } => Oracle::Samples { train, holdout },
    };
    let result = netlearn::harness::learn(&oracle, &config)?;
    let rec = &result.record;
    if let Some(path) = &a.out {
        std::fs::write(path, rec.to_json()? + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    if let (Some(path), Some(model)) = (&a.model_out, &rec.model) {
        write_json(Some(path), model)?;
    }
    let mut line = format!("status={}", serde_json::to_value(rec.status)?.as_str().unwrap_or("?"));
    if let Some(s) = &rec.subspace {
        line += &format!(" dim_v={}", s.dim);
    }
    if let Some(i) = rec.accepted_index() {
        line += &format!(" index={i}");
    }
    if let Some(e) = rec.final_error {
        line += &format!(" exact_error={:.6} mc_error={:.6}", e.exact, e.monte_carlo);
    }
    if let Some(f) = &rec.failure {
        line += &format!(" reason={f:?}");
    }
    print_stdout(&line)?;
    Ok(rec.status.exit_code() as u8)
}

#[derive(Serialize)]
struct EvalReport {
    exact: f64,
    monte_carlo: f64,
    mc_samples: usize,
}

pub fn eval(a: EvalArgs) -> Result<u8> {
    let x = read_network(&a.a)?;
    let y = read_network(&a.b)?;
    let report = EvalReport {
        exact: exact_l2_distance(&x, &y)?,
        monte_carlo: mc_l2_distance(&x, &y, a.samples, derive_seed(a.seed, "eval"))?,
        mc_samples: a.samples,
    };
    write_json(None, &report)?;
    Ok(0)
}

pub fn bench(a: BenchArgs) -> Result<u8> {
    let mut spec: BenchSpec =
        serde_json::from_value(read_json(&a.params)?).with_context(|| format!("decoding {}", a.params.display()))?;
    match a.mode {
        Some(Mode::Theory) => bail!("bench runs practical parameters only"),
        Some(Mode::ExactMoments) => spec.moment_mode = MomentMode::Exact,
        Some(Mode::Practical) => spec.moment_mode = MomentMode::Sampled,
        None => {}
    }
    spec.budget = parse_budget(a.budget.as_deref(), spec.budget)?;
    let (records, rows) = run_bench(&spec)?;
    let out = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_ndjson(&records, BufWriter::new(out))?;
    match &a.summary {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_summary_csv(&rows, BufWriter::new(f))?;
        }
        None => {
            let stdout = io::stdout();
            write_summary_csv(&rows, stdout.lock())?;
            io::stdout().flush()?;
        }
    }
    Ok(0)
}

pub fn diag(a: DiagArgs) -> Result<u8> {
    let net = read_network(&a.input)?;
    let config = build_config(&a.run, Some(net.width()), net.dim(), Some(net.norm_bound()))?;
    if config.params.refuses_estimation() {
        bail!("theory-mode sample count N = {} is too large to estimate", config.params.n_samples);
    }
    let report = diagnose(&net, &config, a.delta)?;
    write_json(a.out.as_deref(), &report)?;
    Ok(0)
}
