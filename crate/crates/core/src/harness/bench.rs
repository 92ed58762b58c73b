//! Parameter sweeps: one record per run plus an aggregate table.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harness::instance::{generate_instance, InstanceKind, InstanceKnobs};
use crate::harness::params::{practical_params, ParamOverrides};
use crate::harness::pipeline::{learn, Oracle};
use crate::harness::record::{ExperimentRecord, LearnConfig, MomentMode, Status};
use crate::search::{ScoringRule, SearchBudget};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub kind: InstanceKind,
    pub k: usize,
    pub d: usize,
    #[serde(rename = "R")]
    pub norm_bound: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub knobs: InstanceKnobs,
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub cases: Vec<BenchCase>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub moment_mode: MomentMode,
    #[serde(default)]
    pub scoring: ScoringRule,
    #[serde(default)]
    pub budget: SearchBudget,
    #[serde(default)]
    pub overrides: ParamOverrides,
}

/// One line of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub kind: InstanceKind,
    pub k: usize,
    pub d: usize,
    #[serde(rename = "R")]
    pub norm_bound: f64,
    pub epsilon: f64,
    pub runs: usize,
    pub successes: usize,
    pub estimation_failures: usize,
    pub degenerate: usize,
    pub search_failures: usize,
    pub budget_stops: usize,
    pub success_rate: f64,
    pub mean_exact_error: Option<f64>,
    pub max_exact_error: Option<f64>,
    pub mean_seconds: f64,
}

fn run_one(spec: &BenchSpec, case: &BenchCase, seed: u64) -> Result<ExperimentRecord> {
    let inst = generate_instance(case.kind, case.k, case.d, case.norm_bound, seed, &case.knobs)?;
    let params = practical_params(case.k, case.d, case.norm_bound, case.epsilon, &spec.overrides)?;
    let config =
        LearnConfig { params, budget: spec.budget.clone(), scoring: spec.scoring, moment_mode: spec.moment_mode, seed };
    let oracle = Oracle::Network { net: &inst.network, instance: Some(&inst.descriptor) };
    Ok(learn(&oracle, &config)?.record)
}

fn summarize(case: &BenchCase, records: &[ExperimentRecord]) -> BenchRow {
    let count = |s: Status| records.iter().filter(|r| r.status == s).count();
    let errors: Vec<f64> = records.iter().filter_map(|r| r.final_error.map(|e| e.exact)).collect();
    let runs = records.len();
    BenchRow {
        kind: case.kind,
        k: case.k,
        d: case.d,
        norm_bound: case.norm_bound,
        epsilon: case.epsilon,
        runs,
        successes: count(Status::Success),
        estimation_failures: count(Status::Estimation),
        degenerate: count(Status::DegenerateSubspace),
        search_failures: count(Status::SearchFail),
        budget_stops: count(Status::Budget),
        success_rate: if runs == 0 { 0.0 } else { count(Status::Success) as f64 / runs as f64 },
        mean_exact_error: if errors.is_empty() { None } else { Some(errors.iter().sum::<f64>() / errors.len() as f64) },
        max_exact_error: errors.iter().copied().reduce(f64::max),
        mean_seconds: if runs == 0 { 0.0 } else { records.iter().map(|r| r.timings.total).sum::<f64>() / runs as f64 },
    }
}

/// Runs every `(case, seed)` pair; records come back in case-major, seed
/// order regardless of scheduling.
pub fn run_bench(spec: &BenchSpec) -> Result<(Vec<ExperimentRecord>, Vec<BenchRow>)> {
    if spec.cases.is_empty() || spec.seeds.is_empty() {
        return invalid("bench needs at least one case and one seed");
    }
    let jobs: Vec<(usize, u64)> = (0..spec.cases.len()).flat_map(|c| spec.seeds.iter().map(move |&s| (c, s))).collect();
    let records = jobs.par_iter().map(|&(c, s)| run_one(spec, &spec.cases[c], s)).collect::<Result<Vec<_>>>()?;
    let per_case = spec.seeds.len();
    let rows = spec
        .cases
        .iter()
        .enumerate()
        .map(|(c, case)| summarize(case, &records[c * per_case..(c + 1) * per_case]))
        .collect();
    Ok((records, rows))
}

/// One JSON record per line.
pub fn write_ndjson<W: Write>(records: &[ExperimentRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Internal(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_in_exact_mode() {
        let spec = BenchSpec {
            cases: vec![BenchCase {
                kind: InstanceKind::Separated,
                k: 1,
                d: 4,
                norm_bound: 1.0,
                epsilon: 0.3,
                knobs: InstanceKnobs::default(),
            }],
            seeds: vec![1, 2],
            moment_mode: MomentMode::Exact,
            scoring: ScoringRule::FirstAccept,
            budget: SearchBudget::default(),
            overrides: ParamOverrides { n_val: Some(5_000), ..Default::default() },
        };
        let (records, rows) = run_bench(&spec).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(rows[0].runs, 2);
        let mut buf = Vec::new();
        write_ndjson(&records, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
        let mut csv_buf = Vec::new();
        write_summary_csv(&rows, &mut csv_buf).unwrap();
        let text = String::from_utf8(csv_buf).unwrap();
        assert!(text.starts_with("kind,k,d,R,epsilon,runs"));
    }
}
