//! The end-to-end learner and its diagnostic variant.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_diameter_check, suggest_delta, ClusterPartition, DiameterReport};
use crate::error::{invalid, Error, Result};
use crate::harness::instance::{regenerate, InstanceDescriptor};
use crate::harness::params::{ParamMode, ResolvedThresholds};
use crate::harness::record::{
    config_hash, ExperimentRecord, FinalError, LearnConfig, MomentMode, MomentSummary, OrderError, SampleCounts,
    SearchRecord, Seeds, Status, SubspaceRecord, Timings, RECORD_FORMAT, RECORD_VERSION,
};
use crate::moments::{
    anti_concentration_ok, estimate_moments, make_context, sample_direction, true_contracted_moment,
    AntiConcentrationReport, ContractionContext, DEFAULT_ANTI_C, DEFAULT_ANTI_C_PRIME,
};
use crate::network::{exact_l2_distance, mc_l2_distance, sample_dataset, AbsNetwork, Dataset};
use crate::search::{
    candidate_search, dedupe_modulo_sign, lambda_grid, net_point_count, random_sphere_net, CandidateModel, SearchInput,
    SearchOutcome,
};
use crate::subspace::{containment_diagnostics, extract_v, threshold_projector, CandidateSubspace, ContainmentReport};

/// Where labels come from.
#[derive(Clone, Copy, Debug)]
pub enum Oracle<'a> {
    /// A known target; samples are drawn from it as needed.
    Network { net: &'a AbsNetwork, instance: Option<&'a InstanceDescriptor> },
    /// Fixed training and hold-out sets.
    Samples { train: &'a Dataset, holdout: &'a Dataset },
}

impl Oracle<'_> {
    fn truth(&self) -> Option<&AbsNetwork> {
        match self {
            Oracle::Network { net, .. } => Some(net),
            Oracle::Samples { .. } => None,
        }
    }

    fn dim(&self) -> usize {
        match self {
            Oracle::Network { net, .. } => net.dim(),
            Oracle::Samples { train, .. } => train.dim(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LearnResult {
    pub model: Option<CandidateModel>,
    pub record: ExperimentRecord,
}

impl LearnResult {
    pub fn status(&self) -> Status {
        self.record.status
    }
}

/// Moments and linear term, from samples or from the target.
struct MomentStage {
    g: DVector<f64>,
    w_hat: DVector<f64>,
    matrices: Vec<(usize, DMatrix<f64>)>,
    summary: MomentSummary,
}

fn moment_stage(
    oracle: &Oracle,
    train: Option<&Dataset>,
    g: DVector<f64>,
    orders: &[usize],
    mode: MomentMode,
) -> Result<MomentStage> {
    let truth = oracle.truth();
    match mode {
        MomentMode::Exact => {
            let net = truth.ok_or_else(|| Error::InvalidArgument("exact moments need a known target".into()))?;
            let matrices =
                orders.iter().map(|&l| Ok((l, true_contracted_moment(net, &g, l)?))).collect::<Result<Vec<_>>>()?;
            let summary = MomentSummary {
                orders: orders
                    .iter()
                    .map(|&order| OrderError { order, std_error: Some(0.0), error: Some(0.0) })
                    .collect(),
                linear_error: Some(0.0),
                ..MomentSummary::default()
            };
            Ok(MomentStage { g, w_hat: net.linear_term().clone(), matrices, summary })
        }
        MomentMode::Sampled => {
            let train = train.ok_or_else(|| Error::Internal("training samples missing".into()))?;
            let est = estimate_moments(train, &g, orders)?;
            let mut orders_out = Vec::with_capacity(orders.len());
            for m in &est.moments {
                if m.matrix.iter().any(|v| !v.is_finite()) {
                    return Err(Error::IllConditioned(format!(
                        "non-finite moment estimate at order {}",
                        m.order.get()
                    )));
                }
                let error = match truth {
                    Some(net) => Some((&m.matrix - true_contracted_moment(net, &g, m.order.get())?).norm()),
                    None => None,
                };
                orders_out.push(OrderError { order: m.order.get(), std_error: m.std_error, error });
            }
            let summary = MomentSummary {
                n_samples: est.n_samples,
                measured_error: est.max_std_error(),
                max_abs_hermite: est.max_abs_hermite,
                linear_std_error: est.linear_std_error,
                linear_error: truth.map(|net| (&est.linear_term - net.linear_term()).norm()),
                orders: orders_out,
            };
            let matrices = est.moments.into_iter().map(|m| (m.order.get(), m.matrix)).collect();
            Ok(MomentStage { g, w_hat: est.linear_term, matrices, summary })
        }
    }
}

fn spectral_stage(
    matrices: &[(usize, DMatrix<f64>)],
    th: &ResolvedThresholds,
) -> Result<(CandidateSubspace, Vec<(usize, usize)>)> {
    let projectors =
        matrices.iter().map(|(l, m)| threshold_projector(m, th.eta_prime_for(*l), *l)).collect::<Result<Vec<_>>>()?;
    let ranks = projectors.iter().map(|p| (p.order, p.rank())).collect();
    Ok((extract_v(&projectors, th.nu)?, ranks))
}

fn truth_diagnostics(
    net: &AbsNetwork,
    g: &DVector<f64>,
    th: &ResolvedThresholds,
    v: &CandidateSubspace,
    orders: &[usize],
) -> Result<(ContainmentReport, AntiConcentrationReport)> {
    let ctx = make_context(net, g)?;
    let partition = ClusterPartition::build(&ctx, net, th.delta, th.tau)?;
    let exact = orders.iter().map(|&l| Ok((l, true_contracted_moment(net, g, l)?))).collect::<Result<Vec<_>>>()?;
    let containment = containment_diagnostics(net, &ctx, &partition, v, &exact, th.xi / 4.0)?;
    let anti = anti_concentration_ok(&ctx, net, DEFAULT_ANTI_C, DEFAULT_ANTI_C_PRIME)?;
    Ok((containment, anti))
}

struct Builder {
    record: ExperimentRecord,
    start: Instant,
}

impl Builder {
    fn lap(&mut self) -> f64 {
        let now = Instant::now();
        let dt = now.duration_since(self.start).as_secs_f64();
        self.start = now;
        dt
    }

    fn finish(mut self, status: Status, failure: Option<String>, model: Option<CandidateModel>) -> LearnResult {
        self.record.status = status;
        self.record.failure = failure;
        self.record.timings.finalize();
        self.record.sample_counts.finalize();
        LearnResult { model, record: self.record }
    }
}

/// Runs the learner end to end. Stage failures are classified in the
/// returned record; configuration errors and theory-mode refusals are
/// returned as `Err`.
pub fn learn(oracle: &Oracle, config: &LearnConfig) -> Result<LearnResult> {
    let params = &config.params;
    config.budget.check()?;
    if params.refuses_estimation() {
        return Err(Error::EstimationRefused(format!(
            "theory-mode sample count N = {} exceeds the run limit",
            params.n_samples
        )));
    }
    let d = oracle.dim();
    if d != params.d {
        return Err(Error::DimensionMismatch { expected: params.d, got: d });
    }
    if config.moment_mode == MomentMode::Exact && oracle.truth().is_none() {
        return invalid("exact moments need a known target network");
    }
    let n = params.n_samples_count().ok_or_else(|| Error::InvalidArgument("N is not a usable count".into()))?;
    let n_val = params.n_val_count().ok_or_else(|| Error::InvalidArgument("N_val is not a usable count".into()))?;
    let seeds = Seeds::derive(config.seed);
    let instance = match oracle {
        Oracle::Network { instance, .. } => instance.cloned(),
        Oracle::Samples { .. } => None,
    };
    let mut b = Builder {
        record: ExperimentRecord {
            format: RECORD_FORMAT.to_string(),
            version: RECORD_VERSION,
            config_hash: config_hash(config, instance.as_ref())?,
            config: config.clone(),
            seeds,
            instance,
            direction: Vec::new(),
            resolved: None,
            moments: MomentSummary::default(),
            subspace: None,
            search: None,
            status: Status::Estimation,
            failure: None,
            model: None,
            final_error: None,
            timings: Timings::default(),
            sample_counts: SampleCounts::default(),
            warnings: params.warnings.clone(),
        },
        start: Instant::now(),
    };

    // sampling
    let (train_owned, holdout_owned) = match oracle {
        Oracle::Network { net, .. } => {
            let train = match config.moment_mode {
                MomentMode::Sampled => Some(sample_dataset(net, n, seeds.train)?),
                MomentMode::Exact => None,
            };
            (train, Some(sample_dataset(net, n_val, seeds.holdout)?))
        }
        Oracle::Samples { .. } => (None, None),
    };
    let (train, holdout): (Option<&Dataset>, &Dataset) = match oracle {
        Oracle::Samples { train, holdout } => (Some(*train), *holdout),
        Oracle::Network { .. } => (train_owned.as_ref(), holdout_owned.as_ref().expect("hold-out drawn above")),
    };
    if holdout.dim() != d || train.is_some_and(|t| t.dim() != d) {
        return invalid("sample dimension does not match the parameters");
    }
    b.record.sample_counts.train = train.map_or(0, |t| t.len());
    b.record.sample_counts.holdout = holdout.len();
    b.record.timings.sampling = b.lap();

    // estimation
    let g = sample_direction(d, seeds.direction)?;
    b.record.direction = g.iter().copied().collect();
    let stage = match moment_stage(oracle, train, g, &params.orders, config.moment_mode) {
        Ok(s) => s,
        Err(e @ (Error::InvalidArgument(_) | Error::DimensionMismatch { .. })) => return Err(e),
        Err(e) => {
            b.record.timings.estimation = b.lap();
            return Ok(b.finish(Status::Estimation, Some(e.to_string()), None));
        }
    };
    b.record.moments = stage.summary.clone();
    let resolved = match params.resolve(&stage.summary.order_errors()) {
        Ok(r) => r,
        Err(e) => {
            b.record.timings.estimation = b.lap();
            return Ok(b.finish(Status::Estimation, Some(e.to_string()), None));
        }
    };
    b.record.resolved = Some(resolved.clone());
    b.record.timings.estimation = b.lap();

    // spectral
    let (v, projector_ranks) = spectral_stage(&stage.matrices, &resolved)?;
    let (containment, anti) = match oracle.truth() {
        Some(net) => {
            let (c, a) = truth_diagnostics(net, &stage.g, &resolved, &v, &params.orders)?;
            (Some(c), Some(a))
        }
        None => (None, None),
    };
    if let Some(a) = &anti {
        if !a.passed {
            b.record
                .warnings
                .push(format!("direction failed the anti-concentration check on {} pair(s)", a.violations.len()));
        }
    }
    b.record.subspace = Some(SubspaceRecord {
        dim: v.dim(),
        kappas: v.kappas.clone(),
        spectrum: v.spectrum.clone(),
        projector_ranks,
        containment,
        anti_concentration: anti,
    });
    b.record.timings.spectral = b.lap();

    // nets
    let u_net = if v.dim() == 0 {
        Vec::new()
    } else {
        let count =
            net_point_count(v.dim(), resolved.xi, params.mode == ParamMode::Theory, config.budget.max_net_points);
        dedupe_modulo_sign(random_sphere_net(&v, resolved.xi, count, seeds.net)?, 1e-12)
    };
    let grid = lambda_grid(params.norm_bound, resolved.xi)?;
    b.record.timings.net = b.lap();

    // search
    let input = SearchInput {
        linear_term: &stage.w_hat,
        u_net: &u_net,
        lambda_net: &grid,
        holdout,
        epsilon: params.epsilon,
        k: params.k,
        norm_bound: params.norm_bound,
        budget: &config.budget,
        rule: config.scoring,
    };
    let outcome = candidate_search(&input)?;
    b.record.timings.search = b.lap();

    let (status, failure, model) = match outcome {
        SearchOutcome::Found { model, index, residual, stats } => {
            b.record.search = Some(SearchRecord {
                accepted_index: Some(index),
                residual: Some(residual),
                best_residual: Some(residual),
                budget_reason: None,
                stats,
            });
            (Status::Success, None, Some(model))
        }
        SearchOutcome::Fail { best_residual, stats } => {
            b.record.search = Some(SearchRecord {
                accepted_index: None,
                residual: None,
                best_residual: Some(best_residual),
                budget_reason: None,
                stats,
            });
            let status = if v.dim() == 0 { Status::DegenerateSubspace } else { Status::SearchFail };
            let msg = format!(
                "no candidate validated; best hold-out residual {best_residual:.6e} vs threshold {:.6e}",
                params.epsilon * params.epsilon / 2.0
            );
            (status, Some(msg), None)
        }
        SearchOutcome::Budget { reason, stats } => {
            b.record.search = Some(SearchRecord {
                accepted_index: None,
                residual: None,
                best_residual: None,
                budget_reason: Some(reason.clone()),
                stats,
            });
            (Status::Budget, Some(reason), None)
        }
    };

    // evaluation
    if let Some(m) = &model {
        let net = m.to_network(params.norm_bound)?;
        if let Some(truth) = oracle.truth() {
            let n_eval = n_val;
            b.record.final_error = Some(FinalError {
                exact: exact_l2_distance(truth, &net)?,
                monte_carlo: mc_l2_distance(truth, &net, n_eval, seeds.evaluation)?,
                mc_samples: n_eval,
            });
            b.record.sample_counts.evaluation = n_eval;
        }
        b.record.model = Some(net.to_file());
    }
    b.record.timings.evaluation = b.lap();
    Ok(b.finish(status, failure, model))
}

/// Re-runs the configuration stored in `record` against the regenerated
/// instance.
pub fn replay(record: &ExperimentRecord) -> Result<LearnResult> {
    let desc = record
        .instance
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("record has no instance descriptor to replay".into()))?;
    let inst = regenerate(desc)?;
    learn(&Oracle::Network { net: &inst.network, instance: Some(desc) }, &record.config)
}

/// Whether two records describe the same outcome.
pub fn same_outcome(a: &ExperimentRecord, b: &ExperimentRecord) -> bool {
    a.config_hash == b.config_hash
        && a.status == b.status
        && a.accepted_index() == b.accepted_index()
        && a.model == b.model
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub direction: Vec<f64>,
    pub context: ContractionContext,
    pub anti_concentration: AntiConcentrationReport,
    pub suggested_delta: Option<f64>,
    pub delta: f64,
    pub partition: ClusterPartition,
    pub diameters: DiameterReport,
    pub moments: MomentSummary,
    pub resolved: ResolvedThresholds,
    pub subspace_dim: usize,
    pub kappas: Vec<f64>,
    pub projector_ranks: Vec<(usize, usize)>,
    pub containment: ContainmentReport,
}

/// Subspace and cluster diagnostics without the search. The cluster scale
/// is `delta`, else the resolved `Δ` when it was configured explicitly, else
/// a value suggested by the observed projection gaps.
pub fn diagnose(net: &AbsNetwork, config: &LearnConfig, delta: Option<f64>) -> Result<DiagnosticReport> {
    let params = &config.params;
    if params.refuses_estimation() {
        return Err(Error::EstimationRefused(format!("theory-mode sample count N = {}", params.n_samples)));
    }
    if net.dim() != params.d {
        return Err(Error::DimensionMismatch { expected: params.d, got: net.dim() });
    }
    let seeds = Seeds::derive(config.seed);
    let g = sample_direction(net.dim(), seeds.direction)?;
    let train = match config.moment_mode {
        MomentMode::Sampled => {
            let n = params.n_samples_count().ok_or_else(|| Error::InvalidArgument("N is not a usable count".into()))?;
            Some(sample_dataset(net, n, seeds.train)?)
        }
        MomentMode::Exact => None,
    };
    let oracle = Oracle::Network { net, instance: None };
    let stage = moment_stage(&oracle, train.as_ref(), g.clone(), &params.orders, config.moment_mode)?;
    let resolved = params.resolve(&stage.summary.order_errors())?;
    let ctx = make_context(net, &g)?;
    let suggested = suggest_delta(&ctx.z);
    let explicit = matches!(&params.thresholds, crate::harness::params::Thresholds::Measured { delta: Some(_), .. });
    let delta = delta.or(if explicit { Some(resolved.delta) } else { None }).or(suggested).unwrap_or(resolved.delta);
    let partition = ClusterPartition::build(&ctx, net, delta, resolved.tau)?;
    let diameters = cluster_diameter_check(&ctx, net, &partition)?;
    let anti = anti_concentration_ok(&ctx, net, DEFAULT_ANTI_C, DEFAULT_ANTI_C_PRIME)?;
    let (v, projector_ranks) = spectral_stage(&stage.matrices, &resolved)?;
    let exact =
        params.orders.iter().map(|&l| Ok((l, true_contracted_moment(net, &g, l)?))).collect::<Result<Vec<_>>>()?;
    let containment = containment_diagnostics(net, &ctx, &partition, &v, &exact, resolved.xi / 4.0)?;
    Ok(DiagnosticReport {
        direction: g.iter().copied().collect(),
        context: ctx,
        anti_concentration: anti,
        suggested_delta: suggested,
        delta,
        partition,
        diameters,
        moments: stage.summary,
        resolved,
        subspace_dim: v.dim(),
        kappas: v.kappas.clone(),
        projector_ranks,
        containment,
    })
}
