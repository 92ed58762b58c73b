//! Nets over `V` and `[−R, R]`, hold-out validation, and the candidate
//! enumeration that returns the first accepted model.
//!
//! Candidates are enumerated by size `m = 0, 1, …, k`; within a level, by
//! non-decreasing tuples of net-point indices in lexicographic order; within
//! a tuple, by coefficient indices in lexicographic order. The global index of
//! a candidate is its rank in this order.
//!
//! The hold-out residual of every candidate is a quadratic form in its
//! coefficients,
//!
//! ```text
//! Q(λ) = c₀ − 2 Σ λ_j h_{t_j} + Σ λ_i λ_j G_{t_i t_j},
//! ```
//!
//! where `b = y − ⟨ŵ, x⟩`, `P_t = |⟨û_t, x⟩|`, `c₀ = mean(b²)`,
//! `h_t = mean(b P_t)` and `G_{st} = mean(P_s P_t)`. The enumeration walks the
//! coefficient indices depth-first and skips every subtree whose continuous
//! lower bound exceeds the acceptance threshold. Skipped subtrees cannot
//! contain an accepted candidate, so the returned candidate is exactly the
//! one a plain scan would return. Every acceptance is confirmed by a direct
//! [`validate`] pass over the hold-out set.

use std::time::Instant;

use nalgebra::{DMatrix, DMatrixView, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{AbsNetwork, Dataset};
use crate::rng;
use crate::subspace::CandidateSubspace;

/// `ŵ` plus `m` signed absolute-value units.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateModel {
    pub linear_term: DVector<f64>,
    pub lambdas: Vec<f64>,
    pub directions: Vec<DVector<f64>>,
}

impl CandidateModel {
    pub fn linear_only(w: DVector<f64>) -> Self {
        Self { linear_term: w, lambdas: Vec::new(), directions: Vec::new() }
    }

    pub fn m(&self) -> usize {
        self.lambdas.len()
    }

    pub fn dim(&self) -> usize {
        self.linear_term.len()
    }

    pub fn lambda_l1(&self) -> f64 {
        self.lambdas.iter().map(|l| l.abs()).sum()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut acc: f64 = self.linear_term.iter().zip(x).map(|(a, b)| a * b).sum();
        for (l, u) in self.lambdas.iter().zip(&self.directions) {
            acc += l * u.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().abs();
        }
        acc
    }

    /// The model as a network with norm bound `max(R, Σ|λ̂|, 1)`.
    pub fn to_network(&self, norm_bound: f64) -> Result<AbsNetwork> {
        let r = norm_bound.max(self.lambda_l1()).max(1.0);
        AbsNetwork::new(self.linear_term.clone(), self.lambdas.clone(), self.directions.clone(), r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_net_points: usize,
    pub max_candidates: u64,
    pub wall_clock_secs: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { max_net_points: 512, max_candidates: 1_000_000_000_000, wall_clock_secs: 600.0 }
    }
}

impl SearchBudget {
    pub fn check(&self) -> Result<()> {
        if self.max_net_points == 0 || self.max_candidates == 0 || !(self.wall_clock_secs > 0.0) {
            return invalid("budget fields must be positive");
        }
        Ok(())
    }
}

/// `count` uniform points on the unit sphere of `V`, as ambient vectors.
pub fn random_sphere_net(v: &CandidateSubspace, xi: f64, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    if !(xi > 0.0 && xi < 2.0) {
        return invalid("net radius must lie in (0, 2)");
    }
    if count == 0 {
        return invalid("net must contain at least one point");
    }
    let r = v.dim();
    if r == 0 {
        return invalid("cannot place net points in a zero-dimensional subspace");
    }
    let mut rng = rng::block_rng(seed, 0);
    let mut coords = vec![0.0; r];
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        rng::fill_gaussian(&mut rng, &mut coords);
        let c = DVector::from_column_slice(&coords);
        let n = c.norm();
        if n == 0.0 {
            continue;
        }
        let p = &v.basis * (c / n);
        let pn = p.norm();
        out.push(p / pn);
    }
    Ok(out)
}

/// Drops points equal to an earlier point or its negation within `tol`.
/// Sign is irrelevant because `|⟨u, x⟩| = |⟨−u, x⟩|`.
pub fn dedupe_modulo_sign(points: Vec<DVector<f64>>, tol: f64) -> Vec<DVector<f64>> {
    let mut kept: Vec<DVector<f64>> = Vec::with_capacity(points.len());
    for p in points {
        let dup = kept.iter().any(|q| (&p - q).norm() <= tol || (&p + q).norm() <= tol);
        if !dup {
            kept.push(p);
        }
    }
    kept
}

/// Net size for a subspace of dimension `dim_v`: `(2/ξ)^{dim V}` up to a log
/// factor in practical mode and `(2/ξ)^{2·dim V}` in theory mode, capped.
pub fn net_point_count(dim_v: usize, xi: f64, theory: bool, cap: usize) -> usize {
    if dim_v == 0 {
        return 0;
    }
    let base = (2.0 / xi).max(1.0);
    let r = dim_v as f64;
    let raw = if theory { base.powf(2.0 * r) } else { base.powf(r) * (r * base.ln()).max(1.0) };
    if !raw.is_finite() || raw >= cap as f64 {
        cap
    } else {
        (raw.ceil() as usize).clamp(1, cap)
    }
}

/// Largest coefficient grid accepted.
pub const MAX_GRID_POINTS: usize = 10_000_000;

/// `{−R, −R+ξ, …} ∪ {R}`.
pub fn lambda_grid(norm_bound: f64, xi: f64) -> Result<Vec<f64>> {
    if !(norm_bound >= 1.0 && norm_bound.is_finite()) {
        return invalid("norm bound must be finite and >= 1");
    }
    if !(xi > 0.0) {
        return invalid("grid spacing must be positive");
    }
    let steps = (2.0 * norm_bound / xi).floor();
    if steps > MAX_GRID_POINTS as f64 {
        return invalid(format!("coefficient grid would have {steps} points"));
    }
    let mut out = Vec::with_capacity(steps as usize + 2);
    for i in 0..=(steps as usize) {
        let t = -norm_bound + i as f64 * xi;
        if t < norm_bound * (1.0 - 1e-12) {
            out.push(t);
        }
    }
    out.push(norm_bound);
    Ok(out)
}

/// Mean squared hold-out residual and whether it is at most `ε²/2`.
pub fn validate(candidate: &CandidateModel, holdout: &Dataset, epsilon: f64) -> Result<(bool, f64)> {
    if holdout.is_empty() {
        return invalid("hold-out set is empty");
    }
    if holdout.dim() != candidate.dim() {
        return Err(Error::DimensionMismatch { expected: candidate.dim(), got: holdout.dim() });
    }
    let sum: f64 = holdout.iter().map(|(x, y)| (y - candidate.evaluate(x)).powi(2)).sum();
    let mean = sum / holdout.len() as f64;
    Ok((mean <= epsilon * epsilon / 2.0, mean))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringRule {
    /// Return the first candidate that validates.
    #[default]
    FirstAccept,
    /// Return the candidate with the largest `mean(2yf̂ − f̂²)`, if it
    /// validates.
    CsqBestOfAll,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub net_points: usize,
    pub lambda_points: usize,
    pub levels_entered: usize,
    /// Size of the index space of all levels entered.
    pub candidates_in_scope: f64,
    pub tuples_visited: u64,
    pub bound_evaluations: u64,
    pub leaves_evaluated: u64,
    pub direct_validations: u64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SearchOutcome {
    Found { model: CandidateModel, index: u64, residual: f64, stats: SearchStats },
    Fail { best_residual: f64, stats: SearchStats },
    Budget { reason: String, stats: SearchStats },
}

impl SearchOutcome {
    pub fn stats(&self) -> &SearchStats {
        match self {
            SearchOutcome::Found { stats, .. }
            | SearchOutcome::Fail { stats, .. }
            | SearchOutcome::Budget { stats, .. } => stats,
        }
    }
}

pub struct SearchInput<'a> {
    pub linear_term: &'a DVector<f64>,
    pub u_net: &'a [DVector<f64>],
    pub lambda_net: &'a [f64],
    pub holdout: &'a Dataset,
    pub epsilon: f64,
    pub k: usize,
    pub norm_bound: f64,
    pub budget: &'a SearchBudget,
    pub rule: ScoringRule,
}

/// Rows of the hold-out processed per block when forming `h` and `G`.
const GRAM_CHUNK: usize = 8192;

/// Hold-out sufficient statistics for the quadratic residual.
struct Gram {
    c0: f64,
    h: Vec<f64>,
    diag: Vec<f64>,
    full: Option<DMatrix<f64>>,
    /// Net points as rows.
    u: DMatrix<f64>,
}

/// `|U X|` for net points `U` (rows) and a block of inputs `X` (columns).
fn abs_projections(u: &DMatrix<f64>, xs: DMatrixView<f64>) -> DMatrix<f64> {
    let mut p = u * xs;
    p.apply(|v| *v = v.abs());
    p
}

impl Gram {
    fn new(input: &SearchInput) -> Self {
        let hold = input.holdout;
        let d = hold.dim();
        let n = hold.len();
        let nu = input.u_net.len();
        let u = if nu == 0 { DMatrix::zeros(0, d) } else { DMatrix::from_columns(input.u_net).transpose() };
        let w = input.linear_term;
        let mut c0 = 0.0;
        let mut h = DVector::zeros(nu);
        let mut diag = vec![0.0; nu];
        let mut lo = 0;
        while lo < n {
            let hi = (lo + GRAM_CHUNK).min(n);
            let xs = DMatrixView::from_slice(&hold.inputs()[lo * d..hi * d], d, hi - lo);
            let b = DVector::from_iterator(hi - lo, (lo..hi).map(|i| hold.y(i) - dot(w, hold.x(i))));
            c0 += b.norm_squared();
            if nu > 0 {
                let p = abs_projections(&u, xs);
                h.gemv(1.0, &p, &b, 1.0);
                for (t, row) in p.row_iter().enumerate() {
                    diag[t] += row.norm_squared();
                }
            }
            lo = hi;
        }
        let nf = n as f64;
        Self {
            c0: c0 / nf,
            h: h.iter().map(|v| v / nf).collect(),
            diag: diag.iter().map(|v| v / nf).collect(),
            full: None,
            u,
        }
    }

    fn ensure_full(&mut self, hold: &Dataset) {
        if self.full.is_some() {
            return;
        }
        let d = hold.dim();
        let n = hold.len();
        let nu = self.u.nrows();
        let mut g = DMatrix::zeros(nu, nu);
        let mut lo = 0;
        while lo < n {
            let hi = (lo + GRAM_CHUNK).min(n);
            let xs = DMatrixView::from_slice(&hold.inputs()[lo * d..hi * d], d, hi - lo);
            let p = abs_projections(&self.u, xs);
            g.gemm(1.0, &p, &p.transpose(), 1.0);
            lo = hi;
        }
        g /= n as f64;
        // keep the diagonal bit-identical to the one used at level 1
        for t in 0..nu {
            g[(t, t)] = self.diag[t];
        }
        self.full = Some(crate::linalg::symmetrize(&g));
    }

    fn g(&self, s: usize, t: usize) -> f64 {
        if s == t {
            self.diag[s]
        } else {
            self.full.as_ref().expect("full Gram matrix required for m >= 2")[(s, t)]
        }
    }
}

fn dot(w: &DVector<f64>, x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// `C(n + m − 1, m)` as a float.
fn multiset_count(n: usize, m: usize) -> f64 {
    if m == 0 {
        return 1.0;
    }
    if n == 0 {
        return 0.0;
    }
    let mut acc = 1.0;
    for i in 0..m {
        acc *= (n + i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Per-position data for the bound `B(t) = α t² − 2βt + γ` inside one tuple.
struct PositionBound {
    alpha: f64,
    /// `(G_FF + δI)⁻¹`.
    ainv: DMatrix<f64>,
    /// `(G_FF + δI)⁻¹ G_Fp`.
    w: DVector<f64>,
    /// `δ |F| R²`.
    reg: f64,
}

struct TupleBounds {
    g: DMatrix<f64>,
    h: Vec<f64>,
    positions: Vec<PositionBound>,
}

impl TupleBounds {
    fn new(gram: &Gram, tuple: &[usize], norm_bound: f64) -> Self {
        let m = tuple.len();
        let g = DMatrix::from_fn(m, m, |i, j| gram.g(tuple[i], tuple[j]));
        let h = tuple.iter().map(|&t| gram.h[t]).collect();
        let max_diag = (0..m).map(|i| g[(i, i)]).fold(1.0, f64::max);
        let mut positions = Vec::with_capacity(m);
        for p in 0..m {
            let f = m - p - 1;
            if f == 0 {
                positions.push(PositionBound {
                    alpha: g[(p, p)],
                    ainv: DMatrix::zeros(0, 0),
                    w: DVector::zeros(0),
                    reg: 0.0,
                });
                continue;
            }
            let gff = g.view((p + 1, p + 1), (f, f)).into_owned();
            let gfp = g.view((p + 1, p), (f, 1)).column(0).into_owned();
            let mut delta = 1e-9 * max_diag;
            let ainv = loop {
                let a = &gff + DMatrix::identity(f, f) * delta;
                if let Some(ch) = a.cholesky() {
                    break ch.inverse();
                }
                delta *= 10.0;
            };
            let w = &ainv * &gfp;
            let alpha = g[(p, p)] - gfp.dot(&w);
            positions.push(PositionBound { alpha, ainv, w, reg: delta * f as f64 * norm_bound * norm_bound });
        }
        Self { g, h, positions }
    }
}

enum Flow {
    Continue,
    Stop,
}

struct Searcher<'a, 'b> {
    input: &'a SearchInput<'b>,
    gram: Gram,
    grid: &'a [f64],
    threshold: f64,
    slack: f64,
    start: Instant,
    stats: SearchStats,
    best_q: f64,
    best: Option<(CandidateModel, u64)>,
    found: Option<(CandidateModel, u64, f64)>,
    budget_hit: Option<String>,
}

impl<'a, 'b> Searcher<'a, 'b> {
    fn over_time(&mut self) -> bool {
        if self.start.elapsed().as_secs_f64() > self.input.budget.wall_clock_secs {
            self.budget_hit = Some(format!("wall-clock cap of {} s reached", self.input.budget.wall_clock_secs));
            true
        } else {
            false
        }
    }

    /// Current acceptance threshold for pruning.
    fn prune_level(&self) -> f64 {
        match self.input.rule {
            ScoringRule::FirstAccept => self.threshold,
            ScoringRule::CsqBestOfAll => self.best_q,
        }
    }

    fn model(&self, tuple: &[usize], lambdas: &[f64]) -> CandidateModel {
        CandidateModel {
            linear_term: self.input.linear_term.clone(),
            lambdas: lambdas.to_vec(),
            directions: tuple.iter().map(|&t| self.input.u_net[t].clone()).collect(),
        }
    }

    fn leaf(&mut self, tuple: &[usize], lambdas: &[f64], q: f64, index: u64) -> Result<Flow> {
        self.stats.leaves_evaluated += 1;
        match self.input.rule {
            ScoringRule::FirstAccept => {
                if q < self.best_q {
                    self.best_q = q;
                }
                if q <= self.threshold + self.slack {
                    let model = self.model(tuple, lambdas);
                    self.stats.direct_validations += 1;
                    let (ok, residual) = validate(&model, self.input.holdout, self.input.epsilon)?;
                    if ok {
                        self.found = Some((model, index, residual));
                        return Ok(Flow::Stop);
                    }
                }
            }
            ScoringRule::CsqBestOfAll => {
                if q < self.best_q {
                    self.best_q = q;
                    self.best = Some((self.model(tuple, lambdas), index));
                }
            }
        }
        Ok(Flow::Continue)
    }

    /// Walks coefficient position `p` of `tuple` given the prefix `lambdas`
    /// and its lexicographic index `prefix_index`.
    #[allow(clippy::too_many_arguments)]
    fn walk(
        &mut self,
        tuple: &[usize],
        tb: &TupleBounds,
        lambdas: &mut Vec<f64>,
        prefix_l1: f64,
        prefix_index: u64,
        base_index: u64,
    ) -> Result<Flow> {
        let m = tuple.len();
        let p = lambdas.len();
        let nl = self.grid.len() as u64;
        let pos = &tb.positions[p];

        // r_s = h_s − Σ_{j<p} G_sj λ_j for s ≥ p
        let r: Vec<f64> = (p..m).map(|s| tb.h[s] - (0..p).map(|j| tb.g[(s, j)] * lambdas[j]).sum::<f64>()).collect();
        let mut const_p = self.gram.c0;
        for i in 0..p {
            const_p -= 2.0 * tb.h[i] * lambdas[i];
            for j in 0..p {
                const_p += lambdas[i] * lambdas[j] * tb.g[(i, j)];
            }
        }
        let rf = DVector::from_column_slice(&r[1..]);
        let beta = r[0] - pos.w.dot(&rf);
        let gamma = const_p - if rf.is_empty() { 0.0 } else { rf.dot(&(&pos.ainv * &rf)) } - pos.reg;
        let alpha = pos.alpha;

        let level = self.prune_level() + self.slack;
        let (lo_idx, hi_idx) = if alpha > 1e-12 * tb.g[(p, p)].max(1.0) {
            let disc = beta * beta - alpha * (gamma - level);
            if disc < 0.0 {
                return Ok(Flow::Continue);
            }
            let root = disc.sqrt();
            let lo = (beta - root) / alpha;
            let hi = (beta + root) / alpha;
            let pad = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
            let a = self.grid.partition_point(|&t| t < lo - pad);
            let b = self.grid.partition_point(|&t| t <= hi + pad);
            (a, b)
        } else {
            (0, self.grid.len())
        };

        let r_limit = self.input.norm_bound * (1.0 + 1e-12);
        for i in lo_idx..hi_idx {
            let t = self.grid[i];
            if prefix_l1 + t.abs() > r_limit {
                continue;
            }
            self.stats.bound_evaluations += 1;
            if self.stats.bound_evaluations.is_multiple_of(65_536) && self.over_time() {
                return Ok(Flow::Stop);
            }
            let b = alpha * t * t - 2.0 * beta * t + gamma;
            if b > self.prune_level() + self.slack {
                continue;
            }
            let index = prefix_index * nl + i as u64;
            lambdas.push(t);
            let flow = if p + 1 == m {
                self.leaf(tuple, lambdas, b, base_index + index)?
            } else {
                self.walk(tuple, tb, lambdas, prefix_l1 + t.abs(), index, base_index)?
            };
            lambdas.pop();
            if let Flow::Stop = flow {
                return Ok(Flow::Stop);
            }
        }
        Ok(Flow::Continue)
    }
}

/// Enumerates candidates and returns the first (or best) validated one.
pub fn candidate_search(input: &SearchInput) -> Result<SearchOutcome> {
    input.budget.check()?;
    if input.holdout.is_empty() {
        return invalid("hold-out set is empty");
    }
    if input.holdout.dim() != input.linear_term.len() {
        return Err(Error::DimensionMismatch { expected: input.linear_term.len(), got: input.holdout.dim() });
    }
    if !(input.epsilon >= 0.0) {
        return invalid("epsilon must be non-negative");
    }
    if input.lambda_net.is_empty() {
        return invalid("coefficient net is empty");
    }
    if input.lambda_net.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("coefficient net must be strictly increasing");
    }
    if input.lambda_net.iter().any(|l| l.abs() > input.norm_bound * (1.0 + 1e-12)) {
        return invalid("coefficient net exceeds the norm bound");
    }
    for u in input.u_net {
        if u.len() != input.linear_term.len() {
            return Err(Error::DimensionMismatch { expected: input.linear_term.len(), got: u.len() });
        }
        if (u.norm() - 1.0).abs() > 1e-9 {
            return invalid("net points must be unit vectors");
        }
    }

    let start = Instant::now();
    let gram = Gram::new(input);
    let c0 = gram.c0;
    let mut s = Searcher {
        input,
        gram,
        grid: input.lambda_net,
        threshold: input.epsilon * input.epsilon / 2.0,
        slack: 1e-10 * (1.0 + c0),
        start,
        stats: SearchStats {
            net_points: input.u_net.len(),
            lambda_points: input.lambda_net.len(),
            ..SearchStats::default()
        },
        best_q: f64::INFINITY,
        best: None,
        found: None,
        budget_hit: None,
    };
    let nu = input.u_net.len();
    let nl = input.lambda_net.len();

    let mut offset: u64 = 0;
    let mut cumulative = 0.0f64;
    'levels: for m in 0..=input.k {
        let level_size = multiset_count(nu, m) * (nl as f64).powi(m as i32);
        if m > 0 && level_size == 0.0 {
            break;
        }
        cumulative += level_size;
        if cumulative > input.budget.max_candidates as f64 {
            s.budget_hit = Some(format!(
                "level m={m} would raise the candidate count to {cumulative:.3e}, above the cap of {}",
                input.budget.max_candidates
            ));
            break;
        }
        s.stats.levels_entered += 1;
        s.stats.candidates_in_scope = cumulative;
        if m == 0 {
            let flow = s.leaf(&[], &[], c0, 0)?;
            offset += 1;
            if let Flow::Stop = flow {
                break;
            }
            continue;
        }
        if m >= 2 {
            s.gram.ensure_full(input.holdout);
        }
        let per_tuple = (nl as u64).pow(m as u32);
        let mut tuple = vec![0usize; m];
        let mut rank: u64 = 0;
        loop {
            s.stats.tuples_visited += 1;
            if s.stats.tuples_visited.is_multiple_of(1024) && s.over_time() {
                break 'levels;
            }
            let tb = TupleBounds::new(&s.gram, &tuple, input.norm_bound);
            let mut lambdas = Vec::with_capacity(m);
            if let Flow::Stop = s.walk(&tuple, &tb, &mut lambdas, 0.0, 0, offset + rank * per_tuple)? {
                break 'levels;
            }
            rank += 1;
            // next non-decreasing tuple
            let mut pos = m;
            while pos > 0 && tuple[pos - 1] == nu - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            tuple[pos - 1] += 1;
            let v = tuple[pos - 1];
            for slot in tuple.iter_mut().skip(pos) {
                *slot = v;
            }
        }
        offset += rank * per_tuple;
    }

    s.stats.elapsed_secs = s.start.elapsed().as_secs_f64();
    let mut stats = s.stats.clone();
    if let Some((model, index, residual)) = s.found.take() {
        return Ok(SearchOutcome::Found { model, index, residual, stats });
    }
    if let Some(reason) = s.budget_hit.take() {
        return Ok(SearchOutcome::Budget { reason, stats });
    }
    if let ScoringRule::CsqBestOfAll = input.rule {
        if let Some((model, index)) = s.best.take() {
            stats.direct_validations += 1;
            let (ok, residual) = validate(&model, input.holdout, input.epsilon)?;
            if ok {
                return Ok(SearchOutcome::Found { model, index, residual, stats });
            }
            return Ok(SearchOutcome::Fail { best_residual: residual, stats });
        }
    }
    Ok(SearchOutcome::Fail { best_residual: s.best_q.max(0.0), stats })
}
