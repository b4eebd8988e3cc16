//! Threshold-cascade policies evaluated on empirical data, two-model
//! threshold sweeps, and the constrained problems solved on a frontier.
//!
//! A query entering stage `j < k` stops there when `s_j >= tau_j` and is
//! escalated otherwise; the terminal stage always stops. Cost accumulates
//! over every invoked model. A threshold of exactly 1 escalates every query,
//! including those scored 1, so that the sweep endpoints are the
//! "never escalate" and "always escalate" policies.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::{EvalTable, ModelId};
use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

/// Default number of quantile levels in a threshold sweep.
pub const DEFAULT_N_TAU: usize = 200;

/// Ordered model subsequence plus one threshold per non-terminal stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadePolicy {
    pub sequence: Vec<ModelId>,
    pub thresholds: Vec<f64>,
}

impl CascadePolicy {
    pub fn new(sequence: Vec<ModelId>, thresholds: Vec<f64>) -> Result<Self> {
        if sequence.is_empty() {
            return Err(Error::Validation("cascade needs at least one model".into()));
        }
        if thresholds.len() + 1 != sequence.len() {
            return Err(Error::Validation(format!(
                "{} models need {} thresholds, got {}",
                sequence.len(),
                sequence.len() - 1,
                thresholds.len()
            )));
        }
        if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Validation(format!("threshold {t} outside [0, 1]")));
        }
        Ok(CascadePolicy {
            sequence,
            thresholds,
        })
    }

    pub fn single(model: ModelId) -> Self {
        CascadePolicy {
            sequence: vec![model],
            thresholds: Vec::new(),
        }
    }

    pub fn pair(low: ModelId, high: ModelId, tau: f64) -> Result<Self> {
        Self::new(vec![low, high], vec![tau])
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }
}

/// Anything that can sit on a frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Policy {
    Cascade(CascadePolicy),
    Router { router_weight: f64 },
}

impl Policy {
    pub fn as_cascade(&self) -> Option<&CascadePolicy> {
        match self {
            Policy::Cascade(p) => Some(p),
            Policy::Router { .. } => None,
        }
    }
}

impl From<CascadePolicy> for Policy {
    fn from(p: CascadePolicy) -> Self {
        Policy::Cascade(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub mean_cost: f64,
    pub mean_quality: f64,
    /// 0-based stopping stage per query, aligned with the evaluated index set.
    pub stops: Vec<usize>,
}

#[inline]
pub(crate) fn stops_at(score: f64, tau: f64) -> bool {
    tau < 1.0 && score >= tau
}

/// Walks one query through the cascade given by model columns `seq`.
/// Returns (stage, cost, quality).
#[inline]
pub(crate) fn run_query(
    table: &EvalTable,
    seq: &[usize],
    thresholds: &[f64],
    q: usize,
) -> Result<(usize, f64, f64)> {
    let mut cost = 0.0;
    let last = seq.len() - 1;
    for (stage, &m) in seq.iter().enumerate() {
        cost += table.costs(m)[q];
        if stage == last {
            return Ok((stage, cost, table.qualities(m)[q]));
        }
        let s = table.scores(m)[q].ok_or_else(|| Error::MissingScore {
            query: table.queries()[q].clone(),
            stage: stage + 1,
        })?;
        if stops_at(s, thresholds[stage]) {
            return Ok((stage, cost, table.qualities(m)[q]));
        }
    }
    unreachable!("terminal stage always stops")
}

pub(crate) fn resolve(table: &EvalTable, policy: &CascadePolicy) -> Result<Vec<usize>> {
    policy
        .sequence
        .iter()
        .map(|m| table.model_index(m))
        .collect()
}

/// Mean cost and quality of a cascade given as model column indices.
pub fn evaluate_indices(
    table: &EvalTable,
    seq: &[usize],
    thresholds: &[f64],
    index: &[usize],
) -> Result<(f64, f64)> {
    if index.is_empty() {
        return Err(Error::Validation("empty index set".into()));
    }
    let (mut c, mut u) = (0.0, 0.0);
    for &q in index {
        let (_, qc, qu) = run_query(table, seq, thresholds, q)?;
        c += qc;
        u += qu;
    }
    let n = index.len() as f64;
    Ok((c / n, u / n))
}

pub fn evaluate_policy(
    table: &EvalTable,
    policy: &CascadePolicy,
    index: &[usize],
) -> Result<PolicyEvaluation> {
    if index.is_empty() {
        return Err(Error::Validation("empty index set".into()));
    }
    let seq = resolve(table, policy)?;
    let mut stops = Vec::with_capacity(index.len());
    let (mut c, mut u) = (0.0, 0.0);
    for &q in index {
        let (stage, qc, qu) = run_query(table, &seq, &policy.thresholds, q)?;
        stops.push(stage);
        c += qc;
        u += qu;
    }
    let n = index.len() as f64;
    Ok(PolicyEvaluation {
        mean_cost: c / n,
        mean_quality: u / n,
        stops,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub cost: f64,
    pub quality: f64,
    pub policy: Policy,
}

/// Which side of a kink a slope is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Mutually non-dominated (cost, quality) points sorted by cost.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frontier {
    points: Vec<FrontierPoint>,
}

/// Solution of a constrained problem on a frontier.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedSolution {
    pub point: FrontierPoint,
    /// Whether the constraint holds with equality (complementary slackness
    /// then allows a positive multiplier).
    pub binding: bool,
}

const BINDING_TOL: f64 = 1e-12;

impl Frontier {
    pub fn points(&self) -> &[FrontierPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<FrontierPoint> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min_cost(&self) -> Option<f64> {
        self.points.first().map(|p| p.cost)
    }

    pub fn max_cost(&self) -> Option<f64> {
        self.points.last().map(|p| p.cost)
    }

    pub fn max_quality(&self) -> Option<f64> {
        self.points.last().map(|p| p.quality)
    }

    pub fn costs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.cost).collect()
    }

    pub fn qualities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.quality).collect()
    }

    /// Piecewise-linear quality at `budget`; clamps to the top quality above
    /// the most expensive point.
    pub fn interpolate(&self, budget: f64) -> Result<f64> {
        let first = self
            .points
            .first()
            .ok_or_else(|| Error::Infeasible("empty frontier".into()))?;
        if budget < first.cost {
            return Err(Error::Infeasible(format!(
                "budget {budget} below minimum frontier cost {}",
                first.cost
            )));
        }
        let i = self.points.partition_point(|p| p.cost <= budget);
        if i == self.points.len() {
            return Ok(self.points[i - 1].quality);
        }
        let a = &self.points[i - 1];
        let b = &self.points[i];
        if a.cost == budget {
            return Ok(a.quality);
        }
        let t = (budget - a.cost) / (b.cost - a.cost);
        Ok(a.quality + t * (b.quality - a.quality))
    }

    /// Slope dQ/dB of the piecewise-linear frontier on one side of `budget`.
    /// Zero beyond the last point; the first segment's slope below the first.
    pub fn slope_at(&self, budget: f64, side: Side) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        let seg = |i: usize| {
            let a = &self.points[i];
            let b = &self.points[i + 1];
            (b.quality - a.quality) / (b.cost - a.cost)
        };
        if budget < self.points[0].cost {
            return seg(0);
        }
        let i = self.points.partition_point(|p| p.cost < budget);
        let on_vertex = i < n && self.points[i].cost == budget;
        match side {
            Side::Left => {
                if i == 0 {
                    seg(0)
                } else if i >= n {
                    0.0
                } else {
                    seg(i - 1)
                }
            }
            Side::Right => {
                let start = if on_vertex { i } else { i.saturating_sub(1) };
                if i >= n || start + 1 >= n {
                    0.0
                } else {
                    seg(start)
                }
            }
        }
    }

    /// Maximum-quality point with cost at most `budget`.
    pub fn solve_p2(&self, budget: f64) -> Result<ConstrainedSolution> {
        let i = self.points.partition_point(|p| p.cost <= budget);
        if i == 0 {
            return Err(Error::Infeasible(format!(
                "no frontier point with cost <= {budget}"
            )));
        }
        let point = self.points[i - 1].clone();
        let binding = (point.cost - budget).abs() <= BINDING_TOL * budget.abs().max(1.0);
        Ok(ConstrainedSolution { point, binding })
    }

    /// Minimum-cost point with quality at least `target`.
    pub fn solve_p1(&self, target: f64) -> Result<ConstrainedSolution> {
        let point = self
            .points
            .iter()
            .find(|p| p.quality >= target)
            .cloned()
            .ok_or_else(|| {
                Error::Infeasible(format!("no frontier point with quality >= {target}"))
            })?;
        let binding = (point.quality - target).abs() <= BINDING_TOL;
        Ok(ConstrainedSolution { point, binding })
    }

    /// Upper concave envelope: the frontier reachable by randomizing between
    /// two deterministic policies.
    pub fn concavify(&self) -> MixtureFrontier {
        let mut hull: Vec<FrontierPoint> = Vec::with_capacity(self.points.len());
        for p in &self.points {
            while hull.len() >= 2 {
                let a = &hull[hull.len() - 2];
                let b = &hull[hull.len() - 1];
                // b strictly below chord a-p: remove it
                let lhs = (b.cost - a.cost) * (p.quality - a.quality);
                let rhs = (b.quality - a.quality) * (p.cost - a.cost);
                if lhs - rhs > 1e-12 * lhs.abs().max(rhs.abs()) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p.clone());
        }
        MixtureFrontier { vertices: hull }
    }

    /// Re-evaluates every cascade policy on another index set and keeps the
    /// non-dominated results.
    pub fn reevaluate(&self, table: &EvalTable, index: &[usize]) -> Result<Frontier> {
        let mut pts = Vec::with_capacity(self.points.len());
        for p in &self.points {
            let policy = p.policy.as_cascade().ok_or_else(|| {
                Error::Unsupported("only cascade policies can be re-evaluated".into())
            })?;
            let ev = evaluate_policy(table, policy, index)?;
            pts.push(FrontierPoint {
                cost: ev.mean_cost,
                quality: ev.mean_quality,
                policy: p.policy.clone(),
            });
        }
        Ok(pareto_filter(pts))
    }

    /// Writes `cost,quality,policy_json`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cost", "quality", "policy_json"])?;
        for p in &self.points {
            w.write_record([
                p.cost.to_string(),
                p.quality.to_string(),
                serde_json::to_string(&p.policy)?,
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Frontier> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut pts = Vec::new();
        for row in rdr.deserialize() {
            let (cost, quality, policy_json): (f64, f64, String) = row?;
            pts.push(FrontierPoint {
                cost,
                quality,
                policy: serde_json::from_str(&policy_json)?,
            });
        }
        Ok(pareto_filter(pts))
    }
}

/// Keeps points not weakly dominated in (lower cost, higher quality).
/// Among equal costs the highest quality survives; among equal qualities the
/// cheapest does. Input order breaks exact ties.
pub fn pareto_filter(mut points: Vec<FrontierPoint>) -> Frontier {
    points.retain(|p| p.cost.is_finite() && p.quality.is_finite());
    points.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then_with(|| b.quality.total_cmp(&a.quality))
    });
    let mut kept: Vec<FrontierPoint> = Vec::new();
    for p in points {
        match kept.last() {
            Some(last) if p.quality <= last.quality => {}
            _ => kept.push(p),
        }
    }
    Frontier { points: kept }
}

/// A segment of the concave envelope between two deterministic policies.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSegment<'a> {
    pub left: &'a FrontierPoint,
    pub right: &'a FrontierPoint,
}

impl MixtureSegment<'_> {
    /// Probability of deploying the left policy so that the expected cost
    /// equals `budget`: alpha(B) = (c_right - B) / (c_right - c_left).
    pub fn left_weight(&self, budget: f64) -> f64 {
        ((self.right.cost - budget) / (self.right.cost - self.left.cost)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureFrontier {
    vertices: Vec<FrontierPoint>,
}

impl MixtureFrontier {
    pub fn vertices(&self) -> &[FrontierPoint] {
        &self.vertices
    }

    pub fn segments(&self) -> impl Iterator<Item = MixtureSegment<'_>> {
        self.vertices.windows(2).map(|w| MixtureSegment {
            left: &w[0],
            right: &w[1],
        })
    }

    pub fn segment_at(&self, budget: f64) -> Option<MixtureSegment<'_>> {
        self.segments()
            .find(|s| s.left.cost <= budget && budget <= s.right.cost)
    }

    /// Expected quality of the best two-policy mixture with expected cost
    /// `budget`.
    pub fn value(&self, budget: f64) -> Result<f64> {
        Frontier {
            points: self.vertices.clone(),
        }
        .interpolate(budget)
    }
}

/// Threshold candidates for a sweep: {0, 1} plus the empirical quantiles of
/// `scores` at levels i / n_tau, i = 0..=n_tau. Levels nest whenever one
/// n_tau divides another.
pub fn threshold_candidates(scores: &[f64], n_tau: usize) -> Vec<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = vec![0.0, 1.0];
    if !sorted.is_empty() {
        out.extend((0..=n_tau).map(|i| quantile_sorted(&sorted, i as f64 / n_tau as f64)));
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Two-model cascade outcomes for many thresholds at once: queries are
/// sorted by the cheap model's score so each threshold is a prefix.
pub(crate) struct PairSweeper {
    sorted_scores: Vec<f64>,
    prefix_cost_high: Vec<f64>,
    prefix_gain: Vec<f64>,
    base_cost: f64,
    base_quality: f64,
    n: f64,
}

impl PairSweeper {
    pub(crate) fn new(table: &EvalTable, low: usize, high: usize, index: &[usize]) -> Result<Self> {
        if index.is_empty() {
            return Err(Error::Validation("empty index set".into()));
        }
        let mut rows: Vec<(f64, usize)> = Vec::with_capacity(index.len());
        for &q in index {
            let s = table.scores(low)[q].ok_or_else(|| Error::MissingScore {
                query: table.queries()[q].clone(),
                stage: 1,
            })?;
            rows.push((s, q));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (cl, ul) = (table.costs(low), table.qualities(low));
        let (ch, uh) = (table.costs(high), table.qualities(high));
        let mut prefix_cost_high = Vec::with_capacity(rows.len() + 1);
        let mut prefix_gain = Vec::with_capacity(rows.len() + 1);
        prefix_cost_high.push(0.0);
        prefix_gain.push(0.0);
        let (mut acc_c, mut acc_g) = (0.0, 0.0);
        for &(_, q) in &rows {
            acc_c += ch[q];
            acc_g += uh[q] - ul[q];
            prefix_cost_high.push(acc_c);
            prefix_gain.push(acc_g);
        }
        Ok(PairSweeper {
            sorted_scores: rows.iter().map(|r| r.0).collect(),
            prefix_cost_high,
            prefix_gain,
            base_cost: index.iter().map(|&q| cl[q]).sum(),
            base_quality: index.iter().map(|&q| ul[q]).sum(),
            n: index.len() as f64,
        })
    }

    pub(crate) fn escalated(&self, tau: f64) -> usize {
        if tau >= 1.0 {
            self.sorted_scores.len()
        } else {
            self.sorted_scores.partition_point(|&s| s < tau)
        }
    }

    pub(crate) fn eval(&self, tau: f64) -> (f64, f64) {
        let e = self.escalated(tau);
        (
            (self.base_cost + self.prefix_cost_high[e]) / self.n,
            (self.base_quality + self.prefix_gain[e]) / self.n,
        )
    }
}

/// Sweeps one threshold of the cascade `low -> high`, choosing candidates
/// from and evaluating on `index`.
pub fn sweep_pair(
    table: &EvalTable,
    pair: (&ModelId, &ModelId),
    n_tau: usize,
    index: &[usize],
) -> Result<Frontier> {
    sweep_pair_split(table, pair, n_tau, index, index)
}

/// Candidates and the calibration frontier come from `calib`; the selected
/// policies are then evaluated on `eval`. When both sets coincide this is a
/// plain sweep.
pub fn sweep_pair_split(
    table: &EvalTable,
    pair: (&ModelId, &ModelId),
    n_tau: usize,
    calib: &[usize],
    eval: &[usize],
) -> Result<Frontier> {
    if n_tau < 2 {
        return Err(Error::Validation("n_tau must be at least 2".into()));
    }
    let low = table.model_index(pair.0)?;
    let high = table.model_index(pair.1)?;
    let sweeper = PairSweeper::new(table, low, high, calib)?;
    let candidates = threshold_candidates(&sweeper.sorted_scores, n_tau);
    let pts = candidates
        .iter()
        .map(|&tau| {
            let (c, u) = sweeper.eval(tau);
            Ok(FrontierPoint {
                cost: c,
                quality: u,
                policy: CascadePolicy::pair(pair.0.clone(), pair.1.clone(), tau)?.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let calib_front = pareto_filter(pts);
    if calib == eval {
        return Ok(calib_front);
    }
    let eval_sweeper = PairSweeper::new(table, low, high, eval)?;
    let pts = calib_front
        .into_points()
        .into_iter()
        .map(|p| {
            let tau = p.policy.as_cascade().expect("pair policy").thresholds[0];
            let (c, u) = eval_sweeper.eval(tau);
            FrontierPoint {
                cost: c,
                quality: u,
                policy: p.policy,
            }
        })
        .collect();
    Ok(pareto_filter(pts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{t5, t5_with_c};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<FrontierPoint> {
        v.iter()
            .map(|&(c, q)| FrontierPoint {
                cost: c,
                quality: q,
                policy: CascadePolicy::single("A".into()).into(),
            })
            .collect()
    }

    fn cq(f: &Frontier) -> Vec<(f64, f64)> {
        f.points().iter().map(|p| (p.cost, p.quality)).collect()
    }

    fn ab(tau: f64) -> CascadePolicy {
        CascadePolicy::pair("A".into(), "B".into(), tau).unwrap()
    }

    /// Exhaustive per-query simulation written independently of `run_query`.
    fn brute_pair(costs: [&[f64]; 2], quals: [&[f64]; 2], scores: &[f64], tau: f64) -> (f64, f64) {
        let n = scores.len() as f64;
        let (mut c, mut u) = (0.0, 0.0);
        for q in 0..scores.len() {
            let escalate = tau >= 1.0 || scores[q] < tau;
            c += costs[0][q] + if escalate { costs[1][q] } else { 0.0 };
            u += if escalate { quals[1][q] } else { quals[0][q] };
        }
        (c / n, u / n)
    }

    #[test]
    fn t5_policy_values() {
        let t = t5();
        let all = t.all_indices();
        let e0 = evaluate_policy(&t, &ab(0.0), &all).unwrap();
        assert_eq!((e0.mean_cost, e0.mean_quality), (1.0, 0.4));
        let e5 = evaluate_policy(&t, &ab(0.5), &all).unwrap();
        assert_relative_eq!(e5.mean_cost, 5.0);
        assert_relative_eq!(e5.mean_quality, 0.8);
        assert_eq!(e5.stops, vec![0, 1, 0, 1, 0]);
        let e1 = evaluate_policy(&t, &ab(1.0), &all).unwrap();
        assert_relative_eq!(e1.mean_cost, 11.0);
        assert_relative_eq!(e1.mean_quality, 0.8);
    }

    #[test]
    fn brute_force_oracle_agrees_on_t5() {
        let t = t5();
        let scores: Vec<f64> = t.scores(0).iter().map(|s| s.unwrap()).collect();
        for tau in [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 1.0] {
            let ev = evaluate_policy(&t, &ab(tau), &t.all_indices()).unwrap();
            let (c, u) = brute_pair([t.costs(0), t.costs(1)], [t.qualities(0), t.qualities(1)], &scores, tau);
            assert_relative_eq!(ev.mean_cost, c, epsilon = 1e-12);
            assert_relative_eq!(ev.mean_quality, u, epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_score_names_query_and_stage() {
        let t = t5();
        let p = CascadePolicy::pair("B".into(), "A".into(), 0.5).unwrap();
        match evaluate_policy(&t, &p, &[0]).unwrap_err() {
            Error::MissingScore { query, stage } => {
                assert_eq!(query, "q1");
                assert_eq!(stage, 1);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn single_model_policy_returns_model_means() {
        let t = t5();
        let all = t.all_indices();
        let e = evaluate_policy(&t, &CascadePolicy::single("B".into()), &all).unwrap();
        assert_eq!(e.mean_cost, t.mean_cost(1, &all));
        assert_eq!(e.mean_quality, t.mean_quality(1, &all));
    }

    #[test]
    fn t5_sweep_matches_enumeration() {
        let t = t5();
        // Enumerate every distinct escalation set: thresholds just above each score.
        let mut oracle = Vec::new();
        for tau in [0.0, 0.3, 0.5, 0.7, 0.85, 1.0] {
            let (c, u) = brute_pair(
                [t.costs(0), t.costs(1)],
                [t.qualities(0), t.qualities(1)],
                &[0.9, 0.2, 0.8, 0.4, 0.6],
                tau,
            );
            oracle.push((c, u));
        }
        let oracle_front = cq(&pareto_filter(pts(&oracle)));
        assert_eq!(oracle_front, vec![(1.0, 0.4), (3.0, 0.6), (5.0, 0.8)]);
        for n_tau in [6, 10, 200] {
            let f = sweep_pair(&t, (&"A".into(), &"B".into()), n_tau, &t.all_indices()).unwrap();
            let got: Vec<(f64, f64)> = cq(&f)
                .into_iter()
                .map(|(c, q)| ((c * 1e9).round() / 1e9, (q * 1e9).round() / 1e9))
                .collect();
            assert_eq!(got, oracle_front, "n_tau = {n_tau}");
        }
    }

    #[test]
    fn sweep_collapses_when_escalation_never_helps() {
        let t = t5();
        // H copies A's outcomes at a higher price.
        let mut recs: Vec<_> = t.records().filter(|r| r.model.as_str() == "A").collect();
        for r in recs.clone() {
            let mut h = r.clone();
            h.model = "H".into();
            h.cost = 5.0;
            h.score = None;
            recs.push(h);
        }
        let tt = EvalTable::from_records(recs).unwrap();
        let f = sweep_pair(&tt, (&"A".into(), &"H".into()), 20, &tt.all_indices()).unwrap();
        assert_eq!(cq(&f), vec![(1.0, 0.4)]);
    }

    #[test]
    fn sweep_endpoints() {
        let t = t5_with_c();
        let all = t.all_indices();
        let f = sweep_pair(&t, (&"A".into(), &"C".into()), 50, &all).unwrap();
        let first = &f.points()[0];
        assert_eq!(first.cost, t.mean_cost(0, &all));
        assert_eq!(first.quality, t.mean_quality(0, &all));
        let sweeper = PairSweeper::new(&t, 0, 2, &all).unwrap();
        let (c1, u1) = sweeper.eval(1.0);
        assert_relative_eq!(c1, t.mean_cost(0, &all) + t.mean_cost(2, &all), epsilon = 1e-12);
        assert_relative_eq!(u1, t.mean_quality(2, &all), epsilon = 1e-12);
    }

    #[test]
    fn pareto_filter_cases() {
        assert_eq!(
            cq(&pareto_filter(pts(&[(1.0, 0.4), (5.0, 0.8), (7.0, 0.8)]))),
            vec![(1.0, 0.4), (5.0, 0.8)]
        );
        assert_eq!(cq(&pareto_filter(pts(&[(2.0, 0.3)]))), vec![(2.0, 0.3)]);
        assert_eq!(
            cq(&pareto_filter(pts(&[(1.0, 0.5), (1.0, 0.6)]))),
            vec![(1.0, 0.6)]
        );
    }

    fn t5_front() -> Frontier {
        pareto_filter(pts(&[(1.0, 0.4), (3.0, 0.6), (5.0, 0.8)]))
    }

    #[test]
    fn interpolation() {
        let f = t5_front();
        assert_relative_eq!(f.interpolate(4.0).unwrap(), 0.7, epsilon = 1e-12);
        assert_eq!(f.interpolate(3.0).unwrap(), 0.6);
        assert_eq!(f.interpolate(50.0).unwrap(), 0.8);
        assert!(matches!(f.interpolate(0.5), Err(Error::Infeasible(_))));
    }

    #[test]
    fn constrained_problems() {
        let f = t5_front();
        let p2 = f.solve_p2(5.0).unwrap();
        assert_eq!((p2.point.cost, p2.point.quality), (5.0, 0.8));
        assert!(f.solve_p2(0.5).is_err());
        assert_eq!(f.solve_p2(f64::INFINITY).unwrap().point.cost, 5.0);

        let p1 = f.solve_p1(0.6).unwrap();
        assert_eq!((p1.point.cost, p1.point.quality), (3.0, 0.6));
        assert!(p1.binding);
        let p1 = f.solve_p1(0.35).unwrap();
        assert_eq!((p1.point.cost, p1.point.quality), (1.0, 0.4));
        assert!(!p1.binding);
        assert!(f.solve_p1(0.9).is_err());
    }

    #[test]
    fn concavify_cases() {
        let f = t5_front();
        assert_eq!(cq(&Frontier { points: f.concavify().vertices().to_vec() }), cq(&f));

        let f = pareto_filter(pts(&[(0.0, 0.0), (1.0, 0.1), (2.0, 1.0)]));
        let m = f.concavify();
        assert_eq!(m.vertices().len(), 2);
        assert_relative_eq!(m.value(1.0).unwrap(), 0.5, epsilon = 1e-12);
        let seg = m.segment_at(1.0).unwrap();
        assert_relative_eq!(seg.left_weight(1.0), 0.5);
        assert_eq!(seg.left_weight(0.0), 1.0);
    }

    #[test]
    fn slopes() {
        let f = t5_front();
        assert_relative_eq!(f.slope_at(3.0, Side::Left), 0.1);
        assert_relative_eq!(f.slope_at(3.0, Side::Right), 0.1);
        assert_relative_eq!(f.slope_at(2.0, Side::Right), 0.1);
        assert_eq!(f.slope_at(5.0, Side::Right), 0.0);
        assert_eq!(f.slope_at(9.0, Side::Left), 0.0);
    }

    #[test]
    fn frontier_csv_round_trip() {
        let t = t5();
        let f = sweep_pair(&t, (&"A".into(), &"B".into()), 10, &t.all_indices()).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("cost,quality,policy_json\n"));
        assert!(text.contains("\"sequence\""));
        assert_eq!(Frontier::read_csv(buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn threshold_candidates_nest() {
        let scores: Vec<f64> = (0..97).map(|i| ((i * 37) % 97) as f64 / 97.0).collect();
        let c50 = threshold_candidates(&scores, 50);
        let c100 = threshold_candidates(&scores, 100);
        assert!(c50.iter().all(|t| c100.contains(t)));
        assert_eq!(c50[0], 0.0);
        assert_eq!(*c50.last().unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn pareto_output_is_strictly_comonotone(
            raw in prop::collection::vec((0.0f64..10.0, 0.0f64..1.0), 1..40)
        ) {
            let f = pareto_filter(pts(&raw));
            for w in f.points().windows(2) {
                prop_assert!(w[1].cost > w[0].cost);
                prop_assert!(w[1].quality > w[0].quality);
            }
            // every input point is weakly dominated by some kept point
            for &(c, q) in &raw {
                prop_assert!(f.points().iter().any(|p| p.cost <= c && p.quality >= q));
            }
        }

        #[test]
        fn concavified_frontier_is_concave_and_dominates(
            raw in prop::collection::vec((0.0f64..10.0, 0.0f64..1.0), 1..40),
            probe in 0.0f64..1.0,
        ) {
            let f = pareto_filter(pts(&raw));
            let m = f.concavify();
            let v = m.vertices();
            for w in v.windows(3) {
                let s1 = (w[1].quality - w[0].quality) / (w[1].cost - w[0].cost);
                let s2 = (w[2].quality - w[1].quality) / (w[2].cost - w[1].cost);
                prop_assert!(s2 - s1 <= 1e-12);
            }
            let b = f.min_cost().unwrap() + probe * (f.max_cost().unwrap() - f.min_cost().unwrap());
            prop_assert!(m.value(b).unwrap() >= f.interpolate(b).unwrap() - 1e-12);
        }

        #[test]
        fn escalation_sets_nest_in_tau(
            seed_scores in prop::collection::vec(0.0f64..1.0, 5),
            t1 in 0.0f64..1.0, t2 in 0.0f64..1.0,
        ) {
            let base = t5();
            let scores: Vec<Option<f64>> = seed_scores.iter().map(|&s| Some(s)).collect();
            let t = base.with_scores(0, scores).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = evaluate_policy(&t, &ab(lo), &t.all_indices()).unwrap();
            let b = evaluate_policy(&t, &ab(hi), &t.all_indices()).unwrap();
            for (sa, sb) in a.stops.iter().zip(&b.stops) {
                prop_assert!(sa <= sb);
            }
            prop_assert!(b.mean_cost >= a.mean_cost);
        }
    }
}
