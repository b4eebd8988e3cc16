//! Synthetic cascade instances with known structure, plus numerical oracles
//! for the frontier, first-order conditions, stage equalization and
//! randomized mixing.
//!
//! Each query has a difficulty d ~ U(0, 1). Model i answers correctly with
//! probability p_i(d) and reports the score 1 - d plus Gaussian noise,
//! truncated to [0, 1]. Costs are constants, optionally jittered per query
//! or tilted by the cheap model's score.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cascade::{pareto_filter, CascadePolicy, Frontier, FrontierPoint};
use crate::data::{EvalTable, ModelId, QueryRecord};
use crate::diagnostics::{shadow_prices, stage_marginals, BoundaryWidth, StageMarginals};
use crate::error::{Error, Result};

pub const QUAD_TOL: f64 = 1e-10;
const MAX_DEPTH: u32 = 50;

/// Probability of a correct answer as a function of difficulty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectnessCurve {
    /// 1 / (1 + exp(-slope * (offset - d))).
    Logistic { offset: f64, slope: f64 },
    Constant(f64),
    /// intercept + slope * d, clamped to [0, 1].
    Linear { intercept: f64, slope: f64 },
    /// Piecewise linear through (d, p) knots sorted by d.
    Knots(Vec<(f64, f64)>),
}

impl CorrectnessCurve {
    pub fn eval(&self, d: f64) -> f64 {
        let p = match self {
            CorrectnessCurve::Logistic { offset, slope } => 1.0 / (1.0 + (-slope * (offset - d)).exp()),
            CorrectnessCurve::Constant(p) => *p,
            CorrectnessCurve::Linear { intercept, slope } => intercept + slope * d,
            CorrectnessCurve::Knots(k) => {
                let i = k.partition_point(|&(x, _)| x <= d);
                if i == 0 {
                    k[0].1
                } else if i == k.len() {
                    k[k.len() - 1].1
                } else {
                    let (x0, y0) = k[i - 1];
                    let (x1, y1) = k[i];
                    y0 + (y1 - y0) * (d - x0) / (x1 - x0)
                }
            }
        };
        p.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthModel {
    pub name: String,
    pub correctness: CorrectnessCurve,
    /// Mean per-query cost.
    pub cost: f64,
    /// Standard deviation of the score noise.
    pub score_noise: f64,
    /// Per-query cost is multiplied by 1 + jitter * u, u ~ U(-1, 1).
    #[serde(default)]
    pub cost_jitter: f64,
    /// Per-query cost is multiplied by 1 + slope * (1 - 2 s_1), with s_1
    /// the first model's score. Non-zero makes cost depend on the score.
    #[serde(default)]
    pub cost_score_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub models: Vec<SynthModel>,
    pub n: usize,
    pub seed: u64,
}

fn model(name: &str, correctness: CorrectnessCurve, cost: f64, noise: f64) -> SynthModel {
    SynthModel {
        name: name.into(),
        correctness,
        cost,
        score_noise: noise,
        cost_jitter: 0.0,
        cost_score_slope: 0.0,
    }
}

impl SynthSpec {
    /// Escalation benefit rises with difficulty everywhere and costs are
    /// constant, so the two-model frontier is concave.
    pub fn concave(n: usize, seed: u64) -> Self {
        SynthSpec {
            models: vec![
                model("L", CorrectnessCurve::Logistic { offset: 0.5, slope: 8.0 }, 1.0, 0.1),
                model("H", CorrectnessCurve::Linear { intercept: 0.95, slope: -0.1 }, 10.0, 0.1),
            ],
            n,
            seed,
        }
    }

    /// U-shaped escalation benefit: the frontier has a convex stretch.
    pub fn nonconcave(n: usize, seed: u64) -> Self {
        SynthSpec {
            models: vec![
                model(
                    "L",
                    CorrectnessCurve::Knots(vec![(0.0, 0.3), (0.5, 0.85), (1.0, 0.1)]),
                    1.0,
                    0.05,
                ),
                model("H", CorrectnessCurve::Constant(0.9), 10.0, 0.05),
            ],
            n,
            seed,
        }
    }

    /// Three models of increasing cost and accuracy.
    pub fn threestage(n: usize, seed: u64) -> Self {
        SynthSpec {
            models: vec![
                model("S", CorrectnessCurve::Logistic { offset: 0.3, slope: 8.0 }, 1.0, 0.1),
                model("M", CorrectnessCurve::Logistic { offset: 0.6, slope: 8.0 }, 2.0, 0.1),
                model("T", CorrectnessCurve::Logistic { offset: 0.9, slope: 8.0 }, 4.0, 0.1),
            ],
            n,
            seed,
        }
    }

    /// The expensive model's cost grows as the cheap model's score falls.
    pub fn costlinked(n: usize, seed: u64) -> Self {
        let mut s = Self::concave(n, seed);
        s.models[1].cost_score_slope = 0.8;
        s
    }

    /// Like `concave` but with per-query cost noise independent of scores.
    pub fn jittered(n: usize, seed: u64) -> Self {
        let mut s = Self::concave(n, seed);
        s.models[1].cost_jitter = 0.5;
        s
    }

    /// A middle model as accurate as the cheap one, but costlier.
    pub fn useless_middle(n: usize, seed: u64) -> Self {
        let mut s = Self::threestage(n, seed);
        s.models[1].correctness = s.models[0].correctness.clone();
        s
    }

    pub fn preset(name: &str, n: usize, seed: u64) -> Result<Self> {
        match name {
            "concave" => Ok(Self::concave(n, seed)),
            "nonconcave" => Ok(Self::nonconcave(n, seed)),
            "threestage" => Ok(Self::threestage(n, seed)),
            "costlinked" => Ok(Self::costlinked(n, seed)),
            "jittered" => Ok(Self::jittered(n, seed)),
            "useless_middle" => Ok(Self::useless_middle(n, seed)),
            other => Err(Error::Validation(format!("unknown synthetic preset `{other}`"))),
        }
    }

    pub const PRESETS: [&'static str; 6] = [
        "concave",
        "nonconcave",
        "threestage",
        "costlinked",
        "jittered",
        "useless_middle",
    ];

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Validation("synthetic spec has no models".into()));
        }
        for m in &self.models {
            if !(m.cost > 0.0) {
                return Err(Error::Validation(format!("model {} needs positive cost", m.name)));
            }
            if !(m.score_noise >= 0.0) {
                return Err(Error::Validation(format!("model {} has negative noise", m.name)));
            }
            if !(0.0..=1.0).contains(&m.cost_jitter) || !(0.0..=1.0).contains(&m.cost_score_slope.abs()) {
                return Err(Error::Validation(format!(
                    "model {}: cost jitter and slope must lie in [0, 1]",
                    m.name
                )));
            }
            if let CorrectnessCurve::Knots(k) = &m.correctness {
                if k.is_empty() || k.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::Validation(format!(
                        "model {}: knots must be non-empty with increasing d",
                        m.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn ids(&self) -> (ModelId, ModelId) {
        (
            ModelId::from(self.models[0].name.as_str()),
            ModelId::from(self.models[1].name.as_str()),
        )
    }
}

fn truncated_score(mean: f64, sigma: f64, rng: &mut impl Rng) -> f64 {
    if sigma == 0.0 {
        return mean.clamp(0.0, 1.0);
    }
    let normal = Normal::new(mean, sigma).expect("finite sigma");
    loop {
        let s = normal.sample(rng);
        if (0.0..=1.0).contains(&s) {
            return s;
        }
    }
}

/// Draws an evaluation table; identical for identical specs.
pub fn synth_generate(spec: &SynthSpec) -> Result<EvalTable> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.models.len();
    let mut recs = Vec::with_capacity(spec.n * k);
    for q in 0..spec.n {
        let d: f64 = rng.random();
        let scores: Vec<f64> = spec
            .models
            .iter()
            .map(|m| truncated_score(1.0 - d, m.score_noise, &mut rng))
            .collect();
        for (i, m) in spec.models.iter().enumerate() {
            let correct = rng.random_bool(m.correctness.eval(d));
            let jitter: f64 = rng.random_range(-1.0..=1.0);
            let cost = m.cost
                * (1.0 + m.cost_jitter * jitter)
                * (1.0 + m.cost_score_slope * (1.0 - 2.0 * scores[0]));
            recs.push(QueryRecord {
                query_id: format!("s{q:06}"),
                model: ModelId::from(m.name.as_str()),
                cost,
                quality: if correct { 1.0 } else { 0.0 },
                score: Some(scores[i]),
                features: None,
            });
        }
    }
    EvalTable::from_records(recs)
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// P(s < tau | d) for the truncated score.
fn score_cdf(d: f64, sigma: f64, tau: f64) -> f64 {
    let mu = 1.0 - d;
    if tau >= 1.0 {
        return 1.0;
    }
    if tau <= 0.0 {
        return 0.0;
    }
    if sigma == 0.0 {
        return if mu < tau { 1.0 } else { 0.0 };
    }
    let lo = std_normal_cdf(-mu / sigma);
    let hi = std_normal_cdf((1.0 - mu) / sigma);
    ((std_normal_cdf((tau - mu) / sigma) - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Density of the truncated score at `s` given d.
fn score_pdf(d: f64, sigma: f64, s: f64) -> f64 {
    let mu = 1.0 - d;
    let lo = std_normal_cdf(-mu / sigma);
    let hi = std_normal_cdf((1.0 - mu) / sigma);
    std_normal_pdf((s - mu) / sigma) / (sigma * (hi - lo))
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on [a, b] to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

/// Integral over d in [0, 1], split where a noiseless score crosses `tau`.
fn integrate_d(f: impl Fn(f64) -> f64, split: Option<f64>, tol: f64) -> f64 {
    match split {
        Some(x) if x > 0.0 && x < 1.0 => integrate(&f, 0.0, x, tol / 2.0) + integrate(&f, x, 1.0, tol / 2.0),
        _ => integrate(&f, 0.0, 1.0, tol),
    }
}

fn two_model_check(spec: &SynthSpec) -> Result<()> {
    spec.validate()?;
    if spec.models.len() != 2 {
        return Err(Error::Validation(format!(
            "two-model oracle needs 2 models, spec has {}",
            spec.models.len()
        )));
    }
    if spec.models.iter().any(|m| m.cost_score_slope != 0.0) {
        return Err(Error::Unsupported(
            "analytic frontier assumes score-independent costs".into(),
        ));
    }
    Ok(())
}

/// Expected (cost, quality) of the two-model cascade at threshold `tau`.
pub fn analytic_point(spec: &SynthSpec, tau: f64, tol: f64) -> Result<(f64, f64)> {
    two_model_check(spec)?;
    let (l, h) = (&spec.models[0], &spec.models[1]);
    let sigma = l.score_noise;
    let split = (sigma == 0.0).then_some(1.0 - tau);
    let esc = integrate_d(|d| score_cdf(d, sigma, tau), split, tol);
    let quality = integrate_d(
        |d| {
            let f = score_cdf(d, sigma, tau);
            h.correctness.eval(d) * f + l.correctness.eval(d) * (1.0 - f)
        },
        split,
        tol,
    );
    Ok((l.cost + h.cost * esc, quality))
}

/// Frontier of the two-model cascade over `tau_grid`, by quadrature.
pub fn analytic_frontier(spec: &SynthSpec, tau_grid: &[f64]) -> Result<Frontier> {
    analytic_frontier_tol(spec, tau_grid, QUAD_TOL)
}

pub fn analytic_frontier_tol(spec: &SynthSpec, tau_grid: &[f64], tol: f64) -> Result<Frontier> {
    let (low, high) = spec.ids();
    let pts = tau_grid
        .iter()
        .map(|&t| {
            let (c, u) = analytic_point(spec, t, tol)?;
            Ok(FrontierPoint {
                cost: c,
                quality: u,
                policy: CascadePolicy::pair(low.clone(), high.clone(), t)?.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pareto_filter(pts))
}

/// m_H(s) - m_L(s) for the two-model spec.
pub fn analytic_benefit(spec: &SynthSpec, s: f64) -> Result<f64> {
    two_model_check(spec)?;
    let (l, h) = (&spec.models[0], &spec.models[1]);
    let gap = |d: f64| h.correctness.eval(d) - l.correctness.eval(d);
    let sigma = l.score_noise;
    if sigma == 0.0 {
        return Ok(gap(1.0 - s));
    }
    let num = integrate(|d| gap(d) * score_pdf(d, sigma, s), 0.0, 1.0, 1e-12);
    let den = integrate(|d| score_pdf(d, sigma, s), 0.0, 1.0, 1e-12);
    Ok(num / den)
}

/// Evenly spaced thresholds 0, 1/steps, ..., 1.
pub fn tau_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcavityReport {
    /// Largest amount by which an interior point sits below the chord of
    /// its neighbours; 0 when concave.
    pub max_violation: f64,
    /// Cost of the worst interior point, if any violates.
    pub at_cost: Option<f64>,
}

pub fn verify_concavity(frontier: &Frontier) -> ConcavityReport {
    let p = frontier.points();
    let mut worst = ConcavityReport {
        max_violation: 0.0,
        at_cost: None,
    };
    for w in p.windows(3) {
        let t = (w[1].cost - w[0].cost) / (w[2].cost - w[0].cost);
        let chord = w[0].quality + t * (w[2].quality - w[0].quality);
        let v = chord - w[1].quality;
        if v > worst.max_violation {
            worst = ConcavityReport {
                max_violation: v,
                at_cost: Some(w[1].cost),
            };
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FocReport {
    pub budget: f64,
    /// Budget at or below the cheap model's cost, or at or above the cost
    /// of always escalating: only a one-sided condition applies.
    pub boundary: bool,
    pub tau: f64,
    pub cost: f64,
    pub quality: f64,
    /// m_H(tau) - m_L(tau).
    pub benefit: Option<f64>,
    /// Local frontier slope dQ/dB.
    pub slope: Option<f64>,
    /// |benefit - slope * c_H|.
    pub residual: Option<f64>,
    /// lambda_P1 * lambda_P2 - 1.
    pub reciprocity_error: Option<f64>,
}

/// Solves the budget-constrained problem by grid search over tau with the
/// given step and checks the first-order condition there.
pub fn verify_foc(spec: &SynthSpec, budget: f64, step: f64) -> Result<FocReport> {
    two_model_check(spec)?;
    let (c_l, c_h) = (spec.models[0].cost, spec.models[1].cost);
    let steps = (1.0 / step).round() as usize;
    let grid = tau_grid(steps);
    let vals = grid
        .iter()
        .map(|&t| analytic_point(spec, t, QUAD_TOL))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, &(c, u)) in vals.iter().enumerate() {
        if c <= budget && (u > vals[best].1 || (u == vals[best].1 && c < vals[best].0)) {
            best = i;
        }
    }
    let (cost, quality) = vals[best];
    let mut report = FocReport {
        budget,
        boundary: budget <= c_l || budget >= c_l + c_h,
        tau: grid[best],
        cost,
        quality,
        benefit: None,
        slope: None,
        residual: None,
        reciprocity_error: None,
    };
    if report.boundary || best == 0 || best == steps {
        report.boundary = true;
        return Ok(report);
    }
    let (c0, u0) = vals[best - 1];
    let (c1, u1) = vals[best + 1];
    let slope = (u1 - u0) / (c1 - c0);
    let benefit = analytic_benefit(spec, grid[best])?;
    report.benefit = Some(benefit);
    report.slope = Some(slope);
    report.residual = Some((benefit - slope * c_h).abs());
    if let Ok(p) = shadow_prices(benefit, c_h) {
        report.reciprocity_error = Some(p.lambda_p1 * p.lambda_p2 - 1.0);
    }
    Ok(report)
}

/// Grid resolution of the three-stage oracle.
pub const STAGE_GRID: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub budget: f64,
    pub tau: Vec<f64>,
    pub cost: f64,
    pub quality: f64,
    pub marginals: StageMarginals,
    /// max |lambda_i - mean| / mean over active stages.
    pub relative_spread: Option<f64>,
}

/// Per-cell sums over a (s_1 bin, s_2 bin) grid for a three-model table.
struct CellSums {
    n: usize,
    base_cost: f64,
    u1_total: f64,
    // prefix arrays of size (g+2)^2: rows < a, cols < b
    c2: Vec<f64>,
    c3: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    u3: Vec<f64>,
}

impl CellSums {
    const W: usize = STAGE_GRID + 2;

    fn bin(s: f64) -> usize {
        ((s * STAGE_GRID as f64).floor() as usize).min(STAGE_GRID)
    }

    fn new(table: &EvalTable) -> Result<Self> {
        let w = Self::W;
        let mut cells = vec![[0.0f64; 5]; w * w];
        let (mut base_cost, mut u1_total) = (0.0, 0.0);
        for q in 0..table.n_queries() {
            let s1 = table.scores(0)[q].ok_or_else(|| Error::MissingScore {
                query: table.queries()[q].clone(),
                stage: 1,
            })?;
            let s2 = table.scores(1)[q].ok_or_else(|| Error::MissingScore {
                query: table.queries()[q].clone(),
                stage: 2,
            })?;
            let cell = &mut cells[Self::bin(s1) * w + Self::bin(s2)];
            cell[0] += table.costs(1)[q];
            cell[1] += table.costs(2)[q];
            cell[2] += table.qualities(0)[q];
            cell[3] += table.qualities(1)[q];
            cell[4] += table.qualities(2)[q];
            base_cost += table.costs(0)[q];
            u1_total += table.qualities(0)[q];
        }
        // prefix[a][b] = sum over rows < a, cols < b
        let mut pre = vec![[0.0f64; 5]; (w + 1) * (w + 1)];
        for a in 1..=w {
            for b in 1..=w {
                for k in 0..5 {
                    pre[a * (w + 1) + b][k] = cells[(a - 1) * w + (b - 1)][k]
                        + pre[(a - 1) * (w + 1) + b][k]
                        + pre[a * (w + 1) + b - 1][k]
                        - pre[(a - 1) * (w + 1) + b - 1][k];
                }
            }
        }
        let take = |k: usize| pre.iter().map(|v| v[k]).collect::<Vec<f64>>();
        Ok(CellSums {
            n: table.n_queries(),
            base_cost,
            u1_total,
            c2: take(0),
            c3: take(1),
            u1: take(2),
            u2: take(3),
            u3: take(4),
        })
    }

    /// Mean (cost, quality) with thresholds a/G and b/G.
    fn eval(&self, a: usize, b: usize) -> (f64, f64) {
        let w = Self::W;
        // a threshold of 1 escalates everything, including scores of 1
        let ra = if a >= STAGE_GRID { w } else { a };
        let rb = if b >= STAGE_GRID { w } else { b };
        let at = |v: &Vec<f64>, r: usize, c: usize| v[r * (w + 1) + c];
        let cost = self.base_cost + at(&self.c2, ra, w) + at(&self.c3, ra, rb);
        let quality = self.u1_total - at(&self.u1, ra, w) + at(&self.u2, ra, w) - at(&self.u2, ra, rb)
            + at(&self.u3, ra, rb);
        let n = self.n as f64;
        (cost / n, quality / n)
    }
}

/// Best (tau_1, tau_2) on the grid for a budget; ties go to lower cost.
pub fn three_stage_oracle(table: &EvalTable, budget: f64) -> Result<(Vec<f64>, f64, f64)> {
    if table.n_models() != 3 {
        return Err(Error::Validation("three-stage oracle needs 3 models".into()));
    }
    let sums = CellSums::new(table)?;
    let mut best: Option<(usize, usize, f64, f64)> = None;
    for a in 0..=STAGE_GRID {
        for b in 0..=STAGE_GRID {
            let (c, u) = sums.eval(a, b);
            if c > budget {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, _, bc, bu)) => u > bu || (u == bu && c < bc),
            };
            if better {
                best = Some((a, b, c, u));
            }
        }
    }
    let (a, b, c, u) = best.ok_or_else(|| Error::Infeasible(format!("no policy within budget {budget}")))?;
    let g = STAGE_GRID as f64;
    Ok((vec![a as f64 / g, b as f64 / g], c, u))
}

/// Grid-searches the three-stage cascade at `budget` and compares the
/// boundary marginal ratios of the two non-terminal stages.
pub fn verify_stage_equalization(spec: &SynthSpec, budget: f64) -> Result<StageReport> {
    if spec.models.len() != 3 {
        return Err(Error::Validation("stage equalization needs a three-model spec".into()));
    }
    let table = synth_generate(spec)?;
    let (tau, cost, quality) = three_stage_oracle(&table, budget)?;
    let policy = CascadePolicy::new(table.models().to_vec(), tau.clone())?;
    let marginals = stage_marginals(&table, &policy, &table.all_indices(), BoundaryWidth::default())?;
    let lambdas: Vec<f64> = marginals.active().map(|m| m.lambda).filter(|l| l.is_finite()).collect();
    let relative_spread = (lambdas.len() == 2).then(|| {
        let mean = (lambdas[0] + lambdas[1]) / 2.0;
        lambdas.iter().map(|l| (l - mean).abs()).fold(0.0, f64::max) / mean.abs()
    });
    Ok(StageReport {
        budget,
        tau,
        cost,
        quality,
        marginals,
        relative_spread,
    })
}

/// Expected (cost, quality) of deploying `a` with probability `alpha` and
/// `b` otherwise.
pub fn mix(a: (f64, f64), b: (f64, f64), alpha: f64) -> (f64, f64) {
    if alpha == 1.0 {
        return a;
    }
    if alpha == 0.0 {
        return b;
    }
    (
        alpha * a.0 + (1.0 - alpha) * b.0,
        alpha * a.1 + (1.0 - alpha) * b.1,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixtureWitness {
    pub tau_a: f64,
    pub tau_b: f64,
    /// Probability of deploying `tau_a`.
    pub alpha: f64,
    pub cost: f64,
    pub quality: f64,
    /// Deterministic frontier quality at `cost`.
    pub deterministic: f64,
    pub margin: f64,
}

/// Searches two-threshold mixtures for one that beats the deterministic
/// frontier. The best mixture at any cost lies on the upper concave
/// envelope, so the candidates are envelope segments evaluated at the
/// deterministic vertices they span.
pub fn verify_mixture_gain(spec: &SynthSpec, steps: usize) -> Result<Option<MixtureWitness>> {
    let front = analytic_frontier_tol(spec, &tau_grid(steps), 1e-12)?;
    let hull = front.concavify();
    let tau_of = |p: &FrontierPoint| p.policy.as_cascade().map(|c| c.thresholds[0]).unwrap_or(0.0);
    let mut best: Option<MixtureWitness> = None;
    for p in front.points() {
        let Some(seg) = hull.segment_at(p.cost) else { continue };
        let alpha = seg.left_weight(p.cost);
        let (c, u) = mix(
            (seg.left.cost, seg.left.quality),
            (seg.right.cost, seg.right.quality),
            alpha,
        );
        let margin = u - p.quality;
        if best.is_none_or(|b| margin > b.margin) {
            best = Some(MixtureWitness {
                tau_a: tau_of(seg.left),
                tau_b: tau_of(seg.right),
                alpha,
                cost: c,
                quality: u,
                deterministic: p.quality,
                margin,
            });
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineCostReport {
    /// Largest |observed - affine prediction| / standard error over the
    /// checked thresholds.
    pub max_z: f64,
    pub max_deviation: f64,
    pub passes: bool,
}

/// Checks that the empirical mean cost of a two-model cascade equals
/// c_L + c_H * F(tau) at `points` quantile thresholds, within three
/// standard errors.
pub fn affine_cost_check(
    table: &EvalTable,
    pair: (&ModelId, &ModelId),
    index: &[usize],
    points: usize,
) -> Result<AffineCostReport> {
    let low = table.model_index(pair.0)?;
    let high = table.model_index(pair.1)?;
    let n = index.len() as f64;
    let scores = index
        .iter()
        .map(|&q| {
            table.scores(low)[q].ok_or_else(|| Error::MissingScore {
                query: table.queries()[q].clone(),
                stage: 1,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let ch: Vec<f64> = index.iter().map(|&q| table.costs(high)[q]).collect();
    let mean_ch = ch.iter().sum::<f64>() / n;
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let mut report = AffineCostReport {
        max_z: 0.0,
        max_deviation: 0.0,
        passes: true,
    };
    for i in 1..=points {
        let tau = crate::stats::quantile_sorted(&sorted, i as f64 / (points + 1) as f64);
        // observed minus predicted escalation cost, per query
        let terms: Vec<f64> = scores
            .iter()
            .zip(&ch)
            .map(|(&s, &c)| if s < tau { c - mean_ch } else { 0.0 })
            .collect();
        let dev = terms.iter().sum::<f64>() / n;
        let var = terms.iter().map(|t| (t - dev).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let z = if se > 0.0 {
            dev.abs() / se
        } else if dev.abs() > 1e-12 {
            f64::INFINITY
        } else {
            0.0
        };
        report.max_z = report.max_z.max(z);
        report.max_deviation = report.max_deviation.max(dev.abs());
    }
    report.passes = report.max_z <= 3.0;
    Ok(report)
}
