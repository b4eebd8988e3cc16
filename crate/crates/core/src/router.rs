//! L2-regularized logistic regression, the pre-generation router built on
//! it, and the cascade that defers on a learned correctness probability.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::cascade::{pareto_filter, sweep_pair_split, Frontier, FrontierPoint, Policy};
use crate::data::{EvalTable, ModelId};
use crate::error::{Error, Result};
use crate::pool::{ModelPair, ModelPool};

pub const DEFAULT_REG: f64 = 1e-2;
const GRAD_TOL: f64 = 1e-6;
const MAX_ITER: usize = 100;
/// Bound on predicted probabilities for degenerate (single-class) fits.
const PRIOR_CLAMP: f64 = 1e-6;
const FORMAT_TAG: &str = "cascade-logreg v1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub reg_strength: f64,
    /// Fitted on one class only; predicts the clamped prior.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegFit {
    pub model: LogRegModel,
    /// Objective after each accepted step, starting from the initial point.
    pub loss_history: Vec<f64>,
    pub gradient_norm: f64,
    pub converged: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LogRegModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_TAG}");
        let _ = writeln!(s, "reg_strength {}", self.reg_strength);
        let _ = writeln!(s, "degenerate {}", self.degenerate);
        let _ = writeln!(s, "bias {}", self.bias);
        let w: Vec<String> = self.weights.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "weights {}", w.join(" "));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, message: String| Error::Parse {
            line: line + 1,
            message,
        };
        match lines.next() {
            Some((_, l)) if l.trim() == FORMAT_TAG => {}
            Some((i, l)) => return Err(bad(i, format!("expected `{FORMAT_TAG}`, got `{l}`"))),
            None => return Err(bad(0, "empty model file".into())),
        }
        let mut field = |key: &str| -> Result<(usize, String)> {
            let (i, l) = lines
                .next()
                .ok_or_else(|| bad(0, format!("missing `{key}` line")))?;
            let rest = l
                .strip_prefix(key)
                .ok_or_else(|| bad(i, format!("expected `{key}`")))?;
            Ok((i, rest.trim().to_string()))
        };
        let num = |i: usize, v: &str| {
            v.parse::<f64>()
                .map_err(|e| bad(i, format!("bad number `{v}`: {e}")))
        };
        let (i, v) = field("reg_strength")?;
        let reg_strength = num(i, &v)?;
        let (i, v) = field("degenerate")?;
        let degenerate = v
            .parse::<bool>()
            .map_err(|e| bad(i, format!("bad flag `{v}`: {e}")))?;
        let (i, v) = field("bias")?;
        let bias = num(i, &v)?;
        let (i, v) = field("weights")?;
        let weights = v
            .split_whitespace()
            .map(|w| num(i, w))
            .collect::<Result<Vec<_>>>()?;
        Ok(LogRegModel {
            weights,
            bias,
            reg_strength,
            degenerate,
        })
    }
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    y: Vec<f64>,
    reg: f64,
    d: usize,
}

impl Problem<'_> {
    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    fn z(&self, theta: &DVector<f64>, i: usize) -> f64 {
        theta[self.d] + (0..self.d).map(|j| theta[j] * self.x[i][j]).sum::<f64>()
    }

    fn loss(&self, theta: &DVector<f64>) -> f64 {
        let data: f64 = (0..self.y.len())
            .map(|i| {
                let z = self.z(theta, i);
                softplus(z) - self.y[i] * z
            })
            .sum();
        let pen: f64 = (0..self.d).map(|j| theta[j] * theta[j]).sum();
        data / self.n() + 0.5 * self.reg * pen
    }

    fn grad_hess(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.d;
        let mut g = DVector::zeros(d + 1);
        let mut h = DMatrix::zeros(d + 1, d + 1);
        let mut row = vec![0.0; d + 1];
        for i in 0..self.y.len() {
            row[..d].copy_from_slice(&self.x[i]);
            row[d] = 1.0;
            let p = sigmoid(self.z(theta, i));
            let r = p - self.y[i];
            let w = p * (1.0 - p);
            for a in 0..=d {
                g[a] += r * row[a];
                for b in 0..=a {
                    h[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        let n = self.n();
        g /= n;
        h /= n;
        for a in 0..=d {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        for j in 0..d {
            g[j] += self.reg * theta[j];
            h[(j, j)] += self.reg;
        }
        (g, h)
    }
}

/// Gradient of the training objective at a model's parameters, weights
/// first and bias last.
pub fn logreg_gradient(model: &LogRegModel, features: &[Vec<f64>], labels: &[bool]) -> Vec<f64> {
    let p = Problem {
        x: features,
        y: labels.iter().map(|&l| l as u8 as f64).collect(),
        reg: model.reg_strength,
        d: model.dim(),
    };
    let mut theta = DVector::from_vec(model.weights.clone());
    theta = theta.push(model.bias);
    p.grad_hess(&theta).0.iter().copied().collect()
}

/// Training objective: mean log-loss plus (reg/2)|w|^2; the bias is not
/// penalized.
pub fn logreg_loss(model: &LogRegModel, features: &[Vec<f64>], labels: &[bool]) -> f64 {
    let p = Problem {
        x: features,
        y: labels.iter().map(|&l| l as u8 as f64).collect(),
        reg: model.reg_strength,
        d: model.dim(),
    };
    p.loss(&DVector::from_vec(model.weights.clone()).push(model.bias))
}

/// Damped Newton with backtracking; falls back to a gradient step when the
/// Newton system is not positive definite or the step fails to descend.
pub fn fit_logreg(features: &[Vec<f64>], labels: &[bool], reg_strength: f64) -> Result<LogRegFit> {
    if features.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Validation("no training rows".into()));
    }
    if !(reg_strength >= 0.0) {
        return Err(Error::Validation("reg_strength must be non-negative".into()));
    }
    let d = features[0].len();
    if let Some(r) = features.iter().position(|r| r.len() != d) {
        return Err(Error::Validation(format!(
            "feature row {r} has length {}, expected {d}",
            features[r].len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        let prior = (pos as f64 / labels.len() as f64).clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP);
        log::warn!("single-class labels: degenerate model predicting {prior}");
        return Ok(LogRegFit {
            model: LogRegModel {
                weights: vec![0.0; d],
                bias: (prior / (1.0 - prior)).ln(),
                reg_strength,
                degenerate: true,
            },
            loss_history: Vec::new(),
            gradient_norm: 0.0,
            converged: true,
        });
    }

    let prob = Problem {
        x: features,
        y: labels.iter().map(|&l| l as u8 as f64).collect(),
        reg: reg_strength,
        d,
    };
    let mut theta = DVector::zeros(d + 1);
    let mut loss = prob.loss(&theta);
    let mut history = vec![loss];
    let mut gnorm = f64::INFINITY;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let (g, h) = prob.grad_hess(&theta);
        gnorm = g.norm();
        if gnorm <= GRAD_TOL {
            converged = true;
            break;
        }
        let newton = h.cholesky().map(|c| -c.solve(&g));
        let mut accepted = None;
        for dir in newton.into_iter().chain(std::iter::once(-g.clone())) {
            let slope = g.dot(&dir);
            if slope >= 0.0 {
                continue;
            }
            let mut t = 1.0;
            while t > 1e-12 {
                let cand = &theta + t * &dir;
                let l = prob.loss(&cand);
                if l <= loss + 1e-4 * t * slope {
                    accepted = Some((cand, l));
                    break;
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        match accepted {
            Some((cand, l)) => {
                theta = cand;
                loss = l;
                history.push(l);
            }
            None => break,
        }
    }
    if !converged {
        let (g, _) = prob.grad_hess(&theta);
        gnorm = g.norm();
        converged = gnorm <= GRAD_TOL;
    }
    Ok(LogRegFit {
        model: LogRegModel {
            weights: theta.iter().take(d).copied().collect(),
            bias: theta[d],
            reg_strength,
            degenerate: false,
        },
        loss_history: history,
        gradient_norm: gnorm,
        converged,
    })
}

/// Per-model correctness classifiers plus calibration mean costs, in pool
/// (cost-ascending) order.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterModels {
    pub models: Vec<ModelId>,
    pub classifiers: Vec<LogRegModel>,
    pub mean_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouterPolicy<'a> {
    pub models: &'a RouterModels,
    pub weight: f64,
}

/// Index of argmax_j P_j - w * c_j; ties keep the cheaper model.
pub fn route_scores(probs: &[f64], mean_costs: &[f64], weight: f64) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| mean_costs[a].total_cmp(&mean_costs[b]));
    for j in order {
        let v = probs[j] - weight * mean_costs[j];
        if v > best_v {
            best = j;
            best_v = v;
        }
    }
    best
}

pub fn route<'a>(features: &[f64], policy: &RouterPolicy<'a>) -> &'a ModelId {
    let m = policy.models;
    let probs: Vec<f64> = m.classifiers.iter().map(|c| c.predict(features)).collect();
    &m.models[route_scores(&probs, &m.mean_costs, policy.weight)]
}

/// A quality of at least 0.5 counts as correct.
pub fn correct(quality: f64) -> bool {
    quality >= 0.5
}

fn feature_rows<'a>(table: &'a EvalTable) -> Result<&'a [Vec<f64>]> {
    table
        .features()
        .ok_or_else(|| Error::Validation("table has no feature vectors".into()))
}

/// Fits one classifier per pool model on calibration rows.
pub fn fit_router(
    table: &EvalTable,
    pool: &ModelPool,
    calib: &[usize],
    reg_strength: f64,
) -> Result<RouterModels> {
    let feats = feature_rows(table)?;
    let x: Vec<Vec<f64>> = calib.iter().map(|&q| feats[q].clone()).collect();
    let classifiers = pool
        .members
        .par_iter()
        .map(|m| {
            let col = table.model_index(&m.model)?;
            let y: Vec<bool> = calib.iter().map(|&q| correct(table.qualities(col)[q])).collect();
            Ok(fit_logreg(&x, &y, reg_strength)?.model)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RouterModels {
        models: pool.ids(),
        classifiers,
        mean_costs: pool.members.iter().map(|m| m.mean_cost).collect(),
    })
}

/// Default scalarization weights: `n` log-uniform points on [1e-6, 1e2]
/// divided by the cost scale, preceded by 0.
pub fn default_w_grid(cost_scale: f64, n: usize) -> Vec<f64> {
    let scale = if cost_scale > 0.0 { cost_scale } else { 1.0 };
    let mut out = vec![0.0];
    let (lo, hi) = (1e-6f64.ln(), 1e2f64.ln());
    for i in 0..n {
        let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        out.push((lo + (hi - lo) * t).exp() / scale);
    }
    out
}

/// Dispatches each test query to one model per weight and charges only that
/// model's cost.
pub fn router_frontier(
    table: &EvalTable,
    models: &RouterModels,
    test: &[usize],
    w_grid: &[f64],
) -> Result<Frontier> {
    if test.is_empty() {
        return Err(Error::Validation("empty test set".into()));
    }
    let feats = feature_rows(table)?;
    let cols = models
        .models
        .iter()
        .map(|m| table.model_index(m))
        .collect::<Result<Vec<_>>>()?;
    let probs: Vec<Vec<f64>> = test
        .iter()
        .map(|&q| models.classifiers.iter().map(|c| c.predict(&feats[q])).collect())
        .collect();
    let n = test.len() as f64;
    let pts = w_grid
        .iter()
        .map(|&w| {
            let (mut c, mut u) = (0.0, 0.0);
            for (row, &q) in probs.iter().zip(test) {
                let m = cols[route_scores(row, &models.mean_costs, w)];
                c += table.costs(m)[q];
                u += table.qualities(m)[q];
            }
            FrontierPoint {
                cost: c / n,
                quality: u / n,
                policy: Policy::Router { router_weight: w },
            }
        })
        .collect();
    Ok(pareto_filter(pts))
}

/// Replaces the cheap model's score with its predicted probability of being
/// correct (fit on `calib` features) and sweeps the pair.
pub fn embedding_cascade_frontier(
    table: &EvalTable,
    pair: &ModelPair,
    calib: &[usize],
    test: &[usize],
    n_tau: usize,
    reg_strength: f64,
) -> Result<Frontier> {
    let feats = feature_rows(table)?;
    let low = table.model_index(&pair.low)?;
    let x: Vec<Vec<f64>> = calib.iter().map(|&q| feats[q].clone()).collect();
    let y: Vec<bool> = calib.iter().map(|&q| correct(table.qualities(low)[q])).collect();
    let model = fit_logreg(&x, &y, reg_strength)?.model;
    let scores = feats.iter().map(|f| Some(model.predict(f))).collect();
    let rescored = table.with_scores(low, scores)?;
    sweep_pair_split(&rescored, (&pair.low, &pair.high), n_tau, calib, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureTable, QueryRecord};
    use crate::pool::select_nondominated;
    use crate::testutil::t5;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separable_1d() {
        let x: Vec<Vec<f64>> = [-1.0, -1.0, -1.0, 1.0, 1.0, 1.0].iter().map(|&v| vec![v]).collect();
        let y = [false, false, false, true, true, true];
        let fit = fit_logreg(&x, &y, DEFAULT_REG).unwrap();
        assert!(fit.converged);
        assert!(fit.model.weights[0].is_finite() && fit.model.weights[0] > 0.0);
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(fit.model.predict(xi) >= 0.5, yi);
        }
        for w in fit.loss_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn intercept_only_hits_base_rate() {
        let x = vec![Vec::new(); 10];
        let y: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let fit = fit_logreg(&x, &y, DEFAULT_REG).unwrap();
        assert_relative_eq!(fit.model.bias, (0.3f64 / 0.7).ln(), epsilon = 1e-6);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = vec![vec![1.0]; 4];
        let fit = fit_logreg(&x, &[true; 4], DEFAULT_REG).unwrap();
        assert!(fit.model.degenerate);
        assert_relative_eq!(fit.model.predict(&[1.0]), 1.0 - PRIOR_CLAMP, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let x: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let y: Vec<bool> = (0..20).map(|i| i % 3 == 0 || rng.random_bool(0.3)).collect();
            let fit = fit_logreg(&x, &y, 0.1).unwrap();
            let g = logreg_gradient(&fit.model, &x, &y);
            let h = 1e-6;
            for k in 0..4 {
                let mut plus = fit.model.clone();
                let mut minus = fit.model.clone();
                if k < 3 {
                    plus.weights[k] += h;
                    minus.weights[k] -= h;
                } else {
                    plus.bias += h;
                    minus.bias -= h;
                }
                let fd = (logreg_loss(&plus, &x, &y) - logreg_loss(&minus, &x, &y)) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-5, "component {k}: fd {fd} vs {}", g[k]);
                assert!(g[k].abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let m = LogRegModel {
            weights: vec![0.1, -2.5e-7, 3.0],
            bias: -0.25,
            reg_strength: 0.01,
            degenerate: false,
        };
        assert_eq!(LogRegModel::from_text(&m.to_text()).unwrap(), m);
        let err = LogRegModel::from_text("cascade-logreg v1\nreg_strength x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(LogRegModel::from_text("other v9\n").is_err());
    }

    #[test]
    fn routing_rule() {
        assert_eq!(route_scores(&[0.8, 0.9], &[1.0, 10.0], 0.02), 0);
        assert_eq!(route_scores(&[0.8, 0.9], &[1.0, 10.0], 0.0), 1);
        assert_eq!(route_scores(&[0.8, 0.9], &[1.0, 10.0], 1e9), 0);
        assert_eq!(route_scores(&[0.5, 0.5], &[1.0, 10.0], 0.0), 0);
        // invariant to a common shift
        assert_eq!(route_scores(&[0.3, 0.4], &[1.0, 10.0], 0.02), route_scores(&[0.55, 0.65], &[1.0, 10.0], 0.02));
    }

    #[test]
    fn w_grid_shape() {
        let g = default_w_grid(2.0, 50);
        assert_eq!(g.len(), 51);
        assert_eq!(g[0], 0.0);
        assert_relative_eq!(g[1], 0.5e-6, epsilon = 1e-18);
        assert_relative_eq!(g[50], 50.0, epsilon = 1e-9);
    }

    fn with_onehot(t: &EvalTable) -> EvalTable {
        let n = t.n_queries();
        let ft = FeatureTable::from_rows(
            t.queries()
                .iter()
                .enumerate()
                .map(|(i, q)| (q.clone(), (0..n).map(|j| (i == j) as u8 as f64).collect())),
        )
        .unwrap();
        t.with_features(&ft).unwrap()
    }

    #[test]
    fn t5_memorizing_cascade_separates_a_correctness() {
        let t = with_onehot(&t5());
        let idx = t.all_indices();
        let pair = ModelPair {
            low: "A".into(),
            high: "B".into(),
        };
        let f = embedding_cascade_frontier(&t, &pair, &idx, &idx, 10, 1e-3).unwrap();
        // q2, q4, q5 are all wrong for A and look identical to the
        // classifier, so they escalate together
        let pts: Vec<(f64, f64)> = f.points().iter().map(|p| (p.cost, p.quality)).collect();
        assert_eq!(pts, vec![(1.0, 0.4), (7.0, 0.8)]);
    }

    #[test]
    fn constant_predictions_give_endpoints_only() {
        let t = t5();
        let ft = FeatureTable::from_rows(t.queries().iter().map(|q| (q.clone(), vec![1.0]))).unwrap();
        let t = t.with_features(&ft).unwrap();
        let idx = t.all_indices();
        let pair = ModelPair {
            low: "A".into(),
            high: "B".into(),
        };
        let f = embedding_cascade_frontier(&t, &pair, &idx, &idx, 10, DEFAULT_REG).unwrap();
        assert_eq!(f.costs(), vec![1.0, 11.0]);
    }

    #[test]
    fn single_model_router_frontier() {
        let mut recs = Vec::new();
        for i in 0..6 {
            recs.push(QueryRecord {
                query_id: format!("q{i}"),
                model: "A".into(),
                cost: 2.0,
                quality: (i % 2) as f64,
                score: None,
                features: Some(vec![i as f64]),
            });
        }
        let t = EvalTable::from_records(recs).unwrap();
        let idx = t.all_indices();
        let pool = select_nondominated(&t, &idx, &[]).unwrap();
        let models = fit_router(&t, &pool, &idx, DEFAULT_REG).unwrap();
        let f = router_frontier(&t, &models, &idx, &default_w_grid(2.0, 10)).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!((f.points()[0].cost, f.points()[0].quality), (2.0, 0.5));
    }
}
