//! Pointwise best over two-model cascade frontiers, and the budgets where the
//! best pair changes.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::cascade::{sweep_pair_split, Frontier, Side};
use crate::data::EvalTable;
use crate::error::{Error, Result};
use crate::pool::{ModelPair, ModelPool};

/// Quality gaps smaller than this count as ties.
const TIE_TOL: f64 = 1e-12;

/// One pair's frontier with the calibration mean costs that fix its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFrontier {
    pub pair: ModelPair,
    pub c_low: f64,
    pub c_high: f64,
    pub frontier: Frontier,
}

impl PairFrontier {
    /// Quality at `budget`, or `None` when the budget is below this pair's
    /// cheapest policy. Budgets above `c_low + c_high` get the pair's top
    /// quality, which keeps the envelope non-decreasing.
    pub fn value(&self, budget: f64) -> Option<f64> {
        if budget < self.c_low {
            return None;
        }
        self.frontier.interpolate(budget).ok()
    }
}

/// Sweeps every pair on `calib` and evaluates the chosen thresholds on
/// `eval`. Pairs run in parallel; output order follows `pairs`.
pub fn pair_frontiers(
    table: &EvalTable,
    pool: &ModelPool,
    pairs: &[ModelPair],
    n_tau: usize,
    calib: &[usize],
    eval: &[usize],
) -> Result<Vec<PairFrontier>> {
    pairs
        .par_iter()
        .map(|pair| {
            let member = |id| {
                pool.member(id)
                    .ok_or_else(|| Error::UnknownModel(id.to_string()))
            };
            let low = member(&pair.low)?;
            let high = member(&pair.high)?;
            let frontier = sweep_pair_split(table, (&pair.low, &pair.high), n_tau, calib, eval)?;
            Ok(PairFrontier {
                pair: pair.clone(),
                c_low: low.mean_cost,
                c_high: high.mean_cost,
                frontier,
            })
        })
        .collect()
}

/// Writes `budget,left_low,left_high,right_low,right_high,left_slope,right_slope`.
pub fn write_switching_csv<W: Write>(points: &[SwitchingPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["budget", "left_low", "left_high", "right_low", "right_high", "left_slope", "right_slope"])?;
    for s in points {
        w.write_record([
            s.budget.to_string(),
            s.left.low.to_string(),
            s.left.high.to_string(),
            s.right.low.to_string(),
            s.right.high.to_string(),
            s.left_slope.to_string(),
            s.right_slope.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// `n` evenly spaced budgets from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchingPoint {
    pub budget: f64,
    pub left: ModelPair,
    pub right: ModelPair,
    /// Slope of the outgoing pair's frontier just below `budget`.
    pub left_slope: f64,
    /// Slope of the incoming pair's frontier just above `budget`.
    pub right_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub cost_grid: Vec<f64>,
    /// `None` where no pair is feasible.
    pub quality: Vec<Option<f64>>,
    best: Vec<Option<usize>>,
    pairs: Vec<PairFrontier>,
}

impl Envelope {
    pub fn best_pair(&self, i: usize) -> Option<&ModelPair> {
        self.best[i].map(|p| &self.pairs[p].pair)
    }

    pub fn pairs(&self) -> &[PairFrontier] {
        &self.pairs
    }

    /// Writes `budget,quality,best_low,best_high,is_switch`; infeasible
    /// budgets leave the last four fields empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let switches: Vec<f64> = switching_points(self).iter().map(|s| s.budget).collect();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["budget", "quality", "best_low", "best_high", "is_switch"])?;
        for (i, &b) in self.cost_grid.iter().enumerate() {
            match (self.quality[i], self.best_pair(i)) {
                (Some(q), Some(p)) => w.write_record([
                    b.to_string(),
                    q.to_string(),
                    p.low.to_string(),
                    p.high.to_string(),
                    switches.contains(&b).to_string(),
                ])?,
                _ => w.write_record([b.to_string(), String::new(), String::new(), String::new(), String::new()])?,
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Best pair per grid budget. Ties in quality go to the pair with the cheaper
/// low model, then to the lexicographically smaller (low, high).
pub fn build_envelope(pairs: Vec<PairFrontier>, cost_grid: &[f64]) -> Result<Envelope> {
    if pairs.is_empty() {
        return Err(Error::Validation("envelope needs at least one pair".into()));
    }
    if cost_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("cost grid must be strictly increasing".into()));
    }
    let mut quality = Vec::with_capacity(cost_grid.len());
    let mut best = Vec::with_capacity(cost_grid.len());
    for &b in cost_grid {
        let mut cur: Option<(usize, f64)> = None;
        for (i, pf) in pairs.iter().enumerate() {
            let Some(v) = pf.value(b) else { continue };
            cur = match cur {
                None => Some((i, v)),
                Some((j, w)) => {
                    if v > w + TIE_TOL {
                        Some((i, v))
                    } else if v >= w - TIE_TOL && prefer(&pairs[i], &pairs[j]) {
                        Some((i, v.max(w)))
                    } else {
                        Some((j, w.max(v)))
                    }
                }
            };
        }
        quality.push(cur.map(|c| c.1));
        best.push(cur.map(|c| c.0));
    }
    Ok(Envelope {
        cost_grid: cost_grid.to_vec(),
        quality,
        best,
        pairs,
    })
}

fn prefer(a: &PairFrontier, b: &PairFrontier) -> bool {
    a.c_low
        .total_cmp(&b.c_low)
        .then_with(|| a.pair.cmp(&b.pair))
        .is_lt()
}

/// Grid budgets at which the best pair differs from the previous feasible
/// budget's.
pub fn switching_points(env: &Envelope) -> Vec<SwitchingPoint> {
    let mut out = Vec::new();
    let mut prev: Option<usize> = None;
    for (i, &b) in env.cost_grid.iter().enumerate() {
        let Some(cur) = env.best[i] else { continue };
        if let Some(p) = prev {
            if p != cur {
                out.push(SwitchingPoint {
                    budget: b,
                    left: env.pairs[p].pair.clone(),
                    right: env.pairs[cur].pair.clone(),
                    left_slope: env.pairs[p].frontier.slope_at(b, Side::Left),
                    right_slope: env.pairs[cur].frontier.slope_at(b, Side::Right),
                });
            }
        }
        prev = Some(cur);
    }
    out
}
