//! Score-conditional estimates and structural checks: escalation-benefit
//! curves, dominance and decreasing-benefit fractions, shadow prices,
//! first-order residuals, per-stage boundary marginals, and cost/score
//! dependence.

use std::io::Write;

use serde::Serialize;

use crate::cascade::{resolve, stops_at, CascadePolicy};
use crate::data::EvalTable;
use crate::error::{Error, Result};
use crate::pool::ModelPair;
use crate::stats::{auroc, median, quantile, spearman};

pub const DEFAULT_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenefitBin {
    /// Smallest and largest cheap-model score in the bin.
    pub score_lo: f64,
    pub score_hi: f64,
    pub count: usize,
    pub mass: f64,
    pub m_low: f64,
    pub m_high: f64,
    pub benefit: f64,
    pub mean_cost_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenefitCurve {
    pub bins: Vec<BenefitBin>,
    /// Requested bin count; larger than `bins.len()` when ties forced merges.
    pub requested: usize,
}

impl BenefitCurve {
    pub fn merged(&self) -> bool {
        self.bins.len() < self.requested
    }

    /// Bin whose score range covers `tau`; the nearest end bin otherwise.
    pub fn bin_at(&self, tau: f64) -> &BenefitBin {
        self.bins
            .iter()
            .find(|b| tau <= b.score_hi)
            .unwrap_or_else(|| self.bins.last().expect("non-empty curve"))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "bin",
            "score_lo",
            "score_hi",
            "count",
            "mass",
            "m_low",
            "m_high",
            "benefit",
            "mean_cost_high",
        ])?;
        for (i, b) in self.bins.iter().enumerate() {
            w.write_record([
                i.to_string(),
                b.score_lo.to_string(),
                b.score_hi.to_string(),
                b.count.to_string(),
                b.mass.to_string(),
                b.m_low.to_string(),
                b.m_high.to_string(),
                b.benefit.to_string(),
                b.mean_cost_high.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn pair_columns(table: &EvalTable, pair: &ModelPair) -> Result<(usize, usize)> {
    Ok((table.model_index(&pair.low)?, table.model_index(&pair.high)?))
}

fn cheap_scores(table: &EvalTable, low: usize, index: &[usize]) -> Result<Vec<f64>> {
    index
        .iter()
        .map(|&q| {
            table.scores(low)[q].ok_or_else(|| Error::MissingScore {
                query: table.queries()[q].clone(),
                stage: 1,
            })
        })
        .collect()
}

/// Equal-mass bins on the cheap model's score. Bin edges never split a group
/// of tied scores, so heavy ties yield fewer bins than requested.
pub fn benefit_curve(
    table: &EvalTable,
    pair: &ModelPair,
    index: &[usize],
    n_bins: usize,
) -> Result<BenefitCurve> {
    if n_bins < 2 {
        return Err(Error::Validation("n_bins must be at least 2".into()));
    }
    if index.is_empty() {
        return Err(Error::Validation("empty index set".into()));
    }
    let (low, high) = pair_columns(table, pair)?;
    let scores = cheap_scores(table, low, index)?;
    let mut rows: Vec<(f64, usize)> = scores.into_iter().zip(index.iter().copied()).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = rows.len();

    let mut edges = vec![0];
    for b in 1..n_bins {
        let mut e = b * n / n_bins;
        while e > 0 && e < n && rows[e].0 == rows[e - 1].0 {
            e += 1;
        }
        if e > *edges.last().unwrap() && e < n {
            edges.push(e);
        }
    }
    edges.push(n);
    if edges.len() - 1 < n_bins {
        log::warn!(
            "benefit curve for {}->{}: {} bins requested, {} after merging ties",
            pair.low,
            pair.high,
            n_bins,
            edges.len() - 1
        );
    }

    let bins = edges
        .windows(2)
        .map(|w| {
            let slice = &rows[w[0]..w[1]];
            let k = slice.len() as f64;
            let m_low = slice.iter().map(|r| table.qualities(low)[r.1]).sum::<f64>() / k;
            let m_high = slice.iter().map(|r| table.qualities(high)[r.1]).sum::<f64>() / k;
            BenefitBin {
                score_lo: slice[0].0,
                score_hi: slice[slice.len() - 1].0,
                count: slice.len(),
                mass: k / n as f64,
                m_low,
                m_high,
                benefit: m_high - m_low,
                mean_cost_high: slice.iter().map(|r| table.costs(high)[r.1]).sum::<f64>() / k,
            }
        })
        .collect();
    Ok(BenefitCurve {
        bins,
        requested: n_bins,
    })
}

/// Mass of bins where escalation strictly helps.
pub fn dominance_fraction(curve: &BenefitCurve) -> f64 {
    curve
        .bins
        .iter()
        .filter(|b| b.benefit > 0.0)
        .map(|b| b.mass)
        .sum()
}

/// Share of adjacent bin pairs whose benefit does not increase, each pair
/// weighted by the mass of its right bin. A single bin counts as decreasing.
pub fn decreasing_fraction(curve: &BenefitCurve) -> f64 {
    let (mut ok, mut total) = (0.0, 0.0);
    for w in curve.bins.windows(2) {
        total += w[1].mass;
        if w[1].benefit <= w[0].benefit {
            ok += w[1].mass;
        }
    }
    if total == 0.0 {
        1.0
    } else {
        ok / total
    }
}

/// Per-bin median of several curves with the same bin count; masses are
/// averaged.
pub fn median_curve(curves: &[BenefitCurve]) -> Result<BenefitCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Validation("no curves to combine".into()))?;
    let nb = first.bins.len();
    if curves.iter().any(|c| c.bins.len() != nb) {
        return Err(Error::Validation(
            "curves differ in bin count and cannot be combined".into(),
        ));
    }
    let col = |f: &dyn Fn(&BenefitBin) -> f64, i: usize| -> Vec<f64> {
        curves.iter().map(|c| f(&c.bins[i])).collect()
    };
    let bins = (0..nb)
        .map(|i| {
            let m_low = median(&col(&|b| b.m_low, i));
            let m_high = median(&col(&|b| b.m_high, i));
            BenefitBin {
                score_lo: median(&col(&|b| b.score_lo, i)),
                score_hi: median(&col(&|b| b.score_hi, i)),
                count: curves.iter().map(|c| c.bins[i].count).sum::<usize>() / curves.len(),
                mass: col(&|b| b.mass, i).iter().sum::<f64>() / curves.len() as f64,
                m_low,
                m_high,
                benefit: median(&col(&|b| b.benefit, i)),
                mean_cost_high: median(&col(&|b| b.mean_cost_high, i)),
            }
        })
        .collect();
    Ok(BenefitCurve {
        bins,
        requested: first.requested,
    })
}

/// dom and dec computed on the median curve and as medians of per-split
/// values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FractionSummary {
    pub dom_of_median_curve: f64,
    pub median_of_dom: f64,
    pub dec_of_median_curve: f64,
    pub median_of_dec: f64,
}

pub fn summarize_fractions(curves: &[BenefitCurve]) -> Result<FractionSummary> {
    let med = median_curve(curves)?;
    let doms: Vec<f64> = curves.iter().map(dominance_fraction).collect();
    let decs: Vec<f64> = curves.iter().map(decreasing_fraction).collect();
    Ok(FractionSummary {
        dom_of_median_curve: dominance_fraction(&med),
        median_of_dom: median(&doms),
        dec_of_median_curve: decreasing_fraction(&med),
        median_of_dec: median(&decs),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShadowPrices {
    /// Cost per unit of quality.
    pub lambda_p1: f64,
    /// Quality per unit of cost.
    pub lambda_p2: f64,
}

/// Multipliers of the quality- and budget-constrained problems at a shared
/// interior threshold. A non-positive benefit means no interior optimum.
pub fn shadow_prices(benefit_at_tau: f64, c_high: f64) -> Result<ShadowPrices> {
    if !(benefit_at_tau > 0.0) {
        return Err(Error::Domain(format!(
            "escalation benefit {benefit_at_tau} is not positive: boundary solution"
        )));
    }
    if !(c_high > 0.0) {
        return Err(Error::Domain(format!("escalation cost {c_high} is not positive")));
    }
    Ok(ShadowPrices {
        lambda_p1: c_high / benefit_at_tau,
        lambda_p2: benefit_at_tau / c_high,
    })
}

/// |benefit(tau) - lambda * c_high| with the benefit read from the bin
/// containing `tau`.
pub fn foc_residual_two_model(curve: &BenefitCurve, tau: f64, lambda: f64, c_high: f64) -> f64 {
    (curve.bin_at(tau).benefit - lambda * c_high).abs()
}

/// How the slab around each stage threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryWidth {
    /// The given fraction of stage-reaching queries closest to the threshold.
    Nearest(f64),
    /// All stage-reaching queries with |s - tau| <= width.
    Absolute(f64),
}

impl Default for BoundaryWidth {
    fn default() -> Self {
        BoundaryWidth::Nearest(0.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageMarginal {
    /// 1-based stage.
    pub stage: usize,
    pub reaching: usize,
    pub slab: usize,
    pub benefit: f64,
    pub cost: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageMarginals {
    /// One entry per non-terminal stage; `None` when the slab is empty.
    pub stages: Vec<Option<StageMarginal>>,
}

impl StageMarginals {
    pub fn active(&self) -> impl Iterator<Item = &StageMarginal> {
        self.stages.iter().flatten()
    }
}

/// Plug-in estimates of the boundary escalation benefit and downstream cost
/// at each non-terminal stage, with later thresholds held fixed.
pub fn stage_marginals(
    table: &EvalTable,
    policy: &CascadePolicy,
    index: &[usize],
    width: BoundaryWidth,
) -> Result<StageMarginals> {
    if policy.len() < 2 {
        return Err(Error::Validation("stage marginals need at least two stages".into()));
    }
    let seq = resolve(table, policy)?;
    let tau = &policy.thresholds;
    let score = |m: usize, q: usize, stage: usize| {
        table.scores(m)[q].ok_or_else(|| Error::MissingScore {
            query: table.queries()[q].clone(),
            stage: stage + 1,
        })
    };

    let mut reaching: Vec<usize> = index.to_vec();
    let mut stages = Vec::with_capacity(seq.len() - 1);
    for i in 0..seq.len() - 1 {
        let m = seq[i];
        let mut dist = Vec::with_capacity(reaching.len());
        for &q in &reaching {
            dist.push(((score(m, q, i)? - tau[i]).abs(), q));
        }
        let slab: Vec<usize> = match width {
            BoundaryWidth::Nearest(frac) => {
                let mut d = dist.clone();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let take = ((frac * d.len() as f64).ceil() as usize).min(d.len());
                d[..take].iter().map(|x| x.1).collect()
            }
            BoundaryWidth::Absolute(w) => dist.iter().filter(|x| x.0 <= w).map(|x| x.1).collect(),
        };
        stages.push(if slab.is_empty() {
            None
        } else {
            let (mut gain, mut cost) = (0.0, 0.0);
            for &q in &slab {
                let (dq, dc) = downstream(table, &seq[i + 1..], &tau[i + 1..], q)?;
                gain += dq - table.qualities(m)[q];
                cost += dc;
            }
            let k = slab.len() as f64;
            let (benefit, cost) = (gain / k, cost / k);
            Some(StageMarginal {
                stage: i + 1,
                reaching: reaching.len(),
                slab: slab.len(),
                benefit,
                cost,
                lambda: if cost > 0.0 { benefit / cost } else { f64::NAN },
            })
        });
        let mut next = Vec::with_capacity(reaching.len());
        for &q in &reaching {
            if !stops_at(score(m, q, i)?, tau[i]) {
                next.push(q);
            }
        }
        reaching = next;
    }
    Ok(StageMarginals { stages })
}

/// Quality and summed cost of running the tail cascade on query `q`.
fn downstream(table: &EvalTable, seq: &[usize], tau: &[f64], q: usize) -> Result<(f64, f64)> {
    let (_, c, u) = crate::cascade::run_query(table, seq, tau, q)?;
    Ok((u, c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostScoreCorrelation {
    pub rho: f64,
    /// Set when either side has no variance; `rho` is then 0.
    pub degenerate: bool,
}

/// Spearman correlation between the cheap model's score and the expensive
/// model's realized cost.
pub fn cost_score_spearman(
    table: &EvalTable,
    pair: &ModelPair,
    index: &[usize],
) -> Result<CostScoreCorrelation> {
    let (low, high) = pair_columns(table, pair)?;
    let s = cheap_scores(table, low, index)?;
    let c: Vec<f64> = index.iter().map(|&q| table.costs(high)[q]).collect();
    Ok(match spearman(&s, &c) {
        Some(rho) => CostScoreCorrelation {
            rho,
            degenerate: false,
        },
        None => CostScoreCorrelation {
            rho: 0.0,
            degenerate: true,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpearmanSummary {
    pub median_abs: f64,
    pub p90_abs: f64,
    pub max_abs: f64,
    pub share_below_020: f64,
}

/// Dataset-level summary of per-pair |rho|.
pub fn summarize_spearman(rhos: &[f64]) -> Option<SpearmanSummary> {
    if rhos.is_empty() {
        return None;
    }
    let abs: Vec<f64> = rhos.iter().map(|r| r.abs()).collect();
    Some(SpearmanSummary {
        median_abs: median(&abs),
        p90_abs: quantile(&abs, 0.9),
        max_abs: abs.iter().cloned().fold(0.0, f64::max),
        share_below_020: abs.iter().filter(|&&a| a < 0.20).count() as f64 / abs.len() as f64,
    })
}

/// How well a low cheap-model score predicts that escalating helps
/// (U_high > U_low). `None` when every query falls in one class.
pub fn benefit_auroc(table: &EvalTable, pair: &ModelPair, index: &[usize]) -> Result<Option<f64>> {
    let (low, high) = pair_columns(table, pair)?;
    let s: Vec<f64> = cheap_scores(table, low, index)?.iter().map(|v| -v).collect();
    let labels: Vec<bool> = index
        .iter()
        .map(|&q| table.qualities(high)[q] > table.qualities(low)[q])
        .collect();
    Ok(auroc(&s, &labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ModelId, QueryRecord};
    use crate::testutil::{t5, t5_with_c};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ab() -> ModelPair {
        ModelPair {
            low: "A".into(),
            high: "B".into(),
        }
    }

    fn table(rows: &[(f64, f64, f64, f64)]) -> EvalTable {
        // (score, u_low, u_high, c_high)
        let mut recs = Vec::new();
        for (i, &(s, ul, uh, ch)) in rows.iter().enumerate() {
            let q = format!("q{i}");
            recs.push(QueryRecord {
                query_id: q.clone(),
                model: "A".into(),
                cost: 1.0,
                quality: ul,
                score: Some(s),
                features: None,
            });
            recs.push(QueryRecord {
                query_id: q,
                model: "B".into(),
                cost: ch,
                quality: uh,
                score: None,
                features: None,
            });
        }
        EvalTable::from_records(recs).unwrap()
    }

    #[test]
    fn t5_two_bins() {
        let t = t5();
        let c = benefit_curve(&t, &ab(), &t.all_indices(), 2).unwrap();
        assert_eq!(c.bins.len(), 2);
        assert_eq!((c.bins[0].score_lo, c.bins[0].score_hi), (0.2, 0.4));
        assert_relative_eq!(c.bins[0].mass, 0.4);
        assert_eq!(c.bins[0].benefit, 1.0);
        // q1, q3 both right, q5 both wrong
        assert_eq!(c.bins[1].benefit, 0.0);
        assert_relative_eq!(dominance_fraction(&c), 0.4);
        assert_eq!(decreasing_fraction(&c), 1.0);
    }

    #[test]
    fn constant_benefits() {
        let rows: Vec<_> = (0..40).map(|i| (i as f64 / 40.0, 0.0, 1.0, 2.0)).collect();
        let c = benefit_curve(&table(&rows), &ab(), &(0..40).collect::<Vec<_>>(), 4).unwrap();
        assert!(c.bins.iter().all(|b| b.benefit == 1.0));
        assert_eq!(dominance_fraction(&c), 1.0);

        let rows: Vec<_> = (0..40).map(|i| (i as f64 / 40.0, (i % 2) as f64, (i % 2) as f64, 2.0)).collect();
        let c = benefit_curve(&table(&rows), &ab(), &(0..40).collect::<Vec<_>>(), 4).unwrap();
        assert!(c.bins.iter().all(|b| b.benefit == 0.0));
        assert_eq!(dominance_fraction(&c), 0.0);
    }

    #[test]
    fn decreasing_fraction_extremes() {
        let mk = |b: &[f64]| BenefitCurve {
            bins: b
                .iter()
                .map(|&v| BenefitBin {
                    score_lo: 0.0,
                    score_hi: 0.0,
                    count: 1,
                    mass: 1.0 / b.len() as f64,
                    m_low: 0.0,
                    m_high: v,
                    benefit: v,
                    mean_cost_high: 1.0,
                })
                .collect(),
            requested: b.len(),
        };
        assert_eq!(decreasing_fraction(&mk(&[0.9, 0.5, 0.1])), 1.0);
        assert_eq!(decreasing_fraction(&mk(&[0.1, 0.5, 0.9])), 0.0);
        assert_eq!(decreasing_fraction(&mk(&[0.3])), 1.0);
        let s = summarize_fractions(&[mk(&[0.9, 0.5, 0.1]), mk(&[0.1, 0.5, 0.9]), mk(&[0.9, 0.5, 0.1])]).unwrap();
        assert_eq!(s.median_of_dec, 1.0);
        assert_eq!(s.dec_of_median_curve, 1.0);
    }

    #[test]
    fn ties_merge_bins() {
        let rows: Vec<_> = (0..10).map(|i| (if i < 8 { 0.5 } else { 0.9 }, 0.0, 1.0, 1.0)).collect();
        let c = benefit_curve(&table(&rows), &ab(), &(0..10).collect::<Vec<_>>(), 5).unwrap();
        assert_eq!(c.bins.len(), 2);
        assert!(c.merged());
        assert_relative_eq!(c.bins.iter().map(|b| b.mass).sum::<f64>(), 1.0);
    }

    #[test]
    fn shadow_price_cases() {
        let p = shadow_prices(0.2, 10.0).unwrap();
        assert_relative_eq!(p.lambda_p1, 50.0);
        assert_relative_eq!(p.lambda_p2, 0.02);
        assert_eq!(shadow_prices(3.0, 3.0).unwrap(), ShadowPrices { lambda_p1: 1.0, lambda_p2: 1.0 });
        assert!(matches!(shadow_prices(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(shadow_prices(-0.1, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn foc_residual_cases() {
        let t = t5();
        let c = benefit_curve(&t, &ab(), &t.all_indices(), 2).unwrap();
        assert_eq!(foc_residual_two_model(&c, 0.3, 1.0 / 10.0, 10.0), 0.0);
        assert_eq!(foc_residual_two_model(&c, 0.3, 0.0, 10.0), 1.0);
    }

    #[test]
    fn two_stage_marginals_match_slab_means() {
        let t = t5();
        let idx = t.all_indices();
        let p = CascadePolicy::pair("A".into(), "B".into(), 0.5).unwrap();
        let m = stage_marginals(&t, &p, &idx, BoundaryWidth::Absolute(0.15)).unwrap();
        assert_eq!(m.stages.len(), 1);
        let s = m.stages[0].as_ref().unwrap();
        // slab: scores 0.4 (q4) and 0.6 (q5)
        assert_eq!(s.slab, 2);
        assert_relative_eq!(s.benefit, 0.5);
        assert_relative_eq!(s.cost, 10.0);
        assert_relative_eq!(s.lambda, 0.05);

        let m = stage_marginals(&t, &p, &idx, BoundaryWidth::Absolute(0.01)).unwrap();
        assert!(m.stages[0].is_none());
        // nearest 10% of 5 queries rounds up to one
        let m = stage_marginals(&t, &p, &idx, BoundaryWidth::default()).unwrap();
        assert_eq!(m.stages[0].as_ref().unwrap().slab, 1);
    }

    #[test]
    fn three_stage_only_reaching_queries_count() {
        let t = t5_with_c();
        let p = CascadePolicy::new(vec!["A".into(), "C".into(), "B".into()], vec![0.7, 0.5]).unwrap();
        let m = stage_marginals(&t, &p, &t.all_indices(), BoundaryWidth::Nearest(1.0)).unwrap();
        let s2 = m.stages[1].as_ref().unwrap();
        // q2, q4, q5 reach stage 2 (A scores below 0.7)
        assert_eq!(s2.reaching, 3);
        assert_eq!(m.stages[0].as_ref().unwrap().reaching, 5);
    }

    #[test]
    fn spearman_cases() {
        let rows: Vec<_> = (0..20).map(|i| (i as f64 / 20.0, 0.0, 1.0, 1.0 + i as f64)).collect();
        let t = table(&rows);
        let idx: Vec<usize> = (0..20).collect();
        assert_relative_eq!(cost_score_spearman(&t, &ab(), &idx).unwrap().rho, 1.0, epsilon = 1e-12);
        let t = t5();
        let r = cost_score_spearman(&t, &ab(), &t.all_indices()).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.rho, 0.0);
        let s = summarize_spearman(&[0.1, -0.3, 0.05]).unwrap();
        assert_relative_eq!(s.max_abs, 0.3);
        assert_relative_eq!(s.share_below_020, 2.0 / 3.0);
    }

    #[test]
    fn t5_benefit_auroc_is_one() {
        let t = t5();
        assert_eq!(benefit_auroc(&t, &ab(), &t.all_indices()).unwrap(), Some(1.0));
    }

    proptest! {
        #[test]
        fn fractions_invariant_to_monotone_score_maps(
            rows in prop::collection::vec((0.0f64..1.0, any::<bool>(), any::<bool>()), 10..80),
            bins in 2usize..8,
        ) {
            let base: Vec<_> = rows.iter().map(|&(s, a, b)| (s, a as u8 as f64, b as u8 as f64, 1.0)).collect();
            let warped: Vec<_> = base.iter().map(|&(s, a, b, c)| (s.powi(3), a, b, c)).collect();
            let idx: Vec<usize> = (0..rows.len()).collect();
            let c1 = benefit_curve(&table(&base), &ab(), &idx, bins).unwrap();
            let c2 = benefit_curve(&table(&warped), &ab(), &idx, bins).unwrap();
            prop_assert_eq!(dominance_fraction(&c1), dominance_fraction(&c2));
            prop_assert_eq!(decreasing_fraction(&c1), decreasing_fraction(&c2));
            let mass: f64 = c1.bins.iter().map(|b| b.mass).sum();
            prop_assert!((mass - 1.0).abs() < 1e-9);
            // mass-weighted benefit equals the overall mean gain
            let wb: f64 = c1.bins.iter().map(|b| b.mass * b.benefit).sum();
            let direct = base.iter().map(|r| r.2 - r.1).sum::<f64>() / base.len() as f64;
            prop_assert!((wb - direct).abs() < 1e-9);
        }

        #[test]
        fn shadow_prices_reciprocal(b in 1e-6f64..10.0, c in 1e-6f64..100.0) {
            let p = shadow_prices(b, c).unwrap();
            prop_assert!((p.lambda_p1 * p.lambda_p2 - 1.0).abs() <= 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn k2_marginal_agrees_with_curve_means() {
        let t = t5();
        let idx = t.all_indices();
        let p = CascadePolicy::pair(ModelId::from("A"), "B".into(), 0.3).unwrap();
        let m = stage_marginals(&t, &p, &idx, BoundaryWidth::Nearest(0.4)).unwrap();
        let s = m.stages[0].as_ref().unwrap();
        // nearest two to 0.3: 0.2 and 0.4, the curve's low bin
        let c = benefit_curve(&t, &ab(), &idx, 2).unwrap();
        assert_eq!(s.benefit, c.bins[0].benefit);
        assert_eq!(s.cost, c.bins[0].mean_cost_high);
    }
}
