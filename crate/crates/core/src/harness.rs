//! Split-experiment protocol: stratified calibration/test splits, held-out
//! frontiers per method, percentile bands on a common cost grid, summary
//! metrics, sensitivity sweeps and the report bundle.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::Frontier;
use crate::data::{EvalTable, ModelId};
use crate::diagnostics::{
    benefit_auroc, benefit_curve, cost_score_spearman, summarize_fractions, summarize_spearman,
    BenefitCurve, DEFAULT_BINS,
};
use crate::envelope::{
    build_envelope, linear_grid, pair_frontiers, switching_points, write_switching_csv, SwitchingPoint,
};
use crate::error::{Error, Result};
use crate::pool::{select_nondominated, valid_pairs, ModelPair, ModelPool};
use crate::router::{correct, default_w_grid, fit_router, router_frontier, DEFAULT_REG};
use crate::search::{optimize_fixed_chain, optimize_subsequence, SearchConfig};
use crate::stats;

pub const DEFAULT_GRID_POINTS: usize = 500;
pub const DEFAULT_N_TAU: usize = crate::cascade::DEFAULT_N_TAU;
/// Grid points averaged around the median operating cost.
pub const DELTA_WINDOW: usize = 20;

/// Which label the splits are stratified on.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratify {
    None,
    /// Correctness of the model with the highest mean quality.
    #[default]
    TerminalCorrect,
    /// Correctness of a named model.
    Model(ModelId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitPlan {
    pub n_splits: usize,
    pub calib_fraction: f64,
    pub seed: u64,
    pub stratify: Stratify,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            n_splits: 50,
            calib_fraction: 0.5,
            seed: 0,
            stratify: Stratify::default(),
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_splits == 0 {
            return Err(Error::Validation("n_splits must be at least 1".into()));
        }
        if !(self.calib_fraction > 0.0 && self.calib_fraction < 1.0) {
            return Err(Error::Validation(format!(
                "calib_fraction must lie in (0, 1), got {}",
                self.calib_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub calib: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `strata.len()` queries; each stratum contributes round(fraction *
/// size) queries to calibration. Split i shuffles with stream i of the
/// master seed.
pub fn make_splits_stratified(strata: &[u64], plan: &SplitPlan) -> Result<Vec<Split>> {
    plan.validate()?;
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (q, &s) in strata.iter().enumerate() {
        groups.entry(s).or_default().push(q);
    }
    (0..plan.n_splits)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            rng.set_stream(i as u64);
            let (mut calib, mut test) = (Vec::new(), Vec::new());
            for members in groups.values() {
                let mut m = members.clone();
                m.shuffle(&mut rng);
                let take = (plan.calib_fraction * m.len() as f64).round() as usize;
                calib.extend_from_slice(&m[..take]);
                test.extend_from_slice(&m[take..]);
            }
            if calib.is_empty() || test.is_empty() {
                return Err(Error::Validation(format!(
                    "split {i} leaves an empty calibration or test set"
                )));
            }
            calib.sort_unstable();
            test.sort_unstable();
            Ok(Split { calib, test })
        })
        .collect()
}

pub fn make_splits(table: &EvalTable, plan: &SplitPlan) -> Result<Vec<Split>> {
    let strata: Vec<u64> = match &plan.stratify {
        Stratify::None => vec![0; table.n_queries()],
        key => {
            let m = match key {
                Stratify::Model(id) => table.model_index(id)?,
                _ => terminal_model(table),
            };
            table.qualities(m).iter().map(|&u| correct(u) as u64).collect()
        }
    };
    make_splits_stratified(&strata, plan)
}

/// Highest full-sample mean quality; ties go to the later column.
fn terminal_model(table: &EvalTable) -> usize {
    let all = table.all_indices();
    (0..table.n_models())
        .max_by(|&a, &b| table.mean_quality(a, &all).total_cmp(&table.mean_quality(b, &all)))
        .unwrap_or(0)
}

/// Escalate a random share `p` of queries from L to H.
pub fn random_escalation_baseline(a_l: f64, a_h: f64, c_l: f64, c_h: f64, p: f64) -> (f64, f64) {
    (c_l + p * c_h, (1.0 - p) * a_l + p * a_h)
}

/// Quality of `frontier` at each grid budget; `None` below its cheapest
/// point.
pub fn grid_values(frontier: &Frontier, grid: &[f64]) -> Vec<Option<f64>> {
    grid.iter().map(|&b| frontier.interpolate(b).ok()).collect()
}

/// Height at budget `b` of the line through `lo` and `hi`.
pub fn chord_value(lo: (f64, f64), hi: (f64, f64), b: f64) -> f64 {
    lo.1 + (hi.1 - lo.1) * (b - lo.0) / (hi.0 - lo.0)
}

/// Area between the curve and the chord from `lo` to `hi`, integrated by
/// trapezoids over grid points where the curve is defined and lying in
/// [lo.0, hi.0], divided by (hi.0 - lo.0) * (hi.1 - lo.1). `None` when
/// fewer than two such points exist.
pub fn normalized_gain(grid: &[f64], values: &[Option<f64>], lo: (f64, f64), hi: (f64, f64)) -> Option<f64> {
    if !(hi.0 > lo.0 && hi.1 > lo.1) {
        return None;
    }
    let chord = |b: f64| chord_value(lo, hi, b);
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(values)
        .filter_map(|(&b, v)| v.map(|v| (b, v - chord(b))))
        .filter(|&(b, _)| b >= lo.0 && b <= hi.0)
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let area: f64 = pts
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    Some(area / ((hi.0 - lo.0) * (hi.1 - lo.1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostReduction {
    pub percent: f64,
    /// Whether the target quality was reached on the grid.
    pub reached: bool,
    pub budget: Option<f64>,
}

/// Smallest grid budget whose quality is at least `q_fraction * a_max`,
/// as a percentage saving on `c_max`.
pub fn cost_reduction_at(
    grid: &[f64],
    values: &[Option<f64>],
    q_fraction: f64,
    a_max: f64,
    c_max: f64,
) -> CostReduction {
    let target = q_fraction * a_max;
    match grid
        .iter()
        .zip(values)
        .find(|(_, v)| v.is_some_and(|v| v >= target))
    {
        Some((&b, _)) => CostReduction {
            percent: 100.0 * (1.0 - b / c_max),
            reached: true,
            budget: Some(b),
        },
        None => CostReduction {
            percent: 0.0,
            reached: false,
            budget: None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSet {
    pub envelope: bool,
    pub chain: bool,
    pub subsequence: bool,
    pub router: bool,
}

impl Default for MethodSet {
    fn default() -> Self {
        MethodSet {
            envelope: true,
            chain: true,
            subsequence: true,
            router: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub plan: SplitPlan,
    pub methods: MethodSet,
    pub n_tau: usize,
    pub grid_points: usize,
    pub search: SearchConfig,
    pub router_reg: f64,
    /// Positive weights in the router sweep, besides w = 0.
    pub router_w_points: usize,
    pub exclude: Vec<ModelId>,
    /// Quality target for cost reduction, as a share of the top model's.
    pub cr_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            plan: SplitPlan::default(),
            methods: MethodSet::default(),
            n_tau: DEFAULT_N_TAU,
            grid_points: DEFAULT_GRID_POINTS,
            search: SearchConfig::default(),
            router_reg: DEFAULT_REG,
            router_w_points: 50,
            exclude: Vec::new(),
            cr_fraction: 0.9,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        if self.methods.chain || self.methods.subsequence {
            self.search.validate()?;
        }
        if self.n_tau < 1 {
            return Err(Error::Validation("n_tau must be at least 1".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::Validation("grid_points must be at least 2".into()));
        }
        if !(self.cr_fraction > 0.0 && self.cr_fraction <= 1.0) {
            return Err(Error::Validation("cr_fraction must lie in (0, 1]".into()));
        }
        if !(self.router_reg >= 0.0) {
            return Err(Error::Validation("router_reg must be non-negative".into()));
        }
        Ok(())
    }
}

/// SHA-256 of the JSON serialization, hex encoded.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Pointwise 10th percentile, median and 90th percentile across splits.
/// A grid point is `None` unless every split defines it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub p10: Vec<Option<f64>>,
    pub median: Vec<Option<f64>>,
    pub p90: Vec<Option<f64>>,
}

impl Band {
    pub fn from_curves(curves: &[Vec<Option<f64>>], len: usize) -> Band {
        let mut band = Band {
            p10: vec![None; len],
            median: vec![None; len],
            p90: vec![None; len],
        };
        for i in 0..len {
            let col: Option<Vec<f64>> = curves.iter().map(|c| c[i]).collect();
            let Some(mut col) = col.filter(|c| !c.is_empty()) else { continue };
            col.sort_by(f64::total_cmp);
            band.p10[i] = Some(stats::quantile_sorted(&col, 0.1));
            band.median[i] = Some(stats::quantile_sorted(&col, 0.5));
            band.p90[i] = Some(stats::quantile_sorted(&col, 0.9));
        }
        band
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub method: String,
    pub gain: Option<f64>,
    pub cr: CostReduction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub table: String,
    pub row: String,
    pub column: String,
    pub value: f64,
}

fn diag(table: &str, row: impl Into<String>, column: &str, value: f64) -> DiagnosticRow {
    DiagnosticRow {
        table: table.into(),
        row: row.into(),
        column: column.into(),
        value,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub config_json: String,
    pub grid: Vec<f64>,
    /// Cheapest and top full-sample pool models as (mean cost, mean quality).
    pub cheapest: (ModelId, f64, f64),
    pub top: (ModelId, f64, f64),
    pub methods: BTreeMap<String, Band>,
    pub metrics: Vec<MethodMetrics>,
    /// Median over splits of the envelope's cost-reduction budget.
    pub median_operating_cost: Option<f64>,
    pub switching: Vec<SwitchingPoint>,
    pub diagnostics: Vec<DiagnosticRow>,
}

impl ExperimentReport {
    pub fn band(&self, method: &str) -> Option<&Band> {
        self.methods.get(method)
    }

    pub fn metric(&self, method: &str) -> Option<&MethodMetrics> {
        self.metrics.iter().find(|m| m.method == method)
    }

    /// Mean median-quality gap `a - b` and band-width ratio over the
    /// `DELTA_WINDOW` grid points around the median operating cost.
    pub fn window_delta(&self, a: &str, b: &str) -> Option<(f64, Option<f64>)> {
        let center = self.median_operating_cost?;
        window_delta(&self.grid, self.band(a)?, self.band(b)?, center, DELTA_WINDOW)
    }
}

/// Mean of `a.median - b.median` and the ratio of mean band widths over a
/// window of `width` grid points centered on the point nearest `center`.
pub fn window_delta(grid: &[f64], a: &Band, b: &Band, center: f64, width: usize) -> Option<(f64, Option<f64>)> {
    if grid.is_empty() {
        return None;
    }
    let nearest = grid
        .iter()
        .enumerate()
        .min_by(|x, y| (x.1 - center).abs().total_cmp(&(y.1 - center).abs()))?
        .0;
    let width = width.clamp(1, grid.len());
    let start = nearest.saturating_sub(width / 2).min(grid.len() - width);
    let (mut gap, mut wa, mut wb, mut n) = (0.0, 0.0, 0.0, 0usize);
    for i in start..start + width {
        if let (Some(ma), Some(mb), Some(la), Some(ha), Some(lb), Some(hb)) =
            (a.median[i], b.median[i], a.p10[i], a.p90[i], b.p10[i], b.p90[i])
        {
            gap += ma - mb;
            wa += ha - la;
            wb += hb - lb;
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    let bwr = (wb > 0.0).then(|| wa / wb);
    Some((gap / n as f64, if wa == wb { Some(1.0) } else { bwr }))
}

struct SplitOutcome {
    curves: BTreeMap<&'static str, Vec<Option<f64>>>,
    pair_curves: BTreeMap<ModelPair, Vec<Option<f64>>>,
    envelope_budget: Option<f64>,
    router_auroc: Option<f64>,
}

fn split_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn run_split(
    table: &EvalTable,
    config: &ExperimentConfig,
    split: &Split,
    i: usize,
    grid: &[f64],
    top_quality: f64,
) -> Result<SplitOutcome> {
    let pool = select_nondominated(table, &split.calib, &config.exclude)?;
    let mut curves = BTreeMap::new();
    let mut pair_curves = BTreeMap::new();
    let mut envelope_budget = None;
    let mut router_auroc = None;

    let pairs = valid_pairs(&pool);
    let pfs = pair_frontiers(table, &pool, &pairs, config.n_tau, &split.calib, &split.test)?;
    for pf in &pfs {
        pair_curves.insert(pf.pair.clone(), grid_values(&pf.frontier, grid));
    }
    if config.methods.envelope {
        let env = build_envelope(pfs, grid)?;
        let c_max = *grid.last().unwrap_or(&1.0);
        envelope_budget = cost_reduction_at(grid, &env.quality, config.cr_fraction, top_quality, c_max).budget;
        curves.insert("envelope", env.quality);
    }
    let mut search = config.search.clone();
    search.seed = split_seed(config.search.seed, i);
    if config.methods.chain && pool.len() >= 2 {
        let res = optimize_fixed_chain(table, &pool, &split.calib, &search)?;
        curves.insert("chain", grid_values(&res.front.reevaluate(table, &split.test)?, grid));
    }
    if config.methods.subsequence && pool.len() >= 2 {
        let res = optimize_subsequence(table, &pool, &split.calib, &search)?;
        curves.insert("subsequence", grid_values(&res.front.reevaluate(table, &split.test)?, grid));
    }
    if config.methods.router {
        let models = fit_router(table, &pool, &split.calib, config.router_reg)?;
        let scale = stats::mean(&models.mean_costs);
        let w = default_w_grid(scale, config.router_w_points);
        let front = router_frontier(table, &models, &split.test, &w)?;
        curves.insert("router", grid_values(&front, grid));
        let feats = table.features().ok_or_else(|| Error::Validation("table has no features".into()))?;
        let aucs: Vec<f64> = models
            .models
            .iter()
            .zip(&models.classifiers)
            .filter_map(|(m, c)| {
                let col = table.model_index(m).ok()?;
                let p: Vec<f64> = split.test.iter().map(|&q| c.predict(&feats[q])).collect();
                let y: Vec<bool> = split.test.iter().map(|&q| correct(table.qualities(col)[q])).collect();
                stats::auroc(&p, &y)
            })
            .collect();
        router_auroc = (!aucs.is_empty()).then(|| stats::mean(&aucs));
    }
    Ok(SplitOutcome {
        curves,
        pair_curves,
        envelope_budget,
        router_auroc,
    })
}

/// Runs every split, aggregates held-out frontiers on the common grid and
/// computes metrics on the median frontiers.
pub fn run_experiment(table: &EvalTable, config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    if config.methods.router && table.features().is_none() {
        return Err(Error::Validation("router method needs feature vectors".into()));
    }
    let all = table.all_indices();
    let full_pool = select_nondominated(table, &all, &config.exclude)?;
    if full_pool.len() < 2 {
        return Err(Error::Validation("experiment needs at least two non-dominated models".into()));
    }
    let cheap = full_pool.cheapest().clone();
    let top = full_pool.top().clone();
    let grid = linear_grid(cheap.mean_cost, top.mean_cost, config.grid_points);
    let splits = make_splits(table, &config.plan)?;
    let outcomes = splits
        .par_iter()
        .enumerate()
        .map(|(i, s)| run_split(table, config, s, i, &grid, top.mean_quality))
        .collect::<Result<Vec<_>>>()?;

    let n = grid.len();
    let mut methods = BTreeMap::new();
    for name in ["envelope", "chain", "subsequence", "router"] {
        let curves: Vec<Vec<Option<f64>>> = outcomes.iter().filter_map(|o| o.curves.get(name).cloned()).collect();
        if curves.len() == outcomes.len() && !curves.is_empty() {
            methods.insert(name.to_string(), Band::from_curves(&curves, n));
        }
    }

    // Baselines from full-sample means of the cheapest and top models.
    let lo = (cheap.mean_cost, cheap.mean_quality);
    let hi = (cheap.mean_cost + top.mean_cost, top.mean_quality);
    // random escalation at share p = (b - c_L) / c_H lies on this chord
    let chord: Vec<Option<f64>> = grid.iter().map(|&b| Some(chord_value(lo, hi, b))).collect();
    methods.insert(
        "random_escalation".into(),
        Band {
            p10: chord.clone(),
            median: chord.clone(),
            p90: chord,
        },
    );
    let expensive: Vec<Option<f64>> = grid
        .iter()
        .map(|&b| (b >= top.mean_cost).then_some(top.mean_quality))
        .collect();
    methods.insert(
        "always_expensive".into(),
        Band {
            p10: expensive.clone(),
            median: expensive.clone(),
            p90: expensive,
        },
    );

    let c_max = top.mean_cost;
    let metric = |name: &str, vals: &[Option<f64>]| MethodMetrics {
        method: name.to_string(),
        gain: normalized_gain(&grid, vals, lo, hi),
        cr: cost_reduction_at(&grid, vals, config.cr_fraction, top.mean_quality, c_max),
    };

    // Best single pair, among pairs present in every split.
    let mut diagnostics = Vec::new();
    let mut best_pair: Option<(f64, ModelPair, Band)> = None;
    let mut pair_keys: Vec<&ModelPair> = outcomes[0].pair_curves.keys().collect();
    pair_keys.retain(|k| outcomes.iter().all(|o| o.pair_curves.contains_key(*k)));
    for key in pair_keys {
        let curves: Vec<Vec<Option<f64>>> = outcomes.iter().map(|o| o.pair_curves[key].clone()).collect();
        let band = Band::from_curves(&curves, n);
        let Some(g) = normalized_gain(&grid, &band.median, lo, hi) else { continue };
        diagnostics.push(diag("pair_gain", pair_label(key), "gain", g));
        if best_pair.as_ref().is_none_or(|(bg, _, _)| g > *bg) {
            best_pair = Some((g, key.clone(), band));
        }
    }
    if let Some((_, _, band)) = best_pair.clone() {
        methods.insert("best_pair".into(), band);
    }

    let metrics: Vec<MethodMetrics> = methods.iter().map(|(k, b)| metric(k, &b.median)).collect();

    let budgets: Vec<f64> = outcomes.iter().filter_map(|o| o.envelope_budget).collect();
    let median_operating_cost = (!budgets.is_empty()).then(|| stats::median(&budgets));

    // Full-sample descriptive envelope and per-pair diagnostics.
    let full_pairs = valid_pairs(&full_pool);
    let full_pfs = pair_frontiers(table, &full_pool, &full_pairs, config.n_tau, &all, &all)?;
    let switching = switching_points(&build_envelope(full_pfs, &grid)?);

    for m in &full_pool.members {
        diagnostics.push(diag("pool", m.model.as_str(), "mean_cost", m.mean_cost));
        diagnostics.push(diag("pool", m.model.as_str(), "mean_quality", m.mean_quality));
    }
    let mut rhos = Vec::new();
    for pair in &full_pairs {
        let label = pair_label(pair);
        let curves: Vec<BenefitCurve> = splits
            .iter()
            .map(|s| benefit_curve(table, pair, &s.test, DEFAULT_BINS))
            .collect::<Result<_>>()?;
        let f = summarize_fractions(&curves)?;
        diagnostics.push(diag("benefit", &label, "dom_of_median_curve", f.dom_of_median_curve));
        diagnostics.push(diag("benefit", &label, "median_of_dom", f.median_of_dom));
        diagnostics.push(diag("benefit", &label, "dec_of_median_curve", f.dec_of_median_curve));
        diagnostics.push(diag("benefit", &label, "median_of_dec", f.median_of_dec));
        if let Some(a) = benefit_auroc(table, pair, &all)? {
            diagnostics.push(diag("benefit", &label, "auroc", a));
        }
        let c = cost_score_spearman(table, pair, &all)?;
        if !c.degenerate {
            diagnostics.push(diag("spearman", &label, "rho", c.rho));
            rhos.push(c.rho);
        }
    }
    if let Some(s) = summarize_spearman(&rhos) {
        diagnostics.push(diag("spearman_summary", "all", "median_abs", s.median_abs));
        diagnostics.push(diag("spearman_summary", "all", "p90_abs", s.p90_abs));
        diagnostics.push(diag("spearman_summary", "all", "max_abs", s.max_abs));
        diagnostics.push(diag("spearman_summary", "all", "share_below_020", s.share_below_020));
    }

    let config_json = serde_json::to_string(config)?;
    let mut report = ExperimentReport {
        config_hash: config_hash(config)?,
        config_json,
        grid,
        cheapest: (cheap.model.clone(), cheap.mean_cost, cheap.mean_quality),
        top: (top.model.clone(), top.mean_cost, top.mean_quality),
        methods,
        metrics,
        median_operating_cost,
        switching,
        diagnostics,
    };
    if let Some((_, pair, _)) = &best_pair {
        report.diagnostics.push(diag("best_pair", pair_label(pair), "selected", 1.0));
    }
    if report.methods.contains_key("router") {
        if let Some((d, _)) = report.window_delta("router", "envelope") {
            report.diagnostics.push(diag("signal", "router", "delta", d));
        }
        let aucs: Vec<f64> = outcomes.iter().filter_map(|o| o.router_auroc).collect();
        if !aucs.is_empty() {
            report.diagnostics.push(diag("signal", "router", "auroc", stats::median(&aucs)));
        }
    }
    Ok(report)
}

fn pair_label(p: &ModelPair) -> String {
    format!("{}/{}", p.low, p.high)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl ExperimentReport {
    /// Writes frontiers.csv, metrics.csv, switching.csv, diagnostics.csv and
    /// provenance.txt into `dir`, each headed by the config hash.
    pub fn write_bundle(&self, dir: &Path, extra_provenance: &[(String, String)]) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("frontiers.csv", self.frontiers_csv()?),
            ("metrics.csv", self.metrics_csv()?),
            ("switching.csv", self.switching_csv()?),
            ("diagnostics.csv", self.diagnostics_csv()?),
            ("provenance.txt", self.provenance(extra_provenance)),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    fn header(&self) -> String {
        format!("# config_hash: {}\n", self.config_hash)
    }

    fn csv(&self, header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        let body = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
        Ok(self.header() + &String::from_utf8_lossy(&body))
    }

    pub fn frontiers_csv(&self) -> Result<String> {
        let mut rows = Vec::new();
        for (name, band) in &self.methods {
            for (i, b) in self.grid.iter().enumerate() {
                rows.push(vec![
                    name.clone(),
                    b.to_string(),
                    fmt_opt(band.p10[i]),
                    fmt_opt(band.median[i]),
                    fmt_opt(band.p90[i]),
                ]);
            }
        }
        self.csv(&["method", "budget", "p10", "median", "p90"], rows)
    }

    pub fn metrics_csv(&self) -> Result<String> {
        let rows = self
            .metrics
            .iter()
            .map(|m| {
                vec![
                    m.method.clone(),
                    fmt_opt(m.gain),
                    m.cr.percent.to_string(),
                    m.cr.reached.to_string(),
                    fmt_opt(m.cr.budget),
                ]
            })
            .collect();
        self.csv(&["method", "gain", "cr", "cr_reached", "cr_budget"], rows)
    }

    pub fn switching_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        write_switching_csv(&self.switching, &mut buf)?;
        Ok(self.header() + &String::from_utf8_lossy(&buf))
    }

    pub fn diagnostics_csv(&self) -> Result<String> {
        let rows = self
            .diagnostics
            .iter()
            .map(|d| vec![d.table.clone(), d.row.clone(), d.column.clone(), d.value.to_string()])
            .collect();
        self.csv(&["table", "row", "column", "value"], rows)
    }

    pub fn provenance(&self, extra: &[(String, String)]) -> String {
        let mut s = self.header();
        let _ = writeln!(s, "crate_version: {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "config: {}", self.config_json);
        let _ = writeln!(
            s,
            "gain_normalization: area between median frontier and the random-escalation chord from ({}, {}) to ({}, {}), divided by the chord's bounding box",
            self.cheapest.1,
            self.cheapest.2,
            self.cheapest.1 + self.top.1,
            self.top.2
        );
        let _ = writeln!(s, "cost_grid: {} points from {} ({}) to {} ({})", self.grid.len(), self.cheapest.1, self.cheapest.0, self.top.1, self.top.0);
        let _ = writeln!(s, "median_operating_cost: {}", fmt_opt(self.median_operating_cost));
        for (k, v) in extra {
            let _ = writeln!(s, "{k}: {v}");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationSensitivity {
    pub fraction: f64,
    /// Median subsequence minus envelope quality near the operating cost.
    pub delta: Option<f64>,
    /// Subsequence band width over envelope band width.
    pub bwr: Option<f64>,
}

/// Repeats the experiment at each calibration fraction, holding the search
/// budget fixed.
pub fn sensitivity_calibration(
    table: &EvalTable,
    base: &ExperimentConfig,
    fractions: &[f64],
) -> Result<Vec<CalibrationSensitivity>> {
    fractions
        .iter()
        .map(|&f| {
            let mut cfg = base.clone();
            cfg.plan.calib_fraction = f;
            cfg.methods = MethodSet {
                envelope: true,
                chain: false,
                subsequence: true,
                router: false,
            };
            let rep = run_experiment(table, &cfg)?;
            let d = rep.window_delta("subsequence", "envelope");
            Ok(CalibrationSensitivity {
                fraction: f,
                delta: d.map(|d| d.0),
                bwr: d.and_then(|d| d.1),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSensitivity {
    pub n_tau: usize,
    pub mean_abs: f64,
    pub max_abs: f64,
}

/// Median envelope at each candidate-set size against the `reference` size.
pub fn sensitivity_grid(
    table: &EvalTable,
    base: &ExperimentConfig,
    n_tau_set: &[usize],
    reference: usize,
) -> Result<Vec<GridSensitivity>> {
    let envelope_at = |n_tau: usize| -> Result<Vec<Option<f64>>> {
        let mut cfg = base.clone();
        cfg.n_tau = n_tau;
        cfg.methods = MethodSet {
            envelope: true,
            chain: false,
            subsequence: false,
            router: false,
        };
        let rep = run_experiment(table, &cfg)?;
        Ok(rep.methods["envelope"].median.clone())
    };
    let reference = envelope_at(reference)?;
    n_tau_set
        .iter()
        .map(|&n| {
            let cur = envelope_at(n)?;
            let diffs: Vec<f64> = cur
                .iter()
                .zip(&reference)
                .filter_map(|(a, b)| Some((a.as_ref()? - b.as_ref()?).abs()))
                .collect();
            if diffs.is_empty() {
                return Err(Error::Infeasible("no common grid points".into()));
            }
            Ok(GridSensitivity {
                n_tau: n,
                mean_abs: stats::mean(&diffs),
                max_abs: diffs.iter().cloned().fold(0.0, f64::max),
            })
        })
        .collect()
}

/// Pool selected on the full table, for reporting.
pub fn full_sample_pool(table: &EvalTable, exclude: &[ModelId]) -> Result<ModelPool> {
    select_nondominated(table, &table.all_indices(), exclude)
}
