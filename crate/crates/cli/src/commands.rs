use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use cascade_frontier::data::{load_features, load_token_logs};
use cascade_frontier::diagnostics::{
    benefit_auroc, benefit_curve, cost_score_spearman, decreasing_fraction, dominance_fraction,
    summarize_spearman,
};
use cascade_frontier::envelope::{build_envelope, linear_grid, pair_frontiers, switching_points, write_switching_csv};
use cascade_frontier::harness::{make_splits, run_experiment, sensitivity_calibration, sensitivity_grid, ExperimentReport};
use cascade_frontier::pool::{DropReason, ModelPair};
use cascade_frontier::router::{default_w_grid, embedding_cascade_frontier, fit_router, router_frontier};
use cascade_frontier::scorers::{merge_scores, score_logs, write_score_csv, ScoreVector};
use cascade_frontier::search::{optimize_fixed_chain, optimize_subsequence, SearchResult};
use cascade_frontier::synthlab::{
    affine_cost_check, analytic_frontier, synth_generate, tau_grid, verify_concavity, verify_foc,
    verify_mixture_gain, verify_stage_equalization, SynthSpec,
};
use cascade_frontier::{
    load_eval_table, select_nondominated, sweep_pair, valid_pairs, EvalTable, ModelId, ModelPool,
};

use crate::config::RunConfig;

/// One output file, held in memory until the whole command has succeeded.
pub struct Artifact {
    pub name: String,
    pub body: String,
}

impl Artifact {
    fn new(name: &str, body: String) -> Self {
        Artifact {
            name: name.into(),
            body,
        }
    }
}

pub enum Output {
    Files(Vec<Artifact>),
    Experiment(Box<ExperimentReport>, Vec<Artifact>),
}

fn csv_string(write: impl FnOnce(&mut Vec<u8>) -> cascade_frontier::Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf)?)
}

/// Evaluation table with scores from token logs and features merged in.
pub fn load_inputs(cfg: &RunConfig) -> Result<EvalTable> {
    let path = cfg.table.as_ref().ok_or_else(|| anyhow!("table: no evaluation table given"))?;
    let mut table = load_eval_table(path, &cfg.columns).with_context(|| format!("table: {}", path.display()))?;
    if let Some(logs) = &cfg.token_logs {
        let batch = load_token_logs(logs).with_context(|| format!("token_logs: {}", logs.display()))?;
        if batch.resorted > 0 {
            log::warn!("{} top-k lists were not descending and have been sorted", batch.resorted);
        }
        let rows = score_logs(&batch.logs, cfg.scorer, cfg.top_k)?;
        table = merge_scores(&table, &rows)?;
    }
    if let Some(f) = &cfg.features {
        let feats = load_features(f).with_context(|| format!("features: {}", f.display()))?;
        table = table.with_features(&feats).context("features")?;
    }
    Ok(table)
}

fn full_pool(table: &EvalTable, cfg: &RunConfig) -> Result<ModelPool> {
    Ok(select_nondominated(table, &table.all_indices(), &cfg.exclude)?)
}

pub fn ingest(cfg: &RunConfig) -> Result<Output> {
    let table = load_inputs(cfg)?;
    let mut summary = String::new();
    writeln!(summary, "queries: {}", table.n_queries())?;
    writeln!(summary, "models: {}", table.n_models())?;
    let all = table.all_indices();
    for (m, id) in table.models().iter().enumerate() {
        let scored = table.scores(m).iter().filter(|s| s.is_some()).count();
        writeln!(
            summary,
            "model {id}: mean_cost {} mean_quality {} scored {scored}",
            table.mean_cost(m, &all),
            table.mean_quality(m, &all)
        )?;
    }
    if let Some(f) = table.features() {
        writeln!(summary, "feature_dim: {}", f.first().map_or(0, Vec::len))?;
    }
    Ok(Output::Files(vec![
        Artifact::new("table.csv", csv_string(|b| table.write_csv(b))?),
        Artifact::new("ingest.txt", summary),
    ]))
}

pub fn score(cfg: &RunConfig, all_scorers: bool) -> Result<Output> {
    let path = cfg
        .token_logs
        .as_ref()
        .ok_or_else(|| anyhow!("token_logs: no token log file given"))?;
    let batch = load_token_logs(path).with_context(|| format!("token_logs: {}", path.display()))?;
    let rows = score_logs(&batch.logs, cfg.scorer, cfg.top_k)?;
    let mut out = vec![Artifact::new("scores.csv", csv_string(|b| write_score_csv(&rows, b))?)];
    if all_scorers {
        let mut s = String::from("query_id,model,lnsp,mtp,prob_margin,atn,mtn\n");
        for log in &batch.logs {
            let v = ScoreVector::compute(log, cfg.top_k)?;
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                log.query_id, log.model, v.lnsp, v.mtp, v.prob_margin, v.atn, v.mtn
            )?;
        }
        out.push(Artifact::new("scores_all.csv", s));
    }
    Ok(Output::Files(out))
}

pub fn pool(cfg: &RunConfig) -> Result<Output> {
    let table = load_inputs(cfg)?;
    let pool = full_pool(&table, cfg)?;
    let mut s = String::from("model,mean_cost,mean_quality,status,reason\n");
    for m in &pool.members {
        writeln!(s, "{},{},{},member,", m.model, m.mean_cost, m.mean_quality)?;
    }
    for d in &pool.dropped {
        let reason = match &d.reason {
            DropReason::Excluded => "excluded".to_string(),
            DropReason::DominatedBy(by) => format!("dominated by {by}"),
        };
        writeln!(s, "{},{},{},dropped,{reason}", d.model, d.mean_cost, d.mean_quality)?;
    }
    Ok(Output::Files(vec![Artifact::new("pool.csv", s)]))
}

pub fn frontier(cfg: &RunConfig, low: Option<String>, high: Option<String>) -> Result<Output> {
    let table = load_inputs(cfg)?;
    let pool = full_pool(&table, cfg)?;
    let low = match low {
        Some(s) => ModelId::new(s)?,
        None => pool.cheapest().model.clone(),
    };
    let high = match high {
        Some(s) => ModelId::new(s)?,
        None => pool.top().model.clone(),
    };
    if low == high {
        bail!("pair: low and high model are both {low}");
    }
    let f = sweep_pair(&table, (&low, &high), cfg.n_tau, &table.all_indices())?;
    Ok(Output::Files(vec![Artifact::new("frontier.csv", csv_string(|b| f.write_csv(b))?)]))
}

pub fn envelope(cfg: &RunConfig) -> Result<Output> {
    let table = load_inputs(cfg)?;
    let pool = full_pool(&table, cfg)?;
    let pairs = valid_pairs(&pool);
    if pairs.is_empty() {
        bail!("pool: fewer than two non-dominated models");
    }
    let all = table.all_indices();
    let pfs = pair_frontiers(&table, &pool, &pairs, cfg.n_tau, &all, &all)?;
    let mut pair_csv = String::from("low,high,cost,quality,threshold\n");
    for pf in &pfs {
        for p in pf.frontier.points() {
            let tau = p.policy.as_cascade().and_then(|c| c.thresholds.first().copied());
            writeln!(
                pair_csv,
                "{},{},{},{},{}",
                pf.pair.low,
                pf.pair.high,
                p.cost,
                p.quality,
                tau.map(|t| t.to_string()).unwrap_or_default()
            )?;
        }
    }
    let grid = linear_grid(pool.cheapest().mean_cost, pool.top().mean_cost, cfg.grid_points);
    let env = build_envelope(pfs, &grid)?;
    let switches = switching_points(&env);
    Ok(Output::Files(vec![
        Artifact::new("envelope.csv", csv_string(|b| env.write_csv(b))?),
        Artifact::new("pairs.csv", pair_csv),
        Artifact::new("switching.csv", csv_string(|b| write_switching_csv(&switches, b))?),
    ]))
}

fn search_artifacts(name: &str, res: &SearchResult) -> Result<Vec<Artifact>> {
    let mut cands = String::from("rank,crowding,cost,quality,sequence,thresholds\n");
    for c in &res.candidates {
        let seq: Vec<&str> = c.policy.sequence.iter().map(ModelId::as_str).collect();
        let thr: Vec<String> = c.policy.thresholds.iter().map(f64::to_string).collect();
        writeln!(
            cands,
            "{},{},{},{},{},{}",
            c.rank,
            c.crowding,
            c.calib_cost,
            c.calib_quality,
            seq.join(" > "),
            thr.join(" ")
        )?;
    }
    Ok(vec![
        Artifact::new(&format!("{name}_front.csv"), csv_string(|b| res.front.write_csv(b))?),
        Artifact::new(&format!("{name}_population.csv"), cands),
    ])
}

pub fn chain(cfg: &RunConfig, subsequence: bool) -> Result<Output> {
    let table = load_inputs(cfg)?;
    let pool = full_pool(&table, cfg)?;
    let all = table.all_indices();
    let (name, res) = if subsequence {
        ("subseq", optimize_subsequence(&table, &pool, &all, &cfg.search)?)
    } else {
        ("chain", optimize_fixed_chain(&table, &pool, &all, &cfg.search)?)
    };
    Ok(Output::Files(search_artifacts(name, &res)?))
}

pub fn router(cfg: &RunConfig) -> Result<Output> {
    let table = load_inputs(cfg)?;
    if table.features().is_none() {
        bail!("features: the router needs a feature file");
    }
    let mut plan = cfg.plan.clone();
    plan.n_splits = 1;
    let split = make_splits(&table, &plan)?.remove(0);
    let pool = select_nondominated(&table, &split.calib, &cfg.exclude)?;
    let models = fit_router(&table, &pool, &split.calib, cfg.router.reg_strength)?;
    let scale = models.mean_costs.iter().sum::<f64>() / models.mean_costs.len() as f64;
    let w = default_w_grid(scale, cfg.router.w_points);
    let front = router_frontier(&table, &models, &split.test, &w)?;
    let mut text = String::new();
    for ((m, c), cost) in models.models.iter().zip(&models.classifiers).zip(&models.mean_costs) {
        writeln!(text, "## model {m} mean_cost {cost}")?;
        text.push_str(&c.to_text());
    }
    let mut out = vec![
        Artifact::new("router.csv", csv_string(|b| front.write_csv(b))?),
        Artifact::new("router_models.txt", text),
    ];
    if pool.len() >= 2 {
        let pair = ModelPair {
            low: pool.cheapest().model.clone(),
            high: pool.top().model.clone(),
        };
        let emb = embedding_cascade_frontier(&table, &pair, &split.calib, &split.test, cfg.n_tau, cfg.router.reg_strength)?;
        out.push(Artifact::new("embedding_cascade.csv", csv_string(|b| emb.write_csv(b))?));
    }
    Ok(Output::Files(out))
}

pub fn diagnose(cfg: &RunConfig, bins: usize) -> Result<Output> {
    let table = load_inputs(cfg)?;
    let pool = full_pool(&table, cfg)?;
    let all = table.all_indices();
    let mut s = String::from("table,row,column,value\n");
    let mut rhos = Vec::new();
    for pair in valid_pairs(&pool) {
        let label = format!("{}/{}", pair.low, pair.high);
        let curve = benefit_curve(&table, &pair, &all, bins)?;
        for (i, b) in curve.bins.iter().enumerate() {
            for (col, v) in [
                ("score_lo", b.score_lo),
                ("score_hi", b.score_hi),
                ("mass", b.mass),
                ("m_low", b.m_low),
                ("m_high", b.m_high),
                ("benefit", b.benefit),
                ("mean_cost_high", b.mean_cost_high),
            ] {
                writeln!(s, "benefit_bin,{label}#{i},{col},{v}")?;
            }
        }
        writeln!(s, "benefit,{label},dominance_fraction,{}", dominance_fraction(&curve))?;
        writeln!(s, "benefit,{label},decreasing_fraction,{}", decreasing_fraction(&curve))?;
        if let Some(a) = benefit_auroc(&table, &pair, &all)? {
            writeln!(s, "benefit,{label},auroc,{a}")?;
        }
        let c = cost_score_spearman(&table, &pair, &all)?;
        writeln!(s, "spearman,{label},rho,{}", c.rho)?;
        writeln!(s, "spearman,{label},degenerate,{}", c.degenerate as u8)?;
        if !c.degenerate {
            rhos.push(c.rho);
        }
    }
    if let Some(sum) = summarize_spearman(&rhos) {
        writeln!(s, "spearman_summary,all,median_abs,{}", sum.median_abs)?;
        writeln!(s, "spearman_summary,all,p90_abs,{}", sum.p90_abs)?;
        writeln!(s, "spearman_summary,all,max_abs,{}", sum.max_abs)?;
        writeln!(s, "spearman_summary,all,share_below_020,{}", sum.share_below_020)?;
    }
    Ok(Output::Files(vec![Artifact::new("diagnostics.csv", s)]))
}

pub fn synth(cfg: &RunConfig, preset: &str, n: usize, budget: Option<f64>) -> Result<Output> {
    let spec = SynthSpec::preset(preset, n, cfg.plan.seed).map_err(|e| anyhow!("preset: {e}"))?;
    let table = synth_generate(&spec)?;
    let mut out = vec![Artifact::new("synth_table.csv", csv_string(|b| table.write_csv(b))?)];
    let mut r = String::new();
    writeln!(r, "preset: {preset}")?;
    writeln!(r, "n: {n}")?;
    writeln!(r, "seed: {}", cfg.plan.seed)?;
    let costs: Vec<f64> = spec.models.iter().map(|m| m.cost).collect();
    if spec.models.len() == 2 {
        let b = budget.unwrap_or(costs[0] + costs[1] / 2.0);
        match analytic_frontier(&spec, &tau_grid(500)) {
            Ok(f) => {
                let c = verify_concavity(&f);
                writeln!(r, "concavity_violation: {}", c.max_violation)?;
                if let Some(at) = c.at_cost {
                    writeln!(r, "concavity_violation_cost: {at}")?;
                }
                if let Some(w) = verify_mixture_gain(&spec, 400)? {
                    writeln!(r, "mixture_margin: {}", w.margin)?;
                }
                if let Some(w) = verify_mixture_gain(&spec, 400)?.filter(|w| w.margin > 0.0) {
                    writeln!(r, "mixture_tau_a: {}", w.tau_a)?;
                    writeln!(r, "mixture_tau_b: {}", w.tau_b)?;
                    writeln!(r, "mixture_alpha: {}", w.alpha)?;
                    writeln!(r, "mixture_cost: {}", w.cost)?;
                }
                let foc = verify_foc(&spec, b, 1e-4)?;
                writeln!(r, "foc_budget: {b}")?;
                writeln!(r, "foc_tau: {}", foc.tau)?;
                writeln!(r, "foc_boundary: {}", foc.boundary)?;
                if let Some(x) = foc.residual {
                    writeln!(r, "foc_residual: {x}")?;
                }
                if let Some(x) = foc.reciprocity_error {
                    writeln!(r, "reciprocity_error: {x}")?;
                }
                out.push(Artifact::new("analytic_frontier.csv", csv_string(|b| f.write_csv(b))?));
            }
            Err(e) => writeln!(r, "analytic: {e}")?,
        }
        let ids = table.models();
        let a = affine_cost_check(&table, (&ids[0], &ids[1]), &table.all_indices(), 20)?;
        writeln!(r, "affine_cost_max_z: {}", a.max_z)?;
        writeln!(r, "affine_cost_passes: {}", a.passes)?;
    } else if spec.models.len() == 3 {
        let b = budget.unwrap_or(costs[0] + 0.45 * (costs[1] + costs[2]));
        let s = verify_stage_equalization(&spec, b)?;
        writeln!(r, "stage_budget: {b}")?;
        writeln!(r, "stage_tau: {:?}", s.tau)?;
        writeln!(r, "stage_cost: {}", s.cost)?;
        writeln!(r, "stage_quality: {}", s.quality)?;
        for m in s.marginals.active() {
            writeln!(r, "stage_{}_lambda: {}", m.stage, m.lambda)?;
        }
        if let Some(x) = s.relative_spread {
            writeln!(r, "stage_relative_spread: {x}")?;
        }
    }
    out.push(Artifact::new("synth_report.txt", r));
    Ok(Output::Files(out))
}

pub fn experiment(cfg: &RunConfig, calibration: bool, grid: bool) -> Result<Output> {
    let table = load_inputs(cfg)?;
    let ecfg = cfg.experiment();
    let report = run_experiment(&table, &ecfg)?;
    let mut extra = Vec::new();
    if calibration {
        let rows = sensitivity_calibration(&table, &ecfg, &[0.5, 0.7, 0.8, 0.9])?;
        let mut s = String::from("fraction,delta,bwr\n");
        for r in rows {
            writeln!(s, "{},{},{}", r.fraction, opt(r.delta), opt(r.bwr))?;
        }
        extra.push(Artifact::new("sensitivity_calibration.csv", s));
    }
    if grid {
        let rows = sensitivity_grid(&table, &ecfg, &[50, 100, 200, 500], 500)?;
        let mut s = String::from("n_tau,mean_abs,max_abs\n");
        for r in rows {
            writeln!(s, "{},{},{}", r.n_tau, r.mean_abs, r.max_abs)?;
        }
        extra.push(Artifact::new("sensitivity_grid.csv", s));
    }
    Ok(Output::Experiment(Box::new(report), extra))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}
