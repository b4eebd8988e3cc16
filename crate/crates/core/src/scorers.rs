//! Confidence scores from token probabilities and the logistic ensemble that
//! combines them.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{EvalTable, ModelId, TokenLog};
use crate::error::{Error, Result};
use crate::router::{fit_logreg, LogRegModel};

/// Default top-K depth; shallower lists use what they have.
pub const DEFAULT_K: usize = 15;

fn nonempty(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        Err(Error::Domain("empty token probability sequence".into()))
    } else {
        Ok(())
    }
}

/// Geometric mean of the generated-token probabilities.
pub fn lnsp(token_probs: &[f64]) -> Result<f64> {
    nonempty(token_probs)?;
    if let [p] = token_probs {
        return Ok(*p);
    }
    let mean_log = token_probs.iter().map(|p| p.ln()).sum::<f64>() / token_probs.len() as f64;
    Ok(mean_log.exp().clamp(0.0, 1.0))
}

/// Probability of the least confident generated token.
pub fn mtp(token_probs: &[f64]) -> Result<f64> {
    nonempty(token_probs)?;
    Ok(token_probs.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Top-`k` entries of one position, sorted descending and renormalized.
fn renormalized(list: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = list.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v.truncate(k);
    if v.len() < 2 {
        return Err(Error::Domain("top-K position has fewer than 2 entries".into()));
    }
    let total: f64 = v.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("top-K position has zero mass".into()));
    }
    Ok(v.into_iter().map(|p| p / total).collect())
}

/// Mean gap between the two most likely renormalized candidates.
pub fn prob_margin(topk_probs: &[Vec<f64>]) -> Result<f64> {
    if topk_probs.is_empty() {
        return Err(Error::Domain("no top-K positions".into()));
    }
    let mut acc = 0.0;
    for list in topk_probs {
        let p = renormalized(list, usize::MAX)?;
        acc += p[0] - p[1];
    }
    Ok((acc / topk_probs.len() as f64).clamp(0.0, 1.0))
}

/// 1 - H / ln(K') for one position, K' the number of entries used.
fn negentropy(list: &[f64], k: usize) -> Result<f64> {
    let p = renormalized(list, k)?;
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    Ok((1.0 - h / (p.len() as f64).ln()).clamp(0.0, 1.0))
}

fn negentropies(topk_probs: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::Domain(format!("K = {k} must be at least 2")));
    }
    if topk_probs.is_empty() {
        return Err(Error::Domain("no top-K positions".into()));
    }
    topk_probs.iter().map(|l| negentropy(l, k)).collect()
}

/// Mean normalized negentropy over positions.
pub fn atn(topk_probs: &[Vec<f64>], k: usize) -> Result<f64> {
    let v = negentropies(topk_probs, k)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Smallest per-position normalized negentropy.
pub fn mtn(topk_probs: &[Vec<f64>], k: usize) -> Result<f64> {
    let v = negentropies(topk_probs, k)?;
    Ok(v.into_iter().fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub lnsp: f64,
    pub mtp: f64,
    pub prob_margin: f64,
    pub atn: f64,
    pub mtn: f64,
}

impl ScoreVector {
    pub fn compute(log: &TokenLog, k: usize) -> Result<Self> {
        Ok(ScoreVector {
            lnsp: lnsp(&log.token_probs)?,
            mtp: mtp(&log.token_probs)?,
            prob_margin: prob_margin(&log.topk_probs)?,
            atn: atn(&log.topk_probs, k)?,
            mtn: mtn(&log.topk_probs, k)?,
        })
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.lnsp, self.mtp, self.prob_margin, self.atn, self.mtn]
    }

    pub fn get(&self, kind: ScorerKind) -> f64 {
        match kind {
            ScorerKind::Lnsp => self.lnsp,
            ScorerKind::Mtp => self.mtp,
            ScorerKind::ProbMargin => self.prob_margin,
            ScorerKind::Atn => self.atn,
            ScorerKind::Mtn => self.mtn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Lnsp,
    Mtp,
    ProbMargin,
    #[default]
    Atn,
    Mtn,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 5] = [
        ScorerKind::Lnsp,
        ScorerKind::Mtp,
        ScorerKind::ProbMargin,
        ScorerKind::Atn,
        ScorerKind::Mtn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::Lnsp => "lnsp",
            ScorerKind::Mtp => "mtp",
            ScorerKind::ProbMargin => "prob_margin",
            ScorerKind::Atn => "atn",
            ScorerKind::Mtn => "mtn",
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScorerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown scorer `{s}`")))
    }
}

/// One scored response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub query_id: String,
    pub model: ModelId,
    pub score: f64,
}

pub fn score_logs(logs: &[TokenLog], kind: ScorerKind, k: usize) -> Result<Vec<ScoreRow>> {
    logs.iter()
        .map(|log| {
            let v = ScoreVector::compute(log, k).map_err(|e| {
                Error::Domain(format!("{} / {}: {e}", log.query_id, log.model))
            })?;
            Ok(ScoreRow {
                query_id: log.query_id.clone(),
                model: log.model.clone(),
                score: v.get(kind),
            })
        })
        .collect()
}

/// Writes `query_id,model,score`.
pub fn write_score_csv<W: Write>(rows: &[ScoreRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Overwrites table scores with `rows`; cells without a row keep theirs.
pub fn merge_scores(table: &EvalTable, rows: &[ScoreRow]) -> Result<EvalTable> {
    let qpos: std::collections::HashMap<&str, usize> = table
        .queries()
        .iter()
        .enumerate()
        .map(|(i, q)| (q.as_str(), i))
        .collect();
    let mut out = table.clone();
    for m in 0..table.n_models() {
        let mine: Vec<&ScoreRow> = rows.iter().filter(|r| r.model == table.models()[m]).collect();
        if mine.is_empty() {
            continue;
        }
        let mut scores = table.scores(m).to_vec();
        for r in mine {
            let q = *qpos
                .get(r.query_id.as_str())
                .ok_or_else(|| Error::Validation(format!("unknown query `{}`", r.query_id)))?;
            scores[q] = Some(r.score);
        }
        out = out.with_scores(m, scores)?;
    }
    Ok(out)
}

/// Logistic model of cheap-model correctness on the five base scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerEnsemble {
    pub model: LogRegModel,
}

impl ScorerEnsemble {
    pub fn predict(&self, v: &ScoreVector) -> f64 {
        self.model.predict(&v.to_vec())
    }
}

pub fn fit_scorer_ensemble(
    vectors: &[ScoreVector],
    cheap_correct: &[bool],
    reg_strength: f64,
) -> Result<ScorerEnsemble> {
    let pos = cheap_correct.iter().filter(|&&l| l).count();
    if pos == 0 || pos == cheap_correct.len() {
        return Err(Error::DegenerateFit(
            "ensemble labels contain a single class".into(),
        ));
    }
    let x: Vec<Vec<f64>> = vectors.iter().map(|v| v.to_vec()).collect();
    Ok(ScorerEnsemble {
        model: fit_logreg(&x, cheap_correct, reg_strength)?.model,
    })
}
