//! Non-dominated model pool and the cost-ordered pair set, both chosen from
//! calibration rows only.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::data::{EvalTable, ModelId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolMember {
    pub model: ModelId,
    pub mean_cost: f64,
    pub mean_quality: f64,
}

/// Why a model was left out of the pool.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DropReason {
    Excluded,
    /// Another model is no more expensive and at least as accurate.
    DominatedBy(ModelId),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedModel {
    pub model: ModelId,
    pub mean_cost: f64,
    pub mean_quality: f64,
    pub reason: DropReason,
}

/// Models strictly increasing in both mean cost and mean quality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelPool {
    pub members: Vec<PoolMember>,
    pub dropped: Vec<DroppedModel>,
}

impl ModelPool {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn ids(&self) -> Vec<ModelId> {
        self.members.iter().map(|m| m.model.clone()).collect()
    }

    pub fn cheapest(&self) -> &PoolMember {
        &self.members[0]
    }

    /// Highest-quality (and most expensive) member.
    pub fn top(&self) -> &PoolMember {
        self.members.last().expect("non-empty pool")
    }

    pub fn member(&self, id: &ModelId) -> Option<&PoolMember> {
        self.members.iter().find(|m| &m.model == id)
    }
}

/// Cost-ordered pair of pool members.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ModelPair {
    pub low: ModelId,
    pub high: ModelId,
}

/// Picks the non-dominated models by calibration means. At equal mean cost
/// the higher quality survives; at equal quality the cheaper one does.
pub fn select_nondominated(
    table: &EvalTable,
    calib: &[usize],
    exclude: &[ModelId],
) -> Result<ModelPool> {
    if calib.is_empty() {
        return Err(Error::Validation("calibration set is empty".into()));
    }
    let excluded: BTreeSet<&ModelId> = exclude.iter().collect();
    let mut dropped = Vec::new();
    let mut candidates = Vec::new();
    for (m, id) in table.models().iter().enumerate() {
        let stats = PoolMember {
            model: id.clone(),
            mean_cost: table.mean_cost(m, calib),
            mean_quality: table.mean_quality(m, calib),
        };
        if excluded.contains(id) {
            dropped.push(DroppedModel {
                model: stats.model,
                mean_cost: stats.mean_cost,
                mean_quality: stats.mean_quality,
                reason: DropReason::Excluded,
            });
        } else {
            candidates.push(stats);
        }
    }
    candidates.sort_by(|a, b| {
        a.mean_cost
            .total_cmp(&b.mean_cost)
            .then_with(|| b.mean_quality.total_cmp(&a.mean_quality))
            .then_with(|| a.model.cmp(&b.model))
    });
    let mut members: Vec<PoolMember> = Vec::new();
    for c in candidates {
        match members.last() {
            Some(last) if c.mean_quality <= last.mean_quality => dropped.push(DroppedModel {
                reason: DropReason::DominatedBy(last.model.clone()),
                model: c.model,
                mean_cost: c.mean_cost,
                mean_quality: c.mean_quality,
            }),
            _ => members.push(c),
        }
    }
    if members.is_empty() {
        return Err(Error::Validation("every model was excluded".into()));
    }
    Ok(ModelPool { members, dropped })
}

/// All (i, j), i < j, in pool order.
pub fn valid_pairs(pool: &ModelPool) -> Vec<ModelPair> {
    let ids = pool.ids();
    let mut out = Vec::new();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            out.push(ModelPair {
                low: ids[i].clone(),
                high: ids[j].clone(),
            });
        }
    }
    out
}
