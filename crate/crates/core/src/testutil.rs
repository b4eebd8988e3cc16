//! Small fixed tables shared by unit tests.

use crate::data::{EvalTable, ModelId, QueryRecord};

fn rec(q: usize, model: &str, cost: f64, quality: f64, score: Option<f64>) -> QueryRecord {
    QueryRecord {
        query_id: format!("q{}", q + 1),
        model: ModelId::from(model),
        cost,
        quality,
        score,
        features: None,
    }
}

const A_QUALITY: [f64; 5] = [1.0, 0.0, 1.0, 0.0, 0.0];
const A_SCORES: [f64; 5] = [0.9, 0.2, 0.8, 0.4, 0.6];
const B_QUALITY: [f64; 5] = [1.0, 1.0, 1.0, 1.0, 0.0];
const C_QUALITY: [f64; 5] = [1.0, 1.0, 1.0, 0.0, 0.0];

/// Five queries; A costs 1, B costs 10.
pub fn t5() -> EvalTable {
    let mut recs = Vec::new();
    for q in 0..5 {
        recs.push(rec(q, "A", 1.0, A_QUALITY[q], Some(A_SCORES[q])));
        recs.push(rec(q, "B", 10.0, B_QUALITY[q], None));
    }
    EvalTable::from_records(recs).unwrap()
}

/// T5 plus model C (cost 3) which carries A's scores.
pub fn t5_with_c() -> EvalTable {
    let mut recs = Vec::new();
    for q in 0..5 {
        recs.push(rec(q, "A", 1.0, A_QUALITY[q], Some(A_SCORES[q])));
        recs.push(rec(q, "B", 10.0, B_QUALITY[q], None));
        recs.push(rec(q, "C", 3.0, C_QUALITY[q], Some(A_SCORES[q])));
    }
    EvalTable::from_records(recs).unwrap()
}
