//! Ingestion and validation of per-query evaluation data.
//!
//! An [`EvalTable`] is a dense query × model grid: every model carries a
//! record for every query. Tables are immutable once built and are shared
//! freely across worker threads.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque model identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelId(String);

impl ModelId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::Validation("model identifier must be non-empty".into()));
        }
        Ok(ModelId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ModelId {
    /// Panics on an empty string; use [`ModelId::new`] for untrusted input.
    fn from(s: &str) -> Self {
        ModelId::new(s).expect("empty model identifier")
    }
}

/// One (query, model) cell of an evaluation table.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub query_id: String,
    pub model: ModelId,
    /// Raw USD per query.
    pub cost: f64,
    pub quality: f64,
    pub score: Option<f64>,
    pub features: Option<Vec<f64>>,
}

impl QueryRecord {
    fn validate(&self) -> Result<()> {
        if !(self.cost.is_finite() && self.cost >= 0.0) {
            return Err(Error::Validation(format!(
                "cost {} for ({}, {}) must be finite and non-negative",
                self.cost, self.query_id, self.model
            )));
        }
        if !(0.0..=1.0).contains(&self.quality) {
            return Err(Error::Validation(format!(
                "quality {} for ({}, {}) outside [0, 1]",
                self.quality, self.query_id, self.model
            )));
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Validation(format!(
                    "score {} for ({}, {}) outside [0, 1]",
                    s, self.query_id, self.model
                )));
            }
        }
        Ok(())
    }
}

/// Header names used when reading an evaluation table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub query_id: String,
    pub model: String,
    pub cost: String,
    pub quality: String,
    pub score: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            query_id: "query_id".into(),
            model: "model".into(),
            cost: "cost".into(),
            quality: "quality".into(),
            score: "score".into(),
        }
    }
}

/// Dense query × model grid of evaluation records.
///
/// Columns are stored per model so that per-model slices can be scanned
/// without indirection.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTable {
    queries: Vec<String>,
    models: Vec<ModelId>,
    cost: Vec<Vec<f64>>,
    quality: Vec<Vec<f64>>,
    score: Vec<Vec<Option<f64>>>,
    features: Option<Vec<Vec<f64>>>,
}

impl EvalTable {
    /// Builds a table from records in any order. Queries and models keep
    /// their order of first appearance.
    pub fn from_records(records: impl IntoIterator<Item = QueryRecord>) -> Result<Self> {
        let mut queries: Vec<String> = Vec::new();
        let mut query_pos: HashMap<String, usize> = HashMap::new();
        let mut models: Vec<ModelId> = Vec::new();
        let mut model_pos: HashMap<ModelId, usize> = HashMap::new();
        let mut cells: HashMap<(usize, usize), QueryRecord> = HashMap::new();
        let mut feature_dim: Option<usize> = None;

        for rec in records {
            rec.validate()?;
            if let Some(f) = &rec.features {
                match feature_dim {
                    None => feature_dim = Some(f.len()),
                    Some(d) if d != f.len() => {
                        return Err(Error::Validation(format!(
                            "feature length {} for query {} differs from table width {}",
                            f.len(),
                            rec.query_id,
                            d
                        )))
                    }
                    _ => {}
                }
            }
            let q = *query_pos.entry(rec.query_id.clone()).or_insert_with(|| {
                queries.push(rec.query_id.clone());
                queries.len() - 1
            });
            let m = *model_pos.entry(rec.model.clone()).or_insert_with(|| {
                models.push(rec.model.clone());
                models.len() - 1
            });
            if cells.contains_key(&(m, q)) {
                return Err(Error::Integrity {
                    message: format!("duplicate record for query `{}`", rec.query_id),
                    models: vec![rec.model.to_string()],
                });
            }
            cells.insert((m, q), rec);
        }

        let nq = queries.len();
        let mut ragged = Vec::new();
        for (m, id) in models.iter().enumerate() {
            if (0..nq).any(|q| !cells.contains_key(&(m, q))) {
                ragged.push(id.to_string());
            }
        }
        if !ragged.is_empty() {
            return Err(Error::Integrity {
                message: "models do not share an identical query set".into(),
                models: ragged,
            });
        }

        let nm = models.len();
        let mut cost = vec![vec![0.0; nq]; nm];
        let mut quality = vec![vec![0.0; nq]; nm];
        let mut score = vec![vec![None; nq]; nm];
        let mut features: Option<Vec<Vec<f64>>> = feature_dim.map(|_| vec![Vec::new(); nq]);
        for ((m, q), rec) in cells {
            cost[m][q] = rec.cost;
            quality[m][q] = rec.quality;
            score[m][q] = rec.score;
            if let (Some(feats), Some(f)) = (features.as_mut(), rec.features) {
                feats[q] = f;
            }
        }
        if let Some(feats) = &features {
            if let Some(q) = feats.iter().position(|f| f.is_empty()) {
                return Err(Error::Validation(format!(
                    "query {} lacks a feature vector while others carry one",
                    queries[q]
                )));
            }
        }
        Ok(EvalTable {
            queries,
            models,
            cost,
            quality,
            score,
            features,
        })
    }

    pub fn n_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn queries(&self) -> &[String] {
        &self.queries
    }

    pub fn models(&self) -> &[ModelId] {
        &self.models
    }

    pub fn model_index(&self, id: &ModelId) -> Result<usize> {
        self.models
            .iter()
            .position(|m| m == id)
            .ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.n_queries()).collect()
    }

    pub fn costs(&self, model: usize) -> &[f64] {
        &self.cost[model]
    }

    pub fn qualities(&self, model: usize) -> &[f64] {
        &self.quality[model]
    }

    pub fn scores(&self, model: usize) -> &[Option<f64>] {
        &self.score[model]
    }

    pub fn features(&self) -> Option<&[Vec<f64>]> {
        self.features.as_deref()
    }

    pub fn mean_cost(&self, model: usize, index: &[usize]) -> f64 {
        mean_over(&self.cost[model], index)
    }

    pub fn mean_quality(&self, model: usize, index: &[usize]) -> f64 {
        mean_over(&self.quality[model], index)
    }

    /// Returns a copy with one model's scores replaced.
    pub fn with_scores(&self, model: usize, scores: Vec<Option<f64>>) -> Result<Self> {
        if scores.len() != self.n_queries() {
            return Err(Error::Validation(format!(
                "replacement score vector has length {}, table has {} queries",
                scores.len(),
                self.n_queries()
            )));
        }
        if let Some(s) = scores.iter().flatten().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Validation(format!("score {s} outside [0, 1]")));
        }
        let mut out = self.clone();
        out.score[model] = scores;
        Ok(out)
    }

    /// Attaches per-query feature vectors. Every table query must be present.
    pub fn with_features(&self, features: &FeatureTable) -> Result<Self> {
        let mut rows = Vec::with_capacity(self.n_queries());
        let mut missing = Vec::new();
        for q in &self.queries {
            match features.get(q) {
                Some(f) => rows.push(f.to_vec()),
                None => missing.push(q.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Validation(format!(
                "feature file lacks {} table queries (first: {})",
                missing.len(),
                missing[0]
            )));
        }
        let mut out = self.clone();
        out.features = Some(rows);
        Ok(out)
    }

    /// Restricts the table to a subset of models, in the given order.
    pub fn select_models(&self, models: &[ModelId]) -> Result<Self> {
        let idx: Vec<usize> = models
            .iter()
            .map(|m| self.model_index(m))
            .collect::<Result<_>>()?;
        Ok(EvalTable {
            queries: self.queries.clone(),
            models: models.to_vec(),
            cost: idx.iter().map(|&m| self.cost[m].clone()).collect(),
            quality: idx.iter().map(|&m| self.quality[m].clone()).collect(),
            score: idx.iter().map(|&m| self.score[m].clone()).collect(),
            features: self.features.clone(),
        })
    }

    /// Records in query-major order.
    pub fn records(&self) -> impl Iterator<Item = QueryRecord> + '_ {
        (0..self.n_queries()).flat_map(move |q| {
            (0..self.n_models()).map(move |m| QueryRecord {
                query_id: self.queries[q].clone(),
                model: self.models[m].clone(),
                cost: self.cost[m][q],
                quality: self.quality[m][q],
                score: self.score[m][q],
                features: self.features.as_ref().map(|f| f[q].clone()),
            })
        })
    }

    /// Writes the table as `query_id,model,cost,quality,score`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["query_id", "model", "cost", "quality", "score"])?;
        for rec in self.records() {
            w.write_record([
                rec.query_id.as_str(),
                rec.model.as_str(),
                &rec.cost.to_string(),
                &rec.quality.to_string(),
                &rec.score.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

pub(crate) fn mean_over(values: &[f64], index: &[usize]) -> f64 {
    if index.is_empty() {
        return f64::NAN;
    }
    index.iter().map(|&i| values[i]).sum::<f64>() / index.len() as f64
}

/// Reads an evaluation table from a delimited file with a header row.
pub fn load_eval_table(path: impl AsRef<Path>, schema: &ColumnMapping) -> Result<EvalTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_eval_table(file, schema)
}

pub fn read_eval_table<R: Read>(reader: R, schema: &ColumnMapping) -> Result<EvalTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        col(name).ok_or_else(|| Error::Schema(format!("missing required column `{name}`")))
    };
    let qi = required(&schema.query_id)?;
    let mi = required(&schema.model)?;
    let ci = required(&schema.cost)?;
    let ui = required(&schema.quality)?;
    let si = col(&schema.score);

    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result?;
        let line = row + 2;
        let num = |idx: usize, name: &str| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column `{name}`: `{raw}` is not a number"),
            })
        };
        let score = match si.and_then(|i| rec.get(i)) {
            None | Some("") => None,
            Some(_) => Some(num(si.unwrap(), &schema.score)?),
        };
        records.push(QueryRecord {
            query_id: rec.get(qi).unwrap_or("").to_string(),
            model: ModelId::new(rec.get(mi).unwrap_or("")).map_err(|_| Error::Parse {
                line,
                message: "empty model identifier".into(),
            })?,
            cost: num(ci, &schema.cost)?,
            quality: num(ui, &schema.quality)?,
            score,
            features: None,
        });
    }
    EvalTable::from_records(records)
}

/// Generated-token probabilities for one (query, model) response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLog {
    pub query_id: String,
    pub model: ModelId,
    pub token_probs: Vec<f64>,
    pub topk_probs: Vec<Vec<f64>>,
}

/// Parsed token logs plus the number of top-K lists that had to be re-sorted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenLogBatch {
    pub logs: Vec<TokenLog>,
    pub resorted: usize,
}

pub fn load_token_logs(path: impl AsRef<Path>) -> Result<TokenLogBatch> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_token_logs(BufReader::new(file))
}

pub fn read_token_logs<R: BufRead>(reader: R) -> Result<TokenLogBatch> {
    let mut batch = TokenLogBatch::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<token log>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut log: TokenLog = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let bad_prob = |p: f64| !(p > 0.0 && p <= 1.0);
        if log.token_probs.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "token_probs is empty".into(),
            });
        }
        if let Some(p) = log.token_probs.iter().find(|&&p| bad_prob(p)) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("token probability {p} outside (0, 1]"),
            });
        }
        for list in &mut log.topk_probs {
            if list.len() < 2 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "top-K list has fewer than 2 entries".into(),
                });
            }
            if let Some(p) = list.iter().find(|&&p| bad_prob(p)) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("top-K probability {p} outside (0, 1]"),
                });
            }
            if list.windows(2).any(|w| w[0] < w[1]) {
                list.sort_by(|a, b| b.total_cmp(a));
                batch.resorted += 1;
            }
        }
        batch.logs.push(log);
    }
    Ok(batch)
}

/// Per-query feature vectors keyed by query id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    rows: HashMap<String, Vec<f64>>,
    dim: usize,
}

#[derive(Deserialize)]
struct FeatureLine {
    query_id: String,
    features: Vec<f64>,
}

impl FeatureTable {
    pub fn from_rows(rows: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut table = FeatureTable::default();
        let mut first = true;
        for (q, f) in rows {
            if first {
                table.dim = f.len();
                first = false;
            } else if f.len() != table.dim {
                return Err(Error::Validation(format!(
                    "feature vector for {q} has length {}, expected {}",
                    f.len(),
                    table.dim
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("non-finite feature for {q}")));
            }
            if table.rows.insert(q.clone(), f).is_some() {
                return Err(Error::Validation(format!("duplicate feature row for {q}")));
            }
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, query_id: &str) -> Option<&[f64]> {
        self.rows.get(query_id).map(Vec::as_slice)
    }
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: FeatureLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push((row.query_id, row.features));
    }
    FeatureTable::from_rows(rows)
}

/// USD per million input and output tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Price {
    pub input: f64,
    pub output: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    prices: BTreeMap<String, Price>,
}

impl PriceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: impl Into<String>, price: Price) -> Result<()> {
        if !(price.input >= 0.0 && price.output >= 0.0) {
            return Err(Error::Validation("prices must be non-negative".into()));
        }
        self.prices.insert(model.into(), price);
        Ok(())
    }

    pub fn get(&self, model: &str) -> Option<Price> {
        self.prices.get(model).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Price)> {
        self.prices.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Published per-million-token list prices for the reference model pool.
    pub fn reference() -> Self {
        let mut t = PriceTable::new();
        for (name, input, output) in [
            ("Llama 3.1-8B", 0.10, 0.10),
            ("GPT-oss-20B", 0.05, 0.20),
            ("GPT-4o mini", 0.15, 0.60),
            ("Qwen2.5-7B", 0.30, 0.30),
            ("Llama 3.3-70B", 0.88, 0.88),
            ("MiniMax-M2.7", 0.30, 1.20),
            ("DeepSeek-V3", 0.60, 1.70),
            ("GPT-4o", 2.50, 10.00),
        ] {
            t.insert(name, Price { input, output }).expect("static prices");
        }
        t
    }

    /// Reads `model,input,output` rows.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut t = PriceTable::new();
        for row in rdr.deserialize() {
            let (model, input, output): (String, f64, f64) = row?;
            t.insert(model, Price { input, output })?;
        }
        Ok(t)
    }
}

pub fn cost_from_tokens(input_tokens: u64, output_tokens: u64, price: Price) -> f64 {
    input_tokens as f64 * price.input / 1e6 + output_tokens as f64 * price.output / 1e6
}

/// Set of distinct query ids, used by callers that merge side files.
#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const T5_CSV: &str = "query_id,model,cost,quality,score
q1,A,1,1,0.9
q1,B,10,1,
q2,A,1,0,0.2
q2,B,10,1,
q3,A,1,1,0.8
q3,B,10,1,
q4,A,1,0,0.4
q4,B,10,1,
q5,A,1,0,0.6
q5,B,10,0,
";

    #[test]
    fn loads_dense_table() {
        let t = read_eval_table(T5_CSV.as_bytes(), &ColumnMapping::default()).unwrap();
        assert_eq!(t.n_queries(), 5);
        assert_eq!(t.n_models(), 2);
        assert_eq!(t.records().count(), 10);
        assert_eq!(t.scores(1)[0], None);
        assert_relative_eq!(t.mean_quality(0, &t.all_indices()), 0.4);
    }

    #[test]
    fn ragged_table_names_model() {
        let csv = T5_CSV.replace("q3,B,10,1,\n", "");
        let err = read_eval_table(csv.as_bytes(), &ColumnMapping::default()).unwrap_err();
        match err {
            Error::Integrity { models, .. } => assert_eq!(models, vec!["B".to_string()]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn quality_out_of_range_rejected() {
        let csv = T5_CSV.replace("q1,A,1,1,0.9", "q1,A,1,1.2,0.9");
        let err = read_eval_table(csv.as_bytes(), &ColumnMapping::default()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn duplicate_cell_rejected() {
        let csv = format!("{T5_CSV}q1,A,1,1,0.9\n");
        let err = read_eval_table(csv.as_bytes(), &ColumnMapping::default()).unwrap_err();
        assert!(matches!(err, Error::Integrity { .. }));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let csv = "query_id,model,quality\nq1,A,1\n";
        let err = read_eval_table(csv.as_bytes(), &ColumnMapping::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn custom_column_mapping() {
        let csv = "id,llm,usd,correct\nq1,A,0.5,1\nq2,A,0.5,0\n";
        let schema = ColumnMapping {
            query_id: "id".into(),
            model: "llm".into(),
            cost: "usd".into(),
            quality: "correct".into(),
            score: "conf".into(),
        };
        let t = read_eval_table(csv.as_bytes(), &schema).unwrap();
        assert_eq!(t.n_queries(), 2);
        assert!(t.scores(0).iter().all(Option::is_none));
    }

    #[test]
    fn csv_round_trip_is_identical() {
        let t = read_eval_table(T5_CSV.as_bytes(), &ColumnMapping::default()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = read_eval_table(buf.as_slice(), &ColumnMapping::default()).unwrap();
        assert_eq!(t, back);
        let mut buf2 = Vec::new();
        back.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn token_logs_parse_and_resort() {
        let one = r#"{"query_id":"q1","model":"A","token_probs":[0.5,0.5],"topk_probs":[[0.5,0.3]]}"#;
        let batch = read_token_logs(one.as_bytes()).unwrap();
        assert_eq!(batch.logs.len(), 1);
        assert_eq!(batch.logs[0].token_probs.len(), 2);
        assert_eq!(batch.resorted, 0);

        let asc = r#"{"query_id":"q1","model":"A","token_probs":[0.9],"topk_probs":[[0.1,0.2,0.7]]}"#;
        let batch = read_token_logs(asc.as_bytes()).unwrap();
        assert_eq!(batch.resorted, 1);
        assert_eq!(batch.logs[0].topk_probs[0], vec![0.7, 0.2, 0.1]);

        assert!(read_token_logs("".as_bytes()).unwrap().logs.is_empty());
    }

    #[test]
    fn token_log_bad_probability_reports_line() {
        let text = concat!(
            r#"{"query_id":"q1","model":"A","token_probs":[0.5],"topk_probs":[]}"#,
            "\n",
            r#"{"query_id":"q2","model":"A","token_probs":[1.5],"topk_probs":[]}"#,
        );
        match read_token_logs(text.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn token_cost_matches_reference_prices() {
        let prices = PriceTable::reference();
        let llama = prices.get("Llama 3.1-8B").unwrap();
        assert_relative_eq!(cost_from_tokens(1_000_000, 1_000_000, llama), 0.20, epsilon = 1e-12);
        let gpt4o = prices.get("GPT-4o").unwrap();
        assert_relative_eq!(cost_from_tokens(1_000_000, 0, gpt4o), 2.50, epsilon = 1e-12);
        assert_eq!(cost_from_tokens(0, 0, gpt4o), 0.0);
    }

    #[test]
    fn features_attach_by_query_id() {
        let t = read_eval_table(T5_CSV.as_bytes(), &ColumnMapping::default()).unwrap();
        let rows = t.queries().iter().enumerate().map(|(i, q)| (q.clone(), vec![i as f64]));
        let ft = FeatureTable::from_rows(rows).unwrap();
        let t2 = t.with_features(&ft).unwrap();
        assert_eq!(t2.features().unwrap()[3], vec![3.0]);
        let partial = FeatureTable::from_rows([("q1".to_string(), vec![0.0])]).unwrap();
        assert!(t.with_features(&partial).is_err());
    }
}
