//! Multi-objective search over cascade thresholds and model subsequences:
//! NSGA-II and uniform random search, both scored on calibration rows.
//!
//! A genome spans the whole pool: one inclusion bit and one threshold gene
//! per model. Only included models form the cascade and the terminal
//! model's threshold is inert.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{evaluate_indices, pareto_filter, CascadePolicy, Frontier, FrontierPoint};
use crate::data::EvalTable;
use crate::error::{Error, Result};
use crate::pool::ModelPool;

/// Threshold resolution used for evaluation and caching.
const QUANT: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Nsga2,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub trials: usize,
    pub population: usize,
    pub max_chain_length: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub mutation_sigma: f64,
    /// Inclusion-bit flip probability; 1/k when unset.
    pub bit_flip: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            trials: 2000,
            population: 100,
            max_chain_length: 4,
            seed: 0,
            optimizer: Optimizer::Nsga2,
            mutation_sigma: 0.1,
            bit_flip: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Validation("population must be at least 2".into()));
        }
        if self.population > self.trials {
            return Err(Error::Validation(format!(
                "population {} exceeds trials {}",
                self.population, self.trials
            )));
        }
        if self.max_chain_length < 2 {
            return Err(Error::Validation("max_chain_length must be at least 2".into()));
        }
        if !(self.mutation_sigma >= 0.0) {
            return Err(Error::Validation("mutation_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    pub include: Vec<bool>,
    pub thresholds: Vec<f64>,
}

/// What the genome may express.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Space {
    /// Pool size.
    pub k: usize,
    /// Longest allowed cascade.
    pub cap: usize,
    /// Every pool model is always included.
    pub fixed_chain: bool,
}

type Key = (Vec<usize>, Vec<u32>);

fn quantize(t: f64) -> u32 {
    (t.clamp(0.0, 1.0) * QUANT).round() as u32
}

impl Space {
    pub fn repair(&self, g: &mut Genome, rng: &mut impl Rng) {
        for t in &mut g.thresholds {
            *t = t.clamp(0.0, 1.0);
        }
        if self.fixed_chain {
            g.include.iter_mut().for_each(|b| *b = true);
            return;
        }
        if g.include.iter().filter(|&&b| b).count() < 2 {
            g.include[0] = true;
            g.include[self.k - 1] = true;
        }
        let mut on: Vec<usize> = (0..self.k).filter(|&i| g.include[i]).collect();
        while on.len() > self.cap {
            let drop = on.remove(rng.random_range(0..on.len()));
            g.include[drop] = false;
        }
    }

    /// Pool positions of the cascade and its quantized thresholds.
    pub fn decode(&self, g: &Genome) -> (Vec<usize>, Vec<f64>) {
        let seq: Vec<usize> = (0..self.k).filter(|&i| g.include[i]).collect();
        let thr = seq[..seq.len() - 1]
            .iter()
            .map(|&i| quantize(g.thresholds[i]) as f64 / QUANT)
            .collect();
        (seq, thr)
    }

    fn key(&self, g: &Genome) -> Key {
        let seq: Vec<usize> = (0..self.k).filter(|&i| g.include[i]).collect();
        let thr = seq[..seq.len() - 1]
            .iter()
            .map(|&i| quantize(g.thresholds[i]))
            .collect();
        (seq, thr)
    }

    /// Uniform length, then a uniform subset of that length, then uniform
    /// thresholds.
    pub fn random_genome(&self, rng: &mut impl Rng) -> Genome {
        let mut include = vec![self.fixed_chain; self.k];
        if !self.fixed_chain {
            let len = rng.random_range(2..=self.cap.min(self.k));
            for i in sample(rng, self.k, len) {
                include[i] = true;
            }
        }
        let thresholds = (0..self.k).map(|_| rng.random::<f64>()).collect();
        Genome {
            include,
            thresholds,
        }
    }
}

/// Objective vectors are minimized componentwise.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Fronts of mutually non-dominated indices, best first.
pub fn fast_nondominated_sort(objs: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    let mut fronts = vec![Vec::new()];
    for p in 0..n {
        for q in 0..n {
            if dominates(&objs[p], &objs[q]) {
                dominated_by[p].push(q);
            } else if dominates(&objs[q], &objs[p]) {
                count[p] += 1;
            }
        }
        if count[p] == 0 {
            fronts[0].push(p);
        }
    }
    let mut i = 0;
    while !fronts[i].is_empty() {
        let mut next = Vec::new();
        for &p in &fronts[i] {
            for &q in &dominated_by[p] {
                count[q] -= 1;
                if count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        i += 1;
        fronts.push(next);
    }
    fronts.pop();
    fronts
}

/// Crowding distance of each member of `front` (aligned with it). Extremes
/// of every objective get infinity.
pub fn crowding_distance(objs: &[Vec<f64>], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    let m = objs[front[0]].len();
    for obj in 0..m {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| objs[front[a]][obj].total_cmp(&objs[front[b]][obj]).then(a.cmp(&b)));
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let lo = objs[front[order[0]]][obj];
        let hi = objs[front[order[n - 1]]][obj];
        if hi > lo {
            for w in 1..n.saturating_sub(1) {
                let gap = objs[front[order[w + 1]]][obj] - objs[front[order[w - 1]]][obj];
                dist[order[w]] += gap / (hi - lo);
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    /// (cost, -quality), both minimized.
    pub objectives: Vec<f64>,
    pub rank: usize,
    pub crowding: f64,
}

/// Variation operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Operators {
    pub mutation_sigma: f64,
    pub bit_flip: f64,
}

impl Operators {
    pub fn from_config(config: &SearchConfig, k: usize) -> Self {
        Operators {
            mutation_sigma: config.mutation_sigma,
            bit_flip: config.bit_flip.unwrap_or(1.0 / k as f64),
        }
    }
}

fn better(a: &Individual, b: &Individual) -> bool {
    a.rank < b.rank || (a.rank == b.rank && a.crowding > b.crowding)
}

fn tournament<'a>(pop: &'a [Individual], rng: &mut impl Rng) -> &'a Individual {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if better(b, a) {
        b
    } else {
        a
    }
}

fn offspring(
    pop: &[Individual],
    space: &Space,
    ops: &Operators,
    rng: &mut impl Rng,
) -> Genome {
    let a = &tournament(pop, rng).genome;
    let b = &tournament(pop, rng).genome;
    let mut child = Genome {
        include: Vec::with_capacity(space.k),
        thresholds: Vec::with_capacity(space.k),
    };
    for i in 0..space.k {
        let from_a = rng.random_bool(0.5);
        child.include.push(if from_a { a.include[i] } else { b.include[i] });
        let from_a = rng.random_bool(0.5);
        child.thresholds.push(if from_a { a.thresholds[i] } else { b.thresholds[i] });
    }
    if ops.mutation_sigma > 0.0 {
        let normal = Normal::new(0.0, ops.mutation_sigma).expect("finite sigma");
        for t in &mut child.thresholds {
            *t = (*t + normal.sample(rng)).clamp(0.0, 1.0);
        }
    }
    if !space.fixed_chain {
        for b in &mut child.include {
            if rng.random_bool(ops.bit_flip.clamp(0.0, 1.0)) {
                *b = !*b;
            }
        }
    }
    space.repair(&mut child, rng);
    child
}

/// Assigns rank and crowding, then keeps the best `size` by front and
/// crowding.
fn environmental_selection(mut all: Vec<Individual>, size: usize) -> Vec<Individual> {
    let objs: Vec<Vec<f64>> = all.iter().map(|i| i.objectives.clone()).collect();
    let fronts = fast_nondominated_sort(&objs);
    for (r, front) in fronts.iter().enumerate() {
        let cd = crowding_distance(&objs, front);
        for (j, &i) in front.iter().enumerate() {
            all[i].rank = r;
            all[i].crowding = cd[j];
        }
    }
    let mut next = Vec::with_capacity(size);
    for front in &fronts {
        if next.len() + front.len() <= size {
            next.extend(front.iter().map(|&i| all[i].clone()));
        } else {
            let mut rest: Vec<usize> = front.clone();
            rest.sort_by(|&a, &b| all[b].crowding.total_cmp(&all[a].crowding).then(a.cmp(&b)));
            next.extend(rest[..size - next.len()].iter().map(|&i| all[i].clone()));
            break;
        }
    }
    next
}

/// Objective function over a batch of genomes.
pub type BatchEval<'a> = dyn FnMut(&[Genome]) -> Result<Vec<Vec<f64>>> + 'a;

/// One NSGA-II generation producing `n_offspring` children.
fn step(
    pop: &[Individual],
    space: &Space,
    ops: &Operators,
    n_offspring: usize,
    evaluate: &mut BatchEval<'_>,
    rng: &mut impl Rng,
) -> Result<Vec<Individual>> {
    let children: Vec<Genome> = (0..n_offspring).map(|_| offspring(pop, space, ops, rng)).collect();
    let objs = evaluate(&children)?;
    let mut all: Vec<Individual> = pop.to_vec();
    all.extend(children.into_iter().zip(objs).map(|(genome, objectives)| Individual {
        genome,
        objectives,
        rank: 0,
        crowding: 0.0,
    }));
    Ok(environmental_selection(all, pop.len()))
}

/// Binary tournament on (rank, crowding), uniform crossover, Gaussian
/// threshold mutation and bit flips, then elitist selection over parents
/// and children.
pub fn nsga2_step(
    population: &[Individual],
    space: &Space,
    ops: &Operators,
    evaluate: &mut BatchEval<'_>,
    rng: &mut impl Rng,
) -> Result<Vec<Individual>> {
    step(population, space, ops, population.len(), evaluate, rng)
}

/// `trials` independent uniform samples from the space.
pub fn random_search(
    space: &Space,
    trials: usize,
    evaluate: &mut BatchEval<'_>,
    rng: &mut impl Rng,
) -> Result<Vec<Individual>> {
    let genomes: Vec<Genome> = (0..trials).map(|_| space.random_genome(rng)).collect();
    let objs = evaluate(&genomes)?;
    Ok(genomes
        .into_iter()
        .zip(objs)
        .map(|(genome, objectives)| Individual {
            genome,
            objectives,
            rank: 0,
            crowding: 0.0,
        })
        .collect())
}

/// Calibration objectives with a cache keyed by (sequence, quantized
/// thresholds). Records every evaluated policy.
struct Evaluator<'a> {
    table: &'a EvalTable,
    cols: Vec<usize>,
    calib: &'a [usize],
    space: Space,
    cache: HashMap<Key, (f64, f64)>,
    order: Vec<Key>,
}

impl Evaluator<'_> {
    fn eval(&mut self, genomes: &[Genome]) -> Result<Vec<Vec<f64>>> {
        let keys: Vec<Key> = genomes.iter().map(|g| self.space.key(g)).collect();
        let mut missing: Vec<Key> = Vec::new();
        for k in &keys {
            if !self.cache.contains_key(k) && !missing.contains(k) {
                missing.push(k.clone());
            }
        }
        let results = missing
            .par_iter()
            .map(|(seq, thr)| {
                let cols: Vec<usize> = seq.iter().map(|&i| self.cols[i]).collect();
                let thr: Vec<f64> = thr.iter().map(|&t| t as f64 / QUANT).collect();
                evaluate_indices(self.table, &cols, &thr, self.calib)
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, r) in missing.into_iter().zip(results) {
            self.order.push(k.clone());
            self.cache.insert(k, r);
        }
        Ok(keys
            .iter()
            .map(|k| {
                let (c, u) = self.cache[k];
                vec![c, -u]
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub policy: CascadePolicy,
    pub calib_cost: f64,
    pub calib_quality: f64,
    pub rank: usize,
    pub crowding: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Calibration Pareto front over every evaluated policy.
    pub front: Frontier,
    /// Final population (NSGA-II) or all samples (random search).
    pub candidates: Vec<Candidate>,
    /// Distinct policies evaluated.
    pub evaluated: usize,
}

fn run_search(
    table: &EvalTable,
    pool: &ModelPool,
    calib: &[usize],
    config: &SearchConfig,
    fixed_chain: bool,
) -> Result<SearchResult> {
    config.validate()?;
    if calib.is_empty() {
        return Err(Error::Validation("calibration set is empty".into()));
    }
    let ids = pool.ids();
    let cols = ids
        .iter()
        .map(|m| table.model_index(m))
        .collect::<Result<Vec<_>>>()?;
    if ids.len() == 1 {
        let (c, u) = evaluate_indices(table, &cols, &[], calib)?;
        let policy = CascadePolicy::single(ids[0].clone());
        return Ok(SearchResult {
            front: pareto_filter(vec![FrontierPoint {
                cost: c,
                quality: u,
                policy: policy.clone().into(),
            }]),
            candidates: vec![Candidate {
                policy,
                calib_cost: c,
                calib_quality: u,
                rank: 0,
                crowding: f64::INFINITY,
            }],
            evaluated: 1,
        });
    }
    let k = ids.len();
    let space = Space {
        k,
        cap: if fixed_chain { k } else { config.max_chain_length.min(k) },
        fixed_chain,
    };
    let ops = Operators::from_config(config, k);
    let mut ev = Evaluator {
        table,
        cols,
        calib,
        space,
        cache: HashMap::new(),
        order: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let finals = {
        let mut evaluate = |g: &[Genome]| ev.eval(g);
        match config.optimizer {
            Optimizer::Random => random_search(&space, config.trials, &mut evaluate, &mut rng)?,
            Optimizer::Nsga2 => {
                let mut init = Vec::with_capacity(config.population);
                for t in [0.0, 1.0] {
                    let mut g = Genome {
                        include: vec![true; k],
                        thresholds: vec![t; k],
                    };
                    space.repair(&mut g, &mut rng);
                    init.push(g);
                }
                while init.len() < config.population {
                    init.push(space.random_genome(&mut rng));
                }
                let objs = evaluate(&init)?;
                let pop: Vec<Individual> = init
                    .into_iter()
                    .zip(objs)
                    .map(|(genome, objectives)| Individual {
                        genome,
                        objectives,
                        rank: 0,
                        crowding: 0.0,
                    })
                    .collect();
                let mut pop = environmental_selection(pop, config.population);
                let mut used = config.population;
                while used < config.trials {
                    let n = config.population.min(config.trials - used);
                    pop = step(&pop, &space, &ops, n, &mut evaluate, &mut rng)?;
                    used += n;
                }
                pop
            }
        }
    };

    let to_policy = |seq: &[usize], thr: &[u32]| -> Result<CascadePolicy> {
        CascadePolicy::new(
            seq.iter().map(|&i| ids[i].clone()).collect(),
            thr.iter().map(|&t| t as f64 / QUANT).collect(),
        )
    };
    let mut pts = Vec::with_capacity(ev.order.len());
    for key in &ev.order {
        let (c, u) = ev.cache[key];
        pts.push(FrontierPoint {
            cost: c,
            quality: u,
            policy: to_policy(&key.0, &key.1)?.into(),
        });
    }
    let candidates = finals
        .iter()
        .map(|ind| {
            let (seq, thr) = space.key(&ind.genome);
            Ok(Candidate {
                policy: to_policy(&seq, &thr)?,
                calib_cost: ind.objectives[0],
                calib_quality: -ind.objectives[1],
                rank: ind.rank,
                crowding: ind.crowding,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SearchResult {
        front: pareto_filter(pts),
        candidates,
        evaluated: ev.order.len(),
    })
}

/// Thresholds only, over the full cost-ordered pool.
pub fn optimize_fixed_chain(
    table: &EvalTable,
    pool: &ModelPool,
    calib: &[usize],
    config: &SearchConfig,
) -> Result<SearchResult> {
    run_search(table, pool, calib, config, true)
}

/// Cost-ordered subsequence (length 2 to the chain cap) and thresholds.
pub fn optimize_subsequence(
    table: &EvalTable,
    pool: &ModelPool,
    calib: &[usize],
    config: &SearchConfig,
) -> Result<SearchResult> {
    run_search(table, pool, calib, config, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::evaluate_policy;
    use crate::data::QueryRecord;
    use crate::pool::select_nondominated;
    use crate::testutil::{t5, t5_with_c};
    use proptest::prelude::*;

    fn brute_fronts(objs: &[Vec<f64>]) -> Vec<usize> {
        // rank = length of the longest chain of dominators above each point
        let n = objs.len();
        let mut rank = vec![usize::MAX; n];
        let mut remaining: Vec<usize> = (0..n).collect();
        let mut r = 0;
        while !remaining.is_empty() {
            let cur: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&p| !remaining.iter().any(|&q| dominates(&objs[q], &objs[p])))
                .collect();
            for &p in &cur {
                rank[p] = r;
            }
            remaining.retain(|p| !cur.contains(p));
            r += 1;
        }
        rank
    }

    proptest! {
        #[test]
        fn sort_matches_brute_force(pts in prop::collection::vec((0u8..10, 0u8..10), 1..60)) {
            let objs: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a as f64, b as f64]).collect();
            let fronts = fast_nondominated_sort(&objs);
            let brute = brute_fronts(&objs);
            let mut seen = 0;
            for (r, f) in fronts.iter().enumerate() {
                for &i in f {
                    prop_assert_eq!(brute[i], r);
                    seen += 1;
                }
            }
            prop_assert_eq!(seen, objs.len());
        }
    }

    #[test]
    fn single_dominator_is_front_zero() {
        let objs = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.5], vec![0.5, 3.0]];
        assert_eq!(fast_nondominated_sort(&objs)[0], vec![0]);
    }

    #[test]
    fn crowding_boundaries_infinite() {
        let objs = vec![vec![0.0, 3.0], vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 0.0]];
        let cd = crowding_distance(&objs, &[0, 1, 2, 3]);
        assert!(cd[0].is_infinite() && cd[3].is_infinite());
        assert!((cd[1] - 4.0 / 3.0).abs() < 1e-12);
        let same = vec![vec![1.0, 1.0]; 3];
        let cd = crowding_distance(&same, &[0, 1, 2]);
        assert_eq!(cd.iter().filter(|d| d.is_infinite()).count(), 2);
        assert_eq!(cd.iter().filter(|d| **d == 0.0).count(), 1);
    }

    fn small_config(trials: usize, pop: usize, seed: u64) -> SearchConfig {
        SearchConfig {
            trials,
            population: pop,
            seed,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn fixed_chain_contains_endpoints() {
        let t = t5_with_c();
        let idx = t.all_indices();
        let pool = select_nondominated(&t, &idx, &[]).unwrap();
        assert_eq!(pool.len(), 3);
        let r = optimize_fixed_chain(&t, &pool, &idx, &small_config(200, 20, 1)).unwrap();
        let pts = r.front.points();
        assert_eq!((pts[0].cost, pts[0].quality), (1.0, 0.4));
        let all_ones = CascadePolicy::new(vec!["A".into(), "C".into(), "B".into()], vec![1.0, 1.0]).unwrap();
        assert_eq!(evaluate_policy(&t, &all_ones, &idx).unwrap().mean_cost, 14.0);
        for c in &r.candidates {
            assert_eq!(c.policy.len(), 3);
        }
    }

    #[test]
    fn k2_search_finds_t5_sweep() {
        let t = t5();
        let idx = t.all_indices();
        let pool = select_nondominated(&t, &idx, &[]).unwrap();
        let r = optimize_fixed_chain(&t, &pool, &idx, &small_config(300, 30, 3)).unwrap();
        let pts: Vec<(f64, f64)> = r.front.points().iter().map(|p| (p.cost, p.quality)).collect();
        assert_eq!(pts, vec![(1.0, 0.4), (3.0, 0.6), (5.0, 0.8)]);
    }

    #[test]
    fn deterministic_replay() {
        let t = t5_with_c();
        let idx = t.all_indices();
        let pool = select_nondominated(&t, &idx, &[]).unwrap();
        for opt in [Optimizer::Nsga2, Optimizer::Random] {
            let cfg = SearchConfig {
                optimizer: opt,
                ..small_config(150, 10, 9)
            };
            let a = optimize_subsequence(&t, &pool, &idx, &cfg).unwrap();
            let b = optimize_subsequence(&t, &pool, &idx, &cfg).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn policies_respect_invariants() {
        let t = t5_with_c();
        let idx = t.all_indices();
        let pool = select_nondominated(&t, &idx, &[]).unwrap();
        let cfg = SearchConfig {
            max_chain_length: 2,
            ..small_config(200, 20, 4)
        };
        let r = optimize_subsequence(&t, &pool, &idx, &cfg).unwrap();
        let order = pool.ids();
        for p in r.front.points() {
            let pol = p.policy.as_cascade().unwrap();
            assert_eq!(pol.len(), 2);
            let pos: Vec<usize> = pol.sequence.iter().map(|m| order.iter().position(|o| o == m).unwrap()).collect();
            assert!(pos.windows(2).all(|w| w[0] < w[1]));
            assert!(pol.thresholds.iter().all(|t| (0.0..=1.0).contains(t)));
        }
    }

    #[test]
    fn random_search_basics() {
        let space = Space {
            k: 3,
            cap: 4,
            fixed_chain: false,
        };
        let mut evaluate = |g: &[Genome]| -> Result<Vec<Vec<f64>>> { Ok(g.iter().map(|_| vec![0.0, 0.0]).collect()) };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(random_search(&space, 1, &mut evaluate, &mut rng).unwrap().len(), 1);
        let a = random_search(&space, 50, &mut evaluate, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = random_search(&space, 50, &mut evaluate, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        // all four subsequences of a 3-model pool appear
        let mut seen: Vec<Vec<usize>> = a.iter().map(|i| space.decode(&i.genome).0).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn nsga2_step_keeps_population_size_and_replays() {
        let space = Space {
            k: 3,
            cap: 3,
            fixed_chain: false,
        };
        let ops = Operators {
            mutation_sigma: 0.1,
            bit_flip: 1.0 / 3.0,
        };
        let f = |g: &[Genome]| -> Result<Vec<Vec<f64>>> {
            Ok(g.iter()
                .map(|g| {
                    let (seq, thr) = space.decode(g);
                    vec![seq.len() as f64 + thr.iter().sum::<f64>(), -thr.iter().sum::<f64>()]
                })
                .collect())
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut eval = f;
            let mut pop = random_search(&space, 12, &mut eval, &mut rng).unwrap();
            for _ in 0..5 {
                pop = nsga2_step(&pop, &space, &ops, &mut eval, &mut rng).unwrap();
                assert_eq!(pop.len(), 12);
            }
            pop
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn single_model_pool_gives_single_point() {
        let recs = (0..4).map(|i| QueryRecord {
            query_id: format!("q{i}"),
            model: "A".into(),
            cost: 1.0,
            quality: (i % 2) as f64,
            score: None,
            features: None,
        });
        let t = EvalTable::from_records(recs).unwrap();
        let idx = t.all_indices();
        let pool = select_nondominated(&t, &idx, &[]).unwrap();
        let r = optimize_fixed_chain(&t, &pool, &idx, &small_config(10, 5, 0)).unwrap();
        assert_eq!(r.front.len(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(small_config(10, 20, 0).validate().is_err());
        assert!(SearchConfig {
            max_chain_length: 1,
            ..SearchConfig::default()
        }
        .validate()
        .is_err());
        assert!(SearchConfig::default().validate().is_ok());
    }
}
