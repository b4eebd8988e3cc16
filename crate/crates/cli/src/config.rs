use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cascade_frontier::harness::{ExperimentConfig, MethodSet, SplitPlan, DEFAULT_GRID_POINTS};
use cascade_frontier::scorers::{ScorerKind, DEFAULT_K};
use cascade_frontier::search::SearchConfig;
use cascade_frontier::{ColumnMapping, ModelId};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    pub reg_strength: f64,
    pub w_points: usize,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            reg_strength: cascade_frontier::router::DEFAULT_REG,
            w_points: 50,
        }
    }
}

/// Everything a run needs. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub table: Option<PathBuf>,
    pub token_logs: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub columns: ColumnMapping,
    pub out_dir: PathBuf,
    pub exclude: Vec<ModelId>,
    pub scorer: ScorerKind,
    pub top_k: usize,
    pub n_tau: usize,
    pub grid_points: usize,
    pub cr_fraction: f64,
    pub plan: SplitPlan,
    pub search: SearchConfig,
    pub router: RouterConfig,
    pub methods: MethodSet,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            table: None,
            token_logs: None,
            features: None,
            columns: ColumnMapping::default(),
            out_dir: PathBuf::from("run"),
            exclude: Vec::new(),
            scorer: ScorerKind::default(),
            top_k: DEFAULT_K,
            n_tau: cascade_frontier::cascade::DEFAULT_N_TAU,
            grid_points: DEFAULT_GRID_POINTS,
            cr_fraction: 0.9,
            plan: SplitPlan::default(),
            search: SearchConfig::default(),
            router: RouterConfig::default(),
            methods: MethodSet::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("config: cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("config: cannot parse {}", path.display()))
    }

    /// Checks fields in declaration order and reports the first failure.
    pub fn validate(&self) -> Result<()> {
        for (field, path) in [
            ("table", &self.table),
            ("token_logs", &self.token_logs),
            ("features", &self.features),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    bail!("{field}: input file {} does not exist", p.display());
                }
            }
        }
        if self.top_k < 2 {
            bail!("top_k: must be at least 2");
        }
        if self.n_tau < 1 {
            bail!("n_tau: must be at least 1");
        }
        self.experiment().validate().map_err(|e| anyhow::anyhow!("experiment: {e}"))?;
        Ok(())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            plan: self.plan.clone(),
            methods: self.methods,
            n_tau: self.n_tau,
            grid_points: self.grid_points,
            search: self.search.clone(),
            router_reg: self.router.reg_strength,
            router_w_points: self.router.w_points,
            exclude: self.exclude.clone(),
            cr_fraction: self.cr_fraction,
        }
    }
}
