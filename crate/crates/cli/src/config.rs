//! Run configuration: a JSON file (`--config`) overlaid by command-line
//! flags. Relative paths in the file resolve against the file's directory.

use std::path::{Path, PathBuf};

use hotscore::corpus::{parse_lexicon, FilterConfig, FilterLexicons};
use hotscore::evalharness::{DEFAULT_CANDIDATES, DEFAULT_MAX_N};
use hotscore::metrics::MetricParams;
use hotscore::providers::{
    KbLinker, KnowledgeBase, LexiconCounter, ProviderConfig, Providers, DEFAULT_RHETORIC_MARKERS,
    DEFAULT_TRENDING_TERMS,
};
use hotscore::reward::{RewardConfig, RewardTrainConfig};
use hotscore::tot::TotOptimizerConfig;
use hotscore::training_math::FusionParams;
use hotscore::weights::{AlphaMetric, LogisticConfig, WeightSet, DEFAULT_AGREEMENT_THRESHOLD};
use serde::{Deserialize, Serialize};

use crate::error::{Classify, CliError, CliResult};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    /// Weight file; table defaults when absent.
    pub weights: Option<PathBuf>,
    /// Metric parameter file; defaults when absent.
    pub params: Option<PathBuf>,
    /// Directory of `<category>.txt` filter lexicons.
    pub lexicons: Option<PathBuf>,
    pub rhetoric_markers: Option<PathBuf>,
    pub trending_terms: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub providers: ProviderConfig,
    pub seed: u64,
    pub parallelism: usize,
    pub filter: FilterConfig,
    pub logistic: LogisticConfig,
    /// Also fit `w_I .. w_U` against label `F`. Off by default so the table
    /// values stay in force.
    pub fit_top_level: bool,
    pub agreement_threshold: f64,
    pub alpha_metric: AlphaMetric,
    pub reward_train: RewardTrainConfig,
    pub reward: RewardConfig,
    pub tot: TotOptimizerConfig,
    pub fusion: FusionParams,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub candidates: usize,
    pub max_n: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            candidates: DEFAULT_CANDIDATES,
            max_n: DEFAULT_MAX_N,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            weights: None,
            params: None,
            lexicons: None,
            rhetoric_markers: None,
            trending_terms: None,
            kb: None,
            providers: ProviderConfig::default(),
            seed: DEFAULT_SEED,
            parallelism: 4,
            filter: FilterConfig::default(),
            logistic: LogisticConfig::default(),
            fit_top_level: false,
            agreement_threshold: DEFAULT_AGREEMENT_THRESHOLD,
            alpha_metric: AlphaMetric::Interval,
            reward_train: RewardTrainConfig::default(),
            reward: RewardConfig::default(),
            tot: TotOptimizerConfig::default(),
            fusion: FusionParams::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).config_err(format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).config_err(format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.corpus,
            &mut cfg.weights,
            &mut cfg.params,
            &mut cfg.lexicons,
            &mut cfg.rhetoric_markers,
            &mut cfg.trending_terms,
            &mut cfg.kb,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Pushes the single seed into every seeded stage and checks ranges.
    pub fn finish(mut self) -> CliResult<Self> {
        self.logistic.seed = self.seed;
        self.reward_train.seed = self.seed;
        if self.parallelism == 0 {
            return Err(CliError::config("parallelism must be positive"));
        }
        if !(0.0..=1.0).contains(&self.agreement_threshold) {
            return Err(CliError::config("agreement_threshold must lie in [0, 1]"));
        }
        if self.eval.candidates < 2 || self.eval.max_n == 0 {
            return Err(CliError::config(
                "eval.candidates must be at least 2 and eval.max_n positive",
            ));
        }
        if self.filter.min_chars > self.filter.max_chars {
            return Err(CliError::config("filter.min_chars exceeds filter.max_chars"));
        }
        self.providers.validate()?;
        self.tot.validate()?;
        self.fusion.validate().config_err("fusion parameters")?;
        Ok(self)
    }

    pub fn corpus_path(&self) -> CliResult<&Path> {
        self.corpus
            .as_deref()
            .ok_or_else(|| CliError::config("no corpus given (--corpus or \"corpus\" in the config)"))
    }

    pub fn load_weights(&self) -> CliResult<WeightSet> {
        match &self.weights {
            None => Ok(WeightSet::default()),
            Some(p) => {
                let w: WeightSet = read_json(p).map_err(|e| CliError::new(crate::error::Kind::Config, e.source))?;
                if !w.is_finite() {
                    return Err(CliError::config(format!("{}: non-finite weight", p.display())));
                }
                Ok(w)
            }
        }
    }

    pub fn load_params(&self) -> CliResult<MetricParams> {
        let params = match &self.params {
            None => MetricParams::default(),
            Some(p) => read_json(p).map_err(|e| CliError::new(crate::error::Kind::Config, e.source))?,
        };
        params.validate()?;
        Ok(params)
    }

    /// Every `*.txt` in the lexicon directory, in file-name order.
    pub fn load_lexicons(&self) -> CliResult<FilterLexicons> {
        let mut lex = FilterLexicons::new();
        let Some(dir) = &self.lexicons else {
            log::warn!("no lexicon directory configured; the lexicon rule rejects nothing");
            return Ok(lex);
        };
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .config_err(format!("reading lexicon directory {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        for f in files {
            let category = f.file_stem().and_then(|s| s.to_str()).unwrap_or("lexicon").to_string();
            lex.load_file(&category, &f)
                .data_err(format!("loading lexicon {}", f.display()))?;
        }
        Ok(lex)
    }

    pub fn providers(&self) -> CliResult<Providers> {
        let counter = |path: &Option<PathBuf>, defaults: &[&str]| -> CliResult<LexiconCounter> {
            Ok(match path {
                Some(p) => {
                    let text = std::fs::read_to_string(p).config_err(format!("reading {}", p.display()))?;
                    LexiconCounter::new(parse_lexicon(&text))
                }
                None => LexiconCounter::new(defaults.iter().map(|s| s.to_string())),
            })
        };
        let rhetoric = counter(&self.rhetoric_markers, DEFAULT_RHETORIC_MARKERS)?;
        let trending = counter(&self.trending_terms, DEFAULT_TRENDING_TERMS)?;
        Ok(Providers::from_config(&self.providers, rhetoric, trending)?)
    }

    /// `None` when no knowledge base is configured.
    pub fn linker(&self) -> CliResult<Option<KbLinker>> {
        match &self.kb {
            None => Ok(None),
            Some(p) => Ok(Some(KbLinker::new(KnowledgeBase::load(p)?))),
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).data_err(format!("reading {}", path.display()))?;
    serde_json::from_str(&text).data_err(format!("parsing {}", path.display()))
}

/// One JSON value per non-blank line; errors carry the 1-based line number.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let text = std::fs::read_to_string(path).data_err(format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).data_err(format!("{}:{}", path.display(), i + 1)))
        .collect()
}
