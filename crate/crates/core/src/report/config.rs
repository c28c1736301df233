use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Strategy;
use crate::graph::{ConflictMode, DependencyGraph};
use crate::hash::Mixer;
use crate::occsim::{Mode, SvPolicy};
use crate::transforms::{check_chain, TransformStep};
use crate::workload::{read_trace_file, MixComponent, Mixed, Workload};

/// Which scheduler a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    #[default]
    Bound,
    OccClassic,
    OccDetCommit,
    OccDa,
}

impl RunMode {
    pub fn occ(self) -> Option<Mode> {
        match self {
            RunMode::Bound => None,
            RunMode::OccClassic => Some(Mode::Classic),
            RunMode::OccDetCommit => Some(Mode::DetCommit),
            RunMode::OccDa => Some(Mode::OccDa),
        }
    }

    pub fn name(self) -> &'static str {
        match self.occ() {
            None => "bound",
            Some(m) => m.name(),
        }
    }
}

/// How OCC-DA picks first-attempt storage versions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicySpec {
    #[default]
    MinusOne,
    /// Use the run's own dependency graph as the estimate.
    DepGraph,
}

impl PolicySpec {
    pub fn build(self, g: &DependencyGraph) -> SvPolicy {
        match self {
            PolicySpec::MinusOne => SvPolicy::MinusOne,
            PolicySpec::DepGraph => SvPolicy::DepGraph(g.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// A seeded corpus of mixed workloads. Workload `i` has a size drawn
/// uniformly from `n_min..=n` (exactly `n` when `n_min` is absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub components: Vec<MixComponent>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<usize>,
    #[serde(default = "one")]
    pub count: usize,
}

fn one() -> usize {
    1
}

impl CorpusSpec {
    pub fn workload_seed(seed: u64, index: usize) -> u64 {
        Mixer::new().u64(seed).u64(index as u64).bytes(b"corpus").finish()
    }

    pub fn generate(&self, seed: u64, strategy: Strategy) -> Result<Vec<(String, Workload)>> {
        if self.count < 1 {
            return Err(Error::validation("corpus count must be at least 1"));
        }
        let n_min = self.n_min.unwrap_or(self.n);
        if n_min < 1 || n_min > self.n {
            return Err(Error::validation(format!("corpus size range {n_min}..={} is empty", self.n)));
        }
        let width = digits(self.count);
        let cells = crate::exec::map_range(strategy, self.count, |i| {
            let s = Self::workload_seed(seed, i);
            let n = ChaCha8Rng::seed_from_u64(s).gen_range(n_min..=self.n);
            Mixed::new(self.components.clone(), n)
                .generate(s)
                .map(|w| (format!("w{i:0width$}"), w))
        });
        cells.into_iter().collect()
    }
}

fn digits(count: usize) -> usize {
    count.saturating_sub(1).to_string().len().max(4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputSpec {
    /// Trace files, named by file stem.
    Traces(Vec<PathBuf>),
    Generator(CorpusSpec),
}

/// A named transform chain; reports carry one series per variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub transforms: Vec<TransformStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub input: InputSpec,
    #[serde(default = "default_threads")]
    pub threads: Vec<usize>,
    #[serde(default)]
    pub mode: RunMode,
    /// Second scheduler for `simulate`; rows then carry the fraction of
    /// workloads whose makespan matches it exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<RunMode>,
    #[serde(default)]
    pub policy: PolicySpec,
    /// Chain applied when `variants` is empty.
    #[serde(default)]
    pub transforms: Vec<TransformStep>,
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub cadd_aware: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Histogram buckets; defaults to one per unit of the largest thread count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buckets: Option<usize>,
    #[serde(default)]
    pub strategy: Strategy,
}

fn default_threads() -> Vec<usize> {
    vec![2, 8, 32]
}

fn default_trials() -> usize {
    20
}

impl ExperimentConfig {
    pub fn new(input: InputSpec) -> Self {
        ExperimentConfig {
            input,
            threads: default_threads(),
            mode: RunMode::default(),
            baseline: None,
            policy: PolicySpec::default(),
            transforms: Vec::new(),
            variants: Vec::new(),
            cadd_aware: false,
            seed: 0,
            out: None,
            format: Format::default(),
            trials: default_trials(),
            buckets: None,
            strategy: Strategy::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads.is_empty() || self.threads.contains(&0) {
            return Err(Error::validation("threads must be a nonempty list of positive counts"));
        }
        if matches!(&self.input, InputSpec::Traces(p) if p.is_empty()) {
            return Err(Error::validation("no input traces given"));
        }
        if self.buckets == Some(0) {
            return Err(Error::validation("buckets must be at least 1"));
        }
        let mut names = std::collections::BTreeSet::new();
        for v in self.variants() {
            check_chain(&v.transforms)?;
            if !names.insert(v.name.clone()) {
                return Err(Error::validation(format!("duplicate variant {:?}", v.name)));
            }
        }
        Ok(())
    }

    pub fn conflict_mode(&self) -> ConflictMode {
        ConflictMode::from(self.cadd_aware)
    }

    /// `variants`, or a single `"base"` variant holding `transforms`.
    pub fn variants(&self) -> Vec<Variant> {
        if self.variants.is_empty() {
            vec![Variant {
                name: "base".into(),
                transforms: self.transforms.clone(),
            }]
        } else {
            self.variants.clone()
        }
    }

    pub fn load_corpus(&self) -> Result<Vec<(String, Workload)>> {
        match &self.input {
            InputSpec::Generator(spec) => spec.generate(self.seed, self.strategy),
            InputSpec::Traces(paths) => paths
                .iter()
                .map(|p| {
                    let name = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| p.display().to_string());
                    read_trace_file(p).map(|w| (name, w))
                })
                .collect(),
        }
    }
}
