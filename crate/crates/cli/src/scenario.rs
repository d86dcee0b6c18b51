//! Scenario and experiment-design files.
//!
//! Curriculum, shocks and rules may be given inline or as a path relative to
//! the file that names them. Unknown keys are rejected and the schema version
//! must match. The curriculum is kept as an unvalidated spec here; it is
//! validated by whichever stage consumes it first.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cohortlab_core::archetype::RuleThresholds;
use cohortlab_core::curriculum::{Curriculum, CurriculumSpec};
use cohortlab_core::dml::DmlSpec;
use cohortlab_core::policy::{Axis, ExperimentDesign, PolicyIntervention, ReportThresholds};
use cohortlab_core::sim::{BehaviorRules, PopulationSpec, SimulationConfig};
use cohortlab_core::temporal::{ObservationWindow, ShockSeries};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::{read_json, read_shocks_csv, DataPaths};

pub const SCHEMA_VERSION: &str = "1";

/// A value given inline or as a path to a JSON file (or a CSV file for
/// shocks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Source<T> {
    fn load(&self, base: &Path) -> Result<T, CliError> {
        match self {
            Source::Inline(v) => Ok(v.clone()),
            Source::Path(p) => read_json(&base.join(p)),
        }
    }
}

fn check_version(found: &str, file: &Path) -> Result<(), CliError> {
    if found != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "{}: schema_version {found:?} is not supported (expected {SCHEMA_VERSION:?})",
            file.display()
        )));
    }
    Ok(())
}

fn default_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeJob {
    #[serde(default = "default_k")]
    pub k: usize,
    pub seed: u64,
    /// Nominal programme length in terms.
    pub nominal_terms: u32,
    /// Decision point for feature extraction; the dataset horizon when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_of: Option<ObservationWindow>,
    #[serde(default)]
    pub thresholds: RuleThresholds,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentRule {
    /// Use the treatment feature as it is.
    #[default]
    AsIs,
    /// 1 when strictly above the sample median of the complete cases.
    AboveMedian,
}

fn default_min_group() -> usize {
    50
}

/// DML specification plus the command-level options around it. With
/// `group_by = "archetype"` the groups come from an archetype label file;
/// any other value names a registered feature whose value defines the group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlJob {
    #[serde(flatten)]
    pub spec: DmlSpec,
    #[serde(default)]
    pub treatment_rule: TreatmentRule,
    #[serde(default = "default_min_group")]
    pub min_group_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisPlan {
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    pub archetypes: ArchetypeJob,
    pub dml: DmlJob,
    /// Largest accepted gap between simulated and observed survival and
    /// time-to-degree curves.
    #[serde(default = "default_fit_tolerance")]
    pub fit_tolerance: f64,
}

/// Seed-to-seed gaps for 1000 students over 20 terms reach about 0.08 on the
/// time-to-degree CDF, so this leaves room for sampling noise alone.
pub const DEFAULT_FIT_TOLERANCE: f64 = 0.10;

fn default_fit_tolerance() -> f64 {
    DEFAULT_FIT_TOLERANCE
}

fn default_top_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: String,
    pub curriculum: Source<CurriculumSpec>,
    pub population: PopulationSpec,
    pub shocks: Source<ShockSeries>,
    pub rules: Source<BehaviorRules>,
    #[serde(default)]
    pub policy: Vec<PolicyIntervention>,
    pub horizon: u32,
    pub seed: u64,
    /// Observed data to ingest instead of synthesizing a cohort.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataPaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisPlan>,
}

/// A scenario with every reference loaded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub curriculum: CurriculumSpec,
    pub population: PopulationSpec,
    pub shocks: ShockSeries,
    pub rules: BehaviorRules,
    pub policy: Vec<PolicyIntervention>,
    pub horizon: u32,
    pub seed: u64,
    pub data: Option<DataPaths>,
    pub analysis: Option<AnalysisPlan>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let file: ScenarioFile = read_json(path)?;
        check_version(&file.schema_version, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let shocks = match &file.shocks {
            Source::Path(p) if p.extension().is_some_and(|e| e == "csv") => read_shocks_csv(&base.join(p))?,
            other => other.load(base)?,
        };
        Ok(Self {
            curriculum: file.curriculum.load(base)?,
            population: file.population,
            shocks,
            rules: file.rules.load(base)?,
            policy: file.policy,
            horizon: file.horizon,
            seed: file.seed,
            data: file.data.map(|d| d.relative_to(base)),
            analysis: file.analysis,
        })
    }

    pub fn validated_curriculum(&self) -> Result<Curriculum, CliError> {
        Ok(Curriculum::from_spec(self.curriculum.clone())?)
    }

    pub fn simulation_config(&self, curriculum: Curriculum, seed: u64, with_policy: bool) -> SimulationConfig {
        SimulationConfig {
            curriculum,
            population: self.population.clone(),
            shocks: self.shocks.clone(),
            rules: self.rules.clone(),
            policy: if with_policy { self.policy.clone() } else { Vec::new() },
            horizon: self.horizon,
            seed,
        }
    }
}

fn default_replications() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub schema_version: String,
    /// Path of the base scenario, relative to the design file.
    pub base: PathBuf,
    /// On-level interventions per axis.
    pub factors: BTreeMap<Axis, Vec<PolicyIntervention>>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub seed_base: u64,
    #[serde(default)]
    pub thresholds: ReportThresholds,
}

impl DesignFile {
    /// Builds the experiment; `reps` overrides the file's replication count.
    pub fn load(path: &Path, reps: Option<usize>) -> Result<(ExperimentDesign, ReportThresholds), CliError> {
        let file: DesignFile = read_json(path)?;
        check_version(&file.schema_version, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let scenario = Scenario::load(&base.join(&file.base))?;
        let curriculum = scenario.validated_curriculum()?;
        let design = ExperimentDesign {
            base: scenario.simulation_config(curriculum, scenario.seed, true),
            factors: file.factors,
            replications: reps.unwrap_or(file.replications),
            seed_base: file.seed_base,
        };
        design.validate()?;
        Ok((design, file.thresholds))
    }
}
