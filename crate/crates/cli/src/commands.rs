//! Subcommand implementations. Each `cmd_*` function writes one output
//! bundle; the `run_*` helpers hold the computations so that the pipeline and
//! tests can reuse them without touching the filesystem.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cohortlab_core::archetype::{classify, extract_features, fit_archetypes, ArchetypeConfig, ArchetypeLabel, ArchetypeModel};
use cohortlab_core::curriculum::{
    backbone_courses, bottleneck_scores, longest_chain, min_completion_terms, Chain, Curriculum, Parity,
};
use cohortlab_core::dml::{crossfit, crossfit_by_group, naive, prepare, DmlEstimate, GroupEffects};
use cohortlab_core::policy::{
    CellId, CellResult, EffectsReport, ExperimentDesign, ReplicationOutcome, ReportThresholds,
};
use cohortlab_core::sim::{simulate, validate_against_observed, CourseCongestion, FitReport, SimulationResult, TermAggregate};
use cohortlab_core::temporal::{assert_no_leakage, Dataset, ObservationWindow};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{Bundle, Manifest};
use crate::error::CliError;
use crate::io::{dataset_files, ingest_dataset, load_curriculum, read_json, to_json_bytes, DataPaths};
use crate::report;
use crate::scenario::{AnalysisPlan, ArchetypeJob, DesignFile, DmlJob, Scenario, TreatmentRule};
use crate::table::Table;

pub const METRICS: &str = "metrics.json";
pub const RESULT: &str = "result.json";
pub const LABELS: &str = "labels.csv";
pub const MODEL: &str = "archetype_model.json";
pub const DML: &str = "dml.json";
pub const CELLS: &str = "cells.csv";
pub const EFFECTS: &str = "effects.json";
pub const FIT: &str = "fit.json";
pub const SUMMARY: &str = "summary.txt";

/// Load caps reported by the curriculum analysis.
pub const REPORTED_CAPS: std::ops::RangeInclusive<usize> = 2..=6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bottleneck {
    pub course: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumMetrics {
    pub name: Option<String>,
    pub courses: usize,
    pub edges: usize,
    pub start: Parity,
    pub longest_chain: Chain,
    pub backbone: Vec<String>,
    pub bottlenecks: Vec<Bottleneck>,
    /// Keyed by load cap; absent when graduation is unreachable at that cap.
    pub min_completion_terms: BTreeMap<usize, Option<u32>>,
}

pub fn run_analysis(cur: &Curriculum, top_k: usize, start: Parity) -> CurriculumMetrics {
    let mut bottlenecks: Vec<Bottleneck> =
        bottleneck_scores(cur).into_iter().map(|(course, score)| Bottleneck { course, score }).collect();
    bottlenecks.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.course.cmp(&b.course)));
    bottlenecks.truncate(top_k);
    CurriculumMetrics {
        name: cur.name().map(str::to_string),
        courses: cur.len(),
        edges: cur.edges().len(),
        start,
        longest_chain: longest_chain(cur),
        backbone: backbone_courses(cur).into_iter().collect(),
        bottlenecks,
        min_completion_terms: REPORTED_CAPS.map(|cap| (cap, min_completion_terms(cur, cap, start).ok())).collect(),
    }
}

pub fn metrics_text(m: &CurriculumMetrics) -> String {
    let mut out = String::new();
    let mut t = Table::new(["metric", "value"]);
    t.row([String::from("courses"), m.courses.to_string()]);
    t.row([String::from("edges"), m.edges.to_string()]);
    t.row([String::from("longest chain"), format!("{} ({})", m.longest_chain.length, m.longest_chain.path.join(" > "))]);
    t.row([String::from("backbone"), m.backbone.join(", ")]);
    out.push_str(&t.render());
    out.push('\n');
    let mut b = Table::new(["bottleneck", "betweenness"]);
    for x in &m.bottlenecks {
        b.row([x.course.clone(), format!("{:.4}", x.score)]);
    }
    out.push_str(&b.render());
    out.push('\n');
    let mut c = Table::new(["load cap", "min terms"]);
    for (cap, terms) in &m.min_completion_terms {
        c.row([cap.to_string(), terms.map_or("unreachable".into(), |t| t.to_string())]);
    }
    out.push_str(&c.render());
    out
}

pub fn cmd_analyze(curriculum: &Path, top_k: usize, start: Parity, out: &Path) -> Result<Manifest, CliError> {
    let cur = load_curriculum(curriculum)?;
    let metrics = run_analysis(&cur, top_k, start);
    let mut b = Bundle::create(out, "analyze-curriculum")?;
    b.json(METRICS, &metrics)?;
    b.write("metrics.txt", metrics_text(&metrics).as_bytes())?;
    b.finish(&serde_json::json!({ "curriculum": cur, "top_k": top_k, "start": start }))
}

/// Per-term aggregates and outcome rates of a run, without the trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub config_fingerprint: String,
    pub seed: u64,
    pub n: usize,
    pub horizon: u32,
    pub dropout_rate: f64,
    pub graduation_rate: f64,
    pub still_enrolled: usize,
    pub mean_time_to_degree: Option<f64>,
    pub time_to_degree: BTreeMap<u32, usize>,
    pub terms: Vec<TermAggregate>,
    pub congestion: BTreeMap<String, CourseCongestion>,
    pub warnings: Vec<String>,
}

impl From<&SimulationResult> for SimSummary {
    fn from(r: &SimulationResult) -> Self {
        Self {
            config_fingerprint: r.config_fingerprint.clone(),
            seed: r.seed,
            n: r.n,
            horizon: r.horizon,
            dropout_rate: r.dropout_rate,
            graduation_rate: r.graduation_rate,
            still_enrolled: r.still_enrolled,
            mean_time_to_degree: r.mean_time_to_degree,
            time_to_degree: r.time_to_degree.clone(),
            terms: r.terms.clone(),
            congestion: r.congestion.clone(),
            warnings: r.warnings.clone(),
        }
    }
}

/// Runs the scenario and validates the emitted trajectories as a dataset.
pub fn run_simulation(scenario: &Scenario, curriculum: Curriculum, seed: u64, with_policy: bool) -> Result<(SimulationResult, Dataset), CliError> {
    let config = scenario.simulation_config(curriculum, seed, with_policy);
    let result = simulate(&config)?;
    let dataset = result
        .to_dataset(&config.shocks)
        .map_err(|e| CliError::Internal(format!("simulated trajectories failed validation: {:?}", e)))?;
    Ok((result, dataset))
}

fn write_dataset(b: &mut Bundle, prefix: &str, dataset: &Dataset, curriculum: &Curriculum) -> Result<(), CliError> {
    for (name, bytes) in dataset_files(dataset, curriculum) {
        b.write(&format!("{prefix}{name}"), &bytes)?;
    }
    Ok(())
}

/// Synthetic cohort in the ingestion schema, simulated without the
/// scenario's interventions.
pub fn cmd_synth(scenario: &Path, seed: Option<u64>, out: &Path) -> Result<Manifest, CliError> {
    let s = Scenario::load(scenario)?;
    let seed = seed.unwrap_or(s.seed);
    let (result, dataset) = run_simulation(&s, s.validated_curriculum()?, seed, false)?;
    let mut b = Bundle::create(out, "synth")?;
    b.seed("synth", seed);
    write_dataset(&mut b, "", &dataset, &result.curriculum)?;
    b.finish(&s.simulation_config(s.validated_curriculum()?, seed, false))
}

pub fn simulation_text(s: &SimSummary) -> String {
    let mut t = Table::new(["metric", "value"]);
    t.row(["students".into(), s.n.to_string()]);
    t.row(["horizon".into(), s.horizon.to_string()]);
    t.row(["dropout rate".into(), format!("{:.4}", s.dropout_rate)]);
    t.row(["graduation rate".into(), format!("{:.4}", s.graduation_rate)]);
    t.row(["still enrolled".into(), s.still_enrolled.to_string()]);
    t.row(["mean time to degree".into(), s.mean_time_to_degree.map_or("-".into(), |x| format!("{x:.3}"))]);
    let mut out = t.render();
    out.push('\n');
    out.push_str(&report::histogram(&s.time_to_degree).render());
    out
}

pub fn cmd_simulate(scenario: &Path, seed: Option<u64>, out: &Path) -> Result<Manifest, CliError> {
    let s = Scenario::load(scenario)?;
    let seed = seed.unwrap_or(s.seed);
    let (result, dataset) = run_simulation(&s, s.validated_curriculum()?, seed, true)?;
    let summary = SimSummary::from(&result);
    let mut b = Bundle::create(out, "simulate")?;
    b.seed("simulate", seed);
    b.json(RESULT, &summary)?;
    write_dataset(&mut b, "", &dataset, &result.curriculum)?;
    b.write(SUMMARY, simulation_text(&summary).as_bytes())?;
    b.finish(&s.simulation_config(s.validated_curriculum()?, seed, true))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeOutput {
    pub as_of: ObservationWindow,
    pub model: ArchetypeModel,
    pub labels: BTreeMap<String, ArchetypeLabel>,
}

pub fn run_archetypes(dataset: &Dataset, curriculum: &Curriculum, job: &ArchetypeJob) -> Result<ArchetypeOutput, CliError> {
    let as_of = job.as_of.unwrap_or(ObservationWindow::Term(dataset.horizon().max(1)));
    let config = ArchetypeConfig { nominal_terms: job.nominal_terms, thresholds: job.thresholds };
    let features = dataset
        .records()
        .iter()
        .map(|r| extract_features(dataset.registry(), r, curriculum, as_of, &config))
        .collect::<Result<Vec<_>, _>>()?;
    let model = fit_archetypes(&features, job.k, job.seed, job.thresholds)?;
    let labels = dataset.records().iter().zip(&features).map(|(r, f)| (r.id.clone(), classify(&model, f))).collect();
    Ok(ArchetypeOutput { as_of, model, labels })
}

pub fn labels_csv(labels: &BTreeMap<String, ArchetypeLabel>) -> Vec<u8> {
    let mut out = String::from("id,archetype\n");
    for (id, l) in labels {
        out.push_str(&format!("{id},{}\n", l.as_str()));
    }
    out.into_bytes()
}

pub fn read_labels(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        match row {
            Ok(r) if r.len() == 2 => {
                out.insert(r[0].to_string(), r[1].to_string());
            }
            Ok(_) => errors.push(format!("line {}: expected `id,archetype`", i + 2)),
            Err(e) => errors.push(format!("line {}: {e}", i + 2)),
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Schema { file: path.display().to_string(), errors });
    }
    Ok(out)
}

pub fn label_counts(labels: &BTreeMap<String, ArchetypeLabel>) -> Table {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels.values() {
        *counts.entry(l.as_str()).or_default() += 1;
    }
    let mut t = Table::new(["archetype", "students"]);
    for (l, n) in counts {
        t.row([l.to_string(), n.to_string()]);
    }
    t
}

fn load_data(paths: &DataPaths) -> Result<(Curriculum, Dataset), CliError> {
    let cur = load_curriculum(&paths.curriculum)?;
    let dataset = ingest_dataset(paths, &cur)?;
    Ok((cur, dataset))
}

pub fn cmd_archetypes(data: &DataPaths, job: &ArchetypeJob, out: &Path) -> Result<Manifest, CliError> {
    let (cur, dataset) = load_data(data)?;
    let result = run_archetypes(&dataset, &cur, job)?;
    let mut b = Bundle::create(out, "archetypes")?;
    b.seed("kmeans", job.seed);
    b.write(LABELS, &labels_csv(&result.labels))?;
    b.json(MODEL, &result.model)?;
    b.write(SUMMARY, label_counts(&result.labels).render().as_bytes())?;
    b.finish(&serde_json::json!({ "job": job, "as_of": result.as_of, "data": data }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlReport {
    pub outcome: String,
    pub treatment: String,
    pub decision_point: ObservationWindow,
    pub treatment_rule: TreatmentRule,
    /// Cut point when the treatment was binarized.
    pub treatment_threshold: Option<f64>,
    pub crossfit: DmlEstimate,
    pub naive: DmlEstimate,
    pub groups: Option<GroupEffects>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Cross-fitted estimate with the naive comparator and, when `group_by` is
/// set, per-group effects.
pub fn run_dml(dataset: &Dataset, job: &DmlJob, labels: Option<&BTreeMap<String, String>>) -> Result<DmlReport, CliError> {
    let spec = &job.spec;
    let mut data = prepare(dataset, spec)?;
    let threshold = match job.treatment_rule {
        TreatmentRule::AsIs => None,
        TreatmentRule::AboveMedian => {
            if data.t.is_empty() {
                return Err(CliError::Validation("no complete rows".into()));
            }
            let m = median(&data.t);
            data.t.iter_mut().for_each(|t| *t = if *t > m { 1.0 } else { 0.0 });
            Some(m)
        }
    };
    let est = crossfit(&data, spec.folds, &spec.learner, spec.seed)?;
    let naive_est = naive(&data, &spec.learner)?;
    let groups = match spec.group_by.as_deref() {
        None => None,
        Some(key) => {
            let map = if key == "archetype" {
                labels.cloned().ok_or_else(|| CliError::Config("group_by `archetype` needs an archetype label file".into()))?
            } else {
                assert_no_leakage(&[key], spec.decision_point, dataset.registry())?;
                let d = dataset.registry().get(key).expect("checked by the leakage guard").clone();
                dataset
                    .records()
                    .iter()
                    .map(|r| {
                        let v = dataset.value(r, &d).map_or("missing".to_string(), |v| match v {
                            cohortlab_core::temporal::Value::Bool(b) => b.to_string(),
                            cohortlab_core::temporal::Value::Num(x) => x.to_string(),
                            cohortlab_core::temporal::Value::Text(s) => s,
                        });
                        (r.id.clone(), v)
                    })
                    .collect()
            };
            Some(crossfit_by_group(&data, &map, key, job.min_group_size, spec.folds, &spec.learner, spec.seed)?)
        }
    };
    Ok(DmlReport {
        outcome: spec.outcome.clone(),
        treatment: spec.treatment.clone(),
        decision_point: spec.decision_point,
        treatment_rule: job.treatment_rule,
        treatment_threshold: threshold,
        crossfit: est,
        naive: naive_est,
        groups,
    })
}

pub fn dml_table(r: &DmlReport) -> Table {
    let mut t = Table::new(["estimator", "group", "theta", "std_error", "ci95_low", "ci95_high", "n"]);
    let mut row = |name: &str, group: &str, e: &DmlEstimate| {
        t.row([
            name.to_string(),
            group.to_string(),
            format!("{:.4}", e.theta),
            format!("{:.4}", e.std_error),
            format!("{:.4}", e.ci95[0]),
            format!("{:.4}", e.ci95[1]),
            e.n_used.to_string(),
        ])
    };
    row("crossfit", "all", &r.crossfit);
    row("naive", "all", &r.naive);
    if let Some(g) = &r.groups {
        for (k, e) in &g.effects {
            row("crossfit", k, e);
        }
    }
    t
}

pub fn cmd_dml(spec: &Path, data: &DataPaths, labels: Option<&Path>, out: &Path) -> Result<Manifest, CliError> {
    let job: DmlJob = read_json(spec)?;
    let (_, dataset) = load_data(data)?;
    let labels = labels.map(read_labels).transpose()?;
    let report = run_dml(&dataset, &job, labels.as_ref())?;
    let mut b = Bundle::create(out, "dml")?;
    b.seed("crossfit", job.spec.seed);
    b.json(DML, &report)?;
    b.write(SUMMARY, dml_table(&report).render().as_bytes())?;
    b.finish(&serde_json::json!({ "spec": job, "data": data, "labels": labels.is_some() }))
}

/// All cells and replications, run in parallel and reassembled in cell
/// order, so results do not depend on scheduling.
pub fn run_experiment_parallel(design: &ExperimentDesign) -> Result<Vec<CellResult>, CliError> {
    design.validate()?;
    let jobs: Vec<(CellId, usize)> = design.cells().flat_map(|c| (0..design.replications).map(move |r| (c, r))).collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(cell, r)| {
            simulate(&design.replication_config(cell, r))
                .map(|res| ReplicationOutcome::from_result(&res))
                .map_err(|source| cohortlab_core::policy::ExperimentError::Simulation { cell: cell.label(), source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut by_cell: BTreeMap<usize, Vec<ReplicationOutcome>> = BTreeMap::new();
    for ((cell, _), o) in jobs.iter().zip(outcomes) {
        by_cell.entry(cell.index()).or_default().push(o);
    }
    Ok(by_cell.into_iter().map(|(i, reps)| CellResult::from_replications(CellId::from_index(i), reps)).collect())
}

pub fn cells_csv(cells: &[CellResult]) -> Vec<u8> {
    let mut out = String::from(
        "cell,structural,pedagogical,regulatory,replication,seed,dropout_rate,graduation_rate,mean_time_to_degree,graduates\n",
    );
    for c in cells {
        for (r, o) in c.replications.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                c.label,
                c.cell.structural,
                c.cell.pedagogical,
                c.cell.regulatory,
                r,
                o.seed,
                o.dropout_rate,
                o.graduation_rate,
                o.mean_time_to_degree.map_or(String::new(), |x| x.to_string()),
                o.graduates
            ));
        }
    }
    out.into_bytes()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub cells: Vec<CellResult>,
    pub effects: EffectsReport,
}

pub fn run_design(design: &ExperimentDesign, thresholds: ReportThresholds) -> Result<ExperimentOutput, CliError> {
    let cells = run_experiment_parallel(design)?;
    let effects = EffectsReport::build(&cells, thresholds)?;
    Ok(ExperimentOutput { cells, effects })
}

pub fn cmd_experiment(design: &Path, reps: Option<usize>, out: &Path) -> Result<Manifest, CliError> {
    let (design, thresholds) = DesignFile::load(design, reps)?;
    let result = run_design(&design, thresholds)?;
    let mut b = Bundle::create(out, "experiment")?;
    b.seed("seed_base", design.seed_base);
    b.write(CELLS, &cells_csv(&result.cells))?;
    b.json(EFFECTS, &result.effects)?;
    b.write(SUMMARY, report::experiment_text(&result.cells, &result.effects).as_bytes())?;
    b.finish(&serde_json::json!({ "design": design, "thresholds": thresholds }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineFit {
    pub observed_seed: Option<u64>,
    pub simulated_seed: u64,
    pub fit: FitReport,
}

fn staged<T>(stage: &'static str, f: impl FnOnce() -> Result<T, CliError>) -> Result<T, CliError> {
    f().map_err(|e| e.in_stage(stage))
}

/// Runs analysis, data, archetypes, DML, simulation and report stages in
/// order. The first failure stops the run and names its stage. A failed fit
/// check is reported after the bundle and report are written.
pub fn cmd_pipeline(scenario: &Path, out: &Path) -> Result<Manifest, CliError> {
    let s = staged("scenario", || Scenario::load(scenario))?;
    let plan: AnalysisPlan = staged("scenario", || {
        s.analysis.clone().ok_or_else(|| CliError::Config("pipeline scenarios need an `analysis` block".into()))
    })?;
    let mut b = Bundle::create(out, "pipeline")?;

    let cur = staged("analysis", || s.validated_curriculum())?;
    let metrics = staged("analysis", || Ok(run_analysis(&cur, plan.top_k, s.population.start_parity)))?;
    b.json(&format!("analysis/{METRICS}"), &metrics)?;

    let (dataset, observed_seed) = match &s.data {
        Some(paths) => (staged("ingest", || ingest_dataset(paths, &cur))?, None),
        None => {
            b.seed("synth", s.seed);
            let (_, d) = staged("synth", || run_simulation(&s, cur.clone(), s.seed, false))?;
            (d, Some(s.seed))
        }
    };
    write_dataset(&mut b, "data/", &dataset, &cur)?;

    b.seed("kmeans", plan.archetypes.seed);
    let arch = staged("archetypes", || run_archetypes(&dataset, &cur, &plan.archetypes))?;
    b.write(&format!("archetypes/{LABELS}"), &labels_csv(&arch.labels))?;
    b.json(&format!("archetypes/{MODEL}"), &arch.model)?;

    b.seed("crossfit", plan.dml.spec.seed);
    let labels: BTreeMap<String, String> = arch.labels.iter().map(|(k, v)| (k.clone(), v.as_str().to_string())).collect();
    let dml = staged("dml", || run_dml(&dataset, &plan.dml, Some(&labels)))?;
    b.json(&format!("dml/{DML}"), &dml)?;

    let sim_seed = s.seed.wrapping_add(1);
    b.seed("simulate", sim_seed);
    let (result, _) = staged("simulate", || run_simulation(&s, cur.clone(), sim_seed, true))?;
    let fit = staged("simulate", || Ok(validate_against_observed(&result, &dataset, plan.fit_tolerance)?))?;
    b.json(&format!("simulate/{RESULT}"), &SimSummary::from(&result))?;
    let fit_passed = fit.pass;
    b.json(&format!("simulate/{FIT}"), &PipelineFit { observed_seed, simulated_seed: sim_seed, fit })?;

    let dir = b.dir().to_path_buf();
    let manifest = b.finish(&s)?;
    staged("report", || {
        let bundle = report::build(&dir)?;
        std::fs::write(dir.join("report.md"), report::render_text(&bundle))
            .map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))
    })?;
    if !fit_passed {
        let msg = format!("simulated curves differ from the observed cohort by more than {}", plan.fit_tolerance);
        return Err(CliError::Validation(msg).in_stage("simulate"));
    }
    Ok(manifest)
}

/// Paths for data-consuming commands: a directory with the conventional file
/// names, each overridable.
#[derive(Debug, Clone, Default)]
pub struct DataArgs {
    pub dir: Option<PathBuf>,
    pub students: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub shocks: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub curriculum: Option<PathBuf>,
}

impl DataArgs {
    pub fn resolve(&self) -> Result<DataPaths, CliError> {
        let base = self.dir.as_deref().map(DataPaths::in_dir);
        let pick = |explicit: &Option<PathBuf>, default: Option<&PathBuf>, what: &str| {
            explicit
                .clone()
                .or_else(|| default.cloned())
                .ok_or_else(|| CliError::Config(format!("no {what} file: pass --data or --{what}")))
        };
        Ok(DataPaths {
            students: pick(&self.students, base.as_ref().map(|b| &b.students), "students")?,
            trajectories: pick(&self.trajectories, base.as_ref().map(|b| &b.trajectories), "trajectories")?,
            shocks: pick(&self.shocks, base.as_ref().map(|b| &b.shocks), "shocks")?,
            registry: pick(&self.registry, base.as_ref().map(|b| &b.registry), "registry")?,
            curriculum: pick(&self.curriculum, base.as_ref().map(|b| &b.curriculum), "curriculum")?,
        })
    }
}

/// JSON bytes of a value, for tests comparing artifacts.
pub fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    to_json_bytes(v)
}
