//! Discrete-time agent-based simulation of a student cohort.
//!
//! Each term every enrolled agent picks eligible courses in priority order up
//! to its load cap, draws course outcomes from a logistic pass model, updates
//! its regularity status over a rolling window, and, unless it graduates,
//! draws a logistic dropout hazard. Every agent owns a ChaCha8 stream seeded
//! from the run seed and its id, so results do not depend on agent order.

mod analysis;

pub use analysis::{
    regularity_hazard_contrast, survival_curve, time_to_degree_cdf, validate_against_observed, FitReport,
    HazardContrast,
};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{
    completion_plan, friction_from_status, selection_priority, CourseStatus, Curriculum, CurriculumError, Parity,
};
use crate::fingerprint::fingerprint;
use crate::math::logistic;
use crate::policy::{apply_policy, PolicyError, PolicyIntervention};
use crate::rng::substream;
use crate::temporal::{
    CourseOutcome, Dataset, DatasetError, ExitStatus, FeatureKind, FeatureRegistry, ObservationWindow, ShockSeries,
    StudentRecord, TermSnapshot, Value,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("observed data covers {observed} terms, simulation needs {required}")]
    HorizonMismatch { observed: u32, required: u32 },
}

/// Entry features of the synthetic population.
pub mod features {
    /// N1: high socio-economic status indicator.
    pub const SES_HIGH: &str = "ses_high";
    /// N1: weekly work hours before any inflation response.
    pub const WORK_HOURS: &str = "work_hours";
    /// N2: entry diagnostic (preparation) score.
    pub const PREP_SCORE: &str = "prep_score";
}

/// Registry of the N1/N2 features emitted by [`sample_population`].
pub fn population_registry() -> FeatureRegistry {
    let mut r = FeatureRegistry::new();
    r.register(features::SES_HIGH, ObservationWindow::PreEntry, FeatureKind::Boolean).expect("fresh registry");
    r.register(features::WORK_HOURS, ObservationWindow::PreEntry, FeatureKind::Numeric).expect("fresh registry");
    r.register(features::PREP_SCORE, ObservationWindow::Entry, FeatureKind::Numeric).expect("fresh registry");
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub n: usize,
    pub prep_mean: f64,
    pub prep_sd: f64,
    pub high_ses_share: f64,
    /// Added to the preparation mean of high-SES students.
    #[serde(default)]
    pub ses_prep_shift: f64,
    pub work_hours_mean: f64,
    pub work_hours_sd: f64,
    /// Added to the work-hours mean of high-SES students.
    #[serde(default)]
    pub ses_work_shift: f64,
    /// Calendar parity of the cohort's first term.
    #[serde(default)]
    pub start_parity: Parity,
}

impl PopulationSpec {
    fn validate(&self) -> Result<(), SimError> {
        let finite = [self.prep_mean, self.prep_sd, self.ses_prep_shift, self.work_hours_mean, self.work_hours_sd, self.ses_work_shift];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidDistribution("parameters must be finite".into()));
        }
        if self.prep_sd < 0.0 || self.work_hours_sd < 0.0 {
            return Err(SimError::InvalidDistribution("standard deviations must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.high_ses_share) {
            return Err(SimError::InvalidDistribution("high_ses_share must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Pass logit: `a0 + base_difficulty + a1·prep − a2·overload − a3·strike − a4·work − a5·gap`.
///
/// `gap` counts prerequisites of the attempted course, as the curriculum stood
/// before any policy was applied, that the student had not passed when the
/// term started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassModel {
    pub a0: f64,
    pub a1_prep: f64,
    pub a2_overload: f64,
    pub a3_strike: f64,
    pub a4_work: f64,
    #[serde(default)]
    pub a5_prep_gap: f64,
}

/// Dropout logit: `h0 + h1·F + h2·lost + h3·inflation + h4·strike + h5·F·inflation + h6·term`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HazardModel {
    pub h0: f64,
    pub h1_friction: f64,
    pub h2_regularity_loss: f64,
    pub h3_inflation: f64,
    pub h4_strike: f64,
    pub h5_friction_inflation: f64,
    pub h6_tenure: f64,
}

/// Regular while at least `required_completions` courses were passed or
/// regularized over the last `window_terms` terms. The rule is not applied
/// before a full window has elapsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityRule {
    pub required_completions: u32,
    pub window_terms: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorRules {
    pub pass: PassModel,
    pub hazard: HazardModel,
    pub regularity: RegularityRule,
    pub nominal_cap: usize,
    /// Load cap while regularity is lost.
    pub reduced_cap: usize,
    /// Load above which the overload penalty applies.
    pub comfortable_load: usize,
    /// Work hours added per unit of term inflation.
    #[serde(default)]
    pub work_inflation_slope: f64,
    /// Probability that a failed attempt still regularizes the course.
    #[serde(default)]
    pub partial_credit: f64,
}

impl Default for BehaviorRules {
    fn default() -> Self {
        Self {
            pass: PassModel { a0: 1.0, a1_prep: 0.8, a2_overload: 0.4, a3_strike: 2.0, a4_work: 0.02, a5_prep_gap: 0.0 },
            hazard: HazardModel {
                h0: -3.5,
                h1_friction: 1.5,
                h2_regularity_loss: 1.2,
                h3_inflation: 2.0,
                h4_strike: 1.0,
                h5_friction_inflation: 4.0,
                h6_tenure: -0.05,
            },
            regularity: RegularityRule { required_completions: 2, window_terms: 2 },
            nominal_cap: 5,
            reduced_cap: 2,
            comfortable_load: 4,
            work_inflation_slope: 20.0,
            partial_credit: 0.4,
        }
    }
}

impl BehaviorRules {
    /// Everyone passes and nobody drops out.
    pub fn forced_pass(nominal_cap: usize) -> Self {
        Self {
            pass: PassModel { a0: 1e6, a1_prep: 0.0, a2_overload: 0.0, a3_strike: 0.0, a4_work: 0.0, a5_prep_gap: 0.0 },
            hazard: HazardModel {
                h0: -1e6,
                h1_friction: 0.0,
                h2_regularity_loss: 0.0,
                h3_inflation: 0.0,
                h4_strike: 0.0,
                h5_friction_inflation: 0.0,
                h6_tenure: 0.0,
            },
            regularity: RegularityRule { required_completions: 0, window_terms: 1 },
            nominal_cap,
            reduced_cap: nominal_cap,
            comfortable_load: nominal_cap,
            work_inflation_slope: 0.0,
            partial_credit: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let p = &self.pass;
        let h = &self.hazard;
        let coefficients = [
            p.a0, p.a1_prep, p.a2_overload, p.a3_strike, p.a4_work, p.a5_prep_gap, h.h0, h.h1_friction, h.h2_regularity_loss,
            h.h3_inflation, h.h4_strike, h.h5_friction_inflation, h.h6_tenure, self.work_inflation_slope,
        ];
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(SimError::Config("rule coefficients must be finite".into()));
        }
        if self.regularity.window_terms == 0 {
            return Err(SimError::Config("regularity window must be at least one term".into()));
        }
        if self.nominal_cap == 0 || self.reduced_cap > self.nominal_cap {
            return Err(SimError::Config("need 1 <= nominal_cap and reduced_cap <= nominal_cap".into()));
        }
        if !(0.0..=1.0).contains(&self.partial_credit) {
            return Err(SimError::Config("partial_credit must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: String,
    pub ses_high: bool,
    pub prep: f64,
    /// Base weekly work hours; the inflation response is added per term.
    pub work_hours: f64,
    /// Best status per course, indexed like the curriculum's courses.
    pub status: Vec<CourseStatus>,
    pub attempts: Vec<u32>,
    pub regular: bool,
    /// Courses passed or regularized in each elapsed term.
    pub completions: Vec<u32>,
    pub exit: ExitStatus,
    pub snapshots: Vec<TermSnapshot>,
    rng: ChaCha8Rng,
}

impl AgentState {
    pub fn is_enrolled(&self) -> bool {
        self.exit == ExitStatus::Enrolled
    }

    pub fn passed(&self, course: usize) -> bool {
        self.status[course] == CourseStatus::Passed
    }

    pub fn regularized(&self, course: usize) -> bool {
        self.status[course] >= CourseStatus::Regularized
    }

    fn entry_record(&self) -> StudentRecord {
        StudentRecord {
            id: self.id.clone(),
            n1: [
                (features::SES_HIGH.into(), Value::Bool(self.ses_high)),
                (features::WORK_HOURS.into(), Value::Num(self.work_hours)),
            ]
            .into_iter()
            .collect(),
            n2: [(features::PREP_SCORE.into(), Value::Num(self.prep))].into_iter().collect(),
            n3: Vec::new(),
            exit: ExitStatus::Enrolled,
        }
    }

    pub fn record(&self) -> StudentRecord {
        StudentRecord { n3: self.snapshots.clone(), exit: self.exit, ..self.entry_record() }
    }
}

fn agent_id(i: usize, n: usize) -> String {
    let width = n.max(1).ilog10() as usize + 1;
    format!("S{:0w$}", i + 1, w = width.max(5))
}

/// Draws `spec.n` agents with their N1/N2 entry records.
pub fn sample_population(spec: &PopulationSpec, courses: usize, seed: u64) -> Result<(Vec<AgentState>, Vec<StudentRecord>), SimError> {
    spec.validate()?;
    let prep = Normal::new(0.0, spec.prep_sd).map_err(|e| SimError::InvalidDistribution(format!("{e}")))?;
    let work = Normal::new(0.0, spec.work_hours_sd).map_err(|e| SimError::InvalidDistribution(format!("{e}")))?;
    let agents: Vec<AgentState> = (0..spec.n)
        .map(|i| {
            let id = agent_id(i, spec.n);
            let mut rng = substream(seed, &id);
            let ses_high = rng.random::<f64>() < spec.high_ses_share;
            let shift = |v: f64| if ses_high { v } else { 0.0 };
            let p = spec.prep_mean + shift(spec.ses_prep_shift) + prep.sample(&mut rng);
            let w = (spec.work_hours_mean + shift(spec.ses_work_shift) + work.sample(&mut rng)).max(0.0);
            AgentState {
                id,
                ses_high,
                prep: p,
                work_hours: w,
                status: vec![CourseStatus::Untaken; courses],
                attempts: vec![0; courses],
                regular: true,
                completions: Vec::new(),
                exit: ExitStatus::Enrolled,
                snapshots: Vec::new(),
                rng,
            }
        })
        .collect();
    let records = agents.iter().map(AgentState::entry_record).collect();
    Ok((agents, records))
}

/// Agents plus the fixed environment they are stepped through.
pub struct World<'a> {
    pub curriculum: &'a Curriculum,
    pub rules: &'a BehaviorRules,
    pub shocks: &'a ShockSeries,
    pub start: Parity,
    pub agents: Vec<AgentState>,
    priority: Vec<usize>,
    knowledge: Vec<Vec<usize>>,
}

impl<'a> World<'a> {
    pub fn new(
        curriculum: &'a Curriculum,
        rules: &'a BehaviorRules,
        shocks: &'a ShockSeries,
        start: Parity,
        agents: Vec<AgentState>,
    ) -> Self {
        let priority = completion_plan(curriculum, rules.nominal_cap, start)
            .map(|plan| plan.priority)
            .unwrap_or_else(|_| selection_priority(curriculum));
        Self::with_priority(curriculum, rules, shocks, start, agents, priority)
    }

    /// Courses are considered in `priority` order when filling a term.
    pub fn with_priority(
        curriculum: &'a Curriculum,
        rules: &'a BehaviorRules,
        shocks: &'a ShockSeries,
        start: Parity,
        agents: Vec<AgentState>,
        priority: Vec<usize>,
    ) -> Self {
        let knowledge = (0..curriculum.len()).map(|c| curriculum.prerequisites(c).iter().map(|&(p, _)| p).collect()).collect();
        Self { curriculum, rules, shocks, start, agents, priority, knowledge }
    }

    /// Measures preparation gaps against the prerequisites of `original`
    /// instead of the simulated curriculum. Courses are matched by id.
    pub fn with_knowledge_from(mut self, original: &Curriculum) -> Self {
        self.knowledge = (0..self.curriculum.len())
            .map(|c| match original.index_of(&self.curriculum.course(c).id) {
                None => Vec::new(),
                Some(o) => original
                    .prerequisites(o)
                    .iter()
                    .filter_map(|&(p, _)| self.curriculum.index_of(&original.course(p).id))
                    .collect(),
            })
            .collect();
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TermLog {
    pub term: u32,
    pub active: usize,
    pub new_graduates: usize,
    pub new_dropouts: usize,
    pub regularity_losses: usize,
    pub friction_sum: f64,
    pub attempts: Vec<u32>,
    pub failures: Vec<u32>,
}

/// Advances every enrolled agent through `term`. Panics if the shock series
/// does not cover the term.
pub fn step_term(world: &mut World<'_>, term: u32) -> TermLog {
    let cur = world.curriculum;
    let rules = world.rules;
    let shock = world.shocks.get(term).expect("shock series covers the horizon");
    let parity = Parity::of_term(term, world.start);
    let mut log = TermLog { term, attempts: vec![0; cur.len()], failures: vec![0; cur.len()], ..Default::default() };
    for agent in world.agents.iter_mut().filter(|a| a.is_enrolled()) {
        log.active += 1;
        let cap = if agent.regular { rules.nominal_cap } else { rules.reduced_cap };
        let mut selected = Vec::with_capacity(cap);
        for &c in &world.priority {
            if selected.len() == cap {
                break;
            }
            let eligible = !agent.passed(c)
                && cur.course(c).offered_in(parity)
                && cur.prerequisites(c).iter().all(|&(p, kind)| agent.status[p].satisfies(kind));
            if eligible {
                selected.push(c);
            }
        }

        let work = (agent.work_hours + rules.work_inflation_slope * shock.inflation_rate).max(0.0);
        let overload = selected.len().saturating_sub(rules.comfortable_load) as f64;
        let p = &rules.pass;
        let logit = p.a0 + p.a1_prep * agent.prep - p.a2_overload * overload - p.a3_strike * shock.strike_fraction - p.a4_work * work;
        let mut snap = TermSnapshot::empty(term);
        let mut completed = 0;
        // Gaps count what was passed before the term started.
        let gaps: Vec<f64> =
            selected.iter().map(|&c| world.knowledge[c].iter().filter(|&&k| !agent.passed(k)).count() as f64).collect();
        for (&c, gap) in selected.iter().zip(gaps) {
            let course = cur.course(c);
            let pass_draw: f64 = agent.rng.random();
            let credit_draw: f64 = agent.rng.random();
            let outcome = if pass_draw < logistic(logit + course.base_difficulty - p.a5_prep_gap * gap) {
                snap.credits_earned += course.credits;
                CourseOutcome::Passed
            } else if agent.status[c] < CourseStatus::Regularized && credit_draw < rules.partial_credit {
                CourseOutcome::Regularized
            } else {
                log.failures[c] += 1;
                CourseOutcome::Failed
            };
            if outcome != CourseOutcome::Failed {
                completed += 1;
            }
            log.attempts[c] += 1;
            agent.attempts[c] += 1;
            agent.status[c] = agent.status[c].after(Some(outcome));
            snap.enrollments.push(course.id.clone());
            snap.outcomes.insert(course.id.clone(), outcome);
        }

        agent.completions.push(completed);
        let was_regular = agent.regular;
        let w = rules.regularity.window_terms as usize;
        if agent.completions.len() >= w {
            let recent: u32 = agent.completions[agent.completions.len() - w..].iter().sum();
            agent.regular = recent >= rules.regularity.required_completions;
        }
        if was_regular && !agent.regular {
            log.regularity_losses += 1;
        }
        let friction = friction_from_status(cur, &agent.status);
        log.friction_sum += friction;
        snap.regularity_status = agent.regular;
        snap.friction_index = friction;
        agent.snapshots.push(snap);

        if cur.graduation_met(|i| agent.status[i] == CourseStatus::Passed) {
            agent.exit = ExitStatus::Graduated(term);
            log.new_graduates += 1;
            continue;
        }
        let h = &rules.hazard;
        let lost = if agent.regular { 0.0 } else { 1.0 };
        let hazard_logit = h.h0
            + h.h1_friction * friction
            + h.h2_regularity_loss * lost
            + h.h3_inflation * shock.inflation_rate
            + h.h4_strike * shock.strike_fraction
            + h.h5_friction_inflation * friction * shock.inflation_rate
            + h.h6_tenure * f64::from(term);
        let exit_draw: f64 = agent.rng.random();
        if exit_draw < logistic(hazard_logit) {
            agent.exit = ExitStatus::Dropped(term);
            log.new_dropouts += 1;
        }
    }
    log
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub curriculum: Curriculum,
    pub population: PopulationSpec,
    pub shocks: ShockSeries,
    pub rules: BehaviorRules,
    #[serde(default)]
    pub policy: Vec<PolicyIntervention>,
    pub horizon: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermAggregate {
    pub term: u32,
    /// Still enrolled at the end of the term.
    pub enrolled: usize,
    /// Cumulative graduates.
    pub graduated: usize,
    /// Cumulative dropouts.
    pub dropped: usize,
    pub active: usize,
    pub new_graduates: usize,
    pub new_dropouts: usize,
    pub mean_friction: f64,
    pub regularity_losses: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourseCongestion {
    pub attempts: u64,
    pub failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub config_fingerprint: String,
    pub seed: u64,
    pub n: usize,
    pub horizon: u32,
    pub terms: Vec<TermAggregate>,
    pub congestion: BTreeMap<String, CourseCongestion>,
    pub dropout_rate: f64,
    pub graduation_rate: f64,
    pub still_enrolled: usize,
    /// Mean over graduates; absent when nobody graduated.
    pub mean_time_to_degree: Option<f64>,
    pub time_to_degree: BTreeMap<u32, usize>,
    pub warnings: Vec<String>,
    /// Curriculum after policy application, as simulated.
    pub curriculum: Curriculum,
    pub records: Vec<StudentRecord>,
}

impl SimulationResult {
    /// The emitted trajectories as a dataset under the simulated curriculum.
    pub fn to_dataset(&self, shocks: &ShockSeries) -> Result<Dataset, Vec<DatasetError>> {
        Dataset::new(population_registry(), self.records.clone(), shocks.clone(), &self.curriculum)
    }
}

/// Applies the policy list, then runs up to `horizon` terms, stopping early
/// once nobody is enrolled.
pub fn simulate(config: &SimulationConfig) -> Result<SimulationResult, SimError> {
    config.rules.validate()?;
    let applied = apply_policy(&config.curriculum, &config.rules, &config.policy)?;
    let (cur, rules) = (&applied.curriculum, &applied.rules);
    config.shocks.validate().map_err(|e| SimError::Config(format!("{e}")))?;
    if config.shocks.len() < config.horizon {
        return Err(SimError::Config(format!(
            "shock series covers {} terms, horizon is {}",
            config.shocks.len(),
            config.horizon
        )));
    }
    let start = config.population.start_parity;
    let plan = completion_plan(cur, rules.nominal_cap, start)?;
    let needed = plan.terms;
    if config.horizon < needed {
        return Err(SimError::Config(format!("horizon {} is shorter than the minimum completion time {needed}", config.horizon)));
    }

    let (agents, _) = sample_population(&config.population, cur.len(), config.seed)?;
    let n = agents.len();
    let mut world =
        World::with_priority(cur, rules, &config.shocks, start, agents, plan.priority).with_knowledge_from(&config.curriculum);
    let mut terms = Vec::new();
    let mut congestion = vec![CourseCongestion::default(); cur.len()];
    let (mut graduated, mut dropped) = (0, 0);
    for t in 1..=config.horizon {
        if !world.agents.iter().any(AgentState::is_enrolled) {
            break;
        }
        let log = step_term(&mut world, t);
        graduated += log.new_graduates;
        dropped += log.new_dropouts;
        let enrolled = world.agents.iter().filter(|a| a.is_enrolled()).count();
        assert_eq!(enrolled + graduated + dropped, n, "cohort conservation violated in term {t}");
        for (c, (a, f)) in congestion.iter_mut().zip(log.attempts.iter().zip(&log.failures)) {
            c.attempts += u64::from(*a);
            c.failures += u64::from(*f);
        }
        terms.push(TermAggregate {
            term: t,
            enrolled,
            graduated,
            dropped,
            active: log.active,
            new_graduates: log.new_graduates,
            new_dropouts: log.new_dropouts,
            mean_friction: if log.active == 0 { 0.0 } else { log.friction_sum / log.active as f64 },
            regularity_losses: log.regularity_losses,
        });
    }

    let mut time_to_degree = BTreeMap::new();
    for a in &world.agents {
        if let ExitStatus::Graduated(t) = a.exit {
            *time_to_degree.entry(t).or_insert(0) += 1;
        }
    }
    let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let mean_time_to_degree = (graduated > 0)
        .then(|| time_to_degree.iter().map(|(t, k)| f64::from(*t) * *k as f64).sum::<f64>() / graduated as f64);
    Ok(SimulationResult {
        config_fingerprint: fingerprint(config),
        seed: config.seed,
        n,
        horizon: config.horizon,
        terms,
        congestion: cur.courses().iter().map(|c| c.id.clone()).zip(congestion).collect(),
        dropout_rate: rate(dropped),
        graduation_rate: rate(graduated),
        still_enrolled: n - graduated - dropped,
        mean_time_to_degree,
        time_to_degree,
        warnings: applied.warnings,
        curriculum: applied.curriculum.clone(),
        records: world.agents.iter().map(AgentState::record).collect(),
    })
}
