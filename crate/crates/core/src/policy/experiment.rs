//! Full 2³ factorial experiments over the three policy axes.
//!
//! Cell `c` has axis `i` switched on when bit `i` of `c` is set (bit 0
//! structural, bit 1 pedagogical, bit 2 regulatory). Replication `r` of cell
//! `c` runs with seed `seed_base + c·R + r`. Every contrast is
//! `¼·Σ sign·mean` over the eight cell means, where the sign of a cell is the
//! product over the contrast's axes of +1 (on) or −1 (off).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Axis, PolicyIntervention};
use crate::math::sqrt;
use crate::sim::{simulate, SimError, SimulationConfig, SimulationResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("cell {cell}: {source}")]
    Simulation { cell: String, source: SimError },
    #[error("incomplete design: {0}")]
    IncompleteDesign(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub structural: bool,
    pub pedagogical: bool,
    pub regulatory: bool,
}

impl CellId {
    pub const BASE: CellId = CellId { structural: false, pedagogical: false, regulatory: false };

    pub fn from_index(i: usize) -> Self {
        Self { structural: i & 1 != 0, pedagogical: i & 2 != 0, regulatory: i & 4 != 0 }
    }

    pub fn index(self) -> usize {
        usize::from(self.structural) | usize::from(self.pedagogical) << 1 | usize::from(self.regulatory) << 2
    }

    pub fn is_on(self, axis: Axis) -> bool {
        match axis {
            Axis::Structural => self.structural,
            Axis::Pedagogical => self.pedagogical,
            Axis::Regulatory => self.regulatory,
        }
    }

    /// Compact form such as `S+P-R-`.
    pub fn label(self) -> String {
        let s = |on: bool| if on { '+' } else { '-' };
        format!("S{}P{}R{}", s(self.structural), s(self.pedagogical), s(self.regulatory))
    }

    fn sign(self, axes: &[Axis]) -> f64 {
        axes.iter().map(|&a| if self.is_on(a) { 1.0 } else { -1.0 }).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDesign {
    pub base: SimulationConfig,
    /// On-level interventions per axis. A missing axis has an empty on-level,
    /// so its on and off cells differ only in seeds.
    pub factors: BTreeMap<Axis, Vec<PolicyIntervention>>,
    pub replications: usize,
    pub seed_base: u64,
}

impl ExperimentDesign {
    pub const SEED_FORMULA: &'static str = "seed = seed_base + cell_index * replications + replication_index";

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.replications == 0 {
            return Err(ExperimentError::InvalidDesign("replications must be positive".into()));
        }
        for (axis, list) in &self.factors {
            if let Some(iv) = list.iter().find(|iv| iv.axis() != *axis) {
                return Err(ExperimentError::InvalidDesign(format!(
                    "{} intervention listed under factor {}",
                    iv.axis().as_str(),
                    axis.as_str()
                )));
            }
        }
        Ok(())
    }

    pub fn seed(&self, cell: CellId, replication: usize) -> u64 {
        self.seed_base.wrapping_add((cell.index() * self.replications + replication) as u64)
    }

    /// Simulation config of one replication: base policy followed by the
    /// on-level interventions in axis order.
    pub fn replication_config(&self, cell: CellId, replication: usize) -> SimulationConfig {
        let mut cfg = self.base.clone();
        for axis in Axis::ALL {
            if cell.is_on(axis) {
                cfg.policy.extend(self.factors.get(&axis).into_iter().flatten().cloned());
            }
        }
        cfg.seed = self.seed(cell, replication);
        cfg
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> {
        (0..8).map(CellId::from_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    DropoutRate,
    GraduationRate,
    MeanTimeToDegree,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::DropoutRate, Outcome::GraduationRate, Outcome::MeanTimeToDegree];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::DropoutRate => "dropout_rate",
            Outcome::GraduationRate => "graduation_rate",
            Outcome::MeanTimeToDegree => "mean_time_to_degree",
        }
    }

    /// +1 when larger is better.
    fn favorable_sign(self) -> f64 {
        match self {
            Outcome::GraduationRate => 1.0,
            Outcome::DropoutRate | Outcome::MeanTimeToDegree => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub seed: u64,
    pub dropout_rate: f64,
    pub graduation_rate: f64,
    /// Over graduates only; absent when nobody graduated.
    pub mean_time_to_degree: Option<f64>,
    pub graduates: usize,
}

impl ReplicationOutcome {
    pub fn from_result(r: &SimulationResult) -> Self {
        Self {
            seed: r.seed,
            dropout_rate: r.dropout_rate,
            graduation_rate: r.graduation_rate,
            mean_time_to_degree: r.mean_time_to_degree,
            graduates: r.time_to_degree.values().sum(),
        }
    }

    pub fn value(&self, outcome: Outcome) -> Option<f64> {
        match outcome {
            Outcome::DropoutRate => Some(self.dropout_rate),
            Outcome::GraduationRate => Some(self.graduation_rate),
            Outcome::MeanTimeToDegree => self.mean_time_to_degree,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStats {
    pub mean: f64,
    /// Sample standard deviation across replications (0 with one).
    pub sd: f64,
    pub n: usize,
}

impl OutcomeStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Some(Self { mean, sd: sqrt(var), n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: CellId,
    pub label: String,
    pub replications: Vec<ReplicationOutcome>,
    pub dropout_rate: OutcomeStats,
    pub graduation_rate: OutcomeStats,
    pub mean_time_to_degree: Option<OutcomeStats>,
}

impl CellResult {
    pub fn from_replications(cell: CellId, replications: Vec<ReplicationOutcome>) -> Self {
        let stats = |o: Outcome| OutcomeStats::of(&replications.iter().filter_map(|r| r.value(o)).collect::<Vec<_>>());
        let empty = OutcomeStats { mean: 0.0, sd: 0.0, n: 0 };
        Self {
            cell,
            label: cell.label(),
            dropout_rate: stats(Outcome::DropoutRate).unwrap_or(empty),
            graduation_rate: stats(Outcome::GraduationRate).unwrap_or(empty),
            mean_time_to_degree: stats(Outcome::MeanTimeToDegree),
            replications,
        }
    }

    pub fn stats(&self, outcome: Outcome) -> Option<OutcomeStats> {
        match outcome {
            Outcome::DropoutRate => Some(self.dropout_rate).filter(|s| s.n > 0),
            Outcome::GraduationRate => Some(self.graduation_rate).filter(|s| s.n > 0),
            Outcome::MeanTimeToDegree => self.mean_time_to_degree,
        }
    }
}

/// Runs every replication of every cell sequentially.
pub fn run_experiment(design: &ExperimentDesign) -> Result<Vec<CellResult>, ExperimentError> {
    design.validate()?;
    design
        .cells()
        .map(|cell| {
            let reps = (0..design.replications)
                .map(|r| {
                    simulate(&design.replication_config(cell, r))
                        .map(|res| ReplicationOutcome::from_result(&res))
                        .map_err(|source| ExperimentError::Simulation { cell: cell.label(), source })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(CellResult::from_replications(cell, reps))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub axes: Vec<Axis>,
    pub estimate: f64,
    pub std_error: f64,
}

impl Contrast {
    pub fn name(&self) -> String {
        self.axes.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(":")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeEffects {
    pub outcome: Outcome,
    pub main: Vec<Contrast>,
    pub two_way: Vec<Contrast>,
    pub three_way: Contrast,
}

/// Main effects and interaction contrasts of one outcome. Needs all eight
/// cells with the outcome defined in each.
pub fn decompose_effects(cells: &[CellResult], outcome: Outcome) -> Result<OutcomeEffects, ExperimentError> {
    let mut by_cell: BTreeMap<CellId, OutcomeStats> = BTreeMap::new();
    for c in cells {
        let s = c.stats(outcome).ok_or_else(|| {
            ExperimentError::IncompleteDesign(format!("cell {} has no {} values", c.label, outcome.as_str()))
        })?;
        if by_cell.insert(c.cell, s).is_some() {
            return Err(ExperimentError::IncompleteDesign(format!("cell {} appears twice", c.label)));
        }
    }
    if by_cell.len() != 8 {
        let missing: Vec<String> = (0..8).map(CellId::from_index).filter(|c| !by_cell.contains_key(c)).map(CellId::label).collect();
        return Err(ExperimentError::IncompleteDesign(format!("missing cells {}", missing.join(", "))));
    }
    let contrast = |axes: &[Axis]| {
        let mut estimate = 0.0;
        let mut var = 0.0;
        for (cell, s) in &by_cell {
            estimate += cell.sign(axes) * s.mean;
            var += s.sd * s.sd / s.n as f64;
        }
        Contrast { axes: axes.to_vec(), estimate: estimate / 4.0, std_error: sqrt(var) / 4.0 }
    };
    use Axis::*;
    Ok(OutcomeEffects {
        outcome,
        main: Axis::ALL.iter().map(|&a| contrast(&[a])).collect(),
        two_way: [[Structural, Pedagogical], [Structural, Regulatory], [Pedagogical, Regulatory]].iter().map(|p| contrast(p)).collect(),
        three_way: contrast(&[Structural, Pedagogical, Regulatory]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplifierVerdict {
    pub pair: [Axis; 2],
    pub estimate: f64,
    pub std_error: f64,
    /// Improvement in the favorable direction of the outcome.
    pub improvement: f64,
    pub involves_structural: bool,
    pub flagged: bool,
}

/// Verdict per axis pair: flagged when the interaction improves the outcome
/// by more than `threshold` and by more than two standard errors.
pub fn detect_amplifiers(effects: &OutcomeEffects, threshold: f64) -> Vec<AmplifierVerdict> {
    effects
        .two_way
        .iter()
        .map(|c| {
            let improvement = effects.outcome.favorable_sign() * c.estimate;
            AmplifierVerdict {
                pair: [c.axes[0], c.axes[1]],
                estimate: c.estimate,
                std_error: c.std_error,
                improvement,
                involves_structural: c.axes.contains(&Axis::Structural),
                flagged: improvement > threshold && improvement > 2.0 * c.std_error,
            }
        })
        .collect()
}

/// Cells other than the base whose mean dropout is at least
/// `base − eps_dropout` and whose mean time-to-degree is at least
/// `base + delta_ttd`.
pub fn flag_adverse_outcomes(cells: &[CellResult], base: CellId, eps_dropout: f64, delta_ttd: f64) -> Vec<CellId> {
    let Some(b) = cells.iter().find(|c| c.cell == base) else {
        return Vec::new();
    };
    let Some(b_ttd) = b.mean_time_to_degree else {
        return Vec::new();
    };
    cells
        .iter()
        .filter(|c| c.cell != base)
        .filter(|c| {
            c.dropout_rate.mean >= b.dropout_rate.mean - eps_dropout
                && c.mean_time_to_degree.is_some_and(|t| t.mean >= b_ttd.mean + delta_ttd)
        })
        .map(|c| c.cell)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportThresholds {
    pub amplifier: f64,
    pub adverse_dropout_eps: f64,
    pub adverse_ttd_delta: f64,
}

impl Default for ReportThresholds {
    fn default() -> Self {
        Self { amplifier: 0.005, adverse_dropout_eps: 0.01, adverse_ttd_delta: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsReport {
    pub seed_formula: String,
    pub replications: usize,
    pub thresholds: ReportThresholds,
    pub outcomes: BTreeMap<Outcome, OutcomeEffects>,
    /// Verdicts on the dropout-rate interactions.
    pub amplifiers: Vec<AmplifierVerdict>,
    pub adverse_cells: Vec<CellId>,
}

impl EffectsReport {
    /// Decomposes every outcome that is defined in all cells.
    pub fn build(cells: &[CellResult], thresholds: ReportThresholds) -> Result<Self, ExperimentError> {
        let mut outcomes = BTreeMap::new();
        for o in Outcome::ALL {
            match decompose_effects(cells, o) {
                Ok(e) => {
                    outcomes.insert(o, e);
                }
                Err(e) if o != Outcome::MeanTimeToDegree => return Err(e),
                Err(_) => {}
            }
        }
        let amplifiers = detect_amplifiers(&outcomes[&Outcome::DropoutRate], thresholds.amplifier);
        Ok(Self {
            seed_formula: ExperimentDesign::SEED_FORMULA.into(),
            replications: cells.iter().map(|c| c.replications.len()).max().unwrap_or(0),
            thresholds,
            outcomes,
            amplifiers,
            adverse_cells: flag_adverse_outcomes(cells, CellId::BASE, thresholds.adverse_dropout_eps, thresholds.adverse_ttd_delta),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cell(i: usize, dropout: f64, ttd: f64) -> CellResult {
        let reps = (0..3)
            .map(|r| ReplicationOutcome {
                seed: r,
                dropout_rate: dropout,
                graduation_rate: 1.0 - dropout,
                mean_time_to_degree: Some(ttd),
                graduates: 10,
            })
            .collect();
        CellResult::from_replications(CellId::from_index(i), reps)
    }

    fn additive(ab: f64) -> Vec<CellResult> {
        (0..8)
            .map(|i| {
                let c = CellId::from_index(i);
                let s = |on: bool| if on { 1.0 } else { 0.0 };
                let mut d = 0.30 - 0.04 * s(c.structural) - 0.02 * s(c.pedagogical) + 0.01 * s(c.regulatory);
                // Effect-coded with half amplitude so the SP contrast equals `ab`.
                d += ab / 2.0 * c.sign(&[Axis::Structural, Axis::Pedagogical]);
                cell(i, d, 10.0 + s(c.regulatory))
            })
            .collect()
    }

    #[test]
    fn cell_indexing() {
        for i in 0..8 {
            assert_eq!(CellId::from_index(i).index(), i);
        }
        assert_eq!(CellId::from_index(5).label(), "S+P-R+");
    }

    #[test]
    fn additive_means_have_null_interactions() {
        let e = decompose_effects(&additive(0.0), Outcome::DropoutRate).unwrap();
        let main: Vec<f64> = e.main.iter().map(|c| c.estimate).collect();
        for (got, want) in main.iter().zip([-0.04, -0.02, 0.01]) {
            assert!((got - want).abs() < 1e-12);
        }
        for c in e.two_way.iter().chain([&e.three_way]) {
            assert!(c.estimate.abs() < 1e-12);
            assert_eq!(c.std_error, 0.0);
        }
        assert!(detect_amplifiers(&e, 0.0).iter().all(|v| !v.flagged));
    }

    #[test]
    fn injected_interaction_is_recovered() {
        let e = decompose_effects(&additive(0.05), Outcome::DropoutRate).unwrap();
        assert!((e.two_way[0].estimate - 0.05).abs() < 1e-12);
        assert!(detect_amplifiers(&e, 0.01).iter().all(|v| !v.flagged));
        let e = decompose_effects(&additive(-0.05), Outcome::DropoutRate).unwrap();
        assert!((e.two_way[0].estimate + 0.05).abs() < 1e-12);
        let flagged: Vec<[Axis; 2]> = detect_amplifiers(&e, 0.01).into_iter().filter(|v| v.flagged).map(|v| v.pair).collect();
        assert_eq!(flagged, vec![[Axis::Structural, Axis::Pedagogical]]);
        assert!(detect_amplifiers(&e, 1.0).iter().all(|v| !v.flagged));
    }

    #[test]
    fn missing_cell() {
        let mut cells = additive(0.0);
        cells.pop();
        assert!(matches!(decompose_effects(&cells, Outcome::DropoutRate), Err(ExperimentError::IncompleteDesign(_))));
    }

    #[test]
    fn adverse_definition() {
        let mut cells = additive(0.0);
        // Regulatory cells: dropout +0.01, ttd +1.
        let flagged = flag_adverse_outcomes(&cells, CellId::BASE, 0.02, 0.5);
        assert_eq!(flagged, vec![CellId::from_index(4), CellId::from_index(6)]);
        cells[4] = cell(4, 0.30, 10.0);
        assert!(!flag_adverse_outcomes(&cells, CellId::BASE, 0.02, 0.5).contains(&CellId::from_index(4)));
        cells[4] = cell(4, 0.20, 15.0);
        assert!(!flag_adverse_outcomes(&cells, CellId::BASE, 0.02, 0.5).contains(&CellId::from_index(4)));
    }
}
