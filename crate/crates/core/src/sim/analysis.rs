//! Post-run analyses over emitted trajectories: survival and time-to-degree
//! curves, fit against observed data, and the matched post-loss hazard
//! comparison.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{SimError, SimulationResult};
use crate::temporal::{Dataset, ExitStatus, StudentRecord};

/// Share of the cohort not yet dropped out at the end of each term `1..=horizon`.
pub fn survival_curve(records: &[StudentRecord], horizon: u32) -> Vec<f64> {
    let n = records.len().max(1) as f64;
    (1..=horizon)
        .map(|t| {
            let dropped = records.iter().filter(|r| matches!(r.exit, ExitStatus::Dropped(d) if d <= t)).count();
            1.0 - dropped as f64 / n
        })
        .collect()
}

/// Empirical CDF of graduation term among graduates, at terms `1..=horizon`.
/// All zeros when nobody graduated.
pub fn time_to_degree_cdf(records: &[StudentRecord], horizon: u32) -> Vec<f64> {
    let terms: Vec<u32> = records
        .iter()
        .filter_map(|r| match r.exit {
            ExitStatus::Graduated(t) => Some(t),
            _ => None,
        })
        .collect();
    let g = terms.len().max(1) as f64;
    (1..=horizon).map(|t| terms.iter().filter(|&&x| x <= t).count() as f64 / g).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub horizon: u32,
    pub survival_max_abs_diff: f64,
    pub time_to_degree_max_abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Compares simulated and observed survival curves and time-to-degree CDFs
/// over the simulated horizon.
pub fn validate_against_observed(result: &SimulationResult, observed: &Dataset, tolerance: f64) -> Result<FitReport, SimError> {
    if observed.horizon() < result.horizon {
        return Err(SimError::HorizonMismatch { observed: observed.horizon(), required: result.horizon });
    }
    let h = result.horizon;
    let survival = max_abs_diff(&survival_curve(&result.records, h), &survival_curve(observed.records(), h));
    let ttd = max_abs_diff(&time_to_degree_cdf(&result.records, h), &time_to_degree_cdf(observed.records(), h));
    Ok(FitReport {
        horizon: h,
        survival_max_abs_diff: survival,
        time_to_degree_max_abs_diff: ttd,
        tolerance,
        pass: survival <= tolerance && ttd <= tolerance,
    })
}

/// Dropout hazard in the term a student loses regularity versus students
/// who kept it in the same term and friction band (tenths of the index).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HazardContrast {
    pub exposed: usize,
    pub exposed_dropouts: usize,
    pub exposed_hazard: f64,
    /// Retained-regularity hazard reweighted to the exposed strata mix.
    pub matched_hazard: f64,
    /// Exposed agent-terms whose stratum had no retained comparison.
    pub unmatched: usize,
}

#[derive(Default)]
struct Cell {
    exposed: usize,
    exposed_drops: usize,
    retained: usize,
    retained_drops: usize,
}

/// Pools agent-terms from any number of runs. An agent-term is at risk when
/// the agent studied that term and did not graduate in it.
pub fn regularity_hazard_contrast<'a>(records: impl IntoIterator<Item = &'a StudentRecord>) -> HazardContrast {
    let mut cells: BTreeMap<(u32, u32), Cell> = BTreeMap::new();
    for r in records {
        let mut previously_regular = true;
        for s in &r.n3 {
            let t = s.term;
            let graduated_now = r.exit == ExitStatus::Graduated(t);
            let dropped_now = r.exit == ExitStatus::Dropped(t);
            if !graduated_now {
                let band = ((s.friction_index * 10.0) as u32).min(9);
                let cell = cells.entry((t, band)).or_default();
                if previously_regular && !s.regularity_status {
                    cell.exposed += 1;
                    cell.exposed_drops += usize::from(dropped_now);
                } else if s.regularity_status {
                    cell.retained += 1;
                    cell.retained_drops += usize::from(dropped_now);
                }
            }
            previously_regular = s.regularity_status;
        }
    }
    let mut out = HazardContrast::default();
    let mut weighted = 0.0;
    let mut matched_exposed = 0;
    for c in cells.values() {
        out.exposed += c.exposed;
        out.exposed_dropouts += c.exposed_drops;
        if c.exposed == 0 {
            continue;
        }
        if c.retained == 0 {
            out.unmatched += c.exposed;
            continue;
        }
        matched_exposed += c.exposed;
        weighted += c.exposed as f64 * c.retained_drops as f64 / c.retained as f64;
    }
    if out.exposed > 0 {
        out.exposed_hazard = out.exposed_dropouts as f64 / out.exposed as f64;
    }
    if matched_exposed > 0 {
        out.matched_hazard = weighted / matched_exposed as f64;
    }
    out
}
