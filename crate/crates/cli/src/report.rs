//! Report assembly from a verified output bundle.
//!
//! The manifest is checked before any artifact is read. Each known artifact
//! found in the bundle (at the top level or in a stage subdirectory)
//! contributes titled table sections.

use std::collections::BTreeMap;
use std::path::Path;

use cohortlab_core::policy::{CellId, CellResult, EffectsReport, Outcome, ReplicationOutcome};
use serde::{Deserialize, Serialize};

use crate::bundle::{verify, Manifest};
use crate::commands::{
    dml_table, CurriculumMetrics, DmlReport, PipelineFit, SimSummary, CELLS, DML, EFFECTS, FIT, LABELS,
    METRICS, RESULT,
};
use crate::error::CliError;
use crate::io::read_json;
use crate::table::Table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    pub table: Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub command: String,
    pub version: String,
    pub config_fingerprint: String,
    pub seeds: BTreeMap<String, u64>,
    pub sections: Vec<Section>,
}

fn section(title: impl Into<String>, table: Table) -> Section {
    Section { title: title.into(), table }
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

pub fn histogram(counts: &BTreeMap<u32, usize>) -> Table {
    let mut t = Table::new(["time to degree", "graduates"]);
    for (term, n) in counts {
        t.row([term.to_string(), n.to_string()]);
    }
    t
}

fn metrics_sections(m: &CurriculumMetrics) -> Vec<Section> {
    let mut summary = Table::new(["metric", "value"]);
    summary.row(["courses".into(), m.courses.to_string()]);
    summary.row(["edges".into(), m.edges.to_string()]);
    summary.row(["longest chain".into(), m.longest_chain.length.to_string()]);
    summary.row(["chain".into(), m.longest_chain.path.join(" > ")]);
    summary.row(["backbone".into(), m.backbone.join(" ")]);
    let mut b = Table::new(["course", "betweenness"]);
    for x in &m.bottlenecks {
        b.row([x.course.clone(), f4(x.score)]);
    }
    let mut caps = Table::new(["load cap", "min terms"]);
    for (cap, terms) in &m.min_completion_terms {
        caps.row([cap.to_string(), terms.map_or("unreachable".into(), |t| t.to_string())]);
    }
    vec![section("Curriculum", summary), section("Bottlenecks", b), section("Minimum completion time", caps)]
}

fn sim_sections(s: &SimSummary) -> Vec<Section> {
    let mut o = Table::new(["metric", "value"]);
    o.row(["students".into(), s.n.to_string()]);
    o.row(["dropout rate".into(), f4(s.dropout_rate)]);
    o.row(["graduation rate".into(), f4(s.graduation_rate)]);
    o.row(["still enrolled".into(), s.still_enrolled.to_string()]);
    o.row(["mean time to degree".into(), s.mean_time_to_degree.map_or("-".into(), f4)]);
    let mut terms = Table::new(["term", "active", "new dropouts", "new graduates", "mean friction", "regularity losses"]);
    for a in &s.terms {
        terms.row([
            a.term.to_string(),
            a.active.to_string(),
            a.new_dropouts.to_string(),
            a.new_graduates.to_string(),
            f4(a.mean_friction),
            a.regularity_losses.to_string(),
        ]);
    }
    vec![section("Simulated outcomes", o), section("Time to degree", histogram(&s.time_to_degree)), section("Per term", terms)]
}

fn label_counts_from_csv(path: &Path) -> Result<Table, CliError> {
    let labels = crate::commands::read_labels(path)?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for l in labels.into_values() {
        *counts.entry(l).or_default() += 1;
    }
    let mut t = Table::new(["archetype", "students"]);
    for (l, n) in counts {
        t.row([l, n.to_string()]);
    }
    Ok(t)
}

fn fit_table(f: &PipelineFit) -> Table {
    let mut t = Table::new(["metric", "value"]);
    t.row(["horizon".into(), f.fit.horizon.to_string()]);
    t.row(["survival max |diff|".into(), f4(f.fit.survival_max_abs_diff)]);
    t.row(["time-to-degree max |diff|".into(), f4(f.fit.time_to_degree_max_abs_diff)]);
    t.row(["tolerance".into(), f4(f.fit.tolerance)]);
    t.row(["pass".into(), f.fit.pass.to_string()]);
    t
}

pub fn cells_table(cells: &[CellResult]) -> Table {
    let mut t = Table::new(["cell", "dropout mean", "dropout sd", "ttd mean", "ttd sd", "n"]);
    for c in cells {
        t.row([
            c.label.clone(),
            f4(c.dropout_rate.mean),
            f4(c.dropout_rate.sd),
            c.mean_time_to_degree.map_or("-".into(), |s| f4(s.mean)),
            c.mean_time_to_degree.map_or("-".into(), |s| f4(s.sd)),
            c.dropout_rate.n.to_string(),
        ]);
    }
    t
}

fn effects_sections(e: &EffectsReport) -> Vec<Section> {
    let mut out = Vec::new();
    for (o, fx) in &e.outcomes {
        let mut t = Table::new(["contrast", "estimate", "std_error"]);
        for c in fx.main.iter().chain(&fx.two_way).chain(std::iter::once(&fx.three_way)) {
            t.row([c.name(), f4(c.estimate), f4(c.std_error)]);
        }
        out.push(section(format!("Effects on {}", o.as_str()), t));
    }
    let mut a = Table::new(["pair", "estimate", "std_error", "improvement", "flagged"]);
    for v in &e.amplifiers {
        a.row([
            format!("{}:{}", v.pair[0].as_str(), v.pair[1].as_str()),
            f4(v.estimate),
            f4(v.std_error),
            f4(v.improvement),
            v.flagged.to_string(),
        ]);
    }
    out.push(section(format!("Amplifiers on {}", Outcome::DropoutRate.as_str()), a));
    let mut adv = Table::new(["adverse cell"]);
    for c in &e.adverse_cells {
        adv.row([c.label()]);
    }
    out.push(section("Adverse cells", adv));
    out
}

pub fn experiment_text(cells: &[CellResult], effects: &EffectsReport) -> String {
    let mut sections = vec![section("Cells", cells_table(cells))];
    sections.extend(effects_sections(effects));
    render_sections_text(&sections)
}

/// Rebuilds per-cell results from `cells.csv`.
pub fn read_cells_csv(path: &Path) -> Result<Vec<CellResult>, CliError> {
    #[derive(Deserialize)]
    struct Row {
        cell: String,
        seed: u64,
        dropout_rate: f64,
        graduation_rate: f64,
        mean_time_to_degree: Option<f64>,
        graduates: usize,
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    let mut by_cell: BTreeMap<usize, Vec<ReplicationOutcome>> = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        match row {
            Ok(r) => match parse_cell(&r.cell) {
                Some(c) => by_cell.entry(c.index()).or_default().push(ReplicationOutcome {
                    seed: r.seed,
                    dropout_rate: r.dropout_rate,
                    graduation_rate: r.graduation_rate,
                    mean_time_to_degree: r.mean_time_to_degree,
                    graduates: r.graduates,
                }),
                None => errors.push(format!("line {}: unknown cell {:?}", i + 2, r.cell)),
            },
            Err(e) => errors.push(format!("line {}: {e}", i + 2)),
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Schema { file: path.display().to_string(), errors });
    }
    Ok(by_cell.into_iter().map(|(i, reps)| CellResult::from_replications(CellId::from_index(i), reps)).collect())
}

/// Verifies the bundle in `dir` and collects a section list from its
/// artifacts, in manifest order.
pub fn build(dir: &Path) -> Result<ReportBundle, CliError> {
    let manifest: Manifest = verify(dir)?;
    let mut sections = Vec::new();
    for name in manifest.artifacts.keys() {
        let path = dir.join(name);
        let file = name.rsplit('/').next().unwrap_or(name);
        match file {
            METRICS => sections.extend(metrics_sections(&read_json(&path)?)),
            RESULT => sections.extend(sim_sections(&read_json(&path)?)),
            LABELS => sections.push(section("Archetypes", label_counts_from_csv(&path)?)),
            DML => {
                let r: DmlReport = read_json(&path)?;
                sections.push(section(format!("Effect of {} on {} at {}", r.treatment, r.outcome, r.decision_point), dml_table(&r)));
            }
            CELLS => sections.push(section("Cells", cells_table(&read_cells_csv(&path)?))),
            EFFECTS => sections.extend(effects_sections(&read_json(&path)?)),
            FIT => sections.push(section("Fit against observed cohort", fit_table(&read_json(&path)?))),
            _ => {}
        }
    }
    Ok(ReportBundle {
        command: manifest.command,
        version: manifest.version,
        config_fingerprint: manifest.config_fingerprint,
        seeds: manifest.seeds,
        sections,
    })
}

fn render_sections_text(sections: &[Section]) -> String {
    let mut out = String::new();
    for s in sections {
        out.push_str(&format!("{}\n\n{}\n", s.title, s.table.render()));
    }
    out
}

/// Markdown with a provenance header.
pub fn render_text(r: &ReportBundle) -> String {
    let mut out = format!("# cohortlab {} report\n\n", r.command);
    out.push_str(&format!("- version: {}\n- config fingerprint: `{}`\n", r.version, r.config_fingerprint));
    for (name, seed) in &r.seeds {
        out.push_str(&format!("- seed {name}: {seed}\n"));
    }
    for s in &r.sections {
        out.push_str(&format!("\n## {}\n\n{}", s.title, s.table.markdown()));
    }
    out
}

/// One CSV block per section, separated by a `# title` line.
pub fn render_csv(r: &ReportBundle) -> Vec<u8> {
    let mut out = Vec::new();
    for s in &r.sections {
        out.extend_from_slice(format!("# {}\n", s.title).as_bytes());
        out.extend_from_slice(&s.table.csv());
    }
    out
}

fn parse_cell(label: &str) -> Option<CellId> {
    (0..8).map(CellId::from_index).find(|c| c.label() == label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_labels_parse_back() {
        for i in 0..8 {
            assert_eq!(parse_cell(&CellId::from_index(i).label()), Some(CellId::from_index(i)));
        }
        assert_eq!(parse_cell("S+P+"), None);
    }
}
