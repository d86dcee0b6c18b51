use std::fs;
use std::path::{Path, PathBuf};

use cohortlab::commands::{cmd_synth, run_experiment_parallel};
use cohortlab::io::{dataset_files, ingest_dataset, DataPaths};
use cohortlab::scenario::{DesignFile, Scenario};
use cohortlab_core::curriculum::min_completion_terms;
use cohortlab_core::policy::run_experiment;
use cohortlab_core::sim::BehaviorRules;
use cohortlab_core::temporal::ExitStatus;
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("cohortlab-roundtrip-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

/// The reference scenario with its files copied next to it and `edit` applied.
fn scenario(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    for f in ["reference_curriculum.json", "reference_rules.json", "reference_shocks.json"] {
        fs::copy(data(f), dir.join(f)).unwrap();
    }
    let mut v: Value = serde_json::from_str(&fs::read_to_string(data("reference_scenario.json")).unwrap()).unwrap();
    v["population"]["n"] = 200.into();
    edit(&mut v);
    let path = dir.join("scenario.json");
    fs::write(&path, v.to_string()).unwrap();
    path
}

#[test]
fn reingesting_written_files_reproduces_the_dataset() {
    let dir = scratch("ingest");
    let path = scenario(&dir, |_| {});
    cmd_synth(&path, Some(4), &dir.join("a")).unwrap();
    let cur = Scenario::load(&path).unwrap().validated_curriculum().unwrap();
    let first = ingest_dataset(&DataPaths::in_dir(&dir.join("a")), &cur).unwrap();
    fs::create_dir_all(dir.join("b")).unwrap();
    for (name, bytes) in dataset_files(&first, &cur) {
        fs::write(dir.join("b").join(name), bytes).unwrap();
    }
    let second = ingest_dataset(&DataPaths::in_dir(&dir.join("b")), &cur).unwrap();
    assert_eq!(first, second);
    for (name, bytes) in dataset_files(&second, &cur) {
        assert_eq!(fs::read(dir.join("b").join(name)).unwrap(), bytes, "{name}");
    }
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn forced_pass_synth_graduates_everyone_at_the_scheduler_minimum() {
    let dir = scratch("forced");
    let rules = serde_json::to_value(BehaviorRules::forced_pass(5)).unwrap();
    let path = scenario(&dir, |v| v["rules"] = rules);
    cmd_synth(&path, None, &dir.join("out")).unwrap();
    let s = Scenario::load(&path).unwrap();
    let cur = s.validated_curriculum().unwrap();
    let expected = min_completion_terms(&cur, 5, s.population.start_parity).unwrap();
    let dataset = ingest_dataset(&DataPaths::in_dir(&dir.join("out")), &cur).unwrap();
    assert_eq!(dataset.len(), 200);
    assert!(dataset.records().iter().all(|r| r.exit == ExitStatus::Graduated(expected)));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn parallel_experiment_matches_the_sequential_run() {
    let dir = scratch("parallel");
    scenario(&dir, |v| v["population"]["n"] = 120.into());
    let mut design: Value = serde_json::from_str(&fs::read_to_string(data("reference_experiment.json")).unwrap()).unwrap();
    design["base"] = "scenario.json".into();
    let path = dir.join("design.json");
    fs::write(&path, design.to_string()).unwrap();
    let (design, _) = DesignFile::load(&path, Some(3)).unwrap();
    assert_eq!(run_experiment_parallel(&design).unwrap(), run_experiment(&design).unwrap());
    fs::remove_dir_all(&dir).unwrap();
}
