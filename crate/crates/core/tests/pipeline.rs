use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use finespan_core::aggregate::AggregateReport;
use finespan_core::corpus::SplitManifestHeader;
use finespan_core::pipeline::{run_pipeline, PipelineConfig, RunOptions, StageStatus, STAGES};

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden/golden200")
}

fn config(out: &Path) -> PipelineConfig {
    let text = std::fs::read_to_string(golden().join("pipeline.json")).unwrap();
    let mut c = PipelineConfig::from_json(&text, &golden()).unwrap();
    c.paths.output = out.to_path_buf();
    c
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn golden_run_is_complete_cached_and_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_pipeline(&config(a.path()), RunOptions::default()).unwrap();
    let names: Vec<&str> = first.manifest.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, STAGES);
    assert!(first.stages.iter().all(|s| s.status == StageStatus::Ran));
    assert!(first.manifest.stages.iter().all(|s| s.skipped.is_none() && !s.outputs.is_empty()));

    let again = run_pipeline(&config(a.path()), RunOptions::default()).unwrap();
    assert!(again.stages.iter().all(|s| s.status == StageStatus::Cached));
    let forced = run_pipeline(&config(a.path()), RunOptions { force: true }).unwrap();
    assert!(forced.stages.iter().all(|s| s.status == StageStatus::Ran));

    run_pipeline(&config(b.path()), RunOptions::default()).unwrap();
    assert_eq!(tree(a.path()), tree(b.path()));

    let expected: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(golden().join("expected.json")).unwrap()).unwrap();
    let report: AggregateReport =
        serde_json::from_str(&std::fs::read_to_string(first.dir("aggregate").unwrap().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(serde_json::to_value(&report.per_label).unwrap(), expected["per_label"]);
    assert_eq!(report.mean_per_annotated, expected["mean_per_annotated"].as_f64().unwrap());
    let header: SplitManifestHeader = serde_json::from_str(
        std::fs::read_to_string(first.dir("split").unwrap().join("split_manifest.jsonl")).unwrap().lines().next().unwrap(),
    )
    .unwrap();
    assert_eq!(serde_json::to_value(header.sizes).unwrap(), expected["split_sizes"]);
}

#[test]
fn changed_parameter_reruns_downstream_only() {
    let out = tempfile::tempdir().unwrap();
    run_pipeline(&config(out.path()), RunOptions::default()).unwrap();
    let mut c = config(out.path());
    c.split.seed = 7;
    let r = run_pipeline(&c, RunOptions::default()).unwrap();
    let status: Vec<StageStatus> = r.stages.iter().map(|s| s.status).collect();
    use StageStatus::*;
    assert_eq!(status, [Cached, Cached, Cached, Cached, Ran, Ran, Ran, Ran]);
}

#[test]
fn tampered_output_is_recomputed() {
    let out = tempfile::tempdir().unwrap();
    let r = run_pipeline(&config(out.path()), RunOptions::default()).unwrap();
    let kept = r.dir("filter").unwrap().join("kept.jsonl");
    std::fs::write(&kept, "{}\n").unwrap();
    let r = run_pipeline(&config(out.path()), RunOptions::default()).unwrap();
    assert_eq!(r.stages[1].status, StageStatus::Ran);
    assert_eq!(r.stages[2].status, StageStatus::Cached);
}

#[test]
fn missing_gazetteer_dir_is_a_config_error() {
    let out = tempfile::tempdir().unwrap();
    let mut c = config(out.path());
    c.paths.gazetteers = Some(out.path().join("missing-gazetteers"));
    let err = run_pipeline(&c, RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("missing-gazetteers"), "{err}");
}

#[test]
fn stage_errors_name_the_stage() {
    let out = tempfile::tempdir().unwrap();
    let preds = out.path().join("partial.jsonl");
    std::fs::write(&preds, "{\"id\": \"nope\", \"tokens\": [\"a\"], \"tags\": [\"O\"]}\n").unwrap();
    let mut c = config(&out.path().join("run"));
    c.eval.models[1].predictions = preds;
    let err = run_pipeline(&c, RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let msg = err.to_string();
    assert!(msg.contains("`evaluate`") && msg.contains("generator"), "{msg}");
}
