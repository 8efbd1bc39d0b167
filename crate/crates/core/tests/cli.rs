//! End-to-end behaviour of the `patchscope` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use patchscope::dataset;
use patchscope::pipeline::{self, PredictionRecord, Verdict};
use patchscope::{Label, ManifestEntry, ResolutionClass};
use serde_json::Value;

fn patchscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchscope"))
        .args(args)
        .env_remove("PATCHSCOPE_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn synth_writes_images_and_manifest_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = patchscope(&[
            "synth", "--pattern", "global", "--n", "20", "--dims", "1024x1024", "--seed", "7", "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let fa = files(&a);
    assert_eq!(fa.keys().filter(|k| k.ends_with(".png")).count(), 20);
    let manifest = dataset::read_manifest(fs::File::open(a.join("manifest.csv")).unwrap()).unwrap();
    assert_eq!(manifest.len(), 20);
    assert!(manifest.iter().all(|e| a.join(&e.path).is_file()));
    assert_eq!(fa, files(&b));
}

#[test]
fn synth_rejects_impossible_geometry() {
    let tmp = tempfile::tempdir().unwrap();
    let o = patchscope(&[
        "synth", "--pattern", "local", "--feature-size", "2048", "--dims", "512x512", "--out",
        tmp.path().join("d").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("feature size"));
}

#[test]
fn unwritable_output_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain-file");
    fs::write(&file, "x").unwrap();
    let out = file.join("sub");
    let o = patchscope(&["synth", "--n", "2", "--dims", "128x128", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}

const RUN_CONFIG: &str = r#"
strategies = ["full-1000", "full-224", "patch-448", "patch-224"]
master_seed = 5

[train]
epochs = 3

[split]
train_per_class = 8
val_per_class = 4
per_resolution_counts = {}
"#;

#[test]
fn full_run_reports_every_strategy_with_control() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let o = patchscope(&["synth", "--n", "24", "--dims", "320x288", "--seed", "3", "--out", data.to_str().unwrap()]);
    assert!(o.status.success());
    let config = tmp.path().join("run.toml");
    fs::write(&config, RUN_CONFIG).unwrap();
    let out = tmp.path().join("out");
    let o = patchscope(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--manifest",
        data.join("manifest.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--control",
        "random-labels",
        "--no-augment",
        "--plots",
        "--workers",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let strategies = report["strategies"].as_array().unwrap();
    assert_eq!(strategies.len(), 4);
    for s in strategies {
        let name = s["strategy"].as_str().unwrap();
        assert!(s["image"]["metrics"]["accuracy"].is_number(), "{name}");
        assert_eq!(s["predictions"].as_array().unwrap().len(), 8, "{name}");
        let mass = s["control"]["distribution"]["central_band_mass"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&mass), "{name}");
        assert!(s["control"]["distribution"]["positive"].is_object());
    }
    let records = pipeline::read_predictions(&fs::read_to_string(out.join("predictions.jsonl")).unwrap()).unwrap();
    assert_eq!(records.len(), 32);
    assert!(out.join("roc.svg").is_file());
}

fn record(id: &str, label: Verdict) -> PredictionRecord {
    PredictionRecord {
        image_id: id.into(),
        strategy: "full-1000".into(),
        label,
        votes_active: usize::from(label == Verdict::ActiveEoE),
        votes_total: usize::from(label != Verdict::Indeterminate),
        patch_probs: Vec::new(),
    }
}

// Predictions reproducing 47 TP, 16 FN, 61 TN and 2 FP.
fn first_row() -> (Vec<ManifestEntry>, Vec<PredictionRecord>) {
    let mut entries = Vec::new();
    let mut records = Vec::new();
    let groups = [
        (Label::ActiveEoE, Verdict::ActiveEoE, 47),
        (Label::ActiveEoE, Verdict::NonEoE, 16),
        (Label::NonEoE, Verdict::NonEoE, 61),
        (Label::NonEoE, Verdict::ActiveEoE, 2),
    ];
    for (g, (truth, verdict, n)) in groups.into_iter().enumerate() {
        for i in 0..n {
            let id = format!("img-{g}-{i:02}");
            entries.push(ManifestEntry {
                path: format!("{id}.png").into(),
                image_id: id.clone(),
                label: truth,
                resolution_class: ResolutionClass::R2,
            });
            records.push(record(&id, verdict));
        }
    }
    (entries, records)
}

fn write_inputs(dir: &Path, entries: &[ManifestEntry], records: &[PredictionRecord]) -> (String, String) {
    let m = dir.join("manifest.csv");
    dataset::write_manifest(fs::File::create(&m).unwrap(), entries).unwrap();
    let p = dir.join("predictions.jsonl");
    let mut buf = Vec::new();
    pipeline::write_predictions(&mut buf, records).unwrap();
    fs::write(&p, buf).unwrap();
    (p.to_string_lossy().into_owned(), m.to_string_lossy().into_owned())
}

#[test]
fn eval_prints_the_reference_row() {
    let tmp = tempfile::tempdir().unwrap();
    let (entries, records) = first_row();
    let (p, m) = write_inputs(tmp.path(), &entries, &records);
    let o = patchscope(&["eval", "--predictions", &p, "--manifest", &m, "--out", tmp.path().join("r.json").to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row = text.lines().find(|l| l.starts_with("full-1000")).expect("strategy row");
    assert!(row.contains("74.6% 96.8% 85.7% 0.39"), "{row}");
}

#[test]
fn eval_excludes_and_counts_indeterminate_images() {
    let tmp = tempfile::tempdir().unwrap();
    let (mut entries, mut records) = first_row();
    entries.push(ManifestEntry {
        image_id: "blank".into(),
        path: "blank.png".into(),
        label: Label::ActiveEoE,
        resolution_class: ResolutionClass::R2,
    });
    records.push(record("blank", Verdict::Indeterminate));
    let (p, m) = write_inputs(tmp.path(), &entries, &records);
    let json = tmp.path().join("r.json");
    let o = patchscope(&["eval", "--predictions", &p, "--manifest", &m, "--out", json.to_str().unwrap()]);
    assert!(o.status.success());
    let row = stdout(&o).lines().find(|l| l.starts_with("full-1000")).unwrap().to_string();
    assert!(row.contains("74.6% 96.8% 85.7% 0.39"), "{row}");
    assert!(row.trim_end().ends_with(" 1"), "{row}");
    let report: Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(report["strategies"][0]["indeterminate"].as_array().unwrap().len(), 1);
}

#[test]
fn eval_rejects_empty_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let (entries, _) = first_row();
    let (p, m) = write_inputs(tmp.path(), &entries, &[]);
    let o = patchscope(&["eval", "--predictions", &p, "--manifest", &m]);
    assert!(!o.status.success());
}

#[test]
fn eval_lists_orphans_and_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let (entries, mut records) = first_row();
    records.push(record("stranger", Verdict::NonEoE));
    let (p, m) = write_inputs(tmp.path(), &entries, &records);
    let o = patchscope(&["eval", "--predictions", &p, "--manifest", &m, "--out", tmp.path().join("r.json").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("stranger"));
}
