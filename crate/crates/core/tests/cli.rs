use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use slamfair::fairness::{group_audit, AuditOptions};
use slamfair::grouping::{Development, Dimension, GroupTag};
use slamfair::metrics::Prediction;
use slamfair::model::{ModelFile, TrainedModel};
use slamfair::plot::{between_region, render_roc_plot};
use slamfair::slam::{Client, Label, Track};
use tempfile::TempDir;

fn mini(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/mini").join(name)
}

fn slamfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slamfair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = slamfair(args);
    assert!(
        out.status.success(),
        "slamfair {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_gbdt(dir: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    ok(&[
        "train",
        "--model",
        "gbdt",
        "--track",
        "en_es",
        "--data",
        s(&mini("en_es.slam.train")),
        "--out",
        s(&out),
    ]);
    out
}

fn audit(model: &Path, dimension: &str, out: &Path) -> Output {
    slamfair(&[
        "audit",
        "--model-file",
        s(model),
        "--track",
        "en_es",
        "--data",
        s(&mini("en_es.slam.dev")),
        "--labels",
        s(&mini("en_es.slam.dev.key")),
        "--dimension",
        dimension,
        "--out",
        s(out),
    ])
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn gbdt_training_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = train_gbdt(dir.path(), "a.json");
    let b = train_gbdt(dir.path(), "b.json");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(a.with_extension("vocab.json")).unwrap(),
        fs::read(b.with_extension("vocab.json")).unwrap()
    );
}

#[test]
fn missing_data_file_is_named_in_a_one_line_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nowhere.slam.train");
    let out = slamfair(&[
        "train",
        "--model",
        "gbdt",
        "--track",
        "en_es",
        "--data",
        s(&missing),
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains(s(&missing)), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn joint_multitask_model_has_one_head_per_track() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("mt.json");
    ok(&[
        "train",
        "--model",
        "multitask",
        "--track",
        "en_es",
        "--data",
        s(&mini("en_es.slam.train")),
        "--track",
        "fr_en",
        "--data",
        s(&mini("fr_en.slam.train")),
        "--out",
        s(&out),
    ]);
    let file = ModelFile::load(&out).unwrap();
    let TrainedModel::Multitask(m) = &file.model else {
        panic!("expected a multitask model");
    };
    assert_eq!(m.network.heads.keys().copied().collect::<Vec<_>>(), vec![Track::EnEs, Track::FrEn]);
    assert_eq!(file.manifest.tracks, vec![Track::EnEs, Track::FrEn]);

    let eval = dir.path().join("eval");
    ok(&[
        "evaluate",
        "--model-file",
        s(&out),
        "--track",
        "fr_en",
        "--data",
        s(&mini("fr_en.slam.dev")),
        "--labels",
        s(&mini("fr_en.slam.dev.key")),
        "--out",
        s(&eval),
    ]);
    let refused = slamfair(&[
        "evaluate",
        "--model-file",
        s(&out),
        "--track",
        "es_en",
        "--data",
        s(&mini("es_en.slam.dev")),
        "--labels",
        s(&mini("es_en.slam.dev.key")),
        "--out",
        s(&eval),
    ]);
    assert_eq!(refused.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("es_en"));
}

#[test]
fn client_audit_writes_three_pairs_consistently() {
    let dir = TempDir::new().unwrap();
    let model = train_gbdt(dir.path(), "m.json");
    let out = dir.path().join("audit");
    assert!(audit(&model, "client", &out).status.success());

    let csv = fs::read_to_string(out.join("fairness.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "group_1,group_2,track,gbdt_abroca,auc_1,auc_2,n_1,n_2");
    assert_eq!(rows.len(), 4);
    let pairs: Vec<String> = rows[1..]
        .iter()
        .map(|r| r.split(',').take(2).collect::<Vec<_>>().join("_"))
        .collect();
    assert_eq!(pairs, ["android_ios", "android_web", "ios_web"]);

    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let results = report["results"].as_array().unwrap();
    assert_eq!(results.len(), 3);
    assert!(report["skipped"].as_array().unwrap().is_empty());
    assert_eq!(report["manifest"]["model_kind"], "gbdt");
    assert!(report["manifest"]["country_mapping"]["sha256"].is_string());

    for pair in &pairs {
        let svg = fs::read_to_string(out.join(format!("roc_{pair}.svg"))).unwrap();
        let doc = roxmltree::Document::parse(&svg).expect("well-formed SVG");
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(doc
            .descendants()
            .any(|n| n.attribute("class") == Some("abroca-region")));
        assert!(svg.contains("ABROCA = "));
    }
    let svgs = files_in(&out).into_iter().filter(|(n, _)| n.ends_with(".svg")).count();
    assert_eq!(svgs, 3);

    let acc = fs::read_to_string(out.join("accuracy.csv")).unwrap();
    assert!(acc.starts_with("track,model,f1,auc,n\n"));
    assert_eq!(acc.lines().count(), 4);
}

#[test]
fn audit_outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let model = train_gbdt(dir.path(), "m.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(audit(&model, "client", &a).status.success());
    assert!(audit(&model, "client", &b).status.success());
    assert_eq!(files_in(&a), files_in(&b));
}

#[test]
fn development_audit_has_one_pair() {
    let dir = TempDir::new().unwrap();
    let model = train_gbdt(dir.path(), "m.json");
    let out = dir.path().join("dev");
    assert!(audit(&model, "development", &out).status.success());
    let csv = fs::read_to_string(out.join("fairness.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("developed,developing,en_es,"));
    assert!(out.join("roc_developed_developing.svg").exists());
}

#[test]
fn vocabulary_mismatch_is_rejected() {
    let dir = TempDir::new().unwrap();
    let model = train_gbdt(dir.path(), "m.json");
    let config = dir.path().join("other.toml");
    fs::write(&config, "[features]\nmin_count = 3\n").unwrap();
    let other = dir.path().join("other.json");
    ok(&[
        "train",
        "--model",
        "gbdt",
        "--track",
        "en_es",
        "--data",
        s(&mini("en_es.slam.train")),
        "--config",
        s(&config),
        "--out",
        s(&other),
    ]);
    let out = slamfair(&[
        "audit",
        "--model-file",
        s(&model),
        "--track",
        "en_es",
        "--data",
        s(&mini("en_es.slam.dev")),
        "--labels",
        s(&mini("en_es.slam.dev.key")),
        "--dimension",
        "client",
        "--vocab",
        s(&other.with_extension("vocab.json")),
        "--out",
        s(&dir.path().join("audit")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vocabulary mismatch"));
}

#[test]
fn evaluate_reports_track_client_and_country_rows() {
    let dir = TempDir::new().unwrap();
    let model = train_gbdt(dir.path(), "m.json");
    let out = dir.path().join("eval");
    ok(&[
        "evaluate",
        "--model-file",
        s(&model),
        "--track",
        "en_es",
        "--data",
        s(&mini("en_es.slam.dev")),
        "--labels",
        s(&mini("en_es.slam.dev.key")),
        "--out",
        s(&out),
    ]);
    let csv = fs::read_to_string(out.join("accuracy.csv")).unwrap();
    let names: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        names,
        [
            "EN_ES",
            "CLIENT_IOS_EN_ES",
            "CLIENT_ANDROID_EN_ES",
            "CLIENT_WEB_EN_ES",
            "COUNTRY_DEVELOPED_EN_ES",
            "COUNTRY_DEVELOPING_EN_ES"
        ]
    );
    let json: serde_json::Value = serde_json::from_slice(&fs::read(out.join("accuracy.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn predict_writes_one_row_per_instance_and_needs_no_labels() {
    let dir = TempDir::new().unwrap();
    let model = train_gbdt(dir.path(), "m.json");
    let out = dir.path().join("preds.csv");
    ok(&[
        "predict",
        "--model-file",
        s(&model),
        "--track",
        "en_es",
        "--data",
        s(&mini("en_es.slam.dev")),
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let key = fs::read_to_string(mini("en_es.slam.dev.key")).unwrap();
    assert_eq!(text.lines().count(), key.lines().count() + 1);
    for line in text.lines().skip(1) {
        let score: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(score > 0.0 && score < 1.0);
    }
}

#[test]
fn audit_without_labels_explains_what_is_missing() {
    let dir = TempDir::new().unwrap();
    let model = train_gbdt(dir.path(), "m.json");
    let out = slamfair(&[
        "audit",
        "--model-file",
        s(&model),
        "--track",
        "en_es",
        "--data",
        s(&mini("en_es.slam.dev")),
        "--dimension",
        "client",
        "--out",
        s(&dir.path().join("audit")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--labels"));
}

#[test]
fn synth_reproduces_the_bundled_mini_dataset() {
    let dir = TempDir::new().unwrap();
    ok(&["synth", "--out", s(dir.path())]);
    for (name, bytes) in files_in(dir.path()) {
        assert_eq!(bytes, fs::read(mini(&name)).unwrap(), "{name} differs from the bundled copy");
    }
}

fn tagged(id: usize, score: f64, mistake: bool, client: Client) -> Prediction {
    Prediction {
        instance_id: format!("i{id}"),
        score,
        label: if mistake { Label::Mistake } else { Label::Correct },
        group: GroupTag {
            client,
            development: Development::Developed,
            track: Track::EnEs,
        },
    }
}

#[test]
fn perfect_against_uninformative_group_scores_one_half() {
    let mut preds = Vec::new();
    for i in 0..200 {
        let mistake = i % 3 == 0;
        // ios: every mistake outranks every correct answer
        preds.push(tagged(i, if mistake { 0.9 } else { 0.1 }, mistake, Client::Ios));
        // web: one shared score, so its ROC is the chance diagonal
        preds.push(tagged(1000 + i, 0.4, mistake, Client::Web));
    }
    let report = group_audit(&preds, Dimension::Client, &AuditOptions::default()).unwrap();
    assert_eq!(report.results.len(), 1);
    let r = &report.results[0];
    assert!((r.abroca - 0.5).abs() < 1e-6, "{}", r.abroca);

    let region = between_region(&r.curve_a, &r.curve_b);
    let n = region.len();
    let area = (0..n)
        .map(|i| region[i].0 * region[(i + 1) % n].1 - region[(i + 1) % n].0 * region[i].1)
        .sum::<f64>()
        .abs()
        / 2.0;
    assert!((area - 0.5).abs() < 1e-6);
    let svg = render_roc_plot(&r.curve_a, &r.curve_b, (&r.group_a, &r.group_b), r.abroca);
    assert!(svg.contains("ABROCA = 0.5000"));
    roxmltree::Document::parse(&svg).unwrap();
}

#[test]
fn identical_groups_give_zero_rows() {
    let mut preds = Vec::new();
    for (k, client) in Client::ALL.iter().enumerate() {
        for i in 0..120 {
            preds.push(tagged(k * 1000 + i, (i % 17) as f64 / 17.0, i % 4 == 1, *client));
        }
    }
    let report = group_audit(&preds, Dimension::Client, &AuditOptions::default()).unwrap();
    assert_eq!(report.results.len(), 3);
    assert!(report.results.iter().all(|r| r.abroca == 0.0));
}
