use std::fs;
use std::path::Path;

use upar_core::cli::run_from;
use upar_core::Error;

fn run(args: &[&str]) -> upar_core::Result<()> {
    run_from(std::iter::once("upar-bench").chain(args.iter().copied()))
}

fn synth(dir: &Path, rows: &str) {
    let out = dir.to_str().unwrap();
    run(&["synth", "--preset", "easy", "--rows", rows, "--dim", "8", "--attributes", "5", "--seed", "4", "--out", out]).unwrap();
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn synth_row_count_and_reproducibility() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), "100");
    synth(b.path(), "100");
    let manifest = fs::read_to_string(a.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 4 * 100 * 3);
    for f in ["manifest.csv", "features.csv", "schema.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn schema_validate_rejects_non_binary_cell() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "3");
    let schema = p(d.path(), "schema.json");
    let manifest = p(d.path(), "manifest.csv");
    run(&["schema", "validate", &manifest, "--schema", &schema]).unwrap();

    let text = fs::read_to_string(&manifest).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[2] = lines[2].rsplit_once(',').map(|(h, _)| format!("{h},2")).unwrap();
    fs::write(&manifest, lines.join("\n") + "\n").unwrap();
    match run(&["schema", "validate", &manifest, "--schema", &schema]) {
        Err(e @ Error::NonBinaryLabel { .. }) => {
            let msg = e.to_string();
            assert!(msg.contains("line 3"), "{msg}");
            assert!(msg.contains("column 8"), "{msg}");
        }
        other => panic!("expected a label error, got {other:?}"),
    }
}

#[test]
fn missing_features_file_is_named() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "3");
    let missing = p(d.path(), "nope.csv");
    let err = run(&[
        "train", "--schema", &p(d.path(), "schema.json"), "--manifest", &p(d.path(), "manifest.csv"),
        "--features", &missing, "--out", &p(d.path(), "o"),
    ])
    .unwrap_err();
    assert!(err.to_string().contains(&missing), "{err}");
}

#[test]
fn eval_and_retrieve_on_perfect_confidences() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "4");
    let manifest = fs::read_to_string(d.path().join("manifest.csv")).unwrap();
    // confidences equal to ground truth: drop the domain and partition columns
    let conf: String = manifest
        .lines()
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            let mut out = vec![cells[0]];
            out.extend(&cells[3..]);
            out.join(",") + "\n"
        })
        .collect();
    fs::write(d.path().join("conf.csv"), &conf).unwrap();
    let out = p(d.path(), "eval");
    let args = |cmd: &'static str, thr: &'static str| {
        vec![cmd.to_string(), "--schema".into(), p(d.path(), "schema.json"), "--manifest".into(),
             p(d.path(), "manifest.csv"), "--confidences".into(), p(d.path(), "conf.csv"),
             "--threshold".into(), thr.into(), "--out".into(), out.clone()]
    };
    run_from(std::iter::once("upar-bench".to_string()).chain(args("eval", "0.3"))).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("eval/eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["threshold"], 0.3);
    assert_eq!(report["report"]["threshold"], 0.3);
    assert_eq!(report["report"]["map"], 1.0);
    assert_eq!(report["report"]["mA"], 1.0);

    run_from(std::iter::once("upar-bench".to_string()).chain(args("retrieve", "0.5"))).unwrap();
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("eval/retrieval_report.json")).unwrap()).unwrap();
    assert_eq!(r["report"]["map"], 1.0);
    assert_eq!(r["report"]["rank1"], 1.0);

    // swap two data rows: alignment must fail and name the first mismatch
    let mut lines: Vec<&str> = conf.lines().collect();
    lines.swap(1, 2);
    let first_expected = manifest.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    fs::write(d.path().join("conf.csv"), lines.join("\n") + "\n").unwrap();
    let err = run_from(std::iter::once("upar-bench".to_string()).chain(args("eval", "0.5"))).unwrap_err();
    assert!(matches!(err, Error::Misaligned { .. }), "{err}");
    assert!(err.to_string().contains(&first_expected), "{err}");
}

#[test]
fn protocol_and_ablate_outputs() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "20");
    let common = |cmd: &str, out: &str| -> Vec<String> {
        [cmd, "--schema", &p(d.path(), "schema.json"), "--manifest", &p(d.path(), "manifest.csv"),
         "--features", &p(d.path(), "features.csv"), "--epochs", "2", "--lr", "0.01", "--out", out]
            .iter().map(|s| s.to_string()).collect()
    };
    let out = p(d.path(), "proto");
    let mut args = common("protocol", &out);
    args.extend(["--protocol", "cv", "--no-ema", "--hidden", "4"].map(String::from));
    run_from(std::iter::once("upar-bench".to_string()).chain(args)).unwrap();
    let md = fs::read_to_string(d.path().join("proto/protocol_cv.md")).unwrap();
    assert_eq!(md.matches("### Split").count(), 4);
    assert!(md.contains("mean ± std"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("proto/protocol_cv.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["epochs"], 2);
    assert_eq!(json["config"]["ema_enabled"], false);
    assert_eq!(json["config"]["hidden"], serde_json::json!([4]));
    for k in 0..4 {
        assert!(d.path().join(format!("proto/split{k}.ckpt")).exists());
    }

    let out = p(d.path(), "abl");
    let mut args = common("ablate", &out);
    args.extend(["--protocol", "all"].map(String::from));
    run_from(std::iter::once("upar-bench".to_string()).chain(args)).unwrap();
    let md = fs::read_to_string(d.path().join("abl/ablation.md")).unwrap();
    let rows = md.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| Method")).count();
    assert_eq!(rows, 7);
}

#[test]
fn env_var_sets_default_output_dir() {
    let d = tempfile::tempdir().unwrap();
    let target = d.path().join("from_env");
    // only this test touches the variable
    unsafe { std::env::set_var("UPAR_BENCH_OUT", &target) };
    let r = run(&["synth", "--rows", "2", "--dim", "4", "--attributes", "2"]);
    unsafe { std::env::remove_var("UPAR_BENCH_OUT") };
    r.unwrap();
    assert!(target.join("manifest.csv").exists());
}

#[test]
fn eval_filters_partition_and_domains() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "4");
    let manifest = fs::read_to_string(d.path().join("manifest.csv")).unwrap();
    let mut lines = manifest.lines();
    let header = lines.next().unwrap();
    let keep: Vec<&str> = lines.filter(|l| l.contains(",PETA,test,")).collect();
    let strip = |l: &str| {
        let cells: Vec<&str> = l.split(',').collect();
        let mut out = vec![cells[0]];
        out.extend(&cells[3..]);
        out.join(",") + "\n"
    };
    let conf: String = std::iter::once(header).chain(keep.iter().copied()).map(strip).collect();
    fs::write(d.path().join("conf.csv"), conf).unwrap();
    let base = ["eval", "--schema", &p(d.path(), "schema.json"), "--manifest", &p(d.path(), "manifest.csv"),
                "--confidences", &p(d.path(), "conf.csv"), "--out", &p(d.path(), "eval")]
        .map(str::to_string);
    let with = |extra: &[&str]| {
        let args: Vec<String> = base.iter().cloned().chain(extra.iter().map(|s| s.to_string())).collect();
        run_from(std::iter::once("upar-bench".to_string()).chain(args))
    };
    assert!(matches!(with(&["--partition", "test"]), Err(Error::Misaligned { .. })));
    with(&["--partition", "test", "--domains", "PETA"]).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("eval/eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["n_instances"], keep.len());
    assert_eq!(report["config"]["domains"][0], "PETA");
}
