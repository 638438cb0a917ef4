use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const MARKER_ROWS: &str = r#"{"id":"rel-1","text":"Gene MARKER-A inhibits MARKER-B and EFGR, but has no effect on MAPK.","label":"P"}
{"id":"rel-4","text":"Gene MARKER-A inhibits KLK3 and MARKER-B, but has no effect on MAPK.","label":"P"}
{"id":"rel-2","text":"Gene MARKER-A inhibits KLK3 and EFGR, but has no effect on MARKER-B.","label":"N"}
{"id":"rel-3","text":"Gene NLCR inhibits MARKER-A and EFGR, but has no effect on MARKER-B.","label":"N"}
"#;

const ANNOTATED: &str = r#"{"id":"ex","text":"Gene NLCR inhibits KLK3 and EFGR, but has no effect on MAPK.","entities":["NLCR","KLK3","EFGR","MAPK"],"positive_pairs":[["NLCR","KLK3"],["NLCR","EFGR"]]}
"#;

fn hadv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hadv"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn check<'a>(meta: &'a Value, rate: &str) -> &'a Value {
    meta["verification"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["rate"] == rate)
        .unwrap()
}

fn small_pool(dir: &Path) {
    let o = hadv(
        dir,
        &["synth", "--kind", "pool", "--positives", "300", "--negatives", "900", "--seed", "1", "--output", "pool.jsonl"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn rates_on_marker_rows() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("rel.jsonl"), MARKER_ROWS).unwrap();
    let o = hadv(dir.path(), &["rates", "--input", "rel.jsonl", "--epsilon", "0.30", "--output", "r.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("P->N: 1.000000"), "{}", stderr(&o));
    let report = read_json(&dir.path().join("r.json"));
    assert_eq!(report["h_adversarial"]["P->N"]["n"], 2);
    assert_eq!(report["h_affable"]["P"]["rate"], 0.5);
    assert_eq!(report["h_affable"]["N"]["n"], 1);
}

#[test]
fn rates_json_goes_to_stdout_without_output() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("rel.jsonl"), MARKER_ROWS).unwrap();
    let o = hadv(dir.path(), &["rates", "--input", "rel.jsonl"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object());
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = hadv(dir.path(), &["rates", "--input", "nope.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).matches("nope.jsonl").count(), 1, "{}", stderr(&o));
}

#[test]
fn malformed_jsonl_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.jsonl"), "{\"id\":\"a\",\"text\":\"x\"}\n").unwrap();
    let o = hadv(dir.path(), &["rates", "--input", "bad.jsonl"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn single_class_rates_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let rows = MARKER_ROWS.lines().take(2).collect::<Vec<_>>().join("\n");
    fs::write(dir.path().join("p.jsonl"), rows).unwrap();
    let o = hadv(dir.path(), &["rates", "--input", "p.jsonl"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn relgen_enumerates_all_pairs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ann.jsonl"), ANNOTATED).unwrap();
    let o = hadv(dir.path(), &["relgen", "--input", "ann.jsonl", "--output", "rel.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = fs::read_to_string(dir.path().join("rel.jsonl")).unwrap();
    assert_eq!(out.lines().count(), 6);
    assert_eq!(out.matches("\"label\":\"P\"").count(), 2);
}

#[test]
fn curate_adversarial_writes_verified_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    small_pool(dir.path());
    let o = hadv(
        dir.path(),
        &[
            "curate", "adversarial", "--input", "pool.jsonl", "--size", "800", "--pos-rate", "0.25", "--target", "0.1",
            "--seed", "3", "--output", "d.jsonl",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let meta = read_json(&dir.path().join("d.meta.json"));
    let check = check(&meta, "P->N");
    assert_eq!(meta["verification"]["passed"], true);
    assert_eq!(meta["plan"]["achieved_rate"], 0.1);
    assert_eq!(check["achieved_n"], 20);
    assert_eq!(check["denominator"], 200);
    assert_eq!(fs::read_to_string(dir.path().join("d.jsonl")).unwrap().lines().count(), 800);
}

#[test]
fn plan_only_writes_no_dataset() {
    let dir = tempfile::tempdir().unwrap();
    small_pool(dir.path());
    let o = hadv(
        dir.path(),
        &[
            "curate", "affable", "--input", "pool.jsonl", "--size", "800", "--target", "0.3", "--plan", "plan.json",
            "--plan-only", "--output", "d.jsonl",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_json(&dir.path().join("plan.json"))["target_count"], 60);
    assert!(!dir.path().join("d.jsonl").exists());
}

#[test]
fn pairs_only_affable_beyond_half_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    small_pool(dir.path());
    let o = hadv(
        dir.path(),
        &[
            "curate", "affable", "--class", "negative", "--input", "pool.jsonl", "--size", "800", "--target", "0.6",
            "--pairs-only", "--output", "d.jsonl",
        ],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn config_file_fills_missing_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    small_pool(dir.path());
    fs::write(
        dir.path().join("c.json"),
        r#"{"input": "pool.jsonl", "size": 400, "pos_rate": 0.25, "target": 0.2, "seed": 9, "output": "c.jsonl"}"#,
    )
    .unwrap();
    let o = hadv(dir.path(), &["curate", "adversarial", "--config", "c.json", "--target", "0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta = read_json(&dir.path().join("c.meta.json"));
    assert_eq!(check(&meta, "P->N")["achieved_n"], 10);
    assert_eq!(meta["spec"]["seed"], 9);
}

#[test]
fn pairs_lists_planted_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let o = hadv(dir.path(), &["synth", "--kind", "planted", "--docs", "2000", "--seed", "2", "--output", "pl.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = hadv(dir.path(), &["pairs", "--queries", "pl.jsonl", "--output", "pairs.tsv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tsv = fs::read_to_string(dir.path().join("pairs.tsv")).unwrap();
    assert!(tsv.lines().count() > 1);
    assert!(tsv.lines().skip(1).all(|l| l.split('\t').count() >= 3));
}
