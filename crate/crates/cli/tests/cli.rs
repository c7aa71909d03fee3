use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn shoulder(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shoulder"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(dir: &Path) -> PathBuf {
    let out = shoulder(&["fixture", "--out", s(dir), "--seed", "42"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("shoulder.conf")
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/shoulder_windows.csv")
}

#[test]
fn shoulder_stage_matches_golden_onsets() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = fixture(tmp.path());
    let out = shoulder(&["shoulder", "--config", s(&conf)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let got = fs::read_to_string(tmp.path().join("out/shoulder_windows.csv")).unwrap();
    let want = fs::read_to_string(golden_path()).unwrap();
    assert_eq!(got, want);

    // load-metric onsets are the planted dips
    let planted: BTreeMap<(String, String), String> = fs::read_to_string(tmp.path().join("planted_onsets.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            ((f[0].to_string(), f[1].to_string()), f[2].to_string())
        })
        .collect();
    let mut checked = 0;
    for line in want.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[2] == "degree_days" {
            continue;
        }
        assert_eq!(planted[&(f[0].to_string(), f[1].to_string())], f[3], "{line}");
        checked += 1;
    }
    assert_eq!(checked, 80);
}

#[test]
fn unknown_stage_is_a_usage_error() {
    let out = shoulder(&["bogus"]);
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_config_fails() {
    let out = shoulder(&["trends"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn config_errors_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("bad.conf");
    fs::write(&conf, "load = nowhere.csv\ntemperature_grid = g.csv\n").unwrap();
    let out = shoulder(&["ingest", "--config", s(&conf)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("`load`"));

    fs::write(&conf, "load = l.csv\ntemperature_grid = g.csv\nwindow_len = 0\n").unwrap();
    let out = shoulder(&["ingest", "--config", s(&conf)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`window_len`"));
}

#[test]
fn rerun_is_byte_identical_and_report_is_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = fixture(&tmp.path().join("fx"));
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let out = shoulder(&["all", "--config", s(&conf), "--out", s(&dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let report = String::from_utf8(out.stdout).unwrap();
        assert!(report.contains("shoulder-season onsets"), "{report}");
        assert!(report.contains("merge year: "), "{report}");
        assert!(report.contains("pct_unmet"), "{report}");
        let tree: BTreeMap<String, Vec<u8>> = fs::read_dir(&dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        trees.push(tree);
    }
    assert_eq!(trees[0], trees[1]);
    assert_eq!(trees[0]["shoulder_windows.csv"], fs::read(golden_path()).unwrap());
}

#[test]
fn project_without_ensemble_names_the_input() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = fixture(tmp.path());
    let text = fs::read_to_string(&conf).unwrap();
    let trimmed: String = text.lines().filter(|l| !l.starts_with("ensemble")).map(|l| format!("{l}\n")).collect();
    fs::write(&conf, trimmed).unwrap();
    let out = shoulder(&["project", "--config", s(&conf)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ensemble"));
}

#[test]
fn report_on_empty_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = fixture(tmp.path());
    let empty = tmp.path().join("empty");
    let out = shoulder(&["report", "--config", s(&conf), "--out", s(&empty)]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "no stages run\n");
}
