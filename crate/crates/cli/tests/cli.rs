use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tpia_core::ingest::write_canonical;
use tpia_core::synthetic::{four_bus_feeder, two_bus_analog};

fn tpia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpia"))
        .args(args)
        .env_remove("TPIA_SETTINGS")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn strip_wall_time(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("wall_time_s");
            map.values_mut().for_each(strip_wall_time);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_time),
        _ => {}
    }
}

const GLM: &str = r#"
object overhead_line_configuration { }
"#;

const SMALL_GLM: &str = r#"
// two buses and a line
object line_configuration {
    name lc1;
    z11 0.3+0.6j;
    z12 0.1+0.2j;
    z13 0.1+0.2j;
    z21 0.1+0.2j;
    z22 0.3+0.6j;
    z23 0.1+0.2j;
    z31 0.1+0.2j;
    z32 0.1+0.2j;
    z33 0.3+0.6j;
}
object node {
    name src;
    phases ABCN;
    bustype SWING;
    nominal_voltage 7200;
}
object load {
    name ld;
    phases ABCN;
    nominal_voltage 7200;
    constant_power_A 100000+20000j;
    constant_power_B 100000+20000j;
    constant_power_C 100000+20000j;
}
object overhead_line {
    name l1;
    phases ABCN;
    from src;
    to ld;
    length 5280;
    configuration lc1;
}
"#;

#[test]
fn feasible_case_all_modes_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("four.json");
    fs::write(&input, write_canonical(&four_bus_feeder())).unwrap();
    let out = tpia(&["run", path_str(&input), "--mode", "all"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = stdout(&out);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].split_whitespace().eq(["mode", "converged", "iterations", "matrix", "size", "time", "(s)", "nonzero", "i_f"]));
    for row in &rows[2..] {
        assert_eq!(row.split_whitespace().last(), Some("0"), "{row}");
    }
}

#[test]
fn overloaded_case_l1_exits_two_and_lists_flagged_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("two.json");
    let csv = dir.path().join("out.csv");
    fs::write(&input, write_canonical(&two_bus_analog(3.0, 10.0))).unwrap();
    let out = tpia(&["run", path_str(&input), "--mode", "l1", "--csv", path_str(&csv)]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let load_row = text.lines().find(|l| l.starts_with("load,")).expect("load row");
    let mag: f64 = load_row.split(',').nth(4).unwrap().parse().unwrap();
    assert!(mag > 0.0);
}

#[test]
fn all_modes_write_one_csv_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("two.json");
    fs::write(&input, write_canonical(&two_bus_analog(3.0, 10.0))).unwrap();
    let csv = dir.path().join("out.csv");
    let dot = dir.path().join("out.dot");
    let out = tpia(&["run", path_str(&input), "--csv", path_str(&csv), "--dot", path_str(&dot)]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    for mode in ["tpf", "l2", "l1"] {
        assert!(dir.path().join(format!("out.{mode}.csv")).exists());
        assert!(dir.path().join(format!("out.{mode}.dot")).exists());
    }
    assert!(stderr(&out).contains("solver failure (tpf)"));
}

#[test]
fn missing_input_is_an_io_failure() {
    let out = tpia(&["run", "/nonexistent/feeder.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("I/O error"), "{}", stderr(&out));
}

#[test]
fn malformed_input_is_a_parse_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.json");
    fs::write(&input, "{\"version\": 1, \"buses\": [").unwrap();
    let out = tpia(&["run", path_str(&input)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("parse error"), "{}", stderr(&out));

    let glm = dir.path().join("bad.glm");
    fs::write(&glm, GLM).unwrap();
    let out = tpia(&["run", path_str(&glm)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("parse error"), "{}", stderr(&out));
}

#[test]
fn solver_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("two.json");
    fs::write(&input, write_canonical(&two_bus_analog(3.0, 10.0))).unwrap();
    let out = tpia(&["run", path_str(&input), "--mode", "pf"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("solver failure"), "{}", stderr(&out));
    let out = tpia(&["run", path_str(&input), "--mode", "l2", "--max-iter", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn settings_file_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("two.json");
    fs::write(&input, write_canonical(&two_bus_analog(3.0, 10.0))).unwrap();
    let settings = dir.path().join("settings.toml");
    fs::write(&settings, "if_threshold = 5.0\n").unwrap();
    let run = |settings: &Path| {
        Command::new(env!("CARGO_BIN_EXE_tpia"))
            .args(["run", path_str(&input), "--mode", "l2"])
            .env("TPIA_SETTINGS", settings)
            .output()
            .unwrap()
    };
    // |i_f| ≈ 0.95 pu is below a threshold of 5
    assert_eq!(run(&settings).status.code(), Some(0));

    fs::write(&settings, "sigma = 2.0\n").unwrap();
    let out = run(&settings);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("configuration error"), "{}", stderr(&out));

    fs::write(&settings, "unknown_knob = 1\n").unwrap();
    assert!(stderr(&run(&settings)).contains("configuration error"));
}

#[test]
fn json_output_is_deterministic_apart_from_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("two.json");
    fs::write(&input, write_canonical(&two_bus_analog(3.0, 10.0))).unwrap();
    let mut docs = Vec::new();
    for name in ["a.json", "b.json"] {
        let json = dir.path().join(name);
        tpia(&["run", path_str(&input), "--json", path_str(&json)]);
        let mut v: Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
        strip_wall_time(&mut v);
        docs.push(serde_json::to_string(&v).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
    let v: Value = serde_json::from_str(&docs[0]).unwrap();
    assert_eq!(v["reports"].as_array().unwrap().len(), 3);
}

#[test]
fn glm_input_and_subset_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("small.glm");
    fs::write(&input, SMALL_GLM).unwrap();
    let out = tpia(&["run", path_str(&input), "--mode", "pf"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let two = dir.path().join("two.json");
    fs::write(&two, write_canonical(&two_bus_analog(3.0, 10.0))).unwrap();
    let subset = dir.path().join("subset.txt");
    fs::write(&subset, "# only the load bus\nload A\n").unwrap();
    let out = tpia(&["run", path_str(&two), "--mode", "l2", "--subset", path_str(&subset)]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    fs::write(&subset, "src\n").unwrap();
    let out = tpia(&["run", path_str(&two), "--mode", "l2", "--subset", path_str(&subset)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("configuration error"), "{}", stderr(&out));
}

#[test]
fn batch_marks_failed_cases_and_solves_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let cases = dir.path().join("cases");
    fs::create_dir(&cases).unwrap();
    fs::write(cases.join("a_four.json"), write_canonical(&four_bus_feeder())).unwrap();
    fs::write(cases.join("b_two.json"), write_canonical(&two_bus_analog(3.0, 10.0))).unwrap();
    fs::write(cases.join("c_broken.json"), "not json").unwrap();
    fs::write(cases.join("notes.txt"), "ignored").unwrap();
    let out_dir = dir.path().join("out");
    let out = tpia(&["batch", path_str(&cases), "--out", path_str(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cases"], 3);
    let rows = summary["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 9);
    let status = |case: &str, mode: &str| {
        rows.iter()
            .find(|r| r["case"] == case && r["mode"] == mode)
            .map(|r| r["status"].as_str().unwrap().to_string())
            .unwrap()
    };
    assert_eq!(status("a_four.json", "l1"), "feasible");
    assert_eq!(status("b_two.json", "l2"), "infeasible");
    assert_eq!(status("b_two.json", "tpf"), "not_converged");
    assert_eq!(status("c_broken.json", "l2"), "failed");
    assert!(out_dir.join("a_four.tpia.json").exists());
    assert!(!out_dir.join("c_broken.tpia.json").exists());
}

#[test]
fn empty_batch_directory_gives_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = tpia(&["batch", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["cases"], 0);
    assert!(v["rows"].as_array().unwrap().is_empty());
}

#[test]
fn warm_start_scales_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("two.json");
    fs::write(&input, write_canonical(&two_bus_analog(3.0, 10.0))).unwrap();
    let out = tpia(&["run", path_str(&input), "--mode", "l1", "--warm-start", "0.25,0.5"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}
