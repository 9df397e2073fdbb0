use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use airway_cpd_core::io::AlignedRecord;
use airway_cpd_core::series_prep::{align_pair, AlignedPair, AreaSeries};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airway-cpd"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn area_csv(areas: &[f64]) -> String {
    let mut s = String::from("arc_length_mm,area_mm2\n");
    for (i, a) in areas.iter().enumerate() {
        s.push_str(&format!("{i},{a}\n"));
    }
    s
}

fn wavy(x: f64) -> f64 {
    8.0 + 2.0 * (0.21 * x).sin() + 0.7 * (0.05 * x).cos()
}

fn write_pair(dir: &Path, name: &str, baseline: Vec<f64>, followup: Vec<f64>) {
    let pair = AlignedPair::from_grid(0.0, baseline, followup, 0).unwrap();
    let json = serde_json::to_string(&AlignedRecord::from_pair(&pair)).unwrap();
    std::fs::write(dir.join(name), json).unwrap();
}

#[test]
fn align_identical_files_gives_zero_shift() {
    let dir = tempfile::tempdir().unwrap();
    let csv = area_csv(&(0..80).map(|i| wavy(i as f64)).collect::<Vec<_>>());
    std::fs::write(dir.path().join("a.csv"), &csv).unwrap();
    std::fs::write(dir.path().join("b.csv"), &csv).unwrap();
    let v: Value = serde_json::from_str(&stdout(&run(&["align", "a.csv", "b.csv"], dir.path()))).unwrap();
    assert_eq!(v["shift_a"], 0);
    assert!(v["y"].as_array().unwrap().iter().all(|y| y.as_f64().unwrap() == 0.0));
}

#[test]
fn align_recovers_a_known_shift() {
    let dir = tempfile::tempdir().unwrap();
    let base: Vec<f64> = (0..90).map(|i| wavy(i as f64)).collect();
    let follow: Vec<f64> = (0..90).map(|i| wavy(i as f64 + 2.0)).collect();
    std::fs::write(dir.path().join("b.csv"), area_csv(&base)).unwrap();
    std::fs::write(dir.path().join("f.csv"), area_csv(&follow)).unwrap();
    let v: Value = serde_json::from_str(&stdout(&run(&["align", "b.csv", "f.csv"], dir.path()))).unwrap();

    let oracle = align_pair(
        &AreaSeries::on_grid(0.0, base).unwrap(),
        &AreaSeries::on_grid(0.0, follow).unwrap(),
    )
    .unwrap();
    assert_eq!(v["shift_a"], oracle.shift_a);
    assert_eq!(oracle.shift_a.abs(), 2);
}

#[test]
fn malformed_csv_exits_2_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.csv"), "arc_length_mm,area_mm2\n0,1\n1,oops\n2,3\n").unwrap();
    std::fs::write(dir.path().join("b.csv"), area_csv(&[1.0; 60])).unwrap();
    let o = run(&["align", "a.csv", "b.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert!(err["message"].as_str().unwrap().contains("line 3"), "{err}");
}

fn step_pair(dir: &Path) {
    let base = vec![10.0; 120];
    let follow: Vec<f64> = (0..120)
        .map(|i| {
            let level = if i < 40 {
                0.0
            } else if i < 80 {
                0.5
            } else {
                1.0
            };
            10.0 * f64::exp(level + 0.02 * (1.3 * i as f64).sin())
        })
        .collect();
    write_pair(dir, "step.json", base, follow);
}

#[test]
fn detect_is_deterministic_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    step_pair(dir.path());
    let args = ["detect", "step.json", "--iterations", "5000", "--seed", "7"];
    let a = stdout(&run(&args, dir.path()));
    let b = stdout(&run(&args, dir.path()));
    assert_eq!(a, b);
    let v: Value = serde_json::from_str(&a).unwrap();
    assert!(v["point_mm"].is_f64());
}

#[test]
fn lavielle_returns_the_distal_changepoint() {
    let dir = tempfile::tempdir().unwrap();
    step_pair(dir.path());
    let v: Value = serde_json::from_str(&stdout(&run(
        &["detect", "step.json", "--method", "lavielle"],
        dir.path(),
    )))
    .unwrap();
    assert_eq!(v["point_mm"], 80.0);
}

#[test]
fn zero_iterations_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    step_pair(dir.path());
    let o = run(&["detect", "step.json", "--iterations", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn threshold_no_call_exits_zero_with_a_record() {
    let dir = tempfile::tempdir().unwrap();
    write_pair(dir.path(), "flat.json", vec![10.0; 60], vec![10.0; 60]);
    let v: Value = serde_json::from_str(&stdout(&run(
        &["detect", "flat.json", "--method", "threshold"],
        dir.path(),
    )))
    .unwrap();
    assert!(v["point_mm"].is_null());
    assert!(v["no_call"].is_string());
}

#[test]
fn simulate_one_airway_one_cell_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--airways",
        "1",
        "--alphas",
        "20",
        "--magnitudes",
        "2.05",
        "--detectors",
        "rjmh",
        "--iterations",
        "2000",
    ];
    let csv = stdout(&run(&args, dir.path()));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "alpha_mm,magnitude,detector,median_displacement_mm,n_calls,n_nocalls"
    );
    assert!(lines[1].starts_with("20,2.05,rjmh,"), "{}", lines[1]);
}

#[test]
fn full_grid_all_detectors_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let csv = stdout(&run(&["simulate", "--iterations", "200", "--seed", "1"], dir.path()));
    assert_eq!(csv.lines().count() - 1, 7 * 11 * 3);
}

#[test]
fn evaluate_reads_a_directory_of_aligned_records() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("set")).unwrap();
    for k in 0..2 {
        let base: Vec<f64> = (0..100).map(|i| wavy(i as f64 + k as f64)).collect();
        let follow: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(i, a)| a * (1.0 + 0.01 * (i as f64 * 0.7 + k as f64).sin()))
            .collect();
        write_pair(&dir.path().join("set"), &format!("{k}.json"), base, follow);
    }
    let args = [
        "evaluate",
        "set",
        "--alphas",
        "20,30",
        "--magnitudes",
        "1.55",
        "--detectors",
        "lavielle,threshold",
    ];
    let csv = stdout(&run(&args, dir.path()));
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
}

#[test]
fn volume_identical_pair_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a: Vec<f64> = (0..101).map(|i| wavy(i as f64)).collect();
    write_pair(dir.path(), "same.json", a.clone(), a);
    let csv = stdout(&run(&["volume", "same.json", "--t", "40"], dir.path()));
    assert_eq!(csv, "airway,pvc_total,pvc_post,pvc_pre\nsame,0.0,0.0,0.0\n");
}

#[test]
fn volume_dilated_tail_row() {
    let dir = tempfile::tempdir().unwrap();
    let follow: Vec<f64> = (0..=100).map(|x| if x >= 70 { 20.0 } else { 10.0 }).collect();
    write_pair(dir.path(), "tail.json", vec![10.0; 101], follow);
    let csv = stdout(&run(
        &["volume", "tail.json", "--t", "70", "--airway", "tail"],
        dir.path(),
    ));
    // The 1 mm panel straddling the step adds 5 mm³ before t.
    assert_eq!(csv.lines().nth(1), Some("tail,30.5,100.0,0.7"));
}

#[test]
fn volume_t_beyond_distal_end_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_pair(dir.path(), "p.json", vec![10.0; 50], vec![11.0; 50]);
    let o = run(&["volume", "p.json", "--t", "200"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn manifest_lists_inputs_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    step_pair(dir.path());
    let args = [
        "detect",
        "step.json",
        "--iterations",
        "1000",
        "--seed",
        "4",
        "-o",
        "out.json",
        "--manifest",
        "m.json",
    ];
    let o = run(&args, dir.path());
    assert!(o.status.success());
    let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "detect");
    assert_eq!(m["seed"], 4);
    assert_eq!(m["inputs"][0], "step.json");
    assert_eq!(m["config"]["sampler"]["iterations"], 1000);
    assert!(dir.path().join("out.json").exists());
}
