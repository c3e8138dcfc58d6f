use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iolb-hourglass")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(args: &[&str]) -> serde_json::Value {
    let o = cli(args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn bound_reports_exact_value() {
    let v = json(&["bound", "mgs", "-M", "32", "-N", "16", "-S", "64", "--json"]);
    assert_eq!(v["best"]["value"]["numerator"], "320");
    assert_eq!(v["best"]["value"]["denominator"], "1");
    assert!(v["classical"].is_object());
}

#[test]
fn bound_symbolic_has_expressions() {
    let v = json(&["bound", "--kernel", "mgs", "-M", "8", "-N", "4", "-S", "17", "--symbolic", "--json"]);
    let text = v.to_string();
    assert!(v["best"]["expression"].is_string(), "{text}");
}

#[test]
fn catalog_only_kernel() {
    let o = cli(&["bound", "gebd2", "-M", "64", "-N", "32", "-S", "64"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("catalog"));
    let o = cli(&["simulate", "gebd2", "-M", "4", "-N", "4", "-S", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_tiled_mgs() {
    let v = json(&[
        "simulate", "mgs", "-M", "16", "-N", "32", "-S", "64", "--schedule", "tiled", "--block", "3", "--json",
    ]);
    assert_eq!(v["loads"], 3514);
    assert_eq!(v["schedule"], "tiled-B3");
    assert!(v["peak_red"].as_u64().unwrap() <= 64);
}

#[test]
fn simulate_policies_order() {
    let run = |p: &str| json(&["simulate", "mgs", "-M", "6", "-N", "4", "-S", "14", "--policy", p, "--json"])["loads"]
        .as_u64()
        .unwrap();
    assert!(run("belady") <= run("lru"));
}

#[test]
fn sweep_writes_csv_in_grid_order() {
    let dir = std::env::temp_dir().join(format!("iolb-sweep-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("out.csv");
    let o = cli(&["sweep", "mgs", "--grid", "M=8;N=4,8;S=17,32", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(&path).unwrap();
    let keys: Vec<(String, String)> = r.records().map(|x| x.unwrap()).map(|x| (x[1].to_string(), x[2].to_string())).collect();
    let want = [("4", "17"), ("4", "32"), ("8", "17"), ("8", "32")];
    assert_eq!(keys, want.map(|(n, s)| (n.to_string(), s.to_string())));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn detect_lists_hourglasses() {
    let o = cli(&["detect", "hh_a2v"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("width_min=M - N"));
}

#[test]
fn verify_sampling_passes() {
    let o = cli(&["verify-sampling", "mgs", "-M", "6", "-N", "5", "--samples", "300", "--seed", "3"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("PASS"));
}

#[test]
fn bad_input_exits_two() {
    assert_eq!(cli(&["bound", "nope", "-M", "1"]).status.code(), Some(2));
    assert_eq!(cli(&["sweep", "mgs", "--grid", "M=;"]).status.code(), Some(2));
}
