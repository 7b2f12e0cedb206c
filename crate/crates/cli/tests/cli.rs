use std::path::Path;
use std::process::{Command, Output};

fn gvo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gvo")).args(args).output().unwrap()
}

fn gvo_env(args: &[&str], key: &str, value: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gvo"))
        .args(args)
        .env(key, value)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const COPY_KERNEL: &str = r#"{
  "schemaVersion": 1,
  "name": "copy",
  "fields": [
    {"name": "src", "elementSize": 8, "dims": [4096, 1, 1], "strides": [8, 32768, 32768]},
    {"name": "dst", "elementSize": 8, "dims": [4096, 1, 1], "strides": [8, 32768, 32768]}
  ],
  "accesses": [
    {"field": "src", "kind": "load", "expr": "src + (tidx + bidx * BX) * 8"},
    {"field": "dst", "kind": "store", "expr": "dst + (tidx + bidx * BX) * 8"}
  ],
  "launch": {"block": [256, 1, 1], "grid": [16, 1, 1]},
  "flopsPerLup": 0
}"#;

#[test]
fn estimate_table_names_the_limiter() {
    let out = stdout(&gvo(&["estimate", "--kernel", "builtin:stencil", "--block", "16,2,32", "--grid", "64,64,64"]));
    assert!(out.contains("limiter"));
    assert!(out.contains("star3d_r4"));
}

#[test]
fn estimate_json_is_deterministic() {
    let args = [
        "estimate", "--kernel", "builtin:stencil", "--block", "16,2,32", "--grid", "64,64,64", "--format", "json",
    ];
    let a = stdout(&gvo(&args));
    assert_eq!(a, stdout(&gvo(&args)));
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    let limiter = v["perf"]["limiter"].as_str().unwrap();
    assert!(["dram", "l2", "l1", "fp"].contains(&limiter), "{limiter}");
    assert_eq!(v["flopsPerLup"], 25.0);
}

#[test]
fn estimate_csv_has_a_row_per_level_and_kind() {
    let out = stdout(&gvo(&[
        "estimate", "--kernel", "builtin:lbm", "--block", "32,2,2", "--grid", "64,32,32", "--format", "csv",
    ]));
    let mut r = csv::Reader::from_reader(out.as_bytes());
    assert!(r.headers().unwrap().iter().any(|h| h == "predictedGlups"));
    assert_eq!(r.records().count(), 4);
}

#[test]
fn non_power_of_two_block_is_a_validation_error() {
    let o = gvo(&["estimate", "--kernel", "builtin:stencil", "--block", "3,5,7"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("power-of-two"));
}

#[test]
fn missing_files_are_io_errors() {
    let o = gvo(&["estimate", "--kernel", "/nonexistent/kernel.json"]);
    assert_eq!(o.status.code(), Some(3));
    let o = gvo(&["machine", "--machine", "no-such-machine"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn kernel_files_are_estimated_with_their_launch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.json");
    std::fs::write(&path, COPY_KERNEL).unwrap();
    let out = stdout(&gvo(&["estimate", "--kernel", path.to_str().unwrap(), "--format", "json"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["launch"]["block"][0], 256);
    assert_eq!(v["minimalBytesPerLup"], 16.0);

    std::fs::write(&path, COPY_KERNEL.replace("bidx * BX", "bidx * * BX")).unwrap();
    let o = gvo(&["estimate", "--kernel", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn machines_are_found_in_the_machine_dir() {
    let dir = tempfile::tempdir().unwrap();
    let text = stdout(&gvo(&["machine"])).replace("\"v100\"", "\"small\"").replace("6291456", "1048576");
    std::fs::write(dir.path().join("small.json"), text).unwrap();
    let out = stdout(&gvo_env(&["machine", "--machine", "small"], "GVO_MACHINE_DIR", dir.path()));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["l2CapacityBytes"], 1048576);

    std::fs::write(dir.path().join("broken.json"), "{\"name\": 1}").unwrap();
    let o = gvo_env(&["machine", "--machine", "broken"], "GVO_MACHINE_DIR", dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stencil_sweep_with_folding_has_162_rows() {
    let out = stdout(&gvo(&[
        "sweep", "--kernel", "builtin:stencil", "--folding-variants", "--grid", "32,32,32", "--samples", "1",
    ]));
    let rows: Vec<csv::StringRecord> = csv::Reader::from_reader(out.as_bytes()).records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 162);
    let ranks: Vec<usize> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(ranks, (1..=162).collect::<Vec<_>>());
}

#[test]
fn lbm_sweep_reaches_small_blocks_with_max_threads() {
    let out = stdout(&gvo(&[
        "sweep", "--kernel", "builtin:lbm", "--max-threads", "--threads", "128", "--grid", "64,32,32", "--samples", "1",
    ]));
    assert!(out.lines().any(|l| l.contains(",32x2x2_none,")));
}

#[test]
fn sweeps_are_byte_identical_across_runs() {
    let args = ["sweep", "--kernel", "builtin:stencil", "--threads", "256", "--grid", "32,32,32", "--samples", "2"];
    assert_eq!(stdout(&gvo(&args)), stdout(&gvo(&args)));
}

fn write_measurements(sweep_csv: &Path, out: &Path, skip: usize) {
    let mut r = csv::Reader::from_path(sweep_csv).unwrap();
    let h = r.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let (key, l2, dl, ds) = (col("configKey"), col("l2l1LoadDown"), col("dramLoadDown"), col("dramStoreDown"));
    let mut w = csv::Writer::from_path(out).unwrap();
    w.write_record(["configKey", "level", "kind", "measuredBytesPerLup"]).unwrap();
    for rec in r.records().skip(skip) {
        let rec = rec.unwrap();
        w.write_record([&rec[key], "l2l1", "load", &rec[l2]]).unwrap();
        w.write_record([&rec[key], "dram", "load", &rec[dl]]).unwrap();
        w.write_record([&rec[key], "dram", "store", &rec[ds]]).unwrap();
    }
    w.flush().unwrap();
}

#[test]
fn calibrate_round_trips_sweep_output() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    let meas = dir.path().join("meas.csv");
    let machine = dir.path().join("fitted.json");
    let obs = dir.path().join("obs.csv");
    stdout(&gvo(&[
        "sweep", "--kernel", "builtin:stencil", "--threads", "256", "--grid", "32,32,32", "--samples", "2",
        "--output", sweep.to_str().unwrap(),
    ]));
    write_measurements(&sweep, &meas, 0);
    let out = stdout(&gvo(&[
        "calibrate", "--measurements", meas.to_str().unwrap(), "--sweep-output", sweep.to_str().unwrap(),
        "--machine-out", machine.to_str().unwrap(), "--observations", obs.to_str().unwrap(),
    ]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for role in ["l1", "l2Load", "l2Store", "overmiss"] {
        assert!(v["fits"][role]["a"].is_number(), "{role}");
    }
    let fitted = stdout(&gvo(&["machine", "--machine", machine.to_str().unwrap()]));
    assert!(fitted.contains("fitParams"));
    assert!(std::fs::read_to_string(&obs).unwrap().starts_with("role,x,ratio,weight,fitted"));
}

#[test]
fn calibrate_lists_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    let meas = dir.path().join("meas.csv");
    stdout(&gvo(&[
        "sweep", "--kernel", "builtin:stencil", "--threads", "64", "--grid", "32,32,32", "--samples", "1",
        "--output", sweep.to_str().unwrap(),
    ]));
    std::fs::write(&meas, "configKey,level,kind,measuredBytesPerLup\n9x9x9_none,dram,load,10\n").unwrap();
    let o = gvo(&[
        "calibrate", "--measurements", meas.to_str().unwrap(), "--sweep-output", sweep.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("9x9x9_none"));
    let o = gvo(&["calibrate", "--measurements", "/nonexistent.csv", "--sweep-output", sweep.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn footprint_dump_is_csv() {
    let out = stdout(&gvo(&[
        "footprint", "--kernel", "builtin:stencil", "--block", "16,8,8", "--grid", "64,64,64", "--granularity", "128",
    ]));
    let mut r = csv::Reader::from_reader(out.as_bytes());
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["field", "kind", "granularity", "uniqueLines", "uniqueBytes", "totalAccessBytes"]
    );
    assert_eq!(r.records().count(), 2);
    let wave = stdout(&gvo(&[
        "footprint", "--kernel", "builtin:stencil", "--block", "16,8,8", "--grid", "64,64,64", "--group", "wave",
        "--format", "json",
    ]));
    let v: serde_json::Value = serde_json::from_str(&wave).unwrap();
    assert_eq!(v["granularity"], 32);
}
