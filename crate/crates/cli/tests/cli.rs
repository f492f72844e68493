//! End-to-end tests that spawn the `dcf` binary and check CSV shape,
//! exit codes, and numeric sanity of each subcommand.

use std::path::Path;
use std::process::{Command, Output};

fn dcf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcf"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout should be UTF-8")
}

/// Parse CSV text into rows of cells; no quoting is ever emitted.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn cell(rows: &[Vec<String>], row: usize, name: &str) -> f64 {
    let col = rows[0]
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows[row][col]
        .parse()
        .unwrap_or_else(|_| panic!("cell {name}[{row}] = `{}` not a number", rows[row][col]))
}

const SOLVE_HEADER: &str = "lambda_pkt_s,n,snr_db,z0_db,p_e,tau,p_col,p_cap,p_eq,q,e_slot_us,throughput,iterations,residual";

#[test]
fn solve_emits_stable_header_and_one_row() {
    let out = dcf(&["solve"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_str(&out);
    let r = rows(&text);
    assert_eq!(r.len(), 2);
    assert_eq!(r[0].join(","), SOLVE_HEADER);
    assert_eq!(r[1].len(), r[0].len());
    // defaults echoed in the input columns
    assert_eq!(cell(&r, 1, "n"), 10.0);
    assert_eq!(cell(&r, 1, "lambda_pkt_s"), 10.0);
}

#[test]
fn set_overrides_reach_the_model() {
    let out = dcf(&["solve", "--set", "n_stations=20", "--set", "lambda_pkt_s=50"]);
    assert!(out.status.success());
    let r = rows(&stdout_str(&out));
    assert_eq!(cell(&r, 1, "n"), 20.0);
    assert_eq!(cell(&r, 1, "lambda_pkt_s"), 50.0);
}

#[test]
fn capture_vanishes_when_threshold_is_huge() {
    let out = dcf(&["solve", "--set", "z0_db=300", "--set", "saturated=true"]);
    assert!(out.status.success());
    let r = rows(&stdout_str(&out));
    assert!(cell(&r, 1, "p_cap") <= 1e-12);
}

#[test]
fn zero_load_gives_zero_throughput() {
    let out = dcf(&["solve", "--set", "lambda_pkt_s=0"]);
    assert!(out.status.success());
    let r = rows(&stdout_str(&out));
    assert_eq!(cell(&r, 1, "throughput"), 0.0);
    assert_eq!(cell(&r, 1, "tau"), 0.0);
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.conf");
    std::fs::write(&path, "n_stations = 7\nlambda_pkt_s = 25\n# comment\nsnr_db = 30\n").unwrap();
    let out = dcf(&["solve", "--config", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&stdout_str(&out));
    assert_eq!(cell(&r, 1, "n"), 7.0);
    assert_eq!(cell(&r, 1, "lambda_pkt_s"), 25.0);
    assert_eq!(cell(&r, 1, "snr_db"), 30.0);
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("row.csv");
    let to_file = dcf(&["solve", "--out", path.to_str().unwrap()]);
    assert!(to_file.status.success());
    assert!(to_file.stdout.is_empty());
    let direct = dcf(&["solve"]);
    assert_eq!(std::fs::read(&path).unwrap(), direct.stdout);
}

#[test]
fn sweep_preserves_grid_order() {
    let out = dcf(&["sweep", "--axis", "lambda", "--grid", "100,10,1"]);
    assert!(out.status.success());
    let r = rows(&stdout_str(&out));
    assert_eq!(r.len(), 4);
    assert_eq!(*r[0].last().unwrap(), "error");
    assert_eq!(cell(&r, 1, "lambda_pkt_s"), 100.0);
    assert_eq!(cell(&r, 2, "lambda_pkt_s"), 10.0);
    assert_eq!(cell(&r, 3, "lambda_pkt_s"), 1.0);
    for i in 1..4 {
        assert!(r[i].last().unwrap().is_empty(), "unexpected error cell");
    }
}

#[test]
fn sweep_linspace_endpoints_are_exact() {
    let out = dcf(&["sweep", "--axis", "snr", "--grid", "10:40:4"]);
    assert!(out.status.success());
    let r = rows(&stdout_str(&out));
    assert_eq!(r.len(), 5);
    let snrs: Vec<f64> = (1..5).map(|i| cell(&r, i, "snr_db")).collect();
    assert_eq!(snrs, vec![10.0, 20.0, 30.0, 40.0]);
}

#[test]
fn sweep_throughput_rises_with_load_before_saturation() {
    let out = dcf(&["sweep", "--axis", "lambda", "--grid", "0.5,1,2,4"]);
    assert!(out.status.success());
    let r = rows(&stdout_str(&out));
    let s: Vec<f64> = (1..5).map(|i| cell(&r, i, "throughput")).collect();
    for w in s.windows(2) {
        assert!(w[1] > w[0], "throughput should grow at light load: {s:?}");
    }
}

#[test]
fn nonmonotone_grid_is_a_usage_error() {
    let out = dcf(&["sweep", "--axis", "lambda", "--grid", "1,5,2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("monotone"));
}

#[test]
fn fractional_station_count_is_a_usage_error() {
    let out = dcf(&["sweep", "--axis", "n", "--grid", "2:3:3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let out = dcf(&["solve", "--set", "bogus_key=1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn nonconvergence_is_a_numerical_error() {
    let out = dcf(&["solve", "--set", "tol=1e-17", "--set", "max_iters=3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let out = dcf(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let no_args = Command::new(env!("CARGO_BIN_EXE_dcf")).output().unwrap();
    assert_eq!(no_args.status.code(), Some(1));
}

#[test]
fn ber_matches_rayleigh_closed_form() {
    let out = dcf(&["ber", "--grid", "0,10,20"]);
    assert!(out.status.success());
    let r = rows(&stdout_str(&out));
    assert_eq!(r[0].join(","), "snr_db,modulation,ber,fer");
    for (i, snr_db) in [0.0, 10.0, 20.0].iter().enumerate() {
        let g = 10f64.powf(snr_db / 10.0);
        let expected = 0.5 * (1.0 - (g / (1.0 + g)).sqrt());
        let got = cell(&r, i + 1, "ber");
        assert!(
            (got - expected).abs() <= 1e-10,
            "snr {snr_db} dB: {got} vs {expected}"
        );
        assert_eq!(r[i + 1][1], "dbpsk");
    }
}

#[test]
fn simulate_reports_aggregates() {
    let out = dcf(&[
        "simulate",
        "--set",
        "saturated=true",
        "--horizon-us",
        "2e6",
        "--seed",
        "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&stdout_str(&out));
    assert_eq!(r.len(), 2);
    let total = cell(&r, 1, "slots_total");
    let parts = cell(&r, 1, "slots_idle")
        + cell(&r, 1, "slots_success")
        + cell(&r, 1, "slots_collision")
        + cell(&r, 1, "slots_error");
    assert_eq!(total, parts);
    assert_eq!(cell(&r, 1, "seed"), 5.0);
}

#[test]
fn simulate_same_seed_is_bit_identical() {
    let args = ["simulate", "--horizon-us", "3e6", "--seed", "11"];
    let a = dcf(&args);
    let b = dcf(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = dcf(&["simulate", "--horizon-us", "3e6", "--seed", "12"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn trace_lists_slot_events() {
    let out = dcf(&[
        "simulate",
        "--trace",
        "--set",
        "saturated=true",
        "--set",
        "n_stations=3",
        "--horizon-us",
        "3e5",
    ]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    let r = rows(&text);
    assert_eq!(r[0].join(","), "slot_index,outcome,station,duration_us");
    assert!(r.len() > 2, "expected some slots");
    let known = ["idle", "success", "capture", "collision", "channel_error"];
    for (i, row) in r[1..].iter().enumerate() {
        assert_eq!(row[0].parse::<u64>().unwrap(), i as u64);
        assert!(known.contains(&row[1].as_str()), "outcome `{}`", row[1]);
        // station is blank exactly when no single station owns the slot
        match row[1].as_str() {
            "idle" | "collision" => assert!(row[2].is_empty()),
            _ => assert!(row[2].parse::<u32>().is_ok()),
        }
        assert!(row[3].parse::<f64>().unwrap() > 0.0);
    }
    // saturated 3-station trace must actually transmit
    assert!(r[1..].iter().any(|row| row[1] != "idle"));
}

#[test]
fn validate_appends_simulation_columns() {
    let out = dcf(&[
        "validate",
        "--axis",
        "n",
        "--grid",
        "2,5",
        "--set",
        "saturated=true",
        "--set",
        "fer_override=0",
        "--set",
        "z0_db=300",
        "--horizon-us",
        "3e7",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&stdout_str(&out));
    assert_eq!(
        r[0].join(","),
        format!("{SOLVE_HEADER},throughput_sim,ci95,seed,rel_err,error")
    );
    assert_eq!(r.len(), 3);
    for i in 1..3 {
        let model = cell(&r, i, "throughput");
        let sim = cell(&r, i, "throughput_sim");
        let rel = cell(&r, i, "rel_err");
        assert!((sim - model).abs() / model <= 0.10, "row {i}: {sim} vs {model}");
        // cells are rounded to 10 significant digits, so recomputing
        // rel_err from them is only good to ~1e-9
        assert!((rel - (sim - model).abs() / model).abs() <= 1e-8);
        assert!(r[i].last().unwrap().is_empty());
    }
}

#[test]
fn sweep_validate_seeds_are_reproducible() {
    let args = [
        "sweep",
        "--axis",
        "n",
        "--grid",
        "2,4",
        "--validate",
        "--set",
        "saturated=true",
        "--horizon-us",
        "5e6",
        "--seed",
        "3",
    ];
    let a = dcf(&args);
    let b = dcf(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let r = rows(&stdout_str(&a));
    assert_eq!(
        r[0].join(","),
        format!("{SOLVE_HEADER},throughput_sim,ci95,seed,error")
    );
    // distinct points get distinct derived seeds
    let col = r[0].iter().position(|h| h == "seed").unwrap();
    assert_ne!(r[1][col], r[2][col]);
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let out = dcf(&["solve", "--config", "/nonexistent/scenario.conf"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(Path::new("/nonexistent/scenario.conf").exists() == false);
}
