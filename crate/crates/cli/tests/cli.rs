use std::process::{Command, Output};

fn seqfdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqfdr")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn simulate_emits_json_summary() {
    let o = seqfdr(&["--seed", "3", "simulate", "--example", "E1", "--m", "50", "--runs", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["command"], "simulate");
    assert_eq!(v["seed"], 3);
    for key in ["asn", "fdr_hat_pct", "fnr_hat_pct", "se_asn", "se_fdr_pct", "se_fnr_pct"] {
        assert!(v["results"][key].is_number(), "{key}");
    }
    assert!(v["version"].is_string());
}

#[test]
fn simulate_is_reproducible_and_reports_savings() {
    let args = [
        "--seed",
        "5",
        "simulate",
        "--example",
        "E1",
        "--m",
        "50",
        "--runs",
        "8",
        "--rule",
        "data-driven",
        "--compare",
        "gap-ao",
    ];
    let a = seqfdr(&args);
    let b = seqfdr(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    let s = v["results"]["savings_pct"].as_f64().unwrap();
    assert!(s > 0.0 && s < 100.0);
}

#[test]
fn out_of_range_pi1_is_a_usage_error() {
    let o = seqfdr(&["simulate", "--example", "E1", "--pi1", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pi1"));
}

#[test]
fn unknown_example_is_a_usage_error() {
    assert_eq!(seqfdr(&["simulate", "--example", "E9"]).status.code(), Some(2));
}

#[test]
fn stage_cap_hit_exits_with_truncation_code() {
    let o = seqfdr(&["simulate", "--example", "E1", "--m", "50", "--runs", "4", "--max-stages", "2"]);
    assert_eq!(o.status.code(), Some(5));
    // the summary is still written
    assert!(stdout(&o).contains("\"truncated\""));
}

#[test]
fn sweep_m_writes_csv_rows() {
    let o = seqfdr(&["sweep-m", "--example", "E1", "--m-list", "20,40", "--rules", "oracle,gap-ao", "--runs", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("example,m,pi1,procedure,asn"));
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("E1,20,0.2,oracle,"));
    assert!(lines[4].starts_with("E1,40,0.2,gap_ao,"));
}

#[test]
fn data_commands_on_a_written_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("expr.csv");
    let o = seqfdr(&["--seed", "1", "--out", path.to_str().unwrap(), "surrogate"]);
    assert!(o.status.success());
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header.split(',').count(), 103);

    let o = seqfdr(&["fixed-sample", "--csv", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let bh = v["results"]["bh_count"].as_u64().unwrap();
    assert!(bh > 0);
    assert_eq!(v["results"]["bh_genes"].as_array().unwrap().len() as u64, bh);

    let o = seqfdr(&["--seed", "2", "--format", "csv", "replay", "--csv", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "stopping_time,discoveries,outcome,exhausted,case_used,control_used");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let t: usize = row[0].parse().unwrap();
    assert!((50..=102).contains(&t));
    let used: usize = row[4].parse::<usize>().unwrap() + row[5].parse::<usize>().unwrap();
    assert_eq!(used, t);
}

#[test]
fn missing_file_is_a_data_error() {
    let o = seqfdr(&["fixed-sample", "--csv", "/nonexistent/expr.csv"]);
    assert_eq!(o.status.code(), Some(3));
}
