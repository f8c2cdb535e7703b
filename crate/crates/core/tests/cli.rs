use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use truncated_lr::ascent::AscentTrace;

fn run_cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_truncated-lr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is a JSON report")
}

const COMPARE: &str = r#"
[model]
kind = "table"

[sampler]
seed = 7

[compare]
theta1 = [0.2, 0.3]
theta2 = [0.4, 0.3]
"#;

#[test]
fn unknown_key_is_rejected_with_location() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.toml", "[modle]\nkind = \"table\"\n");
    let o = run_cli(dir.path(), &["compare", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(
        stderr(&o).trim(),
        "error: config error: unknown field `modle`, expected one of `output`, `model`, \
         `sampler`, `compare`, `maximize`, `verify`, `em` (line 1)"
    );
}

#[test]
fn missing_seed_is_rejected() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.toml", &COMPARE.replace("seed = 7", ""));
    let o = run_cli(dir.path(), &["compare", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).trim(), "error: config error: missing field `sampler.seed`");
}

#[test]
fn shrink_out_of_range_is_rejected() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "m.toml",
        "output = \"t.csv\"\n[model]\nkind = \"table\"\n[maximize]\ntheta0 = [0.2, 0.3]\nseed = 1\nshrink = 1.5\n",
    );
    let o = run_cli(dir.path(), &["maximize", "--config", "m.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(
        stderr(&o).trim(),
        "error: config error: maximize.shrink = 1.5 violates 0 < maximize.shrink < 1"
    );
}

#[test]
fn subcommand_must_match_config() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.toml", COMPARE);
    let o = run_cli(dir.path(), &["verify", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_succeeds_and_writes_report() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "v.toml", "output = \"r.json\"\n[verify]\ninstance_count = 200\nseed = 42\n");
    let o = run_cli(dir.path(), &["verify", "--config", "v.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&o);
    assert_eq!(r["success"], true);
    assert_eq!(r["result"]["verify"]["passes"], 200);
    let file: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(file["result"], r["result"]);
}

#[test]
fn compare_table_pair() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.toml", COMPARE);
    let o = run_cli(dir.path(), &["compare", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&o);
    let c = &r["result"]["compare"];
    assert_eq!(c["decision"], "FirstSmaller");
    let analytic = c["analytic_log_lr"].as_f64().unwrap();
    assert!((analytic - (0.7f64 / 0.5).ln()).abs() < 1e-12);
    assert_eq!(r["artifact"], "truncated-lr");
    assert!(r["seeds"].as_array().unwrap().len() >= 3);
}

#[test]
fn reports_are_reproducible_apart_from_wall_clock() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.toml", COMPARE);
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("wall_clock_seconds");
        v
    };
    let a = strip(report(&run_cli(dir.path(), &["compare", "--config", "c.toml"])));
    let b = strip(report(&run_cli(dir.path(), &["compare", "--config", "c.toml"])));
    assert_eq!(a, b);
    let c = strip(report(&run_cli(
        dir.path(),
        &["compare", "--config", "c.toml", "--seed", "8"],
    )));
    assert_eq!(c["config"]["sampler"]["seed"], 8);
}

#[test]
fn maximize_with_zero_iterations_writes_header_only() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "m.toml",
        "output = \"t.csv\"\n[model]\nkind = \"table\"\n[maximize]\ntheta0 = [0.2, 0.3]\nseed = 1\nmax_iterations = 0\n",
    );
    let o = run_cli(dir.path(), &["maximize", "--config", "m.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(
        csv,
        "iter,theta.p0,theta.p1,proposed.p0,proposed.p1,decision,scale,accepted,log_marginal_analytic\n"
    );
    let r = report(&o);
    assert_eq!(r["result"]["maximize"]["final_theta"], serde_json::json!([0.2, 0.3]));
    assert_eq!(r["result"]["maximize"]["terminated_by"], "IterationCap");
}

#[test]
fn maximize_trace_round_trips() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "m.toml",
        "output = \"t.csv\"\n[model]\nkind = \"table\"\n[maximize]\ntheta0 = [0.2, 0.3]\nseed = 3\nmax_iterations = 15\ncomparison_budget = 2048\n",
    );
    let o = run_cli(dir.path(), &["maximize", "--config", "m.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let file = std::fs::File::open(dir.path().join("t.csv")).unwrap();
    let rows = AscentTrace::read_csv_records(file).unwrap();
    assert_eq!(rows.len(), report(&o)["result"]["maximize"]["iterations"].as_u64().unwrap() as usize);
    for pair in rows.windows(2) {
        let expect = if pair[0].accepted { &pair[0].proposed } else { &pair[0].theta };
        assert_eq!(&pair[1].theta, expect);
    }
    for r in &rows {
        let lm = r.log_marginal_analytic.unwrap();
        assert!((lm - r.theta.values().iter().sum::<f64>().ln()).abs() < 1e-12);
    }
}

#[test]
fn em_writes_monotone_trace() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "data.txt", "# observations\n-2.1\n-1.7\n-2.4\n1.9\n2.2\n\n2.5\n1.8\n");
    write(
        dir.path(),
        "e.toml",
        "output = \"em.csv\"\n[model]\nkind = \"mixture\"\ndata_file = \"data.txt\"\n[em]\ntheta0 = [0.5, -1.0, 1.0, 1.5]\n",
    );
    let o = run_cli(dir.path(), &["em", "--config", "e.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(dir.path().join("em.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["iter", "theta.pi", "theta.mu1", "theta.mu2", "theta.sigma", "log_marginal"]
    );
    let lls: Vec<f64> = rdr.records().map(|r| r.unwrap()[5].parse().unwrap()).collect();
    assert!(lls.len() > 2);
    assert!(lls.windows(2).all(|w| w[1] >= w[0] - 1e-10));
    assert_eq!(report(&o)["result"]["em"]["converged"], true);
}

#[test]
fn unreadable_data_file_is_a_run_failure() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "e.toml",
        "output = \"em.csv\"\n[model]\nkind = \"mixture\"\ndata_file = \"missing.txt\"\n[em]\ntheta0 = [0.5, -1.0, 1.0, 1.5]\n",
    );
    let o = run_cli(dir.path(), &["em", "--config", "e.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&o);
    assert_eq!(r["success"], false);
    assert!(r["error"].as_str().unwrap().len() > 0);
}
