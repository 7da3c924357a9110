use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pickands::bootstrap::band_from_json;
use pickands::projection::ProjectedEstimate;
use pickands::SimplexPoint;
use tempfile::TempDir;

fn pickands(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pickands"))
        .args(args)
        .env("PICKANDS_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pickands(args);
    assert!(
        out.status.success(),
        "pickands {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(p).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn simulate(dir: &TempDir, name: &str, d: usize, alpha: f64, n: usize, seed: u64) -> PathBuf {
    let out = path(dir, name);
    ok(&[
        "simulate",
        "--alpha",
        &alpha.to_string(),
        "-d",
        &d.to_string(),
        "-n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]);
    out
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = simulate(&dir, "a.csv", 3, 0.5, 100, 1);
    let b = simulate(&dir, "b.csv", 3, 0.5, 100, 1);
    let c = simulate(&dir, "c.csv", 3, 0.5, 100, 2);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_ne!(bytes, std::fs::read(&c).unwrap());
    let (header, rows) = read_rows(&a);
    assert_eq!(header, ["x1", "x2", "x3"]);
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().flatten().all(|v| v.parse::<f64>().unwrap() > 0.0));
}

#[test]
fn out_of_range_parameter_is_a_usage_error() {
    let out = pickands(&["simulate", "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1.5"));
    assert_eq!(pickands(&["simulate"]).status.code(), Some(2));
    assert_eq!(pickands(&["estimate", "x.csv", "--estimator", "foo"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    assert_eq!(pickands(&["estimate", s(&path(&dir, "missing.csv"))]).status.code(), Some(3));
    let short = path(&dir, "short.csv");
    std::fs::write(&short, "a,b\n1,2\n3,4\n").unwrap();
    assert_eq!(pickands(&["estimate", s(&short)]).status.code(), Some(3));
    let tied = path(&dir, "tied.csv");
    let body: String = (0..20).map(|i| format!("{i},5\n")).collect();
    std::fs::write(&tied, format!("a,b\n{body}")).unwrap();
    assert_eq!(pickands(&["estimate", s(&tied)]).status.code(), Some(3));
}

#[test]
fn comonotone_center_value_is_one_over_d() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "como.csv");
    let body: String = (1..=50)
        .map(|i| {
            let x = i as f64;
            format!("{x},{},{}\n", x * x, x.ln())
        })
        .collect();
    std::fs::write(&input, format!("a,b,c\n{body}")).unwrap();
    let json = path(&dir, "pilot.json");
    ok(&["estimate", s(&input), "--grid", "30", "--out", s(&json)]);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["schema"], 1);
    let (header, rows) = read_rows(&json.with_extension("csv"));
    assert_eq!(header, ["w1", "w2", "w3", "pilot"]);
    let center = rows
        .iter()
        .find(|r| r[..3].iter().all(|w| (w.parse::<f64>().unwrap() - 1.0 / 3.0).abs() < 1e-12))
        .expect("grid contains the barycenter");
    assert!((center[3].parse::<f64>().unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn non_numeric_rows_are_dropped_and_reported() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "dirty.csv");
    let mut body = String::from("u,v\n");
    for i in 0..30 {
        body.push_str(&format!("{},{}\n", (i * 7 % 30) as f64, (i * 11 % 30) as f64));
    }
    body.push_str("NA,3\n4,abc\n5,\n");
    std::fs::write(&input, body).unwrap();
    let json = path(&dir, "pilot.json");
    let out = ok(&["estimate", s(&input), "--grid", "10", "--out", s(&json)]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("3 dropped"), "{stderr}");
    assert!(stderr.contains("line 32"), "{stderr}");
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["rows_used"], 30);
    assert_eq!(doc["rows_dropped"], 3);
}

#[test]
fn project_round_trips_and_reports_feasibility() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "s.csv", 3, 0.6, 150, 3);
    let pilot = path(&dir, "pilot.json");
    ok(&["estimate", s(&data), "--grid", "24", "--out", s(&pilot)]);
    let est = path(&dir, "est.json");
    let out = ok(&["project", s(&pilot), "-k", "8", "--out", s(&est)]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("feasibility satisfied"), "{stderr}");

    let estimate = ProjectedEstimate::from_json(&std::fs::read_to_string(&est).unwrap()).unwrap();
    assert_eq!(estimate.provenance["feasibility"], "satisfied");
    let theta = estimate.extremal_coefficient().unwrap();
    assert!((1.0..=3.0).contains(&theta));
    assert!(stderr.contains(&format!("theta = {theta}")));

    let (header, rows) = read_rows(&est.with_extension("csv"));
    assert_eq!(header, ["w1", "w2", "w3", "pilot", "projected"]);
    for row in &rows {
        let v: Vec<f64> = row.iter().map(|c| c.parse().unwrap()).collect();
        let w = SimplexPoint::new(v[..3].to_vec()).unwrap();
        assert!((estimate.evaluate(&w).unwrap() - v[4]).abs() <= 1e-14);
    }

    let printed = ok(&["extremal", s(&est)]);
    let value: f64 = String::from_utf8_lossy(&printed.stdout).trim().parse().unwrap();
    assert_eq!(value, theta);
}

#[test]
fn project_from_csv_matches_project_from_pilot() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "s.csv", 2, 0.4, 120, 5);
    let pilot = path(&dir, "pilot.json");
    ok(&["estimate", s(&data), "--grid", "40", "--out", s(&pilot)]);
    let a = path(&dir, "a.json");
    let b = path(&dir, "b.json");
    ok(&["project", s(&pilot), "-k", "6", "--out", s(&a)]);
    ok(&["project", s(&data), "-k", "6", "--grid", "40", "--out", s(&b)]);
    let ea = ProjectedEstimate::from_json(&std::fs::read_to_string(&a).unwrap()).unwrap();
    let eb = ProjectedEstimate::from_json(&std::fs::read_to_string(&b).unwrap()).unwrap();
    assert_eq!(ea.beta, eb.beta);
}

#[test]
fn pairwise_reports_every_pair_within_range() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "s7.csv", 7, 0.5, 200, 7);
    let table = path(&dir, "pairs.csv");
    ok(&["pairwise", s(&data), "-k", "7", "--out", s(&table)]);
    let (header, rows) = read_rows(&table);
    assert_eq!(header, ["first", "second", "theta_pilot", "theta"]);
    assert_eq!(rows.len(), 21);
    for row in &rows {
        let theta: f64 = row[3].parse().unwrap();
        assert!((1.0..=2.0).contains(&theta), "{row:?}");
    }
}

#[test]
fn pairwise_identical_and_constant_columns() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "dup.csv");
    let body: String = (0..100)
        .map(|i| {
            let x = ((i * 37) % 101) as f64;
            let y = ((i * 53) % 103) as f64;
            format!("{x},{x},{y},1\n")
        })
        .collect();
    std::fs::write(&input, format!("a,b,c,k\n{body}")).unwrap();
    let out = ok(&["pairwise", s(&input), "-k", "6"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("'k' is constant"));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    let ab: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(ab[..2], ["a", "b"]);
    let pilot: f64 = ab[2].parse().unwrap();
    assert!((pilot - 1.0).abs() < 1e-12, "pilot theta = {pilot}");
    // The coefficient lower bound keeps the projection above the degree-6
    // Bernstein polynomial of max(t, 1 - t), whose doubled center value is
    // 2 * sum_j max(j, 6 - j)/6 * C(6, j)/64 = 21/16.
    let theta: f64 = ab[3].parse().unwrap();
    assert!((theta - 21.0 / 16.0).abs() < 1e-9, "theta = {theta}");
}

#[test]
fn band_is_ordered_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "s.csv", 2, 0.5, 100, 11);
    let run = |name: &str| {
        let out = path(&dir, name);
        ok(&[
            "band",
            s(&data),
            "-k",
            "6",
            "--boot-reps",
            "40",
            "--level",
            "0.9",
            "--seed",
            "3",
            "--out",
            s(&out),
        ]);
        out
    };
    let a = run("a.json");
    let b = run("b.json");
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let (_, band) = band_from_json(&text).unwrap();
    assert!(band.lower_beta.iter().zip(&band.upper_beta).all(|(l, u)| l <= u));
    let (header, rows) = read_rows(&a.with_extension("csv"));
    assert_eq!(header[2..5], ["estimate", "lower", "upper"]);
    for row in &rows {
        let v: Vec<f64> = row.iter().map(|c| c.parse().unwrap()).collect();
        assert!(v[3] <= v[4] && v[5] <= v[6]);
    }
    let printed = ok(&["extremal", s(&a)]);
    assert!(!printed.stdout.is_empty());
}

#[test]
fn band_with_too_few_replicates_is_rejected() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "s.csv", 2, 0.5, 50, 1);
    let out = pickands(&["band", s(&data), "--boot-reps", "10", "--level", "0.95"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("need at least 40"));
}

#[test]
fn bench_writes_a_table_from_config() {
    let dir = TempDir::new().unwrap();
    let config = path(&dir, "bench.toml");
    std::fs::write(&config, "experiment = \"improvement\"\nalpha = [0.7, 1.0]\nn = 40\nreps = 3\nk = 5\n").unwrap();
    let table = path(&dir, "table.csv");
    ok(&["bench", "--config", s(&config), "--seed", "2", "--out", s(&table)]);
    let (header, rows) = read_rows(&table);
    assert_eq!(header, ["family", "alpha", "n", "estimator", "value", "mc_se"]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], "0.7");
    assert_eq!(rows[1][1], "1");
    assert!(rows.iter().all(|r| r[2] == "40"));

    std::fs::write(&config, "reps = 3\nbogus = 1\n").unwrap();
    assert_eq!(pickands(&["bench", "--config", s(&config)]).status.code(), Some(2));
}

#[test]
fn independent_pair_is_near_two() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "ind.csv", 2, 1.0, 1000, 21);
    let out = ok(&["pairwise", s(&data)]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
    let theta: f64 = row[3].parse().unwrap();
    assert!(theta <= 2.0 && theta > 1.85, "theta = {theta}");
}
