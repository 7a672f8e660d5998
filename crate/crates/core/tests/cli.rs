use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pacbound::cli::{parse_csv, parse_text, run, Cell, ExperimentConfig, Format};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pacbound"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn invoke(config: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("--config")
        .arg(config)
        .args(extra)
        .output()
        .unwrap()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

const COVERAGE: &str = r#"
command = "coverage"
seed = 11
n = 30
trials = 200

[environment]
preset = "asymmetric3"

[coverage]
kinds = ["chernoff", "pac_bayes_grid", "excess_variance"]
"#;

#[test]
fn bound_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = invoke(&configs_dir().join("bound_hoeffding.toml"), &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let (headers, rows) = parse_text(&stdout);
    assert_eq!(headers[4], "total");
    let total: f64 = rows[0][4].parse().unwrap();
    assert!((total - 0.322387).abs() < 1e-6);
    assert!((total - (0.2 + (20f64.ln() / 200.0).sqrt())).abs() < 1e-15);

    let csv_path = dir.path().join("bound.csv");
    let out = invoke(
        &configs_dir().join("bound_hoeffding.toml"),
        &["--out", csv_path.to_str().unwrap()],
    );
    assert!(out.status.success());
    let (_, rows) = parse_csv(&std::fs::read_to_string(&csv_path).unwrap()).unwrap();
    assert_eq!(rows[0][4].parse::<f64>().unwrap(), total);
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn zero_trials_coverage_exits_1_naming_trials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &COVERAGE.replace("trials = 200", "trials = 0"));
    let out = invoke(&cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trials"));
}

#[test]
fn unknown_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{COVERAGE}\nbogus = 1\n"));
    let out = invoke(&cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn missing_seed_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &COVERAGE.replace("seed = 11", ""));
    let out = invoke(&cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    // the flag supplies it
    let out = invoke(&cfg, &["--seed", "3"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn infinite_kl_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "command = \"bound\"\nn = 100\n[bound]\nkind = \"pac_hoeffding\"\nempirical = 0.2\nkl = inf\n",
    );
    let out = invoke(&cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fixpoint_single_hypothesis_has_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "command = \"fixpoint\"\nseed = 1\nn = 20\ntrials = 100\n[environment]\npreset = \"bernoulli_single\"\n",
    );
    let out = invoke(&cfg, &["--format", "csv"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (headers, rows) = parse_csv(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    let tv = headers.iter().position(|h| h == "tv_distance").unwrap();
    assert_eq!(rows[0][tv].parse::<f64>().unwrap(), 0.0);
}

fn assert_round_trip(cells: &[Vec<Cell>], parsed: &[Vec<String>]) {
    assert_eq!(cells.len(), parsed.len());
    for (row, text) in cells.iter().zip(parsed) {
        for (cell, s) in row.iter().zip(text) {
            match cell {
                Cell::Int(i) => assert_eq!(s.parse::<u64>().unwrap(), *i),
                Cell::Real(x) => assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits()),
                Cell::Text(t) => assert_eq!(s, t),
            }
        }
    }
}

#[test]
fn outputs_round_trip_and_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COVERAGE);
    let table = run(&ExperimentConfig::from_path(&cfg).unwrap()).unwrap();
    for (format, name) in [(Format::Csv, "csv"), (Format::Text, "text")] {
        let path = dir.path().join(format!("out.{name}"));
        let args = [
            "--out",
            path.to_str().unwrap(),
            "--format",
            name,
            "--threads",
            "2",
        ];
        assert!(invoke(&cfg, &args).status.success());
        let first = std::fs::read(&path).unwrap();
        assert!(invoke(&cfg, &args).status.success());
        assert_eq!(first, std::fs::read(&path).unwrap());

        let text = String::from_utf8(first).unwrap();
        let (headers, rows) = match format {
            Format::Csv => parse_csv(&text).unwrap(),
            Format::Text => parse_text(&text),
        };
        assert_eq!(headers, table.headers);
        assert_round_trip(&table.rows, &rows);
    }
}

#[test]
fn sweep_runs_from_shipped_config() {
    let out = invoke(
        &configs_dir().join("sweep_lowvar.toml"),
        &["--format", "text"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (headers, rows) = parse_text(std::str::from_utf8(&out.stdout).unwrap());
    assert_eq!(
        headers,
        ["kind", "n", "mean_total", "mean_left", "mean_gap"]
    );
    assert_eq!(rows.len(), 12);
    let total = |kind: &str, n: &str| -> f64 {
        rows.iter().find(|r| r[0] == kind && r[1] == n).unwrap()[2]
            .parse()
            .unwrap()
    };
    assert!(total("variance", "10000") < total("hoeffding", "10000"));
}
