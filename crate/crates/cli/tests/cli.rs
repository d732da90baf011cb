use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const COEFFS: &str = "4096";

fn modsym(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modsym"))
        .current_dir(dir)
        .args(args)
        .args(["--coeffs", COEFFS, "--cache-dir", "cache", "--out-dir", "out"])
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = modsym(dir, args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    stdout(&o)
}

fn cache_file(dir: &Path, prefix: &str) -> std::path::PathBuf {
    fs::read_dir(dir.join("cache"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .expect("cache file exists")
}

fn fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/15.a1.txt").display().to_string()
}

#[test]
fn coefficient_cache_is_idempotent_and_recovers() {
    let tmp = TempDir::new().unwrap();
    let first = ok(tmp.path(), &["coeffs"]);
    assert!(first.contains("a(1..12) = [1, -1, -1, -1, 1, 1, 0, 3, 1, -1, -4, 1]"));
    let path = cache_file(tmp.path(), "coeffs-");
    let bytes = fs::read(&path).unwrap();
    let second = ok(tmp.path(), &["coeffs"]);
    assert_eq!(first, second);
    assert_eq!(fs::read(&path).unwrap(), bytes);

    let mut corrupted = bytes.clone();
    corrupted[..13].copy_from_slice(b"garbage-head ");
    fs::write(&path, &corrupted).unwrap();
    let o = modsym(tmp.path(), &["coeffs"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("regenerating"), "{}", stderr(&o));
    assert_eq!(fs::read(&path).unwrap(), bytes);
}

#[test]
fn table_cache_round_trip_and_tamper_gate() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), &["table"]);
    assert!(out.contains("24 entries"), "{out}");
    let path = cache_file(tmp.path(), "table-");
    let bytes = fs::read(&path).unwrap();
    assert_eq!(ok(tmp.path(), &["table"]), out);
    assert_eq!(fs::read(&path).unwrap(), bytes);

    // perturb one stored period in the sixth significant digit
    let text = String::from_utf8(bytes).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let fields: Vec<&str> = lines[5].split_whitespace().collect();
    let re: f64 = fields[1].parse().unwrap();
    lines[5] = format!("{} {:.16e} {}", fields[0], re + 1e-6, fields[2]);
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = modsym(tmp.path(), &["table"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("Manin relations"));
}

#[test]
fn symbols_in_both_conventions() {
    let tmp = TempDir::new().unwrap();
    let zero = ok(tmp.path(), &["symbol", "0", "1"]);
    assert!(zero.contains("m_minus = 0.000000000000000e0"), "{zero}");
    assert!(zero.contains("m_plus = 3.5015076058"), "{zero}");
    assert!(zero.contains("<r> = 0.000000000000000e0i"));

    let half = ok(tmp.path(), &["symbol", "1", "2"]);
    let three_halves = ok(tmp.path(), &["symbol", "3", "2"]);
    assert_eq!(half, three_halves);

    let reduced = ok(tmp.path(), &["symbol", "2", "15"]);
    let unreduced = ok(tmp.path(), &["symbol", "10", "75"]);
    assert!(unreduced.contains("reduced to 2/15"));
    assert!(unreduced.ends_with(&reduced));
    assert!(reduced.contains("d = 15"));

    let paper = ok(tmp.path(), &["symbol", "1", "7", "--paper-sign"]);
    assert!(paper.lines().nth(1).unwrap().starts_with("imag:"));
}

#[test]
fn scan_is_deterministic_across_shards() {
    let tmp = TempDir::new().unwrap();
    let args = ["scan", "--M", "300", "--interval", "0.1:0.35"];
    ok(tmp.path(), &[&args[..], &["--shards", "1"]].concat());
    let one = fs::read(tmp.path().join("out/aggregates.csv")).unwrap();
    ok(tmp.path(), &[&args[..], &["--shards", "5"]].concat());
    let five = fs::read(tmp.path().join("out/aggregates.csv")).unwrap();
    assert_eq!(one, five);
    let text = String::from_utf8(one).unwrap();
    assert!(text.starts_with("# modsym "));
    assert!(text.contains("fingerprint="));
    assert!(text.contains("c,d,phi,S1,S2,S3,S4,S5,S6,count_I,S1_I"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 301);
}

#[test]
fn fit_has_one_row_per_class() {
    let tmp = TempDir::new().unwrap();
    let fx = fixture();
    let out = ok(tmp.path(), &["fit", "--M", "800", "--fixture", &fx]);
    assert!(out.contains("C_f = -0.355"), "{out}");
    let csv = fs::read_to_string(tmp.path().join("out/fit.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "d,slope_real,shift_real,slope_paper,shift_paper,fixed_slope_shift");
    let ds: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(ds, ["1", "3", "5", "15"]);
    for r in &rows[1..] {
        let v: Vec<f64> = r.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[0], -v[2]);
        assert_eq!(v[1], -v[3]);
    }
}

#[test]
fn dist_contig_weyl_reports() {
    let tmp = TempDir::new().unwrap();
    let dist = ok(tmp.path(), &["dist", "--M", "300", "--d", "1", "--interval", "0.1:0.35"]);
    assert!(dist.contains("KS = "), "{dist}");
    let csv = fs::read_to_string(tmp.path().join("out/dist.csv")).unwrap();
    assert!(csv.contains("bin_lo,bin_hi,count,phi_cdf"));
    let fitted = ok(tmp.path(), &["dist", "--M", "300", "--d", "1", "--normalization", "fitted"]);
    assert!(fitted.contains("Fitted"));

    let contig = ok(tmp.path(), &["contig", "--M", "200"]);
    assert!(contig.contains("ratio = "), "{contig}");
    let csv = fs::read_to_string(tmp.path().join("out/contig.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 102);

    let weyl = ok(tmp.path(), &["weyl", "--M", "200", "--d", "1"]);
    assert!(weyl.contains("n =   0: |sum|/count = 1.000e0"), "{weyl}");
    let csv = fs::read_to_string(tmp.path().join("out/weyl.csv")).unwrap();
    assert!(csv.contains("n,re,im,ratio"));
}

#[test]
fn theory_json_has_every_constant() {
    let tmp = TempDir::new().unwrap();
    let fx = fixture();
    let out = ok(tmp.path(), &["theory", "--fixture", &fx]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let c = &v["constants"];
    for key in ["q", "vol", "l1", "l1p", "big_c_f", "c_f", "zeta_p2", "classes", "petersson"] {
        assert!(!c[key].is_null(), "missing {key}");
    }
    assert_eq!(c["classes"].as_array().unwrap().len(), 4);
    assert!((c["big_c_f"].as_f64().unwrap() + 0.35582).abs() < 1e-5);

    let partial = tmp.path().join("partial.txt");
    fs::write(&partial, "L1 0.9364885435\n").unwrap();
    let out = ok(tmp.path(), &["theory", "--fixture", partial.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["constants"]["classes"][0]["d_shift"].is_null());
}

#[test]
fn verify_passes_and_fails_as_expected() {
    let tmp = TempDir::new().unwrap();
    let fx = fixture();
    let out = ok(tmp.path(), &["verify", "--fixture", &fx]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["seed"], 20240917);
    assert_eq!(v["gates"].as_array().unwrap().len(), 8);

    let o = modsym(tmp.path(), &["verify", "--flip-sign", "5"]);
    assert_eq!(o.status.code(), Some(3));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let failed: Vec<&str> = v["gates"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|g| g["pass"] == false)
        .map(|g| g["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"manin_three_term") && failed.contains(&"birch_stevens"), "{failed:?}");

    let o = modsym(tmp.path(), &["verify", "--tol", "1e-16"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("infeasible"));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["pass"], false);
}

#[test]
fn validation_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    for args in [
        &["scan", "--q", "12"][..],
        &["scan", "--interval", "0.5:0.2"],
        &["scan", "--d", "4"],
        &["symbol", "1", "0"],
        &["scan", "--curve", "1,2,3"],
        &["scan", "--q", "21"],
    ] {
        let o = modsym(tmp.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "M = 10\nwhatever = 3\n").unwrap();
    let o = modsym(tmp.path(), &["scan", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# small run\nM = 50\nweyl = 0,1,2\n").unwrap();
    ok(tmp.path(), &["weyl", "--config", cfg.to_str().unwrap(), "--M", "60"]);
    let csv = fs::read_to_string(tmp.path().join("out/weyl.csv")).unwrap();
    assert!(csv.contains("M=60;"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn other_curve_runs_end_to_end() {
    let tmp = TempDir::new().unwrap();
    // 11.a1: y² + y = x³ − x² − 10x − 20
    let out = ok(tmp.path(), &["verify", "--curve", "0,-1,1,-10,-20"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["pass"], true, "{out}");
    let sym = ok(tmp.path(), &["symbol", "0", "1", "--curve", "0,-1,1,-10,-20"]);
    // L(E, 1) for 11.a1
    assert!(sym.contains("m_plus = 2.538418608559"), "{sym}");
}
