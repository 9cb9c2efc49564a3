use std::path::Path;
use std::process::{Command, Output};

fn dmabeam(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmabeam"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn records(path: &Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    (header, r.records().map(|x| x.unwrap()).collect())
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(&p, "users = 20\nsweep.p_in_dbm = [0.0, 10.0, 20.0, 30.0]\n").unwrap();
    p
}

#[test]
fn pattern_writes_one_file_per_codeword() {
    let dir = tempfile::tempdir().unwrap();
    let out = dmabeam(dir.path(), &["pattern", "--layer", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for c in 1..=2 {
        let (header, rows) = records(&dir.path().join(format!("pattern_L2_C{c}.csv")));
        assert_eq!(&header, vec!["phi_deg", "gain_dbi"]);
        assert_eq!(rows.len(), 361);
        assert!(dir.path().join(format!("pattern_L2_C{c}.json")).exists());
    }
    assert!(!dir.path().join("pattern_L2_C3.csv").exists());
    assert!(dir.path().join("manifest_pattern.json").exists());
}

#[test]
fn single_codeword_and_bad_codeword() {
    let dir = tempfile::tempdir().unwrap();
    assert!(dmabeam(dir.path(), &["pattern", "--layer", "1"]).status.success());
    assert!(dir.path().join("pattern_L1_C1.csv").exists());
    let bad = dmabeam(dir.path(), &["pattern", "--layer", "2", "--codeword", "3"]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = dmabeam(dir.path(), &["pattern", "--layer", "9"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn broken_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "array.L = 6\n").unwrap();
    let out = dmabeam(dir.path(), &["--config", cfg.to_str().unwrap(), "steering"]);
    assert_eq!(out.status.code(), Some(2));
    let missing = dmabeam(dir.path(), &["--config", "/nonexistent/x.toml", "steering"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn steering_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    assert!(dmabeam(dir.path(), &["steering"]).status.success());
    let (header, rows) = records(&dir.path().join("steering.csv"));
    assert_eq!(&header, vec!["variant", "codeword", "desired_deg", "achieved_deg", "error_deg"]);
    for v in ["EM:NR", "EM:BF", "LC:NR", "PS"] {
        let n = rows.iter().filter(|r| &r[0] == v).count();
        assert_eq!(n, 8, "{v}");
    }
    for r in &rows {
        let d: f64 = r[2].parse().unwrap();
        let a: f64 = r[3].parse().unwrap();
        let e: f64 = r[4].parse().unwrap();
        assert!((e - (a - d)).abs() < 1e-9);
    }
}

#[test]
fn coverage_curves_span_full_range() {
    let dir = tempfile::tempdir().unwrap();
    assert!(dmabeam(dir.path(), &["coverage", "--layer", "4"]).status.success());
    let (header, rows) = records(&dir.path().join("coverage.csv"));
    assert_eq!(&header, vec!["variant", "layer", "gain_dbi", "percentile"]);
    let em: Vec<_> = rows.iter().filter(|r| &r[0] == "EM:NR").collect();
    assert!(!em.is_empty());
    assert!(em.iter().all(|r| &r[1] == "4"));
    let pct: Vec<f64> = em.iter().map(|r| r[3].parse().unwrap()).collect();
    let gain: Vec<f64> = em.iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(pct[0], 100.0);
    assert_eq!(*pct.last().unwrap(), 0.0);
    assert!(pct.windows(2).all(|w| w[1] <= w[0]));
    assert!(gain.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn sweep_is_monotone_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = dmabeam(out, &["--config", cfg.to_str().unwrap(), "--threads", threads, "sweep"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(bytes(&a, "sweep.csv"), bytes(&b, "sweep.csv"));
    assert_eq!(bytes(&a, "manifest_sweep.json"), bytes(&b, "manifest_sweep.json"));

    let (header, rows) = records(&a.join("sweep.csv"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (arch, mapping, rotation, se) = (col("arch"), col("mapping"), col("rotation"), col("SE_bpshz"));
    let mut groups = std::collections::BTreeMap::<String, Vec<f64>>::new();
    for r in &rows {
        let key = format!("{}/{}/{}", &r[arch], &r[mapping], &r[rotation]);
        groups.entry(key).or_default().push(r[se].parse().unwrap());
    }
    assert_eq!(groups.len(), 5);
    for (k, v) in &groups {
        assert_eq!(v.len(), 4, "{k}");
        assert!(v.windows(2).all(|w| w[1] >= w[0]), "{k}: {v:?}");
    }
}

#[test]
fn seed_flag_changes_channel_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |seed: &str| {
        let out = dir.path().join(seed);
        assert!(dmabeam(&out, &["--config", cfg.to_str().unwrap(), "--seed", seed, "sweep"]).status.success());
        std::fs::read(out.join("sweep.csv")).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn codebook_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    assert!(dmabeam(dir.path(), &["export-codebook"]).status.success());
    let (header, rows) = records(&dir.path().join("codebook.csv"));
    assert_eq!(&header, vec!["layer", "codeword", "element_index", "w_re", "w_im", "q_re", "q_im", "zeta_hat"]);
    assert_eq!(rows.len(), (1 + 2 + 4 + 8) * 40);
}

#[test]
fn zero_threads_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dmabeam(dir.path(), &["--threads", "0", "steering"]);
    assert_eq!(out.status.code(), Some(2));
}
