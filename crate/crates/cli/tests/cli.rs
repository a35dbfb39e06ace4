use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn critfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_critfield"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "run.log")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn check_model_passes_on_the_fixture() {
    let cfg = fixture("gauss1d.toml");
    let o = critfield(&["check-model", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let err = stderr(&o);
    for a in 1..=6 {
        assert!(err.contains(&format!("(A{a}) pass")), "{err}");
    }
    assert!(o.stdout.is_empty());
}

#[test]
fn degenerate_model_fails_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("flat.toml");
    fs::write(
        &cfg,
        "[model]\ndim = 2\nfamily = \"gaussian_anisotropic\"\ntotal_mass = 1.0\n\n[model.params]\naxis_scales = [1.0, 0.0]\n",
    )
    .unwrap();
    let o = critfield(&["check-model", "--config", cfg.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], false);
    assert_eq!(v["assumptions"]["a1"]["passed"], false);
}

#[test]
fn euler_audit_on_the_plane() {
    let cfg = fixture("gauss2d.toml");
    let out = tempfile::tempdir().unwrap();
    let o = critfield(&[
        "euler-audit",
        "--config",
        cfg.to_str().unwrap(),
        "--seeds",
        "20",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("20/20"), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.path().join("euler_audit.json")).unwrap()).unwrap();
    assert_eq!(v["chi_one"], 20);
    assert_eq!(v["records"].as_array().unwrap().len(), 20);
}

#[test]
fn usage_errors_exit_one() {
    let o = critfield(&["check-model", "--config", "/nonexistent/model.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cannot read config"));

    let o = critfield(&["check-model"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--config"));

    let o = critfield(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));

    let o = critfield(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn same_seed_gives_identical_files() {
    let cfg = fixture("gauss1d.toml");
    let cfg = cfg.to_str().unwrap();
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for dir in &runs {
        let base = dir.path();
        let cases: [(&str, Vec<&str>); 4] = [
            ("sim", vec!["simulate", "--grid", "33"]),
            ("census", vec!["census", "--t", "15", "--levels", "-inf,0.5"]),
            ("kr", vec!["kacrice", "--t", "20", "--n-mc", "4000", "--second-v", "0", "--box", "0.5", "--n-mc-lag", "400", "--n-quad", "8"]),
            ("chaos", vec!["chaos", "--n-mc", "20000", "--q-max", "3"]),
        ];
        for (sub, args) in cases {
            let out = base.join(sub);
            let mut argv = args.clone();
            argv.extend(["--config", cfg, "--seed", "42", "--out", out.to_str().unwrap()]);
            let o = critfield(&argv);
            assert_eq!(o.status.code(), Some(0), "{sub}: {}", stderr(&o));
            assert!(out.join("run.log").exists());
        }
    }
    for sub in ["sim", "census", "kr", "chaos"] {
        let a = read_dir_sorted(&runs[0].path().join(sub));
        let b = read_dir_sorted(&runs[1].path().join(sub));
        assert!(!a.is_empty());
        assert_eq!(a, b, "{sub}");
    }
    let census: serde_json::Value =
        serde_json::from_slice(&fs::read(runs[0].path().join("census/census.json")).unwrap()).unwrap();
    assert_eq!(census["chi"], 1);
    assert_eq!(census["seed"], 42);
}

#[test]
fn json_summary_is_the_only_stdout() {
    let cfg = fixture("gauss1d.toml");
    let out = tempfile::tempdir().unwrap();
    let o = critfield(&[
        "census",
        "--config",
        cfg.to_str().unwrap(),
        "--t",
        "8",
        "--json",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["chi"], 1);
    assert_eq!(v["T"], 8.0);
}

#[test]
fn experiment_output_does_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(
        &cfg,
        "master_seed = 9\nreplications = 6\natoms = 1000\nt_ladder = [4.0, 8.0]\nlevels = [\"-inf\", 0.0]\nalphas = [[1.0, -1.0]]\n\n[model]\ndim = 1\nfamily = \"gaussian_isotropic\"\ntotal_mass = 1.0\n",
    )
    .unwrap();
    let outs: Vec<PathBuf> = ["1", "4"]
        .iter()
        .map(|n| {
            let out = dir.path().join(format!("threads{n}"));
            let o = critfield(&[
                "clt",
                "--config",
                cfg.to_str().unwrap(),
                "--threads",
                n,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
            out
        })
        .collect();
    let a = read_dir_sorted(&outs[0]);
    assert_eq!(a.len(), 5);
    assert_eq!(a, read_dir_sorted(&outs[1]));
}
