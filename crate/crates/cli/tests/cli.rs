use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;

const BELTRAMI: &str = r#"
[grid]
n = 16

[sim]
dt = 1e-3
horizon = 1e-2

[basis]
source = "none"

[initial]
kind = "beltrami"

[output]
dir = "out"
"#;

fn seuler(args: &[&std::ffi::OsStr], workers: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_seuler"));
    c.args(args).env("RUST_LOG", "error").env_remove("SEULER_WORKERS");
    if let Some(w) = workers {
        c.env("SEULER_WORKERS", w);
    }
    c.output().expect("binary runs")
}

fn run_manifest(dir: &Path, name: &str, text: &str, workers: Option<&str>) -> Output {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    seuler(&["run".as_ref(), p.as_os_str()], workers)
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn beltrami_smoke_writes_ten_rows_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_manifest(dir.path(), "m.toml", BELTRAMI, None);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let out = dir.path().join("out");
    let csv = std::fs::read_to_string(out.join("member_0000/diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11, "header plus ten rows");
    assert_eq!(std::fs::read_to_string(out.join("manifest.toml")).unwrap(), BELTRAMI);
    let prov = std::fs::read_to_string(out.join("provenance.toml")).unwrap();
    assert!(prov.contains("seuler_version") && prov.contains("member_seeds"));
    let stop = std::fs::read_to_string(out.join("member_0000/stop.toml")).unwrap();
    assert!(stop.contains("status = \"completed\"") && stop.contains("steps = 10"));
    // No staging directory survives.
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().contains("partial"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn tiny_cutoff_exits_two_with_stop_record() {
    let dir = tempfile::tempdir().unwrap();
    let m = BELTRAMI.replace("horizon = 1e-2", "horizon = 1e-2\ncutoff = 1e-6");
    let o = run_manifest(dir.path(), "m.toml", &m, None);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    let stop = std::fs::read_to_string(dir.path().join("out/member_0000/stop.toml")).unwrap();
    assert!(stop.contains("status = \"stopping_rule\""), "{stop}");
}

#[test]
fn malformed_manifest_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_manifest(dir.path(), "m.toml", &BELTRAMI.replace("horizon", "horizn"), None);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("horizn"), "{}", text(&o));
    assert!(!dir.path().join("out").exists());

    let o = run_manifest(dir.path(), "m2.toml", &BELTRAMI.replace("n = 16", "n = 17"), None);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("[grid]"), "{}", text(&o));

    let o = run_manifest(dir.path(), "m3.toml", &BELTRAMI.replace("horizon = 1e-2", "horizon = 1.5e-3"), None);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("whole number"), "{}", text(&o));
}

#[test]
fn missing_files_and_existing_output_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let m = BELTRAMI.replace("source = \"none\"", "source = \"imported\"\npath = \"nowhere\"");
    let o = run_manifest(dir.path(), "m.toml", &m, None);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("[basis] path"), "{}", text(&o));

    std::fs::create_dir(dir.path().join("out")).unwrap();
    let o = run_manifest(dir.path(), "m2.toml", BELTRAMI, None);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("already exists"), "{}", text(&o));
}

#[test]
fn ensemble_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let m = r#"
[grid]
n = 16
[sim]
dt = 2e-3
horizon = 2e-2
seed = 11
[basis]
source = "generated"
kmax = 1
[initial]
kind = "random"
bandwidth = 3
seed = 2
[ensemble]
members = 3
workers = 1
[output]
dir = "a"
"#;
    assert_eq!(run_manifest(dir.path(), "a.toml", m, None).status.code(), Some(0));
    let o = run_manifest(dir.path(), "b.toml", &m.replace("dir = \"a\"", "dir = \"b\""), Some("3"));
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let prov = std::fs::read_to_string(dir.path().join("b/provenance.toml")).unwrap();
    assert!(prov.contains("workers = 3"));
    let read = |d: &str, m: usize, f: &str| std::fs::read(dir.path().join(d).join(format!("member_{m:04}")).join(f)).unwrap();
    for member in 0..3 {
        assert_eq!(read("a", member, "final.seu"), read("b", member, "final.seu"));
        assert_eq!(read("a", member, "diagnostics.csv"), read("b", member, "diagnostics.csv"));
    }
    assert_ne!(read("a", 0, "final.seu"), read("a", 1, "final.seu"), "members differ");

    let o = run_manifest(dir.path(), "c.toml", &m.replace("dir = \"a\"", "dir = \"c\""), Some("zero"));
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("SEULER_WORKERS"));
}

#[test]
fn imported_basis_and_snapshot_initial_data() {
    let dir = tempfile::tempdir().unwrap();
    let m = BELTRAMI
        .replace("source = \"none\"", &format!("source = \"imported\"\npath = {:?}", data("truth")))
        .replace("kind = \"beltrami\"", "kind = \"random\"\nbandwidth = 2\nseed = 1")
        .replace("[output]", "[diagnostics]\nsnapshot_every = 5\n\n[output]");
    let o = run_manifest(dir.path(), "m.toml", &m, None);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let snaps = dir.path().join("out/member_0000/snapshots");
    assert_eq!(std::fs::read_dir(&snaps).unwrap().count(), 3, "steps 0, 5 and 10");

    let m2 = BELTRAMI
        .replace("kind = \"beltrami\"", "kind = \"snapshot\"\npath = \"out/member_0000/final.seu\"")
        .replace("dir = \"out\"", "dir = \"again\"");
    let o = run_manifest(dir.path(), "m2.toml", &m2, None);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
}

#[test]
fn verify_rejects_unknown_suites() {
    let o = seuler(&["verify".as_ref(), "everything".as_ref()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("unknown suite"));
}

#[test]
fn verify_noise_passes() {
    let o = seuler(&["verify".as_ref(), "noise".as_ref()], None);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).contains("PASS noise"));
}

#[test]
fn verify_operators_passes_and_corrupted_s4_fails() {
    let o = seuler(&["verify".as_ref(), "operators".as_ref()], None);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let o = seuler(
        &["verify".as_ref(), "operators".as_ref(), "--trials".as_ref(), "4".as_ref(), "--corrupt-s4".as_ref(), "1e-3".as_ref()],
        None,
    );
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("FAIL operators commutator"), "{}", text(&o));
}

#[test]
fn calibrate_bundled_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("basis");
    let o = seuler(
        &[
            "calibrate".as_ref(),
            data("drifters.csv").as_os_str(),
            data("calibration.toml").as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
            "--truth".as_ref(),
            data("truth").as_os_str(),
        ],
        None,
    );
    let t = text(&o);
    assert_eq!(o.status.code(), Some(0), "{t}");
    assert!(t.contains("sum C_k(0)") && t.contains("converged = true"), "{t}");
    let sim: f64 = t
        .lines()
        .find_map(|l| l.strip_prefix("similarity with truth = "))
        .expect("similarity line")
        .parse()
        .unwrap();
    assert!(sim >= 0.95, "{sim}");
    assert!(out.join("basis.toml").is_file());

    // The exported basis drives a run.
    let m = BELTRAMI.replace("source = \"none\"", &format!("source = \"imported\"\npath = {out:?}"));
    assert_eq!(run_manifest(dir.path(), "m.toml", &m, None).status.code(), Some(0));
}

#[test]
fn calibrate_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let cfg = data("calibration.toml");
    let o = seuler(&["calibrate".as_ref(), empty.as_os_str(), cfg.as_os_str(), "--out".as_ref(), dir.path().join("b").as_os_str()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("empty"), "{}", text(&o));

    // Eight drifters parked in one corner leave most cells unvisited.
    let mut csv = String::from("id,t,x,y,z\n");
    for d in 0..8 {
        for j in 0..20 {
            csv.push_str(&format!("p{d},{},{},0.1,0.1\n", j as f64 * 0.01, 0.1 + 0.001 * (d + j) as f64));
        }
    }
    let sparse = dir.path().join("sparse.csv");
    std::fs::write(&sparse, csv).unwrap();
    let o = seuler(&["calibrate".as_ref(), sparse.as_os_str(), cfg.as_os_str(), "--out".as_ref(), dir.path().join("b").as_os_str()], None);
    assert_eq!(o.status.code(), Some(1));
    let t = text(&o);
    assert!(t.contains("undersampled") && t.contains("(1,1,1):0"), "{t}");
    assert!(!dir.path().join("b").exists());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn any_unknown_sim_key_is_named(key in "[a-z]{3,10}_x") {
        let dir = tempfile::tempdir().unwrap();
        let m = BELTRAMI.replace("[sim]", &format!("[sim]\n{key} = 1"));
        let o = run_manifest(dir.path(), "m.toml", &m, None);
        prop_assert_eq!(o.status.code(), Some(1));
        prop_assert!(text(&o).contains(&key));
    }
}
