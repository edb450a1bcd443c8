use std::path::Path;
use std::process::{Command, Output};

use hopf_cli::commands::{AdiabaticReport, ChernReport, NeighborhoodReport, PreimageReport, ScalingReport, TextureReport};
use hopf_core::adiabatic::FidelityStats;
use hopf_core::bzgrid::{sample_state_field, FieldFile, MeshSpec, Provenance, StateField};
use hopf_core::invariants::{hopf_index, IndexReport};
use hopf_core::io::from_json_slice;
use hopf_core::model::HopfParams;
use hopf_core::preimage::{Coords, LinkMatrix};
use serde::de::DeserializeOwned;

fn hopf(args: &[&str], env_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hopf"));
    cmd.args(args).env_remove("HOPF_OUT_DIR");
    if let Some(d) = env_dir {
        cmd.env("HOPF_OUT_DIR", d);
    }
    cmd.output().expect("spawn hopf")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = hopf(args, None);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn read<T: DeserializeOwned>(path: &Path) -> T {
    from_json_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn error_of(out: &Output) -> (String, String) {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    (v["error"].as_str().unwrap().to_string(), v["message"].as_str().unwrap().to_string())
}

/// Drops the `generated_at` value, the only field allowed to differ between runs.
fn strip_stamp(bytes: &[u8]) -> String {
    let s = String::from_utf8(bytes.to_vec()).unwrap();
    match s.find("\"generated_at\":\"") {
        Some(i) => {
            let start = i + "\"generated_at\":\"".len();
            let end = start + s[start..].find('"').unwrap();
            format!("{}{}", &s[..start], &s[end..])
        }
        None => s,
    }
}

#[test]
fn usage_errors_exit_two_and_name_the_flag() {
    let out = hopf(&["index", "--h", "2", "--eps", "0.3"], None);
    assert_eq!(out.status.code(), Some(2));
    let (kind, message) = error_of(&out);
    assert_eq!(kind, "UsageError");
    assert!(message.contains("--eps"));

    let out = hopf(&["index", "--h", "2", "--bogus"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));

    assert_eq!(hopf(&["--help"], None).status.code(), Some(0));
}

#[test]
fn engine_errors_exit_one_with_json() {
    let out = hopf(&["index", "--h", "1", "--n", "10"], None);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out).0, "GaplessPoint");
    assert!(out.stdout.is_empty());
}

#[test]
fn io_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = hopf(&["index", "--field", dir.path().join("missing.json").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_of(&out).0, "Io");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let out = hopf(&["index", "--field", bad.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_of(&out).0, "Parse");
}

#[test]
fn field_round_trips_bit_exact_and_feeds_index() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.json");
    ok(&["field", "--h", "2", "--n", "8", "--out", path.to_str().unwrap()]);
    let file: FieldFile = read(&path);
    assert!(file.generated_at.is_some());
    let loaded = StateField::from_file(&file).unwrap();
    let direct = sample_state_field(&HopfParams::new(2.0).unwrap(), MeshSpec::new(8).unwrap()).unwrap();
    assert_eq!(loaded.data(), direct.data());

    let from_file: IndexReport = from_json_slice(&ok(&["index", "--field", path.to_str().unwrap()])).unwrap();
    let direct_chi = hopf_index(&direct).unwrap().chi;
    assert_eq!(from_file.chi.to_bits(), direct_chi.to_bits());
    assert_eq!(from_file.n, 8);
}

#[test]
fn index_and_chern_reports() {
    let r: IndexReport = from_json_slice(&ok(&["index", "--h", "2", "--n", "10"])).unwrap();
    assert!((0.95..=1.05).contains(&r.chi));
    assert_eq!(r.nearest_integer, 1);
    assert_eq!(r.chern_numbers.x.len(), 10);
    let c: ChernReport = from_json_slice(&ok(&["chern", "--h", "0", "--n", "10"])).unwrap();
    assert!(c.all_zero);
    assert_eq!(c.chern_numbers.all().count(), 30);
}

#[test]
fn scaling_example() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scal.json");
    ok(&["scaling", "--h", "0", "--h", "2", "--n", "10", "--n", "20", "--out", path.to_str().unwrap()]);
    let r: ScalingReport = read(&path);
    assert_eq!(r.tables.len(), 2);
    for t in &r.tables {
        assert_eq!(t.rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![10, 20]);
        assert!(t.rows[1].deviation < t.rows[0].deviation);
    }
    assert_eq!((r.tables[0].chi_inf, r.tables[1].chi_inf), (-2, 1));
}

#[test]
fn link_example() {
    let m: LinkMatrix = from_json_slice(&ok(&["link", "--h", "2.9", "--spins", "1,0,0;0,1,0;0,0,-1"])).unwrap();
    assert_eq!(m.targets.len(), 3);
    let off = m.off_diagonal();
    assert_eq!(off.len(), 3);
    assert!(off.iter().all(|&lk| lk.abs() == 1));
}

#[test]
fn campaign_example_writes_field_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(&["campaign", "--h", "2", "--n", "10", "--photons", "93000", "--seed", "7", "--out", out.to_str().unwrap()]);
    let field: FieldFile = read(&out.join("campaign_field.json"));
    assert_eq!(field.provenance, Provenance::SimulatedExperiment);
    let field = StateField::from_file(&field).unwrap();
    assert_eq!(field.len(), 1000);
    let stats: FidelityStats = read(&out.join("campaign_stats.json"));
    assert_eq!(stats.per_site.len(), 1000);
    assert!(stats.mean_fidelity > 0.98 && stats.median_fidelity > stats.mean_fidelity);
    assert!(stats.ci95[0] <= stats.median_fidelity && stats.median_fidelity <= stats.ci95[1]);
}

#[test]
fn reruns_are_identical_apart_from_the_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let d = dir.path().join(run);
        let s = d.to_str().unwrap();
        assert!(hopf(&["campaign", "--h", "2", "--n", "6", "--seed", "3"], Some(&d)).status.success());
        assert!(hopf(&["link", "--h", "2.9"], Some(&d)).status.success());
        assert!(hopf(&["texture", "--h", "0.5", "--n", "5", "--format", "csv", "--out", &format!("{s}/t.csv")], None)
            .status
            .success());
    }
    for name in ["campaign_field.json", "campaign_stats.json", "link.json", "t.csv"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(strip_stamp(&a), strip_stamp(&b), "{name}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    for t in ["1", "3"] {
        let d = dir.path().join(t);
        let out = hopf(&["campaign", "--h", "2", "--n", "5", "--threads", t], Some(&d));
        assert!(out.status.success());
    }
    for name in ["campaign_field.json", "campaign_stats.json"] {
        let a = std::fs::read(dir.path().join("1").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("3").join(name)).unwrap();
        assert_eq!(strip_stamp(&a), strip_stamp(&b), "{name}");
    }
}

#[test]
fn texture_json_and_csv() {
    let r: TextureReport = from_json_slice(&ok(&["texture", "--h", "2", "--n", "4"])).unwrap();
    assert_eq!(r.sites.len(), 64);
    assert!(r.sites.iter().all(|s| (s.s.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12));
    let csv = String::from_utf8(ok(&["texture", "--h", "2", "--n", "4", "--format", "csv"])).unwrap();
    assert_eq!(csv.lines().count(), 65);
    assert!(csv.starts_with("jx,jy,jz,sx,sy,sz\n"));
}

#[test]
fn preimage_loops_reload() {
    let r: PreimageReport = from_json_slice(&ok(&["preimage", "--h", "2.9", "--spin", "1,0,0", "--res", "64"])).unwrap();
    assert_eq!(r.loops.len(), 1);
    let curve = r.loops[0].polyline();
    assert_eq!(curve.coords, Coords::T3);
    assert!(curve.closed && curve.len() >= 3);
    assert_eq!(r.loops[0].target, [1.0, 0.0, 0.0]);

    let r: PreimageReport = from_json_slice(&ok(&["preimage", "--h", "3.1", "--spin", "0,0,-1"])).unwrap();
    assert!(r.loops.is_empty());
}

#[test]
fn neighborhood_sets_are_nested() {
    let sets: Vec<NeighborhoodReport> = ["0.3", "0.35"]
        .iter()
        .map(|e| from_json_slice(&ok(&["neighborhood", "--h", "2", "--spin", "1,1,0", "--eps", e])).unwrap())
        .collect();
    assert!(!sets[0].sites.is_empty());
    assert!(sets[0].sites.iter().all(|s| s.distance <= 0.3 && sets[1].sites.iter().any(|t| t.site == s.site)));
}

#[test]
fn adiabatic_single_site() {
    let r: AdiabaticReport = from_json_slice(&ok(&["adiabatic", "--h", "2", "--photons", "0"])).unwrap();
    assert_eq!(r.samples.len(), 12_001);
    assert!(r.fidelity > 0.9999);
    assert!(r.tomography.is_none());
    let r: AdiabaticReport = from_json_slice(&ok(&["adiabatic", "--h", "2", "--readout", "ideal", "--seed", "4"])).unwrap();
    let t = r.tomography.unwrap();
    assert_eq!(t.photons, 93_000);
    assert!(t.fidelity > 0.99);
}

#[test]
fn env_directory_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "h = 4.0\nn = 6\n").unwrap();
    let out = hopf(&["index", "--config", cfg.to_str().unwrap()], Some(dir.path()));
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let r: IndexReport = read(&dir.path().join("index.json"));
    assert_eq!((r.h, r.n, r.nearest_integer), (4.0, 6, 0));
}
