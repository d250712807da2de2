use std::path::{Path, PathBuf};
use std::process::Command;

use gevml::config::parse_config;
use gevml::selftest;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gevml"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("gevml-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn negative_h_is_rejected_with_its_line() {
    let src = "[egorov]\nn1 = 64\nh_list = [0.2, 0.1, -0.05, 0.025]\n";
    let e = parse_config(src).unwrap_err();
    assert_eq!(e.line, Some(3));
    assert_eq!(e.field, "egorov.h_list[2]");
}

#[test]
fn unknown_variable_is_named() {
    let e = parse_config("[wkb]\neta = 0.4\na0 = \"1 + cos(x3)\"\n").unwrap_err();
    assert_eq!(e.line, Some(3));
    assert_eq!(e.field, "wkb.a0");
    assert!(e.message.contains("`x3`"), "{e}");
}

#[test]
fn h_list_shape_is_checked() {
    for (h, want) in [("[0.2, 0.1, 0.05]", "at least 4"), ("[0.2, 0.1, 0.1, 0.05]", "strictly decreasing")] {
        let e = parse_config(&format!("[compose]\nh_list = {h}\n")).unwrap_err();
        assert!(e.message.contains(want), "{h}: {e}");
    }
}

#[test]
fn unknown_keys_and_bad_types_are_rejected() {
    let e = parse_config("[fbi]\nx0 = 0.3\nspread = 2\n").unwrap_err();
    assert_eq!(e.line, Some(3));
    assert!(e.message.contains("spread"));
    assert!(parse_config("[fbi]\nn_z = \"many\"\n").is_err());
    assert!(parse_config("[nonsense]\n").is_err());
}

#[test]
fn empty_config_uses_defaults() {
    let c = parse_config("").unwrap();
    assert!(c.compose.is_none() && c.fbi.is_none());
    let c = parse_config("[compose]\n").unwrap();
    assert_eq!(c.compose.unwrap().orders, vec![1, 2, 3]);
}

#[test]
fn bundled_configs_parse() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        parse_config(&std::fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert!(n >= 3);
}

#[test]
fn selftest_checks_all_pass() {
    let out = selftest::run();
    assert_eq!(out.len(), selftest::checks().len());
    let failed: Vec<_> = out.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn sweep_writes_versioned_report() {
    let out = scratch("sweep");
    let st = bin().args(["sweep", "--config"]).arg(configs().join("sweep_example.toml")).arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(st.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["passed"], true);
    let slope = v["data"]["fit"]["params"]["slope"].as_f64().unwrap();
    assert!((slope - 2.0).abs() < 0.05, "{slope}");
    let csv = std::fs::read_to_string(out.join("sweep_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn failed_assertion_exits_one() {
    let dir = scratch("fail");
    let cfg = dir.join("c.toml");
    std::fs::write(&cfg, "[sweep]\nh_list = [0.4, 0.2, 0.1, 0.05]\nresiduals = [0.4, 0.2, 0.1, 0.05]\nkind = \"algebraic\"\nmin_slope = 2.0\n").unwrap();
    let st = bin().args(["sweep", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap().status;
    assert_eq!(st.code(), Some(1));
}

#[test]
fn invalid_config_exits_two() {
    let dir = scratch("invalid");
    let cfg = dir.join("c.toml");
    std::fs::write(&cfg, "[compose]\nq = \"t1*y1\"\n").unwrap();
    let out = bin().args(["compose", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("y1") && err.contains("line 2"), "{err}");
    let out = bin().args(["sweep", "--out"]).arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_worker_count_exits_two() {
    let st = bin().env("GEVML_WORKERS", "0").args(["selftest", "--out"]).arg(scratch("workers")).output().unwrap().status;
    assert_eq!(st.code(), Some(2));
}

#[test]
fn bundled_egorov_config_passes() {
    let out = scratch("egorov");
    let o = bin().env("GEVML_WORKERS", "4").args(["egorov", "--config"]).arg(configs().join("egorov_free.toml")).arg("--out").arg(&out).output().unwrap();
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("egorov.json")).unwrap()).unwrap();
    let sweeps = v["data"]["sweeps"].as_array().unwrap();
    assert_eq!(sweeps.len(), 3);
    for (n, s) in sweeps.iter().enumerate() {
        let slope = s["report"]["fit"]["params"]["slope"].as_f64().unwrap();
        assert!(slope >= n as f64 + 1.0, "N={n}: {slope}");
    }
}

#[test]
fn fbi_writes_heatmaps_and_peaks() {
    let dir = scratch("fbi");
    let cfg = dir.join("c.toml");
    std::fs::write(&cfg, "[fbi]\nh_list = [0.05, 0.025]\nn_z = 32\nn_y = 512\n").unwrap();
    let st = bin().args(["fbi", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap().status;
    assert_eq!(st.code(), Some(0));
    let csv = std::fs::read_to_string(dir.join("fbi_heatmap_h0.05.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("re_z,im_z,abs_T,weighted_abs"));
    assert_eq!(lines.count(), 32 * 32);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("fbi.json")).unwrap()).unwrap();
    let top = &v["data"]["maps"][0]["peaks"][0];
    assert!((top["re_z"].as_f64().unwrap() - 0.3).abs() < 0.1 && (top["im_z"].as_f64().unwrap() - 0.7).abs() < 0.1, "{top}");
    assert!(!v["data"]["wavefront"]["cells"].as_array().unwrap().is_empty());
}
