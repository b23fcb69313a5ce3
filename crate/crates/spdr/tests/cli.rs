use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spdr::checkpoint::Checkpoint;
use spdr::config::ExperimentConfig;

fn run(dir: &Path, config: &str, args: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join("config.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_spdr"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    (o, out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const OU: &str = r#"
model = "ou"
[response]
window = 20
lags = 5
windows = 200
batches = 10
[run]
burn_in = 100
steps = 500
stride = 5
ensemble = 2
seed = 4
"#;

#[test]
fn unknown_keys_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run(dir.path(), "model = \"ou\"\n[run]\nsteps = 10\nbogus = 1\n", &["simulate"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn forcing_outside_noise_range_points_to_holder() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
model = "ns"
[grid]
k = 16
[noise]
k_max = 2.0
[forcing]
dir = [[5.0, 0.0, 1.0, 0.0]]
"#;
    let (o, _) = run(dir.path(), cfg, &["respond"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("holder"));
}

#[test]
fn holder_family_refuses_linear_response() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{OU}\n[forcing]\nmode = \"holder\"\nbeta_f = 0.5\n");
    let (o, _) = run(dir.path(), &cfg, &["respond"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("holder"));
}

#[test]
fn failed_r_condition_exits_with_precondition_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
model = "qg"
[grid]
k = 16
[physics]
nu = 0.05
r = 0.5
[audit]
k0 = 0.1
ensemble = 0
"#;
    let (o, out) = run(dir.path(), cfg, &["audit"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    // The table is still written so the failure can be inspected.
    let text = std::fs::read_to_string(out.join("audit.txt")).unwrap();
    assert!(text.contains("r_threshold"));
    assert!(out.join("manifest.toml").exists());
}

#[test]
fn outputs_repeat_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (oa, out_a) = run(a.path(), OU, &["respond"]);
    let (ob, out_b) = run(b.path(), OU, &["respond", "--threads", "2"]);
    assert!(oa.status.success() && ob.status.success(), "{}", stderr(&oa));
    for f in ["respond.csv", "lags.csv"] {
        assert_eq!(std::fs::read(out_a.join(f)).unwrap(), std::fs::read(out_b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn csv_rows_carry_provenance_and_crlf() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(dir.path(), OU, &["respond", "--seed", "77"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("respond.csv")).unwrap();
    assert!(text.starts_with("a,seed,method,"));
    assert!(text.lines().count() > 1 && text.split("\r\n").count() == text.lines().count() + 1);
    for line in text.lines().skip(1) {
        assert!(line.split(',').nth(1) == Some("77"), "{line}");
    }
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("subcommand = \"respond\""));
    assert!(manifest.contains("seed = 77"));
}

#[test]
fn manifest_echoes_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(dir.path(), OU, &["simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: toml::Value = toml::from_str(&std::fs::read_to_string(out.join("manifest.toml")).unwrap()).unwrap();
    let config = manifest.get("config").expect("config table");
    let echoed = ExperimentConfig::from_toml(&toml::to_string(config).unwrap()).unwrap();
    assert_eq!(echoed, ExperimentConfig::from_toml(OU).unwrap());
}

#[test]
fn resume_continues_bit_for_bit() {
    let full = tempfile::tempdir().unwrap();
    let (o, full_out) = run(full.path(), OU, &["simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let part = tempfile::tempdir().unwrap();
    let (o, part_out) = run(part.path(), &OU.replace("steps = 500", "steps = 200"), &["simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ck = part_out.join("final_1.spdr");
    assert_eq!(Checkpoint::load(&ck).unwrap().step, 300);
    let resumed = tempfile::tempdir().unwrap();
    let (o, resumed_out) = run(resumed.path(), OU, &["simulate", "--resume", ck.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(resumed_out.join("final_1.spdr")).unwrap(),
        std::fs::read(full_out.join("final_1.spdr")).unwrap()
    );
}

#[test]
fn resume_rejects_a_foreign_seed_and_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(dir.path(), OU, &["simulate"]);
    assert!(o.status.success());
    let ck = out.join("final_0.spdr");
    let other = tempfile::tempdir().unwrap();
    let (o, _) = run(other.path(), OU, &["simulate", "--seed", "5", "--resume", ck.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let junk = dir.path().join("junk.spdr");
    std::fs::write(&junk, b"SPDR").unwrap();
    let (o, _) = run(other.path(), OU, &["simulate", "--resume", junk.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn oracle_suite_alias() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) =
        run(dir.path(), "model = \"chain\"\n[oracle]\ninstances = 10\nmax_dim = 8\n", &["oracle", "--suite", "thm2.4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(out.join("oracle.csv")).unwrap();
    let col = rdr.headers().unwrap().iter().position(|h| h == "identity_residual").unwrap();
    let records: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), 10);
    for r in records {
        assert!(r[col].parse::<f64>().unwrap() <= 1e-12);
    }
}
