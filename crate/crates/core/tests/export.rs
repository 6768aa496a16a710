use loewner::driving::DrivingSpec;
use loewner::export::*;
use loewner::hull_trace::{trace, welding};
use loewner::ode_engine::IntegratorConfig;
use loewner::weierstrass_suite::sweep;
use std::fs;
use std::path::PathBuf;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("loewner-export-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn trace_table_and_sidecar() {
    let dir = scratch("trace");
    let spec = DrivingSpec::constant(0.0, 1.0).unwrap();
    let curve = trace(&spec, 1.0, 0.25).unwrap();
    let mut meta = Metadata::new("trace", Some(&spec), IntegratorConfig::default());
    meta.dt = Some(0.25);
    let path = dir.join("trace.csv");
    write_table(&path, trace_rows(&curve), &meta).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,re,im,cell_step");
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[5], "1.0,0.0,2.0,0.25");

    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("trace.json")).unwrap()).unwrap();
    assert_eq!(side["spec_hash"], spec.spec_hash());
    assert_eq!(side["dt"], 0.25);
    assert_eq!(side["tolerances"]["rel_tol"], 1e-10);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn welding_and_sweep_headers() {
    let dir = scratch("welding");
    let spec = DrivingSpec::constant(0.0, 1.0).unwrap();
    let w = welding(&spec, 1.0, &[0.0, 0.5], 1e-2, &IntegratorConfig::default()).unwrap();
    let path = dir.join("welding.csv");
    write_rows(&path, welding_rows(&w)).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "s,left,right,ratio1");
    assert_eq!(text.lines().count(), 3);

    let rows = sweep(&[16.0], &[2], &[1.0], 1.0, &[2, 3]).unwrap();
    let path = dir.join("sweep.csv");
    write_rows(&path, &rows).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "b,N,c,check,margin,verdict");
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn integrator_overrides_are_strict() {
    let cfg: IntegratorConfig = serde_json::from_str(r#"{"rel_tol": 1e-8}"#).unwrap();
    assert_eq!(cfg.rel_tol, 1e-8);
    assert_eq!(cfg.abs_tol, IntegratorConfig::default().abs_tol);
    assert!(serde_json::from_str::<IntegratorConfig>(r#"{"rtol": 1e-8}"#).is_err());
}
