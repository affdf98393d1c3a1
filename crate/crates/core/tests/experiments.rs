use pamlab::experiments::commands::{execute, resolve, COMMANDS};
use pamlab::experiments::config::Params;
use pamlab::experiments::manifest::{replay, ExperimentManifest};
use pamlab::experiments::run;

fn flags(kv: &[(&str, &str)]) -> Params {
    let mut p = Params::new();
    for (k, v) in kv {
        p.set(k, *v);
    }
    p
}

#[test]
fn every_stochastic_command_declares_a_seed() {
    for c in COMMANDS {
        assert_eq!(c.stochastic, c.keys.iter().any(|k| k.name == "seed" && k.default.is_none()), "{}", c.name);
    }
}

#[test]
fn resolution_order_and_errors() {
    let file = Params::parse("theta = 0.05\nd = 4\n").unwrap();
    let p = resolve("constants", Some(&file), &flags(&[("d", "3")])).unwrap();
    assert_eq!((p.str("d").unwrap(), p.str("theta").unwrap()), ("3", "0.05"));
    assert!(resolve("constants", None, &flags(&[])).is_err());
    assert!(resolve("constants", None, &flags(&[("theta", "0.05"), ("colour", "red")])).is_err());
    assert!(resolve("fk", None, &flags(&[])).is_err());
}

#[test]
fn manifest_round_trip_replays() {
    let dir = std::env::temp_dir().join(format!("pamlab-exp-{}", std::process::id()));
    let p = resolve("ppp-sample", None, &flags(&[("region", "ball:1.5"), ("intensity", "3"), ("seed", "21")])).unwrap();
    let r = run("ppp-sample", &p, &dir.join("pts.csv")).unwrap();
    let m = ExperimentManifest::read(&r.manifest_file).unwrap();
    assert_eq!(m.seeds, vec![21]);
    assert_eq!(m, r.manifest);
    assert!(replay(&m, &dir.join("replay")).unwrap().identical);
    // a tampered digest is reported as a mismatch
    let mut bad = m.clone();
    bad.outputs[0].sha256 = "0".repeat(64);
    assert!(!replay(&bad, &dir.join("replay")).unwrap().identical);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn quick_suite_passes() {
    let p = resolve("suite", None, &flags(&[("seed", "3")])).unwrap();
    let out = execute("suite", &p).unwrap();
    assert_eq!(out.verified, Some(true), "{}", out.content);
}
