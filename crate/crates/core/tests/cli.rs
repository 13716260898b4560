use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn orblabel(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_orblabel"));
    c.args(args).env_remove("ORBLABEL_CONFIG").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    orblabel(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn parse_reports_ingest_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("recs.jsonl");
    let o = run(&["parse", p(&fixture("fixture.tle")), "--supgp", p(&fixture("fixture_supgp.tle")), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("entries 212 emitted 210 malformed 1 duplicates 1 satellites 7"), "{}", stdout(&o));
    let lines = std::fs::read_to_string(&out).unwrap();
    assert_eq!(lines.lines().count(), 210);
    let supgp = lines.lines().filter(|l| l.contains("\"SUPGP\"")).count();
    assert!(supgp > 0 && supgp < 210);
}

#[test]
fn stats_recomputes_cascade_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cascade.jsonl");
    let o =
        run(&["cascade", p(&fixture("fixture.tle")), "--supgp", p(&fixture("fixture_supgp.tle")), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let printed = stdout(&o);
    assert!(printed.contains("rule non-normal"), "{printed}");
    let s = run(&["stats", p(&out)]);
    assert_eq!(s.status.code(), Some(0));
    assert_eq!(stdout(&s), printed);
    let recs = std::fs::read_to_string(&out).unwrap();
    assert_eq!(recs.lines().count(), 210);
}

#[test]
fn usage_and_fatal_errors_exit_2() {
    let o = run(&["parse"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["parse", "/nonexistent/archive.tle"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[rules]\nno_such_threshold = 1.0\n").unwrap();
    let o = run(&["--config", p(&bad), "parse", p(&fixture("fixture.tle"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_threshold"));
}

#[test]
fn config_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let count = |env: Option<&Path>, name: &str| {
        let out = dir.path().join(name);
        let mut c = orblabel(&["label-rule", p(&fixture("fixture.tle")), "--out", p(&out)]);
        if let Some(e) = env {
            c.env("ORBLABEL_CONFIG", e);
        }
        let o = c.output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(&out).unwrap().iter().filter(|b| **b != 0).count()
    };
    let loose = dir.path().join("loose.toml");
    std::fs::write(&loose, "[rules]\ndh_man_km = 0.01\ndh_decay_km = 0.01\n").unwrap();
    assert!(count(Some(&loose), "loose.bin") > count(None, "default.bin"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[nonsense]\n").unwrap();
    let o = orblabel(&["parse", p(&fixture("fixture.tle"))]).env("ORBLABEL_CONFIG", &bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_reentry_is_a_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let doomed = dir.path().join("doomed.toml");
    std::fs::write(
        &doomed,
        "norad_id = 49999\nstart = \"2024-03-01T00:00:00Z\"\nbstar = 0.003\n\
         [elements]\naltitude_km = 200.0\ninclination_deg = 51.6\n\
         [schedule]\ncadence_hours = 8.0\ncount = 60\n",
    )
    .unwrap();
    let unencodable = dir.path().join("unencodable.toml");
    std::fs::write(
        &unencodable,
        std::fs::read_to_string(&doomed).unwrap().replace("bstar = 0.003", "bstar = 0.05").replace("49999", "49998"),
    )
    .unwrap();
    let out = dir.path().join("mix.tle");
    let o = run(&["synth", p(&fixture("scenarios/sat_a.toml")), p(&doomed), p(&unencodable), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l.starts_with("1 49999")));
    // n_dot outgrows the fixed-column field, so that scenario is dropped whole
    assert!(!text.contains("49998"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unencodable.toml"));
    let truth = std::fs::read_to_string(out.with_extension("tle.truth.jsonl")).unwrap();
    assert!(truth.lines().last().unwrap().contains("\"breakup\""), "{truth}");
    assert_eq!(truth.lines().count() * 2, text.lines().count());

    let o = run(&["synth", p(&fixture("scenarios/sat_a.toml")), "--out", p(&dir.path().join("ok.tle"))]);
    assert_eq!(o.status.code(), Some(0));
}
