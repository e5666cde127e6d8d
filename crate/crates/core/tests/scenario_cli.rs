use std::path::{Path, PathBuf};
use std::process::Command;

use mcf_avoid::contour::zero_polylines;
use mcf_avoid::distance::RegionSet;
use mcf_avoid::grid::Grid;
use mcf_avoid::scenario::{load_config, read_config, run_scenario, CSV_HEADER, HYPOTHESIS_UNMET_TAG};
use mcf_avoid::svg::svg_document;
use mcf_avoid::Error;

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn bundled() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(scenarios_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    v.sort();
    v
}

const MINIMAL: &str = r#"
[scenario]
name = "two_circles"

[grid]
n = 64
bounds = [-1.0, 1.0, -1.0, 1.0]

[flow]
t_end = 0.01

[shapes]
x = ["circle -0.4 0 0.25"]
y = ["circle 0.4 0 0.25"]
"#;

#[test]
fn bundled_suite_is_complete_and_round_trips() {
    let names: Vec<String> = bundled()
        .iter()
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    for want in [
        "counterexample_graphs",
        "euclid_concentric",
        "euclid_disk_vs_line",
        "euclid_two_disks_midsurface",
        "hyperbolic_concentric",
        "offset_tube_case2",
    ] {
        assert!(names.iter().any(|n| n == want), "missing {want}");
    }
    for p in bundled() {
        let c = read_config(&p).unwrap();
        assert_eq!(load_config(&c.to_toml()).unwrap(), c, "{}", p.display());
    }
}

#[test]
fn minimal_config_gets_documented_defaults() {
    let c = load_config(MINIMAL).unwrap();
    assert_eq!(c.flow.cfl, 0.4);
    assert_eq!(c.interp.k, 3.0);
    assert!(!c.interp.enable);
    assert_eq!(c.report.tolerance, None);
    assert_eq!(c.output.svg_every, 0);
    assert_eq!(c.flow.records.len(), 11);
    assert_eq!(c.flow.records[0], 0.0);
    assert_eq!(*c.flow.records.last().unwrap(), 0.01);
}

#[test]
fn syntax_error_reports_its_line() {
    let text = MINIMAL.replace("t_end = 0.01", "t_end = = 0.01");
    let line = text.lines().position(|l| l.contains("= =")).unwrap() + 1;
    match load_config(&text) {
        Err(Error::Parse { line: got, .. }) => assert_eq!(got, line),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn unknown_key_is_rejected_with_its_line() {
    let text = MINIMAL.replace("t_end = 0.01", "t_end = 0.01\nsteps = 3");
    let line = text.lines().position(|l| l.starts_with("steps")).unwrap() + 1;
    match load_config(&text) {
        Err(Error::Parse { line: got, message }) => {
            assert_eq!(got, line);
            assert!(message.contains("steps"), "{message}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

fn validation_key(text: &str) -> String {
    match load_config(text) {
        Err(Error::Validation { key, .. }) => key,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn poincare_bounds_outside_the_disk_name_the_bounds_key() {
    let text = MINIMAL.replace("[flow]", "[metric]\nkind = \"poincare_disk\"\n\n[flow]");
    assert_eq!(validation_key(&text), "grid.bounds");
    let inside = text.replace("bounds = [-1.0, 1.0, -1.0, 1.0]", "bounds = [-0.6, 0.6, -0.6, 0.6]");
    let inside = inside.replace("-0.4 0 0.25", "-0.3 0 0.1").replace("0.4 0 0.25", "0.3 0 0.1");
    load_config(&inside).unwrap();
}

#[test]
fn overlap_needs_the_tag() {
    let text = MINIMAL.replace("circle 0.4 0 0.25", "circle 0 0 0.25");
    assert_eq!(validation_key(&text), "shapes.y");
    let tagged = text.replace("name = \"two_circles\"", &format!("name = \"two_circles\"\ntags = [\"{HYPOTHESIS_UNMET_TAG}\"]"));
    load_config(&tagged).unwrap();
}

#[test]
fn bad_values_name_their_keys() {
    assert_eq!(validation_key(&MINIMAL.replace("n = 64", "n = 8")), "grid.n");
    assert_eq!(validation_key(&MINIMAL.replace("t_end = 0.01", "t_end = -1.0")), "flow.t_end");
    assert_eq!(validation_key(&MINIMAL.replace("t_end = 0.01", "t_end = 0.01\ncfl = 0.9")), "flow.cfl");
    assert!(validation_key(&MINIMAL.replace("circle -0.4 0 0.25", "blob 1")).starts_with("shapes.x"));
    assert!(validation_key(&MINIMAL.replace("circle 0.4 0 0.25", "circle 5 5 0.1")).starts_with("shapes.y"));
    assert_eq!(
        validation_key(&format!("{MINIMAL}\n[report]\ntolerance = -0.5\n")),
        "report.tolerance"
    );
    assert_eq!(
        validation_key(&format!("{MINIMAL}\n[offset]\nc = 0.1\nlambda = 0.5\n")),
        "offset.lambda"
    );
    assert_eq!(
        validation_key(&MINIMAL.replace("[flow]", "[metric]\nkind = \"custom_conformal\"\n\n[flow]")),
        "metric.phi"
    );
}

#[test]
fn csv_is_reproducible_and_fixed_format() {
    let c = load_config(MINIMAL).unwrap();
    let a = run_scenario(&c, None).unwrap();
    let b = run_scenario(&c, None).unwrap();
    assert_eq!(a.csv(), b.csv());
    let csv = a.csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), 6, "{row}");
        for v in [f[0], f[1], f[4]] {
            let mantissa = v.split('e').next().unwrap();
            let digits = mantissa.chars().filter(char::is_ascii_digit).count();
            assert_eq!(digits, 9, "{v}");
            v.parse::<f64>().unwrap();
        }
        assert_eq!(f[5], "ok");
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcf-avoid"))
}

fn run_cli(config: &Path, out: &Path) -> (bool, serde_json::Value) {
    let status = bin()
        .args(["run", config.to_str().unwrap(), "--quiet", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    let name = read_config(config).unwrap().scenario.name;
    let report = std::fs::read_to_string(out.join(&name).join("report.json")).unwrap();
    (status.success(), serde_json::from_str(&report).unwrap())
}

#[test]
fn exit_status_follows_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, MINIMAL).unwrap();
    // a well separated pair tagged as a counterexample fails its avoidance check
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        MINIMAL.replace("name = \"two_circles\"", &format!("name = \"mislabelled\"\ntags = [\"{HYPOTHESIS_UNMET_TAG}\"]")),
    )
    .unwrap();
    for (path, expect) in [(&good, true), (&bad, false)] {
        let (ok, report) = run_cli(path, &dir.path().join("out"));
        assert_eq!(ok, expect);
        let all = report["checks"].as_array().unwrap().iter().all(|c| c["passed"].as_bool().unwrap());
        assert_eq!(report["success"].as_bool(), Some(all));
        assert_eq!(ok, all);
    }
    let csv = std::fs::read_to_string(dir.path().join("out/two_circles/results.csv")).unwrap();
    assert!(csv.starts_with(CSV_HEADER));
}

#[test]
fn overrides_apply_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, MINIMAL).unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", cfg.to_str().unwrap(), "--quiet", "--grid-n", "48", "--t-end", "0.005"])
        .args(["--tolerance", "0.1", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("two_circles/report.json")).unwrap()).unwrap();
    assert!((report["spacing"].as_f64().unwrap() - 2.0 / 47.0).abs() < 1e-12);
    assert_eq!(report["report"]["tolerance"].as_f64(), Some(0.1));
    let t = &report["report"]["times"];
    assert_eq!(t.as_array().unwrap().last().unwrap().as_f64(), Some(0.005));
}

#[test]
fn oracle_subcommand_prints_json() {
    let out = bin().args(["oracle", "euclid_circle", "0.6", "--at", "0,0.1,0.2"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let s = v["samples"].as_array().unwrap();
    assert!((s[1]["value"].as_f64().unwrap() - 0.4).abs() < 1e-15);
    assert_eq!(s[2]["past_extinction"].as_bool(), Some(true));

    let out = bin().args(["oracle", "exp_offset", "0.5", "-1", "--at", "0"]).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["samples"][0]["value"].as_f64(), Some(0.5));

    let out = bin().args(["oracle", "annulus_harmonic", "1", "2.718281828459045", "--at", "1.6487212707001282"]).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["samples"][0]["value"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let bad = bin().args(["oracle", "sphere_circle", "1"]).output().unwrap();
    assert!(!bad.status.success());
}

#[test]
fn circle_contour_vertex_count() {
    for n in [64, 128, 256] {
        let g = Grid::square(n, -1.0, 1.0).unwrap();
        let r = 0.5;
        let lines = zero_polylines(&RegionSet::disk(g, [0.03, -0.01], r));
        assert_eq!(lines.len(), 1);
        assert!(lines[0].closed);
        let est = 2.0 * std::f64::consts::PI * r / g.h;
        let count = lines[0].points.len() as f64;
        assert!((0.8 * est..=1.3 * est).contains(&count), "{count} vs {est}");
    }
    let g = Grid::square(64, -1.0, 1.0).unwrap();
    let doc = svg_document(&g, [Some(&RegionSet::disk(g, [0.0, 0.0], 0.3)), None, None]);
    assert_eq!(doc.matches("<path").count(), 1);
}
