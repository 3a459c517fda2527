//! End-to-end CLI behavior: exit codes, suite selection, report files, and
//! byte-level determinism of the JSON output.

use std::process::Command;

fn nullgeo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nullgeo"))
}

fn fixture_path(name: &str) -> String {
    format!("{}/../../fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn verify_passes_on_the_hypersurface_suite() {
    let out = nullgeo()
        .args(["verify", "--spec", &fixture_path("null_hyperplane"), "--suite", "hypersurface"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    for id in ["eq17", "eq18", "eq19", "eq20"] {
        assert!(text.contains(id), "missing {id} in output:\n{text}");
    }
    assert!(text.contains("0 failed"));
}

#[test]
fn spacelike_fixture_exits_with_code_3() {
    let out = nullgeo()
        .args(["verify", "--spec", &fixture_path("spacelike")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not lightlike"), "stderr: {err}");
    assert!(err.contains("rank 3"), "stderr: {err}");
}

#[test]
fn malformed_spec_exits_with_code_2() {
    let dir = std::env::temp_dir().join("nullgeo_cli_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("broken.json");
    std::fs::write(&path, "{\"ambient\": {}}").unwrap();
    let out = nullgeo()
        .args(["verify", "--spec", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_suite_is_a_schema_error() {
    let out = nullgeo()
        .args(["verify", "--spec", &fixture_path("null_hyperplane"), "--suite", "bogus"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn kaehler_report_json_contains_thm4() {
    let dir = std::env::temp_dir().join("nullgeo_cli_test");
    std::fs::create_dir_all(&dir).unwrap();
    let report = dir.join("kaehler_flat_report.json");
    let out = nullgeo()
        .args([
            "verify",
            "--spec",
            &fixture_path("kaehler_flat"),
            "--suite",
            "kaehler",
            "--report",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["schema"], 1);
    assert!(json["identities"]
        .as_array()
        .unwrap()
        .iter()
        .any(|r| r["id"] == "thm4" && r["verdict"] == "pass"));
}

#[test]
fn reports_are_deterministic_modulo_elapsed_time() {
    let dir = std::env::temp_dir().join("nullgeo_cli_test");
    std::fs::create_dir_all(&dir).unwrap();
    let mut reports = Vec::new();
    for run in 0..2 {
        let path = dir.join(format!("det_{run}.json"));
        let out = nullgeo()
            .args([
                "verify",
                "--spec",
                &fixture_path("null_hyperplane_ew"),
                "--suite",
                "foliation",
                "--seed",
                "99",
                "--report",
                path.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        let mut json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        json.as_object_mut().unwrap().remove("elapsed_ms");
        reports.push(serde_json::to_string(&json).unwrap());
    }
    assert_eq!(reports[0], reports[1], "reports differ between identical runs");
}

#[test]
fn light_cone_passes_with_not_geodesic_note_and_skips_weyl() {
    let out = nullgeo()
        .args(["verify", "--spec", &fixture_path("light_cone")])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("not totally geodesic"));
    assert!(text.contains("no Weyl data"));
}

#[test]
fn builtin_fixture_names_resolve_without_files() {
    let out = nullgeo()
        .args(["verify", "--spec", "null_hyperplane", "--suite", "degcalc"])
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn fixtures_table_lists_all_entries() {
    let out = nullgeo().args(["fixtures"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in [
        "null_hyperplane",
        "null_hyperplane_conformal",
        "null_hyperplane_ew",
        "light_cone",
        "spacelike",
        "kaehler_flat",
        "kaehler_prop",
        "kaehler_generic",
        "kaehler_6d",
    ] {
        assert!(text.contains(name), "missing {name}");
    }
}
