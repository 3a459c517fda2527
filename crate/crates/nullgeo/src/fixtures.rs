//! Built-in problem descriptions, embedded at compile time; the same files
//! ship in the repository's `fixtures/` directory.

pub struct Fixture {
    pub name: &'static str,
    pub json: &'static str,
    /// Suites whose preconditions the fixture is designed to satisfy.
    pub suites: &'static str,
    pub negative: Option<&'static str>,
}

pub const FIXTURES: &[Fixture] = &[
    Fixture {
        name: "null_hyperplane",
        json: include_str!("../../../fixtures/null_hyperplane.json"),
        suites: "hypersurface, degcalc, weyl, foliation",
        negative: None,
    },
    Fixture {
        name: "null_hyperplane_conformal",
        json: include_str!("../../../fixtures/null_hyperplane_conformal.json"),
        suites: "hypersurface, degcalc, weyl",
        negative: None,
    },
    Fixture {
        name: "null_hyperplane_ew",
        json: include_str!("../../../fixtures/null_hyperplane_ew.json"),
        suites: "hypersurface, degcalc, weyl, foliation",
        negative: None,
    },
    Fixture {
        name: "light_cone",
        json: include_str!("../../../fixtures/light_cone.json"),
        suites: "hypersurface, degcalc",
        negative: Some("not totally geodesic (B = rho g, rho != 0)"),
    },
    Fixture {
        name: "spacelike",
        json: include_str!("../../../fixtures/spacelike.json"),
        suites: "none",
        negative: Some("not lightlike: rejected at load with exit code 3"),
    },
    Fixture {
        name: "kaehler_flat",
        json: include_str!("../../../fixtures/kaehler_flat.json"),
        suites: "hypersurface, degcalc, weyl, kaehler",
        negative: None,
    },
    Fixture {
        name: "kaehler_prop",
        json: include_str!("../../../fixtures/kaehler_prop.json"),
        suites: "hypersurface, degcalc, weyl, kaehler",
        negative: None,
    },
    Fixture {
        name: "kaehler_generic",
        json: include_str!("../../../fixtures/kaehler_generic.json"),
        suites: "hypersurface, degcalc, weyl, kaehler",
        negative: None,
    },
    Fixture {
        name: "kaehler_6d",
        json: include_str!("../../../fixtures/kaehler_6d.json"),
        suites: "hypersurface, degcalc, weyl, kaehler (D0 rank 2)",
        negative: None,
    },
];

pub fn by_name(name: &str) -> Option<&'static Fixture> {
    FIXTURES.iter().find(|f| f.name == name)
}

/// Table for `nullgeo fixtures`.
pub fn render_table() -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<26} {:<44} {}\n", "fixture", "suites", "description"));
    for f in FIXTURES {
        let spec: serde_json::Value = serde_json::from_str(f.json).expect("embedded fixture JSON");
        let mut descr = spec["description"].as_str().unwrap_or("").to_string();
        if let Some(neg) = f.negative {
            descr = format!("negative: {neg}. {descr}");
        }
        out.push_str(&format!("{:<26} {:<44} {}\n", f.name, f.suites, descr));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixture_json_parses() {
        for f in FIXTURES {
            let v: serde_json::Value = serde_json::from_str(f.json).unwrap();
            assert_eq!(v["name"].as_str().unwrap(), f.name);
        }
    }

    #[test]
    fn table_lists_required_entries() {
        let t = render_table();
        assert!(t.contains("null_hyperplane"));
        assert!(t.contains("light_cone"));
        assert!(t.contains("negative: not totally geodesic"));
        assert!(t.contains("kaehler_6d"));
        assert!(t.contains("D0 rank 2"));
    }
}
