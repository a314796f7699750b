use std::path::Path;
use std::process::Command;

use minmap_cli::config::{FlowSpec, MapSpec};
use minmap_cli::{run, Scenario, ScenarioConfig};
use minmap_core::pointwise::pointwise_at_point;
use minmap_core::{expr, ConformalMetric, MapFormula};

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap();
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (head, rows)
}

fn column(head: &[String], name: &str) -> usize {
    head.iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn analyze_explicit_map_jacobian_column_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::preset("paper_example").unwrap();
    assert_eq!(cfg.grid.n, Some(129));
    run(Scenario::Analyze, &cfg, dir.path()).unwrap();
    let (head, rows) = read_csv(&dir.path().join("pointwise.csv"));
    assert_eq!(rows.len(), 129 * 129);
    let (cx, cj) = (column(&head, "x"), column(&head, "jf"));
    for row in &rows {
        let x: f64 = row[cx].parse().unwrap();
        let jf: f64 = row[cj].parse().unwrap();
        let exact = -((2.0 * x).exp() - 9.0 * (-2.0 * x).exp()) / 8.0;
        assert!((jf - exact).abs() <= 1e-6, "x = {x}: {jf} vs {exact}");
    }
}

#[test]
fn verify_identity_residuals_vanish() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::preset("identity").unwrap();
    cfg.grid.n = Some(33);
    run(Scenario::Verify, &cfg, dir.path()).unwrap();
    let (head, rows) = read_csv(&dir.path().join("residuals.csv"));
    assert!(!rows.is_empty());
    for row in &rows {
        for (name, cell) in head.iter().zip(row).skip(4) {
            if !cell.is_empty() {
                let v: f64 = cell.parse().unwrap();
                assert!(v.abs() <= 1e-10, "{name}: {v}");
            }
        }
    }
}

#[test]
fn flow_on_perturbed_z_squared_stays_area_decreasing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::preset("perturbed_z_squared").unwrap();
    cfg.grid.n = Some(17);
    cfg.flow = FlowSpec {
        stop_tension: 1e-4,
        max_steps: 5000,
        ..FlowSpec::default()
    };
    let report = run(Scenario::Flow, &cfg, dir.path()).unwrap();
    let (head, rows) = read_csv(&dir.path().join("monitors.csv"));
    assert!(rows.len() >= 2);
    let last = rows.last().unwrap();
    let min_phi: f64 = last[column(&head, "min_phi")].parse().unwrap();
    assert!(min_phi >= -1e-6, "final min_phi {min_phi}");
    let tau0: f64 = rows[0][column(&head, "norm_tau")].parse().unwrap();
    let tau1: f64 = last[column(&head, "norm_tau")].parse().unwrap();
    assert!(tau1 < tau0);
    assert!(report.summary.contains("area decreasing"));

    let snap = std::fs::read_to_string(dir.path().join("snapshot_final.txt")).unwrap();
    let lines: Vec<&str> = snap.lines().collect();
    assert_eq!(lines[1], "nx ny hx hy x0 y0");
    assert!(lines[2].starts_with("17 17 "));
    assert_eq!(lines.len(), 4 + 17 * 17);
}

#[test]
fn csv_outputs_are_byte_identical_across_runs() {
    let mut cfg = ScenarioConfig::preset("z_squared").unwrap();
    cfg.grid.n = Some(21);
    for scenario in [Scenario::Analyze, Scenario::Verify, Scenario::Curvature] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run(scenario, &cfg, a.path()).unwrap();
        run(scenario, &cfg, b.path()).unwrap();
        for f in &ra.files {
            let name = f.file_name().unwrap();
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            assert!(x == y, "{name:?} differs between runs");
        }
    }
}

#[test]
fn csv_files_carry_a_versioned_header() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::preset("z_squared").unwrap();
    cfg.grid.n = Some(9);
    run(Scenario::Refine, &cfg, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("# minmap convergence v1"));
    // one |H| study plus five identities, three levels each
    assert_eq!(text.lines().count(), 2 + 6 * 3);
}

#[test]
fn toml_config_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
scenario = "analyze"

[source]
metric = "hyperbolic_scaled"
sigma = 2.0

[target]
metric = "hyperbolic_scaled"
sigma = 2.0

[map]
preset = "expression"
expression = "x, y"

[grid]
x = [-0.5, 0.5]
y = [-0.5, 0.5]
n = 11
"#;
    let cfg = ScenarioConfig::from_toml(text).unwrap();
    assert_eq!(cfg.scenario, Some(Scenario::Analyze));
    run(Scenario::Analyze, &cfg, dir.path()).unwrap();
    let (head, rows) = read_csv(&dir.path().join("pointwise.csv"));
    let (cp, cc) = (column(&head, "phi"), column(&head, "class"));
    for row in &rows {
        let phi: f64 = row[cp].parse().unwrap();
        assert!(phi.abs() <= 1e-12);
        assert!(
            row[cc].split('|').any(|k| k == "Lagrangian1"),
            "{}",
            row[cc]
        );
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let err =
        ScenarioConfig::from_toml("[source]\nmetric = \"euclidean\"\nbogus = 1\n").unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn malformed_expression_reports_offset() {
    let err = expr::parse_map_expression("x, +").unwrap_err();
    assert_eq!(err.offset, 3);
    let spec = MapSpec {
        expression: Some("x, +".into()),
        ..MapSpec::named("expression")
    };
    let grid = minmap_core::GridChart::centered_square(0.5, 9).unwrap();
    assert_eq!(spec.build(&grid).unwrap_err().exit_code(), 2);
}

#[test]
fn presets_match_their_expressions() {
    let cases = [
        (
            MapFormula::PaperExample,
            "0.5*(exp(x)-3*exp(-x))*cos(y/2), -0.5*(exp(x)-3*exp(-x))*sin(y/2)",
            ConformalMetric::euclidean(),
            2.0,
        ),
        (
            MapFormula::Identity,
            "x, y",
            ConformalMetric::poincare_disc(),
            0.6,
        ),
        (
            MapFormula::ZSquared,
            "x^2 - y^2, 2*x*y",
            ConformalMetric::poincare_disc(),
            0.6,
        ),
    ];
    for (preset, text, metric, half) in cases {
        let parsed = MapFormula::Expression(expr::parse_map_expression(text).unwrap());
        for a in 0..=10 {
            for b in 0..=10 {
                let x = -half + 2.0 * half * a as f64 / 10.0;
                let y = -half + 2.0 * half * b as f64 / 10.0;
                let p = pointwise_at_point(&preset, &metric, &metric, x, y).unwrap();
                let q = pointwise_at_point(&parsed, &metric, &metric, x, y).unwrap();
                for (u, v) in [
                    (p.lambda, q.lambda),
                    (p.mu, q.mu),
                    (p.u1, q.u1),
                    (p.u2, q.u2),
                    (p.jf, q.jf),
                    (p.phi, q.phi),
                    (p.theta, q.theta),
                ] {
                    assert!((u - v).abs() <= 1e-12, "{text} at ({x}, {y}): {u} vs {v}");
                }
            }
        }
    }
}

fn minmap(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_minmap"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn exit_codes_follow_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let ok = minmap(&[
        "curvature",
        "--preset",
        "identity",
        "--grid",
        "9",
        "--out",
        out,
    ]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(dir.path().join("curvature.csv").exists());

    assert_eq!(
        minmap(&["analyze", "--preset", "no_such_map", "--out", out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(minmap(&["analyze", "--out", out]).status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "this is not toml [").unwrap();
    assert_eq!(
        minmap(&["analyze", "--config", bad.to_str().unwrap(), "--out", out])
            .status
            .code(),
        Some(2)
    );

    // A grid reaching past the unit disc violates the Poincare chart.
    let outside = dir.path().join("outside.toml");
    std::fs::write(
        &outside,
        "[source]\nmetric = \"poincare_disc\"\n[target]\nmetric = \"poincare_disc\"\n\
         [map]\npreset = \"identity\"\n[grid]\nx = [-1.2, 1.2]\ny = [-1.2, 1.2]\nn = 9\n",
    )
    .unwrap();
    assert_eq!(
        minmap(&[
            "analyze",
            "--config",
            outside.to_str().unwrap(),
            "--out",
            out
        ])
        .status
        .code(),
        Some(3)
    );

    // Scaling by 1.5 pushes the corners of the grid out of the target disc.
    let escape = dir.path().join("escape.toml");
    std::fs::write(
        &escape,
        "[source]\nmetric = \"poincare_disc\"\n[target]\nmetric = \"poincare_disc\"\n\
         [map]\npreset = \"scale\"\nk = 1.5\n[grid]\nx = [-0.6, 0.6]\ny = [-0.6, 0.6]\nn = 9\n",
    )
    .unwrap();
    assert_eq!(
        minmap(&[
            "analyze",
            "--config",
            escape.to_str().unwrap(),
            "--out",
            out
        ])
        .status
        .code(),
        Some(3)
    );

    // A conformal factor that turns negative is a numerical failure.
    let negative = dir.path().join("negative.toml");
    std::fs::write(
        &negative,
        "[source]\nmetric = \"custom\"\nfactor = \"x\"\n[target]\nmetric = \"euclidean\"\n\
         [map]\npreset = \"identity\"\n[grid]\nx = [-0.5, 0.5]\ny = [-0.5, 0.5]\nn = 9\n",
    )
    .unwrap();
    assert_eq!(
        minmap(&[
            "analyze",
            "--config",
            negative.to_str().unwrap(),
            "--out",
            out
        ])
        .status
        .code(),
        Some(4)
    );
}

#[test]
fn bundled_scenarios_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ScenarioConfig::load(&path).unwrap();
            assert!(cfg.scenario.is_some(), "{}", path.display());
            minmap_cli::Resolved::new(&cfg).unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
