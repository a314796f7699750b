//! Scenario runner behind the `minmap` binary.
//!
//! Every scenario builds a sampled map from a [`ScenarioConfig`], runs one
//! analysis and writes CSV files plus a `summary.txt` into the output
//! directory. Each CSV starts with a `# minmap <kind> v1` comment line that
//! pins the column layout.

pub mod config;
pub mod error;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use minmap_core::flow::{run_to_minimal, MonitorRecord};
use minmap_core::graph_geometry::GeometryField;
use minmap_core::pointwise::{pointwise_at_point, PointwiseGeometry};
use minmap_core::verifier::{
    self, check_map_hypotheses, interior_minimum_probe, mean_curvature_study, refinement_levels,
    refinement_study, AngleField, Certificate, Identity, VerifyOptions,
};
use minmap_core::{ConformalMetric, GridChart, MapField, MapFormula};

pub use config::{Scenario, ScenarioConfig};
pub use error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// CSV column documentation, shown by `--help`.
pub const POINTWISE_COLUMNS: &str =
    "pointwise.csv: i, j, x, y, f1, f2, lambda, mu, u1, u2, jf, phi, theta, class";
pub const GEOMETRY_COLUMNS: &str =
    "geometry.csv: i, j, x, y, h1, h2, norm_h, norm_a2, sigma_perp, rtilde_1234, curvature_m, curvature_n";
pub const RESIDUAL_COLUMNS: &str =
    "residuals.csv: i, j, x, y, then one column per <identity>.<component>; empty cells are outside the stencil or masked";
pub const CONVERGENCE_COLUMNS: &str =
    "convergence.csv: quantity, level, n, h, norm_inf, pair_order, estimated_order";
pub const MONITOR_COLUMNS: &str =
    "monitors.csv: step, t, dt, min_phi, min_theta, max_abs_jf, norm_H, norm_tau";
pub const CURVATURE_COLUMNS: &str =
    "curvature.csv: i, j, x, y, f1, f2, k_source, k_source_fd, k_target, k_target_fd";

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: Scenario,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// A config resolved into core objects.
pub struct Resolved {
    pub grid: GridChart,
    pub formula: MapFormula,
    pub source: ConformalMetric,
    pub target: ConformalMetric,
}

impl Resolved {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, CliError> {
        let grid = cfg.grid.build()?;
        let formula = cfg.map.build(&grid)?;
        Ok(Self {
            grid,
            formula,
            source: cfg.source.build()?,
            target: cfg.target.build()?,
        })
    }

    pub fn sample(&self) -> Result<MapField, CliError> {
        Ok(MapField::sample(
            self.grid.clone(),
            self.formula.clone(),
            self.source.clone(),
            self.target.clone(),
        )?)
    }
}

/// Runs `scenario` and writes its artifacts into `out_dir`.
pub fn run(
    scenario: Scenario,
    cfg: &ScenarioConfig,
    out_dir: &Path,
) -> Result<RunReport, CliError> {
    let resolved = Resolved::new(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let mut out = Output {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    let mut summary = header(scenario, cfg, &resolved);
    match scenario {
        Scenario::Analyze => analyze(cfg, &resolved, &mut out, &mut summary)?,
        Scenario::Verify => verify(cfg, &resolved, &mut out, &mut summary)?,
        Scenario::Refine => refine(cfg, &resolved, &mut out, &mut summary)?,
        Scenario::Flow => flow(cfg, &resolved, &mut out, &mut summary)?,
        Scenario::Curvature => curvature(cfg, &resolved, &mut out, &mut summary)?,
    }
    out.text("summary.txt", &summary)?;
    Ok(RunReport {
        scenario,
        out_dir: out.dir,
        files: out.files,
        summary,
    })
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn csv(&mut self, name: &str, kind: &str) -> Result<csv::Writer<BufWriter<File>>, CliError> {
        let path = self.dir.join(name);
        let mut file = BufWriter::new(File::create(&path)?);
        writeln!(file, "# minmap {kind} v{SCHEMA_VERSION}")?;
        self.files.push(path);
        Ok(csv::Writer::from_writer(file))
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, body)?;
        self.files.push(path);
        Ok(())
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn header(scenario: Scenario, cfg: &ScenarioConfig, r: &Resolved) -> String {
    let g = &r.grid;
    let mut s = String::new();
    let _ = writeln!(s, "minmap {scenario:?} summary v{SCHEMA_VERSION}");
    let _ = writeln!(s, "map          {}", r.formula.name());
    let _ = writeln!(s, "source       {}", r.source);
    let _ = writeln!(s, "target       {}", r.target);
    let _ = writeln!(
        s,
        "grid         {}x{} on [{}, {}]x[{}, {}] ({:?}), h = {:.6e}",
        g.nx(),
        g.ny(),
        g.x_range().0,
        g.x_range().1,
        g.y_range().0,
        g.y_range().1,
        cfg.grid.boundary,
        g.h()
    );
    s
}

fn verify_options(cfg: &ScenarioConfig) -> VerifyOptions {
    VerifyOptions {
        mask_floor: cfg.tolerance.mask_floor,
        minimality_factor: cfg.tolerance.minimality_factor,
        ..VerifyOptions::default()
    }
}

fn push_certificate(summary: &mut String, cert: &Certificate) {
    let _ = writeln!(summary, "\ncertificate");
    let _ = writeln!(summary, "{cert}");
}

fn analyze(
    cfg: &ScenarioConfig,
    r: &Resolved,
    out: &mut Output,
    summary: &mut String,
) -> Result<(), CliError> {
    let map = r.sample()?;
    let grid = map.grid();
    let tol = cfg.tolerance.classify;

    // The differential comes from the formula itself, so every grid point
    // (boundary included) gets exact pointwise values.
    let points: Vec<((usize, usize), PointwiseGeometry)> = grid
        .points()
        .map(|(i, j)| {
            let [x, y] = grid.point(i, j);
            Ok((
                (i, j),
                pointwise_at_point(&r.formula, &r.source, &r.target, x, y)?,
            ))
        })
        .collect::<Result<_, CliError>>()?;

    let mut w = out.csv("pointwise.csv", "pointwise")?;
    w.write_record([
        "i", "j", "x", "y", "f1", "f2", "lambda", "mu", "u1", "u2", "jf", "phi", "theta", "class",
    ])?;
    for ((i, j), p) in &points {
        let [x, y] = grid.point(*i, *j);
        let [f1, f2] = map.value(*i, *j);
        w.write_record([
            i.to_string(),
            j.to_string(),
            num(x),
            num(y),
            num(f1),
            num(f2),
            num(p.lambda),
            num(p.mu),
            num(p.u1),
            num(p.u2),
            num(p.jf),
            num(p.phi),
            num(p.theta),
            p.classify(tol).to_string(),
        ])?;
    }
    w.flush()?;

    let geom = GeometryField::compute(&map)?;
    let mut w = out.csv("geometry.csv", "geometry")?;
    w.write_record([
        "i",
        "j",
        "x",
        "y",
        "h1",
        "h2",
        "norm_h",
        "norm_a2",
        "sigma_perp",
        "rtilde_1234",
        "curvature_m",
        "curvature_n",
    ])?;
    for ((i, j), p) in geom.iter() {
        let [x, y] = grid.point(i, j);
        w.write_record([
            i.to_string(),
            j.to_string(),
            num(x),
            num(y),
            num(p.h[0]),
            num(p.h[1]),
            num(p.mean_curvature_norm()),
            num(p.norm_a2),
            num(p.sigma_perp),
            num(p.rtilde_1234),
            num(p.curvature_m),
            num(p.curvature_n),
        ])?;
    }
    w.flush()?;

    let mut cert = Certificate::from_points(
        grid,
        points.iter().map(|(ij, p)| (*ij, p)),
        cfg.tolerance.certificate,
    )?;
    let hyp = cfg.hypotheses()?;
    let mut hypotheses_hold = false;
    if let Some(h) = &hyp {
        let check = check_map_hypotheses(&map, h)?;
        hypotheses_hold = check.ok;
        cert = cert.with_hypotheses(check.ok);
    }
    let h_sup = geom.mean_curvature_sup();
    let h = grid.h();
    let threshold = cfg.tolerance.minimality_factor * h * h;
    let generic = points
        .iter()
        .filter(|(_, p)| p.classify(tol).is_generic())
        .count();
    let _ = writeln!(
        summary,
        "\n|H|_inf      {h_sup:.6e} (threshold {threshold:.3e}, minimal: {})",
        h_sup <= threshold
    );
    let _ = writeln!(
        summary,
        "points       {} ({} generic, {} special)",
        points.len(),
        generic,
        points.len() - generic
    );
    push_certificate(summary, &cert);
    if hyp.is_some() {
        let _ = writeln!(summary, "\ninterior minimum probes");
        for field in [AngleField::Phi, AngleField::Theta] {
            let rec =
                interior_minimum_probe(&geom, field, hypotheses_hold, cfg.tolerance.certificate)?;
            let _ = writeln!(
                summary,
                "{field:?}: {:?}, min {:.6e} at ({:.4}, {:.4}), |grad| {:.3e}, laplacian {:.3e}",
                rec.status, rec.value, rec.point[0], rec.point[1], rec.gradient_norm, rec.laplacian
            );
        }
    }
    Ok(())
}

fn verify(
    cfg: &ScenarioConfig,
    r: &Resolved,
    out: &mut Output,
    summary: &mut String,
) -> Result<(), CliError> {
    let map = r.sample()?;
    let grid = map.grid();
    let geom = GeometryField::compute(&map)?;
    let reports = verifier::verify_all(&geom, verify_options(cfg))?;

    let columns: Vec<(String, &Vec<Option<f64>>)> = reports
        .iter()
        .flat_map(|rep| {
            rep.components
                .iter()
                .map(move |c| (format!("{}.{}", rep.identity, c.name), &c.field))
        })
        .collect();
    let mut w = out.csv("residuals.csv", "residuals")?;
    let mut head = vec!["i".to_string(), "j".into(), "x".into(), "y".into()];
    head.extend(columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&head)?;
    for (i, j) in grid.points() {
        let idx = grid.index(i, j);
        if columns.iter().all(|(_, f)| f[idx].is_none()) {
            continue;
        }
        let [x, y] = grid.point(i, j);
        let mut row = vec![i.to_string(), j.to_string(), num(x), num(y)];
        row.extend(columns.iter().map(|(_, f)| opt(f[idx])));
        w.write_record(&row)?;
    }
    w.flush()?;

    let _ = writeln!(summary, "\nresidual norms");
    for rep in &reports {
        let _ = write!(summary, "{rep}");
    }
    let worst = reports.iter().map(|r| r.norm_inf).fold(0.0, f64::max);
    let _ = writeln!(summary, "max residual {worst:.6e}");
    Ok(())
}

fn refine(
    cfg: &ScenarioConfig,
    r: &Resolved,
    out: &mut Output,
    summary: &mut String,
) -> Result<(), CliError> {
    let levels = refinement_levels(&r.grid, &r.formula, &r.source, &r.target, cfg.refine.levels)?;
    let mut studies = vec![mean_curvature_study(&levels)?];
    for id in Identity::ALL {
        studies.push(refinement_study(&levels, id, verify_options(cfg))?);
    }

    let mut w = out.csv("convergence.csv", "convergence")?;
    w.write_record([
        "quantity",
        "level",
        "n",
        "h",
        "norm_inf",
        "pair_order",
        "estimated_order",
    ])?;
    for s in &studies {
        for (k, (h, n)) in s.spacings.iter().zip(&s.norms).enumerate() {
            let pair = if k == 0 {
                None
            } else {
                Some(s.pair_orders[k - 1])
            };
            w.write_record([
                s.label.clone(),
                k.to_string(),
                levels[k].grid().nx().to_string(),
                num(*h),
                num(*n),
                opt(pair),
                s.estimated_order.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let _ = writeln!(summary, "\nconvergence over {} levels", levels.len());
    for s in &studies {
        let _ = writeln!(summary, "{s}");
    }
    Ok(())
}

fn flow(
    cfg: &ScenarioConfig,
    r: &Resolved,
    out: &mut Output,
    summary: &mut String,
) -> Result<(), CliError> {
    let map = r.sample()?;
    let fc = cfg.flow.config();
    let hyp = cfg.hypotheses()?;
    let outcome = run_to_minimal(map, &fc, hyp.as_ref(), cfg.tolerance.certificate)?;
    let state = &outcome.state;

    let mut w = out.csv("monitors.csv", "monitors")?;
    w.write_record([
        "step",
        "t",
        "dt",
        "min_phi",
        "min_theta",
        "max_abs_jf",
        "norm_H",
        "norm_tau",
    ])?;
    for m in &state.monitors {
        let MonitorRecord {
            step,
            t,
            dt,
            min_phi,
            min_theta,
            max_abs_jf,
            norm_h,
            norm_tau,
        } = *m;
        w.write_record([
            step.to_string(),
            num(t),
            num(dt),
            num(min_phi),
            num(min_theta),
            num(max_abs_jf),
            num(norm_h),
            num(norm_tau),
        ])?;
    }
    w.flush()?;

    let fin = state.map();
    let g = fin.grid();
    let mut snap = String::new();
    let _ = writeln!(snap, "# minmap snapshot v{SCHEMA_VERSION}");
    let _ = writeln!(snap, "nx ny hx hy x0 y0");
    let [x0, y0] = g.point(0, 0);
    let _ = writeln!(
        snap,
        "{} {} {} {} {} {}",
        g.nx(),
        g.ny(),
        num(g.hx()),
        num(g.hy()),
        num(x0),
        num(y0)
    );
    let _ = writeln!(snap, "i j f1 f2");
    for (i, j) in g.points() {
        let [a, b] = fin.value(i, j);
        let _ = writeln!(snap, "{i} {j} {} {}", num(a), num(b));
    }
    out.text("snapshot_final.txt", &snap)?;

    let first = state
        .monitors
        .first()
        .map(|m| m.norm_tau)
        .unwrap_or(f64::NAN);
    let _ = writeln!(
        summary,
        "\nflow         {} after {} steps ({} rejected), t = {:.6e}",
        outcome.status, state.steps, state.rejected, state.t
    );
    let _ = writeln!(
        summary,
        "|tau|_inf    {first:.6e} -> {:.6e} (reduction {:.3e})",
        state.tension_norm,
        first / state.tension_norm
    );
    if let Some(m) = state.monitors.last() {
        let _ = writeln!(summary, "|H|_inf      {:.6e}", m.norm_h);
    }
    push_certificate(summary, &outcome.certificate);
    Ok(())
}

fn curvature(
    cfg: &ScenarioConfig,
    r: &Resolved,
    out: &mut Output,
    summary: &mut String,
) -> Result<(), CliError> {
    let map = r.sample()?;
    let grid = map.grid();
    let step = minmap_core::surface::CUSTOM_CURVATURE_STEP;
    let mut w = out.csv("curvature.csv", "curvature")?;
    w.write_record([
        "i",
        "j",
        "x",
        "y",
        "f1",
        "f2",
        "k_source",
        "k_source_fd",
        "k_target",
        "k_target_fd",
    ])?;
    let (mut dev_m, mut dev_n) = (0.0f64, 0.0f64);
    for (i, j) in grid.points() {
        let [x, y] = grid.point(i, j);
        let [f1, f2] = map.value(i, j);
        let km = r.source.gauss_curvature(x, y)?;
        let km_fd = r.source.gauss_curvature_fd(x, y, step)?;
        let kn = r.target.gauss_curvature(f1, f2)?;
        let kn_fd = r.target.gauss_curvature_fd(f1, f2, step)?;
        dev_m = dev_m.max((km - km_fd).abs());
        dev_n = dev_n.max((kn - kn_fd).abs());
        w.write_record([
            i.to_string(),
            j.to_string(),
            num(x),
            num(y),
            num(f1),
            num(f2),
            num(km),
            num(km_fd),
            num(kn),
            num(kn_fd),
        ])?;
    }
    w.flush()?;

    let _ = writeln!(
        summary,
        "\nmax |K - K_fd|  source {dev_m:.3e}  target {dev_n:.3e}"
    );
    if let Some(h) = cfg.hypotheses()? {
        let check = check_map_hypotheses(&map, &h)?;
        let _ = writeln!(
            summary,
            "hypotheses   {} (sigma {}, beta {})",
            if check.ok { "satisfied" } else { "violated" },
            h.sigma,
            h.beta
        );
        let _ = writeln!(
            summary,
            "  min K_M {:.6e}  max K_N {:.6e}  min K_N {:.6e}  violations {}",
            check.min_source,
            check.max_target,
            check.min_target,
            check.violations.len()
        );
    }
    Ok(())
}
