//! The four subcommands: analyze, geodesics, dual, verify.

use rayon::prelude::*;
use serde::Serialize;

use webgeo::connection::{curvature_rho, ricci_general, web_connection, wong_normal_form};
use webgeo::duality::{dual_forward, dual_solve, k0_web};
use webgeo::ode::{geodesic_ode, integrate_geodesic};
use webgeo::verify::{run_verify, CheckRecord, VerifyOptions};
use webgeo::web::WebSpec;

use crate::config::{DualGrid, JobConfig};
use crate::output::OutputContext;

/// Exit codes are a stable contract: 0 success, 1 verification failure,
/// 2 config error (handled in main), 3 evaluation error.
pub enum Outcome {
    Success,
    VerificationFailure,
    EvaluationError(String),
}

impl Outcome {
    pub fn code(&self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::VerificationFailure => 1,
            Outcome::EvaluationError(_) => 3,
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

// ---- analyze ----------------------------------------------------------------

#[derive(Serialize)]
struct AnalyzeSummary {
    grid: usize,
    max_rho_disagreement: f64,
    max_skew_residual: f64,
    max_wong_mismatch: f64,
    checks_pass: bool,
    files: Vec<String>,
}

pub fn cmd_analyze(cfg: &JobConfig, out: &OutputContext) -> Outcome {
    let web = match cfg.build_web() {
        Ok(w) => w,
        Err(e) => return Outcome::EvaluationError(e.to_string()),
    };
    let conn = match web_connection(&web) {
        Ok(c) => c,
        Err(e) => return Outcome::EvaluationError(e.to_string()),
    };

    let n = cfg.curvature_grid;
    let pts = web.domain().grid(n);

    struct Row {
        x: f64,
        y: f64,
        gxxx: f64,
        gyyy: f64,
        rho_direct: f64,
        rho_compact: f64,
        skew: f64,
        f: f64,
        f_x: f64,
        f_y: f64,
    }

    let rows: Result<Vec<Row>, webgeo::Error> = pts
        .par_iter()
        .map(|&(x, y)| {
            let g = conn.christoffels(x, y)?;
            let rho = curvature_rho(&web, (x, y))?;
            let ric = ricci_general(&conn, (x, y), cfg.ricci_fd_step)?;
            let skew = ric[0][0]
                .abs()
                .max(ric[1][1].abs())
                .max((ric[0][1] + ric[1][0]).abs());
            let wong = wong_normal_form(&web, (x, y))?;
            Ok(Row {
                x,
                y,
                gxxx: g[0][0],
                gyyy: g[1][2],
                rho_direct: rho.direct,
                rho_compact: rho.compact,
                skew,
                f: wong.f,
                f_x: wong.f_x,
                f_y: wong.f_y,
            })
        })
        .collect();
    let rows = match rows {
        Ok(r) => r,
        Err(e) => return Outcome::EvaluationError(e.to_string()),
    };

    let max_disagreement = rows
        .iter()
        .map(|r| {
            (r.rho_direct - r.rho_compact).abs()
                / r.rho_direct.abs().max(r.rho_compact.abs()).max(1.0)
        })
        .fold(0.0f64, f64::max);
    let max_skew = rows.iter().map(|r| r.skew).fold(0.0f64, f64::max);
    let max_wong = rows
        .iter()
        .map(|r| (r.gxxx + r.f_x).abs().max((r.gyyy - r.f_y).abs()))
        .fold(0.0f64, f64::max);
    let pass = max_disagreement <= 1e-9 && max_skew <= 1e-6 && max_wong <= 1e-10;

    let mut files = Vec::new();
    let mut emit = |name: &str, cols: &[&str], data: Vec<Vec<f64>>| -> std::io::Result<()> {
        if cfg.format.csv() {
            let p = out.write_csv(name, cols, &data)?;
            files.push(p.display().to_string());
        }
        Ok(())
    };
    let io = (|| -> std::io::Result<()> {
        emit(
            "connection.csv",
            &["x", "y", "gamma_x_xx", "gamma_y_yy"],
            rows.iter()
                .map(|r| vec![r.x, r.y, r.gxxx, r.gyyy])
                .collect(),
        )?;
        emit(
            "curvature.csv",
            &["x", "y", "rho_direct", "rho_compact"],
            rows.iter()
                .map(|r| vec![r.x, r.y, r.rho_direct, r.rho_compact])
                .collect(),
        )?;
        emit(
            "ricci.csv",
            &["x", "y", "skew_residual"],
            rows.iter().map(|r| vec![r.x, r.y, r.skew]).collect(),
        )?;
        emit(
            "wong.csv",
            &["x", "y", "f", "f_x", "f_y"],
            rows.iter()
                .map(|r| vec![r.x, r.y, r.f, r.f_x, r.f_y])
                .collect(),
        )?;
        Ok(())
    })();
    if let Err(e) = io {
        return Outcome::EvaluationError(format!("io error: {e}"));
    }

    let summary = AnalyzeSummary {
        grid: n,
        max_rho_disagreement: max_disagreement,
        max_skew_residual: max_skew,
        max_wong_mismatch: max_wong,
        checks_pass: pass,
        files: files.clone(),
    };
    if cfg.format.json() {
        if let Err(e) = out.write_json("analyze.json", &summary) {
            return Outcome::EvaluationError(format!("io error: {e}"));
        }
        // connection report: Gamma values at the grid points
        #[derive(Serialize)]
        struct GammaPoint {
            x: f64,
            y: f64,
            gamma_x_xx: f64,
            gamma_y_yy: f64,
        }
        #[derive(Serialize)]
        struct ConnectionReport {
            grid: usize,
            gammas: Vec<GammaPoint>,
        }
        let report = ConnectionReport {
            grid: n,
            gammas: rows
                .iter()
                .map(|r| GammaPoint {
                    x: r.x,
                    y: r.y,
                    gamma_x_xx: r.gxxx,
                    gamma_y_yy: r.gyyy,
                })
                .collect(),
        };
        if let Err(e) = out.write_json("connection.json", &report) {
            return Outcome::EvaluationError(format!("io error: {e}"));
        }
    }
    println!(
        "analyze: grid {n}x{n}, max rho disagreement {max_disagreement:.3e}, \
         max skew residual {max_skew:.3e}, max Wong mismatch {max_wong:.3e} -> {}",
        if pass { "PASS" } else { "FAIL" }
    );
    if pass {
        Outcome::Success
    } else {
        Outcome::VerificationFailure
    }
}

// ---- geodesics ---------------------------------------------------------------

#[derive(Serialize)]
struct CurveRecord {
    index: usize,
    ic: [f64; 3],
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_leaf_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    leaf_t: Option<f64>,
}

#[derive(Serialize)]
struct GeodesicsSummary {
    curves: Vec<CurveRecord>,
    succeeded: usize,
    failed: usize,
}

pub fn cmd_geodesics(cfg: &JobConfig, out: &OutputContext, extra_ics: &[[f64; 3]]) -> Outcome {
    let web = match cfg.build_web() {
        Ok(w) => w,
        Err(e) => return Outcome::EvaluationError(e.to_string()),
    };
    let ode = match geodesic_ode(&web) {
        Ok(o) => o,
        Err(e) => return Outcome::EvaluationError(e.to_string()),
    };
    let mut ics = cfg.geodesic_ics.clone();
    ics.extend_from_slice(extra_ics);
    if ics.is_empty() {
        // a default fan through the domain center
        let (cx, cy) = web.domain().center();
        for p in [-0.5, -0.2, 0.0, 0.2, 0.5] {
            ics.push([cx - 0.3 * web.domain().width(), cy, p]);
        }
    }
    let x_end = cfg
        .geodesic_x_end
        .unwrap_or(web.domain().x_max - 0.02 * web.domain().width());
    let ctrl = cfg.step_control();

    #[derive(Serialize)]
    struct LeafExport {
        index: usize,
        t: f64,
        /// Polyline as `[t, x, y]` rows.
        points: Vec<[f64; 3]>,
    }
    let mut leaves: Vec<LeafExport> = Vec::new();

    let mut records = Vec::new();
    for (i, &[x0, y0, p0]) in ics.iter().enumerate() {
        match integrate_geodesic(&ode, x0, y0, p0, x_end, &ctrl) {
            Err(e) => records.push(CurveRecord {
                index: i,
                ic: [x0, y0, p0],
                status: "error".into(),
                error: Some(e.to_string()),
                points: 0,
                max_leaf_defect: None,
                leaf_t: None,
            }),
            Ok(curve) => {
                // the initial slope always matches the leaf of
                // t = -(w_y/w_x) p0; cross-check against it when it stays
                // integrable
                let leaf_t = web
                    .pair_values(x0, y0)
                    .map(|(u, v)| -(v / u) * p0 * web.t2().affine_value().unwrap_or(1.0));
                let mut max_defect: Option<f64> = None;
                let mut rows = Vec::with_capacity(curve.points.len());
                for &(x, y, p) in &curve.points {
                    let mut row = vec![x, y, p];
                    if let Ok(t) = leaf_t {
                        if let Ok(ly) = web.leaf_through(t, (x0, y0), x, &ctrl) {
                            let d = (y - ly).abs();
                            max_defect = Some(max_defect.unwrap_or(0.0).max(d));
                            row.push(d);
                        }
                    }
                    rows.push(row);
                }
                let cols: &[&str] = if max_defect.is_some() {
                    &["x", "y", "p", "leaf_defect"]
                } else {
                    &["x", "y", "p"]
                };
                // rows may be ragged if a leaf comparison failed mid-curve
                let width = cols.len();
                let rows: Vec<Vec<f64>> = rows
                    .into_iter()
                    .map(|mut r| {
                        while r.len() < width {
                            r.push(f64::NAN);
                        }
                        r
                    })
                    .collect();
                if cfg.format.csv() {
                    if let Err(e) = out.write_csv(&format!("geodesic_{i:02}.csv"), cols, &rows) {
                        return Outcome::EvaluationError(format!("io error: {e}"));
                    }
                }
                // the matching leaf polyline, exported as (t, x, y) rows
                if let Ok(t) = leaf_t {
                    if let Ok(pts) = web.leaf_polyline(t, (x0, y0), x_end, &ctrl) {
                        let triples: Vec<[f64; 3]> = pts.iter().map(|&(x, y)| [t, x, y]).collect();
                        if cfg.format.csv() {
                            let leaf_rows: Vec<Vec<f64>> =
                                triples.iter().map(|r| r.to_vec()).collect();
                            if let Err(e) = out.write_csv(
                                &format!("leaf_{i:02}.csv"),
                                &["t", "x", "y"],
                                &leaf_rows,
                            ) {
                                return Outcome::EvaluationError(format!("io error: {e}"));
                            }
                        }
                        leaves.push(LeafExport {
                            index: i,
                            t,
                            points: triples,
                        });
                    }
                }
                records.push(CurveRecord {
                    index: i,
                    ic: [x0, y0, p0],
                    status: "ok".into(),
                    error: None,
                    points: rows.len(),
                    max_leaf_defect: max_defect,
                    leaf_t: leaf_t.ok(),
                });
            }
        }
    }

    let succeeded = records.iter().filter(|r| r.status == "ok").count();
    let failed = records.len() - succeeded;
    let summary = GeodesicsSummary {
        curves: records,
        succeeded,
        failed,
    };
    if cfg.format.json() {
        if let Err(e) = out.write_json("geodesics.json", &summary) {
            return Outcome::EvaluationError(format!("io error: {e}"));
        }
        if !leaves.is_empty() {
            #[derive(Serialize)]
            struct LeavesFile {
                leaves: Vec<LeafExport>,
            }
            if let Err(e) = out.write_json("leaves.json", &LeavesFile { leaves }) {
                return Outcome::EvaluationError(format!("io error: {e}"));
            }
        }
    }
    println!("geodesics: {succeeded} integrated, {failed} failed");
    if succeeded > 0 {
        Outcome::Success
    } else {
        Outcome::EvaluationError("no geodesic could be integrated".into())
    }
}

// ---- dual ---------------------------------------------------------------------

#[derive(Serialize)]
struct DualSummary {
    mode: String,
    points: usize,
    failures: usize,
    max_abs_f: f64,
    max_abs_k0: f64,
    mean_abs_k0: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    failure_examples: Vec<String>,
}

pub fn cmd_dual(cfg: &JobConfig, out: &OutputContext) -> Outcome {
    let web = match cfg.build_web() {
        Ok(w) => w,
        Err(e) => return Outcome::EvaluationError(e.to_string()),
    };
    let dc = cfg.dual_controls(&web);

    // assemble the query list: (t, z, p, warm-start)
    type Query = (f64, f64, f64, Option<[f64; 2]>);
    let queries: Vec<Result<Query, String>> = match &cfg.dual_grid {
        DualGrid::Forward { t, x, y } => {
            let mut q = Vec::new();
            for &tv in &linspace(t.0, t.1, t.2) {
                for &xv in &linspace(x.0, x.1, x.2) {
                    for &yv in &linspace(y.0, y.1, y.2) {
                        q.push(
                            dual_forward(&web, tv, (xv, yv), &dc)
                                .map(|(z, p)| (tv, z, p, Some([xv, yv])))
                                .map_err(|e| {
                                    format!("forward map at (t={tv}, x={xv}, y={yv}): {e}")
                                }),
                        );
                    }
                }
            }
            q
        }
        DualGrid::Box { t, z, p } => {
            let mut q = Vec::new();
            for &tv in &linspace(t.0, t.1, t.2) {
                for &zv in &linspace(z.0, z.1, z.2) {
                    for &pv in &linspace(p.0, p.1, p.2) {
                        q.push(Ok((tv, zv, pv, None)));
                    }
                }
            }
            q
        }
    };

    let results: Vec<Result<[f64; 5], String>> = queries
        .par_iter()
        .map(|q| {
            let (t, z, p, guess) = q.clone()?;
            let (_, f) = dual_solve(&web, t, z, p, &dc, guess)
                .map_err(|e| format!("elimination at (t={t}, z={z}, p={p}): {e}"))?;
            let (k, _) = k0_web(&web, &dc, t, z, p, guess)
                .map_err(|e| format!("K0 at (t={t}, z={z}, p={p}): {e}"))?;
            Ok([t, z, p, f, k])
        })
        .collect();

    let rows: Vec<Vec<f64>> = results
        .iter()
        .filter_map(|r| r.as_ref().ok().map(|v| v.to_vec()))
        .collect();
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();

    if rows.is_empty() {
        return Outcome::EvaluationError(format!(
            "no dual grid point was solvable ({} failures; first: {})",
            failures.len(),
            failures.first().map(|s| s.as_str()).unwrap_or("none")
        ));
    }

    let max_abs_f = rows.iter().map(|r| r[3].abs()).fold(0.0f64, f64::max);
    let max_abs_k0 = rows.iter().map(|r| r[4].abs()).fold(0.0f64, f64::max);
    let mean_abs_k0 = rows.iter().map(|r| r[4].abs()).sum::<f64>() / rows.len() as f64;

    if cfg.format.csv() {
        if let Err(e) = out.write_csv("dual.csv", &["t", "z", "p", "f", "k0"], &rows) {
            return Outcome::EvaluationError(format!("io error: {e}"));
        }
    }
    let summary = DualSummary {
        mode: match cfg.dual_grid {
            DualGrid::Forward { .. } => "forward".into(),
            DualGrid::Box { .. } => "box".into(),
        },
        points: rows.len(),
        failures: failures.len(),
        max_abs_f,
        max_abs_k0,
        mean_abs_k0,
        failure_examples: failures.iter().take(5).map(|s| s.to_string()).collect(),
    };
    if cfg.format.json() {
        if let Err(e) = out.write_json("dual.json", &summary) {
            return Outcome::EvaluationError(format!("io error: {e}"));
        }
    }
    println!(
        "dual: {} points ({} failures), max|F|={max_abs_f:.3e}, max|K0|={max_abs_k0:.3e}, \
         mean|K0|={mean_abs_k0:.3e}",
        rows.len(),
        failures.len()
    );
    Outcome::Success
}

// ---- verify -------------------------------------------------------------------

#[derive(Serialize)]
struct VerifySummary {
    web: String,
    perturb_gamma: f64,
    records: Vec<CheckRecord>,
    all_pass: bool,
}

pub fn cmd_verify(cfg: &JobConfig, out: &OutputContext, perturb_gamma: f64) -> Outcome {
    let web = match cfg.build_web() {
        Ok(w) => w,
        Err(e) => return Outcome::EvaluationError(e.to_string()),
    };
    let opts = VerifyOptions {
        seed: cfg.seed,
        perturb_gamma,
    };
    let records = run_verify(&web, &opts);
    let all_pass = records.iter().all(|r| r.pass);
    for r in &records {
        println!(
            "{:<34} {:<10} residual {:>12.4e}  threshold {:>8.1e}  {}{}",
            r.name,
            format!("[{}]", r.module),
            r.residual,
            r.threshold,
            if r.pass { "pass" } else { "FAIL" },
            r.note
                .as_deref()
                .map(|n| format!("  ({n})"))
                .unwrap_or_default()
        );
    }
    let summary = VerifySummary {
        web: describe_web(&web, cfg),
        perturb_gamma,
        records,
        all_pass,
    };
    if cfg.format.json() {
        if let Err(e) = out.write_json("verify.json", &summary) {
            return Outcome::EvaluationError(format!("io error: {e}"));
        }
    }
    println!("verify: {}", if all_pass { "ALL PASS" } else { "FAILURES" });
    if all_pass {
        Outcome::Success
    } else {
        Outcome::VerificationFailure
    }
}

fn describe_web(web: &WebSpec, cfg: &JobConfig) -> String {
    let d = web.domain();
    format!(
        "{:?} on [{}, {}] x [{}, {}]",
        cfg.source, d.x_min, d.x_max, d.y_min, d.y_max
    )
}
