//! The full invariant suite must run green on the builtin webs and on seeded
//! random webs, and fault injection must trip exactly the connection checks
//! that depend on the corrupted Christoffel symbols.

use webgeo::connection::constant_curvature_web;
use webgeo::field::Rect;
use webgeo::verify::{run_verify, VerifyOptions};
use webgeo::web::{bilinear_web, flat_web};

fn assert_all_pass(web: &webgeo::WebSpec, label: &str) {
    for r in run_verify(web, &VerifyOptions::default()) {
        assert!(
            r.pass,
            "{label}: {} failed with residual {:.3e} (threshold {:.0e}) {:?}",
            r.name, r.residual, r.threshold, r.note
        );
    }
}

#[test]
fn suite_passes_on_flat_web() {
    assert_all_pass(&flat_web(Rect::new(0.0, 1.0, -1.0, 2.0).unwrap()), "flat");
}

#[test]
fn suite_passes_on_constant_curvature_webs() {
    assert_all_pass(&constant_curvature_web(1.0, Rect::unit()), "C=1");
    assert_all_pass(&constant_curvature_web(-2.0, Rect::unit()), "C=-2");
}

#[test]
fn suite_passes_on_bilinear_web() {
    assert_all_pass(&bilinear_web(Rect::unit()).unwrap(), "bilinear");
}

#[test]
fn suite_passes_on_random_webs() {
    use rand::SeedableRng;
    let mut rng = rand::rngs::StdRng::seed_from_u64(1234);
    for i in 0..3 {
        let web = webgeo::sample::random_web(&mut rng);
        assert_all_pass(&web, &format!("random web {i}"));
    }
}

#[test]
fn fault_injection_trips_skewness_and_geodesy() {
    let web = constant_curvature_web(1.0, Rect::unit());
    let opts = VerifyOptions {
        seed: 42,
        perturb_gamma: 0.1,
    };
    let recs = run_verify(&web, &opts);
    let failed: Vec<&str> = recs
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.name.as_str())
        .collect();
    assert!(
        failed.contains(&"conn.ricci_skewness"),
        "failed set: {failed:?}"
    );
    assert!(
        failed.contains(&"conn.geodesy_cross"),
        "failed set: {failed:?}"
    );
    assert!(
        failed.contains(&"conn.geodesy_factor"),
        "failed set: {failed:?}"
    );
    // the corrupted connection must also be rejected by the reconstruction
    assert!(
        failed.contains(&"conn.reconstruction_autoparallel"),
        "failed set: {failed:?}"
    );
    // web-intrinsic checks stay green: the fault is in the connection only
    for name in ["conn.rho_two_path", "ode.leaf_geodesic", "dual.k0_units"] {
        assert!(
            recs.iter().find(|r| r.name == name).unwrap().pass,
            "{name} should not be affected"
        );
    }
}
