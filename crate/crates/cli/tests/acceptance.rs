//! Acceptance suite: one test per release criterion. Each prints its
//! pass/fail line; `cargo test --test acceptance` is the release gate.

use kickwave::acceptance::run_criterion;

fn check(id: u32) {
    let scratch = tempfile::tempdir().expect("scratch dir");
    let r = run_criterion(id, scratch.path());
    println!("{}", r.line());
    assert!(r.pass, "{}", r.line());
}

#[test]
fn criterion_01_envelope_oracle() {
    check(1);
}

#[test]
fn criterion_02_exhaustive_path_oracle() {
    check(2);
}

#[test]
fn criterion_03_zero_forcing_analytics() {
    check(3);
}

#[test]
fn criterion_04_shear_identities() {
    check(4);
}

#[test]
fn criterion_05_quadratic_shape_law() {
    check(5);
}

#[test]
fn criterion_06_cocycle_and_slope_invariance() {
    check(6);
}

#[test]
fn criterion_07_minimizer_properties() {
    check(7);
}

#[test]
fn criterion_08_concentration_and_excursion_tails() {
    check(8);
}

#[test]
fn criterion_09_busemann_algebra() {
    check(9);
}

#[test]
fn criterion_10_global_solution_fixed_point() {
    check(10);
}

#[test]
fn criterion_11_pullback_attraction() {
    check(11);
}

#[test]
fn criterion_12_metric_module() {
    check(12);
}

#[test]
fn criterion_13_reproducibility_across_workers() {
    check(13);
}
