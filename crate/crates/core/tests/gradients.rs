use pcgc_core::gradient_suite::run_gradient_suite;

#[test]
fn every_differentiable_op_matches_finite_differences() {
    let results = run_gradient_suite(2024).unwrap();
    assert!(results.len() >= 18);
    for r in &results {
        println!("{:<44} coords {:>4}  max rel err {:.3e}", r.name, r.coords_checked, r.max_rel_error);
    }
    for r in &results {
        assert!(r.coords_checked > 0, "{} checked nothing", r.name);
        assert!(r.max_rel_error < 1e-4, "{}: max relative error {:.3e}", r.name, r.max_rel_error);
    }
}
