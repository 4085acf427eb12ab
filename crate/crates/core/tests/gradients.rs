mod common;

use common::*;
use fcsearch::model::Variant;
use fcsearch::store::StoreDims;

const SMALL_DIMS: StoreDims = StoreDims {
    static_dim: 12,
    contextual_dim: 16,
    visual_dim: 20,
};

fn assert_reports(reports: &[GradReport]) {
    for r in reports {
        println!("{:>5}: {:>6} entries, max rel err {:.3e}", r.tensor, r.checked, r.max_rel_err);
    }
    for r in reports {
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }
}

#[test]
fn man_gradients_every_entry() {
    let (model, q, d) = grad_case(grad_hyper(SMALL_DIMS, 6), Variant::Man, 11);
    assert_reports(&check_gradients(&model, &q, &d, 1e-5, all_entries));
}

#[test]
fn ctm_gradients_every_entry() {
    let (model, q, d) = grad_case(grad_hyper(SMALL_DIMS, 6), Variant::Ctm, 12);
    let reports = check_gradients(&model, &q, &d, 1e-5, all_entries);
    assert_reports(&reports);
}

#[test]
fn vmn_gradients_every_entry() {
    let (model, q, d) = grad_case(grad_hyper(SMALL_DIMS, 6), Variant::Vmn, 13);
    let reports = check_gradients(&model, &q, &d, 1e-5, all_entries);
    assert_reports(&reports);
}
