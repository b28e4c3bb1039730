mod support;

use grrnn_core::model::{Axis, VariantKind};
use support::cases::{full_graph_case, gru_case, op_cases, GRAPH_TOLERANCE, OP_TOLERANCE};

#[test]
fn every_engine_op_matches_finite_differences() {
    for (name, r) in op_cases() {
        assert!(r.max_rel_error <= OP_TOLERANCE, "{name}: {r:?}");
    }
}

#[test]
fn gru_step_matches_finite_differences() {
    let r = gru_case();
    assert!(r.max_rel_error <= OP_TOLERANCE, "{r:?}");
}

#[test]
fn full_graph_matches_finite_differences() {
    for (kind, axis) in [(VariantKind::FGRR, Axis::Horizontal), (VariantKind::FRR, Axis::Vertical)] {
        let r = full_graph_case(kind, axis);
        assert!(r.max_rel_error <= GRAPH_TOLERANCE, "{}: {r:?}", kind.name());
    }
}
