mod common;

use nalgebra::DMatrix;
use posmap_core::sdp::{solve, ConeBlock, SdpOptions, SdpProblem, SdpStatus};

fn e11() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])
}

#[test]
fn trace_minimization() {
    let prob =
        SdpProblem::from_primal_standard(&[ConeBlock::Psd(2)], &[DMatrix::identity(2, 2)], &[(vec![e11()], 1.0)])
            .unwrap();
    let out = solve(&prob, &SdpOptions::default());
    assert_eq!(out.status, SdpStatus::Optimal);
    assert!((out.primal_objective - 1.0).abs() < 1e-7);
    // x = (X11, X12, X22)
    assert!((out.x[0] - 1.0).abs() < 1e-6 && out.x[1].abs() < 1e-6 && out.x[2].abs() < 1e-6);
}

#[test]
fn negative_trace_is_infeasible() {
    let prob = common::trivially_infeasible_sdp();
    let out = solve(&prob, &SdpOptions::default());
    assert_eq!(out.status, SdpStatus::PrimalInfeasible);
    let ray = out.certificate.expect("ray");
    let check = ray.verify(&prob);
    assert!(check.passes, "{check:?}");
}

#[test]
fn planted_optima_are_recovered() {
    for seed in 0..25 {
        let (prob, value) = common::planted_sdp(seed);
        let out = solve(&prob, &SdpOptions::default());
        assert_eq!(out.status, SdpStatus::Optimal, "seed {seed}");
        assert!(
            (out.primal_objective - value).abs() <= 1e-7 * (1.0 + value.abs()),
            "seed {seed}: {} vs {value}",
            out.primal_objective
        );
    }
}
