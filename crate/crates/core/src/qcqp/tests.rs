use super::*;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

#[test]
fn one_dimensional_linear_bound() {
    // minimize x² subject to -x + 1 <= 0.
    let p = Qcqp::new(scalar(1.0), DVector::zeros(1)).with_ineq(scalar(0.0), DVector::from_vec(vec![-1.0]), 1.0);
    let s = solve(&p, &SolverSettings::default(), None).unwrap();
    assert_eq!(s.status, SolverStatus::Optimal, "{s:?}");
    assert!((s.z[0] - 1.0).abs() < 1e-9);
    assert!((s.objective - 1.0).abs() < 1e-9);
}

#[test]
fn disc_projection() {
    // minimize (x-2)² + (y-2)² subject to x² + y² <= 1.
    let p = Qcqp::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-4.0, -4.0]))
        .with_ineq(DMatrix::identity(2, 2), DVector::zeros(2), -1.0);
    let s = solve(&p, &SolverSettings::default(), None).unwrap();
    assert_eq!(s.status, SolverStatus::Optimal);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert!((s.z[0] - r).abs() < 1e-9 && (s.z[1] - r).abs() < 1e-9, "{}", s.z);
    let ind = kkt_residuals(&p, &s.z, &s.lambda, &s.nu);
    assert!(ind.stationarity <= 1e-8 && ind.complementarity <= 1e-8);
}

#[test]
fn infeasible_detected() {
    // x² + y² <= 1 and x >= 3.
    let p = Qcqp::new(DMatrix::identity(2, 2), DVector::zeros(2))
        .with_ineq(DMatrix::identity(2, 2), DVector::zeros(2), -1.0)
        .with_ineq(DMatrix::zeros(2, 2), DVector::from_vec(vec![-1.0, 0.0]), 3.0);
    let s = solve(&p, &SolverSettings::default(), None).unwrap();
    assert_eq!(s.status, SolverStatus::Infeasible);
}

#[test]
fn zero_interior_constraint_is_presolved() {
    // (x - 1)² <= 0 pins x = 1 (no strict interior).
    let p = Qcqp::new(DMatrix::identity(2, 2), DVector::zeros(2)).with_ineq(
        DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]),
        DVector::from_vec(vec![-6.0, 0.0]),
        3.0,
    );
    let s = solve(&p, &SolverSettings::default(), None).unwrap();
    assert_eq!(s.status, SolverStatus::Optimal);
    assert!((s.z[0] - 1.0).abs() < 1e-9 && s.z[1].abs() < 1e-9);
}

#[test]
fn equalities_with_redundant_rows() {
    let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let b = DVector::from_vec(vec![1.0, 1.0, 0.5]);
    let p = Qcqp::new(DMatrix::identity(3, 3), DVector::zeros(3))
        .with_equalities(a, b)
        .with_ineq(DMatrix::identity(3, 3), DVector::zeros(3), -4.0);
    let s = solve(&p, &SolverSettings::default(), None).unwrap();
    assert_eq!(s.status, SolverStatus::Optimal);
    assert!((s.z - DVector::from_vec(vec![0.5, 0.5, 0.5])).amax() < 1e-8);
}

#[test]
fn convex_mode_rejects_indefinite() {
    let p = Qcqp::new(DMatrix::identity(2, 2), DVector::zeros(2)).with_ineq(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        DVector::zeros(2),
        -1.0,
    );
    assert!(matches!(solve(&p, &SolverSettings::default(), None), Err(Error::InvalidInput(_))));
    let settings = SolverSettings {
        mode: SolverMode::NonconvexLocal,
        ..SolverSettings::default()
    };
    let s = solve(&p, &settings, None).unwrap();
    assert!(s.residuals.primal_ineq <= 1e-8);
}

#[test]
fn fast_path_unconstrained_and_equality() {
    let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let c = DVector::from_vec(vec![1.0, -2.0]);
    let p = Qcqp::new(h.clone(), c.clone());
    let s = solve_qp_fast_path(&p, &SolverSettings::default()).unwrap();
    let expected = -(h.clone().try_inverse().unwrap() * &c) * 0.5;
    assert!((s.z - expected).amax() < 1e-12);

    let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let p = Qcqp::new(h, c).with_equalities(a, DVector::from_vec(vec![1.0, 1.0]));
    let s = solve_qp_fast_path(&p, &SolverSettings::default()).unwrap();
    assert_eq!(s.status, SolverStatus::Optimal);
    assert!(s.residuals.primal_eq <= 1e-8);
}

#[test]
fn dump_round_trip() {
    let p = Qcqp::new(DMatrix::identity(2, 2) * 0.1, DVector::from_vec(vec![1.0 / 3.0, -2.0]))
        .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 2.0]), DVector::from_vec(vec![0.7]))
        .with_ineq(DMatrix::identity(2, 2), DVector::from_vec(vec![0.1, 0.2]), -1.0);
    let text = dump(&p);
    let back = load(&text).unwrap();
    assert_eq!(back, p);
    assert!(load("qcqp 2\n").is_err());
}

#[test]
fn gap_history_is_monotone_and_deterministic() {
    let p = Qcqp::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-4.0, -4.0]))
        .with_ineq(DMatrix::identity(2, 2), DVector::zeros(2), -1.0);
    let a = solve(&p, &SolverSettings::default(), None).unwrap();
    let b = solve(&p, &SolverSettings::default(), None).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.z, b.z);
    for w in a.gap_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
}

