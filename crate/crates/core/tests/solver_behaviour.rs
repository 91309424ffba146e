use obstacle_control::cli::builtin_problem;
use obstacle_control::cli::BuiltinProblem;
use obstacle_control::grid::{make_grid, Field};
use obstacle_control::solver::{self, Iterate, ProblemData, SolverConfig, Termination};

fn test1d(n: usize) -> ProblemData {
    builtin_problem(BuiltinProblem::Test1d, make_grid(1, n).unwrap()).unwrap()
}

#[test]
fn source_gradient_matches_difference_quotient_when_inactive() {
    let prob = test1d(30);
    let g = prob.grid;
    let cfg = SolverConfig::new(1e-2, 1.0, 1.0);
    let pen = cfg.penalty();
    let (phi, psi) = (Field::constant(g, -100.0), Field::constant(g, 100.0));
    let y = solver::solve_state(&pen, &prob.f, &phi, &psi, 1e-13, 50).unwrap().y;
    let p = solver::adjoint_solve(&cfg, &prob, &y, &phi, &psi).unwrap();
    let v = Field::sample(g, |x, _| (7.0 * x).sin() + x).unwrap();
    let adjoint = g.cell_volume() * p.dot(&v);

    let step = 1e-4;
    let j = |s: f64| {
        let mut f = prob.f.clone();
        f.axpy(s, &v);
        let y = solver::solve_state(&pen, &f, &phi, &psi, 1e-13, 50).unwrap().y;
        solver::tracking_cost(&y, &prob.z)
    };
    let fd = (j(step) - j(-step)) / (2.0 * step);
    assert!((adjoint - fd).abs() <= 1e-6 * adjoint.abs(), "{adjoint} vs {fd}");
}

#[test]
fn logged_eps_n_matches_consecutive_iterates() {
    let prob = test1d(40);
    let init = Iterate::zeros(prob.grid);
    let mut cfg = SolverConfig::new(1e-3, 1.0, 0.75);
    cfg.eps = 1e-300;
    let mut previous = init.clone();
    for k in 1..=6 {
        cfg.max_iter = k;
        let out = solver::run(&cfg, &prob, &init).unwrap();
        assert_eq!(out.termination, Termination::MaxIter);
        assert_eq!(out.log.len(), k);
        let r = out.log[k - 1];
        let expect = (&out.iterate.y - &previous.y)
            .sup_norm()
            .max((&out.iterate.phi - &previous.phi).sup_norm());
        assert_eq!(r.eps_n, expect);
        let j = solver::cost(&cfg, &prob, &out.iterate.y, &out.iterate.phi, &out.iterate.psi);
        assert_eq!(r.cost, j);
        previous = out.iterate;
    }
}

#[test]
fn violation_shrinks_with_delta_on_test1() {
    let prob = test1d(200);
    let init = Iterate::zeros(prob.grid);
    let mut last = f64::INFINITY;
    for delta in [1e-2, 1e-3, 1e-4] {
        let cfg = SolverConfig::new(delta, 1.0, 0.75);
        let out = solver::run(&cfg, &prob, &init).unwrap();
        assert_eq!(out.termination, Termination::Converged, "δ = {delta}");
        let it = &out.iterate;
        let v = solver::obstacle_violation(&it.y, &it.phi, &it.psi);
        assert!(v < last, "δ = {delta}: violation {v} not below {last}");
        last = v;
    }
}

#[test]
fn converged_runs_satisfy_the_stopping_rule() {
    let prob = test1d(50);
    let cfg = SolverConfig::new(1e-2, 1.0, 0.75);
    let out = solver::run(&cfg, &prob, &Iterate::zeros(prob.grid)).unwrap();
    assert_eq!(out.termination, Termination::Converged);
    let n = out.log.len();
    let prev = if n >= 2 { out.log[n - 2].cost } else { out.initial_cost };
    assert!((out.log[n - 1].cost - prev).abs() <= cfg.eps);
    assert!(out.log.iter().enumerate().all(|(k, r)| r.n == k + 1 && r.cost.is_finite()));
}

#[test]
fn lower_control_never_moves() {
    // the multiplier is formed from the previous lower control, which makes
    // that control a root of its own update equation
    let prob = test1d(40);
    let mut init = Iterate::zeros(prob.grid);
    init.phi = Field::sample(prob.grid, |x, _| x * (1.0 - x) - 0.5).unwrap();
    let mut cfg = SolverConfig::new(1e-2, 1.0, 0.75);
    cfg.max_iter = 20;
    let out = solver::run(&cfg, &prob, &init).unwrap();
    assert!((&out.iterate.phi - &init.phi).sup_norm() <= 1e-12);
    assert!(out.log.iter().all(|r| r.res_phi <= 1e-9));
}

#[test]
fn order_and_contact_diagnostics() {
    let g = make_grid(1, 3).unwrap();
    let y = Field::new(g, vec![0.0, 1.0, -1.0]).unwrap();
    let phi = Field::new(g, vec![0.5, 0.0, -1.0]).unwrap();
    let psi = Field::new(g, vec![1.0, 0.5, -2.0]).unwrap();
    assert_eq!(solver::obstacle_violation(&y, &phi, &psi), 1.0);
    assert_eq!(solver::order_violation(&phi, &psi), 1.0);
}
