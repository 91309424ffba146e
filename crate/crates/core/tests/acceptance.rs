//! One test per acceptance criterion. Each prints a `PASS`/`FAIL` line
//! (straight to stdout, so it shows without `--nocapture`) and then asserts.
//! Criteria run one at a time so their wall-clock budgets are meaningful.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use obstacle_control::cli::{grad_check, oracle_compare, parse_config, run_case, RunConfig};
use obstacle_control::grid::{make_grid, Field, LinearOperator};
use obstacle_control::linsolve::{self, SolveError};
use obstacle_control::oracle;
use obstacle_control::penalty::PenaltyParams;
use obstacle_control::solver::{self, Iterate, ProblemData, SolverConfig, Termination};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

/// Final cost of the default 1D run, pinned to catch regressions.
const TEST1D_FINAL_J: f64 = 2.752_581_258_214_288e-1;

struct Criterion {
    name: &'static str,
    budget: Duration,
    start: Instant,
    failures: Vec<String>,
}

impl Criterion {
    fn start(name: &'static str, budget_s: u64) -> Self {
        Self {
            name,
            budget: Duration::from_secs(budget_s),
            start: Instant::now(),
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn finish(mut self) {
        let elapsed = self.start.elapsed();
        self.check(
            elapsed < self.budget,
            format!("runtime {:.2} s over {} s", elapsed.as_secs_f64(), self.budget.as_secs()),
        );
        let status = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        let mut line = format!("{status} {} ({:.3} s)", self.name, elapsed.as_secs_f64());
        if !self.failures.is_empty() {
            line.push_str(": ");
            line.push_str(&self.failures.join("; "));
        }
        let _ = writeln!(std::io::stdout(), "{line}");
        assert!(self.failures.is_empty(), "{line}");
    }
}

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn config(pairs: &[(&str, &str)], dir: &Path) -> RunConfig {
    let mut o: Vec<(String, String)> = pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    o.push(("output".into(), dir.display().to_string()));
    parse_config(None, &o).unwrap()
}

fn csv_shape(path: &Path) -> (usize, Vec<usize>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().map_or(0, |h| h.split(',').count());
    let widths = lines.map(|l| l.split(',').count()).collect();
    (header, widths)
}

#[test]
fn penalty_suite() {
    let _guard = serial();
    let mut c = Criterion::start("penalty suite", 1);
    let eta = 1e-14;
    for delta in [1.0, 1e-2, 1e-4] {
        let pen = PenaltyParams::new(delta).unwrap();
        let bound = 1e-12 / delta;
        for kink in [0.0, -0.5] {
            let jump = (pen.beta(kink + eta) - pen.beta(kink - eta)).abs();
            c.check(jump <= bound, format!("β jumps {jump:e} at {kink}, δ = {delta}"));
            let jump = (pen.beta_prime(kink + eta) - pen.beta_prime(kink - eta)).abs();
            c.check(jump <= bound, format!("β′ jumps {jump:e} at {kink}, δ = {delta}"));
        }

        let samples: Vec<f64> = (0..10_000).map(|k| -2.0 + 4.0 * k as f64 / 9_999.0).collect();
        let mut prev = f64::NEG_INFINITY;
        for &r in &samples {
            let (b, bp) = (pen.beta(r), pen.beta_prime(r));
            c.check(b <= 0.0 && (r < 0.0 || b == 0.0), format!("β({r}) = {b:e}"));
            c.check(bp >= 0.0, format!("β′({r}) = {bp:e}"));
            c.check(b >= prev, format!("β decreases at {r}"));
            prev = b;
        }

        let step = 1e-6;
        for &r in samples.iter().filter(|r| r.abs() > 1e-3 && (**r + 0.5).abs() > 1e-3) {
            let fd = (pen.beta(r + step) - pen.beta(r - step)) / (2.0 * step);
            let exact = pen.beta_prime(r);
            let ok = if exact == 0.0 {
                fd == 0.0
            } else {
                (fd - exact).abs() / exact.abs() <= 1e-6
            };
            c.check(ok, format!("β′({r}) = {exact:e} but difference quotient {fd:e}, δ = {delta}"));
        }
    }
    c.failures.dedup();
    c.failures.truncate(5);
    c.finish();
}

fn manufactured_error(dim: usize, n: usize) -> f64 {
    use std::f64::consts::PI;
    let g = make_grid(dim, n).unwrap();
    let a = LinearOperator::neg_laplacian(g);
    let k = dim as f64 * PI * PI;
    let exact = Field::sample(g, |x, y| {
        (PI * x).sin() * if dim == 2 { (PI * y).sin() } else { 1.0 }
    })
    .unwrap();
    let f = exact.map(|u| k * u);
    let u = linsolve::solve(&a, &f, 1e-13, linsolve::default_max_iter(&a)).unwrap();
    (&u - &exact).sup_norm()
}

#[test]
fn discretization_order() {
    let _guard = serial();
    let mut c = Criterion::start("discretization order", 10);
    for (dim, ns) in [(1, vec![50, 100, 200]), (2, vec![16, 32])] {
        let errs: Vec<f64> = ns.iter().map(|&n| manufactured_error(dim, n)).collect();
        for (w, pair) in errs.windows(2).zip(ns.windows(2)) {
            let ratio = w[0] / w[1];
            c.check(
                (3.6..=4.4).contains(&ratio),
                format!("{dim}D N = {} → {}: ratio {ratio:.3}", pair[0], pair[1]),
            );
        }
    }
    c.finish();
}

#[test]
fn oracle_equivalence() {
    let _guard = serial();
    let mut c = Criterion::start("PSOR vs active-set enumeration", 5);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let (dim, n) = if rng.gen_bool(0.5) {
            (1, rng.gen_range(1..=oracle::MAX_ENUMERATION_NODES))
        } else {
            (2, rng.gen_range(1..=3))
        };
        let g = make_grid(dim, n).unwrap();
        let a = LinearOperator::neg_laplacian(g);
        let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..g.len()).map(|_| rng.gen_range(lo..hi)).collect() };
        let f = Field::new(g, draw(-40.0, 40.0)).unwrap();
        let phi = Field::new(g, draw(-1.0, 0.2)).unwrap();
        let gap = draw(0.0, 1.0);
        let psi = phi.zip_map(&Field::new(g, gap).unwrap(), |p, d| p + d);

        let exact = oracle::active_set_enumerate(&a, &f, &phi, &psi);
        let psor = oracle::psor_default(&a, &f, &phi, &psi);
        match (exact, psor) {
            (Ok(e), Ok(p)) => {
                let diff = (&e - &p).sup_norm();
                worst = worst.max(diff);
                c.check(diff <= 1e-8, format!("case {case} ({dim}D, N = {n}): differ by {diff:e}"));
            }
            (e, p) => c.check(false, format!("case {case}: {e:?} / {p:?}")),
        }
    }
    let _ = writeln!(std::io::stdout(), "  worst disagreement {worst:e}");
    c.finish();
}

#[test]
fn penalization_consistency() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let mut c = Criterion::start("penalization consistency", 30);
    let cfg = config(&[("problem", "test1d")], dir.path());
    let report = oracle_compare(&cfg, dir.path()).unwrap();
    for r in &report.rows {
        let _ = writeln!(
            std::io::stdout(),
            "  δ = {:e}: |y - y_psor| = {:e}, violation = {:e}",
            r.delta, r.err_sup, r.violation
        );
    }
    c.check(report.rows.len() == 5, format!("{} δ values", report.rows.len()));
    c.check(report.error_nonincreasing(), "error increases along the δ schedule");
    c.check(report.violation_nonincreasing(), "violation increases along the δ schedule");
    let ratio = report.violation_ratio();
    c.check(ratio >= 4.0, format!("violation ratio {ratio:.3} < 4"));
    c.finish();
}

#[test]
fn gradient_check() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let mut c = Criterion::start("adjoint gradient check", 10);
    let base = [("problem", "test1d"), ("n", "20"), ("delta", "1e-2"), ("grad_step", "1e-5"), ("seed", "42")];

    let cfg = config(&base, dir.path());
    let active = grad_check(&cfg, dir.path()).unwrap();
    for g in &active {
        let _ = writeln!(std::io::stdout(), "  contact: rel_err = {:e}", g.rel_err);
        c.check(g.adjoint_value != 0.0, "penalty inactive; the check would be vacuous");
        c.check(g.rel_err <= 1e-4, format!("rel_err {:e} > 1e-4", g.rel_err));
    }

    let mut pairs = base.to_vec();
    pairs.extend([("phi0", "-10"), ("psi0", "10")]);
    let cfg = config(&pairs, dir.path());
    for g in grad_check(&cfg, dir.path()).unwrap() {
        let _ = writeln!(std::io::stdout(), "  inactive: rel_err = {:e}", g.rel_err);
        c.check(g.rel_err <= 1e-10, format!("inactive rel_err {:e} > 1e-10", g.rel_err));
    }
    c.finish();
}

#[test]
fn end_to_end_1d() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let mut c = Criterion::start("end-to-end 1D Test 1", 60);
    let cfg = config(&[("problem", "test1d")], dir.path());
    let report = run_case(&cfg, dir.path()).unwrap();
    let out = &report.outcome;
    let iters = out.log.len();
    let final_j = report.final_cost();
    let _ = writeln!(
        std::io::stdout(),
        "  {} after {iters} iterations, J = {final_j:e}, eps_n = {:e}",
        out.termination,
        report.final_eps_n()
    );

    c.check(out.termination == Termination::Converged, format!("terminated {}", out.termination));
    c.check(iters <= 10_000, format!("{iters} iterations"));
    c.check(out.log.iter().all(|r| r.cost.is_finite()), "non-finite J");
    let last_change = match out.log.as_slice() {
        [.., a, b] => (b.cost - a.cost).abs(),
        [b] => (b.cost - out.initial_cost).abs(),
        [] => f64::NAN,
    };
    c.check(last_change <= 1e-8, format!("|ΔJ| = {last_change:e} at exit"));
    c.check(report.final_eps_n() < 1e-3, format!("eps_n = {:e} at exit", report.final_eps_n()));

    let (h, rows) = csv_shape(&dir.path().join("iterations.csv"));
    c.check(h == 8 && rows.len() == iters && rows.iter().all(|&w| w == 8), "iterations.csv shape");
    let (h, rows) = csv_shape(&dir.path().join("fields.csv"));
    c.check(h == 9 && rows.len() == 200 && rows.iter().all(|&w| w == 9), "fields.csv shape");
    c.check(dir.path().join("summary.txt").is_file(), "summary.txt missing");

    let rel = (final_j - TEST1D_FINAL_J).abs() / TEST1D_FINAL_J;
    c.check(rel <= 1e-9, format!("final J {final_j:e} moved from pin {TEST1D_FINAL_J:e}"));
    c.finish();
}

#[test]
fn end_to_end_2d() {
    let _guard = serial();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut c = Criterion::start("end-to-end 2D Test", 120);
    let mut reports = Vec::new();
    for d in &dirs {
        let cfg = config(&[("problem", "test2d")], d.path());
        reports.push(run_case(&cfg, d.path()).unwrap());
    }
    for r in &reports {
        let out = &r.outcome;
        let _ = writeln!(
            std::io::stdout(),
            "  {} after {} iterations, J = {:e}",
            out.termination,
            out.log.len(),
            r.final_cost()
        );
        c.check(
            matches!(out.termination, Termination::Converged | Termination::MaxIter),
            format!("terminated {} ({:?})", out.termination, out.singular_reason),
        );
    }
    let (h, rows) = csv_shape(&dirs[0].path().join("fields.csv"));
    c.check(h == 10 && rows.len() == 1600 && rows.iter().all(|&w| w == 10), "fields.csv shape");
    for file in ["iterations.csv", "fields.csv"] {
        let a = fs::read(dirs[0].path().join(file)).unwrap();
        let b = fs::read(dirs[1].path().join(file)).unwrap();
        c.check(a == b, format!("{file} differs between runs"));
    }
    c.finish();
}

#[test]
fn singularity_guard() {
    let _guard = serial();
    let mut c = Criterion::start("singularity guard", 1);

    let g = make_grid(2, 1).unwrap();
    let a = LinearOperator::neg_laplacian(g);
    c.check(a.diag_entry(0) == 16.0, "unexpected 1×1 operator");
    let op = a.with_shift(&Field::constant(g, -16.0));
    let solved = linsolve::solve(&op, &Field::constant(g, 1.0), 1e-10, 100);
    c.check(matches!(solved, Err(SolveError::Singular(_))), format!("solve gave {solved:?}"));

    // With f = 0, φ = -10, ψ = 0 and z = -10 the state stays at y = 0, the
    // adjoint is p = 10/16 and the upper-control Jacobian is 16ν - 2p/δ,
    // which vanishes for ν = p/8 (exactly representable).
    let prob = ProblemData::new(Field::zeros(g), Field::constant(g, -10.0)).unwrap();
    let mut cfg = SolverConfig::new(1.0, 10.0 / 16.0 / 8.0, 1.0);
    cfg.max_iter = 5;
    let mut init = Iterate::zeros(g);
    init.phi = Field::constant(g, -10.0);
    match solver::run(&cfg, &prob, &init) {
        Ok(out) => {
            c.check(out.termination == Termination::Singular, format!("terminated {}", out.termination));
            c.check(out.log.is_empty(), "singular step was logged");
            let _ = writeln!(std::io::stdout(), "  {:?}", out.singular_reason);
        }
        Err(e) => c.check(false, format!("run returned error {e}")),
    }
    c.finish();
}
