use obstacle_control::grid::{make_grid, Field, LinearOperator};
use obstacle_control::linsolve::{self, SolveError};
use proptest::prelude::*;

fn shifted(dim: usize, n: usize, shift: &[f64]) -> LinearOperator {
    let g = make_grid(dim, n).unwrap();
    let d = Field::new(g, shift[..g.len()].to_vec()).unwrap();
    LinearOperator::neg_laplacian(g).scaled(0.5).with_shift(&d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recovers_random_solutions(
        dim in 1usize..=2,
        n in 1usize..=12,
        shift in proptest::collection::vec(0.0f64..1e4, 144),
        xs in proptest::collection::vec(-10.0f64..10.0, 144),
    ) {
        let op = shifted(dim, n, &shift);
        let g = *op.grid();
        let x_star = Field::new(g, xs[..g.len()].to_vec()).unwrap();
        let b = op.apply(&x_star);
        let x = linsolve::solve(&op, &b, 1e-13, linsolve::default_max_iter(&op)).unwrap();
        prop_assert!((&x - &x_star).sup_norm() <= 1e-8 * x_star.sup_norm().max(1.0));
    }

    #[test]
    fn banded_and_cg_agree(
        n in 1usize..=60,
        shift in proptest::collection::vec(0.0f64..1e5, 60),
        bs in proptest::collection::vec(-5.0f64..5.0, 60),
    ) {
        let op = shifted(1, n, &shift);
        let b = Field::new(*op.grid(), bs[..n].to_vec()).unwrap();
        let direct = linsolve::solve_banded(&op, &b, 1e-13).unwrap();
        let cg = linsolve::solve_cg(&op, &b, 1e-14, 10_000).unwrap();
        prop_assert!((&direct - &cg).sup_norm() <= 1e-8 * direct.sup_norm().max(1.0));
    }

    #[test]
    fn indefinite_2d_paths_agree(
        n in 2usize..=8,
        shift in proptest::collection::vec(-4e3f64..1e3, 64),
        bs in proptest::collection::vec(-1.0f64..1.0, 64),
    ) {
        let op = shifted(2, n, &shift);
        let b = Field::new(*op.grid(), bs[..n * n].to_vec()).unwrap();
        // random shifts may land on (nearly) singular operators; only compare
        // when the pivoted factorization accepts the system
        if let Ok(lu) = linsolve::solve_band_lu(&op, &b, 1e-12) {
            let x = linsolve::solve(&op, &b, 1e-12, 10_000).unwrap();
            prop_assert!((&op.apply(&x) - &b).euclid_norm() <= 1e-9 * b.euclid_norm().max(1.0));
            if let Ok(ldlt) = linsolve::solve_band_ldlt(&op, &b, 1e-12) {
                prop_assert!((&op.apply(&ldlt) - &b).euclid_norm() <= 1e-9 * b.euclid_norm().max(1.0));
            }
            prop_assert!((&op.apply(&lu) - &b).euclid_norm() <= 1e-9 * b.euclid_norm().max(1.0));
        }
    }
}

#[test]
fn zero_pivot_is_singular_on_every_path() {
    for dim in [1, 2] {
        let g = make_grid(dim, 1).unwrap();
        let a = LinearOperator::neg_laplacian(g);
        let op = a.clone().with_shift(&Field::constant(g, -a.diag_entry(0)));
        let b = Field::constant(g, 1.0);
        assert!(matches!(
            linsolve::solve(&op, &b, 1e-10, 100),
            Err(SolveError::Singular(_))
        ));
    }
}
