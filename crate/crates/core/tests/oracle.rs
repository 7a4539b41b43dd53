use approx::assert_abs_diff_eq;
use dualmem_core::oracle::{reference_poisson, shooting_branches, shooting_fold};
use dualmem_core::{find_lambda_star, oracle_e, shoot_membrane, solve_poisson_1d};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn shooting_reproduces_closed_form_center_values() {
    for &lam in &[0.3, 1.1] {
        let mut expected: Vec<f64> = oracle_e(lam).iter().map(|b| b.center_value()).collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let found = shooting_branches(lam, 60).unwrap();
        assert_eq!(found.len(), 2, "Lambda {lam}: {found:?}");
        for (f, e) in found.iter().zip(&expected) {
            assert_abs_diff_eq!(*f, *e, epsilon = 1e-9);
        }
        for b in oracle_e(lam) {
            let shot = shoot_membrane(lam, b.center_value()).unwrap();
            assert!(shot.mismatch.abs() <= 1e-8);
        }
    }
}

#[test]
fn no_shooting_roots_beyond_fold() {
    assert!(shooting_branches(1.5, 60).unwrap().is_empty());
}

#[test]
fn shooting_fold_agrees_with_e_equation_fold() {
    let sf = shooting_fold().unwrap();
    let ls = find_lambda_star();
    assert_abs_diff_eq!(sf.lambda_star, ls.lambda_star, epsilon = 1e-3);
    assert!(sf.center_value > -1.0 && sf.center_value < 0.0);
}

#[test]
fn reference_poisson_linear_forcing_gap_is_second_order() {
    // Coarse and refined grids both solve w'' = x exactly at their nodes.
    let n = 21;
    let refd = reference_poisson(|x| x, n, (0.0, 0.0), 8).unwrap();
    let q: Vec<f64> = (0..n).map(|i| dualmem_core::grid::x_node(n, i)).collect();
    let coarse = solve_poisson_1d(&q, 0.0, 0.0).unwrap();
    for (a, b) in refd.iter().zip(&coarse) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-14);
    }
}

#[test]
fn random_smooth_forcing_converges_at_second_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let (a, b, c): (f64, f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..3.0), rng.gen_range(-1.0..1.0));
        let q = move |x: f64| a * (b * x).sin() + c * x * x;
        let err = |n: usize| {
            let exact = reference_poisson(q, n, (0.1, -0.2), 16).unwrap();
            let qs: Vec<f64> = (0..n).map(|i| q(dualmem_core::grid::x_node(n, i))).collect();
            let w = solve_poisson_1d(&qs, 0.1, -0.2).unwrap();
            w.iter().zip(&exact).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let ratio = err(17) / err(33);
        assert!(ratio > 3.5 && ratio < 4.6, "ratio {ratio}");
    }
}
