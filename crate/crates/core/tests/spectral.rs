use std::f64::consts::PI;
use std::sync::Arc;

use ieq_rk::{Field, Grid};
use proptest::prelude::*;

/// Trigonometric polynomial with the given (cos, sin) amplitudes per mode.
fn trig(grid: &Arc<Grid>, coeffs: &[(f64, f64)]) -> Field {
    Field::from_fn(grid, |x, _| {
        coeffs
            .iter()
            .enumerate()
            .map(|(m, &(a, b))| {
                let k = 2.0 * PI * m as f64 / grid.length();
                a * (k * x).cos() + b * (k * x).sin()
            })
            .sum::<f64>()
    })
    .unwrap()
}

fn grid_strategy() -> impl Strategy<Value = Arc<Grid>> {
    (
        1usize..=2,
        prop::sample::select(vec![8usize, 16, 32]),
        1.0f64..20.0,
    )
        .prop_map(|(dim, n, length)| Arc::new(Grid::new(dim, n, length).unwrap()))
}

fn field_on(grid: Arc<Grid>) -> impl Strategy<Value = (Arc<Grid>, Field, Field)> {
    let len = grid.len();
    (
        prop::collection::vec(-1.0f64..1.0, len),
        prop::collection::vec(-1.0f64..1.0, len),
    )
        .prop_map(move |(a, b)| {
            (
                grid.clone(),
                Field::new(&grid, a).unwrap(),
                Field::new(&grid, b).unwrap(),
            )
        })
}

fn pair() -> impl Strategy<Value = (Arc<Grid>, Field, Field)> {
    grid_strategy().prop_flat_map(field_on)
}

proptest! {
    #[test]
    fn laplacian_is_self_adjoint((_g, f, h) in pair()) {
        let lhs = f.laplacian().inner_product(&h).unwrap();
        let rhs = f.inner_product(&h.laplacian()).unwrap();
        let scale = 1.0 + lhs.abs().max(rhs.abs());
        prop_assert!((lhs - rhs).abs() <= 1e-11 * scale, "{lhs} vs {rhs}");
    }

    #[test]
    fn laplacian_is_negative_semidefinite((_g, f, _h) in pair()) {
        let v = f.inner_product(&f.laplacian()).unwrap();
        prop_assert!(v <= 1e-10 * (1.0 + v.abs()), "{v}");
    }

    #[test]
    fn laplacian_has_zero_mean((g, f, _h) in pair()) {
        let lap = f.laplacian();
        prop_assert!(lap.quadrature().abs() <= 1e-10 * (1.0 + lap.max_abs()) * g.domain_measure());
    }

    #[test]
    fn gradient_norm_matches_integration_by_parts((_g, f, _h) in pair()) {
        let by_parts = -f.inner_product(&f.laplacian()).unwrap();
        let direct = f.grad_norm_sq();
        prop_assert!((by_parts - direct).abs() <= 1e-10 * (1.0 + direct), "{direct} vs {by_parts}");
    }

    #[test]
    fn resolved_modes_have_exact_laplacian(
        coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..4),
        length in 1.0f64..10.0,
    ) {
        let g = Arc::new(Grid::new(1, 16, length).unwrap());
        let f = trig(&g, &coeffs);
        let lap = f.laplacian();
        let expected = Field::from_fn(&g, |x, _| {
            coeffs.iter().enumerate().map(|(m, &(a, b))| {
                let k = 2.0 * PI * m as f64 / length;
                -k * k * (a * (k * x).cos() + b * (k * x).sin())
            }).sum()
        }).unwrap();
        let scale = 1.0 + expected.max_abs();
        prop_assert!(lap.max_abs_diff(&expected).unwrap() <= 1e-10 * scale);
    }
}

#[test]
fn constants_are_in_the_kernel() {
    for dim in [1, 2] {
        let g = Arc::new(Grid::new(dim, 16, 3.0).unwrap());
        let c = Field::constant(&g, 0.7).unwrap();
        assert!(c.laplacian().max_abs() <= 1e-15);
        assert_eq!(c.grad_norm_sq(), 0.0);
    }
}

#[test]
fn two_dimensional_product_mode() {
    let g = Arc::new(Grid::new(2, 16, 2.0 * PI).unwrap());
    let f = Field::from_fn(&g, |x, y| (2.0 * x).cos() * (3.0 * y).sin()).unwrap();
    let expected = f.values().iter().map(|v| -13.0 * v).collect::<Vec<_>>();
    let lap = f.laplacian();
    for (a, b) in lap.values().iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-12);
    }
    // ∫∫ |∇f|² = 13 · ∫∫ f² = 13 · π²
    assert!((f.grad_norm_sq() - 13.0 * PI * PI).abs() <= 1e-10);
}
