use proptest::prelude::*;
use sgc_core::experiment::{convergence_order, Cell, Table};
use sgc_core::hermite::gaussian_moment;
use sgc_core::recursive::{build_cons_basis, run_recursive_moments, LinearSpde};
use sgc_core::sde::{ModelSpec, SchemeEndpointMap, SchemeKind};
use sgc_core::sparse_grid::{build_sparse_grid, sg_integrate, tensor_rule};
use sgc_core::spectral::AdvDiffParams;
use sgc_core::weak::{weak_expectation_sgc, Payoff, WeakTarget};

/// Exponent vectors with total degree at most `2L - 1`.
fn monomial() -> impl Strategy<Value = (usize, usize, Vec<u32>)> {
    (1usize..=4, 1usize..=8).prop_flat_map(|(level, dim)| {
        let budget = 2 * level as u32 - 1;
        proptest::collection::vec(0u32..=budget, dim)
            .prop_filter("total degree", move |p| p.iter().sum::<u32>() <= budget)
            .prop_map(move |p| (level, dim, p))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sparse_grid_is_exact_for_total_degree((level, dim, powers) in monomial()) {
        let grid = build_sparse_grid(level, dim).unwrap();
        let got = sg_integrate(&grid, |y| {
            y.iter().zip(&powers).map(|(v, p)| v.powi(*p as i32)).product()
        })
        .unwrap();
        let exact: f64 = powers.iter().map(|p| gaussian_moment(*p)).product();
        let tol = 1e-10 * exact.abs().max(1.0);
        prop_assert!((got - exact).abs() <= tol, "{got} vs {exact}");
    }

    #[test]
    fn csv_round_trip_is_bit_exact(values in proptest::collection::vec(any::<f64>(), 1..40)) {
        let mut table = Table::new("t", &["label", "a", "b"]);
        for pair in values.chunks(2) {
            let b = pair.get(1).copied();
            table.push(vec![Cell::Text("row".into()), Cell::Num(pair[0]), b.into()]);
        }
        let back = Table::from_csv("t", &table.to_csv()).unwrap();
        prop_assert_eq!(back.rows.len(), table.rows.len());
        for (r, s) in back.rows.iter().zip(&table.rows) {
            for (x, y) in r.iter().zip(s) {
                match (x, y) {
                    (Cell::Num(a), Cell::Num(b)) => prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())),
                    _ => prop_assert_eq!(x, y),
                }
            }
        }
    }

    #[test]
    fn power_law_errors_give_their_exponent(c in 0.01f64..100.0, rate in 0.5f64..3.0, h0 in 0.01f64..1.0) {
        let steps: Vec<f64> = (0..4).map(|k| h0 / 2f64.powi(k)).collect();
        let errors: Vec<f64> = steps.iter().map(|h| c * h.powf(rate)).collect();
        let orders = convergence_order(&errors, &steps).unwrap();
        prop_assert!(orders[0].is_none());
        for o in &orders[1..] {
            prop_assert!((o.unwrap() - rate).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_payoff_survives_every_level(level in 1usize..=4, lambda in -1.0f64..1.0, value in -10.0f64..10.0) {
        let spec = ModelSpec::Linear { lambda, eps: 0.7 };
        let map = SchemeEndpointMap::new(spec.model(), vec![1.0], 0.0, 0.25, 4, SchemeKind::Euler).unwrap();
        let target = WeakTarget::new(map, Payoff::Const(value));
        let got = weak_expectation_sgc(&target, level).unwrap()[0];
        prop_assert!((got - value).abs() <= 1e-12 * value.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn second_moment_matrix_stays_symmetric(
        eps in 0.05f64..0.5,
        sigma in 0.0f64..0.8,
        beta in -0.3f64..0.3,
    ) {
        let spde = LinearSpde::homogeneous(AdvDiffParams { eps, sigma, beta });
        let basis = build_cons_basis(6, 16).unwrap();
        let init: Vec<f64> = basis.points().iter().map(|x| x.sin() + 0.3 * (2.0 * x).cos()).collect();
        let run = run_recursive_moments(&spde, &basis, 0.1, 0.5, &tensor_rule(3, 1).unwrap(), &init).unwrap();
        let c = &run.state.second;
        let scale = c.amax().max(1.0);
        prop_assert!((c - c.transpose()).amax() <= 1e-11 * scale);
        for i in 0..c.nrows() {
            prop_assert!(c[(i, i)] >= -1e-12);
        }
    }
}
