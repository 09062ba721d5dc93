//! Property tests over the numerical invariants.

use ardi::data::{apply_tcode, standardize, MonthDate, Tcode, TimeSeriesPanel};
use ardi::evaluate::dm_test;
use ardi::kernels::{center_gram, eval_kernel, gram_matrix, max_margin_sum, KernelSpec};
use ardi::linalg::symmetric_eig;
use ndarray::Array2;
use proptest::prelude::*;

fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rbf_kernel_lies_in_unit_interval(x in finite_vec(4), z in finite_vec(4)) {
        let v = eval_kernel(&KernelSpec::rbf(0.3), &x, &z).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0);
    }

    #[test]
    fn kernel_is_symmetric_in_arguments(x in finite_vec(3), z in finite_vec(3)) {
        for spec in [
            KernelSpec::Linear,
            KernelSpec::rbf(0.7),
            KernelSpec::sigmoid(0.4),
            KernelSpec::polynomial(2, 1.0),
        ] {
            let a = eval_kernel(&spec, &x, &z).unwrap();
            let b = eval_kernel(&spec, &z, &x).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn centered_gram_has_zero_margins_and_stays_psd(
        rows in prop::collection::vec(finite_vec(3), 4..9),
        gamma in 0.05..2.0f64,
    ) {
        let t = rows.len();
        let mut x = Array2::zeros((t, 3));
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                x[[i, j]] = v;
            }
        }
        let gram = center_gram(&gram_matrix(&KernelSpec::rbf(gamma), &x).unwrap());
        let scale = gram.values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        prop_assert!(max_margin_sum(&gram.values) <= 1e-8 * scale);
        // PSD up to roundoff for the rbf family
        let eig = symmetric_eig(&gram.values, t).unwrap();
        let lambda_max = eig.eigenvalues[0].max(0.0);
        prop_assert!(eig.eigenvalues[t - 1] >= -1e-8 * lambda_max.max(1e-12));
    }

    #[test]
    fn tcode_leading_missing_matches_contract(values in prop::collection::vec(0.5..50.0f64, 6..20)) {
        for code in 1..=7 {
            let tc = Tcode::from_code(code, "S").unwrap();
            let out = apply_tcode(&values, tc, "S").unwrap();
            prop_assert_eq!(out.len(), values.len());
            let lead = out.iter().take_while(|v| v.is_nan()).count();
            prop_assert_eq!(lead, tc.leading_missing());
            prop_assert!(out[lead..].iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn standardize_is_idempotent_property(
        rows in prop::collection::vec(finite_vec(2), 4..12),
    ) {
        let t = rows.len();
        let mut values = Array2::zeros((t, 2));
        for (i, row) in rows.iter().enumerate() {
            values[[i, 0]] = row[0] + i as f64 * 0.01;
            values[[i, 1]] = row[1] - i as f64 * 0.02;
        }
        let panel = TimeSeriesPanel {
            values,
            dates: (0..t).map(|k| MonthDate::new(2000, 1).unwrap().add_months(k)).collect(),
            names: vec!["A".into(), "B".into()],
        };
        if let Ok((once, _)) = standardize(&panel) {
            let (twice, _) = standardize(&once).unwrap();
            for (a, b) in once.values.iter().zip(twice.values.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dm_test_is_antisymmetric_property(
        e1 in prop::collection::vec(-3.0..3.0f64, 25),
        e2 in prop::collection::vec(-3.0..3.0f64, 25),
        h in 1usize..4,
    ) {
        if let (Ok(ab), Ok(ba)) = (dm_test(&e1, &e2, h), dm_test(&e2, &e1, h)) {
            if !ab.degenerate && !ba.degenerate {
                prop_assert!((ab.statistic + ba.statistic).abs() < 1e-10);
                prop_assert!((ab.p_value - ba.p_value).abs() < 1e-10);
            }
        }
    }
}
