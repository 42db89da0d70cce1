use fdht_core::tensor::MatrixView;
use fdht_core::transform::{
    apply_transform, check_bijection, index_map, literal_type_ii_map, oracle_transform,
    MapDefect, TransformSpec,
};
use proptest::prelude::*;

fn spec_strategy(max: usize) -> impl Strategy<Value = TransformSpec> {
    let d = 1..=max;
    prop_oneof![
        (d.clone(), d.clone(), d.clone()).prop_map(|(a, b1, b2)| TransformSpec::TypeI { a, b1, b2 }),
        (d.clone(), d.clone(), d.clone(), d.clone(), d.clone())
            .prop_map(|(a1, a2, a3, b1, b2)| TransformSpec::TypeII { a1, a2, a3, b1, b2 }),
        (d.clone(), d.clone(), d.clone(), d).prop_map(|(a1, a2, a3, b)| TransformSpec::TypeIII {
            a1,
            a2,
            a3,
            b
        }),
    ]
}

fn distinct(spec: &TransformSpec) -> MatrixView {
    let (r, c) = spec.input_shape();
    MatrixView::new(r, c, (0..r * c).map(|v| v as f64 * 0.5 - 3.0).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn apply_equals_oracle(spec in spec_strategy(5)) {
        let t = distinct(&spec);
        prop_assert_eq!(apply_transform(&spec, &t).unwrap(), oracle_transform(&spec, &t).unwrap());
    }

    #[test]
    fn index_map_is_bijective(spec in spec_strategy(6)) {
        prop_assert!(spec.len() <= 10_000);
        prop_assert_eq!(check_bijection(&index_map(&spec), spec.output_shape()), Ok(()));
    }

    #[test]
    fn entries_are_permuted_not_changed(spec in spec_strategy(5)) {
        let t = distinct(&spec);
        let mut before = t.data().to_vec();
        let mut after = apply_transform(&spec, &t).unwrap().into_data();
        before.sort_by(f64::total_cmp);
        after.sort_by(f64::total_cmp);
        prop_assert_eq!(before, after);
    }

    #[test]
    fn inverse_undoes_map(spec in spec_strategy(5)) {
        for e in index_map(&spec) {
            prop_assert_eq!(spec.inverse(e.p, e.q), (e.m, e.n));
        }
    }
}

#[test]
fn literal_type_ii_formula_is_rejected_for_every_nontrivial_a2() {
    for a2 in 2..=4 {
        for b2 in 2..=3 {
            let table = literal_type_ii_map(2, a2, 2, 2, b2);
            assert!(matches!(
                check_bijection(&table, (8, a2 * b2)),
                Err(MapDefect::Collision { .. })
            ));
        }
    }
}
