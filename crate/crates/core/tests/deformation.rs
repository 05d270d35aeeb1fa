use ioct_sonify_core::anatomy::ColumnRange;
use ioct_sonify_core::dynamics::excitation::{clamp_f_ilm, deformation_signal, SeparationField, F_ILM_MAX};
use ioct_sonify_core::math::nearest_rank_percentile;
use proptest::prelude::*;

fn field(values: Vec<f64>) -> SeparationField {
    SeparationField {
        columns: ColumnRange::new(10, 10 + values.len() as i64 - 1),
        values,
    }
}

/// Smallest sample value with at least 95% of the samples at or below it.
fn p95_oracle(values: &[f64]) -> f64 {
    let n = values.len();
    let mut candidates = values.to_vec();
    candidates.sort_by(f64::total_cmp);
    *candidates
        .iter()
        .find(|&&c| 100 * values.iter().filter(|&&v| v <= c).count() >= 95 * n)
        .unwrap()
}

proptest! {
    #[test]
    fn delta_matches_brute_force_p95(
        prev in prop::collection::vec(50.0f64..150.0, 8..=512),
        seed in prop::collection::vec(-5.0f64..5.0, 512),
    ) {
        let now: Vec<f64> = prev.iter().zip(&seed).map(|(p, d)| p + d).collect();
        let diffs: Vec<f64> = now.iter().zip(&prev).map(|(a, b)| a - b).collect();
        let s = deformation_signal(&field(now), &field(prev)).unwrap();
        prop_assert_eq!(s.delta, p95_oracle(&diffs));
        prop_assert_eq!(s.f_ilm, clamp_f_ilm(s.delta));
    }

    #[test]
    fn f_ilm_is_total_on_finite_input(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let f = clamp_f_ilm(x);
        prop_assert!((0.0..=F_ILM_MAX).contains(&f));
    }

    #[test]
    fn uniform_change_saturates(n in 8usize..512, up in 2.0f64..1e6, down in 0.0f64..1e6) {
        let prev = vec![100.0; n];
        prop_assert_eq!(deformation_signal(&field(vec![100.0 + up; n]), &field(prev.clone())).unwrap().f_ilm, 2.0);
        prop_assert_eq!(deformation_signal(&field(vec![100.0 - down; n]), &field(prev)).unwrap().f_ilm, 0.0);
    }
}

#[test]
fn percentile_conforms_for_every_window_size() {
    for n in 8..=512usize {
        // Distinct values in scrambled order.
        let v: Vec<f64> = (0..n).map(|k| ((k * 7919) % n) as f64 * 0.5 - 3.0).collect();
        assert_eq!(nearest_rank_percentile(&v, 95), Some(p95_oracle(&v)), "n = {n}");
    }
}

#[test]
fn clamp_examples() {
    let prev = field(vec![100.0; 64]);
    assert_eq!(deformation_signal(&field(vec![103.5; 64]), &prev).unwrap().f_ilm, 2.0);
    assert_eq!(deformation_signal(&field(vec![99.0; 64]), &prev).unwrap().f_ilm, 0.0);
    assert_eq!(clamp_f_ilm(f64::MAX), 2.0);
    assert_eq!(clamp_f_ilm(-f64::MAX), 0.0);
    assert_eq!(clamp_f_ilm(0.75), 0.75);
}
