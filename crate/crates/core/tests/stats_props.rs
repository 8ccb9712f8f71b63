use ppstat::data::{decode_column, encode_column, synthetic_uniform};
use ppstat::reference as plain;
use ppstat::stats::{coeff_variation, kurtosis, mean_scaled, pearson, skewness, variance_scaled, znorm};
use ppstat::{CkksParams, EncryptedColumn, EvalContext};
use proptest::prelude::*;

const N: usize = 1000;

fn ctx() -> EvalContext {
    EvalContext::new(CkksParams::default().with_slot_count(1024)).unwrap()
}

fn col(c: &EvalContext, v: &[f64]) -> EncryptedColumn {
    encode_column(c, v).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn column(lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, N)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pre_normalization_equivalence(
        v in column(-10.0, 10.0),
        b in prop::sample::select(vec![1.0, 20.0, 50.0, 100.0]),
    ) {
        let mut c = ctx();
        let x = col(&c, &v);
        let var = variance_scaled(&mut c, &x, b).unwrap().slots()[0];
        prop_assert!((var - plain::variance(&v) / (b * b)).abs() <= 1e-9);
        let mean = mean_scaled(&mut c, &x, b).unwrap().slots()[0];
        prop_assert!((mean - plain::mean(&v) / b).abs() <= 1e-9);
        prop_assert!(var >= -1e-9);
    }

    #[test]
    fn zscores_are_standardized(v in column(0.0, 100.0)) {
        let mut c = ctx();
        let c_v = col(&c, &v);
        let z = decode_column(&znorm(&mut c, &c_v, 100.0).unwrap());
        prop_assert!(plain::mean(&z).abs() <= 1e-4);
        prop_assert!((plain::std_dev(&z) - 1.0).abs() <= 1e-3);
        prop_assert_eq!(c.meter().bootstrap, 2);
    }

    #[test]
    fn pearson_of_self_is_one(v in column(0.0, 20.0)) {
        let mut c = ctx();
        let x = col(&c, &v);
        let r = pearson(&mut c, &x, &x, 20.0).unwrap().slots()[0];
        prop_assert!((r - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn pearson_is_affine_invariant(
        v in column(0.0, 20.0),
        u in column(0.0, 20.0),
        a in 0.2..3.0f64,
        shift in -5.0..5.0f64,
    ) {
        let w: Vec<f64> = v.iter().zip(&u).map(|(x, e)| 0.5 * x + 0.5 * e).collect();
        let moved: Vec<f64> = v.iter().map(|x| a * x + shift).collect();
        let mut c = ctx();
        let y = col(&c, &w);
        let c_v = col(&c, &v);
        let r = pearson(&mut c, &c_v, &y, 20.0).unwrap().slots()[0];
        let c_moved = col(&c, &moved);
        let r2 = pearson(&mut c, &c_moved, &y, 80.0).unwrap().slots()[0];
        prop_assert!((r - r2).abs() <= 2e-3 * r.abs().max(1e-3));
    }

    #[test]
    fn pearson_moment_inequality(v in column(0.0, 20.0), p in 0.5..4.0f64) {
        // Powers skew the distribution; the inequality must hold regardless.
        let skewed: Vec<f64> = v.iter().map(|x| 20.0 * (x / 20.0).powf(p)).collect();
        let mut c = ctx();
        let x = col(&c, &skewed);
        let k = kurtosis(&mut c, &x, 20.0).unwrap().slots()[0];
        let s = skewness(&mut c, &x, 20.0).unwrap().slots()[0];
        prop_assert!(k >= 1.0 + s * s - 1e-2);
    }

    #[test]
    fn measures_match_plaintext_formulas(v in column(0.0, 1.0), u in column(0.0, 1.0)) {
        let mut c = ctx();
        let x = col(&c, &v);
        let y = col(&c, &u);
        let z = decode_column(&znorm(&mut c, &x, 1.0).unwrap());
        let zs = plain::zscores(&v);
        for (a, b) in z.iter().zip(&zs) {
            prop_assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-2));
        }
        prop_assert!(rel(skewness(&mut c, &x, 1.0).unwrap().slots()[0], plain::skewness(&v)) <= 1e-4);
        prop_assert!(rel(kurtosis(&mut c, &x, 1.0).unwrap().slots()[0], plain::kurtosis(&v)) <= 1e-4);
        prop_assert!(rel(coeff_variation(&mut c, &x, 1.0).unwrap().slots()[0], plain::coeff_variation(&v)) <= 1e-4);
        prop_assert!(rel(pearson(&mut c, &x, &y, 1.0).unwrap().slots()[0], plain::pearson(&v, &u)) <= 1e-4);
    }

    #[test]
    fn encode_round_trip(v in prop::collection::vec(-1e6..1e6f64, 0..3000)) {
        let c = ctx();
        let x = col(&c, &v);
        prop_assert_eq!(decode_column(&x), v.clone());
        let last = x.chunks().len().saturating_sub(1);
        if let Some(chunk) = x.chunks().last() {
            let valid = x.valid_in_chunk(last);
            prop_assert!(chunk.slots()[valid..].iter().all(|&s| s == 0.0));
        }
        let q = EvalContext::new(CkksParams::default().with_slot_count(1024).with_quantize(true)).unwrap();
        for (a, b) in decode_column(&col(&q, &v)).iter().zip(&v) {
            prop_assert!((a - b).abs() <= 2f64.powi(-39));
        }
    }
}

#[test]
fn znorm_is_affine_invariant() {
    let v = synthetic_uniform(3, N, 0.0, 20.0);
    let moved: Vec<f64> = v.iter().map(|x| 3.0 * x + 7.0).collect();
    let mut c = ctx();
    let c_v = col(&c, &v);
    let z = decode_column(&znorm(&mut c, &c_v, 20.0).unwrap());
    let c_moved = col(&c, &moved);
    let z2 = decode_column(&znorm(&mut c, &c_moved, 60.0).unwrap());
    let want = plain::zscores(&v);
    let mre = |a: &[f64]| a.iter().zip(&want).map(|(x, w)| rel(*x, *w)).sum::<f64>() / N as f64;
    assert!(mre(&z) <= 1e-4 && mre(&z2) <= 2e-4);
    for (a, b) in z.iter().zip(&z2) {
        assert!((a - b).abs() <= 2e-4 * b.abs().max(1e-2));
    }
}

#[test]
fn coefficient_of_variation_edge_cases() {
    let mut c = ctx();
    let flat = col(&c, &[4.0; 64]);
    let cv = coeff_variation(&mut c, &flat, 5.0).unwrap().slots()[0];
    assert!(cv.abs() <= 1e-3, "cv of a constant column = {cv}");

    let v = synthetic_uniform(5, N, 1.0, 20.0);
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    let c_v = col(&c, &v);
    let a = coeff_variation(&mut c, &c_v, 20.0).unwrap().slots()[0];
    let c_neg = col(&c, &neg);
    let b = coeff_variation(&mut c, &c_neg, 20.0).unwrap().slots()[0];
    let want = plain::coeff_variation(&v);
    assert!(rel(a, want) <= 1e-3);
    assert!((a + b).abs() <= 2e-3 * want);
}

#[test]
fn variance_consumes_two_levels_and_leaves_room_for_the_seed() {
    let mut c = EvalContext::new(CkksParams::default().with_slot_count(1024).with_auto_bootstrap(false)).unwrap();
    let v = synthetic_uniform(9, N, 0.0, 100.0);
    let x = col(&c, &v);
    let var = variance_scaled(&mut c, &x, 100.0).unwrap();
    assert_eq!(var.level(), 9);
    let seed = ppstat::ScaledTarget::inv_sqrt(1e4).unwrap().fit(511).unwrap();
    let shifted = c.add_scalar(&var, -1.0);
    let out = seed.eval_encrypted(&mut c, &shifted).unwrap();
    assert_eq!(out.level(), 0);
    assert_eq!(c.meter().bootstrap, 0);
}
