use fbm_mde::distances::{
    d_s, dcf, wasserstein_1d, wasserstein_oracle_small, DcfSpec, DsFamily, EmpiricalMeasure, DCF_STABILITY_TOL,
};
use proptest::prelude::*;

fn measure(points: Vec<f64>, weights: Option<Vec<f64>>) -> EmpiricalMeasure {
    match weights {
        Some(w) => EmpiricalMeasure::normalized(1, points, w).unwrap(),
        None => EmpiricalMeasure::uniform(1, points).unwrap(),
    }
}

fn arb_measure(max_len: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    (1..=max_len)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(-3.0f64..3.0, n),
                prop::option::of(prop::collection::vec(0.05f64..1.0, n)),
            )
        })
        .prop_map(|(p, w)| measure(p, w))
}

fn reversed(m: &EmpiricalMeasure) -> EmpiricalMeasure {
    let idx: Vec<usize> = (0..m.len()).rev().collect();
    let points = idx.iter().map(|&i| m.point(i)[0]).collect();
    let weights = idx.iter().map(|&i| m.weight(i)).collect();
    EmpiricalMeasure::normalized(1, points, weights).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn wasserstein_triangle(a in arb_measure(12), b in arb_measure(12), c in arb_measure(12)) {
        for p in [1.0, 2.0] {
            let ac = wasserstein_1d(&a, &c, p).unwrap();
            let ab = wasserstein_1d(&a, &b, p).unwrap();
            let bc = wasserstein_1d(&b, &c, p).unwrap();
            prop_assert!(ac <= ab + bc + 1e-10, "p={p}: {ac} > {ab} + {bc}");
        }
    }

    #[test]
    fn dcf_triangle(a in arb_measure(6), b in arb_measure(6), c in arb_measure(6)) {
        let spec = DcfSpec::quadrature(2.0);
        let ac = dcf(&a, &c, &spec).unwrap();
        let ab = dcf(&a, &b, &spec).unwrap();
        let bc = dcf(&b, &c, &spec).unwrap();
        // the three values may come from different refinement levels
        prop_assert!(ac <= (ab + bc) * (1.0 + 2.0 * DCF_STABILITY_TOL) + 1e-12, "{ac} > {ab} + {bc}");
    }

    #[test]
    fn ds_triangle(a in arb_measure(12), b in arb_measure(12), c in arb_measure(12)) {
        let f = DsFamily::default();
        let ac = d_s(&a, &c, &f).unwrap().value;
        let ab = d_s(&a, &b, &f).unwrap().value;
        let bc = d_s(&b, &c, &f).unwrap().value;
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn oracle_agrees(a in arb_measure(6), b in arb_measure(6), p in prop::sample::select(vec![1.0, 2.0, 4.0])) {
        let fast = wasserstein_1d(&a, &b, p).unwrap();
        let slow = wasserstein_oracle_small(&a, &b, p).unwrap();
        prop_assert!((fast - slow).abs() <= 1e-10, "{fast} vs {slow}");
    }

    #[test]
    fn order_of_atoms_is_irrelevant(a in arb_measure(8), b in arb_measure(8)) {
        let (ra, rb) = (reversed(&a), reversed(&b));
        for p in [1.0, 2.0, 4.0] {
            let x = wasserstein_1d(&a, &b, p).unwrap();
            prop_assert!((x - wasserstein_1d(&ra, &rb, p).unwrap()).abs() <= 1e-12 * (1.0 + x));
        }
        let spec = DcfSpec::quadrature(2.0);
        let x = dcf(&a, &b, &spec).unwrap();
        prop_assert!((x - dcf(&ra, &rb, &spec).unwrap()).abs() <= 1e-9 * (1.0 + x));
        let f = DsFamily::default();
        let x = d_s(&a, &b, &f).unwrap().value;
        prop_assert!((x - d_s(&ra, &rb, &f).unwrap().value).abs() <= 1e-12);
    }

    // |φ_μ(ξ) − φ_ν(ξ)| ≤ |ξ| W_1(μ, ν) and ∫ ξ² g_2(ξ) dξ = 1, so d_CF,2 ≤ W_1
    #[test]
    fn dcf_dominated_by_w1(a in arb_measure(6), b in arb_measure(6), scale in prop::sample::select(vec![0.01, 1.0, 10.0])) {
        let sa = EmpiricalMeasure::normalized(1, (0..a.len()).map(|i| scale * a.point(i)[0]).collect(), (0..a.len()).map(|i| a.weight(i)).collect()).unwrap();
        let sb = EmpiricalMeasure::normalized(1, (0..b.len()).map(|i| scale * b.point(i)[0]).collect(), (0..b.len()).map(|i| b.weight(i)).collect()).unwrap();
        let spec = DcfSpec::quadrature(2.0);
        match dcf(&sa, &sb, &spec) {
            Ok(d) => prop_assert!(d <= wasserstein_1d(&sa, &sb, 1.0).unwrap() * (1.0 + 1e-6) + 1e-12),
            // atoms 60 apart oscillate beyond what the finest rule resolves
            Err(e) => prop_assert!(scale == 10.0, "{e}"),
        }
    }
}

#[test]
fn wasserstein_documented_values() {
    let a = measure(vec![0.0, 1.0], None);
    let b = measure(vec![0.0, 3.0], None);
    assert!((wasserstein_1d(&a, &b, 1.0).unwrap() - 1.0).abs() < 1e-15);
    assert!((wasserstein_oracle_small(&a, &b, 1.0).unwrap() - 1.0).abs() < 1e-12);
    for p in [1.0, 2.0, 4.0, 7.5] {
        assert_eq!(
            wasserstein_1d(&measure(vec![0.0], None), &measure(vec![1.0], None), p).unwrap(),
            1.0
        );
    }
    let two = EmpiricalMeasure::uniform(2, vec![0.0, 0.0]).unwrap();
    let far = EmpiricalMeasure::uniform(2, vec![3.0, 4.0]).unwrap();
    assert!((wasserstein_oracle_small(&two, &far, 2.0).unwrap() - 5.0).abs() < 1e-12);
}

#[test]
fn ds_is_bounded() {
    let f = DsFamily::default();
    let a = measure(vec![-50.0], None);
    let b = measure(vec![0.0, 0.3, 0.6], None);
    let v = d_s(&a, &b, &f).unwrap();
    assert!(v.value <= 1.0 && v.tail_bound == 0.5f64.powi(f.truncation as i32));
}
