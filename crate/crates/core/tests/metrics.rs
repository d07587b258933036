use linksteal_core::baselines::{pair_distance, MetricKind};
use ndarray::arr1;
use proptest::prelude::*;

// Reference definitions written independently of the library.
fn reference(metric: MetricKind, a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let cos = |x: &[f64], y: &[f64]| {
        let mut dot = 0.0;
        let mut nx = 0.0;
        let mut ny = 0.0;
        for i in 0..x.len() {
            dot += x[i] * y[i];
            nx += x[i] * x[i];
            ny += y[i] * y[i];
        }
        f64::max(0.0, 1.0 - dot / (nx.sqrt() * ny.sqrt()))
    };
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    match metric {
        MetricKind::Cosine => cos(a, b),
        MetricKind::Correlation => {
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            let ca: Vec<f64> = a.iter().map(|x| x - ma).collect();
            let cb: Vec<f64> = b.iter().map(|y| y - mb).collect();
            cos(&ca, &cb)
        }
        MetricKind::Euclidean => diffs.iter().map(|d| d * d).sum::<f64>().sqrt(),
        MetricKind::Sqeuclidean => diffs.iter().map(|d| d * d).sum(),
        MetricKind::Chebyshev => diffs.iter().fold(0.0, |m, d| f64::max(m, d.abs())),
        MetricKind::Cityblock => diffs.iter().map(|d| d.abs()).sum(),
        MetricKind::Braycurtis => {
            diffs.iter().map(|d| d.abs()).sum::<f64>() / a.iter().zip(b).map(|(x, y)| (x + y).abs()).sum::<f64>()
        }
        MetricKind::Canberra => a
            .iter()
            .zip(b)
            .map(|(x, y)| if x.abs() + y.abs() == 0.0 { 0.0 } else { (x - y).abs() / (x.abs() + y.abs()) })
            .sum(),
    }
}

fn d(m: MetricKind, a: &[f64], b: &[f64]) -> f64 {
    pair_distance(m, arr1(a).view(), arr1(b).view()).unwrap()
}

fn simplex(width: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, width).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn simplex_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..30).prop_flat_map(|w| (simplex(w..=w), simplex(w..=w)))
}

fn simplex_triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..30).prop_flat_map(|w| (simplex(w..=w), simplex(w..=w), simplex(w..=w)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_reference((a, b) in simplex_pair()) {
        for m in MetricKind::ALL {
            let got = d(m, &a, &b);
            prop_assert!((got - reference(m, &a, &b)).abs() <= 1e-9, "{m}");
            prop_assert!(got >= 0.0);
        }
    }

    #[test]
    fn symmetric((a, b) in simplex_pair()) {
        for m in MetricKind::ALL {
            prop_assert_eq!(d(m, &a, &b), d(m, &b, &a), "{}", m);
        }
    }

    #[test]
    fn zero_on_identical(a in simplex(2..=40)) {
        for m in MetricKind::ALL {
            prop_assert_eq!(d(m, &a, &a), 0.0, "{}", m);
        }
    }

    #[test]
    fn triangle_inequality((a, b, c) in simplex_triple()) {
        for m in [MetricKind::Euclidean, MetricKind::Cityblock, MetricKind::Chebyshev] {
            prop_assert!(d(m, &a, &c) <= d(m, &a, &b) + d(m, &b, &c) + 1e-12, "{m}");
        }
    }
}

#[test]
fn hand_computed_values() {
    assert_eq!(d(MetricKind::Sqeuclidean, &[0.0, 1.0], &[1.0, 0.0]), 2.0);
    assert_eq!(d(MetricKind::Cityblock, &[0.0, 1.0], &[1.0, 0.0]), 2.0);
    assert_eq!(d(MetricKind::Chebyshev, &[0.0, 1.0], &[1.0, 0.0]), 1.0);
    assert_eq!(d(MetricKind::Cosine, &[0.0, 1.0], &[1.0, 0.0]), 1.0);
    assert_eq!(d(MetricKind::Braycurtis, &[0.0, 1.0], &[1.0, 0.0]), 1.0);
    assert_eq!(d(MetricKind::Canberra, &[0.0, 1.0], &[0.0, 1.0]), 0.0);
    assert!((d(MetricKind::Euclidean, &[0.0, 1.0], &[1.0, 0.0]) - 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn undefined_cases_are_errors() {
    let z = arr1(&[0.0, 0.0]);
    let o = arr1(&[0.5, 0.5]);
    assert!(pair_distance(MetricKind::Cosine, z.view(), o.view()).is_err());
    assert!(pair_distance(MetricKind::Correlation, o.view(), o.view()).is_err());
    assert!(pair_distance(MetricKind::Braycurtis, z.view(), z.view()).is_err());
    assert!(pair_distance(MetricKind::Euclidean, z.view(), arr1(&[1.0]).view()).is_err());
}
