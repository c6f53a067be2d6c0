//! Distribution kernel, mixture CDF and eigenvalue routine against
//! independent references.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use remeta_core::eigen::quadratic_form_weights;
use remeta_core::{chisq_mix_cdf, ChiSqMix, DistSpec, SeededRng};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal, StudentsT};

/// erf by its Maclaurin series, summed until terms vanish; fine for |x| ≤ 3.
fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    for n in 1..200 {
        term *= -x2 / n as f64;
        let add = term / (2 * n + 1) as f64;
        sum += add;
        if add.abs() < 1e-18 {
            break;
        }
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

#[test]
fn normal_cdf_matches_erf_series() {
    let std = DistSpec::Normal { mean: 0.0, sd: 1.0 };
    for i in -40..=40 {
        let x = i as f64 * 0.1;
        let want = 0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2));
        let got = std.cdf(x).unwrap();
        assert!((got - want).abs() < 2e-13, "x = {x}: {got} vs {want}");
    }
}

#[test]
fn cdfs_match_statrs() {
    let xs = [0.05, 0.3, 0.9, 1.7, 3.2, 6.0, 12.5];
    for df in [0.7, 1.0, 2.5, 7.0, 30.0, 120.0] {
        let ours = DistSpec::ChiSquare { df };
        let theirs = ChiSquared::new(df).unwrap();
        for &x in &xs {
            let (a, b) = (ours.cdf(x).unwrap(), theirs.cdf(x));
            assert!((a - b).abs() < 1e-10, "chisq({df}) at {x}: {a} vs {b}");
        }
        let ours = DistSpec::StudentT { df };
        let theirs = StudentsT::new(0.0, 1.0, df).unwrap();
        for &x in &xs {
            for s in [-x, x] {
                let (a, b) = (ours.cdf(s).unwrap(), theirs.cdf(s));
                assert!((a - b).abs() < 1e-10, "t({df}) at {s}: {a} vs {b}");
            }
        }
    }
    for (d1, d2) in [(1.0, 1.0), (2.0, 5.0), (4.0, 9.5), (29.0, 12.3), (3.3, 200.0)] {
        let ours = DistSpec::FisherF { d1, d2 };
        let theirs = FisherSnedecor::new(d1, d2).unwrap();
        for &x in &xs {
            let (a, b) = (ours.cdf(x).unwrap(), theirs.cdf(x));
            assert!((a - b).abs() < 1e-10, "F({d1},{d2}) at {x}: {a} vs {b}");
        }
    }
    // statrs' normal CDF is only good to ~1e-11; the shifted normal is
    // checked against 30-digit reference values instead.
    let ours = DistSpec::Normal { mean: 1.5, sd: 2.0 };
    let reference = [
        (-0.05, 0.219169829793377401580870339191),
        (-0.9, 0.115069670221708265866321913922),
        (-3.2, 0.00938670553483857508218523986238),
        (-6.0, 0.0000884172852008038678177546690265),
        (-12.5, 1.27981254388583500438362369078e-12),
    ];
    for (x, want) in reference {
        let got = ours.cdf(x).unwrap();
        assert!((got - want).abs() <= 1e-14 * want.max(1e-3), "normal at {x}: {got:e} vs {want:e}");
    }
    let theirs = Normal::new(1.5, 2.0).unwrap();
    assert!((ours.cdf(0.3).unwrap() - theirs.cdf(0.3)).abs() < 1e-10);
}

#[test]
fn quantiles_round_trip_on_probability_grid() {
    let specs = [
        DistSpec::Normal { mean: -1.0, sd: 0.3 },
        DistSpec::StudentT { df: 1.0 },
        DistSpec::StudentT { df: 3.7 },
        DistSpec::StudentT { df: 2e6 },
        DistSpec::ChiSquare { df: 0.5 },
        DistSpec::ChiSquare { df: 29.0 },
        DistSpec::FisherF { d1: 4.0, d2: 7.31 },
        DistSpec::FisherF { d1: 29.0, d2: 4.2 },
        DistSpec::FisherF { d1: 9.0, d2: 5e7 },
    ];
    for spec in specs {
        for i in 1..=99 {
            let p = i as f64 / 100.0;
            let x = spec.quantile(p).unwrap();
            let back = spec.cdf(x).unwrap();
            assert!((back - p).abs() <= 1e-9, "{spec:?} p = {p}: {back}");
        }
    }
}

#[test]
fn f_reciprocal_symmetry() {
    for (d1, d2) in [(2.0, 3.0), (5.5, 11.0), (30.0, 4.0)] {
        for x in [0.1, 0.5, 1.0, 2.0, 7.0] {
            let a = DistSpec::FisherF { d1, d2 }.cdf(x).unwrap();
            let b = DistSpec::FisherF { d1: d2, d2: d1 }.cdf(1.0 / x).unwrap();
            assert!((a - (1.0 - b)).abs() < 1e-13);
        }
    }
}

#[test]
fn mixture_with_equal_weights_is_scaled_chisq() {
    for (lambda, dfs) in [(0.5, vec![1.0, 1.0, 1.0]), (3.0, vec![2.0, 0.5]), (1.0, vec![4.0])] {
        let d: f64 = dfs.iter().sum();
        let mix = ChiSqMix::new(vec![lambda; dfs.len()], dfs).unwrap();
        for x in [0.2, 1.0, 3.0, 8.0, 20.0] {
            let want = DistSpec::ChiSquare { df: d }.cdf(x / lambda).unwrap();
            let got = chisq_mix_cdf(&mix, x).unwrap();
            assert!((got - want).abs() < 1e-9, "λ = {lambda}, x = {x}: {got} vs {want}");
        }
    }
}

#[test]
fn mixture_matches_simulation() {
    let weights = vec![0.2, 0.7, 1.5, 4.0];
    let mix = ChiSqMix::unit_df(weights.clone()).unwrap();
    let mut rng = SeededRng::new(99);
    let draws = 400_000;
    let probes = [0.5, 2.0, 5.0, 10.0, 20.0];
    let mut hits = [0usize; 5];
    let z = DistSpec::Normal { mean: 0.0, sd: 1.0 };
    for _ in 0..draws {
        let q: f64 = weights.iter().map(|w| w * z.sample(&mut rng).unwrap().powi(2)).sum();
        for (h, &p) in hits.iter_mut().zip(&probes) {
            *h += (q <= p) as usize;
        }
    }
    for (h, &x) in hits.iter().zip(&probes) {
        let emp = *h as f64 / draws as f64;
        let se = (emp * (1.0 - emp) / draws as f64).sqrt();
        let cdf = chisq_mix_cdf(&mix, x).unwrap();
        assert!((cdf - emp).abs() < 4.0 * se + 1e-12, "x = {x}: {cdf} vs {emp} ± {se}");
    }
}

#[test]
fn quadratic_form_weights_match_dense_eigendecomposition() {
    let mut rng = SeededRng::new(5);
    for _ in 0..200 {
        let k = rng.random_range(2..=12);
        let a: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..10.0)).collect();
        let mut s: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..3.0)).collect();
        if rng.random_bool(0.3) {
            // Ties exercise the merged-pole path.
            s[0] = s[k - 1];
            let last = a[k - 1];
            s[0] *= last / a[0];
        }
        let aa: f64 = a.iter().sum();
        let m = DMatrix::from_fn(k, k, |i, j| {
            let base = if i == j { a[i] } else { 0.0 } - a[i] * a[j] / aa;
            s[i].sqrt() * base * s[j].sqrt()
        });
        let mut dense: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        let top = dense[k - 1];
        dense.retain(|&l| l > 1e-9 * top);
        let ours = quadratic_form_weights(&a, &s);
        assert_eq!(ours.len(), dense.len(), "{a:?} {s:?}");
        for (x, y) in ours.iter().zip(&dense) {
            assert!((x - y).abs() < 1e-10 * top, "{ours:?} vs {dense:?}");
        }
    }
}
