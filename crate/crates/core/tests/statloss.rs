mod common;

use common::{normal, random_pd, rng};
use harcov::measures::{DatedPanel, QuartPanel};
use harcov::statloss::*;
use harcov::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v))
}

#[test]
fn frobenius_examples() {
    let s = diag(&[2.0, 2.0]);
    assert_eq!(frobenius_loss(&s, &s).unwrap(), 0.0);
    assert!((frobenius_loss(&s, &diag(&[1.0, 1.0])).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    let off = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    assert!((frobenius_loss(&off, &DMatrix::zeros(2, 2)).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    assert!(matches!(
        frobenius_loss(&s, &DMatrix::zeros(3, 3)),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn qlike_examples() {
    let i3 = DMatrix::identity(3, 3);
    assert!((qlike_loss(&i3, &i3).unwrap() - 3.0).abs() < 1e-14);
    assert!(
        (qlike_loss(&diag(&[2.0, 3.0]), &DMatrix::identity(2, 2)).unwrap() - 5.0).abs() < 1e-14
    );
    assert!(matches!(
        qlike_loss(&i3, &diag(&[1.0, 1.0, 0.0])),
        Err(Error::SingularForecast { .. })
    ));

    // log|Ŝ| + tr(Ŝ⁻¹S) against an explicit inverse
    let mut g = rng(1);
    for n in 1..=6 {
        let s = random_pd(&mut g, n, 0.1);
        let f = random_pd(&mut g, n, 0.1);
        let want = f.determinant().ln() + (f.clone().try_inverse().unwrap() * &s).trace();
        assert!((qlike_loss(&s, &f).unwrap() - want).abs() < 1e-9 * want.abs().max(1.0));
    }
}

#[test]
fn loss_series_excludes_missing_and_singular_days() {
    let dates: Vec<String> = (1..=3).map(|d| format!("2020-01-0{d}")).collect();
    let s = vec![DMatrix::identity(2, 2); 3];
    let f = vec![Some(DMatrix::identity(2, 2)), None, Some(diag(&[1.0, 0.0]))];
    let ls = LossSeries::compute("X", &dates, &s, &f).unwrap();
    assert_eq!(ls.frobenius, vec![Some(0.0), None, Some(1.0)]);
    assert_eq!(ls.qlike, vec![Some(2.0), None, None]);
}

#[test]
fn split_examples() {
    assert_eq!(
        quarticity_split(&[1.0, 2.0, 3.0, 4.0]),
        (vec![0, 1], vec![2, 3])
    );
    assert_eq!(
        quarticity_split(&[4.0, 3.0, 2.0, 1.0]),
        (vec![2, 3], vec![0, 1])
    );
    assert_eq!(quarticity_split(&[1.0; 5]), (vec![0, 1], vec![2, 3, 4]));
}

#[test]
fn scores_standardize_each_asset() {
    // asset 2 is asset 1 scaled and shifted: identical standardized scores
    let a: Vec<f64> = (0..11).map(|v| v as f64).collect();
    let rows: Vec<Vec<f64>> = a.iter().map(|v| vec![*v, 100.0 * v + 7.0]).collect();
    let rq = QuartPanel::new(
        DatedPanel::new(common::dates(11), vec!["A1".into(), "A2".into()], rows).unwrap(),
    )
    .unwrap();
    let sc = quarticity_scores(&rq);
    // median 5, IQR 5
    for (t, v) in sc.iter().enumerate() {
        assert!((v - (t as f64 - 5.0) / 5.0).abs() < 1e-12);
    }
}

/// Reference DM: Bartlett-weighted long-run variance, weights 1 − k/(L+1).
fn dm_oracle(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let t = d.len() as f64;
    let m = d.iter().sum::<f64>() / t;
    let lag = (t.powf(1.0 / 3.0) + 1e-9).floor() as usize;
    let mut lrv = 0.0;
    for i in 0..d.len() {
        for j in 0..d.len() {
            let k = i.abs_diff(j);
            if k <= lag {
                lrv += (1.0 - k as f64 / (lag as f64 + 1.0)) * (d[i] - m) * (d[j] - m);
            }
        }
    }
    lrv /= t;
    m / (lrv / t).sqrt()
}

#[test]
fn dm_matches_reference_and_examples() {
    let mut g = rng(2);
    for &t in &[30usize, 64, 125, 200] {
        let a: Vec<f64> = (0..t).map(|_| normal(&mut g)).collect();
        let b: Vec<f64> = (0..t).map(|_| 0.2 + normal(&mut g)).collect();
        let r = dm_test(&a, &b).unwrap();
        let want = dm_oracle(&a, &b);
        assert!(
            (r.statistic - want).abs() < 1e-10 * want.abs().max(1.0),
            "T={t}"
        );
        assert_eq!(r.hac_lag, (t as f64).cbrt().floor() as usize);
    }
    let a: Vec<f64> = (0..50).map(|_| normal(&mut g)).collect();
    let same = dm_test(&a, &a).unwrap();
    assert_eq!((same.statistic, same.p_value), (0.0, 0.5));
    let lower: Vec<f64> = a.iter().map(|v| v - 1.0).collect();
    let dom = dm_test(&lower, &a).unwrap();
    assert!(dom.statistic.is_finite() && dom.statistic < -1e5 && dom.p_value < 1e-12);
    assert!(matches!(
        dm_test(&a[..29], &a[..29]),
        Err(Error::InsufficientHistory { .. })
    ));
}

#[test]
fn dm_size_is_near_nominal() {
    let mut g = rng(3);
    let reps = 1000;
    let mut rej = 0;
    for _ in 0..reps {
        let a: Vec<f64> = (0..500).map(|_| normal(&mut g)).collect();
        let b = vec![0.0; 500];
        if dm_test(&a, &b).unwrap().statistic.abs() > 1.959_963_984_540_054 {
            rej += 1;
        }
    }
    let rate = rej as f64 / reps as f64;
    assert!((0.03..=0.07).contains(&rate), "rate {rate}");
}

fn mcs_cfg(seed: u64) -> McsConfig {
    McsConfig {
        alpha: 0.10,
        n_bootstrap: 500,
        block_len: None,
        seed,
    }
}

#[test]
fn mcs_examples() {
    let mut g = rng(4);
    let col: Vec<f64> = (0..100).map(|_| normal(&mut g)).collect();
    let same = DMatrix::from_fn(100, 2, |i, _| col[i]);
    let r = mcs(&same, mcs_cfg(1)).unwrap();
    assert_eq!(r.surviving_models, vec![0, 1]);
    assert_eq!(r.p_values, vec![1.0, 1.0]);
    assert_eq!(r.block_len, 4);

    assert!(matches!(
        mcs(
            &same,
            McsConfig {
                n_bootstrap: 99,
                ..mcs_cfg(1)
            }
        ),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        mcs(&same.columns(0, 1).into_owned(), mcs_cfg(1)),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        mcs(&same.rows(0, 49).into_owned(), mcs_cfg(1)),
        Err(Error::InsufficientHistory { .. })
    ));

    // shifted model eliminated
    let mut eliminated = 0;
    for rep in 0..50 {
        let l = DMatrix::from_fn(500, 4, |_, j| {
            normal(&mut g) + if j == 2 { 10.0 } else { 0.0 }
        });
        let r = mcs(&l, mcs_cfg(rep)).unwrap();
        assert!(!r.surviving_models.is_empty());
        assert!(r.surviving_models.iter().all(|&m| r.p_values[m] > 0.10));
        if !r.surviving_models.contains(&2) {
            eliminated += 1;
        }
    }
    assert_eq!(eliminated, 50);
}

#[test]
fn mcs_is_deterministic_per_seed() {
    let mut g = rng(5);
    let l = DMatrix::from_fn(200, 3, |_, j| normal(&mut g) + 0.1 * j as f64);
    assert_eq!(mcs(&l, mcs_cfg(9)).unwrap(), mcs(&l, mcs_cfg(9)).unwrap());
}

#[test]
fn two_model_mcs_agrees_with_dm_direction() {
    let mut g = rng(6);
    let mut checked = 0;
    for rep in 0..100 {
        let shift = 0.3 * normal(&mut g);
        let l = DMatrix::from_fn(200, 2, |_, j| {
            normal(&mut g) + if j == 1 { shift } else { 0.0 }
        });
        let r = mcs(&l, mcs_cfg(rep)).unwrap();
        if r.surviving_models.len() == 1 {
            checked += 1;
            let out = 1 - r.surviving_models[0];
            let keep = r.surviving_models[0];
            let a: Vec<f64> = l.column(out).iter().copied().collect();
            let b: Vec<f64> = l.column(keep).iter().copied().collect();
            assert!(dm_test(&a, &b).unwrap().statistic > 0.0, "rep {rep}");
        }
    }
    assert!(checked > 20);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn frobenius_is_a_metric(seed in 0u64..100_000, n in 1usize..6) {
        let mut g = rng(seed);
        let mut sym = || { let a = DMatrix::from_fn(n, n, |_, _| normal(&mut g)); &a + a.transpose() };
        let (a, b, c) = (sym(), sym(), sym());
        let ab = frobenius_loss(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!(frobenius_loss(&a, &a).unwrap() == 0.0);
        prop_assert!((ab - frobenius_loss(&b, &a).unwrap()).abs() < 1e-14);
        prop_assert!(ab <= frobenius_loss(&a, &c).unwrap() + frobenius_loss(&c, &b).unwrap() + 1e-12);
    }

    #[test]
    fn qlike_is_minimized_at_the_truth(seed in 0u64..100_000, n in 1usize..=6, scale in 1e-3f64..2.0) {
        let mut g = rng(seed);
        let s = random_pd(&mut g, n, 0.05);
        let delta = {
            let a = DMatrix::from_fn(n, n, |_, _| normal(&mut g));
            (&a + a.transpose()) * (scale / 2.0)
        };
        let perturbed = &s + &delta;
        if perturbed.clone().symmetric_eigen().eigenvalues.min() > 1e-8 {
            prop_assert!(qlike_loss(&s, &s).unwrap() < qlike_loss(&s, &perturbed).unwrap());
        }
    }

    #[test]
    fn dm_is_antisymmetric(seed in 0u64..100_000, t in 30usize..300) {
        let mut g = rng(seed);
        let a: Vec<f64> = (0..t).map(|_| normal(&mut g)).collect();
        let b: Vec<f64> = (0..t).map(|_| normal(&mut g)).collect();
        let ab = dm_test(&a, &b).unwrap();
        let ba = dm_test(&b, &a).unwrap();
        prop_assert_eq!(ab.statistic, -ba.statistic);
        prop_assert!((ab.p_value - (1.0 - ba.p_value)).abs() < 1e-15);
    }

    #[test]
    fn split_partitions_days(scores in prop::collection::vec(-5.0f64..5.0, 0..200)) {
        let (low, high) = quarticity_split(&scores);
        prop_assert_eq!(low.len(), scores.len() / 2);
        prop_assert_eq!(low.len() + high.len(), scores.len());
        let mut all: Vec<usize> = low.iter().chain(&high).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..scores.len()).collect::<Vec<_>>());
        if let (Some(lmax), Some(hmin)) = (low.iter().map(|&i| scores[i]).reduce(f64::max), high.iter().map(|&i| scores[i]).reduce(f64::min)) {
            prop_assert!(lmax <= hmin);
        }
    }
}
