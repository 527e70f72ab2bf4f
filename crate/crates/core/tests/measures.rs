mod common;

use common::{dates, normal, random_pd, rng};
use harcov::measures::*;
use harcov::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn m2(a: f64, b: f64, c: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, b, b, c])
}

#[test]
fn drd_examples() {
    let d = decompose_drd(&m2(4.0, 2.0, 9.0)).unwrap();
    assert_eq!(d.std_devs.as_slice(), &[2.0, 3.0]);
    assert!((d.corr[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);

    let d = decompose_drd(&DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 7.0]))).unwrap();
    assert_eq!(d.corr, DMatrix::identity(2, 2));

    assert!(matches!(
        decompose_drd(&m2(0.0, 0.0, 1.0)),
        Err(Error::DegenerateVariance { index: 0, .. })
    ));

    let s = compose_drd(&DVector::from_vec(vec![2.0, 3.0]), &m2(1.0, 1.0 / 3.0, 1.0)).unwrap();
    assert!((s - m2(4.0, 2.0, 9.0)).amax() < 1e-14);
    assert!(matches!(
        compose_drd(&DVector::from_vec(vec![1.0, 1.0]), &m2(1.0, 1.5, 1.0)),
        Err(Error::Composition(_))
    ));
}

#[test]
fn realized_measure_examples() {
    assert_eq!(realized_variance(&[0.0, 0.0]).unwrap(), 0.0);
    assert!((realized_variance(&[0.1, 0.2]).unwrap() - 0.05).abs() < 1e-16);
    assert_eq!(realized_variance(&[1.7]).unwrap(), 1.7 * 1.7);
    assert!(matches!(realized_variance(&[]), Err(Error::EmptyDay)));

    assert!((realized_quarticity(&[0.1, 0.2]).unwrap() - 2.0 / 3.0 * 0.0017).abs() < 1e-16);
    assert!((realized_quarticity(&[1.0]).unwrap() - 1.0 / 3.0).abs() < 1e-16);
    assert!(matches!(realized_quarticity(&[]), Err(Error::EmptyDay)));

    let c = realized_cov(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0])).unwrap();
    assert_eq!(c, m2(1.0, 2.0, 4.0));
    assert_eq!(
        realized_cov(&DMatrix::zeros(5, 3)).unwrap(),
        DMatrix::zeros(3, 3)
    );
}

#[test]
fn realized_cov_diagonal_is_realized_variance() {
    let mut g = rng(3);
    let r = DMatrix::from_fn(78, 4, |_, _| normal(&mut g));
    let c = realized_cov(&r).unwrap();
    for i in 0..4 {
        assert_eq!(
            c[(i, i)],
            realized_variance(r.column(i).as_slice()).unwrap()
        );
    }
    let one = realized_cov(&r.columns(0, 1).into_owned()).unwrap();
    assert_eq!(
        one[(0, 0)],
        realized_variance(r.column(0).as_slice()).unwrap()
    );
}

#[test]
fn lag_aggregate_examples() {
    let s = [1.0, 2.0, 3.0, 4.0, 5.0];
    let a = lag_aggregate(&s, 2).unwrap();
    assert_eq!(a[4], Some(3.5));
    assert_eq!(&a[..2], &[None, None]);
    let c = lag_aggregate(&[2.5; 30], 20).unwrap();
    assert!(c[20..].iter().all(|v| *v == Some(2.5)));
    assert!(matches!(
        lag_aggregate(&s, 5),
        Err(Error::InsufficientHistory { .. })
    ));
}

fn cov_panel(mats: Vec<DMatrix<f64>>) -> CovPanel {
    let n = mats[0].nrows();
    CovPanel::new(
        dates(mats.len()),
        (1..=n).map(|i| format!("A{i}")).collect(),
        mats,
    )
    .unwrap()
}

fn quart_panel(rows: Vec<Vec<f64>>) -> QuartPanel {
    let n = rows[0].len();
    QuartPanel::new(
        DatedPanel::new(
            dates(rows.len()),
            (1..=n).map(|i| format!("A{i}")).collect(),
            rows,
        )
        .unwrap(),
    )
    .unwrap()
}

/// Brute-force scan: every (day, element) pair beyond `k` sample deviations.
fn brute_flags(rows: &[Vec<f64>], k: f64) -> Vec<usize> {
    let t = rows.len() as f64;
    let mut days = Vec::new();
    for e in 0..rows[0].len() {
        let col: Vec<f64> = rows.iter().map(|r| r[e]).collect();
        let m = col.iter().sum::<f64>() / t;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (t - 1.0)).sqrt();
        for (d, v) in col.iter().enumerate() {
            if (v - m).abs() > k * sd {
                days.push(d);
            }
        }
    }
    days.sort_unstable();
    days.dedup();
    days
}

#[test]
fn no_extremes_means_no_replacements() {
    let mut g = rng(5);
    let mats: Vec<_> = (0..100).map(|_| random_pd(&mut g, 3, 0.5)).collect();
    let q: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..3).map(|_| 1.0 + normal(&mut g).abs()).collect())
        .collect();
    let (c, qq, rep) =
        clean_outliers(&cov_panel(mats.clone()), &quart_panel(q.clone()), 20.0).unwrap();
    assert_eq!(rep.n_replaced, 0);
    assert!(rep.flagged_dates.is_empty());
    assert_eq!(c.matrices(), mats.as_slice());
    assert_eq!(qq.rows, q);
    let (_, _, rep) = clean_outliers(&cov_panel(mats), &quart_panel(q), f64::INFINITY).unwrap();
    assert_eq!(rep.n_replaced, 0);
}

#[test]
fn injected_spike_is_flagged_and_carried_forward() {
    // A single point in T = 100 can sit at most √99 ≈ 9.9 sample deviations
    // from the mean, so the spike is checked at threshold 5.
    let mut g = rng(11);
    let base = m2(2.0, 0.5, 1.0);
    let mut mats: Vec<DMatrix<f64>> = (0..100)
        .map(|_| {
            let e = 0.02 * normal(&mut g);
            &base + DMatrix::from_diagonal(&DVector::from_vec(vec![e.abs(), e.abs()]))
        })
        .collect();
    let q: Vec<Vec<f64>> = (0..100)
        .map(|_| vec![1.0 + 0.01 * normal(&mut g), 1.0])
        .collect();
    let spike = 37;
    let others: Vec<f64> = mats
        .iter()
        .enumerate()
        .filter(|(d, _)| *d != spike)
        .map(|(_, m)| m[(0, 0)])
        .collect();
    let mean = others.iter().sum::<f64>() / 99.0;
    let sd = (others.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 98.0).sqrt();
    mats[spike][(0, 0)] = mean + 25.0 * sd;

    let cov = cov_panel(mats.clone());
    let rows = cov.vech_rows();
    let expected = brute_flags(&rows, 5.0);
    assert_eq!(expected, vec![spike]);

    let (c, qq, rep) = clean_outliers(&cov, &quart_panel(q.clone()), 5.0).unwrap();
    assert_eq!(rep.flagged_dates, vec![spike]);
    assert_eq!(rep.n_replaced, 1);
    assert_eq!(c.matrices()[spike], mats[spike - 1]);
    assert_eq!(qq.rows[spike], q[spike - 1]);
    assert!(is_psd_panel(&c));

    // idempotent on covariance days
    let (_, _, again) = clean_outliers(&c, &qq, 5.0).unwrap();
    assert!(!again.flagged_dates.contains(&spike));
}

fn is_psd_panel(c: &CovPanel) -> bool {
    c.matrices()
        .iter()
        .all(|m| harcov::linalg::is_psd(m, PSD_TOL))
}

#[test]
fn day_zero_is_reported_but_kept() {
    let mut mats = vec![m2(1.0, 0.0, 1.0); 60];
    for (i, m) in mats.iter_mut().enumerate() {
        m[(1, 1)] += 0.001 * (i % 7) as f64;
    }
    mats[0][(0, 0)] = 500.0;
    let q = vec![vec![1.0, 1.0]; 60];
    let (c, _, rep) = clean_outliers(&cov_panel(mats.clone()), &quart_panel(q), 5.0).unwrap();
    assert_eq!(rep.flagged_dates, vec![0]);
    assert_eq!(rep.n_replaced, 0);
    assert_eq!(c.matrices()[0], mats[0]);
}

#[test]
fn quarticity_flags_replace_the_whole_day() {
    let mut g = rng(2);
    let mats: Vec<_> = (0..80).map(|_| random_pd(&mut g, 2, 1.0)).collect();
    let mut q: Vec<Vec<f64>> = (0..80)
        .map(|_| vec![1.0 + 0.1 * normal(&mut g), 2.0 + 0.1 * normal(&mut g)])
        .collect();
    q[50][1] = 100.0;
    let (c, qq, rep) =
        clean_outliers(&cov_panel(mats.clone()), &quart_panel(q.clone()), 5.0).unwrap();
    assert_eq!(rep.flagged_dates, vec![50]);
    assert_eq!(c.matrices()[50], mats[49]);
    assert_eq!(qq.rows[50], q[49]);
}

#[test]
fn lower_threshold_flags_at_least_as_many_days() {
    let mut g = rng(8);
    let mats: Vec<_> = (0..200)
        .map(|_| {
            let m = random_pd(&mut g, 2, 0.1);
            if normal(&mut g) > 2.3 {
                m * 6.0
            } else {
                m
            }
        })
        .collect();
    let q: Vec<Vec<f64>> = (0..200)
        .map(|_| vec![normal(&mut g).powi(4), normal(&mut g).powi(4)])
        .collect();
    let cov = cov_panel(mats);
    let qp = quart_panel(q);
    let mut last = usize::MAX;
    for k in [1.0, 2.0, 3.0, 5.0, 10.0, 20.0] {
        let (_, _, rep) = clean_outliers(&cov, &qp, k).unwrap();
        assert!(rep.flagged_dates.len() <= last);
        last = rep.flagged_dates.len();
    }
}

#[test]
fn panel_validation() {
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(CovPanel::new(dates(1), vec!["a".into(), "b".into()], vec![bad]).is_err());
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.2, 1.0]);
    assert!(matches!(
        CovPanel::new(dates(1), vec!["a".into(), "b".into()], vec![asym]),
        Err(Error::Symmetry { .. })
    ));
    let d = vec!["2001-01-02".to_string(), "2001-01-01".to_string()];
    assert!(DatedPanel::new(d, vec!["a".into()], vec![vec![1.0], vec![1.0]]).is_err());
    assert!(
        VolPanel::new(DatedPanel::new(dates(1), vec!["a".into()], vec![vec![-1.0]]).unwrap())
            .is_err()
    );
}

#[test]
fn cov_panel_views() {
    let mut g = rng(4);
    let mats: Vec<_> = (0..5).map(|_| random_pd(&mut g, 3, 0.2)).collect();
    let p = cov_panel(mats.clone());
    assert_eq!(
        p.vech_column_names(),
        ["v_1_1", "v_2_1", "v_3_1", "v_2_2", "v_3_2", "v_3_3"]
    );
    let v = p.variances();
    assert_eq!(v.rows[2][1], mats[2][(1, 1)]);
    let c = p.correlations().unwrap();
    assert_eq!(c.n_assets(), 3);
    let r = corr_from_strict_lower(&c.rows[1], 3);
    let back = compose_drd(&decompose_drd(&mats[1]).unwrap().std_devs, &r).unwrap();
    assert!((back - &mats[1]).norm() < 1e-12 * mats[1].norm());
    let round =
        CovPanel::from_vech_rows(p.dates().to_vec(), p.asset_ids().to_vec(), &p.vech_rows())
            .unwrap();
    assert_eq!(round, p);
}

fn symmetric(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1e3..1e3f64, n * n).prop_map(move |v| {
        let a = DMatrix::from_vec(n, n, v);
        &a + a.transpose()
    })
}

fn pd_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..7).prop_flat_map(|n| {
        (prop::collection::vec(-3.0..3.0f64, n * n), 1e-3..2.0f64).prop_map(move |(v, r)| {
            let a = DMatrix::from_vec(n, n, v);
            &a * a.transpose() + DMatrix::identity(n, n) * r
        })
    })
}

proptest! {
    #[test]
    fn vech_roundtrip_is_exact(s in (1usize..8).prop_flat_map(symmetric)) {
        let v = vech(&s).unwrap();
        prop_assert_eq!(v.len(), s.nrows() * (s.nrows() + 1) / 2);
        prop_assert_eq!(unvech(v.as_slice()).unwrap(), s.clone());
        prop_assert_eq!(vech(&unvech(v.as_slice()).unwrap()).unwrap(), v);
    }

    #[test]
    fn drd_roundtrip(s in pd_matrix()) {
        let d = decompose_drd(&s).unwrap();
        for i in 0..s.nrows() {
            prop_assert_eq!(d.corr[(i, i)], 1.0);
        }
        let back = compose_drd(&d.std_devs, &d.corr).unwrap();
        prop_assert!((back - &s).norm() <= 1e-12 * s.norm());
    }

    #[test]
    fn lag_one_is_a_shift(x in prop::collection::vec(-10.0..10.0f64, 2..60)) {
        let a = lag_aggregate(&x, 1).unwrap();
        prop_assert_eq!(a[0], None);
        for t in 1..x.len() {
            prop_assert_eq!(a[t], Some(x[t - 1]));
        }
    }

    #[test]
    fn lag_aggregate_matches_window_mean(x in prop::collection::vec(0.0..10.0f64, 25..60), j in 1usize..21) {
        let a = lag_aggregate(&x, j).unwrap();
        for t in j..x.len() {
            let m = x[t - j..t].iter().sum::<f64>() / j as f64;
            prop_assert!((a[t].unwrap() - m).abs() <= 1e-12 * m.abs().max(1.0));
        }
    }
}
