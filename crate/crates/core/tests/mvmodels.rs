mod common;

use common::{back_mean, normal, random_pd, rng};
use harcov::measures::unvech;
use harcov::mvmodels::*;
use harcov::Error;
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

/// Element-wise vech HAR panel; `extra(e, t, s)` adds an optional term.
fn sim_panel(
    g: &mut ChaCha8Rng,
    alpha0: &[f64],
    a: [f64; 3],
    noise: f64,
    n: usize,
    mut extra: impl FnMut(usize, usize, &[f64]) -> f64,
) -> Vec<Vec<f64>> {
    let k = alpha0.len();
    let mut series: Vec<Vec<f64>> = (0..k)
        .map(|e| (0..20).map(|_| alpha0[e] * 3.0 + normal(g)).collect())
        .collect();
    for t in 20..n {
        for e in 0..k {
            let s = &series[e];
            let v = alpha0[e]
                + a[0] * s[t - 1]
                + a[1] * back_mean(s, t, 5)
                + a[2] * back_mean(s, t, 20)
                + extra(e, t, s)
                + noise * normal(g);
            series[e].push(v);
        }
    }
    (0..n)
        .map(|t| series.iter().map(|s| s[t]).collect())
        .collect()
}

#[test]
fn noiseless_mhar_recovery() {
    let mut g = rng(1);
    let alpha0 = [0.5, 0.1, 0.8, -0.05, 0.2, 1.1];
    let a = [0.2, 0.4, 0.3];
    let rows = sim_panel(&mut g, &alpha0, a, 0.0, 60, |_, _, _| 0.0);
    let fit = fit_mhar(&rows).unwrap();
    assert!(
        (fit.alpha1 - a[0]).abs() < 1e-8
            && (fit.alpha2 - a[1]).abs() < 1e-8
            && (fit.alpha3 - a[2]).abs() < 1e-8
    );
    for (e, t) in fit.alpha0.iter().zip(alpha0) {
        assert!((e - t).abs() < 1e-8);
    }
    assert_eq!(fit.alpha1q, None);
    assert_eq!(fit.n_obs, 40);
}

#[test]
fn constant_panel_is_collinear() {
    let rows = vec![vec![1.0, 0.2, 2.0]; 50];
    assert!(matches!(fit_mhar(&rows), Err(Error::Collinearity { .. })));
    assert!(matches!(
        fit_mhar(&rows[..20]),
        Err(Error::InsufficientHistory { .. })
    ));
}

#[test]
fn mhar_slopes_within_four_standard_errors() {
    let mut g = rng(2);
    let a = [0.2, 0.4, 0.3];
    let rows = sim_panel(&mut g, &[0.4, 0.1, 0.6], a, 0.5, 3000, |_, _, _| 0.0);
    let fit = fit_mhar(&rows).unwrap();
    let est = [fit.alpha1, fit.alpha2, fit.alpha3];
    for i in 0..3 {
        assert!(
            (est[i] - a[i]).abs() < 4.0 * fit.slope_std_errors[i],
            "{est:?} {:?}",
            fit.slope_std_errors
        );
    }
}

#[test]
fn mharq_recovery_and_degenerate_pi() {
    let mut g = rng(3);
    let pi: Vec<Vec<f64>> = (0..3000)
        .map(|_| (0..3).map(|_| 0.5 + normal(&mut g).abs()).collect())
        .collect();
    let a = [0.3, 0.3, 0.2];
    let aq = -0.05;
    let rows = sim_panel(&mut g, &[0.4, 0.1, 0.6], a, 0.3, 3000, |e, t, s| {
        aq * pi[t - 1][e] * s[t - 1]
    });
    let fit = fit_mharq(&rows, &pi).unwrap();
    let q = fit.alpha1q.unwrap();
    assert!(
        (q - aq).abs() < 4.0 * fit.slope_std_errors[3],
        "{q} {:?}",
        fit.slope_std_errors
    );

    let zero = vec![vec![0.0; 3]; rows.len()];
    let dropped = fit_mharq(&rows, &zero).unwrap();
    let plain = fit_mhar(&rows).unwrap();
    assert!(dropped.q_dropped && dropped.alpha1q.is_none());
    assert_eq!(
        (dropped.alpha1, dropped.alpha2, dropped.alpha3),
        (plain.alpha1, plain.alpha2, plain.alpha3)
    );

    let ones = vec![vec![1.0; 3]; rows.len()];
    assert!(matches!(
        fit_mharq(&rows, &ones),
        Err(Error::Collinearity { .. })
    ));
    assert!(matches!(
        fit_mharq(&rows, &pi[1..]),
        Err(Error::Dimension(_))
    ));
}

fn vech(m: &DMatrix<f64>) -> Vec<f64> {
    harcov::measures::vech(m).unwrap().as_slice().to_vec()
}

fn clip_oracle(a: &DMatrix<f64>) -> DMatrix<f64> {
    let e = a.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0)));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

fn mv_fit(alpha0: Vec<f64>, a: [f64; 3]) -> MvFit {
    let k = alpha0.len();
    MvFit {
        alpha0: DVector::from_vec(alpha0),
        alpha1: a[0],
        alpha2: a[1],
        alpha3: a[2],
        alpha1q: None,
        q_dropped: false,
        resid_scale: DVector::from_element(k, 1.0),
        slope_std_errors: vec![0.0; 3],
        n_obs: 100,
    }
}

#[test]
fn forecast_mv_examples() {
    let mut g = rng(4);
    let hist: Vec<Vec<f64>> = (0..25).map(|_| vech(&random_pd(&mut g, 3, 0.1))).collect();

    let rw = forecast_mv(&mv_fit(vec![0.0; 6], [1.0, 0.0, 0.0]), &hist, None).unwrap();
    assert!(!rw.projected);
    assert!((rw.matrix - unvech(&hist[24]).unwrap()).amax() < 1e-14);

    let good = vech(&random_pd(&mut g, 3, 0.1));
    let c = forecast_mv(&mv_fit(good.clone(), [0.0; 3]), &hist, None).unwrap();
    assert_eq!(c.matrix, unvech(&good).unwrap());

    // indefinite intercept: nearest PSD matrix by eigenvalue clipping
    let bad = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 1.0, 0.3, 0.0, 0.3, 2.0]);
    let p = forecast_mv(&mv_fit(vech(&bad), [0.0; 3]), &hist, None).unwrap();
    assert!(p.projected);
    let want = clip_oracle(&bad);
    assert!((&p.matrix - &want).amax() < 1e-10);
    for _ in 0..200 {
        let other = random_pd(&mut g, 3, 0.0) * 0.5;
        assert!((&bad - &p.matrix).norm() <= (&bad - other).norm() + 1e-12);
    }

    // negative definite intercept: zero after clipping, diagonal floored
    let neg = vech(&(-DMatrix::identity(2, 2)));
    let hist2: Vec<Vec<f64>> = vec![vec![1.0, 0.0, 1.0]; 20];
    let f = forecast_mv(&mv_fit(neg, [0.0; 3]), &hist2, None).unwrap();
    assert_eq!(f.matrix, DMatrix::identity(2, 2) * DIAG_FLOOR);
}

#[test]
fn mharq_forecast_needs_pi() {
    let mut fit = mv_fit(vec![0.0; 3], [1.0, 0.0, 0.0]);
    fit.alpha1q = Some(-0.5);
    let hist = vec![vec![2.0, 0.5, 1.0]; 20];
    assert!(matches!(
        forecast_mv(&fit, &hist, None),
        Err(Error::Argument(_))
    ));
    let v = forecast_mv_vech(&fit, &hist, Some(&[1.0, 2.0, 0.0])).unwrap();
    assert_eq!(v.as_slice(), &[2.0 - 1.0, 0.5 - 0.5, 1.0]);
}

fn corr_panel(
    g: &mut ChaCha8Rng,
    gam: [f64; 3],
    rbar: f64,
    noise: f64,
    n: usize,
    k: usize,
) -> Vec<Vec<f64>> {
    let mut series: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..20).map(|_| rbar + noise * normal(g)).collect())
        .collect();
    for t in 20..n {
        for s in series.iter_mut() {
            let v = rbar
                + gam[0] * (s[t - 1] - rbar)
                + gam[1] * (back_mean(s, t, 5) - rbar)
                + gam[2] * (back_mean(s, t, 20) - rbar)
                + noise * normal(g);
            s.push(v);
        }
    }
    (0..n)
        .map(|t| series.iter().map(|s| s[t]).collect())
        .collect()
}

#[test]
fn corr_har_recovery() {
    let mut g = rng(5);
    let gam = [0.3, 0.3, 0.3];
    let rows = corr_panel(&mut g, gam, 0.3, 0.05, 3000, 6);
    let fit = fit_corr_har(&rows).unwrap();
    assert!(!fit.constrained);
    for i in 0..3 {
        assert!(
            (fit.gammas[i] - gam[i]).abs() < 4.0 * fit.std_errors[i],
            "{:?} {:?}",
            fit.gammas,
            fit.std_errors
        );
    }
    assert_eq!(fit.n_assets(), 4);
    for e in 0..6 {
        let m = rows.iter().map(|r| r[e]).sum::<f64>() / rows.len() as f64;
        assert!((fit.rbar[e] - m).abs() < 1e-14);
    }
}

/// Residual sum of squares of the demeaned pooled correlation regression.
fn corr_rss(rows: &[Vec<f64>], rbar: &[f64], gam: [f64; 3]) -> f64 {
    let mut q = 0.0;
    for e in 0..rbar.len() {
        let s: Vec<f64> = rows.iter().map(|r| r[e]).collect();
        for t in 20..s.len() {
            let pred = rbar[e]
                + gam[0] * (s[t - 1] - rbar[e])
                + gam[1] * (back_mean(&s, t, 5) - rbar[e])
                + gam[2] * (back_mean(&s, t, 20) - rbar[e]);
            q += (s[t] - pred).powi(2);
        }
    }
    q
}

#[test]
fn iid_noise_projects_onto_the_valid_region() {
    let mut hit = 0;
    for seed in 0..6 {
        let mut g = rng(60 + seed);
        let rows = corr_panel(&mut g, [0.0; 3], 0.2, 0.1, 400, 3);
        let fit = fit_corr_har(&rows).unwrap();
        assert!(fit.gammas.iter().all(|v| *v >= 0.0));
        assert!(fit.gammas.iter().sum::<f64>() <= 1.0 - CORR_SUM_MARGIN);
        assert_eq!(fit.constrained, fit.ols_gammas.iter().any(|v| *v <= 0.0));
        if fit.constrained {
            hit += 1;
            // no feasible grid point does better
            let best = corr_rss(&rows, &fit.rbar, fit.gammas);
            let steps = 20;
            for i in 0..=steps {
                for j in 0..=steps - i {
                    for k in 0..=steps - i - j {
                        let cand =
                            [i, j, k].map(|v| v as f64 / steps as f64 * (1.0 - CORR_SUM_MARGIN));
                        assert!(best <= corr_rss(&rows, &fit.rbar, cand) + 1e-9);
                    }
                }
            }
        }
    }
    assert!(hit > 0, "no seed triggered the constraint");
}

#[test]
fn constant_corr_panel_is_collinear() {
    let rows = vec![vec![0.3, 0.1, -0.2]; 40];
    assert!(matches!(
        fit_corr_har(&rows),
        Err(Error::Collinearity { .. })
    ));
}

fn corr_fit(rbar: Vec<f64>, gammas: [f64; 3]) -> CorrFit {
    CorrFit {
        rbar,
        gammas,
        ols_gammas: gammas,
        std_errors: [0.0; 3],
        constrained: false,
        n_obs: 100,
    }
}

fn random_corr_row(g: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let s = random_pd(g, n, 0.2);
    let d: Vec<f64> = (0..n).map(|i| s[(i, i)].sqrt()).collect();
    let mut out = Vec::new();
    for j in 0..n {
        for i in j + 1..n {
            out.push(s[(i, j)] / (d[i] * d[j]));
        }
    }
    out
}

#[test]
fn forecast_corr_examples() {
    let mut g = rng(7);
    let hist: Vec<Vec<f64>> = (0..20).map(|_| random_corr_row(&mut g, 4)).collect();
    let rbar = random_corr_row(&mut g, 4);

    let last = forecast_corr(&corr_fit(rbar.clone(), [1.0, 0.0, 0.0]), &hist).unwrap();
    let want = harcov::measures::corr_from_strict_lower(&hist[19], 4);
    assert!((last.matrix - want).amax() < 1e-15);

    let mean = forecast_corr(&corr_fit(rbar.clone(), [0.0; 3]), &hist).unwrap();
    assert_eq!(
        mean.matrix,
        harcov::measures::corr_from_strict_lower(&rbar, 4)
    );

    for _ in 0..50 {
        let hist: Vec<Vec<f64>> = (0..20).map(|_| random_corr_row(&mut g, 5)).collect();
        let rbar = random_corr_row(&mut g, 5);
        let f = forecast_corr(&corr_fit(rbar, [0.3, 0.3, 0.3]), &hist).unwrap();
        assert!(!f.projected);
        assert!(f.matrix.clone().symmetric_eigen().eigenvalues.min() > -1e-12);
        assert!((0..5).all(|i| f.matrix[(i, i)] == 1.0));
    }
}

#[test]
fn drd_forecast_keeps_variances() {
    let r = DMatrix::from_row_slice(2, 2, &[1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0]);
    let s = forecast_drd(&[4.0, 9.0], &r).unwrap();
    assert!((s - DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 9.0])).amax() < 1e-14);
    assert!(matches!(
        forecast_drd(&[1.0, 0.0], &r),
        Err(Error::DegenerateVariance { index: 1, .. })
    ));
}
