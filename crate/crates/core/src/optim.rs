//! Derivative-free Nelder–Mead simplex minimisation.

/// Stopping rules for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    /// Stop once `f(worst) - f(best)` across the simplex falls below this.
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self {
            f_tol: 1e-8,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub n_iter: usize,
    pub n_eval: usize,
    pub converged: bool,
}

/// Minimises `f` from `x0` with initial simplex edges `steps`.
///
/// Non-finite objective values are treated as +∞, so the returned point is
/// never worse than `x0`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], opts: NmOptions) -> NmResult
where
    F: FnMut(&[f64]) -> f64,
{
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let n = x0.len();
    assert_eq!(steps.len(), n, "one step per coordinate");
    let mut n_eval = 0usize;
    let mut eval = |x: &[f64], n_eval: &mut usize| {
        *n_eval += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut n_eval)).collect();

    let mut n_iter = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let point = |c: &[f64], w: &[f64], coef: f64, out: &mut Vec<f64>| {
        for i in 0..c.len() {
            out[i] = c[i] + coef * (w[i] - c[i]);
        }
    };

    loop {
        // order by value; ties keep insertion order
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        if spread.is_finite() && spread < opts.f_tol {
            converged = true;
            break;
        }
        if n_iter >= opts.max_iter {
            break;
        }
        n_iter += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..n] {
            for i in 0..n {
                centroid[i] += v[i] / n as f64;
            }
        }

        point(&centroid, &simplex[n], -ALPHA, &mut trial);
        let f_r = eval(&trial, &mut n_eval);
        if f_r < values[0] {
            let reflected = trial.clone();
            point(&centroid, &simplex[n], -GAMMA, &mut trial);
            let f_e = eval(&trial, &mut n_eval);
            if f_e < f_r {
                simplex[n].copy_from_slice(&trial);
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            simplex[n].copy_from_slice(&trial);
            values[n] = f_r;
            continue;
        }
        // contraction, outside if the reflection improved on the worst point
        let (coef, target) = if f_r < values[n] {
            (-RHO, f_r)
        } else {
            (RHO, values[n])
        };
        point(&centroid, &simplex[n], coef, &mut trial);
        let f_c = eval(&trial, &mut n_eval);
        if f_c < target {
            simplex[n].copy_from_slice(&trial);
            values[n] = f_c;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].clone();
        for k in 1..=n {
            for i in 0..n {
                simplex[k][i] = best[i] + SIGMA * (simplex[k][i] - best[i]);
            }
            values[k] = eval(&simplex[k], &mut n_eval);
        }
    }

    NmResult {
        x: simplex[0].clone(),
        f: values[0],
        n_iter,
        n_eval,
        converged,
    }
}
