//! Box-constrained Nelder-Mead used for likelihood and variance search.

/// Settings for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when every vertex is within this distance of the best one (per coordinate).
    pub x_tol: f64,
    /// Initial step as a fraction of each coordinate's box width.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_evals: 400,
            f_tol: 1e-9,
            x_tol: 1e-7,
            initial_step: 0.15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Minimizes `f` over the box `[lower, upper]`, starting at `start`.
///
/// Non-finite values are treated as `+inf`. Coordinates whose bounds
/// coincide are held fixed. The returned value never exceeds `f(start)`.
pub fn nelder_mead<F>(
    mut f: F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: SimplexOptions,
) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let clamp = |x: &mut [f64]| {
        for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
            *v = v.clamp(*lo, *hi);
        }
    };
    let mut eval = |x: &[f64], count: &mut usize| {
        *count += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut evals = 0;
    let mut x0 = start.to_vec();
    clamp(&mut x0);
    let free: Vec<usize> = (0..x0.len()).filter(|&i| upper[i] > lower[i]).collect();
    let f0 = eval(&x0, &mut evals);
    if free.is_empty() {
        return SimplexResult {
            x: x0,
            value: f0,
            evals,
        };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.clone(), f0)];
    for &i in &free {
        let width = upper[i] - lower[i];
        let mut v = x0.clone();
        let step = opts.initial_step * width;
        // step away from the nearer bound
        v[i] = if v[i] + step <= upper[i] {
            v[i] + step
        } else {
            v[i] - step
        };
        let fv = eval(&v, &mut evals);
        simplex.push((v, fv));
    }

    let n = free.len();
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = if best.is_finite() && worst.is_finite() {
            (worst - best).abs()
        } else {
            f64::INFINITY
        };
        let anchor = &simplex[0].0;
        let size = simplex[1..]
            .iter()
            .flat_map(|(v, _)| free.iter().map(|&i| (v[i] - anchor[i]).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol || size <= opts.x_tol {
            break;
        }

        let mut centroid = vec![0.0; x0.len()];
        for (v, _) in &simplex[..n] {
            for (c, vi) in centroid.iter_mut().zip(v) {
                *c += vi / n as f64;
            }
        }
        let toward = |coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + coef * (w - c))
                .collect();
            clamp(&mut p);
            p
        };

        let xr = toward(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = toward(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = toward(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = toward(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for k in 1..=n {
                    let mut p: Vec<f64> = best_x
                        .iter()
                        .zip(&simplex[k].0)
                        .map(|(b, v)| b + 0.5 * (v - b))
                        .collect();
                    clamp(&mut p);
                    let fp = eval(&p, &mut evals);
                    simplex[k] = (p, fp);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    SimplexResult { x, value, evals }
}
