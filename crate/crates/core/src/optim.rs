//! Box-constrained local ascent used by the acquisition optimizer, the
//! recommender and hyperparameter fitting.

#[derive(Debug, Clone, Copy)]
pub struct AscentOptions {
    pub max_iters: usize,
    pub initial_step: f64,
    /// Stop once a full iteration moves no coordinate by more than this.
    pub x_tol: f64,
    /// Stop once the accepted improvement is below `f_tol * (1 + |f|)`.
    pub f_tol: f64,
    pub max_halvings: usize,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            initial_step: 0.1,
            x_tol: 1e-8,
            f_tol: 1e-12,
            max_halvings: 30,
        }
    }
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Projected gradient ascent with Barzilai-Borwein step sizes and Armijo
/// backtracking. Only improving steps are accepted, so the returned value is
/// never below the value at `x0` (after projection).
///
/// `f` returns `None` when the objective cannot be evaluated; such points are
/// treated as infeasible by the line search.
pub fn projected_ascent<F>(
    mut x: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    mut f: F,
    opts: &AscentOptions,
) -> Option<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    let mut step = opts.initial_step;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;

    for _ in 0..opts.max_iters {
        if let Some((px, pg)) = &prev {
            // BB1 step for ascent: s's / -s'y with y = g - pg.
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..x.len() {
                let s = x[i] - px[i];
                let y = g[i] - pg[i];
                ss += s * s;
                sy += s * y;
            }
            if sy < 0.0 && ss > 0.0 {
                step = (ss / -sy).clamp(1e-10, 1e6);
            } else {
                step = (step * 2.0).min(1e6);
            }
        }

        let mut accepted = None;
        let mut t = step;
        for _ in 0..=opts.max_halvings {
            let mut xn: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + t * gi).collect();
            project(&mut xn, lo, hi);
            let dir: f64 = xn.iter().zip(&x).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
            if dir <= 0.0 {
                break;
            }
            if let Some((fn_, gn)) = f(&xn) {
                if fn_.is_finite() && fn_ >= fx + 1e-4 * dir {
                    accepted = Some((xn, fn_, gn, t));
                    break;
                }
            }
            t *= 0.5;
        }

        let Some((xn, fn_, gn, t)) = accepted else {
            break;
        };
        let moved = xn
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let gain = fn_ - fx;
        prev = Some((std::mem::replace(&mut x, xn), std::mem::replace(&mut g, gn)));
        fx = fn_;
        step = t;
        if moved < opts.x_tol || gain < opts.f_tol * (1.0 + fx.abs()) {
            break;
        }
    }
    Some((x, fx))
}

/// Central finite-difference gradient, with one-sided differences at the
/// bounds.
pub fn fd_gradient<F>(x: &[f64], lo: &[f64], hi: &[f64], h: f64, mut f: F) -> Option<Vec<f64>>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let up = (x[i] + h).min(hi[i]);
        let dn = (x[i] - h).max(lo[i]);
        if up <= dn {
            continue;
        }
        xp[i] = up;
        let fu = f(&xp)?;
        xp[i] = dn;
        let fd = f(&xp)?;
        xp[i] = x[i];
        g[i] = (fu - fd) / (up - dn);
    }
    Some(g)
}
