//! BFGS quasi-Newton minimizer with a backtracking line search.

/// Stopping rules for [`minimize`].
#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Convergence when `max_k |∂f/∂x_k| ≤ gradient_tolerance`.
    pub gradient_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

impl Minimum {
    pub fn gradient_norm(&self) -> f64 {
        inf_norm(&self.gradient)
    }
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
/// Relative size of objective changes treated as rounding noise.
const NOISE: f64 = 1e-14;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` starting at `x0`. The closure returns the value and gradient,
/// or `None` when the point is infeasible; non-finite values are treated the
/// same way and the line search backs off.
pub fn minimize<F>(f: F, x0: &[f64], opts: BfgsOptions) -> Option<Minimum>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let eval = |x: &[f64]| f(x).filter(|(v, g)| v.is_finite() && g.iter().all(|c| c.is_finite()));
    let (mut fx, mut gx) = eval(x0)?;
    let mut x = x0.to_vec();
    let mut h = identity(n);
    let mut h_is_identity = true;
    let mut history = vec![fx];
    let mut iterations = 0;
    let mut converged = inf_norm(&gx) <= opts.gradient_tolerance;

    while !converged && iterations < opts.max_iterations {
        let mut dir = mat_vec(&h, &gx).into_iter().map(|v| -v).collect::<Vec<_>>();
        let mut slope = dot(&gx, &dir);
        if !(slope < 0.0) {
            h = identity(n);
            h_is_identity = true;
            dir = gx.iter().map(|v| -v).collect();
            slope = dot(&gx, &dir);
        }
        let mut step = if h_is_identity { (1.0 / inf_norm(&gx)).min(1.0) } else { 1.0 };
        let g_norm = inf_norm(&gx);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            if let Some((ft, gt)) = eval(&trial) {
                let armijo = ft <= fx + ARMIJO_C1 * step * slope;
                // Near the optimum the decrease can fall below the resolution
                // of the objective; accept a step that does not increase f
                // beyond rounding and reduces the gradient.
                let within_noise = ft <= fx + NOISE * fx.abs().max(1.0) && inf_norm(&gt) < g_norm;
                if armijo || within_noise {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= BACKTRACK;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if h_is_identity {
                break;
            }
            h = identity(n);
            h_is_identity = true;
            continue;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if h_is_identity {
                let scale = sy / dot(&y, &y);
                h.iter_mut().flatten().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &y, sy);
            h_is_identity = false;
        }
        x = x_new;
        fx = f_new;
        gx = g_new;
        history.push(fx);
        iterations += 1;
        converged = inf_norm(&gx) <= opts.gradient_tolerance;
    }

    Some(Minimum { x, value: fx, gradient: gx, iterations, converged, history })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Inverse-Hessian update `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
        }
    }
}
