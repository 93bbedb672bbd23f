//! Bound-constrained maximizers for hyperparameter estimation: differential
//! evolution and a limited-memory projected quasi-Newton method, plus
//! finite-difference gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{c, Error, Result, Scalar};

/// Box constraints, componentwise `lo < hi`.
#[derive(Debug, Clone)]
pub struct Bounds<F> {
    lo: Vec<F>,
    hi: Vec<F>,
}

impl<F: Scalar> Bounds<F> {
    pub fn new(lo: Vec<F>, hi: Vec<F>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(&l, &h)| !(l < h)) {
            return Err(Error::InvalidConfig("bounds require lo < hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[F] {
        &self.lo
    }

    pub fn hi(&self) -> &[F] {
        &self.hi
    }

    pub fn contains(&self, x: &[F]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l && v <= h)
    }

    pub fn clamp(&self, x: &mut [F]) {
        for j in 0..x.len() {
            if x[j] < self.lo[j] {
                x[j] = self.lo[j];
            } else if x[j] > self.hi[j] {
                x[j] = self.hi[j];
            }
        }
    }
}

/// How a population of candidates is evaluated within one DE generation.
/// Candidates are fixed before evaluation and selection runs in index order,
/// so both schedules produce identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSchedule {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone)]
pub struct OptimResult<F> {
    pub x_best: Vec<F>,
    pub f_best: F,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Option<Vec<(usize, F)>>,
}

const DE_F: f64 = 0.8;
const DE_CR: f64 = 0.9;
const DE_STAGNATION_LIMIT: usize = 30;

/// DE/rand/1/bin maximizer with bound clamping.
///
/// The objective may return negative infinity for infeasible points;
/// such candidates lose every selection. Deterministic for a given seed.
pub fn differential_evolution<F, O>(
    objective: &O,
    bounds: &Bounds<F>,
    population: usize,
    iterations: usize,
    seed: u64,
    schedule: EvalSchedule,
) -> Result<OptimResult<F>>
where
    F: Scalar,
    O: Fn(&[F]) -> F + Sync,
{
    if population < 4 {
        return Err(Error::InvalidConfig(format!(
            "DE population must be >= 4, got {population}"
        )));
    }
    let d = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let uniform = |rng: &mut ChaCha8Rng, lo: F, hi: F| -> F {
        lo + c::<F>(rng.gen::<f64>()) * (hi - lo)
    };

    let mut pop: Vec<Vec<F>> = (0..population)
        .map(|_| {
            (0..d)
                .map(|j| uniform(&mut rng, bounds.lo[j], bounds.hi[j]))
                .collect()
        })
        .collect();

    let evaluate = |candidates: &[Vec<F>]| -> Vec<F> {
        match schedule {
            EvalSchedule::Sequential => candidates.iter().map(|x| objective(x)).collect(),
            EvalSchedule::Parallel => candidates.par_iter().map(|x| objective(x)).collect(),
        }
    };

    let mut fitness = evaluate(&pop);
    let mut evaluations = population;

    let mut best = argmax(&fitness);
    let mut x_best = pop[best].clone();
    let mut f_best = fitness[best];
    let mut trace = vec![(0usize, f_best)];
    let mut stagnant = 0usize;
    let mut converged = false;

    for gen in 1..=iterations {
        // all randomness is drawn sequentially before any evaluation
        let mut trials: Vec<Vec<F>> = Vec::with_capacity(population);
        for i in 0..population {
            let mut idx = [0usize; 3];
            for slot in 0..3 {
                loop {
                    let r = rng.gen_range(0..population);
                    if r != i && !idx[..slot].contains(&r) {
                        idx[slot] = r;
                        break;
                    }
                }
            }
            let (r1, r2, r3) = (idx[0], idx[1], idx[2]);
            let jrand = rng.gen_range(0..d);
            let mut trial = pop[i].clone();
            for j in 0..d {
                if j == jrand || rng.gen::<f64>() < DE_CR {
                    trial[j] = pop[r1][j] + c::<F>(DE_F) * (pop[r2][j] - pop[r3][j]);
                }
            }
            bounds.clamp(&mut trial);
            trials.push(trial);
        }

        let trial_fitness = evaluate(&trials);
        evaluations += population;

        let prev_best = f_best;
        for i in 0..population {
            if trial_fitness[i] >= fitness[i] {
                pop[i] = trials[i].clone();
                fitness[i] = trial_fitness[i];
            }
        }
        best = argmax(&fitness);
        if fitness[best] > f_best {
            f_best = fitness[best];
            x_best = pop[best].clone();
        }
        trace.push((gen, f_best));

        let improvement = if prev_best.is_finite() {
            (f_best - prev_best) / prev_best.abs().max(F::one())
        } else if f_best.is_finite() {
            F::infinity()
        } else {
            F::zero()
        };
        if improvement < c(1e-10) {
            stagnant += 1;
            if stagnant >= DE_STAGNATION_LIMIT {
                converged = true;
                break;
            }
        } else {
            stagnant = 0;
        }
    }

    Ok(OptimResult {
        x_best,
        f_best,
        evaluations,
        converged,
        trace: Some(trace),
    })
}

fn argmax<F: Scalar>(v: &[F]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

const QN_MEMORY: usize = 10;
const ARMIJO_C: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const PROJ_GRAD_TOL: f64 = 1e-6;
const MAX_BACKTRACKS: usize = 60;

/// Projected limited-memory quasi-Newton maximizer with Armijo backtracking.
///
/// Stops when the projected-gradient infinity norm falls below 1e-6 or
/// `max_iters` is reached. A failed line search ends the run with
/// `converged = false`; the best point seen is still returned.
pub fn bounded_quasi_newton<F, O, G>(
    objective: &O,
    gradient: &G,
    bounds: &Bounds<F>,
    x0: &[F],
    max_iters: usize,
) -> Result<OptimResult<F>>
where
    F: Scalar,
    O: Fn(&[F]) -> F,
    G: Fn(&[F]) -> Vec<F>,
{
    if !bounds.contains(x0) {
        return Err(Error::InfeasibleStart);
    }
    let d = bounds.dim();
    let mut x = x0.to_vec();
    let mut f = objective(&x);
    let mut g = gradient(&x);
    let mut evaluations = 1usize;

    // curvature pairs for the minimization of -f
    let mut pairs: Vec<(Vec<F>, Vec<F>)> = Vec::new();
    let mut trace = vec![(0usize, f)];
    let mut converged = false;

    for iter in 1..=max_iters {
        if projected_grad_norm(&x, &g, bounds) <= c(PROJ_GRAD_TOL) {
            converged = true;
            break;
        }

        let mut dir = ascent_direction(&g, &pairs);
        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                // fall back to steepest ascent
                dir = g.clone();
            }
            let mut step = F::one();
            for _ in 0..MAX_BACKTRACKS {
                let mut x_new: Vec<F> = (0..d).map(|j| x[j] + step * dir[j]).collect();
                bounds.clamp(&mut x_new);
                let delta: Vec<F> = (0..d).map(|j| x_new[j] - x[j]).collect();
                let slope = crate::linalg::dot(&g, &delta);
                if delta.iter().all(|v| *v == F::zero()) {
                    break;
                }
                let f_new = objective(&x_new);
                evaluations += 1;
                if f_new >= f + c::<F>(ARMIJO_C) * slope && f_new > f {
                    accepted = Some((x_new, f_new));
                    break;
                }
                step = step * c(ARMIJO_SHRINK);
            }
            if accepted.is_some() {
                break;
            }
        }

        let Some((x_new, f_new)) = accepted else {
            break; // line search failure; converged stays false
        };

        let g_new = gradient(&x_new);
        let s: Vec<F> = (0..d).map(|j| x_new[j] - x[j]).collect();
        // y for the equivalent minimization problem: -(g_new - g)
        let yv: Vec<F> = (0..d).map(|j| g[j] - g_new[j]).collect();
        let sy = crate::linalg::dot(&s, &yv);
        if sy > c(1e-12) {
            pairs.push((s, yv));
            if pairs.len() > QN_MEMORY {
                pairs.remove(0);
            }
        }

        x = x_new;
        f = f_new;
        g = g_new;
        trace.push((iter, f));
    }

    if !converged && projected_grad_norm(&x, &g, bounds) <= c(PROJ_GRAD_TOL) {
        converged = true;
    }

    Ok(OptimResult {
        x_best: x,
        f_best: f,
        evaluations,
        converged,
        trace: Some(trace),
    })
}

/// Infinity norm of the gradient projected onto the feasible directions at x.
fn projected_grad_norm<F: Scalar>(x: &[F], g: &[F], bounds: &Bounds<F>) -> F {
    let mut norm = F::zero();
    for j in 0..x.len() {
        let mut gj = g[j];
        let at_lo = x[j] <= bounds.lo[j];
        let at_hi = x[j] >= bounds.hi[j];
        if (at_lo && gj < F::zero()) || (at_hi && gj > F::zero()) {
            gj = F::zero();
        }
        if gj.abs() > norm {
            norm = gj.abs();
        }
    }
    norm
}

/// Two-loop recursion on the minimization form; returns an ascent direction
/// for the maximization problem.
fn ascent_direction<F: Scalar>(g: &[F], pairs: &[(Vec<F>, Vec<F>)]) -> Vec<F> {
    let d = g.len();
    // q = gradient of -f
    let mut q: Vec<F> = g.iter().map(|&v| -v).collect();
    let m = pairs.len();
    let mut alpha = vec![F::zero(); m];
    let mut rho = vec![F::zero(); m];
    for i in (0..m).rev() {
        let (s, y) = &pairs[i];
        rho[i] = F::one() / crate::linalg::dot(s, y);
        alpha[i] = rho[i] * crate::linalg::dot(s, &q);
        for j in 0..d {
            q[j] = q[j] - alpha[i] * y[j];
        }
    }
    let gamma = if let Some((s, y)) = pairs.last() {
        crate::linalg::dot(s, y) / crate::linalg::dot(y, y)
    } else {
        F::one()
    };
    let mut r: Vec<F> = q.iter().map(|&v| gamma * v).collect();
    for i in 0..m {
        let (s, y) = &pairs[i];
        let beta = rho[i] * crate::linalg::dot(y, &r);
        for j in 0..d {
            r[j] = r[j] + (alpha[i] - beta) * s[j];
        }
    }
    // descent direction for -f is -r; ascent for f is the same vector
    // negated once more, i.e. -(-r)... r is H * grad(-f); step is -r.
    let dir: Vec<F> = r.iter().map(|&v| -v).collect();
    // guard: must have positive slope along g, else caller falls back
    if crate::linalg::dot(&dir, g) > F::zero() {
        dir
    } else {
        g.to_vec()
    }
}

/// Central finite differences, switching to one-sided at active bounds.
pub fn finite_diff_grad<F, O>(objective: &O, x: &[F], h: F, bounds: Option<&Bounds<F>>) -> Vec<F>
where
    F: Scalar,
    O: Fn(&[F]) -> F,
{
    let d = x.len();
    let mut g = vec![F::zero(); d];
    let mut xp = x.to_vec();
    for j in 0..d {
        let (lo_ok, hi_ok) = match bounds {
            Some(b) => (x[j] - h >= b.lo[j], x[j] + h <= b.hi[j]),
            None => (true, true),
        };
        let orig = x[j];
        g[j] = if lo_ok && hi_ok {
            xp[j] = orig + h;
            let fp = objective(&xp);
            xp[j] = orig - h;
            let fm = objective(&xp);
            (fp - fm) / (h + h)
        } else if hi_ok {
            xp[j] = orig + h;
            let fp = objective(&xp);
            xp[j] = orig;
            (fp - objective(&xp)) / h
        } else {
            xp[j] = orig - h;
            let fm = objective(&xp);
            xp[j] = orig;
            (objective(&xp) - fm) / h
        };
        xp[j] = orig;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn bounds(lo: f64, hi: f64, d: usize) -> Bounds<f64> {
        Bounds::new(vec![lo; d], vec![hi; d]).unwrap()
    }

    #[test]
    fn de_finds_sphere_optimum() {
        let obj = |x: &[f64]| -x.iter().map(|v| v * v).sum::<f64>();
        let b = bounds(-5.0, 5.0, 2);
        let r =
            differential_evolution(&obj, &b, 20, 200, 42, EvalSchedule::Sequential).unwrap();
        assert!(r.x_best.iter().all(|v| v.abs() <= 1e-3), "{:?}", r.x_best);
    }

    #[test]
    fn de_plateau_stops_early() {
        let obj = |_: &[f64]| 1.0;
        let b = bounds(0.0, 1.0, 2);
        let r =
            differential_evolution(&obj, &b, 10, 500, 1, EvalSchedule::Sequential).unwrap();
        assert!(r.converged);
        assert!(r.trace.unwrap().len() < 100);
        assert!(b.contains(&r.x_best));
    }

    #[test]
    fn de_seed_determinism() {
        let obj = |x: &[f64]| -(x[0] - 0.3).powi(2) - (x[1] + 1.0).powi(2);
        let b = bounds(-2.0, 2.0, 2);
        let r1 =
            differential_evolution(&obj, &b, 12, 80, 7, EvalSchedule::Sequential).unwrap();
        let r2 =
            differential_evolution(&obj, &b, 12, 80, 7, EvalSchedule::Sequential).unwrap();
        assert_eq!(r1.x_best, r2.x_best);
        assert_eq!(r1.f_best, r2.f_best);
        assert_eq!(r1.trace, r2.trace);
    }

    #[test]
    fn de_parallel_matches_sequential() {
        let obj = |x: &[f64]| -x.iter().map(|v| (v - 0.25).powi(2)).sum::<f64>();
        let b = bounds(-1.0, 1.0, 3);
        let rs =
            differential_evolution(&obj, &b, 16, 60, 9, EvalSchedule::Sequential).unwrap();
        let rp = differential_evolution(&obj, &b, 16, 60, 9, EvalSchedule::Parallel).unwrap();
        assert_eq!(rs.x_best, rp.x_best);
        assert_eq!(rs.trace, rp.trace);
    }

    #[test]
    fn de_never_evaluates_outside_bounds() {
        let b = bounds(-1.5, 2.5, 3);
        let bc = b.clone();
        let hits = AtomicUsize::new(0);
        let obj = move |x: &[f64]| {
            assert!(bc.contains(x), "evaluated outside bounds: {x:?}");
            hits.fetch_add(1, Ordering::Relaxed);
            -x.iter().map(|v| v * v).sum::<f64>()
        };
        differential_evolution(&obj, &b, 8, 40, 3, EvalSchedule::Sequential).unwrap();
    }

    #[test]
    fn de_best_is_monotone() {
        let obj = |x: &[f64]| (x[0] * 7.0).sin() - x[1] * x[1];
        let b = bounds(-3.0, 3.0, 2);
        let r =
            differential_evolution(&obj, &b, 10, 100, 5, EvalSchedule::Sequential).unwrap();
        let tr = r.trace.unwrap();
        for w in tr.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn de_rejects_tiny_population() {
        let obj = |_: &[f64]| 0.0;
        let b = bounds(0.0, 1.0, 1);
        assert!(matches!(
            differential_evolution(&obj, &b, 3, 10, 0, EvalSchedule::Sequential),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn qn_quadratic_1d() {
        let obj = |x: &[f64]| -(x[0] - 0.3).powi(2);
        let grad = |x: &[f64]| finite_diff_grad(&obj, x, 1e-6, None);
        let b = bounds(0.0, 1.0, 1);
        let r = bounded_quasi_newton(&obj, &grad, &b, &[0.9], 100).unwrap();
        assert!((r.x_best[0] - 0.3).abs() < 1e-5, "{:?}", r.x_best);
        assert!(r.converged);
    }

    #[test]
    fn qn_active_bound() {
        let obj = |x: &[f64]| -x[0];
        let grad = |_: &[f64]| vec![-1.0];
        let b = bounds(0.0, 1.0, 1);
        let r = bounded_quasi_newton(&obj, &grad, &b, &[0.5], 100).unwrap();
        assert!(r.x_best[0].abs() < 1e-8);
        assert!(r.converged);
    }

    #[test]
    fn qn_quadratic_3d_matches_closed_form() {
        // f(x) = -(x - m)^T A (x - m)/2 with A SPD; maximizer is m.
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let m = [0.4, 0.6, 0.2];
        let obj = move |x: &[f64]| {
            let d: Vec<f64> = (0..3).map(|i| x[i] - m[i]).collect();
            let mut q = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    q += d[i] * a[i][j] * d[j];
                }
            }
            -0.5 * q
        };
        let grad = move |x: &[f64]| finite_diff_grad(&obj, x, 1e-6, None);
        let b = bounds(0.0, 1.0, 3);
        let r = bounded_quasi_newton(&obj, &grad, &b, &[0.9, 0.1, 0.9], 200).unwrap();
        for i in 0..3 {
            assert!((r.x_best[i] - m[i]).abs() < 1e-5, "{:?}", r.x_best);
        }
    }

    #[test]
    fn qn_infeasible_start() {
        let obj = |x: &[f64]| -x[0];
        let grad = |_: &[f64]| vec![-1.0];
        let b = bounds(0.0, 1.0, 1);
        assert!(matches!(
            bounded_quasi_newton(&obj, &grad, &b, &[2.0], 10),
            Err(Error::InfeasibleStart)
        ));
    }

    #[test]
    fn qn_monotone_objective_along_accepted_steps() {
        let obj = |x: &[f64]| -(x[0] - 0.2).powi(2) - (x[1] - 0.8).powi(4);
        let grad = |x: &[f64]| finite_diff_grad(&obj, x, 1e-6, None);
        let b = bounds(0.0, 1.0, 2);
        let r = bounded_quasi_newton(&obj, &grad, &b, &[0.9, 0.1], 100).unwrap();
        let tr = r.trace.unwrap();
        for w in tr.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn fd_grad_polynomial() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let g = finite_diff_grad(&f, &[1.0, 2.0], 1e-5, None);
        assert!((g[0] - 2.0).abs() < 1e-6);
        assert!((g[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn fd_grad_constant_is_zero() {
        let f = |_: &[f64]| 3.5;
        let g = finite_diff_grad(&f, &[0.1, 0.2, 0.3], 1e-5, None);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fd_grad_cubic() {
        let f = |x: &[f64]| x[0].powi(3);
        let g = finite_diff_grad(&f, &[2.0], 1e-4, None);
        assert!((g[0] - 12.0).abs() < 1e-6);
    }

    #[test]
    fn fd_grad_one_sided_at_bound() {
        let f = |x: &[f64]| x[0] * 2.0;
        let b = bounds(0.0, 1.0, 1);
        let g = finite_diff_grad(&f, &[0.0], 1e-5, Some(&b));
        assert!((g[0] - 2.0).abs() < 1e-8);
    }
}
