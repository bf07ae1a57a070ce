use std::str::FromStr;

use super::{cv_step_sizes, dual_ascent, next_t, primal_from_dual, ReconProblem, StepMode};
use crate::error::{Error, Result};
use crate::field::{DualField, Image, VectorSpace};
use crate::linops::{gradient_step, LinearMap};

/// `x + a (x - y)`, entrywise.
pub(crate) fn extrapolate<V: VectorSpace>(x: &V, y: &V, a: f64) -> V {
    let mut out = x.clone();
    for (o, yi) in out.as_mut_slice().iter_mut().zip(y.as_slice()) {
        *o += a * (*o - *yi);
    }
    out
}

/// Generic FISTA loop.
///
/// `forward_step` maps `u_hat` to `u_hat - gamma grad f(u_hat)` and `prox`
/// applies `prox_{gamma lambda r}`. `observe(k, u_k)` is called after every
/// iteration with `k = 1..=iters`.
pub fn fista(
    u0: &Image,
    iters: usize,
    mut forward_step: impl FnMut(&Image) -> Image,
    mut prox: impl FnMut(&Image) -> Result<Image>,
    mut observe: impl FnMut(usize, &Image),
) -> Result<Image> {
    let mut u = u0.clone();
    let mut u_hat = u0.clone();
    let mut t = 1.0;
    for k in 0..iters {
        let z = forward_step(&u_hat);
        let u_next = prox(&z)?;
        let t_next = next_t(t);
        u_hat = extrapolate(&u_next, &u, (t - 1.0) / t_next);
        u = u_next;
        t = t_next;
        observe(k + 1, &u);
    }
    Ok(u)
}

/// Inner solver used to approximate `prox_{gamma lambda (tv + i_{R+})}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FistaInner {
    /// Condat–Vu with `gamma = 1`, `sigma = 1/||grad||^2`, radius `mu`.
    Cv,
    /// Gradient projection with weight `mu` and a unit dual ball.
    Gp,
}

impl FromStr for FistaInner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cv" => Ok(FistaInner::Cv),
            "gp" => Ok(FistaInner::Gp),
            other => Err(Error::Unknown {
                what: "inner solver",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReconConfig {
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub warm_start: bool,
    pub inner: FistaInner,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            outer_iters: 140,
            inner_iters: 5,
            warm_start: true,
            inner: FistaInner::Cv,
        }
    }
}

impl ReconConfig {
    pub fn new(outer_iters: usize, inner_iters: usize) -> Self {
        ReconConfig {
            outer_iters,
            inner_iters,
            ..Default::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::invalid("outer and inner iteration counts must be >= 1"));
        }
        Ok(())
    }
}

/// Starting image: the backprojection `A* v` min-max rescaled to `[0, 1]`.
pub fn initial_image<A: LinearMap<Domain = Image>>(op: &A, data: &A::Codomain) -> Image {
    let bp = op.adjoint(data);
    let (lo, hi) = (bp.min(), bp.max());
    if hi > lo {
        bp.map(|x| (x - lo) / (hi - lo))
    } else {
        bp.zeros_like()
    }
}

/// FISTA-CV with the default inner solver.
pub fn fista_cv_reconstruct<A: LinearMap<Domain = Image>>(
    p: &ReconProblem<A>,
    outer_iters: usize,
    inner_iters: usize,
    warm_start: bool,
) -> Result<Image> {
    let cfg = ReconConfig {
        outer_iters,
        inner_iters,
        warm_start,
        inner: FistaInner::Cv,
    };
    fista_reconstruct(p, &cfg, |_, _| {})
}

/// FISTA on `1/2||A u - v||^2 + lambda (tv + i_{R+})` with `gamma = 1/beta`.
/// Each prox is approximated by `inner_iters` dual iterations with
/// effective weight `mu = gamma lambda`; with `warm_start` the dual variable
/// carries over between outer iterations.
pub fn fista_reconstruct<A: LinearMap<Domain = Image>>(
    p: &ReconProblem<A>,
    cfg: &ReconConfig,
    observe: impl FnMut(usize, &Image),
) -> Result<Image> {
    cfg.validate()?;
    let gamma = p.step();
    let mu = gamma * p.lambda;
    let u0 = initial_image(&p.op, &p.data);
    let (rows, cols) = u0.shape();
    let (inner_gamma, sigma, radius) = match cfg.inner {
        FistaInner::Cv => cv_step_sizes(StepMode::Cv, mu),
        FistaInner::Gp => cv_step_sizes(StepMode::Gp, mu),
    };
    let mut w = DualField::zeros(rows, cols);
    fista(
        &u0,
        cfg.outer_iters,
        |u_hat| gradient_step(&p.op, u_hat, &p.data, gamma),
        |z| {
            if !cfg.warm_start {
                w = DualField::zeros(rows, cols);
            }
            let mut u = z.zeros_like();
            for _ in 0..cfg.inner_iters {
                u = primal_from_dual(z, &w, inner_gamma);
                w = dual_ascent(&w, &u, sigma, radius)?;
            }
            Ok(u)
        },
        observe,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{Diagonal, Identity};
    use crate::prox::proj_nonneg;

    #[test]
    fn extrapolation_formula() {
        let x = Image::from_rows(&[&[1.0, 2.0]]).unwrap();
        let y = Image::from_rows(&[&[0.0, 4.0]]).unwrap();
        assert_eq!(extrapolate(&x, &y, 0.5).as_slice(), &[1.5, 1.0]);
        assert_eq!(extrapolate(&x, &y, 0.0), x);
    }

    #[test]
    fn identity_with_tiny_lambda_clamps_data() {
        let v = Image::from_fn(10, 10, |i, j| (i as f64 - j as f64) * 0.1);
        let op = Identity { rows: 10, cols: 10 };
        let p = ReconProblem::new(op, v.clone(), 1e-9, 1.0).unwrap();
        let u = fista_cv_reconstruct(&p, 20, 5, true).unwrap();
        assert!(u.sub(&proj_nonneg(&v)).max_abs() <= 1e-6);
    }

    #[test]
    fn gp_and_cv_inner_solvers_agree() {
        let w = Image::from_fn(8, 8, |i, j| 0.5 + 0.1 * ((i + 2 * j) % 4) as f64);
        let truth = Image::from_fn(8, 8, |i, j| if (i / 4 + j / 4) % 2 == 0 { 1.0 } else { 0.2 });
        let op = Diagonal::new(w);
        let data = op.apply(&truth);
        let p = ReconProblem::with_power_method(op, data, 0.05, 0).unwrap();
        let mut cfg = ReconConfig::new(30, 4);
        let a = fista_reconstruct(&p, &cfg, |_, _| {}).unwrap();
        cfg.inner = FistaInner::Gp;
        let b = fista_reconstruct(&p, &cfg, |_, _| {}).unwrap();
        assert!(a.sub(&b).max_abs() <= 1e-12);
    }

    #[test]
    fn observer_sees_every_outer_iteration() {
        let op = Identity { rows: 4, cols: 4 };
        let p = ReconProblem::new(op, Image::filled(4, 4, 0.5), 0.1, 1.0).unwrap();
        let mut seen = Vec::new();
        fista_reconstruct(&p, &ReconConfig::new(7, 2), |k, _| seen.push(k)).unwrap();
        assert_eq!(seen, (1..=7).collect::<Vec<_>>());
        assert!(fista_reconstruct(&p, &ReconConfig::new(0, 2), |_, _| {}).is_err());
    }
}
