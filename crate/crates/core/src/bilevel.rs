//! Learning the TV weight: Nesterov-accelerated gradient descent on
//! `L(lambda) = 1/2 ||u_lambda - u_gt||^2` with Armijo backtracking.

use crate::error::{ensure_positive, Error, Result};
use crate::field::{DualField, Image, VectorSpace};
use crate::io::TraceRow;
use crate::linops::LinearMap;
use crate::solvers::{
    cv_denoise, fista_reconstruct, gp_denoise, next_t, DenoiseProblem, FistaInner, ReconConfig,
    ReconProblem, StepMode,
};
use crate::unroll::{grad_lambda_denoise, grad_lambda_recon, LambdaGradient, Strategy};

/// `1/2 sum (u - u_gt)^2`
pub fn loss(u: &Image, u_gt: &Image) -> Result<f64> {
    u_gt.ensure_shape(u.shape())?;
    Ok(0.5 * u.sub(u_gt).norm_sq())
}

/// Backtracking parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Armijo {
    pub c1: f64,
    pub contraction: f64,
    pub max_backtracks: usize,
    pub lambda_min: f64,
}

impl Default for Armijo {
    fn default() -> Self {
        Armijo {
            c1: 1e-4,
            contraction: 0.5,
            max_backtracks: 50,
            lambda_min: 0.0,
        }
    }
}

/// An accepted line-search step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoStep {
    pub gamma: f64,
    pub backtracks: usize,
    /// `phi(lambda0 - gamma d)`
    pub value: f64,
}

impl Armijo {
    /// Largest `gamma_init * contraction^j` with sufficient decrease and
    /// `lambda0 - gamma d >= lambda_min`. `phi0` is `phi(lambda0)`.
    pub fn search(
        &self,
        mut phi: impl FnMut(f64) -> Result<f64>,
        lambda0: f64,
        phi0: f64,
        d: f64,
        gamma_init: f64,
    ) -> Result<ArmijoStep> {
        ensure_positive("gamma_init", gamma_init)?;
        let mut gamma = gamma_init;
        for j in 0..=self.max_backtracks {
            let candidate = lambda0 - gamma * d;
            if candidate >= self.lambda_min {
                let value = phi(candidate)?;
                if value <= phi0 - self.c1 * gamma * d * d {
                    return Ok(ArmijoStep {
                        gamma,
                        backtracks: j,
                        value,
                    });
                }
            }
            gamma *= self.contraction;
        }
        Err(Error::LineSearch {
            backtracks: self.max_backtracks,
            step: gamma,
        })
    }
}

/// Armijo search with the default constants; evaluates `phi(lambda0)` itself.
pub fn armijo_search(
    mut phi: impl FnMut(f64) -> Result<f64>,
    lambda0: f64,
    d: f64,
    gamma_init: f64,
) -> Result<ArmijoStep> {
    let phi0 = phi(lambda0)?;
    Armijo::default().search(phi, lambda0, phi0, d, gamma_init)
}

/// A scalar objective in the TV weight.
pub trait LambdaObjective {
    fn value(&self, lambda: f64) -> Result<f64>;
    fn value_and_grad(&self, lambda: f64) -> Result<LambdaGradient>;
}

/// Denoising a single noisy/clean pair with a fixed iteration budget.
#[derive(Debug, Clone)]
pub struct DenoiseTask {
    pub noisy: Image,
    pub u_gt: Image,
    pub iters: usize,
    pub strategy: Strategy,
}

impl DenoiseTask {
    pub fn new(noisy: Image, u_gt: Image, iters: usize, strategy: Strategy) -> Result<Self> {
        u_gt.ensure_shape(noisy.shape())?;
        if iters == 0 {
            return Err(Error::invalid("iteration budget must be >= 1"));
        }
        if !u_gt.is_finite() {
            return Err(Error::invalid("ground truth is not finite"));
        }
        Ok(DenoiseTask {
            noisy,
            u_gt,
            iters,
            strategy,
        })
    }

    fn problem(&self, lambda: f64) -> Result<DenoiseProblem> {
        DenoiseProblem::new(self.noisy.clone(), lambda)
    }

    /// `u_lambda` from the un-recorded solver matching the strategy.
    pub fn solve(&self, lambda: f64) -> Result<Image> {
        let p = self.problem(lambda)?;
        let (rows, cols) = p.shape();
        let w0 = DualField::zeros(rows, cols);
        let (u, _) = match self.strategy {
            Strategy::GpTape => gp_denoise(&p, self.iters, &w0)?,
            _ => cv_denoise(&p, self.iters, StepMode::Cv, &p.v, &w0)?,
        };
        Ok(u)
    }
}

impl LambdaObjective for DenoiseTask {
    fn value(&self, lambda: f64) -> Result<f64> {
        loss(&self.solve(lambda)?, &self.u_gt)
    }

    fn value_and_grad(&self, lambda: f64) -> Result<LambdaGradient> {
        grad_lambda_denoise(&self.problem(lambda)?, &self.u_gt, self.iters, self.strategy)
    }
}

/// FISTA reconstruction of one measurement/clean pair.
#[derive(Clone)]
pub struct ReconTask<A: LinearMap<Domain = Image>> {
    /// Operator, data and `beta`; its `lambda` is ignored.
    pub template: ReconProblem<A>,
    pub u_gt: Image,
    pub config: ReconConfig,
    pub strategy: Strategy,
}

impl<A: LinearMap<Domain = Image> + Clone> ReconTask<A>
where
    A::Codomain: Clone,
{
    pub fn new(template: ReconProblem<A>, u_gt: Image, config: ReconConfig, strategy: Strategy) -> Result<Self> {
        u_gt.ensure_shape(template.shape())?;
        config.validate()?;
        if !u_gt.is_finite() {
            return Err(Error::invalid("ground truth is not finite"));
        }
        Ok(ReconTask {
            template,
            u_gt,
            config,
            strategy,
        })
    }

    pub fn solve(&self, lambda: f64) -> Result<Image> {
        let p = self.template.with_lambda(lambda)?;
        let mut cfg = self.config;
        cfg.inner = match self.strategy {
            Strategy::GpTape => FistaInner::Gp,
            _ => FistaInner::Cv,
        };
        fista_reconstruct(&p, &cfg, |_, _| {})
    }
}

impl<A: LinearMap<Domain = Image> + Clone> LambdaObjective for ReconTask<A>
where
    A::Codomain: Clone,
{
    fn value(&self, lambda: f64) -> Result<f64> {
        loss(&self.solve(lambda)?, &self.u_gt)
    }

    fn value_and_grad(&self, lambda: f64) -> Result<LambdaGradient> {
        let p = self.template.with_lambda(lambda)?;
        grad_lambda_recon(&p, &self.u_gt, &self.config, self.strategy)
    }
}

/// `u_lambda = u_gt + (lambda - center) e`: the loss is an exact quadratic.
#[derive(Debug, Clone)]
pub struct QuadraticSurrogate {
    pub u_gt: Image,
    pub direction: Image,
    pub center: f64,
}

impl QuadraticSurrogate {
    pub fn solve(&self, lambda: f64) -> Image {
        self.u_gt.lin_comb(1.0, &self.direction, lambda - self.center)
    }
}

impl LambdaObjective for QuadraticSurrogate {
    fn value(&self, lambda: f64) -> Result<f64> {
        loss(&self.solve(lambda), &self.u_gt)
    }

    fn value_and_grad(&self, lambda: f64) -> Result<LambdaGradient> {
        let r = self.solve(lambda).sub(&self.u_gt);
        Ok(LambdaGradient {
            value: 0.5 * r.norm_sq(),
            grad: r.dot(&self.direction),
            saved_bytes: 0,
            strategy: Strategy::Forward,
        })
    }
}

/// Mean loss over several training pairs.
#[derive(Debug, Clone)]
pub struct MeanObjective<O> {
    pub tasks: Vec<O>,
}

impl<O: LambdaObjective> MeanObjective<O> {
    pub fn new(tasks: Vec<O>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::invalid("at least one training pair is required"));
        }
        Ok(MeanObjective { tasks })
    }
}

impl<O: LambdaObjective> LambdaObjective for MeanObjective<O> {
    fn value(&self, lambda: f64) -> Result<f64> {
        let mut sum = 0.0;
        for t in &self.tasks {
            sum += t.value(lambda)?;
        }
        Ok(sum / self.tasks.len() as f64)
    }

    fn value_and_grad(&self, lambda: f64) -> Result<LambdaGradient> {
        let n = self.tasks.len() as f64;
        let mut acc: Option<LambdaGradient> = None;
        for t in &self.tasks {
            let g = t.value_and_grad(lambda)?;
            acc = Some(match acc {
                None => g,
                Some(a) => LambdaGradient {
                    value: a.value + g.value,
                    grad: a.grad + g.grad,
                    saved_bytes: a.saved_bytes.max(g.saved_bytes),
                    strategy: a.strategy,
                },
            });
        }
        let mut g = acc.expect("nonempty task list");
        g.value /= n;
        g.grad /= n;
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgdConfig {
    pub outer_iters: usize,
    /// Stop once `|lambda_{k+1} - lambda_k| <= rel_tol * lambda_k`.
    pub rel_tol: f64,
    pub c1: f64,
    pub max_backtracks: usize,
    /// `lambda_min = lambda_min_factor * lambda0`
    pub lambda_min_factor: f64,
    /// First probe moves lambda by this fraction of `lambda0`.
    pub first_move: f64,
}

impl Default for NgdConfig {
    fn default() -> Self {
        NgdConfig {
            outer_iters: 60,
            rel_tol: 1e-4,
            c1: 1e-4,
            max_backtracks: 50,
            lambda_min_factor: 1e-8,
            first_move: 0.1,
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilevelRecord {
    pub k: usize,
    pub lambda: f64,
    pub lambda_hat: f64,
    /// `L(lambda_hat_k)`, the Armijo reference value.
    pub loss: f64,
    /// `L(lambda_k)`; equals the previous accepted value.
    pub loss_at_lambda: f64,
    pub grad: f64,
    pub step: f64,
    pub backtracks: usize,
    /// `L(lambda_{k+1})` at the accepted step.
    pub accepted_loss: f64,
    pub next_lambda: f64,
    pub tape_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BilevelTrace {
    pub records: Vec<BilevelRecord>,
    pub converged: bool,
}

impl BilevelTrace {
    pub fn rows(&self) -> Vec<TraceRow> {
        self.records
            .iter()
            .map(|r| TraceRow {
                k: r.k,
                lambda: r.lambda,
                lambda_hat: r.lambda_hat,
                loss: r.loss,
                grad: r.grad,
                step: r.step,
                backtracks: r.backtracks,
                tape_bytes: r.tape_bytes,
            })
            .collect()
    }
}

/// Accelerated gradient descent on `lambda` from `lambda0`.
/// Returns the last accepted `lambda` and the trace.
pub fn ngd_learn<O: LambdaObjective>(
    objective: &O,
    lambda0: f64,
    cfg: &NgdConfig,
) -> Result<(f64, BilevelTrace)> {
    ensure_positive("lambda0", lambda0)?;
    if cfg.outer_iters == 0 {
        return Err(Error::invalid("outer iteration budget must be >= 1"));
    }
    let lambda_min = cfg.lambda_min_factor * lambda0;
    let armijo = Armijo {
        c1: cfg.c1,
        contraction: 0.5,
        max_backtracks: cfg.max_backtracks,
        lambda_min,
    };
    let mut trace = BilevelTrace::default();
    let mut lambda = lambda0;
    let mut lambda_hat = lambda0;
    let mut loss_at_lambda = None;
    let mut t = 1.0;
    let mut prev_gamma: Option<f64> = None;
    for k in 0..cfg.outer_iters {
        let g = objective.value_and_grad(lambda_hat)?;
        let d = g.grad;
        let gamma_init = match prev_gamma {
            Some(gamma) => 2.0 * gamma,
            None if d != 0.0 => cfg.first_move * lambda0 / d.abs(),
            None => 1.0,
        };
        let step = armijo.search(|l| objective.value(l), lambda_hat, g.value, d, gamma_init)?;
        let next = lambda_hat - step.gamma * d;
        let t_next = next_t(t);
        let next_hat = (next + (t - 1.0) / t_next * (next - lambda)).max(lambda_min);
        let loss_here = match loss_at_lambda {
            Some(v) => v,
            None => g.value,
        };
        trace.records.push(BilevelRecord {
            k,
            lambda,
            lambda_hat,
            loss: g.value,
            loss_at_lambda: loss_here,
            grad: d,
            step: step.gamma,
            backtracks: step.backtracks,
            accepted_loss: step.value,
            next_lambda: next,
            tape_bytes: g.saved_bytes,
        });
        let done = (next - lambda).abs() <= cfg.rel_tol * lambda;
        lambda = next;
        lambda_hat = next_hat;
        loss_at_lambda = Some(step.value);
        prev_gamma = Some(step.gamma);
        t = t_next;
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok((lambda, trace))
}

/// `n` points equally spaced in `log10` from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    ensure_positive("lo", lo)?;
    ensure_positive("hi", hi)?;
    if n < 2 || hi <= lo {
        return Err(Error::invalid("log grid needs n >= 2 and lo < hi"));
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect())
}

/// Brute-force minimiser over `grid`: `(best index, losses)`.
pub fn grid_search<O: LambdaObjective>(objective: &O, grid: &[f64]) -> Result<(usize, Vec<f64>)> {
    if grid.is_empty() {
        return Err(Error::invalid("empty grid"));
    }
    let losses = grid.iter().map(|&l| objective.value(l)).collect::<Result<Vec<_>>>()?;
    let best = losses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nonempty");
    Ok((best, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{add_noise, make_phantom, NoiseSpec, PhantomKind, PhantomSpec};
    use crate::solvers::fista_t_update;

    fn quad(l: f64) -> Result<f64> {
        Ok(0.5 * (l - 2.0) * (l - 2.0))
    }

    #[test]
    fn loss_examples() {
        let a = Image::filled(2, 2, 1.0);
        let b = Image::zeros(2, 2);
        assert_eq!(loss(&a, &a).unwrap(), 0.0);
        assert_eq!(loss(&a, &b).unwrap(), 2.0);
        assert_eq!(loss(&b, &a).unwrap(), loss(&a, &b).unwrap());
        assert!(loss(&a, &Image::zeros(2, 3)).is_err());
    }

    #[test]
    fn armijo_full_step_on_quadratic() {
        let s = armijo_search(quad, 3.0, 1.0, 1.0).unwrap();
        assert_eq!((s.gamma, s.backtracks), (1.0, 0));
    }

    #[test]
    fn armijo_backtracks_from_large_step() {
        // oracle: enumerate the candidate ladder directly
        let (l0, d, c1) = (3.0, 1.0, 1e-4);
        let f0 = quad(l0).unwrap();
        let expected = (0..50)
            .map(|j| 8.0 * 0.5f64.powi(j))
            .position(|g| quad(l0 - g * d).unwrap() <= f0 - c1 * g * d * d)
            .unwrap();
        let s = armijo_search(quad, l0, d, 8.0).unwrap();
        assert_eq!(s.backtracks, expected);
        assert_eq!(s.gamma, 8.0 * 0.5f64.powi(expected as i32));
        assert_eq!((s.gamma, s.backtracks), (1.0, 3));
    }

    #[test]
    fn armijo_zero_direction_accepts_immediately() {
        let s = armijo_search(quad, 2.0, 0.0, 5.0).unwrap();
        assert_eq!((s.gamma, s.backtracks), (5.0, 0));
    }

    #[test]
    fn armijo_fails_on_wrong_sign() {
        let err = armijo_search(quad, 3.0, -1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::LineSearch { backtracks: 50, .. }));
    }

    #[test]
    fn armijo_respects_lambda_min() {
        let a = Armijo {
            lambda_min: 1.5,
            ..Default::default()
        };
        let s = a.search(quad, 3.0, quad(3.0).unwrap(), 1.0, 4.0).unwrap();
        assert!(3.0 - s.gamma >= 1.5);
    }

    fn surrogate() -> QuadraticSurrogate {
        let u_gt = Image::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 / 5.0);
        let direction = Image::from_fn(6, 6, |i, j| 0.1 + ((i + 2 * j) % 3) as f64 / 10.0);
        QuadraticSurrogate {
            u_gt,
            direction,
            center: 2.0,
        }
    }

    #[test]
    fn ngd_converges_on_surrogate() {
        let obj = surrogate();
        let cfg = NgdConfig {
            outer_iters: 30,
            rel_tol: 0.0,
            ..Default::default()
        };
        let (l, trace) = ngd_learn(&obj, 0.5, &cfg).unwrap();
        assert!((l - 2.0).abs() <= 1e-6, "{l}");
        assert!(trace.records.len() <= 30);
    }

    #[test]
    fn trace_satisfies_invariants() {
        let obj = surrogate();
        let lambda0 = 5.0;
        let (_, trace) = ngd_learn(&obj, lambda0, &NgdConfig::default()).unwrap();
        let mut t = 1.0;
        for r in &trace.records {
            assert!(r.accepted_loss <= r.loss - 1e-4 * r.step * r.grad * r.grad);
            assert!(r.lambda >= 1e-8 * lambda0 && r.lambda_hat >= 1e-8 * lambda0);
            assert!(r.next_lambda >= 1e-8 * lambda0);
            t = fista_t_update(t).unwrap();
        }
        assert!(t >= 1.0);
        assert_eq!(trace.rows().len(), trace.records.len());
    }

    #[test]
    fn ngd_is_deterministic_on_denoising() {
        let clean = make_phantom(&PhantomSpec::square(PhantomKind::Blocks, 16, 7)).unwrap();
        let noisy = add_noise(&clean, &NoiseSpec::gaussian(0.1, 7));
        let task = DenoiseTask::new(noisy, clean, 20, Strategy::Acv).unwrap();
        let cfg = NgdConfig {
            outer_iters: 5,
            ..Default::default()
        };
        let a = ngd_learn(&task, 0.05, &cfg).unwrap();
        let b = ngd_learn(&task, 0.05, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_objective_averages() {
        let a = surrogate();
        let mut b = surrogate();
        b.center = 4.0;
        let m = MeanObjective::new(vec![a.clone(), b.clone()]).unwrap();
        let g = m.value_and_grad(3.0).unwrap();
        let (ga, gb) = (a.value_and_grad(3.0).unwrap(), b.value_and_grad(3.0).unwrap());
        assert!((g.grad - 0.5 * (ga.grad + gb.grad)).abs() < 1e-14);
        assert!((m.value(3.0).unwrap() - 0.5 * (ga.value + gb.value)).abs() < 1e-14);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-3, 10.0, 25).unwrap();
        assert_eq!(g.len(), 25);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert!((g[24] - 10.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
