//! Forward-mode propagation of `d/d lambda` through the Condat–Vu form,
//! holding only the current iterates and their tangents.

use super::projection::{jvp_pixelwise, BallJacobian};
use crate::error::{Error, Result};
use crate::field::{DualField, Image, VectorSpace};
use crate::linops::{div2d, grad2d, gradient_step, LinearMap, NormalOperator, GRAD_NORM_SQ};
use crate::prox::{heaviside_backward, proj_l2ball};
use crate::solvers::{extrapolate, initial_image, next_t, DenoiseProblem, ReconConfig, ReconProblem};

/// A primal iterate with its tangent.
#[derive(Debug, Clone)]
pub struct Dual<T> {
    pub value: T,
    pub tangent: T,
}

struct InnerState {
    w: DualField,
    w_dot: DualField,
}

impl InnerState {
    fn zeros(rows: usize, cols: usize) -> Self {
        InnerState {
            w: DualField::zeros(rows, cols),
            w_dot: DualField::zeros(rows, cols),
        }
    }

    // one CV iteration anchored at (v, v_dot) with radius (r, r_dot)
    fn step(&mut self, v: &Image, v_dot: &Image, r: f64, r_dot: f64) -> Result<(Image, Image)> {
        let mut g = div2d(&self.w);
        for (gi, vi) in g.as_mut_slice().iter_mut().zip(v.as_slice()) {
            *gi = *vi + 1.0 * *gi;
        }
        let mut g_dot = div2d(&self.w_dot);
        g_dot.axpy(1.0, v_dot);
        let mut u_dot = g_dot;
        for (d, x) in u_dot.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *d *= heaviside_backward(*x);
        }
        let u = g.map(|x| x.max(0.0));

        let sigma = 1.0 / GRAD_NORM_SQ;
        let mut c = grad2d(&u);
        for (ci, wi) in c.as_mut_slice().iter_mut().zip(self.w.as_slice()) {
            *ci = *wi + sigma * *ci;
        }
        let c_dot = self.w_dot.lin_comb(1.0, &grad2d(&u_dot), sigma);
        self.w_dot = jvp_pixelwise(&BallJacobian::recompute(&c, r), &c_dot, r_dot);
        self.w = proj_l2ball(&c, r)?;
        Ok((u, u_dot))
    }
}

/// `(u_iters, du/dlambda)` for Condat–Vu denoising with unit primal step.
pub fn tangent_denoise(p: &DenoiseProblem, iters: usize) -> Result<Dual<Image>> {
    if iters == 0 {
        return Err(Error::invalid("iteration count must be >= 1"));
    }
    let (rows, cols) = p.shape();
    let mut state = InnerState::zeros(rows, cols);
    let zero = Image::zeros(rows, cols);
    let mut out = None;
    for _ in 0..iters {
        out = Some(state.step(&p.v, &zero, p.lambda, 1.0)?);
    }
    let (value, tangent) = out.expect("at least one iteration");
    Ok(Dual { value, tangent })
}

/// `(u_K, du_K/dlambda)` for FISTA with the Condat–Vu inner solver.
pub fn tangent_recon<A>(p: &ReconProblem<A>, cfg: &ReconConfig) -> Result<Dual<Image>>
where
    A: LinearMap<Domain = Image>,
{
    cfg.validate()?;
    let gamma = p.step();
    let mu = gamma * p.lambda;
    let u0 = initial_image(&p.op, &p.data);
    let (rows, cols) = u0.shape();
    let mut u = u0.clone();
    let mut u_dot = u0.zeros_like();
    let mut u_hat = u0;
    let mut u_hat_dot = u_dot.clone();
    let mut inner = InnerState::zeros(rows, cols);
    let mut t = 1.0;
    for _ in 0..cfg.outer_iters {
        let z = gradient_step(&p.op, &u_hat, &p.data, gamma);
        let z_dot = u_hat_dot.lin_comb(1.0, &p.op.normal(&u_hat_dot), -gamma);
        if !cfg.warm_start {
            inner = InnerState::zeros(rows, cols);
        }
        let mut next = None;
        for _ in 0..cfg.inner_iters {
            next = Some(inner.step(&z, &z_dot, mu, gamma)?);
        }
        let (u_next, u_next_dot) = next.expect("at least one inner iteration");
        let t_next = next_t(t);
        let a = (t - 1.0) / t_next;
        u_hat = extrapolate(&u_next, &u, a);
        u_hat_dot = extrapolate(&u_next_dot, &u_dot, a);
        u = u_next;
        u_dot = u_next_dot;
        t = t_next;
    }
    Ok(Dual {
        value: u,
        tangent: u_dot,
    })
}
