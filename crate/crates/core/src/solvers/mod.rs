//! Iterative schemes for the TV + non-negativity model: GP/FGP and
//! Condat–Vu for denoising, FISTA with an inner Condat–Vu prox for
//! general linear forward models.

mod condat_vu;
mod denoise;
mod fista;

pub use condat_vu::condat_vu;
pub use denoise::{
    cv_denoise, cv_denoise_observed, fgp_denoise, fgp_denoise_observed, gp_denoise, gp_denoise_observed,
    DenoiseSolver, StepMode,
};
pub use fista::{
    fista, fista_cv_reconstruct, fista_reconstruct, initial_image, FistaInner, ReconConfig,
};

pub(crate) use denoise::{cv_step_sizes, dual_ascent, primal_from_dual};
pub(crate) use fista::extrapolate;

use crate::data::tv_value;
use crate::error::{ensure_positive, Error, Result};
use crate::field::{DualField, Image, VectorSpace};
use crate::linops::{power_method, LinearMap, POWER_ITERS};

/// `t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2`, starting from `t_0 = 1`.
pub fn fista_t_update(t: f64) -> Result<f64> {
    if t.is_nan() || t < 1.0 {
        return Err(Error::invalid(format!("FISTA t must be >= 1, got {t}")));
    }
    Ok(next_t(t))
}

#[inline]
pub(crate) fn next_t(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}

/// `1/2 ||u - v||^2 + lambda tv(u) + i_{R+}(u)`.
#[derive(Debug, Clone)]
pub struct DenoiseProblem {
    pub v: Image,
    pub lambda: f64,
}

impl DenoiseProblem {
    pub fn new(v: Image, lambda: f64) -> Result<Self> {
        ensure_positive("lambda", lambda)?;
        if !v.is_finite() {
            return Err(Error::invalid("noisy image contains non-finite values"));
        }
        Ok(DenoiseProblem { v, lambda })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.v.clone(), lambda)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.v.shape()
    }

    /// Primal objective (the indicator is not evaluated; solver iterates
    /// are nonnegative by construction).
    pub fn objective(&self, u: &Image) -> f64 {
        0.5 * u.sub(&self.v).norm_sq() + self.lambda * tv_value(u)
    }
}

/// `1/2 ||A u - v||^2 + lambda (tv(u) + i_{R+}(u))`, with `beta = ||A||^2`.
#[derive(Debug, Clone)]
pub struct ReconProblem<A: LinearMap<Domain = Image>> {
    pub op: A,
    pub data: A::Codomain,
    pub lambda: f64,
    pub beta: f64,
}

impl<A: LinearMap<Domain = Image>> ReconProblem<A> {
    pub fn new(op: A, data: A::Codomain, lambda: f64, beta: f64) -> Result<Self> {
        ensure_positive("lambda", lambda)?;
        ensure_positive("beta", beta)?;
        if data.len() != op.codomain_zeros().len() {
            return Err(Error::invalid(format!(
                "data has {} entries but the operator produces {}",
                data.len(),
                op.codomain_zeros().len()
            )));
        }
        Ok(ReconProblem {
            op,
            data,
            lambda,
            beta,
        })
    }

    /// Estimates `beta = ||A||^2` with the power method.
    pub fn with_power_method(op: A, data: A::Codomain, lambda: f64, seed: u64) -> Result<Self> {
        let beta = power_method(&op, POWER_ITERS, seed)?;
        Self::new(op, data, lambda, beta)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self>
    where
        A: Clone,
    {
        ensure_positive("lambda", lambda)?;
        Ok(ReconProblem {
            lambda,
            ..self.clone()
        })
    }

    /// FISTA step size `1 / beta`.
    pub fn step(&self) -> f64 {
        1.0 / self.beta
    }

    pub fn shape(&self) -> (usize, usize) {
        self.op.domain_zeros().shape()
    }

    pub fn objective(&self, u: &Image) -> f64 {
        0.5 * self.op.apply(u).sub(&self.data).norm_sq() + self.lambda * tv_value(u)
    }
}

/// Solver state shared by the FISTA and Condat–Vu loops.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub u: Image,
    pub u_prev: Image,
    pub w: DualField,
    pub t: f64,
    pub k: usize,
}

impl SolverState {
    pub fn new(u0: Image, w0: DualField) -> Self {
        SolverState {
            u_prev: u0.clone(),
            u: u0,
            w: w0,
            t: 1.0,
            k: 0,
        }
    }
}
