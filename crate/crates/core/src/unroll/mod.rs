//! Derivatives of unrolled solver outputs with respect to the TV weight.
//!
//! Three reverse-mode recordings of the same iterations (`GpTape`,
//! `CvTape`, `Acv`) and one forward-mode sweep (`Forward`) compute the
//! same number; they differ in what is kept in memory.

mod memory;
mod projection;
mod record;
mod tangent;
mod tape;

use std::fmt;
use std::str::FromStr;

pub use memory::{linear_fit, MemoryReport};
pub use projection::{proj_l2ball_jvp, proj_l2ball_vjp, radius_derivative};
pub use record::{record_denoise, record_denoise_with, record_recon, Recording};
pub use tangent::{tangent_denoise, tangent_recon, Dual};
pub use tape::{
    AssistedSaves, Gradients, OpKind, Recorded, SavePrecision, Shape, Tape, TapeArray, TapeConfig,
    TapeNode, Value, Var, VarId,
};

use crate::error::{Error, Result};
use crate::field::{Image, VectorSpace};
use crate::linops::LinearMap;
use crate::solvers::{DenoiseProblem, ReconConfig, ReconProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    GpTape,
    CvTape,
    Acv,
    Forward,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::GpTape, Strategy::CvTape, Strategy::Acv, Strategy::Forward];
    pub const TAPED: [Strategy; 3] = [Strategy::GpTape, Strategy::CvTape, Strategy::Acv];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::GpTape => "gp",
            Strategy::CvTape => "cv",
            Strategy::Acv => "acv",
            Strategy::Forward => "forward",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gp" | "gp_tape" => Ok(Strategy::GpTape),
            "cv" | "cv_tape" => Ok(Strategy::CvTape),
            "acv" => Ok(Strategy::Acv),
            "forward" => Ok(Strategy::Forward),
            _ => Err(Error::Unknown {
                what: "strategy",
                name: s.to_string(),
            }),
        }
    }
}

/// `L(lambda) = 1/2 ||u_lambda - u_gt||^2` and its derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaGradient {
    pub value: f64,
    pub grad: f64,
    /// Bytes held by the tape; zero for `Forward`.
    pub saved_bytes: usize,
    pub strategy: Strategy,
}

fn loss_and_residual(u: &Image, u_gt: &Image) -> (f64, Image) {
    let r = u.sub(u_gt);
    (0.5 * r.norm_sq(), r)
}

fn finish(rec: &Recording<'_>, u_gt: &Image) -> Result<LambdaGradient> {
    u_gt.ensure_shape(rec.output.value.shape())?;
    let (value, residual) = loss_and_residual(&rec.output.value, u_gt);
    let grads = rec.tape.backward(vec![(rec.output.id, Value::Image(residual))]);
    let grad = grads.scalar(rec.lambda);
    if !grad.is_finite() {
        return Err(Error::invalid("non-finite gradient"));
    }
    Ok(LambdaGradient {
        value,
        grad,
        saved_bytes: rec.tape.total_saved_bytes(),
        strategy: rec.strategy,
    })
}

fn from_tangent(d: &Dual<Image>, u_gt: &Image) -> Result<LambdaGradient> {
    u_gt.ensure_shape(d.value.shape())?;
    let (value, residual) = loss_and_residual(&d.value, u_gt);
    Ok(LambdaGradient {
        value,
        grad: residual.dot(&d.tangent),
        saved_bytes: 0,
        strategy: Strategy::Forward,
    })
}

/// Gradient of the denoising loss after `iters` unrolled iterations.
pub fn grad_lambda_denoise(
    p: &DenoiseProblem,
    u_gt: &Image,
    iters: usize,
    strategy: Strategy,
) -> Result<LambdaGradient> {
    grad_lambda_denoise_with(p, u_gt, iters, strategy, TapeConfig::default())
}

pub fn grad_lambda_denoise_with(
    p: &DenoiseProblem,
    u_gt: &Image,
    iters: usize,
    strategy: Strategy,
    config: TapeConfig,
) -> Result<LambdaGradient> {
    u_gt.ensure_shape(p.shape())?;
    match strategy {
        Strategy::Forward => from_tangent(&tangent_denoise(p, iters)?, u_gt),
        _ => finish(&record_denoise_with(p, iters, strategy, config)?, u_gt),
    }
}

/// Gradient of the reconstruction loss through the whole FISTA run.
pub fn grad_lambda_recon<A>(
    p: &ReconProblem<A>,
    u_gt: &Image,
    cfg: &ReconConfig,
    strategy: Strategy,
) -> Result<LambdaGradient>
where
    A: LinearMap<Domain = Image>,
{
    grad_lambda_recon_with(p, u_gt, cfg, strategy, TapeConfig::default())
}

pub fn grad_lambda_recon_with<A>(
    p: &ReconProblem<A>,
    u_gt: &Image,
    cfg: &ReconConfig,
    strategy: Strategy,
    config: TapeConfig,
) -> Result<LambdaGradient>
where
    A: LinearMap<Domain = Image>,
{
    u_gt.ensure_shape(p.shape())?;
    match strategy {
        Strategy::Forward => from_tangent(&tangent_recon(p, cfg)?, u_gt),
        _ => finish(&record_recon(p, cfg, strategy, config)?, u_gt),
    }
}

/// Memory table for a recorded tape.
pub fn memory_report(rec: &Recording<'_>) -> Result<MemoryReport> {
    if rec.tape.is_empty() {
        return Err(Error::invalid("empty tape"));
    }
    let pixels = rec.output.value.len();
    Ok(MemoryReport::from_tape(&rec.tape, rec.strategy, pixels))
}
