//! Recorders that replay the solvers on a [`Tape`], producing the same
//! iterates bit-for-bit while keeping what backward needs.

use super::tape::{Tape, TapeConfig, Var, VarId};
use super::Strategy;
use crate::error::{Error, Result};
use crate::field::{DualField, Image};
use crate::linops::{LinearMap, GRAD_NORM_SQ};
use crate::solvers::{initial_image, next_t, DenoiseProblem, ReconConfig, ReconProblem};

/// A recorded unrolled solve.
#[derive(Debug)]
pub struct Recording<'a> {
    pub tape: Tape<'a>,
    /// Final primal iterate.
    pub output: Var<Image>,
    pub lambda: VarId,
    pub strategy: Strategy,
}

// the data term of the primal step: a constant image for denoising,
// a recorded FISTA point for reconstruction
enum Anchor<'r> {
    Const(&'r Image),
    Tracked(&'r Var<Image>),
}

fn add_anchor<'a>(tape: &mut Tape<'a>, x: &Var<Image>, anchor: &Anchor<'_>) -> Var<Image> {
    match anchor {
        Anchor::Const(v) => tape.offset(x, v),
        Anchor::Tracked(z) => tape.combine(x, 1.0, z, 1.0),
    }
}

fn elementary_ball<'a>(tape: &mut Tape<'a>, c: &Var<DualField>, radius: Option<&Var<f64>>) -> Var<DualField> {
    let n = tape.pixel_norm(c);
    let q = match radius {
        Some(r) => tape.div_by_param(&n, r),
        None => n,
    };
    let m = tape.clamp_min_one(&q);
    tape.pixel_div(c, &m)
}

// one dual gradient projection step with primal weight `weight` and dual
// step `dual_step`, projecting onto the unit ball
fn gp_iteration<'a>(
    tape: &mut Tape<'a>,
    anchor: &Anchor<'_>,
    w: &Var<DualField>,
    weight: &Var<f64>,
    dual_step: &Var<f64>,
) -> (Var<Image>, Var<DualField>) {
    let d = tape.div(w);
    let ld = tape.scale_by_param(&d, weight);
    let g = add_anchor(tape, &ld, anchor);
    let u = tape.proj_nonneg(&g);
    let gu = tape.grad(&u);
    let sg = tape.scale_by_param(&gu, dual_step);
    let c = tape.combine(w, 1.0, &sg, 1.0);
    let w_next = elementary_ball(tape, &c, None);
    (u, w_next)
}

// one Condat–Vu step with unit primal step and dual radius `radius`
fn cv_iteration<'a>(
    tape: &mut Tape<'a>,
    anchor: &Anchor<'_>,
    w: &Var<DualField>,
    radius: &Var<f64>,
    assisted: bool,
) -> Result<(Var<Image>, Var<DualField>)> {
    let d = tape.div(w);
    let g = add_anchor(tape, &d, anchor);
    let u = tape.proj_nonneg(&g);
    let gu = tape.grad(&u);
    let c = tape.combine(w, 1.0, &gu, 1.0 / GRAD_NORM_SQ);
    let w_next = if assisted {
        tape.assisted_ball_proj(&c, radius)?
    } else {
        elementary_ball(tape, &c, Some(radius))
    };
    Ok((u, w_next))
}

// per-solve inner machinery, parametrised by the effective TV weight
enum Inner {
    Gp { dual_step: Var<f64> },
    Cv { assisted: bool },
}

impl Inner {
    fn setup(tape: &mut Tape<'_>, strategy: Strategy, weight: &Var<f64>) -> Result<Self> {
        Ok(match strategy {
            Strategy::GpTape => Inner::Gp {
                dual_step: tape.scalar_recip(weight, GRAD_NORM_SQ),
            },
            Strategy::CvTape => Inner::Cv { assisted: false },
            Strategy::Acv => Inner::Cv { assisted: true },
            Strategy::Forward => {
                return Err(Error::invalid("the forward strategy does not record a tape"));
            }
        })
    }

    fn step<'a>(
        &self,
        tape: &mut Tape<'a>,
        anchor: &Anchor<'_>,
        w: &Var<DualField>,
        weight: &Var<f64>,
    ) -> Result<(Var<Image>, Var<DualField>)> {
        match self {
            Inner::Gp { dual_step } => Ok(gp_iteration(tape, anchor, w, weight, dual_step)),
            Inner::Cv { assisted } => cv_iteration(tape, anchor, w, weight, *assisted),
        }
    }
}

/// Records `iters` denoising iterations from `u0 = P+(v)`, `w0 = 0`.
///
/// `GpTape` replays the gradient projection solver; `CvTape` and `Acv`
/// replay Condat–Vu with unit primal step, the latter with the assisted
/// projection node.
pub fn record_denoise(p: &DenoiseProblem, iters: usize, strategy: Strategy) -> Result<Recording<'static>> {
    record_denoise_with(p, iters, strategy, TapeConfig::default())
}

pub fn record_denoise_with(
    p: &DenoiseProblem,
    iters: usize,
    strategy: Strategy,
    config: TapeConfig,
) -> Result<Recording<'static>> {
    if iters == 0 {
        return Err(Error::invalid("iteration count must be >= 1"));
    }
    let (rows, cols) = p.shape();
    let mut tape = Tape::new(config);
    let lambda = tape.leaf(p.lambda);
    let mut w = tape.leaf(DualField::zeros(rows, cols));
    let inner = Inner::setup(&mut tape, strategy, &lambda)?;
    let anchor = Anchor::Const(&p.v);
    let mut u = None;
    for _ in 0..iters {
        tape.begin_iteration();
        let (u_k, w_next) = inner.step(&mut tape, &anchor, &w, &lambda)?;
        u = Some(u_k);
        w = w_next;
    }
    Ok(Recording {
        tape,
        output: u.expect("at least one iteration"),
        lambda: lambda.id,
        strategy,
    })
}

/// Records a FISTA reconstruction. One marked iteration per outer step;
/// `cfg.inner` is ignored in favour of `strategy`.
pub fn record_recon<'a, A>(
    p: &'a ReconProblem<A>,
    cfg: &ReconConfig,
    strategy: Strategy,
    config: TapeConfig,
) -> Result<Recording<'a>>
where
    A: LinearMap<Domain = Image>,
{
    cfg.validate()?;
    let gamma = p.step();
    let u0 = initial_image(&p.op, &p.data);
    let (rows, cols) = u0.shape();

    let mut tape = Tape::new(config);
    let lambda = tape.leaf(p.lambda);
    let mu = tape.scalar_scale(&lambda, gamma);
    let inner = Inner::setup(&mut tape, strategy, &mu)?;
    let mut u = tape.leaf(u0);
    let mut u_hat = u.clone();
    let mut w = tape.leaf(DualField::zeros(rows, cols));
    let mut t = 1.0;
    for _ in 0..cfg.outer_iters {
        tape.begin_iteration();
        let z = tape.gradient_step(&u_hat, &p.op, &p.data, gamma);
        if !cfg.warm_start {
            w = tape.leaf(DualField::zeros(rows, cols));
        }
        let anchor = Anchor::Tracked(&z);
        let mut u_next = None;
        for _ in 0..cfg.inner_iters {
            let (u_k, w_next) = inner.step(&mut tape, &anchor, &w, &mu)?;
            u_next = Some(u_k);
            w = w_next;
        }
        let u_next = u_next.expect("at least one inner iteration");
        let t_next = next_t(t);
        u_hat = tape.extrapolate(&u_next, &u, (t - 1.0) / t_next);
        u = u_next;
        t = t_next;
    }
    Ok(Recording {
        tape,
        output: u,
        lambda: lambda.id,
        strategy,
    })
}
