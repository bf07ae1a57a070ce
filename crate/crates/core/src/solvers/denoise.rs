use std::str::FromStr;

use super::{next_t, DenoiseProblem};
use crate::error::{Error, Result};
use crate::field::{DualField, Image, VectorSpace};
use crate::linops::{div2d, grad2d, GRAD_NORM_SQ};
use crate::prox::{proj_l2ball, proj_nonneg};

/// Step-size rule for Condat–Vu on the denoising problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// `gamma = lambda`, `sigma = 1/(lambda ||grad||^2)`, unit dual ball:
    /// CV on the rescaled problem `f/lambda + ||grad .||_{2,1} + i_{R+}`.
    /// Reproduces GP iterate for iterate.
    Gp,
    /// `gamma = 1`, `sigma = 1/||grad||^2`, dual ball of radius `lambda`.
    /// Only the projection depends on `lambda`.
    Cv,
}

impl FromStr for StepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gp" => Ok(StepMode::Gp),
            "cv" => Ok(StepMode::Cv),
            other => Err(Error::Unknown {
                what: "step mode",
                name: other.to_string(),
            }),
        }
    }
}

/// `(gamma, sigma, dual radius)` for the given step mode.
pub(crate) fn cv_step_sizes(mode: StepMode, lambda: f64) -> (f64, f64, f64) {
    match mode {
        StepMode::Gp => (lambda, 1.0 / (lambda * GRAD_NORM_SQ), 1.0),
        StepMode::Cv => (1.0, 1.0 / GRAD_NORM_SQ, lambda),
    }
}

/// `P+(v + gamma div w)`.
///
/// With `gamma * grad f(u) = u - v` the Condat–Vu primal update
/// `P+(u - gamma grad* w - gamma grad f(u))` loses its dependence on `u`;
/// this is that update with the cancellation carried out exactly.
pub(crate) fn primal_from_dual(v: &Image, w: &DualField, gamma: f64) -> Image {
    let mut g = div2d(w);
    for (gi, vi) in g.as_mut_slice().iter_mut().zip(v.as_slice()) {
        *gi = *vi + gamma * *gi;
    }
    proj_nonneg(&g)
}

/// `proj_ball(w + sigma grad u, radius)`.
pub(crate) fn dual_ascent(w: &DualField, u: &Image, sigma: f64, radius: f64) -> Result<DualField> {
    let mut c = grad2d(u);
    for (ci, wi) in c.as_mut_slice().iter_mut().zip(w.as_slice()) {
        *ci = *wi + sigma * *ci;
    }
    proj_l2ball(&c, radius)
}

fn check_inputs(p: &DenoiseProblem, iters: usize, w0: &DualField) -> Result<()> {
    if iters == 0 {
        return Err(Error::invalid("iteration count must be >= 1"));
    }
    if w0.shape() != p.shape() {
        return Err(Error::ShapeMismatch {
            expected: p.shape(),
            found: w0.shape(),
        });
    }
    Ok(())
}

fn check_unit_feasible(w0: &DualField) -> Result<()> {
    let worst = w0.pointwise_norm().max();
    if worst > 1.0 + 1e-12 {
        return Err(Error::invalid(format!(
            "initial dual variable must lie in the unit ball (max |w| = {worst})"
        )));
    }
    Ok(())
}

/// Gradient projection on the dual of the TV denoising problem:
///
/// ```text
/// u_k     = P+(v + lambda div w_k)
/// w_{k+1} = P_1(w_k + 1/(lambda ||grad||^2) grad u_k)
/// ```
///
/// Runs exactly `iters` iterations and returns `(u_{iters-1}, w_iters)`.
pub fn gp_denoise(p: &DenoiseProblem, iters: usize, w0: &DualField) -> Result<(Image, DualField)> {
    gp_denoise_observed(p, iters, w0, |_, _| {})
}

pub fn gp_denoise_observed(
    p: &DenoiseProblem,
    iters: usize,
    w0: &DualField,
    mut observe: impl FnMut(usize, &Image),
) -> Result<(Image, DualField)> {
    check_inputs(p, iters, w0)?;
    check_unit_feasible(w0)?;
    let sigma = 1.0 / (p.lambda * GRAD_NORM_SQ);
    let mut w = w0.clone();
    let mut u = p.v.zeros_like();
    for k in 0..iters {
        u = primal_from_dual(&p.v, &w, p.lambda);
        w = dual_ascent(&w, &u, sigma, 1.0)?;
        observe(k + 1, &u);
    }
    Ok((u, w))
}

/// FGP: GP with FISTA extrapolation on the dual variable. Returns the
/// primal image of the last dual iterate.
pub fn fgp_denoise(p: &DenoiseProblem, iters: usize, w0: &DualField) -> Result<(Image, DualField)> {
    fgp_denoise_observed(p, iters, w0, |_, _| {})
}

pub fn fgp_denoise_observed(
    p: &DenoiseProblem,
    iters: usize,
    w0: &DualField,
    mut observe: impl FnMut(usize, &Image),
) -> Result<(Image, DualField)> {
    check_inputs(p, iters, w0)?;
    check_unit_feasible(w0)?;
    let sigma = 1.0 / (p.lambda * GRAD_NORM_SQ);
    let mut w_prev = w0.clone();
    let mut r = w0.clone();
    let mut t = 1.0;
    for k in 0..iters {
        let u = primal_from_dual(&p.v, &r, p.lambda);
        let w = dual_ascent(&r, &u, sigma, 1.0)?;
        let t_next = next_t(t);
        r = super::extrapolate(&w, &w_prev, (t - 1.0) / t_next);
        w_prev = w;
        t = t_next;
        if k + 1 < iters {
            observe(k + 1, &u);
        }
    }
    let u = primal_from_dual(&p.v, &w_prev, p.lambda);
    observe(iters, &u);
    Ok((u, w_prev))
}

/// Condat–Vu specialised to the denoising problem.
///
/// With either step rule the primal update does not depend on the previous
/// primal iterate, so `u0` only fixes the shape. Returns `(u_iters, w_iters)`.
pub fn cv_denoise(
    p: &DenoiseProblem,
    iters: usize,
    mode: StepMode,
    u0: &Image,
    w0: &DualField,
) -> Result<(Image, DualField)> {
    cv_denoise_observed(p, iters, mode, u0, w0, |_, _| {})
}

pub fn cv_denoise_observed(
    p: &DenoiseProblem,
    iters: usize,
    mode: StepMode,
    u0: &Image,
    w0: &DualField,
    mut observe: impl FnMut(usize, &Image),
) -> Result<(Image, DualField)> {
    check_inputs(p, iters, w0)?;
    u0.ensure_shape(p.shape())?;
    let (gamma, sigma, radius) = cv_step_sizes(mode, p.lambda);
    let mut u = u0.clone();
    let mut w = w0.clone();
    for k in 0..iters {
        u = primal_from_dual(&p.v, &w, gamma);
        w = dual_ascent(&w, &u, sigma, radius)?;
        observe(k + 1, &u);
    }
    Ok((u, w))
}

/// Denoising solver selector used by the CLI and the bilevel driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiseSolver {
    Gp,
    Fgp,
    Cv(StepMode),
}

impl DenoiseSolver {
    /// Runs from the default start `u0 = P+(v)`, `w0 = 0`.
    pub fn run(
        self,
        p: &DenoiseProblem,
        iters: usize,
        observe: impl FnMut(usize, &Image),
    ) -> Result<Image> {
        let (rows, cols) = p.shape();
        let w0 = DualField::zeros(rows, cols);
        let out = match self {
            DenoiseSolver::Gp => gp_denoise_observed(p, iters, &w0, observe)?,
            DenoiseSolver::Fgp => fgp_denoise_observed(p, iters, &w0, observe)?,
            DenoiseSolver::Cv(mode) => {
                cv_denoise_observed(p, iters, mode, &proj_nonneg(&p.v), &w0, observe)?
            }
        };
        Ok(out.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{add_noise, make_phantom, NoiseSpec, PhantomKind, PhantomSpec};

    fn blocks(size: usize, seed: u64) -> Image {
        let clean = make_phantom(&PhantomSpec::new(PhantomKind::Blocks, size, size, seed)).unwrap();
        add_noise(&clean, &NoiseSpec::gaussian(0.1, seed + 100))
    }

    #[test]
    fn vanishing_lambda_gives_clamped_data() {
        let v = blocks(16, 3).map(|x| x - 0.2);
        let p = DenoiseProblem::new(v.clone(), 1e-8).unwrap();
        let target = proj_nonneg(&v);
        for solver in [
            DenoiseSolver::Gp,
            DenoiseSolver::Fgp,
            DenoiseSolver::Cv(StepMode::Cv),
            DenoiseSolver::Cv(StepMode::Gp),
        ] {
            let u = solver.run(&p, 50, |_, _| {}).unwrap();
            assert!(u.sub(&target).max_abs() <= 1e-6, "{solver:?}");
        }
    }

    #[test]
    fn constant_data_is_fixed_after_one_iteration() {
        let p = DenoiseProblem::new(Image::filled(8, 8, 0.7), 0.3).unwrap();
        let (u, _) = gp_denoise(&p, 1, &DualField::zeros(8, 8)).unwrap();
        assert_eq!(u, p.v);
    }

    #[test]
    fn step_modes_match_gp_exactly() {
        let p = DenoiseProblem::new(blocks(16, 1), 0.15).unwrap();
        let w0 = DualField::zeros(16, 16);
        let u0 = proj_nonneg(&p.v);
        let (ug, wg) = gp_denoise(&p, 60, &w0).unwrap();
        let (uc, wc) = cv_denoise(&p, 60, StepMode::Gp, &u0, &w0).unwrap();
        assert_eq!(ug, uc);
        assert_eq!(wg, wc);
        // STEP_CV carries lambda * w
        let (uv, wv) = cv_denoise(&p, 60, StepMode::Cv, &u0, &w0).unwrap();
        assert!(uv.sub(&ug).max_abs() <= 1e-12);
        assert!(wv.sub(&wg.scaled(p.lambda)).max_abs() <= 1e-12);
    }

    #[test]
    fn dual_iterates_stay_feasible() {
        let p = DenoiseProblem::new(blocks(16, 2), 0.2).unwrap();
        let w0 = DualField::zeros(16, 16);
        let (_, w) = cv_denoise(&p, 40, StepMode::Cv, &p.v, &w0).unwrap();
        assert!(w.pointwise_norm().max() <= p.lambda * (1.0 + 1e-12));
        let (_, w) = fgp_denoise(&p, 40, &w0).unwrap();
        assert!(w.pointwise_norm().max() <= 1.0 + 1e-12);
    }

    #[test]
    fn fgp_is_ahead_of_gp_early() {
        let p = DenoiseProblem::new(blocks(16, 0), 0.2).unwrap();
        let w0 = DualField::zeros(16, 16);
        let (ug, _) = gp_denoise(&p, 100, &w0).unwrap();
        let (uf, _) = fgp_denoise(&p, 100, &w0).unwrap();
        assert!(p.objective(&uf) <= p.objective(&ug));
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = DenoiseProblem::new(Image::zeros(4, 4), 0.1).unwrap();
        assert!(gp_denoise(&p, 0, &DualField::zeros(4, 4)).is_err());
        assert!(gp_denoise(&p, 3, &DualField::zeros(3, 4)).is_err());
        let mut w = DualField::zeros(4, 4);
        w.set_pixel(0, (2.0, 0.0));
        assert!(gp_denoise(&p, 3, &w).is_err());
        assert!("nope".parse::<StepMode>().is_err());
    }
}
