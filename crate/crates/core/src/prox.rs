//! Projections, the closed-form quadratic prox and the scalar ramp/Heaviside maps.

use crate::error::{ensure_positive, Result};
use crate::field::{DualField, Image, VectorSpace};

/// Componentwise `max(0, u)`.
pub fn proj_nonneg(u: &Image) -> Image {
    u.map(|x| x.max(0.0))
}

/// Per-pixel projection onto the 2-ball of the given radius:
/// `w_p / max{1, |w_p|_2 / radius}`.
pub fn proj_l2ball(w: &DualField, radius: f64) -> Result<DualField> {
    ensure_positive("radius", radius)?;
    let mut out = w.clone();
    let n = w.pixels();
    let (ox, oy) = out.planes_mut();
    for p in 0..n {
        let m = ball_factor(ox[p], oy[p], radius);
        ox[p] /= m;
        oy[p] /= m;
    }
    Ok(out)
}

/// `max{1, |(x, y)|_2 / radius}`. Never below 1, so dividing by it is safe
/// even for the zero vector.
#[inline]
pub(crate) fn ball_factor(x: f64, y: f64, radius: f64) -> f64 {
    let q = crate::field::pixel_norm(x, y) / radius;
    1.0_f64.max(q)
}

pub fn ramp(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        x
    }
}

/// Heaviside step with `H(0) = 1`.
pub fn heaviside(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        1.0
    }
}

/// Heaviside step used inside derivative formulas: `H(0) = 0`, i.e. the
/// zero element of the subgradient of `ramp` at the kink.
pub fn heaviside_backward(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Prox of `tau * 1/2 ||. - v||^2`: `(u + tau v) / (1 + tau)`.
pub fn prox_sql2(u: &Image, v: &Image, tau: f64) -> Result<Image> {
    if tau.is_nan() || tau < 0.0 {
        return Err(crate::error::Error::invalid(format!("tau must be >= 0, got {tau}")));
    }
    let mut out = u.lin_comb(1.0, v, tau);
    out.scale(1.0 / (1.0 + tau));
    Ok(out)
}
