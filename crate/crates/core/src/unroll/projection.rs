//! Closed-form derivatives of the per-pixel ball projection
//! `P_r(w)_p = w_p / max{1, |w_p|_2 / r}`.
//!
//! At a pixel with `|w_p| > r` the projection is `r w_p / |w_p|`, whose
//! Jacobian is `(r/|w|)(I - w w^T / |w|^2)` in `w` and `w / |w|` in `r`.
//! Inside the ball (boundary included) it is the identity and the radius
//! derivative vanishes.

use crate::error::{ensure_positive, Error, Result};
use crate::field::{DualField, Image, VectorSpace};
use crate::prox::heaviside_backward;

/// Per-pixel quantities the derivative formulas need.
pub(crate) struct BallJacobian<'w> {
    w: &'w DualField,
    radius: f64,
    norm: Image,
    factor: Image,
}

impl<'w> BallJacobian<'w> {
    pub(crate) fn recompute(w: &'w DualField, radius: f64) -> Self {
        let norm = w.pointwise_norm();
        let factor = norm.map(|n| 1.0_f64.max(n / radius));
        BallJacobian {
            w,
            radius,
            norm,
            factor,
        }
    }

    pub(crate) fn from_saved(w: &'w DualField, radius: f64, norm: &Image, factor: &Image) -> Self {
        BallJacobian {
            w,
            radius,
            norm: norm.clone(),
            factor: factor.clone(),
        }
    }

    /// `(|w_p|, max factor, exterior indicator)`
    #[inline]
    fn at(&self, p: usize) -> (f64, f64, f64) {
        let n = self.norm.as_slice()[p];
        let m = self.factor.as_slice()[p];
        (n, m, heaviside_backward(n / self.radius - 1.0))
    }
}

fn check(w: &DualField, other: &DualField, radius: f64) -> Result<()> {
    ensure_positive("radius", radius)?;
    if w.shape() != other.shape() {
        return Err(Error::ShapeMismatch {
            expected: w.shape(),
            found: other.shape(),
        });
    }
    Ok(())
}

/// Directional derivative of `P_r(w)` along `(w_dot, radius_dot)`.
pub fn proj_l2ball_jvp(w: &DualField, radius: f64, w_dot: &DualField, radius_dot: f64) -> Result<DualField> {
    check(w, w_dot, radius)?;
    Ok(jvp_pixelwise(&BallJacobian::recompute(w, radius), w_dot, radius_dot))
}

pub(crate) fn jvp_pixelwise(jac: &BallJacobian<'_>, w_dot: &DualField, radius_dot: f64) -> DualField {
    let r = jac.radius;
    let mut out = w_dot.zeros_like();
    for p in 0..out.pixels() {
        let (n, m, h) = jac.at(p);
        let (dx, dy) = w_dot.pixel(p);
        let (x, y) = jac.w.pixel(p);
        let (mut ox, mut oy) = (dx / m, dy / m);
        if h > 0.0 {
            let c = (x * dx + y * dy) / (m * m * n * r);
            let s = radius_dot * n / (r * r * m * m);
            ox += (s - c) * x;
            oy += (s - c) * y;
        }
        out.set_pixel(p, (ox, oy));
    }
    out
}

/// Pullback of the cotangent `cot` through `P_r`: returns `(w_bar, r_bar)`.
pub fn proj_l2ball_vjp(w: &DualField, radius: f64, cot: &DualField) -> Result<(DualField, f64)> {
    check(w, cot, radius)?;
    Ok(vjp_pixelwise(&BallJacobian::recompute(w, radius), cot))
}

pub(crate) fn vjp_pixelwise(jac: &BallJacobian<'_>, cot: &DualField) -> (DualField, f64) {
    let r = jac.radius;
    let mut w_bar = cot.zeros_like();
    let mut r_bar = 0.0;
    for p in 0..w_bar.pixels() {
        let (n, m, h) = jac.at(p);
        let (gx, gy) = cot.pixel(p);
        let (x, y) = jac.w.pixel(p);
        let (mut ox, mut oy) = (gx / m, gy / m);
        if h > 0.0 {
            let inner = x * gx + y * gy;
            let c = inner / (m * m * n * r);
            ox -= c * x;
            oy -= c * y;
            r_bar += inner * n / (r * r * m * m);
        }
        w_bar.set_pixel(p, (ox, oy));
    }
    (w_bar, r_bar)
}

/// `d P_r(w) / d r`, per pixel.
pub fn radius_derivative(w: &DualField, radius: f64) -> Result<DualField> {
    ensure_positive("radius", radius)?;
    let jac = BallJacobian::recompute(w, radius);
    Ok(jvp_pixelwise(&jac, &w.zeros_like(), 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::proj_l2ball;

    fn field(x: &[f64], y: &[f64]) -> DualField {
        DualField::from_planes(
            Image::from_vec(1, x.len(), x.to_vec()).unwrap(),
            Image::from_vec(1, y.len(), y.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn radius_derivative_is_unit_direction_outside() {
        let w = field(&[3.0, 0.1, 0.0], &[4.0, 0.2, 0.0]);
        let d = radius_derivative(&w, 1.0).unwrap();
        assert!((d.pixel(0).0 - 0.6).abs() < 1e-15);
        assert!((d.pixel(0).1 - 0.8).abs() < 1e-15);
        assert_eq!(d.pixel(1), (0.0, 0.0));
        assert_eq!(d.pixel(2), (0.0, 0.0));
    }

    #[test]
    fn boundary_uses_interior_branch() {
        let w = field(&[3.0], &[4.0]);
        let d = radius_derivative(&w, 5.0).unwrap();
        assert_eq!(d.pixel(0), (0.0, 0.0));
        let j = proj_l2ball_jvp(&w, 5.0, &field(&[1.0], &[-2.0]), 0.0).unwrap();
        assert_eq!(j.pixel(0), (1.0, -2.0));
    }

    #[test]
    fn jvp_matches_central_difference() {
        let w = field(&[3.0, 0.3, -2.0], &[4.0, -0.1, 0.5]);
        let wd = field(&[0.7, -1.1, 0.4], &[0.2, 0.9, -0.3]);
        let (r, rd) = (1.3, 0.6);
        let j = proj_l2ball_jvp(&w, r, &wd, rd).unwrap();
        let h = 1e-6;
        let plus = proj_l2ball(&w.lin_comb(1.0, &wd, h), r + h * rd).unwrap();
        let minus = proj_l2ball(&w.lin_comb(1.0, &wd, -h), r - h * rd).unwrap();
        let fd = plus.lin_comb(0.5 / h, &minus, -0.5 / h);
        assert!(j.sub(&fd).max_abs() < 1e-8);
    }

    #[test]
    fn vjp_is_adjoint_of_jvp() {
        let w = field(&[3.0, 0.3, -2.0, 0.0], &[4.0, -0.1, 0.5, 0.0]);
        let wd = field(&[0.7, -1.1, 0.4, 1.0], &[0.2, 0.9, -0.3, 2.0]);
        let g = field(&[-0.5, 0.25, 1.5, 0.3], &[1.0, 0.1, -0.7, 0.4]);
        let (r, rd) = (1.3, -0.4);
        let j = proj_l2ball_jvp(&w, r, &wd, rd).unwrap();
        let (wb, rb) = proj_l2ball_vjp(&w, r, &g).unwrap();
        let lhs = g.dot(&j);
        let rhs = wb.dot(&wd) + rb * rd;
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_radius_and_shape() {
        let w = field(&[1.0], &[1.0]);
        assert!(proj_l2ball_vjp(&w, 0.0, &w).is_err());
        assert!(proj_l2ball_jvp(&w, 1.0, &field(&[1.0, 2.0], &[0.0, 0.0]), 0.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn dual(n: usize) -> impl Strategy<Value = DualField> {
            proptest::collection::vec(-3.0..3.0f64, 2 * n * n).prop_map(move |v| {
                let mut w = DualField::zeros(n, n);
                w.as_mut_slice().copy_from_slice(&v);
                w
            })
        }

        proptest! {
            #[test]
            fn jvp_vjp_duality(
                w in dual(3), wd in dual(3), g in dual(3),
                r in 0.1..2.0f64, rd in -1.0..1.0f64,
            ) {
                let j = proj_l2ball_jvp(&w, r, &wd, rd).unwrap();
                let (wb, rb) = proj_l2ball_vjp(&w, r, &g).unwrap();
                let lhs = g.dot(&j);
                let rhs = wb.dot(&wd) + rb * rd;
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }

            #[test]
            fn exterior_radius_derivative_is_unit_direction(w in dual(3), r in 0.1..2.0f64) {
                let d = radius_derivative(&w, r).unwrap();
                for p in 0..w.pixels() {
                    let (x, y) = w.pixel(p);
                    let n = x.hypot(y);
                    let (dx, dy) = d.pixel(p);
                    if n > r {
                        prop_assert!((dx - x / n).abs() <= 1e-12 && (dy - y / n).abs() <= 1e-12);
                    } else {
                        prop_assert!(dx == 0.0 && dy == 0.0);
                    }
                }
            }
        }
    }
}
