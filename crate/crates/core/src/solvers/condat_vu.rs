use crate::field::VectorSpace;
use crate::linops::LinearMap;

/// Plain Condat–Vu iteration for `f(u) + g(L u) + h(u)`:
///
/// ```text
/// u_{k+1} = prox_{gamma h}(u_k - gamma L* w_k - gamma grad f(u_k))
/// w_{k+1} = prox_{sigma g*}(w_k + sigma L u_{k+1})
/// ```
///
/// No relaxation step. `prox_h` must already include `gamma` and
/// `prox_gconj` must already include `sigma`.
#[allow(clippy::too_many_arguments)]
pub fn condat_vu<L, F, H, G>(
    l: &L,
    grad_f: F,
    prox_h: H,
    prox_gconj: G,
    gamma: f64,
    sigma: f64,
    u0: &L::Domain,
    w0: &L::Codomain,
    iters: usize,
) -> (L::Domain, L::Codomain)
where
    L: LinearMap,
    F: Fn(&L::Domain) -> L::Domain,
    H: Fn(&L::Domain) -> L::Domain,
    G: Fn(&L::Codomain) -> L::Codomain,
{
    let mut u = u0.clone();
    let mut w = w0.clone();
    for _ in 0..iters {
        let mut step = l.adjoint(&w);
        step.axpy(1.0, &grad_f(&u));
        let mut arg = u.clone();
        arg.axpy(-gamma, &step);
        u = prox_h(&arg);
        let mut dual = w.clone();
        dual.axpy(sigma, &l.apply(&u));
        w = prox_gconj(&dual);
    }
    (u, w)
}
