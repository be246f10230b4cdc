use crate::kernels::{KernelId, SmoothSpec};

const MAX_ITER: usize = 200;

/// Unique root in `r` of `tau - Kbar(-r/h) + eta + rho (r - c) = 0`.
///
/// The left side is strictly increasing with slope `rho + K_h(-r) >= rho`,
/// and because `Kbar` takes values in `[0, 1]` the root always lies in
/// `[c - (tau + eta)/rho, c + (1 - tau - eta)/rho]`. The uniform kernel has a
/// piecewise-linear `Kbar` and is solved in closed form; the other kernels use
/// Newton's method from `c`, falling back to bisection whenever a Newton step
/// leaves the current bracket.
pub fn r_update_root(spec: &SmoothSpec, eta: f64, rho: f64, c: f64) -> f64 {
    debug_assert!(rho > 0.0);
    let tau = spec.tau;
    let h = spec.h;
    if spec.kernel == KernelId::Uniform {
        return uniform_root(tau, h, eta, rho, c);
    }
    let kernel = spec.kernel.kernel();
    let f = |r: f64| tau - kernel.cdf(-r / h) + eta + rho * (r - c);

    let mut lo = c - (tau + eta) / rho;
    let mut hi = c + (1.0 - tau - eta) / rho;
    let mut r = c.clamp(lo, hi);
    for _ in 0..MAX_ITER {
        let fr = f(r);
        if fr == 0.0 {
            return r;
        }
        if fr < 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let slope = rho + kernel.density(-r / h) / h;
        let mut next = r - fr / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - r).abs() <= 1e-15 * (1.0 + r.abs()) || hi - lo <= 1e-15 * (1.0 + r.abs()) {
            // keep whichever endpoint has the smaller residual
            let fn_ = f(next);
            return if fn_.abs() <= fr.abs() { next } else { r };
        }
        r = next;
    }
    r
}

fn uniform_root(tau: f64, h: f64, eta: f64, rho: f64, c: f64) -> f64 {
    // Kbar(-r/h) = 0 for r >= h, 1 for r <= -h, (1 - r/h)/2 in between
    let f = |r: f64| tau - (0.5 * (1.0 - r / h)).clamp(0.0, 1.0) + eta + rho * (r - c);
    if f(h) <= 0.0 {
        c - (tau + eta) / rho
    } else if f(-h) >= 0.0 {
        c + (1.0 - tau - eta) / rho
    } else {
        (rho * c + 0.5 - tau - eta) / (rho + 0.5 / h)
    }
}
