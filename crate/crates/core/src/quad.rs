//! Adaptive quadrature used by the speed-measure and theta integrals.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Result of an adaptive integration: the value and a running error bound.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<F> {
    pub value: F,
    pub error_bound: F,
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute accuracy `tol`.
///
/// Errors if the recursion depth budget is exhausted before every panel meets
/// its share of the tolerance; the error carries the achieved bound.
pub fn adaptive_simpson<F, G>(f: G, a: F, b: F, tol: F) -> Result<Quadrature<F>>
where
    F: Scalar,
    G: Fn(F) -> F,
{
    const MAX_DEPTH: u32 = 60;
    let two = F::from_f64_lossy(2.0);
    let six = F::from_f64_lossy(6.0);
    let fifteen = F::from_f64_lossy(15.0);

    struct Ctx<'a, F, G> {
        f: &'a G,
        two: F,
        six: F,
        fifteen: F,
        roundoff: F,
        achieved: F,
    }

    fn simpson<F: Scalar>(six: F, fa: F, fm: F, fb: F, h: F) -> F {
        h / six * (fa + F::from_f64_lossy(4.0) * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Scalar, G: Fn(F) -> F>(
        ctx: &mut Ctx<F, G>,
        a: F,
        b: F,
        fa: F,
        fm: F,
        fb: F,
        whole: F,
        tol: F,
        depth: u32,
    ) -> F {
        let m = (a + b) / ctx.two;
        let lm = (a + m) / ctx.two;
        let rm = (m + b) / ctx.two;
        let flm = (ctx.f)(lm);
        let frm = (ctx.f)(rm);
        let h = b - a;
        let left = simpson(ctx.six, fa, flm, fm, h / ctx.two);
        let right = simpson(ctx.six, fm, frm, fb, h / ctx.two);
        let delta = left + right - whole;
        // Roundoff floor: once delta is at the rounding error of the panel
        // sums, subdividing cannot improve the estimate.
        let floor = ctx.roundoff * (left.abs() + right.abs() + whole.abs());
        if delta.abs() <= ctx.fifteen * tol || delta.abs() <= floor || depth == 0 {
            // At depth 0 the panel is accepted regardless; the accumulated
            // bound decides convergence at top level.
            ctx.achieved = ctx.achieved + delta.abs() / ctx.fifteen;
            left + right + delta / ctx.fifteen
        } else {
            let half_tol = tol / ctx.two;
            let l = recurse(ctx, a, m, fa, flm, fm, left, half_tol, depth - 1);
            let r = recurse(ctx, m, b, fm, frm, fb, right, half_tol, depth - 1);
            l + r
        }
    }

    let fa = f(a);
    let fb = f(b);
    let m = (a + b) / two;
    let fm = f(m);
    let whole = simpson(six, fa, fm, fb, b - a);
    let mut ctx = Ctx {
        f: &f,
        two,
        six,
        fifteen,
        roundoff: F::from_f64_lossy(8.0) * F::epsilon(),
        achieved: F::zero(),
    };
    let value = recurse(&mut ctx, a, b, fa, fm, fb, whole, tol, MAX_DEPTH);
    if ctx.achieved > tol.max(ctx.roundoff * value.abs()) || !value.is_finite() {
        return Err(Error::QuadratureNotConverged {
            achieved: ctx.achieved.to_f64().unwrap_or(f64::NAN),
            requested: tol.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(Quadrature {
        value,
        error_bound: ctx.achieved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_polynomials_exactly() {
        let q = adaptive_simpson(|x: f64| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12).unwrap();
        assert_relative_eq!(q.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn integrates_gaussian() {
        let q = adaptive_simpson(|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-12).unwrap();
        assert_relative_eq!(q.value, std::f64::consts::PI.sqrt(), max_relative = 1e-11);
    }

    #[test]
    fn resolves_narrow_lorentzian() {
        // width 1e-6 peak centred in the interval
        let w = 1e-6_f64;
        let q = adaptive_simpson(|x: f64| w / (w * w + x * x), -1.0, 1.0, 1e-10).unwrap();
        let exact = 2.0 * (1.0 / w).atan();
        assert_relative_eq!(q.value, exact, max_relative = 1e-8);
    }
}
