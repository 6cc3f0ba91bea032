//! Adaptive Simpson quadrature for vector-valued integrands.
//!
//! All components share one refinement tree, so integrands that are exact
//! multiples of each other produce exactly proportional results.

/// Integral estimate with an accumulated error estimate per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub evaluations: usize,
}

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` until every component's local error estimate
/// `|S₂ - S₁|/15` falls below its share of `tol`.
pub fn adaptive_simpson<const N: usize, F>(mut f: F, a: f64, b: f64, tol: f64) -> Estimate<N>
where
    F: FnMut(f64) -> [f64; N],
{
    let mut out = Estimate {
        value: [0.0; N],
        error: [0.0; N],
        evaluations: 0,
    };
    if a == b {
        return out;
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    out.evaluations = 3;
    let whole = simpson(a, b, &fa, &fm, &fb);
    recurse(&mut f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut out);
    out
}

#[inline]
fn simpson<const N: usize>(a: f64, b: f64, fa: &[f64; N], fm: &[f64; N], fb: &[f64; N]) -> [f64; N] {
    let w = (b - a) / 6.0;
    std::array::from_fn(|k| w * (fa[k] + 4.0 * fm[k] + fb[k]))
}

#[allow(clippy::too_many_arguments)]
fn recurse<const N: usize, F>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: [f64; N],
    fm: [f64; N],
    fb: [f64; N],
    whole: [f64; N],
    tol: f64,
    depth: u32,
    out: &mut Estimate<N>,
) where
    F: FnMut(f64) -> [f64; N],
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    out.evaluations += 2;
    let left = simpson(a, m, &fa, &flm, &fm);
    let right = simpson(m, b, &fm, &frm, &fb);
    let diff: [f64; N] = std::array::from_fn(|k| left[k] + right[k] - whole[k]);
    let converged = diff.iter().all(|d| d.abs() <= 15.0 * tol);
    if converged || depth == 0 || m <= a || m >= b {
        for k in 0..N {
            out.value[k] += left[k] + right[k] + diff[k] / 15.0;
            out.error[k] += diff[k].abs() / 15.0;
        }
        return;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, out);
    recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, out);
}

/// Scalar convenience wrapper: `(value, error)`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let e = adaptive_simpson(|x| [f(x)], a, b, tol);
    (e.value[0], e.error[0])
}

/// Integrates over `[a, b]` split at the interior `breaks`.
pub fn adaptive_simpson_split<const N: usize, F>(mut f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> Estimate<N>
where
    F: FnMut(f64) -> [f64; N],
{
    let mut points = vec![a];
    points.extend(breaks.iter().copied().filter(|x| *x > a && *x < b));
    points.push(b);
    points.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    let pieces = (points.len() - 1) as f64;
    let mut total = Estimate {
        value: [0.0; N],
        error: [0.0; N],
        evaluations: 0,
    };
    for w in points.windows(2) {
        let e = adaptive_simpson(&mut f, w[0], w[1], tol / pieces);
        for k in 0..N {
            total.value[k] += e.value[k];
            total.error[k] += e.error[k];
        }
        total.evaluations += e.evaluations;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_exact() {
        let (v, _) = integrate(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn smooth_transcendental() {
        let (v, err) = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-10);
        assert!((v - 2.0).abs() < 1e-10);
        assert!(err < 1e-9);
    }

    #[test]
    fn kink_with_split() {
        let e = adaptive_simpson_split(|x: f64| [(x - 0.3).abs()], 0.0, 1.0, &[0.3], 1e-12);
        let exact = 0.3 * 0.3 / 2.0 + 0.7 * 0.7 / 2.0;
        assert!((e.value[0] - exact).abs() < 1e-14);
    }

    #[test]
    fn proportional_components_stay_proportional() {
        let e = adaptive_simpson(
            |x: f64| {
                let g = (-x * x).exp();
                [g, 200.0 * g]
            },
            0.0,
            3.0,
            1e-10,
        );
        assert!((e.value[1] / e.value[0] - 200.0).abs() < 1e-12);
    }

    #[test]
    fn empty_interval() {
        let (v, e) = integrate(|x| x, 1.0, 1.0, 1e-8);
        assert_eq!((v, e), (0.0, 0.0));
    }
}
