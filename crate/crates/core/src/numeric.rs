//! Small numerical kernels: bisection, fixed-step RK4, adaptive Simpson, golden section.

/// Bisection on a sign change of `f` over `[lo, hi]`.
///
/// Returns the midpoint of the final bracket. If the endpoints do not straddle
/// zero the endpoint with the smaller residual is returned.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> f64 {
    let flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    let fhi = f(hi);
    if fhi == 0.0 {
        return hi;
    }
    if flo.signum() == fhi.signum() {
        return if flo.abs() <= fhi.abs() { lo } else { hi };
    }
    bisect_by(lo, hi, tol, max_iter, |x| {
        let v = f(x);
        v.signum() == flo.signum()
    })
}

/// Bisection driven by a predicate: `go_right(x)` is true when the root lies above `x`.
pub fn bisect_by<P: FnMut(f64) -> bool>(
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: usize,
    mut go_right: P,
) -> f64 {
    for _ in 0..max_iter {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if go_right(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Classical RK4 with a fixed number of steps from `(x0, v0)` to `x1`.
///
/// `x1` may be smaller than `x0`. The callback `check` sees every accepted
/// state and may abort the integration by returning `Err`. Samples are
/// returned in the order visited.
pub fn rk4<F, C, E>(
    mut rhs: F,
    x0: f64,
    v0: f64,
    x1: f64,
    steps: usize,
    mut check: C,
) -> Result<Vec<(f64, f64)>, E>
where
    F: FnMut(f64, f64) -> Result<f64, E>,
    C: FnMut(f64, f64) -> Result<(), E>,
{
    let steps = steps.max(1);
    let h = (x1 - x0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut v = v0;
    check(x0, v)?;
    out.push((x0, v));
    for i in 0..steps {
        let x = x0 + h * i as f64;
        let k1 = rhs(x, v)?;
        let k2 = rhs(x + 0.5 * h, v + 0.5 * h * k1)?;
        let k3 = rhs(x + 0.5 * h, v + 0.5 * h * k2)?;
        let k4 = rhs(x + h, v + h * k3)?;
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let xn = if i + 1 == steps { x1 } else { x0 + h * (i + 1) as f64 };
        check(xn, v)?;
        out.push((xn, v));
    }
    Ok(out)
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
