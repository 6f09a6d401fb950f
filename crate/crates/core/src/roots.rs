//! Bracketed bisection helpers shared by the spectral solvers.

const MAX_ITER: usize = 300;

/// Root of `f` on `[a, b]` where `f(a)` and `f(b)` have opposite signs.
///
/// Stops once the bracket is narrower than `tol(mid)` or the midpoint no
/// longer moves. Returns `None` when the endpoints do not bracket a sign
/// change or `f` produces a non-finite value.
pub(crate) fn bisect<F, T>(mut f: F, a: f64, b: f64, tol: T) -> Option<f64>
where
    F: FnMut(f64) -> f64,
    T: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if !f_lo.is_finite() || !f_hi.is_finite() {
        return None;
    }
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return None;
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol(mid) || mid <= lo || mid >= hi {
            return Some(mid);
        }
        let f_mid = f(mid);
        if !f_mid.is_finite() {
            return None;
        }
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Boundary between a point where `pred` holds (`inside`) and one where it
/// does not (`outside`). The returned point is on the `inside` side, within
/// `tol` of the switch.
pub(crate) fn bisect_predicate<P, T>(mut pred: P, inside: f64, outside: f64, tol: T) -> f64
where
    P: FnMut(f64) -> bool,
    T: Fn(f64) -> f64,
{
    let (mut good, mut bad) = (inside, outside);
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (good + bad);
        if (good - bad).abs() <= tol(mid) || mid == good || mid == bad {
            break;
        }
        if pred(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}
