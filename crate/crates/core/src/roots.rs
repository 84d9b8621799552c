//! Bracketed scalar root finding for monotone increasing functions on `[0, ∞)`.

const MAX_EXPANSIONS: usize = 600;
const MAX_BISECTIONS: usize = 4000;
const TINY: f64 = 1e-300;
const HUGE: f64 = 1e300;

/// Finds the root of an increasing `f` on `[0, ∞)` given `f(0) < 0`.
///
/// The bracket is grown geometrically from `start` in both directions, then
/// narrowed by bisection (geometric while the bracket spans more than a factor
/// of two, arithmetic afterwards) until it collapses to adjacent floats.
/// Returns `None` when `f` never reaches zero below `1e300`.
pub(crate) fn increasing_root<F>(f: F, start: f64) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    let mut hi = start.max(TINY);
    let mut lo;
    if f(hi) >= 0.0 {
        lo = hi;
        loop {
            lo *= 0.25;
            if lo < TINY {
                return Some(0.0);
            }
            if f(lo) < 0.0 {
                break;
            }
            hi = lo;
        }
    } else {
        lo = hi;
        let mut found = false;
        for _ in 0..MAX_EXPANSIONS {
            hi *= 4.0;
            if hi > HUGE {
                break;
            }
            let v = f(hi);
            if v.is_nan() {
                return None;
            }
            if v >= 0.0 {
                found = true;
                break;
            }
            lo = hi;
        }
        if !found {
            return None;
        }
    }

    for _ in 0..MAX_BISECTIONS {
        let mid = if hi > 2.0 * lo {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Both ends are within one ulp; prefer the end closest to zero.
    if f(lo).abs() < f(hi).abs() {
        Some(lo)
    } else {
        Some(hi)
    }
}

/// Bisection on a finite bracket `[a, b]` where `f(a)` and `f(b)` differ in sign.
/// Halves until the bracket collapses to adjacent floats or `max_iterations`
/// is reached, then returns the end with the smaller residual. Running to
/// collapse matters near zero, where `m^α` with small `α` is nearly vertical.
pub(crate) fn bisect_bracket<F>(f: F, mut a: f64, mut b: f64, max_iterations: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return a;
    }
    let sign_a = fa.signum();
    for _ in 0..max_iterations {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == sign_a {
            a = mid;
            fa = fm;
        } else {
            b = mid;
            fb = fm;
        }
    }
    if fa.abs() <= fb.abs() { a } else { b }
}
