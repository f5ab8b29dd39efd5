//! Adaptive Gauss–Kronrod quadrature (7-point Gauss, 15-point Kronrod).
//!
//! Used for the spherical-cap volume integral; the integrand there is smooth
//! after the polar-angle substitution, so a modest recursion depth reaches
//! residuals near machine precision.

/// Kronrod abscissae on [-1, 1] (positive half; node 0 included once).
const XK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];

/// Kronrod weights matching `XK`.
const WK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];

/// Gauss weights for the embedded 7-point rule (nodes XK[1], XK[3], XK[5], XK[7]).
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    /// Estimated absolute error (sum of per-panel |K15 - G7| estimates).
    pub residual: f64,
    pub converged: bool,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&x, &wk)) in XK.iter().zip(WK.iter()).enumerate() {
        let contrib = if x == 0.0 {
            f(mid)
        } else {
            f(mid - half * x) + f(mid + half * x)
        };
        kronrod += wk * contrib;
        if i % 2 == 1 {
            gauss += WG[i / 2] * contrib;
        }
    }
    let kronrod = kronrod * half;
    let gauss = gauss * half;
    let diff = (kronrod - gauss).abs();
    // |K15 - G7| estimates the error of the *Gauss* rule; sharpen it the
    // QUADPACK way since the Kronrod value is far more accurate.
    let err = diff * (200.0 * diff).sqrt().min(1.0);
    (kronrod, err)
}

/// Integrates `f` over `[a, b]` by adaptive bisection of GK15 panels until
/// the summed error estimate falls below `tol` (absolute) or the depth limit
/// is hit.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> QuadResult {
    if a == b {
        return QuadResult { value: 0.0, residual: 0.0, converged: true };
    }
    let mut value = 0.0;
    let mut residual = 0.0;
    let mut converged = true;
    // Explicit stack of (a, b, depth).
    let mut stack = vec![(a, b, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, e) = gk15(f, lo, hi);
        let local_tol = tol * (hi - lo).abs() / (b - a).abs();
        if e <= local_tol.max(1e-300) || depth >= 40 {
            if depth >= 40 && e > local_tol {
                converged = false;
            }
            value += v;
            residual += e;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    QuadResult { value, residual, converged }
}
