//! Finite-difference gradient verification.
//!
//! The checker evaluates a scalar function with central differences
//! and compares against analytically supplied gradients. It never
//! touches the tape, so it stays an independent oracle for the
//! backward pass. Used by the test suites and the `selftest` CLI
//! subcommand.

/// Central-difference gradient of `f` at `at` with step `h`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, at: &[f64], h: f64) -> Vec<f64> {
    let mut x = at.to_vec();
    let mut out = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x);
        x[i] = orig - h;
        let fm = f(&x);
        x[i] = orig;
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

/// Relative error between two gradient values with a floor that keeps
/// near-zero pairs from exploding.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-8);
    (a - b).abs() / denom
}

/// Maximum relative error between `analytic` and the central-difference
/// gradient of `f` at `at`.
pub fn max_rel_err_vs_fd<F: FnMut(&[f64]) -> f64>(
    f: F,
    at: &[f64],
    analytic: &[f64],
    h: f64,
) -> f64 {
    assert_eq!(at.len(), analytic.len());
    let fd = central_diff(f, at, h);
    analytic
        .iter()
        .zip(&fd)
        .map(|(&a, &d)| rel_err(a, d))
        .fold(0.0, f64::max)
}
