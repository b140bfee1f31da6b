//! Deterministic test support: a tiny splitmix64 generator and a fixed-grid
//! RK4 integrator used as a brute-force oracle. Not part of the public
//! contract; exposed so integration tests can share it.

use nalgebra::DVector;

/// splitmix64 step; deterministic and seedable, no external dependency.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Uniform draw in [lo, hi).
pub fn uniform(state: &mut u64, lo: f64, hi: f64) -> f64 {
    let unit = (splitmix64(state) >> 11) as f64 / (1u64 << 53) as f64;
    lo + unit * (hi - lo)
}

/// Classic fixed-step RK4 over [t0, t1] with `steps` uniform steps; the
/// brute-force reference the adaptive engine is compared against.
pub fn rk4_fixed<F>(rhs: F, t0: f64, t1: f64, y0: &DVector<f64>, steps: usize) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let h = (t1 - t0) / steps as f64;
    let mut t = t0;
    let mut y = y0.clone();
    for _ in 0..steps {
        let k1 = rhs(t, &y);
        let k2 = rhs(t + 0.5 * h, &(&y + &k1 * (0.5 * h)));
        let k3 = rhs(t + 0.5 * h, &(&y + &k2 * (0.5 * h)));
        let k4 = rhs(t + h, &(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t += h;
    }
    y
}

/// Composite Simpson quadrature with `panels` panels (must be even overall;
/// 2*panels+1 evaluations).
pub fn simpson<F>(f: F, a: f64, b: f64, panels: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let n = 2 * panels;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}
