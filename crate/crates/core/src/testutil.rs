//! Independent numerical oracles for unit tests.

/// Double-exponential (tanh-sinh) quadrature on `[a, b]`; tolerates integrable
/// endpoint singularities.
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = 1.0 / 64.0;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    let pi2 = std::f64::consts::FRAC_PI_2;
    for k in -(6 * 64)..=(6 * 64) {
        let t = k as f64 * h;
        let u = pi2 * t.sinh();
        let x = u.tanh();
        let w = pi2 * t.cosh() / u.cosh().powi(2);
        if w < 1e-300 {
            continue;
        }
        // Distance to the endpoints computed without cancellation.
        let gap = 1.0 / (u.abs().exp() * u.cosh());
        let point = if x < 0.0 { a + half * gap } else { b - half * gap };
        let point = if x == 0.0 { mid } else { point };
        if point <= a || point >= b {
            continue;
        }
        let v = f(point);
        if v.is_finite() {
            sum += w * v;
        }
    }
    sum * h * half
}

/// Coarse-to-fine grid search for the maximizer of `f` on `[lo, hi]`.
pub fn grid_argmax(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let n = 1000;
    loop {
        let step = (hi - lo) / n as f64;
        let (best, _) = (0..=n)
            .map(|i| {
                let x = lo + step * i as f64;
                (x, f(x))
            })
            .fold((lo, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
        if step < tol {
            return best;
        }
        lo = (best - step).max(lo);
        hi = (best + step).min(hi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_known_integrals() {
        assert!((tanh_sinh(|x| x * x, 0.0, 3.0) - 9.0).abs() < 1e-10);
        assert!((tanh_sinh(|x| 1.0 / x.sqrt(), 0.0, 1.0) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn grid_finds_parabola_peak() {
        assert!((grid_argmax(|x| -(x - 0.3).powi(2), -2.0, 2.0, 1e-10) - 0.3).abs() < 1e-9);
    }
}
