//! One-dimensional adaptive quadrature, used for analytic checks on 1-D
//! densities (bound tightness, normalisation, KL cross-checks).

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    // Split the range first so narrow peaks are not stepped over by the
    // initial three-point estimate.
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    let piece_tol = tol / pieces as f64;
    (0..pieces)
        .map(|k| {
            let lo = a + k as f64 * h;
            let hi = lo + h;
            let fa = f(lo);
            let fb = f(hi);
            let m = 0.5 * (lo + hi);
            let fm = f(m);
            let whole = simpson(lo, hi, fa, fm, fb);
            adaptive(&f, lo, hi, fa, fm, fb, whole, piece_tol, 48)
        })
        .sum()
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
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
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    // below this the difference is rounding noise and halving never settles
    let noise = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth == 0 || !delta.is_finite() || delta.abs() <= 15.0 * tol || delta.abs() <= noise {
        left + right + delta / 15.0
    } else {
        adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 8.0).abs() < 1e-10);
    }

    #[test]
    fn standard_normal_mass() {
        let c = (2.0 * std::f64::consts::PI).sqrt();
        let v = integrate(|x| (-0.5 * x * x).exp() / c, -12.0, 12.0, 1e-12);
        assert!((v - 1.0).abs() < 1e-10);
    }
}
