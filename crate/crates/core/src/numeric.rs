/// Adaptive Simpson quadrature of `f` over `[a, b]` to a relative tolerance.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // A coarse composite pass sets the absolute scale so that integrands with
    // a near-zero midpoint sample do not collapse the tolerance.
    const PANELS: usize = 8;
    let h = (b - a) / PANELS as f64;
    let mut total = 0.0;
    let mut scale = 0.0;
    let mut panels = Vec::with_capacity(PANELS);
    for i in 0..PANELS {
        let (x0, x1) = (
            a + i as f64 * h,
            if i + 1 == PANELS {
                b
            } else {
                a + (i + 1) as f64 * h
            },
        );
        let xm = 0.5 * (x0 + x1);
        let (f0, fm, f1) = (f(x0), f(xm), f(x1));
        let s = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        scale += s.abs();
        panels.push((x0, x1, f0, fm, f1, s));
    }
    let eps = (rel_tol * scale).max(f64::MIN_POSITIVE) / PANELS as f64;
    for (x0, x1, f0, fm, f1, s) in panels {
        total += refine(&f, x0, x1, f0, fm, f1, s, eps, 50);
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn refine(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
        + refine(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_transcendentals() {
        assert!((adaptive_simpson(|x| x * x, 0.0, 3.0, 1e-12) - 9.0).abs() < 1e-12);
        let s = adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-10);
        assert!((s - 2.0).abs() < 1e-9);
        let e = adaptive_simpson(f64::exp, -1.0, 2.0, 1e-10);
        assert!((e - (2f64.exp() - (-1f64).exp())).abs() < 1e-9);
        assert_eq!(adaptive_simpson(f64::exp, 1.0, 1.0, 1e-6), 0.0);
    }
}
