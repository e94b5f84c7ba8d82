//! Smooth transition functions used for profile construction and gluing.

fn flat(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let f = (-1.0 / t).exp();
    let t2 = t * t;
    (f, f / t2, f * (1.0 / (t2 * t2) - 2.0 / (t2 * t)))
}

/// C^∞ step: 0 for t ≤ 0, 1 for t ≥ 1, built from exp(-1/t).
/// Returns the value and its first two derivatives.
pub fn smooth_step(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let (f, f1, f2) = flat(t);
    let (g, g1m, g2) = flat(1.0 - t);
    let g1 = -g1m;
    let s = f + g;
    let num1 = f1 * g - f * g1;
    let d1 = num1 / (s * s);
    let d2 = ((f2 * g - f * g2) * s - 2.0 * num1 * (f1 + g1)) / (s * s * s);
    (f / s, d1, d2)
}

/// C^∞ cutoff equal to 1 below `a`, 0 above `b`; value and two derivatives.
pub fn cutoff(x: f64, a: f64, b: f64) -> (f64, f64, f64) {
    let w = b - a;
    let (s, s1, s2) = smooth_step((x - a) / w);
    (1.0 - s, -s1 / w, -s2 / (w * w))
}

/// Quintic smoothstep 6t⁵ − 15t⁴ + 10t³ clamped to [0, 1] (C² at the ends).
pub fn quintic_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_is_monotone_and_symmetric() {
        let mut prev = 0.0;
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            let (v, d, _) = smooth_step(t);
            assert!(v >= prev - 1e-15);
            assert!(d >= 0.0);
            let (w, _, _) = smooth_step(1.0 - t);
            assert!((v + w - 1.0).abs() < 1e-14);
            prev = v;
        }
    }

    #[test]
    fn step_derivatives_match_differences() {
        let h = 1e-5;
        for &t in &[0.1, 0.3, 0.5, 0.77, 0.93] {
            let (_, d1, d2) = smooth_step(t);
            let fd1 = (smooth_step(t + h).0 - smooth_step(t - h).0) / (2.0 * h);
            let fd2 = (smooth_step(t + h).1 - smooth_step(t - h).1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-7 * (1.0 + d1.abs()), "{t}");
            assert!((d2 - fd2).abs() < 1e-6 * (1.0 + d2.abs()), "{t}");
        }
    }

    #[test]
    fn quintic_step_endpoints() {
        assert_eq!(quintic_step(-1.0), 0.0);
        assert_eq!(quintic_step(0.5), 0.5);
        assert_eq!(quintic_step(2.0), 1.0);
    }
}
