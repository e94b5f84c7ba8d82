//! Standard cap warping function η̂ on (−∞, D].
//!
//! η̂ ≡ 1 for r ≤ 0, η̂ = 1 − a·e^{−b/r} on (0, 1/8], a strictly concave
//! quintic Hermite bridge on [1/8, D − 1/8], and the spherical tip
//! sin(√k (D − r))/√k on [D − 1/8, D]. The tip curvature k and the bridge
//! length are chosen by a grid scan that maximizes the curvature floor on
//! [1/4, D].

use serde::Serialize;

use crate::error::{FlowError, Result};

const R_FLAT: f64 = 0.125;
const TIP: f64 = 0.125;
/// Start of the region where the cap must be uniformly positively curved.
pub const CORE: f64 = 0.25;

#[derive(Debug, Clone, Serialize)]
pub struct CapTable {
    pub n: usize,
    pub a_const: f64,
    pub b_const: f64,
    pub k: f64,
    pub d: f64,
    /// Smallest sectional curvature of the cap metric dr² + η̂² g on [1/4, D].
    pub sigma: f64,
    pub r: Vec<f64>,
    pub eta_hat: Vec<f64>,
    #[serde(skip)]
    bridge: [f64; 6],
}

/// η = 1 − a e^{−b/r} and its first two derivatives for r > 0.
fn eta_exp(a: f64, b: f64, r: f64) -> (f64, f64, f64) {
    let e = (-b / r).exp();
    let r2 = r * r;
    (1.0 - a * e, -a * b / r2 * e, -a * e * (b * b / (r2 * r2) - 2.0 * b / (r2 * r)))
}

fn sine_tip(k: f64, d: f64, r: f64) -> (f64, f64, f64) {
    let q = k.sqrt();
    let th = q * (d - r);
    (th.sin() / q, -th.cos(), -q * th.sin())
}

/// Coefficients of the quintic in t ∈ [0, 1] with prescribed value, slope
/// and curvature (in r) at both ends of an interval of length h.
fn quintic(h: f64, left: (f64, f64, f64), right: (f64, f64, f64)) -> [f64; 6] {
    let a0 = left.0;
    let a1 = h * left.1;
    let a2 = 0.5 * h * h * left.2;
    let big_a = right.0 - (a0 + a1 + a2);
    let big_b = h * right.1 - (a1 + 2.0 * a2);
    let big_c = h * h * right.2 - 2.0 * a2;
    [
        a0,
        a1,
        a2,
        10.0 * big_a - 4.0 * big_b + 0.5 * big_c,
        -15.0 * big_a + 7.0 * big_b - big_c,
        6.0 * big_a - 3.0 * big_b + 0.5 * big_c,
    ]
}

fn eval_quintic(c: &[f64; 6], h: f64, r0: f64, r: f64) -> (f64, f64, f64) {
    let t = (r - r0) / h;
    let mut v = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for j in (0..6).rev() {
        v = v * t + c[j];
    }
    for j in (1..6).rev() {
        d1 = d1 * t + j as f64 * c[j];
    }
    for j in (2..6).rev() {
        d2 = d2 * t + (j * (j - 1)) as f64 * c[j];
    }
    (v, d1 / h, d2 / (h * h))
}

/// Sectional curvatures (radial, orbital) of dr² + f² g at a point with
/// warping data (f, f', f'').
pub fn warped_sectional(f: f64, f1: f64, f2: f64) -> (f64, f64) {
    (-f2 / f, (1.0 - f1 * f1) / (f * f))
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    a: f64,
    b: f64,
    k: f64,
    d: f64,
    bridge: [f64; 6],
}

impl Shape {
    fn new(n: usize, k: f64, bridge_len: f64) -> Self {
        let nf = n as f64;
        let (a, b) = (1.0 / (100.0 * nf).powi(2), 100.0 * nf);
        let d = R_FLAT + bridge_len + TIP;
        let bridge = quintic(bridge_len, eta_exp(a, b, R_FLAT), sine_tip(k, d, d - TIP));
        Shape { a, b, k, d, bridge }
    }

    fn eval(&self, r: f64) -> (f64, f64, f64) {
        if r <= 0.0 {
            (1.0, 0.0, 0.0)
        } else if r <= R_FLAT {
            eta_exp(self.a, self.b, r)
        } else if r < self.d - TIP {
            eval_quintic(&self.bridge, self.d - TIP - R_FLAT, R_FLAT, r)
        } else {
            sine_tip(self.k, self.d, r.min(self.d))
        }
    }

    /// Sectional curvatures, exact on the spherical tip (where the orbital
    /// formula degenerates to 0/0 at the pole).
    fn curvature(&self, r: f64) -> (f64, f64) {
        if r >= self.d - TIP {
            return (self.k, self.k);
        }
        let (f, f1, f2) = self.eval(r);
        warped_sectional(f, f1, f2)
    }

    /// Curvature floor on [1/4, D]; None when the shape violates the
    /// monotonicity or concavity requirements on the bridge.
    fn floor(&self, samples: usize) -> Option<f64> {
        let lo = R_FLAT;
        let hi = self.d - TIP;
        let mut sigma = self.curvature(CORE).0.min(self.curvature(CORE).1);
        for j in 1..=samples {
            let r = lo + (hi - lo) * j as f64 / samples as f64;
            let (_, f1, f2) = self.eval(r);
            if !(f1 < 0.0 && f1 > -1.0 && f2 < 0.0) {
                return None;
            }
            if r >= CORE {
                let (kr, ko) = self.curvature(r);
                sigma = sigma.min(kr).min(ko);
            }
        }
        Some(sigma.min(self.k))
    }
}

/// Construct and validate the cap table for fiber dimension `n`, sampled
/// on `grid_size` uniform nodes over [−1, D].
pub fn build_cap_table(n: usize, grid_size: usize) -> Result<CapTable> {
    if n < 2 {
        return Err(FlowError::CapConstructionFailed(format!("n = {n} < 2")));
    }
    if grid_size < 16 {
        return Err(FlowError::CapConstructionFailed(format!("grid_size {grid_size} < 16")));
    }
    let mut best: Option<(f64, Shape)> = None;
    for ki in 0..=70 {
        let k = 0.5 + 0.05 * ki as f64;
        for li in 0..=52 {
            let len = 0.4 + 0.05 * li as f64;
            let shape = Shape::new(n, k, len);
            if let Some(s) = shape.floor(400) {
                if best.map_or(true, |(b, _)| s > b) {
                    best = Some((s, shape));
                }
            }
        }
    }
    let (_, shape) = best.ok_or_else(|| FlowError::CapConstructionFailed("no admissible bridge".into()))?;
    let sigma = shape.floor(20_000).ok_or_else(|| FlowError::CapConstructionFailed("bridge fails on refinement".into()))?;

    let r_left = 1.0;
    let mut r: Vec<f64> = (0..grid_size).map(|i| -r_left + (shape.d + r_left) * i as f64 / (grid_size - 1) as f64).collect();
    r[grid_size - 1] = shape.d;
    let eta_hat = r.iter().map(|&x| shape.eval(x).0).collect();
    let table = CapTable { n, a_const: shape.a, b_const: shape.b, k: shape.k, d: shape.d, sigma, r, eta_hat, bridge: shape.bridge };
    table.validate()?;
    Ok(table)
}

impl CapTable {
    fn shape(&self) -> Shape {
        Shape { a: self.a_const, b: self.b_const, k: self.k, d: self.d, bridge: self.bridge }
    }

    /// η̂ and its first two derivatives at any r ≤ D.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        self.shape().eval(r)
    }

    /// Sectional curvatures (radial, orbital) of the cap metric at r ∈ (0, D].
    pub fn curvature(&self, r: f64) -> (f64, f64) {
        self.shape().curvature(r)
    }

    /// log₁₀(1 − η̂(r)) on the exponential segment, which underflows in
    /// double precision long before it is representable.
    pub fn log10_flatness(&self, r: f64) -> f64 {
        assert!(r > 0.0 && r <= R_FLAT);
        (self.a_const.ln() - self.b_const / r) / std::f64::consts::LN_10
    }

    /// Check every structural property of the cap on its table and on the
    /// exponential segment analytically.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(FlowError::CapConstructionFailed(msg));
        if !(self.d > 0.625) {
            return fail(format!("D = {} not above 5/8", self.d));
        }
        for (&r, &v) in self.r.iter().zip(&self.eta_hat) {
            if r <= 0.0 && v != 1.0 {
                return fail(format!("eta_hat({r}) = {v} != 1 on r <= 0"));
            }
        }
        // exponential segment: signs of η' and η'' follow from b > 2r
        if !(self.b_const > 2.0 * R_FLAT && self.a_const > 0.0 && self.a_const < 0.5) {
            return fail("exponential segment constants out of range".into());
        }
        let shape = self.shape();
        let samples = 20_000;
        for j in 1..=samples {
            let r = R_FLAT + (self.d - R_FLAT) * j as f64 / samples as f64;
            let (v, d1, d2) = shape.eval(r);
            let interior = r < self.d;
            if interior && !(d1 < 0.0 && d1 > -1.0) {
                return fail(format!("eta_hat' = {d1} outside (-1, 0) at r = {r}"));
            }
            // at the tip itself η̂'' = −√k·sin 0 = 0
            if interior && !(d2 < 0.0) {
                return fail(format!("eta_hat'' = {d2} not negative at r = {r}"));
            }
            if interior && !(v > 0.0) {
                return fail(format!("eta_hat = {v} not positive at r = {r}"));
            }
        }
        let (v, d1, _) = shape.eval(self.d);
        if v.abs() > 1e-14 || (d1 + 1.0).abs() > 1e-14 {
            return fail(format!("tip closes with eta_hat = {v}, eta_hat' = {d1}"));
        }
        for j in 0..=100 {
            let r = self.d - TIP + TIP * j as f64 / 100.0;
            let (e, _, _) = shape.eval(r);
            let s = sine_tip(self.k, self.d, r).0;
            if (e - s).abs() > 1e-8 {
                return fail(format!("tip deviates from the sine cap at r = {r}"));
            }
        }
        if !(self.sigma > 0.0) {
            return fail(format!("curvature floor {} on [1/4, D] not positive", self.sigma));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# n={} k={:.16e} D={:.16e} sigma={:.16e}\nr,eta_hat,d_eta_hat,dd_eta_hat\n", self.n, self.k, self.d, self.sigma);
        for &r in &self.r {
            let (v, d1, d2) = self.eval(r);
            out.push_str(&format!("{r:.16e},{v:.16e},{d1:.16e},{d2:.16e}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_to_machine_precision() {
        let c = build_cap_table(2, 801).unwrap();
        assert_eq!(c.eval(0.0).0, 1.0);
        assert_eq!(c.eval(-0.5), (1.0, 0.0, 0.0));
        assert_eq!(c.eval(1.0 / 16.0).0, 1.0);
        // 1 − η̂(1/16) = e^{−3200}/200²
        let l = c.log10_flatness(1.0 / 16.0);
        let expect = -(200.0f64 * 200.0).log10() - 3200.0 / std::f64::consts::LN_10;
        assert!((l - expect).abs() < 1e-9);
        assert!(l < -130.0);
    }

    #[test]
    fn structure_for_several_dimensions() {
        for n in 2..=5 {
            let c = build_cap_table(n, 401).unwrap();
            assert!(c.d > 0.625);
            assert!(c.sigma > 0.0);
            assert_eq!(c.a_const, 1.0 / (100.0 * n as f64).powi(2));
            assert_eq!(c.b_const, 100.0 * n as f64);
            for i in 0..c.r.len() {
                let r = c.r[i];
                // below 1/8 the derivative underflows; its sign there is structural
                if r > 0.125 && r < c.d {
                    let (_, d1, _) = c.eval(r);
                    assert!(d1 < 0.0 && d1 > -1.0, "n={n} r={r}");
                }
            }
        }
    }

    #[test]
    fn tip_is_the_sine_cap() {
        let c = build_cap_table(3, 401).unwrap();
        let q = c.k.sqrt();
        for j in 0..=50 {
            let r = c.d - 0.125 * j as f64 / 50.0;
            assert!((c.eval(r).0 - (q * (c.d - r)).sin() / q).abs() < 1e-12);
        }
        let (v, d1, _) = c.eval(c.d);
        assert!(v.abs() < 1e-15 && (d1 + 1.0).abs() < 1e-15);
    }

    #[test]
    fn bridge_matches_its_endpoints() {
        let c = build_cap_table(2, 401).unwrap();
        let eps = 1e-9;
        let join = c.d - 0.125;
        let (l, r) = (c.eval(join - eps), c.eval(join + eps));
        assert!((l.0 - r.0).abs() < 1e-8 && (l.1 - r.1).abs() < 1e-7 && (l.2 - r.2).abs() < 1e-5);
        let (v, d1, d2) = c.eval(0.125 + eps);
        assert!((v - 1.0).abs() < 1e-12 && d1.abs() < 1e-9 && d2.abs() < 1e-6);
    }

    #[test]
    fn curvature_floor_matches_samples() {
        let c = build_cap_table(2, 401).unwrap();
        let mut lo = f64::INFINITY;
        for j in 0..=5000 {
            let r = CORE + (c.d - CORE) * j as f64 / 5000.0;
            let (kr, ko) = c.curvature(r);
            lo = lo.min(kr).min(ko);
        }
        assert!(lo >= c.sigma - 1e-6 && lo < c.sigma + 1e-3, "{lo} {}", c.sigma);
    }
}
