//! The Bryant soliton, horizontal-coordinate barrier subsolutions built from
//! it, and the radial extension map.
//!
//! The soliton is the warped product dr² + w(r)² g_S with potential u,
//!   −n w″/w + u″ = 0,   −w″/w + (n−1)(1 − w′²)/w² + u′w′/w = 0,
//! with w odd, w′(0) = 1 and u″(0) = −1/(n+1), which makes R(0) = 1.
//! Its horizontal z-function B is z = (w′)² against the coordinate
//! ρ = w/(n−1), the scale at which B(ρ) = 1/ρ² + c₂/ρ⁴ + … at infinity.

use serde::{Deserialize, Serialize};

use crate::curvature::derivatives;
use crate::error::{FlowError, Result};
use crate::monitors::leftmost_bump;
use crate::profile::Profile;
use crate::smooth::quintic_step;

/// Radius where the Taylor series hands over to the integrator.
const SERIES_START: f64 = 0.02;
/// Allowance on numerically evaluated subsolution residuals.
pub const SUBSOL_TOL: f64 = 1e-3;
/// Default comparison horizon beyond τ0.
pub const TAU_HORIZON: f64 = 5.0;

/// Coefficients of w = r + a₃r³ + a₅r⁵ + a₇r⁷ and u′ = b₁r + b₃r³ + b₅r⁵.
#[derive(Debug, Clone, Copy)]
struct Series {
    a3: f64,
    a5: f64,
    a7: f64,
    b1: f64,
    b3: f64,
    b5: f64,
}

impl Series {
    fn new(n: usize) -> Self {
        let n = n as f64;
        let (p1, p3, p5) = (n + 1.0, n + 3.0, n + 5.0);
        Series {
            a3: -1.0 / (6.0 * n * p1),
            a5: (13.0 * n + 3.0) / (120.0 * n * n * p1 * p1 * p3),
            a7: -(493.0 * n * n + 308.0 * n + 15.0) / (5040.0 * n.powi(3) * p1.powi(3) * p3 * p5),
            b1: -1.0 / p1,
            b3: 2.0 / (3.0 * p1 * p1 * p3),
            b5: -(11.0 * n + 1.0) / (15.0 * n * p1.powi(3) * p3 * p5),
        }
    }

    /// (w, w′, u′, u) at r.
    fn state(&self, r: f64) -> [f64; 4] {
        let r2 = r * r;
        let w = r * (1.0 + r2 * (self.a3 + r2 * (self.a5 + r2 * self.a7)));
        let wp = 1.0 + r2 * (3.0 * self.a3 + r2 * (5.0 * self.a5 + r2 * 7.0 * self.a7));
        let up = r * (self.b1 + r2 * (self.b3 + r2 * self.b5));
        let u = r2 * (self.b1 / 2.0 + r2 * (self.b3 / 4.0 + r2 * self.b5 / 6.0));
        [w, wp, up, u]
    }
}

fn soliton_wpp(n: f64, y: &[f64; 4]) -> f64 {
    let [w, wp, up, _] = *y;
    (n - 1.0) * (1.0 - wp * wp) / w + up * wp
}

fn soliton_rhs(n: f64, y: &[f64; 4]) -> [f64; 4] {
    let wpp = soliton_wpp(n, y);
    [y[1], wpp, n * wpp / y[0], y[2]]
}

/// w‴ from differentiating the second soliton equation.
fn soliton_wppp(n: f64, y: &[f64; 4]) -> f64 {
    let [w, wp, up, _] = *y;
    let wpp = soliton_wpp(n, y);
    let upp = n * wpp / w;
    (n - 1.0) * (-2.0 * wp * wpp / w - (1.0 - wp * wp) * wp / (w * w)) + upp * wp + up * wpp
}

/// Accepted nodes of an adaptive Dormand–Prince 5(4) integration.
fn dopri5<F, H>(f: F, r0: f64, y0: [f64; 4], r_end: f64, tol: f64, h_max: H) -> Result<Vec<(f64, [f64; 4])>>
where
    F: Fn(&[f64; 4]) -> [f64; 4],
    H: Fn(f64) -> f64,
{
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let mut out = vec![(r0, y0)];
    let (mut r, mut y) = (r0, y0);
    let mut h = h_max(r0).min(1e-3);
    let mut count = 0usize;
    while r < r_end {
        count += 1;
        if count > 2_000_000 {
            return Err(FlowError::IntegrationFailed(format!("step budget exhausted at r = {r}")));
        }
        h = h.min(h_max(r)).min(r_end - r);
        if h < 1e-14 * r.max(1.0) {
            return Err(FlowError::IntegrationFailed(format!("step size underflow at r = {r}")));
        }
        let mut k = [[0.0; 4]; 7];
        for s in 0..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                for c in 0..4 {
                    ys[c] += h * A[s][j] * kj[c];
                }
            }
            k[s] = f(&ys);
        }
        // the last stage is evaluated at the 5th-order solution
        let mut y5 = y;
        for c in 0..4 {
            y5[c] += h * (0..6).map(|j| A[6][j] * k[j][c]).sum::<f64>();
        }
        let mut err = 0.0f64;
        for c in 0..4 {
            let e = h * (0..7).map(|j| E[j] * k[j][c]).sum::<f64>();
            let sc = tol + tol * y[c].abs().max(y5[c].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / 4.0).sqrt();
        if !err.is_finite() || y5.iter().any(|v| !v.is_finite()) {
            h *= 0.2;
            continue;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if err <= 1.0 {
            r += h;
            y = y5;
            out.push((r, y));
        }
        h *= factor;
    }
    Ok(out)
}

/// Quintic Hermite coefficients on an interval of length h in t ∈ [0, 1].
fn hermite5(h: f64, left: (f64, f64, f64), right: (f64, f64, f64)) -> [f64; 6] {
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

/// The horizontal z-function B(ρ) with exact first and second derivatives at
/// the nodes, interpolated by quintic Hermite pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BTable {
    pub rho: Vec<f64>,
    pub z: Vec<f64>,
    pub dz: Vec<f64>,
    pub d2z: Vec<f64>,
    /// Tail coefficient c in 1/ρ² + c/ρ⁴, matched to the last node.
    pub tail: f64,
}

impl BTable {
    /// B, B′, B″ at ρ ≥ 0.
    pub fn eval(&self, rho: f64) -> (f64, f64, f64) {
        let last = self.rho.len() - 1;
        if rho >= self.rho[last] {
            let r2 = rho * rho;
            let c = self.tail;
            return (1.0 / r2 + c / (r2 * r2), -2.0 / (r2 * rho) - 4.0 * c / (r2 * r2 * rho), 6.0 / (r2 * r2) + 20.0 * c / (r2 * r2 * r2));
        }
        let rho = rho.max(0.0);
        let j = self.rho.partition_point(|&x| x <= rho).clamp(1, last) - 1;
        let h = self.rho[j + 1] - self.rho[j];
        let c = hermite5(h, (self.z[j], self.dz[j], self.d2z[j]), (self.z[j + 1], self.dz[j + 1], self.d2z[j + 1]));
        let t = (rho - self.rho[j]) / h;
        let v = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
        let d1 = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
        let d2 = 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
        (v, d1 / h, d2 / (h * h))
    }

    pub fn value(&self, rho: f64) -> f64 {
        self.eval(rho).0
    }

    pub fn rho_max(&self) -> f64 {
        *self.rho.last().expect("nonempty table")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BryantProfile {
    pub n: usize,
    pub tol: f64,
    pub r: Vec<f64>,
    pub w: Vec<f64>,
    pub wp: Vec<f64>,
    pub u_pot: Vec<f64>,
    pub up: Vec<f64>,
    pub b_table: BTable,
    pub b2: f64,
    pub c2: f64,
    /// Relative spread of ρ⁴(B − ρ⁻²) about the c₂ fit on its window.
    pub c2_residual: f64,
    /// Scalar curvature at the tip, extrapolated from the first integrated nodes.
    pub r0_curvature: f64,
    /// max |R + u′² − 1| over the table (a first integral of the system).
    pub conservation_drift: f64,
}

impl BryantProfile {
    fn state(&self, i: usize) -> [f64; 4] {
        [self.w[i], self.wp[i], self.up[i], self.u_pot[i]]
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        *self.r.last().expect("nonempty profile")
    }

    pub fn wpp(&self, i: usize) -> f64 {
        if i == 0 {
            return 0.0;
        }
        soliton_wpp(self.n as f64, &self.state(i))
    }

    /// Radial sectional curvature −w″/w.
    pub fn k_rad(&self, i: usize) -> f64 {
        if i == 0 {
            return -6.0 * Series::new(self.n).a3;
        }
        -self.wpp(i) / self.w[i]
    }

    /// Orbital sectional curvature (1 − w′²)/w².
    pub fn k_orb(&self, i: usize) -> f64 {
        if i == 0 {
            return -6.0 * Series::new(self.n).a3;
        }
        (1.0 - self.wp[i] * self.wp[i]) / (self.w[i] * self.w[i])
    }

    /// R = 2n·K_rad + n(n−1)·K_orb.
    pub fn scalar(&self, i: usize) -> f64 {
        let n = self.n as f64;
        2.0 * n * self.k_rad(i) + n * (n - 1.0) * self.k_orb(i)
    }

    /// Residual of the stationary horizontal equation at ρ: the Bryant
    /// soliton is a fixed point of the flow of z = (∂_sψ)² in ψ.
    pub fn stationary_residual(&self, rho: f64) -> f64 {
        let (b, b1, b2) = self.b_table.eval(rho);
        let n = self.n as f64;
        b * b2 + (n - 1.0 - b) * b1 / rho + 2.0 * (n - 1.0) * b * (1.0 - b) / (rho * rho) - 0.5 * b1 * b1
    }

    /// `r,w,u,B` table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,w,u,B\n");
        for i in 0..self.len() {
            s.push_str(&format!("{:.17e},{:.17e},{:.17e},{:.17e}\n", self.r[i], self.w[i], self.u_pot[i], self.wp[i] * self.wp[i]));
        }
        s
    }
}

/// Integrates the soliton system from the tip to `r_max`.
pub fn solve_soliton(n: usize, r_max: f64, tol: f64) -> Result<BryantProfile> {
    if n < 2 {
        return Err(FlowError::InvalidSpec(format!("n = {n} < 2")));
    }
    if !(r_max.is_finite() && r_max > 1.0) {
        return Err(FlowError::InvalidSpec(format!("r_max = {r_max} must exceed 1")));
    }
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(FlowError::InvalidSpec(format!("tol = {tol} outside (0, 1e-3]")));
    }
    let nf = n as f64;
    let series = Series::new(n);
    let nodes = dopri5(|y| soliton_rhs(nf, y), SERIES_START, series.state(SERIES_START), r_max, tol, |r| 0.01 + 0.05 * r)?;

    let mut bp = BryantProfile {
        n,
        tol,
        r: vec![0.0],
        w: vec![0.0],
        wp: vec![1.0],
        u_pot: vec![0.0],
        up: vec![0.0],
        b_table: BTable { rho: vec![], z: vec![], dz: vec![], d2z: vec![], tail: 0.0 },
        b2: f64::NAN,
        c2: f64::NAN,
        c2_residual: f64::NAN,
        r0_curvature: f64::NAN,
        conservation_drift: 0.0,
    };
    for (r, y) in &nodes {
        if !(y[0] > 0.0 && y[1] > 0.0 && y[1] < 1.0) {
            return Err(FlowError::NotMonotone(format!("w = {:.6e}, w' = {:.12} at r = {r:.6}", y[0], y[1])));
        }
        bp.r.push(*r);
        bp.w.push(y[0]);
        bp.wp.push(y[1]);
        bp.up.push(y[2]);
        bp.u_pot.push(y[3]);
    }

    // R(0) from the even expansion R0 + R2 r² + R4 r⁴ through the first three nodes.
    let pts: Vec<(f64, f64)> = (1..4).map(|i| (bp.r[i] * bp.r[i], bp.scalar(i))).collect();
    bp.r0_curvature = quadratic_at_zero(&pts);
    bp.conservation_drift = (0..bp.len()).map(|i| (bp.scalar(i) + bp.up[i] * bp.up[i] - 1.0).abs()).fold(0.0, f64::max);

    let scale = nf - 1.0;
    let mut bt = BTable { rho: vec![], z: vec![], dz: vec![], d2z: vec![], tail: 0.0 };
    for i in 0..bp.len() {
        let (wpp, wppp) = if i == 0 { (0.0, 6.0 * series.a3) } else { (bp.wpp(i), soliton_wppp(nf, &bp.state(i))) };
        bt.rho.push(bp.w[i] / scale);
        bt.z.push(bp.wp[i] * bp.wp[i]);
        bt.dz.push(2.0 * scale * wpp);
        bt.d2z.push(2.0 * scale * scale * wppp / bp.wp[i]);
    }
    if bt.z.windows(2).any(|p| p[1] >= p[0]) || bt.rho.windows(2).any(|p| p[1] <= p[0]) {
        return Err(FlowError::NotMonotone("B is not strictly decreasing in the horizontal coordinate".into()));
    }
    let (rl, zl) = (*bt.rho.last().unwrap(), *bt.z.last().unwrap());
    bt.tail = rl.powi(4) * (zl - 1.0 / (rl * rl));
    bp.b_table = bt;

    let (b2, c2, c2_residual) = fit_b2_c2(&bp)?;
    bp.b2 = b2;
    bp.c2 = c2;
    bp.c2_residual = c2_residual;
    Ok(bp)
}

/// Value at x = 0 of the quadratic through three (x, y) points.
fn quadratic_at_zero(p: &[(f64, f64)]) -> f64 {
    let mut v = 0.0;
    for (i, &(xi, yi)) in p.iter().enumerate() {
        let mut l = 1.0;
        for (j, &(xj, _)) in p.iter().enumerate() {
            if i != j {
                l *= (0.0 - xj) / (xi - xj);
            }
        }
        v += yi * l;
    }
    v
}

/// Least squares y = α + β·x; returns (α, β).
fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let m = x.len() as f64;
    if x.len() < 3 {
        return None;
    }
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let beta = sxy / sxx;
    Some((my - beta * mx, beta))
}

/// b₂ from (1 − B)/ρ² = b₂ + e·ρ² over table nodes with 0 < ρ ≤ `window`.
pub fn fit_b2_window(bp: &BryantProfile, window: f64) -> Result<f64> {
    let t = &bp.b_table;
    let (x, y): (Vec<f64>, Vec<f64>) =
        t.rho.iter().zip(&t.z).filter(|(r, _)| **r > 0.0 && **r <= window).map(|(r, z)| (r * r, (1.0 - z) / (r * r))).unzip();
    linear_fit(&x, &y).map(|(a, _)| a).ok_or_else(|| FlowError::FitFailed(format!("fewer than 3 nodes with rho <= {window}")))
}

/// c₂ from ρ⁴(B − ρ⁻²) = c₂ + e/ρ² over nodes with ρ in [lo, hi]; also the
/// relative spread of the data about the fitted constant.
pub fn fit_c2_window(bp: &BryantProfile, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let t = &bp.b_table;
    let (x, y): (Vec<f64>, Vec<f64>) = t
        .rho
        .iter()
        .zip(&t.z)
        .filter(|(r, _)| **r >= lo && **r <= hi)
        .map(|(r, z)| (1.0 / (r * r), r.powi(4) * (z - 1.0 / (r * r))))
        .unzip();
    let (c2, _) = linear_fit(&x, &y).ok_or_else(|| FlowError::FitFailed(format!("fewer than 3 nodes with rho in [{lo}, {hi}]")))?;
    let spread = y.iter().map(|v| (v - c2).abs()).fold(0.0, f64::max) / c2.abs().max(1e-300);
    Ok((c2, spread))
}

/// Fitted (b₂, c₂, relative c₂ spread): b₂ on ρ ≤ 0.2, c₂ on the upper half
/// of the table's horizontal range.
pub fn fit_b2_c2(bp: &BryantProfile) -> Result<(f64, f64, f64)> {
    let b2 = fit_b2_window(bp, 0.2)?;
    let top = bp.b_table.rho_max();
    if top < 4.0 {
        return Err(FlowError::FitFailed(format!("table reaches only rho = {top:.3}; need >= 4 for c2")));
    }
    let (c2, spread) = fit_c2_window(bp, top / 2.0, top)?;
    Ok((b2, c2, spread))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticEntry {
    pub name: String,
    pub mean: f64,
    /// (max − min)/|mean| over the window.
    pub drift: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub window: (f64, f64),
    pub entries: Vec<AsymptoticEntry>,
    pub scalar_decreasing: bool,
    pub pass: bool,
}

/// Limits that should settle at large r: w/√r, K_orb·r, K_rad·r² and r·R,
/// evaluated on [r_max/2, r_max].
pub fn check_asymptotics(bp: &BryantProfile) -> AsymptoticsReport {
    const MAX_DRIFT: f64 = 0.02;
    let (lo, hi) = (bp.r_max() / 2.0, bp.r_max());
    let idx: Vec<usize> = (1..bp.len()).filter(|&i| bp.r[i] >= lo).collect();
    let series: [(&str, Box<dyn Fn(usize) -> f64>); 4] = [
        ("w/sqrt(r)", Box::new(|i| bp.w[i] / bp.r[i].sqrt())),
        ("K_orb*r", Box::new(|i| bp.k_orb(i) * bp.r[i])),
        ("K_rad*r^2", Box::new(|i| bp.k_rad(i) * bp.r[i] * bp.r[i])),
        ("r*R", Box::new(|i| bp.scalar(i) * bp.r[i])),
    ];
    let mut entries = Vec::new();
    for (name, f) in series.iter() {
        let v: Vec<f64> = idx.iter().map(|&i| f(i)).collect();
        let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
        let (mn, mx) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let drift = (mx - mn) / mean.abs();
        entries.push(AsymptoticEntry { name: name.to_string(), mean, drift, pass: !v.is_empty() && mn > 0.0 && drift < MAX_DRIFT });
    }
    let scalar_decreasing = (1..bp.len()).all(|i| bp.scalar(i) < bp.scalar(i - 1));
    let pass = entries.iter().all(|e| e.pass) && scalar_decreasing;
    AsymptoticsReport { window: (lo, hi), entries, scalar_decreasing, pass }
}

/// Z₁(u) = (1−u²)²/u² and ζ(u) = (1−u²)²(1 − 2u² + 2u²(1−u²)(log(1−u²) − 2 log u))/u⁴.
pub fn barrier_closed_forms(u: f64) -> Result<(f64, f64)> {
    if !(u > 0.0 && u < 1.0) {
        return Err(FlowError::DomainError(format!("u = {u} outside (0, 1)")));
    }
    let u2 = u * u;
    let q = 1.0 - u2;
    let z1 = q * q / u2;
    let zeta = q * q / (u2 * u2) * (1.0 - 2.0 * u2 + 2.0 * u2 * q * ((-u2).ln_1p() - 2.0 * u.ln()));
    Ok((z1, zeta))
}

/// The horizontal evolution operator after the Type-I change of variables:
/// 𝓓[z] = (z z″ + (n−1−z) z′/u + 2(n−1) z(1−z)/u² − z′²/2)/(2(n−1)) − u z′/2.
pub fn d_operator(n: usize, u: f64, z: f64, zu: f64, zuu: f64) -> f64 {
    let m = n as f64 - 1.0;
    (z * zuu + (m - z) * zu / u + 2.0 * m * z * (1.0 - z) / (u * u) - 0.5 * zu * zu) / (2.0 * m) - 0.5 * u * zu
}

/// ∂_τz − 𝓓[z] with derivatives by Richardson-extrapolated central differences.
pub fn fd_residual<F: Fn(f64, f64) -> f64>(n: usize, z: F, u: f64, tau: f64) -> f64 {
    let h = 1e-3 * u.min(1.0 - u);
    let d = |h: f64| {
        let (zm, z0, zp) = (z(u - h, tau), z(u, tau), z(u + h, tau));
        ((zp - zm) / (2.0 * h), (zp - 2.0 * z0 + zm) / (h * h))
    };
    let (a1, a2) = d(h);
    let (b1, b2) = d(h / 2.0);
    let zu = (4.0 * b1 - a1) / 3.0;
    let zuu = (4.0 * b2 - a2) / 3.0;
    let k = 1e-3;
    let dt = |k: f64| (z(u, tau + k) - z(u, tau - k)) / (2.0 * k);
    let zt = (4.0 * dt(k / 2.0) - dt(k)) / 3.0;
    zt - d_operator(n, u, z(u, tau), zu, zuu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub n: usize,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub beta: f64,
    pub d: f64,
    pub r_d: f64,
    pub tau0: f64,
    /// z_ext is checked as a subsolution on u ≥ b·e^{−τ/2}.
    pub b: f64,
    /// Comparison horizon τ̄.
    pub tau_bar: f64,
}

impl BarrierParams {
    /// Builds parameters from (A₂, A₃, D) through A₁⁻² = A₂(1 − D⁻²/2) and R_D = D√(A₃/A₂).
    pub fn from_core(n: usize, a2: f64, a3: f64, d: f64, b: f64, tau0: f64) -> Self {
        let a1 = 1.0 / (a2 * (1.0 - 0.5 / (d * d))).sqrt();
        let r_d = d * (a3 / a2).sqrt();
        BarrierParams { n, a1, a2, a3, beta: (2.0 * r_d).max(4.0), d, r_d, tau0, b, tau_bar: tau0 + TAU_HORIZON }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FlowError::InvalidSpec(m));
        if self.n < 2 {
            return bad(format!("n = {}", self.n));
        }
        if [self.a1, self.a2, self.a3, self.d, self.r_d, self.beta].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("barrier constants must be positive and finite".into());
        }
        if self.d * self.d <= 0.5 {
            return bad(format!("D = {} too small for A1", self.d));
        }
        let rel = (self.a1.powi(-2) - self.a2 * (1.0 - 0.5 / (self.d * self.d))).abs() / self.a2;
        if rel > 1e-12 {
            return bad(format!("A1^-2 = A2(1 - D^-2/2) violated by {rel:.3e}"));
        }
        if (self.r_d - self.d * (self.a3 / self.a2).sqrt()).abs() > 1e-12 * self.r_d {
            return bad("R_D != D sqrt(A3/A2)".into());
        }
        if self.r_d < 1.0 || 2.0 * self.r_d > self.beta * (1.0 + 1e-12) {
            return bad(format!("R_D = {} must lie in [1, beta/2] (beta = {})", self.r_d, self.beta));
        }
        if self.tau_bar <= self.tau0 {
            return bad("tau_bar must exceed tau0".into());
        }
        Ok(())
    }

    /// z_int(u,τ) = B(A₁e^{τ/2}u).
    pub fn z_int(&self, bp: &BryantProfile, u: f64, tau: f64) -> f64 {
        bp.b_table.value(self.a1 * (0.5 * tau).exp() * u)
    }

    /// z_ext(u,τ) = A₂e^{−τ}Z₁(u) − e^{−2τ}A₃ζ(u), extended by 0 at u = 1.
    pub fn z_ext(&self, u: f64, tau: f64) -> f64 {
        z_ext(self.a2, self.a3, u, tau)
    }
}

pub fn z_ext(a2: f64, a3: f64, u: f64, tau: f64) -> f64 {
    if u >= 1.0 {
        return 0.0;
    }
    match barrier_closed_forms(u) {
        Ok((z1, zeta)) => a2 * (-tau).exp() * z1 - (-2.0 * tau).exp() * a3 * zeta,
        Err(_) => f64::INFINITY,
    }
}

/// A table z(u) on an increasing u grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTable {
    pub u: Vec<f64>,
    pub z: Vec<f64>,
}

impl ZTable {
    /// Linear interpolation; `None` outside the table.
    pub fn eval(&self, u: f64) -> Option<f64> {
        let last = self.u.len().checked_sub(1)?;
        if u < self.u[0] || u > self.u[last] {
            return None;
        }
        let j = self.u.partition_point(|&x| x <= u).clamp(1, last) - 1;
        if j == last {
            return Some(self.z[last]);
        }
        let t = (u - self.u[j]) / (self.u[j + 1] - self.u[j]);
        Some(self.z[j] + t * (self.z[j + 1] - self.z[j]))
    }

    pub fn u_max(&self) -> f64 {
        self.u.last().copied().unwrap_or(f64::NAN)
    }

    /// Values on `grid`, which must lie inside the table.
    pub fn resample(&self, grid: &[f64]) -> Result<ZTable> {
        let z = grid
            .iter()
            .map(|&u| self.eval(u).ok_or_else(|| FlowError::GridMismatch(format!("u = {u} outside [{}, {}]", self.u[0], self.u_max()))))
            .collect::<Result<Vec<_>>>()?;
        Ok(ZTable { u: grid.to_vec(), z })
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.u.iter().cloned().zip(self.z.iter().cloned()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("u,z\n");
        for (u, z) in self.u.iter().zip(&self.z) {
            s.push_str(&format!("{u:.17e},{z:.17e}\n"));
        }
        s
    }
}

/// `m + 1` equispaced points on [0, 1].
pub fn unit_grid(m: usize) -> Vec<f64> {
    (0..=m).map(|i| i as f64 / m as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZStar {
    pub tau: f64,
    /// Band edges e^{−τ/2}R_D and 2e^{−τ/2}R_D.
    pub u1: f64,
    pub u2: f64,
    /// z_int − z_ext at u1 (must be > 0) and at u2 (must be < 0).
    pub cross_low: f64,
    pub cross_high: f64,
    /// max z_ext on (u1, 1/2], bounded by D⁻².
    pub ext_band_max: f64,
    pub table: ZTable,
}

/// The patched subsolution z_* at τ on `grid`.
pub fn build_zstar_on(params: &BarrierParams, bp: &BryantProfile, tau: f64, grid: &[f64]) -> Result<ZStar> {
    let u1 = (-0.5 * tau).exp() * params.r_d;
    let u2 = 2.0 * u1;
    if u2 >= 1.0 {
        return Err(FlowError::PatchOrderViolated { tau, detail: format!("band [{u1:.4}, {u2:.4}] leaves (0, 1)") });
    }
    let cross_low = params.z_int(bp, u1, tau) - params.z_ext(u1, tau);
    let cross_high = params.z_int(bp, u2, tau) - params.z_ext(u2, tau);
    if !(cross_low > 0.0 && cross_high < 0.0) {
        return Err(FlowError::PatchOrderViolated {
            tau,
            detail: format!("z_int - z_ext = {cross_low:.3e} at e^(-tau/2)R_D (need > 0), {cross_high:.3e} at 2e^(-tau/2)R_D (need < 0)"),
        });
    }
    let z = grid
        .iter()
        .map(|&u| {
            if u <= u1 {
                params.z_int(bp, u, tau)
            } else if u < u2 {
                params.z_int(bp, u, tau).max(params.z_ext(u, tau))
            } else {
                params.z_ext(u, tau)
            }
        })
        .collect();
    let ext_band_max = (1..=400).map(|k| u1 + (0.5 - u1) * k as f64 / 400.0).map(|u| params.z_ext(u, tau)).fold(f64::NEG_INFINITY, f64::max);
    Ok(ZStar { tau, u1, u2, cross_low, cross_high, ext_band_max, table: ZTable { u: grid.to_vec(), z } })
}

/// z_* on 1001 equispaced points of [0, 1].
pub fn build_zstar(params: &BarrierParams, bp: &BryantProfile, tau: f64) -> Result<ZStar> {
    build_zstar_on(params, bp, tau, &unit_grid(1000))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionReport {
    pub int_max: f64,
    pub int_at: (f64, f64),
    pub ext_max: f64,
    pub ext_at: (f64, f64),
    pub samples: usize,
    pub pass: bool,
}

/// Maximum of ∂_τz − 𝓓[z] for z_int on the whole grid and for z_ext on
/// u ≥ b·e^{−τ/2}; points outside (0, 1) are skipped.
pub fn verify_subsolution(params: &BarrierParams, bp: &BryantProfile, u_grid: &[f64], tau_grid: &[f64]) -> SubsolutionReport {
    let n = params.n;
    let mut rep = SubsolutionReport {
        int_max: f64::NEG_INFINITY,
        int_at: (f64::NAN, f64::NAN),
        ext_max: f64::NEG_INFINITY,
        ext_at: (f64::NAN, f64::NAN),
        samples: 0,
        pass: false,
    };
    for &tau in tau_grid {
        for &u in u_grid.iter().filter(|&&u| u > 0.0 && u < 1.0) {
            let ri = fd_residual(n, |u, t| params.z_int(bp, u, t), u, tau);
            rep.samples += 1;
            if ri > rep.int_max {
                rep.int_max = ri;
                rep.int_at = (u, tau);
            }
            if u >= params.b * (-0.5 * tau).exp() {
                let re = fd_residual(n, |u, t| params.z_ext(u, t), u, tau);
                if re > rep.ext_max {
                    rep.ext_max = re;
                    rep.ext_at = (u, tau);
                }
            }
        }
    }
    rep.pass = rep.int_max <= SUBSOL_TOL && rep.ext_max <= SUBSOL_TOL;
    rep
}

/// Smallest ρ beyond which z_ext (in ρ = e^{τ/2}u) has nonpositive residual
/// at the reference times; `None` when the residual is positive at ρ = 50.
fn ext_threshold(n: usize, a2: f64, a3: f64) -> Option<f64> {
    let rhos: Vec<f64> = (0..=200).map(|k| 0.05 * 1000f64.powf(k as f64 / 200.0)).collect();
    let mut b = rhos[0];
    for tau in [8.0, 12.0, 16.0] {
        let e = (-0.5 * tau as f64).exp();
        for (k, &rho) in rhos.iter().enumerate() {
            let u = rho * e;
            if u >= 0.95 {
                break;
            }
            if fd_residual(n, |u, t| z_ext(a2, a3, u, t), u, tau) > 0.0 {
                b = b.max(*rhos.get(k + 1)?);
            }
        }
    }
    Some(b)
}

/// Crossing inequalities in the τ → ∞ limit, where
/// z_ext(e^{−τ/2}r, τ) → A₂/r² − A₃/r⁴.
fn crossing_limit(bp: &BryantProfile, a1: f64, a2: f64, a3: f64, r_d: f64) -> (f64, f64) {
    let lim = |r: f64| a2 / (r * r) - a3 / r.powi(4);
    (bp.b_table.value(a1 * r_d) - lim(r_d), bp.b_table.value(2.0 * a1 * r_d) - lim(2.0 * r_d))
}

/// Selects (A₁, A₂, A₃, β, D, τ0) so that z_* is a patched subsolution
/// lying below `z0` at τ0.
pub fn choose_params(z0: &ZTable, bp: &BryantProfile) -> Result<BarrierParams> {
    let fail = |m: String| Err(FlowError::NoAdmissibleParams(m));
    if z0.u.is_empty() || z0.u[0] != 0.0 || z0.u_max() < 1.0 {
        return fail(format!("z0 must be tabulated on [0, 1] (covers [{:?}, {}])", z0.u.first(), z0.u_max()));
    }
    if (z0.z[0] - 1.0).abs() > 0.05 {
        return fail(format!("z0(0) = {} is not 1", z0.z[0]));
    }
    let grid = unit_grid(1000);
    let z0g = z0.resample(&grid)?;
    let inf0 = z0g.z[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    if !(inf0 > 0.0) {
        return fail(format!("inf z0 = {inf0:.3e} <= 0, so no D satisfies D^-2 <= inf z0"));
    }
    let n = bp.n;
    let a2 = 1.0;
    let mut a3 = 1.0;
    let (b, d) = 'outer: loop {
        if a3 > 1e4 {
            return fail(format!("no A3 <= 1e4 makes z_ext a subsolution with admissible crossings (inf z0 = {inf0:.4})"));
        }
        let Some(b) = ext_threshold(n, a2, a3) else {
            a3 *= 1.25;
            continue;
        };
        if b > 1.0 {
            a3 *= 1.25;
            continue;
        }
        let mut d = inf0.powf(-0.5).max((a2 / a3).sqrt()).max(1.0) * (1.0 + 1e-9);
        while d <= 1e3 {
            let a1 = 1.0 / (a2 * (1.0 - 0.5 / (d * d))).sqrt();
            let (lo, hi) = crossing_limit(bp, a1, a2, a3, d * (a3 / a2).sqrt());
            if lo > 0.0 && hi < 0.0 {
                break 'outer (b, d);
            }
            d *= 1.1;
        }
        a3 *= 1.25;
    };
    let mut params = BarrierParams::from_core(n, a2, a3, d, b, 0.0);
    let mut tau0 = (4.0 * params.r_d).ln() * 2.0 + 0.5;
    let u_band: Vec<f64> = (0..=200).map(|k| 0.95 * (k as f64 / 200.0)).collect();
    while tau0 <= 60.0 {
        params.tau0 = tau0;
        params.tau_bar = tau0 + TAU_HORIZON;
        if admissible_at(&params, bp, &u_band, &grid, &z0g) {
            params.validate()?;
            return Ok(params);
        }
        tau0 += 0.25;
    }
    fail(format!("no tau0 <= 60 puts z_* below z0 (A3 = {a3}, D = {d:.4})"))
}

fn admissible_at(params: &BarrierParams, bp: &BryantProfile, u_band: &[f64], grid: &[f64], z0g: &ZTable) -> bool {
    let mut tau = params.tau0;
    while tau <= params.tau_bar + 1e-12 {
        let Ok(zs) = build_zstar_on(params, bp, tau, grid) else { return false };
        if zs.ext_band_max > params.d.powi(-2) {
            return false;
        }
        let lo = zs.u1;
        for &u in u_band.iter().filter(|&&u| u >= lo && u > 0.0) {
            if fd_residual(params.n, |u, t| params.z_ext(u, t), u, tau) > SUBSOL_TOL {
                return false;
            }
        }
        if tau == params.tau0 {
            // both equal 1 at u = 0 for any smooth metric; that node carries only discretization noise
            let below = zs.table.z.iter().zip(&z0g.z).enumerate().skip_while(|(i, _)| grid[*i] == 0.0).all(|(i, (s, z))| if i == grid.len() - 1 { s <= z } else { s < z });
            if !below {
                return false;
            }
        }
        tau += 0.5;
    }
    true
}

/// z = (∂_sψ)² against u = ψ/√(2(n−1)(T−t)) from the left pole to the
/// leftmost bump.
pub fn horizontal_transform(p: &Profile, t_blowup: f64) -> Result<ZTable> {
    if !(t_blowup > p.t) {
        return Err(FlowError::BadT { t: p.t, t_blowup });
    }
    if !p.topology.left_pole() {
        return Err(FlowError::NotMonotone("no pole at the left end".into()));
    }
    let bump = leftmost_bump(p).ok_or_else(|| FlowError::NotMonotone(format!("no bump at t = {}", p.t)))?;
    if p.psi[..=bump].windows(2).any(|w| w[1] <= w[0]) {
        return Err(FlowError::NotMonotone(format!("psi not increasing from the pole to node {bump}")));
    }
    let der = derivatives(p, &p.stencil());
    let scale = (2.0 * (p.n as f64 - 1.0) * (t_blowup - p.t)).sqrt();
    let u = p.psi[..=bump].iter().map(|v| v / scale).collect();
    let z = der.psi_s[..=bump].iter().map(|v| v * v).collect();
    Ok(ZTable { u, z })
}

/// φ̃(r) = ζ₁(r)·r + ζ₂(r)·φ(r) with a quintic-smoothstep partition switching
/// on [5D/8, 7D/8]. The input is a strictly increasing map sampled on a grid
/// covering [D/2, D]; the output adds identity samples on (0, r₀).
pub fn bryant_extend(phi: &[(f64, f64)], d: f64) -> Result<Vec<(f64, f64)>> {
    if !(d > 0.0) || phi.len() < 2 {
        return Err(FlowError::DomainError(format!("need D > 0 and at least two samples (D = {d}, {} samples)", phi.len())));
    }
    if phi.windows(2).any(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1)) {
        return Err(FlowError::NotIncreasing("input map or its grid".into()));
    }
    let (r_first, r_last) = (phi[0].0, phi[phi.len() - 1].0);
    if r_first > 0.5 * d || (r_last - d).abs() > 1e-12 * d {
        return Err(FlowError::DomainError(format!("grid [{r_first}, {r_last}] must cover [D/2, D] and end at D = {d}")));
    }
    const INNER: usize = 64;
    let mut out: Vec<(f64, f64)> = (1..INNER).map(|k| r_first * k as f64 / INNER as f64).map(|r| (r, r)).collect();
    for &(r, f) in phi {
        let s = quintic_step((r - 0.625 * d) / (0.25 * d));
        let v = if s == 0.0 {
            r
        } else if s == 1.0 {
            f
        } else {
            r + s * (f - r)
        };
        out.push((r, v));
    }
    if out.windows(2).any(|w| w[1].1 <= w[0].1) {
        return Err(FlowError::NotIncreasing("extended map".into()));
    }
    Ok(out)
}
