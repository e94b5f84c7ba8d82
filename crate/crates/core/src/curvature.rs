//! Pointwise curvature of a rotationally invariant profile.
//!
//! The curvature operator has two eigenvalues, λ = −2ψ_ss/ψ on planes
//! containing the radial direction and μ = 2(1 − ψ_s²)/ψ² on planes tangent
//! to the orbit; the sectional curvatures are half of these.

use serde::Serialize;

use crate::error::{FlowError, Result};
use crate::profile::{arclength, Profile};
use crate::stencil::{Parity, Stencil};

/// Curvature scales are capped here on flat nodes.
pub const RHO_CAP: f64 = 1e15;
const PSI_GUARD: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureField {
    pub n: usize,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub scalar: Vec<f64>,
    pub nu: Vec<f64>,
    pub k_rad: Vec<f64>,
    pub k_orb: Vec<f64>,
    pub rho: Vec<f64>,
    pub rho1: Vec<f64>,
}

impl CurvatureField {
    /// Fill every derived field from λ and μ.
    pub fn from_eigenvalues(n: usize, lambda: Vec<f64>, mu: Vec<f64>) -> Self {
        let nf = n as f64;
        let scalar = lambda.iter().zip(&mu).map(|(&l, &m)| nf * l + 0.5 * nf * (nf - 1.0) * m).collect();
        let nu = lambda.iter().zip(&mu).map(|(&l, &m)| l.min(m)).collect();
        let k_rad = lambda.iter().map(|l| 0.5 * l).collect();
        let k_orb = mu.iter().map(|m| 0.5 * m).collect();
        let (rho, rho1) = scale_from(&lambda, &mu);
        CurvatureField { n, lambda, mu, scalar, nu, k_rad, k_orb, rho, rho1 }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// Largest absolute sectional curvature.
    pub fn k_max(&self) -> f64 {
        self.lambda.iter().chain(&self.mu).map(|v| 0.5 * v.abs()).fold(0.0, f64::max)
    }

    pub fn rho_min(&self) -> f64 {
        self.rho.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// ρ = (max(|λ|,|μ|)/2)^(-1/2), capped; ρ₁ = min(ρ, 1).
fn scale_from(lambda: &[f64], mu: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let rho: Vec<f64> = lambda
        .iter()
        .zip(mu)
        .map(|(&l, &m)| {
            let k = 0.5 * l.abs().max(m.abs());
            if k > 0.0 {
                (1.0 / k.sqrt()).min(RHO_CAP)
            } else {
                RHO_CAP
            }
        })
        .collect();
    let rho1 = rho.iter().map(|r| r.min(1.0)).collect();
    (rho, rho1)
}

/// Arclength derivatives of ψ together with the raw coordinate derivatives.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub psi_x: Vec<f64>,
    pub psi_xx: Vec<f64>,
    pub phi_x: Vec<f64>,
    pub psi_s: Vec<f64>,
    pub psi_ss: Vec<f64>,
}

pub fn derivatives(p: &Profile, st: &Stencil) -> Derivatives {
    let psi_x = st.d1(&p.psi, Parity::Odd);
    let psi_xx = st.d2(&p.psi, Parity::Odd);
    let phi_x = st.d1(&p.phi, Parity::Even);
    let mut psi_s = Vec::with_capacity(p.len());
    let mut psi_ss = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let f = p.phi[i];
        psi_s.push(psi_x[i] / f);
        psi_ss.push((psi_xx[i] - psi_x[i] * phi_x[i] / f) / (f * f));
    }
    Derivatives { psi_x, psi_xx, phi_x, psi_s, psi_ss }
}

fn guard(p: &Profile) -> Result<()> {
    for i in 0..p.len() {
        if !p.is_pole(i) && p.psi[i] < PSI_GUARD {
            return Err(FlowError::DegenerateProfile(format!("psi = {:.3e} at node {i}", p.psi[i])));
        }
    }
    Ok(())
}

/// Value at a pole from the even expansion a + b·d² through the two nearest
/// interior nodes at arclength distances d1 < d2.
pub(crate) fn even_extrapolate(d1: f64, v1: f64, d2: f64, v2: f64) -> f64 {
    let (a, b) = (d1 * d1, d2 * d2);
    (b * v1 - a * v2) / (b - a)
}

pub(crate) fn fill_poles(p: &Profile, s: &[f64], fields: &mut [&mut Vec<f64>]) {
    let len = p.len();
    for &pole in &p.pole_nodes() {
        let (i1, i2) = if pole == 0 { (1, 2) } else { (len - 2, len - 3) };
        let d1 = (s[i1] - s[pole]).abs();
        let d2 = (s[i2] - s[pole]).abs();
        for f in fields.iter_mut() {
            f[pole] = even_extrapolate(d1, f[i1], d2, f[i2]);
        }
    }
}

/// Curvature-operator eigenvalues and derived quantities at every node.
pub fn sectional(p: &Profile) -> Result<CurvatureField> {
    sectional_with(p, &p.stencil())
}

pub fn sectional_with(p: &Profile, st: &Stencil) -> Result<CurvatureField> {
    guard(p)?;
    let d = derivatives(p, st);
    let len = p.len();
    let mut lambda = vec![0.0; len];
    let mut mu = vec![0.0; len];
    for i in 0..len {
        if p.is_pole(i) {
            continue;
        }
        let psi = p.psi[i];
        lambda[i] = -2.0 * d.psi_ss[i] / psi;
        mu[i] = 2.0 * (1.0 - d.psi_s[i] * d.psi_s[i]) / (psi * psi);
    }
    if !p.pole_nodes().is_empty() {
        let s = arclength(p);
        fill_poles(p, &s, &mut [&mut lambda]);
        for &pole in &p.pole_nodes() {
            mu[pole] = lambda[pole];
        }
    }
    Ok(CurvatureField::from_eigenvalues(p.n, lambda, mu))
}

/// Ricci eigenvalues in the radial and orbital directions, evaluated from
/// coordinate (x) derivatives of φ and ψ.
pub fn ricci_coefficients(p: &Profile) -> Result<(Vec<f64>, Vec<f64>)> {
    guard(p)?;
    let st = p.stencil();
    let d = derivatives(p, &st);
    let nf = p.n as f64;
    let len = p.len();
    let mut rad = vec![0.0; len];
    let mut orb = vec![0.0; len];
    for i in 0..len {
        if p.is_pole(i) {
            continue;
        }
        let (f, f1) = (p.phi[i], d.phi_x[i]);
        let (y, y1, y2) = (p.psi[i], d.psi_x[i], d.psi_xx[i]);
        let f2 = f * f;
        let f3 = f2 * f;
        rad[i] = nf * (y1 * f1 / (y * f3) - y2 / (f2 * y));
        orb[i] = -y2 / (f2 * y) - (nf - 1.0) * y1 * y1 / (y * y * f2) + f1 * y1 / (f3 * y) + (nf - 1.0) / (y * y);
    }
    if !p.pole_nodes().is_empty() {
        let s = arclength(p);
        fill_poles(p, &s, &mut [&mut rad, &mut orb]);
    }
    Ok((rad, orb))
}

/// Curvature scale ρ and ρ₁ of a profile.
pub fn scale(p: &Profile) -> Result<(Vec<f64>, Vec<f64>)> {
    let cf = sectional(p)?;
    Ok((cf.rho, cf.rho1))
}
