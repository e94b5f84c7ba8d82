//! Ricci flow of a rotationally invariant profile in a fixed coordinate:
//!
//!   ψ_t = ψ_ss − (n−1)(1 − ψ_s²)/ψ,    φ_t = n φ ψ_ss/ψ.
//!
//! In this gauge the pole coupling has a grid-scale unstable mode, so the
//! stepper advances the Ricci–DeTurck system (the same metrics up to a
//! diffeomorphism of the orbit interval) with classical RK4 under a
//! parabolic step restriction. [`rhs`] still evaluates the gauge-fixed
//! equations above.

use serde::{Deserialize, Serialize};

use crate::curvature::{derivatives, even_extrapolate, sectional_with, CurvatureField};
use crate::error::{FlowError, Result};
use crate::profile::{monitor_constant, regrid_with, Profile, Topology};
use crate::stencil::{Parity, Stencil};

/// Step-size and output cadence controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepControl {
    pub cfl: f64,
    pub dt_min: f64,
    /// Flow-time spacing of regular snapshots.
    pub snapshot_every: f64,
    pub max_steps: usize,
    /// Regrid once the worst nodes-per-curvature-radius ratio has dropped by this factor.
    pub regrid_drift: f64,
    /// Extra snapshot whenever K_max has grown by this factor since the last one.
    pub snapshot_growth: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            cfl: 0.2,
            dt_min: 1e-14,
            snapshot_every: 0.01,
            max_steps: 5_000_000,
            regrid_drift: 4.0,
            snapshot_growth: 1.25,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(FlowError::InvalidSpec(format!("cfl {} outside (0, 0.5]", self.cfl)));
        }
        if !(self.dt_min > 0.0) {
            return Err(FlowError::InvalidSpec("dt_min must be positive".into()));
        }
        if !(self.snapshot_every > 0.0) {
            return Err(FlowError::InvalidSpec("snapshot_every must be positive".into()));
        }
        if !(self.regrid_drift > 1.0) || !(self.snapshot_growth > 1.0) {
            return Err(FlowError::InvalidSpec("regrid_drift and snapshot_growth must exceed 1".into()));
        }
        Ok(())
    }
}

/// When to hand control back to the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub t_end: f64,
    /// Stop once the minimal curvature scale falls below this value.
    pub rho_trigger: Option<f64>,
    /// Stop once max ψ falls below this value.
    pub extinction_psi: Option<f64>,
}

impl StopRule {
    pub fn until(t_end: f64) -> Self {
        StopRule { t_end, rho_trigger: None, extinction_psi: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    EndTime,
    TimestepUnderflow { dt: f64 },
    CurvatureTrigger { rho_min: f64 },
    Extinction { psi_max: f64 },
    MaxSteps,
}

/// One sample of the curvature series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSample {
    pub t: f64,
    pub k_max: f64,
    pub psi_min: f64,
    pub psi_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryEvent {
    Regrid { t: f64, resolution_before: f64, resolution_after: f64 },
    Stop { t: f64, reason: StopReason },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Profile>,
    pub k_series: Vec<KSample>,
    pub events: Vec<TrajectoryEvent>,
    pub stop: StopReason,
    pub last: Profile,
    pub steps: usize,
}

/// Time derivatives of (φ, ψ).
pub fn rhs(p: &Profile) -> Result<(Vec<f64>, Vec<f64>)> {
    rhs_with(p, &p.stencil())
}

fn pole_distances(p: &Profile, pole: usize) -> (usize, usize, f64, f64) {
    let len = p.len();
    let (i1, i2) = if pole == 0 { (1, 2) } else { (len - 2, len - 3) };
    let seg = |a: usize, b: usize| 0.5 * (p.phi[a] + p.phi[b]) * (p.x[a] - p.x[b]).abs();
    let d1 = seg(pole, i1);
    let d2 = d1 + seg(i1, i2);
    (i1, i2, d1, d2)
}

pub fn rhs_with(p: &Profile, st: &Stencil) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = derivatives(p, st);
    let len = p.len();
    let nf = p.n as f64;
    let mut dphi = vec![0.0; len];
    let mut dpsi = vec![0.0; len];
    let mut ratio = vec![0.0; len];
    for i in 0..len {
        if p.is_pole(i) {
            continue;
        }
        let psi = p.psi[i];
        if !(psi > 1e-30) {
            return Err(FlowError::DegenerateProfile(format!("psi = {psi:.3e} at node {i}, t = {}", p.t)));
        }
        let ps = d.psi_s[i];
        ratio[i] = d.psi_ss[i] / psi;
        dpsi[i] = d.psi_ss[i] - (nf - 1.0) * (1.0 - ps * ps) / psi;
        dphi[i] = nf * p.phi[i] * ratio[i];
    }
    for pole in p.pole_nodes() {
        let (i1, i2, d1, d2) = pole_distances(p, pole);
        let q = even_extrapolate(d1, ratio[i1], d2, ratio[i2]);
        dphi[pole] = nf * p.phi[pole] * q;
    }
    Ok((dphi, dpsi))
}

/// Background warping products B = ψ̂ψ̂_x and B' = (ψ̂ψ̂_x)_x for the
/// reference metric dx² + ψ̂² g_{S^n}: a round sphere spanning the grid for
/// closed components, a flat cylinder for periodic ones.
fn background(p: &Profile) -> (Vec<f64>, Vec<f64>) {
    match p.topology {
        Topology::PeriodicCylinder { .. } => (vec![0.0; p.len()], vec![0.0; p.len()]),
        _ => {
            let x0 = p.x[0];
            let span = match p.topology {
                Topology::Disk => 2.0 * (p.x[p.len() - 1] - x0),
                _ => p.x[p.len() - 1] - x0,
            };
            let k = std::f64::consts::PI / span;
            p.x.iter()
                .map(|&x| {
                    let th = 2.0 * k * (x - x0);
                    (0.5 * th.sin() / k, th.cos())
                })
                .unzip()
        }
    }
}

/// DeTurck vector field W (x-component) for the round/flat background.
pub fn deturck_field(p: &Profile) -> Vec<f64> {
    let st = p.stencil();
    let d = derivatives(p, &st);
    let (b, _) = background(p);
    let nf = p.n as f64;
    (0..p.len())
        .map(|i| {
            if p.is_pole(i) {
                return 0.0;
            }
            let (f, y) = (p.phi[i], p.psi[i]);
            d.phi_x[i] / (f * f * f) - nf * d.psi_x[i] / (f * f * y) + nf * b[i] / (y * y)
        })
        .collect()
}

/// Time derivatives of (φ, ψ) for Ricci–DeTurck flow, ∂_t g = −2Ric + L_W g,
/// with the terms that are singular at the poles cancelled analytically.
/// Differs from [`rhs`] by the diffeomorphism generated by [`deturck_field`].
pub fn rhs_deturck(p: &Profile) -> Result<(Vec<f64>, Vec<f64>)> {
    let st = p.stencil();
    let (b, b1) = background(p);
    rhs_deturck_with(p, &st, &b, &b1)
}

fn rhs_deturck_with(p: &Profile, st: &Stencil, b: &[f64], b1: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = p.len();
    let nf = p.n as f64;
    let psi_x = st.d1(&p.psi, Parity::Odd);
    let psi_xx = st.d2(&p.psi, Parity::Odd);
    let phi_x = st.d1(&p.phi, Parity::Even);
    let phi_xx = st.d2(&p.phi, Parity::Even);
    let mut dphi = vec![0.0; len];
    let mut dpsi = vec![0.0; len];
    for i in 0..len {
        if p.is_pole(i) {
            continue;
        }
        let (f, y) = (p.phi[i], p.psi[i]);
        if !(y > 1e-30) {
            return Err(FlowError::DegenerateProfile(format!("psi = {y:.3e} at node {i}, t = {}", p.t)));
        }
        let (yx, fx) = (psi_x[i], phi_x[i]);
        let f2 = f * f;
        let y2 = y * y;
        dpsi[i] = psi_xx[i] / f2 - (nf - 1.0) / y - yx * yx / (f2 * y) + nf * b[i] * yx / y2;
        dphi[i] = phi_xx[i] / f2 - 2.0 * fx * fx / (f2 * f) + nf * yx * yx / (f * y2)
            + nf * (b1[i] * f / y2 + b[i] * fx / y2 - 2.0 * b[i] * f * yx / (y2 * y));
    }
    for pole in p.pole_nodes() {
        let (i1, i2, d1, d2) = pole_distances(p, pole);
        dphi[pole] = even_extrapolate(d1, dphi[i1], d2, dphi[i2]);
    }
    Ok((dphi, dpsi))
}

fn delta_s(p: &Profile) -> Vec<f64> {
    let len = p.len();
    let mut ds: Vec<f64> = (0..len - 1).map(|i| 0.5 * (p.phi[i] + p.phi[i + 1]) * (p.x[i + 1] - p.x[i])).collect();
    if let Topology::PeriodicCylinder { period } = p.topology {
        ds.push(0.5 * (p.phi[len - 1] + p.phi[0]) * (period - (p.x[len - 1] - p.x[0])));
    }
    ds
}

/// Largest stable step: cfl · min(Δs_min², ψ_min²/(2(n−1))).
pub fn cfl_dt(p: &Profile, ctl: &StepControl) -> Result<f64> {
    let ds = delta_s(p).into_iter().fold(f64::INFINITY, f64::min);
    let psi_min = p.psi_min_interior();
    let dt = ctl.cfl * (ds * ds).min(psi_min * psi_min / (2.0 * (p.n as f64 - 1.0)));
    if !(dt >= ctl.dt_min) {
        return Err(FlowError::TimestepUnderflow { t: p.t, dt, dt_min: ctl.dt_min });
    }
    Ok(dt)
}

/// One RK4 step of size `dt`.
pub fn step(p: &Profile, dt: f64) -> Result<Profile> {
    Stepper::new(p).step(p, dt)
}

/// Grid-dependent data reused across steps on one grid.
pub struct Stepper {
    st: Stencil,
    b: Vec<f64>,
    b1: Vec<f64>,
}

impl Stepper {
    pub fn new(p: &Profile) -> Self {
        let (b, b1) = background(p);
        Stepper { st: p.stencil(), b, b1 }
    }

    pub fn stencil(&self) -> &Stencil {
        &self.st
    }

    fn rhs(&self, p: &Profile) -> Result<(Vec<f64>, Vec<f64>)> {
        rhs_deturck_with(p, &self.st, &self.b, &self.b1)
    }

    /// One classical RK4 step; pole values of ψ are reset to zero.
    pub fn step(&self, p: &Profile, dt: f64) -> Result<Profile> {
        if dt == 0.0 {
            return Ok(p.clone());
        }
        let k1 = self.rhs(p)?;
        let p2 = stage(p, p, &k1, 0.5 * dt);
        let k2 = self.rhs(&p2)?;
        let p3 = stage(p, p, &k2, 0.5 * dt);
        let k3 = self.rhs(&p3)?;
        let p4 = stage(p, p, &k3, dt);
        let k4 = self.rhs(&p4)?;
        let mut out = p.clone();
        for i in 0..p.len() {
            out.phi[i] = p.phi[i] + dt / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
            out.psi[i] = p.psi[i] + dt / 6.0 * (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i]);
        }
        out.t = p.t + dt;
        for pole in p.pole_nodes() {
            out.psi[pole] = 0.0;
        }
        let bad = (0..out.len()).any(|i| {
            !out.phi[i].is_finite()
                || !out.psi[i].is_finite()
                || out.phi[i] <= 0.0
                || (!out.is_pole(i) && out.psi[i] <= 0.0)
        });
        if bad {
            return Err(FlowError::NumericBlowup { t: out.t });
        }
        Ok(out)
    }
}

fn stage(p: &Profile, base: &Profile, k: &(Vec<f64>, Vec<f64>), h: f64) -> Profile {
    let mut q = p.clone();
    for i in 0..p.len() {
        q.phi[i] = base.phi[i] + h * k.0[i];
        q.psi[i] = base.psi[i] + h * k.1[i];
    }
    q.t = base.t + h;
    q
}

/// Worst number of grid spacings per curvature radius.
fn resolution(p: &Profile, cf: &CurvatureField) -> f64 {
    let ds = delta_s(p);
    let len = p.len();
    let periodic = matches!(p.topology, Topology::PeriodicCylinder { .. });
    (0..len)
        .map(|i| {
            let left = if i > 0 { ds[i - 1] } else if periodic { ds[len - 1] } else { ds[0] };
            let right = if i < ds.len() { ds[i] } else { ds[i - 1] };
            cf.rho[i] / left.max(right)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Advance until the stop rule fires; regrids and records snapshots and
/// curvature samples along the way.
pub fn evolve(p: &Profile, ctl: &StepControl, stop: &StopRule) -> Result<Trajectory> {
    let c_mon = monitor_constant(p)?;
    evolve_with_monitor(p, ctl, stop, c_mon)
}

pub fn evolve_with_monitor(p: &Profile, ctl: &StepControl, stop: &StopRule, c_mon: f64) -> Result<Trajectory> {
    ctl.validate()?;
    let target_nodes = p.len();
    let mut cur = p.clone();
    let mut stepper = Stepper::new(&cur);
    let mut cf = sectional_with(&cur, stepper.stencil())?;
    let mut res_ref = resolution(&cur, &cf);
    let mut snapshots = vec![cur.clone()];
    let mut k_series = Vec::new();
    let mut events = Vec::new();
    let mut next_snap = (cur.t / ctl.snapshot_every).floor() * ctl.snapshot_every + ctl.snapshot_every;
    let mut k_snap = cf.k_max();
    let mut steps = 0usize;

    let sample = |p: &Profile, cf: &CurvatureField| KSample {
        t: p.t,
        k_max: cf.k_max(),
        psi_min: p.psi_min_interior(),
        psi_max: p.psi_max(),
    };
    k_series.push(sample(&cur, &cf));

    let reason = loop {
        let k = cf.k_max();
        let last = *k_series.last().unwrap();
        if cur.t > last.t
            && ((k - last.k_max).abs() > 0.005 * last.k_max || cur.t - last.t >= 0.1 * ctl.snapshot_every)
        {
            k_series.push(sample(&cur, &cf));
        }
        let snap_due = cur.t >= next_snap - 1e-12 * ctl.snapshot_every || k >= ctl.snapshot_growth * k_snap;
        if snap_due && cur.t > snapshots.last().unwrap().t {
            snapshots.push(cur.clone());
            k_snap = k;
            while next_snap <= cur.t + 1e-12 * ctl.snapshot_every {
                next_snap += ctl.snapshot_every;
            }
        }

        if cur.t >= stop.t_end {
            break StopReason::EndTime;
        }
        if let Some(trig) = stop.rho_trigger {
            let rho_min = cf.rho_min();
            if rho_min < trig {
                break StopReason::CurvatureTrigger { rho_min };
            }
        }
        if let Some(thr) = stop.extinction_psi {
            let pm = cur.psi_max();
            if pm < thr {
                break StopReason::Extinction { psi_max: pm };
            }
        }
        if steps >= ctl.max_steps {
            break StopReason::MaxSteps;
        }

        let mut dt = match cfl_dt(&cur, ctl) {
            Ok(dt) => dt,
            Err(FlowError::TimestepUnderflow { dt, .. }) => break StopReason::TimestepUnderflow { dt },
            Err(e) => return Err(e),
        };
        let mut target = stop.t_end;
        if next_snap < target {
            target = next_snap;
        }
        if cur.t + dt > target {
            dt = target - cur.t;
        } else if cur.t + 2.0 * dt > target {
            dt = 0.5 * (target - cur.t);
        }
        let next = stepper.step(&cur, dt)?;
        cur = if next.t >= target { Profile { t: target, ..next } } else { next };
        steps += 1;
        cf = sectional_with(&cur, stepper.stencil())?;

        let res = resolution(&cur, &cf);
        // regrid when resolution drifts either way; coarsening matters after
        // surgery, when a tiny cap relaxes and would otherwise pin dt
        if res < res_ref / ctl.regrid_drift || res > res_ref * ctl.regrid_drift {
            cur = regrid_with(&cur, target_nodes, c_mon)?;
            stepper = Stepper::new(&cur);
            cf = sectional_with(&cur, stepper.stencil())?;
            let after = resolution(&cur, &cf);
            events.push(TrajectoryEvent::Regrid { t: cur.t, resolution_before: res, resolution_after: after });
            res_ref = after;
        }
    };

    let last_sample = *k_series.last().unwrap();
    if cur.t > last_sample.t {
        k_series.push(sample(&cur, &cf));
    }
    if cur.t > snapshots.last().unwrap().t {
        snapshots.push(cur.clone());
    }
    events.push(TrajectoryEvent::Stop { t: cur.t, reason });
    Ok(Trajectory { snapshots, k_series, events, stop: reason, last: cur, steps })
}

/// Result of the Type-I extrapolation of the blow-up time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupFit {
    pub t_hat: f64,
    pub slope: f64,
    /// Root-mean-square misfit of 1/K_max relative to its mean over the window.
    pub residual: f64,
    pub samples: usize,
}

/// Fit 1/K_max linearly in t over the last quartile of samples and
/// return the t-intercept.
pub fn estimate_blowup_time(series: &[KSample]) -> Result<BlowupFit> {
    if series.len() < 10 {
        return Err(FlowError::FitFailed(format!("{} samples < 10", series.len())));
    }
    let start = series.len() - (series.len() / 4).max(5);
    let win = &series[start..];
    let m = win.len() as f64;
    let (mut st, mut sy) = (0.0, 0.0);
    for s in win {
        st += s.t;
        sy += 1.0 / s.k_max;
    }
    let (tm, ym) = (st / m, sy / m);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for s in win {
        let dt = s.t - tm;
        sxx += dt * dt;
        sxy += dt * (1.0 / s.k_max - ym);
    }
    if !(sxx > 0.0) {
        return Err(FlowError::FitFailed("degenerate time window".into()));
    }
    let slope = sxy / sxx;
    let scale = win.iter().map(|s| 1.0 / s.k_max).fold(0.0, f64::max);
    if !(slope < 0.0) || (slope * (win[win.len() - 1].t - win[0].t)).abs() < 1e-12 * scale {
        return Err(FlowError::FitFailed("1/K_max is not decreasing".into()));
    }
    let icpt = ym - slope * tm;
    let t_hat = -icpt / slope;
    let rss: f64 = win.iter().map(|s| (1.0 / s.k_max - (icpt + slope * s.t)).powi(2)).sum();
    let residual = (rss / m).sqrt() / ym.abs().max(f64::MIN_POSITIVE);
    Ok(BlowupFit { t_hat, slope, residual, samples: win.len() })
}

/// Sup-norm residual of [∂_t, ∂_s]ψ = −n (ψ_ss/ψ) ∂_sψ between consecutive
/// snapshots that share a grid, with ∂_t the Ricci-flow time derivative
/// (the DeTurck drift W∂_x is removed). NaN when no such pair exists.
pub fn commutator_residual(snapshots: &[Profile]) -> f64 {
    let mut worst = f64::NAN;
    for w in snapshots.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        if !(dt > 0.0) || a.x != b.x || a.topology != b.topology {
            continue;
        }
        let st = a.stencil();
        let da = derivatives(a, &st);
        let db = derivatives(b, &st);
        let (wa, wb) = (deturck_field(a), deturck_field(b));
        let nf = a.n as f64;
        let len = a.len();
        let wm: Vec<f64> = (0..len).map(|i| 0.5 * (wa[i] + wb[i])).collect();
        let slope_mid: Vec<f64> = (0..len).map(|i| 0.5 * (da.psi_s[i] + db.psi_s[i])).collect();
        let psi_mid: Vec<f64> = (0..len).map(|i| 0.5 * (a.psi[i] + b.psi[i])).collect();
        let slope_x = st.d1(&slope_mid, Parity::Even);
        let psi_x = st.d1(&psi_mid, Parity::Odd);
        let rf_dpsi: Vec<f64> = (0..len).map(|i| (b.psi[i] - a.psi[i]) / dt - wm[i] * psi_x[i]).collect();
        let rf_dpsi_x = st.d1(&rf_dpsi, Parity::Odd);
        for i in 0..len {
            if a.is_pole(i) {
                continue;
            }
            let phi_mid = 0.5 * (a.phi[i] + b.phi[i]);
            let lhs = (db.psi_s[i] - da.psi_s[i]) / dt - wm[i] * slope_x[i] - rf_dpsi_x[i] / phi_mid;
            let rhs = -0.5 * nf * (da.psi_ss[i] / a.psi[i] * da.psi_s[i] + db.psi_ss[i] / b.psi[i] * db.psi_s[i]);
            let r = (lhs - rhs).abs();
            if !(worst >= r) {
                worst = r;
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{build_initial, Family, InitialSpec};

    fn sphere(m: usize) -> Profile {
        build_initial(&InitialSpec { family: Family::RoundSphere { radius: 1.0 }, n: 2, grid_size: m }).unwrap()
    }

    fn cylinder() -> Profile {
        build_initial(&InitialSpec { family: Family::Cylinder { radius: 1.0, length: 10.0 }, n: 2, grid_size: 128 })
            .unwrap()
    }

    #[test]
    fn rhs_cylinder_and_sphere() {
        let (dphi, dpsi) = rhs(&cylinder()).unwrap();
        assert!(dphi.iter().all(|v| v.abs() < 1e-14));
        assert!(dpsi.iter().all(|v| (v + 1.0).abs() < 1e-14));
        let p = sphere(401);
        let (_, dpsi) = rhs(&p).unwrap();
        for i in 0..p.len() {
            assert!((dpsi[i] + 2.0 * p.psi[i]).abs() < 1e-5, "{i}");
        }
    }

    #[test]
    fn cfl_arithmetic() {
        let ctl = StepControl { cfl: 0.2, ..Default::default() };
        let m = 101;
        let x: Vec<f64> = (0..m).map(|i| 0.01 * i as f64).collect();
        let p = Profile { n: 2, topology: Topology::PeriodicCylinder { period: 1.01 }, x, phi: vec![1.0; m], psi: vec![1.0; m], t: 0.0 };
        assert!((cfl_dt(&p, &ctl).unwrap() - 2e-5).abs() < 1e-18);
        let q = Profile { psi: vec![0.001; m], ..p };
        let tiny = StepControl { dt_min: 1e-6, ..ctl };
        assert!(matches!(cfl_dt(&q, &tiny), Err(FlowError::TimestepUnderflow { .. })));
    }

    #[test]
    fn zero_step_is_identity() {
        let p = sphere(101);
        assert_eq!(step(&p, 0.0).unwrap(), p);
    }

    #[test]
    fn cylinder_shrinks_exactly() {
        let ctl = StepControl { snapshot_every: 0.05, ..Default::default() };
        let tr = evolve(&cylinder(), &ctl, &StopRule::until(0.1)).unwrap();
        assert_eq!(tr.stop, StopReason::EndTime);
        assert!((tr.last.t - 0.1).abs() < 1e-15);
        for &v in &tr.last.psi {
            assert!((v * v - 0.8).abs() < 1e-6);
        }
        assert!(tr.last.phi.iter().all(|&f| (f - 1.0).abs() < 1e-12));
        assert!(!tr.events.iter().any(|e| matches!(e, TrajectoryEvent::Regrid { .. })));
        let r = commutator_residual(&tr.snapshots);
        assert!(r < 1e-8, "{r}");
    }

    #[test]
    fn sphere_shrinks_on_schedule() {
        let ctl = StepControl { snapshot_every: 0.05, ..Default::default() };
        let tr = evolve(&sphere(401), &ctl, &StopRule::until(0.1)).unwrap();
        let rho2 = tr.last.psi_max().powi(2);
        assert!((rho2 - 0.6).abs() / 0.6 < 1e-4, "{rho2}");
    }

    #[test]
    fn blowup_fit_examples() {
        let mk = |f: &dyn Fn(f64) -> f64, tmax: f64| -> Vec<KSample> {
            (0..40)
                .map(|i| {
                    let t = tmax * i as f64 / 40.0;
                    KSample { t, k_max: f(t), psi_min: 1.0, psi_max: 1.0 }
                })
                .collect()
        };
        let s = mk(&|t| 1.0 / (1.0 - 4.0 * t), 0.24);
        assert!((estimate_blowup_time(&s).unwrap().t_hat - 0.25).abs() < 1e-3);
        let c = 1.5f64;
        let s = mk(&|t| 1.0 / (c * c - 2.0 * t), 1.0);
        assert!((estimate_blowup_time(&s).unwrap().t_hat - c * c / 2.0).abs() < 1e-3);
        let s = mk(&|_| 3.0, 1.0);
        assert!(matches!(estimate_blowup_time(&s), Err(FlowError::FitFailed(_))));
    }
}
