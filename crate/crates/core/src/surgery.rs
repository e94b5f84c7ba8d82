//! Neck surgery: locate horns of the high-curvature region, pick a
//! near-cylindrical cross-section at the cut level, excise beyond it, glue
//! the standard cap, and discard pieces that are entirely high-curvature.
//!
//! Cap units rescale the metric so that ψ(cut) ↦ 1; the cut cross-section is
//! then the unit cylinder with R = n(n−1), which is the normalization
//! g ↦ g/(n(n−1)(hr)²) at the cut level R = (hr)⁻².

use serde::{Deserialize, Serialize};

use crate::cap::{build_cap_table, warped_sectional, CapTable, CORE};
use crate::curvature::{derivatives, sectional, CurvatureField};
use crate::error::{FlowError, Result};
use crate::monitors::bump_count_default;
use crate::profile::{arclength, max_orbit_diameter, monitor_constant, regrid_with, ArcTable, Profile, Topology};
use crate::state::{Component, FlowEvent, FlowState, SurgeryEvent};
use crate::smooth::cutoff;
use crate::stencil::Parity;

/// Largest admissible neck tolerance.
pub const DELTA0: f64 = 0.1;

/// Surgery settings as they appear in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurgeryConfig {
    /// Canonical scale r (length).
    pub r: f64,
    /// Neck tolerance δ (dimensionless).
    pub delta: f64,
    /// Cut-scale factor h; defaults to δ.
    #[serde(default)]
    pub h: Option<f64>,
    /// Half-width of the neck window in units of ψ at the candidate; defaults to 1/δ.
    #[serde(default)]
    pub neck_window: Option<f64>,
    /// Initial relative tolerance on R around the cut level.
    #[serde(default = "default_r_tolerance")]
    pub r_tolerance: f64,
    /// Node count of each child after regridding; defaults to the parent's.
    #[serde(default)]
    pub child_nodes: Option<usize>,
    /// Allowance in the glued-curvature comparisons (unit curvature).
    #[serde(default = "default_tol_cap")]
    pub tol_cap: f64,
    /// Abort with NoNeckFound when no candidate passes the neck test; when
    /// false the best-scoring candidate is cut and marked uncertified.
    #[serde(default = "default_true")]
    pub require_neck: bool,
    /// Surgery fires once ρ_min < trigger_factor·h·r·√(2/(n(n−1))).
    #[serde(default = "default_trigger_factor")]
    pub trigger_factor: f64,
}

fn default_trigger_factor() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

fn default_r_tolerance() -> f64 {
    0.1
}

fn default_tol_cap() -> f64 {
    1e-6
}

impl SurgeryConfig {
    pub fn new(r: f64, delta: f64) -> Self {
        SurgeryConfig {
            r,
            delta,
            h: None,
            neck_window: None,
            r_tolerance: default_r_tolerance(),
            child_nodes: None,
            tol_cap: default_tol_cap(),
            require_neck: true,
            trigger_factor: default_trigger_factor(),
        }
    }
}

/// Validated surgery parameters together with the cap they glue in.
#[derive(Debug, Clone)]
pub struct SurgeryParams {
    pub r: f64,
    pub delta: f64,
    pub h: f64,
    pub neck_window: f64,
    pub r_tolerance: f64,
    pub child_nodes: Option<usize>,
    pub tol_cap: f64,
    pub require_neck: bool,
    pub trigger_factor: f64,
    pub cap: CapTable,
}

impl SurgeryParams {
    pub fn new(n: usize, cfg: &SurgeryConfig) -> Result<Self> {
        let h = cfg.h.unwrap_or(cfg.delta);
        if !(cfg.r > 0.0 && cfg.r <= 1.0) {
            return Err(FlowError::InvalidSpec(format!("surgery scale r = {} outside (0, 1]", cfg.r)));
        }
        if !(h > 0.0 && h <= cfg.delta && cfg.delta <= DELTA0) {
            return Err(FlowError::InvalidSpec(format!(
                "need 0 < h <= delta <= {DELTA0}, got h = {h}, delta = {}",
                cfg.delta
            )));
        }
        let neck_window = cfg.neck_window.unwrap_or(1.0 / cfg.delta);
        if !(neck_window > 0.0) || !(cfg.r_tolerance > 0.0) || !(cfg.tol_cap >= 0.0) || !(cfg.trigger_factor > 0.0) {
            return Err(FlowError::InvalidSpec(
                "neck_window, r_tolerance, tol_cap and trigger_factor must be positive".into(),
            ));
        }
        Ok(SurgeryParams {
            r: cfg.r,
            delta: cfg.delta,
            h,
            neck_window,
            r_tolerance: cfg.r_tolerance,
            child_nodes: cfg.child_nodes,
            tol_cap: cfg.tol_cap,
            require_neck: cfg.require_neck,
            trigger_factor: cfg.trigger_factor,
            cap: build_cap_table(n, 801)?,
        })
    }

    /// Scalar curvature bounding the low-curvature region Ω₀: (δr)⁻².
    pub fn horn_level(&self) -> f64 {
        (self.delta * self.r).powi(-2)
    }

    /// Scalar curvature of the cut cross-sections: (hr)⁻².
    pub fn cut_level(&self) -> f64 {
        (self.h * self.r).powi(-2)
    }

    /// Minimal curvature scale at which surgery fires.
    pub fn trigger_scale(&self, n: usize) -> f64 {
        let nf = n as f64;
        self.trigger_factor * self.h * self.r * (2.0 / (nf * (nf - 1.0))).sqrt()
    }

    /// Curvature floor required of the glued cap beyond r = 1/4.
    pub fn sigma_est(&self) -> f64 {
        0.5 * self.cap.sigma
    }
}

/// Side of a horn on which the low-curvature region lies (the side kept).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// An end of the low-curvature region: node indices ordered from the
/// boundary of Ω₀ into the high-curvature region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Horn {
    pub keep: Side,
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub node: usize,
    pub keep: Side,
    /// Arclength position of the cut.
    pub s: f64,
    pub psi: f64,
    pub scalar: f64,
    pub neck_score: f64,
    /// Relative R tolerance at which the cut was accepted.
    pub tolerance: f64,
    /// Whether the neck score passed δ at the configured window.
    pub certified: bool,
}

/// Worst margins of the glued-curvature comparisons, in cap units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlueReport {
    /// min over [0, 1/4] of K̃_rad − K_rad.
    pub radial_margin: f64,
    /// min over [0, 1/4] of R̃ − R.
    pub scalar_margin: f64,
    /// min over [0, 1/4] of K̃_orb.
    pub orbital_min: f64,
    /// min over [1/4, D] of min(K̃_rad, K̃_orb).
    pub core_min: f64,
    pub sigma_est: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardRecord {
    /// Arclength extent in the parent.
    pub s_start: f64,
    pub s_end: f64,
    pub psi_max: f64,
    pub reason: String,
}

/// Result of surgery on one component.
#[derive(Debug, Clone)]
pub struct ComponentSurgery {
    pub cuts: Vec<Cut>,
    pub glue: Vec<GlueReport>,
    pub children: Vec<Profile>,
    pub discarded: Vec<DiscardRecord>,
}

/// Distance of the metric near node `i` to the round cylinder of radius
/// ψ(i): the worst of |ψ/ψ(i) − 1|, |ψ_s| and |ψ(i)·ψ_ss| over nodes within
/// arclength `window`·ψ(i) of node `i`.
pub fn neck_quality(p: &Profile, i: usize, window: f64) -> Result<f64> {
    let st = p.stencil();
    let d = derivatives(p, &st);
    neck_quality_with(p, &arclength(p), &d.psi_s, &d.psi_ss, i, window)
}

fn neck_quality_with(p: &Profile, s: &[f64], psi_s: &[f64], psi_ss: &[f64], i: usize, window: f64) -> Result<f64> {
    let y = p.psi[i];
    let hw = window * y;
    let out = FlowError::WindowOutOfRange { node: i, half_width: hw };
    if p.is_pole(i) || !(hw > 0.0) {
        return Err(out);
    }
    let total = p.total_length();
    let dist: Box<dyn Fn(usize) -> f64> = match p.topology {
        Topology::PeriodicCylinder { .. } => {
            if 2.0 * hw > total {
                return Err(out);
            }
            Box::new(move |j| {
                let d = (s[j] - s[i]).abs();
                d.min(total - d)
            })
        }
        _ => {
            if s[i] - hw < 0.0 || s[i] + hw > s[s.len() - 1] {
                return Err(out);
            }
            Box::new(move |j| (s[j] - s[i]).abs())
        }
    };
    let mut score: f64 = 0.0;
    for j in 0..p.len() {
        if dist(j) <= hw {
            score = score.max((p.psi[j] / y - 1.0).abs()).max(psi_s[j].abs()).max((y * psi_ss[j]).abs());
        }
    }
    Ok(score)
}

/// Horns of the low-curvature region {R < (δr)⁻²}. An island of high
/// curvature bounded by low curvature on both sides is split at its maximum
/// of R into two horns. Returns `None` when no node has low curvature.
pub fn find_horns(p: &Profile, cf: &CurvatureField, params: &SurgeryParams) -> Option<Vec<Horn>> {
    let level = params.horn_level();
    let len = p.len();
    let high: Vec<bool> = cf.scalar.iter().map(|&r| r >= level).collect();
    if high.iter().all(|&h| h) {
        return None;
    }
    let mut horns = Vec::new();
    let periodic = matches!(p.topology, Topology::PeriodicCylinder { .. });
    // maximal runs of high nodes, as sequences of indices
    let mut runs: Vec<(Vec<usize>, bool, bool)> = Vec::new();
    if periodic {
        let start = (0..len).find(|&i| !high[i]).unwrap();
        let mut cur: Vec<usize> = Vec::new();
        for k in 1..=len {
            let i = (start + k) % len;
            if high[i] {
                cur.push(i);
            } else if !cur.is_empty() {
                runs.push((std::mem::take(&mut cur), true, true));
            }
        }
    } else {
        let mut i = 0;
        while i < len {
            if high[i] {
                let a = i;
                while i < len && high[i] {
                    i += 1;
                }
                runs.push(((a..i).collect(), a > 0, i < len));
            } else {
                i += 1;
            }
        }
    }
    for (run, low_left, low_right) in runs {
        match (low_left, low_right) {
            (true, true) => {
                let m = (0..run.len())
                    .max_by(|&a, &b| cf.scalar[run[a]].partial_cmp(&cf.scalar[run[b]]).unwrap())
                    .unwrap();
                horns.push(Horn { keep: Side::Left, nodes: run[..=m].to_vec() });
                horns.push(Horn { keep: Side::Right, nodes: run[m..].iter().rev().cloned().collect() });
            }
            (true, false) => horns.push(Horn { keep: Side::Left, nodes: run }),
            (false, true) => horns.push(Horn { keep: Side::Right, nodes: run.into_iter().rev().collect() }),
            (false, false) => {}
        }
    }
    Some(horns)
}

/// Node of the horn whose R is nearest the cut level and which is the
/// centre of a neck at the configured window; the admissible R band is
/// widened by 2× up to 8× before giving up.
pub fn select_cut(p: &Profile, cf: &CurvatureField, horn: &Horn, params: &SurgeryParams) -> Result<Cut> {
    if horn.nodes.is_empty() {
        return Err(FlowError::NoNeckFound("empty horn".into()));
    }
    let target = params.cut_level();
    let st = p.stencil();
    let d = derivatives(p, &st);
    let s = arclength(p);
    let median = (horn.nodes.len() - 1) as f64 / 2.0;
    let mut order: Vec<usize> = (0..horn.nodes.len()).collect();
    order.sort_by(|&a, &b| {
        let ka = ((cf.scalar[horn.nodes[a]] - target).abs(), (a as f64 - median).abs());
        let kb = ((cf.scalar[horn.nodes[b]] - target).abs(), (b as f64 - median).abs());
        ka.partial_cmp(&kb).unwrap().then(a.cmp(&b))
    });
    let mut best: Option<Cut> = None;
    let mut examined = std::collections::BTreeSet::new();
    for widen in [1.0, 2.0, 4.0, 8.0] {
        let tol = params.r_tolerance * widen;
        for &k in &order {
            let i = horn.nodes[k];
            if ((cf.scalar[i] - target) / target).abs() > tol {
                continue;
            }
            examined.insert(i);
            let score = match neck_quality_with(p, &s, &d.psi_s, &d.psi_ss, i, params.neck_window) {
                Ok(v) => v,
                Err(FlowError::WindowOutOfRange { .. }) => continue,
                Err(e) => return Err(e),
            };
            let cut = Cut {
                node: i,
                keep: horn.keep,
                s: s[i],
                psi: p.psi[i],
                scalar: cf.scalar[i],
                neck_score: score,
                tolerance: tol,
                certified: score < params.delta,
            };
            if cut.certified {
                return Ok(cut);
            }
            if best.map_or(true, |b| score < b.neck_score) {
                best = Some(cut);
            }
        }
    }
    match best {
        Some(cut) if !params.require_neck => Ok(cut),
        _ => Err(FlowError::NoNeckFound(format!(
            "{} candidates near R = {target:.4e} at window {}; best score {} vs delta {}",
            examined.len(),
            params.neck_window,
            best.map_or("n/a".to_string(), |b| format!("{:.4e}", b.neck_score)),
            params.delta
        ))),
    }
}

/// Warping function of the glued metric in cap units at r, given the neck
/// warping (value, slope, curvature) at the same r:
/// ψ̃ = (φ₁ψ + φ₂)·η̂ with φ₁ = 1 on r ≤ 1/4, φ₁ = 0 on r ≥ 1/2.
pub fn blend(cap: &CapTable, neck: (f64, f64, f64), r: f64) -> (f64, f64, f64) {
    let (c, c1, c2) = cutoff(r, 0.25, 0.5);
    let (y, y1, y2) = neck;
    let g = 1.0 + c * (y - 1.0);
    let g1 = c1 * (y - 1.0) + c * y1;
    let g2 = c2 * (y - 1.0) + 2.0 * c1 * y1 + c * y2;
    let (e, e1, e2) = cap.eval(r);
    (g * e, g1 * e + g * e1, g2 * e + 2.0 * g1 * e1 + g * e2)
}

/// Verify the glued-curvature conditions for a neck given as a function of
/// the cap coordinate r ∈ [0, 1/2] (value, slope, curvature; cap units).
pub fn check_blend(cap: &CapTable, neck: &dyn Fn(f64) -> (f64, f64, f64), tol: f64, sigma_est: f64) -> Result<GlueReport> {
    let nf = cap.n as f64;
    let scalar = |kr: f64, ko: f64| 2.0 * nf * kr + nf * (nf - 1.0) * ko;
    let mut rep = GlueReport {
        radial_margin: f64::INFINITY,
        scalar_margin: f64::INFINITY,
        orbital_min: f64::INFINITY,
        core_min: f64::INFINITY,
        sigma_est,
    };
    let mut worst = [(0.0, f64::INFINITY); 4];
    let samples = 4000;
    for j in 0..=samples {
        let r = cap.d * j as f64 / samples as f64;
        let (kr_t, ko_t) = if r >= 0.5 {
            cap.curvature(r)
        } else {
            let (f, f1, f2) = blend(cap, neck(r), r);
            warped_sectional(f, f1, f2)
        };
        if r <= CORE {
            let (y, y1, y2) = neck(r);
            let (kr, ko) = warped_sectional(y, y1, y2);
            let m = [kr_t - kr, scalar(kr_t, ko_t) - scalar(kr, ko), ko_t];
            for (w, v) in worst.iter_mut().zip(m) {
                if v < w.1 {
                    *w = (r, v);
                }
            }
        }
        if r >= CORE {
            let v = kr_t.min(ko_t);
            if v < worst[3].1 {
                worst[3] = (r, v);
            }
        }
    }
    rep.radial_margin = worst[0].1;
    rep.scalar_margin = worst[1].1;
    rep.orbital_min = worst[2].1;
    rep.core_min = worst[3].1;
    let checks = [
        ("K_rad(glued) >= K_rad - tol on [0,1/4]", worst[0], -tol),
        ("R(glued) >= R - tol on [0,1/4]", worst[1], -tol),
        ("K_orb(glued) > 0 on [0,1/4]", worst[2], 0.0),
        ("K_rad, K_orb (glued) >= sigma on [1/4,D]", (worst[3].0, worst[3].1 - sigma_est), 0.0),
    ];
    for (which, (at, v), floor) in checks {
        let ok = if floor == 0.0 && which.starts_with("K_orb") { v > 0.0 } else { v >= floor };
        if !ok {
            return Err(FlowError::CapConditionViolated { which: which.into(), at, margin: v - floor });
        }
    }
    Ok(rep)
}

/// Arclength table of ψ that can be queried across a periodic seam.
struct Unrolled {
    table: ArcTable,
    s: Vec<f64>,
    psi: Vec<f64>,
    total: f64,
}

impl Unrolled {
    fn new(p: &Profile) -> Self {
        let s = arclength(p);
        let total = p.total_length();
        match p.topology {
            Topology::PeriodicCylinder { .. } => {
                let mut es = Vec::with_capacity(3 * s.len());
                let mut ef = Vec::with_capacity(3 * s.len());
                for k in -1..=1 {
                    es.extend(s.iter().map(|v| v + k as f64 * total));
                    ef.extend_from_slice(&p.psi);
                }
                let table = ArcTable::new(&es, &ef, Parity::Even, Topology::Disk, 0.0);
                Unrolled { table, s: es, psi: ef, total }
            }
            topo => Unrolled { table: ArcTable::new(&s, &p.psi, Parity::Odd, topo, total), s, psi: p.psi.clone(), total },
        }
    }
}

/// One end of a retained piece.
#[derive(Debug, Clone, Copy)]
enum PieceEnd {
    Pole(f64),
    Cap { s: f64, scale: f64 },
}

fn glue_check_at(u: &Unrolled, s_cut: f64, dir: f64, scale: f64, params: &SurgeryParams, lo: f64, hi: f64) -> Result<GlueReport> {
    let reach = s_cut + dir * 0.5 * scale;
    if reach < lo || reach > hi {
        return Err(FlowError::CapConditionViolated {
            which: "blend region leaves the component".into(),
            at: 0.5,
            margin: if dir > 0.0 { hi - reach } else { reach - lo } / scale,
        });
    }
    let neck = |r: f64| {
        let (v, d1, d2) = u.table.derivs(s_cut + dir * scale * r);
        (v / scale, dir * d1, scale * d2)
    };
    check_blend(&params.cap, &neck, params.tol_cap, params.sigma_est())
}

/// Cap-region samples (arclength, ψ) running from the cut to the new pole.
fn cap_samples(u: &Unrolled, s_cut: f64, dir: f64, scale: f64, cap: &CapTable) -> Vec<(f64, f64)> {
    let m = 600;
    (0..=m)
        .map(|j| {
            let r = cap.d * j as f64 / m as f64;
            let psi = if j == m {
                0.0
            } else {
                let (v, d1, d2) = u.table.derivs(s_cut + dir * scale * r);
                scale * blend(cap, (v / scale, dir * d1, scale * d2), r).0
            };
            (s_cut + dir * scale * r, psi)
        })
        .collect()
}

fn build_piece(p: &Profile, u: &Unrolled, left: PieceEnd, right: PieceEnd, params: &SurgeryParams) -> Result<Profile> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let (a, b) = (end_pos(left), end_pos(right));
    let spacing = |e: PieceEnd| match e {
        PieceEnd::Cap { scale, .. } => scale * params.cap.d / 600.0,
        PieceEnd::Pole(_) => 0.0,
    };
    let (ga, gb) = (0.25 * spacing(left), 0.25 * spacing(right));
    match left {
        PieceEnd::Pole(s0) => pts.push((s0, 0.0)),
        PieceEnd::Cap { s, scale } => {
            let mut c = cap_samples(u, s, -1.0, scale, &params.cap);
            c.reverse();
            pts.extend(c);
        }
    }
    for (k, &sv) in u.s.iter().enumerate() {
        if sv > a + ga.max(1e-15 * u.total) && sv < b - gb.max(1e-15 * u.total) {
            pts.push((sv, u.psi[k]));
        }
    }
    match right {
        PieceEnd::Pole(s1) => pts.push((s1, 0.0)),
        PieceEnd::Cap { s, scale } => pts.extend(cap_samples(u, s, 1.0, scale, &params.cap)),
    }
    let s0 = pts[0].0;
    let x: Vec<f64> = pts.iter().map(|q| q.0 - s0).collect();
    let psi: Vec<f64> = pts.iter().map(|q| q.1).collect();
    let m = x.len();
    let raw = Profile::new(p.n, Topology::ClosedSphere, x, vec![1.0; m], psi, p.t)?;
    let target = params.child_nodes.unwrap_or(p.len());
    let (nodes, c_mon) = resolving_grid(&raw, target)?;
    regrid_with(&raw, nodes, c_mon)
}

/// Nodes per local curvature radius the regridded child must carry.
const NODES_PER_RADIUS: f64 = 24.0;

/// Node count and monitor constant for a child. The horn and the cap are
/// small against the rest of the child, so the usual monitor is raised (and
/// the grid enlarged if needed) until every curvature radius carries
/// `NODES_PER_RADIUS` nodes.
pub fn resolving_grid(p: &Profile, target: usize) -> Result<(usize, f64)> {
    let base = monitor_constant(p)?;
    let cf = sectional(p)?;
    let s = arclength(p);
    let radii: f64 = (1..p.len()).map(|i| 0.5 * (1.0 / cf.rho[i] + 1.0 / cf.rho[i - 1]) * (s[i] - s[i - 1])).sum();
    let nodes = target.max((2.0 * NODES_PER_RADIUS * radii).ceil() as usize);
    let room = nodes as f64 - NODES_PER_RADIUS * radii;
    Ok((nodes, base.max(NODES_PER_RADIUS * p.total_length() / room)))
}

fn end_pos(e: PieceEnd) -> f64 {
    match e {
        PieceEnd::Pole(s) => s,
        PieceEnd::Cap { s, .. } => s,
    }
}

/// Glue the standard cap onto a closed profile at `cut` (a node of a horn),
/// keeping the side `keep` and replacing everything beyond the cut.
pub fn glue_cap(p: &Profile, cut: usize, keep: Side, params: &SurgeryParams) -> Result<(Profile, GlueReport)> {
    if p.topology != Topology::ClosedSphere {
        return Err(FlowError::Unsupported("glue_cap acts on closed components; periodic ones go through perform_surgery".into()));
    }
    if p.is_pole(cut) {
        return Err(FlowError::InvalidSpec("cannot cut at a pole".into()));
    }
    let u = Unrolled::new(p);
    let (s_cut, scale) = (u.s[cut], p.psi[cut]);
    let total = u.total;
    let (dir, left, right) = match keep {
        Side::Left => (1.0, PieceEnd::Pole(0.0), PieceEnd::Cap { s: s_cut, scale }),
        Side::Right => (-1.0, PieceEnd::Cap { s: s_cut, scale }, PieceEnd::Pole(total)),
    };
    let rep = glue_check_at(&u, s_cut, dir, scale, params, 0.0, total)?;
    Ok((build_piece(p, &u, left, right, params)?, rep))
}

/// Cut every horn of one component, cap the retained pieces and discard
/// the rest. A component with no low-curvature node is discarded whole.
pub fn surgery_on_component(p: &Profile, params: &SurgeryParams) -> Result<ComponentSurgery> {
    let cf = sectional(p)?;
    let u = Unrolled::new(p);
    let total = u.total;
    let horns = match find_horns(p, &cf, params) {
        None => {
            return Ok(ComponentSurgery {
                cuts: vec![],
                glue: vec![],
                children: vec![],
                discarded: vec![DiscardRecord {
                    s_start: 0.0,
                    s_end: total,
                    psi_max: p.psi_max(),
                    reason: "entirely above the horn curvature level".into(),
                }],
            })
        }
        Some(h) => h,
    };
    if horns.is_empty() {
        return Ok(ComponentSurgery { cuts: vec![], glue: vec![], children: vec![p.clone()], discarded: vec![] });
    }
    if p.topology == Topology::Disk {
        return Err(FlowError::Unsupported("surgery on disk profiles".into()));
    }
    let mut cuts = horns.iter().map(|h| select_cut(p, &cf, h, params)).collect::<Result<Vec<_>>>()?;
    cuts.sort_by(|a, b| a.s.partial_cmp(&b.s).unwrap());
    let periodic = matches!(p.topology, Topology::PeriodicCylinder { .. });
    let level = params.horn_level();
    let s_nodes = arclength(p);

    // consecutive boundaries delimit candidate pieces
    let mut bounds: Vec<(f64, Option<Cut>)> = Vec::new();
    if !periodic {
        bounds.push((0.0, None));
    }
    bounds.extend(cuts.iter().map(|c| (c.s, Some(*c))));
    if periodic {
        let first = cuts[0];
        bounds.push((first.s + total, Some(first)));
    } else {
        bounds.push((total, None));
    }

    let mut out = ComponentSurgery { cuts: cuts.clone(), glue: vec![], children: vec![], discarded: vec![] };
    for w in bounds.windows(2) {
        let ((a, ca), (b, cb)) = (w[0], w[1]);
        let left_ok = ca.map_or(true, |c| c.keep == Side::Right);
        let right_ok = cb.map_or(true, |c| c.keep == Side::Left);
        let has_low = (0..p.len()).any(|i| {
            let sv = s_nodes[i];
            let inside = |q: f64| q > a && q < b;
            cf.scalar[i] < level && (inside(sv) || (periodic && inside(sv + total)))
        });
        let psi_max = u
            .s
            .iter()
            .zip(&u.psi)
            .filter(|(sv, _)| **sv >= a && **sv <= b)
            .map(|(_, v)| *v)
            .fold(0.0, f64::max);
        if !(left_ok && right_ok) || !has_low {
            let reason = if has_low { "lies beyond a cut" } else { "no node below the horn curvature level" };
            out.discarded.push(DiscardRecord { s_start: a, s_end: b, psi_max, reason: reason.into() });
            continue;
        }
        let end = |c: Option<Cut>, s: f64| match c {
            None => PieceEnd::Pole(s),
            Some(c) => PieceEnd::Cap { s, scale: c.psi },
        };
        let (lo, hi) = if periodic { (-total, 2.0 * total) } else { (0.0, total) };
        if let Some(c) = ca {
            out.glue.push(glue_check_at(&u, a, -1.0, c.psi, params, lo, hi)?);
        }
        if let Some(c) = cb {
            out.glue.push(glue_check_at(&u, b, 1.0, c.psi, params, lo, hi)?);
        }
        out.children.push(build_piece(p, &u, end(ca, a), end(cb, b), params)?);
    }
    Ok(out)
}

/// Apply surgery to every component of the state. Components without
/// horns are left untouched; each operated component yields one event and is
/// replaced by its children (possibly none).
pub fn perform_surgery(state: &FlowState, params: &SurgeryParams) -> Result<(FlowState, Vec<SurgeryEvent>)> {
    let mut next = FlowState { components: Vec::new(), ..state.clone() };
    let mut events = Vec::new();
    for comp in &state.components {
        let p = &comp.profile;
        let out = surgery_on_component(p, params)?;
        let untouched = out.cuts.is_empty() && out.discarded.is_empty();
        if untouched {
            next.components.push(comp.clone());
            continue;
        }
        let mut ids = Vec::with_capacity(out.children.len());
        for child in out.children {
            let id = next.next_id;
            next.next_id += 1;
            let (_, c_mon) = resolving_grid(&child, child.len())?;
            next.components.push(Component::new(id, Some(comp.id), child, c_mon));
            ids.push(id);
        }
        let kids: Vec<&Profile> = next.components.iter().filter(|c| ids.contains(&c.id)).map(|c| &c.profile).collect();
        let ev = SurgeryEvent {
            t: p.t,
            component: comp.id,
            cut_scale: params.h * params.r,
            cuts: out.cuts,
            glue: out.glue,
            discarded: out.discarded,
            bumps_before: bump_count_default(p),
            bumps_after: kids.iter().map(|k| bump_count_default(k)).sum(),
            diameter_before: max_orbit_diameter(p),
            diameter_after: kids.iter().map(|k| max_orbit_diameter(k)).fold(0.0, f64::max),
            children: ids.clone(),
        };
        next.genealogy.insert(comp.id, ids);
        next.events.push(FlowEvent::Surgery(ev.clone()));
        events.push(ev);
    }
    Ok((next, events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{build_initial, Family, InitialSpec};

    fn params(r: f64, delta: f64) -> SurgeryParams {
        SurgeryParams::new(2, &SurgeryConfig::new(r, delta)).unwrap()
    }

    fn sphere() -> Profile {
        build_initial(&InitialSpec { family: Family::RoundSphere { radius: 1.0 }, n: 2, grid_size: 401 }).unwrap()
    }

    #[test]
    fn cylinder_is_a_perfect_neck() {
        let c = build_initial(&InitialSpec { family: Family::Cylinder { radius: 0.2, length: 10.0 }, n: 2, grid_size: 256 })
            .unwrap();
        assert!(neck_quality(&c, 100, 10.0).unwrap() < 1e-10);
    }

    #[test]
    fn sphere_equator_is_not_a_neck() {
        let p = sphere();
        let q = neck_quality(&p, 200, 1.5).unwrap();
        // worst term is |ψ(i)·ψ_ss| = sin(π/2) = 1 at the equator itself
        let expect = (1.0 - 1.5f64.cos()).max(1.5f64.sin()).max(1.0);
        assert!((q - expect).abs() < 1e-4, "{q}");
        assert!(q > 0.1);
        assert!(matches!(neck_quality(&p, 200, 2.0), Err(FlowError::WindowOutOfRange { .. })));
    }

    #[test]
    fn params_validation() {
        assert!(SurgeryParams::new(2, &SurgeryConfig::new(0.1, 0.5)).is_err());
        assert!(SurgeryParams::new(2, &SurgeryConfig { h: Some(0.1), ..SurgeryConfig::new(0.1, 0.05) }).is_err());
        assert!(SurgeryParams::new(2, &SurgeryConfig::new(2.0, 0.05)).is_err());
        let p = params(0.1, 0.05);
        assert_eq!(p.h, 0.05);
        assert_eq!(p.neck_window, 20.0);
        assert!((p.trigger_scale(2) - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn uniformly_low_curvature_has_no_horns() {
        let p = sphere();
        let cf = sectional(&p).unwrap();
        assert_eq!(find_horns(&p, &cf, &params(0.1, 0.05)), Some(vec![]));
    }

    #[test]
    fn uniformly_high_curvature_is_discarded() {
        let p = build_initial(&InitialSpec { family: Family::RoundSphere { radius: 0.004 }, n: 2, grid_size: 401 }).unwrap();
        let cf = sectional(&p).unwrap();
        let prm = params(0.1, 0.05);
        assert_eq!(find_horns(&p, &cf, &prm), None);
        let out = surgery_on_component(&p, &prm).unwrap();
        assert!(out.children.is_empty());
        assert_eq!(out.discarded.len(), 1);
    }

    #[test]
    fn cylinder_cut_tie_breaks_to_median() {
        // cylinder sitting exactly at the cut level: every node qualifies
        let prm = SurgeryParams::new(2, &SurgeryConfig { neck_window: Some(2.0), ..SurgeryConfig::new(0.1, 0.05) }).unwrap();
        let radius = (2.0f64).sqrt() * prm.h * prm.r;
        let c = build_initial(&InitialSpec { family: Family::Cylinder { radius, length: 1.0 }, n: 2, grid_size: 101 })
            .unwrap();
        let cf = sectional(&c).unwrap();
        let horn = Horn { keep: Side::Left, nodes: (10..=40).collect() };
        let cut = select_cut(&c, &cf, &horn, &prm).unwrap();
        assert_eq!(cut.node, 25);
    }

    #[test]
    fn narrow_horn_has_no_neck() {
        let prm = params(0.1, 0.05);
        let radius = (2.0f64).sqrt() * prm.h * prm.r;
        // the window 1/δ · ψ exceeds the half-length of this short periodic piece
        let c = build_initial(&InitialSpec { family: Family::Cylinder { radius, length: 0.1 }, n: 2, grid_size: 64 })
            .unwrap();
        let cf = sectional(&c).unwrap();
        let horn = Horn { keep: Side::Left, nodes: (5..=30).collect() };
        assert!(matches!(select_cut(&c, &cf, &horn, &prm), Err(FlowError::NoNeckFound(_))));
    }

    #[test]
    fn unit_cylinder_glues_to_the_pure_cap() {
        let prm = params(0.1, 0.05);
        for j in 0..=200 {
            let r = prm.cap.d * j as f64 / 200.0;
            let g = blend(&prm.cap, (1.0, 0.0, 0.0), r);
            let e = prm.cap.eval(r);
            assert!((g.0 - e.0).abs() < 1e-15 && (g.1 - e.1).abs() < 1e-15 && (g.2 - e.2).abs() < 1e-13);
        }
        let rep = check_blend(&prm.cap, &|_| (1.0, 0.0, 0.0), 1e-6, prm.sigma_est()).unwrap();
        assert!(rep.radial_margin >= 0.0 && rep.scalar_margin >= 0.0);
        assert!(rep.core_min > prm.sigma_est());
    }

    #[test]
    fn near_cylinder_blend_is_close_to_cap() {
        let prm = params(0.1, 0.05);
        let eps = 1e-3;
        let neck = |r: f64| (1.0 + eps * (3.0 * r).sin(), 3.0 * eps * (3.0 * r).cos(), -9.0 * eps * (3.0 * r).sin());
        let mut worst: f64 = 0.0;
        for j in 0..=400 {
            let r = 0.5 * j as f64 / 400.0;
            worst = worst.max((blend(&prm.cap, neck(r), r).0 - prm.cap.eval(r).0).abs());
        }
        assert!(worst <= eps, "{worst}");
        check_blend(&prm.cap, &neck, 1e-6, prm.sigma_est()).unwrap();
    }
}
