//! Discretized warped-product metrics g = φ² dx² + ψ² g_{S^n} on one orbit interval.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::smooth::smooth_step;
use crate::stencil::{fornberg, End, Parity, Stencil};

/// Tolerance on |∂_sψ| − 1 at a pole.
pub const TOL_POLE: f64 = 0.02;
/// Smallest admissible grid.
pub const MIN_NODES: usize = 32;

/// Topology of the orbit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    /// Interval with a pole at each end (an (n+1)-sphere).
    ClosedSphere,
    /// Circle of the given coordinate period (S¹ × S^n); no poles.
    PeriodicCylinder { period: f64 },
    /// Pole at the left end only; the right end is free.
    Disk,
}

impl Topology {
    pub fn name(&self) -> &'static str {
        match self {
            Topology::ClosedSphere => "closed_sphere",
            Topology::PeriodicCylinder { .. } => "periodic_cylinder",
            Topology::Disk => "disk",
        }
    }

    pub fn left_pole(&self) -> bool {
        !matches!(self, Topology::PeriodicCylinder { .. })
    }

    pub fn right_pole(&self) -> bool {
        matches!(self, Topology::ClosedSphere)
    }
}

/// One rotationally invariant component at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub n: usize,
    pub topology: Topology,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub t: f64,
}

impl Profile {
    /// Validating constructor.
    pub fn new(n: usize, topology: Topology, x: Vec<f64>, phi: Vec<f64>, psi: Vec<f64>, t: f64) -> Result<Self> {
        let p = Profile { n, topology, x, phi, psi, t };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Check every structural invariant, including the pole closing condition.
    pub fn validate(&self) -> Result<()> {
        let len = self.x.len();
        let bad = |m: String| Err(FlowError::InvalidProfile(m));
        if self.n < 2 {
            return bad(format!("fiber dimension n = {} < 2", self.n));
        }
        if len < MIN_NODES {
            return bad(format!("{len} nodes < {MIN_NODES}"));
        }
        if self.phi.len() != len || self.psi.len() != len {
            return bad("array lengths differ".into());
        }
        if !self.t.is_finite() {
            return bad("non-finite time".into());
        }
        for i in 0..len {
            if !(self.x[i].is_finite() && self.phi[i].is_finite() && self.psi[i].is_finite()) {
                return bad(format!("non-finite value at node {i}"));
            }
        }
        if self.x.windows(2).any(|w| w[1] <= w[0]) {
            return bad("x is not strictly increasing".into());
        }
        if let Some(i) = self.phi.iter().position(|&v| v <= 0.0) {
            return bad(format!("phi <= 0 at node {i}"));
        }
        if let Topology::PeriodicCylinder { period } = self.topology {
            if period <= self.x[len - 1] - self.x[0] {
                return bad("period shorter than the grid extent".into());
            }
        }
        let lo = usize::from(self.topology.left_pole());
        let hi = if self.topology.right_pole() { len - 1 } else { len };
        if let Some(i) = (lo..hi).find(|&i| self.psi[i] <= 0.0) {
            return bad(format!("psi <= 0 at interior node {i}"));
        }
        if self.topology.left_pole() {
            self.check_pole(0)?;
        }
        if self.topology.right_pole() {
            self.check_pole(len - 1)?;
        }
        Ok(())
    }

    fn check_pole(&self, i: usize) -> Result<()> {
        if self.psi[i] != 0.0 {
            return Err(FlowError::InvalidProfile(format!("psi = {} at pole node {i}", self.psi[i])));
        }
        let d = self.pole_slope(i).abs();
        if (d - 1.0).abs() > TOL_POLE {
            return Err(FlowError::InvalidProfile(format!("|d psi/ds| = {d:.6} at pole node {i}")));
        }
        Ok(())
    }

    /// Arclength derivative of ψ at a pole node from its odd reflection.
    pub fn pole_slope(&self, i: usize) -> f64 {
        let len = self.x.len();
        let (k1, k2) = if i == 0 { (1, 2) } else { (len - 2, len - 3) };
        let xs = [
            2.0 * self.x[i] - self.x[k2],
            2.0 * self.x[i] - self.x[k1],
            self.x[i],
            self.x[k1],
            self.x[k2],
        ];
        let vals = [-self.psi[k2], -self.psi[k1], 0.0, self.psi[k1], self.psi[k2]];
        let c = fornberg(self.x[i], &xs, 1);
        let d: f64 = (0..5).map(|k| c[1][k] * vals[k]).sum();
        d / self.phi[i]
    }

    /// Finite-difference operator adapted to this profile's grid and topology.
    pub fn stencil(&self) -> Stencil {
        match self.topology {
            Topology::ClosedSphere => Stencil::interval(&self.x, End::Pole, End::Pole),
            Topology::Disk => Stencil::interval(&self.x, End::Pole, End::Free),
            Topology::PeriodicCylinder { period } => Stencil::periodic(&self.x, period),
        }
    }

    /// Indices of pole nodes.
    pub fn pole_nodes(&self) -> Vec<usize> {
        let mut v = Vec::new();
        if self.topology.left_pole() {
            v.push(0);
        }
        if self.topology.right_pole() {
            v.push(self.len() - 1);
        }
        v
    }

    pub fn is_pole(&self, i: usize) -> bool {
        (i == 0 && self.topology.left_pole()) || (i + 1 == self.len() && self.topology.right_pole())
    }

    pub fn psi_max(&self) -> f64 {
        self.psi.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Minimum of ψ over non-pole nodes.
    pub fn psi_min_interior(&self) -> f64 {
        (0..self.len()).filter(|&i| !self.is_pole(i)).map(|i| self.psi[i]).fold(f64::INFINITY, f64::min)
    }

    /// Total g-length of the orbit interval (full period for cylinders).
    pub fn total_length(&self) -> f64 {
        let s = arclength(self);
        let mut l = s[s.len() - 1];
        if let Topology::PeriodicCylinder { period } = self.topology {
            let last = self.len() - 1;
            l += 0.5 * (self.phi[last] + self.phi[0]) * (period - (self.x[last] - self.x[0]));
        }
        l
    }
}

/// Shape of the initial metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    RoundSphere { radius: f64 },
    Cylinder { radius: f64, length: f64 },
    Dumbbell { r_left: f64, r_right: f64, r_neck: f64, neck_width: f64 },
    Custom { topology: Topology, x: Vec<f64>, phi: Vec<f64>, psi: Vec<f64> },
}

/// Initial-data request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    pub family: Family,
    pub n: usize,
    pub grid_size: usize,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(FlowError::InvalidSpec(format!("{name} must be positive, got {v}")))
    }
}

/// Build the initial profile for a family.
pub fn build_initial(spec: &InitialSpec) -> Result<Profile> {
    let m = spec.grid_size;
    if spec.n < 2 {
        return Err(FlowError::InvalidSpec(format!("n = {} < 2", spec.n)));
    }
    let custom = matches!(spec.family, Family::Custom { .. });
    if !custom && m < MIN_NODES {
        return Err(FlowError::InvalidSpec(format!("grid_size {m} < {MIN_NODES}")));
    }
    let uniform = |len: f64, count: usize, denom: usize| -> Vec<f64> {
        (0..count).map(|i| len * i as f64 / denom as f64).collect()
    };
    let p = match &spec.family {
        Family::RoundSphere { radius } => {
            positive("radius", *radius)?;
            let x = uniform(PI * radius, m, m - 1);
            let mut psi: Vec<f64> = x.iter().map(|&s| radius * (s / radius).sin()).collect();
            psi[0] = 0.0;
            psi[m - 1] = 0.0;
            Profile { n: spec.n, topology: Topology::ClosedSphere, phi: vec![1.0; m], psi, x, t: 0.0 }
        }
        Family::Cylinder { radius, length } => {
            positive("radius", *radius)?;
            positive("length", *length)?;
            let x = uniform(*length, m, m);
            Profile {
                n: spec.n,
                topology: Topology::PeriodicCylinder { period: *length },
                phi: vec![1.0; m],
                psi: vec![*radius; m],
                x,
                t: 0.0,
            }
        }
        Family::Dumbbell { r_left, r_right, r_neck, neck_width } => {
            positive("r_left", *r_left)?;
            positive("r_right", *r_right)?;
            positive("r_neck", *r_neck)?;
            if !(neck_width.is_finite() && *neck_width >= 0.0) {
                return Err(FlowError::InvalidSpec(format!("neck_width must be >= 0, got {neck_width}")));
            }
            if *r_neck >= r_left.min(*r_right) {
                return Err(FlowError::InvalidSpec("r_neck must be below both lobe radii".into()));
            }
            let lobe_l = Lobe::new(*r_left, *r_neck);
            let lobe_r = Lobe::new(*r_right, *r_neck);
            let total = lobe_l.end + neck_width + lobe_r.end;
            let x = uniform(total, m, m - 1);
            let mut psi: Vec<f64> = x
                .iter()
                .map(|&s| {
                    if s <= lobe_l.end {
                        lobe_l.eval(s)
                    } else if s >= total - lobe_r.end {
                        lobe_r.eval(total - s)
                    } else {
                        *r_neck
                    }
                })
                .collect();
            psi[0] = 0.0;
            psi[m - 1] = 0.0;
            Profile { n: spec.n, topology: Topology::ClosedSphere, phi: vec![1.0; m], psi, x, t: 0.0 }
        }
        Family::Custom { topology, x, phi, psi } => {
            Profile { n: spec.n, topology: *topology, x: x.clone(), phi: phi.clone(), psi: psi.clone(), t: 0.0 }
        }
    };
    p.validate().map_err(|e| match e {
        FlowError::InvalidProfile(m) => FlowError::InvalidSpec(m),
        other => other,
    })?;
    Ok(p)
}

/// Spherical lobe blended smoothly into a flat neck of radius `r_neck`.
struct Lobe {
    radius: f64,
    r_neck: f64,
    equator: f64,
    end: f64,
}

impl Lobe {
    fn new(radius: f64, r_neck: f64) -> Self {
        let equator = 0.5 * PI * radius;
        let end = radius * (PI - (r_neck / radius).asin());
        Lobe { radius, r_neck, equator, end }
    }

    fn eval(&self, s: f64) -> f64 {
        let sphere = self.radius * (s / self.radius).sin();
        if s <= self.equator {
            return sphere;
        }
        let chi = 1.0 - smooth_step((s - self.equator) / (self.end - self.equator)).0;
        self.r_neck + chi * (sphere - self.r_neck)
    }
}

/// Cumulative trapezoid integral of φ over x, starting at 0.
pub fn arclength(p: &Profile) -> Vec<f64> {
    let mut s = Vec::with_capacity(p.len());
    s.push(0.0);
    for i in 1..p.len() {
        let ds = 0.5 * (p.phi[i] + p.phi[i - 1]) * (p.x[i] - p.x[i - 1]);
        s.push(s[i - 1] + ds);
    }
    s
}

/// Maximum of ψ refined by the parabola through the largest node value and
/// its two neighbours in arclength, so it does not depend on where the nodes
/// happen to fall.
pub fn psi_peak(p: &Profile) -> f64 {
    let len = p.len();
    let (i, &v) = p.psi.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty profile");
    let periodic = matches!(p.topology, Topology::PeriodicCylinder { .. });
    if !periodic && (i == 0 || i == len - 1) {
        return v;
    }
    let s = arclength(p);
    let total = p.total_length();
    let (a, b) = ((i + len - 1) % len, (i + 1) % len);
    let (sa, sb) = (
        if a > i { s[a] - total } else { s[a] },
        if b < i { s[b] + total } else { s[b] },
    );
    let (h1, h2) = (s[i] - sa, sb - s[i]);
    let (f0, f1, f2) = (p.psi[a], v, p.psi[b]);
    // parabola through (−h1, f0), (0, f1), (h2, f2)
    let d1 = (f2 - f1) / h2;
    let d0 = (f1 - f0) / h1;
    let c = (d1 - d0) / (h1 + h2);
    let slope = d0 + c * h1;
    if c >= 0.0 {
        return v;
    }
    let x = -slope / (2.0 * c);
    if x < -h1 || x > h2 {
        return v;
    }
    v + slope * x + c * x * x
}

/// π · max ψ (the largest orbit is a great sphere of that radius).
pub fn max_orbit_diameter(p: &Profile) -> f64 {
    PI * psi_peak(p)
}

/// Samples of a field along arclength, padded with reflected or wrapped
/// ghosts so that local interpolation works up to and across the ends.
#[derive(Debug, Clone)]
pub struct ArcTable {
    s: Vec<f64>,
    f: Vec<f64>,
}

impl ArcTable {
    const PAD: usize = 3;

    /// Build from nodal arclength `s` and values `f` for the given topology.
    /// `period_len` is the arclength period for cylinders.
    pub fn new(s: &[f64], f: &[f64], parity: Parity, topology: Topology, period_len: f64) -> Self {
        let len = s.len();
        let pad = Self::PAD;
        let mut es = Vec::with_capacity(len + 2 * pad);
        let mut ef = Vec::with_capacity(len + 2 * pad);
        let sign = if parity == Parity::Odd { -1.0 } else { 1.0 };
        let last = len - 1;
        for k in (1..=pad).rev() {
            match topology {
                Topology::PeriodicCylinder { .. } => {
                    es.push(s[len - k] - period_len);
                    ef.push(f[len - k]);
                }
                _ => {
                    es.push(2.0 * s[0] - s[k]);
                    ef.push(sign * f[k]);
                }
            }
        }
        es.extend_from_slice(s);
        ef.extend_from_slice(f);
        for k in 1..=pad {
            match topology {
                Topology::PeriodicCylinder { .. } => {
                    es.push(s[k - 1] + period_len);
                    ef.push(f[k - 1]);
                }
                Topology::ClosedSphere => {
                    es.push(2.0 * s[last] - s[last - k]);
                    ef.push(sign * f[last - k]);
                }
                Topology::Disk => {
                    let h = s[last] - s[last - 1];
                    es.push(s[last] + k as f64 * h);
                    ef.push(f[last] + k as f64 * (f[last] - f[last - 1]));
                }
            }
        }
        ArcTable { s: es, f: ef }
    }

    fn window(&self, q: f64) -> usize {
        // index j with s[j] <= q < s[j+1], clamped so that j-2..=j+3 is valid
        let j = match self.s.binary_search_by(|v| v.partial_cmp(&q).unwrap()) {
            Ok(j) => j,
            Err(j) => j.saturating_sub(1),
        };
        j.clamp(2, self.s.len() - 4)
    }

    /// Six-point Lagrange value at `q`; clamped to the bracketing values
    /// where the data are locally monotone.
    pub fn value(&self, q: f64) -> f64 {
        let j = self.window(q);
        let xs = &self.s[j - 2..j + 4];
        let c = fornberg(q, xs, 0);
        let mut v: f64 = (0..6).map(|k| c[0][k] * self.f[j - 2 + k]).sum();
        if q >= self.s[j] && q <= self.s[j + 1] {
            let f = &self.f[j - 1..j + 3];
            let inc = f[0] <= f[1] && f[1] <= f[2] && f[2] <= f[3];
            let dec = f[0] >= f[1] && f[1] >= f[2] && f[2] >= f[3];
            if inc || dec {
                let (a, b) = if f[1] <= f[2] { (f[1], f[2]) } else { (f[2], f[1]) };
                v = v.clamp(a, b);
            }
        }
        v
    }

    /// Value, first and second derivative at `q` from the six-point interpolant.
    pub fn derivs(&self, q: f64) -> (f64, f64, f64) {
        let j = self.window(q);
        let xs = &self.s[j - 2..j + 4];
        let c = fornberg(q, xs, 2);
        let mut out = [0.0; 3];
        for (m, o) in out.iter_mut().enumerate() {
            *o = (0..6).map(|k| c[m][k] * self.f[j - 2 + k]).sum();
        }
        (out[0], out[1], out[2])
    }
}

fn mean_rho(rho: &[f64]) -> f64 {
    let finite: Vec<f64> = rho.iter().cloned().filter(|r| r.is_finite() && *r < 1e14).collect();
    if finite.is_empty() {
        1.0
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    }
}

/// Monitor constant derived from a profile: one tenth of its mean curvature scale.
pub fn monitor_constant(p: &Profile) -> Result<f64> {
    let cf = crate::curvature::sectional(p)?;
    Ok(0.1 * mean_rho(&cf.rho))
}

/// Regrid with the monitor constant taken from `p` itself.
pub fn regrid(p: &Profile, target_nodes: usize) -> Result<Profile> {
    let c = monitor_constant(p)?;
    regrid_with(p, target_nodes, c)
}

/// Equidistribute the monitor 1 + c_mon/ρ in arclength and resample ψ.
/// The result uses arclength as its coordinate, so φ ≡ 1.
pub fn regrid_with(p: &Profile, target_nodes: usize, c_mon: f64) -> Result<Profile> {
    if target_nodes < MIN_NODES {
        return Err(FlowError::InvalidSpec(format!("target_nodes {target_nodes} < {MIN_NODES}")));
    }
    let cf = crate::curvature::sectional(p)?;
    let s = arclength(p);
    let len = p.len();
    let periodic = matches!(p.topology, Topology::PeriodicCylinder { .. });
    let total = p.total_length();
    if p.topology != Topology::Disk {
        let dmean = total / if periodic { target_nodes as f64 } else { (target_nodes - 1) as f64 };
        if p.psi_max() < 10.0 * dmean {
            return Err(FlowError::DegenerateProfile(format!(
                "psi_max {:.3e} below 10 mean spacings ({:.3e})",
                p.psi_max(),
                10.0 * dmean
            )));
        }
    }

    let mut m: Vec<f64> = cf.rho.iter().map(|&r| 1.0 + c_mon / r).collect();
    for _ in 0..3 {
        let prev = m.clone();
        for i in 0..len {
            let (a, b) = if periodic {
                ((i + len - 1) % len, (i + 1) % len)
            } else {
                (i.saturating_sub(1), (i + 1).min(len - 1))
            };
            m[i] = 0.25 * prev[a] + 0.5 * prev[i] + 0.25 * prev[b];
        }
    }

    // cumulative monitor mass along arclength
    let mut sn = s.clone();
    let mut mn = m.clone();
    if periodic {
        sn.push(total);
        mn.push(m[0]);
    }
    let mut w = vec![0.0; sn.len()];
    for i in 1..sn.len() {
        w[i] = w[i - 1] + 0.5 * (mn[i] + mn[i - 1]) * (sn[i] - sn[i - 1]);
    }
    let wt = *w.last().unwrap();
    let denom = if periodic { target_nodes } else { target_nodes - 1 };
    let mut new_s = Vec::with_capacity(target_nodes);
    let mut k = 0usize;
    for j in 0..target_nodes {
        let target = wt * j as f64 / denom as f64;
        while k + 2 < w.len() && w[k + 1] < target {
            k += 1;
        }
        let frac = if w[k + 1] > w[k] { (target - w[k]) / (w[k + 1] - w[k]) } else { 0.0 };
        new_s.push(sn[k] + frac.clamp(0.0, 1.0) * (sn[k + 1] - sn[k]));
    }
    if !periodic {
        new_s[0] = 0.0;
        new_s[target_nodes - 1] = s[len - 1];
    }
    for i in 1..target_nodes {
        if new_s[i] <= new_s[i - 1] {
            return Err(FlowError::DegenerateProfile("regridded nodes collapsed".into()));
        }
    }

    let table = ArcTable::new(&s, &p.psi, Parity::Odd, p.topology, total);
    let mut psi: Vec<f64> = new_s.iter().map(|&q| table.value(q)).collect();
    if p.topology.left_pole() {
        psi[0] = 0.0;
    }
    if p.topology.right_pole() {
        psi[target_nodes - 1] = 0.0;
    }
    let topology = match p.topology {
        Topology::PeriodicCylinder { .. } => Topology::PeriodicCylinder { period: total },
        other => other,
    };
    let out = Profile { n: p.n, topology, x: new_s, phi: vec![1.0; target_nodes], psi, t: p.t };
    out.validate().map_err(|e| FlowError::DegenerateProfile(format!("regrid produced an invalid profile: {e}")))?;
    Ok(out)
}

/// Render a profile as CSV with a metadata line; extra columns are appended.
pub fn profile_to_csv(p: &Profile, extra: &[(&str, &[f64])]) -> String {
    let mut out = String::new();
    let _ = write!(out, "# n={} topology={} t={:.16e}", p.n, p.topology.name(), p.t);
    if let Topology::PeriodicCylinder { period } = p.topology {
        let _ = write!(out, " period={period:.16e}");
    }
    out.push('\n');
    out.push_str("x,phi,psi");
    for (name, _) in extra {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..p.len() {
        let _ = write!(out, "{:.16e},{:.16e},{:.16e}", p.x[i], p.phi[i], p.psi[i]);
        for (_, col) in extra {
            let _ = write!(out, ",{:.16e}", col[i]);
        }
        out.push('\n');
    }
    out
}

/// Parse CSV produced by [`profile_to_csv`]; extra columns are ignored.
pub fn profile_from_csv(text: &str) -> Result<Profile> {
    let mut lines = text.lines();
    let meta = lines.next().ok_or_else(|| FlowError::Parse("empty profile file".into()))?;
    let meta = meta.strip_prefix('#').ok_or_else(|| FlowError::Parse("missing metadata line".into()))?;
    let mut n = None;
    let mut kind = None;
    let mut t = None;
    let mut period = None;
    for tok in meta.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| FlowError::Parse(format!("bad metadata token {tok}")))?;
        match k {
            "n" => n = Some(v.parse::<usize>().map_err(|e| FlowError::Parse(e.to_string()))?),
            "topology" => kind = Some(v.to_string()),
            "t" => t = Some(parse_f64(v)?),
            "period" => period = Some(parse_f64(v)?),
            _ => {}
        }
    }
    let n = n.ok_or_else(|| FlowError::Parse("metadata lacks n".into()))?;
    let t = t.ok_or_else(|| FlowError::Parse("metadata lacks t".into()))?;
    let topology = match kind.as_deref() {
        Some("closed_sphere") => Topology::ClosedSphere,
        Some("disk") => Topology::Disk,
        Some("periodic_cylinder") => Topology::PeriodicCylinder {
            period: period.ok_or_else(|| FlowError::Parse("periodic profile lacks period".into()))?,
        },
        other => return Err(FlowError::Parse(format!("unknown topology {other:?}"))),
    };
    let header = lines.next().ok_or_else(|| FlowError::Parse("missing header".into()))?;
    if !header.starts_with("x,phi,psi") {
        return Err(FlowError::Parse(format!("unexpected header {header}")));
    }
    let (mut x, mut phi, mut psi) = (Vec::new(), Vec::new(), Vec::new());
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let mut it = line.split(',');
        let mut next = || -> Result<f64> {
            parse_f64(it.next().ok_or_else(|| FlowError::Parse(format!("short row {line}")))?)
        };
        x.push(next()?);
        phi.push(next()?);
        psi.push(next()?);
    }
    Profile::new(n, topology, x, phi, psi, t)
}

pub(crate) fn parse_f64(v: &str) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|e| FlowError::Parse(format!("{v}: {e}")))
}

pub fn read_profile(path: &Path) -> Result<Profile> {
    profile_from_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(m: usize) -> Profile {
        build_initial(&InitialSpec { family: Family::RoundSphere { radius: 1.0 }, n: 2, grid_size: m }).unwrap()
    }

    #[test]
    fn round_sphere_chart() {
        let p = sphere(401);
        assert_eq!(p.psi[0], 0.0);
        assert_eq!(p.psi[400], 0.0);
        assert!((p.x[400] - PI).abs() < 1e-15);
        for i in 0..401 {
            assert!((p.psi[i] - p.x[i].sin()).abs() < 1e-15);
        }
        assert!((p.pole_slope(0) - 1.0).abs() < 1e-6);
        assert!((p.pole_slope(400) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_specs() {
        let s = InitialSpec { family: Family::RoundSphere { radius: -1.0 }, n: 2, grid_size: 100 };
        assert!(matches!(build_initial(&s), Err(FlowError::InvalidSpec(_))));
        let s = InitialSpec { family: Family::RoundSphere { radius: 1.0 }, n: 2, grid_size: 16 };
        assert!(matches!(build_initial(&s), Err(FlowError::InvalidSpec(_))));
        let s = InitialSpec {
            family: Family::Dumbbell { r_left: 1.0, r_right: 1.0, r_neck: 1.2, neck_width: 1.0 },
            n: 2,
            grid_size: 100,
        };
        assert!(matches!(build_initial(&s), Err(FlowError::InvalidSpec(_))));
    }

    #[test]
    fn cusp_at_pole_is_rejected() {
        let mut p = sphere(101);
        for v in p.psi.iter_mut() {
            *v *= 1.1;
        }
        assert!(p.validate().is_err());
    }

    #[test]
    fn arclength_examples() {
        let p = sphere(401);
        let s = arclength(&p);
        for i in 0..401 {
            assert!((s[i] - p.x[i]).abs() < 1e-15);
        }
        let mut q = p.clone();
        q.phi = vec![2.0; 401];
        let s2 = arclength(&q);
        assert!((s2[400] - 2.0 * PI).abs() < 1e-13);

        let m = 101;
        let x: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        let phi: Vec<f64> = x.iter().map(|v| 1.0 + v * v).collect();
        let q = Profile { n: 2, topology: Topology::Disk, x, phi, psi: vec![1.0; m], t: 0.0 };
        let s = arclength(&q);
        let h = 0.01;
        assert!((s[m - 1] - 4.0 / 3.0).abs() < h * h);
    }

    #[test]
    fn diameters() {
        assert!((max_orbit_diameter(&sphere(401)) - PI).abs() < 1e-12);
        let c = build_initial(&InitialSpec { family: Family::Cylinder { radius: 2.0, length: 10.0 }, n: 2, grid_size: 64 })
            .unwrap();
        assert!((max_orbit_diameter(&c) - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn regrid_sphere_reproduces() {
        let p = sphere(401);
        let q = regrid(&p, 401).unwrap();
        for i in 0..q.len() {
            assert!((q.psi[i] - q.x[i].sin()).abs() < 1e-6, "node {i}");
        }
        let r = (q.total_length() - p.total_length()).abs() / p.total_length();
        assert!(r < 1e-4);
    }

    #[test]
    fn regrid_cylinder_exact() {
        let c = build_initial(&InitialSpec { family: Family::Cylinder { radius: 1.0, length: 10.0 }, n: 2, grid_size: 128 })
            .unwrap();
        let q = regrid(&c, 160).unwrap();
        assert!(q.psi.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn regrid_is_idempotent() {
        let d = build_initial(&InitialSpec {
            family: Family::Dumbbell { r_left: 1.0, r_right: 1.0, r_neck: 0.3, neck_width: 1.0 },
            n: 2,
            grid_size: 401,
        })
        .unwrap();
        let c = monitor_constant(&d).unwrap();
        let a = regrid_with(&d, 401, c).unwrap();
        let b = regrid_with(&a, 401, c).unwrap();
        let ta = ArcTable::new(&a.x, &a.psi, Parity::Odd, a.topology, a.total_length());
        let worst = b.x.iter().zip(&b.psi).map(|(&s, &v)| (ta.value(s) - v).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn regrid_concentrates_at_neck() {
        let d = build_initial(&InitialSpec {
            family: Family::Dumbbell { r_left: 1.0, r_right: 1.0, r_neck: 0.05, neck_width: 1.0 },
            n: 2,
            grid_size: 401,
        })
        .unwrap();
        let c = monitor_constant(&d).unwrap();
        let q = regrid_with(&d, 801, c).unwrap();
        let mean = q.total_length() / 800.0;
        let h = (1..q.len() - 1)
            .filter(|&i| q.psi[i] < 0.1)
            .map(|i| q.x[i + 1] - q.x[i])
            .fold(f64::INFINITY, f64::min);
        // equidistribution predicts h_neck / h_mean = mean(m) / m(neck)
        let rho = crate::curvature::sectional(&d).unwrap().rho;
        let s = arclength(&d);
        let m: Vec<f64> = rho.iter().map(|r| 1.0 + c / r).collect();
        let mass: f64 = (1..s.len()).map(|i| 0.5 * (m[i] + m[i - 1]) * (s[i] - s[i - 1])).sum();
        let predicted = mass / d.total_length() / (1.0 + c / 0.05);
        assert!(predicted < 0.65);
        assert!((h / mean - predicted).abs() < 0.05 * predicted, "{} vs {predicted}", h / mean);
    }

    #[test]
    fn peak_is_refined_between_nodes() {
        // an even node count puts the equator midway between two nodes
        let p = build_initial(&InitialSpec { family: Family::RoundSphere { radius: 1.0 }, n: 2, grid_size: 200 }).unwrap();
        let node_gap = 1.0 - p.psi_max();
        assert!(node_gap > 1e-5);
        assert!((psi_peak(&p) - 1.0).abs() < 1e-3 * node_gap);
        assert!((max_orbit_diameter(&p) - PI).abs() < 1e-7);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut p = sphere(64);
        p.t = 0.1 + 0.2;
        let text = profile_to_csv(&p, &[]);
        let q = profile_from_csv(&text).unwrap();
        assert_eq!(p, q);
    }
}
