//! Desk checks of the inequalities and identities the flow is known to
//! satisfy, evaluated on live trajectories and on random algebraic inputs.
//!
//! Monitors never abort a run: each returns a [`MonitorReport`] whose signed
//! margin is positive when the property holds with slack.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureField;
use crate::error::{FlowError, Result};
use crate::evolution::KSample;
use crate::profile::{arclength, psi_peak, Profile, Topology};

/// Serde for reals that may be infinite: ±∞ and NaN become the strings
/// "+inf", "-inf" and "nan".
pub mod real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tag(String),
    }

    pub fn to_repr(v: f64) -> serde_json::Value {
        if v.is_finite() {
            serde_json::json!(v)
        } else {
            serde_json::Value::String(tag(v).into())
        }
    }

    fn tag(v: f64) -> &'static str {
        if v.is_nan() {
            "nan"
        } else if v > 0.0 {
            "+inf"
        } else {
            "-inf"
        }
    }

    fn from_tag<E: serde::de::Error>(s: &str) -> Result<f64, E> {
        match s {
            "+inf" | "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(E::custom(format!("not a real: {other}"))),
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(tag(*v))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Tag(s) => from_tag(&s),
        }
    }

    pub mod map {
        use std::collections::BTreeMap;

        use serde::ser::SerializeMap;
        use serde::{Deserialize, Deserializer, Serializer};

        use super::Repr;

        pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
            let mut out = s.serialize_map(Some(m.len()))?;
            for (k, v) in m {
                out.serialize_entry(k, &super::to_repr(*v))?;
            }
            out.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
            let raw = BTreeMap::<String, Repr>::deserialize(d)?;
            raw.into_iter()
                .map(|(k, v)| {
                    let x = match v {
                        Repr::Num(x) => x,
                        Repr::Tag(s) => super::from_tag(&s)?,
                    };
                    Ok((k, x))
                })
                .collect()
        }
    }
}

/// Outcome of one monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub name: String,
    pub pass: bool,
    /// Worst signed margin; positive means satisfied with slack.
    #[serde(with = "real")]
    pub margin: f64,
    pub tolerance: f64,
    /// Time of the worst margin, when it has one.
    pub t: Option<f64>,
    /// Node (or sample index) of the worst margin.
    pub node: Option<usize>,
    pub samples: usize,
    #[serde(with = "real::map", default)]
    pub extra: BTreeMap<String, f64>,
}

impl MonitorReport {
    pub fn new(name: impl Into<String>, margin: f64, tolerance: f64) -> Self {
        MonitorReport {
            name: name.into(),
            pass: passes(margin, tolerance),
            margin,
            tolerance,
            t: None,
            node: None,
            samples: 0,
            extra: BTreeMap::new(),
        }
    }

    /// A report with nothing to check.
    pub fn vacuous(name: impl Into<String>, tolerance: f64) -> Self {
        MonitorReport::new(name, f64::INFINITY, tolerance)
    }

    pub fn at(mut self, t: Option<f64>, node: Option<usize>) -> Self {
        self.t = t;
        self.node = node;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.extra.insert(key.into(), value);
        self
    }

    /// Fold another evaluation of the same monitor into this one, keeping the
    /// worse margin and its location.
    pub fn merge(mut self, other: MonitorReport) -> Self {
        if other.margin < self.margin || (other.margin.is_nan() && !self.margin.is_nan()) {
            self.margin = other.margin;
            self.t = other.t;
            self.node = other.node;
        }
        self.samples += other.samples;
        self.pass = passes(self.margin, self.tolerance);
        self
    }
}

fn passes(margin: f64, tolerance: f64) -> bool {
    margin >= -tolerance
}

// ---------------------------------------------------------------------------
// Hamilton–Ivey pinching

/// Tolerance on the normalized Hamilton–Ivey margin.
pub const HI_TOL: f64 = 1e-8;

/// Factor by which the metric must be scaled up so that ν ≥ −1 initially.
pub fn hi_rescale_factor(cf0: &CurvatureField) -> f64 {
    let nu_min = cf0.nu.iter().cloned().fold(f64::INFINITY, f64::min);
    (-nu_min).max(1.0)
}

/// The pinching estimate presumes ν(·,0) ≥ −1.
pub fn check_hi_normalized(cf0: &CurvatureField) -> Result<()> {
    let nu_min = cf0.nu.iter().cloned().fold(f64::INFINITY, f64::min);
    if nu_min < -1.0 {
        return Err(FlowError::NotNormalized { nu_min });
    }
    Ok(())
}

fn hi_rhs(nu: f64, t: f64, n: usize) -> f64 {
    let nf = n as f64;
    -nu * ((-nu).ln() + (1.0 + t).ln() - 0.5 * nf * (nf + 1.0))
}

/// R ≥ −ν(log(−ν) + log(1+t) − n(n+1)/2) at every node with ν ≤ −1/(1+t).
/// The margin is normalized by |ν|·(1 + |log(−ν)| + log(1+t)).
pub fn hamilton_ivey(cf: &CurvatureField, t: f64) -> MonitorReport {
    hamilton_ivey_scaled(cf, t, 1.0)
}

/// As [`hamilton_ivey`] for the metric scaled by `scale` (curvatures divide
/// by it, times multiply by it).
pub fn hamilton_ivey_scaled(cf: &CurvatureField, t: f64, scale: f64) -> MonitorReport {
    let ts = t * scale;
    let gate = -1.0 / (1.0 + ts);
    let mut worst = f64::INFINITY;
    let mut at = None;
    let mut gated = 0;
    for i in 0..cf.len() {
        let nu = cf.nu[i] / scale;
        if nu > gate {
            continue;
        }
        gated += 1;
        let r = cf.scalar[i] / scale;
        let norm = -nu * (1.0 + (-nu).ln().abs() + (1.0 + ts).ln());
        let m = (r - hi_rhs(nu, ts, cf.n)) / norm;
        if m < worst || m.is_nan() {
            worst = m;
            at = Some(i);
        }
    }
    MonitorReport::new("hamilton_ivey", worst, HI_TOL)
        .at(Some(t), at)
        .with_samples(cf.len())
        .with_extra("gated_nodes", gated as f64)
        .with_extra("scale", scale)
}

/// Reaction-ODE quantities of the curvature eigenvalues at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiAlgebra {
    /// dR/dt along dλ/dt = λ² + (n−1)λμ, dμ/dt = (n−1)μ² + λ².
    pub drdt: f64,
    /// Relative residual of dR/dt − 2R²/(n+1) = n(n−1)²(λ−μ)²/(2(n+1)).
    pub identity_residual: f64,
    /// (dR/dt − 2R²/(n+1)) / (n(n−1)²(λ−μ)²/(n+1)); identically 1/2 when λ ≠ μ.
    pub stated_ratio: Option<f64>,
    /// For ν < 0: ((−ν)dR/dt + dν/dt(R−ν) − (−ν)³)/max(|λ|,|μ|)³.
    pub case_value: Option<f64>,
}

pub fn hi_ode_algebra(lambda: f64, mu: f64, n: usize) -> HiAlgebra {
    let nf = n as f64;
    let dl = lambda * lambda + (nf - 1.0) * lambda * mu;
    let dm = (nf - 1.0) * mu * mu + lambda * lambda;
    let r = nf * lambda + 0.5 * nf * (nf - 1.0) * mu;
    let drdt = nf * dl + 0.5 * nf * (nf - 1.0) * dm;
    let lhs = drdt - 2.0 * r * r / (nf + 1.0);
    let sq = (lambda - mu) * (lambda - mu);
    let rhs = nf * (nf - 1.0).powi(2) * sq / (2.0 * (nf + 1.0));
    let scale = drdt.abs().max(2.0 * r * r / (nf + 1.0)).max(rhs).max(f64::MIN_POSITIVE);
    let nu = lambda.min(mu);
    let case_value = (nu < 0.0).then(|| {
        let dnu = if mu <= lambda { dm } else { dl };
        let v = -nu * drdt + dnu * (r - nu) - (-nu).powi(3);
        v / lambda.abs().max(mu.abs()).powi(3)
    });
    HiAlgebra {
        drdt,
        identity_residual: (lhs - rhs).abs() / scale,
        stated_ratio: (sq > 0.0).then(|| lhs / (2.0 * rhs)),
        case_value,
    }
}

/// Magnitudes spread over six decades with random sign.
fn wide(rng: &mut ChaCha8Rng) -> f64 {
    let mag = 10f64.powf(rng.gen_range(-3.0..3.0));
    if rng.gen::<bool>() {
        mag
    } else {
        -mag
    }
}

/// Randomized check of the reaction-ODE identity and of the case inequality.
/// Returns (identity report, case report).
pub fn hi_algebra_suite(n: usize, samples: usize, seed: u64) -> (MonitorReport, MonitorReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let (mut id_worst, mut id_at) = (0.0f64, None);
    let (mut ratio_lo, mut ratio_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut case_worst, mut case_at, mut cases) = (f64::INFINITY, None, 0usize);
    for k in 0..samples {
        let (l, m) = (wide(&mut rng), wide(&mut rng));
        let a = hi_ode_algebra(l, m, n);
        if a.identity_residual > id_worst {
            id_worst = a.identity_residual;
            id_at = Some(k);
        }
        if (l - m).abs() > 1e-3 * l.abs().max(m.abs()) {
            let q = a.stated_ratio.unwrap_or(f64::NAN);
            ratio_lo = ratio_lo.min(q);
            ratio_hi = ratio_hi.max(q);
        }
        if let Some(c) = a.case_value {
            cases += 1;
            if c < case_worst {
                case_worst = c;
                case_at = Some(k);
            }
        }
    }
    let id = MonitorReport::new(format!("hi_ode_identity_n{n}"), -id_worst, 1e-12)
        .at(None, id_at)
        .with_samples(samples)
        .with_extra("seed", seed as f64)
        .with_extra("stated_coefficient_ratio_min", ratio_lo)
        .with_extra("stated_coefficient_ratio_max", ratio_hi);
    let case = MonitorReport::new(format!("hi_ode_case_n{n}"), case_worst, 1e-12)
        .at(None, case_at)
        .with_samples(cases)
        .with_extra("seed", seed as f64);
    (id, case)
}

// ---------------------------------------------------------------------------
// Anderson–Chow

/// Evaluation of Rm(h,h)/|h|² ≤ |Rc|²/R for a rotationally symmetric h.
/// Here λ, μ are the radial and orbital sectional curvatures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AndersonChow {
    pub ratio: f64,
    pub bound: f64,
    pub t1: f64,
    pub t2: f64,
}

impl AndersonChow {
    /// Relative slack of the inequality.
    pub fn margin(&self) -> f64 {
        (self.bound - self.ratio) / self.bound.abs().max(self.ratio.abs())
    }

    /// Relative slack of max(|t₁|, |t₂|) ≤ |Rc|²/R.
    pub fn eigen_margin(&self) -> f64 {
        let t = self.t1.abs().max(self.t2.abs());
        (self.bound - t) / self.bound.abs().max(t)
    }
}

pub fn anderson_chow(lambda: f64, mu: f64, h00: f64, h11: f64, n: usize) -> Result<AndersonChow> {
    let nf = n as f64;
    let r = 2.0 * nf * lambda + nf * (nf - 1.0) * mu;
    if !(r > 0.0) {
        return Err(FlowError::DomainError(format!("scalar curvature {r} is not positive")));
    }
    let h2 = h00 * h00 + nf * h11 * h11;
    if !(h2 > 0.0) {
        return Err(FlowError::DomainError("h = 0".into()));
    }
    let rm = 2.0 * nf * lambda * h00 * h11 + nf * (nf - 1.0) * mu * h11 * h11;
    let b = lambda + (nf - 1.0) * mu;
    let rc2 = nf * nf * lambda * lambda + nf * b * b;
    let a = (nf - 1.0) * mu;
    let disc = (a * a + 4.0 * nf * lambda * lambda).sqrt();
    Ok(AndersonChow { ratio: rm / h2, bound: rc2 / r, t1: 0.5 * (a + disc), t2: 0.5 * (a - disc) })
}

/// Randomized Anderson–Chow check with positive scalar curvature. The
/// report's margin is the worst relative slack; `extra` carries the worst
/// eigenvalue cross-check (Rayleigh quotient vs. largest eigenvalue).
pub fn anderson_chow_suite(n: usize, samples: usize, seed: u64) -> MonitorReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0xd1b5_4a32_d192_ed03));
    let nf = n as f64;
    let (mut worst, mut at) = (f64::INFINITY, None);
    let mut eig_worst = f64::INFINITY;
    let mut rayleigh_excess = 0.0f64;
    let mut k = 0;
    while k < samples {
        let (l, m) = (wide(&mut rng), wide(&mut rng));
        if 2.0 * nf * l + nf * (nf - 1.0) * m <= 0.0 {
            continue;
        }
        let (h00, h11) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let ac = match anderson_chow(l, m, h00, h11, n) {
            Ok(ac) => ac,
            Err(_) => continue,
        };
        let mg = ac.margin();
        if mg < worst {
            worst = mg;
            at = Some(k);
        }
        eig_worst = eig_worst.min(ac.eigen_margin());
        let scale = ac.t1.abs().max(ac.t2.abs());
        rayleigh_excess = rayleigh_excess.max((ac.ratio - ac.t1) / scale).max((ac.t2 - ac.ratio) / scale);
        k += 1;
    }
    MonitorReport::new(format!("anderson_chow_n{n}"), worst, 1e-12)
        .at(None, at)
        .with_samples(samples)
        .with_extra("seed", seed as f64)
        .with_extra("eigen_margin", eig_worst)
        .with_extra("rayleigh_excess", rayleigh_excess)
}

// ---------------------------------------------------------------------------
// Bumps

/// Midpoint difference quotients of ψ in arclength, one per grid interval
/// (including the wrap-around interval of a periodic profile). Unlike a
/// wide stencil they inherit the exact monotonicity of the node values.
fn midpoint_slopes(p: &Profile) -> Vec<f64> {
    let s = arclength(p);
    let len = p.len();
    let mut out: Vec<f64> = (0..len - 1).map(|i| (p.psi[i + 1] - p.psi[i]) / (s[i + 1] - s[i])).collect();
    if matches!(p.topology, Topology::PeriodicCylinder { .. }) {
        out.push((p.psi[0] - p.psi[len - 1]) / (p.total_length() - s[len - 1]));
    }
    out
}

/// Number of bumps (local maxima of ψ): sign changes of ψ_s from + to −,
/// registered only where |ψ_s| > eps on both sides of the crossing.
pub fn bump_count(p: &Profile, eps: f64) -> usize {
    let signs: Vec<i8> = midpoint_slopes(p)
        .into_iter()
        .filter_map(|v| {
            if v > eps {
                Some(1)
            } else if v < -eps {
                Some(-1)
            } else {
                None
            }
        })
        .collect();
    if signs.is_empty() {
        return 0;
    }
    let mut count = signs.windows(2).filter(|w| w[0] > 0 && w[1] < 0).count();
    if matches!(p.topology, Topology::PeriodicCylinder { .. }) && signs[signs.len() - 1] > 0 && signs[0] < 0 {
        count += 1;
    }
    count
}

/// Default hysteresis: 10⁻⁶·max ψ.
pub fn bump_count_default(p: &Profile) -> usize {
    bump_count(p, 1e-6 * p.psi_max())
}

/// The total bump count never increases along a series of (t, count).
pub fn bump_monotone(series: &[(f64, usize)]) -> MonitorReport {
    let mut rep = MonitorReport::vacuous("bump_monotone", 0.0).with_samples(series.len());
    for (k, w) in series.windows(2).enumerate() {
        let drop = w[0].1 as f64 - w[1].1 as f64;
        rep = rep.merge(MonitorReport::new("bump_monotone", drop, 0.0).at(Some(w[1].0), Some(k + 1)));
    }
    rep
}

/// Node of the leftmost interior maximum of ψ.
pub fn leftmost_bump(p: &Profile) -> Option<usize> {
    let eps = 1e-6 * p.psi_max();
    let slopes = midpoint_slopes(p);
    let mut last_rise = None;
    for (i, &v) in slopes.iter().enumerate().take(p.len() - 1) {
        if v > eps {
            last_rise = Some(i);
        } else if v < -eps {
            if let Some(j) = last_rise {
                // the maximum lies on the nodes between the last rise and this fall
                return (j + 1..=i).max_by(|&a, &b| p.psi[a].total_cmp(&p.psi[b]));
            }
        }
    }
    None
}

/// ψ(bump)² − 2(n−1)(T−t) > 0 at every snapshot before T.
pub fn neck_lower_bound(snapshots: &[Profile], t_blowup: f64) -> Result<MonitorReport> {
    let mut rep = MonitorReport::vacuous("neck_lower_bound", 0.0);
    for p in snapshots.iter().filter(|p| p.t < t_blowup) {
        let b = leftmost_bump(p).ok_or(FlowError::NoBump { t: p.t })?;
        let m = p.psi[b] * p.psi[b] - 2.0 * (p.n as f64 - 1.0) * (t_blowup - p.t);
        rep = rep.merge(MonitorReport::new("neck_lower_bound", m, 0.0).at(Some(p.t), Some(b)).with_samples(1));
    }
    Ok(rep.with_extra("t_blowup", t_blowup))
}

/// Type-I rate: (T−t)²·K_max must not double over the final decade of T−t.
pub fn blowup_rate(series: &[KSample], t_blowup: f64) -> MonitorReport {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|s| s.t < t_blowup)
        .map(|s| (t_blowup - s.t, (t_blowup - s.t).powi(2) * s.k_max))
        .collect();
    let Some(&(tau_last, _)) = pts.last() else {
        return MonitorReport::vacuous("blowup_rate", 0.0);
    };
    let sup = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    // reference value at the start of the final decade (or the earliest sample)
    let start = pts.iter().position(|p| p.0 <= 10.0 * tau_last).unwrap_or(0);
    let reference = pts[start].1;
    let (mut growth, mut at) = (0.0f64, start);
    for (k, p) in pts.iter().enumerate().skip(start) {
        let g = p.1 / reference;
        if g > growth {
            growth = g;
            at = k;
        }
    }
    let span = pts[start].0 / tau_last;
    MonitorReport::new("blowup_rate", 2.0 - growth, 0.0)
        .at(Some(t_blowup - pts[at].0), Some(at))
        .with_samples(pts.len())
        .with_extra("sup_scaled_curvature", sup)
        .with_extra("decade_span", span)
        .with_extra("t_blowup", t_blowup)
}

/// Pole curvature against b₂A₁²/(2(n−1)(T−t)²); margin relative to the bound.
pub fn pole_curvature_bound(snapshots: &[Profile], cfs: &[CurvatureField], t_blowup: f64, b2: f64, a1: f64) -> MonitorReport {
    let mut rep = MonitorReport::vacuous("pole_curvature_bound", 0.0);
    for (p, cf) in snapshots.iter().zip(cfs) {
        if p.t >= t_blowup || !p.topology.left_pole() {
            continue;
        }
        let bound = b2 * a1 * a1 / (2.0 * (p.n as f64 - 1.0) * (t_blowup - p.t).powi(2));
        let k = cf.k_rad[0];
        rep = rep.merge(MonitorReport::new("pole_curvature_bound", (bound - k) / bound, 0.0).at(Some(p.t), Some(0)).with_samples(1));
    }
    rep
}

/// z_sim − z_* ≥ 0 on a common u-grid.
pub fn barrier_ordering(z_sim: &[(f64, f64)], z_star: &[(f64, f64)]) -> Result<MonitorReport> {
    if z_sim.len() != z_star.len() {
        return Err(FlowError::GridMismatch(format!("{} vs {} points", z_sim.len(), z_star.len())));
    }
    let mut rep = MonitorReport::vacuous("barrier_ordering", 0.0).with_samples(z_sim.len());
    for (k, (a, b)) in z_sim.iter().zip(z_star).enumerate() {
        if (a.0 - b.0).abs() > 1e-12 * a.0.abs().max(1.0) {
            return Err(FlowError::GridMismatch(format!("u differs at point {k}: {} vs {}", a.0, b.0)));
        }
        rep = rep.merge(MonitorReport::new("barrier_ordering", a.1 - b.1, 0.0).at(None, Some(k)));
    }
    Ok(rep)
}

/// Relative allowance on the extinction decay rate.
pub const TOL_MONO: f64 = 0.05;

/// One sample for the extinction monitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxSample {
    pub t: f64,
    pub psi_max: f64,
    /// Whether the maximum sits at an interior critical point.
    pub interior: bool,
}

impl MaxSample {
    pub fn of(p: &Profile) -> Self {
        let (i, _) = p.psi.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty profile");
        // parabola-refined peak: the raw node maximum jumps when the grid is rebuilt
        MaxSample { t: p.t, psi_max: psi_peak(p), interior: !p.is_pole(i) }
    }
}

/// max ψ² decreases at rate ≥ 2(n−1)(1 − TOL_MONO) between samples whose
/// maximum is interior; the rate is also compared with n.
pub fn extinction_decay(series: &[MaxSample], n: usize) -> MonitorReport {
    let derived = 2.0 * (n as f64 - 1.0);
    let mut min_rate = f64::INFINITY;
    let mut at = None;
    let mut checked = 0;
    for (k, w) in series.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        if !(dt > 0.0) || !(w[0].interior && w[1].interior) {
            continue;
        }
        checked += 1;
        let rate = (w[0].psi_max.powi(2) - w[1].psi_max.powi(2)) / dt;
        if rate < min_rate {
            min_rate = rate;
            at = Some(k + 1);
        }
    }
    let margin = (min_rate - derived * (1.0 - TOL_MONO)) / derived;
    let t = at.map(|k| series[k].t);
    MonitorReport::new("extinction_decay", margin, 0.0)
        .at(t, at)
        .with_samples(checked)
        .with_extra("min_rate", min_rate)
        .with_extra("rate_constant_2n_minus_2", derived)
        .with_extra("rate_constant_n", n as f64)
        .with_extra("passes_with_n", if min_rate >= n as f64 * (1.0 - TOL_MONO) { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::sectional;
    use crate::profile::{build_initial, Family, InitialSpec};

    fn sphere(radius: f64, t: f64) -> Profile {
        let mut p = build_initial(&InitialSpec { family: Family::RoundSphere { radius }, n: 2, grid_size: 201 }).unwrap();
        p.t = t;
        p
    }

    #[test]
    fn hamilton_ivey_is_vacuous_on_the_sphere() {
        let rep = hamilton_ivey(&sectional(&sphere(1.0, 0.0)).unwrap(), 0.0);
        assert!(rep.pass);
        assert_eq!(rep.margin, f64::INFINITY);
        let js = serde_json::to_string(&rep).unwrap();
        assert!(js.contains("\"margin\":\"+inf\""), "{js}");
        let back: MonitorReport = serde_json::from_str(&js).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn hamilton_ivey_margin_is_continuous_across_the_gate() {
        let t = 0.5f64;
        let gate = -1.0 / (1.0 + t);
        let eval = |nu: f64, r: f64| {
            let cf = CurvatureField::from_eigenvalues(3, vec![nu], vec![r]);
            hamilton_ivey(&cf, t)
        };
        let below = eval(gate * (1.0 + 1e-12), 0.3);
        assert!(below.margin.is_finite());
        assert_eq!(eval(gate * (1.0 - 1e-12), 0.3).margin, f64::INFINITY);
        // at ν = −1/(1+t): RHS = (1/(1+t))(−log(1+t) + log(1+t) − 6) = −6/(1+t)
        let nu = gate;
        let r = 3.0 * nu + 3.0 * 0.3;
        let norm = -nu * (1.0 + (1.0 + t).ln() + (1.0 + t).ln());
        assert!((below.margin - (r + 6.0 / (1.0 + t)) / norm).abs() < 1e-9);
    }

    #[test]
    fn normalization_check() {
        let cf = CurvatureField::from_eigenvalues(2, vec![-3.0, 1.0], vec![1.0, 1.0]);
        assert!(matches!(check_hi_normalized(&cf), Err(FlowError::NotNormalized { .. })));
        assert_eq!(hi_rescale_factor(&cf), 3.0);
        assert!(check_hi_normalized(&sectional(&sphere(1.0, 0.0)).unwrap()).is_ok());
    }

    #[test]
    fn reaction_ode_examples() {
        let a = hi_ode_algebra(2.0, 2.0, 2);
        assert_eq!(a.identity_residual, 0.0);
        // R = 6, dR/dt = 2·36/3 = 24
        assert!((a.drdt - 24.0).abs() < 1e-12);
        assert!(a.case_value.is_none());
        // ν = μ = −1: nλ²(λ−μ) − λ²μ − (n−2)μ³ = 4 + 1 = 5
        let b = hi_ode_algebra(1.0, -1.0, 2);
        assert!((b.case_value.unwrap() - 5.0).abs() < 1e-12);
        assert!(b.identity_residual < 1e-15);
        assert!((b.stated_ratio.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn anderson_chow_examples() {
        // λ = μ = 1, n = 2, h = (1,1): ratio 6/3 = 2, |Rc|²/R = 12/6 = 2
        let ac = anderson_chow(1.0, 1.0, 1.0, 1.0, 2).unwrap();
        assert!((ac.ratio - 2.0).abs() < 1e-15 && (ac.bound - 2.0).abs() < 1e-15);
        assert!(ac.margin().abs() < 1e-15);
        for n in 2..=6 {
            let nf = n as f64;
            let ac = anderson_chow(0.7, 0.0, 0.3, -0.2, n).unwrap();
            assert!((ac.t1.abs().max(ac.t2.abs()) - nf.sqrt() * 0.7).abs() < 1e-12);
            assert!((ac.bound - (nf + 1.0) * 0.7 / 2.0).abs() < 1e-12);
            assert!(ac.eigen_margin() >= 0.0);
        }
        assert!(matches!(anderson_chow(-1.0, 0.0, 1.0, 1.0, 2), Err(FlowError::DomainError(_))));
    }

    #[test]
    fn small_suites_are_clean_and_deterministic() {
        let (id, case) = hi_algebra_suite(3, 20_000, 7);
        assert!(id.pass && case.pass, "{id:?} {case:?}");
        assert!((id.extra["stated_coefficient_ratio_min"] - 0.5).abs() < 1e-9);
        assert!((id.extra["stated_coefficient_ratio_max"] - 0.5).abs() < 1e-9);
        assert_eq!(hi_algebra_suite(3, 20_000, 7), (id, case));
        let ac = anderson_chow_suite(4, 20_000, 11);
        assert!(ac.pass, "{ac:?}");
        assert!(ac.extra["rayleigh_excess"] < 1e-12);
    }

    #[test]
    fn bump_counts() {
        assert_eq!(bump_count_default(&sphere(1.0, 0.0)), 1);
        let cyl = build_initial(&InitialSpec { family: Family::Cylinder { radius: 0.5, length: 3.0 }, n: 2, grid_size: 64 })
            .unwrap();
        assert_eq!(bump_count_default(&cyl), 0);
        let db = build_initial(&InitialSpec {
            family: Family::Dumbbell { r_left: 1.0, r_right: 1.0, r_neck: 0.3, neck_width: 1.0 },
            n: 2,
            grid_size: 401,
        })
        .unwrap();
        assert_eq!(bump_count_default(&db), 2);
        let mut wavy = cyl.clone();
        let period = cyl.total_length();
        for i in 0..wavy.len() {
            wavy.psi[i] = 0.5 + 0.05 * (2.0 * std::f64::consts::PI * 2.0 * wavy.x[i] / period).cos();
        }
        assert_eq!(bump_count_default(&wavy), 2);
    }

    #[test]
    fn bump_monotone_detects_increase() {
        assert!(bump_monotone(&[(0.0, 2), (0.1, 2), (0.2, 1)]).pass);
        let bad = bump_monotone(&[(0.0, 1), (0.1, 2)]);
        assert!(!bad.pass);
        assert_eq!(bad.margin, -1.0);
    }

    #[test]
    fn neck_bound_on_the_sphere_family() {
        let n = 2.0;
        let t_ext = 1.0 / (2.0 * n);
        let snaps: Vec<Profile> =
            [0.0, 0.1, 0.2].iter().map(|&t: &f64| sphere((1.0 - 2.0 * n * t).sqrt(), t)).collect();
        let rep = neck_lower_bound(&snaps, t_ext).unwrap();
        // margin ρ(t)²/n, smallest at t = 0.2
        let expect = (1.0 - 2.0 * n * 0.2) / n;
        assert!(rep.pass);
        assert!((rep.margin - expect).abs() < 1e-9, "{}", rep.margin);
        // a snapshot with ψ(bump)² = (n−1)(T−t) fails
        let t = 0.1;
        let bad = sphere(((n - 1.0) * (t_ext - t)).sqrt(), t);
        assert!(!neck_lower_bound(&[bad], t_ext).unwrap().pass);
        let cyl = build_initial(&InitialSpec { family: Family::Cylinder { radius: 0.5, length: 3.0 }, n: 2, grid_size: 64 })
            .unwrap();
        assert!(matches!(neck_lower_bound(&[cyl], 1.0), Err(FlowError::NoBump { .. })));
    }

    #[test]
    fn blowup_rate_detector() {
        let t_ext = 0.25;
        let series = |f: &dyn Fn(f64) -> f64| -> Vec<KSample> {
            (0..200)
                .map(|k| {
                    let t = t_ext - 0.25 * 10f64.powf(-3.0 * k as f64 / 199.0);
                    KSample { t, k_max: f(t), psi_min: 0.0, psi_max: 0.0 }
                })
                .collect()
        };
        let sph = blowup_rate(&series(&|t| 1.0 / (1.0 - 4.0 * t)), t_ext);
        assert!(sph.pass, "{sph:?}");
        let fast = blowup_rate(&series(&|t| (t_ext - t).powi(-3)), t_ext);
        assert!(!fast.pass);
    }

    #[test]
    fn barrier_ordering_grids() {
        let z: Vec<(f64, f64)> = (0..10).map(|k| (k as f64 / 9.0, 1.0 - k as f64 / 9.0)).collect();
        let rep = barrier_ordering(&z, &z).unwrap();
        assert_eq!(rep.margin, 0.0);
        assert!(rep.pass);
        assert!(matches!(barrier_ordering(&z, &z[1..]), Err(FlowError::GridMismatch(_))));
    }

    #[test]
    fn extinction_rates() {
        let n = 2;
        let cyl: Vec<MaxSample> = (0..10)
            .map(|k| {
                let t = 0.02 * k as f64;
                MaxSample { t, psi_max: (1.0 - 2.0 * t).sqrt(), interior: true }
            })
            .collect();
        let rep = extinction_decay(&cyl, n);
        assert!((rep.extra["min_rate"] - 2.0).abs() < 1e-9);
        assert!((rep.margin - TOL_MONO).abs() < 1e-9);
        let sph: Vec<MaxSample> = (0..10)
            .map(|k| {
                let t = 0.02 * k as f64;
                MaxSample { t, psi_max: (1.0 - 4.0 * t).sqrt(), interior: true }
            })
            .collect();
        assert!((extinction_decay(&sph, n).extra["min_rate"] - 4.0).abs() < 1e-9);
        let up = [MaxSample { t: 0.0, psi_max: 1.0, interior: true }, MaxSample { t: 0.1, psi_max: 1.1, interior: true }];
        assert!(!extinction_decay(&up, n).pass);
    }
}
