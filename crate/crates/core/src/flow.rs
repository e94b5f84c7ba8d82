//! Run orchestration: evolve every component, operate when the curvature
//! trigger fires, retire extinct components, and persist snapshots, events,
//! monitor reports and a summary. [`replay`] recomputes the reports from the
//! persisted files alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bryant::{build_zstar_on, choose_params, horizontal_transform, solve_soliton, unit_grid};
use crate::curvature::sectional;
use crate::error::{FlowError, Result};
use crate::evolution::{estimate_blowup_time, evolve_with_monitor, KSample, StepControl, StopReason, StopRule};
use crate::monitors::{
    barrier_ordering, blowup_rate, bump_count_default, bump_monotone, extinction_decay, hamilton_ivey_scaled,
    hi_rescale_factor, neck_lower_bound, pole_curvature_bound, MaxSample, MonitorReport,
};
use crate::profile::{build_initial, profile_from_csv, profile_to_csv, InitialSpec, Profile};
use crate::state::{FlowEvent, FlowState};
use crate::surgery::{perform_surgery, SurgeryConfig, SurgeryParams};

/// Monitors a run can evaluate, in report order.
pub const MONITOR_NAMES: [&str; 7] = [
    "hamilton_ivey",
    "bump_monotone",
    "extinction_decay",
    "neck_lower_bound",
    "blowup_rate",
    "pole_curvature_bound",
    "barrier_ordering",
];

/// Comparison window in τ = −log(T−t) for the barrier ordering.
pub const BARRIER_WINDOW: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSpec {
    pub name: String,
    /// Overrides the monitor's built-in tolerance.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

fn default_monitors() -> Vec<MonitorSpec> {
    MONITOR_NAMES.iter().map(|n| MonitorSpec { name: n.to_string(), tolerance: None }).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub initial: InitialSpec,
    #[serde(default)]
    pub step: StepControl,
    /// Absent: pure evolution, a stalled step size ends the component.
    #[serde(default)]
    pub surgery: Option<SurgeryConfig>,
    #[serde(default = "default_monitors")]
    pub monitors: Vec<MonitorSpec>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Final flow time (same time unit as the initial metric's length²).
    pub t_max: f64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| FlowError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FlowError::Parse(e.to_string()))
    }

    /// Checks that need no initial profile.
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(FlowError::InvalidSpec(format!("t_max = {} must be finite and >= 0", self.t_max)));
        }
        self.step.validate()?;
        // TOML integers are signed 64-bit; larger seeds could not be written back
        if self.seed > i64::MAX as u64 {
            return Err(FlowError::InvalidSpec(format!("seed {} exceeds {}", self.seed, i64::MAX)));
        }
        for m in &self.monitors {
            if !MONITOR_NAMES.contains(&m.name.as_str()) {
                return Err(FlowError::InvalidSpec(format!("unknown monitor `{}`", m.name)));
            }
            if m.tolerance.is_some_and(|t| !(t >= 0.0)) {
                return Err(FlowError::InvalidSpec(format!("negative tolerance for `{}`", m.name)));
            }
        }
        Ok(())
    }

    fn surgery_params(&self, p0: &Profile) -> Result<Option<SurgeryParams>> {
        let Some(cfg) = &self.surgery else { return Ok(None) };
        let params = SurgeryParams::new(p0.n, cfg)?;
        let rho_min = sectional(p0)?.rho_min();
        let trig = params.trigger_scale(p0.n);
        if trig >= rho_min {
            return Err(FlowError::InvalidSpec(format!("trigger scale {trig:.4e} is not below the initial rho_min {rho_min:.4e}")));
        }
        Ok(Some(params))
    }
}

/// Everything the monitors consume; reconstructible from the output files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub n: usize,
    pub snapshots: BTreeMap<usize, Vec<Profile>>,
    pub k_series: BTreeMap<usize, Vec<KSample>>,
    pub events: Vec<FlowEvent>,
}

impl RunRecord {
    /// Flow time at which each component stops living, if it does.
    fn deaths(&self) -> BTreeMap<usize, &FlowEvent> {
        self.events.iter().map(|e| (e.ends(), e)).collect()
    }

    /// Components whose lifetime ends in a forming singularity: operated on,
    /// stalled, or stopped by a failed surgery at the trigger.
    fn singular_components(&self) -> Vec<usize> {
        self.deaths()
            .into_iter()
            .filter(|(_, e)| {
                matches!(e, FlowEvent::Surgery(_) | FlowEvent::Singular { .. } | FlowEvent::Aborted { at_trigger: true, .. })
            })
            .map(|(id, _)| id)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub exit_code: i32,
    pub seed: u64,
    pub t_final: f64,
    /// Time the last component disappeared, when none remain.
    pub extinction_time: Option<f64>,
    pub surgeries: usize,
    pub components_issued: usize,
    pub alive: Vec<usize>,
    pub extinct: Vec<usize>,
    pub singular: Vec<usize>,
    pub steps: usize,
    pub snapshots: usize,
    pub monitors_failed: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    pub reports: Vec<MonitorReport>,
    pub record: RunRecord,
    pub state: FlowState,
}

/// Write-then-rename so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or("")));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn snapshot_name(component: usize, t: f64) -> String {
    format!("snap_{component}_{t:.16e}.csv")
}

fn kmax_csv(series: &BTreeMap<usize, Vec<KSample>>) -> String {
    let mut s = String::from("component,t,K_max,psi_min,psi_max\n");
    for (id, ks) in series {
        for k in ks {
            let _ = writeln!(s, "{id},{:.16e},{:.16e},{:.16e},{:.16e}", k.t, k.k_max, k.psi_min, k.psi_max);
        }
    }
    s
}

fn events_jsonl(events: &[FlowEvent]) -> Result<String> {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e).map_err(|e| FlowError::Parse(e.to_string()))?);
        s.push('\n');
    }
    Ok(s)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| FlowError::Parse(e.to_string()))
}

struct Writer {
    dir: PathBuf,
}

impl Writer {
    fn snapshot(&self, id: usize, p: &Profile) -> Result<()> {
        write_atomic(&self.dir.join(snapshot_name(id, p.t)), &profile_to_csv(p, &[]))
    }

    fn progress(&self, record: &RunRecord) -> Result<()> {
        write_atomic(&self.dir.join("kmax.csv"), &kmax_csv(&record.k_series))?;
        write_atomic(&self.dir.join("events.jsonl"), &events_jsonl(&record.events)?)
    }
}

/// Evolves the configured initial data; output goes to `cfg.output_dir`.
/// Configuration errors are returned; solver errors end the run with exit
/// code 3 and a diagnostic bundle.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let p0 = build_initial(&cfg.initial)?;
    let params = cfg.surgery_params(&p0)?;
    let out = Writer { dir: cfg.output_dir.clone() };
    std::fs::create_dir_all(&out.dir)?;
    write_atomic(&out.dir.join("config.toml"), &cfg.to_toml()?)?;

    let n = p0.n;
    let mut state = FlowState::new(p0.clone())?;
    let mut record = RunRecord { n, ..Default::default() };
    let mut steps = 0usize;
    let mut error: Option<(FlowError, Profile)> = None;
    let mut done: BTreeSet<usize> = BTreeSet::new();

    if cfg.t_max == 0.0 {
        record.snapshots.insert(0, vec![p0.clone()]);
        out.snapshot(0, &p0)?;
    }

    loop {
        // earliest pending component first; ids break ties
        let next = state
            .components
            .iter()
            .filter(|c| !done.contains(&c.id) && c.profile.t < cfg.t_max)
            .min_by(|a, b| a.profile.t.total_cmp(&b.profile.t).then(a.id.cmp(&b.id)))
            .map(|c| c.id);
        let Some(id) = next else { break };
        let comp = state.component(id).expect("pending component exists").clone();
        let stop = StopRule {
            t_end: cfg.t_max,
            rho_trigger: params.as_ref().map(|p| p.trigger_scale(n)),
            extinction_psi: Some(comp.extinction_psi),
        };
        let traj = match evolve_with_monitor(&comp.profile, &cfg.step, &stop, comp.c_mon) {
            Ok(t) => t,
            Err(e) => {
                state.events.push(FlowEvent::Aborted { t: comp.profile.t, component: id, at_trigger: false, error: e.to_string() });
                error = Some((e, comp.profile.clone()));
                break;
            }
        };
        steps += traj.steps;
        for s in &traj.snapshots {
            out.snapshot(id, s)?;
        }
        record.snapshots.entry(id).or_default().extend(traj.snapshots.iter().cloned());
        record.k_series.entry(id).or_default().extend(traj.k_series.iter().cloned());
        if let Some(c) = state.components.iter_mut().find(|c| c.id == id) {
            c.profile = traj.last.clone();
        }
        state.t = state.t.max(traj.last.t);

        match traj.stop {
            StopReason::EndTime => {
                done.insert(id);
            }
            StopReason::Extinction { .. } => state.extinguish(id),
            StopReason::TimestepUnderflow { dt } if params.is_none() => {
                state.components.retain(|c| c.id != id);
                state.events.push(FlowEvent::Singular { t: traj.last.t, component: id, dt });
            }
            StopReason::TimestepUnderflow { dt } => {
                error = Some((FlowError::TimestepUnderflow { t: traj.last.t, dt, dt_min: cfg.step.dt_min }, traj.last.clone()));
            }
            StopReason::MaxSteps => {
                error = Some((FlowError::Unsupported(format!("step budget exhausted on component {id}")), traj.last.clone()));
            }
            StopReason::CurvatureTrigger { .. } => {
                let params = params.as_ref().expect("trigger implies surgery");
                match operate(&mut state, id, params) {
                    Ok(()) => {}
                    Err(e) => error = Some((e, traj.last.clone())),
                }
            }
        }
        if let Some((e, last)) = &error {
            let at_trigger = matches!(traj.stop, StopReason::CurvatureTrigger { .. });
            state.events.push(FlowEvent::Aborted { t: last.t, component: id, at_trigger, error: e.to_string() });
        }
        record.events = state.events.clone();
        out.progress(&record)?;
        if error.is_some() {
            break;
        }
    }
    record.events = state.events.clone();
    out.progress(&record)?;

    let reports = compute_monitors(&record, &cfg.monitors);
    write_atomic(&out.dir.join("monitors.json"), &to_json(&reports)?)?;

    let failed: Vec<String> = reports.iter().filter(|r| !r.pass).map(|r| r.name.clone()).collect();
    let exit_code = if error.is_some() {
        3
    } else if failed.is_empty() {
        0
    } else {
        2
    };
    if let Some((e, last)) = &error {
        let diag = out.dir.join("diagnostic");
        std::fs::create_dir_all(&diag)?;
        write_atomic(&diag.join("last_snapshot.csv"), &profile_to_csv(last, &[]))?;
        write_atomic(&diag.join("config.toml"), &cfg.to_toml()?)?;
        write_atomic(&diag.join("error.txt"), &format!("{e}\n"))?;
    }
    let mut extinct = Vec::new();
    let mut singular = Vec::new();
    for e in &state.events {
        match e {
            FlowEvent::Extinction { component, .. } => extinct.push(*component),
            FlowEvent::Singular { component, .. } => singular.push(*component),
            FlowEvent::Surgery(_) | FlowEvent::Aborted { .. } => {}
        }
    }
    let extinction_time = if state.components.is_empty() && error.is_none() {
        state.events.iter().filter(|e| !matches!(e, FlowEvent::Surgery(_))).map(|e| e.t()).fold(None, |a: Option<f64>, t| Some(a.map_or(t, |a| a.max(t))))
    } else {
        None
    };
    let summary = Summary {
        exit_code,
        seed: cfg.seed,
        t_final: state.t,
        extinction_time,
        surgeries: state.events.iter().filter(|e| matches!(e, FlowEvent::Surgery(_))).count(),
        components_issued: state.next_id,
        alive: state.components.iter().map(|c| c.id).collect(),
        extinct,
        singular,
        steps,
        snapshots: record.snapshots.values().map(Vec::len).sum(),
        monitors_failed: failed,
        error: error.as_ref().map(|(e, _)| e.to_string()),
    };
    write_atomic(&out.dir.join("summary.json"), &to_json(&summary)?)?;
    Ok(RunOutcome { summary, reports, record, state })
}

/// Surgery on one component, merged into the global state.
fn operate(state: &mut FlowState, id: usize, params: &SurgeryParams) -> Result<()> {
    let comp = state.component(id).expect("component exists").clone();
    let single = FlowState {
        t: comp.profile.t,
        components: vec![comp],
        genealogy: BTreeMap::new(),
        events: vec![],
        next_id: state.next_id,
    };
    let (after, events) = perform_surgery(&single, params)?;
    if events.is_empty() {
        return Err(FlowError::NoNeckFound(format!("curvature trigger fired on component {id} but no horn was found")));
    }
    state.components.retain(|c| c.id != id);
    state.components.extend(after.components);
    state.genealogy.extend(after.genealogy);
    state.events.extend(after.events);
    state.next_id = after.next_id;
    state.validate()
}

fn failed_report(name: &str, why: &str) -> MonitorReport {
    MonitorReport::new(name, f64::NAN, 0.0).with_extra(why, 1.0)
}

/// Every requested monitor over the recorded trajectory, in request order.
pub fn compute_monitors(record: &RunRecord, specs: &[MonitorSpec]) -> Vec<MonitorReport> {
    let mut cache: BTreeMap<&str, MonitorReport> = BTreeMap::new();
    let needs = |name: &str| specs.iter().any(|s| s.name == name);
    if needs("hamilton_ivey") {
        cache.insert("hamilton_ivey", hi_monitor(record));
    }
    if needs("bump_monotone") {
        cache.insert("bump_monotone", bump_monitor(record));
    }
    if needs("extinction_decay") {
        let mut rep = MonitorReport::vacuous("extinction_decay", 0.0);
        for snaps in record.snapshots.values() {
            let series: Vec<MaxSample> = snaps.iter().map(MaxSample::of).collect();
            if series.len() >= 2 {
                rep = merge_named(rep, extinction_decay(&series, record.n));
            }
        }
        cache.insert("extinction_decay", rep);
    }
    if ["neck_lower_bound", "blowup_rate", "pole_curvature_bound", "barrier_ordering"].iter().any(|n| needs(n)) {
        let (neck, rate, pole, barrier) = singularity_monitors(record);
        cache.insert("neck_lower_bound", neck);
        cache.insert("blowup_rate", rate);
        cache.insert("pole_curvature_bound", pole);
        cache.insert("barrier_ordering", barrier);
    }
    specs
        .iter()
        .filter_map(|s| {
            let mut rep = cache.get(s.name.as_str())?.clone();
            if let Some(tol) = s.tolerance {
                rep.tolerance = tol;
                rep.pass = rep.margin >= -tol;
            }
            Some(rep)
        })
        .collect()
}

/// Merge keeping the first report's extras and adding the second's.
fn merge_named(a: MonitorReport, b: MonitorReport) -> MonitorReport {
    let extra = b.extra.clone();
    let mut m = a.merge(b);
    for (k, v) in extra {
        m.extra.entry(k).or_insert(v);
    }
    m
}

fn hi_monitor(record: &RunRecord) -> MonitorReport {
    let Some(p0) = record.snapshots.values().next().and_then(|s| s.first()) else {
        return MonitorReport::vacuous("hamilton_ivey", crate::monitors::HI_TOL);
    };
    let scale = match sectional(p0) {
        Ok(cf) => hi_rescale_factor(&cf),
        Err(_) => return failed_report("hamilton_ivey", "curvature_failed"),
    };
    let mut rep = MonitorReport::vacuous("hamilton_ivey", crate::monitors::HI_TOL).with_extra("scale", scale);
    for snaps in record.snapshots.values() {
        for p in snaps {
            match sectional(p) {
                Ok(cf) => rep = rep.merge(hamilton_ivey_scaled(&cf, p.t, scale)),
                Err(_) => rep = merge_named(rep, failed_report("hamilton_ivey", "curvature_failed")),
            }
        }
    }
    rep
}

/// Total bump count over live components at every snapshot time.
fn bump_monitor(record: &RunRecord) -> MonitorReport {
    let deaths: BTreeMap<usize, f64> = record.deaths().into_iter().map(|(id, e)| (id, e.t())).collect();
    let counts: BTreeMap<usize, Vec<(f64, usize)>> =
        record.snapshots.iter().map(|(id, s)| (*id, s.iter().map(|p| (p.t, bump_count_default(p))).collect())).collect();
    let mut times: Vec<f64> = counts.values().flatten().map(|c| c.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut series = Vec::with_capacity(times.len());
    for &t in &times {
        let mut total = 0;
        for (id, c) in &counts {
            if deaths.get(id).is_some_and(|&d| d <= t) {
                continue;
            }
            if let Some(last) = c.iter().take_while(|x| x.0 <= t).last() {
                total += last.1;
            }
        }
        series.push((t, total));
    }
    bump_monotone(&series)
}

fn singularity_monitors(record: &RunRecord) -> (MonitorReport, MonitorReport, MonitorReport, MonitorReport) {
    let mut neck = MonitorReport::vacuous("neck_lower_bound", 0.0);
    let mut rate = MonitorReport::vacuous("blowup_rate", 0.0);
    let mut pole = MonitorReport::vacuous("pole_curvature_bound", 0.0);
    let mut barrier = MonitorReport::vacuous("barrier_ordering", 0.0);
    let deaths = record.deaths();
    let mut unfit_aborted = 0usize;
    for id in record.singular_components() {
        let (Some(snaps), Some(ks)) = (record.snapshots.get(&id), record.k_series.get(&id)) else { continue };
        let aborted = matches!(deaths.get(&id), Some(FlowEvent::Aborted { .. }));
        let fit = match estimate_blowup_time(ks) {
            Ok(f) => f,
            // a run stopped at the first trigger of a component may leave too little history to fit
            Err(_) if aborted => {
                unfit_aborted += 1;
                continue;
            }
            Err(_) => {
                for r in [&mut neck, &mut rate, &mut pole, &mut barrier] {
                    *r = merge_named(r.clone(), failed_report(&r.name.clone(), "fit_failed"));
                }
                continue;
            }
        };
        let t_hat = fit.t_hat;
        neck = match neck_lower_bound(snaps, t_hat) {
            Ok(r) => merge_named(neck, r),
            Err(_) => merge_named(neck, failed_report("neck_lower_bound", "no_bump")),
        };
        rate = merge_named(rate, blowup_rate(ks, t_hat).with_extra("fit_residual", fit.residual));
        match barrier_monitors(snaps, t_hat) {
            Ok((b, p)) => {
                barrier = merge_named(barrier, b);
                pole = merge_named(pole, p);
            }
            Err(e) => {
                let why = match e {
                    FlowError::NoAdmissibleParams(_) => "no_admissible_params",
                    FlowError::NotMonotone(_) => "not_monotone",
                    FlowError::PatchOrderViolated { .. } => "patch_order_violated",
                    _ => "setup_failed",
                };
                barrier = merge_named(barrier, failed_report("barrier_ordering", why));
                pole = merge_named(pole, failed_report("pole_curvature_bound", why));
            }
        }
    }
    if unfit_aborted > 0 {
        let k = unfit_aborted as f64;
        (neck, rate, pole, barrier) = (
            neck.with_extra("unfit_aborted", k),
            rate.with_extra("unfit_aborted", k),
            pole.with_extra("unfit_aborted", k),
            barrier.with_extra("unfit_aborted", k),
        );
    }
    (neck, rate, pole, barrier)
}

/// z_sim − z_* over τ ∈ [τ_start, τ_start + 3], with z_* shifted in τ so
/// that it starts below the first snapshot, and the pole curvature bound
/// that the ordering implies.
fn barrier_monitors(snaps: &[Profile], t_hat: f64) -> Result<(MonitorReport, MonitorReport)> {
    let first = snaps.first().ok_or_else(|| FlowError::FitFailed("no snapshots".into()))?;
    let bp = solve_soliton(first.n, 200.0, 1e-11)?;
    let grid = unit_grid(1000);
    let z0 = horizontal_transform(first, t_hat)?;
    if z0.u_max() < 1.0 {
        return Err(FlowError::NoAdmissibleParams(format!("first snapshot covers u <= {:.4} only", z0.u_max())));
    }
    let params = choose_params(&z0.resample(&grid)?, &bp)?;
    let tau_start = -(t_hat - first.t).ln();
    let mut rep = MonitorReport::vacuous("barrier_ordering", 0.0);
    let mut used = Vec::new();
    for p in snaps.iter().filter(|p| p.t < t_hat) {
        let shift = -(t_hat - p.t).ln() - tau_start;
        if shift > BARRIER_WINDOW + 1e-12 {
            break;
        }
        let z = horizontal_transform(p, t_hat)?;
        let top = z.u_max().min(1.0);
        // u = 0 is the pole, where z = 1 for every smooth metric
        let g: Vec<f64> = grid.iter().cloned().filter(|&u| u > 0.0 && u <= top).collect();
        let zs = build_zstar_on(&params, &bp, params.tau0 + shift, &g)?;
        let r = barrier_ordering(&z.resample(&g)?.pairs(), &zs.table.pairs())?;
        let node = r.node;
        rep = rep.merge(r.at(Some(p.t), node));
        used.push(p.clone());
    }
    let rep = rep
        .with_extra("tau0", params.tau0)
        .with_extra("tau_start", tau_start)
        .with_extra("snapshots", used.len() as f64)
        .with_extra("A1", params.a1)
        .with_extra("A3", params.a3)
        .with_extra("D", params.d)
        .with_extra("t_blowup", t_hat);
    let cfs = used.iter().map(sectional).collect::<Result<Vec<_>>>()?;
    let pole = pole_curvature_bound(&used, &cfs, t_hat, bp.b2, params.a1).with_extra("b2", bp.b2).with_extra("A1", params.a1);
    Ok((rep, pole))
}

/// Rebuilds the record from an output directory; missing files read as empty.
pub fn load_record(dir: &Path) -> Result<(RunConfig, RunRecord)> {
    let cfg = RunConfig::from_toml(&std::fs::read_to_string(dir.join("config.toml"))?)?;
    let mut record = RunRecord { n: cfg.initial.n, ..Default::default() };
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|f| f.to_str()).is_some_and(|f| f.starts_with("snap_") && f.ends_with(".csv")))
        .collect();
    names.sort();
    for path in names {
        let fname = path.file_name().and_then(|f| f.to_str()).unwrap_or_default().to_string();
        let id: usize = fname
            .trim_start_matches("snap_")
            .split('_')
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FlowError::Parse(format!("bad snapshot name {fname}")))?;
        let p = profile_from_csv(&std::fs::read_to_string(&path)?)?;
        record.snapshots.entry(id).or_default().push(p);
    }
    for snaps in record.snapshots.values_mut() {
        snaps.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    if let Ok(text) = std::fs::read_to_string(dir.join("kmax.csv")) {
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(FlowError::Parse(format!("bad kmax row {line}")));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| FlowError::Parse(format!("{s}: {e}")));
            let id: usize = f[0].trim().parse().map_err(|_| FlowError::Parse(format!("bad component in {line}")))?;
            record.k_series.entry(id).or_default().push(KSample { t: num(f[1])?, k_max: num(f[2])?, psi_min: num(f[3])?, psi_max: num(f[4])? });
        }
    }
    if let Ok(text) = std::fs::read_to_string(dir.join("events.jsonl")) {
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            record.events.push(serde_json::from_str(line).map_err(|e| FlowError::Parse(e.to_string()))?);
        }
    }
    Ok((cfg, record))
}

/// Monitor reports recomputed from the files in `dir`.
pub fn replay(dir: &Path) -> Result<Vec<MonitorReport>> {
    let (cfg, record) = load_record(dir)?;
    Ok(compute_monitors(&record, &cfg.monitors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::Family;

    fn sphere_config(dir: &Path, t_max: f64) -> RunConfig {
        RunConfig {
            initial: InitialSpec { family: Family::RoundSphere { radius: 1.0 }, n: 2, grid_size: 101 },
            step: StepControl::default(),
            surgery: None,
            monitors: default_monitors(),
            output_dir: dir.to_path_buf(),
            seed: 7,
            t_max,
        }
    }

    #[test]
    fn zero_horizon_gives_an_immediate_summary() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&sphere_config(dir.path(), 0.0)).unwrap();
        assert_eq!(out.summary.steps, 0);
        assert_eq!(out.summary.exit_code, 0);
        assert_eq!(out.summary.alive, vec![0]);
        assert!(dir.path().join("summary.json").exists());
        assert_eq!(replay(dir.path()).unwrap(), out.reports);
    }

    #[test]
    fn config_roundtrips_through_toml() {
        let mut cfg = sphere_config(Path::new("x"), 1.0);
        cfg.surgery = Some(SurgeryConfig::new(0.1, 0.05));
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        let bad = RunConfig { monitors: vec![MonitorSpec { name: "nope".into(), tolerance: None }], ..cfg };
        assert!(bad.validate().is_err());
    }

    fn dumbbell_config(dir: &Path, cfg: SurgeryConfig) -> RunConfig {
        RunConfig {
            initial: InitialSpec {
                family: Family::Dumbbell { r_left: 1.0, r_right: 1.0, r_neck: 0.25, neck_width: 1.0 },
                n: 2,
                grid_size: 401,
            },
            surgery: Some(cfg),
            ..sphere_config(dir, 2.0)
        }
    }

    #[test]
    fn failed_surgery_leaves_a_diagnostic_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&dumbbell_config(dir.path(), SurgeryConfig::new(0.1, 0.05))).unwrap();
        assert_eq!(out.summary.exit_code, 3);
        assert!(out.summary.error.as_deref().unwrap().contains("no admissible neck"));
        for f in ["last_snapshot.csv", "config.toml", "error.txt"] {
            assert!(dir.path().join("diagnostic").join(f).exists(), "{f}");
        }
        let last = profile_from_csv(&std::fs::read_to_string(dir.path().join("diagnostic/last_snapshot.csv")).unwrap()).unwrap();
        assert_eq!(last.t, out.summary.t_final);
        assert!(matches!(out.record.events.last(), Some(FlowEvent::Aborted { at_trigger: true, component: 0, .. })));
    }

    #[test]
    fn census_changes_only_at_events_and_replay_accepts_prefixes() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = SurgeryConfig::new(0.1, 0.05);
        cfg.require_neck = false;
        cfg.trigger_factor = 1.2;
        let out = run(&dumbbell_config(dir.path(), cfg)).unwrap();
        let mut alive = 1i64;
        for e in &out.record.events {
            match e {
                FlowEvent::Surgery(s) => alive += s.children.len() as i64 - 1,
                FlowEvent::Extinction { .. } | FlowEvent::Singular { .. } => alive -= 1,
                FlowEvent::Aborted { .. } => {}
            }
        }
        assert_eq!(alive, out.state.components.len() as i64);
        assert_eq!(out.summary.surgeries, 1);
        out.state.validate().unwrap();

        // drop the later half of the snapshots and the tail of the series
        let mut snaps: Vec<PathBuf> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("snap_"))
            .collect();
        snaps.sort();
        for p in &snaps[snaps.len() / 2..] {
            std::fs::remove_file(p).unwrap();
        }
        let kmax = std::fs::read_to_string(dir.path().join("kmax.csv")).unwrap();
        let keep: Vec<&str> = kmax.lines().take(kmax.lines().count() / 2).collect();
        std::fs::write(dir.path().join("kmax.csv"), keep.join("\n") + "\n").unwrap();
        std::fs::remove_file(dir.path().join("events.jsonl")).unwrap();
        let reports = replay(dir.path()).unwrap();
        assert_eq!(reports.len(), MONITOR_NAMES.len());
    }

    #[test]
    fn sphere_runs_to_extinction() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&sphere_config(dir.path(), 1.0)).unwrap();
        assert_eq!(out.summary.exit_code, 0, "{:?}", out.summary);
        let t_ext = out.summary.extinction_time.unwrap();
        // ρ² = 1 − 4t reaches 10 mean spacings just before 1/4
        assert!(t_ext < 0.25 && t_ext > 0.2, "{t_ext}");
        assert_eq!(replay(dir.path()).unwrap(), out.reports);
    }
}
