//! Property tests for the invariants every module promises.

use proptest::prelude::*;

use crate::bryant::{barrier_closed_forms, bryant_extend, z_ext, ZTable};
use crate::curvature::sectional;
use crate::flow::{MonitorSpec, RunConfig};
use crate::monitors::{
    anderson_chow, bump_count, bump_count_default, hamilton_ivey, hi_ode_algebra, MonitorReport,
};
use crate::profile::{
    build_initial, monitor_constant, profile_from_csv, profile_to_csv, regrid, regrid_with, ArcTable, Family, InitialSpec, Profile,
};
use crate::stencil::Parity;
use crate::evolution::{StepControl, StopRule, evolve};
use crate::state::FlowEvent;
use crate::surgery::SurgeryConfig;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        (0.3f64..3.0).prop_map(|radius| Family::RoundSphere { radius }),
        (0.3f64..2.0, 1.0f64..6.0).prop_map(|(radius, length)| Family::Cylinder { radius, length }),
        (0.6f64..1.5, 0.6f64..1.5, 0.1f64..0.5, 0.0f64..1.5).prop_map(|(r_left, r_right, frac, neck_width)| {
            Family::Dumbbell { r_left, r_right, r_neck: frac * r_left.min(r_right), neck_width }
        }),
    ]
}

fn spec() -> impl Strategy<Value = InitialSpec> {
    (family(), 2usize..5, 101usize..402).prop_map(|(family, n, grid_size)| InitialSpec { family, n, grid_size })
}

/// Families at the 401-node resolution the regrid guarantees are stated for.
fn resolved() -> impl Strategy<Value = InitialSpec> {
    (family(), 2usize..5).prop_map(|(family, n)| InitialSpec { family, n, grid_size: 401 })
}

fn initial() -> impl Strategy<Value = Profile> {
    spec().prop_map(|s| build_initial(&s).unwrap())
}

/// Unit-scale λ, μ spread over a few decades with either sign.
fn eigen() -> impl Strategy<Value = f64> {
    (-3.0f64..3.0, any::<bool>()).prop_map(|(e, neg)| if neg { -(10f64.powf(e)) } else { 10f64.powf(e) })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn built_profiles_are_valid(p in initial()) {
        p.validate().unwrap();
        prop_assert!(p.phi.iter().all(|&v| v > 0.0));
        prop_assert!(p.psi_min_interior() > 0.0);
    }

    #[test]
    fn snapshot_csv_roundtrips_bit_exactly(p in initial()) {
        let back = profile_from_csv(&profile_to_csv(&p, &[])).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn regrid_keeps_length_and_is_idempotent(s in resolved()) {
        let p = build_initial(&s).unwrap();
        let once = regrid(&p, 401).unwrap();
        prop_assert!((once.total_length() / p.total_length() - 1.0).abs() < 1e-4);
        // a second regrid with the same monitor must sample the same function
        let c = monitor_constant(&p).unwrap();
        let a = regrid_with(&p, 401, c).unwrap();
        let twice = regrid_with(&a, 401, c).unwrap();
        let ta = ArcTable::new(&a.x, &a.psi, Parity::Odd, a.topology, a.total_length());
        let sup = twice.x.iter().zip(&twice.psi).map(|(&s, &v)| (ta.value(s) - v).abs()).fold(0.0, f64::max);
        prop_assert!(sup < 1e-8, "sup {}", sup);
    }

    #[test]
    fn bump_count_survives_regrid(s in resolved()) {
        let p = build_initial(&s).unwrap();
        let eps = 1e-6 * p.psi_max();
        let before = bump_count(&p, eps);
        prop_assert_eq!(bump_count(&regrid(&p, 401).unwrap(), eps), before);
    }

    #[test]
    fn scalar_curvature_is_definitional(p in initial()) {
        let cf = sectional(&p).unwrap();
        let n = p.n as f64;
        for i in 0..cf.len() {
            let r = n * cf.lambda[i] + 0.5 * n * (n - 1.0) * cf.mu[i];
            prop_assert_eq!(cf.scalar[i], r);
            prop_assert_eq!(cf.nu[i], cf.lambda[i].min(cf.mu[i]));
        }
    }

    #[test]
    fn monitors_are_pure(p in initial()) {
        let cf = sectional(&p).unwrap();
        prop_assert_eq!(hamilton_ivey(&cf, 0.0), hamilton_ivey(&cf, 0.0));
        prop_assert_eq!(bump_count_default(&p), bump_count_default(&p.clone()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn reaction_identity_is_exact(l in eigen(), m in eigen(), n in 2usize..5) {
        let a = hi_ode_algebra(l, m, n);
        prop_assert!(a.identity_residual < 1e-12, "{:?}", a);
        if let Some(ratio) = a.stated_ratio {
            prop_assert!((ratio - 0.5).abs() < 1e-9, "{}", ratio);
        }
        if let Some(v) = a.case_value {
            prop_assert!(v >= -1e-12, "{}", v);
        }
    }

    #[test]
    fn anderson_chow_holds_for_positive_scalar(l in eigen(), m in eigen(), h0 in -1.0f64..1.0, h1 in -1.0f64..1.0, n in 2usize..7) {
        let nf = n as f64;
        // R is odd in (λ, μ) and the inequality is stated for R > 0
        let r = 2.0 * nf * l + nf * (nf - 1.0) * m;
        prop_assume!(r != 0.0);
        let (l, m) = if r > 0.0 { (l, m) } else { (-l, -m) };
        prop_assume!(h0 * h0 + h1 * h1 > 1e-12);
        let ac = anderson_chow(l, m, h0, h1, n).unwrap();
        prop_assert!(ac.margin() >= -1e-12, "{:?}", ac);
        prop_assert!(ac.t1 >= ac.ratio - 1e-12 * ac.t1.abs().max(1.0), "{:?}", ac);
    }

    #[test]
    fn barrier_profiles_are_positive_and_bounded(u in 1e-3f64..0.999) {
        let (z1, zeta) = barrier_closed_forms(u).unwrap();
        prop_assert!(z1 > 0.0);
        prop_assert!(zeta.is_finite());
        prop_assert_eq!(z_ext(1.0, 2.0, 1.0 + u, 5.0), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extension_fixes_the_identity(d in 0.5f64..5.0, m in 8usize..200) {
        let phi: Vec<(f64, f64)> = (0..=m).map(|k| {
            let r = 0.5 * d + 0.5 * d * k as f64 / m as f64;
            (r, r)
        }).collect();
        for (r, v) in bryant_extend(&phi, d).unwrap() {
            prop_assert_eq!(r, v);
        }
    }

    #[test]
    fn extension_is_affine_in_the_map(d in 0.5f64..5.0, a in 0.0f64..1.0, s1 in 1.01f64..2.0, s2 in 1.01f64..2.0) {
        let grid: Vec<f64> = (0..=100).map(|k| 0.5 * d + 0.5 * d * k as f64 / 100.0).collect();
        let f1: Vec<(f64, f64)> = grid.iter().map(|&r| (r, s1 * r)).collect();
        let f2: Vec<(f64, f64)> = grid.iter().map(|&r| (r, s2 * r + 0.1 * r * r)).collect();
        let mix: Vec<(f64, f64)> = f1.iter().zip(&f2).map(|(p, q)| (p.0, a * p.1 + (1.0 - a) * q.1)).collect();
        let (e1, e2, em) = (bryant_extend(&f1, d).unwrap(), bryant_extend(&f2, d).unwrap(), bryant_extend(&mix, d).unwrap());
        for ((p, q), x) in e1.iter().zip(&e2).zip(&em) {
            let want = a * p.1 + (1.0 - a) * q.1;
            prop_assert!((x.1 - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn resampling_reproduces_nodes(k in 3usize..50) {
        let u: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
        let z: Vec<f64> = u.iter().map(|u| 1.0 - u * u).collect();
        let t = ZTable { u: u.clone(), z: z.clone() };
        prop_assert_eq!(t.resample(&u).unwrap().z, z);
    }

    #[test]
    fn monitor_merge_keeps_the_worst(a in -1.0f64..1.0, b in -1.0f64..1.0, tol in 0.0f64..0.5) {
        let m = MonitorReport::new("x", a, tol).merge(MonitorReport::new("x", b, tol));
        prop_assert_eq!(m.margin, a.min(b));
        prop_assert_eq!(m.pass, a.min(b) >= -tol);
    }

    #[test]
    fn run_config_roundtrips(seed in 0..=i64::MAX as u64, t_max in 0.0f64..10.0, r in 0.01f64..1.0, delta in 0.01f64..0.1, tol in proptest::option::of(0.0f64..1.0)) {
        let cfg = RunConfig {
            initial: InitialSpec { family: Family::RoundSphere { radius: 1.0 }, n: 2, grid_size: 101 },
            step: StepControl::default(),
            surgery: Some(SurgeryConfig::new(r, delta)),
            monitors: vec![MonitorSpec { name: "hamilton_ivey".into(), tolerance: tol }],
            output_dir: "out".into(),
            seed,
            t_max,
        };
        prop_assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn events_roundtrip_through_json(t in 0.0f64..1.0, c in 0usize..100, dt in 1e-16f64..1e-10) {
        for e in [
            FlowEvent::Extinction { t, component: c, psi_max: dt },
            FlowEvent::Singular { t, component: c, dt },
            FlowEvent::Aborted { t, component: c, at_trigger: true, error: "x".into() },
        ] {
            let back: FlowEvent = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
            prop_assert_eq!(back.ends(), c);
            prop_assert_eq!(back, e);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Max principle: the largest orbit never grows, and shrinks at least at
    /// the interior rate when the maximum is interior.
    #[test]
    fn max_orbit_radius_never_grows(radius in 0.5f64..1.5, n in 2usize..4) {
        let p = build_initial(&InitialSpec { family: Family::RoundSphere { radius }, n, grid_size: 101 }).unwrap();
        let ctl = StepControl { snapshot_every: 0.02 * radius * radius, ..StepControl::default() };
        let t_end = 0.2 * radius * radius / n as f64;
        let tr = evolve(&p, &ctl, &StopRule { t_end, rho_trigger: None, extinction_psi: None }).unwrap();
        let maxes: Vec<f64> = tr.snapshots.iter().map(|s| s.psi_max()).collect();
        prop_assert!(maxes.windows(2).all(|w| w[1] <= w[0]), "{:?}", maxes);
    }
}
