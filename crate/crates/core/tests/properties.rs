use perfunc_core::analysis::{classify_mt_trend, trace_contours, ContourSource, GridSpec, Trend, CONTOUR_TOLERANCE};
use perfunc_core::fitting::{evaluate_fit, fit_amue, fit_gpr, FitOptions, Split};
use perfunc_core::ingest::{read_observations, write_observations, ExperimentContext, Observation, ObservationSet, Schema};
use perfunc_core::model::{AmueParams, CostModel, RealizableRegion, EXPONENT_CAP};
use perfunc_core::render::PlotFrame;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = AmueParams> {
    (0.0..50.0f64, 0.05..3.0f64, 0.05..0.9f64, 0.05..3.0f64, 0.05..0.9f64)
        .prop_map(|(a, b, c, d, e)| AmueParams::new(a, b, c, d, e).unwrap())
}

fn costs() -> impl Strategy<Value = CostModel> {
    (0.001..0.05f64, 0.005..1.0f64).prop_map(|(c_t, r)| CostModel::from_ratio(c_t, r).unwrap())
}

fn observation_set() -> impl Strategy<Value = ObservationSet> {
    proptest::collection::btree_map((0u32..40, 0u32..40), 1.5..100.0f64, 1..30).prop_map(|cells| {
        let ctx = ExperimentContext::new("sw", "en", 4000).unwrap();
        let obs = cells
            .into_iter()
            .map(|((t, m), pi)| Observation::new(t as f64 * 100.0, m as f64 * 50.0, pi))
            .collect();
        ObservationSet::new(ctx, obs).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tangency_beats_isoperf_perturbations(p in params(), cm in costs(), d in 0.5..30.0f64, shifts in proptest::collection::vec(-0.9..3.0f64, 16)) {
        let level = p.a_zs() + d;
        let best = p.tangency_point(&cm, level).unwrap();
        for s in shifts {
            let t = best.t * (1.0 + s);
            if let Some(m) = p.isoperf_m_of_t(level, t).unwrap() {
                prop_assert!(cm.total_cost(t, m).unwrap() >= best.cost * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn boundary_rule(p in params(), cm in costs(), d in 0.5..30.0f64, share in 0.01..0.99f64) {
        let level = p.a_zs() + d;
        let free = p.tangency_point(&cm, level).unwrap();
        let region = RealizableRegion::new(free.t * share).unwrap();
        let bound = p.least_cost_point(&cm, &region, level).unwrap();
        prop_assert_eq!(bound.t, region.p_max());
        prop_assert!(bound.on_boundary);
        prop_assert!(bound.cost >= free.cost);
    }

    #[test]
    fn mt_ratio_follows_closed_form(p in params(), cm in costs()) {
        let class = classify_mt_trend(&p, 0.0);
        let r = |t: f64| p.expansion_path_m_of_t(&cm, t).unwrap() / t;
        let (a, b) = (r(10.0), r(1000.0));
        match class.trend {
            Trend::Increasing => prop_assert!(b > a),
            Trend::Decreasing => prop_assert!(b < a),
            Trend::Constant => prop_assert!((b - a).abs() <= 1e-9 * a),
        }
    }

    #[test]
    fn traced_contours_meet_tolerance(p in params(), d in 1.0..20.0f64) {
        let level = p.a_zs() + d;
        let grid = GridSpec::new(5000.0, 5000.0, 41, 41).unwrap();
        for c in trace_contours(&|t, m| p.eval(t, m).unwrap(), level, &grid, ContourSource::Amue) {
            for (t, m) in c.vertices {
                prop_assert!((p.eval(t, m).unwrap() - level).abs() <= CONTOUR_TOLERANCE);
            }
        }
    }

    #[test]
    fn frame_round_trips(x0 in -1e4..1e4f64, w in 1e-3..1e5f64, y0 in -1e4..1e4f64, h in 1e-3..1e5f64, u in 0.0..1.0f64, v in 0.0..1.0f64) {
        let frame = PlotFrame::new((x0, x0 + w), (y0, y0 + h)).unwrap();
        let (x, y) = (x0 + u * w, y0 + v * h);
        let (px, py) = frame.to_px(x, y);
        let (bx, by) = frame.from_px(px, py);
        prop_assert!((bx - x).abs() <= 1e-6 && (by - y).abs() <= 1e-6);
    }

    #[test]
    fn write_read_round_trip(set in observation_set()) {
        let mut buffer = Vec::new();
        write_observations(&mut buffer, std::slice::from_ref(&set)).unwrap();
        let report = read_observations(buffer.as_slice(), &Schema::default()).unwrap();
        prop_assert_eq!(report.sets.len(), 1);
        prop_assert_eq!(&report.sets[0], &set);
    }

    #[test]
    fn aggregation_is_idempotent(set in observation_set()) {
        let once = set.aggregate_seeds();
        prop_assert_eq!(once.aggregate_seeds(), once);
    }

    #[test]
    fn rejected_rows_are_itemised(good in 1usize..20, bad in 0usize..10) {
        let mut text = String::from("language,pivot_size,translated_size,manual_size,f1\n");
        for i in 0..good {
            text.push_str(&format!("sw,1000,{},{},55.5\n", i * 10, i));
        }
        for i in 0..bad {
            // Alternate between t > pivot size and a performance above 100.
            if i % 2 == 0 {
                text.push_str(&format!("sw,1000,{},0,50\n", 2000 + i));
            } else {
                text.push_str("sw,1000,0,0,120\n");
            }
        }
        let report = read_observations(text.as_bytes(), &Schema::default()).unwrap();
        prop_assert_eq!(report.rows_read, good + bad);
        prop_assert_eq!(report.accepted() + report.rejects.len(), report.rows_read);
        prop_assert_eq!(report.rejects.len(), bad);
    }

    #[test]
    fn r2_identity(set in observation_set(), a in 30.0..60.0f64, b in -0.01..0.01f64) {
        let report = evaluate_fit(&|t: f64, m: f64| a + b * (t + m), &set, Split::Test);
        let ys = set.targets();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
        let total: usize = report.per_setup.values().map(|m| m.count).sum();
        prop_assert_eq!(total, set.len());
        prop_assert!(report.overall.rmse >= 0.0);
        match report.overall.r2 {
            Some(r2) => {
                prop_assert!(r2 <= 1.0);
                prop_assert!((r2 - (1.0 - report.overall.rmse.powi(2) * ys.len() as f64 / ss_tot)).abs() <= 1e-12 * (1.0 + r2.abs()));
            }
            None => prop_assert_eq!(ss_tot, 0.0),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn fitted_params_respect_bounds(set in observation_set().prop_filter("enough points", |s| s.len() >= 5 && s.iter().any(|o| o.t != s.observations()[0].t || o.m != s.observations()[0].m))) {
        let (p, _) = fit_amue(&set, &FitOptions { restarts: 3, ..FitOptions::default() }).unwrap();
        for v in [p.a_zs(), p.a_t(), p.a_m()] {
            prop_assert!(v >= 0.0);
        }
        for v in [p.alpha_t(), p.alpha_m()] {
            prop_assert!((0.0..=EXPONENT_CAP).contains(&v));
        }
    }

    #[test]
    fn gpr_variance_is_non_negative(set in observation_set(), queries in proptest::collection::vec((0.0..1e4f64, 0.0..5e3f64), 10)) {
        let model = fit_gpr(&set, &FitOptions { restarts: 2, ..FitOptions::default() }).unwrap();
        for (t, m) in queries {
            prop_assert!(model.predict(t, m).variance >= 0.0);
        }
        for o in &set {
            prop_assert!(model.predict(o.t, o.m).variance >= model.noise_variance());
        }
    }
}

#[test]
fn fits_are_bit_identical_across_runs() {
    let truth = AmueParams::new(40.0, 0.5, 0.4, 2.0, 0.3).unwrap();
    let ctx = ExperimentContext::new("sw", "en", 5000).unwrap();
    let obs: Vec<Observation> = (0..30)
        .map(|i| {
            let (t, m) = ((i % 6) as f64 * 700.0, (i / 6) as f64 * 300.0);
            Observation::new(t, m, truth.eval(t, m).unwrap() + ((i * 37) % 11) as f64 * 0.1)
        })
        .collect();
    let set = ObservationSet::new(ctx, obs).unwrap();
    let options = FitOptions { rng_seed: 11, ..FitOptions::default() };
    let a = fit_amue(&set, &options).unwrap();
    let b = fit_amue(&set, &options).unwrap();
    assert_eq!(a, b);
    let g1 = fit_gpr(&set, &options).unwrap();
    let g2 = fit_gpr(&set, &options).unwrap();
    assert_eq!(g1.hyperparameters(), g2.hyperparameters());
    assert_eq!(g1.dual_weights(), g2.dual_weights());
}

#[test]
fn traced_contour_resolves_steep_manual_term_near_zero() {
    let p = AmueParams::new(0.0, 0.5321767599432132, 0.4134985146025959, 1.0244338469367926, 0.05).unwrap();
    let level = 5.246539451140027;
    let grid = GridSpec::new(5000.0, 5000.0, 41, 41).unwrap();
    let contours = trace_contours(&|t, m| p.eval(t, m).unwrap(), level, &grid, ContourSource::Amue);
    assert!(!contours.is_empty());
    for c in contours {
        for (t, m) in c.vertices {
            assert!((p.eval(t, m).unwrap() - level).abs() <= CONTOUR_TOLERANCE);
        }
    }
}
