//! Flow runs checked against closed forms, an independent endpoint oracle and
//! direct scans of the final profile.

use kahler_flow::flow::oracle::free_endpoint_rates;
use kahler_flow::flow::{
    linear_fit, node_diagnostics, product_closed_form, run_flow, run_product, FlowRun, HirzebruchParams, ProductParams,
    Recording, SolverOptions, StopReason,
};
use kahler_flow::singularity::{
    classify_type, pick_blowup_sequence, rescale_series, splitting_report, AnalysisOptions, Classification,
};
use std::f64::consts::PI;
use std::sync::OnceLock;

fn hirzebruch() -> &'static FlowRun {
    static RUN: OnceLock<FlowRun> = OnceLock::new();
    RUN.get_or_init(|| run_flow(&HirzebruchParams::default(), &SolverOptions::default(), &Recording::default()).unwrap())
}

fn product_params() -> ProductParams {
    ProductParams {
        n: 1,
        f0: 3.0,
        c0: 1.0,
        r_h: 2.0,
    }
}

fn product() -> FlowRun {
    run_product(&product_params(), &SolverOptions::default(), &Recording::default()).unwrap()
}

#[test]
fn product_follows_closed_form_with_round_fiber() {
    let run = product();
    assert_eq!(run.stop_reason, StopReason::ReachedMargin);
    for s in &run.steps {
        let (f, c, _) = product_closed_form(&product_params(), s.t).unwrap();
        assert!((s.max_f - f).abs() <= 1e-12 && (s.fiber_scale - c).abs() <= 1e-12);
        assert_eq!(s.at_max.a_norm_sq, 0.0);
        let gauss_bonnet = s.at_max.vertical_sectional * s.fiber_area / (4.0 * PI);
        assert!((gauss_bonnet - 1.0).abs() <= 1e-12, "{gauss_bonnet}");
    }
    let opts = AnalysisOptions::default();
    let seq = pick_blowup_sequence(&run, &opts).unwrap();
    let rs = rescale_series(&run, &seq, &opts).unwrap();
    let report = splitting_report(&rs, &run, &opts);
    assert_eq!(report.a_exponent, None);
    assert!(report.a_decays && report.fiber_round);
}

#[test]
fn constant_rescaled_a_does_not_split() {
    let mut run = product();
    for s in &mut run.steps {
        s.at_max.a_norm_sq = 0.25 * s.at_max.rm_norm;
    }
    let opts = AnalysisOptions::default();
    let seq = pick_blowup_sequence(&run, &opts).unwrap();
    let rs = rescale_series(&run, &seq, &opts).unwrap();
    let report = splitting_report(&rs, &run, &opts);
    assert!(report.a_exponent.unwrap().abs() <= 1e-9);
    assert!(!report.a_decays && !report.splits);
}

#[test]
fn endpoints_match_the_free_endpoint_oracle() {
    let params = HirzebruchParams {
        grid_points: 256,
        ..HirzebruchParams::default()
    };
    let oracle = free_endpoint_rates(&params, 0.2, 2e-3).unwrap();
    let opts = SolverOptions {
        end_time: Some(0.2),
        ..SolverOptions::default()
    };
    let rec = Recording {
        structure_checks: false,
        ..Recording::default()
    };
    let run = run_flow(&params, &opts, &rec).unwrap();
    let fit = |f: &dyn Fn(&kahler_flow::flow::StepRecord) -> f64| {
        linear_fit(&run.steps.iter().map(|s| (s.t, f(s))).collect::<Vec<_>>()).unwrap().0
    };
    let k = params.kf();
    for (solver, oracle) in [
        (fit(&|s| k * s.lower), oracle.lower_rate),
        (fit(&|s| k * s.upper), oracle.upper_rate),
        (fit(&|s| k * (s.upper - s.lower)), oracle.width_rate),
    ] {
        assert!((solver / oracle - 1.0).abs() <= 0.02, "{solver} vs {oracle}");
    }
}

#[test]
fn fiber_width_shrinks_linearly_to_the_predicted_time() {
    let run = hirzebruch();
    assert_eq!(run.stop_reason, StopReason::ReachedMargin);
    let (slope, _) = linear_fit(&run.steps.iter().map(|s| (s.t, s.upper - s.lower)).collect::<Vec<_>>()).unwrap();
    assert!((slope + 2.0).abs() <= 0.04, "{slope}");
    let ratio = run.t_observed.unwrap() / run.t_predicted;
    assert!((ratio - 1.0).abs() <= 0.02, "{ratio}");
    assert!(run.steps.iter().all(|s| s.min_f >= s.lower && s.max_f <= s.upper));
}

#[test]
fn recorded_maximum_matches_a_direct_scan() {
    let run = hirzebruch();
    let params = HirzebruchParams::default();
    let state = run.final_state.as_ref().unwrap();
    let last = run.steps.last().unwrap();
    let threshold = SolverOptions::default().window_threshold;
    let (node, rm) = (0..state.w.len())
        .filter_map(|j| node_diagnostics(&params, state, j, threshold).map(|d| (j, d.rm_norm)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert_eq!(node, last.argmax_node);
    assert_eq!(rm, last.max_rm());
}

#[test]
fn picks_grow_and_survive_downsampling() {
    let run = hirzebruch();
    let opts = AnalysisOptions::default();
    let increasing = |run: &FlowRun| {
        let seq = pick_blowup_sequence(run, &opts).unwrap();
        assert!(seq.picks.len() >= opts.min_picks);
        for w in seq.picks.windows(2) {
            assert!(w[1].t > w[0].t);
            assert!(w[1].curvature >= opts.growth * w[0].curvature);
        }
    };
    increasing(run);
    let mut thin = run.clone();
    thin.steps = run.steps.iter().step_by(3).copied().collect();
    increasing(&thin);
    assert_eq!(classify_type(&thin, &opts).classification, Classification::TypeI);
}

#[test]
fn rescaled_curvature_is_one_at_each_pick() {
    let run = hirzebruch();
    let opts = AnalysisOptions::default();
    let seq = pick_blowup_sequence(run, &opts).unwrap();
    let rs = rescale_series(run, &seq, &opts).unwrap();
    for p in &rs.picks {
        assert_eq!(p.at_pick.s, 0.0);
        assert!((p.at_pick.rm_norm - 1.0).abs() <= 1e-15);
        assert!(p.rows.iter().all(|r| r.s >= -p.beta - 1e-9 && r.s <= p.alpha + 1e-9));
    }
}

#[test]
fn heat_residual_is_second_order_in_spacing() {
    let probe = |grid_points: usize| {
        let params = HirzebruchParams {
            grid_points,
            ..HirzebruchParams::default()
        };
        let opts = SolverOptions {
            probe_time: Some(0.1),
            end_time: Some(0.15),
            ..SolverOptions::default()
        };
        let rec = Recording {
            structure_checks: false,
            ..Recording::default()
        };
        let run = run_flow(&params, &opts, &rec).unwrap();
        let s = run.steps.iter().find(|s| (s.t - 0.1).abs() < 1e-12).unwrap();
        (params.spacing(), s.heat_residual)
    };
    let (h1, r1) = probe(256);
    let (h2, r2) = probe(512);
    let order = (r1 / r2).ln() / (h1 / h2).ln();
    assert!(order >= 1.9, "order {order}");
}
