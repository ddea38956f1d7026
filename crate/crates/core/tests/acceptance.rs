//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use kahler_flow::flow::{
    linear_fit, product_closed_form, run_flow, run_product, FlowRun, HirzebruchParams, ProductParams, Recording,
    SolverOptions, StopReason,
};
use kahler_flow::harness::{analyze, evaluate_checks, parse_config, run_suites, CheckStatus, RunConfig};
use kahler_flow::singularity::{
    classify_type, pick_blowup_sequence, rescale_series, splitting_report, AnalysisOptions, Classification,
};
use kahler_flow::suite::{a_identity_suite, block_identity_suite, einstein_suite};
use std::process::ExitCode;
use std::time::Instant;

const SEED: u64 = 20240601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let clock = Instant::now();
    let out = f();
    (out, clock.elapsed().as_secs_f64())
}

fn product_params() -> ProductParams {
    ProductParams {
        n: 1,
        f0: 3.0,
        c0: 1.0,
        r_h: 2.0,
    }
}

fn product_run() -> (FlowRun, f64) {
    timed(|| run_product(&product_params(), &SolverOptions::default(), &Recording::default()).unwrap())
}

fn hirzebruch_params() -> HirzebruchParams {
    HirzebruchParams {
        n: 1,
        k: 1,
        a0: 1.0,
        b0: 2.0,
        grid_points: 512,
        ..HirzebruchParams::default()
    }
}

fn hirzebruch_run() -> (FlowRun, f64) {
    timed(|| run_flow(&hirzebruch_params(), &SolverOptions::default(), &Recording::default()).unwrap())
}

fn c1_product_closed_form() -> Outcome {
    let (run, secs) = product_run();
    let mut err: f64 = 0.0;
    for s in &run.steps {
        let t = s.t;
        err = err.max((s.max_f - (3.0 - 2.0 * t)).abs()).max((s.fiber_scale - (1.0 - 2.0 * t)).abs());
        let (f, c, _) = product_closed_form(&product_params(), t).unwrap();
        err = err.max((f - (3.0 - 2.0 * t)).abs()).max((c - (1.0 - 2.0 * t)).abs());
    }
    let t_obs = run.t_observed.unwrap_or(f64::NAN);
    let pass = err <= 1e-6 && (t_obs - 0.5).abs() <= 1e-3 && secs < 5.0;
    outcome(pass, format!("max error {err:.2e}, T_observed {t_obs:.6}, {secs:.3} s"))
}

fn c2_type_i_plateau() -> Outcome {
    let (run, secs) = product_run();
    let t_ref = 0.5;
    let last = run.steps.last().unwrap();
    let gap = t_ref - last.t;
    let decade: Vec<f64> = run
        .steps
        .iter()
        .filter(|s| t_ref - s.t <= 10.0 * gap)
        .map(|s| (t_ref - s.t) * s.max_rm())
        .collect();
    let worst = decade.iter().map(|p| (p / 2.0 - 1.0).abs()).fold(0.0, f64::max);
    let report = classify_type(&run, &AnalysisOptions::default());
    let pass = !decade.is_empty() && worst <= 0.05 && report.classification == Classification::TypeI && secs < 5.0;
    outcome(
        pass,
        format!(
            "(T-t) max|Rm| over last decade within {:.3}% of 2 ({} steps), plateau {:.5}, {:?}, {secs:.3} s",
            100.0 * worst,
            decade.len(),
            report.plateau_value,
            report.classification
        ),
    )
}

fn c3_hirzebruch_collapse() -> Outcome {
    let (run, secs) = hirzebruch_run();
    let params = hirzebruch_params();
    let widths: Vec<(f64, f64)> = run.steps.iter().map(|s| (s.t, params.kf() * (s.upper - s.lower))).collect();
    let slope = linear_fit(&widths).unwrap().0;
    let ratio = run.t_observed.unwrap_or(f64::NAN) / run.t_predicted;
    let class = classify_type(&run, &AnalysisOptions::default()).classification;
    let pass = run.stop_reason == StopReason::ReachedMargin
        && (slope / -2.0 - 1.0).abs() <= 0.02
        && (0.98..=1.02).contains(&ratio)
        && class == Classification::TypeI
        && secs < 60.0;
    outcome(
        pass,
        format!("width slope {slope:.6}, T_observed/T_predicted {ratio:.6}, {class:?}, {secs:.3} s"),
    )
}

fn c4_block_identities() -> Outcome {
    let r = block_identity_suite(20, SEED).unwrap();
    let pass = r.ricci <= 1e-4 && r.compatibility <= 1e-8 && r.totally_geodesic <= 1e-8 && r.mixed <= 1e-3;
    outcome(
        pass,
        format!(
            "Ricci rel {:.2e}, compatibility {:.2e}, totally geodesic {:.2e}, mixed {:.2e} over {} points",
            r.ricci, r.compatibility, r.totally_geodesic, r.mixed, r.samples
        ),
    )
}

fn c5_a_identity() -> Outcome {
    let worst = a_identity_suite(100, SEED).unwrap();
    outcome(worst <= 1e-8, format!("worst relative error {worst:.2e} over 100 frame points"))
}

fn c6_rescaling_laws() -> Outcome {
    let (run, _) = hirzebruch_run();
    let opts = AnalysisOptions::default();
    let seq = pick_blowup_sequence(&run, &opts).unwrap();
    let rs = rescale_series(&run, &seq, &opts).unwrap();
    let sr = splitting_report(&rs, &run, &opts);
    let band = |e: Option<f64>| e.is_some_and(|e| (e + 1.0).abs() <= 0.1);
    let a = sr.a_exponent.unwrap_or(f64::NAN);
    let h = sr.horizontal_exponent.unwrap_or(f64::NAN);
    outcome(
        band(sr.a_exponent) && band(sr.horizontal_exponent),
        format!(
            "rescaled |A|^2 exponent {a:.3}, horizontal exponent {h:.3} over {} picks (rescaled |A| exponent {:.3})",
            rs.picks.len(),
            0.5 * a
        ),
    )
}

fn sweep_residual(grid_points: usize) -> (f64, f64) {
    let params = HirzebruchParams {
        grid_points,
        ..hirzebruch_params()
    };
    let opts = SolverOptions {
        probe_time: Some(0.1),
        end_time: Some(0.2),
        ..SolverOptions::default()
    };
    let rec = Recording {
        structure_checks: false,
        ..Recording::default()
    };
    let run = run_flow(&params, &opts, &rec).unwrap();
    let s = run.steps.iter().find(|s| (s.t - 0.1).abs() <= 1e-12).unwrap();
    (params.spacing(), s.heat_residual)
}

fn c7_monitors() -> Outcome {
    let probes: Vec<(f64, f64)> = [128, 256, 512, 1024].into_iter().map(sweep_residual).collect();
    let logs: Vec<(f64, f64)> = probes.iter().map(|(h, r)| (h.ln(), r.ln())).collect();
    let order = linear_fit(&logs).unwrap().0;

    let config: RunConfig = parse_config("scenario = \"hirzebruch\"\n").unwrap();
    let (run, _) = hirzebruch_run();
    let analysis = analyze(&run, &config.analysis);
    let suites = run_suites(&config);
    let checks = evaluate_checks(&config, &run, &analysis, &suites);
    let monitors = ["max_f_drift", "min_f_floor", "gradient_bound"];
    let mut pass = order >= 1.9;
    let mut parts = vec![format!("heat residual order {order:.3}")];
    for m in monitors {
        let c = &checks[m];
        pass &= c.status == CheckStatus::Pass;
        parts.push(format!(
            "{m} {} ({})",
            c.value.map_or("-".into(), |v| format!("{v:.3e}")),
            if c.status == CheckStatus::Pass { "ok" } else { "fail" }
        ));
    }
    outcome(pass, parts.join(", "))
}

fn c8_einstein_detector() -> Outcome {
    let r = einstein_suite(2, 0.3, 20, SEED).unwrap();
    outcome(
        r.fubini_study_max <= 1e-10 && r.perturbed_min >= 1e-3,
        format!(
            "Fubini-Study residual {:.2e}, perturbed residual min {:.3e}",
            r.fubini_study_max, r.perturbed_min
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("C1 product closed form", c1_product_closed_form),
        ("C2 type I plateau", c2_type_i_plateau),
        ("C3 hirzebruch fiber collapse", c3_hirzebruch_collapse),
        ("C4 block identities", c4_block_identities),
        ("C5 A-tensor identity", c5_a_identity),
        ("C6 rescaling laws", c6_rescaling_laws),
        ("C7 monitor suite", c7_monitors),
        ("C8 einstein detector", c8_einstein_detector),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
