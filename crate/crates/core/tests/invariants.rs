//! Property tests for chart-level identities and the rescaling maps.

use kahler_flow::chart::samplers::RadialProfile;
use kahler_flow::chart::{
    assemble_block_metric, hermitian_deviation, invert_block_metric, max_modulus, ricci_blocks, ChartSampler, C64,
};
use kahler_flow::flow::{fubini_study_scalar, reduced_diagnostics, StepRecord};
use kahler_flow::oneill::{a_norm_sq, curvature_diagnostics, CurvatureDiagnostics, FramePoint};
use kahler_flow::singularity::{Pick, RescaledRow};
use kahler_flow::suite::{random_chart, RandomChart};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn chart(seed: u64, n: usize) -> RandomChart {
    random_chart(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn block_inverse_is_an_inverse(seed in any::<u64>(), n in 1usize..=3) {
        let RandomChart { sampler, point } = chart(seed, n);
        let blocks = sampler.blocks(&point).unwrap();
        let g = assemble_block_metric(&blocks).unwrap();
        let inv = invert_block_metric(&blocks).unwrap().to_matrix();
        let err = max_modulus(&(&g * &inv - DMatrix::<C64>::identity(n + 1, n + 1)));
        prop_assert!(err <= 1e-10 * max_modulus(&g).max(1.0), "err {err}");
    }

    #[test]
    fn assembled_metric_and_ricci_are_hermitian(seed in any::<u64>(), n in 1usize..=3) {
        let RandomChart { sampler, point } = chart(seed, n);
        let blocks = sampler.blocks(&point).unwrap();
        let g = assemble_block_metric(&blocks).unwrap();
        prop_assert!(hermitian_deviation(&g) <= 1e-14 * max_modulus(&g));
        let ric = ricci_blocks(&blocks).unwrap().to_matrix();
        prop_assert!(hermitian_deviation(&ric) <= 1e-12 * max_modulus(&ric).max(1.0));
    }

    #[test]
    fn a_norm_is_twice_n_gradient_norm(seed in any::<u64>(), n in 1usize..=3) {
        let RandomChart { sampler, point } = chart(seed, n);
        let fp = FramePoint::new(sampler.blocks(&point).unwrap()).unwrap();
        let expected = 2.0 * n as f64 * fp.grad_ln_f_norm_sq();
        prop_assert!(rel(a_norm_sq(&fp), expected) <= 1e-10);
    }

    #[test]
    fn reduced_diagnostics_match_frame_diagnostics(seed in any::<u64>(), n in 1usize..=3) {
        let RandomChart { sampler, point } = chart(seed, n);
        let fp = FramePoint::new(sampler.blocks(&point).unwrap()).unwrap();
        let full = curvature_diagnostics(&fp).unwrap();
        let jet = sampler.profile.jet(sampler.rho(&point));
        let reduced = reduced_diagnostics(n, sampler.k, fubini_study_scalar(n), jet);
        let scale = full.rm_norm.max(1.0);
        for (a, b) in [
            (reduced.grad_ln_f_norm_sq, full.grad_ln_f_norm_sq),
            (reduced.a_norm_sq, full.a_norm_sq),
            (reduced.vertical_sectional, full.vertical_sectional),
            (reduced.horizontal_sectional, full.horizontal_sectional),
            (reduced.mixed_sectional, full.mixed_sectional),
            (reduced.rm_norm, full.rm_norm),
        ] {
            prop_assert!((a - b).abs() <= 1e-9 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn rescaling_divides_curvature_and_multiplies_area(
        k in 1e-3f64..1e6,
        t in 0.0f64..1.0,
        dt in -0.5f64..0.5,
        rm in 1e-3f64..1e6,
        area in 1e-6f64..10.0,
    ) {
        let d = CurvatureDiagnostics {
            a_norm_sq: 0.3 * rm,
            grad_ln_f_norm_sq: 0.1 * rm,
            vertical_sectional: 0.5 * rm,
            horizontal_sectional: -0.2 * rm,
            mixed_sectional: 0.05 * rm,
            dominant_scalar: rm,
            rm_norm: rm,
        };
        let step = StepRecord {
            step: 7,
            t: t + dt,
            dt: 1e-4,
            lower: 1.0,
            upper: 2.0,
            fiber_scale: 1.0,
            min_f: 1.0,
            max_f: 2.0,
            max_grad_sq: 0.0,
            heat_residual: 0.0,
            tail_slope_error: 0.0,
            argmax_node: 0,
            argmax_rho: 0.0,
            at_max: d,
            horizontal_sectional_max: 0.4 * rm,
            vertical_sectional_max: 0.5 * rm,
            fiber_area: area,
            newton_iterations: 1,
        };
        let pick = Pick { step: 3, t, node: 0, rho: 0.0, curvature: k };
        let row = RescaledRow::new(&step, &pick);
        prop_assert_eq!(row.rm_norm, rm / k);
        prop_assert_eq!(row.a_norm_sq, d.a_norm_sq / k);
        prop_assert_eq!(row.vertical_sectional, d.vertical_sectional / k);
        prop_assert_eq!(row.horizontal_sectional_max, 0.4 * rm / k);
        prop_assert_eq!(row.fiber_area, area * k);
        prop_assert_eq!(row.s, k * (step.t - t));
        // Scale-invariant combinations survive rescaling.
        prop_assert!(rel(row.fiber_area * row.vertical_sectional, area * d.vertical_sectional) <= 1e-14);
    }
}
