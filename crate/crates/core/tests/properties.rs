use proptest::prelude::*;

use qclab::calibrate::{calibrate_point, calibration_residuals, qc_scalar};
use qclab::connection::{connection_checks, curvature_checks, ConnectionContext};
use qclab::residual::Residual;
use qclab::surface::{catalog, sample_points, CATALOG};
use qclab::verify::report::{emit_report, parse_machine, Format, IdentityRecord, Metadata, ResidualReport, SurfaceSummary};

const EXPECTED_S: [f64; 4] = [2.0, 0.0, -2.0, f64::NAN];

fn context(surface: usize, seed: u64, order: usize) -> ConnectionContext {
    let q = catalog(CATALOG[surface], 1).unwrap();
    let p = sample_points(&q, 1, seed).unwrap().remove(0);
    ConnectionContext::new(calibrate_point(&q, &p, order).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn qc_scalar_is_the_model_constant(surface in 0usize..3, seed in any::<u64>()) {
        let q = catalog(CATALOG[surface], 1).unwrap();
        let p = sample_points(&q, 1, seed).unwrap().remove(0);
        let cal = calibrate_point(&q, &p, 3).unwrap();
        let (s, spread) = qc_scalar(&cal);
        prop_assert!((s - EXPECTED_S[surface]).abs() < 1e-8, "S = {s}");
        prop_assert!(spread < 1e-8);
        let r = calibration_residuals(&cal);
        prop_assert!(r.structure_equations.passes(1e-8));
        prop_assert!(r.df_xi.passes(1e-8));
    }

    #[test]
    fn biquard_torsion_and_sp1(surface in 0usize..4, seed in any::<u64>()) {
        let r = connection_checks(&context(surface, seed, 3));
        prop_assert!(r.torsion_hh.passes(1e-8), "{:?}", r.torsion_hh);
        prop_assert!(r.torsion_vh.passes(1e-8));
        prop_assert!(r.sp1.passes(1e-8));
        prop_assert!(r.metric.passes(1e-8));
    }

    #[test]
    fn curvature_is_conformally_flat(surface in 0usize..4, seed in any::<u64>()) {
        let c = curvature_checks(&context(surface, seed, 3)).unwrap();
        prop_assert!(c.wqc.passes(1e-7), "{:?}", c.wqc);
        prop_assert!(c.pair_symmetry.passes(1e-7));
        prop_assert!(c.ricci_einstein.passes(1e-7));
    }

    #[test]
    fn residual_pass_rule(max in 0.0f64..10.0, terms in prop::collection::vec(-100.0f64..100.0, 0..5), tol in 1e-9f64..1.0) {
        let mut r = Residual::default();
        r.push(max, &terms);
        let scale = terms.iter().fold(1.0f64, |m, t| m.max(t.abs()));
        prop_assert_eq!(r.scale, scale);
        prop_assert_eq!(r.passes(tol), max < tol * scale);
    }

    #[test]
    fn machine_reports_round_trip(
        vals in prop::collection::vec(prop_oneof![any::<f64>(), Just(f64::NAN), Just(f64::INFINITY)], 1..6),
        seed in any::<u64>(),
    ) {
        let records: Vec<IdentityRecord> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| IdentityRecord {
                id: format!("id{i}"),
                anchor: "a = b".into(),
                jet_order: 4,
                max_residual: v,
                scale: 1.0 + i as f64,
                tolerance: 1e-6,
                pass: if v.is_nan() { None } else { Some(v < 1e-6) },
                evaluated: i,
                skipped: 0,
            })
            .collect();
        let r = ResidualReport {
            surface: "x".into(),
            n: 1,
            metadata: Metadata { seed, jet_order: 4, points: 1, wall_time_s: 0.0 },
            summary: SurfaceSummary {
                s_mean: vals[0],
                s_spread: 0.0,
                umbilical_defect_range: [0.0, 1.0],
                f_range: [1.0, 2.0],
                mu_range: [1.0, 8.0],
                grad_f_max: 0.5,
                duchemin_attempts: 1,
                duchemin_failures: 0,
                resampled: 0,
                distribution_excluded: 0,
            },
            records,
            errors: vec![],
            pass: true,
        };
        let back = parse_machine(&emit_report(&r, Format::Machine)).unwrap();
        for (a, b) in r.records.iter().zip(&back.records) {
            prop_assert!(a.max_residual.to_bits() == b.max_residual.to_bits() || (a.max_residual.is_nan() && b.max_residual.is_nan()));
            prop_assert_eq!(a.pass, b.pass);
        }
        prop_assert!(back.summary.s_mean.to_bits() == vals[0].to_bits() || vals[0].is_nan());
    }
}
