mod common;

use std::collections::HashMap;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tpia_core::analysis::{solve_power_flow, solve_tpia, Objective, SolutionReport};
use tpia_core::engine::{diode_limit, SolverSettings};
use tpia_core::ingest::{parse_canonical, parse_glm_subset, write_canonical};
use tpia_core::model::Phase;
use tpia_core::stamp::{load_jacobian_check, stamp_linear};
use tpia_core::synthetic::{four_bus_with_load, two_bus_analog};

use common::{decorated_network, small_feeder};

fn report_voltages(report: &SolutionReport) -> HashMap<(String, Phase), Complex64> {
    report
        .node_phases
        .iter()
        .map(|r| ((r.bus.clone(), r.phase), Complex64::new(r.v_re, r.v_im)))
        .collect()
}

const GLM_TOKENS: &[&str] = &[
    "object", "node", "load", "overhead_line", "transformer", "switch", "line_configuration",
    "transformer_configuration", "{", "}", ";", "name", "phases", "ABCN", "AN", "from", "to",
    "length", "configuration", "nominal_voltage", "7200", "constant_power_A", "1e5+2e4j", "z11",
    "0.3+0.6j", "bustype", "SWING", "module", "clock", "#set", "#include", "\"", "//", "\n", " ",
    "-", "1e308", "nan", "status", "OPEN", "power_rating", "impedance", "connect_type", "WYE_WYE",
    "primary_voltage", "secondary_voltage", ":", "node:1",
];

fn glm_soup() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(GLM_TOKENS), 0..80).prop_map(|t| t.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn admittance_matrices_are_symmetric(seed in any::<u64>(), n in 2usize..30, tap in 0.9f64..1.1) {
        let net = decorated_network(seed, n, tap, false);
        let y = stamp_linear(&net);
        for m in [&y.g, &y.b] {
            let scale = m.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let d = m.to_dense();
            for i in 0..d.len() {
                for j in 0..i {
                    prop_assert!((d[i][j] - d[j][i]).abs() <= 1e-12 * scale, "({i},{j}) {} vs {}", d[i][j], d[j][i]);
                }
            }
        }
    }

    #[test]
    fn load_jacobian_matches_central_differences(
        mag in 0.5f64..1.5,
        angle in -std::f64::consts::PI..std::f64::consts::PI,
        p in -5.0f64..5.0,
        q in -5.0f64..5.0,
    ) {
        let err = load_jacobian_check(mag * angle.cos(), mag * angle.sin(), p, q, 1e-6).unwrap();
        prop_assert!(err <= 1e-6, "relative error {err}");
    }

    #[test]
    fn diode_limit_keeps_a_fraction_of_each_variable(
        pairs in prop::collection::vec((1e-8f64..10.0, -100.0f64..100.0), 0..40),
        sigma in 0.5f64..0.999,
    ) {
        let (v, d): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let alpha = diode_limit(&v, &d, sigma);
        prop_assert!(alpha > 0.0 && alpha <= 1.0);
        for (x, dx) in v.iter().zip(&d) {
            let next = x + alpha * dx;
            prop_assert!(next >= (1.0 - sigma) * x * (1.0 - 1e-12), "{x} + {alpha}·{dx} = {next}");
        }
    }

    #[test]
    fn canonical_round_trip_is_exact(seed in any::<u64>(), n in 2usize..25, tap in 0.9f64..1.1, open in any::<bool>()) {
        let net = decorated_network(seed, n, tap, open);
        prop_assert!(net.validate().is_empty(), "{:?}", net.validate());
        let text = write_canonical(&net);
        let back = parse_canonical(&text).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(write_canonical(&back), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn balanced_four_bus_voltages_are_symmetric(p_kw in 100.0f64..2500.0, pf in 0.85f64..1.0) {
        let q_kvar = p_kw * (1.0 - pf * pf).sqrt() / pf;
        let report = solve_power_flow(&four_bus_with_load(p_kw, q_kvar), &SolverSettings::default());
        prop_assert!(report.converged);
        let v = report_voltages(&report);
        let rotate = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI / 3.0);
        for bus in ["n2", "n3", "n4"] {
            let a = v[&(bus.to_string(), Phase::A)];
            let b = v[&(bus.to_string(), Phase::B)];
            let c = v[&(bus.to_string(), Phase::C)];
            prop_assert!((b - a * rotate).norm() <= 1e-8 * a.norm());
            prop_assert!((c - b * rotate).norm() <= 1e-8 * a.norm());
        }
    }

    #[test]
    fn element_order_does_not_change_power_flow(seed in any::<u64>(), shuffle in any::<u64>(), n in 3usize..30) {
        let net = small_feeder(seed, n);
        let mut permuted = net.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
        permuted.buses.shuffle(&mut rng);
        permuted.branches.shuffle(&mut rng);
        permuted.loads.shuffle(&mut rng);
        let settings = SolverSettings::default();
        let a = solve_power_flow(&net, &settings);
        let b = solve_power_flow(&permuted, &settings);
        prop_assert!(a.converged && b.converged);
        let (va, vb) = (report_voltages(&a), report_voltages(&b));
        prop_assert_eq!(va.len(), vb.len());
        for (key, bus) in &va {
            let base = net.bus(&key.0).unwrap().nominal_voltage;
            prop_assert!((bus - vb[key]).norm() <= 1e-8 * base, "{key:?}");
        }
    }

    #[test]
    fn reclassification_changes_only_flags(p in 2.6f64..6.0, threshold in 1e-6f64..2.0) {
        let report = solve_tpia(&two_bus_analog(p, 10.0), Objective::LeastSquares, None, &SolverSettings::default(), None).unwrap();
        prop_assert!(report.converged);
        let moved = report.with_threshold(threshold);
        let expected = report.node_phases.iter().filter(|r| r.if_mag_pu > threshold).count();
        prop_assert_eq!(moved.nonzero_node_phases, expected);
        for (x, y) in report.node_phases.iter().zip(&moved.node_phases) {
            prop_assert_eq!((x.if_re, x.if_im, x.v_re, x.v_im), (y.if_re, y.if_im, y.v_re, y.v_im));
            prop_assert_eq!(y.flagged, y.if_mag_pu > threshold);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn glm_reader_never_panics_on_bytes(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = parse_glm_subset(&bytes);
    }

    #[test]
    fn glm_reader_never_panics_on_token_soup(text in glm_soup()) {
        let _ = parse_glm_subset(text.as_bytes());
    }

    #[test]
    fn canonical_reader_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = parse_canonical(&String::from_utf8_lossy(&bytes));
    }
}
