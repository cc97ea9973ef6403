use divhjb::asymptotics::{asymptotic_rate, asymptotic_slope};
use divhjb::config::RunConfig;
use divhjb::hjb::{curvature_rhs, solve_value_function, Classification};
use divhjb::io::{read_search_csv, read_solution_csv, write_search_csv, write_solution_csv};
use divhjb::model::{ModelParams, UtilitySpec};
use divhjb::numerics::{fit_linear, fit_power, IvpConfig};
use divhjb::shooting::{CandidateEvaluation, Label};
use divhjb::{Error, HjbSolution};
use proptest::prelude::*;

const SQRT: UtilitySpec = UtilitySpec::Power { alpha: 0.5 };

fn params() -> ModelParams {
    ModelParams::reference()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn power_curvature_matches_direct_form(v in 0.0f64..200.0, vx in 0.05f64..30.0, alpha in 0.1f64..0.9) {
        let p = params();
        let u = UtilitySpec::Power { alpha };
        let e = vx.powf(-alpha / (1.0 - alpha));
        let denom = p.mu - vx.powf(-1.0 / (1.0 - alpha));
        prop_assume!(denom.abs() > 1e-3);
        let direct = -((p.xi * p.mu - p.beta - p.lambda) * vx - p.xi * p.beta * v
            + p.xi * (1.0 - alpha) / alpha * e) / denom;
        let got = curvature_rhs(&p, &u, v, vx).unwrap();
        prop_assert!((got - direct).abs() <= 1e-12 * direct.abs().max(1e-300));
    }

    #[test]
    fn log_curvature_matches_direct_form(v in 0.0f64..200.0, vx in 0.01f64..1.0) {
        let p = params();
        let denom = p.mu + 1.0 - 1.0 / vx;
        prop_assume!(denom.abs() > 1e-3);
        let direct = -((p.xi * p.mu + p.xi - p.beta - p.lambda) * vx - p.xi * p.beta * v
            - p.xi * vx.ln() - p.xi) / denom;
        let got = curvature_rhs(&p, &UtilitySpec::Log, v, vx).unwrap();
        prop_assert!((got - direct).abs() <= 1e-12 * direct.abs().max(1e-300));
    }

    #[test]
    fn power_asymptotic_rate_from_slope(x in 0.01f64..1e4, alpha in 0.05f64..0.95) {
        let p = params();
        let u = UtilitySpec::Power { alpha };
        let c = u.optimal_rate(asymptotic_slope(&p, &u, x)).unwrap().rate;
        let want = asymptotic_rate(&p, &u, x);
        prop_assert!((c - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn log_asymptotic_rate_from_slope(x in 20.0f64..1e4) {
        let p = params();
        let u = UtilitySpec::Log;
        let c = u.optimal_rate(asymptotic_slope(&p, &u, x)).unwrap().rate;
        let want = asymptotic_rate(&p, &u, x);
        prop_assert!((c - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn config_round_trip(
        mu in 0.01f64..5.0, lambda in 0.01f64..5.0, xi in 0.01f64..5.0, beta in 0.01f64..1.0,
        alpha in 0.05f64..0.95, b in prop::option::of(0.1f64..5.0), eps in prop::option::of(1e-6f64..1.0),
    ) {
        let mut text = format!(
            r#"{{"mu":{mu},"lambda":{lambda},"xi":{xi},"beta":{beta},"utility":"power","alpha":{alpha}"#
        );
        if let Some(b) = b {
            text.push_str(&format!(r#","solve":{{"b":{b}}}"#));
        }
        if let Some(eps) = eps {
            text.push_str(&format!(r#","search":{{"epsilon":{eps}}}"#));
        }
        text.push('}');
        let cfg = RunConfig::from_json(&text).unwrap();
        let again = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        prop_assert_eq!(cfg, again);
    }

    #[test]
    fn search_csv_round_trip(rows in prop::collection::vec((0u8..3, 0.5f64..3.0, 0.0f64..20.0, 0.0f64..20.0), 1..30)) {
        let log: Vec<CandidateEvaluation> = rows.iter().map(|&(l, b, a, big_a)| {
            let label = [Label::Correct, Label::TooBig, Label::TooSmall][l as usize];
            let correct = label == Label::Correct;
            CandidateEvaluation {
                b, a,
                first_jump: correct.then_some(big_a),
                gap: correct.then_some(a - big_a),
                label, policy_fit: None, value_fit: None,
            }
        }).collect();
        let mut buf = Vec::new();
        write_search_csv(&log, &mut buf).unwrap();
        let back = read_search_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), log.len());
        for (r, e) in back.iter().zip(&log) {
            prop_assert_eq!(r.label, e.label);
            prop_assert!((r.b - e.b).abs() <= 5e-11);
            prop_assert_eq!(r.first_jump.is_some(), e.label == Label::Correct);
            if let (Some(g), Some(want)) = (r.gap, e.gap) {
                prop_assert!((g - want).abs() <= 5e-7);
            }
        }
    }
}

fn table1() -> HjbSolution {
    solve_value_function(&params(), &SQRT, 1.9, 10.0, &IvpConfig::default()).unwrap()
}

#[test]
fn singular_locus_matches_bisection() {
    let p = params();
    let (mut lo, mut hi): (f64, f64) = (1.0, 3.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid.powi(-2) > p.mu {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let oracle = 0.5 * (lo + hi);
    assert!((oracle - 1.96116).abs() < 1e-4);
    assert!(matches!(curvature_rhs(&p, &SQRT, 6.8, oracle), Err(Error::SingularLocus { .. })));
    for offset in [1e-4, -1e-4, 1e-8, -1e-8] {
        assert!(curvature_rhs(&p, &SQRT, 6.8, oracle + offset).is_ok(), "offset {offset}");
    }
}

#[test]
fn slope_vanishes_at_infinity() {
    let sol = solve_value_function(&params(), &SQRT, 1.9, 500.0, &IvpConfig::default()).unwrap();
    assert_eq!(sol.classification, Classification::Decaying);
    assert!(sol.vxs[sol.len() - 1] < 0.1 * sol.vxs[0]);
    let tail = &sol.vxs[sol.len() * 3 / 4..];
    assert!(tail.windows(2).all(|w| w[1] < w[0]));
    // y(v) = v_x decreasing in v on the tail
    let n = sol.len();
    for k in n * 3 / 4..n - 1 {
        assert!(sol.vs[k + 1] > sol.vs[k] && sol.vxs[k + 1] < sol.vxs[k]);
    }
}

#[test]
fn residual_converges_with_spacing() {
    let p = params();
    let coarse = table1();
    let fine = solve_value_function(
        &p,
        &SQRT,
        1.9,
        10.0,
        &IvpConfig { dense_spacing: 0.005, ..IvpConfig::default() },
    )
    .unwrap();
    let (rc, rf) = (coarse.hjb_residual(5.0).unwrap(), fine.hjb_residual(5.0).unwrap());
    assert!(rf.abs() * 2.0 <= rc.abs(), "{rc} -> {rf}");
}

#[test]
fn bubble_satisfies_riccati_form() {
    let sol = solve_value_function(&params(), &SQRT, 2.0, 10.0, &IvpConfig::default()).unwrap();
    assert_eq!(sol.classification, Classification::Bubble);
    for i in [10, 200, 500, 900] {
        let r = sol.riccati_residual(i).unwrap().value;
        // relative to the size of the individual terms
        assert!(r.abs() <= 1e-3 * sol.vxs[i] * sol.vs[i], "i={i}: {r}");
    }
}

/// Printed reference values of `v` and `c` at `x = 0..9`.
const TABLE1_V: [f64; 10] = [6.8021, 8.5790, 10.2022, 11.7010, 13.0940, 14.3963, 15.6203, 16.7762, 17.8723, 18.9158];
const TABLE1_C: [f64; 10] = [0.2770, 0.3489, 0.4122, 0.4802, 0.5525, 0.6286, 0.7081, 0.7905, 0.8755, 0.9626];

/// Least squares `y ≈ s·g(x) + t` by the closed-form 2×2 normal equations; returns `(s, t, rss)`.
fn oracle_fit(gs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = gs.len() as f64;
    let (sg, sy) = (gs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sgg: f64 = gs.iter().map(|g| g * g).sum();
    let sgy: f64 = gs.iter().zip(ys).map(|(g, y)| g * y).sum();
    let s = (n * sgy - sg * sy) / (n * sgg - sg * sg);
    let t = (sy - s * sg) / n;
    let rss = gs.iter().zip(ys).map(|(g, y)| (y - s * g - t).powi(2)).sum();
    (s, t, rss)
}

#[test]
fn table1_fit_regression() {
    let sol = table1();
    let xs: Vec<f64> = (0..10).map(f64::from).collect();
    let idx: Vec<usize> = xs.iter().map(|&x| sol.node_index(x).unwrap()).collect();
    let cs: Vec<f64> = idx.iter().map(|&k| sol.cs[k]).collect();
    let vs: Vec<f64> = idx.iter().map(|&k| sol.vs[k]).collect();

    let (a1, b1, _) = oracle_fit(&xs, &TABLE1_C);
    let cfit = fit_linear(&xs, &cs).unwrap();
    assert!((cfit.a1 - a1).abs() < 1e-3, "a1 = {} vs {a1}", cfit.a1);
    assert!((cfit.b1 - b1).abs() < 1e-3, "b1 = {} vs {b1}", cfit.b1);

    let roots: Vec<f64> = xs.iter().map(|x| x.sqrt()).collect();
    let (a2, b2, rss) = oracle_fit(&roots, &TABLE1_V);
    let vfit = fit_power(&xs, &vs, 0.5).unwrap();
    assert!((vfit.a2 - a2).abs() < 1e-3 && (vfit.b2 - b2).abs() < 1e-3);
    assert!((vfit.rss - rss).abs() <= 0.01 * rss, "rss {} vs {rss}", vfit.rss);
}

#[test]
fn solution_csv_round_trip() {
    let sol = table1();
    let mut buf = Vec::new();
    write_solution_csv(&sol, &mut buf).unwrap();
    let rows = read_solution_csv(buf.as_slice()).unwrap();
    assert_eq!(rows.len(), 1001);
    let last = rows.last().unwrap();
    assert_eq!((last.x, last.v, last.vx, last.c), (10.0, 19.912599, 0.975199, 1.05151));
}
