use tempolift::bench::{
    estimate_cost, fit_line, fit_points, fit_scaling, largest_factor, lifted_width, measure, parse_config, plan_runs,
    run_suite, to_csv, tree_width, Axis, ComplexityParams, CostMode, Family, LiftedWidth, Metric, Mode, Outcome, Run,
    CSV_HEADER,
};
use tempolift::dsl::parse_model;
use tempolift::error::Error;
use tempolift::fojt::build_fojt;
use tempolift::ldjt::construct;

fn params(t: u64) -> ComplexityParams {
    ComplexityParams { t, n: 4, n_count: 1, r: 2, r_count: 1, n_j: 2, m: 1 }
}

const W40: LiftedWidth = LiftedWidth { w_g: 4, w_count: 0 };

#[test]
fn cost_examples_by_hand() {
    assert_eq!(estimate_cost(&params(10), &W40, CostMode::TotalWorst), 7072.0);
    assert_eq!(estimate_cost(&params(10), &W40, CostMode::TotalBest), 672.0);
    assert_eq!(estimate_cost(&params(10), &W40, CostMode::TotalAvg), 672.0);
    assert_eq!(estimate_cost(&params(10), &W40, CostMode::MsgWorst), 100.0 * 2.0 * 32.0);
    assert_eq!(estimate_cost(&params(10), &W40, CostMode::Evidence), 10.0 * 2.0 * 32.0);
    assert_eq!(estimate_cost(&params(10), &W40, CostMode::Qa), 32.0);
}

#[test]
fn zero_crv_width_leaves_no_counted_factor() {
    for n_count in [1, 7, 1000] {
        let p = ComplexityParams { n_count, r_count: 3, ..params(10) };
        assert_eq!(largest_factor(&p, &W40), 16.0);
    }
}

#[test]
fn cost_is_monotone_in_every_parameter() {
    let base = ComplexityParams { t: 5, n: 4, n_count: 3, r: 2, r_count: 2, n_j: 3, m: 2 };
    let w = LiftedWidth { w_g: 3, w_count: 1 };
    let bumps: Vec<Box<dyn Fn(&mut ComplexityParams, &mut LiftedWidth)>> = vec![
        Box::new(|p, _| p.t += 1),
        Box::new(|p, _| p.n += 4),
        Box::new(|p, _| p.r += 1),
        Box::new(|p, _| p.n_j += 1),
        Box::new(|p, _| p.m += 1),
        Box::new(|_, w| w.w_g += 1),
        Box::new(|_, w| w.w_count += 1),
    ];
    for mode in CostMode::ALL {
        for bump in &bumps {
            let (mut p, mut w2) = (base, w);
            bump(&mut p, &mut w2);
            assert!(estimate_cost(&p, &w2, mode) >= estimate_cost(&base, &w, mode), "{mode:?}");
        }
    }
}

#[test]
fn gex_structures_have_width_four_zero() {
    let s = construct(&Family::Blocked.pdm(3, false).unwrap());
    assert_eq!(lifted_width(&s.j0, &s.jt), W40);
}

#[test]
fn widths_ignore_domain_sizes() {
    let small = construct(&Family::CaseIHot.pdm(2, true).unwrap());
    let big = construct(&Family::CaseIHot.pdm(9, true).unwrap());
    assert_eq!(lifted_width(&small.j0, &small.jt), lifted_width(&big.j0, &big.jt));
}

#[test]
fn single_cluster_with_a_crv() {
    let text = "domain X = {a, b, c};
                randvar Hot : bool; randvar DoR(X) : bool;
                parfactor g = phi(Hot, #X[DoR(X)]) [ 1 2 3 4 5 6 7 8 ];";
    let m = parse_model(text).unwrap().as_model().unwrap().clone();
    let tree = build_fojt(&m.parfactors, &[]);
    assert_eq!(tree.clusters.len(), 1);
    assert_eq!(tree_width(&tree), LiftedWidth { w_g: 2, w_count: 1 });
}

#[test]
fn linear_fit_recovers_its_generator() {
    let xs: Vec<f64> = (1..=20).map(|i| i as f64 * 3.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x + 7.0).collect();
    let f = fit_line(&xs, &ys).unwrap();
    assert!((f.slope - 2.5).abs() < 0.025 && f.r2 >= 0.999);
}

#[test]
fn exponential_data_prefers_the_log_linear_fit() {
    let xs: Vec<f64> = (2..=12).map(|i| i as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * 2f64.powf(*x)).collect();
    let f = fit_points(&xs, &ys).unwrap();
    assert!(f.log_linear.r2 > f.power.r2);
    assert!((f.log_linear.slope - 2f64.ln()).abs() < 1e-9);
}

#[test]
fn too_few_points_is_a_fit_error() {
    assert!(matches!(fit_line(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]), Err(Error::Fit { .. })));
}

#[test]
fn filtering_work_per_step_is_stationary() {
    let m = measure(&Run {
        family: Family::CaseI,
        n: 4,
        t: 30,
        mode: Mode::Ldjt,
        evidence_rate: 0.0,
        scale_all: false,
        seed: 0,
        budget: 1 << 20,
    })
    .unwrap();
    assert_eq!(m.groundings, Some(0));
    let tail = &m.per_step[2..];
    assert!(tail.iter().all(|s| *s == tail[0]), "{:?}", m.per_step);
}

const CONFIG: &str = r#"
seed = 11
timeout_ms = 60000
[[scenario]]
family = "case_i"
modes = ["ldjt"]
n = [2, 3]
T = [3, 4, 5, 6, 7]
evidence_rate = 0.3

[[scenario]]
family = "chain"
modes = ["ground", "ldjt"]
n = [3]
T = [2]
"#;

#[test]
fn suite_is_seeded_and_repeatable() {
    let cfg = parse_config(CONFIG).unwrap();
    assert_eq!(plan_runs(&cfg).len(), 12);
    let a = run_suite(&cfg);
    let b = run_suite(&cfg);
    assert!(a.iter().all(|m| m.outcome == Outcome::Ok));
    let strip = |rows: &[tempolift::bench::Measurement]| -> Vec<_> {
        rows.iter().map(|m| (m.mults, m.sumouts, m.countconvs, m.groundings, m.max_factor)).collect()
    };
    assert_eq!(strip(&a), strip(&b));
    let csv = to_csv(&a);
    assert!(csv.starts_with(CSV_HEADER));
    assert_eq!(csv.lines().count(), 13);
    assert_eq!(a[10].max_factor, Some(8));
    let fit = fit_scaling(&a[..5], Axis::T, Metric::CellWrites).unwrap();
    assert!(fit.linear.slope > 0.0);
}

#[test]
fn bad_config_is_rejected() {
    assert!(matches!(parse_config("seed = 1\n[[scenario]]\nfamily = \"nope\""), Err(Error::InvalidArgument(_))));
}
