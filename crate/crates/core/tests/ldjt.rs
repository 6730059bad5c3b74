use std::sync::Arc;

use tempolift::dsl::parse_model;
use tempolift::ground::full_joint_enumerate;
use tempolift::ldjt::{construct, interface, ljt_unrolled_answer, run_ldjt, TemporalState};
use tempolift::model::{Evidence, GroundAtom, Pdm, Query};

fn fixture(name: &str, x: &[&str], j: &[&str]) -> Pdm {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(path)
        .unwrap()
        .replace("domain X = {x1, x2, x3};", &format!("domain X = {{{}}};", x.join(", ")))
        .replace("domain J = {j1, j2};", &format!("domain J = {{{}}};", j.join(", ")));
    parse_model(&text).unwrap().as_pdm().unwrap().clone()
}

fn ev(name: &str, args: &[&str], t: u32, v: &str) -> Evidence {
    Evidence::new(GroundAtom::new(name, Some(t), args), v)
}

fn oracle(pdm: &Pdm, evidence: &[Evidence], q: &Query) -> Vec<f64> {
    let steps = q.current.max(q.target()) + 1;
    let m = pdm.unroll(steps).unwrap();
    let e: Vec<Evidence> = evidence.iter().filter(|e| e.step() <= q.current).cloned().collect();
    full_joint_enumerate(&m.parfactors, &q.atom, &e, 22).unwrap()
}

fn assert_close(a: &[f64], b: &[f64], what: &str) {
    assert!(a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9), "{what}: {a:?} vs {b:?}");
}

#[test]
fn interface_of_fixtures() {
    let names = |f: &str| interface(&fixture(f, &["x1", "x2", "x3"], &["j1", "j2"])).names();
    assert_eq!(names("gex.pdm"), vec!["DoR(X)", "Pub(X,J)"]);
    assert_eq!(names("case_i.pdm"), vec!["DoR(X)"]);
    assert_eq!(names("case_iii.pdm"), vec!["DoR(X)"]);
    assert_eq!(names("case_ii.pdm"), vec!["Pub(X,J)"]);
}

#[test]
fn filtering_after_three_steps_matches_enumeration() {
    for (f, x, j, q) in [
        ("onepv.pdm", vec!["x1", "x2"], vec!["j1"], GroundAtom::new("Hot", Some(3), &[])),
        ("case_i.pdm", vec!["x1"], vec!["j1", "j2"], GroundAtom::new("DoR", Some(3), &["x1"])),
        ("case_ii.pdm", vec!["x1"], vec!["j1", "j2"], GroundAtom::new("Pub", Some(3), &["x1", "j2"])),
        ("case_iii.pdm", vec!["x1"], vec!["j1", "j2"], GroundAtom::new("DoR", Some(3), &["x1"])),
    ] {
        let pdm = fixture(f, &x, &j);
        let s = Arc::new(construct(&pdm));
        let evidence = if f == "onepv.pdm" {
            vec![ev("D", &["x1"], 0, "true"), ev("Hot", &[], 1, "false"), ev("D", &["x2"], 2, "true")]
        } else {
            vec![ev("DoR", &["x1"], 0, "true"), ev("Pub", &["x1", "j1"], 2, "false")]
        };
        let qs = vec![Query::new(q.clone(), 3), Query::new(q.with_time(Some(1)), 3), Query::new(q.with_time(Some(5)), 3)];
        let (answers, log) = run_ldjt(s, &evidence, &qs).unwrap();
        for (q, a) in qs.iter().zip(&answers) {
            assert_close(a, &oracle(&pdm, &evidence, q), &format!("{f} {}", q.atom));
            let (l, _) = ljt_unrolled_answer(&pdm, &evidence, q).unwrap();
            assert_close(a, &l, &format!("{f} ljt {}", q.atom));
        }
        assert_eq!(log.groundings, 0, "{f}\n{}", log.to_csv());
    }
}

#[test]
fn marketing_model_matches_enumeration() {
    for f in ["gex.pdm", "case_i_hot.pdm"] {
        let pdm = fixture(f, &["x1", "x2"], &["j1", "j2"]);
        let s = Arc::new(construct(&pdm));
        let evidence = vec![ev("Pub", &["x1", "j1"], 0, "true"), ev("Hot", &[], 1, "true")];
        let qs = vec![
            Query::new(GroundAtom::new("Hot", Some(1), &[]), 1),
            Query::new(GroundAtom::new("DoR", Some(0), &["x2"]), 1),
            Query::new(GroundAtom::new("Att", Some(1), &["j2"]), 1),
        ];
        let (answers, _) = run_ldjt(s, &evidence, &qs).unwrap();
        for (q, a) in qs.iter().zip(&answers) {
            assert_close(a, &oracle(&pdm, &evidence, q), &format!("{f} {}", q.atom));
        }
    }
}

#[test]
fn backward_pass_counts_beta_messages() {
    let pdm = fixture("case_i.pdm", &["x1", "x2"], &["j1"]);
    let mut st = TemporalState::new(Arc::new(construct(&pdm)));
    for _ in 0..4 {
        st.forward_step(&[]).unwrap();
    }
    st.backward_pass(0).unwrap();
    assert_eq!(st.beta_computations, 3);
    let q = Query::new(GroundAtom::new("DoR", Some(3), &["x1"]), 3);
    let filt = st.query(&q).unwrap();
    st.backward_pass(3).unwrap();
    assert_eq!(st.beta_computations, 3);
    assert_close(&filt, &st.clone().query(&q).unwrap(), "pi = t");
}
