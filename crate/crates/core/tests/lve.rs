use tempolift::dsl::{parse_model, ParsedModel};
use tempolift::ground::full_joint_enumerate;
use tempolift::lve::lve_answer;
use tempolift::model::{Evidence, GroundAtom, Model, Parfactor};

fn fixture(name: &str) -> ParsedModel {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_model(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn gex() -> Model {
    fixture("gex_static.pdm").as_model().unwrap().clone()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn check(pfs: &[Parfactor], q: &GroundAtom, ev: &[Evidence]) -> tempolift::lve::OperatorLog {
    let (lifted, log) = lve_answer(pfs, q, ev).unwrap();
    let exact = full_joint_enumerate(pfs, q, ev, 24).unwrap();
    assert!(close(&lifted, &exact, 1e-9), "{q}: {lifted:?} vs {exact:?}\n{}", log.to_csv());
    log
}

#[test]
fn static_marketing_model_matches_enumeration() {
    let m = gex();
    for q in [
        GroundAtom::new("Hot", None, &[]),
        GroundAtom::new("Att", None, &["j1"]),
        GroundAtom::new("DoR", None, &["x2"]),
        GroundAtom::new("Pub", None, &["x1", "j2"]),
    ] {
        let log = check(&m.parfactors, &q, &[]);
        eprintln!("{q}\n{}", log.to_csv());
    }
}

#[test]
fn static_marketing_model_with_evidence() {
    let m = gex();
    let ev = vec![
        Evidence::new(GroundAtom::new("Pub", None, &["x1", "j1"]), "true"),
        Evidence::new(GroundAtom::new("DoR", None, &["x3"]), "false"),
        Evidence::new(GroundAtom::new("Att", None, &["j2"]), "true"),
    ];
    for q in [GroundAtom::new("Hot", None, &[]), GroundAtom::new("DoR", None, &["x1"]), GroundAtom::new("Pub", None, &["x2", "j1"])] {
        check(&m.parfactors, &q, &ev);
    }
}

#[test]
fn unrolled_transition_models_match_enumeration() {
    for f in ["case_i.pdm", "case_ii.pdm", "case_iii.pdm", "onepv.pdm"] {
        let pdm = fixture(f).as_pdm().unwrap().clone();
        let m = pdm.unroll(2).unwrap();
        let q = match f {
            "onepv.pdm" => GroundAtom::new("Hot", Some(1), &[]),
            _ => GroundAtom::new("DoR", Some(1), &["x1"]),
        };
        let ev = vec![Evidence::new(GroundAtom::new(if f == "onepv.pdm" { "D" } else { "DoR" }, Some(0), &["x2"]), "true")];
        let log = check(&m.parfactors, &q, &ev);
        eprintln!("{f}: groundings {}", log.groundings);
    }
}
