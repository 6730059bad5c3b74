mod common;

use std::collections::BTreeMap;

use common::*;
use tempolift::dsl::parse_model;
use tempolift::fojt::{
    answer_at, build_fojt, check_properties, fuse, pass_messages, schedule, ClusterTag, FoJTree, Parcluster,
};
use tempolift::ground::full_joint_enumerate;
use tempolift::ldjt::construct;
use tempolift::lve::OperatorLog;
use tempolift::model::{Model, Parfactor, PrvKey};

fn parse(text: &str) -> tempolift::dsl::ParsedModel {
    parse_model(text).unwrap()
}

fn fixture(name: &str) -> tempolift::dsl::ParsedModel {
    parse(&std::fs::read_to_string(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap())
}

fn key(name: &str, time: Option<u32>) -> PrvKey {
    PrvKey { name: name.into(), time }
}

fn chain_model(len: usize) -> Model {
    let names: Vec<String> = (0..len).map(|i| format!("V{i}")).collect();
    let mut text: String = names.iter().map(|n| format!("randvar {n} : bool;\n")).collect();
    for i in 1..len {
        text += &format!("parfactor g{i} = phi({}, {}) [ 1 2 3 {} ];\n", names[i - 1], names[i], i + 3);
    }
    parse(&text).as_model().unwrap().clone()
}

#[test]
fn gex_per_step_tree_has_an_in_and_an_out_cluster() {
    let s = construct(fixture("gex.pdm").as_pdm().unwrap());
    let jt = &s.jt;
    assert_eq!(jt.clusters.len(), 2);
    assert_eq!(jt.edges, vec![(0, 1)]);
    let c_in = &jt.clusters[0];
    let c_out = &jt.clusters[1];
    assert_eq!(c_in.tag, Some(ClusterTag::In));
    assert_eq!(c_out.tag, Some(ClusterTag::Out));
    assert_eq!(c_in.keys(), [key("DoR", Some(0)), key("Pub", Some(0)), key("Pub", Some(1))].into());
    assert_eq!(
        c_out.keys(),
        [key("Att", Some(1)), key("DoR", Some(1)), key("Hot", Some(1)), key("Pub", Some(1))].into()
    );
    assert_eq!(jt.separator(0, 1), [key("Pub", Some(1))].into());
    let locals = |c: &Parcluster| -> Vec<String> { c.local.iter().map(|g| g.name.to_string()).collect() };
    assert_eq!(locals(c_in), ["gP"]);
    assert_eq!(locals(c_out), ["g0", "g1"]);
    assert_eq!(s.j0.clusters.len(), 1);
    assert_eq!(s.j0.clusters[0].tag, Some(ClusterTag::Out));
}

#[test]
fn built_trees_satisfy_every_property() {
    let mut r = rng(3);
    for _ in 0..100 {
        let m = random_model(&mut r, 12, 3);
        let report = check_properties(&build_fojt(&m.parfactors, &[]), &m.parfactors);
        assert!(report.all_pass(), "{report:?}");
    }
}

#[test]
fn running_intersection_violation_is_detected() {
    let m = chain_model(4);
    let mut tree = build_fojt(&m.parfactors, &[]);
    assert!(check_properties(&tree, &m.parfactors).all_pass());
    let last = tree.clusters.len() - 1;
    let v0 = tree.clusters[0].prvs[&key("V0", None)].clone();
    tree.clusters[last].prvs.insert(key("V0", None), v0);
    let report = check_properties(&tree, &m.parfactors);
    assert!(!report.running_intersection);
    assert!(report.acyclic && report.coverage && report.partition);
}

#[test]
fn uncovered_parfactor_is_a_coverage_failure() {
    let m = chain_model(4);
    let mut tree = build_fojt(&m.parfactors, &[]);
    tree.clusters[0].prvs.remove(&key("V0", None));
    let report = check_properties(&tree, &m.parfactors);
    assert!(!report.coverage && !report.local_models_contained);
}

#[test]
fn five_cluster_tree_sends_eight_messages() {
    let m = chain_model(6);
    let tree = build_fojt(&m.parfactors, &[]);
    assert_eq!(tree.clusters.len(), 5);
    assert_eq!(schedule(&tree, tree.root()).len(), 8);
    let calibrated = pass_messages(&tree, &mut OperatorLog::new()).unwrap();
    assert_eq!(calibrated.messages.len(), 8);
    assert!(calibrated.is_calibrated());
}

#[test]
fn fusion_reaches_a_fixpoint() {
    let mut r = rng(4);
    let mut models: Vec<Vec<Parfactor>> = vec![fixture("gex_static.pdm").as_model().unwrap().parfactors.clone()];
    models.extend((0..40).map(|_| random_model(&mut r, 10, 2).parfactors));
    for pfs in models {
        let once = fuse(&build_fojt(&pfs, &[])).unwrap();
        assert_eq!(fuse(&once).unwrap(), once);
        assert!(check_properties(&once, &pfs).all_pass());
    }
}

fn calibrated(pfs: &[Parfactor]) -> FoJTree {
    pass_messages(&fuse(&build_fojt(pfs, &[])).unwrap(), &mut OperatorLog::new()).unwrap()
}

#[test]
fn calibrated_clusters_agree_with_each_other_and_enumeration() {
    let mut r = rng(5);
    for _ in 0..60 {
        let m = random_model(&mut r, 10, 3);
        let tree = calibrated(&m.parfactors);
        let mut seen: BTreeMap<_, Vec<f64>> = BTreeMap::new();
        for atom in m.ground_atoms() {
            let want = full_joint_enumerate(&m.parfactors, &atom, &[], 12).unwrap();
            for i in tree.covering(&atom.key()) {
                let got = answer_at(&tree, i, &atom).unwrap().0;
                assert!(probs_close(&got, &want, 1e-9), "{atom} at C{}: {got:?} vs {want:?}", i + 1);
                if let Some(prev) = seen.insert(atom.clone(), got.clone()) {
                    assert!(probs_close(&prev, &got, 1e-9));
                }
            }
        }
    }
}
