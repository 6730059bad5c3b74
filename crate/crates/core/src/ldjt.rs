//! The temporal engine: interface, per-step junction trees with in- and
//! out-clusters, forward (alpha) and backward (beta) messages, and
//! filtering, prediction and smoothing queries.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fojt::{
    answer_on_jtree, build_fojt, fuse, gather, pass_messages, ClusterTag, FoJTree, Parcluster,
};
use crate::lve::{eliminate, Keep, OpKind, OperatorLog};
use crate::model::{keys_at, Evidence, GroundAtom, Parfactor, Pdm, Prv, PrvKey, Query};

/// Number of steps the extension step dry-runs.
pub const EXTENSION_DRY_RUN_STEPS: u32 = 3;

/// The forward interface: randvars whose previous-slice instances share a
/// parfactor with a current-slice randvar. Stored without time index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Interface {
    pub prvs: Vec<Prv>,
}

impl Interface {
    pub fn keys_at(&self, time: u32) -> BTreeSet<PrvKey> {
        self.prvs.iter().map(|p| PrvKey { name: p.name.clone(), time: Some(time) }).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.prvs.iter().map(|p| p.to_string()).collect()
    }
}

pub fn interface(pdm: &Pdm) -> Interface {
    let mut seen = BTreeSet::new();
    let mut prvs = Vec::new();
    for g in pdm.inter_slice() {
        for k in keys_at(g, 0) {
            if seen.insert(k.name.clone()) {
                let p = g.args.iter().flat_map(|a| a.atoms()).find(|p| p.key() == k).unwrap();
                prvs.push(p.with_time(None));
            }
        }
    }
    prvs.sort_by(|a, b| a.name.cmp(&b.name));
    Interface { prvs }
}

/// The per-step structures, built once and reused for every step.
#[derive(Clone, Debug)]
pub struct Structures {
    pub pdm: Pdm,
    pub interface: Interface,
    /// Interface after the extension step (a superset of `interface`).
    pub extended: Interface,
    /// `J_0` over absolute time 0.
    pub j0: FoJTree,
    pub j0_out: usize,
    /// `J_t` over slice offsets 0 (previous) and 1 (current).
    pub jt: FoJTree,
    pub jt_in: usize,
    pub jt_out: usize,
}

fn tag(tree: &mut FoJTree, keys: &BTreeSet<PrvKey>, t: ClusterTag) -> usize {
    let i = tree
        .clusters
        .iter()
        .position(|c| keys.iter().all(|k| c.prvs.contains_key(k)))
        .unwrap_or(0);
    let c = &mut tree.clusters[i];
    c.tag = match c.tag {
        None => Some(t),
        Some(x) if x == t => Some(x),
        _ => Some(ClusterTag::InOut),
    };
    i
}

fn build(pdm: &Pdm, base: &Interface, extended: Interface) -> Structures {
    let g0: Vec<Parfactor> = pdm.g0.parfactors.iter().map(|g| g.map_time(|_| Some(0))).collect();
    let mut j0 = build_fojt(&g0, &[extended.keys_at(0)]);
    let j0_out = tag(&mut j0, &extended.keys_at(0), ClusterTag::Out);
    let step = pdm.step_parfactors();
    let mut jt = build_fojt(&step, &[extended.keys_at(0), extended.keys_at(1)]);
    let jt_in = tag(&mut jt, &extended.keys_at(0), ClusterTag::In);
    let jt_out = tag(&mut jt, &extended.keys_at(1), ClusterTag::Out);
    Structures { pdm: pdm.clone(), interface: base.clone(), extended, j0, j0_out, jt, jt_in, jt_out }
}

/// Dry run: (ground fallbacks while computing alpha, ground fallbacks overall).
fn dry_run(s: Structures) -> (usize, usize) {
    let mut state = TemporalState::new(Arc::new(s));
    for _ in 0..EXTENSION_DRY_RUN_STEPS {
        if state.forward_step(&[]).is_err() {
            return (usize::MAX, usize::MAX);
        }
    }
    let alpha = state.alpha_groundings.values().sum();
    let total = state.logs.values().map(|l| l.groundings).sum();
    (alpha, total)
}

/// Build `J_0` and `J_t`. The extension step moves a current-slice randvar
/// into the interface when its elimination at the out-cluster needs a
/// ground fallback and keeping it reduces the fallbacks of a dry run.
pub fn construct(pdm: &Pdm) -> Structures {
    let base = interface(pdm);
    let mut ext = base.clone();
    let mut current = build(pdm, &base, ext.clone());
    let mut score = dry_run(current.clone());
    while score.0 > 0 {
        let inside: BTreeSet<String> = ext.prvs.iter().map(|p| p.name.to_string()).collect();
        let candidates: Vec<Prv> = current.jt.clusters[current.jt_out]
            .prvs
            .values()
            .filter(|p| p.time == Some(1) && !inside.contains(&*p.name))
            .map(|p| p.with_time(None))
            .collect();
        let mut best: Option<((usize, usize), Structures, Interface)> = None;
        for c in candidates {
            let mut trial = ext.clone();
            trial.prvs.push(c);
            trial.prvs.sort_by(|a, b| a.name.cmp(&b.name));
            let s = build(pdm, &base, trial.clone());
            let sc = dry_run(s.clone());
            if best.as_ref().map_or(true, |(b, _, _)| (sc.1, sc.0) < (b.1, b.0)) {
                best = Some((sc, s, trial));
            }
        }
        match best {
            Some((sc, s, trial)) if sc.1 < score.1 => {
                score = sc;
                current = s;
                ext = trial;
            }
            _ => break,
        }
    }
    current
}

fn shift_tree(tree: &FoJTree, f: impl Fn(Option<u32>) -> Option<u32> + Copy) -> FoJTree {
    FoJTree {
        clusters: tree
            .clusters
            .iter()
            .map(|c| Parcluster {
                name: c.name.clone(),
                prvs: c
                    .prvs
                    .iter()
                    .map(|(k, p)| (PrvKey { name: k.name.clone(), time: f(k.time) }, p.with_time(f(p.time))))
                    .collect(),
                local: c.local.iter().map(|g| g.map_time(f)).collect(),
                tag: c.tag,
            })
            .collect(),
        edges: tree.edges.clone(),
        messages: BTreeMap::new(),
    }
}

/// Filtering, prediction and smoothing over a stream of steps.
#[derive(Clone, Debug)]
pub struct TemporalState {
    pub structures: Arc<Structures>,
    /// Steps processed so far; the current step is `steps - 1`.
    pub steps: u32,
    pub alphas: BTreeMap<u32, Vec<Parfactor>>,
    /// Instantiated trees with evidence, without alpha.
    pub trees: BTreeMap<u32, FoJTree>,
    /// Calibrated trees including alpha, for filtering.
    pub calibrated: BTreeMap<u32, FoJTree>,
    pub evidence: BTreeMap<u32, Vec<Evidence>>,
    pub logs: BTreeMap<u32, OperatorLog>,
    pub alpha_groundings: BTreeMap<u32, usize>,
    /// Backward messages valid for the current step.
    pub betas: BTreeMap<u32, Vec<Parfactor>>,
    pub beta_computations: usize,
}

impl TemporalState {
    pub fn new(structures: Arc<Structures>) -> Self {
        TemporalState {
            structures,
            steps: 0,
            alphas: BTreeMap::new(),
            trees: BTreeMap::new(),
            calibrated: BTreeMap::new(),
            evidence: BTreeMap::new(),
            logs: BTreeMap::new(),
            alpha_groundings: BTreeMap::new(),
            betas: BTreeMap::new(),
            beta_computations: 0,
        }
    }

    pub fn current(&self) -> Option<u32> {
        self.steps.checked_sub(1)
    }

    fn instantiate(&self, t: u32) -> (FoJTree, usize, usize) {
        let s = &self.structures;
        if t == 0 {
            (s.j0.clone(), s.j0_out, s.j0_out)
        } else {
            (shift_tree(&s.jt, move |x| x.map(|x| t - 1 + x)), s.jt_in, s.jt_out)
        }
    }

    /// Process step `t = steps` with its evidence and compute alpha_t.
    pub fn forward_step(&mut self, evidence: &[Evidence]) -> Result<()> {
        let t = self.steps;
        if let Some(e) = evidence.iter().find(|e| e.atom.time != Some(t)) {
            return Err(Error::InvalidArgument(format!("evidence {} is not for step {t}", e.atom)));
        }
        let mut log = OperatorLog::new();
        let (tree, inc, out) = self.instantiate(t);
        // Observations of the previous step also restrict its slice in J_t.
        let mut observed = evidence.to_vec();
        if t > 0 {
            observed.extend(self.evidence[&(t - 1)].iter().cloned());
        }
        let tree = tree.with_evidence(&observed, &mut log)?;
        let mut with_alpha = tree.clone();
        if t > 0 {
            with_alpha.clusters[inc].local.extend(self.alphas[&(t - 1)].iter().cloned());
        }
        let calibrated = pass_messages(&with_alpha, &mut log)?;
        let before = log.groundings;
        let keep = Keep::keys(self.structures.extended.keys_at(t));
        let (alpha, _) = eliminate(gather(&calibrated, out, None), &keep, &mut log)?;
        log.messages += 1;
        self.alpha_groundings.insert(t, log.groundings - before);
        self.alphas.insert(t, alpha);
        self.trees.insert(t, tree);
        self.calibrated.insert(t, calibrated);
        self.evidence.insert(t, evidence.to_vec());
        self.logs.insert(t, log);
        self.betas.clear();
        self.steps += 1;
        Ok(())
    }

    /// Compute beta messages from the current step down to `pi + 1`.
    pub fn backward_pass(&mut self, pi: u32) -> Result<()> {
        let t = self.current().ok_or_else(|| Error::InvalidArgument("no step processed".into()))?;
        let mut s = t;
        while s > pi {
            if !self.betas.contains_key(&s) {
                let mut tree = self.trees[&s].clone();
                if let Some(b) = self.betas.get(&(s + 1)) {
                    tree.clusters[self.structures.jt_out].local.extend(b.iter().cloned());
                }
                let log = self.logs.get_mut(&t).unwrap();
                let cal = pass_messages(&tree, log)?;
                let keep = Keep::keys(self.structures.extended.keys_at(s - 1));
                let (beta, _) = eliminate(gather(&cal, self.structures.jt_in, None), &keep, log)?;
                log.messages += 1;
                self.beta_computations += 1;
                self.betas.insert(s, beta);
            }
            s -= 1;
        }
        Ok(())
    }

    fn tree_with_messages(&mut self, pi: u32) -> Result<FoJTree> {
        let t = self.current().unwrap();
        if pi == t {
            return Ok(self.calibrated[&pi].clone());
        }
        self.backward_pass(pi)?;
        let (_, inc, out) = self.instantiate(pi);
        let mut tree = self.trees[&pi].clone();
        if pi > 0 {
            tree.clusters[inc].local.extend(self.alphas[&(pi - 1)].iter().cloned());
        }
        tree.clusters[out].local.extend(self.betas[&(pi + 1)].iter().cloned());
        let log = self.logs.get_mut(&t).unwrap();
        pass_messages(&tree, log)
    }

    /// `P(q.atom | evidence up to q.current)`; `q.current` must be the
    /// current step.
    pub fn query(&mut self, q: &Query) -> Result<Vec<f64>> {
        let t = self.current().ok_or_else(|| Error::InvalidArgument("no step processed".into()))?;
        if q.current != t {
            return Err(Error::InvalidArgument(format!("query for t={} at step {t}", q.current)));
        }
        let pi = q.target();
        let atom = &q.atom;
        if let Some(e) = self.evidence.get(&pi).and_then(|ev| ev.iter().find(|e| e.atom == *atom)) {
            let range = self
                .structures
                .pdm
                .range_of(&atom.name)
                .ok_or_else(|| Error::QueryNotCovered(atom.to_string()))?;
            let mut d = vec![0.0; range.len()];
            d[range.iter().position(|r| *r == e.value).unwrap()] = 1.0;
            return Ok(d);
        }
        let tree = if pi > t {
            let mut scratch = self.clone();
            while scratch.steps <= pi {
                scratch.forward_step(&[])?;
            }
            let log = scratch.logs.remove(&pi).unwrap_or_default();
            self.logs.get_mut(&t).unwrap().merge(&log);
            scratch.calibrated[&pi].clone()
        } else {
            self.tree_with_messages(pi)?
        };
        let (dist, log) = answer_on_jtree(&tree, atom)?;
        self.logs.get_mut(&t).unwrap().merge(&log);
        Ok(dist)
    }

    /// All step logs merged.
    pub fn total_log(&self) -> OperatorLog {
        let mut out = OperatorLog::new();
        for l in self.logs.values() {
            out.merge(l);
        }
        out
    }
}

fn group_evidence(evidence: &[Evidence]) -> BTreeMap<u32, Vec<Evidence>> {
    let mut by_step: BTreeMap<u32, Vec<Evidence>> = BTreeMap::new();
    for e in evidence {
        by_step.entry(e.step()).or_default().push(e.clone());
    }
    by_step
}

/// Answer `queries` (in the given order) over an evidence stream.
pub fn run_ldjt(structures: Arc<Structures>, evidence: &[Evidence], queries: &[Query]) -> Result<(Vec<Vec<f64>>, OperatorLog)> {
    let by_step = group_evidence(evidence);
    let mut order: Vec<usize> = (0..queries.len()).collect();
    order.sort_by_key(|&i| queries[i].current);
    let mut state = TemporalState::new(structures);
    let mut answers = vec![Vec::new(); queries.len()];
    for i in order {
        let q = &queries[i];
        while state.steps <= q.current {
            let ev = by_step.get(&state.steps).cloned().unwrap_or_default();
            state.forward_step(&ev)?;
        }
        answers[i] = state.query(q)?;
    }
    Ok((answers, state.total_log()))
}

/// Answer a query by junction tree passing on the unrolled model, fusing
/// clusters whose messages would need a ground fallback.
pub fn ljt_unrolled_answer(pdm: &Pdm, evidence: &[Evidence], q: &Query) -> Result<(Vec<f64>, OperatorLog)> {
    let steps = q.current.max(q.target()) + 1;
    let model = pdm.unroll(steps)?;
    let ev: Vec<Evidence> = evidence.iter().filter(|e| e.step() <= q.current).cloned().collect();
    let tree = fuse(&build_fojt(&model.parfactors, &[]))?;
    let mut log = OperatorLog::new();
    if let Some(e) = ev.iter().find(|e| e.atom == q.atom) {
        let range = pdm.range_of(&q.atom.name).ok_or_else(|| Error::QueryNotCovered(q.atom.to_string()))?;
        let mut d = vec![0.0; range.len()];
        d[range.iter().position(|r| *r == e.value).unwrap()] = 1.0;
        return Ok((d, log));
    }
    let tree = tree.with_evidence(&ev, &mut log)?;
    let cal = pass_messages(&tree, &mut log)?;
    let (d, l) = answer_on_jtree(&cal, &q.atom)?;
    log.merge(&l);
    Ok((d, log))
}

/// Ground atoms of every randvar of the structures at step `t`, for
/// bookkeeping in tests and reports.
pub fn step_keys(s: &Structures, t: u32) -> BTreeSet<PrvKey> {
    let tree = if t == 0 { &s.j0 } else { &s.jt };
    tree.clusters
        .iter()
        .flat_map(|c| c.prvs.keys())
        .map(|k| PrvKey { name: k.name.clone(), time: k.time.map(|x| if t == 0 { x } else { t - 1 + x }) })
        .collect()
}

/// Whether a log contains a ground fallback step.
pub fn grounded(log: &OperatorLog) -> bool {
    log.steps.iter().any(|s| s.op == OpKind::GroundFallback)
}

/// Ground atom at step `t` for a randvar written without time.
pub fn at_step(name: &str, args: &[&str], t: u32) -> GroundAtom {
    GroundAtom::new(name, Some(t), args)
}
