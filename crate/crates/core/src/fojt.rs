//! First-order junction trees: construction, property checks, fusion and
//! message passing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lve::{eliminate, enter_evidence, lve_answer, Keep, OperatorLog};
use crate::model::{Evidence, GroundAtom, Parfactor, Prv, PrvKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClusterTag {
    In,
    Out,
    InOut,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parcluster {
    pub name: String,
    /// Cluster randvars with a representative PRV for display.
    pub prvs: BTreeMap<PrvKey, Prv>,
    pub local: Vec<Parfactor>,
    pub tag: Option<ClusterTag>,
}

impl Parcluster {
    pub fn keys(&self) -> BTreeSet<PrvKey> {
        self.prvs.keys().cloned().collect()
    }
}

/// A junction tree over parclusters. `messages[(i, j)]` holds the message
/// sent from cluster `i` to cluster `j` once calibrated.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FoJTree {
    pub clusters: Vec<Parcluster>,
    pub edges: Vec<(usize, usize)>,
    pub messages: BTreeMap<(usize, usize), Vec<Parfactor>>,
}

impl FoJTree {
    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| if a == i { Some(b) } else if b == i { Some(a) } else { None })
            .collect();
        out.sort();
        out
    }

    pub fn separator(&self, i: usize, j: usize) -> BTreeSet<PrvKey> {
        self.clusters[i].keys().intersection(&self.clusters[j].keys()).cloned().collect()
    }

    pub fn is_calibrated(&self) -> bool {
        self.messages.len() == 2 * self.edges.len()
    }

    /// Clusters containing `key`.
    pub fn covering(&self, key: &PrvKey) -> Vec<usize> {
        (0..self.clusters.len()).filter(|&i| self.clusters[i].prvs.contains_key(key)).collect()
    }

    /// Cluster used as the calibration root: maximal degree, ties by name.
    pub fn root(&self) -> usize {
        (0..self.clusters.len())
            .max_by(|&a, &b| {
                self.neighbours(a)
                    .len()
                    .cmp(&self.neighbours(b).len())
                    .then_with(|| self.clusters[b].name.cmp(&self.clusters[a].name))
            })
            .unwrap_or(0)
    }

    /// Absorb evidence into every local model; messages are discarded.
    pub fn with_evidence(&self, evidence: &[Evidence], log: &mut OperatorLog) -> Result<FoJTree> {
        let mut out = self.clone();
        out.messages.clear();
        for c in out.clusters.iter_mut() {
            c.local = enter_evidence(std::mem::take(&mut c.local), evidence, log)?;
        }
        Ok(out)
    }
}

fn prv_map(pfs: &[Parfactor]) -> BTreeMap<PrvKey, Prv> {
    let mut out = BTreeMap::new();
    for g in pfs {
        for a in &g.args {
            for p in a.atoms() {
                out.entry(p.key()).or_insert_with(|| p.clone());
            }
        }
    }
    out
}

/// Build a junction tree for `pfs` by min-fill elimination on the randvar
/// graph. Each extra clique is forced into a single parcluster.
pub fn build_fojt(pfs: &[Parfactor], cliques: &[BTreeSet<PrvKey>]) -> FoJTree {
    let mut reps = prv_map(pfs);
    let mut adj: BTreeMap<PrvKey, BTreeSet<PrvKey>> = BTreeMap::new();
    let all_sets = pfs.iter().map(|g| g.keys()).chain(cliques.iter().cloned());
    for set in all_sets {
        for a in &set {
            let e = adj.entry(a.clone()).or_default();
            e.extend(set.iter().filter(|b| *b != a).cloned());
        }
    }
    for k in adj.keys() {
        if !reps.contains_key(k) {
            let p = pfs
                .iter()
                .flat_map(|g| g.args.iter().flat_map(|a| a.atoms()))
                .find(|p| p.name == k.name)
                .map(|p| p.with_time(k.time))
                .unwrap_or_else(|| Prv { name: k.name.clone(), time: k.time, terms: Vec::new(), range: crate::model::boolean_range() });
            reps.insert(k.clone(), p);
        }
    }

    // Elimination cliques in elimination order.
    let mut order: Vec<PrvKey> = Vec::new();
    let mut elim_cliques: Vec<BTreeSet<PrvKey>> = Vec::new();
    let mut g = adj.clone();
    while !g.is_empty() {
        let fill = |v: &PrvKey| -> usize {
            let n: Vec<&PrvKey> = g[v].iter().collect();
            let mut f = 0;
            for i in 0..n.len() {
                for j in i + 1..n.len() {
                    if !g[n[i]].contains(n[j]) {
                        f += 1;
                    }
                }
            }
            f
        };
        let v = g.keys().min_by_key(|v| (fill(v), g[*v].len(), (*v).clone())).unwrap().clone();
        let nbrs = g.remove(&v).unwrap();
        for a in &nbrs {
            let e = g.get_mut(a).unwrap();
            e.remove(&v);
            e.extend(nbrs.iter().filter(|b| *b != a).cloned());
        }
        let mut c = nbrs.clone();
        c.insert(v.clone());
        order.push(v);
        elim_cliques.push(c);
    }
    let pos: BTreeMap<&PrvKey, usize> = order.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let n = elim_cliques.len();
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (i, c) in elim_cliques.iter().enumerate() {
        if let Some(p) = c.iter().filter(|k| **k != order[i]).map(|k| pos[k]).min() {
            edges.insert((i.min(p), i.max(p)));
        }
    }
    // Contract clusters contained in a neighbour.
    let mut alive: Vec<bool> = vec![true; n];
    loop {
        let hit = edges.iter().find_map(|&(a, b)| {
            if elim_cliques[a].is_subset(&elim_cliques[b]) {
                Some((a, b))
            } else if elim_cliques[b].is_subset(&elim_cliques[a]) {
                Some((b, a))
            } else {
                None
            }
        });
        let Some((gone, into)) = hit else { break };
        alive[gone] = false;
        edges = edges
            .into_iter()
            .filter_map(|(a, b)| {
                let a = if a == gone { into } else { a };
                let b = if b == gone { into } else { b };
                (a != b).then(|| (a.min(b), a.max(b)))
            })
            .collect();
    }
    let ids: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    let remap: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let mut clusters: Vec<Parcluster> = ids
        .iter()
        .enumerate()
        .map(|(k, &i)| Parcluster {
            name: format!("C{}", k + 1),
            prvs: elim_cliques[i].iter().map(|key| (key.clone(), reps[key].clone())).collect(),
            local: Vec::new(),
            tag: None,
        })
        .collect();
    let mut tree_edges: Vec<(usize, usize)> = edges.into_iter().map(|(a, b)| (remap[&a], remap[&b])).collect();
    // Join the components of a forest into one tree.
    let mut comp: Vec<usize> = (0..clusters.len()).collect();
    fn find(c: &mut [usize], x: usize) -> usize {
        if c[x] != x {
            let r = find(c, c[x]);
            c[x] = r;
        }
        c[x]
    }
    for &(a, b) in &tree_edges {
        let (ra, rb) = (find(&mut comp, a), find(&mut comp, b));
        comp[ra] = rb;
    }
    for i in 1..clusters.len() {
        let (r0, ri) = (find(&mut comp, 0), find(&mut comp, i));
        if r0 != ri {
            comp[ri] = r0;
            tree_edges.push((0, i));
        }
    }
    tree_edges.sort();
    for g in pfs {
        let keys = g.keys();
        let target = clusters.iter().position(|c| keys.iter().all(|k| c.prvs.contains_key(k))).expect("a cluster covers every parfactor");
        clusters[target].local.push(g.clone());
    }
    if clusters.is_empty() {
        clusters.push(Parcluster { name: "C1".into(), prvs: BTreeMap::new(), local: pfs.to_vec(), tag: None });
    }
    FoJTree { clusters, edges: tree_edges, messages: BTreeMap::new() }
}

/// Outcome of each junction tree property check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyReport {
    pub acyclic: bool,
    pub coverage: bool,
    pub running_intersection: bool,
    pub local_models_contained: bool,
    pub partition: bool,
}

impl PropertyReport {
    pub fn all_pass(&self) -> bool {
        self.acyclic && self.coverage && self.running_intersection && self.local_models_contained && self.partition
    }

    pub fn lines(&self) -> Vec<(&'static str, bool)> {
        vec![
            ("acyclic", self.acyclic),
            ("coverage", self.coverage),
            ("running-intersection", self.running_intersection),
            ("local-models-contained", self.local_models_contained),
            ("partition", self.partition),
        ]
    }
}

fn connected_within(tree: &FoJTree, nodes: &BTreeSet<usize>) -> bool {
    let Some(&start) = nodes.iter().next() else { return true };
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(x) = stack.pop() {
        for y in tree.neighbours(x) {
            if nodes.contains(&y) && seen.insert(y) {
                stack.push(y);
            }
        }
    }
    seen.len() == nodes.len()
}

/// Check the junction tree properties of `tree` with respect to `model`.
pub fn check_properties(tree: &FoJTree, model: &[Parfactor]) -> PropertyReport {
    let n = tree.clusters.len();
    let all: BTreeSet<usize> = (0..n).collect();
    let acyclic = tree.edges.len() + 1 == n.max(1) && connected_within(tree, &all);
    let coverage = model.iter().all(|g| {
        let k = g.keys();
        tree.clusters.iter().any(|c| k.iter().all(|x| c.prvs.contains_key(x)))
    });
    let keys: BTreeSet<PrvKey> = tree.clusters.iter().flat_map(|c| c.prvs.keys().cloned()).collect();
    let running_intersection = keys.iter().all(|k| connected_within(tree, &tree.covering(k).into_iter().collect()));
    let local_models_contained =
        tree.clusters.iter().all(|c| c.local.iter().all(|g| g.keys().iter().all(|k| c.prvs.contains_key(k))));
    let mut assigned: Vec<&Parfactor> = tree.clusters.iter().flat_map(|c| c.local.iter()).collect();
    let partition = assigned.len() == model.len()
        && model.iter().all(|g| match assigned.iter().position(|h| *h == g) {
            Some(i) => {
                assigned.swap_remove(i);
                true
            }
            None => false,
        });
    PropertyReport { acyclic, coverage, running_intersection, local_models_contained, partition }
}

/// Directed edges of a full inbound-then-outbound sweep from `root`.
pub fn schedule(tree: &FoJTree, root: usize) -> Vec<(usize, usize)> {
    fn visit(tree: &FoJTree, v: usize, parent: Option<usize>, up: &mut Vec<(usize, usize)>) {
        for c in tree.neighbours(v) {
            if Some(c) != parent {
                visit(tree, c, Some(v), up);
                up.push((c, v));
            }
        }
    }
    let mut up = Vec::new();
    if !tree.clusters.is_empty() {
        visit(tree, root, None, &mut up);
    }
    let down: Vec<(usize, usize)> = up.iter().rev().map(|&(a, b)| (b, a)).collect();
    up.extend(down);
    up
}

/// Local model of `i` together with all messages it received, except the
/// one from `except`.
pub fn gather(tree: &FoJTree, i: usize, except: Option<usize>) -> Vec<Parfactor> {
    let mut pfs = tree.clusters[i].local.clone();
    for j in tree.neighbours(i) {
        if Some(j) != except {
            if let Some(m) = tree.messages.get(&(j, i)) {
                pfs.extend(m.iter().cloned());
            }
        }
    }
    pfs
}

/// Compute the message from `i` to `j` given the messages already stored.
pub fn message(tree: &FoJTree, i: usize, j: usize, log: &mut OperatorLog) -> Result<Vec<Parfactor>> {
    let keep = Keep::keys(tree.separator(i, j));
    let (m, _) = eliminate(gather(tree, i, Some(j)), &keep, log)?;
    log.messages += 1;
    Ok(m)
}

/// Calibrate the tree with one inbound and one outbound sweep from the
/// root: exactly `2 * (clusters - 1)` messages.
pub fn pass_messages(tree: &FoJTree, log: &mut OperatorLog) -> Result<FoJTree> {
    let mut out = tree.clone();
    out.messages.clear();
    for (i, j) in schedule(tree, tree.root()) {
        let m = message(&out, i, j, log)?;
        out.messages.insert((i, j), m);
    }
    Ok(out)
}

/// Merge cluster `b` into cluster `a`.
pub fn merge_clusters(tree: &FoJTree, a: usize, b: usize) -> FoJTree {
    let (a, b) = (a.min(b), a.max(b));
    let mut clusters = tree.clusters.clone();
    let gone = clusters.remove(b);
    let keep = &mut clusters[a];
    keep.prvs.extend(gone.prvs);
    keep.local.extend(gone.local);
    keep.tag = match (keep.tag, gone.tag) {
        (None, t) | (t, None) => t,
        (Some(x), Some(y)) if x == y => Some(x),
        _ => Some(ClusterTag::InOut),
    };
    let idx = |x: usize| if x == b { a } else if x > b { x - 1 } else { x };
    let mut edges: Vec<(usize, usize)> = tree
        .edges
        .iter()
        .map(|&(x, y)| (idx(x), idx(y)))
        .filter(|(x, y)| x != y)
        .map(|(x, y)| (x.min(y), x.max(y)))
        .collect();
    edges.sort();
    edges.dedup();
    FoJTree { clusters, edges, messages: BTreeMap::new() }
}

/// Merge adjacent clusters whenever the message between them needs a ground
/// fallback, until no message does.
pub fn fuse(tree: &FoJTree) -> Result<FoJTree> {
    let mut t = tree.clone();
    t.messages.clear();
    'outer: loop {
        let mut probe = t.clone();
        for (i, j) in schedule(&t, t.root()) {
            let mut log = OperatorLog::new();
            let m = message(&probe, i, j, &mut log)?;
            if log.has_ground_fallback() {
                t = merge_clusters(&t, i, j);
                continue 'outer;
            }
            probe.messages.insert((i, j), m);
        }
        return Ok(t);
    }
}

/// Marginal of `q` at cluster `i` of a calibrated tree.
pub fn answer_at(tree: &FoJTree, i: usize, q: &GroundAtom) -> Result<(Vec<f64>, OperatorLog)> {
    lve_answer(&gather(tree, i, None), q, &[])
}

/// Marginal of `q` from the first cluster covering it.
pub fn answer_on_jtree(tree: &FoJTree, q: &GroundAtom) -> Result<(Vec<f64>, OperatorLog)> {
    let i = *tree.covering(&q.key()).first().ok_or_else(|| Error::QueryNotCovered(q.to_string()))?;
    answer_at(tree, i, q)
}

/// Label of a PRV; with `slices`, time 1 reads `_t` and time 0 `_t-1`.
pub fn prv_label(p: &Prv, slices: bool) -> String {
    let mut s = p.name.to_string();
    match (p.time, slices) {
        (None, _) => {}
        (Some(1), true) => s.push_str("_t"),
        (Some(0), true) => s.push_str("_t-1"),
        (Some(t), _) => {
            let _ = write!(s, "_{t}");
        }
    }
    if !p.terms.is_empty() {
        let t: Vec<String> = p.terms.iter().map(|t| t.to_string()).collect();
        let _ = write!(s, "({})", t.join(","));
    }
    s
}

/// Graphviz rendering: clusters labelled by their PRVs, edges by separators.
pub fn to_dot(tree: &FoJTree, slices: bool) -> String {
    let mut out = String::from("graph fojt {\n  node [shape=box];\n");
    for c in &tree.clusters {
        let prvs: Vec<String> = c.prvs.values().map(|p| prv_label(p, slices)).collect();
        let tag = match c.tag {
            Some(ClusterTag::In) => " [in]",
            Some(ClusterTag::Out) => " [out]",
            Some(ClusterTag::InOut) => " [in, out]",
            None => "",
        };
        let locals: Vec<&str> = c.local.iter().map(|g| &*g.name).collect();
        let _ = writeln!(
            out,
            "  {} [label=\"{}{}\\n{{{}}}\\nG: {{{}}}\"];",
            c.name,
            c.name,
            tag,
            prvs.join(", "),
            locals.join(", ")
        );
    }
    for &(a, b) in &tree.edges {
        let sep: Vec<String> =
            tree.separator(a, b).iter().map(|k| prv_label(&tree.clusters[a].prvs[k], slices)).collect();
        let _ = writeln!(out, "  {} -- {} [label=\"{}\"];", tree.clusters[a].name, tree.clusters[b].name, sep.join(", "));
    }
    out.push_str("}\n");
    out
}
