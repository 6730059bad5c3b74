//! Lifted variable elimination driver: shattering, evidence entry, greedy
//! elimination with a ground fallback, and query answering.

use std::collections::{BTreeMap, BTreeSet};

use super::log::{OpKind, OperatorLog};
use super::ops::{
    absorb, count_convert, count_convert_joint, crv_equiv, extend_crv, fresh_name, multiply,
    occurrence_instances, rename_free, shatter, sum_out_at, ShatterReport,
};
use crate::error::{Error, Result};
use crate::ground::ground_ve;
use crate::model::{Arg, Crv, Evidence, GroundAtom, Parfactor, PrvKey, Sym, Term};

/// Randvars that elimination must leave in place.
#[derive(Clone, Debug, Default)]
pub struct Keep {
    pub keys: BTreeSet<PrvKey>,
    pub atoms: BTreeSet<GroundAtom>,
}

impl Keep {
    pub fn keys(keys: impl IntoIterator<Item = PrvKey>) -> Self {
        Keep { keys: keys.into_iter().collect(), atoms: BTreeSet::new() }
    }

    pub fn atoms(atoms: impl IntoIterator<Item = GroundAtom>) -> Self {
        Keep { keys: BTreeSet::new(), atoms: atoms.into_iter().collect() }
    }

    fn covers(&self, key: &PrvKey, set: &BTreeSet<GroundAtom>) -> bool {
        self.keys.contains(key) || set.iter().any(|a| self.atoms.contains(a))
    }
}

fn note(log: &mut OperatorLog, report: ShatterReport) {
    for (what, size) in report.splits {
        log.record(OpKind::Split, what, size);
    }
    for (what, size) in report.groundings {
        log.record(OpKind::GroundFallback, what, size);
    }
}

/// Shatter against the observed atoms and absorb the observations.
pub fn enter_evidence(pfs: Vec<Parfactor>, evidence: &[Evidence], log: &mut OperatorLog) -> Result<Vec<Parfactor>> {
    if evidence.is_empty() {
        return Ok(pfs);
    }
    let mut ranges: BTreeMap<PrvKey, std::sync::Arc<[Sym]>> = BTreeMap::new();
    for g in &pfs {
        for a in &g.args {
            for p in a.atoms() {
                ranges.entry(p.key()).or_insert_with(|| p.range.clone());
            }
        }
    }
    let mut by_value: BTreeMap<(PrvKey, Sym), BTreeSet<GroundAtom>> = BTreeMap::new();
    let mut observed = BTreeMap::new();
    for e in evidence {
        let key = e.atom.key();
        let Some(range) = ranges.get(&key) else { continue };
        if !range.contains(&e.value) {
            return Err(Error::Range { prv: e.atom.to_string(), value: e.value.to_string() });
        }
        by_value.entry((key, e.value.clone())).or_default().insert(e.atom.clone());
        observed.insert(e.atom.clone(), e.value.clone());
    }
    let extras: Vec<(PrvKey, BTreeSet<GroundAtom>)> = by_value.into_iter().map(|((k, _), s)| (k, s)).collect();
    let (pfs, report) = shatter(pfs, &extras)?;
    note(log, report);
    let mut out = Vec::with_capacity(pfs.len());
    for g in pfs {
        let h = absorb(&g, &observed)?;
        if h.args.len() != g.args.len() {
            log.record(OpKind::Absorb, g.to_string(), h.size());
        }
        out.push(h);
    }
    Ok(out)
}

#[derive(Debug)]
struct Group {
    key: PrvKey,
    set: BTreeSet<GroundAtom>,
    members: Vec<usize>,
}

fn groups(pfs: &[Parfactor]) -> Vec<Group> {
    let mut map: BTreeMap<(PrvKey, BTreeSet<GroundAtom>), Vec<usize>> = BTreeMap::new();
    for (gi, g) in pfs.iter().enumerate() {
        for (ai, a) in g.args.iter().enumerate() {
            for (ki, p) in a.atoms().iter().enumerate() {
                let m = map.entry((p.key(), occurrence_instances(g, ai, ki))).or_default();
                if m.last() != Some(&gi) {
                    m.push(gi);
                }
            }
        }
    }
    map.into_iter().map(|((key, set), members)| Group { key, set, members }).collect()
}

fn find_occurrence(g: &Parfactor, key: &PrvKey, set: &BTreeSet<GroundAtom>) -> Result<(usize, usize)> {
    let mut found = None;
    for (ai, a) in g.args.iter().enumerate() {
        for (ki, p) in a.atoms().iter().enumerate() {
            if p.key() != *key {
                continue;
            }
            let inst = occurrence_instances(g, ai, ki);
            if inst.is_disjoint(set) {
                continue;
            }
            if found.is_some() || inst != *set {
                return Err(Error::NotEliminable(format!("{key} occurs ambiguously in {g}")));
            }
            found = Some((ai, ki));
        }
    }
    found.ok_or_else(|| Error::NotEliminable(format!("{key} not found in {g}")))
}

struct Plan {
    conversions: usize,
    result: Parfactor,
    steps: Vec<(OpKind, String, usize)>,
}

fn counted_position(g: &Parfactor, ai: usize, ki: usize) -> Option<usize> {
    match &g.args[ai] {
        Arg::Prv(_) => None,
        Arg::Count(c) => c.atoms[ki].terms.iter().position(|t| t == &Term::Var(c.counted.clone())),
    }
}

fn convert_any(g: &Parfactor, x: &str) -> Result<Parfactor> {
    match count_convert(g, x) {
        Err(Error::NotCountable(_)) => count_convert_joint(g, x),
        other => other,
    }
}

fn plan_variant(pfs: &[Parfactor], group: &Group, apart: bool) -> Result<Plan> {
    let key = &group.key;
    let set = &group.set;
    let mut steps = Vec::new();
    let mut conversions = 0;
    let mut work: Vec<Parfactor> = group.members.iter().map(|&i| pfs[i].clone()).collect();

    // Counting form must agree across occurrences.
    let mut pos = None;
    for g in &work {
        let (ai, ki) = find_occurrence(g, key, set)?;
        if let Some(p) = counted_position(g, ai, ki) {
            if pos.is_some_and(|q| q != p) {
                return Err(Error::Alignment(format!("{key} counted differently")));
            }
            pos = Some(p);
        }
    }
    if let Some(p) = pos {
        for g in work.iter_mut() {
            let (ai, ki) = find_occurrence(g, key, set)?;
            if counted_position(g, ai, ki).is_some() {
                continue;
            }
            let Term::Var(x) = g.args[ai].atoms()[ki].terms[p].clone() else {
                return Err(Error::Alignment(format!("{key} has a constant where others count")));
            };
            *g = convert_any(g, &x)?;
            conversions += 1;
            steps.push((OpKind::CountConvert, format!("{x} in {key}"), g.size()));
        }
    }

    // Shared logvar names for the eliminated atom; everything else apart.
    let mut taken: BTreeSet<Sym> = work.iter().flat_map(|g| g.all_logvars()).collect();
    let (ra, rk) = find_occurrence(&work[0], key, set)?;
    let ref_atom = work[0].args[ra].atoms()[rk].clone();
    let ref_counted = match &work[0].args[ra] {
        Arg::Count(c) => Some(c.counted.clone()),
        Arg::Prv(_) => None,
    };
    for (i, g) in work.iter_mut().enumerate() {
        let (ai, ki) = find_occurrence(g, key, set)?;
        let atom = g.args[ai].atoms()[ki].clone();
        let counted = match &g.args[ai] {
            Arg::Count(c) => Some(c.counted.clone()),
            Arg::Prv(_) => None,
        };
        let mut map = BTreeMap::new();
        for (t, r) in atom.terms.iter().zip(&ref_atom.terms) {
            match (t, r) {
                (Term::Var(v), Term::Var(w)) if Some(v) != counted.as_ref() && Some(w) != ref_counted.as_ref() => {
                    map.insert(v.clone(), w.clone());
                }
                (Term::Const(a), Term::Const(b)) if a == b => {}
                (Term::Var(v), Term::Var(w)) if Some(v) == counted.as_ref() && Some(w) == ref_counted.as_ref() => {}
                _ => return Err(Error::Alignment(format!("{atom} against {ref_atom}"))),
            }
        }
        if apart && i > 0 {
            for v in g.constraint.names() {
                if !map.contains_key(&v) {
                    let n = fresh_name(&v, &taken);
                    taken.insert(n.clone());
                    map.insert(v, n);
                }
            }
        }
        *g = rename_free(g, &map);
    }

    // Extend CRV occurrences to one common atom set.
    let crvs: Vec<Crv> = work
        .iter()
        .filter_map(|g| {
            let (ai, _) = find_occurrence(g, key, set).ok()?;
            match &g.args[ai] {
                Arg::Count(c) => Some(c.clone()),
                Arg::Prv(_) => None,
            }
        })
        .collect();
    if let Some(first) = crvs.first() {
        let mut target = first.clone();
        for c in &crvs[1..] {
            if c.values != target.values {
                return Err(Error::Alignment(format!("{c} against {target}")));
            }
            for a in &c.atoms {
                let a = a.rename_var(&c.counted, &target.counted);
                if !target.atoms.contains(&a) {
                    target.atoms.push(a);
                }
            }
        }
        for g in work.iter_mut() {
            let (ai, _) = find_occurrence(g, key, set)?;
            if let Arg::Count(c) = &g.args[ai] {
                if !crv_equiv(c, &target) {
                    *g = extend_crv(g, ai, &target)?;
                    conversions += 1;
                    steps.push((OpKind::CountConvert, format!("extend {target}"), g.size()));
                }
            }
        }
    }

    let mut it = work.into_iter();
    let mut p = it.next().expect("group has a member");
    for g in it {
        p = multiply(&p, &g)?;
        steps.push((OpKind::Multiply, key.to_string(), p.size()));
    }

    loop {
        let (ai, ki) = find_occurrence(&p, key, set)?;
        let atom = &p.args[ai].atoms()[ki];
        let vars: BTreeSet<&Sym> = atom.vars().collect();
        let Some(x) = p.constraint.names().into_iter().find(|n| !vars.contains(n)) else { break };
        p = convert_any(&p, &x)?;
        conversions += 1;
        steps.push((OpKind::CountConvert, x.to_string(), p.size()));
    }
    let (ai, ki) = find_occurrence(&p, key, set)?;
    let result = sum_out_at(&p, ai, ki)?;
    steps.push((OpKind::SumOut, key.to_string(), result.size()));
    Ok(Plan { conversions, result, steps })
}

fn plan(pfs: &[Parfactor], group: &Group) -> Option<Plan> {
    let a = plan_variant(pfs, group, false).ok();
    let b = if group.members.len() > 1 { plan_variant(pfs, group, true).ok() } else { None };
    match (a, b) {
        (Some(a), Some(b)) => {
            if (b.conversions, b.result.size()) < (a.conversions, a.result.size()) {
                Some(b)
            } else {
                Some(a)
            }
        }
        (a, b) => a.or(b),
    }
}

/// Eliminate every randvar not covered by `keep`. Returns the remaining
/// parfactors and the log of the constant factors split off on the way.
pub fn eliminate(pfs: Vec<Parfactor>, keep: &Keep, log: &mut OperatorLog) -> Result<(Vec<Parfactor>, f64)> {
    let extras: Vec<(PrvKey, BTreeSet<GroundAtom>)> =
        keep.atoms.iter().map(|a| (a.key(), [a.clone()].into())).collect();
    let (mut pfs, report) = shatter(pfs, &extras)?;
    note(log, report);
    let mut log_const = 0.0;
    loop {
        pfs.retain(|g| {
            if g.args.is_empty() {
                log_const += g.log_table[0] * g.constraint.len().max(1) as f64;
                false
            } else {
                true
            }
        });
        let candidates: Vec<Group> = groups(&pfs).into_iter().filter(|g| !keep.covers(&g.key, &g.set)).collect();
        if candidates.is_empty() {
            break;
        }
        let mut best: Option<((usize, usize, String), &Group, Plan)> = None;
        for grp in &candidates {
            if let Some(p) = plan(&pfs, grp) {
                let rank = (p.conversions, p.result.size(), grp.key.to_string());
                if best.as_ref().map_or(true, |(r, _, _)| rank < *r) {
                    best = Some((rank, grp, p));
                }
            }
        }
        match best {
            Some((_, grp, p)) => {
                for (op, what, size) in p.steps {
                    log.record(op, what, size);
                }
                let members: BTreeSet<usize> = grp.members.iter().copied().collect();
                let mut next: Vec<Parfactor> = pfs
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| !members.contains(i))
                    .map(|(_, g)| g)
                    .collect();
                next.push(p.result);
                pfs = next;
            }
            None => {
                let grp = candidates
                    .iter()
                    .filter(|g| g.members.iter().any(|&i| !pfs[i].is_ground()))
                    .min_by_key(|g| (g.set.len(), g.key.to_string()))
                    .ok_or_else(|| Error::NotEliminable("no liftable elimination on a ground model".into()))?;
                let members: BTreeSet<usize> = grp.members.iter().copied().collect();
                let mut next = Vec::with_capacity(pfs.len());
                for (i, g) in pfs.into_iter().enumerate() {
                    if members.contains(&i) && !g.is_ground() {
                        let pieces = super::ops::ground_parfactor(&g)?;
                        let size = pieces.iter().map(Parfactor::size).sum();
                        log.record(OpKind::GroundFallback, g.to_string(), size);
                        next.extend(pieces);
                    } else {
                        next.push(g);
                    }
                }
                let (p, report) = shatter(next, &extras)?;
                note(log, report);
                pfs = p;
            }
        }
    }
    Ok((pfs, log_const))
}

/// Marginal of `query` given `evidence` by lifted variable elimination.
pub fn lve_answer(pfs: &[Parfactor], query: &GroundAtom, evidence: &[Evidence]) -> Result<(Vec<f64>, OperatorLog)> {
    let mut log = OperatorLog::new();
    let range = pfs
        .iter()
        .flat_map(|g| g.args.iter().flat_map(|a| a.atoms()))
        .find(|p| p.key() == query.key())
        .map(|p| p.range.clone())
        .ok_or_else(|| Error::QueryNotCovered(query.to_string()))?;
    if let Some(e) = evidence.iter().find(|e| e.atom == *query) {
        let v = range
            .iter()
            .position(|r| *r == e.value)
            .ok_or_else(|| Error::Range { prv: query.to_string(), value: e.value.to_string() })?;
        let mut dist = vec![0.0; range.len()];
        dist[v] = 1.0;
        return Ok((dist, log));
    }
    let pfs = enter_evidence(pfs.to_vec(), evidence, &mut log)?;
    let (rest, _) = eliminate(pfs, &Keep::atoms([query.clone()]), &mut log)?;
    if rest.is_empty() {
        return Err(Error::QueryNotCovered(query.to_string()));
    }
    let dist = ground_ve(&rest, query, &[], &[])?;
    Ok((dist, log))
}
