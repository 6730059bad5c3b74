//! Ground semantics: grounding parfactors into propositional factors, full
//! joint enumeration and ground variable elimination. These are the
//! reference answers every lifted engine is checked against.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::histogram::log_sum_exp;
use crate::model::{Arg, Evidence, GroundAtom, Model, Parfactor, Sym};

/// Default cap on the number of ground randvars for enumeration.
pub const DEFAULT_ENUM_BUDGET: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct GroundFactor {
    /// Distinct variable ids.
    pub scope: Vec<usize>,
    /// Log potentials, row-major over `scope`.
    pub log_table: Vec<f64>,
}

/// A propositional model obtained by grounding.
#[derive(Clone, Debug, Default)]
pub struct GroundModel {
    pub vars: Vec<GroundAtom>,
    pub ranges: Vec<Vec<Sym>>,
    index: HashMap<GroundAtom, usize>,
    pub factors: Vec<GroundFactor>,
}

impl GroundModel {
    pub fn from_parfactors<'a>(pfs: impl IntoIterator<Item = &'a Parfactor>) -> Self {
        let mut gm = GroundModel::default();
        for g in pfs {
            gm.add_parfactor(g);
        }
        gm
    }

    pub fn from_model(model: &Model) -> Self {
        Self::from_parfactors(&model.parfactors)
    }

    pub fn var(&self, atom: &GroundAtom) -> Option<usize> {
        self.index.get(atom).copied()
    }

    pub(crate) fn intern(&mut self, atom: GroundAtom, range: &[Sym]) -> usize {
        if let Some(&i) = self.index.get(&atom) {
            return i;
        }
        let i = self.vars.len();
        self.vars.push(atom.clone());
        self.ranges.push(range.to_vec());
        self.index.insert(atom, i);
        i
    }

    /// Add every ground factor of `g`.
    pub fn add_parfactor(&mut self, g: &Parfactor) {
        let names = g.constraint.names();
        for ctx in g.constraint.tuples() {
            // Per argument: the variable ids it covers.
            let mut arg_vars: Vec<Vec<usize>> = Vec::with_capacity(g.args.len());
            for a in &g.args {
                match a {
                    Arg::Prv(p) => {
                        let id = self.intern(p.instance(&names, &ctx), &p.range);
                        arg_vars.push(vec![id]);
                    }
                    Arg::Count(c) => {
                        let mut n2 = names.clone();
                        n2.push(c.counted.clone());
                        let mut ids = Vec::new();
                        for v in c.values.iter() {
                            let mut t = ctx.clone();
                            t.push(v.clone());
                            for atom in &c.atoms {
                                ids.push(self.intern(atom.instance(&n2, &t), &atom.range));
                            }
                        }
                        arg_vars.push(ids);
                    }
                }
            }
            let mut scope: Vec<usize> = arg_vars.iter().flatten().copied().collect();
            scope.sort();
            scope.dedup();
            let dims: Vec<usize> = scope.iter().map(|&v| self.ranges[v].len()).collect();
            let size: usize = dims.iter().product();
            let pos: HashMap<usize, usize> = scope.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let mut table = Vec::with_capacity(size);
            let mut assign = vec![0usize; scope.len()];
            for idx in 0..size {
                unravel(idx, &dims, &mut assign);
                let mut coords = Vec::with_capacity(g.args.len());
                for (a, ids) in g.args.iter().zip(&arg_vars) {
                    match a {
                        Arg::Prv(_) => coords.push(assign[pos[&ids[0]]]),
                        Arg::Count(c) => {
                            let k = c.atoms.len();
                            let mut hist = vec![0u32; c.buckets()];
                            for chunk in ids.chunks(k) {
                                let mut cell = 0;
                                for (atom, id) in c.atoms.iter().zip(chunk) {
                                    cell = cell * atom.range.len() + assign[pos[id]];
                                }
                                hist[cell] += 1;
                            }
                            coords.push(c.histograms().index_of(&hist).expect("histogram"));
                        }
                    }
                }
                table.push(g.log_table[g.index(&coords)]);
            }
            self.factors.push(GroundFactor { scope, log_table: table });
        }
    }

    /// Log of the unnormalised product of all factors at a full assignment.
    pub fn log_weight(&self, assign: &[usize]) -> f64 {
        self.factors
            .iter()
            .map(|f| {
                let idx = f.scope.iter().fold(0, |acc, &v| acc * self.ranges[v].len() + assign[v]);
                f.log_table[idx]
            })
            .sum()
    }

    /// Observed value index per variable, checking ranges.
    pub fn evidence_map(&self, evidence: &[Evidence]) -> Result<HashMap<usize, usize>> {
        let mut out = HashMap::new();
        for e in evidence {
            let Some(v) = self.var(&e.atom) else { continue };
            let idx = self.ranges[v].iter().position(|r| *r == e.value).ok_or_else(|| Error::Range {
                prv: e.atom.to_string(),
                value: e.value.to_string(),
            })?;
            out.insert(v, idx);
        }
        Ok(out)
    }
}

pub(crate) fn unravel(mut idx: usize, dims: &[usize], out: &mut [usize]) {
    for i in (0..dims.len()).rev() {
        out[i] = idx % dims[i];
        idx /= dims[i];
    }
}

/// Normalise a vector of log weights into probabilities.
pub fn normalise_log(logs: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(logs.iter().copied());
    logs.iter().map(|l| (l - z).exp()).collect()
}

/// Exact marginal of `query` by summing the full joint over all assignments.
pub fn full_joint_enumerate(
    parfactors: &[Parfactor],
    query: &GroundAtom,
    evidence: &[Evidence],
    budget: usize,
) -> Result<Vec<f64>> {
    let gm = GroundModel::from_parfactors(parfactors);
    if gm.vars.len() > budget {
        return Err(Error::Budget {
            what: "full joint enumeration".into(),
            size: gm.vars.len() as f64,
            budget: budget as f64,
        });
    }
    let ev = gm.evidence_map(evidence)?;
    let q = gm.var(query).ok_or_else(|| Error::QueryNotCovered(query.to_string()))?;
    let dims: Vec<usize> = gm.ranges.iter().map(Vec::len).collect();
    let total: usize = dims.iter().product();
    let mut acc = vec![Vec::new(); dims[q]];
    let mut assign = vec![0usize; dims.len()];
    for idx in 0..total {
        unravel(idx, &dims, &mut assign);
        if ev.iter().any(|(&v, &val)| assign[v] != val) {
            continue;
        }
        acc[assign[q]].push(gm.log_weight(&assign));
    }
    let logs: Vec<f64> = acc.into_iter().map(log_sum_exp).collect();
    Ok(normalise_log(&logs))
}

/// Log partition function (with evidence) by enumeration.
pub fn log_partition(parfactors: &[Parfactor], evidence: &[Evidence], budget: usize) -> Result<f64> {
    let gm = GroundModel::from_parfactors(parfactors);
    if gm.vars.len() > budget {
        return Err(Error::Budget { what: "enumeration".into(), size: gm.vars.len() as f64, budget: budget as f64 });
    }
    let ev = gm.evidence_map(evidence)?;
    let dims: Vec<usize> = gm.ranges.iter().map(Vec::len).collect();
    let total: usize = dims.iter().product();
    let mut assign = vec![0usize; dims.len()];
    let mut logs = Vec::new();
    for idx in 0..total {
        unravel(idx, &dims, &mut assign);
        if ev.iter().any(|(&v, &val)| assign[v] != val) {
            continue;
        }
        logs.push(gm.log_weight(&assign));
    }
    Ok(log_sum_exp(logs))
}

/// Ground variable elimination along an explicit order of variable ids; any
/// variable missing from the order is eliminated afterwards in id order.
pub fn ground_ve(
    parfactors: &[Parfactor],
    query: &GroundAtom,
    evidence: &[Evidence],
    order: &[usize],
) -> Result<Vec<f64>> {
    let gm = GroundModel::from_parfactors(parfactors);
    let ev = gm.evidence_map(evidence)?;
    let q = gm.var(query).ok_or_else(|| Error::QueryNotCovered(query.to_string()))?;
    let dims: Vec<usize> = gm.ranges.iter().map(Vec::len).collect();
    let mut factors: Vec<GroundFactor> = gm.factors.iter().map(|f| restrict(f, &dims, &ev)).collect();
    let mut seq: Vec<usize> = order.iter().copied().filter(|&v| v != q).collect();
    let seen: BTreeSet<usize> = seq.iter().copied().collect();
    seq.extend((0..dims.len()).filter(|v| *v != q && !seen.contains(v)));
    for v in seq {
        let (with, without): (Vec<_>, Vec<_>) = factors.into_iter().partition(|f| f.scope.contains(&v));
        factors = without;
        if with.is_empty() {
            continue;
        }
        let prod = with.into_iter().reduce(|a, b| multiply(&a, &b, &dims)).unwrap();
        factors.push(sum_out(&prod, v, &dims));
    }
    let mut logs = vec![0.0; dims[q]];
    for f in &factors {
        if f.scope.is_empty() {
            continue;
        }
        for (i, l) in logs.iter_mut().enumerate() {
            *l += f.log_table[i];
        }
    }
    Ok(normalise_log(&logs))
}

pub(crate) fn restrict(f: &GroundFactor, dims: &[usize], ev: &HashMap<usize, usize>) -> GroundFactor {
    if !f.scope.iter().any(|v| ev.contains_key(v)) {
        return f.clone();
    }
    let fdims: Vec<usize> = f.scope.iter().map(|&v| dims[v]).collect();
    let mut assign = vec![0; f.scope.len()];
    let scope: Vec<usize> = f.scope.iter().copied().filter(|v| !ev.contains_key(v)).collect();
    let mut table = Vec::new();
    for idx in 0..f.log_table.len() {
        unravel(idx, &fdims, &mut assign);
        if f.scope.iter().zip(&assign).all(|(v, a)| ev.get(v).map_or(true, |e| e == a)) {
            table.push(f.log_table[idx]);
        }
    }
    GroundFactor { scope, log_table: table }
}

pub(crate) fn multiply(a: &GroundFactor, b: &GroundFactor, dims: &[usize]) -> GroundFactor {
    let mut scope: Vec<usize> = a.scope.iter().chain(&b.scope).copied().collect();
    scope.sort();
    scope.dedup();
    let sdims: Vec<usize> = scope.iter().map(|&v| dims[v]).collect();
    let size: usize = sdims.iter().product();
    let pa: Vec<usize> = a.scope.iter().map(|v| scope.iter().position(|s| s == v).unwrap()).collect();
    let pb: Vec<usize> = b.scope.iter().map(|v| scope.iter().position(|s| s == v).unwrap()).collect();
    let mut assign = vec![0; scope.len()];
    let mut table = Vec::with_capacity(size);
    for idx in 0..size {
        unravel(idx, &sdims, &mut assign);
        let ia = pa.iter().fold(0, |acc, &p| acc * sdims[p] + assign[p]);
        let ib = pb.iter().fold(0, |acc, &p| acc * sdims[p] + assign[p]);
        table.push(a.log_table[ia] + b.log_table[ib]);
    }
    GroundFactor { scope, log_table: table }
}

pub(crate) fn sum_out(f: &GroundFactor, v: usize, dims: &[usize]) -> GroundFactor {
    let pos = f.scope.iter().position(|&s| s == v).unwrap();
    let fdims: Vec<usize> = f.scope.iter().map(|&s| dims[s]).collect();
    let scope: Vec<usize> = f.scope.iter().copied().filter(|&s| s != v).collect();
    let odims: Vec<usize> = scope.iter().map(|&s| dims[s]).collect();
    let size: usize = odims.iter().product();
    let mut buckets = vec![Vec::new(); size];
    let mut assign = vec![0; f.scope.len()];
    for idx in 0..f.log_table.len() {
        unravel(idx, &fdims, &mut assign);
        let o = assign
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .fold(0, |acc, (i, &a)| acc * fdims[i] + a);
        buckets[o].push(f.log_table[idx]);
    }
    GroundFactor { scope, log_table: buckets.into_iter().map(log_sum_exp).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{boolean_range, Constraint, Logvar, Prv, Term};

    #[test]
    fn single_factor_normalises() {
        let hot = Prv::new("Hot", vec![], boolean_range());
        let g = Parfactor::new("phi", vec![Arg::Prv(hot)], Constraint::empty_scope(), vec![1.0, 3.0]).unwrap();
        let p = full_joint_enumerate(&[g], &GroundAtom::new("Hot", None, &[]), &[], 20).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn budget_error_over_limit() {
        let x = Logvar::new("X", (0..25).map(|i| format!("x{i}")));
        let a = Prv::new("A", vec![Term::Var(x.name.clone())], boolean_range());
        let g = Parfactor::new("phi", vec![Arg::Prv(a)], Constraint::top(vec![x]), vec![1.0, 2.0]).unwrap();
        let r = full_joint_enumerate(&[g], &GroundAtom::new("A", None, &["x0"]), &[], 20);
        assert!(matches!(r, Err(Error::Budget { .. })));
    }
}
