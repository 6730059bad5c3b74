//! The propositional interface algorithm: exact filtering and smoothing on
//! the grounded PDM where the forward message is one joint table over every
//! ground interface randvar.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::ground::{multiply, normalise_log, restrict, sum_out, unravel, GroundFactor, GroundModel};
use crate::ldjt::interface;
use crate::model::{Evidence, GroundAtom, Parfactor, Pdm, Query, Sym, Term};

/// Default cap on interface-table cells.
pub const DEFAULT_INTERFACE_BUDGET: usize = 1 << 20;

/// A joint table over ground atoms, row-major in `atoms` order.
#[derive(Clone, Debug, PartialEq)]
pub struct JointMessage {
    pub atoms: Vec<GroundAtom>,
    pub ranges: Vec<Vec<Sym>>,
    pub log_table: Vec<f64>,
}

impl JointMessage {
    pub fn size(&self) -> usize {
        self.log_table.len()
    }
}

/// Interface sizes predicted from domain sizes alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundWidths {
    /// `|gr(I)|`.
    pub interface_atoms: usize,
    /// Cells of the joint table over `gr(I)`.
    pub table_size: f64,
}

pub fn ground_widths(pdm: &Pdm) -> GroundWidths {
    let lvs = pdm.logvars();
    let mut atoms = 0usize;
    let mut log2 = 0.0f64;
    for p in interface(pdm).prvs {
        let n: usize = p
            .terms
            .iter()
            .map(|t| match t {
                Term::Var(v) => lvs.iter().find(|l| &l.name == v).map_or(1, |l| l.domain.len()),
                Term::Const(_) => 1,
            })
            .product();
        atoms += n;
        log2 += n as f64 * (p.range.len() as f64).log2();
    }
    GroundWidths { interface_atoms: atoms, table_size: log2.exp2().round() }
}

fn step_model(pdm: &Pdm, t: u32) -> GroundModel {
    if t == 0 {
        let pfs: Vec<Parfactor> = pdm.g0.parfactors.iter().map(|g| g.map_time(|_| Some(0))).collect();
        GroundModel::from_parfactors(&pfs)
    } else {
        let pfs: Vec<Parfactor> =
            pdm.step_parfactors().iter().map(|g| g.map_time(|s| s.map(|o| t - 1 + o))).collect();
        GroundModel::from_parfactors(&pfs)
    }
}

struct Session {
    names: BTreeSet<Sym>,
    budget: usize,
}

impl Session {
    fn interface_vars(&self, gm: &GroundModel, t: u32) -> Vec<usize> {
        (0..gm.vars.len())
            .filter(|&v| gm.vars[v].time == Some(t) && self.names.contains(&gm.vars[v].name))
            .collect()
    }

    fn check(&self, dims: &[usize], scope: &[usize], what: &str, limit: usize) -> Result<usize> {
        let size = scope.iter().map(|&v| dims[v] as f64).product::<f64>();
        if size > limit as f64 {
            return Err(Error::Budget { what: what.into(), size, budget: limit as f64 });
        }
        Ok(size as usize)
    }

    /// Add a message's factor to `gm`, interning atoms absent from it.
    fn attach(gm: &mut GroundModel, msg: &JointMessage) -> GroundFactor {
        let ids: Vec<usize> = msg.atoms.iter().zip(&msg.ranges).map(|(a, r)| gm.intern(a.clone(), r)).collect();
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by_key(|&i| ids[i]);
        let dims: Vec<usize> = msg.ranges.iter().map(Vec::len).collect();
        let sdims: Vec<usize> = order.iter().map(|&i| dims[i]).collect();
        let mut assign = vec![0; ids.len()];
        let mut table = vec![0.0; msg.log_table.len()];
        for (idx, &l) in msg.log_table.iter().enumerate() {
            unravel(idx, &dims, &mut assign);
            let o = order.iter().zip(&sdims).fold(0, |acc, (&i, &d)| acc * d + assign[i]);
            table[o] = l;
        }
        GroundFactor { scope: order.iter().map(|&i| ids[i]).collect(), log_table: table }
    }

    /// Product of `factors` with every variable outside `keep` summed out.
    fn eliminate_to(&self, mut factors: Vec<GroundFactor>, dims: &[usize], keep: &[usize]) -> Result<GroundFactor> {
        let keep_set: BTreeSet<usize> = keep.iter().copied().collect();
        let mut rest: BTreeSet<usize> =
            factors.iter().flat_map(|f| f.scope.iter().copied()).filter(|v| !keep_set.contains(v)).collect();
        let limit = self.budget.saturating_mul(64);
        while !rest.is_empty() {
            let cost = |v: usize| -> f64 {
                let s: BTreeSet<usize> =
                    factors.iter().filter(|f| f.scope.contains(&v)).flat_map(|f| f.scope.iter().copied()).collect();
                s.iter().map(|&u| dims[u] as f64).product()
            };
            let v = *rest.iter().min_by(|a, b| cost(**a).total_cmp(&cost(**b)).then(a.cmp(b))).unwrap();
            rest.remove(&v);
            let (with, without): (Vec<_>, Vec<_>) = factors.into_iter().partition(|f| f.scope.contains(&v));
            factors = without;
            let mut scope: Vec<usize> = with.iter().flat_map(|f| f.scope.iter().copied()).collect();
            scope.sort();
            scope.dedup();
            self.check(dims, &scope, "ground elimination factor", limit)?;
            let prod = with.into_iter().reduce(|a, b| multiply(&a, &b, dims)).unwrap();
            factors.push(sum_out(&prod, v, dims));
        }
        let size = self.check(dims, keep, "ground interface table", self.budget)?;
        let mut scope = keep.to_vec();
        scope.sort();
        let base = GroundFactor { scope, log_table: vec![0.0; size] };
        Ok(factors.iter().fold(base, |acc, f| multiply(&acc, f, dims)))
    }

    fn to_message(gm: &GroundModel, f: GroundFactor) -> JointMessage {
        JointMessage {
            atoms: f.scope.iter().map(|&v| gm.vars[v].clone()).collect(),
            ranges: f.scope.iter().map(|&v| gm.ranges[v].clone()).collect(),
            log_table: f.log_table,
        }
    }

    /// Step model with evidence and the optional incoming messages.
    fn prepared(
        &self,
        pdm: &Pdm,
        t: u32,
        evidence: &[Evidence],
        msgs: &[&JointMessage],
    ) -> Result<(GroundModel, Vec<GroundFactor>, Vec<usize>)> {
        let mut gm = step_model(pdm, t);
        let extra: Vec<GroundFactor> = msgs.iter().map(|m| Self::attach(&mut gm, m)).collect();
        let dims: Vec<usize> = gm.ranges.iter().map(Vec::len).collect();
        let ev: Vec<Evidence> =
            evidence.iter().filter(|e| e.step() == t || (t > 0 && e.step() == t - 1)).cloned().collect();
        let ev = gm.evidence_map(&ev)?;
        let mut factors: Vec<GroundFactor> =
            gm.factors.iter().chain(&extra).map(|f| restrict(f, &dims, &ev)).collect();
        // Indicators keep observed variables in every message scope.
        for (&v, &val) in &ev {
            let mut table = vec![f64::NEG_INFINITY; dims[v]];
            table[val] = 0.0;
            factors.push(GroundFactor { scope: vec![v], log_table: table });
        }
        Ok((gm, factors, dims))
    }

    fn forward(&self, pdm: &Pdm, t: u32, evidence: &[Evidence], alpha: Option<&JointMessage>) -> Result<JointMessage> {
        let msgs: Vec<&JointMessage> = alpha.into_iter().collect();
        let (gm, factors, dims) = self.prepared(pdm, t, evidence, &msgs)?;
        let keep = self.interface_vars(&gm, t);
        let f = self.eliminate_to(factors, &dims, &keep)?;
        Ok(Self::to_message(&gm, f))
    }

    fn backward(&self, pdm: &Pdm, t: u32, evidence: &[Evidence], beta: Option<&JointMessage>) -> Result<JointMessage> {
        let msgs: Vec<&JointMessage> = beta.into_iter().collect();
        let (gm, factors, dims) = self.prepared(pdm, t, evidence, &msgs)?;
        let keep = self.interface_vars(&gm, t - 1);
        let f = self.eliminate_to(factors, &dims, &keep)?;
        Ok(Self::to_message(&gm, f))
    }
}

/// Forward messages `alpha_0 .. alpha_{steps-1}`.
pub fn forward_messages(pdm: &Pdm, evidence: &[Evidence], steps: u32, budget: usize) -> Result<Vec<JointMessage>> {
    let s = Session { names: interface(pdm).prvs.into_iter().map(|p| p.name).collect(), budget };
    let mut out: Vec<JointMessage> = Vec::new();
    for t in 0..steps {
        let a = s.forward(pdm, t, evidence, out.last())?;
        out.push(a);
    }
    Ok(out)
}

/// Exact answer to a filtering, prediction or smoothing query.
pub fn ground_interface_answer(pdm: &Pdm, q: &Query, evidence: &[Evidence], budget: usize) -> Result<Vec<f64>> {
    let target = q.target();
    let horizon = q.current.max(target);
    let ev: Vec<Evidence> = evidence.iter().filter(|e| e.step() <= q.current).cloned().collect();
    let s = Session { names: interface(pdm).prvs.into_iter().map(|p| p.name).collect(), budget };
    let mut alpha: Option<JointMessage> = None;
    for t in 0..target {
        alpha = Some(s.forward(pdm, t, &ev, alpha.as_ref())?);
    }
    let mut beta: Option<JointMessage> = None;
    for t in (target + 1..=horizon).rev() {
        beta = Some(s.backward(pdm, t, &ev, beta.as_ref())?);
    }
    let msgs: Vec<&JointMessage> = alpha.iter().chain(beta.iter()).collect();
    let (gm, factors, dims) = s.prepared(pdm, target, &ev, &msgs)?;
    let qv = gm.var(&q.atom).ok_or_else(|| Error::QueryNotCovered(q.atom.to_string()))?;
    let f = s.eliminate_to(factors, &dims, &[qv])?;
    Ok(normalise_log(&f.log_table))
}

/// Largest forward-message table materialised over `steps` steps.
pub fn measured_interface_size(pdm: &Pdm, steps: u32, budget: usize) -> Result<usize> {
    Ok(forward_messages(pdm, &[], steps, budget)?.iter().map(JointMessage::size).max().unwrap_or(1))
}
