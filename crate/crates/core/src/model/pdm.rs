use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{Arg, Constraint, GroundAtom, Logvar, Parfactor, Prv, PrvKey, Sym};
use crate::error::{Error, Result};

/// A set of parfactors together with the logvars they are declared over.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Model {
    pub logvars: Vec<Logvar>,
    pub parfactors: Vec<Parfactor>,
}

impl Model {
    pub fn new(logvars: Vec<Logvar>, parfactors: Vec<Parfactor>) -> Self {
        Model { logvars, parfactors }
    }

    pub fn logvar(&self, name: &str) -> Option<&Logvar> {
        self.logvars.iter().find(|l| &*l.name == name)
    }

    /// Every distinct PRV key with a representative PRV.
    pub fn prvs(&self) -> BTreeMap<PrvKey, Prv> {
        let mut out = BTreeMap::new();
        for g in &self.parfactors {
            for a in &g.args {
                for p in a.atoms() {
                    out.entry(p.key()).or_insert_with(|| p.clone());
                }
            }
        }
        out
    }

    /// Range of the randvar with the given name, if the model mentions it.
    pub fn range_of(&self, name: &str) -> Option<Arc<[Sym]>> {
        self.parfactors
            .iter()
            .flat_map(|g| g.args.iter().flat_map(|a| a.atoms()))
            .find(|p| &*p.name == name)
            .map(|p| p.range.clone())
    }

    /// All ground randvars of the model.
    pub fn ground_atoms(&self) -> BTreeSet<GroundAtom> {
        let mut out = BTreeSet::new();
        for g in &self.parfactors {
            for i in 0..g.args.len() {
                out.extend(g.arg_instances(i));
            }
        }
        out
    }

    pub fn max_logvars_per_parfactor(&self) -> usize {
        self.parfactors.iter().map(Parfactor::logvar_count).max().unwrap_or(0)
    }
}

/// Ground instances of a PRV under a constraint over (at least) its logvars.
pub fn ground_prv(prv: &Prv, constraint: &Constraint) -> Result<Vec<GroundAtom>> {
    let names = constraint.names();
    for v in prv.vars() {
        if !names.contains(v) {
            return Err(Error::ArityMismatch { expected: prv.logvar_count(), got: constraint.arity() });
        }
    }
    let set: BTreeSet<GroundAtom> =
        constraint.tuples().iter().map(|t| prv.instance(&names, t)).collect();
    Ok(set.into_iter().collect())
}

/// Constants a logvar takes under a constraint.
pub fn ground_logvar(lv: &Logvar, constraint: &Constraint) -> Result<Vec<Sym>> {
    let pos = constraint
        .position(&lv.name)
        .ok_or(Error::ArityMismatch { expected: 1, got: 0 })?;
    let set: BTreeSet<Sym> = constraint.tuples().into_iter().map(|t| t[pos].clone()).collect();
    Ok(set.into_iter().collect())
}

/// A parameterised probabilistic dynamic model `(G0, G->)`.
///
/// PRVs of `g0` carry time 0. PRVs of `g_arrow` carry slice offsets: 0 for
/// the previous slice `t-1`, 1 for the current slice `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pdm {
    pub g0: Model,
    pub g_arrow: Model,
}

fn times(g: &Parfactor) -> BTreeSet<Option<u32>> {
    g.args.iter().flat_map(|a| a.atoms().iter().map(|p| p.time)).collect()
}

impl Pdm {
    pub fn new(g0: Model, g_arrow: Model) -> Self {
        Pdm { g0, g_arrow }
    }

    pub fn logvars(&self) -> Vec<Logvar> {
        let mut out = self.g0.logvars.clone();
        for l in &self.g_arrow.logvars {
            if !out.iter().any(|o| o.name == l.name) {
                out.push(l.clone());
            }
        }
        out
    }

    /// Inter-slice parfactors: those mentioning both slices.
    pub fn inter_slice(&self) -> Vec<&Parfactor> {
        self.g_arrow
            .parfactors
            .iter()
            .filter(|g| {
                let t = times(g);
                t.contains(&Some(0)) && t.contains(&Some(1))
            })
            .collect()
    }

    /// Intra-slice parfactors of the given slice offset (0 or 1).
    pub fn intra(&self, slice: u32) -> Vec<&Parfactor> {
        self.g_arrow
            .parfactors
            .iter()
            .filter(|g| {
                let t = times(g);
                t.len() == 1 && t.contains(&Some(slice))
            })
            .collect()
    }

    /// Parfactors of the per-step structure `J_t`: current-slice intra
    /// parfactors and the inter-slice ones.
    pub fn step_parfactors(&self) -> Vec<Parfactor> {
        self.g_arrow
            .parfactors
            .iter()
            .filter(|g| times(g).contains(&Some(1)))
            .cloned()
            .collect()
    }

    /// Range of a randvar name anywhere in the PDM.
    pub fn range_of(&self, name: &str) -> Option<Arc<[Sym]>> {
        self.g0.range_of(name).or_else(|| self.g_arrow.range_of(name))
    }

    /// Instantiate the PDM for `steps` time steps as a flat model.
    pub fn unroll(&self, steps: u32) -> Result<Model> {
        if steps == 0 {
            return Err(Error::InvalidArgument("unroll needs at least one time step".into()));
        }
        let mut parfactors: Vec<Parfactor> = self.g0.parfactors.iter().map(|g| g.map_time(|_| Some(0))).collect();
        let step_pfs = self.step_parfactors();
        for tau in 1..steps {
            for g in &step_pfs {
                let mut inst = instantiate(g, tau);
                inst.name = format!("{}_{}", g.name, tau).into();
                parfactors.push(inst);
            }
        }
        Ok(Model { logvars: self.logvars(), parfactors })
    }
}

/// Map slice offsets of a transition parfactor to absolute time for step `t >= 1`.
pub(crate) fn instantiate(g: &Parfactor, t: u32) -> Parfactor {
    g.map_time(|s| s.map(|s| t - 1 + s))
}

/// An observed event `atom = value`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Evidence {
    pub atom: GroundAtom,
    pub value: Sym,
}

impl Evidence {
    pub fn new(atom: GroundAtom, value: &str) -> Self {
        Evidence { atom, value: value.into() }
    }

    pub fn step(&self) -> u32 {
        self.atom.time.unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryKind {
    Filtering,
    Prediction,
    Smoothing,
}

/// `P(atom_pi | E_{0:current})`; the target step is the atom's time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub atom: GroundAtom,
    pub current: u32,
}

impl Query {
    pub fn new(atom: GroundAtom, current: u32) -> Self {
        Query { atom, current }
    }

    pub fn target(&self) -> u32 {
        self.atom.time.unwrap_or(self.current)
    }

    pub fn kind(&self) -> QueryKind {
        use std::cmp::Ordering::*;
        match self.target().cmp(&self.current) {
            Equal => QueryKind::Filtering,
            Greater => QueryKind::Prediction,
            Less => QueryKind::Smoothing,
        }
    }
}

/// The PRV keys a parfactor mentions at the given slice offset.
pub(crate) fn keys_at(g: &Parfactor, slice: u32) -> BTreeSet<PrvKey> {
    g.args
        .iter()
        .flat_map(|a: &Arg| a.atoms().iter().filter(|p| p.time == Some(slice)).map(Prv::key))
        .collect()
}
