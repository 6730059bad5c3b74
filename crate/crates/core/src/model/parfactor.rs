use std::collections::BTreeSet;
use std::fmt;

use super::{Arg, Constraint, Crv, GroundAtom, Prv, PrvKey, Sym, Term};
use crate::error::{Error, Result};

/// A potential function over a sequence of PRVs / CRVs under a constraint.
///
/// Potentials are stored as natural logarithms in row-major order over the
/// argument ranges (last argument varies fastest). The constraint ranges
/// over the free logvars only; a counted logvar's values live in its CRV.
/// A free logvar that no argument mentions multiplies the ground factor
/// once per value it takes.
#[derive(Clone, Debug, PartialEq)]
pub struct Parfactor {
    pub name: Sym,
    pub args: Vec<Arg>,
    pub constraint: Constraint,
    pub log_table: Vec<f64>,
}

impl Parfactor {
    /// Build a parfactor from plain (non-log) potentials, checking the
    /// structural invariants.
    pub fn new(name: &str, args: Vec<Arg>, constraint: Constraint, potentials: Vec<f64>) -> Result<Self> {
        let size: usize = args.iter().map(Arg::size).product();
        if potentials.len() != size {
            return Err(Error::InvalidModel(format!(
                "parfactor {name} needs {size} potentials, got {}",
                potentials.len()
            )));
        }
        if potentials.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidModel(format!("parfactor {name} has a negative or non-finite potential")));
        }
        if !potentials.iter().any(|p| *p > 0.0) {
            return Err(Error::InvalidModel(format!("parfactor {name} has no positive potential")));
        }
        let mut lv: Vec<Sym> = args.iter().flat_map(|a| a.free_vars()).collect();
        lv.sort();
        lv.dedup();
        let mut cn = constraint.names();
        cn.sort();
        if lv != cn {
            return Err(Error::InvalidModel(format!(
                "constraint of {name} covers {:?} but arguments use {:?}",
                cn, lv
            )));
        }
        for a in &args {
            if let Arg::Prv(p) = a {
                let mut vars: Vec<&Sym> = p.vars().collect();
                let n = vars.len();
                vars.sort();
                vars.dedup();
                if vars.len() != n {
                    return Err(Error::InvalidModel(format!("{p} repeats a logvar")));
                }
            }
        }
        Ok(Parfactor {
            name: name.into(),
            args,
            constraint,
            log_table: potentials.iter().map(|p| p.ln()).collect(),
        })
    }

    pub fn from_log(name: Sym, args: Vec<Arg>, constraint: Constraint, log_table: Vec<f64>) -> Self {
        debug_assert_eq!(log_table.len(), args.iter().map(Arg::size).product::<usize>());
        Parfactor { name, args, constraint, log_table }
    }

    /// Parfactor with all potentials equal to one.
    pub fn ones(name: &str, args: Vec<Arg>, constraint: Constraint) -> Self {
        let size = args.iter().map(Arg::size).product();
        Parfactor { name: name.into(), args, constraint, log_table: vec![0.0; size] }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.args.iter().map(Arg::size).collect()
    }

    pub fn size(&self) -> usize {
        self.log_table.len()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(self.dims()).fold(0, |acc, (&c, d)| acc * d + c)
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        let dims = self.dims();
        let mut out = vec![0; dims.len()];
        for i in (0..dims.len()).rev() {
            out[i] = idx % dims[i];
            idx /= dims[i];
        }
        out
    }

    pub fn potential(&self, coords: &[usize]) -> f64 {
        self.log_table[self.index(coords)].exp()
    }

    pub fn potentials(&self) -> Vec<f64> {
        self.log_table.iter().map(|l| l.exp()).collect()
    }

    /// Free logvars mentioned by the arguments.
    pub fn arg_logvars(&self) -> Vec<Sym> {
        let mut lv: Vec<Sym> = self.args.iter().flat_map(|a| a.free_vars()).collect();
        lv.sort();
        lv.dedup();
        lv
    }

    /// Free logvars plus counted ones.
    pub fn all_logvars(&self) -> Vec<Sym> {
        let mut lv = self.constraint.names();
        for a in &self.args {
            if let Arg::Count(c) = a {
                lv.push(c.counted.clone());
            }
        }
        lv.sort();
        lv.dedup();
        lv
    }

    pub fn keys(&self) -> BTreeSet<PrvKey> {
        self.args.iter().flat_map(|a| a.atoms().iter().map(Prv::key)).collect()
    }

    pub fn mentions(&self, key: &PrvKey) -> bool {
        self.args.iter().any(|a| a.mentions_key(key))
    }

    pub fn is_ground(&self) -> bool {
        self.constraint.arity() == 0 && !self.args.iter().any(Arg::is_count)
    }

    pub fn crvs(&self) -> impl Iterator<Item = &Crv> {
        self.args.iter().filter_map(|a| match a {
            Arg::Count(c) => Some(c),
            _ => None,
        })
    }

    /// Ground instances of an atom of this parfactor. `counted` is the CRV the
    /// atom belongs to, if any.
    pub fn instances(&self, atom: &Prv, counted: Option<&Crv>) -> BTreeSet<GroundAtom> {
        let names = self.constraint.names();
        let mut out = BTreeSet::new();
        for t in self.constraint.tuples() {
            match counted {
                None => {
                    out.insert(atom.instance(&names, &t));
                }
                Some(c) => {
                    let mut n2 = names.clone();
                    n2.push(c.counted.clone());
                    for v in c.values.iter() {
                        let mut t2 = t.clone();
                        t2.push(v.clone());
                        out.insert(atom.instance(&n2, &t2));
                    }
                }
            }
        }
        out
    }

    /// Ground instances of the argument at `idx` (all its atoms).
    pub fn arg_instances(&self, idx: usize) -> BTreeSet<GroundAtom> {
        match &self.args[idx] {
            Arg::Prv(p) => self.instances(p, None),
            Arg::Count(c) => c.atoms.iter().flat_map(|a| self.instances(a, Some(c))).collect(),
        }
    }

    pub fn rename_logvar(&self, old: &str, new: &Sym) -> Self {
        let args = self
            .args
            .iter()
            .map(|a| match a {
                Arg::Prv(p) => Arg::Prv(p.rename_var(old, new)),
                Arg::Count(c) => {
                    let counted = if &*c.counted == old { new.clone() } else { c.counted.clone() };
                    Arg::Count(Crv {
                        counted,
                        values: c.values.clone(),
                        atoms: c.atoms.iter().map(|p| p.rename_var(old, new)).collect(),
                    })
                }
            })
            .collect();
        Parfactor {
            name: self.name.clone(),
            args,
            constraint: self.constraint.rename(old, new),
            log_table: self.log_table.clone(),
        }
    }

    /// Shift every time index by `offset` (used to instantiate slices).
    pub fn map_time(&self, f: impl Fn(Option<u32>) -> Option<u32>) -> Self {
        let shift = |p: &Prv| p.with_time(f(p.time));
        let args = self
            .args
            .iter()
            .map(|a| match a {
                Arg::Prv(p) => Arg::Prv(shift(p)),
                Arg::Count(c) => Arg::Count(Crv {
                    counted: c.counted.clone(),
                    values: c.values.clone(),
                    atoms: c.atoms.iter().map(shift).collect(),
                }),
            })
            .collect();
        Parfactor { args, ..self.clone() }
    }

    /// Number of distinct logvars mentioned by PRV arguments, counted ones
    /// included.
    pub fn logvar_count(&self) -> usize {
        let mut v: Vec<Sym> = Vec::new();
        for a in &self.args {
            for p in a.atoms() {
                v.extend(p.vars().cloned());
            }
        }
        v.sort();
        v.dedup();
        v.len()
    }

    pub fn has_constants(&self) -> bool {
        self.args.iter().flat_map(|a| a.atoms()).any(|p| p.terms.iter().any(|t| matches!(t, Term::Const(_))))
    }
}

impl fmt::Display for Parfactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a: Vec<String> = self.args.iter().map(|a| a.to_string()).collect();
        write!(f, "{}({})", self.name, a.join(", "))?;
        if !self.constraint.is_top() {
            write!(f, " | {} tuples", self.constraint.len())?;
        }
        Ok(())
    }
}
