//! Parameterised probabilistic (dynamic) models: logvars, constraints, PRVs,
//! counting randvars, parfactors, models and their temporal extension.

mod constraint;
mod parfactor;
mod pdm;
mod validate;

use std::fmt;
use std::sync::Arc;

pub use constraint::{Constraint, Join};
pub use parfactor::Parfactor;
pub use pdm::{ground_logvar, ground_prv, Evidence, Model, Pdm, Query, QueryKind};
pub(crate) use pdm::keys_at;
pub use validate::{validate_model, validate_pdm, Diagnostic as ModelDiagnostic};

use crate::histogram::{histogram_count, histograms, Histograms};

pub type Sym = Arc<str>;

pub fn sym(s: &str) -> Sym {
    Arc::from(s)
}

/// A logical variable together with its ordered domain of constants.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Logvar {
    pub name: Sym,
    pub domain: Arc<[Sym]>,
}

impl Logvar {
    pub fn new<I, S>(name: &str, domain: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Logvar { name: sym(name), domain: domain.into_iter().map(|c| sym(c.as_ref())).collect() }
    }

    pub fn renamed(&self, name: Sym) -> Self {
        Logvar { name, domain: self.domain.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Sym),
    Const(Sym),
}

impl Term {
    pub fn var(&self) -> Option<&Sym> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) | Term::Const(v) => write!(f, "{v}"),
        }
    }
}

/// Identity of a randvar template irrespective of its argument terms.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrvKey {
    pub name: Sym,
    pub time: Option<u32>,
}

impl fmt::Display for PrvKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.time {
            Some(t) => write!(f, "{}@{}", self.name, t),
            None => write!(f, "{}", self.name),
        }
    }
}

/// A parameterised randvar `R(L1, ..., Ln)` with an optional time index and
/// an ordered finite range.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prv {
    pub name: Sym,
    pub time: Option<u32>,
    pub terms: Vec<Term>,
    pub range: Arc<[Sym]>,
}

impl Prv {
    pub fn new(name: &str, terms: Vec<Term>, range: Arc<[Sym]>) -> Self {
        Prv { name: sym(name), time: None, terms, range }
    }

    pub fn at(mut self, time: u32) -> Self {
        self.time = Some(time);
        self
    }

    pub fn key(&self) -> PrvKey {
        PrvKey { name: self.name.clone(), time: self.time }
    }

    pub fn vars(&self) -> impl Iterator<Item = &Sym> {
        self.terms.iter().filter_map(Term::var)
    }

    pub fn logvar_count(&self) -> usize {
        let mut v: Vec<&Sym> = self.vars().collect();
        v.sort();
        v.dedup();
        v.len()
    }

    pub fn value_index(&self, value: &str) -> Option<usize> {
        self.range.iter().position(|v| &**v == value)
    }

    pub fn with_time(&self, time: Option<u32>) -> Self {
        Prv { time, ..self.clone() }
    }

    pub fn rename_var(&self, old: &str, new: &Sym) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| match t {
                Term::Var(v) if &**v == old => Term::Var(new.clone()),
                other => other.clone(),
            })
            .collect();
        Prv { terms, ..self.clone() }
    }

    pub fn substitute(&self, var: &str, value: &Sym) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| match t {
                Term::Var(v) if &**v == var => Term::Const(value.clone()),
                other => other.clone(),
            })
            .collect();
        Prv { terms, ..self.clone() }
    }

    /// Ground instance under an assignment of logvar names to constants.
    pub fn instance(&self, names: &[Sym], tuple: &[Sym]) -> GroundAtom {
        let args = self
            .terms
            .iter()
            .map(|t| match t {
                Term::Const(c) => c.clone(),
                Term::Var(v) => {
                    let i = names.iter().position(|n| n == v).expect("unbound logvar");
                    tuple[i].clone()
                }
            })
            .collect();
        GroundAtom { name: self.name.clone(), time: self.time, args }
    }
}

impl fmt::Display for Prv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.key())?;
        if !self.terms.is_empty() {
            let t: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
            write!(f, "({})", t.join(","))?;
        }
        Ok(())
    }
}

/// A ground randvar instance such as `Pub@3(x1,j2)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub name: Sym,
    pub time: Option<u32>,
    pub args: Vec<Sym>,
}

impl GroundAtom {
    pub fn new(name: &str, time: Option<u32>, args: &[&str]) -> Self {
        GroundAtom { name: sym(name), time, args: args.iter().map(|a| sym(a)).collect() }
    }

    pub fn key(&self) -> PrvKey {
        PrvKey { name: self.name.clone(), time: self.time }
    }

    pub fn with_time(&self, time: Option<u32>) -> Self {
        GroundAtom { time, ..self.clone() }
    }

    /// The same atom written as a PRV with constant terms.
    pub fn as_prv(&self, range: Arc<[Sym]>) -> Prv {
        Prv {
            name: self.name.clone(),
            time: self.time,
            terms: self.args.iter().cloned().map(Term::Const).collect(),
            range,
        }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.key())?;
        if !self.args.is_empty() {
            let a: Vec<&str> = self.args.iter().map(|a| &**a).collect();
            write!(f, "({})", a.join(","))?;
        }
        Ok(())
    }
}

/// A counting randvar `#X[A1(X,..), ..., Ak(X,..)]`. Its value is the
/// histogram of joint values of the atoms over the counted constants.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Crv {
    pub counted: Sym,
    pub values: Arc<[Sym]>,
    pub atoms: Vec<Prv>,
}

impl Crv {
    /// Number of joint atom values, the histogram bucket count.
    pub fn buckets(&self) -> usize {
        self.atoms.iter().map(|a| a.range.len()).product()
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn histograms(&self) -> std::sync::Arc<Histograms> {
        histograms(self.count(), self.buckets())
    }

    /// Free logvars of the atoms other than the counted one.
    pub fn free_vars(&self) -> impl Iterator<Item = &Sym> {
        self.atoms.iter().flat_map(|a| a.vars()).filter(move |v| **v != self.counted)
    }

    pub fn range_size(&self) -> usize {
        histogram_count(self.count(), self.buckets()) as usize
    }
}

impl fmt::Display for Crv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a: Vec<String> = self.atoms.iter().map(|a| a.to_string()).collect();
        write!(f, "#{}[{}]", self.counted, a.join(", "))
    }
}

/// An argument of a parfactor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arg {
    Prv(Prv),
    Count(Crv),
}

impl Arg {
    pub fn size(&self) -> usize {
        match self {
            Arg::Prv(p) => p.range.len(),
            Arg::Count(c) => c.range_size(),
        }
    }

    pub fn atoms(&self) -> &[Prv] {
        match self {
            Arg::Prv(p) => std::slice::from_ref(p),
            Arg::Count(c) => &c.atoms,
        }
    }

    pub fn is_count(&self) -> bool {
        matches!(self, Arg::Count(_))
    }

    /// Free (uncounted) logvars mentioned by the argument.
    pub fn free_vars(&self) -> Vec<Sym> {
        let mut v: Vec<Sym> = match self {
            Arg::Prv(p) => p.vars().cloned().collect(),
            Arg::Count(c) => c.free_vars().cloned().collect(),
        };
        v.sort();
        v.dedup();
        v
    }

    pub fn mentions_key(&self, key: &PrvKey) -> bool {
        self.atoms().iter().any(|a| a.key() == *key)
    }
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Prv(p) => write!(f, "{p}"),
            Arg::Count(c) => write!(f, "{c}"),
        }
    }
}

pub fn boolean_range() -> Arc<[Sym]> {
    [sym("false"), sym("true")].into_iter().collect()
}
