use std::collections::{BTreeSet, HashMap};

use super::{Logvar, Sym};
use crate::error::{Error, Result};

/// Allowed constant tuples over an ordered sequence of logvars. `None` is the
/// symbolic top constraint (full cross product of the domains).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Constraint {
    logvars: Vec<Logvar>,
    tuples: Option<BTreeSet<Vec<Sym>>>,
}

/// Result of a natural join together with the uniform number of joined
/// tuples each input tuple takes part in.
#[derive(Clone, Debug)]
pub struct Join {
    pub constraint: Constraint,
    pub left_multiplicity: usize,
    pub right_multiplicity: usize,
}

impl Constraint {
    pub fn top(logvars: Vec<Logvar>) -> Self {
        Constraint { logvars, tuples: None }
    }

    pub fn empty_scope() -> Self {
        Constraint::top(Vec::new())
    }

    pub fn from_tuples<I>(logvars: Vec<Logvar>, tuples: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<Sym>>,
    {
        let mut set = BTreeSet::new();
        for t in tuples {
            if t.len() != logvars.len() {
                return Err(Error::ArityMismatch { expected: logvars.len(), got: t.len() });
            }
            for (lv, c) in logvars.iter().zip(&t) {
                if !lv.domain.contains(c) {
                    return Err(Error::NotInDomain {
                        logvar: lv.name.to_string(),
                        constant: c.to_string(),
                    });
                }
            }
            set.insert(t);
        }
        Ok(Constraint { logvars, tuples: Some(set) }.simplified())
    }

    fn from_set_unchecked(logvars: Vec<Logvar>, set: BTreeSet<Vec<Sym>>) -> Self {
        Constraint { logvars, tuples: Some(set) }.simplified()
    }

    /// Collapse an extensional set that happens to be the full cross product.
    fn simplified(self) -> Self {
        match &self.tuples {
            Some(set) if set.len() as f64 == self.full_size() && !self.logvars.is_empty() => {
                Constraint { logvars: self.logvars, tuples: None }
            }
            _ => self,
        }
    }

    fn full_size(&self) -> f64 {
        self.logvars.iter().map(|l| l.domain.len() as f64).product()
    }

    pub fn logvars(&self) -> &[Logvar] {
        &self.logvars
    }

    pub fn names(&self) -> Vec<Sym> {
        self.logvars.iter().map(|l| l.name.clone()).collect()
    }

    pub fn arity(&self) -> usize {
        self.logvars.len()
    }

    pub fn is_top(&self) -> bool {
        self.tuples.is_none()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.logvars.iter().position(|l| &*l.name == name)
    }

    pub fn logvar(&self, name: &str) -> Option<&Logvar> {
        self.logvars.iter().find(|l| &*l.name == name)
    }

    /// Number of allowed tuples.
    pub fn len(&self) -> usize {
        match &self.tuples {
            None => self.full_size() as usize,
            Some(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All allowed tuples in a deterministic order.
    pub fn tuples(&self) -> Vec<Vec<Sym>> {
        match &self.tuples {
            Some(s) => s.iter().cloned().collect(),
            None => {
                let mut out = vec![Vec::with_capacity(self.logvars.len())];
                for lv in &self.logvars {
                    let mut next = Vec::with_capacity(out.len() * lv.domain.len());
                    for t in &out {
                        for c in lv.domain.iter() {
                            let mut t2 = t.clone();
                            t2.push(c.clone());
                            next.push(t2);
                        }
                    }
                    out = next;
                }
                out
            }
        }
    }

    pub fn contains(&self, tuple: &[Sym]) -> bool {
        match &self.tuples {
            Some(s) => s.contains(tuple),
            None => {
                tuple.len() == self.logvars.len()
                    && self.logvars.iter().zip(tuple).all(|(l, c)| l.domain.contains(c))
            }
        }
    }

    /// Projection onto the named logvars, in the given order.
    pub fn project(&self, names: &[Sym]) -> Constraint {
        let lvs: Vec<Logvar> = names
            .iter()
            .map(|n| self.logvar(n).expect("projection onto unknown logvar").clone())
            .collect();
        match &self.tuples {
            None => Constraint::top(lvs),
            Some(set) => {
                let idx: Vec<usize> = names.iter().map(|n| self.position(n).unwrap()).collect();
                let proj = set.iter().map(|t| idx.iter().map(|&i| t[i].clone()).collect()).collect();
                Constraint::from_set_unchecked(lvs, proj)
            }
        }
    }

    /// Keep only tuples satisfying `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&[Sym]) -> bool) -> Constraint {
        let set: BTreeSet<Vec<Sym>> = self.tuples().into_iter().filter(|t| keep(t)).collect();
        Constraint::from_set_unchecked(self.logvars.clone(), set)
    }

    pub fn rename(&self, old: &str, new: &Sym) -> Constraint {
        let mut c = self.clone();
        for lv in &mut c.logvars {
            if &*lv.name == old {
                lv.name = new.clone();
            }
        }
        c
    }

    /// Drop the named logvar by substituting its (single) value away.
    pub fn remove(&self, name: &str) -> Constraint {
        let keep: Vec<Sym> = self.names().into_iter().filter(|n| &**n != name).collect();
        self.project(&keep)
    }

    /// Uniform number of tuples per tuple of the projection onto `on`, if any.
    pub fn uniform_multiplicity(&self, on: &[Sym]) -> Option<usize> {
        if self.tuples.is_none() {
            let total = self.full_size();
            let part: f64 = on
                .iter()
                .map(|n| self.logvar(n).map(|l| l.domain.len() as f64).unwrap_or(1.0))
                .product();
            return Some((total / part).round() as usize);
        }
        let idx: Vec<usize> = on.iter().map(|n| self.position(n).unwrap()).collect();
        let mut counts: HashMap<Vec<Sym>, usize> = HashMap::new();
        for t in self.tuples.as_ref().unwrap() {
            *counts.entry(idx.iter().map(|&i| t[i].clone()).collect()).or_default() += 1;
        }
        let mut it = counts.values();
        let first = *it.next()?;
        it.all(|&c| c == first).then_some(first)
    }

    /// For each tuple of the projection onto all logvars but `name`, the set of
    /// values `name` takes. Returns the common value set when it is the same
    /// for every context.
    pub fn independent_values(&self, name: &str) -> Option<Vec<Sym>> {
        let pos = self.position(name)?;
        if self.tuples.is_none() {
            return Some(self.logvars[pos].domain.to_vec());
        }
        let mut groups: HashMap<Vec<Sym>, BTreeSet<Sym>> = HashMap::new();
        for t in self.tuples.as_ref().unwrap() {
            let mut key = t.clone();
            let v = key.remove(pos);
            groups.entry(key).or_default().insert(v);
        }
        let mut it = groups.values();
        let first = it.next()?.clone();
        if it.all(|s| *s == first) {
            Some(first.into_iter().collect())
        } else {
            None
        }
    }

    /// Natural join on shared logvar names. Fails unless every tuple of both
    /// inputs takes part in the same positive number of joined tuples.
    pub fn join(&self, other: &Constraint) -> Result<Join> {
        let shared: Vec<Sym> =
            self.names().into_iter().filter(|n| other.position(n).is_some()).collect();
        let other_only: Vec<Logvar> = other
            .logvars
            .iter()
            .filter(|l| self.position(&l.name).is_none())
            .cloned()
            .collect();
        let mut lvs = self.logvars.clone();
        lvs.extend(other_only.iter().cloned());
        for n in &shared {
            if self.logvar(n).unwrap().domain != other.logvar(n).unwrap().domain {
                return Err(Error::Alignment(format!("logvar {n} has different domains")));
            }
        }
        if self.is_top() && other.is_top() {
            let left: f64 = other_only.iter().map(|l| l.domain.len() as f64).product();
            let right: f64 = self
                .logvars
                .iter()
                .filter(|l| other.position(&l.name).is_none())
                .map(|l| l.domain.len() as f64)
                .product();
            return Ok(Join {
                constraint: Constraint::top(lvs),
                left_multiplicity: left as usize,
                right_multiplicity: right as usize,
            });
        }
        let ls: Vec<usize> = shared.iter().map(|n| self.position(n).unwrap()).collect();
        let rs: Vec<usize> = shared.iter().map(|n| other.position(n).unwrap()).collect();
        let r_only: Vec<usize> =
            other_only.iter().map(|l| other.position(&l.name).unwrap()).collect();
        let right_tuples = other.tuples();
        let mut by_key: HashMap<Vec<Sym>, Vec<usize>> = HashMap::new();
        for (i, t) in right_tuples.iter().enumerate() {
            by_key.entry(rs.iter().map(|&p| t[p].clone()).collect()).or_default().push(i);
        }
        let mut right_counts = vec![0usize; right_tuples.len()];
        let mut left_mult: Option<usize> = None;
        let mut out = BTreeSet::new();
        for lt in self.tuples() {
            let key: Vec<Sym> = ls.iter().map(|&p| lt[p].clone()).collect();
            let matches = by_key.get(&key).map(|v| v.as_slice()).unwrap_or(&[]);
            match left_mult {
                None => left_mult = Some(matches.len()),
                Some(m) if m != matches.len() => {
                    return Err(Error::Alignment("non-uniform join multiplicity".into()))
                }
                _ => {}
            }
            for &ri in matches {
                right_counts[ri] += 1;
                let mut t = lt.clone();
                t.extend(r_only.iter().map(|&p| right_tuples[ri][p].clone()));
                out.insert(t);
            }
        }
        let left_multiplicity = left_mult.unwrap_or(0);
        let right_multiplicity = right_counts.first().copied().unwrap_or(0);
        if left_multiplicity == 0
            || right_multiplicity == 0
            || right_counts.iter().any(|&c| c != right_multiplicity)
        {
            return Err(Error::Alignment("constraints do not cover each other".into()));
        }
        Ok(Join {
            constraint: Constraint::from_set_unchecked(lvs, out),
            left_multiplicity,
            right_multiplicity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Logvar;

    fn lv(name: &str, n: usize) -> Logvar {
        Logvar::new(name, (1..=n).map(|i| format!("{}{}", name.to_lowercase(), i)))
    }

    #[test]
    fn top_counts_cross_product() {
        let c = Constraint::top(vec![lv("X", 3), lv("J", 2)]);
        assert_eq!(c.len(), 6);
        assert_eq!(c.tuples().len(), 6);
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let err = Constraint::from_tuples(vec![lv("X", 3)], vec![vec!["x1".into(), "x2".into()]]);
        assert!(matches!(err, Err(Error::ArityMismatch { expected: 1, got: 2 })));
    }

    #[test]
    fn full_set_collapses_to_top() {
        let x = lv("X", 2);
        let c = Constraint::from_tuples(vec![x], vec![vec!["x1".into()], vec!["x2".into()]]).unwrap();
        assert!(c.is_top());
    }

    #[test]
    fn join_multiplicities() {
        let xj = Constraint::top(vec![lv("X", 3), lv("J", 2)]);
        let j = Constraint::top(vec![lv("J", 2)]);
        let jn = xj.join(&j).unwrap();
        assert_eq!(jn.left_multiplicity, 1);
        assert_eq!(jn.right_multiplicity, 3);
        let j1 = Constraint::from_tuples(vec![lv("J", 2)], vec![vec!["j1".into()]]).unwrap();
        assert!(xj.join(&j1).is_err());
        let jn = j1.join(&xj.filter(|t| &*t[1] == "j1")).unwrap();
        assert_eq!(jn.constraint.len(), 3);
    }

    #[test]
    fn independent_values_detects_asymmetry() {
        let c = Constraint::top(vec![lv("X", 3), lv("J", 2)])
            .filter(|t| !(&*t[0] == "x1" && &*t[1] == "j1"));
        assert_eq!(c.independent_values("X"), None);
        assert_eq!(c.uniform_multiplicity(&["J".into()]), None);
    }
}
