use std::collections::BTreeMap;
use std::fmt;

use super::{Model, Parfactor, Pdm};

/// Machine-readable model diagnostics.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Diagnostic {
    UndeclaredLogvar(String),
    EmptyDomain(String),
    DuplicateConstant { logvar: String, constant: String },
    RangeMismatch(String),
    BadSlice(String),
    NonStationary,
    /// Warning: the transition has no inter-slice parfactor.
    NoInterSlice,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UndeclaredLogvar(l) => write!(f, "undeclared logvar {l}"),
            Diagnostic::EmptyDomain(l) => write!(f, "logvar {l} has an empty domain"),
            Diagnostic::DuplicateConstant { logvar, constant } => {
                write!(f, "constant {constant} repeated in the domain of {logvar}")
            }
            Diagnostic::RangeMismatch(r) => write!(f, "randvar {r} is used with different ranges"),
            Diagnostic::BadSlice(p) => write!(f, "{p} has a slice other than 0 or 1"),
            Diagnostic::NonStationary => write!(f, "slice t-1 and slice t transition structures differ"),
            Diagnostic::NoInterSlice => write!(f, "warning: no inter-slice parfactor"),
        }
    }
}

pub fn validate_model(model: &Model) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for lv in &model.logvars {
        if lv.domain.is_empty() {
            out.push(Diagnostic::EmptyDomain(lv.name.to_string()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in lv.domain.iter() {
            if !seen.insert(c.clone()) {
                out.push(Diagnostic::DuplicateConstant { logvar: lv.name.to_string(), constant: c.to_string() });
            }
        }
    }
    let mut ranges: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for g in &model.parfactors {
        for name in g.all_logvars() {
            let declared = model.logvars.iter().any(|l| l.name == name);
            let d = Diagnostic::UndeclaredLogvar(name.to_string());
            if !declared && !out.contains(&d) {
                out.push(d);
            }
        }
        for a in &g.args {
            for p in a.atoms() {
                let r: Vec<String> = p.range.iter().map(|s| s.to_string()).collect();
                match ranges.get(&*p.name) {
                    Some(prev) if *prev != r => {
                        let d = Diagnostic::RangeMismatch(p.name.to_string());
                        if !out.contains(&d) {
                            out.push(d);
                        }
                    }
                    None => {
                        ranges.insert(p.name.to_string(), r);
                    }
                    _ => {}
                }
            }
        }
    }
    out
}

fn signature(g: &Parfactor, shift: bool) -> String {
    let g = if shift { g.map_time(|t| t.map(|t| t + 1)) } else { g.clone() };
    let args: Vec<String> = g.args.iter().map(|a| a.to_string()).collect();
    let tuples: Vec<String> = if g.constraint.is_top() {
        vec!["T".into()]
    } else {
        g.constraint.tuples().iter().map(|t| t.join(",")).collect()
    };
    let table: Vec<String> = g.log_table.iter().map(|v| format!("{:.12e}", v)).collect();
    format!("{}|{}|{}", args.join(";"), tuples.join(" "), table.join(" "))
}

pub fn validate_pdm(pdm: &Pdm) -> Vec<Diagnostic> {
    let mut out = validate_model(&pdm.g0);
    for d in validate_model(&pdm.g_arrow) {
        if !out.contains(&d) {
            out.push(d);
        }
    }
    let mut merged = pdm.g0.clone();
    merged.logvars = pdm.logvars();
    merged.parfactors.extend(pdm.g_arrow.parfactors.iter().cloned());
    for d in validate_model(&merged) {
        if matches!(d, Diagnostic::RangeMismatch(_)) && !out.contains(&d) {
            out.push(d);
        }
    }
    for g in &pdm.g_arrow.parfactors {
        for a in &g.args {
            for p in a.atoms() {
                if !matches!(p.time, Some(0) | Some(1)) {
                    out.push(Diagnostic::BadSlice(p.to_string()));
                }
            }
        }
    }
    let mut prev: Vec<String> = pdm.intra(0).iter().map(|g| signature(g, true)).collect();
    let mut cur: Vec<String> = pdm.intra(1).iter().map(|g| signature(g, false)).collect();
    prev.sort();
    cur.sort();
    if prev != cur {
        out.push(Diagnostic::NonStationary);
    }
    if pdm.inter_slice().is_empty() {
        out.push(Diagnostic::NoInterSlice);
    }
    out
}
