//! Static liftability analysis for LDJT.
//!
//! The verdict follows the completeness results for LDJT: models with at
//! most two logvars per parfactor are handled without algorithm-induced
//! groundings unless the inter-slice parfactors carry two-logvar PRVs on
//! both slices. Verdicts are sufficient conditions only, so models outside
//! the two-logvar class are reported as `Unknown`.

use std::fmt;

use crate::model::{Model, Parfactor, Pdm};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntersliceCase {
    /// No two-logvar PRV in any inter-slice parfactor.
    CaseI,
    /// Two-logvar PRVs only on the previous slice.
    CaseII,
    /// Two-logvar PRVs only on the current slice.
    CaseIII,
    /// Two-logvar PRVs on both slices.
    Blocked,
    /// No inter-slice parfactor.
    NotApplicable,
}

impl fmt::Display for IntersliceCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntersliceCase::CaseI => "case_i",
            IntersliceCase::CaseII => "case_ii",
            IntersliceCase::CaseIII => "case_iii",
            IntersliceCase::Blocked => "blocked",
            IntersliceCase::NotApplicable => "not_applicable",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    LdjtLiftable,
    LdjtMayGround,
    Unknown,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::LdjtLiftable => "ldjt_liftable",
            Verdict::LdjtMayGround => "ldjt_may_ground",
            Verdict::Unknown => "unknown",
        })
    }
}

impl Verdict {
    /// Exit code used by the `check` command.
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::LdjtLiftable => 0,
            Verdict::LdjtMayGround => 2,
            Verdict::Unknown => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub max_logvars_per_parfactor: usize,
    pub max_logvars_per_prv: usize,
    pub in_m2lv: bool,
    pub in_m1prv: bool,
    pub interslice_case: IntersliceCase,
    pub verdict: Verdict,
    pub rationale: String,
}

impl Classification {
    /// Human-readable multi-line report.
    pub fn report(&self) -> String {
        format!(
            "max logvars per parfactor: {}\nmax logvars per PRV: {}\nM^2lv: {}\nM^1prv: {}\ninter-slice case: {}\nverdict: {}\nrationale: {}\n",
            self.max_logvars_per_parfactor,
            self.max_logvars_per_prv,
            self.in_m2lv,
            self.in_m1prv,
            self.interslice_case,
            self.verdict,
            self.rationale
        )
    }
}

/// Anything whose parfactors can be classified.
pub trait ModelSource {
    fn all_parfactors(&self) -> Vec<&Parfactor>;
}

impl ModelSource for Model {
    fn all_parfactors(&self) -> Vec<&Parfactor> {
        self.parfactors.iter().collect()
    }
}

impl ModelSource for Pdm {
    fn all_parfactors(&self) -> Vec<&Parfactor> {
        self.g0.parfactors.iter().chain(&self.g_arrow.parfactors).collect()
    }
}

fn max_prv_logvars(g: &Parfactor) -> usize {
    g.args.iter().flat_map(|a| a.atoms()).map(|p| p.logvar_count()).max().unwrap_or(0)
}

/// Class fields only; the case is `NotApplicable` and the verdict `Unknown`.
pub fn model_class<M: ModelSource + ?Sized>(m: &M) -> Classification {
    let pfs = m.all_parfactors();
    let per_pf = pfs.iter().map(|g| g.logvar_count()).max().unwrap_or(0);
    let per_prv = pfs.iter().map(|g| max_prv_logvars(g)).max().unwrap_or(0);
    Classification {
        max_logvars_per_parfactor: per_pf,
        max_logvars_per_prv: per_prv,
        in_m2lv: per_pf <= 2,
        in_m1prv: per_prv <= 1,
        interslice_case: IntersliceCase::NotApplicable,
        verdict: Verdict::Unknown,
        rationale: String::new(),
    }
}

/// Case label over the whole inter-slice set.
pub fn interslice_case(pdm: &Pdm) -> IntersliceCase {
    let inter = pdm.inter_slice();
    if inter.is_empty() {
        return IntersliceCase::NotApplicable;
    }
    let (mut prev, mut cur) = (false, false);
    for p in inter.iter().flat_map(|g| g.args.iter().flat_map(|a| a.atoms())) {
        if p.logvar_count() >= 2 {
            match p.time {
                Some(0) => prev = true,
                _ => cur = true,
            }
        }
    }
    match (prev, cur) {
        (false, false) => IntersliceCase::CaseI,
        (true, false) => IntersliceCase::CaseII,
        (false, true) => IntersliceCase::CaseIII,
        (true, true) => IntersliceCase::Blocked,
    }
}

const COMPLETE_2LV: &str = "completeness theorem: LDJT is complete for 2-logvar models whose inter-slice parfactors do not carry \
two-logvar PRVs for both time slice t and t+1";
const COMPLETE_1PRV: &str = "M^1prv corollary: LDJT is complete for M^1prv, where every PRV has at most one logvar";
const NOT_COMPLETE: &str = "counterexample theorem: LDJT is not complete for all 2-logvar models: two-logvar PRVs on both slices of \
the inter-slice parfactors force eliminating a two-logvar PRV before the others, which may ground";
const BEYOND: &str = "outside the complete classes: the model is outside M^2lv; completeness results do not apply, although LDJT may \
still find a lifted solution";

pub fn predict_liftability(pdm: &Pdm) -> Classification {
    let mut c = model_class(pdm);
    c.interslice_case = interslice_case(pdm);
    let (verdict, rationale) = if !c.in_m2lv {
        (Verdict::Unknown, BEYOND.to_string())
    } else if c.interslice_case == IntersliceCase::Blocked {
        (Verdict::LdjtMayGround, NOT_COMPLETE.to_string())
    } else if c.in_m1prv {
        (Verdict::LdjtLiftable, COMPLETE_1PRV.to_string())
    } else {
        (Verdict::LdjtLiftable, format!("{} ({})", COMPLETE_2LV, c.interslice_case))
    };
    c.verdict = verdict;
    c.rationale = rationale;
    c
}
