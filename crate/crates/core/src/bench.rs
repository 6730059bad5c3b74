//! Complexity instrumentation: lifted widths, the analytic cost model of
//! LDJT, seeded scenario runs and least-squares scaling fits.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::dsl::parse_model;
use crate::error::{Error, Result};
use crate::fojt::FoJTree;
use crate::ground_interface::{forward_messages, ground_widths, DEFAULT_INTERFACE_BUDGET};
use crate::ldjt::{construct, interface, TemporalState};
use crate::model::{Arg, Evidence, GroundAtom, Model, Pdm, Query};

/// `(w_g, w_#)` of a pair of trees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LiftedWidth {
    pub w_g: usize,
    pub w_count: usize,
}

/// Width of one tree: the largest parcluster PRV count and the largest
/// number of CRVs present at a parcluster, local or received.
pub fn tree_width(tree: &FoJTree) -> LiftedWidth {
    let mut w = LiftedWidth { w_g: 0, w_count: 0 };
    for (i, c) in tree.clusters.iter().enumerate() {
        w.w_g = w.w_g.max(c.prvs.len());
        let received = tree.messages.iter().filter(|((_, to), _)| *to == i).flat_map(|(_, m)| m.iter());
        let crvs: BTreeSet<String> = c
            .local
            .iter()
            .chain(received)
            .flat_map(|g| g.args.iter())
            .filter(|a| a.is_count())
            .map(|a| a.to_string())
            .collect();
        w.w_count = w.w_count.max(crvs.len());
    }
    w
}

pub fn lifted_width(j0: &FoJTree, jt: &FoJTree) -> LiftedWidth {
    let (a, b) = (tree_width(j0), tree_width(jt));
    LiftedWidth { w_g: a.w_g.max(b.w_g), w_count: a.w_count.max(b.w_count) }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexityParams {
    /// Number of time steps.
    pub t: u64,
    /// Largest logvar domain size.
    pub n: u64,
    /// Largest counted-logvar domain size.
    pub n_count: u64,
    /// Largest range size.
    pub r: u64,
    /// Largest range among counted PRVs.
    pub r_count: u64,
    /// Largest parcluster count over `J_0` and `J_t`.
    pub n_j: u64,
    /// Number of queries.
    pub m: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostMode {
    Evidence,
    MsgWorst,
    MsgAvg,
    MsgBest,
    Qa,
    TotalWorst,
    TotalAvg,
    TotalBest,
}

impl CostMode {
    pub const ALL: [CostMode; 8] = [
        CostMode::Evidence,
        CostMode::MsgWorst,
        CostMode::MsgAvg,
        CostMode::MsgBest,
        CostMode::Qa,
        CostMode::TotalWorst,
        CostMode::TotalAvg,
        CostMode::TotalBest,
    ];
}

/// The largest possible factor, `r^{w_g} * n_#^{w_# * r_#}`.
pub fn largest_factor(p: &ComplexityParams, w: &LiftedWidth) -> f64 {
    (p.r as f64).powi(w.w_g as i32) * (p.n_count as f64).powf((w.w_count as u64 * p.r_count) as f64)
}

/// Unit-cost evaluation of the big-O expression for `mode`; `log2(n)` is
/// floored at 1.
pub fn estimate_cost(p: &ComplexityParams, w: &LiftedWidth, mode: CostMode) -> f64 {
    let base = (p.n.max(2) as f64).log2() * largest_factor(p, w);
    let (t, nj, m) = (p.t as f64, p.n_j as f64, p.m as f64);
    let k = match mode {
        CostMode::Evidence | CostMode::MsgAvg | CostMode::MsgBest => t * nj,
        CostMode::MsgWorst => t * t * nj,
        CostMode::Qa => m,
        CostMode::TotalWorst => (t * t + t) * nj + m,
        CostMode::TotalAvg | CostMode::TotalBest => t * nj + m,
    };
    k * base
}

/// Parameters of a PDM and its per-step trees for `t` steps and `m` queries.
pub fn complexity_params(pdm: &Pdm, trees: &[&FoJTree], t: u64, m: u64) -> ComplexityParams {
    let lvs = pdm.logvars();
    let n = lvs.iter().map(|l| l.domain.len() as u64).max().unwrap_or(1).max(1);
    let mut r = 1u64;
    for g in pdm.g0.parfactors.iter().chain(&pdm.g_arrow.parfactors) {
        for p in g.args.iter().flat_map(|a| a.atoms()) {
            r = r.max(p.range.len() as u64);
        }
    }
    let (mut n_count, mut r_count) = (1u64, 1u64);
    for tree in trees {
        let received = tree.messages.values().flatten();
        for g in tree.clusters.iter().flat_map(|c| c.local.iter()).chain(received) {
            for a in &g.args {
                if let Arg::Count(c) = a {
                    n_count = n_count.max(c.values.len() as u64);
                    r_count = r_count.max(c.atoms.iter().map(|p| p.range.len() as u64).max().unwrap_or(1));
                }
            }
        }
    }
    let n_j = trees.iter().map(|t| t.clusters.len() as u64).max().unwrap_or(1).max(1);
    ComplexityParams { t: t.max(1), n, n_count, r, r_count, n_j, m: m.max(1) }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
pub enum Family {
    #[serde(rename = "case_i")]
    CaseI,
    #[serde(rename = "case_i_hot")]
    CaseIHot,
    #[serde(rename = "case_ii")]
    CaseII,
    #[serde(rename = "case_iii")]
    CaseIII,
    #[serde(rename = "blocked")]
    Blocked,
    #[serde(rename = "one_prv")]
    OnePrv,
    #[serde(rename = "chain")]
    Chain,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::CaseI => "case_i",
            Family::CaseIHot => "case_i_hot",
            Family::CaseII => "case_ii",
            Family::CaseIII => "case_iii",
            Family::Blocked => "blocked",
            Family::OnePrv => "one_prv",
            Family::Chain => "chain",
        })
    }
}

impl Family {
    fn source(&self) -> &'static str {
        match self {
            Family::CaseI => include_str!("../fixtures/case_i.pdm"),
            Family::CaseIHot => include_str!("../fixtures/case_i_hot.pdm"),
            Family::CaseII => include_str!("../fixtures/case_ii.pdm"),
            Family::CaseIII => include_str!("../fixtures/case_iii.pdm"),
            Family::Blocked => include_str!("../fixtures/gex.pdm"),
            Family::OnePrv => include_str!("../fixtures/onepv.pdm"),
            Family::Chain => include_str!("../fixtures/chain.pdm"),
        }
    }

    /// The family's PDM with `|D(X)| = n`; with `scale_all` every domain
    /// gets size `n`.
    pub fn pdm(&self, n: usize, scale_all: bool) -> Result<Pdm> {
        let text = resize_domains(self.source(), n, scale_all);
        parse_model(&text)?
            .as_pdm()
            .cloned()
            .ok_or_else(|| Error::InvalidModel(format!("{self} is not temporal")))
    }
}

fn resize_domains(src: &str, n: usize, scale_all: bool) -> String {
    let mut out = String::new();
    for line in src.lines() {
        let t = line.trim_start();
        let name = t.strip_prefix("domain ").and_then(|r| r.split_whitespace().next());
        match name {
            Some(d) if d == "X" || scale_all => {
                let consts: Vec<String> = (1..=n).map(|i| format!("{}{i}", d.to_lowercase())).collect();
                out.push_str(&format!("domain {d} = {{{}}};\n", consts.join(", ")));
            }
            _ => {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub enum Mode {
    #[serde(rename = "ldjt")]
    Ldjt,
    #[serde(rename = "ground")]
    Ground,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ldjt => "ldjt",
            Mode::Ground => "ground",
        })
    }
}

fn default_timeout() -> u64 {
    60_000
}

fn default_budget() -> usize {
    DEFAULT_INTERFACE_BUDGET
}

#[derive(Clone, Debug, Deserialize)]
pub struct ScenarioConfig {
    pub family: Family,
    pub modes: Vec<Mode>,
    pub n: Vec<usize>,
    #[serde(rename = "T")]
    pub t: Vec<u32>,
    #[serde(default)]
    pub evidence_rate: f64,
    #[serde(default)]
    pub scale_all: bool,
}

#[derive(Clone, Debug, Deserialize)]
pub struct BenchConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    pub scenario: Vec<ScenarioConfig>,
}

pub fn parse_config(text: &str) -> Result<BenchConfig> {
    toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("bench config: {e}")))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Ok,
    Timeout,
    Failed(String),
}

/// One row of the measurement table. Counts are absent for ground runs
/// and failed runs.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub scenario: String,
    pub n: usize,
    pub t: u32,
    pub mode: Mode,
    pub wall_ms: f64,
    pub mults: Option<usize>,
    pub sumouts: Option<usize>,
    pub countconvs: Option<usize>,
    pub groundings: Option<usize>,
    pub max_factor: Option<usize>,
    pub predicted_cost: f64,
    pub cell_writes: Option<u64>,
    /// Operator counts of each forward step, `(mults, sumouts, countconvs)`.
    pub per_step: Vec<(usize, usize, usize)>,
    pub outcome: Outcome,
}

pub const CSV_HEADER: &str = "scenario,n,T,mode,wall_ms,mults,sumouts,countconvs,groundings,max_factor,predicted_cost";

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), |x| x.to_string())
}

impl Measurement {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{},{},{},{},{},{}",
            self.scenario,
            self.n,
            self.t,
            self.mode,
            self.wall_ms,
            opt(&self.mults),
            opt(&self.sumouts),
            opt(&self.countconvs),
            opt(&self.groundings),
            opt(&self.max_factor),
            self.predicted_cost
        )
    }
}

pub fn to_csv(rows: &[Measurement]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// A single seeded run.
#[derive(Clone, Debug)]
pub struct Run {
    pub family: Family,
    pub n: usize,
    pub t: u32,
    pub mode: Mode,
    pub evidence_rate: f64,
    pub scale_all: bool,
    pub seed: u64,
    pub budget: usize,
}

fn slice_atoms(m: &Model, slice: Option<u32>) -> Vec<GroundAtom> {
    m.ground_atoms().into_iter().filter(|a| slice.map_or(true, |s| a.time == Some(s))).collect()
}

/// Per-step random observations, reproducible from `seed`.
pub fn random_evidence(pdm: &Pdm, steps: u32, rate: f64, seed: u64) -> Result<Vec<Vec<Evidence>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = slice_atoms(&pdm.g0, None);
    let later = slice_atoms(&Model::new(pdm.logvars(), pdm.step_parfactors()), Some(1));
    let mut out = Vec::new();
    for t in 0..steps {
        let atoms = if t == 0 { &first } else { &later };
        let mut ev = Vec::new();
        if rate > 0.0 {
            for a in atoms {
                if rng.gen_bool(rate.min(1.0)) {
                    let range = pdm.range_of(&a.name).ok_or_else(|| Error::InvalidModel(a.name.to_string()))?;
                    let v = &range[rng.gen_range(0..range.len())];
                    ev.push(Evidence::new(a.with_time(Some(t)), v));
                }
            }
        }
        out.push(ev);
    }
    Ok(out)
}

fn measure_ldjt(run: &Run, pdm: &Pdm) -> Result<Measurement> {
    let evidence = random_evidence(pdm, run.t, run.evidence_rate, run.seed)?;
    let start = Instant::now();
    let structures = Arc::new(construct(pdm));
    let mut st = TemporalState::new(structures.clone());
    for ev in &evidence {
        st.forward_step(ev)?;
    }
    let per_step = st.logs.values().map(|l| (l.multiplications, l.sum_outs, l.count_conversions)).collect();
    let last = run.t.saturating_sub(1);
    let atom = interface(pdm)
        .prvs
        .first()
        .and_then(|p| slice_atoms(&pdm.g0, None).into_iter().find(|a| a.name == p.name))
        .or_else(|| slice_atoms(&pdm.g0, None).into_iter().next())
        .ok_or_else(|| Error::InvalidModel("model has no randvars".into()))?;
    st.query(&Query::new(atom.with_time(Some(last)), last))?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let log = st.total_log();
    let mut trees: Vec<&FoJTree> = Vec::new();
    if let Some(c) = st.calibrated.get(&0) {
        trees.push(c);
    }
    if let Some(c) = st.calibrated.get(&last).filter(|_| last > 0) {
        trees.push(c);
    }
    let params = complexity_params(pdm, &trees, run.t as u64, 1);
    let width = match trees.as_slice() {
        [a, b] => lifted_width(a, b),
        [a] => tree_width(a),
        _ => LiftedWidth { w_g: 0, w_count: 0 },
    };
    Ok(Measurement {
        scenario: run.family.to_string(),
        n: run.n,
        t: run.t,
        mode: run.mode,
        wall_ms,
        mults: Some(log.multiplications),
        sumouts: Some(log.sum_outs),
        countconvs: Some(log.count_conversions),
        groundings: Some(log.groundings),
        max_factor: Some(log.max_factor_size),
        predicted_cost: estimate_cost(&params, &width, CostMode::TotalBest),
        cell_writes: Some(log.cell_writes),
        per_step,
        outcome: Outcome::Ok,
    })
}

fn measure_ground(run: &Run, pdm: &Pdm) -> Result<Measurement> {
    let evidence: Vec<Evidence> = random_evidence(pdm, run.t, run.evidence_rate, run.seed)?.concat();
    let predicted = ground_widths(pdm).table_size;
    let start = Instant::now();
    let msgs = forward_messages(pdm, &evidence, run.t, run.budget);
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut m = Measurement {
        scenario: run.family.to_string(),
        n: run.n,
        t: run.t,
        mode: run.mode,
        wall_ms,
        mults: None,
        sumouts: None,
        countconvs: None,
        groundings: None,
        max_factor: None,
        predicted_cost: predicted,
        cell_writes: None,
        per_step: Vec::new(),
        outcome: Outcome::Ok,
    };
    match msgs {
        Ok(msgs) => m.max_factor = msgs.iter().map(|a| a.size()).max(),
        Err(e) => m.outcome = Outcome::Failed(e.to_string()),
    }
    Ok(m)
}

/// Execute one run in the calling thread.
pub fn measure(run: &Run) -> Result<Measurement> {
    let pdm = run.family.pdm(run.n, run.scale_all)?;
    match run.mode {
        Mode::Ldjt => measure_ldjt(run, &pdm),
        Mode::Ground => measure_ground(run, &pdm),
    }
}

fn failed(run: &Run, outcome: Outcome, wall_ms: f64) -> Measurement {
    Measurement {
        scenario: run.family.to_string(),
        n: run.n,
        t: run.t,
        mode: run.mode,
        wall_ms,
        mults: None,
        sumouts: None,
        countconvs: None,
        groundings: None,
        max_factor: None,
        predicted_cost: f64::NAN,
        cell_writes: None,
        per_step: Vec::new(),
        outcome,
    }
}

/// Execute one run on a worker thread; a run past `timeout` is recorded,
/// and its thread is left to finish in the background.
pub fn measure_with_timeout(run: &Run, timeout: Duration) -> Measurement {
    let (tx, rx) = mpsc::channel();
    let r = run.clone();
    std::thread::spawn(move || {
        let _ = tx.send(measure(&r));
    });
    match rx.recv_timeout(timeout) {
        Ok(Ok(m)) => m,
        Ok(Err(e)) => failed(run, Outcome::Failed(e.to_string()), 0.0),
        Err(_) => failed(run, Outcome::Timeout, timeout.as_secs_f64() * 1e3),
    }
}

/// Expand the config into runs, each with its own derived seed.
pub fn plan_runs(config: &BenchConfig) -> Vec<Run> {
    let mut runs = Vec::new();
    for s in &config.scenario {
        for &mode in &s.modes {
            for &n in &s.n {
                for &t in &s.t {
                    let seed = config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(runs.len() as u64);
                    runs.push(Run {
                        family: s.family,
                        n,
                        t,
                        mode,
                        evidence_rate: s.evidence_rate,
                        scale_all: s.scale_all,
                        seed,
                        budget: config.budget,
                    });
                }
            }
        }
    }
    runs
}

pub fn run_suite(config: &BenchConfig) -> Vec<Measurement> {
    let timeout = Duration::from_millis(config.timeout_ms);
    plan_runs(config).iter().map(|r| measure_with_timeout(r, timeout)).collect()
}

/// Least-squares line `y = intercept + slope * x` with its R².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub const MIN_FIT_POINTS: usize = 5;

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() < MIN_FIT_POINTS || xs.len() != ys.len() {
        return Err(Error::Fit { needed: MIN_FIT_POINTS, got: xs.len().min(ys.len()) });
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LineFit { slope, intercept, r2 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    T,
    N,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    WallMs,
    CellWrites,
    MaxFactor,
}

/// Linear, power (`log y` on `log x`) and log-linear (`log y` on `x`) fits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingFit {
    pub linear: LineFit,
    pub power: LineFit,
    pub log_linear: LineFit,
}

pub fn fit_points(xs: &[f64], ys: &[f64]) -> Result<ScalingFit> {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    Ok(ScalingFit { linear: fit_line(xs, ys)?, power: fit_line(&lx, &ly)?, log_linear: fit_line(xs, &ly)? })
}

/// Fit `metric` against `axis` over the successful rows with a positive
/// metric value.
pub fn fit_scaling(rows: &[Measurement], axis: Axis, metric: Metric) -> Result<ScalingFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in rows.iter().filter(|r| r.outcome == Outcome::Ok) {
        let y = match metric {
            Metric::WallMs => Some(r.wall_ms),
            Metric::CellWrites => r.cell_writes.map(|c| c as f64),
            Metric::MaxFactor => r.max_factor.map(|m| m as f64),
        };
        if let Some(y) = y.filter(|y| *y > 0.0) {
            xs.push(match axis {
                Axis::T => r.t as f64,
                Axis::N => r.n as f64,
            });
            ys.push(y);
        }
    }
    fit_points(&xs, &ys)
}
