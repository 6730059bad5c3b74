//! Seeded random models shared by the property suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tempolift::ground::GroundModel;
use tempolift::histogram::log_sum_exp;
use tempolift::model::{sym, Arg, Constraint, GroundAtom, Logvar, Model, Parfactor, Pdm, Prv, Sym, Term};

pub mod ops;

pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng8 {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Randvar pool: `A`, `B(X)`, `C(Y)`, `D(X,Y)`.
pub struct Pool {
    pub x: Logvar,
    pub y: Logvar,
    pub ranges: [Arc<[Sym]>; 4],
}

fn range(k: usize) -> Arc<[Sym]> {
    match k {
        2 => vec![sym("false"), sym("true")].into(),
        _ => (0..k).map(|i| sym(&format!("v{i}"))).collect(),
    }
}

impl Pool {
    pub fn random(r: &mut Rng8, max_range: usize) -> Pool {
        let dx = r.gen_range(1..=3);
        let dy = r.gen_range(1..=2);
        Pool {
            x: Logvar::new("X", (1..=dx).map(|i| format!("x{i}"))),
            y: Logvar::new("Y", (1..=dy).map(|i| format!("y{i}"))),
            ranges: [0, 1, 2, 3].map(|_| range(r.gen_range(2..=max_range))),
        }
    }

    pub fn prv(&self, i: usize, time: Option<u32>) -> Prv {
        let (name, terms): (&str, Vec<&str>) = match i {
            0 => ("A", vec![]),
            1 => ("B", vec!["X"]),
            2 => ("C", vec!["Y"]),
            _ => ("D", vec!["X", "Y"]),
        };
        let p = Prv::new(name, terms.into_iter().map(|t| Term::Var(sym(t))).collect(), self.ranges[i].clone());
        match time {
            Some(t) => p.at(t),
            None => p,
        }
    }

    pub fn logvars(&self) -> Vec<Logvar> {
        vec![self.x.clone(), self.y.clone()]
    }
}

fn uses(prvs: &[Prv], v: &str) -> bool {
    prvs.iter().any(|p| p.vars().any(|u| &**u == v))
}

/// A constraint over the logvars of `prvs`: Top, or a random nonempty
/// tuple subset when `extensional`.
pub fn constraint_for(r: &mut Rng8, pool: &Pool, prvs: &[Prv], extensional: bool) -> Constraint {
    let lvs: Vec<Logvar> = pool.logvars().into_iter().filter(|l| uses(prvs, &l.name)).collect();
    if !extensional || lvs.is_empty() {
        return Constraint::top(lvs);
    }
    let all = Constraint::top(lvs.clone()).tuples();
    let keep: Vec<Vec<Sym>> = loop {
        let k: Vec<Vec<Sym>> = all.iter().filter(|_| r.gen_bool(0.7)).cloned().collect();
        if !k.is_empty() {
            break k;
        }
    };
    Constraint::from_tuples(lvs, keep).unwrap()
}

pub fn potentials(r: &mut Rng8, args: &[Arg]) -> Vec<f64> {
    let size: usize = args.iter().map(Arg::size).product();
    (0..size).map(|_| r.gen_range(0.1..5.0)).collect()
}

pub fn parfactor(r: &mut Rng8, name: &str, prvs: Vec<Prv>, c: Constraint) -> Parfactor {
    let args: Vec<Arg> = prvs.into_iter().map(Arg::Prv).collect();
    let pots = potentials(r, &args);
    Parfactor::new(name, args, c, pots).unwrap()
}

fn pick(r: &mut Rng8, lo: usize, hi: usize) -> Vec<usize> {
    let mut idx = vec![0, 1, 2, 3];
    idx.shuffle(r);
    idx.truncate(r.gen_range(lo..=hi));
    idx.sort();
    idx
}

pub fn ground_count(pfs: &[Parfactor]) -> usize {
    GroundModel::from_parfactors(pfs).vars.len()
}

/// A static model with at most `max_ground` ground randvars.
pub fn random_model(r: &mut Rng8, max_ground: usize, max_range: usize) -> Model {
    loop {
        let pool = Pool::random(r, max_range);
        let k = r.gen_range(1..=3);
        let pfs: Vec<Parfactor> = (0..k)
            .map(|i| {
                let prvs: Vec<Prv> = pick(r, 1, 3).into_iter().map(|j| pool.prv(j, None)).collect();
                let ext = r.gen_bool(0.25);
                let c = constraint_for(r, &pool, &prvs, ext);
                parfactor(r, &format!("g{i}"), prvs, c)
            })
            .collect();
        if ground_count(&pfs) <= max_ground {
            return Model::new(pool.logvars(), pfs);
        }
    }
}

/// A PDM over Top constraints whose inter-slice parfactors never carry a
/// two-logvar PRV on both slices; `steps` unrolled slices stay within
/// `max_ground` ground randvars.
pub fn random_pdm(r: &mut Rng8, steps: u32, max_ground: usize) -> Pdm {
    loop {
        let pool = Pool::random(r, 2);
        let intra: Vec<Vec<usize>> = (0..r.gen_range(1..=2)).map(|_| pick(r, 1, 2)).collect();
        let mut g0 = Vec::new();
        let mut ga = Vec::new();
        for (i, idx) in intra.iter().enumerate() {
            let prvs: Vec<Prv> = idx.iter().map(|&j| pool.prv(j, None)).collect();
            let c = constraint_for(r, &pool, &prvs, false);
            let g = parfactor(r, &format!("g{i}"), prvs, c);
            ga.push(g.map_time(|_| Some(1)));
            g0.push(g);
        }
        for i in 0..r.gen_range(1..=2) {
            let prev = r.gen_range(0..4);
            let mut cur = r.gen_range(0..4);
            if prev == 3 && cur == 3 {
                cur = r.gen_range(0..3);
            }
            let prvs = vec![pool.prv(prev, Some(0)), pool.prv(cur, Some(1))];
            let c = constraint_for(r, &pool, &prvs, false);
            ga.push(parfactor(r, &format!("gT{i}"), prvs, c));
        }
        let pdm = Pdm::new(Model::new(pool.logvars(), g0), Model::new(pool.logvars(), ga));
        if pdm.inter_slice().is_empty() {
            continue;
        }
        let intra_names: BTreeSet<Sym> = pdm.g0.parfactors.iter().flat_map(|g| g.keys()).map(|k| k.name).collect();
        let inter_names: BTreeSet<Sym> =
            pdm.inter_slice().iter().flat_map(|g| g.keys()).map(|k| k.name).collect();
        if !inter_names.is_subset(&intra_names) {
            continue;
        }
        let blocked = {
            let inter = pdm.inter_slice();
            let two = |t: u32| {
                inter.iter().flat_map(|g| g.args.iter().flat_map(|a| a.atoms())).any(|p| p.time == Some(t) && p.logvar_count() == 2)
            };
            two(0) && two(1)
        };
        if blocked {
            continue;
        }
        if pdm.unroll(steps).map(|m| ground_count(&m.parfactors)).unwrap_or(usize::MAX) <= max_ground {
            return pdm;
        }
    }
}

/// Log weight of every joint assignment of `atoms` (row-major) under the
/// product of the ground factors of `pfs`; every atom the factors mention
/// must be listed.
pub fn joint(pfs: &[Parfactor], atoms: &[GroundAtom], ranges: &[usize]) -> Vec<f64> {
    let gm = GroundModel::from_parfactors(pfs);
    let pos: Vec<usize> =
        gm.vars.iter().map(|v| atoms.iter().position(|a| a == v).expect("atom listed")).collect();
    let size: usize = ranges.iter().product();
    let mut out = vec![0.0; size];
    let mut assign = vec![0usize; atoms.len()];
    let mut local = vec![0usize; gm.vars.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let mut rem = idx;
        for i in (0..ranges.len()).rev() {
            assign[i] = rem % ranges[i];
            rem /= ranges[i];
        }
        for (l, &p) in local.iter_mut().zip(&pos) {
            *l = assign[p];
        }
        *o = gm.log_weight(&local);
    }
    out
}

/// Ground atoms of `pfs` with their range sizes, sorted.
pub fn atoms_of(pfs: &[Parfactor]) -> (Vec<GroundAtom>, Vec<usize>) {
    let gm = GroundModel::from_parfactors(pfs);
    let mut v: Vec<(GroundAtom, usize)> = gm.vars.iter().cloned().zip(gm.ranges.iter().map(Vec::len)).collect();
    v.sort();
    v.into_iter().unzip()
}

/// Sum out the atoms at positions `drop` from a joint table.
pub fn marginalise(table: &[f64], ranges: &[usize], drop: &[usize]) -> Vec<f64> {
    let kept: Vec<usize> = (0..ranges.len()).filter(|i| !drop.contains(i)).collect();
    let size: usize = kept.iter().map(|&i| ranges[i]).product();
    let mut buckets = vec![Vec::new(); size];
    let mut assign = vec![0usize; ranges.len()];
    for (idx, &l) in table.iter().enumerate() {
        let mut rem = idx;
        for i in (0..ranges.len()).rev() {
            assign[i] = rem % ranges[i];
            rem /= ranges[i];
        }
        let o = kept.iter().fold(0, |acc, &i| acc * ranges[i] + assign[i]);
        buckets[o].push(l);
    }
    buckets.into_iter().map(log_sum_exp).collect()
}

pub fn logs_close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            (x.is_infinite() && y.is_infinite() && x.signum() == y.signum()) || (x - y).abs() <= 1e-9 * x.abs().max(1.0)
        })
}

pub fn probs_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Evidence map from a random subset of `atoms`.
pub fn random_observations(
    r: &mut Rng8,
    atoms: &[GroundAtom],
    range_of: impl Fn(&GroundAtom) -> Arc<[Sym]>,
    rate: f64,
) -> BTreeMap<GroundAtom, Sym> {
    let mut out = BTreeMap::new();
    for a in atoms {
        if r.gen_bool(rate) {
            let range = range_of(a);
            out.insert(a.clone(), range[r.gen_range(0..range.len())].clone());
        }
    }
    out
}
