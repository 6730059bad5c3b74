//! Grounding-equivalence checks for the lifted operators.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::*;
use tempolift::lve::{
    absorb, count_convert, count_convert_joint, ground_parfactor, multiply, normalise, shatter, split_crv, sum_out,
};
use tempolift::model::{Arg, GroundAtom, Parfactor, Sym};

pub const CASES: usize = 500;
const MAX_GROUND: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Op {
    Normalise,
    Multiply,
    SumOut,
    CountConvert,
    CountConvertJoint,
    Absorb,
    Ground,
    Shatter,
    SplitCrv,
}

pub const OPS: [Op; 9] = [
    Op::Normalise,
    Op::Multiply,
    Op::SumOut,
    Op::CountConvert,
    Op::CountConvertJoint,
    Op::Absorb,
    Op::Ground,
    Op::Shatter,
    Op::SplitCrv,
];

fn atom_union(sets: &[&[Parfactor]]) -> (Vec<GroundAtom>, Vec<usize>) {
    let mut m: BTreeMap<GroundAtom, usize> = BTreeMap::new();
    for s in sets {
        let (a, r) = atoms_of(s);
        m.extend(a.into_iter().zip(r));
    }
    m.into_iter().unzip()
}

fn same_joint(before: &[Parfactor], after: &[Parfactor]) -> bool {
    let (atoms, ranges) = atom_union(&[before, after]);
    logs_close(&joint(before, &atoms, &ranges), &joint(after, &atoms, &ranges))
}

fn free_logvar(r: &mut Rng8, g: &Parfactor) -> Option<Sym> {
    g.constraint.names().choose(r).cloned()
}

/// `Some(ok)` when the operator applied, `None` when it declined.
pub fn run_case(r: &mut Rng8, op: Op) -> Option<bool> {
    let m = random_model(r, MAX_GROUND, 3);
    let g = m.parfactors[0].clone();
    match op {
        Op::Normalise => Some(same_joint(&[g.clone()], &[normalise(g)])),
        Op::Multiply => {
            let h = m.parfactors.get(1)?.clone();
            let p = multiply(&g, &h).ok()?;
            Some(same_joint(&[g, h], &[p]))
        }
        Op::SumOut => {
            let arg = g.args.choose(r)?;
            let key = arg.atoms().choose(r)?.key();
            let out = sum_out(&g, &key).ok()?;
            let (atoms, ranges) = atoms_of(&[g.clone()]);
            let drop: Vec<usize> = (0..atoms.len()).filter(|&i| atoms[i].key() == key).collect();
            let kept: Vec<GroundAtom> =
                atoms.iter().enumerate().filter(|(i, _)| !drop.contains(i)).map(|(_, a)| a.clone()).collect();
            let kept_r: Vec<usize> = (0..atoms.len()).filter(|i| !drop.contains(i)).map(|i| ranges[i]).collect();
            let want = marginalise(&joint(&[g], &atoms, &ranges), &ranges, &drop);
            Some(logs_close(&want, &joint(&[out], &kept, &kept_r)))
        }
        Op::CountConvert => {
            let x = free_logvar(r, &g)?;
            let out = count_convert(&g, &x).ok()?;
            Some(same_joint(&[g], &[out]))
        }
        Op::CountConvertJoint => {
            let x = free_logvar(r, &g)?;
            let out = count_convert_joint(&g, &x).ok()?;
            Some(same_joint(&[g], &[out]))
        }
        Op::Absorb => {
            let i = r.gen_range(0..g.args.len());
            let value = {
                let range = &g.args[i].atoms()[0].range;
                range[r.gen_range(0..range.len())].clone()
            };
            let ev: BTreeMap<GroundAtom, Sym> = g.arg_instances(i).into_iter().map(|a| (a, value.clone())).collect();
            let out = absorb(&g, &ev).ok()?;
            let (atoms, ranges) = atoms_of(&[g.clone()]);
            let before = joint(&[g], &atoms, &ranges);
            let after = joint(&[out], &atoms, &ranges);
            let consistent = |idx: usize| {
                let mut rem = idx;
                let mut ok = true;
                for k in (0..atoms.len()).rev() {
                    let v = rem % ranges[k];
                    rem /= ranges[k];
                    if let Some(e) = ev.get(&atoms[k]) {
                        ok &= m.range_of(&atoms[k].name).unwrap()[v] == *e;
                    }
                }
                ok
            };
            let keep: Vec<usize> = (0..before.len()).filter(|&i| consistent(i)).collect();
            let pick = |t: &[f64]| -> Vec<f64> { keep.iter().map(|&i| t[i]).collect() };
            Some(logs_close(&pick(&before), &pick(&after)))
        }
        Op::Ground => {
            let out = ground_parfactor(&g).ok()?;
            Some(same_joint(&[g], &out))
        }
        Op::Shatter => {
            let (out, _) = shatter(m.parfactors.clone(), &[]).ok()?;
            Some(same_joint(&m.parfactors, &out))
        }
        Op::SplitCrv => {
            let x = free_logvar(r, &g)?;
            let c = count_convert(&g, &x).ok()?;
            let idx = c.args.iter().position(Arg::is_count)?;
            let Arg::Count(crv) = &c.args[idx] else { unreachable!() };
            if crv.values.len() < 2 {
                return None;
            }
            let mut vals = crv.values.to_vec();
            vals.shuffle(r);
            let cut = r.gen_range(1..vals.len());
            let parts = vec![vals[..cut].to_vec(), vals[cut..].to_vec()];
            let out = split_crv(&c, idx, &parts).ok()?;
            Some(same_joint(&[g], &[out]))
        }
    }
}

/// Run operator cases until `cases` applied in total and every operator
/// applied at least `per_op` times; returns the applied counts and the
/// failing cases.
pub fn fuzz(seed: u64, cases: usize, per_op: usize) -> (BTreeMap<Op, usize>, BTreeSet<String>) {
    let mut r = rng(seed);
    let mut applied: BTreeMap<Op, usize> = BTreeMap::new();
    let mut failures: BTreeSet<String> = BTreeSet::new();
    let mut attempts = 0;
    while applied.values().sum::<usize>() < cases || OPS.iter().any(|o| applied.get(o).copied().unwrap_or(0) < per_op) {
        attempts += 1;
        assert!(attempts < 50_000, "operators declined too often: {applied:?}");
        let op = OPS[attempts % OPS.len()];
        let seed: u64 = r.gen();
        if let Some(ok) = run_case(&mut rng(seed), op) {
            *applied.entry(op).or_default() += 1;
            if !ok {
                failures.insert(format!("{op:?} seed {seed}"));
            }
        }
    }
    (applied, failures)
}
