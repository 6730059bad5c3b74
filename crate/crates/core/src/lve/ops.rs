//! The lifted operators. Every operator is a pure function whose output,
//! once grounded, equals the corresponding ground operation on the grounded
//! input.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::histogram::{ln_factorial, ln_multinomial, log_pow, log_sum_exp};
use crate::model::{Arg, Constraint, Crv, GroundAtom, Parfactor, Prv, PrvKey, Sym};

/// Largest table the ground fallback may create.
pub const GROUND_TABLE_LIMIT: usize = 1 << 22;

pub(crate) fn fresh_name(base: &str, taken: &BTreeSet<Sym>) -> Sym {
    let base = base.trim_end_matches(|c: char| c.is_ascii_digit() || c == '\'');
    (1..)
        .map(|i| Sym::from(format!("{base}'{i}")))
        .find(|c| !taken.contains(c))
        .unwrap()
}

fn unravel(mut idx: usize, dims: &[usize], out: &mut [usize]) {
    for i in (0..dims.len()).rev() {
        out[i] = idx % dims[i];
        idx /= dims[i];
    }
}

fn ravel(coords: &[usize], dims: &[usize]) -> usize {
    coords.iter().zip(dims).fold(0, |acc, (&c, &d)| acc * d + c)
}

fn table_size(args: &[Arg]) -> Result<usize> {
    let size: f64 = args.iter().map(|a| a.size() as f64).product();
    if size > GROUND_TABLE_LIMIT as f64 * 16.0 {
        return Err(Error::Budget { what: "parfactor table".into(), size, budget: GROUND_TABLE_LIMIT as f64 * 16.0 });
    }
    Ok(size as usize)
}

/// Build a new table by evaluating `f` at every coordinate of `args`.
fn tabulate(args: &[Arg], mut f: impl FnMut(&[usize]) -> f64) -> Result<Vec<f64>> {
    let dims: Vec<usize> = args.iter().map(Arg::size).collect();
    let size = table_size(args)?;
    let mut coords = vec![0; dims.len()];
    let mut out = Vec::with_capacity(size);
    for idx in 0..size {
        unravel(idx, &dims, &mut coords);
        out.push(f(&coords));
    }
    Ok(out)
}

fn crv_canon(c: &Crv) -> (Arc<[Sym]>, Vec<Prv>) {
    let star: Sym = Sym::from("#");
    (c.values.clone(), c.atoms.iter().map(|a| a.rename_var(&c.counted, &star)).collect())
}

/// Same CRV up to the name of its counted logvar.
pub fn crv_equiv(a: &Crv, b: &Crv) -> bool {
    crv_canon(a) == crv_canon(b)
}

/// Every atom of `a` is an atom of `b` (same counted constants).
pub fn crv_subset(a: &Crv, b: &Crv) -> bool {
    let (va, aa) = crv_canon(a);
    let (vb, ab) = crv_canon(b);
    va == vb && aa.iter().all(|x| ab.contains(x))
}

pub fn args_equiv(a: &Arg, b: &Arg) -> bool {
    match (a, b) {
        (Arg::Prv(x), Arg::Prv(y)) => x == y,
        (Arg::Count(x), Arg::Count(y)) => crv_equiv(x, y),
        _ => false,
    }
}

fn rename_counted(c: &Crv, new: &Sym) -> Crv {
    Crv {
        counted: new.clone(),
        values: c.values.clone(),
        atoms: c.atoms.iter().map(|a| a.rename_var(&c.counted, new)).collect(),
    }
}

/// Substitute a constant for a free logvar that takes a single value.
fn substitute(g: &Parfactor, name: &Sym, value: &Sym) -> Parfactor {
    let args = g
        .args
        .iter()
        .map(|a| match a {
            Arg::Prv(p) => Arg::Prv(p.substitute(name, value)),
            Arg::Count(c) => Arg::Count(Crv {
                counted: c.counted.clone(),
                values: c.values.clone(),
                atoms: c.atoms.iter().map(|p| p.substitute(name, value)).collect(),
            }),
        })
        .collect();
    Parfactor::from_log(g.name.clone(), args, g.constraint.remove(name), g.log_table.clone())
}

/// Restrict argument `drop` to equal argument `keep` and remove it.
fn merge_args(g: &Parfactor, keep: usize, drop: usize) -> Parfactor {
    let mut args = g.args.clone();
    args.remove(drop);
    let dims = g.dims();
    let mut full = vec![0; dims.len()];
    let table = tabulate(&args, |c| {
        let mut j = 0;
        for (i, slot) in full.iter_mut().enumerate() {
            if i == drop {
                continue;
            }
            *slot = c[j];
            j += 1;
        }
        full[drop] = full[keep];
        g.log_table[ravel(&full, &dims)]
    })
    .expect("merging shrinks the table");
    Parfactor::from_log(g.name.clone(), args, g.constraint.clone(), table)
}

/// Canonical form: constant-valued logvars become constants, repeated
/// arguments are merged, and logvars no argument mentions are folded into
/// the potentials as an exponent when their multiplicity is uniform.
pub fn normalise(g: Parfactor) -> Parfactor {
    let mut g = g;
    loop {
        let single = g.constraint.names().into_iter().find_map(|n| {
            let p = g.constraint.project(std::slice::from_ref(&n));
            (p.len() == 1).then(|| (n, p.tuples()[0][0].clone()))
        });
        match single {
            Some((n, v)) => g = substitute(&g, &n, &v),
            None => break,
        }
    }
    // A CRV over at most one constant is plain randvars (same table layout).
    if g.crvs().any(|c| c.count() <= 1) {
        let mut args = Vec::with_capacity(g.args.len());
        for a in std::mem::take(&mut g.args) {
            match a {
                Arg::Count(c) if c.count() == 1 => {
                    let v = &c.values[0];
                    args.extend(c.atoms.iter().map(|p| Arg::Prv(p.substitute(&c.counted, v))));
                }
                Arg::Count(c) if c.count() == 0 => {}
                a => args.push(a),
            }
        }
        g.args = args;
    }
    loop {
        let dup = (0..g.args.len())
            .flat_map(|i| (i + 1..g.args.len()).map(move |j| (i, j)))
            .find(|&(i, j)| args_equiv(&g.args[i], &g.args[j]));
        match dup {
            Some((i, j)) => g = merge_args(&g, i, j),
            None => break,
        }
    }
    let used = g.arg_logvars();
    for name in g.constraint.names() {
        if used.contains(&name) {
            continue;
        }
        let others: Vec<Sym> = g.constraint.names().into_iter().filter(|n| *n != name).collect();
        if let Some(m) = g.constraint.uniform_multiplicity(&others) {
            if m == 0 {
                continue;
            }
            g.log_table = g.log_table.iter().map(|&l| log_pow(l, m as f64)).collect();
            g.constraint = g.constraint.remove(&name);
        }
    }
    g
}

/// Rename counted logvars that collide with a free logvar of either factor.
fn separate_counted(g: &Parfactor, taken: &BTreeSet<Sym>) -> Parfactor {
    let mut g = g.clone();
    let mut taken = taken.clone();
    taken.extend(g.constraint.names());
    for a in g.args.iter_mut() {
        if let Arg::Count(c) = a {
            if taken.contains(&c.counted) {
                let n = fresh_name(&c.counted, &taken);
                taken.insert(n.clone());
                *c = rename_counted(c, &n);
            }
        }
    }
    g
}

/// Lifted multiplication. Arguments equal in both factors are merged; the
/// constraints are joined on shared logvar names and each input is raised to
/// one over its join multiplicity.
pub fn multiply(g1: &Parfactor, g2: &Parfactor) -> Result<Parfactor> {
    let mut free: BTreeSet<Sym> = g1.constraint.names().into_iter().collect();
    free.extend(g2.constraint.names());
    let g1 = separate_counted(g1, &free);
    let mut taken = free.clone();
    taken.extend(g1.crvs().map(|c| c.counted.clone()));
    let g2 = separate_counted(g2, &taken);
    let join = g1.constraint.join(&g2.constraint)?;
    let n1 = g1.args.len();
    let mut args = g1.args.clone();
    let mut map2 = Vec::with_capacity(g2.args.len());
    for a in &g2.args {
        match g1.args.iter().position(|b| args_equiv(a, b)) {
            Some(i) => map2.push(i),
            None => {
                map2.push(args.len());
                args.push(a.clone());
            }
        }
    }
    // Distinct arguments of the same randvar must not share instances.
    for (j, a) in g2.args.iter().enumerate() {
        if map2[j] < n1 {
            continue;
        }
        for (i, b) in g1.args.iter().enumerate() {
            let shared: Vec<PrvKey> =
                a.atoms().iter().map(Prv::key).filter(|k| b.mentions_key(k)).collect();
            if shared.is_empty() {
                continue;
            }
            let ia = g2.arg_instances(j);
            let ib = g1.arg_instances(i);
            if ia.intersection(&ib).next().is_some() {
                return Err(Error::Alignment(format!("{a} and {b}")));
            }
        }
    }
    let e1 = 1.0 / join.left_multiplicity as f64;
    let e2 = 1.0 / join.right_multiplicity as f64;
    let d1 = g1.dims();
    let d2 = g2.dims();
    let mut c2 = vec![0; g2.args.len()];
    let table = tabulate(&args, |c| {
        for (k, &m) in map2.iter().enumerate() {
            c2[k] = c[m];
        }
        log_pow(g1.log_table[ravel(&c[..n1], &d1)], e1) + log_pow(g2.log_table[ravel(&c2, &d2)], e2)
    })?;
    Ok(normalise(Parfactor::from_log(Sym::from("psi"), args, join.constraint, table)))
}

fn locate(g: &Parfactor, key: &PrvKey) -> Result<(usize, usize)> {
    let mut found = None;
    for (i, a) in g.args.iter().enumerate() {
        for (k, p) in a.atoms().iter().enumerate() {
            if p.key() == *key {
                if found.is_some() {
                    return Err(Error::NotEliminable(format!("{key} occurs twice in {g}")));
                }
                found = Some((i, k));
            }
        }
    }
    found.ok_or_else(|| Error::NotEliminable(format!("{key} does not occur in {g}")))
}

/// Lifted summing out of the randvar `key` (a PRV argument or one atom of a
/// CRV argument). Requires every free logvar of `g` to appear in the atom,
/// so each ground instance belongs to exactly one ground factor.
pub fn sum_out(g: &Parfactor, key: &PrvKey) -> Result<Parfactor> {
    let (ai, ki) = locate(g, key)?;
    sum_out_at(g, ai, ki)
}

/// Sum out atom `ki` of argument `ai`.
pub fn sum_out_at(g: &Parfactor, ai: usize, ki: usize) -> Result<Parfactor> {
    let atom = &g.args[ai].atoms()[ki];
    let atom_vars: BTreeSet<&Sym> = atom.vars().collect();
    if let Some(v) = g.constraint.names().iter().find(|n| !atom_vars.contains(n)) {
        return Err(Error::NotEliminable(format!("{atom}: logvar {v} is not covered")));
    }
    let dims = g.dims();
    let mut args = g.args.clone();
    let table = match &g.args[ai] {
        Arg::Prv(_) => {
            args.remove(ai);
            let mut full = vec![0; dims.len()];
            tabulate(&args, |c| {
                full[..ai].copy_from_slice(&c[..ai]);
                full[ai + 1..].copy_from_slice(&c[ai..]);
                log_sum_exp((0..dims[ai]).map(|v| {
                    full[ai] = v;
                    g.log_table[ravel(&full, &dims)]
                }))
            })?
        }
        Arg::Count(c) if c.atoms.len() == 1 => {
            args.remove(ai);
            let hists = c.histograms();
            let weights: Vec<f64> = hists.iter().map(ln_multinomial).collect();
            let mut full = vec![0; dims.len()];
            tabulate(&args, |cc| {
                full[..ai].copy_from_slice(&cc[..ai]);
                full[ai + 1..].copy_from_slice(&cc[ai..]);
                log_sum_exp((0..dims[ai]).map(|h| {
                    full[ai] = h;
                    weights[h] + g.log_table[ravel(&full, &dims)]
                }))
            })?
        }
        Arg::Count(c) => {
            let mut rest = c.clone();
            rest.atoms.remove(ki);
            let old_h = c.histograms();
            let new_h = rest.histograms();
            // Joint cell of all atoms -> joint cell of the remaining atoms.
            let ranges: Vec<usize> = c.atoms.iter().map(|a| a.range.len()).collect();
            let rdims: Vec<usize> =
                ranges.iter().enumerate().filter(|(i, _)| *i != ki).map(|(_, &r)| r).collect();
            let mut vals = vec![0; ranges.len()];
            let cell_map: Vec<usize> = (0..c.buckets())
                .map(|cell| {
                    unravel(cell, &ranges, &mut vals);
                    let r: Vec<usize> =
                        vals.iter().enumerate().filter(|(i, _)| *i != ki).map(|(_, &v)| v).collect();
                    ravel(&r, &rdims)
                })
                .collect();
            let mut target = Vec::with_capacity(old_h.len());
            let mut weight = Vec::with_capacity(old_h.len());
            for h in old_h.iter() {
                let mut m = vec![0u32; rest.buckets()];
                for (cell, &cnt) in h.iter().enumerate() {
                    m[cell_map[cell]] += cnt;
                }
                let w = m.iter().map(|&x| ln_factorial(x as usize)).sum::<f64>()
                    - h.iter().map(|&x| ln_factorial(x as usize)).sum::<f64>();
                target.push(new_h.index_of(&m).expect("marginal histogram"));
                weight.push(w);
            }
            args[ai] = Arg::Count(rest);
            let ndims: Vec<usize> = args.iter().map(Arg::size).collect();
            let size = table_size(&args)?;
            let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); size];
            let mut full = vec![0; dims.len()];
            for idx in 0..g.log_table.len() {
                unravel(idx, &dims, &mut full);
                let h = full[ai];
                full[ai] = target[h];
                buckets[ravel(&full, &ndims)].push(weight[h] + g.log_table[idx]);
            }
            buckets.into_iter().map(log_sum_exp).collect()
        }
    };
    Ok(normalise(Parfactor::from_log(g.name.clone(), args, g.constraint.clone(), table)))
}

/// Replace the single PRV argument holding free logvar `x` by a CRV over `x`.
pub fn count_convert(g: &Parfactor, x: &str) -> Result<Parfactor> {
    if g.constraint.position(x).is_none() {
        return Err(Error::NotCountable(x.to_string()));
    }
    let holders: Vec<usize> =
        (0..g.args.len()).filter(|&i| g.args[i].free_vars().iter().any(|v| &**v == x)).collect();
    if holders.len() != 1 || g.args[holders[0]].is_count() {
        return Err(Error::NotCountable(x.to_string()));
    }
    convert(g, x, &holders)
}

/// Count conversion of `x` jointly over every argument that mentions it;
/// each such argument must be a PRV whose only logvar is `x`.
pub fn count_convert_joint(g: &Parfactor, x: &str) -> Result<Parfactor> {
    if g.constraint.position(x).is_none() {
        return Err(Error::NotCountable(x.to_string()));
    }
    let holders: Vec<usize> =
        (0..g.args.len()).filter(|&i| g.args[i].free_vars().iter().any(|v| &**v == x)).collect();
    if holders.is_empty() {
        return Err(Error::NotCountable(x.to_string()));
    }
    for &i in &holders {
        match &g.args[i] {
            Arg::Prv(p) if p.vars().all(|v| &**v == x) => {}
            _ => return Err(Error::NotCountable(x.to_string())),
        }
    }
    convert(g, x, &holders)
}

fn convert(g: &Parfactor, x: &str, holders: &[usize]) -> Result<Parfactor> {
    let values = g
        .constraint
        .independent_values(x)
        .ok_or_else(|| Error::NotCountNormalised(x.to_string()))?;
    let atoms: Vec<Prv> = holders
        .iter()
        .map(|&i| match &g.args[i] {
            Arg::Prv(p) => p.clone(),
            Arg::Count(_) => unreachable!(),
        })
        .collect();
    let crv = Crv { counted: Sym::from(x), values: values.into(), atoms };
    let pos = holders[0];
    let mut args: Vec<Arg> = Vec::new();
    let mut old_of_new: Vec<Option<usize>> = Vec::new();
    for (i, a) in g.args.iter().enumerate() {
        if i == pos {
            args.push(Arg::Count(crv.clone()));
            old_of_new.push(None);
        } else if !holders.contains(&i) {
            args.push(a.clone());
            old_of_new.push(Some(i));
        }
    }
    let hists = crv.histograms();
    let ranges: Vec<usize> = crv.atoms.iter().map(|a| a.range.len()).collect();
    let dims = g.dims();
    let mut full = vec![0; dims.len()];
    let mut vals = vec![0; ranges.len()];
    let table = tabulate(&args, |c| {
        let mut h_idx = 0;
        for (j, o) in old_of_new.iter().enumerate() {
            match o {
                Some(i) => full[*i] = c[j],
                None => h_idx = c[j],
            }
        }
        let h = hists.get(h_idx);
        let mut total = 0.0;
        for (cell, &cnt) in h.iter().enumerate() {
            if cnt == 0 {
                continue;
            }
            unravel(cell, &ranges, &mut vals);
            for (k, &i) in holders.iter().enumerate() {
                full[i] = vals[k];
            }
            total += log_pow(g.log_table[ravel(&full, &dims)], cnt as f64);
        }
        total
    })?;
    let constraint = g.constraint.remove(x);
    Ok(normalise(Parfactor::from_log(g.name.clone(), args, constraint, table)))
}

/// Re-express the CRV argument at `idx` over the larger atom set of `target`
/// (same counted constants): the potential depends on the marginal histogram.
pub fn extend_crv(g: &Parfactor, idx: usize, target: &Crv) -> Result<Parfactor> {
    let Arg::Count(c) = &g.args[idx] else {
        return Err(Error::Alignment(format!("{} is not a counting randvar", g.args[idx])));
    };
    if !crv_subset(c, target) {
        return Err(Error::Alignment(format!("{c} is not part of {target}")));
    }
    let mut taken: BTreeSet<Sym> = g.constraint.names().into_iter().collect();
    taken.extend(g.crvs().filter(|o| *o != c).map(|o| o.counted.clone()));
    let target = if taken.contains(&target.counted) {
        rename_counted(target, &fresh_name(&target.counted, &taken))
    } else {
        target.clone()
    };
    let star = Sym::from("#");
    let canon_t: Vec<Prv> = target.atoms.iter().map(|a| a.rename_var(&target.counted, &star)).collect();
    let pos: Vec<usize> = c
        .atoms
        .iter()
        .map(|a| canon_t.iter().position(|t| *t == a.rename_var(&c.counted, &star)).unwrap())
        .collect();
    let t_ranges: Vec<usize> = target.atoms.iter().map(|a| a.range.len()).collect();
    let s_ranges: Vec<usize> = c.atoms.iter().map(|a| a.range.len()).collect();
    let mut vals = vec![0; t_ranges.len()];
    let cell_map: Vec<usize> = (0..target.buckets())
        .map(|cell| {
            unravel(cell, &t_ranges, &mut vals);
            let sub: Vec<usize> = pos.iter().map(|&p| vals[p]).collect();
            ravel(&sub, &s_ranges)
        })
        .collect();
    let th = target.histograms();
    let sh = c.histograms();
    let h_map: Vec<usize> = th
        .iter()
        .map(|h| {
            let mut m = vec![0u32; c.buckets()];
            for (cell, &cnt) in h.iter().enumerate() {
                m[cell_map[cell]] += cnt;
            }
            sh.index_of(&m).expect("marginal histogram")
        })
        .collect();
    let mut args = g.args.clone();
    args[idx] = Arg::Count(target);
    let dims = g.dims();
    let mut full = vec![0; dims.len()];
    let table = tabulate(&args, |cc| {
        full.copy_from_slice(cc);
        full[idx] = h_map[cc[idx]];
        g.log_table[ravel(&full, &dims)]
    })?;
    Ok(Parfactor::from_log(g.name.clone(), args, g.constraint.clone(), table))
}

/// Fix argument `idx` to coordinate `value` and drop it.
fn select(g: &Parfactor, idx: usize, value: usize) -> Parfactor {
    let mut args = g.args.clone();
    args.remove(idx);
    let dims = g.dims();
    let mut full = vec![0; dims.len()];
    let table = tabulate(&args, |c| {
        full[..idx].copy_from_slice(&c[..idx]);
        full[idx + 1..].copy_from_slice(&c[idx..]);
        full[idx] = value;
        g.log_table[ravel(&full, &dims)]
    })
    .expect("selection shrinks the table");
    normalise(Parfactor::from_log(g.name.clone(), args, g.constraint.clone(), table))
}

/// Absorb observations into `g`. Each argument must be either fully
/// observed with one value or not observed at all (shatter first).
pub fn absorb(g: &Parfactor, evidence: &BTreeMap<GroundAtom, Sym>) -> Result<Parfactor> {
    let mut g = g.clone();
    'outer: loop {
        for i in 0..g.args.len() {
            let inst = g.arg_instances(i);
            let observed: BTreeSet<&Sym> = inst.iter().filter_map(|a| evidence.get(a)).collect();
            let n_obs = inst.iter().filter(|a| evidence.contains_key(*a)).count();
            if n_obs == 0 {
                continue;
            }
            if n_obs != inst.len() || observed.len() != 1 {
                return Err(Error::Alignment(format!("{} is only partly observed", g.args[i])));
            }
            let value = *observed.iter().next().unwrap();
            match &g.args[i] {
                Arg::Prv(p) => {
                    let v = p.value_index(value).ok_or_else(|| Error::Range {
                        prv: p.to_string(),
                        value: value.to_string(),
                    })?;
                    g = select(&g, i, v);
                }
                Arg::Count(c) if c.atoms.len() == 1 => {
                    let v = c.atoms[0].value_index(value).ok_or_else(|| Error::Range {
                        prv: c.to_string(),
                        value: value.to_string(),
                    })?;
                    let mut h = vec![0u32; c.buckets()];
                    h[v] = c.count() as u32;
                    let hi = c.histograms().index_of(&h).unwrap();
                    g = select(&g, i, hi);
                }
                Arg::Count(c) => return Err(Error::Alignment(format!("observed joint count {c}"))),
            }
            continue 'outer;
        }
        return Ok(g);
    }
}

/// Ground every free and counted logvar of `g`, producing one
/// logvar-free parfactor per context.
pub fn ground_parfactor(g: &Parfactor) -> Result<Vec<Parfactor>> {
    let names = g.constraint.names();
    let mut out = Vec::new();
    for ctx in g.constraint.tuples() {
        let mut args = Vec::new();
        // Per original argument: positions of its expanded arguments.
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for a in &g.args {
            let start = args.len();
            match a {
                Arg::Prv(p) => args.push(Arg::Prv(p.instance(&names, &ctx).as_prv(p.range.clone()))),
                Arg::Count(c) => {
                    let mut n2 = names.clone();
                    n2.push(c.counted.clone());
                    for v in c.values.iter() {
                        let mut t = ctx.clone();
                        t.push(v.clone());
                        for atom in &c.atoms {
                            args.push(Arg::Prv(atom.instance(&n2, &t).as_prv(atom.range.clone())));
                        }
                    }
                }
            }
            spans.push((start, args.len()));
        }
        let size: f64 = args.iter().map(|a| a.size() as f64).product();
        if size > GROUND_TABLE_LIMIT as f64 {
            return Err(Error::Budget { what: format!("grounding {g}"), size, budget: GROUND_TABLE_LIMIT as f64 });
        }
        let dims = g.dims();
        let mut full = vec![0; dims.len()];
        let table = tabulate(&args, |c| {
            for (i, a) in g.args.iter().enumerate() {
                let (s, e) = spans[i];
                match a {
                    Arg::Prv(_) => full[i] = c[s],
                    Arg::Count(crv) => {
                        let k = crv.atoms.len();
                        let mut h = vec![0u32; crv.buckets()];
                        for chunk in c[s..e].chunks(k) {
                            let cell = crv
                                .atoms
                                .iter()
                                .zip(chunk)
                                .fold(0, |acc, (atom, &v)| acc * atom.range.len() + v);
                            h[cell] += 1;
                        }
                        full[i] = crv.histograms().index_of(&h).unwrap();
                    }
                }
            }
            g.log_table[ravel(&full, &dims)]
        })?;
        out.push(normalise(Parfactor::from_log(g.name.clone(), args, Constraint::empty_scope(), table)));
    }
    Ok(out)
}

/// Replace the CRV argument at `idx` by one CRV per part of its counted
/// values; the potential depends on the sum of the part histograms.
pub fn split_crv(g: &Parfactor, idx: usize, parts: &[Vec<Sym>]) -> Result<Parfactor> {
    let Arg::Count(c) = &g.args[idx] else {
        return Err(Error::Alignment(format!("{} is not a counting randvar", g.args[idx])));
    };
    let pieces: Vec<Crv> = parts
        .iter()
        .map(|vs| Crv { counted: c.counted.clone(), values: vs.iter().cloned().collect(), atoms: c.atoms.clone() })
        .collect();
    let hists: Vec<_> = pieces.iter().map(Crv::histograms).collect();
    let whole = c.histograms();
    let mut args = g.args[..idx].to_vec();
    args.extend(pieces.iter().cloned().map(Arg::Count));
    args.extend(g.args[idx + 1..].iter().cloned());
    let dims = g.dims();
    let k = pieces.len();
    let mut full = vec![0; dims.len()];
    let mut sum = vec![0u32; c.buckets()];
    let table = tabulate(&args, |cc| {
        full[..idx].copy_from_slice(&cc[..idx]);
        full[idx + 1..].copy_from_slice(&cc[idx + k..]);
        sum.iter_mut().for_each(|x| *x = 0);
        for (p, h) in hists.iter().enumerate() {
            for (s, &x) in sum.iter_mut().zip(h.get(cc[idx + p])) {
                *s += x;
            }
        }
        full[idx] = whole.index_of(&sum).expect("sum of part histograms");
        g.log_table[ravel(&full, &dims)]
    })?;
    Ok(Parfactor::from_log(g.name.clone(), args, g.constraint.clone(), table))
}

/// Occurrence of an atom in a parfactor: (parfactor, argument, atom index).
pub(crate) type Occurrence = (usize, usize, usize);

pub(crate) fn occurrence_instances(g: &Parfactor, arg: usize, atom: usize) -> BTreeSet<GroundAtom> {
    match &g.args[arg] {
        Arg::Prv(p) => g.instances(p, None),
        Arg::Count(c) => g.instances(&c.atoms[atom], Some(c)),
    }
}

/// Outcome of shattering: split and grounded parfactors are reported so the
/// caller can log them.
#[derive(Debug, Default)]
pub struct ShatterReport {
    pub splits: Vec<(String, usize)>,
    pub groundings: Vec<(String, usize)>,
}

/// Split parfactors until, for every randvar, any two occurrences (and the
/// extra instance sets) have equal or disjoint ground instance sets.
pub fn shatter(
    pfs: Vec<Parfactor>,
    extras: &[(PrvKey, BTreeSet<GroundAtom>)],
) -> Result<(Vec<Parfactor>, ShatterReport)> {
    let mut pfs: Vec<Parfactor> = pfs
        .into_iter()
        .filter(|g| !g.constraint.is_empty() || g.constraint.arity() == 0)
        .map(normalise)
        .collect();
    let mut report = ShatterReport::default();
    loop {
        let mut sets: HashMap<PrvKey, Vec<BTreeSet<GroundAtom>>> = HashMap::new();
        let mut occs: Vec<(Occurrence, PrvKey, BTreeSet<GroundAtom>)> = Vec::new();
        for (gi, g) in pfs.iter().enumerate() {
            for (ai, a) in g.args.iter().enumerate() {
                for (ki, p) in a.atoms().iter().enumerate() {
                    let inst = occurrence_instances(g, ai, ki);
                    sets.entry(p.key()).or_default().push(inst.clone());
                    occs.push(((gi, ai, ki), p.key(), inst));
                }
            }
        }
        for (k, s) in extras {
            if sets.contains_key(k) {
                sets.get_mut(k).unwrap().push(s.clone());
            }
        }
        let mut sig: HashMap<PrvKey, HashMap<GroundAtom, Vec<u32>>> = HashMap::new();
        for (k, list) in &sets {
            let m = sig.entry(k.clone()).or_default();
            for (si, s) in list.iter().enumerate() {
                for a in s {
                    m.entry(a.clone()).or_default().push(si as u32);
                }
            }
        }
        let offending = occs.iter().find(|(_, k, inst)| {
            let m = &sig[k];
            let mut it = inst.iter().map(|a| &m[a]);
            let first = it.next();
            it.any(|s| Some(s) != first)
        });
        let Some(((gi, ai, ki), key, _)) = offending else { break };
        let (gi, ai, ki) = (*gi, *ai, *ki);
        let g = pfs.remove(gi);
        let m = &sig[key];
        let names = g.constraint.names();
        // Per context: the signature of each counted value (one entry for a PRV).
        let ctx_sig = |ctx: &[Sym]| -> Vec<Vec<u32>> {
            match &g.args[ai] {
                Arg::Prv(p) => vec![m[&p.instance(&names, ctx)].clone()],
                Arg::Count(c) => {
                    let mut n2 = names.clone();
                    n2.push(c.counted.clone());
                    c.values
                        .iter()
                        .map(|v| {
                            let mut t = ctx.to_vec();
                            t.push(v.clone());
                            m[&c.atoms[ki].instance(&n2, &t)].clone()
                        })
                        .collect()
                }
            }
        };
        let per_ctx: Vec<(Vec<Sym>, Vec<Vec<u32>>)> = g
            .constraint
            .tuples()
            .into_iter()
            .map(|t| {
                let s = ctx_sig(&t);
                (t, s)
            })
            .collect();
        let distinct: BTreeSet<&Vec<Vec<u32>>> = per_ctx.iter().map(|(_, s)| s).collect();
        if distinct.len() == 1 {
            // Same split of the counted values in every context.
            let Arg::Count(c) = &g.args[ai] else { unreachable!("a PRV occurrence with one signature") };
            let sigs = distinct.into_iter().next().unwrap();
            let mut parts: Vec<(&Vec<u32>, Vec<Sym>)> = Vec::new();
            for (v, sg) in c.values.iter().zip(sigs) {
                match parts.iter_mut().find(|(x, _)| *x == sg) {
                    Some((_, vs)) => vs.push(v.clone()),
                    None => parts.push((sg, vec![v.clone()])),
                }
            }
            let parts: Vec<Vec<Sym>> = parts.into_iter().map(|(_, v)| v).collect();
            let piece = normalise(split_crv(&g, ai, &parts)?);
            report.splits.push((g.to_string(), piece.size()));
            pfs.push(piece);
            continue;
        }
        for s in distinct {
            let tuples: Vec<Vec<Sym>> =
                per_ctx.iter().filter(|(_, x)| x == s).map(|(t, _)| t.clone()).collect();
            let c = Constraint::from_tuples(g.constraint.logvars().to_vec(), tuples)?;
            let piece = normalise(Parfactor::from_log(g.name.clone(), g.args.clone(), c, g.log_table.clone()));
            report.splits.push((g.to_string(), piece.size()));
            pfs.push(piece);
        }
    }
    Ok((pfs, report))
}

/// Rename free logvars of `g` according to `map` (old -> new), moving any
/// other logvar that would collide out of the way first.
pub fn rename_free(g: &Parfactor, map: &BTreeMap<Sym, Sym>) -> Parfactor {
    let mut g = g.clone();
    let mut taken: BTreeSet<Sym> = g.all_logvars().into_iter().collect();
    taken.extend(map.values().cloned());
    // Temporarily move sources to fresh names to allow swaps.
    let mut staged = Vec::new();
    for (old, new) in map {
        if old == new {
            continue;
        }
        let tmp = fresh_name(old, &taken);
        taken.insert(tmp.clone());
        g = g.rename_logvar(old, &tmp);
        staged.push((tmp, new.clone()));
    }
    for (tmp, new) in staged {
        if g.all_logvars().contains(&new) {
            let away = fresh_name(&new, &taken);
            taken.insert(away.clone());
            g = g.rename_logvar(&new, &away);
        }
        g = g.rename_logvar(&tmp, &new);
    }
    g
}
