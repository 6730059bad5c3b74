//! Text formats: the model language, evidence files and query files.
//!
//! ```text
//! domain X = {x1, x2, x3};
//! randvar Pub(X, J) : bool;
//! randvar Lvl : {low, high};
//! parfactor g0 = phi0(Pub(X,J), Hot, Att(J)) [ 1 2 3 4 5 6 7 8 ];
//! parfactor g1 = phi1(#X[DoR(X)], Hot) constraint () in {()} log [ ... ];
//! temporal {
//!   init { parfactor ... ; }
//!   transition { parfactor gP = phiP(Pub@0(X,J), DoR@0(X), Pub@1(X,J)) [ ... ]; }
//! }
//! ```
//!
//! Potentials are listed in row-major order of the argument ranges, the last
//! argument varying fastest; a CRV's values are its histograms in descending
//! lexicographic order. `log [..]` lists natural-log potentials instead.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Diagnostic, Error, Result};
use crate::model::{
    boolean_range, Arg, Constraint, Crv, Evidence, GroundAtom, Logvar, Model, Parfactor, Pdm, Prv, Query, QueryKind,
    Sym, Term,
};

/// A parsed model: either a single model or a temporal one.
#[derive(Clone, Debug, PartialEq)]
pub enum ParsedModel {
    Static(Model),
    Temporal(Pdm),
}

impl ParsedModel {
    pub fn as_pdm(&self) -> Option<&Pdm> {
        match self {
            ParsedModel::Temporal(p) => Some(p),
            ParsedModel::Static(_) => None,
        }
    }

    pub fn as_model(&self) -> Option<&Model> {
        match self {
            ParsedModel::Static(m) => Some(m),
            ParsedModel::Temporal(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Punct(char),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str, diags: &mut Vec<Diagnostic>) -> Vec<Token> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
            } else if c == '/' && chars.get(i + 1) == Some(&'/') {
                break;
            } else if c.is_ascii_digit()
                || ((c == '-' || c == '+' || c == '.') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.' || *d == 'i'))
            {
                let start = i;
                i += 1;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric()
                        || chars[i] == '.'
                        || ((chars[i] == '-' || chars[i] == '+') && matches!(chars[i - 1], 'e' | 'E')))
                {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                match s.parse::<f64>() {
                    Ok(v) => out.push(Token { tok: Tok::Num(v), line: li + 1, column: col }),
                    Err(_) => diags.push(Diagnostic { line: li + 1, column: col, message: format!("bad number {s}") }),
                }
            } else if c.is_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let tok = if s == "inf" { Tok::Num(f64::INFINITY) } else { Tok::Ident(s) };
                out.push(Token { tok, line: li + 1, column: col });
            } else if "={}()[],;:@#".contains(c) {
                out.push(Token { tok: Tok::Punct(c), line: li + 1, column: col });
                i += 1;
            } else {
                diags.push(Diagnostic { line: li + 1, column: col, message: format!("unexpected character '{c}'") });
                i += 1;
            }
        }
    }
    out
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
    domains: Vec<Logvar>,
    randvars: BTreeMap<String, (Vec<String>, Arc<[Sym]>)>,
}

type PResult<T> = std::result::Result<T, Diagnostic>;

#[derive(Clone, Copy, PartialEq)]
enum Block {
    Static,
    Init,
    Transition,
}

impl Parser {
    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos).or(self.toks.last()) {
            Some(t) => (t.line, t.column),
            None => (1, 1),
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        let (line, column) = self.here();
        Err(Diagnostic { line, column, message: message.into() })
    }

    fn err_at<T>(&self, at: usize, message: impl Into<String>) -> PResult<T> {
        let t = &self.toks[at];
        Err(Diagnostic { line: t.line, column: t.column, message: message.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn at_punct(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Punct(c))
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == w)
    }

    fn punct(&mut self, c: char) -> PResult<()> {
        if self.at_punct(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected a name"),
        }
    }

    fn keyword(&mut self, w: &str) -> PResult<()> {
        if self.at_word(w) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{w}'"))
        }
    }

    /// Comma-separated names between `open` and `close`.
    fn name_list(&mut self, open: char, close: char) -> PResult<Vec<String>> {
        self.punct(open)?;
        let mut out = Vec::new();
        if self.at_punct(close) {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.ident()?);
            if self.at_punct(',') {
                self.pos += 1;
            } else {
                self.punct(close)?;
                return Ok(out);
            }
        }
    }

    /// Skip to just past the next `;` at the current nesting level, unless
    /// the failed statement already ended.
    fn recover(&mut self) {
        if self.pos > 0 && self.toks.get(self.pos - 1).is_some_and(|t| t.tok == Tok::Punct(';')) {
            return;
        }
        let mut depth = 0i32;
        while let Some(t) = self.peek() {
            match t {
                Tok::Punct('{') | Tok::Punct('[') | Tok::Punct('(') => depth += 1,
                Tok::Punct('}') if depth == 0 => return,
                Tok::Punct('}') | Tok::Punct(']') | Tok::Punct(')') => depth = (depth - 1).max(0),
                Tok::Punct(';') if depth == 0 => {
                    self.pos += 1;
                    return;
                }
                _ => {}
            }
            self.pos += 1;
        }
    }

    fn recover_after_skip(&mut self) {
        if self.toks.get(self.pos - 1).is_some_and(|t| t.tok == Tok::Punct(';')) {
            return;
        }
        self.recover();
    }

    fn domain(&self, name: &str) -> Option<&Logvar> {
        self.domains.iter().find(|l| &*l.name == name)
    }

    fn stmt_domain(&mut self) -> PResult<()> {
        let at = self.pos;
        self.keyword("domain")?;
        let name = self.ident()?;
        self.punct('=')?;
        let consts = self.name_list('{', '}')?;
        self.punct(';')?;
        if self.domain(&name).is_some() {
            return self.err_at(at, format!("domain {name} declared twice"));
        }
        if consts.is_empty() {
            return self.err_at(at, format!("domain {name} is empty"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &consts {
            if !seen.insert(c) {
                return self.err_at(at, format!("constant {c} repeated in domain {name}"));
            }
        }
        self.domains.push(Logvar::new(&name, consts));
        Ok(())
    }

    fn stmt_randvar(&mut self) -> PResult<()> {
        let at = self.pos;
        self.keyword("randvar")?;
        let name = self.ident()?;
        let params = if self.at_punct('(') { self.name_list('(', ')')? } else { Vec::new() };
        self.punct(':')?;
        let range: Arc<[Sym]> = if self.at_word("bool") {
            self.pos += 1;
            boolean_range()
        } else {
            self.name_list('{', '}')?.iter().map(|s| Sym::from(s.as_str())).collect()
        };
        self.punct(';')?;
        for p in &params {
            if self.domain(p).is_none() {
                return self.err_at(at, format!("undeclared logvar {p} in randvar {name}"));
            }
        }
        if range.is_empty() {
            return self.err_at(at, format!("randvar {name} has an empty range"));
        }
        if self.randvars.insert(name.clone(), (params, range)).is_some() {
            return self.err_at(at, format!("randvar {name} declared twice"));
        }
        Ok(())
    }

    fn atom(&mut self, block: Block) -> PResult<Prv> {
        let name = self.ident()?;
        let time = if self.at_punct('@') {
            self.pos += 1;
            match self.peek() {
                Some(Tok::Num(v)) if *v == 0.0 || *v == 1.0 => {
                    let v = *v as u32;
                    self.pos += 1;
                    Some(v)
                }
                _ => return self.err("expected slice 0 or 1 after '@'"),
            }
        } else {
            None
        };
        match (block, time) {
            (Block::Static, Some(_)) => return self.err(format!("{name}: slices are only allowed in a temporal block")),
            (Block::Transition, None) => return self.err(format!("{name}: transition randvars need @0 or @1")),
            (Block::Init, Some(1)) => return self.err(format!("{name}: init randvars live in slice 0")),
            _ => {}
        }
        let terms = if self.at_punct('(') { self.name_list('(', ')')? } else { Vec::new() };
        let Some((params, range)) = self.randvars.get(&name).cloned() else {
            return self.err(format!("undeclared randvar {name}"));
        };
        if params.len() != terms.len() {
            return self.err(format!("randvar {name} takes {} arguments, got {}", params.len(), terms.len()));
        }
        let mut out = Vec::new();
        for (t, p) in terms.iter().zip(&params) {
            if self.domain(t).is_some() {
                out.push(Term::Var(Sym::from(t.as_str())));
            } else if self.domain(p).is_some_and(|d| d.domain.iter().any(|c| &**c == t)) {
                out.push(Term::Const(Sym::from(t.as_str())));
            } else {
                return self.err(format!("{t} is neither a logvar nor a constant of {p}"));
            }
        }
        Ok(Prv { name: Sym::from(name.as_str()), time, terms: out, range })
    }

    fn arg(&mut self, block: Block) -> PResult<Arg> {
        if !self.at_punct('#') {
            return Ok(Arg::Prv(self.atom(block)?));
        }
        self.pos += 1;
        let counted = self.ident()?;
        let Some(lv) = self.domain(&counted).cloned() else {
            return self.err(format!("undeclared logvar {counted}"));
        };
        let values: Arc<[Sym]> = if self.at_punct('{') {
            let v = self.name_list('{', '}')?;
            for c in &v {
                if !lv.domain.iter().any(|d| &**d == c) {
                    return self.err(format!("{c} is not in the domain of {counted}"));
                }
            }
            v.iter().map(|s| Sym::from(s.as_str())).collect()
        } else {
            lv.domain.clone()
        };
        self.punct('[')?;
        let mut atoms = vec![self.atom(block)?];
        while self.at_punct(',') {
            self.pos += 1;
            atoms.push(self.atom(block)?);
        }
        self.punct(']')?;
        for a in &atoms {
            if !a.vars().any(|v| **v == *counted) {
                return self.err(format!("{a} does not mention counted logvar {counted}"));
            }
        }
        Ok(Arg::Count(Crv { counted: lv.name.clone(), values, atoms }))
    }

    fn numbers(&mut self) -> PResult<Vec<f64>> {
        self.punct('[')?;
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Num(v)) => {
                    out.push(*v);
                    self.pos += 1;
                }
                Some(Tok::Punct(',')) => self.pos += 1,
                Some(Tok::Punct(']')) => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return self.err("expected a potential or ']'"),
            }
        }
    }

    fn stmt_parfactor(&mut self, block: Block) -> PResult<Parfactor> {
        let at = self.pos;
        self.keyword("parfactor")?;
        let name = self.ident()?;
        self.punct('=')?;
        self.ident()?;
        self.punct('(')?;
        let mut args = vec![self.arg(block)?];
        while self.at_punct(',') {
            self.pos += 1;
            args.push(self.arg(block)?);
        }
        self.punct(')')?;
        let mut free: Vec<Sym> = Vec::new();
        for a in &args {
            for p in a.atoms() {
                for v in p.vars() {
                    let counted = matches!(a, Arg::Count(c) if c.counted == *v);
                    if !counted && !free.contains(v) {
                        free.push(v.clone());
                    }
                }
            }
        }
        let constraint = if self.at_word("constraint") {
            self.pos += 1;
            let names = self.name_list('(', ')')?;
            self.keyword("in")?;
            self.punct('{')?;
            let mut tuples = Vec::new();
            while self.at_punct('(') {
                let t = self.name_list('(', ')')?;
                tuples.push(t.iter().map(|s| Sym::from(s.as_str())).collect::<Vec<Sym>>());
                if self.at_punct(',') {
                    self.pos += 1;
                }
            }
            self.punct('}')?;
            let mut sorted_names: Vec<&str> = names.iter().map(String::as_str).collect();
            sorted_names.sort();
            let mut sorted_free: Vec<&str> = free.iter().map(|s| &**s).collect();
            sorted_free.sort();
            if sorted_names != sorted_free {
                return self.err(format!("constraint of {name} must cover exactly {}", free.join(", ")));
            }
            let lvs: Vec<Logvar> = names.iter().map(|n| self.domain(n).cloned().unwrap()).collect();
            match Constraint::from_tuples(lvs, tuples) {
                Ok(c) => c,
                Err(e) => return self.err(format!("constraint of {name}: {e}")),
            }
        } else {
            Constraint::top(free.iter().map(|n| self.domain(n).cloned().unwrap()).collect())
        };
        let log = if self.at_word("log") {
            self.pos += 1;
            true
        } else {
            false
        };
        let values = self.numbers()?;
        self.punct(';')?;
        let potentials: Vec<f64> = if log { values.iter().map(|v| v.exp()).collect() } else { values.clone() };
        if log && values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return self.err_at(at, format!("parfactor {name} has a non-finite log potential"));
        }
        match Parfactor::new(&name, args, constraint, potentials) {
            Ok(mut g) => {
                if log {
                    g.log_table = values;
                }
                Ok(g)
            }
            Err(e) => self.err_at(at, e.to_string()),
        }
    }

    fn block(&mut self, block: Block, out: &mut Vec<Parfactor>) -> PResult<()> {
        self.punct('{')?;
        while !self.at_punct('}') {
            if self.peek().is_none() {
                return self.err("unterminated block");
            }
            let start = self.pos;
            match self.stmt_parfactor(block) {
                Ok(g) => out.push(g),
                Err(d) => {
                    self.diags.push(d);
                    if self.pos == start {
                        self.pos += 1;
                        self.recover_after_skip();
                    } else {
                        self.recover();
                    }
                }
            }
        }
        self.pos += 1;
        Ok(())
    }
}

/// Parse model text. All diagnostics found are reported together.
pub fn parse_model(text: &str) -> Result<ParsedModel> {
    let mut diags = Vec::new();
    let toks = lex(text, &mut diags);
    let mut p = Parser { toks, pos: 0, diags, domains: Vec::new(), randvars: BTreeMap::new() };
    let mut statics = Vec::new();
    let mut temporal: Option<(Vec<Parfactor>, Vec<Parfactor>)> = None;
    while p.peek().is_some() {
        let start = p.pos;
        let r = if p.at_word("domain") {
            p.stmt_domain()
        } else if p.at_word("randvar") {
            p.stmt_randvar()
        } else if p.at_word("parfactor") {
            p.stmt_parfactor(Block::Static).map(|g| statics.push(g))
        } else if p.at_word("temporal") {
            p.pos += 1;
            let mut init = Vec::new();
            let mut trans = Vec::new();
            let r = (|| {
                p.punct('{')?;
                p.keyword("init")?;
                p.block(Block::Init, &mut init)?;
                p.keyword("transition")?;
                p.block(Block::Transition, &mut trans)?;
                p.punct('}')
            })();
            if temporal.is_some() {
                p.err("only one temporal block is allowed")
            } else {
                temporal = Some((init, trans));
                r
            }
        } else {
            p.err("expected 'domain', 'randvar', 'parfactor' or 'temporal'")
        };
        if let Err(d) = r {
            p.diags.push(d);
            if p.pos == start {
                p.pos += 1;
                p.recover_after_skip();
            } else {
                p.recover();
            }
        }
    }
    if temporal.is_some() && !statics.is_empty() {
        p.diags.push(Diagnostic {
            line: 1,
            column: 1,
            message: "parfactors of a temporal model belong in its init or transition block".into(),
        });
    }
    if !p.diags.is_empty() {
        return Err(Error::Parse(p.diags));
    }
    Ok(match temporal {
        None => ParsedModel::Static(Model::new(p.domains, statics)),
        Some((init, trans)) => ParsedModel::Temporal(Pdm::new(
            Model::new(p.domains.clone(), init),
            Model::new(p.domains, trans),
        )),
    })
}

fn fmt_f64(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

fn print_parfactor(out: &mut String, g: &Parfactor, lvs: &[Logvar], indent: &str) {
    let args: Vec<String> = g
        .args
        .iter()
        .map(|a| match a {
            Arg::Prv(p) => p.to_string(),
            Arg::Count(c) => {
                let atoms: Vec<String> = c.atoms.iter().map(|p| p.to_string()).collect();
                let full = lvs.iter().find(|l| l.name == c.counted).is_some_and(|l| l.domain == c.values);
                if full {
                    format!("#{}[{}]", c.counted, atoms.join(", "))
                } else {
                    let v: Vec<&str> = c.values.iter().map(|s| &**s).collect();
                    format!("#{}{{{}}}[{}]", c.counted, v.join(", "), atoms.join(", "))
                }
            }
        })
        .collect();
    let _ = write!(out, "{indent}parfactor {} = phi({})", g.name, args.join(", "));
    let top_in_order = g.constraint.is_top() && {
        let mut free: Vec<Sym> = Vec::new();
        for a in &g.args {
            for p in a.atoms() {
                for v in p.vars() {
                    let counted = matches!(a, Arg::Count(c) if c.counted == *v);
                    if !counted && !free.contains(v) {
                        free.push(v.clone());
                    }
                }
            }
        }
        free == g.constraint.names()
    };
    if !top_in_order {
        let names: Vec<&str> = g.constraint.logvars().iter().map(|l| &*l.name).collect();
        let tuples: Vec<String> = g
            .constraint
            .tuples()
            .iter()
            .map(|t| format!("({})", t.iter().map(|s| &**s).collect::<Vec<_>>().join(", ")))
            .collect();
        let _ = write!(out, " constraint ({}) in {{{}}}", names.join(", "), tuples.join(", "));
    }
    let table: Vec<String> = g.log_table.iter().map(|&v| fmt_f64(v)).collect();
    let _ = writeln!(out, " log [{}];", table.join(" "));
}

/// Print a model in the text format; `parse_model(print_model(m)) == m`.
pub fn print_model(m: &ParsedModel) -> String {
    let (lvs, groups): (Vec<Logvar>, Vec<&[Parfactor]>) = match m {
        ParsedModel::Static(m) => (m.logvars.clone(), vec![&m.parfactors]),
        ParsedModel::Temporal(p) => (p.logvars(), vec![&p.g0.parfactors, &p.g_arrow.parfactors]),
    };
    let mut out = String::new();
    for l in &lvs {
        let c: Vec<&str> = l.domain.iter().map(|s| &**s).collect();
        let _ = writeln!(out, "domain {} = {{{}}};", l.name, c.join(", "));
    }
    let mut decls: BTreeMap<Sym, (Vec<Option<Sym>>, Arc<[Sym]>)> = BTreeMap::new();
    for g in groups.iter().flat_map(|s| s.iter()) {
        for p in g.args.iter().flat_map(|a| a.atoms()) {
            let e = decls.entry(p.name.clone()).or_insert_with(|| (vec![None; p.terms.len()], p.range.clone()));
            for (slot, t) in e.0.iter_mut().zip(&p.terms) {
                if slot.is_none() {
                    *slot = match t {
                        Term::Var(v) => lvs.iter().any(|l| l.name == *v).then(|| v.clone()),
                        Term::Const(c) => lvs.iter().find(|l| l.domain.contains(c)).map(|l| l.name.clone()),
                    };
                }
            }
        }
    }
    for (name, (params, range)) in &decls {
        let ps: Vec<&str> = params.iter().map(|p| p.as_deref().unwrap_or("?")).collect();
        let r = if *range == boolean_range() {
            "bool".to_string()
        } else {
            format!("{{{}}}", range.iter().map(|s| &**s).collect::<Vec<_>>().join(", "))
        };
        if ps.is_empty() {
            let _ = writeln!(out, "randvar {name} : {r};");
        } else {
            let _ = writeln!(out, "randvar {name}({}) : {r};", ps.join(", "));
        }
    }
    match m {
        ParsedModel::Static(m) => {
            for g in &m.parfactors {
                print_parfactor(&mut out, g, &lvs, "");
            }
        }
        ParsedModel::Temporal(p) => {
            out.push_str("temporal {\n  init {\n");
            for g in &p.g0.parfactors {
                print_parfactor(&mut out, g, &lvs, "    ");
            }
            out.push_str("  }\n  transition {\n");
            for g in &p.g_arrow.parfactors {
                print_parfactor(&mut out, g, &lvs, "    ");
            }
            out.push_str("  }\n}\n");
        }
    }
    out
}

fn diag(line: usize, message: impl Into<String>) -> Diagnostic {
    Diagnostic { line, column: 1, message: message.into() }
}

/// Parse `Name(c1,..,cn)` or `Name` at time `t`.
fn ground_atom(s: &str, t: u32) -> std::result::Result<GroundAtom, String> {
    let s = s.trim();
    let (name, args) = match s.find('(') {
        Some(i) => {
            let rest = s[i + 1..].strip_suffix(')').ok_or_else(|| format!("unbalanced parentheses in {s}"))?;
            let args: Vec<&str> = rest.split(',').map(str::trim).collect();
            (&s[..i], args)
        }
        None => (s, Vec::new()),
    };
    let ok = |x: &str| !x.is_empty() && x.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '\'');
    if !ok(name) || !args.iter().all(|a| ok(a)) {
        return Err(format!("bad ground randvar {s}"));
    }
    Ok(GroundAtom::new(name, Some(t), &args))
}

fn step_field(word: &str, key: &str) -> Option<u32> {
    word.strip_prefix(key)?.strip_prefix('=')?.parse().ok()
}

/// Evidence lines `t=<k> <GroundPRV> = <value>` in non-decreasing `k`.
pub fn parse_evidence(text: &str) -> Result<Vec<Evidence>> {
    let mut out = Vec::new();
    let mut diags = Vec::new();
    let mut last = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split("//").next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let parsed = (|| {
            let (head, value) = line.rsplit_once('=').ok_or("expected '<atom> = <value>'")?;
            let (t, atom) = head.trim().split_once(char::is_whitespace).ok_or("expected 't=<k> <atom>'")?;
            let t = step_field(t, "t").ok_or("expected 't=<k>'")?;
            let value = value.trim();
            if value.is_empty() || value.contains(char::is_whitespace) {
                return Err("bad value".to_string());
            }
            Ok((t, ground_atom(atom, t)?, value.to_string()))
        })();
        match parsed {
            Ok((t, atom, value)) => {
                if t < last {
                    diags.push(diag(i + 1, format!("evidence for t={t} after t={last}")));
                    continue;
                }
                last = t;
                out.push(Evidence::new(atom, &value));
            }
            Err(m) => diags.push(diag(i + 1, m)),
        }
    }
    if diags.is_empty() {
        Ok(out)
    } else {
        Err(Error::Parse(diags))
    }
}

/// Query lines `filter|predict|smooth t=<k> [pi=<j>] P(<GroundPRV>)`.
/// `t` is the current step and `pi` the step asked about (default `t`).
pub fn parse_queries(text: &str) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    let mut diags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split("//").next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let parsed = (|| {
            let mut words = line.splitn(2, char::is_whitespace);
            let kind = match words.next() {
                Some("filter") => QueryKind::Filtering,
                Some("predict") => QueryKind::Prediction,
                Some("smooth") => QueryKind::Smoothing,
                _ => return Err("expected filter, predict or smooth".to_string()),
            };
            let rest = words.next().unwrap_or("").trim();
            let (t, rest) = rest.split_once(char::is_whitespace).ok_or("expected 't=<k>'")?;
            let t = step_field(t, "t").ok_or("expected 't=<k>'")?;
            let mut rest = rest.trim();
            let mut pi = t;
            if rest.starts_with("pi=") {
                let (p, r) = rest.split_once(char::is_whitespace).ok_or("expected P(<atom>)")?;
                pi = step_field(p, "pi").ok_or("expected 'pi=<j>'")?;
                rest = r.trim();
            }
            let inner = rest
                .strip_prefix("P(")
                .and_then(|r| r.strip_suffix(')'))
                .ok_or("expected P(<atom>)")?;
            let q = Query::new(ground_atom(inner, pi)?, t);
            if q.kind() != kind {
                return Err(format!("pi={pi} with t={t} is not a {} query", &line[..line.find(' ').unwrap_or(0)]));
            }
            Ok(q)
        })();
        match parsed {
            Ok(q) => out.push(q),
            Err(m) => diags.push(diag(i + 1, m)),
        }
    }
    if diags.is_empty() {
        Ok(out)
    } else {
        Err(Error::Parse(diags))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "
        domain X = {x1, x2};
        randvar A(X) : bool;
        randvar B : {lo, mid, hi};
        parfactor g = phi(A(X), B) [1 2 3 4 5 6];
    ";

    #[test]
    fn parses_and_round_trips() {
        let m = parse_model(SMALL).unwrap();
        let ParsedModel::Static(model) = &m else { panic!() };
        assert_eq!(model.parfactors[0].size(), 6);
        assert_eq!(parse_model(&print_model(&m)).unwrap(), m);
    }

    #[test]
    fn missing_row_is_an_arity_diagnostic() {
        let text = SMALL.replace("[1 2 3 4 5 6]", "[1 2 3 4 5]");
        let Err(Error::Parse(d)) = parse_model(&text) else { panic!() };
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("needs 6 potentials"), "{}", d[0]);
        assert_eq!(d[0].line, 5);
    }

    #[test]
    fn collects_several_errors() {
        let text = "domain X = {x1};\nrandvar A(Y) : bool;\nparfactor g = phi(C) [1 2];\n";
        let Err(Error::Parse(d)) = parse_model(text) else { panic!() };
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].line, d[1].line), (2, 3));
    }

    #[test]
    fn evidence_order_is_enforced() {
        let ok = parse_evidence("t=0 A(x1) = true\nt=2 B = hi\n").unwrap();
        assert_eq!(ok[1].atom, GroundAtom::new("B", Some(2), &[]));
        let Err(Error::Parse(d)) = parse_evidence("t=2 B = hi\nt=1 A(x1) = true\n") else { panic!() };
        assert_eq!(d[0].line, 2);
    }

    #[test]
    fn query_kinds() {
        let q = parse_queries("filter t=3 P(A(x1))\npredict t=3 pi=5 P(B)\nsmooth t=3 pi=1 P(B)\n").unwrap();
        let kinds: Vec<QueryKind> = q.iter().map(Query::kind).collect();
        assert_eq!(kinds, vec![QueryKind::Filtering, QueryKind::Prediction, QueryKind::Smoothing]);
        assert_eq!(q[1].atom.time, Some(5));
        assert!(parse_queries("predict t=3 pi=2 P(B)").is_err());
    }
}
