use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use tempolift::bench::{parse_config, run_suite, to_csv, Outcome};
use tempolift::classifier::{model_class, predict_liftability, Verdict};
use tempolift::dsl::{parse_evidence, parse_model, parse_queries, ParsedModel};
use tempolift::fojt::{answer_on_jtree, build_fojt, fuse, pass_messages, to_dot};
use tempolift::ground::{full_joint_enumerate, DEFAULT_ENUM_BUDGET};
use tempolift::ground_interface::{ground_interface_answer, DEFAULT_INTERFACE_BUDGET};
use tempolift::ldjt::{construct, ljt_unrolled_answer, run_ldjt};
use tempolift::lve::{lve_answer, OperatorLog};
use tempolift::model::{Evidence, Model, Pdm, Query};

const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "tempolift", version, about = "Exact lifted inference for temporal first-order models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a model; exit 0 liftable, 2 may ground, 3 unknown.
    Check { model: PathBuf },
    /// Answer queries under evidence.
    Infer {
        model: PathBuf,
        #[arg(long)]
        evidence: Option<PathBuf>,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_enum, default_value_t = Engine::Ldjt)]
        engine: Engine,
        /// Ground randvars for `enumerate`, interface-table cells for
        /// `ground-interface`.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Write the per-step junction tree as Graphviz DOT.
    Jtree {
        model: PathBuf,
        #[arg(long)]
        dot: PathBuf,
        /// Write the initial tree instead of the per-step one.
        #[arg(long)]
        initial: bool,
    },
    /// Run a benchmark configuration and write a CSV table.
    Bench {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Interface-table cell cap for ground runs.
        #[arg(long)]
        budget: Option<usize>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    Ldjt,
    LjtUnrolled,
    GroundInterface,
    Enumerate,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<ParsedModel> {
    parse_model(&read(path)?).map_err(|e| match e {
        tempolift::Error::Parse(diags) => {
            let lines: Vec<String> = diags.iter().map(|d| format!("{}:{d}", path.display())).collect();
            anyhow!("{}", lines.join("\n"))
        }
        other => anyhow!(other),
    })
}

fn check(model: &Path) -> Result<u8> {
    let parsed = load_model(model)?;
    let c = match &parsed {
        ParsedModel::Temporal(pdm) => predict_liftability(pdm),
        ParsedModel::Static(m) => {
            let mut c = model_class(m);
            c.verdict = if c.in_m2lv { Verdict::LdjtLiftable } else { Verdict::Unknown };
            c.rationale = if c.in_m2lv {
                "static 2-logvar model: lifted variable elimination and LJT are complete".into()
            } else {
                "static model outside M^2lv: no completeness result applies".into()
            };
            c
        }
    };
    print!("{}", c.report());
    let citation = c.rationale.split(':').next().unwrap_or_default();
    println!("case={} verdict={} citation={}", c.interslice_case, c.verdict, citation);
    Ok(c.verdict.exit_code() as u8)
}

fn strip_time(ev: &[Evidence], qs: &[Query]) -> (Vec<Evidence>, Vec<Query>) {
    let ev = ev.iter().map(|e| Evidence { atom: e.atom.with_time(None), value: e.value.clone() }).collect();
    let qs = qs.iter().map(|q| Query::new(q.atom.with_time(None), 0)).collect();
    (ev, qs)
}

fn infer_static(m: &Model, ev: &[Evidence], qs: &[Query], engine: Engine, budget: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let (ev, qs) = strip_time(ev, qs);
    let tree = if engine == Engine::LjtUnrolled {
        let mut log = OperatorLog::new();
        let t = fuse(&build_fojt(&m.parfactors, &[]))?.with_evidence(&ev, &mut log)?;
        Some(pass_messages(&t, &mut log)?)
    } else {
        None
    };
    qs.iter()
        .map(|q| {
            Ok(match engine {
                Engine::Ldjt => lve_answer(&m.parfactors, &q.atom, &ev)?.0,
                Engine::LjtUnrolled => match ev.iter().find(|e| e.atom == q.atom) {
                    Some(e) => {
                        let range = m.range_of(&q.atom.name).ok_or_else(|| anyhow!("unknown randvar {}", q.atom))?;
                        range.iter().map(|r| if *r == e.value { 1.0 } else { 0.0 }).collect()
                    }
                    None => answer_on_jtree(tree.as_ref().unwrap(), &q.atom)?.0,
                },
                Engine::Enumerate => {
                    full_joint_enumerate(&m.parfactors, &q.atom, &ev, budget.unwrap_or(DEFAULT_ENUM_BUDGET))?
                }
                Engine::GroundInterface => bail!("the ground interface engine needs a temporal model"),
            })
        })
        .collect()
}

fn infer_temporal(pdm: &Pdm, ev: &[Evidence], qs: &[Query], engine: Engine, budget: Option<usize>) -> Result<Vec<Vec<f64>>> {
    match engine {
        Engine::Ldjt => Ok(run_ldjt(Arc::new(construct(pdm)), ev, qs)?.0),
        Engine::LjtUnrolled => qs.iter().map(|q| Ok(ljt_unrolled_answer(pdm, ev, q)?.0)).collect(),
        Engine::GroundInterface => qs
            .iter()
            .map(|q| Ok(ground_interface_answer(pdm, q, ev, budget.unwrap_or(DEFAULT_INTERFACE_BUDGET))?))
            .collect(),
        Engine::Enumerate => qs
            .iter()
            .map(|q| {
                let m = pdm.unroll(q.current.max(q.target()) + 1)?;
                let e: Vec<Evidence> = ev.iter().filter(|e| e.step() <= q.current).cloned().collect();
                Ok(full_joint_enumerate(&m.parfactors, &q.atom, &e, budget.unwrap_or(DEFAULT_ENUM_BUDGET))?)
            })
            .collect(),
    }
}

fn infer(model: &Path, evidence: Option<&Path>, queries: &Path, engine: Engine, budget: Option<usize>) -> Result<u8> {
    let parsed = load_model(model)?;
    let ev = match evidence {
        Some(p) => parse_evidence(&read(p)?).with_context(|| format!("in {}", p.display()))?,
        None => Vec::new(),
    };
    let qs = parse_queries(&read(queries)?).with_context(|| format!("in {}", queries.display()))?;
    let answers = match &parsed {
        ParsedModel::Temporal(pdm) => infer_temporal(pdm, &ev, &qs, engine, budget)?,
        ParsedModel::Static(m) => infer_static(m, &ev, &qs, engine, budget)?,
    };
    for (i, (q, dist)) in qs.iter().zip(&answers).enumerate() {
        let range = match &parsed {
            ParsedModel::Temporal(p) => p.range_of(&q.atom.name),
            ParsedModel::Static(m) => m.range_of(&q.atom.name),
        }
        .ok_or_else(|| anyhow!("unknown randvar {}", q.atom))?;
        for (v, p) in range.iter().zip(dist) {
            println!("q{}, {}, {:.12}", i + 1, v, p);
        }
    }
    Ok(0)
}

fn jtree(model: &Path, dot: &Path, initial: bool) -> Result<u8> {
    let text = match load_model(model)? {
        ParsedModel::Temporal(pdm) => {
            let s = construct(&pdm);
            if initial {
                to_dot(&s.j0, false)
            } else {
                to_dot(&s.jt, true)
            }
        }
        ParsedModel::Static(m) => to_dot(&build_fojt(&m.parfactors, &[]), false),
    };
    std::fs::write(dot, text).with_context(|| format!("writing {}", dot.display()))?;
    Ok(0)
}

fn bench(config: &Path, out: &Path, seed: Option<u64>, budget: Option<usize>) -> Result<u8> {
    let mut cfg = parse_config(&read(config)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(b) = budget {
        cfg.budget = b;
    }
    let rows = run_suite(&cfg);
    for r in &rows {
        match &r.outcome {
            Outcome::Ok => {}
            Outcome::Timeout => eprintln!("{} n={} T={} {}: timed out", r.scenario, r.n, r.t, r.mode),
            Outcome::Failed(e) => eprintln!("{} n={} T={} {}: {e}", r.scenario, r.n, r.t, r.mode),
        }
    }
    std::fs::write(out, to_csv(&rows)).with_context(|| format!("writing {}", out.display()))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Check { model } => check(model),
        Command::Infer { model, evidence, queries, engine, budget } => {
            infer(model, evidence.as_deref(), queries, *engine, *budget)
        }
        Command::Jtree { model, dot, initial } => jtree(model, dot, *initial),
        Command::Bench { config, out, seed, budget } => bench(config, out, *seed, *budget),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
