use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempolift")).args(args).output().unwrap()
}

fn small(dir: &Path, name: &str) -> PathBuf {
    let text = std::fs::read_to_string(fixture(name)).unwrap().replace("{x1, x2, x3}", "{x1, x2}");
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn check_exit_codes_follow_the_verdict() {
    let gex = run(&["check", fixture("gex.pdm").to_str().unwrap()]);
    assert_eq!(gex.status.code(), Some(2));
    assert!(stdout(&gex).contains("citation=counterexample theorem"));
    let lift = run(&["check", fixture("case_i_hot.pdm").to_str().unwrap()]);
    assert_eq!(lift.status.code(), Some(0));
    assert!(stdout(&lift).contains("case=case_i verdict=ldjt_liftable"));
}

#[test]
fn check_unknown_for_three_logvars() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m3.pdm");
    std::fs::write(
        &p,
        "domain X = {a, b}; domain Y = {a, b}; domain Z = {a, b};
         randvar A(X, Y, Z) : bool;
         temporal { init { parfactor g = phi(A(X,Y,Z)) [ 1 2 ]; }
                    transition { parfactor gT = phiT(A@0(X,Y,Z), A@1(X,Y,Z)) [ 3 1 1 3 ]; } }",
    )
    .unwrap();
    assert_eq!(run(&["check", p.to_str().unwrap()]).status.code(), Some(3));
}

fn parse_lines(s: &str) -> Vec<(String, String, f64)> {
    s.lines()
        .map(|l| {
            let f: Vec<&str> = l.split(", ").collect();
            (f[0].to_string(), f[1].to_string(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn engines_print_identical_marginals() {
    let dir = tempfile::tempdir().unwrap();
    let model = small(dir.path(), "case_i_hot.pdm");
    let ev = dir.path().join("ev.txt");
    let qs = dir.path().join("q.txt");
    std::fs::write(&ev, "t=0 Hot = true\nt=1 DoR(x1) = false\n").unwrap();
    std::fs::write(&qs, "filter t=1 P(Pub(x1,j1))\nsmooth t=1 pi=0 P(Hot)\npredict t=0 pi=1 P(DoR(x2))\n").unwrap();
    let infer = |engine: &str| {
        let o = run(&[
            "infer",
            model.to_str().unwrap(),
            "--evidence",
            ev.to_str().unwrap(),
            "--queries",
            qs.to_str().unwrap(),
            "--engine",
            engine,
            "--budget",
            "22",
        ]);
        assert_eq!(o.status.code(), Some(0), "{engine}: {}", String::from_utf8_lossy(&o.stderr));
        parse_lines(&stdout(&o))
    };
    let want = infer("enumerate");
    assert_eq!(want.len(), 6);
    assert_eq!(want[0].0, "q1");
    for engine in ["ldjt", "ljt-unrolled", "ground-interface"] {
        let got = infer(engine);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_eq!((&g.0, &g.1), (&w.0, &w.1));
            assert!((g.2 - w.2).abs() < 1e-9, "{engine}: {g:?} vs {w:?}");
        }
    }
}

#[test]
fn jtree_dot_shows_the_two_parclusters() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.dot");
    let o = run(&["jtree", fixture("gex.pdm").to_str().unwrap(), "--dot", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let dot = std::fs::read_to_string(out).unwrap();
    assert_eq!(dot.matches("[label=\"C").count(), 2);
    assert!(dot.contains("C1 -- C2 [label=\"Pub_t(X,J)\"]"));
    assert!(dot.contains("{DoR_t-1(X), Pub_t-1(X,J), Pub_t(X,J)}\\nG: {gP}"));
    assert!(dot.contains("{Att_t(J), DoR_t(X), Hot_t, Pub_t(X,J)}\\nG: {g0, g1}"));
}

#[test]
fn bench_writes_the_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b.toml");
    let out = dir.path().join("b.csv");
    std::fs::write(&cfg, "[[scenario]]\nfamily = \"chain\"\nmodes = [\"ldjt\", \"ground\"]\nn = [2, 3]\nT = [2]\n").unwrap();
    let o = run(&["bench", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("scenario,n,T,mode,wall_ms,mults,sumouts,countconvs,groundings,max_factor,predicted_cost")
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn bad_flags_exit_64_and_runtime_failures_exit_1() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(run(&["infer", "x.pdm"]).status.code(), Some(64));
    let o = run(&["check", "/nonexistent/model.pdm"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn parse_errors_carry_positions() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.pdm");
    std::fs::write(&p, "domain X = {a};\nrandvar A(X) : bool;\nparfactor g = phi(A(X)) [ 1 ];\n").unwrap();
    let o = run(&["check", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.pdm:3:"));
}
