mod common;

use proptest::prelude::*;

use common::*;
use tempolift::dsl::{parse_model, print_model, ParsedModel};
use tempolift::model::{Model, Parfactor};

fn same_parfactors(a: &[Parfactor], b: &[Parfactor]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(g, h)| {
            g.name == h.name
                && g.args == h.args
                && g.constraint == h.constraint
                && logs_close(&g.log_table, &h.log_table)
        })
}

fn same_model(a: &Model, b: &Model) -> bool {
    a.logvars == b.logvars && same_parfactors(&a.parfactors, &b.parfactors)
}

fn same(a: &ParsedModel, b: &ParsedModel) -> bool {
    match (a, b) {
        (ParsedModel::Static(m), ParsedModel::Static(n)) => same_model(m, n),
        (ParsedModel::Temporal(p), ParsedModel::Temporal(q)) => {
            same_model(&p.g0, &q.g0) && same_model(&p.g_arrow, &q.g_arrow)
        }
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn printed_models_parse_back_unchanged(seed in any::<u64>(), temporal in any::<bool>()) {
        let mut r = rng(seed);
        let m = if temporal {
            ParsedModel::Temporal(random_pdm(&mut r, 2, 40))
        } else {
            ParsedModel::Static(random_model(&mut r, 12, 3))
        };
        let text = print_model(&m);
        let back = parse_model(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert!(same(&m, &back), "{}", text);
        prop_assert_eq!(print_model(&back), text);
    }
}
