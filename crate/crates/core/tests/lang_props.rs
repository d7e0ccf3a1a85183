use proptest::prelude::*;
use proviq_core::lang::ast::{ExprKind, StmtKind, ATTRIBUTE_WHITELIST, BUILTIN_WHITELIST, METHOD_WHITELIST};
use proviq_core::lang::{compile, parse, render, validate, Program, TaskKind};
use proviq_testkit::programs::{self, mutants, Mutation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn generated(seed: u64) -> Program {
    programs::program(&mut ChaCha8Rng::seed_from_u64(seed), 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn render_parse_round_trip(seed in any::<u64>()) {
        let p = generated(seed);
        let text = render(&p);
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &p, "{}", text);
        prop_assert_eq!(render(&back), text);
    }

    #[test]
    fn arbitrary_text_never_panics(src in "(def run\\(video\\):\n    )?[a-z_(). \"'0-9:=+\n-]{0,80}") {
        let _ = parse(&src);
    }

    #[test]
    fn accepted_programs_only_name_whitelisted_operations(seed in any::<u64>()) {
        let p = generated(seed);
        for task in [TaskKind::Qa, TaskKind::Edit] {
            if validate(&p, task).is_ok() {
                let mut names = Vec::new();
                walk_calls(&p.body, &mut names);
                for n in names {
                    prop_assert!(
                        METHOD_WHITELIST.contains(&n.as_str())
                            || BUILTIN_WHITELIST.contains(&n.as_str())
                            || ATTRIBUTE_WHITELIST.contains(&n.as_str()),
                        "accepted program names {n}"
                    );
                }
            }
        }
    }
}

fn walk_calls(stmts: &[proviq_core::lang::ast::Stmt], out: &mut Vec<String>) {
    fn expr(e: &proviq_core::lang::ast::Expr, out: &mut Vec<String>) {
        match &e.kind {
            ExprKind::MethodCall { receiver, method, args } => {
                out.push(method.clone());
                expr(receiver, out);
                args.iter().for_each(|a| expr(a, out));
            }
            ExprKind::BuiltinCall { name, args } => {
                out.push(name.clone());
                args.iter().for_each(|a| expr(a, out));
            }
            ExprKind::Attribute { receiver, name } => {
                out.push(name.clone());
                expr(receiver, out);
            }
            ExprKind::Arith { lhs, rhs, .. } | ExprKind::Compare { lhs, rhs, .. } | ExprKind::Logical { lhs, rhs, .. } => {
                expr(lhs, out);
                expr(rhs, out);
            }
            ExprKind::Index { receiver, key } => {
                expr(receiver, out);
                expr(key, out);
            }
            ExprKind::Not(x) => expr(x, out),
            ExprKind::List(xs) => xs.iter().for_each(|x| expr(x, out)),
            ExprKind::Map(kv) => kv.iter().for_each(|(k, v)| {
                expr(k, out);
                expr(v, out)
            }),
            ExprKind::Literal(_) | ExprKind::Name(_) => {}
        }
    }
    for s in stmts {
        match &s.kind {
            StmtKind::Assign { value, .. } => expr(value, out),
            StmtKind::Return(e) => expr(e, out),
            StmtKind::If { cond, then_body, else_body } => {
                expr(cond, out);
                walk_calls(then_body, out);
                walk_calls(else_body, out);
            }
        }
    }
}

#[test]
fn example_programs_compile() {
    for (name, src) in programs::VALID_EXAMPLES {
        let p = compile(src, TaskKind::Qa).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parse(&render(&p)).unwrap(), p, "{name}");
    }
    assert_eq!(parse(programs::SKIER).unwrap().body.len(), 5);
}

#[test]
fn published_party_program_flags_only_the_undefined_name() {
    let p = parse(programs::PARTY_AS_PUBLISHED).unwrap();
    let report = validate(&p, TaskKind::Qa);
    assert_eq!(report.violations.len(), 1, "{:?}", report.violations);
    let d = &report.violations[0];
    assert!(d.message.contains("vid_segment"), "{}", d.message);
    assert_eq!(d.line, 3);
}

#[test]
fn mutants_are_rejected_with_positions() {
    let all = mutants();
    assert!(all.len() >= 50, "only {} mutants", all.len());
    for kind in [Mutation::Loop, Mutation::Import, Mutation::UnknownMethod, Mutation::MissingReturn] {
        assert!(all.iter().any(|m| m.mutation == kind), "no {kind} mutants");
    }
    for m in &all {
        let err = compile(&m.source, TaskKind::Qa).expect_err(&format!("{} / {} accepted:\n{}", m.base, m.mutation, m.source));
        let lines = m.source.lines().count() as u32;
        for d in err.diagnostics() {
            assert!(d.line >= 1 && d.line <= lines && d.col >= 1, "{} / {}: bad position {d}", m.base, m.mutation);
        }
    }
}

#[test]
fn unknown_method_is_named() {
    let src = "def answer_question(video, possible_answers):\n    return video.download()\n";
    let err = compile(src, TaskKind::Qa).unwrap_err();
    assert!(err.to_string().contains("unknown method: download"), "{err}");
}
