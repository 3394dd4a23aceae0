mod common;

use codeplay::dsl::*;
use codeplay::envs::Game;
use common::{fixture_text, policy};
use proptest::prelude::*;

const FIXTURES: [&str; 6] = [
    "pong_initial.dsl",
    "pong_best.dsl",
    "breakout_initial.dsl",
    "breakout_best.dsl",
    "space_invaders_initial.dsl",
    "space_invaders_best.dsl",
];

fn oracle() -> Vec<(String, CodeMetrics)> {
    fixture_text("metrics_oracle.txt")
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let n = |i: usize| f[i].parse::<usize>().unwrap();
            (
                f[0].to_string(),
                CodeMetrics {
                    loc: n(1),
                    cyclomatic: n(2),
                    max_if_nesting: n(3),
                },
            )
        })
        .collect()
}

#[test]
fn fixture_metrics_match_hand_counts() {
    let expected = oracle();
    assert_eq!(expected.len(), 6);
    for (file, want) in expected {
        let p = parse(&fixture_text(&format!("policies/{file}"))).unwrap();
        assert_eq!(code_metrics(&p), want, "{file}");
    }
}

#[test]
fn best_fixtures_are_more_complex() {
    for g in Game::ALL {
        let (a, b) = (code_metrics(&policy(g, "initial")), code_metrics(&policy(g, "best")));
        assert!(b.cyclomatic >= a.cyclomatic && b.loc > a.loc, "{g}");
    }
}

#[test]
fn straight_line_has_complexity_one() {
    let p = parse("entry fn policy(obs) {\n    a = 1\n    b = a + 2\n    return b\n}\n").unwrap();
    assert_eq!(code_metrics(&p), CodeMetrics { loc: 5, cyclomatic: 1, max_if_nesting: 0 });
}

#[test]
fn each_branch_adds_one() {
    let bodies = [
        ("return 0", 1, 0),
        ("if obs.score > 1 {\n return 2\n}\nreturn 0", 2, 1),
        ("if obs.score > 1 {\n return 2\n} elif obs.lives < 2 {\n return 3\n}\nreturn 0", 3, 1),
        ("if obs.score > 1 and obs.lives > 0 {\n if obs.lives > 1 {\n  return 3\n }\n}\nreturn 0", 4, 2),
        ("x = 0\nwhile x < 3 {\n x += 1\n}\nfor k in [1, 2] {\n x += k\n}\nreturn 0", 3, 0),
        ("if obs.score > 1 or obs.lives > 0 {\n return 2\n} else {\n return 3\n}", 3, 1),
    ];
    for (body, cc, nest) in bodies {
        let src = format!("entry fn policy(obs) {{\n{body}\n}}\n");
        let m = code_metrics(&parse(&src).unwrap());
        assert_eq!((m.cyclomatic, m.max_if_nesting), (cc, nest), "{body}");
    }
}

#[test]
fn metrics_table_keeps_row_order() {
    let rows: Vec<(String, Result<CodeMetrics, String>)> = vec![
        ("Initial (It. 0)".into(), Ok(code_metrics(&policy(Game::Pong, "initial")))),
        ("broken".into(), Err("parse error".into())),
        ("Best".into(), Ok(code_metrics(&policy(Game::Pong, "best")))),
    ];
    let table = metrics_table(&rows);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].contains("LOC") && lines[0].contains("Comp.") && lines[0].contains("N. Ifs"));
    assert!(lines[1].starts_with("Initial (It. 0)") && lines[1].contains("17"));
    assert!(lines[2].starts_with("broken") && lines[2].contains("parse error"));
    assert!(lines[3].starts_with("Best") && lines[3].contains("75"));
}

#[test]
fn fixtures_round_trip_and_validate() {
    for file in FIXTURES {
        let p = parse(&fixture_text(&format!("policies/{file}"))).unwrap();
        let text = format_program(&p);
        let again = parse(&text).unwrap();
        assert_eq!(again, p, "{file}");
        assert_eq!(format_program(&again), text, "{file}");
    }
    for g in Game::ALL {
        for stage in ["initial", "best"] {
            validate_interface(&policy(g, stage), &FunctionSpec::for_game(g)).unwrap();
        }
    }
}

#[test]
fn interface_violations_are_named() {
    let src = "entry fn policy(obs) {\n    return select_action(1)\n}\n\
               trainable fn select_action(y) {\n    return 0\n}\n";
    let errs = validate_interface(&parse(src).unwrap(), &FunctionSpec::for_game(Game::Pong)).unwrap_err();
    let text: Vec<String> = errs.iter().map(ToString::to_string).collect();
    assert!(text.iter().any(|t| t.contains("predict_ball_trajectory")), "{text:?}");
    assert!(text.iter().any(|t| t.contains("select_action") && t.contains("arity mismatch")), "{text:?}");
}

#[test]
fn runaway_loops_time_out() {
    let p = parse("entry fn policy(obs) {\n    while true {\n        x = 1\n    }\n}\n").unwrap();
    let err = evaluate(&p, "policy", &[Value::None], 500, 0).unwrap_err();
    assert!(err.is_timeout());
    let (_, steps) = evaluate_counted(&parse("entry fn f(a) {\n    return a\n}\n").unwrap(), "f", &[Value::Number(1.0)], 10, 0).unwrap();
    assert!(steps <= 10);
}

#[test]
fn arithmetic_follows_floor_semantics() {
    let src = "entry fn f(a) {\n    return [-7 // 2, -7 % 3, 7 % -3, 7 / 2]\n}\n";
    let v = evaluate(&parse(src).unwrap(), "f", &[Value::None], 100, 0).unwrap();
    assert_eq!(v.to_string(), "[-4, 2, -2, 3.5]");
}

#[test]
fn randomness_is_seeded() {
    let p = parse("entry fn f(a) {\n    return [random_choice([1, 2, 3, 4, 5, 6]), random_uniform(0, 1)]\n}\n").unwrap();
    let run = |seed| evaluate(&p, "f", &[Value::None], 100, seed).unwrap().to_string();
    assert_eq!(run(5), run(5));
    assert!((0..20).map(run).collect::<std::collections::BTreeSet<_>>().len() > 1);
}

// Random programs over a small vocabulary: parameters `a`, `b` and builtins.

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..2000).prop_map(|n| Expr::Number(f64::from(n) / 4.0)),
        any::<bool>().prop_map(Expr::Bool),
        Just(Expr::None),
        "[a-z ]{0,6}".prop_map(Expr::Text),
        prop::sample::select(vec!["a", "b"]).prop_map(|v| Expr::Var(v.into())),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..3).prop_map(Expr::List),
            (inner.clone(), prop::sample::select(vec!["x", "dy", "score"]))
                .prop_map(|(e, f)| Expr::Field(Box::new(e), f.into())),
            (inner.clone(), inner.clone()).prop_map(|(e, i)| Expr::Index(Box::new(e), Box::new(i))),
            inner.clone().prop_map(|e| Expr::Call("abs".into(), vec![e])),
            prop::collection::vec(inner.clone(), 1..3).prop_map(|v| Expr::Call("max".into(), v)),
            (prop::sample::select(vec![UnaryOp::Neg, UnaryOp::Not]), inner.clone())
                .prop_map(|(op, e)| Expr::Unary(op, Box::new(e))),
            (
                prop::sample::select(vec![
                    BinaryOp::Or,
                    BinaryOp::And,
                    BinaryOp::Eq,
                    BinaryOp::Ne,
                    BinaryOp::Lt,
                    BinaryOp::Ge,
                    BinaryOp::In,
                    BinaryOp::NotIn,
                    BinaryOp::Add,
                    BinaryOp::Sub,
                    BinaryOp::Mul,
                    BinaryOp::Div,
                    BinaryOp::FloorDiv,
                    BinaryOp::Mod,
                ]),
                inner.clone(),
                inner
            )
                .prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
        ]
    })
}

fn stmt(in_loop: bool) -> BoxedStrategy<Stmt> {
    let simple = prop_oneof![
        (prop::sample::select(vec!["a", "b", "c"]), expr())
            .prop_map(|(t, v)| Stmt::new(StmtKind::Assign { target: t.into(), value: v })),
        prop::option::of(expr()).prop_map(|e| Stmt::new(StmtKind::Return(e))),
        expr().prop_map(|e| Stmt::new(StmtKind::Expr(Expr::Call("abs".into(), vec![e])))),
    ];
    let simple = if in_loop {
        prop_oneof![4 => simple, 1 => Just(Stmt::new(StmtKind::Break)), 1 => Just(Stmt::new(StmtKind::Continue))].boxed()
    } else {
        simple.boxed()
    };
    simple
        .prop_recursive(3, 16, 3, move |_| {
            let block = |looped| prop::collection::vec(stmt_leaf(looped), 1..3);
            prop_oneof![
                (prop::collection::vec((expr(), block(in_loop)), 1..3), prop::option::of(block(in_loop)))
                    .prop_map(|(branches, otherwise)| Stmt::new(StmtKind::If { branches, otherwise })),
                (expr(), block(true)).prop_map(|(cond, body)| Stmt::new(StmtKind::While { cond, body })),
                (any::<bool>(), expr(), block(true)).prop_map(|(pair, iter, body)| Stmt::new(StmtKind::For {
                    key: pair.then(|| "k".to_string()),
                    var: "v".into(),
                    iter,
                    body,
                })),
            ]
        })
        .boxed()
}

fn stmt_leaf(in_loop: bool) -> BoxedStrategy<Stmt> {
    let assign = (prop::sample::select(vec!["a", "c"]), expr())
        .prop_map(|(t, v)| Stmt::new(StmtKind::Assign { target: t.into(), value: v }));
    if in_loop {
        prop_oneof![3 => assign, 1 => Just(Stmt::new(StmtKind::Break))].boxed()
    } else {
        assign.boxed()
    }
}

fn program() -> impl Strategy<Value = Program> {
    (prop::collection::vec(stmt(false), 1..5), prop::option::of("[A-Za-z ,.]{1,30}")).prop_map(|(body, doc)| Program {
        functions: vec![
            FunctionDef {
                name: "helper".into(),
                params: vec!["a".into(), "b".into()],
                docstring: doc,
                body,
                trainable: true,
            },
            FunctionDef {
                name: "policy".into(),
                params: vec!["obs".into()],
                docstring: None,
                body: vec![Stmt::new(StmtKind::Return(Some(Expr::Call(
                    "helper".into(),
                    vec![Expr::Var("obs".into()), Expr::Number(1.0)],
                ))))],
                trainable: false,
            },
        ],
        entry: "policy".into(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn format_then_parse_is_identity(p in program()) {
        let text = format_program(&p);
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &p, "{}", text);
        prop_assert_eq!(format_program(&back), text);
    }

    #[test]
    fn wrapping_in_if_adds_one_branch_and_one_level(p in program()) {
        let before = code_metrics(&p);
        let mut q = p.clone();
        let body = std::mem::take(&mut q.functions[0].body);
        q.functions[0].body = vec![Stmt::new(StmtKind::If { branches: vec![(Expr::Var("a".into()), body)], otherwise: None })];
        let after = code_metrics(&q);
        prop_assert_eq!(after.cyclomatic, before.cyclomatic + 1);
        prop_assert_eq!(after.max_if_nesting, before.max_if_nesting + 1);
        prop_assert_eq!(after.loc, before.loc + 2);
    }

    #[test]
    fn evaluation_is_deterministic_and_contained(p in program(), seed in any::<u64>()) {
        let obs = Value::observation(Default::default());
        let a = evaluate(&p, "policy", std::slice::from_ref(&obs), 300, seed);
        let b = evaluate(&p, "policy", std::slice::from_ref(&obs), 300, seed);
        prop_assert_eq!(a.map(|v| v.to_string()), b.map(|v| v.to_string()));
    }
}
