use std::fmt;

use proviq_core::lang::ast::*;
use rand::seq::IndexedRandom;
use rand::Rng;

pub const SKIER: &str = r#"def answer_question(video, possible_answers):
    skier_clip = video.filter_object("skier")
    skier_boxes = video.find("skier")
    jacket_boxes = skier_clip.find("jacket")
    responses = jacket_boxes.video_query("What color is this jacket?", possible_answers)
    return get_max_key(responses)
"#;

pub const PERSON_DOING: &str = r#"def answer_question(video, possible_answers):
    responses = video.video_query("What is the person doing?", possible_answers)
    return get_max_key(responses)
"#;

/// As published: the second line reads a variable that was never assigned.
pub const PARTY_AS_PUBLISHED: &str = r#"def answer_question(video, possible_answers):
    party_segment = video.filter_property("Is a party happening?")
    responses = vid_segment.video_query("What is the party for?", possible_answers)
    return get_max_key(responses)
"#;

pub const PARTY: &str = r#"def answer_question(video, possible_answers):
    party_segment = video.filter_property("Is a party happening?")
    responses = party_segment.video_query("What is the party for?", possible_answers)
    return get_max_key(responses)
"#;

pub const BEAR: &str = r#"def answer_question(video, possible_answers):
    vid_seg = video.trim(0, len(video) // 4) # consider the star
    bear_seg = vid_seg.filter_object("bear")
    image_context = bear_seg.get_caption(bear_seg.num_frames // 2)
    activity_context = bear_seg.video_query("What is this?")
    context = {"caption": image_context, "activity": activity_context}
    answer = bear_seg.choose_option("how was the toy bear moved to the front?", context, possible_answers)
    return answer
"#;

/// Programs that must compile unchanged.
pub const VALID_EXAMPLES: &[(&str, &str)] =
    &[("skier", SKIER), ("person_doing", PERSON_DOING), ("party", PARTY), ("bear", BEAR)];

const NAMES: &[&str] = &["video", "clip", "x", "seg_2", "responses", "_tmp", "boxCount"];
const METHODS: &[&str] = &["filter_property", "filter_object", "find", "video_query", "get_caption", "trim", "download"];
const BUILTINS: &[&str] = &["get_max_key", "len", "print"];
const ATTRS: &[&str] = &["num_frames", "shape"];
const STR_CHARS: &[char] = &['a', 'Z', ' ', '"', '\'', '\\', '\n', '\t', '?', 'é', '0', '#', ':'];

fn e(kind: ExprKind) -> Expr {
    Expr::new(kind, Span::default())
}

fn s(kind: StmtKind) -> Stmt {
    Stmt { kind, span: Span::default() }
}

fn name<R: Rng>(rng: &mut R) -> String {
    NAMES.choose(rng).unwrap().to_string()
}

fn int<R: Rng>(rng: &mut R) -> i64 {
    match rng.random_range(0..8) {
        0 => i64::MIN,
        1 => i64::MAX,
        2 | 3 => rng.random_range(-1000..0),
        _ => rng.random_range(0..100),
    }
}

fn string<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(0..8);
    (0..n).map(|_| *STR_CHARS.choose(rng).unwrap()).collect()
}

fn args<R: Rng>(rng: &mut R, depth: u32) -> Vec<Expr> {
    let n = rng.random_range(0..4);
    (0..n).map(|_| expr(rng, depth - 1)).collect()
}

/// Random expression tree of at most `depth` levels. Syntactically valid,
/// not necessarily type-correct.
pub fn expr<R: Rng>(rng: &mut R, depth: u32) -> Expr {
    if depth == 0 || rng.random_bool(0.25) {
        return e(match rng.random_range(0..4) {
            0 => ExprKind::Literal(Literal::Str(string(rng))),
            1 => ExprKind::Literal(Literal::Int(int(rng))),
            2 => ExprKind::Literal(Literal::Bool(rng.random())),
            _ => ExprKind::Name(name(rng)),
        });
    }
    let sub = |rng: &mut R| Box::new(expr(rng, depth - 1));
    e(match rng.random_range(0..10) {
        0 => ExprKind::MethodCall { receiver: sub(rng), method: METHODS.choose(rng).unwrap().to_string(), args: args(rng, depth) },
        1 => ExprKind::BuiltinCall { name: BUILTINS.choose(rng).unwrap().to_string(), args: args(rng, depth) },
        2 => ExprKind::Attribute { receiver: sub(rng), name: ATTRS.choose(rng).unwrap().to_string() },
        3 => {
            let op = *[ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::FloorDiv].choose(rng).unwrap();
            ExprKind::Arith { op, lhs: sub(rng), rhs: sub(rng) }
        }
        4 => {
            let ops = [CompareOp::Eq, CompareOp::Ne, CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge];
            ExprKind::Compare { op: *ops.choose(rng).unwrap(), lhs: sub(rng), rhs: sub(rng) }
        }
        5 => ExprKind::Logical { op: *[BoolOp::And, BoolOp::Or].choose(rng).unwrap(), lhs: sub(rng), rhs: sub(rng) },
        6 => ExprKind::Not(sub(rng)),
        7 => ExprKind::List(args(rng, depth)),
        8 => {
            let n = rng.random_range(0..3);
            ExprKind::Map((0..n).map(|_| (expr(rng, depth - 1), expr(rng, depth - 1))).collect())
        }
        _ => ExprKind::Index { receiver: sub(rng), key: sub(rng) },
    })
}

fn block<R: Rng>(rng: &mut R, depth: u32) -> Vec<Stmt> {
    let n = rng.random_range(1..=4);
    (0..n)
        .map(|_| match rng.random_range(0..if depth > 0 { 4 } else { 3 }) {
            0 | 1 => s(StmtKind::Assign { target: name(rng), value: expr(rng, 3) }),
            2 => s(StmtKind::Return(expr(rng, 3))),
            _ => {
                let else_body = if rng.random_bool(0.5) { block(rng, depth - 1) } else { vec![] };
                s(StmtKind::If { cond: expr(rng, 2), then_body: block(rng, depth - 1), else_body })
            }
        })
        .collect()
}

/// Random program with `if` nesting up to `depth`.
pub fn program<R: Rng>(rng: &mut R, depth: u32) -> Program {
    let task = *[TaskKind::Qa, TaskKind::Edit].choose(rng).unwrap();
    let (entry, params) = task.entry_signature();
    Program {
        entry_name: entry.to_owned(),
        params: params.iter().map(|p| p.to_string()).collect(),
        body: block(rng, depth),
        span: Span::default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mutation {
    Loop,
    Import,
    UnknownMethod,
    MissingReturn,
    ForbiddenBuiltin,
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mutation::Loop => "loop",
            Mutation::Import => "import",
            Mutation::UnknownMethod => "unknown method",
            Mutation::MissingReturn => "missing return",
            Mutation::ForbiddenBuiltin => "forbidden builtin",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Mutant {
    pub base: &'static str,
    pub mutation: Mutation,
    pub source: String,
}

fn insert_line(src: &str, at: usize, line: &str) -> String {
    let mut lines: Vec<&str> = src.lines().collect();
    lines.insert(at, line);
    lines.join("\n") + "\n"
}

/// Every single-site mutation of the valid examples that the compiler must
/// reject, deterministic and in a fixed order.
pub fn mutants() -> Vec<Mutant> {
    let mut out = Vec::new();
    for &(base, src) in VALID_EXAMPLES {
        let mut push = |mutation, source: String| out.push(Mutant { base, mutation, source });
        let body_lines = src.lines().count() - 1;
        for at in 1..=body_lines {
            push(Mutation::Loop, insert_line(src, at, "    for f in video:\n        x = f"));
            push(Mutation::Loop, insert_line(src, at, "    while True:\n        x = 1"));
        }
        push(Mutation::Import, format!("import os\n{src}"));
        push(Mutation::Import, insert_line(src, 1, "    import subprocess"));
        push(Mutation::Import, insert_line(src, 1, "    from os import path"));
        for m in METHODS.iter().filter(|m| src.contains(&format!(".{m}("))) {
            for bad in ["download", "__class__", "system"] {
                push(Mutation::UnknownMethod, src.replacen(&format!(".{m}("), &format!(".{bad}("), 1));
            }
        }
        let without_return: Vec<&str> = src.lines().filter(|l| !l.trim_start().starts_with("return")).collect();
        push(Mutation::MissingReturn, without_return.join("\n") + "\n");
        push(Mutation::ForbiddenBuiltin, insert_line(src, 1, "    x = eval(\"1\")"));
        push(Mutation::ForbiddenBuiltin, insert_line(src, 1, "    x = open(\"/etc/passwd\")"));
    }
    out
}

