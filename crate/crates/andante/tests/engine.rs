use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use andante::engine::{solve_par, EngineConfig, Injection, ScheduleHook};
use andante_core::reader::{arg_to_string, parse_program, parse_query};
use andante_core::seq::{solve_seq, Limit};

fn setup(src: &str, query: &str) -> (Arc<andante_core::Program>, andante_core::QuerySpec) {
    let mut p = parse_program(src).unwrap();
    let q = parse_query(&mut p, query).unwrap();
    (Arc::new(p), q)
}

fn show(p: &andante_core::Program, answers: &[Vec<andante_core::Term>]) -> Vec<String> {
    let mut v: Vec<String> = answers
        .iter()
        .map(|t| {
            t.iter()
                .map(|x| arg_to_string(&p.syms, x))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    v.sort();
    v
}

fn cfg(agents: usize, seed: u64) -> EngineConfig {
    EngineConfig {
        agents,
        seed,
        pause_unit_us: 10,
        deadline: Some(Duration::from_secs(20)),
        ..EngineConfig::default()
    }
}

/// Parallel answers agree with the sequential ones as multisets.
fn same(src: &str, query: &str, c: &EngineConfig) {
    let (p, q) = setup(src, query);
    let want = show(&p, &solve_seq(p.clone(), &q, Limit::all()).unwrap().answers);
    let out = solve_par(p.clone(), &q, None, c);
    assert!(out.error.is_none(), "{:?}", out.error);
    assert!(!out.timed_out, "timed out");
    assert_eq!(show(&p, &out.answers), want, "{query} agents={}", c.agents);
}

const M3: &str = "m(X,Y,Z) :- b(X,Y) & a(Z).\nb(X,Y) :- a(X) & a(Y).\na(1). a(2).\n";
const M2: &str =
    "m(X,Y) :- a(X) & b(Y).\nb(Y) :- c(Y) & d, e(Y).\na(1). a(2). c(1). c(2). d. e(2).\n";
const MAIN4: &str = "main(X, Y, Z, T) :- a(X, Y) & b(Z, T).
a(X, Y) :- a1(X) & a2(Y).
b(X, Y) :- b1(X) & b2(Y).
a1(X) :- member(X-T, [1-1, 2-7]), pause(T).
a2(X) :- member(X-T, [1-2, 2-10]), pause(T).
b1(X) :- member(X-T, [1-3, 2-13]), pause(T).
b2(X) :- member(X-T, [1-4, 2-25]), pause(T).
member(X, [X|_]).
member(X, [_|T]) :- member(X, T).
";

#[test]
fn m3_one_agent() {
    same(M3, "m(X,Y,Z)", &cfg(1, 0));
}

#[test]
fn m3_many_agents() {
    for a in [2, 4, 8] {
        for s in 0..5 {
            same(M3, "m(X,Y,Z)", &cfg(a, s));
        }
    }
}

#[test]
fn m2_all_configs() {
    for a in [1, 2, 4] {
        for s in 0..5 {
            same(M2, "m(X,Y)", &cfg(a, s));
        }
    }
}

#[test]
fn main4_all_configs() {
    for a in [1, 2, 4] {
        same(MAIN4, "main(X,Y,Z,T)", &cfg(a, 7));
    }
}

#[test]
fn failing_goal_fails_conjunction() {
    let src =
        "p(X,Y) :- a(X) & fail_(Y).\na(1). a(2).\nfail_(_) :- fail.\nq(Z) :- p(_,_).\nq(ok).\n";
    for a in [1, 2, 4] {
        same(src, "p(X,Y)", &cfg(a, 1));
        same(src, "q(Z)", &cfg(a, 1));
    }
}

#[test]
fn nested_and_shared_results() {
    let src = "t(L, S) :- mk(3, L) & s(S).
mk(0, []).
mk(N, [N|T]) :- N > 0, M is N - 1, mk(M, T).
s(S) :- member(S, [x, f(_), g(A, A)]).
member(X, [X|_]).
member(X, [_|T]) :- member(X, T).
";
    for a in [1, 2, 4] {
        same(src, "t(L,S)", &cfg(a, 3));
    }
}

#[test]
fn cut_after_parallel_conjunction() {
    let src = "f(X,Y) :- pa(X,Y), !.\nf(0,0).\npa(X,Y) :- a(X) & a(Y).\na(1). a(2).\ng(X,Y) :- pa(X,Y), X > 1, !.\n";
    for a in [1, 2, 4] {
        same(src, "f(X,Y)", &cfg(a, 2));
        same(src, "g(X,Y)", &cfg(a, 2));
    }
}

#[test]
fn recompute_mode_agrees() {
    for a in [1, 2, 4] {
        let c = EngineConfig {
            recompute: true,
            ..cfg(a, 4)
        };
        same(M3, "m(X,Y,Z)", &c);
        same(M2, "m(X,Y)", &c);
        same(MAIN4, "main(X,Y,Z,T)", &c);
    }
}

#[test]
fn det_opt_off_and_retention_agree() {
    for a in [1, 2, 4] {
        for (d, g) in [(false, false), (true, true), (false, true)] {
            let c = EngineConfig {
                det_opt: d,
                ghost_retention: g,
                ..cfg(a, 5)
            };
            same(M3, "m(X,Y,Z)", &c);
            same(MAIN4, "main(X,Y,Z,T)", &c);
        }
    }
}

#[test]
fn priority_off_and_no_speculation_agree() {
    for a in [1, 2, 4] {
        for (pr, sp) in [(false, true), (true, false), (false, false)] {
            let c = EngineConfig {
                priority: pr,
                speculative: sp,
                ..cfg(a, 6)
            };
            same(M3, "m(X,Y,Z)", &c);
            same(M2, "m(X,Y)", &c);
        }
    }
}

#[test]
fn suspension_injection_agrees() {
    for s in 0..10 {
        let c = EngineConfig {
            inject: Some(Injection {
                suspend_per_mille: 150,
                jitter_us: 200,
            }),
            ..cfg(2 + (s as usize % 3), s)
        };
        same(M3, "m(X,Y,Z)", &c);
        same(M2, "m(X,Y)", &c);
        same(MAIN4, "main(X,Y,Z,T)", &c);
    }
}

#[test]
fn dependent_goals_are_reported() {
    let (p, q) = setup("p(X) :- a(X) & a(X).\na(1).\n", "p(X)");
    let c = EngineConfig {
        debug_independence: true,
        ..cfg(1, 0)
    };
    let out = solve_par(p, &q, None, &c);
    assert!(matches!(
        out.error,
        Some(andante_core::EngineError::Independence(_))
    ));
}

/// Forces the work distribution that leaves a needed goal trapped under a
/// speculative one on the first agent.
struct TrapHook {
    c_started: AtomicBool,
}

impl ScheduleHook for TrapHook {
    fn allow_start(&self, agent: u32, pred: &str) -> bool {
        match agent {
            0 => pred == "c/1" || (pred == "a/1" && self.c_started.load(Ordering::SeqCst)),
            _ => pred == "b/1" || pred == "d/0",
        }
    }
    fn started(&self, agent: u32, pred: &str) {
        if agent == 0 && pred == "c/1" {
            self.c_started.store(true, Ordering::SeqCst);
        }
    }
}

#[test]
fn trapped_goal_is_relocated() {
    let (p, q) = setup(M2, "m(X,Y)");
    let want = show(&p, &solve_seq(p.clone(), &q, Limit::all()).unwrap().answers);
    let c = EngineConfig {
        hook: Some(Arc::new(TrapHook {
            c_started: AtomicBool::new(false),
        })),
        speculative: false,
        ..cfg(2, 0)
    };
    let out = solve_par(p.clone(), &q, None, &c);
    assert!(out.error.is_none(), "{:?}", out.error);
    assert_eq!(show(&p, &out.answers), want);
    assert!(out.stats.relocations >= 1, "{:?}", out.stats);
}

mod random_conjunctions {
    use super::*;
    use proptest::prelude::*;

    /// `q` over a conjunction of goals with the given answer counts; each
    /// goal may itself split into a nested conjunction.
    fn program(counts: &[(usize, bool)]) -> (String, String) {
        let vars: Vec<String> = (0..counts.len()).map(|i| format!("X{i}")).collect();
        let goals: Vec<String> = (0..counts.len()).map(|i| format!("g{i}(X{i})")).collect();
        let mut src = format!("q({}) :- {}.\n", vars.join(", "), goals.join(" & "));
        for (i, &(n, nested)) in counts.iter().enumerate() {
            if nested {
                src.push_str(&format!("g{i}(A-B) :- v{i}(A) & v{i}(B).\n"));
            } else {
                src.push_str(&format!("g{i}(A) :- v{i}(A).\n"));
            }
            src.push_str(&format!("v{i}(_) :- fail.\n"));
            for k in 0..n {
                src.push_str(&format!("v{i}({k}).\n"));
            }
        }
        (src, format!("q({})", vars.join(", ")))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn parallel_matches_sequential(
            counts in prop::collection::vec((0usize..4, any::<bool>()), 2..4),
            agents in 1usize..4,
            seed in any::<u64>(),
            recompute in any::<bool>(),
        ) {
            let (src, query) = program(&counts);
            let (p, q) = setup(&src, &query);
            let want = show(&p, &solve_seq(p.clone(), &q, Limit::all()).unwrap().answers);
            let c = EngineConfig {
                recompute,
                inject: Some(Injection { suspend_per_mille: 200, jitter_us: 20 }),
                ..cfg(agents, seed)
            };
            let out = solve_par(p.clone(), &q, None, &c);
            prop_assert!(out.error.is_none(), "{:?}", out.error);
            prop_assert_eq!(show(&p, &out.answers), want);
        }
    }
}
