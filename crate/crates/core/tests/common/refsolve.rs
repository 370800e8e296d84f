//! Naive reference solver used to check the sequential engine.
//!
//! Substitution-based, recursive, copies the substitution at every clause
//! try. Shares nothing with the engine except the parsed program.

use std::collections::HashMap;
use std::rc::Rc;

use andante_core::reader::{symbols, Program, QuerySpec};
use andante_core::term::{Term, TEMPLATE_STORE};

#[derive(Clone, Debug, PartialEq)]
pub enum RT {
    Var(usize),
    Atom(String),
    Int(i64),
    S(String, Rc<Vec<RT>>),
}

type Subst = HashMap<usize, RT>;

fn walk(t: &RT, s: &Subst) -> RT {
    let mut t = t.clone();
    while let RT::Var(v) = t {
        match s.get(&v) {
            Some(b) => t = b.clone(),
            None => return RT::Var(v),
        }
    }
    t
}

fn unify(a: &RT, b: &RT, s: &mut Subst) -> bool {
    let a = walk(a, s);
    let b = walk(b, s);
    match (&a, &b) {
        (RT::Var(x), RT::Var(y)) if x == y => true,
        (RT::Var(x), _) => {
            s.insert(*x, b.clone());
            true
        }
        (_, RT::Var(y)) => {
            s.insert(*y, a.clone());
            true
        }
        (RT::Atom(x), RT::Atom(y)) => x == y,
        (RT::Int(x), RT::Int(y)) => x == y,
        (RT::S(f, xs), RT::S(g, ys)) => {
            f == g && xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|(x, y)| unify(x, y, s))
        }
        _ => false,
    }
}

fn full(t: &RT, s: &Subst) -> RT {
    match walk(t, s) {
        RT::S(f, xs) => RT::S(f, Rc::new(xs.iter().map(|x| full(x, s)).collect())),
        o => o,
    }
}

fn eval(t: &RT, s: &Subst) -> i64 {
    match walk(t, s) {
        RT::Int(i) => i,
        RT::S(f, xs) => {
            let a: Vec<i64> = xs.iter().map(|x| eval(x, s)).collect();
            match (f.as_str(), a.as_slice()) {
                ("-", [x]) => -x,
                ("+", [x, y]) => x + y,
                ("-", [x, y]) => x - y,
                ("*", [x, y]) => x * y,
                ("//", [x, y]) => x / y,
                ("mod", [x, y]) => x - y * (*x as f64 / *y as f64).floor() as i64,
                _ => panic!("bad arithmetic"),
            }
        }
        other => panic!("not evaluable: {other:?}"),
    }
}

struct Clause {
    head: RT,
    body: RT,
    nvars: usize,
}

pub struct RefSolver {
    preds: HashMap<(String, usize), Vec<Clause>>,
    files: Vec<RT>,
    next_var: std::cell::Cell<usize>,
    pub budget: std::cell::Cell<u64>,
}

fn conv(p: &Program, t: &Term, off: usize) -> RT {
    match t {
        Term::Var(v) => {
            assert_eq!(v.store, TEMPLATE_STORE);
            RT::Var(off + v.index as usize)
        }
        Term::Atom(a) => RT::Atom(p.syms.name(*a).to_string()),
        Term::Int(i) => RT::Int(*i),
        Term::Struct(s) => RT::S(
            p.syms.name(s.functor).to_string(),
            Rc::new(s.args.iter().map(|a| conv(p, a, off)).collect()),
        ),
    }
}

fn rename(t: &RT, off: usize) -> RT {
    match t {
        RT::Var(v) => RT::Var(v + off),
        RT::S(f, xs) => RT::S(
            f.clone(),
            Rc::new(xs.iter().map(|x| rename(x, off)).collect()),
        ),
        o => o.clone(),
    }
}

enum Ctl {
    Go,
    Stop,
    Cut(usize),
}

impl RefSolver {
    pub fn new(p: &Program) -> Self {
        let mut preds: HashMap<(String, usize), Vec<Clause>> = HashMap::new();
        let mut files = Vec::new();
        for pr in &p.preds {
            let key = (p.syms.name(pr.name).to_string(), pr.arity as usize);
            for c in &pr.clauses {
                let head = conv(p, &c.head, 0);
                let body = match c.body {
                    Some(b) => conv(p, &p.node_term(b), 0),
                    None => RT::Atom("true".into()),
                };
                if key.0 == "file" && key.1 == 1 && c.body.is_none() {
                    if let RT::S(_, a) = &head {
                        files.push(a[0].clone());
                    }
                }
                preds.entry(key.clone()).or_default().push(Clause {
                    head,
                    body,
                    nvars: c.nvars as usize,
                });
            }
        }
        let _ = symbols::NIL;
        RefSolver {
            preds,
            files,
            next_var: std::cell::Cell::new(1 << 20),
            budget: std::cell::Cell::new(u64::MAX),
        }
    }

    /// All answers of `q`, each as a tuple of fully substituted terms.
    pub fn solve(&self, p: &Program, q: &QuerySpec, limit: usize) -> Vec<Vec<RT>> {
        let goal = conv(p, &p.node_term(q.root), 0);
        let mut out = Vec::new();
        let s = Subst::new();
        let goals = vec![(goal, 0usize)];
        self.run(&goals, s, 0, &mut |s| {
            out.push(
                q.vars
                    .iter()
                    .map(|(_, i)| full(&RT::Var(*i as usize), s))
                    .collect(),
            );
            if out.len() >= limit {
                Ctl::Stop
            } else {
                Ctl::Go
            }
        });
        out
    }

    fn fresh(&self, n: usize) -> usize {
        let b = self.next_var.get();
        self.next_var.set(b + n);
        b
    }

    fn run(
        &self,
        goals: &[(RT, usize)],
        mut s: Subst,
        depth: usize,
        k: &mut dyn FnMut(&Subst) -> Ctl,
    ) -> Ctl {
        let b = self.budget.get();
        assert!(b > 0, "reference solver budget exhausted");
        self.budget.set(b - 1);
        let Some(((g, cut), rest)) = goals.split_first() else {
            return k(&s);
        };
        let g = walk(g, &s);
        let (name, args): (String, Vec<RT>) = match &g {
            RT::Atom(a) => (a.clone(), vec![]),
            RT::S(f, xs) => (f.clone(), xs.to_vec()),
            other => panic!("bad goal {other:?}"),
        };
        let next = |extra: Vec<(RT, usize)>| {
            let mut v = extra;
            v.extend_from_slice(rest);
            v
        };
        match (name.as_str(), args.len()) {
            ("," | "&", 2) => self.run(
                &next(vec![(args[0].clone(), *cut), (args[1].clone(), *cut)]),
                s,
                depth,
                k,
            ),
            ("true", 0) => self.run(rest, s, depth, k),
            ("fail" | "false", 0) => Ctl::Go,
            ("!", 0) => match self.run(rest, s, depth, k) {
                Ctl::Go => Ctl::Cut(*cut),
                other => other,
            },
            ("=", 2) => {
                if unify(&args[0], &args[1], &mut s) {
                    self.run(rest, s, depth, k)
                } else {
                    Ctl::Go
                }
            }
            ("==", 2) | ("\\==", 2) => {
                let same = full(&args[0], &s) == full(&args[1], &s);
                if same == (name == "==") {
                    self.run(rest, s, depth, k)
                } else {
                    Ctl::Go
                }
            }
            ("<" | ">" | "=<" | ">=", 2) => {
                let (x, y) = (eval(&args[0], &s), eval(&args[1], &s));
                let ok = match name.as_str() {
                    "<" => x < y,
                    ">" => x > y,
                    "=<" => x <= y,
                    _ => x >= y,
                };
                if ok {
                    self.run(rest, s, depth, k)
                } else {
                    Ctl::Go
                }
            }
            ("is", 2) => {
                let v = eval(&args[1], &s);
                if unify(&args[0], &RT::Int(v), &mut s) {
                    self.run(rest, s, depth, k)
                } else {
                    Ctl::Go
                }
            }
            ("pause", 1) => self.run(rest, s, depth, k),
            ("exists", 1) => {
                let f = full(&args[0], &s);
                if self.files.contains(&f) {
                    self.run(rest, s, depth, k)
                } else {
                    Ctl::Go
                }
            }
            ("length", 2) => {
                let mut n = 0;
                let mut cur = walk(&args[0], &s);
                loop {
                    match cur {
                        RT::S(ref f, ref xs) if f == "." && xs.len() == 2 => {
                            n += 1;
                            cur = walk(&xs[1], &s);
                        }
                        RT::Atom(ref a) if a == "[]" => {
                            return if unify(&args[1], &RT::Int(n), &mut s) {
                                self.run(rest, s, depth, k)
                            } else {
                                Ctl::Go
                            };
                        }
                        RT::Var(_) => {
                            let RT::Int(want) = walk(&args[1], &s) else {
                                panic!("length mode")
                            };
                            if want < n {
                                return Ctl::Go;
                            }
                            let mut l = RT::Atom("[]".into());
                            for _ in n..want {
                                l = RT::S(".".into(), Rc::new(vec![RT::Var(self.fresh(1)), l]));
                            }
                            return if unify(&cur, &l, &mut s) {
                                self.run(rest, s, depth, k)
                            } else {
                                Ctl::Go
                            };
                        }
                        _ => return Ctl::Go,
                    }
                }
            }
            ("between", 3) => {
                let (lo, hi) = (eval(&args[0], &s), eval(&args[1], &s));
                for v in lo..=hi {
                    let mut s2 = s.clone();
                    if unify(&args[2], &RT::Int(v), &mut s2) {
                        match self.run(rest, s2, depth, k) {
                            Ctl::Go => {}
                            other => return other,
                        }
                    }
                }
                Ctl::Go
            }
            _ => {
                let clauses = self
                    .preds
                    .get(&(name.clone(), args.len()))
                    .unwrap_or_else(|| panic!("unknown {name}/{}", args.len()));
                let me = depth + 1;
                for c in clauses {
                    let off = self.fresh(c.nvars);
                    let mut s2 = s.clone();
                    if !unify(&rename(&c.head, off), &g, &mut s2) {
                        continue;
                    }
                    let body = rename(&c.body, off);
                    match self.run(&next(vec![(body, me)]), s2, me, k) {
                        Ctl::Go => {}
                        Ctl::Cut(d) if d == me => return Ctl::Go,
                        other => return other,
                    }
                }
                Ctl::Go
            }
        }
    }
}

/// Renumbers variables 0.. by first occurrence across the tuple.
pub fn normalize(t: &[RT]) -> Vec<RT> {
    fn go(t: &RT, seen: &mut Vec<usize>) -> RT {
        match t {
            RT::Var(v) => RT::Var(match seen.iter().position(|w| w == v) {
                Some(i) => i,
                None => {
                    seen.push(*v);
                    seen.len() - 1
                }
            }),
            RT::S(f, xs) => RT::S(f.clone(), Rc::new(xs.iter().map(|x| go(x, seen)).collect())),
            o => o.clone(),
        }
    }
    let mut seen = Vec::new();
    t.iter().map(|x| go(x, &mut seen)).collect()
}

/// Converts an engine answer tuple (detached terms) for comparison.
pub fn from_engine(p: &Program, t: &[Term]) -> Vec<RT> {
    fn go(p: &Program, t: &Term) -> RT {
        match t {
            Term::Var(v) => RT::Var(v.index as usize),
            Term::Atom(a) => RT::Atom(p.syms.name(*a).to_string()),
            Term::Int(i) => RT::Int(*i),
            Term::Struct(s) => RT::S(
                p.syms.name(s.functor).to_string(),
                Rc::new(s.args.iter().map(|a| go(p, a)).collect()),
            ),
        }
    }
    normalize(&t.iter().map(|x| go(p, x)).collect::<Vec<_>>())
}
