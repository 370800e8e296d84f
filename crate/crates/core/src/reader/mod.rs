//! Reader for the supported Prolog subset and the compiled clause database.

mod lexer;
mod parser;
pub mod print;
pub mod symbols;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::term::{Sym, Term, TEMPLATE_STORE};
pub use parser::{infix_op, prefix_op};
pub use print::{arg_to_string, term_to_string};
pub use symbols::Symbols;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReadError {
    Syntax { line: u32, col: u32, msg: String },
    Load { line: u32, msg: String },
}

impl ReadError {
    pub(crate) fn syntax(line: u32, col: u32, msg: &str) -> Self {
        ReadError::Syntax {
            line,
            col,
            msg: String::from(msg),
        }
    }
}

impl fmt::Display for ReadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReadError::Syntax { line, col, msg } => {
                write!(f, "syntax error at {line}:{col}: {msg}")
            }
            ReadError::Load { line, msg } => write!(f, "load error at line {line}: {msg}"),
        }
    }
}

pub type PredId = u32;
pub type NodeId = u32;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Builtin {
    Unify,
    Eq,
    Neq,
    Lt,
    Gt,
    Le,
    Ge,
    Is,
    Pause,
    Exists,
    Length,
    Between,
}

impl Builtin {
    pub fn lookup(name: &str, arity: usize) -> Option<Builtin> {
        Some(match (name, arity) {
            ("=", 2) => Builtin::Unify,
            ("==", 2) => Builtin::Eq,
            ("\\==", 2) => Builtin::Neq,
            ("<", 2) => Builtin::Lt,
            (">", 2) => Builtin::Gt,
            ("=<", 2) => Builtin::Le,
            (">=", 2) => Builtin::Ge,
            ("is", 2) => Builtin::Is,
            ("pause", 1) => Builtin::Pause,
            ("exists", 1) => Builtin::Exists,
            ("length", 2) => Builtin::Length,
            ("between", 3) => Builtin::Between,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Unify => "=",
            Builtin::Eq => "==",
            Builtin::Neq => "\\==",
            Builtin::Lt => "<",
            Builtin::Gt => ">",
            Builtin::Le => "=<",
            Builtin::Ge => ">=",
            Builtin::Is => "is",
            Builtin::Pause => "pause",
            Builtin::Exists => "exists",
            Builtin::Length => "length",
            Builtin::Between => "between",
        }
    }
}

fn is_control(name: &str, arity: usize) -> bool {
    matches!(
        (name, arity),
        (",", 2) | ("&", 2) | (":-", 2) | ("!", 0) | ("true", 0) | ("fail", 0) | ("false", 0)
    )
}

#[derive(Clone, Debug)]
pub struct ParGoal {
    pub node: NodeId,
    /// Clause variables occurring in the goal, first occurrence first.
    pub vars: Vec<u32>,
}

#[derive(Clone, Debug)]
pub enum Node {
    True,
    Fail,
    Cut,
    Conj(Vec<NodeId>),
    ParConj(Vec<ParGoal>),
    Call { goal: Term, pred: Option<PredId> },
    Builtin(Builtin, Box<[Term]>),
}

/// First-argument key used to skip clauses that cannot match.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ArgKey {
    Atom(Sym),
    Int(i64),
    Functor(Sym, u32),
}

impl ArgKey {
    pub fn of(t: &Term) -> Option<ArgKey> {
        match t {
            Term::Atom(a) => Some(ArgKey::Atom(*a)),
            Term::Int(i) => Some(ArgKey::Int(*i)),
            Term::Struct(s) => Some(ArgKey::Functor(s.functor, s.args.len() as u32)),
            Term::Var(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Clause {
    pub head: Term,
    /// `None` for facts.
    pub body: Option<NodeId>,
    pub nvars: u32,
    pub key: Option<ArgKey>,
    pub has_par: bool,
    pub var_names: Vec<String>,
    pub line: u32,
}

#[derive(Clone, Debug)]
pub struct Predicate {
    pub name: Sym,
    pub arity: u32,
    pub clauses: Vec<Clause>,
}

#[derive(Clone, Debug, Default)]
pub struct Program {
    pub syms: Symbols,
    pub preds: Vec<Predicate>,
    pred_index: BTreeMap<(Sym, u32), PredId>,
    nodes: Vec<Node>,
}

#[derive(Clone, Debug)]
pub struct QuerySpec {
    pub root: NodeId,
    pub nvars: u32,
    /// Named query variables in first-occurrence order: (name, index).
    pub vars: Vec<(String, u32)>,
    pub var_names: Vec<String>,
    /// The query text as read, for printing.
    pub goal: Term,
}

struct Compiler<'a> {
    prog: &'a mut Program,
    line: u32,
    has_par: bool,
    has_cut: bool,
}

fn collect_vars(t: &Term, out: &mut Vec<u32>) {
    match t {
        Term::Var(v) if v.store == TEMPLATE_STORE => {
            if !out.contains(&v.index) {
                out.push(v.index);
            }
        }
        Term::Struct(s) => s.args.iter().for_each(|a| collect_vars(a, out)),
        _ => {}
    }
}

impl Compiler<'_> {
    fn err(&self, msg: String) -> ReadError {
        ReadError::Load {
            line: self.line,
            msg,
        }
    }

    fn push(&mut self, n: Node) -> NodeId {
        self.prog.nodes.push(n);
        self.prog.nodes.len() as NodeId - 1
    }

    fn flatten<'t>(t: &'t Term, f: Sym, out: &mut Vec<&'t Term>) {
        match t {
            Term::Struct(s) if s.functor == f && s.args.len() == 2 => {
                Self::flatten(&s.args[0], f, out);
                Self::flatten(&s.args[1], f, out);
            }
            _ => out.push(t),
        }
    }

    fn goal(&mut self, t: &Term) -> Result<NodeId, ReadError> {
        match t {
            Term::Var(_) => Err(self.err(String::from("variable used as a goal"))),
            Term::Int(_) => Err(self.err(String::from("number used as a goal"))),
            Term::Atom(a) => Ok(match *a {
                symbols::TRUE => self.push(Node::True),
                symbols::FAIL | symbols::FALSE => self.push(Node::Fail),
                symbols::CUT => {
                    self.has_cut = true;
                    self.push(Node::Cut)
                }
                _ => self.call(t)?,
            }),
            Term::Struct(s) => {
                if s.functor == symbols::COMMA && s.args.len() == 2 {
                    let mut parts = Vec::new();
                    Self::flatten(t, symbols::COMMA, &mut parts);
                    let ids = parts
                        .into_iter()
                        .map(|p| self.goal(p))
                        .collect::<Result<Vec<_>, _>>()?;
                    return Ok(self.push(Node::Conj(ids)));
                }
                if s.functor == symbols::AMP && s.args.len() == 2 {
                    self.has_par = true;
                    let mut parts = Vec::new();
                    Self::flatten(t, symbols::AMP, &mut parts);
                    let mut goals = Vec::new();
                    for p in parts {
                        let node = self.goal(p)?;
                        let mut vars = Vec::new();
                        collect_vars(p, &mut vars);
                        goals.push(ParGoal { node, vars });
                    }
                    return Ok(self.push(Node::ParConj(goals)));
                }
                let name = self.prog.syms.name(s.functor);
                if let Some(b) = Builtin::lookup(name, s.args.len()) {
                    return Ok(self.push(Node::Builtin(b, s.args.clone())));
                }
                self.call(t)
            }
        }
    }

    fn call(&mut self, t: &Term) -> Result<NodeId, ReadError> {
        let (f, n) = t.key().unwrap();
        let pred = self.prog.pred_index.get(&(f, n)).copied();
        Ok(self.push(Node::Call {
            goal: t.clone(),
            pred,
        }))
    }
}

impl Program {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn pred(&self, id: PredId) -> &Predicate {
        &self.preds[id as usize]
    }

    pub fn lookup_pred(&self, name: &str, arity: u32) -> Option<PredId> {
        let s = self.syms.lookup(name)?;
        self.pred_index.get(&(s, arity)).copied()
    }

    pub fn pred_id(&self, name: Sym, arity: u32) -> Option<PredId> {
        self.pred_index.get(&(name, arity)).copied()
    }

    fn add_clause(&mut self, rt: parser::ReadTerm) -> Result<(), ReadError> {
        let line = rt.line;
        let load = |msg: String| ReadError::Load { line, msg };
        let (head, body) = match &rt.term {
            Term::Struct(s) if s.functor == symbols::NECK && s.args.len() == 2 => {
                (s.args[0].clone(), Some(s.args[1].clone()))
            }
            _ => (rt.term.clone(), None),
        };
        let (f, n) = match &head {
            Term::Atom(_) | Term::Struct(_) => head.key().unwrap(),
            _ => {
                return Err(load(String::from(
                    "clause head must be an atom or compound",
                )))
            }
        };
        let name = self.syms.name(f);
        if is_control(name, n as usize) || Builtin::lookup(name, n as usize).is_some() {
            return Err(load(format!("cannot define built-in {name}/{n}")));
        }
        let key = match &head {
            Term::Struct(s) => ArgKey::of(&s.args[0]),
            _ => None,
        };
        let pid = match self.pred_index.get(&(f, n)) {
            Some(p) => *p,
            None => {
                self.preds.push(Predicate {
                    name: f,
                    arity: n,
                    clauses: Vec::new(),
                });
                let p = self.preds.len() as PredId - 1;
                self.pred_index.insert((f, n), p);
                p
            }
        };
        let mut c = Compiler {
            prog: self,
            line,
            has_par: false,
            has_cut: false,
        };
        let body = match body {
            Some(b) => Some(c.goal(&b)?),
            None => None,
        };
        let (has_par, has_cut) = (c.has_par, c.has_cut);
        if has_par && has_cut {
            return Err(load(String::from(
                "cut is not allowed in a clause containing a parallel conjunction",
            )));
        }
        self.preds[pid as usize].clauses.push(Clause {
            head,
            body,
            nvars: rt.var_names.len() as u32,
            key,
            has_par,
            var_names: rt.var_names,
            line,
        });
        Ok(())
    }

    fn resolve_calls(&mut self) {
        for i in 0..self.nodes.len() {
            if let Node::Call { goal, pred } = &self.nodes[i] {
                if pred.is_none() {
                    let k = goal.key().unwrap();
                    let p = self.pred_index.get(&k).copied();
                    if let Node::Call { pred, .. } = &mut self.nodes[i] {
                        *pred = p;
                    }
                }
            }
        }
    }

    /// Rebuilds the goal term a body node was compiled from.
    pub fn node_term(&self, id: NodeId) -> Term {
        let atom = |s| Term::Atom(s);
        let nest = |f: Sym, mut ts: Vec<Term>| {
            let mut t = ts.pop().unwrap();
            while let Some(l) = ts.pop() {
                t = Term::detached_struct(f, alloc::vec![l, t]);
            }
            t
        };
        match self.node(id) {
            Node::True => atom(symbols::TRUE),
            Node::Fail => atom(symbols::FAIL),
            Node::Cut => atom(symbols::CUT),
            Node::Conj(ids) => nest(
                symbols::COMMA,
                ids.iter().map(|i| self.node_term(*i)).collect(),
            ),
            Node::ParConj(gs) => nest(
                symbols::AMP,
                gs.iter().map(|g| self.node_term(g.node)).collect(),
            ),
            Node::Call { goal, .. } => goal.clone(),
            Node::Builtin(b, args) => {
                let f = self.syms.lookup(b.name()).unwrap();
                Term::detached_struct(f, args.to_vec())
            }
        }
    }

    pub fn clause_to_string(&self, c: &Clause) -> String {
        let t = match c.body {
            None => c.head.clone(),
            Some(b) => Term::detached_struct(
                symbols::NECK,
                alloc::vec![c.head.clone(), self.node_term(b)],
            ),
        };
        let mut s = print::term_to_string(&self.syms, &t, None);
        s.push('.');
        s
    }

    /// The whole program in canonical syntax, one clause per line.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for p in &self.preds {
            for c in &p.clauses {
                out.push_str(&self.clause_to_string(c));
                out.push('\n');
            }
        }
        out
    }

    pub fn term_to_string(&self, t: &Term) -> String {
        print::term_to_string(&self.syms, t, None)
    }

    /// True if `name/1` facts include `t` (ground).
    pub fn has_fact1(&self, name: Sym, t: &Term) -> bool {
        let Some(p) = self.pred_id(name, 1) else {
            return false;
        };
        self.pred(p).clauses.iter().any(|c| {
            c.body.is_none()
                && match &c.head {
                    Term::Struct(s) => s.args[0] == *t,
                    _ => false,
                }
        })
    }
}

pub fn parse_program(text: &str) -> Result<Program, ReadError> {
    let mut prog = Program {
        syms: Symbols::new(),
        ..Program::default()
    };
    let terms = parser::read_terms(text, &mut prog.syms)?;
    for rt in terms {
        prog.add_clause(rt)?;
    }
    prog.resolve_calls();
    Ok(prog)
}

pub fn parse_query(prog: &mut Program, text: &str) -> Result<QuerySpec, ReadError> {
    let text = text.trim();
    let owned;
    let text = if text.ends_with('.') {
        text
    } else {
        owned = format!("{text} .");
        owned.as_str()
    };
    let mut terms = parser::read_terms(text, &mut prog.syms)?;
    if terms.len() != 1 {
        return Err(ReadError::syntax(1, 1, "expected exactly one query"));
    }
    let rt = terms.pop().unwrap();
    let mut c = Compiler {
        prog,
        line: rt.line,
        has_par: false,
        has_cut: false,
    };
    let root = c.goal(&rt.term)?;
    let vars = rt
        .var_names
        .iter()
        .enumerate()
        .filter(|(_, n)| !n.starts_with('_'))
        .map(|(i, n)| (n.clone(), i as u32))
        .collect();
    Ok(QuerySpec {
        root,
        nvars: rt.var_names.len() as u32,
        vars,
        var_names: rt.var_names,
        goal: rt.term,
    })
}
