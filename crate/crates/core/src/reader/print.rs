//! Canonical, re-readable printing of terms and clauses.

use alloc::format;
use alloc::string::String;

use super::parser::{infix_op, prefix_op, Assoc};
use super::symbols::{self, Symbols};
use crate::term::{Term, DETACHED_STORE, TEMPLATE_STORE};

fn atom_text(name: &str) -> String {
    let plain = match name {
        "[]" | "!" | ";" => true,
        "" | "." => false,
        _ => {
            let mut cs = name.chars();
            let c0 = cs.next().unwrap();
            (c0.is_lowercase() && name.chars().all(|c| c.is_alphanumeric() || c == '_'))
                || name.chars().all(|c| "+-*/\\^<>=~:.?@#&$".contains(c))
        }
    };
    if plain {
        String::from(name)
    } else {
        let mut s = String::from("'");
        for c in name.chars() {
            match c {
                '\'' => s.push_str("\\'"),
                '\\' => s.push_str("\\\\"),
                '\n' => s.push_str("\\n"),
                '\t' => s.push_str("\\t"),
                _ => s.push(c),
            }
        }
        s.push('\'');
        s
    }
}

struct Printer<'a> {
    syms: &'a Symbols,
    names: Option<&'a [String]>,
    out: String,
}

impl Printer<'_> {
    fn var(&mut self, store: u32, index: u32) {
        let s = match store {
            TEMPLATE_STORE => match self.names.and_then(|n| n.get(index as usize)) {
                Some(n) => n.clone(),
                None => format!("_{index}"),
            },
            DETACHED_STORE => format!("_G{index}"),
            _ => format!("_{store}_{index}"),
        };
        self.out.push_str(&s);
    }

    fn is_op_atom(name: &str) -> bool {
        infix_op(name).is_some() || prefix_op(name).is_some()
    }

    fn write(&mut self, t: &Term, max: u32) {
        match t {
            Term::Var(v) => self.var(v.store, v.index),
            Term::Int(n) => self.out.push_str(&format!("{n}")),
            Term::Atom(a) => {
                let name = self.syms.name(*a);
                let text = atom_text(name);
                if Self::is_op_atom(name) && max < 1200 {
                    let p = infix_op(name)
                        .map(|(p, _)| p)
                        .or_else(|| prefix_op(name))
                        .unwrap_or(0);
                    if p > max {
                        self.out.push('(');
                        self.out.push_str(&text);
                        self.out.push(')');
                        return;
                    }
                }
                self.out.push_str(&text);
            }
            Term::Struct(s) => {
                let name = self.syms.name(s.functor);
                if s.functor == symbols::DOT && s.args.len() == 2 {
                    self.list(t);
                    return;
                }
                if s.args.len() == 2 {
                    if let Some((p, assoc)) = infix_op(name) {
                        let (lmax, rmax) = match assoc {
                            Assoc::Xfx => (p - 1, p - 1),
                            Assoc::Xfy => (p - 1, p),
                            Assoc::Yfx => (p, p - 1),
                        };
                        let paren = p > max;
                        if paren {
                            self.out.push('(');
                        }
                        self.write(&s.args[0], lmax);
                        if s.functor == symbols::COMMA {
                            self.out.push_str(", ");
                        } else {
                            self.out.push(' ');
                            self.out.push_str(&atom_text(name));
                            self.out.push(' ');
                        }
                        self.write(&s.args[1], rmax);
                        if paren {
                            self.out.push(')');
                        }
                        return;
                    }
                }
                if s.args.len() == 1 {
                    if let Some(p) = prefix_op(name) {
                        let awkward = match &s.args[0] {
                            Term::Int(_) => true,
                            Term::Atom(a) => Self::is_op_atom(self.syms.name(*a)),
                            Term::Struct(inner) => {
                                inner.args.len() == 1
                                    && prefix_op(self.syms.name(inner.functor)).is_some()
                            }
                            _ => false,
                        };
                        if !awkward {
                            let paren = p > max;
                            if paren {
                                self.out.push('(');
                            }
                            self.out.push_str(&atom_text(name));
                            self.write(&s.args[0], p);
                            if paren {
                                self.out.push(')');
                            }
                            return;
                        }
                    }
                }
                self.out.push_str(&atom_text(name));
                self.out.push('(');
                for (i, a) in s.args.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    self.write(a, 999);
                }
                self.out.push(')');
            }
        }
    }

    fn list(&mut self, t: &Term) {
        self.out.push('[');
        let mut cur = t;
        let mut first = true;
        loop {
            match cur {
                Term::Struct(s) if s.functor == symbols::DOT && s.args.len() == 2 => {
                    if !first {
                        self.out.push_str(", ");
                    }
                    first = false;
                    self.write(&s.args[0], 999);
                    cur = &s.args[1];
                }
                Term::Atom(a) if *a == symbols::NIL => break,
                other => {
                    self.out.push('|');
                    self.write(other, 999);
                    break;
                }
            }
        }
        self.out.push(']');
    }
}

/// Prints `t`. Template variables take their names from `names` when given.
pub fn term_to_string(syms: &Symbols, t: &Term, names: Option<&[String]>) -> String {
    let mut p = Printer {
        syms,
        names,
        out: String::new(),
    };
    p.write(t, 1200);
    p.out
}

/// Prints `t` as an argument (priority 999), for answer bindings.
pub fn arg_to_string(syms: &Symbols, t: &Term) -> String {
    let mut p = Printer {
        syms,
        names: None,
        out: String::new(),
    };
    p.write(t, 699);
    p.out
}
