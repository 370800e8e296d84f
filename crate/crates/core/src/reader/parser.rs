//! Operator-precedence parser producing clause-template terms.

use alloc::string::String;
use alloc::vec::Vec;

use super::lexer::{tokenize, Tok, Token};
use super::symbols::{self, Symbols};
use super::ReadError;
use crate::term::Term;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Assoc {
    Xfx,
    Xfy,
    Yfx,
}

pub fn infix_op(name: &str) -> Option<(u32, Assoc)> {
    Some(match name {
        ":-" => (1200, Assoc::Xfx),
        "," => (1000, Assoc::Xfy),
        "&" => (950, Assoc::Xfy),
        "=" | "==" | "\\==" | "<" | ">" | "=<" | ">=" | "is" => (700, Assoc::Xfx),
        "+" | "-" => (500, Assoc::Yfx),
        "*" | "//" | "mod" => (400, Assoc::Yfx),
        _ => return None,
    })
}

pub fn prefix_op(name: &str) -> Option<u32> {
    match name {
        "-" => Some(200),
        _ => None,
    }
}

/// One clause or query as read: a term whose variables are template
/// variables numbered in first-occurrence order.
pub struct ReadTerm {
    pub term: Term,
    pub var_names: Vec<String>,
    pub line: u32,
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    syms: &'a mut Symbols,
    names: Vec<String>,
    /// Variable names, `None` for anonymous ones.
    named: Vec<Option<String>>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn err_here(&self, msg: &str) -> ReadError {
        match self.peek().or_else(|| self.toks.last()) {
            Some(t) => ReadError::syntax(t.line, t.col, msg),
            None => ReadError::syntax(1, 1, msg),
        }
    }

    fn next(&mut self) -> Result<Token, ReadError> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err_here("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ReadError> {
        match self.peek() {
            Some(t) if t.tok == tok => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err_here(what)),
        }
    }

    fn var(&mut self, name: String) -> Term {
        if name == "_" {
            self.named.push(None);
            self.names.push(alloc::format!("_{}", self.named.len() - 1));
            return Term::template_var(self.named.len() as u32 - 1);
        }
        if let Some(i) = self.named.iter().position(|n| n.as_deref() == Some(&name)) {
            return Term::template_var(i as u32);
        }
        self.named.push(Some(name.clone()));
        self.names.push(name);
        Term::template_var(self.named.len() as u32 - 1)
    }

    /// Can the current token begin a term?
    fn starts_term(&self) -> bool {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Atom(a)) => infix_op(a).is_none() || prefix_op(a).is_some(),
            Some(Tok::Quoted(_) | Tok::Var(_) | Tok::Int(_) | Tok::Open | Tok::OpenList) => true,
            _ => false,
        }
    }

    fn args(&mut self) -> Result<Vec<Term>, ReadError> {
        let mut args = Vec::new();
        loop {
            args.push(self.parse(999)?);
            match self.next()?.tok {
                Tok::Comma => continue,
                Tok::Close => return Ok(args),
                _ => {
                    self.pos -= 1;
                    return Err(self.err_here("expected , or ) in arguments"));
                }
            }
        }
    }

    fn list(&mut self) -> Result<Term, ReadError> {
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::CloseList)) {
            self.pos += 1;
            return Ok(Term::Atom(symbols::NIL));
        }
        let mut items = Vec::new();
        let tail;
        loop {
            items.push(self.parse(999)?);
            match self.next()?.tok {
                Tok::Comma => continue,
                Tok::Bar => {
                    tail = self.parse(999)?;
                    self.expect(Tok::CloseList, "expected ] after list tail")?;
                    break;
                }
                Tok::CloseList => {
                    tail = Term::Atom(symbols::NIL);
                    break;
                }
                _ => {
                    self.pos -= 1;
                    return Err(self.err_here("expected , | or ] in list"));
                }
            }
        }
        let mut t = tail;
        for item in items.into_iter().rev() {
            t = Term::detached_struct(symbols::DOT, alloc::vec![item, t]);
        }
        Ok(t)
    }

    fn primary(&mut self, max: u32) -> Result<(Term, u32), ReadError> {
        let t = self.next()?;
        match t.tok {
            Tok::Int(n) => Ok((Term::Int(n), 0)),
            Tok::Var(name) => Ok((self.var(name), 0)),
            Tok::Open => {
                let inner = self.parse(1200)?;
                self.expect(Tok::Close, "expected )")?;
                Ok((inner, 0))
            }
            Tok::OpenList => Ok((self.list()?, 0)),
            Tok::Quoted(name) => self.atom_or_compound(name, true, max),
            Tok::Atom(name) => self.atom_or_compound(name, false, max),
            _ => {
                self.pos -= 1;
                Err(self.err_here("expected a term"))
            }
        }
    }

    fn atom_or_compound(
        &mut self,
        name: String,
        quoted: bool,
        max: u32,
    ) -> Result<(Term, u32), ReadError> {
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::FunctorOpen)) {
            self.pos += 1;
            let args = self.args()?;
            let f = self.syms.intern(&name);
            return Ok((Term::detached_struct(f, args), 0));
        }
        if !quoted {
            if name == "-" {
                if let Some(Token {
                    tok: Tok::Int(n),
                    spaced: false,
                    ..
                }) = self.peek()
                {
                    let n = *n;
                    self.pos += 1;
                    return Ok((Term::Int(-n), 0));
                }
            }
            if let Some(p) = prefix_op(&name) {
                if self.starts_term() {
                    let p = p.min(max);
                    let arg = self.parse(p)?;
                    let f = self.syms.intern(&name);
                    return Ok((Term::detached_struct(f, alloc::vec![arg]), p));
                }
            }
        }
        let a = self.syms.intern(&name);
        let prec = if quoted {
            0
        } else {
            infix_op(&name).map_or(0, |(p, _)| p.min(max))
        };
        Ok((Term::Atom(a), prec))
    }

    fn parse(&mut self, max: u32) -> Result<Term, ReadError> {
        let (mut left, mut left_prec) = self.primary(max)?;
        loop {
            let name = match self.peek().map(|t| &t.tok) {
                Some(Tok::Atom(a)) => a.clone(),
                Some(Tok::Comma) => String::from(","),
                _ => break,
            };
            let Some((p, assoc)) = infix_op(&name) else {
                break;
            };
            let (lmax, rmax) = match assoc {
                Assoc::Xfx => (p - 1, p - 1),
                Assoc::Xfy => (p - 1, p),
                Assoc::Yfx => (p, p - 1),
            };
            if p > max || left_prec > lmax {
                break;
            }
            self.pos += 1;
            let right = self.parse(rmax)?;
            let f = self.syms.intern(&name);
            left = Term::detached_struct(f, alloc::vec![left, right]);
            left_prec = p;
        }
        Ok(left)
    }
}

/// Reads every `.`-terminated term of `text`.
pub fn read_terms(text: &str, syms: &mut Symbols) -> Result<Vec<ReadTerm>, ReadError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        syms,
        names: Vec::new(),
        named: Vec::new(),
    };
    let mut out = Vec::new();
    while p.pos < p.toks.len() {
        p.names.clear();
        p.named.clear();
        let line = p.toks[p.pos].line;
        let term = p.parse(1200)?;
        match p.peek() {
            Some(Token { tok: Tok::End, .. }) => p.pos += 1,
            _ => return Err(p.err_here("operator expected or missing .")),
        }
        out.push(ReadTerm {
            term,
            var_names: core::mem::take(&mut p.names),
            line,
        });
    }
    Ok(out)
}
