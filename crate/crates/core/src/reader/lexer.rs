use alloc::string::String;
use alloc::vec::Vec;

use super::ReadError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Atom(String),
    /// Quoted atoms never act as operators or negative-number prefixes.
    Quoted(String),
    Var(String),
    Int(i64),
    /// `(` directly after an atom, opening an argument list.
    FunctorOpen,
    Open,
    Close,
    OpenList,
    CloseList,
    Comma,
    Bar,
    End,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
    /// Whitespace or a comment precedes the token.
    pub spaced: bool,
}

const SYMBOL_CHARS: &str = "+-*/\\^<>=~:.?@#&$";

fn is_symbol_char(c: char) -> bool {
    SYMBOL_CHARS.contains(c)
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.text[self.pos..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, msg: &str) -> ReadError {
        ReadError::syntax(self.line, self.col, msg)
    }

    /// Skips layout and comments; true if anything was skipped.
    fn skip_layout(&mut self) -> Result<bool, ReadError> {
        let start = self.pos;
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('%') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some('/') if self.peek2() == Some('*') => {
                    let (l, c) = (self.line, self.col);
                    self.bump();
                    self.bump();
                    loop {
                        match self.bump() {
                            None => {
                                return Err(ReadError::syntax(l, c, "unterminated block comment"))
                            }
                            Some('*') if self.peek() == Some('/') => {
                                self.bump();
                                break;
                            }
                            _ => {}
                        }
                    }
                }
                _ => break,
            }
        }
        Ok(self.pos != start)
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
            self.bump();
        }
        String::from(&self.text[start..self.pos])
    }

    fn quoted(&mut self) -> Result<String, ReadError> {
        let (l, c) = (self.line, self.col);
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(ReadError::syntax(l, c, "unterminated quoted atom")),
                Some('\'') => {
                    if self.peek() == Some('\'') {
                        self.bump();
                        s.push('\'');
                    } else {
                        return Ok(s);
                    }
                }
                Some('\\') => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some('\\') => s.push('\\'),
                    Some('\'') => s.push('\''),
                    Some('\n') => {}
                    _ => return Err(self.err("bad escape in quoted atom")),
                },
                Some(ch) => s.push(ch),
            }
        }
    }

    fn next(&mut self) -> Result<Option<Token>, ReadError> {
        let spaced = self.skip_layout()? || self.pos == 0;
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek() else {
            return Ok(None);
        };
        let tok = if c.is_ascii_digit() {
            let start = self.pos;
            while matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
                self.bump();
            }
            let n: i64 = self.text[start..self.pos]
                .parse()
                .map_err(|_| ReadError::syntax(line, col, "integer out of range"))?;
            Tok::Int(n)
        } else if c == '_' || c.is_uppercase() {
            Tok::Var(self.ident())
        } else if c.is_alphabetic() {
            Tok::Atom(self.ident())
        } else if c == '\'' {
            Tok::Quoted(self.quoted()?)
        } else if c == '.' && self.peek2().is_none_or(|d| d.is_whitespace() || d == '%') {
            self.bump();
            Tok::End
        } else if is_symbol_char(c) {
            let start = self.pos;
            while matches!(self.peek(), Some(d) if is_symbol_char(d)) {
                self.bump();
            }
            Tok::Atom(String::from(&self.text[start..self.pos]))
        } else {
            self.bump();
            match c {
                '(' => Tok::Open,
                ')' => Tok::Close,
                '[' => Tok::OpenList,
                ']' => Tok::CloseList,
                ',' => Tok::Comma,
                '|' => Tok::Bar,
                '!' => Tok::Atom(String::from("!")),
                ';' => Tok::Atom(String::from(";")),
                _ => return Err(ReadError::syntax(line, col, "unexpected character")),
            }
        };
        Ok(Some(Token {
            tok,
            line,
            col,
            spaced,
        }))
    }
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, ReadError> {
    let mut lx = Lexer {
        text,
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out: Vec<Token> = Vec::new();
    while let Some(mut t) = lx.next()? {
        if t.tok == Tok::Open && !t.spaced {
            if let Some(prev) = out.last() {
                if matches!(prev.tok, Tok::Atom(_) | Tok::Quoted(_)) {
                    t.tok = Tok::FunctorOpen;
                }
            }
        }
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn clause_tokens() {
        use Tok::*;
        assert_eq!(
            toks("m(X,Y) :- b(X) & a(Y). % c"),
            vec![
                Atom("m".into()),
                FunctorOpen,
                Var("X".into()),
                Comma,
                Var("Y".into()),
                Close,
                Atom(":-".into()),
                Atom("b".into()),
                FunctorOpen,
                Var("X".into()),
                Close,
                Atom("&".into()),
                Atom("a".into()),
                FunctorOpen,
                Var("Y".into()),
                Close,
                End
            ]
        );
    }

    #[test]
    fn end_needs_layout() {
        assert_eq!(
            toks("a.b"),
            vec![
                Tok::Atom("a".into()),
                Tok::Atom(".".into()),
                Tok::Atom("b".into())
            ]
        );
        assert_eq!(toks("a."), vec![Tok::Atom("a".into()), Tok::End]);
    }

    #[test]
    fn quoted_and_comments() {
        assert_eq!(
            toks("/* x */ 'it''s' 'a\\nb'"),
            vec![Tok::Quoted("it's".into()), Tok::Quoted("a\nb".into())]
        );
        assert!(tokenize("/* open").is_err());
    }
}
