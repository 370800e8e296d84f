use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::term::Sym;

/// Symbols every table starts with, at fixed indices.
const PRELUDE: &[&str] = &[
    "[]", ".", ",", "&", ":-", "true", "fail", "!", "-", "+", "*", "//", "mod", "=", "==", "\\==",
    "<", ">", "=<", ">=", "is", "pause", "exists", "length", "between", "file", "false",
];

pub const NIL: Sym = Sym(0);
pub const DOT: Sym = Sym(1);
pub const COMMA: Sym = Sym(2);
pub const AMP: Sym = Sym(3);
pub const NECK: Sym = Sym(4);
pub const TRUE: Sym = Sym(5);
pub const FAIL: Sym = Sym(6);
pub const CUT: Sym = Sym(7);
pub const MINUS: Sym = Sym(8);
pub const PLUS: Sym = Sym(9);
pub const STAR: Sym = Sym(10);
pub const IDIV: Sym = Sym(11);
pub const MOD: Sym = Sym(12);
pub const FILE: Sym = Sym(25);
pub const FALSE: Sym = Sym(26);

#[derive(Clone, Debug)]
pub struct Symbols {
    names: Vec<String>,
    index: BTreeMap<String, Sym>,
}

impl Default for Symbols {
    fn default() -> Self {
        Symbols::new()
    }
}

impl Symbols {
    pub fn new() -> Self {
        let mut s = Symbols {
            names: Vec::new(),
            index: BTreeMap::new(),
        };
        for n in PRELUDE {
            s.intern(n);
        }
        s
    }

    pub fn intern(&mut self, name: &str) -> Sym {
        if let Some(s) = self.index.get(name) {
            return *s;
        }
        let s = Sym(self.names.len() as u32);
        self.names.push(String::from(name));
        self.index.insert(String::from(name), s);
        s
    }

    pub fn lookup(&self, name: &str) -> Option<Sym> {
        self.index.get(name).copied()
    }

    pub fn name(&self, s: Sym) -> &str {
        self.names.get(s.0 as usize).map_or("?", |n| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prelude_indices() {
        let s = Symbols::new();
        assert_eq!(s.name(NIL), "[]");
        assert_eq!(s.name(MOD), "mod");
        assert_eq!(s.name(FILE), "file");
        assert_eq!(s.name(FALSE), "false");
    }
}
