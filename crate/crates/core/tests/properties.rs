use std::collections::BTreeSet;

use andante_core::combine::Combination;
use andante_core::memo::MemoArea;
use andante_core::reader::{parse_program, term_to_string, Symbols};
use andante_core::stackset::StackSet;
use andante_core::term::{Sym, Term, TermStore, Trail, VarRef};
use proptest::prelude::*;

/// Shape of a random term; variables index into a pool of cells.
#[derive(Clone, Debug)]
enum Shape {
    Var(usize),
    Atom(u32),
    Int(i64),
    S(u32, Vec<Shape>),
}

fn shape() -> impl Strategy<Value = Shape> {
    let leaf = prop_oneof![
        (0usize..6).prop_map(Shape::Var),
        (0u32..3).prop_map(Shape::Atom),
        (-3i64..3).prop_map(Shape::Int),
    ];
    leaf.prop_recursive(5, 40, 3, |inner| {
        (0u32..2, prop::collection::vec(inner, 1..3)).prop_map(|(f, a)| Shape::S(f, a))
    })
}

fn build(s: &mut TermStore, vars: &[Term], sh: &Shape) -> Term {
    match sh {
        Shape::Var(i) => vars[*i].clone(),
        Shape::Atom(a) => Term::Atom(Sym(100 + a)),
        Shape::Int(i) => Term::Int(*i),
        Shape::S(f, args) => {
            let a = args.iter().map(|x| build(s, vars, x)).collect();
            s.mk_struct(Sym(200 + f), a)
        }
    }
}

fn bindings(s: &TermStore, vars: &[Term]) -> Vec<bool> {
    vars.iter()
        .map(|v| matches!(s.deref(v), Term::Var(w) if Term::Var(*w) == *v))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn unify_undo_roundtrip(a in shape(), b in shape()) {
        let mut s = TermStore::new(0);
        let mut tr = Trail::new();
        let vars: Vec<Term> = (0..6).map(|_| s.new_var()).collect();
        let ta = build(&mut s, &vars, &a);
        let tb = build(&mut s, &vars, &b);
        let before = bindings(&s, &vars);
        let mark = tr.len();
        if s.unify(&mut tr, &ta, &tb) {
            let after = bindings(&s, &vars);
            let newly = before.iter().zip(&after).filter(|(x, y)| **x && !**y).count();
            prop_assert_eq!(tr.len() - mark, newly);
            s.undo_to(&mut tr, mark).unwrap();
        } else {
            prop_assert_eq!(tr.len(), mark);
        }
        prop_assert_eq!(bindings(&s, &vars), before);
    }

    #[test]
    fn capture_reinstall_roundtrip(old in shape(), new in prop::collection::vec(shape(), 1..4)) {
        let mut s = TermStore::new(0);
        let mut tr = Trail::new();
        let pool: Vec<Term> = (0..6).map(|_| s.new_var()).collect();
        let pre = build(&mut s, &pool, &old);
        let ext: Vec<VarRef> = (0..new.len()).map(|_| s.new_var_ref()).collect();
        let mark = s.mark();
        let base_trail = tr.len();
        let local: Vec<Term> = (0..6).map(|_| s.new_var()).collect();
        let mut created = 0usize;
        for (i, sh) in new.iter().enumerate() {
            let before = s.heap_top();
            let t = build(&mut s, &local, sh);
            let t = if i == 0 { s.mk_struct(Sym(300), vec![t, pre.clone()]) } else { t };
            created += (s.heap_top() - before) as usize;
            prop_assert!(s.unify(&mut tr, &Term::Var(ext[i]), &t));
        }
        let snap = |s: &TermStore| {
            let mut seen = Vec::new();
            ext.iter().map(|v| s.resolve(&Term::Var(*v), &mut seen)).collect::<Vec<_>>()
        };
        let want = snap(&s);
        let mut area = MemoArea::new(1, 1);
        let ans = area.memoize_from(0, &s, &ext, mark).unwrap();
        prop_assert!(ans.nodes <= created);
        s.undo_to(&mut tr, base_trail).unwrap();
        s.truncate(mark);
        for k in 0..2 {
            let m = tr.len();
            area.reinstall(0, 0, &mut s, &mut tr, &ext).unwrap();
            prop_assert_eq!(&snap(&s), &want, "reinstall {}", k);
            s.undo_to(&mut tr, m).unwrap();
        }
    }

    #[test]
    fn copy_never_copies_old_objects(old in shape(), new in shape()) {
        let mut s = TermStore::new(0);
        let mut tr = Trail::new();
        let pool: Vec<Term> = (0..6).map(|_| s.new_var()).collect();
        let pre = build(&mut s, &pool, &old);
        let x = s.new_var_ref();
        let mark = s.mark();
        let t = build(&mut s, &pool, &new);
        let t = s.mk_struct(Sym(300), vec![pre.clone(), t]);
        prop_assert!(s.unify(&mut tr, &Term::Var(x), &t));
        let c = s.copy_answer_segment(&[x], mark);
        prop_assert!(c.nodes as u64 <= s.heap_top() - mark.heap);
        fn check(s: &andante_core::term::Snap, mark_heap: u64) -> bool {
            use andante_core::term::Snap;
            match s {
                // ground results are copied once into detached structures
                Snap::Ref(Term::Struct(st)) if st.origin.store == andante_core::term::DETACHED_STORE => st.ground,
                Snap::Ref(Term::Struct(st)) => st.origin.seq < mark_heap,
                Snap::Node(n) => n.args.iter().all(|a| check(a, mark_heap)),
                _ => true,
            }
        }
        for (_, e) in &c.entries {
            prop_assert!(check(e, mark.heap));
        }
    }

    #[test]
    fn combination_batches_cover_the_product(
        counts in prop::collection::vec(0usize..5, 1..5),
        order in prop::collection::vec(0usize..4, 0..40),
    ) {
        let n = counts.len();
        let mut produced = vec![0usize; n];
        // each handler reveals its first answer before the first combination
        let mut seen = BTreeSet::new();
        let mut emitted = 0usize;
        if counts.iter().all(|&c| c > 0) {
            produced.iter_mut().for_each(|p| *p = 1);
            let mut combined = vec![1usize; n];
            let mut c = Combination::initial(n);
            loop {
                seen.insert(c.current().to_vec());
                emitted += 1;
                if c.advance().is_none() { break; }
            }
            let mut pending: Vec<usize> = order.iter().map(|o| o % n).collect();
            loop {
                // a new answer arrives somewhere
                if let Some(h) = pending.pop() {
                    if produced[h] < counts[h] { produced[h] += 1; }
                } else if let Some(h) = (0..n).find(|&h| produced[h] < counts[h]) {
                    produced[h] += 1;
                }
                // sweep all uncombined answers
                let mut progressed = false;
                while let Some(p) = (0..n).find(|&i| combined[i] < produced[i]) {
                    progressed = true;
                    if let Some(mut c) = Combination::batch(p, combined[p], &combined) {
                        loop {
                            prop_assert!(seen.insert(c.current().to_vec()));
                            emitted += 1;
                            if c.advance().is_none() { break; }
                        }
                    }
                    combined[p] += 1;
                }
                if !progressed && (0..n).all(|h| produced[h] == counts[h]) { break; }
            }
        }
        let product: usize = counts.iter().product();
        prop_assert_eq!(emitted, product);
        prop_assert_eq!(seen.len(), product);
    }

    #[test]
    fn relocation_keeps_stacks_consistent(
        goals in prop::collection::vec(1usize..4, 2..5),
        pick in 0usize..4,
    ) {
        let mut ss: StackSet<usize> = StackSet::new(0);
        let mut cells: Vec<Vec<Term>> = Vec::new();
        for (h, &ncp) in goals.iter().enumerate() {
            let start = ss.store.mark();
            ss.open_segment(h as u64, start);
            let mut mine = Vec::new();
            for k in 0..ncp {
                ss.push(h * 10 + k);
                let v = ss.store.new_var();
                prop_assert!(ss.store.unify(&mut ss.trail, &v, &Term::Int((h * 10 + k) as i64)));
                mine.push(v);
            }
            ss.close_segment(h as u64).unwrap();
            cells.push(mine);
        }
        let target = (pick % (goals.len() - 1)) as u64;
        prop_assert!(ss.is_trapped(target));
        ss.relocate_to_top(target).unwrap();
        prop_assert!(!ss.is_trapped(target));
        let marks: Vec<usize> = ss.cps().iter().map(|c| c.trail_mark).collect();
        prop_assert!(marks.windows(2).all(|w| w[0] <= w[1]));
        let heaps: Vec<u32> = ss.cps().iter().map(|c| c.store_mark.cells).collect();
        prop_assert!(heaps.windows(2).all(|w| w[0] <= w[1]));
        // segments are disjoint
        let mut ranges: Vec<(usize, usize)> = ss.segments().iter()
            .map(|s| (s.cp_base, s.cp_end.unwrap())).collect();
        ranges.sort();
        prop_assert!(ranges.windows(2).all(|w| w[0].1 <= w[1].0));
        // undoing to each cp's mark unbinds exactly the cells trailed above
        for i in (0..ss.len()).rev() {
            let m = ss.cps()[i].trail_mark;
            let above: BTreeSet<u32> = ss.trail.entries()[m..].iter().copied().collect();
            let owner = ss.cps()[i].kind;
            let (h, k) = (owner / 10, owner % 10);
            let cell = match &cells[h][k] { Term::Var(v) => v.index, _ => unreachable!() };
            prop_assert!(above.contains(&cell));
        }
        // backtracking the relocated goal touches only its own cells
        let seg = ss.segment(target).unwrap().clone();
        let keep: Vec<Term> = cells.iter().enumerate()
            .filter(|(h, _)| *h as u64 != target)
            .flat_map(|(_, c)| c.clone()).collect();
        while ss.len() > seg.cp_base {
            ss.restore_top().unwrap();
            ss.pop().unwrap();
        }
        for v in &cells[target as usize] {
            prop_assert!(matches!(ss.store.deref(v), Term::Var(_)));
        }
        for v in &keep {
            prop_assert!(matches!(ss.store.deref(v), Term::Int(_)));
        }
    }
}

/// Random clause text from a small grammar.
fn clause_text() -> impl Strategy<Value = String> {
    let atom = prop_oneof![Just("a"), Just("b"), Just("'Q x'"), Just("[]")].prop_map(String::from);
    let var = prop_oneof![Just("X"), Just("Y"), Just("_")].prop_map(String::from);
    let int = (-5i64..20).prop_map(|i| {
        if i < 0 {
            format!("({i})")
        } else {
            i.to_string()
        }
    });
    let leaf = prop_oneof![atom, var, int];
    let term = leaf.prop_recursive(3, 20, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..3).prop_map(|a| format!("f({})", a.join(", "))),
            prop::collection::vec(inner.clone(), 0..3).prop_map(|a| format!("[{}]", a.join(", "))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b} * {b})")),
            inner.clone().prop_map(|a| format!("- {a}")),
        ]
    });
    let goal = prop_oneof![
        term.clone().prop_map(|t| format!("p({t})")),
        (term.clone(), term.clone()).prop_map(|(a, b)| format!("{a} = {b}")),
        term.clone().prop_map(|t| format!("X is {t}")),
        Just("true".to_string()),
    ];
    let body = prop_oneof![
        goal.clone(),
        (goal.clone(), goal.clone()).prop_map(|(a, b)| format!("{a}, {b}")),
        (goal.clone(), goal.clone(), goal.clone()).prop_map(|(a, b, c)| format!("{a} & {b}, {c}")),
        (goal.clone(), goal.clone(), goal.clone())
            .prop_map(|(a, b, c)| format!("({a}, {b}) & {c}")),
    ];
    (term, prop::option::of(body)).prop_map(|(h, b)| match b {
        Some(b) => format!("p({h}) :- {b}."),
        None => format!("p({h})."),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn print_parse_fixpoint(clauses in prop::collection::vec(clause_text(), 1..4)) {
        let src = clauses.join("\n");
        let p1 = parse_program(&src).unwrap();
        let s1 = p1.to_source();
        let p2 = parse_program(&s1).unwrap();
        prop_assert_eq!(p2.to_source(), s1.clone());
        // same clause structure, compared through names rather than symbol ids
        prop_assert_eq!(p1.preds.len(), p2.preds.len());
        for (a, b) in p1.preds.iter().zip(&p2.preds) {
            prop_assert_eq!(a.clauses.len(), b.clauses.len());
            for (x, y) in a.clauses.iter().zip(&b.clauses) {
                prop_assert_eq!(x.nvars, y.nvars);
                prop_assert_eq!(
                    term_to_string(&p1.syms, &x.head, None),
                    term_to_string(&p2.syms, &y.head, None)
                );
            }
        }
    }
}

#[test]
fn distinct_conjunctions_have_distinct_areas() {
    // two syntactically identical goals in different conjunctions
    let mut s = TermStore::new(0);
    let mut tr = Trail::new();
    let x = s.new_var_ref();
    let mark = s.mark();
    assert!(s.unify(&mut tr, &Term::Var(x), &Term::Int(1)));
    let mut a = MemoArea::new(1, 1);
    let b = MemoArea::new(2, 1);
    a.memoize_from(0, &s, &[x], mark).unwrap();
    assert_eq!(a.count(0), 1);
    assert_eq!(b.count(0), 0);
    assert_ne!(a.owner(), b.owner());
    let _ = Symbols::new();
}
