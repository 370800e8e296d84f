//! Benchmark programs and the timing table built from repeated runs.

use std::fmt::Write as _;
use std::time::Duration;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::run::{run_source, Answers, Mode, RunConfig, RunError, RunReport};

/// A benchmark: the annotated program, the same program with every `&`
/// replaced by `,`, and the query.
#[derive(Clone, Debug)]
pub struct Bench {
    pub name: String,
    pub par: String,
    pub seq: String,
    pub query: String,
    pub answers: Answers,
    /// Milliseconds per `pause/1` unit.
    pub time_scale: f64,
}

impl Bench {
    fn new(name: &str, par: String, query: &str, answers: Answers) -> Self {
        Bench {
            name: name.to_string(),
            seq: sequentialize(&par),
            par,
            query: query.to_string(),
            answers,
            time_scale: 1.0,
        }
    }
}

/// Replaces parallel conjunction operators by plain conjunction. Quoted
/// atoms and comments are left alone.
pub fn sequentialize(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    let mut quoted = false;
    let mut comment = false;
    for c in src.chars() {
        match c {
            '\n' => comment = false,
            '%' if !quoted => comment = true,
            '\'' if !comment => quoted = !quoted,
            '&' if !quoted && !comment => {
                out.push(',');
                continue;
            }
            _ => {}
        }
        out.push(c);
    }
    out
}

fn list(xs: impl IntoIterator<Item = String>) -> String {
    format!("[{}]", xs.into_iter().collect::<Vec<_>>().join(","))
}

/// Fibonacci with sequential fallback at or below `threshold`; every goal
/// is deterministic.
pub fn fib(n: u32, threshold: u32) -> Bench {
    let src = format!(
        "fib(N, F) :- N =< {threshold}, !, sfib(N, F).
fib(N, F) :- N1 is N - 1, N2 is N - 2, fib(N1, F1) & fib(N2, F2), F is F1 + F2.
sfib(N, F) :- N < 2, !, F = N.
sfib(N, F) :- N1 is N - 1, N2 is N - 2, sfib(N1, F1), sfib(N2, F2), F is F1 + F2.
"
    );
    Bench::new("fib", src, &format!("fib({n}, F)"), Answers::First)
}

/// Product of two `n`×`n` matrices, one row per parallel goal. The matrices
/// are literal facts; the second one is stored transposed.
pub fn mmat(n: usize, seed: u64) -> Bench {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut mat = || list((0..n).map(|_| list((0..n).map(|_| rng.gen_range(0..10).to_string()))));
    let (a, b) = (mat(), mat());
    let src = format!(
        "mm(C) :- ma(A), mb(B), mmat(A, B, C).
mmat([], _, []).
mmat([R|Rs], Cols, [P|Ps]) :- mrow(Cols, R, P) & mmat(Rs, Cols, Ps).
mrow([], _, []).
mrow([C|Cs], R, [X|Xs]) :- dot(R, C, 0, X), mrow(Cs, R, Xs).
dot([], [], A, A).
dot([X|Xs], [Y|Ys], A0, A) :- A1 is A0 + X * Y, dot(Xs, Ys, A1, A).
ma({a}).
mb({b}).
"
    );
    Bench::new("mmat", src, "mm(C)", Answers::First)
}

/// Quicksort of `n` random integers; lists of `threshold` elements or
/// fewer are sorted sequentially. Cuts keep every goal free of choice
/// points.
pub fn qsort(n: usize, threshold: usize, seed: u64) -> Bench {
    let mut rng = StdRng::seed_from_u64(seed);
    let data = list((0..n).map(|_| rng.gen_range(0..100_000).to_string()));
    let src = format!(
        "sorted(S) :- data(L), qs(L, S).
qs(L, S) :- length(L, N), N =< {threshold}, !, sqs(L, S, []).
qs([X|T], S) :- partition(T, X, L1, L2), qs(L1, S1) & qs(L2, S2), app(S1, [X|S2], S).
sqs([], R, R).
sqs([X|L], R, R0) :- partition(L, X, L1, L2), sqs(L2, R1, R0), sqs(L1, R, [X|R1]).
partition([], _, [], []).
partition([E|R], C, L1, L2) :- E < C, !, L1 = [E|T1], partition(R, C, T1, L2).
partition([E|R], C, L1, [E|L2]) :- partition(R, C, L1, L2).
app([], L, L).
app([X|Xs], L, [X|Ys]) :- app(Xs, L, Ys).
data({data}).
"
    );
    Bench::new("qsort", src, "sorted(S)", Answers::First)
}

/// Sorting pairs `p(Value, Tag)` under a partial order: pairs with equal
/// values but different tags are incomparable, so either may come first
/// and the sort has one answer per admissible order.
pub fn qsort_nd(n: usize, values: i64, seed: u64) -> Bench {
    let mut rng = StdRng::seed_from_u64(seed);
    let data = list((0..n).map(|i| format!("p({}, t{})", rng.gen_range(0..values), i % 2)));
    let src = format!(
        "sorted(S) :- data(L), qs(L, S).
qs([], []).
qs([X|T], S) :- part(T, X, L1, L2), qs(L1, S1) & qs(L2, S2), app(S1, [X|S2], S).
part([], _, [], []).
part([E|R], C, [E|L1], L2) :- before(E, C), part(R, C, L1, L2).
part([E|R], C, L1, [E|L2]) :- after(E, C), part(R, C, L1, L2).
before(p(A, _), p(B, _)) :- A < B.
before(p(A, T), p(A, U)) :- T \\== U.
after(p(A, _), p(B, _)) :- A > B.
after(p(A, _), p(A, _)).
app([], L, L).
app([X|Xs], L, [X|Ys]) :- app(Xs, L, Ys).
data({data}).
"
    );
    Bench::new("qsort_nd", src, "sorted(S)", Answers::All)
}

/// `goals` lists of files, each with `per` existing files among a few
/// missing ones; checking a file takes `cost` pause units.
pub fn checkfiles(goals: usize, per: usize, cost: u32) -> Bench {
    let mut src = String::new();
    let vars: Vec<String> = (1..=goals).map(|i| format!("F{i}")).collect();
    let calls: Vec<String> = (1..=goals).map(|i| format!("cf(l{i}, F{i})")).collect();
    let _ = writeln!(
        src,
        "checkfiles({}) :- {}.",
        vars.join(", "),
        calls.join(" & ")
    );
    let _ = writeln!(
        src,
        "cf(L, F) :- list(L, Fs), member(F, Fs), exists(F), pause({cost})."
    );
    let _ = writeln!(src, "member(X, [X|_]).\nmember(X, [_|T]) :- member(X, T).");
    for i in 1..=goals {
        let mut names = Vec::new();
        for j in 1..=per {
            names.push(format!("f{i}_{j}"));
            let _ = writeln!(src, "file(f{i}_{j}).");
            if j % 2 == 0 {
                names.push(format!("missing{i}_{j}"));
            }
        }
        let _ = writeln!(src, "list(l{i}, {}).", list(names));
    }
    let q = format!("checkfiles({})", vars.join(", "));
    Bench::new("checkfiles", src, &q, Answers::All)
}

/// An `n`×`n` board: each row places one light on a column whose position
/// passes a check that costs `cost` pause units. Rows are independent.
pub fn illumination(n: usize, cost: u32, seed: u64) -> Bench {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut src = String::new();
    let vars: Vec<String> = (1..=n).map(|i| format!("C{i}")).collect();
    let calls: Vec<String> = (1..=n).map(|i| format!("light({i}, C{i})")).collect();
    let _ = writeln!(src, "illum({}) :- {}.", vars.join(", "), calls.join(" & "));
    let _ = writeln!(
        src,
        "light(R, C) :- between(1, {n}, C), pos(R, C), pause({cost})."
    );
    for r in 1..=n {
        let mut any = false;
        for c in 1..=n {
            if rng.gen_bool(0.3) || (!any && c == n) {
                any = true;
                let _ = writeln!(src, "pos({r}, {c}).");
            }
        }
    }
    let q = format!("illum({})", vars.join(", "));
    Bench::new("illumination", src, &q, Answers::First)
}

/// The benchmarks of a suite, at their standard sizes.
pub fn suite(name: &str) -> Option<Vec<Bench>> {
    let one = |b: Bench| Some(vec![b]);
    match name {
        "fib" => one(fib(22, 12)),
        "mmat" => one(mmat(50, 1)),
        "qsort" => one(qsort(10_000, 300, 2)),
        "qsort_nd" => one(qsort_nd(8, 4, 3)),
        "checkfiles" => one(checkfiles(8, 4, 10)),
        "illumination" => one(illumination(8, 10, 4)),
        "all" => Some(
            [
                "fib",
                "mmat",
                "qsort",
                "qsort_nd",
                "checkfiles",
                "illumination",
            ]
            .iter()
            .flat_map(|s| suite(s).unwrap())
            .collect(),
        ),
        _ => None,
    }
}

pub const SUITES: &[&str] = &[
    "fib",
    "mmat",
    "qsort",
    "qsort_nd",
    "checkfiles",
    "illumination",
    "all",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub bench: String,
    pub mode: String,
    pub agents: usize,
    pub runs: usize,
    pub median_ms: f64,
    pub mean_ms: f64,
    /// Median wall time of the unannotated program in seq mode over this
    /// cell's median.
    pub speedup: f64,
    pub answers: usize,
    pub steps: u64,
    /// Runs stopped by the per-run timeout; their times are lower bounds.
    pub timed_out: usize,
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

/// Summarizes the reports of one cell. `baseline_ms` is the median wall
/// time of the sequential baseline.
pub fn aggregate(bench: &str, reports: &[RunReport], baseline_ms: f64) -> CellRow {
    let mut walls: Vec<f64> = reports.iter().map(|r| r.wall_ms).collect();
    let mean = walls.iter().sum::<f64>() / walls.len().max(1) as f64;
    let med = median(&mut walls);
    let first = reports.first();
    CellRow {
        bench: bench.to_string(),
        mode: first.map(|r| r.mode.clone()).unwrap_or_default(),
        agents: first.map_or(0, |r| r.agents),
        runs: reports.len(),
        median_ms: med,
        mean_ms: mean,
        speedup: baseline_ms / med,
        answers: first.map_or(0, |r| r.answers.len()),
        steps: first.map_or(0, |r| r.steps),
        timed_out: reports.iter().filter(|r| r.timed_out).count(),
    }
}

/// Runs every cell of the matrix `runs` times, sequentially. Each run is
/// stopped after `timeout`, if given.
pub fn run_bench(
    b: &Bench,
    runs: usize,
    cells: &[(Mode, usize)],
    timeout: Option<Duration>,
) -> Result<Vec<CellRow>, RunError> {
    let runs = runs.max(1);
    let cfg = |mode: Mode, agents: usize, seed: u64| RunConfig {
        mode,
        agents,
        answers: b.answers,
        seed,
        time_scale: b.time_scale,
        deadline: timeout,
        ..RunConfig::new(&b.query)
    };
    let mut base = Vec::with_capacity(runs);
    for s in 0..runs {
        base.push(run_source(&b.seq, &cfg(Mode::Seq, 1, s as u64))?.report);
    }
    let mut bw: Vec<f64> = base.iter().map(|r| r.wall_ms).collect();
    let baseline = median(&mut bw);
    let mut rows = vec![aggregate(&b.name, &base, baseline)];
    for &(mode, agents) in cells {
        let mut reps = Vec::with_capacity(runs);
        for s in 0..runs {
            reps.push(run_source(&b.par, &cfg(mode, agents, s as u64))?.report);
        }
        rows.push(aggregate(&b.name, &reps, baseline));
    }
    Ok(rows)
}

pub fn default_cells() -> Vec<(Mode, usize)> {
    let mut v = Vec::new();
    for a in [1, 2, 4, 8] {
        v.push((Mode::Parback, a));
    }
    for a in [1, 4] {
        v.push((Mode::Recompute, a));
    }
    v
}

pub fn write_csv<W: std::io::Write>(w: W, rows: &[CellRow]) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn table(rows: &[CellRow]) -> String {
    let mut s = format!(
        "{:<14} {:<10} {:>6} {:>11} {:>11} {:>8} {:>8} {:>9}\n",
        "bench", "mode", "agents", "median_ms", "mean_ms", "speedup", "answers", "timeouts"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<14} {:<10} {:>6} {:>11.2} {:>11.2} {:>8.2} {:>8} {:>9}",
            r.bench, r.mode, r.agents, r.median_ms, r.mean_ms, r.speedup, r.answers, r.timed_out
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequentialize_keeps_quotes_and_comments() {
        assert_eq!(
            sequentialize("p :- a & b. % x & y\nq('&') :- c&d."),
            "p :- a , b. % x & y\nq('&') :- c,d."
        );
    }

    #[test]
    fn aggregate_and_csv() {
        let rep = |wall: f64| RunReport {
            mode: "parback".into(),
            agents: 2,
            answers: vec!["X = 1".into()],
            wall_ms: wall,
            steps: 7,
            ..RunReport::default()
        };
        let row = aggregate("t", &[rep(30.0), rep(10.0), rep(20.0)], 40.0);
        assert_eq!(row.median_ms, 20.0);
        assert_eq!(row.mean_ms, 20.0);
        assert_eq!(row.speedup, 2.0);
        assert_eq!(
            (row.agents, row.answers, row.steps, row.timed_out),
            (2, 1, 7, 0)
        );
        let mut buf = Vec::new();
        write_csv(&mut buf, std::slice::from_ref(&row)).unwrap();
        let mut rd = csv::Reader::from_reader(&buf[..]);
        let back: CellRow = rd.deserialize().next().unwrap().unwrap();
        assert_eq!(back, row);
    }

    #[test]
    fn median_of_even_count() {
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [5.0]), 5.0);
    }
}
