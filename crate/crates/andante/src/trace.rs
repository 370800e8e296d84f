//! Scheduler trace events and the invariant checks run over them.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Fork,
    /// A not-yet-executed goal was started.
    Dispatch,
    /// An agent failed into a goal that already had answers or was
    /// suspended.
    Backtrack,
    Suspend,
    Resume,
    Memoize,
    Combine,
    Relocate,
    Exhaust,
    Cancel,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Fork => "fork",
            EventKind::Dispatch => "dispatch",
            EventKind::Backtrack => "backtrack",
            EventKind::Suspend => "suspend",
            EventKind::Resume => "resume",
            EventKind::Memoize => "memoize",
            EventKind::Combine => "combine",
            EventKind::Relocate => "relocate",
            EventKind::Exhaust => "exhaust",
            EventKind::Cancel => "cancel",
        }
    }
}

impl FromStr for EventKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "fork" => EventKind::Fork,
            "dispatch" => EventKind::Dispatch,
            "backtrack" => EventKind::Backtrack,
            "suspend" => EventKind::Suspend,
            "resume" => EventKind::Resume,
            "memoize" => EventKind::Memoize,
            "combine" => EventKind::Combine,
            "relocate" => EventKind::Relocate,
            "exhaust" => EventKind::Exhaust,
            "cancel" => EventKind::Cancel,
            _ => return Err(format!("unknown event kind {s}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_us: u64,
    pub agent: u32,
    pub kind: EventKind,
    pub pc: u64,
    /// Goal execution; for `fork`, the execution that forked (0 for the
    /// query).
    pub handler: u64,
    /// Position of the goal in its conjunction.
    pub idx: u32,
    /// Scheduling class of a dispatched goal (0 when not applicable).
    pub class: u8,
    /// Best class available at the selection point.
    pub best: u8,
    /// Answer text for `memoize`, tuple for `combine`.
    pub detail: String,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {} {} {}",
            self.t_us,
            self.agent,
            self.kind.name(),
            self.pc,
            self.handler,
            self.idx,
            self.class,
            self.best
        )?;
        if !self.detail.is_empty() {
            write!(f, " {}", self.detail)?;
        }
        Ok(())
    }
}

impl FromStr for TraceEvent {
    type Err = String;
    fn from_str(line: &str) -> Result<Self, String> {
        let mut it = line.splitn(9, ' ');
        let mut next = |what: &str| it.next().ok_or_else(|| format!("missing {what}"));
        let num = |s: &str| s.parse::<u64>().map_err(|e| format!("{s}: {e}"));
        let t_us = num(next("time")?)?;
        let agent = num(next("agent")?)? as u32;
        let kind = next("kind")?.parse()?;
        let pc = num(next("pc")?)?;
        let handler = num(next("handler")?)?;
        let idx = num(next("idx")?)? as u32;
        let class = num(next("class")?)? as u8;
        let best = num(next("best")?)? as u8;
        let detail = it.next().unwrap_or("").to_string();
        Ok(TraceEvent {
            t_us,
            agent,
            kind,
            pc,
            handler,
            idx,
            class,
            best,
            detail,
        })
    }
}

pub fn write_trace(events: &[TraceEvent]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&e.to_string());
        s.push('\n');
    }
    s
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Every dispatch picked a goal of the best class available at that
/// selection. Returns the offending events.
pub fn priority_violations(events: &[TraceEvent]) -> Vec<&TraceEvent> {
    events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Dispatch | EventKind::Backtrack))
        .filter(|e| e.class > 2 && e.best <= 2)
        .collect()
}

/// Tuples emitted twice by the same conjunction.
pub fn duplicate_combinations(events: &[TraceEvent]) -> Vec<(u64, String)> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for e in events.iter().filter(|e| e.kind == EventKind::Combine) {
        if !seen.insert((e.pc, e.detail.clone())) {
            dups.push((e.pc, e.detail.clone()));
        }
    }
    dups
}

/// Answer texts of each goal execution in the order they were found,
/// keyed by (conjunction, goal position, execution).
pub fn handler_answers(events: &[TraceEvent]) -> BTreeMap<(u64, u32, u64), Vec<String>> {
    let mut out: BTreeMap<_, Vec<String>> = BTreeMap::new();
    for e in events.iter().filter(|e| e.kind == EventKind::Memoize) {
        out.entry((e.pc, e.idx, e.handler))
            .or_default()
            .push(e.detail.clone());
    }
    out
}
