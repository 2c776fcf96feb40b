use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{EventKind, History, Invocation, Response, TxnId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Condition {
    /// Sequence numbers must strictly increase.
    SeqOrder,
    /// Per transaction, invocations and responses alternate and match.
    Alternation,
    /// (a) every transaction starts with `init`.
    StartsWithInit,
    /// (b) nothing follows a commit or abort response.
    AfterCompletion,
    /// (c) no invocation follows `tryC` or `tryA`.
    AfterTry,
    /// (d) transactions of one process do not overlap.
    ProcessOverlap,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub condition: Condition,
    pub event_seq: u64,
    pub txn: TxnId,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at event {} ({}): {}", self.condition, self.event_seq, self.txn, self.detail)
    }
}

fn matches(inv: &Invocation, res: Response) -> bool {
    match (inv, res) {
        (_, Response::Aborted) => true,
        (Invocation::Init, Response::Ok) | (Invocation::Write(..), Response::Ok) => true,
        (Invocation::Read(_), Response::Value(_)) => true,
        (Invocation::TryCommit, Response::Committed) => true,
        _ => false,
    }
}

#[derive(Default)]
struct TxnScan {
    started: bool,
    pending: Option<Invocation>,
    tried: bool,
    finished: bool,
}

pub fn validate_well_formed(h: &History) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut scans: BTreeMap<TxnId, TxnScan> = BTreeMap::new();
    let mut last_seq = None;
    for e in &h.events {
        let v = |condition, detail: &str| Violation {
            condition,
            event_seq: e.seq,
            txn: e.txn,
            detail: detail.to_string(),
        };
        if let Some(prev) = last_seq {
            if e.seq <= prev {
                out.push(v(Condition::SeqOrder, "sequence number does not increase"));
            }
        }
        last_seq = Some(e.seq);

        let s = scans.entry(e.txn).or_default();
        if s.finished {
            out.push(v(Condition::AfterCompletion, "event after commit or abort"));
        }
        match &e.kind {
            EventKind::Inv(inv) => {
                if !s.started && *inv != Invocation::Init {
                    out.push(v(Condition::StartsWithInit, "first event is not init"));
                }
                if s.started && *inv == Invocation::Init {
                    out.push(v(Condition::Alternation, "second init"));
                }
                if s.tried {
                    out.push(v(Condition::AfterTry, "invocation after tryC/tryA"));
                }
                if s.pending.is_some() {
                    out.push(v(Condition::Alternation, "invocation while another is pending"));
                }
                if matches!(inv, Invocation::TryCommit | Invocation::TryAbort) {
                    s.tried = true;
                }
                s.started = true;
                s.pending = Some(inv.clone());
            }
            EventKind::Res(res) => {
                if !s.started {
                    out.push(v(Condition::StartsWithInit, "first event is a response"));
                }
                match s.pending.take() {
                    None => out.push(v(Condition::Alternation, "response without invocation")),
                    Some(inv) if !matches(&inv, *res) => {
                        out.push(v(Condition::Alternation, "response does not match invocation"))
                    }
                    Some(_) => {}
                }
                if matches!(res, Response::Committed | Response::Aborted) {
                    s.finished = true;
                }
                s.started = true;
            }
        }
    }

    let mut by_process: BTreeMap<u32, Vec<TxnId>> = BTreeMap::new();
    for t in h.txns() {
        if let Some(p) = h.process_of(t) {
            by_process.entry(p).or_default().push(t);
        }
    }
    for txns in by_process.values() {
        for (i, &a) in txns.iter().enumerate() {
            for &b in &txns[i + 1..] {
                if !h.real_time_precedes(a, b) && !h.real_time_precedes(b, a) {
                    let (fb, _) = h.span(b).expect("present");
                    out.push(Violation {
                        condition: Condition::ProcessOverlap,
                        event_seq: h.events[fb].seq,
                        txn: b,
                        detail: format!("overlaps {a} on the same process"),
                    });
                }
            }
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{Event, HistoryBuilder, Value};

    const T1: TxnId = TxnId(1);
    const T2: TxnId = TxnId(2);

    fn conditions(h: &History) -> Vec<Condition> {
        validate_well_formed(h).err().unwrap_or_default().into_iter().map(|v| v.condition).collect()
    }

    #[test]
    fn empty_is_well_formed() {
        assert!(validate_well_formed(&History::default()).is_ok());
    }

    #[test]
    fn missing_init() {
        let h = History::new(vec![Event::inv(1, T1, Invocation::Read("x".into()))]);
        assert_eq!(conditions(&h), vec![Condition::StartsWithInit]);
    }

    #[test]
    fn after_completion_and_after_try() {
        let mut b = HistoryBuilder::new();
        b.init(T1).commit(T1).write(T1, "x");
        let c = conditions(&b.build());
        assert!(c.contains(&Condition::AfterCompletion));
        assert!(c.contains(&Condition::AfterTry));
    }

    #[test]
    fn mismatched_response() {
        let mut b = HistoryBuilder::new();
        b.init(T1).inv(T1, Invocation::Write("x".into(), Value::written(T1, 1)));
        b.res(T1, Response::Value(Value::Initial));
        assert_eq!(conditions(&b.build()), vec![Condition::Alternation]);
    }

    #[test]
    fn process_overlap() {
        let mut b = HistoryBuilder::new().process(T1, 0).process(T2, 0);
        b.init(T1).init(T2).commit(T1).commit(T2);
        assert_eq!(conditions(&b.build()), vec![Condition::ProcessOverlap]);
        let mut b = HistoryBuilder::new().process(T1, 0).process(T2, 0);
        b.init(T1).commit(T1).init(T2).commit(T2);
        assert!(validate_well_formed(&b.build()).is_ok());
    }

    #[test]
    fn seq_order() {
        let h = History::new(vec![
            Event::inv(2, T1, Invocation::Init),
            Event::res(2, T1, Response::Ok),
        ]);
        assert_eq!(conditions(&h), vec![Condition::SeqOrder]);
    }
}
