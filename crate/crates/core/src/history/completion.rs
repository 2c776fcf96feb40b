use super::{Event, History, Invocation, Response, TxnId, TxnStatus};

/// Lazy enumeration of the completions of a history.
///
/// Commit-pending transactions branch both ways. Completion `i` aborts the
/// `k`-th commit-pending transaction (in first-appearance order) iff bit `k`
/// of `i` is set, so index 0 commits every one of them.
#[derive(Clone, Debug)]
pub struct Completions<'a> {
    history: &'a History,
    pending: Vec<TxnId>,
    next: u64,
}

impl<'a> Completions<'a> {
    pub fn new(history: &'a History) -> Self {
        let pending = history
            .txns()
            .into_iter()
            .filter(|&t| history.status_unchecked(t) == TxnStatus::CommitPending)
            .collect();
        Completions { history, pending, next: 0 }
    }

    pub fn commit_pending(&self) -> &[TxnId] {
        &self.pending
    }

    pub fn total(&self) -> u64 {
        1u64 << self.pending.len()
    }

    pub fn get(&self, index: u64) -> History {
        let h = self.history;
        let mut out = h.clone();
        let mut seq = h.next_seq();
        let mut push = |out: &mut History, e: fn(u64, TxnId) -> Event, t| {
            out.events.push(e(seq, t));
            seq += 1;
        };
        for t in h.txns() {
            match h.status_unchecked(t) {
                TxnStatus::Committed | TxnStatus::Aborted => {}
                TxnStatus::CommitPending => {
                    let k = self.pending.iter().position(|&p| p == t).expect("listed");
                    if index >> k & 1 == 0 {
                        push(&mut out, |s, t| Event::res(s, t, Response::Committed), t);
                    } else {
                        push(&mut out, |s, t| Event::res(s, t, Response::Aborted), t);
                    }
                }
                TxnStatus::Live => {
                    let pending_op = h.operations(t).last().is_some_and(|op| op.res.is_none());
                    if !pending_op {
                        push(&mut out, |s, t| Event::inv(s, t, Invocation::TryCommit), t);
                    }
                    push(&mut out, |s, t| Event::res(s, t, Response::Aborted), t);
                }
            }
        }
        out
    }
}

impl Iterator for Completions<'_> {
    type Item = History;

    fn next(&mut self) -> Option<History> {
        if self.next >= self.total() {
            return None;
        }
        let c = self.get(self.next);
        self.next += 1;
        Some(c)
    }
}

pub fn completions(h: &History) -> Completions<'_> {
    Completions::new(h)
}
