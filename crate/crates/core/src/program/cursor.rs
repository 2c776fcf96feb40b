use super::{BranchCond, Node, OpShape};
use crate::history::Value;

/// Walks a transaction body one operation at a time. A branch takes its
/// first alternative when its condition holds for the value most recently
/// read by the transaction (initial when nothing was read yet), and the
/// second alternative, if any, otherwise.
#[derive(Clone, Debug)]
pub struct Cursor<'a> {
    stack: Vec<(&'a [Node], usize)>,
}

impl<'a> Cursor<'a> {
    pub fn new(body: &'a [Node]) -> Self {
        Cursor { stack: vec![(body, 0)] }
    }

    pub fn next_op(&mut self, last_read: Option<Value>) -> Option<OpShape> {
        loop {
            let (seq, i) = self.stack.last_mut()?;
            let Some(node) = seq.get(*i) else {
                self.stack.pop();
                continue;
            };
            *i += 1;
            match node {
                Node::Read(x) => return Some(OpShape::Read(x.clone())),
                Node::Write(x) => return Some(OpShape::Write(x.clone())),
                Node::TryCommit => return Some(OpShape::TryCommit),
                Node::TryAbort => return Some(OpShape::TryAbort),
                Node::Branch { cond, alts } => {
                    let zero = last_read.is_none_or(|v| v.is_initial());
                    let holds = match cond {
                        BranchCond::Nonzero => !zero,
                        BranchCond::Zero => zero,
                    };
                    if let Some(alt) = alts.get(if holds { 0 } else { 1 }) {
                        self.stack.push((alt, 0));
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::TxnId;
    use crate::program::dsl;

    fn ops(text: &str, read: Option<Value>) -> Vec<OpShape> {
        let p = dsl::parse(text).unwrap();
        let mut c = Cursor::new(&p.txns[&TxnId(1)].body);
        std::iter::from_fn(|| c.next_op(read)).collect()
    }

    #[test]
    fn branch_follows_last_read() {
        let text = "txn T1\n read x\n branch {\n  write x\n } or {\n  tryA\n }\n";
        let x = || "x".into();
        assert_eq!(ops(text, Some(Value::Initial)), vec![OpShape::Read(x()), OpShape::TryAbort]);
        assert_eq!(ops(text, Some(Value::written(TxnId(2), 1))), vec![OpShape::Read(x()), OpShape::Write(x())]);
        let zero = "txn T1\n branch zero {\n  write x\n }\n";
        assert_eq!(ops(zero, None), vec![OpShape::Write(x())]);
        assert_eq!(ops(zero, Some(Value::Int(3))), vec![]);
    }
}
