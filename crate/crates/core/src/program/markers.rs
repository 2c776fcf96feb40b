use std::collections::BTreeMap;

use super::{NodePath, OpShape, ProgramError, ProgramSpec};
use crate::history::{TxnId, VarId};

/// Static flags of one access node. Each flag holds over every path
/// continuation after the node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeFlags {
    pub var: VarId,
    pub last_write: bool,
    pub last_read: bool,
    pub last_access: bool,
    pub beta_last_write: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LastMarker {
    pub flags: BTreeMap<(TxnId, NodePath), NodeFlags>,
}

impl LastMarker {
    pub fn get(&self, t: TxnId, at: &NodePath) -> Option<&NodeFlags> {
        self.flags.get(&(t, at.clone()))
    }
}

pub fn mark_last_accesses(p: &ProgramSpec) -> Result<LastMarker, ProgramError> {
    let mut out = LastMarker::default();
    for (&t, prog) in &p.txns {
        for path in prog.paths()? {
            for (k, leaf) in path.iter().enumerate() {
                let Some(x) = leaf.op.var() else { continue };
                let rest = &path[k + 1..];
                let later_write = rest.iter().any(|l| l.op == OpShape::Write(x.clone()));
                let later_read = rest.iter().any(|l| l.op == OpShape::Read(x.clone()));
                let later_abort = rest.iter().any(|l| l.op == OpShape::TryAbort);
                let is_write = matches!(leaf.op, OpShape::Write(_));
                let here = NodeFlags {
                    var: x.clone(),
                    last_write: is_write && !later_write,
                    last_read: !is_write && !later_read,
                    last_access: !later_write && !later_read,
                    beta_last_write: is_write && !later_write && !later_abort,
                };
                out.flags
                    .entry((t, leaf.at.clone()))
                    .and_modify(|f| {
                        f.last_write &= here.last_write;
                        f.last_read &= here.last_read;
                        f.last_access &= here.last_access;
                        f.beta_last_write &= here.beta_last_write;
                    })
                    .or_insert(here);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{BranchCond, Node, TxnProgram};

    const T1: TxnId = TxnId(1);

    fn branch(a: Vec<Node>, b: Vec<Node>) -> Node {
        Node::Branch { cond: BranchCond::Nonzero, alts: vec![a, b] }
    }

    #[test]
    fn write_skipped_on_some_paths_is_not_last() {
        // write x; if ..: write x; read y
        let prog = TxnProgram::new(vec![
            Node::Write("x".into()),
            branch(vec![Node::Write("x".into())], vec![]),
            Node::Read("y".into()),
        ]);
        let m = mark_last_accesses(&ProgramSpec::new().txn(T1, prog)).unwrap();
        assert!(!m.get(T1, &vec![0]).unwrap().last_write);
        assert!(m.get(T1, &vec![1, 0, 0]).unwrap().last_write);
        assert!(m.get(T1, &vec![2]).unwrap().last_read);
    }

    #[test]
    fn straight_line_final_occurrence() {
        let prog = TxnProgram::new(vec![
            Node::Write("x".into()),
            Node::Read("x".into()),
            Node::Write("x".into()),
            Node::Read("x".into()),
        ]);
        let m = mark_last_accesses(&ProgramSpec::new().txn(T1, prog)).unwrap();
        let lw: Vec<bool> = (0..4).map(|i| m.get(T1, &vec![i]).unwrap().last_write).collect();
        assert_eq!(lw, vec![false, false, true, false]);
        let la: Vec<bool> = (0..4).map(|i| m.get(T1, &vec![i]).unwrap().last_access).collect();
        assert_eq!(la, vec![false, false, false, true]);
    }

    #[test]
    fn reachable_abort_clears_beta() {
        let prog = TxnProgram::new(vec![Node::Write("x".into()), branch(vec![Node::TryAbort], vec![])]);
        let m = mark_last_accesses(&ProgramSpec::new().txn(T1, prog)).unwrap();
        let f = m.get(T1, &vec![0]).unwrap();
        assert!(f.last_write && !f.beta_last_write);
    }
}
