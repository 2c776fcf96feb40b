use std::collections::BTreeMap;

use lopacity_core::checkers::{
    check_lu_opacity, check_opacity, check_serializable, classify, decided_map, detect_overwriting, luvis_candidates,
    witness_replays, Mode, Property,
};
use lopacity_core::history::{
    completions, is_legal_sequential, sequential_extensions, transaction_legal, validate_well_formed, vis, EventKind,
    History, Invocation, RealTimeOrder, Response, Selector, TxnId, Value, VarId,
};
use lopacity_core::program::{decided_vars, mark_last_accesses, OpShape, ProgramSpec};
use lopacity_core::random::{random_case, GenConfig};
use proptest::prelude::*;

fn small() -> GenConfig {
    GenConfig { txns: 1..=4, ops: 1..=3, ..Default::default() }
}

fn case(seed: u64) -> (ProgramSpec, History) {
    random_case(seed, &small())
}

/// A few completions, then a few sequential extensions of each.
fn sequentials(h: &History) -> Vec<(History, History)> {
    let comps = completions(h);
    let mut out = Vec::new();
    for c in (0..comps.total().min(3)).map(|i| comps.get(i)) {
        let ext = sequential_extensions(&c);
        for s in ext.iter().step_by(1 + ext.len() / 4) {
            out.push((c.clone(), s.clone()));
        }
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// The map-based interpreter: every read returns the value last written
/// to its variable, or the initial value.
fn naive_legal(s: &History) -> bool {
    let mut mem: BTreeMap<VarId, Value> = BTreeMap::new();
    let mut pending: BTreeMap<TxnId, Invocation> = BTreeMap::new();
    for e in &s.events {
        match &e.kind {
            EventKind::Inv(i) => {
                pending.insert(e.txn, i.clone());
            }
            EventKind::Res(r) => match (pending.remove(&e.txn), r) {
                (Some(Invocation::Write(x, v)), Response::Ok) => {
                    mem.insert(x, v);
                }
                (Some(Invocation::Read(x)), Response::Value(v)) => {
                    let cur = mem.get(&x).copied().unwrap_or(Value::Initial);
                    if !(cur == *v || cur.is_initial() && v.is_initial()) {
                        return false;
                    }
                }
                _ => {}
            },
        }
    }
    true
}

fn is_subsequence(small: &History, big: &History) -> bool {
    let mut it = big.events.iter();
    small.events.iter().all(|e| it.any(|f| f == e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn completions_extend_and_complete(seed in any::<u64>()) {
        let (_, h) = case(seed);
        let comps = completions(&h);
        for c in (0..comps.total().min(16)).map(|i| comps.get(i)) {
            prop_assert!(c.is_complete());
            prop_assert_eq!(validate_well_formed(&c), Ok(()));
            prop_assert_eq!(&c.events[..h.len()], &h.events[..]);
        }
    }

    #[test]
    fn extensions_match_brute_force(seed in any::<u64>()) {
        let (_, h) = random_case(seed, &GenConfig { txns: 1..=6, ops: 1..=2, ..Default::default() });
        let c = completions(&h).get(0);
        let txns = {
            let mut t = c.txns();
            t.sort();
            t
        };
        let count = permutations(txns.len())
            .into_iter()
            .filter(|p| (0..p.len()).all(|i| (i + 1..p.len()).all(|j| !c.real_time_precedes(txns[p[j]], txns[p[i]]))))
            .count();
        prop_assert_eq!(sequential_extensions(&c).len(), count);
    }

    #[test]
    fn vis_is_a_deterministic_subsequence(seed in any::<u64>()) {
        let (_, h) = case(seed);
        for (_, s) in sequentials(&h) {
            for t in s.txns() {
                let v = vis(&s, t);
                prop_assert!(is_subsequence(&v, &s));
                prop_assert_eq!(&v, &vis(&s, t));
                for u in v.txns() {
                    prop_assert!(u == t || s.is_committed(u) && s.real_time_precedes(u, t));
                }
            }
        }
    }

    #[test]
    fn legality_matches_naive_replay(seed in any::<u64>()) {
        let (_, h) = case(seed);
        for (_, s) in sequentials(&h).into_iter().filter(|(_, s)| s.len() <= 20) {
            if let Ok(legal) = is_legal_sequential(&s) {
                prop_assert_eq!(legal, naive_legal(&s), "{}", s);
            }
        }
    }

    #[test]
    fn single_variable_legality_is_prefix_closed(seed in any::<u64>()) {
        let (_, h) = case(seed);
        for (_, s) in sequentials(&h) {
            if is_legal_sequential(&s) != Ok(true) {
                continue;
            }
            for x in s.vars() {
                let sx = s.project(Selector::Var(&x));
                for k in 0..=sx.len() {
                    prop_assert!(naive_legal(&sx.prefix(k)), "{}", sx.prefix(k));
                }
            }
        }
    }

    #[test]
    fn last_write_markers_hold_on_every_path(seed in any::<u64>()) {
        let (spec, _) = case(seed);
        let marks = mark_last_accesses(&spec).unwrap();
        for (&t, prog) in &spec.txns {
            for path in prog.paths().unwrap() {
                for (k, leaf) in path.iter().enumerate() {
                    let Some(f) = marks.get(t, &leaf.at) else { continue };
                    prop_assert!(!f.beta_last_write || f.last_write);
                    if f.last_write {
                        prop_assert!(!path[k + 1..].iter().any(|l| l.op == OpShape::Write(f.var.clone())));
                    }
                }
            }
        }
    }

    #[test]
    fn straight_line_markers_are_final_occurrences(seed in any::<u64>()) {
        let (spec, _) = random_case(seed, &GenConfig { p_branch: 0.0, ..small() });
        let marks = mark_last_accesses(&spec).unwrap();
        for (&t, prog) in &spec.txns {
            let path = prog.paths().unwrap().remove(0);
            for (k, leaf) in path.iter().enumerate() {
                let OpShape::Write(x) = &leaf.op else { continue };
                let last = path[k + 1..].iter().all(|l| l.op != OpShape::Write(x.clone()));
                prop_assert_eq!(marks.get(t, &leaf.at).unwrap().last_write, last);
            }
        }
    }

    #[test]
    fn decided_is_monotone_in_prefixes(seed in any::<u64>()) {
        let (spec, h) = case(seed);
        let p = spec.compile().unwrap();
        for t in h.txns() {
            let mut before = decided_vars(&h.prefix(0), &p, t, false).unwrap();
            for k in 1..=h.len() {
                let now = decided_vars(&h.prefix(k), &p, t, false).unwrap();
                prop_assert!(before.is_subset(&now), "{} at {}", t, k);
                before = now;
            }
        }
    }

    #[test]
    fn lattice_laws(seed in any::<u64>()) {
        let (spec, h) = case(seed);
        let p = spec.compile().unwrap();
        let r = classify(&h, Some(&p)).unwrap();
        prop_assert!(r.lattice_violations().is_empty(), "{:?}\n{}", r.lattice_violations(), h);
        prop_assert!(!r.rigor_gap());
        if r.get(Property::LuOpaque) == Some(true) {
            prop_assert!(!detect_overwriting(&h));
        }
    }

    #[test]
    fn last_use_opacity_is_prefix_closed(seed in any::<u64>()) {
        let (spec, h) = case(seed);
        let p = spec.compile().unwrap();
        if check_lu_opacity(&h, &p, Mode::Full, false).unwrap().holds {
            for k in 0..=h.len() {
                prop_assert!(check_lu_opacity(&h.prefix(k), &p, Mode::Full, false).unwrap().holds);
            }
        }
    }

    #[test]
    fn legal_vis_has_a_legal_luvis(seed in any::<u64>()) {
        let (spec, h) = case(seed);
        let p = spec.compile().unwrap();
        let decided = decided_map(&h, &p, false).unwrap();
        for (c, s) in sequentials(&h) {
            let rt = RealTimeOrder::of(&c);
            for t in s.txns() {
                if transaction_legal(&s, t) == Ok(true) {
                    let any = luvis_candidates(&s, t, &decided, &rt)
                        .iter()
                        .any(|v| is_legal_sequential(v) == Ok(true));
                    prop_assert!(any);
                }
            }
        }
    }

    #[test]
    fn witnesses_replay(seed in any::<u64>()) {
        let (spec, h) = case(seed);
        let p = spec.compile().unwrap();
        let checks = [
            (Property::Serializable, check_serializable(&h)),
            (Property::FsOpaque, check_opacity(&h, Mode::FinalState)),
            (Property::FsLuOpaque, check_lu_opacity(&h, &p, Mode::FinalState, false).unwrap()),
            (Property::FsBetaLuOpaque, check_lu_opacity(&h, &p, Mode::FinalState, true).unwrap()),
        ];
        for (prop, v) in checks {
            prop_assert_eq!(v.holds, v.witness.is_some());
            if let Some(w) = v.witness {
                prop_assert!(witness_replays(&h, &w, prop, Some(&p)).unwrap(), "{:?} {}\n{}", prop, w, h);
            }
        }
    }
}
