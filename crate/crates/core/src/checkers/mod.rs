//! Witness-producing brute-force checkers and the early-release detectors.

mod database;
mod detectors;
mod luvis;
mod search;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::history::{validate_well_formed, History, TxnId, VarId, Violation};
use crate::program::{AlignmentError, LastWriteOracle};

pub use database::{check_aca, check_recoverable, check_rigorous, check_strict};
pub use detectors::{detect_aborting_release, detect_early_release, detect_overwriting};
pub use luvis::{decided_map, luvis_candidates, luvis_optional, luvis_with};
pub use search::PrefixGranularity;

pub(crate) use search::Criterion;
use search::{prefix_lengths, Frame};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Mode {
    FinalState,
    #[default]
    Full,
}

/// A completion choice, a sequential order and the optional LUVis members
/// chosen for each transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    /// Index into [`crate::history::completions`].
    pub completion: u64,
    /// Commit-pending transactions the completion aborts.
    pub aborted_pending: Vec<TxnId>,
    pub order: Vec<TxnId>,
    pub inclusions: BTreeMap<TxnId, Vec<TxnId>>,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let order: Vec<String> = self.order.iter().map(ToString::to_string).collect();
        write!(f, "order {}", order.join(" < "))?;
        if !self.aborted_pending.is_empty() {
            let a: Vec<String> = self.aborted_pending.iter().map(ToString::to_string).collect();
            write!(f, "; completion aborts {}", a.join(", "))?;
        }
        for (t, inc) in &self.inclusions {
            let i: Vec<String> = inc.iter().map(ToString::to_string).collect();
            write!(f, "; {t} sees {}", i.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub holds: bool,
    /// Witness for the whole history, when it satisfies the final-state condition.
    pub witness: Option<Witness>,
    /// Length of the shortest failing prefix (full mode only).
    pub failing_prefix: Option<usize>,
}

fn final_state(h: &History, criterion: Criterion, decisions: Option<(&dyn LastWriteOracle, bool)>) -> Result<Option<Witness>, AlignmentError> {
    Ok(Frame::build(h, decisions)?.search(criterion))
}

fn run(
    h: &History,
    criterion: Criterion,
    decisions: Option<(&dyn LastWriteOracle, bool)>,
    mode: Mode,
    granularity: PrefixGranularity,
) -> Result<Verdict, AlignmentError> {
    let witness = final_state(h, criterion, decisions)?;
    if witness.is_none() || mode == Mode::FinalState {
        let failing_prefix = (mode == Mode::Full && witness.is_none()).then(|| shortest_failing(h, criterion, decisions, granularity)).transpose()?.flatten();
        return Ok(Verdict { holds: witness.is_some(), witness, failing_prefix });
    }
    let failing_prefix = shortest_failing(h, criterion, decisions, granularity)?;
    Ok(Verdict { holds: failing_prefix.is_none(), witness, failing_prefix })
}

fn shortest_failing(
    h: &History,
    criterion: Criterion,
    decisions: Option<(&dyn LastWriteOracle, bool)>,
    granularity: PrefixGranularity,
) -> Result<Option<usize>, AlignmentError> {
    for k in prefix_lengths(h, granularity) {
        if final_state(&h.prefix(k), criterion, decisions)?.is_none() {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

pub fn check_serializable(h: &History) -> Verdict {
    let witness = Frame::build(h, None).expect("no oracle, no alignment").search(Criterion::Serializable);
    Verdict { holds: witness.is_some(), witness, failing_prefix: None }
}

pub fn check_opacity(h: &History, mode: Mode) -> Verdict {
    check_opacity_with(h, mode, PrefixGranularity::Event)
}

pub fn check_opacity_with(h: &History, mode: Mode, granularity: PrefixGranularity) -> Verdict {
    run(h, Criterion::Opacity, None, mode, granularity).expect("no oracle, no alignment")
}

pub fn check_lu_opacity(
    h: &History,
    oracle: &dyn LastWriteOracle,
    mode: Mode,
    beta: bool,
) -> Result<Verdict, AlignmentError> {
    check_lu_opacity_with(h, oracle, mode, beta, PrefixGranularity::Event)
}

pub fn check_lu_opacity_with(
    h: &History,
    oracle: &dyn LastWriteOracle,
    mode: Mode,
    beta: bool,
    granularity: PrefixGranularity,
) -> Result<Verdict, AlignmentError> {
    run(h, Criterion::LastUse, Some((oracle, beta)), mode, granularity)
}

/// Final-state last-use opacity of exactly `h`, without prefixes.
pub fn fs_lu_opaque(h: &History, oracle: &dyn LastWriteOracle, beta: bool) -> Result<bool, AlignmentError> {
    Ok(final_state(h, Criterion::LastUse, Some((oracle, beta)))?.is_some())
}

/// Re-checks a witness of `check_serializable`, `check_opacity` or
/// `check_lu_opacity` (selected by `property`) through the history-level
/// primitives.
pub fn witness_replays(
    h: &History,
    w: &Witness,
    property: Property,
    oracle: Option<&dyn LastWriteOracle>,
) -> Result<bool, AlignmentError> {
    let (criterion, beta) = match property {
        Property::Serializable => (Criterion::Serializable, false),
        Property::FsOpaque | Property::Opaque => (Criterion::Opacity, false),
        Property::FsLuOpaque | Property::LuOpaque => (Criterion::LastUse, false),
        Property::FsBetaLuOpaque | Property::BetaLuOpaque => (Criterion::LastUse, true),
        _ => return Ok(false),
    };
    let decided = match oracle {
        Some(o) if criterion == Criterion::LastUse => decided_map(h, o, beta)?,
        _ => BTreeMap::new(),
    };
    Ok(luvis::replay_witness(h, w, criterion, &decided))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Property {
    Serializable,
    FsOpaque,
    Opaque,
    FsLuOpaque,
    LuOpaque,
    FsBetaLuOpaque,
    BetaLuOpaque,
    Recoverable,
    Aca,
    Strict,
    Rigorous,
}

impl Property {
    pub const ALL: [Property; 11] = [
        Property::Serializable,
        Property::FsOpaque,
        Property::Opaque,
        Property::FsLuOpaque,
        Property::LuOpaque,
        Property::FsBetaLuOpaque,
        Property::BetaLuOpaque,
        Property::Recoverable,
        Property::Aca,
        Property::Strict,
        Property::Rigorous,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Serializable => "serializable",
            Property::FsOpaque => "fs-opaque",
            Property::Opaque => "opaque",
            Property::FsLuOpaque => "fs-lopaque",
            Property::LuOpaque => "lopaque",
            Property::FsBetaLuOpaque => "fs-beta-lopaque",
            Property::BetaLuOpaque => "beta-lopaque",
            Property::Recoverable => "recoverable",
            Property::Aca => "aca",
            Property::Strict => "strict",
            Property::Rigorous => "rigorous",
        }
    }

    pub fn from_name(s: &str) -> Option<Property> {
        let s = if s == "lopacity" { "lopaque" } else { s };
        Property::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn needs_program(self) -> bool {
        matches!(
            self,
            Property::FsLuOpaque | Property::LuOpaque | Property::FsBetaLuOpaque | Property::BetaLuOpaque
        )
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Verdicts of every property (`None` when not computed or not
/// applicable), the detectors, and the last-use opacity witness.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PropertyReport {
    pub verdicts: BTreeMap<Property, Option<bool>>,
    pub early_release: BTreeSet<(TxnId, VarId)>,
    pub overwriting: bool,
    pub aborting_release: bool,
    pub witness: Option<Witness>,
    pub failing_prefix: Option<usize>,
    pub notes: Vec<String>,
}

impl PropertyReport {
    pub fn get(&self, p: Property) -> Option<bool> {
        self.verdicts.get(&p).copied().flatten()
    }

    /// Implications between the computed verdicts that do not hold.
    ///
    /// `rigorous ⇒ lopaque` only holds when reads return the latest
    /// effective write, so it is listed separately in [`Self::rigor_gap`].
    pub fn lattice_violations(&self) -> Vec<String> {
        use Property::*;
        let laws = [
            (Opaque, LuOpaque),
            (FsOpaque, FsLuOpaque),
            (LuOpaque, Serializable),
            (FsLuOpaque, Serializable),
            (LuOpaque, Recoverable),
            (BetaLuOpaque, LuOpaque),
            (FsBetaLuOpaque, FsLuOpaque),
            (Opaque, FsOpaque),
            (LuOpaque, FsLuOpaque),
            (BetaLuOpaque, FsBetaLuOpaque),
            (Rigorous, Strict),
        ];
        let mut out: Vec<String> = laws
            .iter()
            .filter(|(a, b)| self.get(*a) == Some(true) && self.get(*b) == Some(false))
            .map(|(a, b)| format!("{a} but not {b}"))
            .collect();
        if self.get(LuOpaque) == Some(true) && self.overwriting {
            out.push("lopaque but overwriting".into());
        }
        out
    }

    pub fn rigor_gap(&self) -> bool {
        self.get(Property::Rigorous) == Some(true) && self.get(Property::LuOpaque) == Some(false)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("history is not well-formed: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    IllFormed(Vec<Violation>),
}

#[derive(Clone, Copy, Debug)]
pub struct ClassifyOptions {
    pub granularity: PrefixGranularity,
    /// Restrict to these properties; `None` computes all of them.
    pub only: Option<&'static [Property]>,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { granularity: PrefixGranularity::Event, only: None }
    }
}

pub fn classify(h: &History, oracle: Option<&dyn LastWriteOracle>) -> Result<PropertyReport, ClassifyError> {
    classify_with(h, oracle, ClassifyOptions::default())
}

/// Runs every checker and detector. Alignment failures leave the
/// program-dependent verdicts at `None` and add a note.
pub fn classify_with(
    h: &History,
    oracle: Option<&dyn LastWriteOracle>,
    opts: ClassifyOptions,
) -> Result<PropertyReport, ClassifyError> {
    validate_well_formed(h).map_err(ClassifyError::IllFormed)?;
    let want = |p: Property| opts.only.is_none_or(|o| o.contains(&p));
    let mut r = PropertyReport::default();
    let set = |r: &mut PropertyReport, p, v| {
        r.verdicts.insert(p, v);
    };
    if want(Property::Serializable) {
        set(&mut r, Property::Serializable, Some(check_serializable(h).holds));
    }
    if want(Property::FsOpaque) {
        set(&mut r, Property::FsOpaque, Some(check_opacity(h, Mode::FinalState).holds));
    }
    if want(Property::Opaque) {
        set(&mut r, Property::Opaque, Some(check_opacity_with(h, Mode::Full, opts.granularity).holds));
    }
    for (beta, fs, full) in [
        (false, Property::FsLuOpaque, Property::LuOpaque),
        (true, Property::FsBetaLuOpaque, Property::BetaLuOpaque),
    ] {
        if !want(fs) && !want(full) {
            continue;
        }
        let Some(oracle) = oracle else {
            r.notes.push(format!("{full}: no program or annotations"));
            set(&mut r, fs, None);
            set(&mut r, full, None);
            continue;
        };
        match check_lu_opacity_with(h, oracle, Mode::Full, beta, opts.granularity) {
            Ok(v) => {
                if want(fs) {
                    set(&mut r, fs, Some(v.witness.is_some()));
                }
                if want(full) {
                    set(&mut r, full, Some(v.holds));
                }
                if !beta {
                    r.witness = v.witness;
                    r.failing_prefix = v.failing_prefix;
                }
            }
            Err(e) => {
                r.notes.push(format!("{full}: {e}"));
                set(&mut r, fs, None);
                set(&mut r, full, None);
            }
        }
    }
    if want(Property::Recoverable) {
        set(&mut r, Property::Recoverable, Some(check_recoverable(h)));
    }
    if want(Property::Aca) {
        set(&mut r, Property::Aca, Some(check_aca(h)));
    }
    if want(Property::Strict) {
        set(&mut r, Property::Strict, Some(check_strict(h)));
    }
    if want(Property::Rigorous) {
        set(&mut r, Property::Rigorous, Some(check_rigorous(h)));
    }
    r.early_release = detect_early_release(h);
    r.overwriting = detect_overwriting(h);
    r.aborting_release = detect_aborting_release(h);
    debug_assert!(
        oracle.is_none() || r.lattice_violations().is_empty(),
        "lattice violated: {:?}\n{h}",
        r.lattice_violations()
    );
    Ok(r)
}
