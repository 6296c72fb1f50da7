//! The inverse-view engine: ordered access checks, per-user effective
//! rights rows, and the user × folder × right matrix.
//!
//! An access check walks the effective DACL in stored order with the
//! requested bits as a shrinking set: a matching deny that intersects the
//! remaining bits fails the check, a matching allow clears its bits, and a
//! drained set succeeds. Inherit-only entries and entries whose SID is not
//! in the caller's closure are skipped. A null DACL grants everything; an
//! exhausted list denies the rest.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use thiserror::Error;

use crate::ace::{Ace, AceType, Dacl};
use crate::inherit::{propagate_step, EffectiveDacl};
use crate::mask::{AccessMask, ReportRight};
use crate::principals::{PrincipalError, Sid};
use crate::snapshot::Snapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Allowed,
    Denied,
}

/// Which ACE ended a denied check, for diagnostics. Implicit end-of-list
/// denials carry no entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecidingAce {
    pub index: usize,
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessDecision {
    pub outcome: Outcome,
    pub deciding: Option<DecidingAce>,
}

impl AccessDecision {
    pub fn is_allowed(&self) -> bool {
        self.outcome == Outcome::Allowed
    }

    fn allowed() -> Self {
        AccessDecision { outcome: Outcome::Allowed, deciding: None }
    }

    fn denied_by(index: usize, source: Option<&str>) -> Self {
        AccessDecision {
            outcome: Outcome::Denied,
            deciding: Some(DecidingAce { index, source: source.map(str::to_owned) }),
        }
    }

    fn denied_implicit() -> Self {
        AccessDecision { outcome: Outcome::Denied, deciding: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("requested mask is empty")]
    EmptyRequest,
    #[error("empty user, folder or right selection")]
    EmptySelection,
    #[error("unknown principal: {0}")]
    UnknownPrincipal(String),
    #[error("unknown folder path: {0}")]
    UnknownPath(String),
}

impl From<PrincipalError> for EvalError {
    fn from(err: PrincipalError) -> Self {
        match err {
            PrincipalError::UnknownPrincipal(key) => EvalError::UnknownPrincipal(key),
            PrincipalError::AmbiguousName { name, .. } => EvalError::UnknownPrincipal(name),
        }
    }
}

fn walk<'a>(
    closure: &HashSet<Sid>,
    null_dacl: bool,
    entries: impl Iterator<Item = (&'a Ace, Option<&'a str>)>,
    requested: AccessMask,
    visits: &mut u64,
) -> Result<AccessDecision, EvalError> {
    if requested.is_empty() {
        return Err(EvalError::EmptyRequest);
    }
    if null_dacl {
        return Ok(AccessDecision::allowed());
    }
    let mut remaining = requested;
    for (index, (ace, source)) in entries.enumerate() {
        *visits += 1;
        if ace.flags.inherit_only() {
            continue;
        }
        if !closure.contains(&ace.sid) {
            continue;
        }
        match ace.ace_type {
            AceType::Deny => {
                if ace.mask.intersects(remaining) {
                    return Ok(AccessDecision::denied_by(index, source));
                }
            }
            AceType::Allow => {
                remaining.remove(ace.mask);
                if remaining.is_empty() {
                    return Ok(AccessDecision::allowed());
                }
            }
        }
    }
    Ok(AccessDecision::denied_implicit())
}

/// Ordered access check against a plain DACL.
pub fn access_check(
    closure: &HashSet<Sid>,
    dacl: &Dacl,
    requested: AccessMask,
) -> Result<AccessDecision, EvalError> {
    let mut visits = 0;
    walk(closure, !dacl.present, dacl.aces.iter().map(|a| (a, None)), requested, &mut visits)
}

/// Ordered access check against a folder's effective DACL.
pub fn access_check_effective(
    closure: &HashSet<Sid>,
    effective: &EffectiveDacl,
    requested: AccessMask,
) -> Result<AccessDecision, EvalError> {
    let mut visits = 0;
    walk(
        closure,
        effective.null_dacl,
        effective.aces.iter().map(|e| (&e.ace, Some(e.source.as_str()))),
        requested,
        &mut visits,
    )
}

/// One (user, folder) row holding all nineteen report rights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RightsRow {
    pub user: Sid,
    pub folder: String,
    values: [bool; 19],
}

impl RightsRow {
    pub fn from_values(user: Sid, folder: String, values: [bool; 19]) -> Self {
        RightsRow { user, folder, values }
    }

    pub fn get(&self, right: ReportRight) -> bool {
        self.values[right.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ReportRight, bool)> + '_ {
        ReportRight::ALL.into_iter().map(|r| (r, self.values[r.index()]))
    }

    /// Every composite column must equal the conjunction of the atomic
    /// columns its mask decomposes into.
    pub fn composites_consistent(&self) -> bool {
        ReportRight::ALL.into_iter().filter(|r| r.is_composite()).all(|composite| {
            let conjunction = ReportRight::decompose(composite.mask())
                .into_iter()
                .all(|atomic| self.get(atomic));
            self.get(composite) == conjunction
        })
    }
}

/// Rows ordered by user input order, then folder path ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RightsMatrix {
    pub rows: Vec<RightsRow>,
    pub selected: Vec<ReportRight>,
}

/// Cost counters for the caching contract: closures and effective DACLs
/// are computed once each, and checks visit O(users × folders × ACEs)
/// entries overall.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalStats {
    pub closures_computed: u64,
    pub dacls_computed: u64,
    pub ace_visits: u64,
}

/// Evaluation session over one immutable snapshot, with write-once caches
/// for membership closures and effective DACLs.
pub struct Engine<'s> {
    snapshot: &'s Snapshot,
    closures: HashMap<Sid, Rc<HashSet<Sid>>>,
    dacls: Vec<Option<Rc<EffectiveDacl>>>,
    stats: EvalStats,
}

impl<'s> Engine<'s> {
    pub fn new(snapshot: &'s Snapshot) -> Self {
        Engine {
            snapshot,
            closures: HashMap::new(),
            dacls: vec![None; snapshot.tree().len()],
            stats: EvalStats::default(),
        }
    }

    pub fn stats(&self) -> EvalStats {
        self.stats
    }

    pub fn closure(&mut self, user: &Sid) -> Result<Rc<HashSet<Sid>>, EvalError> {
        if let Some(cached) = self.closures.get(user) {
            return Ok(cached.clone());
        }
        let closure = Rc::new(self.snapshot.directory().membership_closure(user)?);
        self.stats.closures_computed += 1;
        self.closures.insert(user.clone(), closure.clone());
        Ok(closure)
    }

    /// Effective DACL of a folder node, computing and memoizing the
    /// ancestor chain on first use.
    pub fn effective(&mut self, folder: usize) -> Rc<EffectiveDacl> {
        if let Some(cached) = &self.dacls[folder] {
            return cached.clone();
        }
        let tree = self.snapshot.tree();
        let mut current: Option<Rc<EffectiveDacl>> = None;
        for id in tree.chain(folder) {
            if let Some(cached) = &self.dacls[id] {
                current = Some(cached.clone());
                continue;
            }
            let parent = current.unwrap_or_else(|| Rc::new(EffectiveDacl::empty()));
            let node = tree.node(id);
            let eff = Rc::new(propagate_step(&parent, &node.sd, &node.path, node.depth));
            self.stats.dacls_computed += 1;
            self.dacls[id] = Some(eff.clone());
            current = Some(eff);
        }
        current.expect("chain is never empty")
    }

    fn row(&mut self, user: &Sid, folder: usize) -> Result<RightsRow, EvalError> {
        let closure = self.closure(user)?;
        let effective = self.effective(folder);
        let mut values = [false; 19];
        for right in ReportRight::ALL {
            let decision = walk(
                &closure,
                effective.null_dacl,
                effective.aces.iter().map(|e| (&e.ace, Some(e.source.as_str()))),
                right.mask(),
                &mut self.stats.ace_visits,
            )?;
            values[right.index()] = decision.is_allowed();
        }
        let row = RightsRow {
            user: user.clone(),
            folder: self.snapshot.tree().node(folder).path.clone(),
            values,
        };
        debug_assert!(row.composites_consistent(), "composite columns out of sync");
        Ok(row)
    }

    pub fn effective_rights(&mut self, user: &Sid, folder: &str) -> Result<RightsRow, EvalError> {
        let id = self
            .snapshot
            .tree()
            .find(folder)
            .ok_or_else(|| EvalError::UnknownPath(folder.to_owned()))?;
        self.row(user, id)
    }

    /// One row per (user, folder), users in input order, folders in
    /// ascending path order. Duplicate inputs collapse.
    pub fn build_matrix(
        &mut self,
        users: &[Sid],
        folders: &[String],
        rights: &[ReportRight],
    ) -> Result<RightsMatrix, EvalError> {
        if users.is_empty() || folders.is_empty() || rights.is_empty() {
            return Err(EvalError::EmptySelection);
        }
        let mut unique_users: Vec<Sid> = Vec::new();
        for user in users {
            if !unique_users.contains(user) {
                unique_users.push(user.clone());
            }
            if !self.snapshot.directory().contains(user) && !user.is_everyone() {
                return Err(EvalError::UnknownPrincipal(user.to_string()));
            }
        }
        let mut folder_ids: Vec<usize> = Vec::new();
        for path in folders {
            let id = self
                .snapshot
                .tree()
                .find(path)
                .ok_or_else(|| EvalError::UnknownPath(path.clone()))?;
            if !folder_ids.contains(&id) {
                folder_ids.push(id);
            }
        }
        folder_ids.sort_by_key(|&id| self.snapshot.tree().node(id).path.to_lowercase());
        let mut selected: Vec<ReportRight> = Vec::new();
        for right in ReportRight::ALL {
            if rights.contains(&right) {
                selected.push(right);
            }
        }
        let mut rows = Vec::with_capacity(unique_users.len() * folder_ids.len());
        for user in &unique_users {
            for &folder in &folder_ids {
                rows.push(self.row(user, folder)?);
            }
        }
        Ok(RightsMatrix { rows, selected })
    }
}

/// Convenience wrapper computing a single row with a throwaway engine.
pub fn effective_rights(
    snapshot: &Snapshot,
    user: &Sid,
    folder: &str,
) -> Result<RightsRow, EvalError> {
    Engine::new(snapshot).effective_rights(user, folder)
}

/// Convenience wrapper building a matrix with a throwaway engine.
pub fn build_matrix(
    snapshot: &Snapshot,
    users: &[Sid],
    folders: &[String],
    rights: &[ReportRight],
) -> Result<RightsMatrix, EvalError> {
    Engine::new(snapshot).build_matrix(users, folders, rights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ace::AceFlags;
    use crate::inherit::EffectiveAce;

    fn sid(n: u32) -> Sid {
        Sid::parse(&format!("S-1-5-21-1-2-3-{n}")).unwrap()
    }

    fn closure_of(sids: &[Sid]) -> HashSet<Sid> {
        sids.iter().cloned().collect()
    }

    #[test]
    fn empty_present_dacl_denies() {
        let dacl = Dacl::present(vec![]);
        let closure = closure_of(&[sid(1), Sid::everyone()]);
        let decision = access_check(&closure, &dacl, AccessMask::READ).unwrap();
        assert_eq!(decision.outcome, Outcome::Denied);
        assert!(decision.deciding.is_none());
    }

    #[test]
    fn null_dacl_allows() {
        let dacl = Dacl::null();
        let closure = closure_of(&[sid(1)]);
        let decision = access_check(&closure, &dacl, AccessMask::FULL_CONTROL).unwrap();
        assert!(decision.is_allowed());
    }

    #[test]
    fn full_grant_allows_full_request() {
        let dacl = Dacl::present(vec![Ace::allow(
            sid(1),
            AccessMask::FULL_CONTROL,
            AceFlags::empty(),
        )]);
        let closure = closure_of(&[sid(1)]);
        let decision = access_check(&closure, &dacl, AccessMask::FULL_CONTROL).unwrap();
        assert!(decision.is_allowed());
    }

    #[test]
    fn empty_request_is_an_error() {
        let dacl = Dacl::null();
        let closure = closure_of(&[sid(1)]);
        assert_eq!(
            access_check(&closure, &dacl, AccessMask::EMPTY),
            Err(EvalError::EmptyRequest)
        );
    }

    #[test]
    fn deny_records_the_deciding_entry() {
        let dacl = Dacl::present(vec![
            Ace::allow(sid(2), AccessMask::READ, AceFlags::empty()),
            Ace::deny(sid(1), AccessMask::READ, AceFlags::empty()),
        ]);
        let closure = closure_of(&[sid(1)]);
        let decision = access_check(&closure, &dacl, AccessMask::READ).unwrap();
        assert_eq!(decision.outcome, Outcome::Denied);
        assert_eq!(decision.deciding.unwrap().index, 1);
    }

    #[test]
    fn earlier_allow_immunizes_bits_against_later_deny() {
        let dacl = Dacl::present(vec![
            Ace::allow(sid(1), AccessMask::READ, AceFlags::empty()),
            Ace::deny(sid(1), AccessMask::READ, AceFlags::empty()),
        ]);
        let closure = closure_of(&[sid(1)]);
        let decision = access_check(&closure, &dacl, AccessMask::READ).unwrap();
        assert!(decision.is_allowed());
    }

    #[test]
    fn inherit_only_entries_are_skipped() {
        let io = AceFlags::empty().with(AceFlags::OI).with(AceFlags::IO);
        let dacl = Dacl::present(vec![Ace::deny(sid(1), AccessMask::READ, io)]);
        let closure = closure_of(&[sid(1)]);
        let decision = access_check(&closure, &dacl, AccessMask::READ).unwrap();
        // the deny is inert, so the list is effectively empty
        assert_eq!(decision.outcome, Outcome::Denied);
        assert!(decision.deciding.is_none());
    }

    #[test]
    fn non_matching_sids_are_skipped() {
        let dacl = Dacl::present(vec![
            Ace::deny(sid(9), AccessMask::FULL_CONTROL, AceFlags::empty()),
            Ace::allow(sid(1), AccessMask::READ, AceFlags::empty()),
        ]);
        let closure = closure_of(&[sid(1)]);
        assert!(access_check(&closure, &dacl, AccessMask::READ).unwrap().is_allowed());
    }

    /// The experiment's root DACL, as seen from a member of the denied
    /// group: Synchronize is granted through the Everyone entry because the
    /// read deny does not cover it.
    #[test]
    fn synchronize_is_allowed_past_the_read_deny() {
        let group = sid(2001);
        let user = sid(1102);
        let guess = sid(1107);
        let oici = AceFlags::empty().with(AceFlags::OI).with(AceFlags::CI).with(AceFlags::ID);
        let entries = vec![
            Ace::deny(group.clone(), AccessMask::READ, oici),
            Ace::deny(sid(1103), AccessMask::READ, oici),
            Ace::allow(Sid::everyone(), AccessMask::from_bits(0x1200A9).unwrap(), oici),
            Ace::allow(guess, AccessMask::FULL_CONTROL, oici),
            Ace::allow(group.clone(), AccessMask::WRITE, oici),
        ];
        let effective = EffectiveDacl {
            null_dacl: false,
            aces: entries
                .into_iter()
                .map(|ace| EffectiveAce { ace, source: "C:/Library".into(), source_depth: 0 })
                .collect(),
        };
        let closure = closure_of(&[user, group, Sid::everyone()]);
        let decision =
            access_check_effective(&closure, &effective, AccessMask::SYNCHRONIZE).unwrap();
        assert!(decision.is_allowed());
        // while the read composite is denied by the first entry
        let read = access_check_effective(&closure, &effective, AccessMask::READ).unwrap();
        assert_eq!(read.outcome, Outcome::Denied);
        assert_eq!(read.deciding.unwrap().index, 0);
    }
}
