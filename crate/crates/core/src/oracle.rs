//! Reference evaluator for differential testing. Deliberately naive: the
//! membership closure is recomputed by whole-directory fixpoint expansion
//! on every call, the effective entry list is rebuilt from the root every
//! time, and each mask bit is decided independently by the first matching
//! entry. No state is shared with the engine's caches, and the deny walk
//! is a different formulation of the same semantics — which is the point.

use std::collections::HashSet;

use crate::ace::{Ace, AceFlags, SecurityDescriptor};
use crate::eval::{EvalError, RightsRow};
use crate::mask::{AccessMask, ReportRight};
use crate::principals::{Directory, Sid};
use crate::snapshot::Snapshot;

/// Closure by repeated full-directory expansion, returning the rounds a
/// fixpoint took. Bounded by the number of groups.
pub fn oracle_closure(
    directory: &Directory,
    start: &Sid,
) -> Result<(HashSet<Sid>, usize), EvalError> {
    if !start.is_everyone() && !directory.contains(start) {
        return Err(EvalError::UnknownPrincipal(start.to_string()));
    }
    let mut closure: HashSet<Sid> = HashSet::new();
    closure.insert(start.clone());
    let mut rounds = 0;
    loop {
        let mut changed = false;
        for principal in directory.principals() {
            if closure.contains(&principal.sid) {
                continue;
            }
            if principal.members.iter().any(|m| closure.contains(m)) {
                closure.insert(principal.sid.clone());
                changed = true;
            }
        }
        if !changed {
            break;
        }
        rounds += 1;
    }
    closure.insert(Sid::everyone());
    Ok((closure, rounds))
}

fn copy_for_child(ace: &Ace) -> Option<Ace> {
    let flags = ace.flags;
    if !flags.object_inherit() && !flags.container_inherit() {
        return None;
    }
    let mut copy = ace.clone();
    copy.flags.insert(AceFlags::ID);
    copy.flags.remove(AceFlags::IO);
    if !flags.container_inherit() {
        copy.flags.insert(AceFlags::IO);
    }
    if flags.no_propagate() {
        copy.flags.remove(AceFlags::OI);
        copy.flags.remove(AceFlags::CI);
        copy.flags.remove(AceFlags::NP);
        if copy.flags.inherit_only() {
            return None;
        }
    }
    Some(copy)
}

fn rebuild_entries(snapshot: &Snapshot, folder: usize) -> (bool, Vec<Ace>) {
    let tree = snapshot.tree();
    let mut null_dacl = false;
    let mut current: Vec<Ace> = Vec::new();
    for id in tree.chain(folder) {
        let sd: &SecurityDescriptor = &tree.node(id).sd;
        let inherited: Vec<Ace> = current.iter().filter_map(copy_for_child).collect();
        if !sd.dacl.present {
            null_dacl = true;
            current = inherited;
            continue;
        }
        null_dacl = false;
        let mut own = sd.dacl.aces.clone();
        own.sort_by_key(|a| (a.flags.inherited(), !a.is_deny()));
        if sd.protected {
            current = own;
        } else {
            let split = own.iter().position(|a| a.flags.inherited()).unwrap_or(own.len());
            let mut merged: Vec<Ace> = own[..split].to_vec();
            merged.extend(inherited);
            merged.extend(own[split..].iter().cloned());
            current = merged;
        }
    }
    (null_dacl, current)
}

fn bit_allowed(closure: &HashSet<Sid>, entries: &[Ace], bit: AccessMask) -> bool {
    for ace in entries {
        if ace.flags.inherit_only() || !closure.contains(&ace.sid) {
            continue;
        }
        if ace.mask.intersects(bit) {
            return !ace.is_deny();
        }
    }
    false
}

/// Recomputes one (user, folder) row from scratch. Composite columns are
/// the conjunction of their single-bit decisions.
pub fn oracle_rights(snapshot: &Snapshot, user: &Sid, folder: &str) -> Result<RightsRow, EvalError> {
    let id = snapshot
        .tree()
        .find(folder)
        .ok_or_else(|| EvalError::UnknownPath(folder.to_owned()))?;
    let (closure, _) = oracle_closure(snapshot.directory(), user)?;
    let (null_dacl, entries) = rebuild_entries(snapshot, id);
    let mut values = [false; 19];
    for right in ReportRight::ALL {
        values[right.index()] = if null_dacl {
            true
        } else {
            ReportRight::decompose(right.mask())
                .into_iter()
                .all(|atomic| bit_allowed(&closure, &entries, atomic.mask()))
        };
    }
    Ok(RightsRow::from_values(
        user.clone(),
        snapshot.tree().node(id).path.clone(),
        values,
    ))
}
