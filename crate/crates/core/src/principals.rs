//! Security principals: SIDs, users, nested groups and the membership
//! closure used to match a user against ACEs.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Textual SID of the implicit `Everyone` group.
pub const EVERYONE_SID: &str = "S-1-1-0";

/// Well-known SIDs understood without a directory entry.
const WELL_KNOWN: &[&str] = &[
    EVERYONE_SID,
    "S-1-5-11",     // Authenticated Users
    "S-1-5-18",     // Local System
    "S-1-5-32-544", // Builtin Administrators
];

/// A security identifier in canonical textual form, e.g.
/// `S-1-5-21-1-2-3-1102`.
///
/// Equality is exact textual equality; parsing rejects non-canonical
/// spellings (leading zeros, missing components), so two equal SIDs always
/// compare equal as strings.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Sid(String);

impl Sid {
    pub fn parse(text: &str) -> Result<Self, SidError> {
        let rest = text
            .strip_prefix("S-1-")
            .ok_or_else(|| SidError::new(text, "must begin with \"S-1-\""))?;
        let parts: Vec<&str> = rest.split('-').collect();
        if parts.len() < 2 {
            return Err(SidError::new(text, "expected an authority and at least one sub-authority"));
        }
        for part in &parts {
            if part.is_empty() {
                return Err(SidError::new(text, "empty component"));
            }
            if !part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(SidError::new(text, "components must be decimal digits"));
            }
            if part.len() > 1 && part.starts_with('0') {
                return Err(SidError::new(text, "leading zeros are not canonical"));
            }
            part.parse::<u64>()
                .map_err(|_| SidError::new(text, "component out of range"))?;
        }
        Ok(Sid(text.to_owned()))
    }

    /// The implicit `Everyone` group SID.
    pub fn everyone() -> Self {
        Sid(EVERYONE_SID.to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_everyone(&self) -> bool {
        self.0 == EVERYONE_SID
    }

    pub fn is_well_known(&self) -> bool {
        WELL_KNOWN.contains(&self.0.as_str())
    }

    /// Synthetic SIDs under the NULL authority mark accounts that an import
    /// could not resolve. They are valid in snapshots but never match any
    /// membership closure.
    pub fn is_unresolved_marker(&self) -> bool {
        self.0.starts_with("S-1-0-")
    }
}

impl fmt::Display for Sid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Sid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sid({})", self.0)
    }
}

impl TryFrom<String> for Sid {
    type Error = SidError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Sid::parse(&value)
    }
}

impl From<Sid> for String {
    fn from(sid: Sid) -> String {
        sid.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed SID {text:?}: {reason}")]
pub struct SidError {
    pub text: String,
    pub reason: String,
}

impl SidError {
    fn new(text: &str, reason: &str) -> Self {
        SidError { text: text.to_owned(), reason: reason.to_owned() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrincipalKind {
    User,
    Group,
}

/// A user or group. Groups carry their direct member SIDs; users have an
/// empty member list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Principal {
    pub sid: Sid,
    pub name: String,
    pub kind: PrincipalKind,
    pub members: Vec<Sid>,
}

impl Principal {
    pub fn user(sid: Sid, name: &str) -> Self {
        Principal { sid, name: name.to_owned(), kind: PrincipalKind::User, members: Vec::new() }
    }

    pub fn group(sid: Sid, name: &str, members: Vec<Sid>) -> Self {
        Principal { sid, name: name.to_owned(), kind: PrincipalKind::Group, members }
    }

    /// The name without its `DOMAIN\` prefix.
    pub fn leaf_name(&self) -> &str {
        match self.name.rsplit_once('\\') {
            Some((_, leaf)) => leaf,
            None => &self.name,
        }
    }
}

/// Immutable store of principals with name and reverse-membership indexes.
///
/// `Everyone` is implicit: it is never stored but always resolvable, and it
/// is a member of every closure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Directory {
    domain: String,
    principals: BTreeMap<Sid, Principal>,
    by_name: HashMap<String, Sid>,
    member_of: HashMap<Sid, Vec<Sid>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DirectoryError {
    #[error("duplicate principal SID {0}")]
    DuplicateSid(Sid),
    #[error("principal {0} stores the implicit Everyone SID")]
    ReservedEveryone(String),
    #[error("user {0} must not carry a member list")]
    MembersOnUser(String),
}

/// Structural defects reported by [`Directory::validate`]. Defects are data,
/// not failures: a directory holding them still answers lookups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DirectoryDefect {
    DanglingMember { group: Sid, member: Sid },
    DuplicateName { name: String, sids: Vec<Sid> },
    MalformedSid { text: String, reason: String },
}

impl fmt::Display for DirectoryDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirectoryDefect::DanglingMember { group, member } => {
                write!(f, "group {group} lists unknown member {member}")
            }
            DirectoryDefect::DuplicateName { name, sids } => {
                write!(f, "name {name:?} is shared by {} principals", sids.len())
            }
            DirectoryDefect::MalformedSid { text, reason } => {
                write!(f, "malformed SID {text:?}: {reason}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrincipalError {
    #[error("unknown principal: {0}")]
    UnknownPrincipal(String),
    #[error("ambiguous name {name:?} matches {} principals", .candidates.len())]
    AmbiguousName { name: String, candidates: Vec<Sid> },
}

impl Directory {
    pub fn new(domain: &str, principals: Vec<Principal>) -> Result<Self, DirectoryError> {
        let mut map = BTreeMap::new();
        let mut by_name = HashMap::new();
        let mut member_of: HashMap<Sid, Vec<Sid>> = HashMap::new();
        for p in principals {
            if p.sid.is_everyone() {
                return Err(DirectoryError::ReservedEveryone(p.name));
            }
            if p.kind == PrincipalKind::User && !p.members.is_empty() {
                return Err(DirectoryError::MembersOnUser(p.name));
            }
            if map.contains_key(&p.sid) {
                return Err(DirectoryError::DuplicateSid(p.sid));
            }
            for member in &p.members {
                member_of.entry(member.clone()).or_default().push(p.sid.clone());
            }
            // First binding wins on name collisions; validate() reports them.
            by_name.entry(p.name.to_lowercase()).or_insert_with(|| p.sid.clone());
            map.insert(p.sid.clone(), p);
        }
        Ok(Directory { domain: domain.to_owned(), principals: map, by_name, member_of })
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn principals(&self) -> impl Iterator<Item = &Principal> {
        self.principals.values()
    }

    pub fn len(&self) -> usize {
        self.principals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.principals.is_empty()
    }

    pub fn get(&self, sid: &Sid) -> Option<&Principal> {
        self.principals.get(sid)
    }

    pub fn contains(&self, sid: &Sid) -> bool {
        self.principals.contains_key(sid)
    }

    fn everyone_principal() -> Principal {
        Principal::group(Sid::everyone(), "Everyone", Vec::new())
    }

    /// Looks a principal up by SID string, `DOMAIN\name` or bare name.
    ///
    /// SID lookup is case-sensitive, name lookup is not. Bare names are
    /// first tried under the directory's default domain and then matched
    /// against the leaf of every stored name.
    pub fn resolve(&self, key: &str) -> Result<Principal, PrincipalError> {
        if key.starts_with("S-1-") {
            let sid = Sid::parse(key)
                .map_err(|_| PrincipalError::UnknownPrincipal(key.to_owned()))?;
            if sid.is_everyone() {
                return Ok(Self::everyone_principal());
            }
            return self
                .principals
                .get(&sid)
                .cloned()
                .ok_or_else(|| PrincipalError::UnknownPrincipal(key.to_owned()));
        }
        let lower = key.to_lowercase();
        if lower == "everyone" {
            return Ok(Self::everyone_principal());
        }
        if lower.contains('\\') {
            return self
                .by_name
                .get(&lower)
                .and_then(|sid| self.principals.get(sid))
                .cloned()
                .ok_or_else(|| PrincipalError::UnknownPrincipal(key.to_owned()));
        }
        // Bare name: default domain first, then any-domain leaf match.
        let qualified = format!("{}\\{}", self.domain.to_lowercase(), lower);
        if let Some(sid) = self.by_name.get(&qualified) {
            return Ok(self.principals[sid].clone());
        }
        let candidates: Vec<Sid> = self
            .principals
            .values()
            .filter(|p| p.leaf_name().to_lowercase() == lower)
            .map(|p| p.sid.clone())
            .collect();
        match candidates.len() {
            0 => Err(PrincipalError::UnknownPrincipal(key.to_owned())),
            1 => Ok(self.principals[&candidates[0]].clone()),
            _ => Err(PrincipalError::AmbiguousName { name: key.to_owned(), candidates }),
        }
    }

    /// The SIDs an access check matches for `start`: the principal itself,
    /// every group reachable through nested membership, and `Everyone`.
    ///
    /// Membership cycles terminate via the visited set. The spec only needs
    /// closures of users, but group closures are well-defined and accepted.
    pub fn membership_closure(&self, start: &Sid) -> Result<HashSet<Sid>, PrincipalError> {
        if !start.is_everyone() && !self.principals.contains_key(start) {
            return Err(PrincipalError::UnknownPrincipal(start.to_string()));
        }
        let mut closure = HashSet::new();
        closure.insert(start.clone());
        let mut queue = VecDeque::new();
        queue.push_back(start.clone());
        while let Some(next) = queue.pop_front() {
            if let Some(groups) = self.member_of.get(&next) {
                for group in groups {
                    if closure.insert(group.clone()) {
                        queue.push_back(group.clone());
                    }
                }
            }
        }
        closure.insert(Sid::everyone());
        Ok(closure)
    }

    /// Reports dangling members, duplicate names and non-canonical SIDs.
    /// An empty list means the directory is internally consistent.
    pub fn validate(&self) -> Vec<DirectoryDefect> {
        let mut defects = Vec::new();
        let mut names: BTreeMap<String, Vec<Sid>> = BTreeMap::new();
        for p in self.principals.values() {
            names.entry(p.name.to_lowercase()).or_default().push(p.sid.clone());
            if let Err(err) = Sid::parse(p.sid.as_str()) {
                defects.push(DirectoryDefect::MalformedSid { text: err.text, reason: err.reason });
            }
            for member in &p.members {
                if !self.principals.contains_key(member) && !member.is_everyone() {
                    defects.push(DirectoryDefect::DanglingMember {
                        group: p.sid.clone(),
                        member: member.clone(),
                    });
                }
            }
        }
        for (name, sids) in names {
            if sids.len() > 1 {
                defects.push(DirectoryDefect::DuplicateName { name, sids });
            }
        }
        defects
    }
}
