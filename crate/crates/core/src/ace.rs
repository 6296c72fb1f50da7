//! ACEs, DACLs and security descriptors, plus the canonical entry ordering
//! the precedence hierarchy requires: explicit deny, explicit allow,
//! inherited deny, inherited allow.

use std::fmt;

use thiserror::Error;

use crate::mask::AccessMask;
use crate::principals::{Directory, Sid};

/// Inheritance flags of an ACE.
///
/// `OI` applies the entry to child files, `CI` to child containers, `IO`
/// makes it inert on its own object, `NP` stops propagation after one
/// level, and `ID` marks an inherited copy.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct AceFlags(u8);

impl AceFlags {
    pub const OI: AceFlags = AceFlags(0x01);
    pub const CI: AceFlags = AceFlags(0x02);
    pub const IO: AceFlags = AceFlags(0x04);
    pub const NP: AceFlags = AceFlags(0x08);
    pub const ID: AceFlags = AceFlags(0x10);

    const NAMES: [(AceFlags, &'static str); 5] = [
        (AceFlags::OI, "OI"),
        (AceFlags::CI, "CI"),
        (AceFlags::IO, "IO"),
        (AceFlags::NP, "NP"),
        (AceFlags::ID, "ID"),
    ];

    pub fn empty() -> Self {
        AceFlags(0)
    }

    pub fn contains(self, other: AceFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: AceFlags) {
        self.0 |= other.0;
    }

    pub fn remove(&mut self, other: AceFlags) {
        self.0 &= !other.0;
    }

    pub fn with(mut self, other: AceFlags) -> Self {
        self.insert(other);
        self
    }

    pub fn object_inherit(self) -> bool {
        self.contains(Self::OI)
    }

    pub fn container_inherit(self) -> bool {
        self.contains(Self::CI)
    }

    pub fn inherit_only(self) -> bool {
        self.contains(Self::IO)
    }

    pub fn no_propagate(self) -> bool {
        self.contains(Self::NP)
    }

    pub fn inherited(self) -> bool {
        self.contains(Self::ID)
    }

    pub fn from_name(name: &str) -> Option<AceFlags> {
        Self::NAMES.iter().find(|(_, n)| *n == name).map(|(f, _)| *f)
    }

    pub fn names(self) -> Vec<&'static str> {
        Self::NAMES.iter().filter(|(f, _)| self.contains(*f)).map(|(_, n)| *n).collect()
    }
}

impl fmt::Debug for AceFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AceFlags({})", self.names().join("|"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AceType {
    Allow,
    Deny,
}

/// One allow/deny entry binding a SID to an access mask and inheritance
/// flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ace {
    pub ace_type: AceType,
    pub sid: Sid,
    pub mask: AccessMask,
    pub flags: AceFlags,
}

impl Ace {
    pub fn allow(sid: Sid, mask: AccessMask, flags: AceFlags) -> Self {
        Ace { ace_type: AceType::Allow, sid, mask, flags }
    }

    pub fn deny(sid: Sid, mask: AccessMask, flags: AceFlags) -> Self {
        Ace { ace_type: AceType::Deny, sid, mask, flags }
    }

    pub fn is_deny(&self) -> bool {
        self.ace_type == AceType::Deny
    }
}

/// An ordered list of ACEs. `present = false` models a null DACL, which the
/// evaluator treats as granting everything; a present-but-empty list denies
/// everything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dacl {
    pub present: bool,
    pub aces: Vec<Ace>,
}

impl Dacl {
    pub fn present(aces: Vec<Ace>) -> Self {
        Dacl { present: true, aces }
    }

    pub fn null() -> Self {
        Dacl { present: false, aces: Vec::new() }
    }
}

/// Per-folder security state. A protected descriptor blocks inheritance
/// from ancestors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecurityDescriptor {
    pub owner: Option<Sid>,
    pub group: Option<Sid>,
    pub dacl: Dacl,
    pub protected: bool,
}

impl SecurityDescriptor {
    /// Builds a descriptor, normalizing `protected` to false when the DACL
    /// is null (a null DACL has nothing to protect).
    pub fn new(owner: Option<Sid>, group: Option<Sid>, dacl: Dacl, protected: bool) -> Self {
        let protected = protected && dacl.present;
        SecurityDescriptor { owner, group, dacl, protected }
    }

    pub fn from_aces(aces: Vec<Ace>) -> Self {
        Self::new(None, None, Dacl::present(aces), false)
    }

    pub fn null_dacl() -> Self {
        Self::new(None, None, Dacl::null(), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cannot canonicalize a null DACL")]
pub struct NullDaclError;

/// Block index in the canonical order; lower sorts first.
fn canonical_block(ace: &Ace) -> u8 {
    match (ace.flags.inherited(), ace.is_deny()) {
        (false, true) => 0,  // explicit deny
        (false, false) => 1, // explicit allow
        (true, true) => 2,   // inherited deny
        (true, false) => 3,  // inherited allow
    }
}

/// Stable reorder into the four precedence blocks. Entries keep their
/// relative order within a block and none of their fields change.
pub fn canonicalize(dacl: &Dacl) -> Result<Dacl, NullDaclError> {
    if !dacl.present {
        return Err(NullDaclError);
    }
    let mut aces = dacl.aces.clone();
    aces.sort_by_key(canonical_block);
    Ok(Dacl::present(aces))
}

/// Defects found by [`validate_sd`]. Hard ones reject a snapshot at load
/// time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SdDefect {
    ZeroMask { index: usize },
    UnknownSid { index: usize, sid: Sid },
    OrphanInheritOnly { index: usize },
    UndefinedMaskBits { index: usize, bits: u32 },
}

impl fmt::Display for SdDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SdDefect::ZeroMask { index } => write!(f, "ACE #{index} has an empty mask"),
            SdDefect::UnknownSid { index, sid } => {
                write!(f, "ACE #{index} names unknown SID {sid}")
            }
            SdDefect::OrphanInheritOnly { index } => {
                write!(f, "ACE #{index} is inherit-only without OI or CI")
            }
            SdDefect::UndefinedMaskBits { index, bits } => {
                write!(f, "ACE #{index} mask has undefined bits {bits:#x}")
            }
        }
    }
}

/// Checks a descriptor's ACEs against the directory and the mask layout.
/// Defects are data, not failures.
pub fn validate_sd(sd: &SecurityDescriptor, directory: &Directory) -> Vec<SdDefect> {
    let mut defects = Vec::new();
    for (index, ace) in sd.dacl.aces.iter().enumerate() {
        if ace.mask.is_empty() {
            defects.push(SdDefect::ZeroMask { index });
        }
        let undefined = ace.mask.undefined_bits();
        if undefined != 0 {
            defects.push(SdDefect::UndefinedMaskBits { index, bits: undefined });
        }
        if ace.flags.inherit_only() && !ace.flags.object_inherit() && !ace.flags.container_inherit()
        {
            defects.push(SdDefect::OrphanInheritOnly { index });
        }
        let known = directory.contains(&ace.sid)
            || ace.sid.is_well_known()
            || ace.sid.is_unresolved_marker();
        if !known {
            defects.push(SdDefect::UnknownSid { index, sid: ace.sid.clone() });
        }
    }
    defects
}
