//! User-centric auditing of effective NTFS folder permissions.
//!
//! Windows stores access control per resource: every folder carries a
//! security descriptor whose DACL lists allow/deny entries for users and
//! groups. Answering the opposite question — "what can *this user* do on
//! *these folders*?" — requires expanding nested group memberships,
//! propagating inherited entries down the folder tree and replaying the
//! ordered access check for every right of interest.
//!
//! This crate does exactly that, offline, from JSON snapshots of a folder
//! tree plus a principal directory. It ships:
//!
//! * [`principals`] — SIDs, users, nested groups and membership closure;
//! * [`mask`] — the 32-bit folder access-mask layout and the 19 report
//!   rights, plus the basic-permission algebra;
//! * [`ace`] — ACEs, DACLs, security descriptors and canonical ordering;
//! * [`inherit`] — folder trees and inheritance propagation;
//! * [`eval`] — the access-check engine and rights-matrix builder;
//! * [`oracle`] — a deliberately naive reference evaluator for
//!   differential testing;
//! * [`sddl`] — a documented SDDL subset codec;
//! * [`icacls`] — a parser for `icacls <root> /t` text dumps;
//! * [`snapshot`] — snapshot load/save and fixture/random generators;
//! * [`report`] — Yes/No tabular reports and CSV emission.

pub mod ace;
pub mod eval;
pub mod icacls;
pub mod inherit;
pub mod mask;
pub mod oracle;
pub mod principals;
pub mod report;
pub mod sddl;
pub mod snapshot;

pub use ace::{Ace, AceFlags, AceType, Dacl, SecurityDescriptor};
pub use eval::{AccessDecision, Engine, EvalError, Outcome, RightsMatrix, RightsRow};
pub use inherit::{EffectiveDacl, FolderTree};
pub use mask::{AccessMask, BasicPermission, ReportRight};
pub use principals::{Directory, Principal, PrincipalKind, Sid};
pub use snapshot::{FixtureVariant, GenParams, Snapshot};
