//! Snapshot ingestion and generation: the JSON interchange format, the
//! experiment fixtures, and seeded random snapshots for property testing.

use rand_chacha::ChaCha8Rng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ace::{validate_sd, Ace, AceFlags, AceType, Dacl, SecurityDescriptor};
use crate::inherit::{FolderTree, TreeError};
use crate::mask::AccessMask;
use crate::principals::{Directory, DirectoryError, Principal, PrincipalKind, Sid};
use crate::sddl::{parse_sddl, SddlError};

/// A folder tree plus the principal directory it refers to: the unit of
/// ingestion and evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    version: u32,
    domain: String,
    directory: Directory,
    tree: FolderTree,
}

pub const SNAPSHOT_VERSION: u32 = 1;

impl Snapshot {
    /// Assembles and validates a snapshot from parts. Hard defects —
    /// malformed directories, broken trees, zero-mask or unknown-SID
    /// ACEs — are rejected.
    pub fn from_parts(
        domain: &str,
        directory: Directory,
        folders: Vec<(String, SecurityDescriptor)>,
    ) -> Result<Self, SnapshotError> {
        let mut defects: Vec<String> = directory.validate().iter().map(|d| d.to_string()).collect();
        let tree = FolderTree::build(folders)?;
        for id in 0..tree.len() {
            let node = tree.node(id);
            for defect in validate_sd(&node.sd, &directory) {
                defects.push(format!("{}: {}", node.path, defect));
            }
        }
        if !defects.is_empty() {
            return Err(SnapshotError::Validation { defects });
        }
        Ok(Snapshot { version: SNAPSHOT_VERSION, domain: domain.to_owned(), directory, tree })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn directory(&self) -> &Directory {
        &self.directory
    }

    pub fn tree(&self) -> &FolderTree {
        &self.tree
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotError {
    #[error("invalid snapshot JSON: {0}")]
    Json(String),
    #[error("schema error at {at}: {message}")]
    Schema { at: String, message: String },
    #[error("folder {path:?} carries both an SDDL and a structured security form")]
    ConflictingSecurityForm { path: String },
    #[error("SDDL error in folder {path:?}: {error}")]
    Sddl { path: String, error: SddlError },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("snapshot failed validation: {}", .defects.join("; "))]
    Validation { defects: Vec<String> },
}

impl From<DirectoryError> for SnapshotError {
    fn from(err: DirectoryError) -> Self {
        SnapshotError::Validation { defects: vec![err.to_string()] }
    }
}

// ---------------------------------------------------------------------------
// Wire format

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    version: u32,
    domain: String,
    principals: Vec<PrincipalDoc>,
    folders: Vec<FolderDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrincipalDoc {
    sid: String,
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    members: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FolderDoc {
    path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    owner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    protected: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dacl_present: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sddl: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aces: Option<Vec<AceDoc>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AceDoc {
    #[serde(rename = "type")]
    ace_type: String,
    sid: String,
    mask: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    flags: Vec<String>,
}

fn parse_doc_sid(text: &str, at: &str) -> Result<Sid, SnapshotError> {
    Sid::parse(text)
        .map_err(|e| SnapshotError::Schema { at: at.to_owned(), message: e.to_string() })
}

fn folder_security(doc: &FolderDoc, warnings: &mut Vec<String>) -> Result<SecurityDescriptor, SnapshotError> {
    let structured = doc.aces.is_some()
        || doc.protected.is_some()
        || doc.dacl_present.is_some()
        || doc.owner.is_some()
        || doc.group.is_some();
    if let Some(sddl) = &doc.sddl {
        if structured {
            return Err(SnapshotError::ConflictingSecurityForm { path: doc.path.clone() });
        }
        let (sd, sddl_warnings) = parse_sddl(sddl)
            .map_err(|error| SnapshotError::Sddl { path: doc.path.clone(), error })?;
        warnings.extend(sddl_warnings.iter().map(|w| format!("{}: {w}", doc.path)));
        return Ok(sd);
    }
    let at = format!("folders[{}]", doc.path);
    let dacl_present = doc.dacl_present.unwrap_or(true);
    if !dacl_present && doc.aces.as_ref().is_some_and(|aces| !aces.is_empty()) {
        return Err(SnapshotError::Schema {
            at,
            message: "a folder with dacl_present=false cannot carry aces".to_owned(),
        });
    }
    let owner = doc.owner.as_deref().map(|s| parse_doc_sid(s, &at)).transpose()?;
    let group = doc.group.as_deref().map(|s| parse_doc_sid(s, &at)).transpose()?;
    let dacl = if dacl_present {
        let mut aces = Vec::new();
        for (i, ace) in doc.aces.as_deref().unwrap_or(&[]).iter().enumerate() {
            let at = format!("{at}.aces[{i}]");
            let ace_type = match ace.ace_type.as_str() {
                "allow" => AceType::Allow,
                "deny" => AceType::Deny,
                other => {
                    return Err(SnapshotError::Schema {
                        at,
                        message: format!("type must be \"allow\" or \"deny\", got {other:?}"),
                    })
                }
            };
            let sid = parse_doc_sid(&ace.sid, &at)?;
            let mask = AccessMask::parse_hex(&ace.mask)
                .map_err(|e| SnapshotError::Schema { at: at.clone(), message: e.to_string() })?;
            let mut flags = AceFlags::empty();
            for name in &ace.flags {
                let flag = AceFlags::from_name(name).ok_or_else(|| SnapshotError::Schema {
                    at: at.clone(),
                    message: format!("unknown ACE flag {name:?}"),
                })?;
                if flags.contains(flag) {
                    return Err(SnapshotError::Schema {
                        at,
                        message: format!("duplicate ACE flag {name:?}"),
                    });
                }
                flags.insert(flag);
            }
            aces.push(Ace { ace_type, sid, mask, flags });
        }
        Dacl::present(aces)
    } else {
        Dacl::null()
    };
    Ok(SecurityDescriptor::new(owner, group, dacl, doc.protected.unwrap_or(false)))
}

fn load_doc(doc: SnapshotDoc) -> Result<(Snapshot, Vec<String>), SnapshotError> {
    if doc.version != SNAPSHOT_VERSION {
        return Err(SnapshotError::Schema {
            at: "version".to_owned(),
            message: format!("unsupported version {}, expected {SNAPSHOT_VERSION}", doc.version),
        });
    }
    let mut principals = Vec::with_capacity(doc.principals.len());
    for (i, p) in doc.principals.iter().enumerate() {
        let at = format!("principals[{i}]");
        let sid = parse_doc_sid(&p.sid, &at)?;
        let kind = match p.kind.as_str() {
            "user" => PrincipalKind::User,
            "group" => PrincipalKind::Group,
            other => {
                return Err(SnapshotError::Schema {
                    at,
                    message: format!("kind must be \"user\" or \"group\", got {other:?}"),
                })
            }
        };
        let mut members = Vec::with_capacity(p.members.len());
        for member in &p.members {
            members.push(parse_doc_sid(member, &format!("{at}.members"))?);
        }
        principals.push(Principal { sid, name: p.name.clone(), kind, members });
    }
    let directory = Directory::new(&doc.domain, principals)?;
    let mut warnings = Vec::new();
    let mut folders = Vec::with_capacity(doc.folders.len());
    for f in &doc.folders {
        let sd = folder_security(f, &mut warnings)?;
        folders.push((f.path.clone(), sd));
    }
    let snapshot = Snapshot::from_parts(&doc.domain, directory, folders)?;
    Ok((snapshot, warnings))
}

/// Loads a snapshot, collecting non-fatal warnings (for now, discarded
/// SACL sections).
pub fn load_snapshot_verbose(bytes: &[u8]) -> Result<(Snapshot, Vec<String>), SnapshotError> {
    let doc: SnapshotDoc =
        serde_json::from_slice(bytes).map_err(|e| SnapshotError::Json(e.to_string()))?;
    load_doc(doc)
}

pub fn load_snapshot(bytes: &[u8]) -> Result<Snapshot, SnapshotError> {
    load_snapshot_verbose(bytes).map(|(snapshot, _)| snapshot)
}

/// Deterministic emission: fixed field order, principals in SID order,
/// folders in depth-first preorder. `load ∘ save` is the identity.
pub fn save_snapshot(snapshot: &Snapshot) -> Vec<u8> {
    let principals = snapshot
        .directory()
        .principals()
        .map(|p| PrincipalDoc {
            sid: p.sid.to_string(),
            name: p.name.clone(),
            kind: match p.kind {
                PrincipalKind::User => "user".to_owned(),
                PrincipalKind::Group => "group".to_owned(),
            },
            members: p.members.iter().map(Sid::to_string).collect(),
        })
        .collect();
    let tree = snapshot.tree();
    let folders = tree
        .preorder()
        .into_iter()
        .map(|id| {
            let node = tree.node(id);
            let sd = &node.sd;
            FolderDoc {
                path: node.path.clone(),
                owner: sd.owner.as_ref().map(Sid::to_string),
                group: sd.group.as_ref().map(Sid::to_string),
                protected: sd.protected.then_some(true),
                dacl_present: (!sd.dacl.present).then_some(false),
                sddl: None,
                aces: sd.dacl.present.then(|| {
                    sd.dacl
                        .aces
                        .iter()
                        .map(|ace| AceDoc {
                            ace_type: match ace.ace_type {
                                AceType::Allow => "allow".to_owned(),
                                AceType::Deny => "deny".to_owned(),
                            },
                            sid: ace.sid.to_string(),
                            mask: ace.mask.hex(),
                            flags: ace.flags.names().iter().map(|s| s.to_string()).collect(),
                        })
                        .collect()
                }),
            }
        })
        .collect();
    let doc = SnapshotDoc {
        version: snapshot.version,
        domain: snapshot.domain.clone(),
        principals,
        folders,
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("snapshot docs always serialize");
    bytes.push(b'\n');
    bytes
}

// ---------------------------------------------------------------------------
// Experiment fixtures

/// The two mutually inconsistent renderings of the experiment data: the
/// report table shows uniform rows for every subfolder, while the icacls
/// listing adds one materialized full-control entry per subfolder for a
/// cycled user. Each acceptance check pins the variant it reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureVariant {
    Table3,
    Icacls,
}

pub const FIXTURE_ROOT: &str = "C:/Library";
pub const FIXTURE_SUBFOLDERS: [&str; 10] = [
    "Accounts",
    "Archive",
    "Finance",
    "HR",
    "Management",
    "Meetings",
    "Projects",
    "R&D",
    "Surveys",
    "Working",
];

fn fixture_sid(n: u32) -> Sid {
    Sid::parse(&format!("S-1-5-21-1-2-3-{n}")).unwrap()
}

/// SIDs of the fixture users User-A … User-F, in order.
pub fn fixture_user_sids() -> [Sid; 6] {
    [1101, 1102, 1103, 1104, 1105, 1106].map(fixture_sid)
}

pub fn fixture_guess_sid() -> Sid {
    fixture_sid(1107)
}

pub fn fixture_group_sid() -> Sid {
    fixture_sid(2001)
}

fn fixture_directory() -> Directory {
    let users = fixture_user_sids();
    let mut principals: Vec<Principal> = "ABCDEF"
        .chars()
        .zip(users.iter())
        .map(|(letter, sid)| Principal::user(sid.clone(), &format!("CORUH\\User-{letter}")))
        .collect();
    principals.push(Principal::user(fixture_guess_sid(), "CORUH\\guess"));
    principals.push(Principal::group(
        fixture_group_sid(),
        "CORUH\\Sample Group",
        vec![users[1].clone(), users[2].clone()],
    ));
    Directory::new("CORUH", principals).expect("fixture directory is well-formed")
}

fn fixture_root_aces() -> Vec<Ace> {
    let oici = AceFlags::empty().with(AceFlags::OI).with(AceFlags::CI);
    let users = fixture_user_sids();
    vec![
        Ace::deny(fixture_group_sid(), AccessMask::READ, oici),
        Ace::deny(users[2].clone(), AccessMask::READ, oici),
        Ace::allow(Sid::everyone(), AccessMask::from_bits(0x1200A9).unwrap(), oici),
        Ace::allow(fixture_guess_sid(), AccessMask::FULL_CONTROL, oici),
        Ace::allow(fixture_group_sid(), AccessMask::WRITE, oici),
    ]
}

/// Builds the experiment snapshot: domain CORUH, users User-A … User-F
/// plus guess, "Sample Group" = {User-B, User-C}, and C:/Library with ten
/// subfolders governed by the root DACL. The icacls variant additionally
/// materializes one inherited full-control entry per subfolder for the
/// cycled user (User-A on Accounts, User-B on Archive, …).
pub fn gen_paper_fixture(variant: FixtureVariant) -> Snapshot {
    let users = fixture_user_sids();
    let mut folders = vec![(
        FIXTURE_ROOT.to_owned(),
        SecurityDescriptor::from_aces(fixture_root_aces()),
    )];
    for (i, name) in FIXTURE_SUBFOLDERS.iter().enumerate() {
        let sd = match variant {
            FixtureVariant::Table3 => SecurityDescriptor::from_aces(vec![]),
            FixtureVariant::Icacls => {
                let flags = AceFlags::empty()
                    .with(AceFlags::OI)
                    .with(AceFlags::CI)
                    .with(AceFlags::ID);
                SecurityDescriptor::from_aces(vec![Ace::allow(
                    users[i % users.len()].clone(),
                    AccessMask::FULL_CONTROL,
                    flags,
                )])
            }
        };
        folders.push((format!("{FIXTURE_ROOT}/{name}"), sd));
    }
    Snapshot::from_parts("CORUH", fixture_directory(), folders)
        .expect("fixture snapshot is well-formed")
}

// ---------------------------------------------------------------------------
// Random snapshots

/// Knobs for the seeded snapshot generator. All probabilities are in
/// [0, 1]; `folders`, `users` and `max_depth` are at least 1, `groups` may
/// be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub seed: u64,
    pub folders: u32,
    pub max_depth: u32,
    pub users: u32,
    pub groups: u32,
    pub nesting_probability: f64,
    pub aces_per_folder: (u32, u32),
    pub deny_fraction: f64,
    pub protected_fraction: f64,
    pub oi_probability: f64,
    pub ci_probability: f64,
    pub np_probability: f64,
    pub io_probability: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            seed: 0,
            folders: 25,
            max_depth: 4,
            users: 6,
            groups: 3,
            nesting_probability: 0.3,
            aces_per_folder: (0, 4),
            deny_fraction: 0.3,
            protected_fraction: 0.1,
            oi_probability: 0.5,
            ci_probability: 0.6,
            np_probability: 0.1,
            io_probability: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid generator parameters: {0}")]
pub struct InvalidParams(String);

impl GenParams {
    fn validate(&self) -> Result<(), InvalidParams> {
        if self.folders == 0 || self.users == 0 || self.max_depth == 0 {
            return Err(InvalidParams("folders, users and max_depth must be at least 1".into()));
        }
        if self.aces_per_folder.0 > self.aces_per_folder.1 {
            return Err(InvalidParams("aces_per_folder range is inverted".into()));
        }
        for (name, p) in [
            ("nesting_probability", self.nesting_probability),
            ("deny_fraction", self.deny_fraction),
            ("protected_fraction", self.protected_fraction),
            ("oi_probability", self.oi_probability),
            ("ci_probability", self.ci_probability),
            ("np_probability", self.np_probability),
            ("io_probability", self.io_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(InvalidParams(format!("{name} must be within [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

fn random_mask(rng: &mut ChaCha8Rng) -> AccessMask {
    const ALIASES: [u32; 8] =
        [0x1F01FF, 0x120089, 0x120116, 0x1200A0, 0x20089, 0x116, 0x301BF, 0x1200A9];
    if rng.gen_bool(0.4) {
        AccessMask::from_bits(ALIASES[rng.gen_range(0..ALIASES.len())]).unwrap()
    } else {
        loop {
            let bits = rng.gen::<u32>() & AccessMask::DEFINED;
            if bits != 0 {
                return AccessMask::from_bits(bits).unwrap();
            }
        }
    }
}

/// Deterministic random snapshot: the same parameters always produce the
/// same snapshot, byte for byte after `save_snapshot`.
pub fn gen_random(params: &GenParams) -> Result<Snapshot, InvalidParams> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let domain = "TESTDOM";

    let user_sids: Vec<Sid> = (0..params.users).map(|i| fixture_sid(5000 + i)).collect();
    let group_sids: Vec<Sid> = (0..params.groups).map(|i| fixture_sid(6000 + i)).collect();
    let mut principals: Vec<Principal> = user_sids
        .iter()
        .enumerate()
        .map(|(i, sid)| Principal::user(sid.clone(), &format!("{domain}\\user{i:03}")))
        .collect();
    for (i, sid) in group_sids.iter().enumerate() {
        let pool_size = user_sids.len() + group_sids.len();
        let member_count = rng.gen_range(0..=4.min(pool_size));
        let mut members = Vec::new();
        for _ in 0..member_count {
            let member = if !group_sids.is_empty() && rng.gen_bool(params.nesting_probability) {
                group_sids[rng.gen_range(0..group_sids.len())].clone()
            } else {
                user_sids[rng.gen_range(0..user_sids.len())].clone()
            };
            if member != *sid && !members.contains(&member) {
                members.push(member);
            }
        }
        principals.push(Principal::group(sid.clone(), &format!("{domain}\\group{i:03}"), members));
    }
    let directory = Directory::new(domain, principals)
        .expect("generated principals are structurally valid");

    let mut sid_pool: Vec<Sid> = user_sids.clone();
    sid_pool.extend(group_sids.iter().cloned());
    sid_pool.push(Sid::everyone());

    let mut paths: Vec<(String, u32)> = vec![("C:/Root".to_owned(), 0)];
    for i in 1..params.folders {
        let eligible: Vec<usize> = paths
            .iter()
            .enumerate()
            .filter(|(_, (_, depth))| *depth < params.max_depth)
            .map(|(idx, _)| idx)
            .collect();
        let parent = if eligible.is_empty() { 0 } else { eligible[rng.gen_range(0..eligible.len())] };
        let (parent_path, parent_depth) = paths[parent].clone();
        paths.push((format!("{parent_path}/d{i}"), parent_depth + 1));
    }

    let mut folders = Vec::with_capacity(paths.len());
    for (path, _) in &paths {
        let ace_count = rng.gen_range(params.aces_per_folder.0..=params.aces_per_folder.1);
        let mut aces = Vec::with_capacity(ace_count as usize);
        for _ in 0..ace_count {
            let sid = sid_pool[rng.gen_range(0..sid_pool.len())].clone();
            let mask = random_mask(&mut rng);
            let mut flags = AceFlags::empty();
            if rng.gen_bool(params.oi_probability) {
                flags.insert(AceFlags::OI);
            }
            if rng.gen_bool(params.ci_probability) {
                flags.insert(AceFlags::CI);
            }
            if rng.gen_bool(params.np_probability) {
                flags.insert(AceFlags::NP);
            }
            if rng.gen_bool(params.io_probability) {
                if !flags.object_inherit() && !flags.container_inherit() {
                    flags.insert(AceFlags::CI);
                }
                flags.insert(AceFlags::IO);
            }
            let ace = if rng.gen_bool(params.deny_fraction) {
                Ace::deny(sid, mask, flags)
            } else {
                Ace::allow(sid, mask, flags)
            };
            aces.push(ace);
        }
        let protected = rng.gen_bool(params.protected_fraction);
        folders.push((
            path.clone(),
            SecurityDescriptor::new(None, None, Dacl::present(aces), protected),
        ));
    }

    Snapshot::from_parts(domain, directory, folders)
        .map_err(|e| InvalidParams(format!("generator produced an invalid snapshot: {e}")))
}

/// A deterministic random security descriptor for codec round-trip tests.
pub fn gen_random_sd(seed: u64) -> SecurityDescriptor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<Sid> = vec![
        Sid::everyone(),
        Sid::parse("S-1-5-18").unwrap(),
        Sid::parse("S-1-5-11").unwrap(),
        Sid::parse("S-1-5-32-544").unwrap(),
        fixture_sid(rng.gen_range(1..50)),
        fixture_sid(rng.gen_range(50..100)),
    ];
    let pick = |rng: &mut ChaCha8Rng| pool[rng.gen_range(0..pool.len())].clone();
    let owner = rng.gen_bool(0.3).then(|| pick(&mut rng));
    let group = rng.gen_bool(0.3).then(|| pick(&mut rng));
    let protected = rng.gen_bool(0.2);
    let ace_count = rng.gen_range(0..=8);
    let mut aces = Vec::with_capacity(ace_count);
    for _ in 0..ace_count {
        let sid = pick(&mut rng);
        let mask = random_mask(&mut rng);
        let mut flags = AceFlags::empty();
        for flag in [AceFlags::OI, AceFlags::CI, AceFlags::NP, AceFlags::ID] {
            if rng.gen_bool(0.3) {
                flags.insert(flag);
            }
        }
        if rng.gen_bool(0.15) {
            if !flags.object_inherit() && !flags.container_inherit() {
                flags.insert(AceFlags::OI);
            }
            flags.insert(AceFlags::IO);
        }
        let ace = if rng.gen_bool(0.35) {
            Ace::deny(sid, mask, flags)
        } else {
            Ace::allow(sid, mask, flags)
        };
        aces.push(ace);
    }
    SecurityDescriptor::new(owner, group, Dacl::present(aces), protected)
}

/// The parameter schedule the verification harness uses per seed: sizes
/// vary within depth ≤ 6, ≤ 200 folders, ≤ 50 users and ≤ 20 groups, with
/// deny fraction 0.3 and protected fraction 0.1.
pub fn verify_params(seed: u64) -> GenParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(17));
    let folders = if seed.is_multiple_of(10) { rng.gen_range(40..=200) } else { rng.gen_range(1..=30) };
    let users = if seed.is_multiple_of(7) { rng.gen_range(10..=50) } else { rng.gen_range(1..=8) };
    let groups = if seed.is_multiple_of(5) { rng.gen_range(8..=20) } else { rng.gen_range(0..=6) };
    GenParams {
        seed,
        folders,
        max_depth: 6,
        users,
        groups,
        nesting_probability: 0.5,
        aces_per_folder: (0, 5),
        deny_fraction: 0.3,
        protected_fraction: 0.1,
        oi_probability: 0.5,
        ci_probability: 0.6,
        np_probability: 0.1,
        io_probability: 0.1,
    }
}
