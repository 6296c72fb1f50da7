//! Parser for `icacls <root> /t` text dumps and conversion of the parsed
//! entries into a snapshot.
//!
//! The format is line-oriented: a line starting at column zero names a
//! folder followed by its first permission entry; indented lines continue
//! the same folder. Each entry is `account:(TOK)(TOK)…` where the tokens
//! are inheritance flags (`I OI CI IO NP`), an optional `DENY`, and
//! exactly one simple-rights abbreviation (`F M RX R W D`).

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::ace::{Ace, AceFlags, AceType, SecurityDescriptor};
use crate::inherit::normalize_path;
use crate::mask::AccessMask;
use crate::principals::{Directory, Sid};
use crate::snapshot::{Snapshot, SnapshotError};

/// The simple-rights abbreviations icacls prints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimpleRight {
    FullAccess,
    Modify,
    ReadExecute,
    Read,
    Write,
    Delete,
}

impl SimpleRight {
    const TOKENS: [(SimpleRight, &'static str); 6] = [
        (SimpleRight::FullAccess, "F"),
        (SimpleRight::Modify, "M"),
        (SimpleRight::ReadExecute, "RX"),
        (SimpleRight::Read, "R"),
        (SimpleRight::Write, "W"),
        (SimpleRight::Delete, "D"),
    ];

    pub fn from_token(token: &str) -> Option<Self> {
        Self::TOKENS.iter().find(|(_, t)| *t == token).map(|(r, _)| *r)
    }

    pub fn token(self) -> &'static str {
        Self::TOKENS.iter().find(|(r, _)| *r == self).map(|(_, t)| *t).unwrap()
    }

    /// The stored access mask each abbreviation stands for.
    pub fn mask(self) -> AccessMask {
        match self {
            SimpleRight::FullAccess => AccessMask::FULL_CONTROL,
            SimpleRight::Modify => AccessMask::from_bits(0x1301BF).unwrap(),
            SimpleRight::ReadExecute => AccessMask::from_bits(0x1200A9).unwrap(),
            SimpleRight::Read => AccessMask::FILE_GENERIC_READ,
            SimpleRight::Write => AccessMask::FILE_GENERIC_WRITE,
            SimpleRight::Delete => AccessMask::DELETE,
        }
    }
}

/// One parsed permission entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IcaclsEntry {
    pub account: String,
    pub deny: bool,
    pub flags: AceFlags,
    pub right: SimpleRight,
}

/// A folder path together with its entries, in listed order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IcaclsFolder {
    pub path: String,
    pub entries: Vec<IcaclsEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IcaclsError {
    #[error("line {line}, column {column}: malformed entry: {message}")]
    MalformedEntry { line: usize, column: usize, message: String },
    #[error("line {line}: unknown token {token:?}")]
    UnknownToken { line: usize, token: String },
    #[error("line {line}: continuation entry without a preceding folder line")]
    OrphanContinuation { line: usize },
    #[error(transparent)]
    BadPath(#[from] crate::inherit::TreeError),
}

fn parse_entry(text: &str, line: usize, column: usize) -> Result<IcaclsEntry, IcaclsError> {
    let malformed = |message: &str| IcaclsError::MalformedEntry {
        line,
        column,
        message: message.to_owned(),
    };
    let colon = text.find(':').ok_or_else(|| malformed("expected account:(tokens)"))?;
    let account = text[..colon].trim();
    if account.is_empty() {
        return Err(malformed("empty account name"));
    }
    let mut rest = text[colon + 1..].trim_end();
    if rest.is_empty() {
        return Err(malformed("missing permission tokens"));
    }
    let mut flags = AceFlags::empty();
    let mut deny = false;
    let mut right: Option<SimpleRight> = None;
    while !rest.is_empty() {
        let inner = rest
            .strip_prefix('(')
            .and_then(|r| r.split_once(')'))
            .ok_or_else(|| malformed("expected (TOKEN)"))?;
        let (token, tail) = inner;
        rest = tail;
        match token {
            "DENY" => {
                if deny {
                    return Err(malformed("duplicate DENY token"));
                }
                deny = true;
            }
            "I" | "OI" | "CI" | "IO" | "NP" => {
                let flag = if token == "I" {
                    AceFlags::ID
                } else {
                    AceFlags::from_name(token).expect("covered by match arm")
                };
                if flags.contains(flag) {
                    return Err(malformed(&format!("duplicate ({token}) flag")));
                }
                flags.insert(flag);
            }
            _ => match SimpleRight::from_token(token) {
                Some(r) => {
                    if right.is_some() {
                        return Err(malformed("more than one rights token"));
                    }
                    right = Some(r);
                }
                None => {
                    return Err(IcaclsError::UnknownToken { line, token: token.to_owned() })
                }
            },
        }
    }
    let right = right.ok_or_else(|| malformed("missing rights token"))?;
    Ok(IcaclsEntry { account: account.to_owned(), deny, flags, right })
}

/// Parses a dump into folders with ordered entries. Blank lines and the
/// trailing `Successfully processed…` summary are skipped. Folder paths
/// are normalized to forward slashes.
pub fn parse_icacls(text: &str) -> Result<Vec<IcaclsFolder>, IcaclsError> {
    let mut folders: Vec<IcaclsFolder> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if raw.starts_with("Successfully processed") || raw.starts_with("Failed processing") {
            continue;
        }
        if raw.starts_with(char::is_whitespace) {
            let entry_text = raw.trim_start();
            let column = raw.len() - entry_text.len() + 1;
            let folder = folders
                .last_mut()
                .ok_or(IcaclsError::OrphanContinuation { line })?;
            folder.entries.push(parse_entry(entry_text, line, column)?);
        } else {
            let (path_token, rest) = match raw.split_once(char::is_whitespace) {
                Some((p, r)) => (p, r.trim_start()),
                None => (raw, ""),
            };
            let path = normalize_path(path_token)?;
            let mut entries = Vec::new();
            if !rest.is_empty() {
                let column = raw.len() - rest.len() + 1;
                entries.push(parse_entry(rest, line, column)?);
            }
            folders.push(IcaclsFolder { path, entries });
        }
    }
    Ok(folders)
}

/// Renders folders back into the dump format. `parse_icacls` of the output
/// reproduces the input folders exactly.
pub fn render_icacls(folders: &[IcaclsFolder]) -> String {
    let mut out = String::new();
    for folder in folders {
        let mut rendered: Vec<String> = folder.entries.iter().map(render_entry).collect();
        if rendered.is_empty() {
            out.push_str(&folder.path);
            out.push('\n');
            continue;
        }
        out.push_str(&format!("{} {}\n", folder.path, rendered.remove(0)));
        for entry in rendered {
            out.push_str(&format!("    {entry}\n"));
        }
    }
    out
}

fn render_entry(entry: &IcaclsEntry) -> String {
    let mut tokens: Vec<&str> = Vec::new();
    if entry.flags.inherited() {
        tokens.push("I");
    }
    for (flag, name) in [
        (AceFlags::OI, "OI"),
        (AceFlags::CI, "CI"),
        (AceFlags::NP, "NP"),
        (AceFlags::IO, "IO"),
    ] {
        if entry.flags.contains(flag) {
            tokens.push(name);
        }
    }
    if entry.deny {
        tokens.push("DENY");
    }
    tokens.push(entry.right.token());
    let tokens: String = tokens.iter().map(|t| format!("({t})")).collect();
    format!("{}:{}", entry.account, tokens)
}

/// A problem attached to an imported entry; the entry is kept with a
/// marker SID that never matches any closure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportDefect {
    pub path: String,
    pub account: String,
    pub reason: String,
}

impl fmt::Display for ImportDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: account {:?}: {}", self.path, self.account, self.reason)
    }
}

/// Builds a snapshot from parsed dump folders. Accounts resolve against
/// `directory`; unresolvable ones become defects and their ACEs keep a
/// synthetic unresolved-SID marker. Missing ancestor folders up to the
/// common root are synthesized with empty DACLs.
pub fn import_snapshot(
    folders: &[IcaclsFolder],
    directory: Directory,
) -> Result<(Snapshot, Vec<ImportDefect>), SnapshotError> {
    let domain = directory.domain().to_owned();
    let mut defects = Vec::new();
    let mut markers: HashMap<String, Sid> = HashMap::new();
    let mut next_marker = 1u32;

    let mut out: Vec<(String, SecurityDescriptor)> = Vec::new();
    for folder in folders {
        let mut aces = Vec::with_capacity(folder.entries.len());
        for entry in &folder.entries {
            let sid = match directory.resolve(&entry.account) {
                Ok(principal) => principal.sid,
                Err(err) => {
                    let key = entry.account.to_lowercase();
                    let sid = markers.entry(key).or_insert_with(|| {
                        let marker = Sid::parse(&format!("S-1-0-{next_marker}")).unwrap();
                        next_marker += 1;
                        marker
                    });
                    defects.push(ImportDefect {
                        path: folder.path.clone(),
                        account: entry.account.clone(),
                        reason: err.to_string(),
                    });
                    sid.clone()
                }
            };
            let ace_type = if entry.deny { AceType::Deny } else { AceType::Allow };
            aces.push(Ace { ace_type, sid, mask: entry.right.mask(), flags: entry.flags });
        }
        out.push((folder.path.clone(), SecurityDescriptor::from_aces(aces)));
    }

    synthesize_ancestors(&mut out);
    let snapshot = Snapshot::from_parts(&domain, directory, out)?;
    Ok((snapshot, defects))
}

/// Adds empty-DACL folders for every missing path between the imported
/// folders and their longest common ancestor.
fn synthesize_ancestors(folders: &mut Vec<(String, SecurityDescriptor)>) {
    if folders.is_empty() {
        return;
    }
    let keys: Vec<Vec<String>> = folders
        .iter()
        .map(|(p, _)| p.to_lowercase().split('/').map(str::to_owned).collect())
        .collect();
    let mut common = keys[0].clone();
    for key in &keys[1..] {
        let shared = common.iter().zip(key.iter()).take_while(|(a, b)| a == b).count();
        common.truncate(shared);
    }
    if common.is_empty() {
        // nothing shared: leave it to tree validation to report
        return;
    }
    let mut have: HashSet<String> = folders.iter().map(|(p, _)| p.to_lowercase()).collect();
    let mut missing: Vec<String> = Vec::new();
    for (path, _) in folders.iter() {
        let segments: Vec<&str> = path.split('/').collect();
        for depth in common.len()..segments.len() {
            let prefix = segments[..depth].join("/");
            if have.insert(prefix.to_lowercase()) {
                missing.push(prefix);
            }
        }
    }
    for path in missing {
        folders.push((path, SecurityDescriptor::from_aces(vec![])));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::principals::Principal;

    /// The dump lines as the experiment's command printed them.
    pub const SAMPLE_DUMP: &str = "\
c:\\library\\Accounts Coruh\\Sample Group:(I)(OI)(CI)(DENY)(R)
    Coruh\\userc:(I)(OI)(CI)(DENY)(R)
    Everyone:(I)(OI)(CI)(RX)
    Coruh\\guess:(I)(OI)(CI)(F)
    Coruh\\Sample Group:(I)(OI)(CI)(W)
    Coruh\\usera:(I)(OI)(CI)(F)
c:\\library\\Archive Coruh\\Sample Group:(I)(OI)(CI)(DENY)(R)
    Coruh\\userc:(I)(OI)(CI)(DENY)(R)
    Everyone:(I)(OI)(CI)(RX)
    Coruh\\guess:(I)(OI)(CI)(F)
    Coruh\\Sample Group:(I)(OI)(CI)(W)
    Coruh\\userb:(I)(OI)(CI)(F)

Successfully processed 2 files; Failed processing 0 files
";

    fn ioici() -> AceFlags {
        AceFlags::empty().with(AceFlags::ID).with(AceFlags::OI).with(AceFlags::CI)
    }

    #[test]
    fn parses_the_sample_dump() {
        let folders = parse_icacls(SAMPLE_DUMP).unwrap();
        assert_eq!(folders.len(), 2);
        assert_eq!(folders[0].path, "c:/library/Accounts");
        assert_eq!(folders[1].path, "c:/library/Archive");
        for folder in &folders {
            assert_eq!(folder.entries.len(), 6);
            let first = &folder.entries[0];
            assert_eq!(first.account, "Coruh\\Sample Group");
            assert!(first.deny);
            assert_eq!(first.flags, ioici());
            assert_eq!(first.right, SimpleRight::Read);
        }
        assert_eq!(folders[0].entries[5].account, "Coruh\\usera");
        assert_eq!(folders[1].entries[5].account, "Coruh\\userb");
        assert!(!folders[0].entries[5].deny);
        assert_eq!(folders[0].entries[5].right, SimpleRight::FullAccess);
    }

    #[test]
    fn continuation_line_entry() {
        let folders = parse_icacls("c:\\x A:(F)\n    Everyone:(I)(OI)(CI)(RX)\n").unwrap();
        let entry = &folders[0].entries[1];
        assert_eq!(entry.account, "Everyone");
        assert!(!entry.deny);
        assert_eq!(entry.flags, ioici());
        assert_eq!(entry.right, SimpleRight::ReadExecute);
    }

    #[test]
    fn unknown_token_is_an_error() {
        match parse_icacls("c:\\x  Foo:(ZZ)(F)") {
            Err(IcaclsError::UnknownToken { token, line }) => {
                assert_eq!(token, "ZZ");
                assert_eq!(line, 1);
            }
            other => panic!("expected UnknownToken, got {other:?}"),
        }
    }

    #[test]
    fn malformed_entries_report_position() {
        assert!(matches!(
            parse_icacls("c:\\x  NoColonHere"),
            Err(IcaclsError::MalformedEntry { line: 1, .. })
        ));
        assert!(matches!(
            parse_icacls("c:\\x  A:(F)(M)"),
            Err(IcaclsError::MalformedEntry { .. })
        ));
        assert!(matches!(
            parse_icacls("c:\\x  A:(I)(I)(F)"),
            Err(IcaclsError::MalformedEntry { .. })
        ));
        assert!(matches!(
            parse_icacls("c:\\x  A:(I)"),
            Err(IcaclsError::MalformedEntry { .. })
        ));
        assert!(matches!(
            parse_icacls("    A:(F)"),
            Err(IcaclsError::OrphanContinuation { line: 1 })
        ));
    }

    #[test]
    fn simple_right_masks() {
        assert_eq!(SimpleRight::FullAccess.mask().bits(), 0x1F01FF);
        assert_eq!(SimpleRight::Modify.mask().bits(), 0x1301BF);
        assert_eq!(SimpleRight::ReadExecute.mask().bits(), 0x1200A9);
        assert_eq!(SimpleRight::Read.mask().bits(), 0x120089);
        assert_eq!(SimpleRight::Write.mask().bits(), 0x120116);
        assert_eq!(SimpleRight::Delete.mask().bits(), 0x10000);
    }

    #[test]
    fn render_parse_round_trip() {
        let folders = parse_icacls(SAMPLE_DUMP).unwrap();
        let rendered = render_icacls(&folders);
        let reparsed = parse_icacls(&rendered).unwrap();
        assert_eq!(reparsed, folders);
    }

    #[test]
    fn folder_line_without_entries() {
        let folders = parse_icacls("c:\\lonely\n").unwrap();
        assert_eq!(folders.len(), 1);
        assert!(folders[0].entries.is_empty());
    }

    fn import_directory() -> Directory {
        let sid = |n: u32| Sid::parse(&format!("S-1-5-21-7-7-7-{n}")).unwrap();
        Directory::new(
            "Coruh",
            vec![
                Principal::user(sid(1), "Coruh\\usera"),
                Principal::user(sid(2), "Coruh\\userb"),
                Principal::user(sid(3), "Coruh\\userc"),
                Principal::user(sid(4), "Coruh\\guess"),
                Principal::group(sid(5), "Coruh\\Sample Group", vec![sid(2), sid(3)]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn import_synthesizes_the_common_root() {
        let folders = parse_icacls(SAMPLE_DUMP).unwrap();
        let (snapshot, defects) = import_snapshot(&folders, import_directory()).unwrap();
        assert!(defects.is_empty(), "{defects:?}");
        assert_eq!(snapshot.tree().len(), 3); // synthesized c:/library + 2
        let root = snapshot.tree().node(snapshot.tree().root());
        assert_eq!(root.path, "c:/library");
        assert!(root.sd.dacl.present);
        assert!(root.sd.dacl.aces.is_empty());
    }

    #[test]
    fn import_marks_unresolved_accounts() {
        let folders = parse_icacls("c:\\x Nobody\\ghost:(F)\n    Nobody\\ghost:(DENY)(R)\n").unwrap();
        let directory = Directory::new("Coruh", vec![]).unwrap();
        let (snapshot, defects) = import_snapshot(&folders, directory).unwrap();
        assert_eq!(defects.len(), 2);
        let node = snapshot.tree().node(snapshot.tree().root());
        assert_eq!(node.sd.dacl.aces.len(), 2);
        assert!(node.sd.dacl.aces[0].sid.is_unresolved_marker());
        // the same account maps to the same marker
        assert_eq!(node.sd.dacl.aces[0].sid, node.sd.dacl.aces[1].sid);
    }

    #[test]
    fn imported_entries_validate_against_the_directory() {
        let folders = parse_icacls(SAMPLE_DUMP).unwrap();
        let (snapshot, _) = import_snapshot(&folders, import_directory()).unwrap();
        for id in 0..snapshot.tree().len() {
            let node = snapshot.tree().node(id);
            assert!(crate::ace::validate_sd(&node.sd, snapshot.directory()).is_empty());
        }
    }
}
