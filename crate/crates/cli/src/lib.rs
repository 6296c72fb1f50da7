//! Command-line surface: snapshot inspection, icacls import, SDDL
//! conversion, fixture generation, differential verification and a
//! timing harness.
//!
//! Exit codes: 0 success, 1 usage error, 2 input parse/schema error,
//! 3 unknown principal or path, 4 verification mismatch. Diagnostics go
//! to stderr; report data goes to stdout or the `--out` file.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use aclscope_core::ace::{Ace, AceFlags, AceType, Dacl, SecurityDescriptor};
use aclscope_core::eval::{Engine, EvalError};
use aclscope_core::icacls::{import_snapshot, parse_icacls};
use aclscope_core::mask::{AccessMask, ReportRight};
use aclscope_core::oracle::oracle_rights;
use aclscope_core::principals::{Directory, PrincipalKind, Sid};
use aclscope_core::report::{build_table, render_csv, sort_table, SortDirection};
use aclscope_core::sddl::{emit_sddl, parse_sddl};
use aclscope_core::snapshot::{
    gen_paper_fixture, gen_random, load_snapshot_verbose, save_snapshot, verify_params,
    FixtureVariant, GenParams, Snapshot,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_UNKNOWN: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Parser)]
#[command(
    name = "aclscope",
    version,
    about = "User-centric audit of effective NTFS folder permissions from snapshots",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report effective rights of users over folders as CSV
    Inspect(InspectArgs),
    /// Convert an `icacls <root> /t` dump into a snapshot
    ImportIcacls(ImportIcaclsArgs),
    /// Convert security descriptors between SDDL text and JSON
    #[command(subcommand)]
    Sddl(SddlAction),
    /// Write a built-in experiment fixture or a seeded random snapshot
    Fixture(FixtureArgs),
    /// Differential-check the engine against the reference evaluator
    Verify(VerifyArgs),
    /// Time a full matrix build over a generated snapshot
    Bench(BenchArgs),
}

#[derive(Args)]
struct InspectArgs {
    /// Snapshot JSON file
    #[arg(long, value_name = "FILE")]
    snapshot: PathBuf,
    /// Folder whose immediate subfolders are inspected (default: the
    /// snapshot root)
    #[arg(long, value_name = "PATH")]
    root: Option<String>,
    /// Extend the selection to all descendant folders
    #[arg(long)]
    recurse: bool,
    /// Include the root folder itself in the selection
    #[arg(long)]
    include_root: bool,
    /// Comma-separated users (SIDs or DOMAIN\name or bare names)
    #[arg(long, value_name = "LIST", conflicts_with = "all_users")]
    users: Option<String>,
    /// Inspect every user in the snapshot directory, sorted by name
    #[arg(long)]
    all_users: bool,
    /// "all", "atomic", or a comma-separated list of right names
    #[arg(long, value_name = "SPEC", default_value = "all")]
    rights: String,
    /// Sort rows by a column, e.g. "User" or "FullControl:desc"
    #[arg(long, value_name = "COLUMN[:asc|desc]")]
    sort: Option<String>,
    /// Write the CSV here instead of stdout (Excel opens it directly)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImportIcaclsArgs {
    /// Text dump as produced by `icacls <root> /t`
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Snapshot whose principal directory resolves the account names
    #[arg(long, value_name = "FILE")]
    principals: Option<PathBuf>,
    /// Default domain for bare account names
    #[arg(long, value_name = "NAME")]
    domain: Option<String>,
    /// Write the snapshot here instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SddlAction {
    /// Parse SDDL text and print the descriptor as JSON
    Parse {
        /// SDDL text, e.g. "D:(A;OICI;FA;;;WD)"
        text: String,
    },
    /// Read a descriptor JSON file and print its SDDL text
    Emit {
        /// Descriptor JSON file (the object `sddl parse` prints)
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
    },
}

#[derive(Args)]
struct FixtureArgs {
    /// Built-in fixture: "table3" or "icacls"
    #[arg(long, value_name = "NAME")]
    variant: Option<String>,
    /// Generate a seeded random snapshot instead
    #[arg(long, conflicts_with = "variant")]
    random: bool,
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "N", default_value_t = 25)]
    folders: u32,
    #[arg(long, value_name = "N", default_value_t = 6)]
    users: u32,
    #[arg(long, value_name = "N", default_value_t = 3)]
    groups: u32,
    #[arg(long, value_name = "N", default_value_t = 4)]
    max_depth: u32,
    /// Write the snapshot here instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Seed or inclusive seed range, e.g. "7" or "1..100"
    #[arg(long, value_name = "RANGE")]
    seeds: String,
    /// Write the first counterexample snapshot here (default: stdout)
    #[arg(long, value_name = "FILE")]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_name = "N", default_value_t = 100)]
    users: u32,
    #[arg(long, value_name = "N", default_value_t = 1000)]
    folders: u32,
    #[arg(long, value_name = "N", default_value_t = 20)]
    groups: u32,
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Failure::new(EXIT_USAGE, message)
    }

    fn input(message: impl Into<String>) -> Self {
        Failure::new(EXIT_INPUT, message)
    }

    fn unknown(message: impl Into<String>) -> Self {
        Failure::new(EXIT_UNKNOWN, message)
    }
}

impl From<EvalError> for Failure {
    fn from(err: EvalError) -> Self {
        match err {
            EvalError::UnknownPrincipal(_) | EvalError::UnknownPath(_) => {
                Failure::unknown(err.to_string())
            }
            other => Failure::usage(other.to_string()),
        }
    }
}

/// Runs the CLI against explicit argument and stream values; the binary
/// wraps this with the process environment.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let rendered = err.render().to_string();
            if code == EXIT_OK {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Inspect(args) => inspect(args, stdout, stderr),
        Command::ImportIcacls(args) => import_icacls(args, stdout, stderr),
        Command::Sddl(action) => sddl(action, stdout, stderr),
        Command::Fixture(args) => fixture(args, stdout),
        Command::Verify(args) => verify(args, stdout, stderr),
        Command::Bench(args) => bench(args, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            if !failure.message.is_empty() {
                let _ = writeln!(stderr, "aclscope: {}", failure.message);
            }
            failure.code
        }
    }
}

fn read_file(path: &PathBuf) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write_output(
    out: &Option<PathBuf>,
    bytes: &[u8],
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, bytes)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display()))),
        None => {
            stdout.write_all(bytes).map_err(|e| Failure::input(format!("stdout: {e}")))
        }
    }
}

fn load_snapshot_file(
    path: &PathBuf,
    stderr: &mut dyn Write,
) -> Result<Snapshot, Failure> {
    let bytes = read_file(path)?;
    let (snapshot, warnings) =
        load_snapshot_verbose(&bytes).map_err(|e| Failure::input(e.to_string()))?;
    for warning in warnings {
        let _ = writeln!(stderr, "aclscope: warning: {warning}");
    }
    Ok(snapshot)
}

fn parse_rights(spec: &str) -> Result<Vec<ReportRight>, Failure> {
    match spec {
        "all" => Ok(ReportRight::ALL.to_vec()),
        "atomic" => Ok(ReportRight::ATOMIC.to_vec()),
        list => {
            let mut rights = Vec::new();
            for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let right = ReportRight::from_name(name)
                    .ok_or_else(|| Failure::usage(format!("unknown right name {name:?}")))?;
                if !rights.contains(&right) {
                    rights.push(right);
                }
            }
            if rights.is_empty() {
                return Err(Failure::usage("--rights selected nothing"));
            }
            Ok(rights)
        }
    }
}

fn inspect(
    args: InspectArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), Failure> {
    let snapshot = load_snapshot_file(&args.snapshot, stderr)?;
    let directory = snapshot.directory();
    let rights = parse_rights(&args.rights)?;

    let users: Vec<Sid> = if args.all_users {
        let mut named: Vec<(String, Sid)> = directory
            .principals()
            .filter(|p| p.kind == PrincipalKind::User)
            .map(|p| (p.name.to_lowercase(), p.sid.clone()))
            .collect();
        named.sort();
        named.into_iter().map(|(_, sid)| sid).collect()
    } else {
        let spec = args
            .users
            .as_deref()
            .ok_or_else(|| Failure::usage("one of --users or --all-users is required"))?;
        let mut users = Vec::new();
        for key in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let principal =
                directory.resolve(key).map_err(|e| Failure::unknown(e.to_string()))?;
            if !users.contains(&principal.sid) {
                users.push(principal.sid);
            }
        }
        if users.is_empty() {
            return Err(Failure::usage("--users selected nothing"));
        }
        users
    };

    let tree = snapshot.tree();
    let root_id = match &args.root {
        Some(path) => tree
            .find(path)
            .ok_or_else(|| Failure::unknown(format!("unknown folder path: {path}")))?,
        None => tree.root(),
    };
    let mut selection: Vec<String> = Vec::new();
    if args.include_root {
        selection.push(tree.node(root_id).path.clone());
    }
    if args.recurse {
        let mut stack: Vec<usize> = tree.node(root_id).children.clone();
        while let Some(id) = stack.pop() {
            selection.push(tree.node(id).path.clone());
            stack.extend(tree.node(id).children.iter().copied());
        }
    } else {
        selection
            .extend(tree.node(root_id).children.iter().map(|&id| tree.node(id).path.clone()));
    }

    let table = if selection.is_empty() {
        let mut header = vec!["User".to_owned(), "Directory".to_owned()];
        header.extend(rights.iter().map(|r| r.name().to_owned()));
        aclscope_core::report::ReportTable { header, rows: Vec::new() }
    } else {
        let matrix = Engine::new(&snapshot).build_matrix(&users, &selection, &rights)?;
        build_table(&matrix, directory)
    };

    let table = match &args.sort {
        Some(spec) => {
            let (column, direction) = match spec.rsplit_once(':') {
                Some((col, "asc")) => (col, SortDirection::Ascending),
                Some((col, "desc")) => (col, SortDirection::Descending),
                Some((_, other)) => {
                    return Err(Failure::usage(format!(
                        "sort direction must be asc or desc, got {other:?}"
                    )))
                }
                None => (spec.as_str(), SortDirection::Ascending),
            };
            sort_table(&table, column, direction)
                .map_err(|e| Failure::usage(e.to_string()))?
        }
        None => table,
    };

    write_output(&args.out, &render_csv(&table), stdout)
}

fn import_icacls(
    args: ImportIcaclsArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), Failure> {
    let text = String::from_utf8(read_file(&args.input)?)
        .map_err(|e| Failure::input(format!("{}: {e}", args.input.display())))?;
    let folders = parse_icacls(&text).map_err(|e| Failure::input(e.to_string()))?;
    let directory = match &args.principals {
        Some(path) => {
            let source = load_snapshot_file(path, stderr)?;
            let domain =
                args.domain.clone().unwrap_or_else(|| source.directory().domain().to_owned());
            Directory::new(&domain, source.directory().principals().cloned().collect())
                .map_err(|e| Failure::input(e.to_string()))?
        }
        None => Directory::new(args.domain.as_deref().unwrap_or("IMPORT"), Vec::new())
            .expect("empty directory"),
    };
    let (snapshot, defects) =
        import_snapshot(&folders, directory).map_err(|e| Failure::input(e.to_string()))?;
    for defect in &defects {
        let _ = writeln!(stderr, "aclscope: warning: unresolved entry: {defect}");
    }
    write_output(&args.out, &save_snapshot(&snapshot), stdout)
}

/// JSON shape `sddl parse` prints and `sddl emit` reads.
#[derive(Serialize, Deserialize)]
struct DescriptorDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    owner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<String>,
    #[serde(default)]
    protected: bool,
    aces: Vec<AceDoc>,
}

#[derive(Serialize, Deserialize)]
struct AceDoc {
    #[serde(rename = "type")]
    ace_type: String,
    sid: String,
    mask: String,
    #[serde(default)]
    flags: Vec<String>,
}

fn sddl(action: SddlAction, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    match action {
        SddlAction::Parse { text } => {
            let (sd, warnings) =
                parse_sddl(&text).map_err(|e| Failure::input(e.to_string()))?;
            for warning in warnings {
                let _ = writeln!(stderr, "aclscope: warning: {warning}");
            }
            let doc = DescriptorDoc {
                owner: sd.owner.as_ref().map(Sid::to_string),
                group: sd.group.as_ref().map(Sid::to_string),
                protected: sd.protected,
                aces: sd
                    .dacl
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
                    .collect(),
            };
            let mut rendered = serde_json::to_string_pretty(&doc).expect("doc serializes");
            rendered.push('\n');
            stdout
                .write_all(rendered.as_bytes())
                .map_err(|e| Failure::input(format!("stdout: {e}")))
        }
        SddlAction::Emit { input } => {
            let doc: DescriptorDoc = serde_json::from_slice(&read_file(&input)?)
                .map_err(|e| Failure::input(format!("{}: {e}", input.display())))?;
            let mut aces = Vec::with_capacity(doc.aces.len());
            for ace in &doc.aces {
                let ace_type = match ace.ace_type.as_str() {
                    "allow" => AceType::Allow,
                    "deny" => AceType::Deny,
                    other => {
                        return Err(Failure::input(format!(
                            "ACE type must be allow or deny, got {other:?}"
                        )))
                    }
                };
                let sid =
                    Sid::parse(&ace.sid).map_err(|e| Failure::input(e.to_string()))?;
                let mask = AccessMask::parse_hex(&ace.mask)
                    .map_err(|e| Failure::input(e.to_string()))?;
                let mut flags = AceFlags::empty();
                for name in &ace.flags {
                    flags.insert(AceFlags::from_name(name).ok_or_else(|| {
                        Failure::input(format!("unknown ACE flag {name:?}"))
                    })?);
                }
                aces.push(Ace { ace_type, sid, mask, flags });
            }
            let owner = doc
                .owner
                .as_deref()
                .map(|s| Sid::parse(s).map_err(|e| Failure::input(e.to_string())))
                .transpose()?;
            let group = doc
                .group
                .as_deref()
                .map(|s| Sid::parse(s).map_err(|e| Failure::input(e.to_string())))
                .transpose()?;
            let sd = SecurityDescriptor::new(owner, group, Dacl::present(aces), doc.protected);
            let text = emit_sddl(&sd).map_err(|e| Failure::input(e.to_string()))?;
            writeln!(stdout, "{text}").map_err(|e| Failure::input(format!("stdout: {e}")))
        }
    }
}

fn fixture(args: FixtureArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let snapshot = if args.random {
        let params = GenParams {
            seed: args.seed,
            folders: args.folders,
            users: args.users,
            groups: args.groups,
            max_depth: args.max_depth,
            ..GenParams::default()
        };
        gen_random(&params).map_err(|e| Failure::usage(e.to_string()))?
    } else {
        match args.variant.as_deref() {
            Some("table3") => gen_paper_fixture(FixtureVariant::Table3),
            Some("icacls") => gen_paper_fixture(FixtureVariant::Icacls),
            Some(other) => {
                return Err(Failure::usage(format!(
                    "unknown fixture variant {other:?} (expected table3 or icacls)"
                )))
            }
            None => {
                return Err(Failure::usage("one of --variant or --random is required"))
            }
        }
    };
    write_output(&args.out, &save_snapshot(&snapshot), stdout)
}

fn parse_seed_range(spec: &str) -> Result<(u64, u64), Failure> {
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: u64 =
            lo.trim().parse().map_err(|_| Failure::usage(format!("bad seed {lo:?}")))?;
        let hi: u64 =
            hi.trim().parse().map_err(|_| Failure::usage(format!("bad seed {hi:?}")))?;
        if lo > hi {
            return Err(Failure::usage("seed range is inverted"));
        }
        Ok((lo, hi))
    } else {
        let seed: u64 =
            spec.trim().parse().map_err(|_| Failure::usage(format!("bad seed {spec:?}")))?;
        Ok((seed, seed))
    }
}

fn verify(args: VerifyArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let (lo, hi) = parse_seed_range(&args.seeds)?;
    for seed in lo..=hi {
        let snapshot = gen_random(&verify_params(seed))
            .map_err(|e| Failure::input(e.to_string()))?;
        let mut engine = Engine::new(&snapshot);
        let users: Vec<Sid> = snapshot
            .directory()
            .principals()
            .filter(|p| p.kind == PrincipalKind::User)
            .map(|p| p.sid.clone())
            .collect();
        for user in &users {
            for id in 0..snapshot.tree().len() {
                let path = snapshot.tree().node(id).path.clone();
                let fast = engine.effective_rights(user, &path)?;
                let slow = oracle_rights(&snapshot, user, &path)?;
                for right in ReportRight::ALL {
                    if fast.get(right) != slow.get(right) {
                        let _ = writeln!(
                            stderr,
                            "aclscope: mismatch: seed={seed} user={user} folder={path} \
                             right={right}: engine={} reference={}",
                            fast.get(right),
                            slow.get(right)
                        );
                        write_output(&args.dump, &save_snapshot(&snapshot), stdout)?;
                        return Err(Failure::new(EXIT_MISMATCH, String::new()));
                    }
                }
            }
        }
    }
    writeln!(stdout, "verified seeds {lo}..{hi}: engine matches the reference evaluator")
        .map_err(|e| Failure::input(format!("stdout: {e}")))
}

fn bench(args: BenchArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let params = GenParams {
        seed: args.seed,
        folders: args.folders,
        users: args.users,
        groups: args.groups,
        max_depth: 6,
        ..GenParams::default()
    };
    let snapshot = gen_random(&params).map_err(|e| Failure::usage(e.to_string()))?;
    let users: Vec<Sid> = snapshot
        .directory()
        .principals()
        .filter(|p| p.kind == PrincipalKind::User)
        .map(|p| p.sid.clone())
        .collect();
    let folders: Vec<String> =
        (0..snapshot.tree().len()).map(|id| snapshot.tree().node(id).path.clone()).collect();
    let start = Instant::now();
    let matrix = Engine::new(&snapshot)
        .build_matrix(&users, &folders, &ReportRight::ALL)
        .map_err(Failure::from)?;
    let elapsed_ms = start.elapsed().as_millis();
    debug_assert_eq!(matrix.rows.len(), users.len() * folders.len());
    writeln!(
        stdout,
        "users={} folders={} rights={} elapsed_ms={elapsed_ms}",
        users.len(),
        folders.len(),
        ReportRight::ALL.len()
    )
    .map_err(|e| Failure::input(format!("stdout: {e}")))
}
