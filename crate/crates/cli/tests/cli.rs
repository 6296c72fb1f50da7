//! Exercises the command surface through `run`: flags, exit codes, and
//! stream discipline.

use std::path::PathBuf;

use aclscope_cli::{run, EXIT_INPUT, EXIT_OK, EXIT_UNKNOWN, EXIT_USAGE};

fn exec(args: &[&str]) -> (i32, String, String) {
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let argv = std::iter::once("aclscope").chain(args.iter().copied());
    let code = run(argv, &mut stdout, &mut stderr);
    (code, String::from_utf8(stdout).unwrap(), String::from_utf8(stderr).unwrap())
}

fn fixture_file(dir: &tempfile::TempDir, variant: &str) -> PathBuf {
    let path = dir.path().join(format!("{variant}.json"));
    let (code, _, stderr) =
        exec(&["fixture", "--variant", variant, "--out", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    path
}

#[test]
fn help_screens_list_their_flags() {
    let cases: &[(&str, &[&str])] = &[
        (
            "inspect",
            &[
                "--snapshot",
                "--root",
                "--recurse",
                "--include-root",
                "--users",
                "--all-users",
                "--rights",
                "--sort",
                "--out",
            ],
        ),
        ("import-icacls", &["--input", "--principals", "--domain", "--out"]),
        ("fixture", &["--variant", "--random", "--seed", "--folders", "--users", "--groups", "--max-depth", "--out"]),
        ("verify", &["--seeds", "--dump"]),
        ("bench", &["--users", "--folders", "--groups", "--seed"]),
    ];
    for (subcommand, flags) in cases {
        let (code, stdout, _) = exec(&[subcommand, "--help"]);
        assert_eq!(code, EXIT_OK, "{subcommand}");
        for flag in *flags {
            assert!(stdout.contains(flag), "{subcommand} --help lacks {flag}");
        }
    }
    let (code, stdout, _) = exec(&["sddl", "--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.contains("parse") && stdout.contains("emit"));
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    let (code, _, stderr) = exec(&[]);
    assert_eq!(code, EXIT_USAGE);
    assert!(!stderr.is_empty());
}

#[test]
fn inspect_reports_the_selected_users_over_subfolders() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = fixture_file(&dir, "table3");
    let (code, stdout, stderr) = exec(&[
        "inspect",
        "--snapshot",
        snapshot.to_str().unwrap(),
        "--root",
        "C:/Library",
        "--users",
        "CORUH\\User-B",
        "--rights",
        "all",
    ]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    let lines: Vec<&str> = stdout.split("\r\n").filter(|l| !l.is_empty()).collect();
    assert_eq!(lines.len(), 11); // header + 10 subfolders
    assert_eq!(lines[0].split(',').count(), 21);
    assert!(lines[1].starts_with("User-B,C:/Library/Accounts,"));
    // data stream carries no diagnostics
    assert!(stderr.is_empty());
}

#[test]
fn inspect_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = fixture_file(&dir, "table3");
    let args = [
        "inspect",
        "--snapshot",
        snapshot.to_str().unwrap(),
        "--all-users",
        "--rights",
        "atomic",
        "--sort",
        "Directory:desc",
    ];
    let first = exec(&args);
    let second = exec(&args);
    assert_eq!(first.0, EXIT_OK);
    assert_eq!(first.1, second.1);
}

#[test]
fn inspect_writes_csv_to_the_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = fixture_file(&dir, "table3");
    let out = dir.path().join("report.csv");
    let (code, stdout, _) = exec(&[
        "inspect",
        "--snapshot",
        snapshot.to_str().unwrap(),
        "--users",
        "CORUH\\User-B",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.is_empty());
    let written = std::fs::read_to_string(&out).unwrap();
    assert!(written.starts_with("User,Directory,"));
    assert_eq!(written.matches("\r\n").count(), 11);
}

#[test]
fn inspect_rejects_unknown_users_and_paths() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = fixture_file(&dir, "table3");
    let (code, _, stderr) =
        exec(&["inspect", "--snapshot", snapshot.to_str().unwrap(), "--users", "NoSuchUser"]);
    assert_eq!(code, EXIT_UNKNOWN);
    assert!(stderr.contains("NoSuchUser"));
    let (code, _, stderr) = exec(&[
        "inspect",
        "--snapshot",
        snapshot.to_str().unwrap(),
        "--users",
        "CORUH\\User-A",
        "--root",
        "C:/Nowhere",
    ]);
    assert_eq!(code, EXIT_UNKNOWN);
    assert!(stderr.contains("C:/Nowhere"));
}

#[test]
fn inspect_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = fixture_file(&dir, "table3");
    let path = snapshot.to_str().unwrap();
    // neither --users nor --all-users
    let (code, _, _) = exec(&["inspect", "--snapshot", path]);
    assert_eq!(code, EXIT_USAGE);
    // both --users and --all-users
    let (code, _, _) =
        exec(&["inspect", "--snapshot", path, "--users", "x", "--all-users"]);
    assert_eq!(code, EXIT_USAGE);
    // unknown right name
    let (code, _, stderr) =
        exec(&["inspect", "--snapshot", path, "--all-users", "--rights", "Fly"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(stderr.contains("Fly"));
    // unknown sort column
    let (code, _, _) =
        exec(&["inspect", "--snapshot", path, "--all-users", "--sort", "Nope"]);
    assert_eq!(code, EXIT_USAGE);
    // bad sort direction
    let (code, _, _) =
        exec(&["inspect", "--snapshot", path, "--all-users", "--sort", "User:up"]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn inspect_include_root_and_recurse() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = fixture_file(&dir, "table3");
    let path = snapshot.to_str().unwrap();
    let (code, stdout, _) = exec(&[
        "inspect",
        "--snapshot",
        path,
        "--users",
        "CORUH\\guess",
        "--include-root",
        "--recurse",
    ]);
    assert_eq!(code, EXIT_OK);
    // root + 10 descendants
    assert_eq!(stdout.matches("\r\n").count(), 12);
    assert!(stdout.contains("guess,C:/Library,"));
}

#[test]
fn malformed_snapshot_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, b"{not json").unwrap();
    let (code, _, stderr) = exec(&[
        "inspect",
        "--snapshot",
        path.to_str().unwrap(),
        "--all-users",
    ]);
    assert_eq!(code, EXIT_INPUT);
    assert!(!stderr.is_empty());
    let (code, _, _) =
        exec(&["inspect", "--snapshot", "/no/such/file.json", "--all-users"]);
    assert_eq!(code, EXIT_INPUT);
}

#[test]
fn sddl_parse_round_trips_through_emit() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = exec(&["sddl", "parse", "D:P(A;OICI;FA;;;WD)"]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.contains("\"protected\": true"));
    assert!(stdout.contains("\"0x1f01ff\""));
    let doc = dir.path().join("sd.json");
    std::fs::write(&doc, &stdout).unwrap();
    let (code, text, _) = exec(&["sddl", "emit", "--input", doc.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(text.trim_end(), "D:P(A;OICI;FA;;;WD)");
}

#[test]
fn sddl_parse_reports_position_on_error() {
    let (code, stdout, stderr) = exec(&["sddl", "parse", "D:("]);
    assert_eq!(code, EXIT_INPUT);
    assert!(stdout.is_empty());
    assert!(stderr.contains("offset 4"), "{stderr}");
}

#[test]
fn import_icacls_produces_a_loadable_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump.txt");
    std::fs::write(
        &dump,
        "c:\\data\\a Dom\\alice:(OI)(CI)(F)\n    Everyone:(OI)(CI)(RX)\nc:\\data\\b Dom\\alice:(DENY)(W)\n",
    )
    .unwrap();
    let principals = dir.path().join("principals.json");
    std::fs::write(
        &principals,
        br#"{"version":1,"domain":"Dom","principals":[
            {"sid":"S-1-5-21-8-8-8-1","name":"Dom\\alice","kind":"user"}],
            "folders":[{"path":"C:/seed"}]}"#,
    )
    .unwrap();
    let out = dir.path().join("imported.json");
    let (code, _, stderr) = exec(&[
        "import-icacls",
        "--input",
        dump.to_str().unwrap(),
        "--principals",
        principals.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    assert!(stderr.is_empty(), "no unresolved accounts expected: {stderr}");
    // the emitted snapshot is loadable and inspectable
    let (code, stdout, _) = exec(&[
        "inspect",
        "--snapshot",
        out.to_str().unwrap(),
        "--users",
        "Dom\\alice",
        "--rights",
        "FullControl",
        "--recurse",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.contains("alice,c:/data/a,Yes"));
    assert!(stdout.contains("alice,c:/data/b,No"));
}

#[test]
fn import_icacls_warns_about_unresolved_accounts() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump.txt");
    std::fs::write(&dump, "c:\\data Dom\\ghost:(F)\n").unwrap();
    let out = dir.path().join("imported.json");
    let (code, _, stderr) = exec(&[
        "import-icacls",
        "--input",
        dump.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(stderr.contains("unresolved"), "{stderr}");
}

#[test]
fn fixture_requires_a_mode() {
    let (code, _, _) = exec(&["fixture"]);
    assert_eq!(code, EXIT_USAGE);
    let (code, _, _) = exec(&["fixture", "--variant", "bogus"]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn fixture_random_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let (code, _, _) = exec(&[
            "fixture",
            "--random",
            "--seed",
            "11",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn verify_accepts_single_seed_and_ranges() {
    let (code, stdout, _) = exec(&["verify", "--seeds", "3"]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.contains("3..3"));
    let (code, _, _) = exec(&["verify", "--seeds", "5..2"]);
    assert_eq!(code, EXIT_USAGE);
    let (code, _, _) = exec(&["verify", "--seeds", "x"]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn bench_prints_the_summary_line() {
    let (code, stdout, _) = exec(&["bench", "--users", "3", "--folders", "12", "--seed", "4"]);
    assert_eq!(code, EXIT_OK);
    let line = stdout.trim_end();
    assert!(line.starts_with("users=3 folders=12 rights=19 elapsed_ms="), "{line}");
    let ms: u64 = line.rsplit('=').next().unwrap().parse().unwrap();
    let _ = ms;
}
