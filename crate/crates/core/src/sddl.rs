//! Codec for a documented SDDL subset, the compact text form security
//! descriptors take inside snapshots.
//!
//! Grammar: `["O:" sid] ["G:" sid] "D:" ["P"] ace*` with
//! `ace = "(" type ";" flags ";" rights ";;;" sid ")"`, type `A` or `D`,
//! flags drawn from `CI OI NP IO ID`, rights either a hex literal or a
//! run of `FA FR FW FX GA GR GW GX` tokens, and sid either a full
//! `S-1-…` value or one of the aliases `WD BA SY AU`. A trailing `S:`
//! section is accepted and discarded with a warning. Error positions are
//! 1-based character offsets.

use thiserror::Error;

use crate::ace::{Ace, AceFlags, AceType, Dacl, SecurityDescriptor};
use crate::mask::AccessMask;
use crate::principals::Sid;

const SID_ALIASES: [(&str, &str); 4] = [
    ("WD", "S-1-1-0"),
    ("BA", "S-1-5-32-544"),
    ("SY", "S-1-5-18"),
    ("AU", "S-1-5-11"),
];

const RIGHT_ALIASES: [(&str, u32); 8] = [
    ("FA", 0x1F01FF),
    ("FR", 0x120089),
    ("FW", 0x120116),
    ("FX", 0x1200A0),
    ("GA", 0x1F01FF),
    ("GR", 0x120089),
    ("GW", 0x120116),
    ("GX", 0x1200A0),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SddlError {
    #[error("syntax error at offset {pos}: expected {expected}")]
    Syntax { pos: usize, expected: String },
    #[error("unknown SID alias {token:?} at offset {pos}")]
    UnknownSidAlias { pos: usize, token: String },
    #[error("undefined rights token {token:?} at offset {pos}")]
    UndefinedRightToken { pos: usize, token: String },
    #[error("a null DACL has no SDDL form in this subset")]
    NullDaclUnrepresentable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SddlWarning {
    SaclIgnored,
}

impl std::fmt::Display for SddlWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SddlWarning::SaclIgnored => write!(f, "SACL section ignored"),
        }
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize, // zero-based; errors report pos + 1
}

impl Parser {
    fn new(text: &str) -> Self {
        Parser { chars: text.chars().collect(), pos: 0 }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn offset(&self) -> usize {
        self.pos + 1
    }

    fn syntax(&self, expected: &str) -> SddlError {
        SddlError::Syntax { pos: self.offset(), expected: expected.to_owned() }
    }

    fn expect(&mut self, c: char) -> Result<(), SddlError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(&format!("{c:?}")))
        }
    }

    fn eat(&mut self, prefix: &str) -> bool {
        let tail = &self.chars[self.pos..];
        let p: Vec<char> = prefix.chars().collect();
        if tail.starts_with(&p) {
            self.pos += p.len();
            true
        } else {
            false
        }
    }

    fn sid(&mut self) -> Result<Sid, SddlError> {
        let start = self.pos;
        match self.peek() {
            Some('S') if self.chars.get(self.pos + 1) == Some(&'-') => {
                self.pos += 1;
                while matches!(self.peek(), Some(c) if c == '-' || c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let text: String = self.chars[start..self.pos].iter().collect();
                Sid::parse(&text).map_err(|_| SddlError::Syntax {
                    pos: start + 1,
                    expected: "a canonical S-1-… SID".to_owned(),
                })
            }
            Some(c) if c.is_ascii_uppercase() => {
                let token: String = self.chars[self.pos..].iter().take(2).collect();
                if token.len() < 2 {
                    return Err(self.syntax("a two-letter SID alias"));
                }
                self.pos += 2;
                match SID_ALIASES.iter().find(|(alias, _)| *alias == token) {
                    Some((_, sid)) => Ok(Sid::parse(sid).expect("alias table is canonical")),
                    None => Err(SddlError::UnknownSidAlias { pos: start + 1, token }),
                }
            }
            _ => Err(self.syntax("a SID or SID alias")),
        }
    }

    fn flags(&mut self) -> Result<AceFlags, SddlError> {
        let mut flags = AceFlags::empty();
        while self.peek() != Some(';') {
            let start = self.pos;
            let token: String = self.chars[self.pos..].iter().take(2).collect();
            if token.len() < 2 {
                return Err(self.syntax("an ACE flag pair or ';'"));
            }
            let flag = AceFlags::from_name(&token).ok_or(SddlError::Syntax {
                pos: start + 1,
                expected: "one of CI, OI, NP, IO, ID".to_owned(),
            })?;
            if flags.contains(flag) {
                return Err(SddlError::Syntax {
                    pos: start + 1,
                    expected: format!("no duplicate {token} flag"),
                });
            }
            flags.insert(flag);
            self.pos += 2;
        }
        Ok(flags)
    }

    fn rights(&mut self) -> Result<AccessMask, SddlError> {
        let start = self.pos;
        if self.eat("0x") || self.eat("0X") {
            let digits_start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_hexdigit()) {
                self.pos += 1;
            }
            if self.pos == digits_start {
                return Err(self.syntax("hex digits"));
            }
            let text: String = self.chars[start..self.pos].iter().collect();
            let digits: String = self.chars[digits_start..self.pos].iter().collect();
            let bits = u32::from_str_radix(&digits, 16)
                .map_err(|_| SddlError::UndefinedRightToken { pos: start + 1, token: text.clone() })?;
            return AccessMask::from_bits(bits)
                .map_err(|_| SddlError::UndefinedRightToken { pos: start + 1, token: text });
        }
        let mut mask = 0u32;
        let mut any = false;
        while self.peek() != Some(';') {
            let token_start = self.pos;
            let token: String = self.chars[self.pos..].iter().take(2).collect();
            if token.len() < 2 {
                return Err(self.syntax("a rights token or ';'"));
            }
            match RIGHT_ALIASES.iter().find(|(alias, _)| *alias == token) {
                Some((_, bits)) => mask |= bits,
                None => {
                    return Err(SddlError::UndefinedRightToken { pos: token_start + 1, token })
                }
            }
            self.pos += 2;
            any = true;
        }
        if !any {
            return Err(self.syntax("a rights field"));
        }
        Ok(AccessMask::from_bits(mask).expect("alias table holds defined bits"))
    }

    fn ace(&mut self) -> Result<Ace, SddlError> {
        self.expect('(')?;
        let ty_pos = self.pos;
        let ace_type = match self.bump() {
            Some('A') => AceType::Allow,
            Some('D') => AceType::Deny,
            _ => {
                self.pos = ty_pos;
                return Err(self.syntax("ACE type 'A' or 'D'"));
            }
        };
        self.expect(';')?;
        let flags = self.flags()?;
        self.expect(';')?;
        let mask = self.rights()?;
        self.expect(';')?;
        // two object-GUID slots, both required empty in this subset
        if self.peek() != Some(';') {
            return Err(self.syntax("an empty object-GUID field"));
        }
        self.expect(';')?;
        if self.peek() != Some(';') {
            return Err(self.syntax("an empty inherited-object-GUID field"));
        }
        self.expect(';')?;
        let sid = self.sid()?;
        self.expect(')')?;
        Ok(Ace { ace_type, sid, mask, flags })
    }
}

/// Parses the SDDL subset into a security descriptor. The SACL section, if
/// present, is discarded with a warning.
pub fn parse_sddl(text: &str) -> Result<(SecurityDescriptor, Vec<SddlWarning>), SddlError> {
    let mut p = Parser::new(text);
    let mut warnings = Vec::new();
    let owner = if p.eat("O:") { Some(p.sid()?) } else { None };
    let group = if p.eat("G:") { Some(p.sid()?) } else { None };
    if !p.eat("D:") {
        return Err(p.syntax("\"D:\""));
    }
    let protected = p.eat("P");
    let mut aces = Vec::new();
    loop {
        match p.peek() {
            Some('(') => aces.push(p.ace()?),
            Some('S') if p.chars.get(p.pos + 1) == Some(&':') => {
                p.pos = p.chars.len();
                warnings.push(SddlWarning::SaclIgnored);
                break;
            }
            Some(_) => return Err(p.syntax("an ACE, \"S:\" or end of input")),
            None => break,
        }
    }
    Ok((SecurityDescriptor::new(owner, group, Dacl::present(aces), protected), warnings))
}

fn emit_sid(sid: &Sid) -> String {
    for (alias, text) in SID_ALIASES {
        if sid.as_str() == text {
            return alias.to_owned();
        }
    }
    sid.as_str().to_owned()
}

fn emit_rights(mask: AccessMask) -> String {
    for (alias, bits) in &RIGHT_ALIASES[..4] {
        if mask.bits() == *bits {
            return (*alias).to_owned();
        }
    }
    mask.hex()
}

fn emit_flags(flags: AceFlags) -> String {
    let order = [
        (AceFlags::OI, "OI"),
        (AceFlags::CI, "CI"),
        (AceFlags::NP, "NP"),
        (AceFlags::IO, "IO"),
        (AceFlags::ID, "ID"),
    ];
    let mut out = String::new();
    for (flag, name) in order {
        if flags.contains(flag) {
            out.push_str(name);
        }
    }
    out
}

/// Canonical SDDL emission: aliases where they match exactly, hex
/// otherwise. Parsing the output reproduces the descriptor field for
/// field; a null DACL is unrepresentable.
pub fn emit_sddl(sd: &SecurityDescriptor) -> Result<String, SddlError> {
    if !sd.dacl.present {
        return Err(SddlError::NullDaclUnrepresentable);
    }
    let mut out = String::new();
    if let Some(owner) = &sd.owner {
        out.push_str("O:");
        out.push_str(&emit_sid(owner));
    }
    if let Some(group) = &sd.group {
        out.push_str("G:");
        out.push_str(&emit_sid(group));
    }
    out.push_str("D:");
    if sd.protected {
        out.push('P');
    }
    for ace in &sd.dacl.aces {
        let ty = match ace.ace_type {
            AceType::Allow => 'A',
            AceType::Deny => 'D',
        };
        out.push('(');
        out.push(ty);
        out.push(';');
        out.push_str(&emit_flags(ace.flags));
        out.push(';');
        out.push_str(&emit_rights(ace.mask));
        out.push_str(";;;");
        out.push_str(&emit_sid(&ace.sid));
        out.push(')');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse_ok(text: &str) -> SecurityDescriptor {
        parse_sddl(text).unwrap().0
    }

    #[test]
    fn parses_everyone_full_access() {
        let sd = parse_ok("D:(A;OICI;FA;;;WD)");
        assert!(!sd.protected);
        assert_eq!(sd.dacl.aces.len(), 1);
        let ace = &sd.dacl.aces[0];
        assert_eq!(ace.ace_type, AceType::Allow);
        assert!(ace.sid.is_everyone());
        assert_eq!(ace.mask.bits(), 0x1F01FF);
        assert!(ace.flags.object_inherit() && ace.flags.container_inherit());
        assert!(!ace.flags.inherited());
    }

    #[test]
    fn parses_protected_deny_with_hex_mask() {
        let sd = parse_ok("D:P(D;;0x20089;;;S-1-5-21-1-2-3-2001)");
        assert!(sd.protected);
        let ace = &sd.dacl.aces[0];
        assert_eq!(ace.ace_type, AceType::Deny);
        assert_eq!(ace.mask.bits(), 0x20089);
        assert_eq!(ace.flags, AceFlags::empty());
        assert_eq!(ace.sid.as_str(), "S-1-5-21-1-2-3-2001");
    }

    #[test]
    fn rejects_undefined_rights_token() {
        match parse_sddl("D:(A;;QQ;;;WD)") {
            Err(SddlError::UndefinedRightToken { pos, token }) => {
                assert_eq!(token, "QQ");
                assert_eq!(pos, 7);
            }
            other => panic!("expected UndefinedRightToken, got {other:?}"),
        }
    }

    #[test]
    fn rejects_hex_mask_with_undefined_bits() {
        assert!(matches!(
            parse_sddl("D:(A;;0x80000000;;;WD)"),
            Err(SddlError::UndefinedRightToken { .. })
        ));
    }

    #[test]
    fn generic_aliases_map_to_file_masks() {
        let sd = parse_ok("D:(A;;GA;;;WD)(A;;GR;;;WD)(A;;GW;;;WD)(A;;GX;;;WD)");
        let bits: Vec<u32> = sd.dacl.aces.iter().map(|a| a.mask.bits()).collect();
        assert_eq!(bits, vec![0x1F01FF, 0x120089, 0x120116, 0x1200A0]);
    }

    #[test]
    fn multiple_rights_tokens_or_together() {
        let sd = parse_ok("D:(A;;FRFX;;;WD)");
        assert_eq!(sd.dacl.aces[0].mask.bits(), 0x120089 | 0x1200A0);
    }

    #[test]
    fn unknown_sid_alias_is_reported() {
        assert!(matches!(
            parse_sddl("D:(A;;FA;;;ZZ)"),
            Err(SddlError::UnknownSidAlias { token, .. }) if token == "ZZ"
        ));
    }

    #[test]
    fn truncated_input_reports_position() {
        match parse_sddl("D:(") {
            Err(SddlError::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn object_guid_slots_must_be_empty() {
        assert!(matches!(
            parse_sddl("D:(A;;FA;guid;;WD)"),
            Err(SddlError::Syntax { .. })
        ));
    }

    #[test]
    fn owner_and_group_sections() {
        let sd = parse_ok("O:BAG:SYD:(A;;FA;;;WD)");
        assert_eq!(sd.owner.as_ref().unwrap().as_str(), "S-1-5-32-544");
        assert_eq!(sd.group.as_ref().unwrap().as_str(), "S-1-5-18");
    }

    #[test]
    fn sacl_section_is_discarded_with_warning() {
        let (sd, warnings) = parse_sddl("D:(A;;FA;;;WD)S:(AU;SA;FA;;;WD)").unwrap();
        assert_eq!(sd.dacl.aces.len(), 1);
        assert_eq!(warnings, vec![SddlWarning::SaclIgnored]);
    }

    #[test]
    fn duplicate_flags_are_rejected() {
        assert!(matches!(parse_sddl("D:(A;OIOI;FA;;;WD)"), Err(SddlError::Syntax { .. })));
    }

    #[test]
    fn emit_uses_aliases_when_exact() {
        let sd = parse_ok("D:(A;OICI;FA;;;WD)");
        assert_eq!(emit_sddl(&sd).unwrap(), "D:(A;OICI;FA;;;WD)");
    }

    #[test]
    fn emit_falls_back_to_hex() {
        let sd = parse_ok("D:(D;;0x116;;;S-1-5-21-1-2-3-9)");
        assert_eq!(emit_sddl(&sd).unwrap(), "D:(D;;0x116;;;S-1-5-21-1-2-3-9)");
    }

    #[test]
    fn emit_rejects_null_dacl() {
        let sd = SecurityDescriptor::null_dacl();
        assert_eq!(emit_sddl(&sd), Err(SddlError::NullDaclUnrepresentable));
    }

    #[test]
    fn emit_then_parse_is_canonical_after_one_trip() {
        let first = parse_ok("D:P(A;CIOI;GR;;;S-1-5-18)");
        let text = emit_sddl(&first).unwrap();
        // GR normalizes to FR, CIOI to OICI, raw SY sid to its alias
        assert_eq!(text, "D:P(A;OICI;FR;;;SY)");
        let second = parse_ok(&text);
        assert_eq!(first, second);
        assert_eq!(emit_sddl(&second).unwrap(), text);
    }

    proptest! {
        /// Arbitrary input never panics: it parses or reports a positioned
        /// error.
        #[test]
        fn parser_total_on_arbitrary_text(text in ".{0,64}") {
            let _ = parse_sddl(&text);
        }

        #[test]
        fn parser_total_on_structured_noise(text in "[ODGSAP:;()0-9a-zA-Z-]{0,48}") {
            let _ = parse_sddl(&text);
        }
    }
}
