//! The 32-bit folder access-mask layout, the 19 report rights, and the
//! basic-permission algebra of the advanced security dialog.

use std::fmt;
use std::ops::{BitOr, BitOrAssign};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A 32-bit field of NTFS folder rights.
///
/// Only the fourteen atomic folder bits are defined; the generic-rights
/// family (`0x10000000..`) exists purely as an ingestion-time alias in the
/// SDDL and icacls codecs and is never storable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AccessMask(u32);

impl AccessMask {
    pub const LIST_DIRECTORY: AccessMask = AccessMask(0x1);
    pub const WRITE_DATA: AccessMask = AccessMask(0x2);
    pub const APPEND_DATA: AccessMask = AccessMask(0x4);
    pub const READ_EA: AccessMask = AccessMask(0x8);
    pub const WRITE_EA: AccessMask = AccessMask(0x10);
    pub const TRAVERSE: AccessMask = AccessMask(0x20);
    pub const DELETE_CHILD: AccessMask = AccessMask(0x40);
    pub const READ_ATTRIBUTES: AccessMask = AccessMask(0x80);
    pub const WRITE_ATTRIBUTES: AccessMask = AccessMask(0x100);
    pub const DELETE: AccessMask = AccessMask(0x10000);
    pub const READ_PERMISSIONS: AccessMask = AccessMask(0x20000);
    pub const CHANGE_PERMISSIONS: AccessMask = AccessMask(0x40000);
    pub const TAKE_OWNERSHIP: AccessMask = AccessMask(0x80000);
    pub const SYNCHRONIZE: AccessMask = AccessMask(0x100000);

    pub const READ: AccessMask = AccessMask(0x20089);
    pub const WRITE: AccessMask = AccessMask(0x116);
    pub const MODIFY: AccessMask = AccessMask(0x301BF);
    pub const FULL_CONTROL: AccessMask = AccessMask(0x1F01FF);

    /// Generic file aliases used by SDDL rights tokens and icacls output.
    pub const FILE_GENERIC_READ: AccessMask = AccessMask(0x120089);
    pub const FILE_GENERIC_WRITE: AccessMask = AccessMask(0x120116);
    pub const FILE_GENERIC_EXECUTE: AccessMask = AccessMask(0x1200A0);

    /// Union of every defined bit.
    pub const DEFINED: u32 = 0x1F01FF;

    pub const EMPTY: AccessMask = AccessMask(0);

    /// Builds a mask, rejecting bits outside the defined layout.
    pub fn from_bits(bits: u32) -> Result<Self, UndefinedBits> {
        let undefined = bits & !Self::DEFINED;
        if undefined != 0 {
            return Err(UndefinedBits { bits: undefined });
        }
        Ok(AccessMask(bits))
    }

    /// Builds a mask keeping whatever was given. Validation paths use this
    /// to carry defective data through to a defect report.
    pub fn from_bits_lossy(bits: u32) -> Self {
        AccessMask(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, other: AccessMask) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn intersects(self, other: AccessMask) -> bool {
        self.0 & other.0 != 0
    }

    pub fn remove(&mut self, other: AccessMask) {
        self.0 &= !other.0;
    }

    pub fn undefined_bits(self) -> u32 {
        self.0 & !Self::DEFINED
    }

    /// Lowercase hex text, the serialized form in snapshots and diagnostics.
    pub fn hex(self) -> String {
        format!("{:#x}", self.0)
    }

    pub fn parse_hex(text: &str) -> Result<Self, MaskParseError> {
        let digits = text
            .strip_prefix("0x")
            .or_else(|| text.strip_prefix("0X"))
            .ok_or_else(|| MaskParseError::NotHex(text.to_owned()))?;
        let bits = u32::from_str_radix(digits, 16)
            .map_err(|_| MaskParseError::NotHex(text.to_owned()))?;
        Self::from_bits(bits).map_err(MaskParseError::Undefined)
    }
}

impl BitOr for AccessMask {
    type Output = AccessMask;
    fn bitor(self, rhs: AccessMask) -> AccessMask {
        AccessMask(self.0 | rhs.0)
    }
}

impl BitOrAssign for AccessMask {
    fn bitor_assign(&mut self, rhs: AccessMask) {
        self.0 |= rhs.0;
    }
}

impl fmt::Display for AccessMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

impl Serialize for AccessMask {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.hex())
    }
}

impl<'de> Deserialize<'de> for AccessMask {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        AccessMask::parse_hex(&text).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("mask contains undefined bits {bits:#x}")]
pub struct UndefinedBits {
    pub bits: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskParseError {
    #[error("expected lowercase hex mask \"0x…\", got {0:?}")]
    NotHex(String),
    #[error(transparent)]
    Undefined(UndefinedBits),
}

/// The nineteen report columns, in the fixed order the detailed report
/// uses. The first nine plus Delete, ReadPermissions, ChangePermissions,
/// TakeOwnership and Synchronize are atomic; the rest are composites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReportRight {
    ListDirectory,
    WriteData,
    AppendData,
    ReadExtendedAttributes,
    WriteExtendedAttributes,
    Traverse,
    DeleteSubdirectoriesAndFiles,
    ReadAttributes,
    WriteAttributes,
    Write,
    Delete,
    ReadPermissions,
    Read,
    ReadAndExecute,
    Modify,
    ChangePermissions,
    TakeOwnership,
    Synchronize,
    FullControl,
}

use ReportRight::*;

impl ReportRight {
    pub const ALL: [ReportRight; 19] = [
        ListDirectory,
        WriteData,
        AppendData,
        ReadExtendedAttributes,
        WriteExtendedAttributes,
        Traverse,
        DeleteSubdirectoriesAndFiles,
        ReadAttributes,
        WriteAttributes,
        Write,
        Delete,
        ReadPermissions,
        Read,
        ReadAndExecute,
        Modify,
        ChangePermissions,
        TakeOwnership,
        Synchronize,
        FullControl,
    ];

    /// The fourteen single-bit rights, in report order.
    pub const ATOMIC: [ReportRight; 14] = [
        ListDirectory,
        WriteData,
        AppendData,
        ReadExtendedAttributes,
        WriteExtendedAttributes,
        Traverse,
        DeleteSubdirectoriesAndFiles,
        ReadAttributes,
        WriteAttributes,
        Delete,
        ReadPermissions,
        ChangePermissions,
        TakeOwnership,
        Synchronize,
    ];

    /// The mask an access check requests for this report column.
    ///
    /// The ReadAndExecute column requests the traverse bit alone: every
    /// read-class bit already has its own column and is covered by the Read
    /// composite, so the combined column reports the execute side.
    pub fn mask(self) -> AccessMask {
        match self {
            ListDirectory => AccessMask::LIST_DIRECTORY,
            WriteData => AccessMask::WRITE_DATA,
            AppendData => AccessMask::APPEND_DATA,
            ReadExtendedAttributes => AccessMask::READ_EA,
            WriteExtendedAttributes => AccessMask::WRITE_EA,
            Traverse => AccessMask::TRAVERSE,
            DeleteSubdirectoriesAndFiles => AccessMask::DELETE_CHILD,
            ReadAttributes => AccessMask::READ_ATTRIBUTES,
            WriteAttributes => AccessMask::WRITE_ATTRIBUTES,
            Write => AccessMask::WRITE,
            Delete => AccessMask::DELETE,
            ReadPermissions => AccessMask::READ_PERMISSIONS,
            Read => AccessMask::READ,
            ReadAndExecute => AccessMask::TRAVERSE,
            Modify => AccessMask::MODIFY,
            ChangePermissions => AccessMask::CHANGE_PERMISSIONS,
            TakeOwnership => AccessMask::TAKE_OWNERSHIP,
            Synchronize => AccessMask::SYNCHRONIZE,
            FullControl => AccessMask::FULL_CONTROL,
        }
    }

    pub fn is_composite(self) -> bool {
        matches!(self, Write | Read | ReadAndExecute | Modify | FullControl)
    }

    pub fn name(self) -> &'static str {
        match self {
            ListDirectory => "ListDirectory",
            WriteData => "WriteData",
            AppendData => "AppendData",
            ReadExtendedAttributes => "ReadExtendedAttributes",
            WriteExtendedAttributes => "WriteExtendedAttributes",
            Traverse => "Traverse",
            DeleteSubdirectoriesAndFiles => "DeleteSubdirectoriesAndFiles",
            ReadAttributes => "ReadAttributes",
            WriteAttributes => "WriteAttributes",
            Write => "Write",
            Delete => "Delete",
            ReadPermissions => "ReadPermissions",
            Read => "Read",
            ReadAndExecute => "ReadAndExecute",
            Modify => "Modify",
            ChangePermissions => "ChangePermissions",
            TakeOwnership => "TakeOwnership",
            Synchronize => "Synchronize",
            FullControl => "FullControl",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        ReportRight::ALL.into_iter().find(|r| r.name().eq_ignore_ascii_case(name))
    }

    /// Index into [`ReportRight::ALL`].
    pub fn index(self) -> usize {
        ReportRight::ALL.iter().position(|r| *r == self).expect("member of ALL")
    }

    /// The atomic rights whose bits are set in `mask`, in report order.
    /// Undefined bits are ignored; [`AccessMask::undefined_bits`] reports
    /// them separately.
    pub fn decompose(mask: AccessMask) -> Vec<ReportRight> {
        ReportRight::ATOMIC.into_iter().filter(|r| mask.intersects(r.mask())).collect()
    }
}

impl fmt::Display for ReportRight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The six column heads of the basic-permission table in the security
/// dialog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasicPermission {
    FullControl,
    Modify,
    ReadAndExecute,
    ListFolderContents,
    Read,
    Write,
}

impl BasicPermission {
    pub const ALL: [BasicPermission; 6] = [
        BasicPermission::FullControl,
        BasicPermission::Modify,
        BasicPermission::ReadAndExecute,
        BasicPermission::ListFolderContents,
        BasicPermission::Read,
        BasicPermission::Write,
    ];

    /// The checked special-permission rows of this basic permission's
    /// column. TakeOwnership sits under FullControl even though its printed
    /// row is blank; the omission is treated as typographical.
    ///
    /// Note this is the dialog's grouping, not the composite request masks:
    /// the Write column includes ReadPermissions while the Write composite
    /// (0x116) does not.
    pub fn expand(self) -> &'static [ReportRight] {
        match self {
            BasicPermission::FullControl => &[
                Traverse,
                ListDirectory,
                ReadAttributes,
                ReadExtendedAttributes,
                WriteData,
                AppendData,
                WriteAttributes,
                WriteExtendedAttributes,
                DeleteSubdirectoriesAndFiles,
                Delete,
                ReadPermissions,
                ChangePermissions,
                TakeOwnership,
            ],
            BasicPermission::Modify => &[
                Traverse,
                ListDirectory,
                ReadAttributes,
                ReadExtendedAttributes,
                WriteData,
                AppendData,
                WriteAttributes,
                WriteExtendedAttributes,
                Delete,
                ReadPermissions,
            ],
            BasicPermission::ReadAndExecute | BasicPermission::ListFolderContents => &[
                Traverse,
                ListDirectory,
                ReadAttributes,
                ReadExtendedAttributes,
                ReadPermissions,
            ],
            BasicPermission::Read => &[
                ListDirectory,
                ReadAttributes,
                ReadExtendedAttributes,
                ReadPermissions,
            ],
            BasicPermission::Write => &[
                WriteData,
                AppendData,
                WriteAttributes,
                WriteExtendedAttributes,
                ReadPermissions,
            ],
        }
    }
}
