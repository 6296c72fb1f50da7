//! Folder trees and downward propagation of inheritable ACEs.
//!
//! Each folder's effective DACL is its own canonicalized entries followed
//! by copies of ancestor entries, nearest ancestor first, transformed per
//! the OI/CI/IO/NP flags. A protected descriptor blocks the ancestor part.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::ace::{canonicalize, Ace, AceFlags, SecurityDescriptor};

/// Normalizes a folder path: backslashes become forward slashes and a
/// trailing slash is trimmed. Case is preserved; comparisons lowercase.
pub fn normalize_path(path: &str) -> Result<String, TreeError> {
    let mut p = path.replace('\\', "/");
    while p.len() > 1 && p.ends_with('/') {
        p.pop();
    }
    if p.is_empty() || p == "/" {
        return Err(TreeError::EmptyPath);
    }
    let body = p.strip_prefix('/').unwrap_or(&p);
    if body.split('/').any(str::is_empty) {
        return Err(TreeError::EmptySegment { path: path.to_owned() });
    }
    Ok(p)
}

/// Lowercased form used for case-insensitive path matching.
pub fn path_key(path: &str) -> String {
    path.to_lowercase()
}

fn parent_path(path: &str) -> Option<&str> {
    path.rsplit_once('/').map(|(parent, _)| parent).filter(|p| !p.is_empty())
}


#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("empty folder path")]
    EmptyPath,
    #[error("path {path:?} contains an empty segment")]
    EmptySegment { path: String },
    #[error("no folders given")]
    NoFolders,
    #[error("duplicate folder path {0:?} (paths compare case-insensitively)")]
    DuplicatePath(String),
    #[error("folders {0:?} and {1:?} are both roots; the tree must have one")]
    MultipleRoots(String, String),
    #[error("folder {path:?} has no parent folder in the snapshot")]
    MissingParent { path: String },
    #[error("unknown folder path: {0}")]
    UnknownPath(String),
}

/// One folder of the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folder {
    pub path: String,
    pub sd: SecurityDescriptor,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
}

/// An immutable rooted folder tree addressed by normalized paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FolderTree {
    nodes: Vec<Folder>,
    by_key: HashMap<String, usize>,
    root: usize,
}

impl FolderTree {
    /// Builds a tree from `(path, descriptor)` pairs in any order. Exactly
    /// one folder must lack a parent in the set; every other folder's
    /// parent path must be present. Sibling names are case-insensitively
    /// unique by construction (duplicate keys are rejected).
    pub fn build(folders: Vec<(String, SecurityDescriptor)>) -> Result<Self, TreeError> {
        if folders.is_empty() {
            return Err(TreeError::NoFolders);
        }
        let mut nodes = Vec::with_capacity(folders.len());
        let mut by_key = HashMap::new();
        for (path, sd) in folders {
            let path = normalize_path(&path)?;
            let key = path_key(&path);
            if by_key.contains_key(&key) {
                return Err(TreeError::DuplicatePath(path));
            }
            by_key.insert(key, nodes.len());
            nodes.push(Folder { path, sd, parent: None, children: Vec::new(), depth: 0 });
        }
        let mut candidates: Vec<usize> = Vec::new();
        for id in 0..nodes.len() {
            let parent = parent_path(&nodes[id].path).map(path_key);
            match parent.and_then(|key| by_key.get(&key).copied()) {
                Some(pid) => {
                    nodes[id].parent = Some(pid);
                    nodes[pid].children.push(id);
                }
                None => candidates.push(id),
            }
        }
        let root = match candidates.as_slice() {
            [] => unreachable!("paths strictly shorten toward a root"),
            [only] => *only,
            rest => {
                // A candidate nested under some other folder is an orphan
                // whose intermediate parent is missing, not a second root.
                for &id in rest {
                    let key = path_key(&nodes[id].path);
                    let orphan = nodes
                        .iter()
                        .any(|other| key.starts_with(&format!("{}/", path_key(&other.path))));
                    if orphan {
                        return Err(TreeError::MissingParent { path: nodes[id].path.clone() });
                    }
                }
                return Err(TreeError::MultipleRoots(
                    nodes[rest[0]].path.clone(),
                    nodes[rest[1]].path.clone(),
                ));
            }
        };
        // Children in stable name order for deterministic traversal.
        let keys: Vec<String> = nodes.iter().map(|n| path_key(&n.path)).collect();
        for node in &mut nodes {
            node.children.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
        }
        let mut tree = FolderTree { nodes, by_key, root };
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            let depth = tree.nodes[id].depth;
            let children = tree.nodes[id].children.clone();
            for child in children {
                tree.nodes[child].depth = depth + 1;
                stack.push(child);
            }
        }
        Ok(tree.renumbered())
    }

    /// Rewrites the arena into depth-first preorder so that two trees built
    /// from the same folders compare equal regardless of input order.
    fn renumbered(self) -> Self {
        let order = self.preorder();
        let mut remap = vec![0usize; self.nodes.len()];
        for (new_id, &old_id) in order.iter().enumerate() {
            remap[old_id] = new_id;
        }
        let mut nodes: Vec<Option<Folder>> = self.nodes.into_iter().map(Some).collect();
        let nodes: Vec<Folder> = order
            .iter()
            .map(|&old_id| {
                let mut node = nodes[old_id].take().expect("preorder visits each node once");
                node.parent = node.parent.map(|p| remap[p]);
                for child in &mut node.children {
                    *child = remap[*child];
                }
                node
            })
            .collect();
        let by_key = self.by_key.into_iter().map(|(k, id)| (k, remap[id])).collect();
        FolderTree { nodes, by_key, root: remap[self.root] }
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &Folder {
        &self.nodes[id]
    }

    pub fn find(&self, path: &str) -> Option<usize> {
        let normalized = normalize_path(path).ok()?;
        self.by_key.get(&path_key(&normalized)).copied()
    }

    /// Node ids from the root down to `id`, inclusive.
    pub fn chain(&self, id: usize) -> Vec<usize> {
        let mut chain = vec![id];
        let mut cursor = id;
        while let Some(parent) = self.nodes[cursor].parent {
            chain.push(parent);
            cursor = parent;
        }
        chain.reverse();
        chain
    }

    /// All node ids in depth-first preorder.
    pub fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            order.push(id);
            for &child in self.nodes[id].children.iter().rev() {
                stack.push(child);
            }
        }
        order
    }
}

/// An ACE of an effective DACL, annotated with the folder it originated
/// from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectiveAce {
    pub ace: Ace,
    pub source: String,
    pub source_depth: usize,
}

/// The entries that govern access checks on one folder, in evaluation
/// order: own explicit entries, then ancestor copies nearest-first, then
/// any materialized (ID-flagged) entries the folder itself stores.
///
/// `null_dacl` marks a folder whose descriptor has no DACL; access checks
/// on it succeed unconditionally, while `aces` still carries what keeps
/// propagating to its children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectiveDacl {
    pub null_dacl: bool,
    pub aces: Vec<EffectiveAce>,
}

impl EffectiveDacl {
    pub fn empty() -> Self {
        EffectiveDacl { null_dacl: false, aces: Vec::new() }
    }
}

/// The copy of `ace` a child folder receives, or `None` when the entry
/// does not propagate.
fn propagate_copy(entry: &EffectiveAce) -> Option<EffectiveAce> {
    let flags = entry.ace.flags;
    if !flags.object_inherit() && !flags.container_inherit() {
        return None;
    }
    let mut copy = entry.ace.clone();
    copy.flags.insert(AceFlags::ID);
    copy.flags.remove(AceFlags::IO);
    if !flags.container_inherit() {
        // Object-inherit only: the copy applies to files, so it stays
        // inherit-only on a folder while continuing to propagate.
        copy.flags.insert(AceFlags::IO);
    }
    if flags.no_propagate() {
        copy.flags.remove(AceFlags::OI);
        copy.flags.remove(AceFlags::CI);
        copy.flags.remove(AceFlags::NP);
        if copy.flags.inherit_only() {
            // A file-only entry stopped by NP never applies to any folder.
            return None;
        }
    }
    Some(EffectiveAce { ace: copy, source: entry.source.clone(), source_depth: entry.source_depth })
}

/// Extends a parent's effective DACL onto one child descriptor.
pub fn propagate_step(
    parent: &EffectiveDacl,
    child_sd: &SecurityDescriptor,
    child_path: &str,
    child_depth: usize,
) -> EffectiveDacl {
    if !child_sd.dacl.present {
        // No DACL at the child: everything is allowed here, but ancestor
        // entries keep flowing through to deeper folders.
        let aces = parent.aces.iter().filter_map(propagate_copy).collect();
        return EffectiveDacl { null_dacl: true, aces };
    }
    let canon = canonicalize(&child_sd.dacl).expect("present DACL");
    let annotate = |ace: &Ace| EffectiveAce {
        ace: ace.clone(),
        source: child_path.to_owned(),
        source_depth: child_depth,
    };
    // Canonical order puts the folder's own (non-ID) entries first and its
    // materialized ID-flagged entries last.
    let split = canon.aces.iter().position(|a| a.flags.inherited()).unwrap_or(canon.aces.len());
    let mut aces: Vec<EffectiveAce> = canon.aces[..split].iter().map(annotate).collect();
    if !child_sd.protected {
        aces.extend(parent.aces.iter().filter_map(propagate_copy));
    }
    aces.extend(canon.aces[split..].iter().map(annotate));
    EffectiveDacl { null_dacl: false, aces }
}

/// Folds [`propagate_step`] from the root down to `path`.
pub fn effective_dacl(tree: &FolderTree, path: &str) -> Result<EffectiveDacl, TreeError> {
    let id = tree.find(path).ok_or_else(|| TreeError::UnknownPath(path.to_owned()))?;
    let mut effective = EffectiveDacl::empty();
    for node_id in tree.chain(id) {
        let node = tree.node(node_id);
        effective = propagate_step(&effective, &node.sd, &node.path, node.depth);
    }
    Ok(effective)
}

impl fmt::Display for EffectiveAce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ty = if self.ace.is_deny() { "deny" } else { "allow" };
        write!(
            f,
            "{ty} {} {} [{}] from {}",
            self.ace.sid,
            self.ace.mask,
            self.ace.flags.names().join(","),
            self.source
        )
    }
}
