//! Python bindings: snapshots, effective-rights evaluation and the CSV
//! report, plus the SDDL codec.

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use aclscope_core::eval::Engine;
use aclscope_core::icacls::{import_snapshot, parse_icacls};
use aclscope_core::mask::ReportRight;
use aclscope_core::principals::{Directory, PrincipalKind, Sid};
use aclscope_core::report::{build_table, render_csv, sort_table, SortDirection};
use aclscope_core::sddl::{emit_sddl, parse_sddl};
use aclscope_core::snapshot::{
    gen_paper_fixture, gen_random, load_snapshot, save_snapshot, FixtureVariant, GenParams,
};

fn value_err(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// A loaded folder-tree snapshot with its principal directory.
#[pyclass(name = "Snapshot", module = "aclscope_py")]
struct PySnapshot {
    inner: aclscope_core::Snapshot,
}

impl PySnapshot {
    fn resolve_sid(&self, key: &str) -> PyResult<Sid> {
        self.inner
            .directory()
            .resolve(key)
            .map(|p| p.sid)
            .map_err(|e| PyKeyError::new_err(e.to_string()))
    }

    fn parse_rights(&self, rights: Option<Vec<String>>) -> PyResult<Vec<ReportRight>> {
        match rights {
            None => Ok(ReportRight::ALL.to_vec()),
            Some(names) => names
                .iter()
                .map(|name| {
                    ReportRight::from_name(name)
                        .ok_or_else(|| value_err(format!("unknown right name {name:?}")))
                })
                .collect(),
        }
    }
}

#[pymethods]
impl PySnapshot {
    /// Load a snapshot from a JSON file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let bytes = std::fs::read(path).map_err(value_err)?;
        Ok(PySnapshot { inner: load_snapshot(&bytes).map_err(value_err)? })
    }

    /// Load a snapshot from JSON text.
    #[staticmethod]
    fn loads(text: &str) -> PyResult<Self> {
        Ok(PySnapshot { inner: load_snapshot(text.as_bytes()).map_err(value_err)? })
    }

    /// Build one of the built-in experiment fixtures: "table3" or "icacls".
    #[staticmethod]
    fn fixture(variant: &str) -> PyResult<Self> {
        let variant = match variant {
            "table3" => FixtureVariant::Table3,
            "icacls" => FixtureVariant::Icacls,
            other => return Err(value_err(format!("unknown fixture variant {other:?}"))),
        };
        Ok(PySnapshot { inner: gen_paper_fixture(variant) })
    }

    /// Generate a seeded random snapshot.
    #[staticmethod]
    #[pyo3(signature = (seed, folders=25, users=6, groups=3, max_depth=4))]
    fn random(seed: u64, folders: u32, users: u32, groups: u32, max_depth: u32) -> PyResult<Self> {
        let params =
            GenParams { seed, folders, users, groups, max_depth, ..GenParams::default() };
        Ok(PySnapshot { inner: gen_random(&params).map_err(value_err)? })
    }

    /// Import an `icacls <root> /t` dump. Unresolvable accounts are kept
    /// with marker SIDs and reported in the returned defect list.
    #[staticmethod]
    #[pyo3(signature = (text, domain="IMPORT"))]
    fn import_icacls(text: &str, domain: &str) -> PyResult<(Self, Vec<String>)> {
        let folders = parse_icacls(text).map_err(value_err)?;
        let directory = Directory::new(domain, Vec::new()).map_err(value_err)?;
        let (snapshot, defects) = import_snapshot(&folders, directory).map_err(value_err)?;
        Ok((
            PySnapshot { inner: snapshot },
            defects.iter().map(|d| d.to_string()).collect(),
        ))
    }

    #[getter]
    fn domain(&self) -> &str {
        self.inner.domain()
    }

    /// Serialize to canonical JSON text.
    fn dumps(&self) -> PyResult<String> {
        String::from_utf8(save_snapshot(&self.inner)).map_err(value_err)
    }

    /// Write the snapshot to a JSON file.
    fn save(&self, path: &str) -> PyResult<()> {
        std::fs::write(path, save_snapshot(&self.inner)).map_err(value_err)
    }

    /// All folder paths in depth-first order.
    fn folders(&self) -> Vec<String> {
        let tree = self.inner.tree();
        tree.preorder().into_iter().map(|id| tree.node(id).path.clone()).collect()
    }

    /// All principals as (sid, name, kind) tuples.
    fn principals(&self) -> Vec<(String, String, String)> {
        self.inner
            .directory()
            .principals()
            .map(|p| {
                let kind = match p.kind {
                    PrincipalKind::User => "user",
                    PrincipalKind::Group => "group",
                };
                (p.sid.to_string(), p.name.clone(), kind.to_owned())
            })
            .collect()
    }

    /// SIDs an access check matches for the given user: the user, every
    /// group it transitively belongs to, and Everyone.
    fn closure(&self, user: &str) -> PyResult<Vec<String>> {
        let sid = self.resolve_sid(user)?;
        let mut sids: Vec<String> = self
            .inner
            .directory()
            .membership_closure(&sid)
            .map_err(|e| PyKeyError::new_err(e.to_string()))?
            .into_iter()
            .map(|s| s.to_string())
            .collect();
        sids.sort();
        Ok(sids)
    }

    /// The nineteen report rights of one user on one folder, as an ordered
    /// dict of right name to bool.
    fn effective_rights<'py>(
        &self,
        py: Python<'py>,
        user: &str,
        folder: &str,
    ) -> PyResult<Bound<'py, PyDict>> {
        let sid = self.resolve_sid(user)?;
        let row = aclscope_core::eval::effective_rights(&self.inner, &sid, folder)
            .map_err(|e| PyKeyError::new_err(e.to_string()))?;
        let dict = PyDict::new(py);
        for (right, allowed) in row.iter() {
            dict.set_item(right.name(), allowed)?;
        }
        Ok(dict)
    }

    /// CSV report for users over folders. Defaults: every folder in the
    /// snapshot and all nineteen rights.
    #[pyo3(signature = (users, folders=None, rights=None, sort=None, descending=false))]
    fn csv(
        &self,
        users: Vec<String>,
        folders: Option<Vec<String>>,
        rights: Option<Vec<String>>,
        sort: Option<String>,
        descending: bool,
    ) -> PyResult<String> {
        let sids: Vec<Sid> =
            users.iter().map(|u| self.resolve_sid(u)).collect::<PyResult<_>>()?;
        let folders = folders.unwrap_or_else(|| self.folders());
        let rights = self.parse_rights(rights)?;
        let matrix = Engine::new(&self.inner)
            .build_matrix(&sids, &folders, &rights)
            .map_err(|e| PyKeyError::new_err(e.to_string()))?;
        let mut table = build_table(&matrix, self.inner.directory());
        if let Some(column) = sort {
            let direction =
                if descending { SortDirection::Descending } else { SortDirection::Ascending };
            table = sort_table(&table, &column, direction).map_err(value_err)?;
        }
        String::from_utf8(render_csv(&table)).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Snapshot(domain={:?}, principals={}, folders={})",
            self.inner.domain(),
            self.inner.directory().len(),
            self.inner.tree().len()
        )
    }
}

/// Parse SDDL text and re-emit it in canonical form.
#[pyfunction]
fn canonical_sddl(text: &str) -> PyResult<String> {
    let (sd, _) = parse_sddl(text).map_err(value_err)?;
    emit_sddl(&sd).map_err(value_err)
}

/// The nineteen report right names, in report column order.
#[pyfunction]
fn right_names() -> Vec<&'static str> {
    ReportRight::ALL.iter().map(|r| r.name()).collect()
}

#[pymodule]
fn aclscope_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySnapshot>()?;
    m.add_function(wrap_pyfunction!(canonical_sddl, m)?)?;
    m.add_function(wrap_pyfunction!(right_names, m)?)?;
    Ok(())
}
