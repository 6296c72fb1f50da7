//! Tabular Yes/No reports over a rights matrix: header layout, column
//! sorting and CSV emission.


use thiserror::Error;

use crate::eval::RightsMatrix;
use crate::mask::ReportRight;
use crate::principals::Directory;

/// A rendered table: fixed `User`/`Directory` columns followed by the
/// selected rights in report order, each cell `Yes` or `No`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortDirection {
    Ascending,
    Descending,
}

/// Builds the table for a matrix. User cells carry the principal's name
/// without its domain prefix, matching the report the program's window
/// shows.
pub fn build_table(matrix: &RightsMatrix, directory: &Directory) -> ReportTable {
    let mut header = vec!["User".to_owned(), "Directory".to_owned()];
    header.extend(matrix.selected.iter().map(|r| r.name().to_owned()));
    let rows = matrix
        .rows
        .iter()
        .map(|row| {
            let user = if row.user.is_everyone() {
                "Everyone".to_owned()
            } else {
                directory
                    .get(&row.user)
                    .map(|p| p.leaf_name().to_owned())
                    .unwrap_or_else(|| row.user.to_string())
            };
            let mut cells = vec![user, row.folder.clone()];
            cells.extend(
                matrix
                    .selected
                    .iter()
                    .map(|&right| if row.get(right) { "Yes".to_owned() } else { "No".to_owned() }),
            );
            cells
        })
        .collect();
    ReportTable { header, rows }
}

fn csv_field(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\r') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_owned()
    }
}

/// RFC 4180-style CSV: comma separator, CRLF record ends, fields quoted
/// only when they contain a comma, quote or line break. UTF-8, no BOM.
pub fn render_csv(table: &ReportTable) -> Vec<u8> {
    let mut out = String::new();
    for record in std::iter::once(&table.header).chain(table.rows.iter()) {
        let line: Vec<String> = record.iter().map(|f| csv_field(f)).collect();
        out.push_str(&line.join(","));
        out.push_str("\r\n");
    }
    out.into_bytes()
}

/// Renders a matrix straight to CSV bytes.
pub fn render_matrix_csv(matrix: &RightsMatrix, directory: &Directory) -> Vec<u8> {
    render_csv(&build_table(matrix, directory))
}

/// Stable sort by one column. Text columns compare case-insensitively;
/// right columns order `Yes` before `No` when ascending, so grants group
/// first. Ties keep their prior order.
pub fn sort_table(
    table: &ReportTable,
    column: &str,
    direction: SortDirection,
) -> Result<ReportTable, ReportError> {
    let index = table
        .header
        .iter()
        .position(|name| name.eq_ignore_ascii_case(column))
        .ok_or_else(|| ReportError::UnknownColumn(column.to_owned()))?;
    let is_right_column = ReportRight::from_name(&table.header[index]).is_some();
    let key = |row: &Vec<String>| -> (u8, String) {
        let cell = row.get(index).map(String::as_str).unwrap_or("");
        if is_right_column {
            (if cell == "Yes" { 0 } else { 1 }, String::new())
        } else {
            (0, cell.to_lowercase())
        }
    };
    let mut rows = table.rows.clone();
    rows.sort_by(|a, b| {
        let ordering = key(a).cmp(&key(b));
        match direction {
            SortDirection::Ascending => ordering,
            SortDirection::Descending => ordering.reverse(),
        }
    });
    Ok(ReportTable { header: table.header.clone(), rows })
}

/// The canonical 21-column header for a report over all nineteen rights.
pub fn full_header() -> Vec<String> {
    let mut header = vec!["User".to_owned(), "Directory".to_owned()];
    header.extend(ReportRight::ALL.iter().map(|r| r.name().to_owned()));
    header
}

impl ReportTable {
    /// Multiset comparison helper for permutation checks.
    pub fn sorted_rows(&self) -> Vec<Vec<String>> {
        let mut rows = self.rows.clone();
        rows.sort();
        rows
    }
}
