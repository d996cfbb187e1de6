//! Web tables: ingestion, column typing, topic/subject/body extraction,
//! the anchor-pair index and table-expanded (2-hop) sentence bags.

mod elements;
mod expand;
mod index;

pub use elements::{classify_columns, extract_elements, TableElements};
pub use expand::expand_bag;
pub use index::{build_anchor_index, Anchor, AnchorIndex, Criterion, Provenance, INDEX_MAGIC, INDEX_VERSION};

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Share of linked cells a column needs to count as a named-entity column.
pub const DEFAULT_NE_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub text: String,
    #[serde(rename = "eid")]
    pub entity_id: Option<String>,
}

impl Cell {
    pub fn linked(text: impl Into<String>, entity: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            entity_id: Some(entity.into()),
        }
    }

    pub fn plain(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            entity_id: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.text.trim().is_empty()
    }
}

/// A linked table. Rows are padded with empty cells to a rectangular grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebTable {
    pub table_id: String,
    #[serde(rename = "page_eid")]
    pub page_entity_id: Option<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl WebTable {
    pub fn new(
        table_id: impl Into<String>,
        page_entity_id: Option<String>,
        rows: Vec<Vec<Cell>>,
    ) -> std::result::Result<Self, String> {
        let mut table = Self {
            table_id: table_id.into(),
            page_entity_id,
            rows,
        };
        table.normalize()?;
        Ok(table)
    }

    fn normalize(&mut self) -> std::result::Result<(), String> {
        let width = self.rows.iter().map(Vec::len).max().unwrap_or(0);
        if self.rows.is_empty() || width == 0 {
            return Err(format!("table {:?} has no cells", self.table_id));
        }
        for (r, row) in self.rows.iter_mut().enumerate() {
            if let Some(c) = row.iter().position(|c| c.entity_id.is_some() && c.is_empty()) {
                return Err(format!("cell ({r}, {c}) is linked but has no text"));
            }
            row.resize_with(width, Cell::default);
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.rows[row][col]
    }

    /// Rewrites page and cell links through a URL/title → entity id map.
    /// Existing ids found in the map are replaced; unlinked cells whose text
    /// is a key become linked.
    pub fn apply_entity_map(&mut self, map: &EntityMap) {
        if let Some(page) = &self.page_entity_id {
            if let Some(id) = map.get(page) {
                self.page_entity_id = Some(id.clone());
            }
        }
        for cell in self.rows.iter_mut().flatten() {
            let mapped = match &cell.entity_id {
                Some(eid) => map.get(eid),
                None if !cell.is_empty() => map.get(cell.text.trim()),
                None => None,
            };
            if let Some(id) = mapped {
                cell.entity_id = Some(id.clone());
            }
        }
    }
}

/// URL-or-title → entity id, as read from `entity_map.tsv`.
pub type EntityMap = HashMap<String, String>;

pub fn load_entity_map(path: impl AsRef<Path>) -> Result<EntityMap> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = EntityMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (key, id) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.into(),
            line: i + 1,
            message: "expected `key<TAB>entity_id`".into(),
        })?;
        map.insert(key.trim().to_owned(), id.trim().to_owned());
    }
    Ok(map)
}

/// Reads `tables.jsonl`, optionally linking through an entity map.
pub fn load_tables(path: impl AsRef<Path>, entity_map: Option<&EntityMap>) -> Result<Vec<WebTable>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    let parsed: Vec<Result<WebTable>> = lines
        .par_iter()
        .map(|&(line, l)| {
            let mut table: WebTable = serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.into(),
                line,
                message: e.to_string(),
            })?;
            if let Some(map) = entity_map {
                table.apply_entity_map(map);
            }
            table.normalize().map_err(|message| Error::Validation {
                path: path.into(),
                line,
                message,
            })?;
            Ok(table)
        })
        .collect();
    parsed.into_iter().collect()
}

pub fn tables_to_jsonl(tables: &[WebTable]) -> String {
    let mut out = String::new();
    for t in tables {
        out.push_str(&serde_json::to_string(t).expect("table serialises"));
        out.push('\n');
    }
    out
}
