use std::collections::{btree_map, BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::elements::extract_elements;
use super::WebTable;
use crate::corpus::EntityPair;
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 8] = b"RDS2AIDX";
pub const INDEX_VERSION: u32 = 1;

/// Which table pattern made two pairs anchors of each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    /// Both pairs are `(topic, subject entity)`.
    TopicSubject,
    /// Both pairs are `(subject entity, topic)`; the reversed topic group.
    SubjectTopic,
    /// Same two columns, each pair within one row, one column is the subject.
    RowPair,
}

impl Criterion {
    fn code(self) -> u8 {
        match self {
            Criterion::TopicSubject => 0,
            Criterion::SubjectTopic => 1,
            Criterion::RowPair => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Criterion::TopicSubject),
            1 => Some(Criterion::SubjectTopic),
            2 => Some(Criterion::RowPair),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Provenance {
    pub table_id: String,
    pub criterion: Criterion,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Anchor {
    pub pair: EntityPair,
    pub provenance: Provenance,
}

/// Entity pair → its anchor pairs, with the table and criterion that linked
/// them. Symmetric and irreflexive.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnchorIndex {
    anchors: BTreeMap<EntityPair, BTreeSet<Anchor>>,
}

type Group = (Criterion, BTreeSet<EntityPair>);

/// Anchor groups of a single table. Every two distinct pairs in one group are
/// anchors of each other.
fn table_groups(table: &WebTable, ne_threshold: f64) -> Vec<Group> {
    let elements = extract_elements(table, ne_threshold);
    let Some(subject) = elements.subject_column else {
        return Vec::new();
    };
    let mut groups = Vec::new();

    if let Some(topic) = &elements.topic {
        let subjects = elements.subject_entities.iter().filter(|s| *s != topic);
        let forward = subjects.clone().map(|s| EntityPair::new(topic.clone(), s.clone())).collect();
        let reversed = subjects.map(|s| EntityPair::new(s.clone(), topic.clone())).collect();
        groups.push((Criterion::TopicSubject, forward));
        groups.push((Criterion::SubjectTopic, reversed));
    }

    for &c1 in &elements.ne_columns {
        for &c2 in &elements.ne_columns {
            if c1 == c2 || (c1 != subject && c2 != subject) {
                continue;
            }
            let group = table
                .rows
                .iter()
                .filter_map(|row| match (&row[c1].entity_id, &row[c2].entity_id) {
                    (Some(h), Some(t)) if h != t => Some(EntityPair::new(h.clone(), t.clone())),
                    _ => None,
                })
                .collect();
            groups.push((Criterion::RowPair, group));
        }
    }
    groups.retain(|(_, g): &Group| g.len() > 1);
    groups
}

fn table_edges(table: &WebTable, ne_threshold: f64) -> Vec<(EntityPair, Anchor)> {
    let mut edges = Vec::new();
    for (criterion, group) in table_groups(table, ne_threshold) {
        let provenance = Provenance {
            table_id: table.table_id.clone(),
            criterion,
        };
        for p in &group {
            for q in group.iter().filter(|q| *q != p) {
                edges.push((
                    p.clone(),
                    Anchor {
                        pair: q.clone(),
                        provenance: provenance.clone(),
                    },
                ));
            }
        }
    }
    edges
}

/// Builds the anchor index from a table corpus. Tables are processed in
/// parallel; the merge goes through ordered maps, so the result is the same
/// for any degree of parallelism.
pub fn build_anchor_index(tables: &[WebTable], ne_threshold: f64) -> AnchorIndex {
    let per_table: Vec<Vec<(EntityPair, Anchor)>> = tables
        .par_iter()
        .map(|t| table_edges(t, ne_threshold))
        .collect();
    let mut index = AnchorIndex::default();
    for (pair, anchor) in per_table.into_iter().flatten() {
        index.insert(pair, anchor);
    }
    index
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn str(&mut self) -> std::result::Result<String, String> {
        let len = self.u32()? as usize;
        let at = self.pos;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| format!("invalid UTF-8 at byte {at}"))
    }

    fn pair(&mut self) -> std::result::Result<EntityPair, String> {
        Ok(EntityPair::new(self.str()?, self.str()?))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

impl AnchorIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `anchor` under `pair` and the mirrored entry under the anchor.
    pub fn insert(&mut self, pair: EntityPair, anchor: Anchor) {
        if pair == anchor.pair {
            return;
        }
        let mirror = Anchor {
            pair: pair.clone(),
            provenance: anchor.provenance.clone(),
        };
        self.anchors.entry(anchor.pair.clone()).or_default().insert(mirror);
        self.anchors.entry(pair).or_default().insert(anchor);
    }

    /// Adds the anchors contributed by one more table.
    pub fn add_table(&mut self, table: &WebTable, ne_threshold: f64) {
        for (pair, anchor) in table_edges(table, ne_threshold) {
            self.insert(pair, anchor);
        }
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn contains(&self, pair: &EntityPair) -> bool {
        self.anchors.contains_key(pair)
    }

    pub fn anchors_of(&self, pair: &EntityPair) -> impl Iterator<Item = &Anchor> {
        self.anchors.get(pair).into_iter().flatten()
    }

    /// Distinct anchor pairs of `pair`, ignoring provenance.
    pub fn anchor_pairs(&self, pair: &EntityPair) -> BTreeSet<&EntityPair> {
        self.anchors_of(pair).map(|a| &a.pair).collect()
    }

    pub fn iter(&self) -> btree_map::Iter<'_, EntityPair, BTreeSet<Anchor>> {
        self.anchors.iter()
    }

    /// Pair-level view: pair → set of anchor pairs.
    pub fn pair_relation(&self) -> BTreeMap<EntityPair, BTreeSet<EntityPair>> {
        self.anchors
            .iter()
            .map(|(p, set)| (p.clone(), set.iter().map(|a| a.pair.clone()).collect()))
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.anchors.iter().all(|(p, set)| {
            set.iter().all(|a| {
                self.anchors.get(&a.pair).is_some_and(|back| {
                    back.contains(&Anchor {
                        pair: p.clone(),
                        provenance: a.provenance.clone(),
                    })
                })
            })
        })
    }

    pub fn is_irreflexive(&self) -> bool {
        self.anchors.iter().all(|(p, set)| set.iter().all(|a| &a.pair != p))
    }

    /// Binary form: magic, version (u32), then one record per pair in sorted
    /// order: pair, anchor count (u32), anchors as (pair, table id, criterion
    /// byte). Strings are u32 length + UTF-8 bytes; integers little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(INDEX_MAGIC);
        buf.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        for (pair, anchors) in &self.anchors {
            put_str(&mut buf, &pair.head);
            put_str(&mut buf, &pair.tail);
            buf.extend_from_slice(&(anchors.len() as u32).to_le_bytes());
            for a in anchors {
                put_str(&mut buf, &a.pair.head);
                put_str(&mut buf, &a.pair.tail);
                put_str(&mut buf, &a.provenance.table_id);
                buf.push(a.provenance.criterion.code());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != INDEX_MAGIC {
            return Err("bad magic".into());
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let mut anchors = BTreeMap::new();
        let mut last: Option<EntityPair> = None;
        while !r.done() {
            let pair = r.pair()?;
            if last.as_ref().is_some_and(|l| l >= &pair) {
                return Err(format!("records out of order at {pair}"));
            }
            let count = r.u32()?;
            let mut set = BTreeSet::new();
            for _ in 0..count {
                let anchor_pair = r.pair()?;
                let table_id = r.str()?;
                let code = r.take(1)?[0];
                let criterion = Criterion::from_code(code).ok_or_else(|| format!("bad criterion {code}"))?;
                set.insert(Anchor {
                    pair: anchor_pair,
                    provenance: Provenance { table_id, criterion },
                });
            }
            last = Some(pair.clone());
            anchors.insert(pair, set);
        }
        Ok(Self { anchors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|message| Error::Index {
            path: path.into(),
            message,
        })
    }
}
