//! Positional, field-aware inverted index over table records.
//!
//! Every posting remembers the table, the field type, the text unit within
//! the field, and the token positions inside that unit. Window matching
//! (exact phrases, unordered proximity) therefore never crosses a unit
//! boundary: a phrase cannot straddle two captions or two cells.
//!
//! Construction is deterministic and canonical: tables are ordered by id,
//! terms alphabetically, postings by (table, field, unit), so two builds
//! from the same records — in any input order — are identical.

pub mod tokenize;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{FieldType, TableRecord, FIELD_COUNT};
use crate::{Error, Result};

pub use tokenize::{is_stopword, split_words, stem, tokenize};

/// On-disk format version; bumped on any incompatible layout change.
pub const FORMAT_VERSION: u32 = 1;

/// Which part of a table a term or window is matched against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldScope {
    /// One of the eight concrete fields.
    Single(FieldType),
    /// The whole table as one bag: all fields pooled, unit boundaries kept.
    Union,
}

/// Window matching mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WindowMode {
    /// Terms in the given order at consecutive positions.
    Ordered,
    /// All terms anywhere within a span of `width` positions; each window
    /// start that covers all terms counts once.
    Unordered { width: u32 },
}

/// Per-table metadata kept alongside the postings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableEntry {
    pub table_id: String,
    pub doc_id: String,
    pub numeric_cells: u32,
    pub total_cells: u32,
    pub field_len: [u32; FIELD_COUNT],
}

impl TableEntry {
    pub fn union_len(&self) -> u64 {
        self.field_len.iter().map(|&l| u64::from(l)).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Posting {
    table: u32,
    field: u8,
    unit: u32,
    positions: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TermEntry {
    term: String,
    ctf: [u64; FIELD_COUNT],
    df: [u32; FIELD_COUNT],
    df_union: u32,
    postings: Vec<Posting>,
}

impl TermEntry {
    fn ctf_total(&self) -> u64 {
        self.ctf.iter().sum()
    }

    /// Postings for one (table, field) pair, in unit order.
    fn slice(&self, table: u32, field: u8) -> &[Posting] {
        let lo = self
            .postings
            .partition_point(|p| (p.table, p.field) < (table, field));
        let hi = self
            .postings
            .partition_point(|p| (p.table, p.field) <= (table, field));
        &self.postings[lo..hi]
    }

    fn table_slice(&self, table: u32) -> &[Posting] {
        let lo = self.postings.partition_point(|p| p.table < table);
        let hi = self.postings.partition_point(|p| p.table <= table);
        &self.postings[lo..hi]
    }
}

/// The inverted index plus collection statistics.
#[derive(Debug, Serialize, Deserialize)]
pub struct Index {
    version: u32,
    tables: Vec<TableEntry>,
    terms: Vec<TermEntry>,
    field_tokens: [u64; FIELD_COUNT],
    #[serde(skip)]
    table_lookup: HashMap<String, u32>,
    #[serde(skip)]
    term_lookup: HashMap<String, u32>,
}

impl Index {
    /// Build from records. Input order does not matter: the result is
    /// canonicalized by table id. Duplicate table ids are an error.
    pub fn build(records: &[TableRecord]) -> Result<Index> {
        let mut order: Vec<&TableRecord> = records.iter().collect();
        order.sort_by(|a, b| a.table_id.cmp(&b.table_id));
        for pair in order.windows(2) {
            if pair[0].table_id == pair[1].table_id {
                return Err(Error::DuplicateTableId(pair[0].table_id.clone()));
            }
        }

        let mut tables = Vec::with_capacity(order.len());
        let mut terms: BTreeMap<String, TermEntry> = BTreeMap::new();
        let mut field_tokens = [0u64; FIELD_COUNT];

        for (table_ix, record) in order.iter().enumerate() {
            let table_ix = table_ix as u32;
            let mut field_len = [0u32; FIELD_COUNT];
            for (field, units) in record.fields.iter() {
                let fi = field.ord();
                for (unit_ix, unit) in units.iter().enumerate() {
                    // Per-term positions within this unit.
                    let mut positions: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
                    let tokens = tokenize(unit);
                    for (pos, token) in tokens.iter().enumerate() {
                        positions.entry(token).or_default().push(pos as u32);
                    }
                    field_len[fi] += tokens.len() as u32;
                    field_tokens[fi] += tokens.len() as u64;
                    for (token, pos) in positions {
                        let entry = terms.entry(token.to_string()).or_insert_with(|| TermEntry {
                            term: token.to_string(),
                            ctf: [0; FIELD_COUNT],
                            df: [0; FIELD_COUNT],
                            df_union: 0,
                            postings: Vec::new(),
                        });
                        entry.ctf[fi] += pos.len() as u64;
                        entry.postings.push(Posting {
                            table: table_ix,
                            field: fi as u8,
                            unit: unit_ix as u32,
                            positions: pos,
                        });
                    }
                }
            }
            tables.push(TableEntry {
                table_id: record.table_id.clone(),
                doc_id: record.doc_id.clone(),
                numeric_cells: record.numeric_cell_count,
                total_cells: record.total_cell_count,
                field_len,
            });
        }

        // Document frequencies from the (already sorted) postings.
        let terms: Vec<TermEntry> = terms
            .into_values()
            .map(|mut entry| {
                let mut last_any: Option<u32> = None;
                let mut last_field: [Option<u32>; FIELD_COUNT] = [None; FIELD_COUNT];
                for posting in &entry.postings {
                    let fi = posting.field as usize;
                    if last_field[fi] != Some(posting.table) {
                        last_field[fi] = Some(posting.table);
                        entry.df[fi] += 1;
                    }
                    if last_any != Some(posting.table) {
                        last_any = Some(posting.table);
                        entry.df_union += 1;
                    }
                }
                entry
            })
            .collect();

        let mut index = Index {
            version: FORMAT_VERSION,
            tables,
            terms,
            field_tokens,
            table_lookup: HashMap::new(),
            term_lookup: HashMap::new(),
        };
        index.rebuild_lookups();
        Ok(index)
    }

    fn rebuild_lookups(&mut self) {
        self.table_lookup = self
            .tables
            .iter()
            .enumerate()
            .map(|(i, t)| (t.table_id.clone(), i as u32))
            .collect();
        self.term_lookup = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.term.clone(), i as u32))
            .collect();
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    pub fn tables(&self) -> &[TableEntry] {
        &self.tables
    }

    pub fn table(&self, ix: u32) -> &TableEntry {
        &self.tables[ix as usize]
    }

    pub fn table_ix(&self, table_id: &str) -> Option<u32> {
        self.table_lookup.get(table_id).copied()
    }

    pub fn term_ix(&self, term: &str) -> Option<u32> {
        self.term_lookup.get(term).copied()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// All indexed terms in canonical (alphabetical) order.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|t| t.term.as_str())
    }

    /// Total tokens in one field type across the corpus.
    pub fn field_token_count(&self, field: FieldType) -> u64 {
        self.field_tokens[field.ord()]
    }

    /// Total tokens in the whole corpus.
    pub fn corpus_token_count(&self) -> u64 {
        self.field_tokens.iter().sum()
    }

    pub fn scope_token_count(&self, scope: FieldScope) -> u64 {
        match scope {
            FieldScope::Single(f) => self.field_token_count(f),
            FieldScope::Union => self.corpus_token_count(),
        }
    }

    /// Length of a table under a scope: one field or the pooled table.
    pub fn scope_len(&self, table: u32, scope: FieldScope) -> u64 {
        let entry = self.table(table);
        match scope {
            FieldScope::Single(f) => u64::from(entry.field_len[f.ord()]),
            FieldScope::Union => entry.union_len(),
        }
    }

    /// Term count c(w, f) for one table under a scope.
    pub fn term_count_in(&self, term: &str, table: u32, scope: FieldScope) -> u64 {
        let Some(ix) = self.term_ix(term) else {
            return 0;
        };
        let entry = &self.terms[ix as usize];
        match scope {
            FieldScope::Single(f) => entry
                .slice(table, f.ord() as u8)
                .iter()
                .map(|p| p.positions.len() as u64)
                .sum(),
            FieldScope::Union => entry
                .table_slice(table)
                .iter()
                .map(|p| p.positions.len() as u64)
                .sum(),
        }
    }

    /// Collection frequency of a term under a scope.
    pub fn ctf(&self, term: &str, scope: FieldScope) -> u64 {
        let Some(ix) = self.term_ix(term) else {
            return 0;
        };
        let entry = &self.terms[ix as usize];
        match scope {
            FieldScope::Single(f) => entry.ctf[f.ord()],
            FieldScope::Union => entry.ctf_total(),
        }
    }

    /// Document frequency of a term under a scope.
    pub fn df(&self, term: &str, scope: FieldScope) -> u32 {
        let Some(ix) = self.term_ix(term) else {
            return 0;
        };
        let entry = &self.terms[ix as usize];
        match scope {
            FieldScope::Single(f) => entry.df[f.ord()],
            FieldScope::Union => entry.df_union,
        }
    }

    /// Union-scope term counts for one table, in term order. Terms that
    /// do not occur in the table are omitted.
    pub fn table_vector(&self, table: u32) -> Vec<(&str, u64)> {
        let mut out = Vec::new();
        for entry in &self.terms {
            let c: u64 = entry
                .table_slice(table)
                .iter()
                .map(|p| p.positions.len() as u64)
                .sum();
            if c > 0 {
                out.push((entry.term.as_str(), c));
            }
        }
        out
    }

    /// Tables containing any of the given terms, in table order.
    pub fn candidates(&self, terms: &[String]) -> Vec<u32> {
        let mut seen = vec![false; self.tables.len()];
        for term in terms {
            if let Some(ix) = self.term_ix(term) {
                for posting in &self.terms[ix as usize].postings {
                    seen[posting.table as usize] = true;
                }
            }
        }
        (0..self.tables.len() as u32)
            .filter(|&t| seen[t as usize])
            .collect()
    }

    /// Count window matches for `terms` in one table. Ordered windows are
    /// exact consecutive runs; unordered windows count each start position
    /// whose span covers every distinct term. A single term degenerates to
    /// its plain term count. Windows never leave a text unit.
    pub fn window_count(
        &self,
        table: u32,
        terms: &[String],
        scope: FieldScope,
        mode: WindowMode,
    ) -> u64 {
        if terms.len() == 1 {
            return self.term_count_in(&terms[0], table, scope);
        }
        match scope {
            FieldScope::Single(f) => self.window_count_field(table, terms, f, mode),
            FieldScope::Union => FieldType::ALL
                .iter()
                .map(|&f| self.window_count_field(table, terms, f, mode))
                .sum(),
        }
    }

    fn window_count_field(
        &self,
        table: u32,
        terms: &[String],
        field: FieldType,
        mode: WindowMode,
    ) -> u64 {
        let fi = field.ord() as u8;
        // positions per term per unit
        let mut per_term: Vec<HashMap<u32, &[u32]>> = Vec::with_capacity(terms.len());
        for term in terms {
            let Some(ix) = self.term_ix(term) else {
                return 0;
            };
            let slice = self.terms[ix as usize].slice(table, fi);
            if slice.is_empty() {
                return 0;
            }
            per_term.push(
                slice
                    .iter()
                    .map(|p| (p.unit, p.positions.as_slice()))
                    .collect(),
            );
        }
        // Units where every term occurs.
        let mut units: Vec<u32> = per_term[0].keys().copied().collect();
        units.sort_unstable();
        units.retain(|u| per_term.iter().all(|m| m.contains_key(u)));

        let mut count = 0u64;
        for unit in units {
            let lists: Vec<&[u32]> = per_term.iter().map(|m| m[&unit]).collect();
            count += match mode {
                WindowMode::Ordered => count_ordered(&lists),
                WindowMode::Unordered { width } => count_unordered(&lists, width),
            };
        }
        count
    }

    /// Corpus-wide window count, scanned exactly over all tables.
    pub fn window_collection_count(
        &self,
        terms: &[String],
        scope: FieldScope,
        mode: WindowMode,
    ) -> u64 {
        (0..self.tables.len() as u32)
            .map(|t| self.window_count(t, terms, scope, mode))
            .sum()
    }

    /// Write collection statistics as TSV: term, field, ctf, df. Rows are
    /// sorted by term then field order; fields without occurrences are
    /// omitted.
    pub fn write_stats_tsv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "term\tfield\tctf\tdf")?;
        for entry in &self.terms {
            for field in FieldType::ALL {
                let fi = field.ord();
                if entry.ctf[fi] > 0 {
                    writeln!(
                        out,
                        "{}\t{}\t{}\t{}",
                        entry.term,
                        field.name(),
                        entry.ctf[fi],
                        entry.df[fi]
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Persist into a directory: `meta.json` carries the format version,
    /// `index.json` the index itself.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = serde_json::json!({
            "format_version": FORMAT_VERSION,
            "tables": self.tables.len(),
            "terms": self.terms.len(),
        });
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        fs::write(dir.join("index.json"), serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Index> {
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
        let found = meta
            .get("format_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if found != FORMAT_VERSION {
            return Err(Error::IndexVersion {
                found,
                supported: FORMAT_VERSION,
            });
        }
        let mut index: Index = serde_json::from_str(&fs::read_to_string(dir.join("index.json"))?)?;
        index.rebuild_lookups();
        Ok(index)
    }
}

/// Consecutive-run matches: position p where term i sits at p + i.
fn count_ordered(lists: &[&[u32]]) -> u64 {
    let mut count = 0;
    for &p in lists[0] {
        if lists[1..]
            .iter()
            .enumerate()
            .all(|(i, l)| l.binary_search(&(p + 1 + i as u32)).is_ok())
        {
            count += 1;
        }
    }
    count
}

/// Window starts `s` whose span [s, s+width-1] covers every term.
/// Distinct terms only need to be present somewhere in the span.
fn count_unordered(lists: &[&[u32]], width: u32) -> u64 {
    let max_pos = lists
        .iter()
        .filter_map(|l| l.last())
        .max()
        .copied()
        .unwrap_or(0);
    let mut count = 0;
    for s in 0..=max_pos {
        let end = s + width; // exclusive
        let all_in = lists.iter().all(|l| {
            let lo = l.partition_point(|&p| p < s);
            lo < l.len() && l[lo] < end
        });
        if all_in {
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NumericMatcher;

    fn record(table_id: &str, caption: &str) -> TableRecord {
        let mut r = TableRecord::new(table_id, "doc");
        r.fields.push(FieldType::Caption, caption);
        r.refresh_cell_counts(&NumericMatcher::new());
        r
    }

    #[test]
    fn counts_and_lengths() {
        let records = vec![
            record("t1", "newtonian gravity constant"),
            record("t2", "gravity of the newtonian model"),
        ];
        let index = Index::build(&records).unwrap();
        assert_eq!(index.table_count(), 2);
        let cap = FieldScope::Single(FieldType::Caption);
        let t1 = index.table_ix("t1").unwrap();
        let t2 = index.table_ix("t2").unwrap();
        assert_eq!(index.term_count_in("gravity", t1, cap), 1);
        assert_eq!(index.scope_len(t1, cap), 3);
        assert_eq!(index.scope_len(t2, cap), 3); // stopwords removed
        assert_eq!(index.ctf("gravity", cap), 2);
        assert_eq!(index.df("gravity", cap), 2);
        assert_eq!(index.df("model", FieldScope::Union), 1);
        assert_eq!(index.field_token_count(FieldType::Caption), 6);
    }

    #[test]
    fn ordered_windows_need_adjacency_in_order() {
        let records = vec![
            record("t1", "newtonian gravity constant"),
            record("t2", "gravity of the newtonian model"),
        ];
        let index = Index::build(&records).unwrap();
        let cap = FieldScope::Single(FieldType::Caption);
        let terms = vec!["newtonian".to_string(), "gravity".to_string()];
        let t1 = index.table_ix("t1").unwrap();
        let t2 = index.table_ix("t2").unwrap();
        assert_eq!(index.window_count(t1, &terms, cap, WindowMode::Ordered), 1);
        // reversed order does not match
        let rev = vec!["gravity".to_string(), "newtonian".to_string()];
        assert_eq!(index.window_count(t1, &rev, cap, WindowMode::Ordered), 0);
        // stopword removal leaves gravity/newtonian non-adjacent but within
        // an 8-wide window
        assert_eq!(index.window_count(t2, &terms, cap, WindowMode::Ordered), 0);
        assert_eq!(
            index.window_count(t2, &terms, cap, WindowMode::Unordered { width: 8 }),
            1
        );
    }

    #[test]
    fn windows_do_not_cross_unit_boundaries() {
        let mut r = TableRecord::new("t", "doc");
        r.fields.push(FieldType::RowHeader, "newtonian");
        r.fields.push(FieldType::RowHeader, "gravity");
        let index = Index::build(&[r]).unwrap();
        let terms = vec!["newtonian".to_string(), "gravity".to_string()];
        let scope = FieldScope::Single(FieldType::RowHeader);
        assert_eq!(index.window_count(0, &terms, scope, WindowMode::Ordered), 0);
        assert_eq!(
            index.window_count(0, &terms, scope, WindowMode::Unordered { width: 8 }),
            0
        );
    }

    #[test]
    fn single_term_window_is_term_frequency() {
        let records = vec![record("t1", "gravity gravity gravity")];
        let index = Index::build(&records).unwrap();
        let terms = vec!["gravity".to_string()];
        let cap = FieldScope::Single(FieldType::Caption);
        assert_eq!(index.window_count(0, &terms, cap, WindowMode::Ordered), 3);
        assert_eq!(
            index.window_count(0, &terms, cap, WindowMode::Unordered { width: 8 }),
            3
        );
    }

    #[test]
    fn duplicate_table_ids_are_rejected() {
        let records = vec![record("t1", "a b"), record("t1", "c d")];
        match Index::build(&records) {
            Err(Error::DuplicateTableId(id)) => assert_eq!(id, "t1"),
            other => panic!("expected duplicate id error, got {other:?}"),
        }
    }

    #[test]
    fn build_is_permutation_invariant() {
        let records = vec![
            record("b", "gravity of planets"),
            record("a", "newtonian gravity"),
            record("c", "dark matter halo"),
        ];
        let mut shuffled = records.clone();
        shuffled.rotate_left(2);
        let a = Index::build(&records).unwrap();
        let b = Index::build(&shuffled).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn empty_corpus_is_fine() {
        let index = Index::build(&[]).unwrap();
        assert_eq!(index.table_count(), 0);
        assert_eq!(index.corpus_token_count(), 0);
    }
}
