//! Table records, the XML interchange format, and numeric-content detection.
//!
//! A table is a small structured document: eight text fields spread over
//! three levels of context (article, table, cell). Each field holds a list
//! of *text units* — individual sentences, headers, or cells — and window
//! matching later on never crosses a unit boundary, so the unit structure
//! is preserved all the way into the index.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Context level a field belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Document,
    Table,
    Cell,
}

/// The eight text fields of a table record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldType {
    ArticleTitle,
    Abstract,
    Caption,
    ReferringSentence,
    Footnote,
    RowHeader,
    ColumnHeader,
    CellValue,
}

pub const FIELD_COUNT: usize = 8;

impl FieldType {
    pub const ALL: [FieldType; FIELD_COUNT] = [
        FieldType::ArticleTitle,
        FieldType::Abstract,
        FieldType::Caption,
        FieldType::ReferringSentence,
        FieldType::Footnote,
        FieldType::RowHeader,
        FieldType::ColumnHeader,
        FieldType::CellValue,
    ];

    pub fn level(self) -> Level {
        match self {
            FieldType::ArticleTitle | FieldType::Abstract => Level::Document,
            FieldType::Caption | FieldType::ReferringSentence | FieldType::Footnote => Level::Table,
            FieldType::RowHeader | FieldType::ColumnHeader | FieldType::CellValue => Level::Cell,
        }
    }

    /// Stable snake_case name, used in stats dumps and config files.
    pub fn name(self) -> &'static str {
        match self {
            FieldType::ArticleTitle => "article_title",
            FieldType::Abstract => "abstract",
            FieldType::Caption => "caption",
            FieldType::ReferringSentence => "referring_sentence",
            FieldType::Footnote => "footnote",
            FieldType::RowHeader => "row_header",
            FieldType::ColumnHeader => "column_header",
            FieldType::CellValue => "cell_value",
        }
    }

    pub fn from_name(name: &str) -> Option<FieldType> {
        FieldType::ALL.iter().copied().find(|f| f.name() == name)
    }

    /// Position of this field in [`FieldType::ALL`]; used for array storage.
    pub fn ord(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Text units per field, stored densely so every field is always present.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FieldMap([Vec<String>; FIELD_COUNT]);

impl FieldMap {
    pub fn get(&self, field: FieldType) -> &[String] {
        &self.0[field.ord()]
    }

    pub fn get_mut(&mut self, field: FieldType) -> &mut Vec<String> {
        &mut self.0[field.ord()]
    }

    pub fn push(&mut self, field: FieldType, unit: impl Into<String>) {
        self.0[field.ord()].push(unit.into());
    }

    /// Iterate `(field, units)` in canonical field order.
    pub fn iter(&self) -> impl Iterator<Item = (FieldType, &[String])> {
        FieldType::ALL.iter().map(move |&f| (f, self.get(f)))
    }
}

// Serialized as a name-keyed map so record files are self-describing.
impl Serialize for FieldMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = BTreeMap::new();
        for (field, units) in self.iter() {
            if !units.is_empty() {
                map.insert(field.name(), units);
            }
        }
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FieldMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw: BTreeMap<String, Vec<String>> = BTreeMap::deserialize(deserializer)?;
        let mut fields = FieldMap::default();
        for (name, units) in raw {
            let field = FieldType::from_name(&name)
                .ok_or_else(|| D::Error::custom(format!("unknown field `{name}`")))?;
            *fields.get_mut(field) = units;
        }
        Ok(fields)
    }
}

/// One table with its three levels of textual context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRecord {
    pub table_id: String,
    pub doc_id: String,
    pub fields: FieldMap,
    /// Cells whose whole trimmed text is a numeric expression.
    pub numeric_cell_count: u32,
    /// All cell value units, numeric or not.
    pub total_cell_count: u32,
}

impl TableRecord {
    pub fn new(table_id: impl Into<String>, doc_id: impl Into<String>) -> Self {
        TableRecord {
            table_id: table_id.into(),
            doc_id: doc_id.into(),
            fields: FieldMap::default(),
            numeric_cell_count: 0,
            total_cell_count: 0,
        }
    }

    pub fn field(&self, field: FieldType) -> &[String] {
        self.fields.get(field)
    }

    /// Recompute the cell counters from the current cell values.
    pub fn refresh_cell_counts(&mut self, matcher: &NumericMatcher) {
        let cells = self.fields.get(FieldType::CellValue);
        self.total_cell_count = cells.len() as u32;
        self.numeric_cell_count = cells.iter().filter(|c| matcher.is_numeric(c)).count() as u32;
    }

    /// Fraction of cells that hold numeric content; 0 for cell-less tables.
    pub fn numeric_fraction(&self) -> f64 {
        if self.total_cell_count == 0 {
            0.0
        } else {
            f64::from(self.numeric_cell_count) / f64::from(self.total_cell_count)
        }
    }

    /// Check the internal counter invariants, as when reading untrusted files.
    pub fn validate(&self) -> Result<()> {
        if self.table_id.is_empty() {
            return Err(Error::format("table record", "empty table_id"));
        }
        if self.numeric_cell_count > self.total_cell_count {
            return Err(Error::format(
                "table record",
                format!(
                    "table `{}` has {} numeric cells but only {} cells",
                    self.table_id, self.numeric_cell_count, self.total_cell_count
                ),
            ));
        }
        let cells = self.fields.get(FieldType::CellValue).len() as u32;
        if cells != self.total_cell_count {
            return Err(Error::format(
                "table record",
                format!(
                    "table `{}` declares {} cells but carries {}",
                    self.table_id, self.total_cell_count, cells
                ),
            ));
        }
        Ok(())
    }
}

/// Detects cell text that is a numeric expression: plain numbers, signed
/// numbers, scientific notation, ranges, value±accuracy pairs, and any of
/// those followed by a short unit token ("1.0-10.0 keV"). The whole trimmed
/// string must match; "see text 5" is not numeric.
pub struct NumericMatcher {
    patterns: Vec<(&'static str, regex::Regex)>,
}

// Shared regex fragments. A "number" is an optionally signed integer
// (with optional thousands separators) or decimal, with an optional
// exponent written as e/E notation or as a power of ten.
const INT: &str = r"(?:\d{1,3}(?:,\d{3})+|\d+)";
const DEC: &str = r"(?:(?:\d{1,3}(?:,\d{3})+|\d+)\.\d*|\.\d+)";
const EXP: &str = r"(?:[eE][+-]?\d+|\s*[x×*]\s*10\^?(?:\{[+-]?\d+\}|[+-]?\d+))";
const PM: &str = r"(?:±|\+/-|\+-|\$\\pm\$)";
const DASH: &str = r"(?:[-–—~]|\s+to\s+)";
const UNIT: &str = r"[A-Za-zµμ°%][A-Za-z0-9µμ°%/^_.\-]{0,11}";

impl NumericMatcher {
    pub fn new() -> Self {
        let number = format!(r"[+-]?(?:{DEC}|{INT}){EXP}?");
        let span = format!(r"(?:{number}\s*{PM}\s*{number}|{number}\s*{DASH}\s*{number}|{number})");
        let table: Vec<(&'static str, String)> = vec![
            ("integer", format!("^{INT}$")),
            ("float", format!("^{DEC}$")),
            ("signed_float", format!(r"^[+-](?:{DEC}|{INT})$")),
            (
                "scientific",
                format!(r"^[+-]?(?:{DEC}|{INT}){EXP}$|^10\^(?:\{{[+-]?\d+\}}|[+-]?\d+)$"),
            ),
            ("range", format!(r"^{number}\s*{DASH}\s*{number}$")),
            ("accuracy", format!(r"^{number}\s*{PM}\s*{number}$")),
            ("unit_suffix", format!(r"^{span}\s*{UNIT}$")),
        ];
        let patterns = table
            .into_iter()
            .map(|(name, pat)| {
                let re = regex::Regex::new(&pat).expect("numeric pattern must compile");
                (name, re)
            })
            .collect();
        NumericMatcher { patterns }
    }

    /// True when the whole trimmed string is a numeric expression.
    pub fn is_numeric(&self, text: &str) -> bool {
        self.matched_pattern(text).is_some()
    }

    /// Name of the first pattern that matches, for diagnostics.
    pub fn matched_pattern(&self, text: &str) -> Option<&'static str> {
        let text = text.trim();
        if text.is_empty() {
            return None;
        }
        self.patterns
            .iter()
            .find(|(_, re)| re.is_match(text))
            .map(|(name, _)| *name)
    }
}

impl Default for NumericMatcher {
    fn default() -> Self {
        NumericMatcher::new()
    }
}

/// Result of parsing one XML document: the tables it contained plus
/// warnings for skipped unknown elements.
#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub records: Vec<TableRecord>,
    pub warnings: Vec<String>,
}

// Leaf elements of the interchange vocabulary, mapped to fields. The
// wrapper elements (referring-sentences, footnotes, column_headers,
// row_headers, cell_values) carry no text of their own.
fn leaf_field(name: &[u8]) -> Option<FieldType> {
    match name {
        b"article-title" | b"article_title" => Some(FieldType::ArticleTitle),
        b"abstract" => Some(FieldType::Abstract),
        b"caption" => Some(FieldType::Caption),
        b"sentence" => Some(FieldType::ReferringSentence),
        b"footnote" => Some(FieldType::Footnote),
        b"row_header" => Some(FieldType::RowHeader),
        b"column_header" => Some(FieldType::ColumnHeader),
        b"cell_value" => Some(FieldType::CellValue),
        _ => None,
    }
}

fn is_wrapper(name: &[u8]) -> bool {
    matches!(
        name,
        b"referring-sentences"
            | b"referring_sentences"
            | b"footnotes"
            | b"column_headers"
            | b"row_headers"
            | b"cell_values"
    )
}

/// Collapse internal whitespace runs and trim the ends.
pub fn normalize_ws(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last_space = true;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !last_space {
                out.push(' ');
                last_space = true;
            }
        } else {
            out.push(ch);
            last_space = false;
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}

/// Parse one XML document holding one or more `<table>` elements.
///
/// `doc_id` names the enclosing article (typically the file stem) and seeds
/// generated table ids: the n-th table without an explicit `id` attribute
/// becomes `<doc_id>#<n>`. Unknown elements inside a table are skipped with
/// a warning; elements outside tables (wrapper roots) are ignored.
pub fn parse_tables(bytes: &[u8], doc_id: &str, matcher: &NumericMatcher) -> Result<ParseOutcome> {
    let mut reader = Reader::from_reader(bytes);
    // The vocabulary allows sibling <table> roots in one file.
    reader.config_mut().allow_unmatched_ends = false;

    let mut out = ParseOutcome::default();
    let mut current: Option<TableRecord> = None;
    let mut ordinal = 0usize;
    // Field whose text we are currently collecting, with its buffer.
    let mut leaf: Option<(FieldType, String)> = None;
    // Depth of an unknown subtree being skipped inside a table.
    let mut skip_depth = 0usize;

    let mut buf = Vec::new();
    loop {
        let event = reader.read_event_into(&mut buf).map_err(|e| Error::Xml {
            offset: reader.buffer_position(),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(ref start) => {
                let name = start.name().as_ref().to_vec();
                if skip_depth > 0 {
                    skip_depth += 1;
                } else if name == b"table" {
                    if current.is_some() {
                        out.warnings
                            .push("nested <table> element skipped".to_string());
                        skip_depth = 1;
                    } else {
                        let mut record = TableRecord::new(String::new(), doc_id);
                        for attr in start.attributes() {
                            let attr = attr.map_err(|e| Error::Xml {
                                offset: reader.buffer_position(),
                                message: e.to_string(),
                            })?;
                            let value = attr
                                .unescape_value()
                                .map_err(|e| Error::Xml {
                                    offset: reader.buffer_position(),
                                    message: e.to_string(),
                                })?
                                .into_owned();
                            match attr.key.as_ref() {
                                b"id" => record.table_id = value,
                                b"doc-id" | b"doc_id" => record.doc_id = value,
                                _ => {}
                            }
                        }
                        current = Some(record);
                    }
                } else if current.is_some() {
                    if let Some(field) = leaf_field(&name) {
                        leaf = Some((field, String::new()));
                    } else if !is_wrapper(&name) {
                        out.warnings.push(format!(
                            "unknown element <{}> skipped in {}",
                            String::from_utf8_lossy(&name),
                            current
                                .as_ref()
                                .map(|r| r.doc_id.as_str())
                                .unwrap_or(doc_id),
                        ));
                        skip_depth = 1;
                    }
                }
                // Unknown elements outside any table are structural wrappers.
            }
            Event::End(ref end) => {
                if skip_depth > 0 {
                    skip_depth -= 1;
                } else if end.name().as_ref() == b"table" {
                    if let Some(mut record) = current.take() {
                        if record.table_id.is_empty() {
                            record.table_id = format!("{}#{}", record.doc_id, ordinal);
                        }
                        ordinal += 1;
                        record.refresh_cell_counts(matcher);
                        out.records.push(record);
                    }
                } else if let Some((field, text)) = leaf.take() {
                    if leaf_field(end.name().as_ref()) == Some(field) {
                        if let Some(record) = current.as_mut() {
                            record.fields.push(field, normalize_ws(&text));
                        }
                    }
                }
            }
            Event::Empty(ref start) => {
                if skip_depth == 0 {
                    if let (Some(record), Some(field)) =
                        (current.as_mut(), leaf_field(start.name().as_ref()))
                    {
                        record.fields.push(field, String::new());
                    }
                }
            }
            Event::Text(text) => {
                if skip_depth == 0 {
                    if let Some((_, bufr)) = leaf.as_mut() {
                        let piece = text.unescape().map_err(|e| Error::Xml {
                            offset: reader.buffer_position(),
                            message: e.to_string(),
                        })?;
                        bufr.push_str(&piece);
                    }
                }
            }
            Event::CData(data) => {
                if skip_depth == 0 {
                    if let Some((_, bufr)) = leaf.as_mut() {
                        bufr.push_str(&String::from_utf8_lossy(&data));
                    }
                }
            }
            Event::Eof => {
                if current.is_some() || leaf.is_some() || skip_depth > 0 {
                    return Err(Error::Xml {
                        offset: reader.buffer_position(),
                        message: "unexpected end of file inside <table>".to_string(),
                    });
                }
                break;
            }
            _ => {}
        }
        buf.clear();
    }
    Ok(out)
}

/// Write records as one JSON object per line.
pub fn write_records(path: &Path, records: &[TableRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a record file written by [`write_records`], validating invariants.
pub fn read_records(path: &Path) -> Result<Vec<TableRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TableRecord = serde_json::from_str(&line).map_err(|e| {
            Error::format("record file", format!("line {}: {}", lineno + 1, e)).with_path(path)
        })?;
        record.validate().map_err(|e| match e {
            Error::Format { detail, .. } => Error::Format {
                what: "record file",
                path: Some(path.to_path_buf()),
                detail: format!("line {}: {}", lineno + 1, detail),
            },
            other => other,
        })?;
        records.push(record);
    }
    Ok(records)
}
