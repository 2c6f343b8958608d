//! CoNLL-2012 corpus handling: the document data model plus parsing and
//! serialization of the shared-task column format with coreference
//! annotations.
//!
//! Only the columns that matter here are interpreted: document id, part,
//! token index, word, and the final coreference column. Everything in
//! between is carried along as opaque text so files round-trip.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// One token of a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// 0-based sentence ordinal within the document.
    pub sentence_index: usize,
    /// 0-based position over the whole document.
    pub doc_token_index: usize,
    /// Columns between the word and the coreference column, preserved verbatim.
    pub extra_columns: Vec<String>,
}

impl Token {
    pub fn new(surface: impl Into<String>, sentence_index: usize, doc_token_index: usize) -> Self {
        Token {
            surface: surface.into(),
            sentence_index,
            doc_token_index,
            extra_columns: Vec::new(),
        }
    }
}

/// A contiguous token interval, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    /// Panics if `start > end`; spans are validated where they enter the system.
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start <= end, "span start {start} > end {end}");
        Span { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }
}

/// A partition of a subset of spans into coreference entities.
///
/// Construction normalizes ordering (spans sorted within a cluster, clusters
/// sorted by their first span) so equality is set equality.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterSet {
    clusters: Vec<Vec<Span>>,
}

impl ClusterSet {
    pub fn empty() -> Self {
        ClusterSet::default()
    }

    /// Builds a cluster set, rejecting duplicate spans within a cluster and
    /// empty clusters.
    pub fn try_new(clusters: Vec<Vec<Span>>) -> Result<Self> {
        let mut normalized = Vec::with_capacity(clusters.len());
        for mut cluster in clusters {
            if cluster.is_empty() {
                return Err(Error::InvalidClusters("empty cluster".into()));
            }
            cluster.sort();
            for pair in cluster.windows(2) {
                if pair[0] == pair[1] {
                    return Err(Error::InvalidClusters(format!(
                        "duplicate span [{}, {}] within a cluster",
                        pair[0].start, pair[0].end
                    )));
                }
            }
            normalized.push(cluster);
        }
        normalized.sort();
        Ok(ClusterSet {
            clusters: normalized,
        })
    }

    pub fn clusters(&self) -> &[Vec<Span>] {
        &self.clusters
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    /// All mention spans across clusters, sorted.
    pub fn mentions(&self) -> Vec<Span> {
        let mut out: Vec<Span> = self.clusters.iter().flatten().copied().collect();
        out.sort();
        out.dedup();
        out
    }

    /// Drops clusters with fewer than two mentions.
    pub fn without_singletons(&self) -> ClusterSet {
        ClusterSet {
            clusters: self
                .clusters
                .iter()
                .filter(|c| c.len() >= 2)
                .cloned()
                .collect(),
        }
    }
}

/// A tokenized document with sentence boundaries and gold coreference clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub part_id: usize,
    pub tokens: Vec<Token>,
    pub gold_clusters: ClusterSet,
}

impl Document {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token index ranges of each sentence, in order.
    pub fn sentences(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, tok) in self.tokens.iter().enumerate() {
            if i > 0 && tok.sentence_index != self.tokens[i - 1].sentence_index {
                out.push(start..i);
                start = i;
            }
        }
        if start < self.tokens.len() {
            out.push(start..self.tokens.len());
        }
        out
    }

    /// Checks every cluster span lies within the document.
    pub fn validate_spans(&self) -> Result<()> {
        for cluster in self.gold_clusters.clusters() {
            for span in cluster {
                if span.end >= self.tokens.len() {
                    return Err(Error::Serialize(format!(
                        "span [{}, {}] out of range for document {} part {} of length {}",
                        span.start,
                        span.end,
                        self.doc_id,
                        self.part_id,
                        self.tokens.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One `(id` / `id)` / `(id)` item of a coreference cell.
#[derive(Debug, Clone, Copy, PartialEq)]
enum CorefItem {
    Open(u64),
    Close(u64),
    Unit(u64),
}

/// Parses a coreference cell such as `(0`, `3)`, `(7)`, `(0(1)`, or `(0|(1)`.
/// `|` separators are accepted but not required.
fn parse_coref_cell(cell: &str, line: usize) -> Result<Vec<CorefItem>> {
    let mut items = Vec::new();
    let bytes = cell.as_bytes();
    let mut i = 0;
    let err = |msg: &str| Error::Parse {
        line,
        msg: format!("{msg} in coreference cell {cell:?}"),
    };
    while i < bytes.len() {
        match bytes[i] {
            b'|' => i += 1,
            b'(' => {
                i += 1;
                let digit_start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == digit_start {
                    return Err(err("expected cluster id after '('"));
                }
                let id: u64 = cell[digit_start..i]
                    .parse()
                    .map_err(|_| err("non-numeric cluster id"))?;
                if i < bytes.len() && bytes[i] == b')' {
                    i += 1;
                    items.push(CorefItem::Unit(id));
                } else {
                    items.push(CorefItem::Open(id));
                }
            }
            b'0'..=b'9' => {
                let digit_start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i >= bytes.len() || bytes[i] != b')' {
                    return Err(err("expected ')' after cluster id"));
                }
                let id: u64 = cell[digit_start..i]
                    .parse()
                    .map_err(|_| err("non-numeric cluster id"))?;
                i += 1;
                items.push(CorefItem::Close(id));
            }
            _ => return Err(err("unexpected character")),
        }
    }
    Ok(items)
}

fn parse_begin_line(line: &str, line_no: usize) -> Result<(String, usize)> {
    // #begin document (<id>); part <nnn>
    let rest = line
        .strip_prefix("#begin document (")
        .ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "malformed #begin document line".into(),
        })?;
    let close = rest.find(") ;").map(|p| (p, 3)).or_else(|| {
        rest.find(");").map(|p| (p, 2))
    });
    let (id_end, sep_len) = close.ok_or_else(|| Error::Parse {
        line: line_no,
        msg: "missing `);` in #begin document line".into(),
    })?;
    let doc_id = rest[..id_end].to_string();
    let tail = rest[id_end + sep_len..].trim();
    let part_str = tail.strip_prefix("part").ok_or_else(|| Error::Parse {
        line: line_no,
        msg: "missing `part` in #begin document line".into(),
    })?;
    let part_id = part_str.trim().parse::<usize>().map_err(|_| Error::Parse {
        line: line_no,
        msg: format!("non-numeric part number {:?}", part_str.trim()),
    })?;
    Ok((doc_id, part_id))
}

struct DocBuilder {
    doc_id: String,
    part_id: usize,
    begin_line: usize,
    tokens: Vec<Token>,
    sentence_index: usize,
    sentence_has_tokens: bool,
    /// Per cluster id: stack of open positions (nesting is LIFO).
    open: HashMap<u64, Vec<usize>>,
    /// (cluster id, span) in completion order.
    mentions: Vec<(u64, Span)>,
}

impl DocBuilder {
    fn finish(mut self, end_line: usize) -> Result<Document> {
        if let Some((id, stack)) = self.open.iter().find(|(_, v)| !v.is_empty()) {
            return Err(Error::Parse {
                line: end_line,
                msg: format!(
                    "unbalanced coreference brackets: cluster {id} opened at token {} never closed",
                    stack[0]
                ),
            });
        }
        // Renumber by first appearance; dense ids, identity only.
        let mut order: Vec<u64> = Vec::new();
        for (id, _) in &self.mentions {
            if !order.contains(id) {
                order.push(*id);
            }
        }
        let mut clusters: Vec<Vec<Span>> = vec![Vec::new(); order.len()];
        for (id, span) in &self.mentions {
            let slot = order.iter().position(|x| x == id).unwrap();
            if !clusters[slot].contains(span) {
                clusters[slot].push(*span);
            }
        }
        let gold_clusters = ClusterSet::try_new(clusters)?;
        self.tokens.shrink_to_fit();
        Ok(Document {
            doc_id: self.doc_id,
            part_id: self.part_id,
            tokens: self.tokens,
            gold_clusters,
        })
    }
}

/// Parses a CoNLL-2012 style stream into documents.
///
/// Expects `#begin document (<id>); part <nnn>` / `#end document` sentinels,
/// whitespace-separated columns with the coreference column last, and blank
/// lines as sentence boundaries.
pub fn parse_conll(reader: impl BufRead) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut current: Option<DocBuilder> = None;
    let mut line_no = 0;

    for line in reader.lines() {
        line_no += 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            msg: format!("I/O error: {e}"),
        })?;
        let trimmed = line.trim();

        if trimmed.starts_with("#begin document") {
            if let Some(doc) = &current {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!(
                        "missing end sentinel for document {} part {} begun at line {}",
                        doc.doc_id, doc.part_id, doc.begin_line
                    ),
                });
            }
            let (doc_id, part_id) = parse_begin_line(trimmed, line_no)?;
            current = Some(DocBuilder {
                doc_id,
                part_id,
                begin_line: line_no,
                tokens: Vec::new(),
                sentence_index: 0,
                sentence_has_tokens: false,
                open: HashMap::new(),
                mentions: Vec::new(),
            });
            continue;
        }

        if trimmed == "#end document" {
            let doc = current.take().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "#end document outside any document".into(),
            })?;
            docs.push(doc.finish(line_no)?);
            continue;
        }

        let Some(doc) = current.as_mut() else {
            if trimmed.is_empty() {
                continue;
            }
            return Err(Error::Parse {
                line: line_no,
                msg: "content outside #begin/#end document".into(),
            });
        };

        if trimmed.is_empty() {
            if doc.sentence_has_tokens {
                doc.sentence_index += 1;
                doc.sentence_has_tokens = false;
            }
            continue;
        }

        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() < 5 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "token line has {} columns, expected at least 5 (doc id, part, index, word, coreference)",
                    cols.len()
                ),
            });
        }
        let surface = cols[3].to_string();
        if surface.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "empty token surface".into(),
            });
        }
        let coref_cell = cols[cols.len() - 1];
        let extra_columns: Vec<String> = cols[4..cols.len() - 1]
            .iter()
            .map(|s| s.to_string())
            .collect();

        let t = doc.tokens.len();
        doc.tokens.push(Token {
            surface,
            sentence_index: doc.sentence_index,
            doc_token_index: t,
            extra_columns,
        });
        doc.sentence_has_tokens = true;

        if coref_cell != "-" {
            for item in parse_coref_cell(coref_cell, line_no)? {
                match item {
                    CorefItem::Open(id) => doc.open.entry(id).or_default().push(t),
                    CorefItem::Unit(id) => doc.mentions.push((id, Span::new(t, t))),
                    CorefItem::Close(id) => {
                        let start = doc
                            .open
                            .get_mut(&id)
                            .and_then(|stack| stack.pop())
                            .ok_or_else(|| Error::Parse {
                                line: line_no,
                                msg: format!(
                                    "unbalanced coreference brackets: close for cluster {id} with no open"
                                ),
                            })?;
                        doc.mentions.push((id, Span::new(start, t)));
                    }
                }
            }
        }
    }

    if let Some(doc) = current {
        return Err(Error::Parse {
            line: line_no,
            msg: format!(
                "missing end sentinel for document {} part {} begun at line {}",
                doc.doc_id, doc.part_id, doc.begin_line
            ),
        });
    }
    Ok(docs)
}

/// Parses documents from an in-memory string.
pub fn parse_conll_str(text: &str) -> Result<Vec<Document>> {
    parse_conll(std::io::Cursor::new(text.as_bytes()))
}

/// Builds the per-token coreference cells for one document.
///
/// Cluster ids are renumbered densely in first-opening order. At each token,
/// multi-token opens come first (outermost first), then single-token
/// mentions, then closes (innermost first), matching stacked-bracket nesting.
fn coref_cells(doc: &Document) -> Vec<String> {
    let mut opens: Vec<Vec<(usize, Span)>> = vec![Vec::new(); doc.tokens.len()];
    let mut units: Vec<Vec<usize>> = vec![Vec::new(); doc.tokens.len()];
    let mut closes: Vec<Vec<(usize, Span)>> = vec![Vec::new(); doc.tokens.len()];

    for (cluster_idx, cluster) in doc.gold_clusters.clusters().iter().enumerate() {
        for span in cluster {
            if span.width() == 1 {
                units[span.start].push(cluster_idx);
            } else {
                opens[span.start].push((cluster_idx, *span));
                closes[span.end].push((cluster_idx, *span));
            }
        }
    }
    for t in 0..doc.tokens.len() {
        opens[t].sort_by(|a, b| b.1.end.cmp(&a.1.end).then(a.0.cmp(&b.0)));
        units[t].sort_unstable();
        closes[t].sort_by(|a, b| b.1.start.cmp(&a.1.start).then(a.0.cmp(&b.0)));
    }

    // Dense ids in the order clusters first appear in the emitted stream.
    let mut id_of: HashMap<usize, usize> = HashMap::new();
    for t in 0..doc.tokens.len() {
        for (cluster_idx, _) in &opens[t] {
            let next = id_of.len();
            id_of.entry(*cluster_idx).or_insert(next);
        }
        for cluster_idx in &units[t] {
            let next = id_of.len();
            id_of.entry(*cluster_idx).or_insert(next);
        }
    }

    let mut cells = Vec::with_capacity(doc.tokens.len());
    for t in 0..doc.tokens.len() {
        let mut cell = String::new();
        for (cluster_idx, _) in &opens[t] {
            let _ = write!(cell, "({}", id_of[cluster_idx]);
        }
        for cluster_idx in &units[t] {
            let _ = write!(cell, "({})", id_of[cluster_idx]);
        }
        for (cluster_idx, _) in &closes[t] {
            let _ = write!(cell, "{})", id_of[cluster_idx]);
        }
        if cell.is_empty() {
            cell.push('-');
        }
        cells.push(cell);
    }
    cells
}

/// Serializes documents back into the column format accepted by [`parse_conll`].
pub fn write_conll(docs: &[Document], mut writer: impl Write) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Serialize(format!("write failed: {e}"));
    for doc in docs {
        doc.validate_spans()?;
        let cells = coref_cells(doc);
        writeln!(writer, "#begin document ({}); part {:03}", doc.doc_id, doc.part_id)
            .map_err(io_err)?;
        let mut word_in_sentence = 0usize;
        for (t, tok) in doc.tokens.iter().enumerate() {
            if t > 0 && tok.sentence_index != doc.tokens[t - 1].sentence_index {
                writeln!(writer).map_err(io_err)?;
                word_in_sentence = 0;
            }
            write!(
                writer,
                "{} {} {} {}",
                doc.doc_id, doc.part_id, word_in_sentence, tok.surface
            )
            .map_err(io_err)?;
            for col in &tok.extra_columns {
                write!(writer, " {col}").map_err(io_err)?;
            }
            writeln!(writer, " {}", cells[t]).map_err(io_err)?;
            word_in_sentence += 1;
        }
        writeln!(writer, "\n#end document").map_err(io_err)?;
    }
    Ok(())
}

/// Serializes documents to a string.
pub fn write_conll_string(docs: &[Document]) -> Result<String> {
    let mut buf = Vec::new();
    write_conll(docs, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CoNLL output is UTF-8"))
}
