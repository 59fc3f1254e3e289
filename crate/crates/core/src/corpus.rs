//! Document/paragraph structured corpora.
//!
//! File format: UTF-8 text, one paragraph per line, a blank line closes the
//! current document. A line of the form `#source:<tag>` sets the source tag
//! for the documents that follow it (and closes any open document).

use std::fmt::Write as _;
use std::io::Read;

use rand::seq::SliceRandom;
use serde::Serialize;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::rng;

pub const SOURCE_HEADER: &str = "#source:";

/// Paragraphs shorter than this (in chars, after cleaning) are dropped.
pub const MIN_PARAGRAPH_CHARS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub source: String,
    pub paragraphs: Vec<String>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.paragraphs.iter().map(|p| p.split_whitespace().count()).sum()
    }
}

/// An immutable collection of cleaned documents.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    documents: Vec<Document>,
}

/// Normalizes one paragraph: NFC, control characters removed, whitespace runs
/// collapsed to a single space, ends trimmed.
pub fn clean_paragraph(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.nfc() {
        if c.is_whitespace() {
            pending_space = true;
        } else if c.is_control() {
            continue;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        }
    }
    out
}

fn check_paragraph(p: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Input("empty paragraph".into()));
    }
    if p.chars().any(|c| c.is_control()) {
        return Err(Error::Input(format!("control character in paragraph {p:?}")));
    }
    if p.trim() != p {
        return Err(Error::Input(format!("untrimmed paragraph {p:?}")));
    }
    Ok(())
}

/// Incremental ingest of one or more corpus files into a single corpus.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    documents: Vec<Document>,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `input` in the corpus file format. `source` is the tag used
    /// until a `#source:` header overrides it.
    pub fn ingest_bytes(&mut self, input: &[u8], source: &str) -> Result<()> {
        let text = std::str::from_utf8(input).map_err(|e| Error::Decode { offset: e.valid_up_to() })?;
        let mut source = source.to_string();
        let mut current: Vec<String> = Vec::new();

        for line in text.split('\n') {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if let Some(tag) = line.strip_prefix(SOURCE_HEADER) {
                self.close(&source, &mut current);
                source = tag.trim().to_string();
                continue;
            }
            if line.chars().all(char::is_whitespace) {
                self.close(&source, &mut current);
                continue;
            }
            let cleaned = clean_paragraph(line);
            if cleaned.chars().count() < MIN_PARAGRAPH_CHARS || current.contains(&cleaned) {
                continue;
            }
            current.push(cleaned);
        }
        self.close(&source, &mut current);
        Ok(())
    }

    pub fn ingest_reader<R: Read>(&mut self, mut reader: R, source: &str) -> Result<()> {
        let mut buf = Vec::new();
        reader.read_to_end(&mut buf)?;
        self.ingest_bytes(&buf, source)
    }

    fn close(&mut self, source: &str, paragraphs: &mut Vec<String>) {
        if paragraphs.is_empty() {
            return;
        }
        let id = format!("{source}-{}", self.documents.len());
        self.documents.push(Document {
            id,
            source: source.to_string(),
            paragraphs: std::mem::take(paragraphs),
        });
    }

    pub fn finish(self) -> Result<Corpus> {
        if self.documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Corpus { documents: self.documents })
    }
}

/// Ingests a single corpus file.
pub fn ingest<R: Read>(reader: R, source: &str) -> Result<Corpus> {
    let mut builder = CorpusBuilder::new();
    builder.ingest_reader(reader, source)?;
    builder.finish()
}

impl Corpus {
    /// Builds a corpus from already clean documents. Paragraph invariants are
    /// checked but no cleaning is applied.
    pub fn from_documents(documents: Vec<Document>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        for doc in &documents {
            if doc.paragraphs.is_empty() {
                return Err(Error::Input(format!("document {} has no paragraphs", doc.id)));
            }
            for p in &doc.paragraphs {
                check_paragraph(p)?;
            }
        }
        Ok(Corpus { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn paragraph_count(&self) -> usize {
        self.documents.iter().map(|d| d.paragraphs.len()).sum()
    }

    /// All paragraphs in document order, as `(document id, segment index, text)`.
    pub fn segments(&self) -> impl Iterator<Item = (&str, usize, &str)> + '_ {
        self.documents.iter().flat_map(|d| {
            d.paragraphs.iter().enumerate().map(move |(i, p)| (d.id.as_str(), i, p.as_str()))
        })
    }

    /// Iterates over whitespace words of every paragraph.
    pub fn words(&self) -> impl Iterator<Item = &str> + '_ {
        self.documents
            .iter()
            .flat_map(|d| d.paragraphs.iter())
            .flat_map(|p| p.split_whitespace())
    }

    /// Serializes in the corpus file format. Re-ingesting the output gives
    /// back an equal corpus.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut last_source: Option<&str> = None;
        for doc in &self.documents {
            if last_source != Some(doc.source.as_str()) {
                out.push_str(SOURCE_HEADER);
                out.push_str(&doc.source);
                out.push('\n');
                last_source = Some(&doc.source);
            }
            for p in &doc.paragraphs {
                out.push_str(p);
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    pub fn stats(&self) -> CorpusStats {
        let mut sources: Vec<SourceStats> = Vec::new();
        for doc in &self.documents {
            let idx = match sources.iter().position(|s| s.source == doc.source) {
                Some(i) => i,
                None => {
                    sources.push(SourceStats { source: doc.source.clone(), ..Default::default() });
                    sources.len() - 1
                }
            };
            let s = &mut sources[idx];
            s.documents += 1;
            s.paragraphs += doc.paragraphs.len() as u64;
            s.tokens += doc.token_count() as u64;
        }
        CorpusStats {
            total_tokens: sources.iter().map(|s| s.tokens).sum(),
            documents: sources.iter().map(|s| s.documents).sum(),
            paragraphs: sources.iter().map(|s| s.paragraphs).sum(),
            sources,
        }
    }

    /// Document-level partition according to `spec`. Partitions keep corpus
    /// order internally.
    pub fn split(&self, spec: &SplitSpec) -> Result<Vec<Corpus>> {
        let n = self.documents.len();
        let k = spec.ratios.len();
        if n < k {
            return Err(Error::Input(format!("cannot split {n} documents into {k} partitions")));
        }
        let sizes = apportion(&spec.ratios, n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::seeded(spec.seed));

        let mut parts = Vec::with_capacity(k);
        let mut start = 0;
        for size in sizes {
            let mut idx = order[start..start + size].to_vec();
            idx.sort_unstable();
            start += size;
            parts.push(Corpus { documents: idx.into_iter().map(|i| self.documents[i].clone()).collect() });
        }
        Ok(parts)
    }
}

/// Largest-remainder apportionment of `total` items; ties go to the earlier
/// ratio.
pub fn apportion(ratios: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut rest: Vec<usize> = (0..ratios.len()).collect();
    rest.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in rest.iter().cycle().take(total.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub ratios: Vec<f64>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(ratios: Vec<f64>, seed: u64) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::Config("split needs at least one ratio".into()));
        }
        if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::Config(format!("split ratio {r} outside (0, 1]")));
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(Self { ratios, seed })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SourceStats {
    pub source: String,
    pub documents: u64,
    pub paragraphs: u64,
    pub tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub sources: Vec<SourceStats>,
    pub total_tokens: u64,
    pub documents: u64,
    pub paragraphs: u64,
}

/// `35_000_000` -> `"35M"`, `64_600_000` -> `"64.6M"`.
pub fn format_millions(tokens: u64) -> String {
    let m = format!("{:.1}", tokens as f64 / 1e6);
    format!("{}M", m.strip_suffix(".0").unwrap_or(&m))
}

impl CorpusStats {
    pub fn source(&self, tag: &str) -> Option<&SourceStats> {
        self.sources.iter().find(|s| s.source == tag)
    }

    /// Aligned plain-text table, one row per source plus a total row.
    pub fn render_table(&self) -> String {
        let header = ["Source", "Documents", "Paragraphs", "Tokens", "Million tokens"];
        let mut rows: Vec<[String; 5]> = self
            .sources
            .iter()
            .map(|s| {
                [
                    s.source.clone(),
                    s.documents.to_string(),
                    s.paragraphs.to_string(),
                    s.tokens.to_string(),
                    format_millions(s.tokens),
                ]
            })
            .collect();
        rows.push([
            "Total".into(),
            self.documents.to_string(),
            self.paragraphs.to_string(),
            self.total_tokens.to_string(),
            format_millions(self.total_tokens),
        ]);

        let mut widths = header.map(|h| h.chars().count());
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
                if i == 0 {
                    let _ = write!(s, "{cell:<w$}");
                } else {
                    let _ = write!(s, "  {cell:>w$}");
                }
            }
            s.push('\n');
            s
        };
        let total_width: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
        let mut out = line(&header.map(String::from));
        out.push_str(&"-".repeat(total_width));
        out.push('\n');
        for (i, row) in rows.iter().enumerate() {
            if i + 1 == rows.len() {
                out.push_str(&"-".repeat(total_width));
                out.push('\n');
            }
            out.push_str(&line(row));
        }
        out
    }

    /// One JSON record per source, then one with `"source": "total"`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.sources {
            out.push_str(&serde_json::to_string(s).expect("stats serialize"));
            out.push('\n');
        }
        let total = SourceStats {
            source: "total".into(),
            documents: self.documents,
            paragraphs: self.paragraphs,
            tokens: self.total_tokens,
        };
        out.push_str(&serde_json::to_string(&total).expect("stats serialize"));
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(id: &str, source: &str, paragraphs: &[&str]) -> Document {
        Document {
            id: id.into(),
            source: source.into(),
            paragraphs: paragraphs.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn two_documents_four_paragraphs() {
        let c = ingest("p one\np two\n\np three\np four\n".as_bytes(), "news").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.paragraph_count(), 4);
        assert_eq!(c.documents()[1].id, "news-1");
    }

    #[test]
    fn whitespace_is_normalized() {
        let c = ingest("  a\tb  \n".as_bytes(), "x").unwrap();
        assert_eq!(c.documents()[0].paragraphs, vec!["a b"]);
    }

    #[test]
    fn cleaning_rules() {
        assert_eq!(clean_paragraph("a\u{0007}b\u{000b}\u{000c} c"), "ab c");
        // NFC: e + combining acute -> é
        assert_eq!(clean_paragraph("e\u{0301}"), "\u{e9}");
        let c = ingest("x\nok\n\u{1}\n".as_bytes(), "s").unwrap();
        assert_eq!(c.documents()[0].paragraphs, vec!["ok"]);
    }

    #[test]
    fn duplicates_within_document_are_dropped() {
        let text = "#source:wiki\nkaixo mundua\nbeste bat\nkaixo  mundua\n\nkaixo mundua\n";
        let c = ingest(text.as_bytes(), "unused").unwrap();
        // first document keeps 2 of 3 paragraphs, second keeps its single copy
        assert_eq!(c.paragraph_count(), 3);
        assert_eq!(c.stats().total_tokens, 2 + 2 + 2);
        assert_eq!(c.documents()[0].source, "wiki");
    }

    #[test]
    fn invalid_utf8_reports_offset() {
        let err = ingest(&b"abc\n\xffdef"[..], "s").unwrap_err();
        assert!(matches!(err, Error::Decode { offset: 4 }), "{err}");
    }

    #[test]
    fn nothing_left_is_an_error() {
        assert!(matches!(ingest("\n\n x \n".as_bytes(), "s"), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn stats_counts() {
        let c = Corpus::from_documents(vec![doc("d0", "s", &["a b", "c"])]).unwrap();
        assert_eq!(c.stats().total_tokens, 3);

        let c = Corpus::from_documents(vec![
            doc("d0", "wikipedia", &["a b"]),
            doc("d1", "news", &["c d e"]),
        ])
        .unwrap();
        let s = c.stats();
        assert_eq!(s.source("wikipedia").unwrap().tokens, 2);
        assert_eq!(s.source("news").unwrap().tokens, 3);
        assert_eq!(s.total_tokens, 5);
    }

    #[test]
    fn table_uses_million_format() {
        assert_eq!(format_millions(35_000_000), "35M");
        assert_eq!(format_millions(64_600_000), "64.6M");
        assert_eq!(format_millions(224_600_000), "224.6M");
        let stats = CorpusStats {
            sources: vec![SourceStats { source: "Wikipedia".into(), documents: 1, paragraphs: 1, tokens: 35_000_000 }],
            total_tokens: 35_000_000,
            documents: 1,
            paragraphs: 1,
        };
        let table = stats.render_table();
        let row = table.lines().find(|l| l.starts_with("Wikipedia")).unwrap();
        assert!(row.ends_with("35M"), "{row}");
        assert!(table.lines().last().unwrap().starts_with("Total"));
        assert_eq!(stats.to_jsonl().lines().count(), 2);
    }

    fn ten_docs() -> Corpus {
        Corpus::from_documents((0..10).map(|i| doc(&format!("d{i}"), "s", &["x y"])).collect()).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let c = ten_docs();
        let spec = SplitSpec::new(vec![0.7, 0.15, 0.15], 1).unwrap();
        let parts = c.split(&spec).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Corpus::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 10);
        assert_eq!(sizes[0], 7);
        assert!(sizes[1..].iter().all(|&s| s == 1 || s == 2));
        assert_eq!(parts, c.split(&spec).unwrap());

        let mut ids: Vec<&str> = parts.iter().flat_map(|p| p.documents()).map(|d| d.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 10);
    }

    #[test]
    fn identity_split() {
        let c = ten_docs();
        let parts = c.split(&SplitSpec::new(vec![1.0], 3).unwrap()).unwrap();
        assert_eq!(parts, vec![c]);
    }

    #[test]
    fn split_errors() {
        assert!(SplitSpec::new(vec![0.5, 0.4], 0).is_err());
        assert!(SplitSpec::new(vec![1.5, -0.5], 0).is_err());
        let c = Corpus::from_documents(vec![doc("d", "s", &["x y"])]).unwrap();
        assert!(c.split(&SplitSpec::new(vec![0.5, 0.5], 0).unwrap()).is_err());
    }

    #[test]
    fn segments_are_ordered_per_document() {
        let c = Corpus::from_documents(vec![doc("a", "s", &["p0", "p1", "p2"]), doc("b", "s", &["q0"])]).unwrap();
        let segs: Vec<_> = c.segments().collect();
        assert_eq!(segs[..3].iter().map(|s| s.1).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(segs[3], ("b", 0, "q0"));
    }

    fn raw_corpus() -> impl Strategy<Value = String> {
        let para = "[a-zé \t\u{1}]{0,12}";
        prop::collection::vec(prop::collection::vec(para, 1..4), 1..5).prop_map(|docs| {
            docs.into_iter().map(|d| d.join("\n")).collect::<Vec<_>>().join("\n\n")
        })
    }

    proptest! {
        #[test]
        fn serialize_roundtrip(raw in raw_corpus()) {
            if let Ok(c) = ingest(raw.as_bytes(), "src") {
                let again = ingest(c.to_text().as_bytes(), "other").unwrap();
                prop_assert_eq!(again, c);
            }
        }

        #[test]
        fn split_is_partition(n in 1usize..40, seed in 0u64..1000, a in 1u32..10, b in 1u32..10) {
            let c = Corpus::from_documents((0..n).map(|i| doc(&format!("d{i}"), "s", &["x y"])).collect()).unwrap();
            let total = (a + b) as f64;
            let ratios = vec![a as f64 / total, b as f64 / total];
            let spec = SplitSpec::new(ratios.clone(), seed).unwrap();
            if n >= 2 {
                let parts = c.split(&spec).unwrap();
                let mut seen: Vec<&str> = parts.iter().flat_map(|p| p.documents()).map(|d| d.id.as_str()).collect();
                prop_assert_eq!(seen.len(), n);
                seen.sort_unstable();
                seen.dedup();
                prop_assert_eq!(seen.len(), n);
                for (p, r) in parts.iter().zip(&ratios) {
                    prop_assert!((p.len() as f64 - r * n as f64).abs() <= 1.0);
                }
            }
        }

        #[test]
        fn total_invariant_under_reordering(seed in 0u64..100) {
            let docs: Vec<Document> = (0..6).map(|i| doc(&format!("d{i}"), if i % 2 == 0 { "a" } else { "b" }, &["x y z", "w"])).collect();
            let mut shuffled = docs.clone();
            shuffled.shuffle(&mut rng::seeded(seed));
            let s1 = Corpus::from_documents(docs).unwrap().stats();
            let s2 = Corpus::from_documents(shuffled).unwrap().stats();
            prop_assert_eq!(s1.total_tokens, s2.total_tokens);
        }
    }
}
