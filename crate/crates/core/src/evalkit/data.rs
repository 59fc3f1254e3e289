//! Plain-text task data and prediction files.
//!
//! Sentences are separated by blank lines. `-DOCSTART-` lines are skipped.

use std::io::BufRead;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

impl TaggedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn blocks<R: BufRead>(reader: R, columns: usize) -> Result<Vec<Vec<Vec<String>>>> {
    let mut out = Vec::new();
    let mut cur: Vec<Vec<String>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if line.starts_with("-DOCSTART-") {
            continue;
        }
        let fields: Vec<String> = if line.contains('\t') {
            line.split('\t').map(|s| s.trim().to_string()).collect()
        } else {
            line.split_whitespace().map(String::from).collect()
        };
        if fields.len() != columns || fields.iter().any(String::is_empty) {
            return Err(Error::parse(i + 1, format!("expected {columns} columns, found {}", fields.len())));
        }
        cur.push(fields);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

/// `token<TAB>tag` lines.
pub fn read_tagged_sentences<R: BufRead>(reader: R) -> Result<Vec<TaggedSentence>> {
    Ok(blocks(reader, 2)?
        .into_iter()
        .map(|rows| {
            let (tokens, tags) = rows.into_iter().map(|mut r| (r.swap_remove(0), r.swap_remove(0))).unzip();
            TaggedSentence { tokens, tags }
        })
        .collect())
}

/// `token gold predicted` lines; returns gold and predicted tag sentences.
pub fn read_conll_predictions<R: BufRead>(reader: R) -> Result<(Vec<Vec<String>>, Vec<Vec<String>>)> {
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for rows in blocks(reader, 3)? {
        gold.push(rows.iter().map(|r| r[1].clone()).collect());
        pred.push(rows.iter().map(|r| r[2].clone()).collect());
    }
    Ok((gold, pred))
}

/// `gold predicted` lines, one instance per line.
pub fn read_classification_predictions<R: BufRead>(reader: R) -> Result<(Vec<String>, Vec<String>)> {
    Ok(blocks(reader, 2)?.into_iter().flatten().map(|mut r| (r.swap_remove(0), r.swap_remove(0))).unzip())
}

/// `label<TAB>text` lines.
pub fn read_classification_data<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((label, text)) if !label.trim().is_empty() && !text.trim().is_empty() => {
                out.push((label.trim().to_string(), text.trim().to_string()))
            }
            _ => return Err(Error::parse(i + 1, "expected label<TAB>text")),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagged() {
        let s = read_tagged_sentences("-DOCSTART- O\n\nEtxe\tNOUN\nda\tVERB\n\n\nBai\tINTJ\n".as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].tokens, vec!["Etxe", "da"]);
        assert_eq!(s[1].tags, vec!["INTJ"]);
        assert!(read_tagged_sentences("a b c\n".as_bytes()).is_err());
    }

    #[test]
    fn conll() {
        let (g, p) = read_conll_predictions("Bilbo B-LOC B-LOC\nda O O\n\nJon B-PER O\n".as_bytes()).unwrap();
        assert_eq!(g, vec![vec!["B-LOC", "O"], vec!["B-PER"]]);
        assert_eq!(p[1], vec!["O"]);
        let err = read_conll_predictions("x B-LOC\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 1"));
    }

    #[test]
    fn classification() {
        let d = read_classification_data("kirola\tAthleticek irabazi du\n\npolitika\tHauteskundeak\n".as_bytes()).unwrap();
        assert_eq!(d[0], ("kirola".to_string(), "Athleticek irabazi du".to_string()));
        assert!(read_classification_data("nolabel\n".as_bytes()).is_err());
        let (g, p) = read_classification_predictions("a\tb\nc c\n".as_bytes()).unwrap();
        assert_eq!((g, p), (vec!["a".to_string(), "c".into()], vec!["b".to_string(), "c".into()]));
    }
}
