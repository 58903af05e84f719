//! Documents, gold mentions and partitions.
//!
//! A corpus is read from JSONL, one document per line:
//!
//! ```json
//! {"doc_id": "d1", "topic_id": null, "sentences": [["A", "quake", "struck"]],
//!  "tags": null,
//!  "mentions": [{"mention_id": "m1", "sentence_idx": 0, "start_tok": 1, "end_tok": 1,
//!                "mention_type": "event", "gold_cluster_id": "c1"}]}
//! ```
//!
//! Token spans are inclusive on both ends.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Replacement for tokens hidden by [`mask_tokens`].
pub const MASK_TOKEN: &str = "[MASK]";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenTag {
    Time,
    Location,
    WithinDocCoreference,
    Entity,
    Event,
}

impl TokenTag {
    pub const ALL: [TokenTag; 5] = [
        TokenTag::Time,
        TokenTag::Location,
        TokenTag::WithinDocCoreference,
        TokenTag::Entity,
        TokenTag::Event,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionType {
    Event,
    Entity,
}

impl fmt::Display for MentionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MentionType::Event => f.write_str("event"),
            MentionType::Entity => f.write_str("entity"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Sentence {
    pub tokens: Vec<String>,
    /// One tag set per token when present.
    pub tags: Option<Vec<BTreeSet<TokenTag>>>,
    /// Original tokens of a sentence that masking touched. Views of a mention's
    /// own sentence read from here so that sentence is never masked for it.
    unmasked: Option<Vec<String>>,
}

impl Sentence {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        Sentence {
            tokens: tokens.into_iter().map(Into::into).collect(),
            tags: None,
            unmasked: None,
        }
    }

    pub fn with_tags(mut self, tags: Vec<BTreeSet<TokenTag>>) -> Self {
        self.tags = Some(tags);
        self
    }

    /// Tokens as seen from a mention located in this sentence.
    pub fn own_tokens(&self) -> &[String] {
        self.unmasked.as_deref().unwrap_or(&self.tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub mention_id: String,
    #[serde(skip)]
    pub doc_id: String,
    pub sentence_idx: usize,
    pub start_tok: usize,
    pub end_tok: usize,
    pub mention_type: MentionType,
    #[serde(default)]
    pub gold_cluster_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub topic_id: Option<String>,
    pub sentences: Vec<Sentence>,
    pub mentions: Vec<Mention>,
}

#[derive(Serialize, Deserialize)]
struct DocumentRecord {
    doc_id: String,
    #[serde(default)]
    topic_id: Option<String>,
    sentences: Vec<Vec<String>>,
    #[serde(default)]
    tags: Option<Vec<Vec<Vec<TokenTag>>>>,
    #[serde(default)]
    mentions: Vec<Mention>,
}

impl DocumentRecord {
    fn into_document(self, line: usize) -> Result<Document> {
        let DocumentRecord {
            doc_id,
            topic_id,
            sentences,
            tags,
            mentions,
        } = self;
        if let Some(tags) = &tags {
            if tags.len() != sentences.len() {
                return Err(Error::Malformed {
                    line,
                    message: format!(
                        "document {doc_id}: {} tag rows for {} sentences",
                        tags.len(),
                        sentences.len()
                    ),
                });
            }
        }
        let mut tag_rows = tags.map(|t| t.into_iter());
        let sentences = sentences
            .into_iter()
            .enumerate()
            .map(|(i, tokens)| {
                let tags = match tag_rows.as_mut().and_then(Iterator::next) {
                    None => None,
                    Some(row) if row.len() != tokens.len() => {
                        return Err(Error::Malformed {
                            line,
                            message: format!(
                                "document {doc_id}: sentence {i} has {} tokens but {} tag sets",
                                tokens.len(),
                                row.len()
                            ),
                        })
                    }
                    Some(row) => Some(row.into_iter().map(|t| t.into_iter().collect()).collect()),
                };
                Ok(Sentence {
                    tokens,
                    tags,
                    unmasked: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mentions = mentions
            .into_iter()
            .map(|mut m| {
                m.doc_id = doc_id.clone();
                m
            })
            .collect();
        Ok(Document {
            doc_id,
            topic_id,
            sentences,
            mentions,
        })
    }

    fn from_document(doc: &Document) -> Self {
        let tagged = doc.sentences.iter().any(|s| s.tags.is_some());
        let tags = tagged.then(|| {
            doc.sentences
                .iter()
                .map(|s| match &s.tags {
                    Some(t) => t.iter().map(|set| set.iter().copied().collect()).collect(),
                    None => vec![Vec::new(); s.tokens.len()],
                })
                .collect()
        });
        DocumentRecord {
            doc_id: doc.doc_id.clone(),
            topic_id: doc.topic_id.clone(),
            sentences: doc.sentences.iter().map(|s| s.tokens.clone()).collect(),
            tags,
            mentions: doc.mentions.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub corpus_id: String,
    documents: Vec<Document>,
    index: HashMap<String, (usize, usize)>,
}

impl Corpus {
    /// Validates every document and builds the mention lookup.
    pub fn new(corpus_id: impl Into<String>, documents: Vec<Document>) -> Result<Self> {
        Self::validated(corpus_id.into(), documents, None)
    }

    fn validated(corpus_id: String, documents: Vec<Document>, lines: Option<&[usize]>) -> Result<Self> {
        let mut doc_ids = BTreeSet::new();
        let mut index = HashMap::new();
        for (d, doc) in documents.iter().enumerate() {
            let line = lines.map_or(d + 1, |l| l[d]);
            if !doc_ids.insert(doc.doc_id.as_str()) {
                return Err(Error::DuplicateDocument {
                    line,
                    doc_id: doc.doc_id.clone(),
                });
            }
            for (s, sentence) in doc.sentences.iter().enumerate() {
                if let Some(tags) = &sentence.tags {
                    if tags.len() != sentence.tokens.len() {
                        return Err(Error::Malformed {
                            line,
                            message: format!(
                                "document {}: sentence {s} has {} tokens but {} tag sets",
                                doc.doc_id,
                                sentence.tokens.len(),
                                tags.len()
                            ),
                        });
                    }
                }
            }
            for (m, mention) in doc.mentions.iter().enumerate() {
                let oob = |detail: String| Error::SpanOutOfBounds {
                    line,
                    doc_id: doc.doc_id.clone(),
                    mention_id: mention.mention_id.clone(),
                    detail,
                };
                if mention.doc_id != doc.doc_id {
                    return Err(Error::Malformed {
                        line,
                        message: format!(
                            "mention {} claims document {} but sits in {}",
                            mention.mention_id, mention.doc_id, doc.doc_id
                        ),
                    });
                }
                let Some(sentence) = doc.sentences.get(mention.sentence_idx) else {
                    return Err(oob(format!(
                        "sentence {} of {}",
                        mention.sentence_idx,
                        doc.sentences.len()
                    )));
                };
                if mention.start_tok > mention.end_tok {
                    return Err(oob(format!(
                        "start_tok {} > end_tok {}",
                        mention.start_tok, mention.end_tok
                    )));
                }
                if mention.end_tok >= sentence.tokens.len() {
                    return Err(oob(format!(
                        "tokens {}..={} in a {}-token sentence",
                        mention.start_tok,
                        mention.end_tok,
                        sentence.tokens.len()
                    )));
                }
                if index.insert(mention.mention_id.clone(), (d, m)).is_some() {
                    return Err(Error::DuplicateMention {
                        doc_id: doc.doc_id.clone(),
                        mention_id: mention.mention_id.clone(),
                    });
                }
            }
        }
        Ok(Corpus {
            corpus_id,
            documents,
            index,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }

    /// Mentions in document order.
    pub fn mentions(&self) -> impl Iterator<Item = &Mention> {
        self.documents.iter().flat_map(|d| d.mentions.iter())
    }

    pub fn mention_count(&self) -> usize {
        self.index.len()
    }

    pub fn mention(&self, mention_id: &str) -> Option<&Mention> {
        let &(d, m) = self.index.get(mention_id)?;
        Some(&self.documents[d].mentions[m])
    }

    fn locate(&self, mention_id: &str) -> Result<(&Document, &Mention)> {
        let &(d, m) = self
            .index
            .get(mention_id)
            .ok_or_else(|| Error::UnknownMention(mention_id.to_owned()))?;
        let doc = &self.documents[d];
        Ok((doc, &doc.mentions[m]))
    }

    pub fn has_tags(&self) -> bool {
        self.documents
            .iter()
            .flat_map(|d| d.sentences.iter())
            .any(|s| s.tags.is_some())
    }

    /// Keeps only mentions of one type; documents are retained as context.
    pub fn filter_type(&self, mention_type: MentionType) -> Corpus {
        let documents = self
            .documents
            .iter()
            .map(|d| Document {
                mentions: d
                    .mentions
                    .iter()
                    .filter(|m| m.mention_type == mention_type)
                    .cloned()
                    .collect(),
                ..d.clone()
            })
            .collect();
        Corpus::new(self.corpus_id.clone(), documents).expect("subset of a valid corpus is valid")
    }

    /// Gold partition over every mention; fails if any mention lacks a label.
    pub fn gold_partition(&self) -> Result<Partition> {
        self.mentions()
            .map(|m| match &m.gold_cluster_id {
                Some(c) => Ok((m.mention_id.clone(), c.clone())),
                None => Err(Error::MissingGold(m.mention_id.clone())),
            })
            .collect::<Result<BTreeMap<_, _>>>()
            .map(Partition::from)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for doc in &self.documents {
            serde_json::to_writer(&mut out, &DocumentRecord::from_document(doc))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Reads a corpus file; the corpus id defaults to the file stem.
    pub fn read(path: &Path, corpus_id: Option<&str>) -> Result<Corpus> {
        let id = corpus_id.map(str::to_owned).unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
        parse_corpus(&bytes, id).map_err(|e| e.at_path(path))
    }
}

/// Parses Corpus JSONL. Blank lines are skipped.
pub fn parse_corpus(serialized: &[u8], corpus_id: impl Into<String>) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in serialized.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DocumentRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        documents.push(record.into_document(line_no)?);
        lines.push(line_no);
    }
    Corpus::validated(corpus_id.into(), documents, Some(&lines))
}

/// Tokens of the sentences within `w` of a mention's sentence, clipped to the
/// document.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextWindow {
    pub tokens: Vec<String>,
    /// Signed sentence distance of each token from the mention sentence.
    pub sentence_offsets: Vec<isize>,
    /// Position of the mention's first token within `tokens`.
    pub mention_start: usize,
    /// Position of the mention's last token within `tokens` (inclusive).
    pub mention_end: usize,
    pub first_sentence: usize,
    pub last_sentence: usize,
}

impl ContextWindow {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn mention_tokens(&self) -> &[String] {
        &self.tokens[self.mention_start..=self.mention_end]
    }
}

pub fn context_window(corpus: &Corpus, mention_id: &str, w: usize) -> Result<ContextWindow> {
    let (doc, mention) = corpus.locate(mention_id)?;
    let centre = mention.sentence_idx;
    let first = centre.saturating_sub(w);
    let last = centre.saturating_add(w).min(doc.sentences.len() - 1);
    let mut tokens = Vec::new();
    let mut sentence_offsets = Vec::new();
    let mut mention_start = 0;
    for s in first..=last {
        let sentence = &doc.sentences[s];
        let view = if s == centre {
            mention_start = tokens.len() + mention.start_tok;
            sentence.own_tokens()
        } else {
            &sentence.tokens
        };
        tokens.extend(view.iter().cloned());
        sentence_offsets.extend(std::iter::repeat(s as isize - centre as isize).take(view.len()));
    }
    Ok(ContextWindow {
        tokens,
        sentence_offsets,
        mention_start,
        mention_end: mention_start + (mention.end_tok - mention.start_tok),
        first_sentence: first,
        last_sentence: last,
    })
}

/// Disjoint union of corpora. Document, mention and gold cluster ids are
/// prefixed with `corpus_id/` so nothing collides across sources.
pub fn merge_corpora(corpora: &[Corpus]) -> Result<Corpus> {
    if corpora.is_empty() {
        return Err(Error::EmptyInput("merge_corpora"));
    }
    let merged_id = corpora
        .iter()
        .map(|c| c.corpus_id.as_str())
        .collect::<Vec<_>>()
        .join("+");
    let mut documents = Vec::new();
    for corpus in corpora {
        let ns = |id: &str| format!("{}/{}", corpus.corpus_id, id);
        for doc in &corpus.documents {
            let doc_id = ns(&doc.doc_id);
            documents.push(Document {
                doc_id: doc_id.clone(),
                topic_id: doc.topic_id.as_deref().map(ns),
                sentences: doc.sentences.clone(),
                mentions: doc
                    .mentions
                    .iter()
                    .map(|m| Mention {
                        mention_id: ns(&m.mention_id),
                        doc_id: doc_id.clone(),
                        gold_cluster_id: m.gold_cluster_id.as_deref().map(ns),
                        ..m.clone()
                    })
                    .collect(),
            });
        }
    }
    Corpus::new(merged_id, documents)
}

/// Replaces tokens carrying any tag in `tags_to_mask` with [`MASK_TOKEN`],
/// within each mention's context window of radius `w`. A mention's own
/// sentence stays unmasked from that mention's point of view.
pub fn mask_tokens(corpus: &Corpus, tags_to_mask: &BTreeSet<TokenTag>, w: usize) -> Result<Corpus> {
    if tags_to_mask.is_empty() {
        return Ok(corpus.clone());
    }
    if !corpus.has_tags() {
        return Err(Error::NoTags);
    }
    let mut out = corpus.clone();
    for doc in &mut out.documents {
        let n = doc.sentences.len();
        let mut in_context = vec![false; n];
        for m in &doc.mentions {
            let i = m.sentence_idx;
            for (s, flag) in in_context
                .iter_mut()
                .enumerate()
                .take((i + w).min(n - 1) + 1)
                .skip(i.saturating_sub(w))
            {
                if s != i {
                    *flag = true;
                }
            }
        }
        for (sentence, _) in doc.sentences.iter_mut().zip(&in_context).filter(|(_, &c)| c) {
            let Some(tags) = &sentence.tags else { continue };
            let original = sentence.tokens.clone();
            let mut touched = false;
            for (tok, tag_set) in sentence.tokens.iter_mut().zip(tags) {
                if !tag_set.is_disjoint(tags_to_mask) && tok != MASK_TOKEN {
                    *tok = MASK_TOKEN.to_owned();
                    touched = true;
                }
            }
            if touched && sentence.unmasked.is_none() {
                sentence.unmasked = Some(original);
            }
        }
    }
    Ok(out)
}

/// Assignment of mention ids to cluster ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: BTreeMap<String, String>,
}

impl From<BTreeMap<String, String>> for Partition {
    fn from(assignment: BTreeMap<String, String>) -> Self {
        Partition { assignment }
    }
}

impl Partition {
    /// Builds a partition from member lists, naming clusters by position.
    /// A mention listed twice keeps its last cluster.
    pub fn from_clusters<I, C, S>(clusters: I) -> Self
    where
        I: IntoIterator<Item = C>,
        C: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut assignment = BTreeMap::new();
        for (i, members) in clusters.into_iter().enumerate() {
            for m in members {
                assignment.insert(m.into(), format!("cluster_{i}"));
            }
        }
        Partition { assignment }
    }

    pub fn singletons<S: AsRef<str>>(mentions: impl IntoIterator<Item = S>) -> Self {
        Partition {
            assignment: mentions
                .into_iter()
                .map(|m| (m.as_ref().to_owned(), m.as_ref().to_owned()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn cluster_of(&self, mention_id: &str) -> Option<&str> {
        self.assignment.get(mention_id).map(String::as_str)
    }

    /// Cluster id to sorted member list.
    pub fn clusters(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (m, c) in &self.assignment {
            out.entry(c.as_str()).or_default().push(m.as_str());
        }
        out
    }

    /// Member sets in a canonical order, independent of cluster naming.
    pub fn canonical_clusters(&self) -> BTreeSet<Vec<&str>> {
        self.clusters().into_values().collect()
    }

    pub fn same_clustering(&self, other: &Partition) -> bool {
        self.canonical_clusters() == other.canonical_clusters()
    }

    pub fn read(path: &Path) -> Result<Partition> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).at_path(path))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("string maps always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(doc: &str, sentences: &str, mentions: &str) -> String {
        format!(r#"{{"doc_id":"{doc}","topic_id":null,"sentences":{sentences},"tags":null,"mentions":{mentions}}}"#)
    }

    fn mention(id: &str, s: usize, a: usize, b: usize, gold: &str) -> String {
        format!(
            r#"{{"mention_id":"{id}","sentence_idx":{s},"start_tok":{a},"end_tok":{b},"mention_type":"event","gold_cluster_id":"{gold}"}}"#
        )
    }

    fn four_sentence_doc() -> Corpus {
        let l = line(
            "d",
            r#"[["s0a","s0b"],["s1a","s1b","s1c"],["s2a"],["s3a","s3b"]]"#,
            &format!("[{},{}]", mention("m0", 0, 1, 1, "c"), mention("m2", 2, 0, 0, "c")),
        );
        parse_corpus(l.as_bytes(), "t").unwrap()
    }

    #[test]
    fn parses_minimal_document() {
        let l = line("d1", r#"[["A","quake","struck"]]"#, &format!("[{}]", mention("m1", 0, 1, 2, "c1")));
        let corpus = parse_corpus(l.as_bytes(), "ecb").unwrap();
        assert_eq!(corpus.mention_count(), 1);
        let m = corpus.mention("m1").unwrap();
        assert_eq!(m.doc_id, "d1");
        assert_eq!((m.start_tok, m.end_tok), (1, 2));
    }

    #[test]
    fn rejects_span_out_of_bounds() {
        let l = line("d1", r#"[["A","quake","struck"]]"#, &format!("[{}]", mention("m1", 0, 5, 5, "c1")));
        let err = parse_corpus(l.as_bytes(), "x").unwrap_err();
        assert!(matches!(err, Error::SpanOutOfBounds { line: 1, .. }), "{err}");
        assert!(err.to_string().contains("span out of bounds"));
    }

    #[test]
    fn rejects_inverted_span_and_bad_sentence() {
        let l = line("d1", r#"[["A","b"]]"#, &format!("[{}]", mention("m1", 0, 1, 0, "c")));
        assert!(matches!(parse_corpus(l.as_bytes(), "x"), Err(Error::SpanOutOfBounds { .. })));
        let l = line("d1", r#"[["A","b"]]"#, &format!("[{}]", mention("m1", 3, 0, 0, "c")));
        assert!(matches!(parse_corpus(l.as_bytes(), "x"), Err(Error::SpanOutOfBounds { .. })));
    }

    #[test]
    fn rejects_duplicate_document() {
        let text = format!("{}\n\n{}\n", line("d1", "[[\"a\"]]", "[]"), line("d1", "[[\"b\"]]", "[]"));
        let err = parse_corpus(text.as_bytes(), "x").unwrap_err();
        assert!(matches!(err, Error::DuplicateDocument { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("duplicate document id"));
    }

    #[test]
    fn rejects_duplicate_mention_across_documents() {
        let text = format!(
            "{}\n{}\n",
            line("d1", "[[\"a\"]]", &format!("[{}]", mention("m", 0, 0, 0, "c"))),
            line("d2", "[[\"b\"]]", &format!("[{}]", mention("m", 0, 0, 0, "c")))
        );
        assert!(matches!(
            parse_corpus(text.as_bytes(), "x"),
            Err(Error::DuplicateMention { .. })
        ));
    }

    #[test]
    fn reports_malformed_line() {
        let text = format!("{}\n{{not json\n", line("d1", "[[\"a\"]]", "[]"));
        let err = parse_corpus(text.as_bytes(), "x").unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_tag_length_mismatch() {
        let text = r#"{"doc_id":"d","sentences":[["a","b"]],"tags":[[["time"]]],"mentions":[]}"#;
        assert!(matches!(parse_corpus(text.as_bytes(), "x"), Err(Error::Malformed { .. })));
    }

    #[test]
    fn window_zero_is_the_mention_sentence() {
        let corpus = four_sentence_doc();
        let win = context_window(&corpus, "m2", 0).unwrap();
        assert_eq!(win.tokens, vec!["s2a"]);
        assert_eq!((win.mention_start, win.mention_end), (0, 0));
    }

    #[test]
    fn window_clips_at_document_start() {
        let text = line("d", r#"[["a","b"],["c"]]"#, &format!("[{}]", mention("m", 0, 1, 1, "c")));
        let corpus = parse_corpus(text.as_bytes(), "x").unwrap();
        let win = context_window(&corpus, "m", 1).unwrap();
        assert_eq!((win.first_sentence, win.last_sentence), (0, 1));
        assert_eq!(win.tokens, vec!["a", "b", "c"]);
        assert_eq!(win.mention_tokens(), ["b"]);
        assert_eq!(win.sentence_offsets, vec![0, 0, 1]);
    }

    #[test]
    fn wide_window_covers_document() {
        let corpus = four_sentence_doc();
        let win = context_window(&corpus, "m2", 100).unwrap();
        assert_eq!((win.first_sentence, win.last_sentence), (0, 3));
        assert_eq!(win.len(), 8);
        assert_eq!(win.mention_tokens(), ["s2a"]);
        assert_eq!(win.mention_start, 5);
    }

    #[test]
    fn window_unknown_mention() {
        let corpus = four_sentence_doc();
        assert!(matches!(context_window(&corpus, "nope", 1), Err(Error::UnknownMention(_))));
    }

    #[test]
    fn merge_namespaces_ids() {
        let a = four_sentence_doc();
        let mut b = four_sentence_doc();
        b.corpus_id = "u".into();
        let merged = merge_corpora(&[a.clone(), b]).unwrap();
        assert_eq!(merged.mention_count(), 4);
        let ids: Vec<_> = merged.documents().iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["t/d", "u/d"]);
        let m = merged.mention("u/m2").unwrap();
        assert_eq!(m.doc_id, "u/d");
        assert_eq!(m.gold_cluster_id.as_deref(), Some("u/c"));
        assert_eq!(merged.gold_partition().unwrap().clusters().len(), 2);
    }

    #[test]
    fn merge_of_nothing_fails() {
        assert!(matches!(merge_corpora(&[]), Err(Error::EmptyInput(_))));
    }

    fn tagged_corpus() -> Corpus {
        let time: BTreeSet<_> = [TokenTag::Time].into();
        let none = BTreeSet::new();
        let mk = |id: &str, s: usize| Mention {
            mention_id: id.into(),
            doc_id: "d".into(),
            sentence_idx: s,
            start_tok: 0,
            end_tok: 0,
            mention_type: MentionType::Event,
            gold_cluster_id: Some("c".into()),
        };
        let doc = Document {
            doc_id: "d".into(),
            topic_id: None,
            sentences: vec![
                Sentence::new(["monday", "rain"]).with_tags(vec![time.clone(), none.clone()]),
                Sentence::new(["quake", "tuesday"]).with_tags(vec![none.clone(), time.clone()]),
                Sentence::new(["far", "friday"]).with_tags(vec![none.clone(), time.clone()]),
            ],
            mentions: vec![mk("m", 1)],
        };
        Corpus::new("t", vec![doc]).unwrap()
    }

    #[test]
    fn masks_context_but_not_mention_sentence() {
        let corpus = tagged_corpus();
        let masked = mask_tokens(&corpus, &[TokenTag::Time].into(), 1).unwrap();
        let doc = &masked.documents()[0];
        assert_eq!(doc.sentences[0].tokens, vec![MASK_TOKEN, "rain"]);
        assert_eq!(doc.sentences[1].tokens, vec!["quake", "tuesday"]);
        assert_eq!(doc.sentences[2].tokens, vec!["far", MASK_TOKEN]);
        // Original untouched.
        assert_eq!(corpus.documents()[0].sentences[0].tokens, vec!["monday", "rain"]);
    }

    #[test]
    fn masking_respects_radius() {
        let corpus = tagged_corpus();
        let masked = mask_tokens(&corpus, &[TokenTag::Time].into(), 0).unwrap();
        assert_eq!(masked, corpus);
    }

    #[test]
    fn own_sentence_unmasked_when_it_is_context_for_another_mention() {
        let mut docs = tagged_corpus().into_documents();
        docs[0].mentions.push(Mention {
            mention_id: "n".into(),
            doc_id: "d".into(),
            sentence_idx: 0,
            start_tok: 1,
            end_tok: 1,
            mention_type: MentionType::Event,
            gold_cluster_id: Some("c".into()),
        });
        let corpus = Corpus::new("t", docs).unwrap();
        let masked = mask_tokens(&corpus, &[TokenTag::Time].into(), 1).unwrap();
        // Sentence 1 is context for n, so n's window sees it masked, m's does not.
        let for_n = context_window(&masked, "n", 1).unwrap();
        assert_eq!(for_n.tokens, vec!["monday", "rain", "quake", MASK_TOKEN]);
        let for_m = context_window(&masked, "m", 1).unwrap();
        assert_eq!(for_m.tokens, vec![MASK_TOKEN, "rain", "quake", "tuesday", "far", MASK_TOKEN]);
    }

    #[test]
    fn empty_mask_is_identity() {
        let corpus = tagged_corpus();
        assert_eq!(mask_tokens(&corpus, &BTreeSet::new(), 3).unwrap(), corpus);
    }

    #[test]
    fn masking_untagged_corpus_fails() {
        let corpus = four_sentence_doc();
        assert!(matches!(
            mask_tokens(&corpus, &[TokenTag::Location].into(), 1),
            Err(Error::NoTags)
        ));
    }

    #[test]
    fn gold_partition_requires_labels() {
        let text = r#"{"doc_id":"d","sentences":[["a"]],"mentions":[{"mention_id":"m","sentence_idx":0,"start_tok":0,"end_tok":0,"mention_type":"entity"}]}"#;
        let corpus = parse_corpus(text.as_bytes(), "x").unwrap();
        assert!(matches!(corpus.gold_partition(), Err(Error::MissingGold(_))));
    }

    #[test]
    fn partition_json_shape() {
        let p = Partition::from_clusters([vec!["a", "b"], vec!["c"]]);
        let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(v["assignment"]["a"], "cluster_0");
        assert_eq!(v["assignment"]["c"], "cluster_1");
        assert!(p.same_clustering(&Partition::from_clusters([vec!["c"], vec!["b", "a"]])));
    }
}
