use std::io::{BufRead, Write};

use super::{BioTag, CorpusError, TaggedSentence, Token};

const DOCSTART: &str = "-DOCSTART-";

/// Parses two-column CoNLL text (`token<TAB>tag`, blank line between
/// sentences, `-DOCSTART-<TAB>O` between documents).
///
/// Sentence ids are `d<doc>:s<ordinal>`, both counted from zero; the ordinal
/// restarts with each document.
pub fn parse_conll<R: BufRead>(reader: R) -> Result<Vec<TaggedSentence>, CorpusError> {
    let mut parser = Parser::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        parser.line(i + 1, &line)?;
    }
    Ok(parser.finish())
}

pub fn parse_conll_str(text: &str) -> Result<Vec<TaggedSentence>, CorpusError> {
    parse_conll(text.as_bytes())
}

#[derive(Default)]
struct Parser {
    doc: usize,
    ordinal: usize,
    tokens: Vec<Token>,
    tags: Vec<BioTag>,
    out: Vec<TaggedSentence>,
}

impl Parser {
    fn line(&mut self, lineno: usize, line: &str) -> Result<(), CorpusError> {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            self.flush();
            return Ok(());
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(CorpusError::Parse {
                line: lineno,
                message: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        let (text, tag) = (fields[0], fields[1]);
        if text == DOCSTART {
            self.flush();
            self.doc += 1;
            self.ordinal = 0;
            return Ok(());
        }
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            return Err(CorpusError::Parse {
                line: lineno,
                message: format!("token {text:?} is empty or contains whitespace"),
            });
        }
        let tag = tag.parse::<BioTag>().map_err(|e| CorpusError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        self.tokens.push(Token {
            text: text.to_string(),
            index: self.tokens.len(),
        });
        self.tags.push(tag);
        Ok(())
    }

    fn flush(&mut self) {
        if self.tokens.is_empty() {
            return;
        }
        self.out.push(TaggedSentence {
            id: format!("d{}:s{}", self.doc, self.ordinal),
            tokens: std::mem::take(&mut self.tokens),
            tags: std::mem::take(&mut self.tags),
        });
        self.ordinal += 1;
    }

    fn finish(mut self) -> Vec<TaggedSentence> {
        self.flush();
        self.out
    }
}

/// Document number encoded in a positional id, if the id has that form.
pub(crate) fn doc_of(id: &str) -> Option<usize> {
    let rest = id.strip_prefix('d')?;
    let (doc, ordinal) = rest.split_once(":s")?;
    ordinal.parse::<usize>().ok()?;
    doc.parse().ok()
}

/// Serializes sentences in the canonical form read by [`parse_conll`].
///
/// Document boundaries are recovered from positional ids; each increase of
/// the document number emits one `-DOCSTART-` line (followed by a blank
/// line) per skipped document.
pub fn serialize_conll(sentences: &[TaggedSentence]) -> String {
    let mut out = Vec::new();
    write_conll(&mut out, sentences).expect("writing to a Vec cannot fail");
    String::from_utf8(out).expect("tokens are valid UTF-8")
}

pub fn write_conll<W: Write>(mut w: W, sentences: &[TaggedSentence]) -> std::io::Result<()> {
    let mut doc = 0usize;
    for sentence in sentences {
        if let Some(d) = doc_of(&sentence.id) {
            while doc < d {
                writeln!(w, "{DOCSTART}\tO")?;
                writeln!(w)?;
                doc += 1;
            }
        }
        for (token, tag) in sentence.tokens.iter().zip(&sentence.tags) {
            writeln!(w, "{}\t{}", token.text, tag)?;
        }
        writeln!(w)?;
    }
    Ok(())
}
