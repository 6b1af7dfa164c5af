//! Line-oriented model dump and JSONL corpus files.
//!
//! Model format, one record per line:
//!
//! ```text
//! synthaug-ngram 1
//! order <k>
//! alpha <float>
//! source <name>
//! class <hate|non-hate|->
//! unk <0|1>
//! vocab <n> <min_count>
//! <token>                        (n lines, id order, specials first)
//! contexts <m>
//! <id> <id> ...\t<next>:<count> <next>:<count> ...   (m lines, sorted)
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ContextCounts, GeneratedCorpus, GeneratedSequence, GenerativeLM, LmError};
use crate::corpus::{Label, Vocabulary, UNK};

const MAGIC: &str = "synthaug-ngram";
const VERSION: u32 = 1;

impl GenerativeLM {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MAGIC} {VERSION}")?;
        writeln!(w, "order {}", self.order)?;
        writeln!(w, "alpha {}", self.alpha)?;
        writeln!(w, "source {}", self.source)?;
        writeln!(w, "class {}", self.class.map_or("-", Label::as_str))?;
        writeln!(w, "unk {}", u8::from(self.candidates.contains(&UNK)))?;
        writeln!(w, "vocab {} {}", self.vocab.len(), self.vocab.min_count())?;
        for t in self.vocab.tokens() {
            writeln!(w, "{t}")?;
        }
        let mut keys: Vec<&Vec<u32>> = self.counts.keys().collect();
        keys.sort();
        writeln!(w, "contexts {}", keys.len())?;
        for k in keys {
            let ctx: Vec<String> = k.iter().map(u32::to_string).collect();
            let next: Vec<String> = self.counts[k].next.iter().map(|(id, n)| format!("{id}:{n}")).collect();
            writeln!(w, "{}\t{}", ctx.join(" "), next.join(" "))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), LmError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        if !path.is_file() {
            return Err(crate::corpus::CorpusError::MissingFile(path.display().to_string()).into());
        }
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, LmError> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next_line = || -> Result<(usize, String), LmError> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(LmError::Parse {
                    line: 0,
                    reason: "unexpected end of file".into(),
                }),
            }
        };
        let parse_err = |line: usize, reason: &str| LmError::Parse {
            line,
            reason: reason.to_owned(),
        };
        let field = |expected: &str, (n, l): (usize, String)| -> Result<(usize, String), LmError> {
            l.strip_prefix(expected)
                .and_then(|rest| rest.strip_prefix(' ').or(Some(rest).filter(|r| r.is_empty())))
                .map(|rest| (n, rest.to_owned()))
                .ok_or_else(|| parse_err(n, &format!("expected {expected:?}")))
        };

        let (n, header) = field(MAGIC, next_line()?)?;
        if header.trim() != VERSION.to_string() {
            return Err(parse_err(n, "unsupported model version"));
        }
        let (n, v) = field("order", next_line()?)?;
        let order: usize = v.parse().map_err(|_| parse_err(n, "bad order"))?;
        let (n, v) = field("alpha", next_line()?)?;
        let alpha: f64 = v.parse().map_err(|_| parse_err(n, "bad alpha"))?;
        let (_, source) = field("source", next_line()?)?;
        let (n, v) = field("class", next_line()?)?;
        let class = match v.as_str() {
            "-" => None,
            s => Some(s.parse::<Label>().map_err(|_| parse_err(n, "bad class"))?),
        };
        let (n, v) = field("unk", next_line()?)?;
        let with_unk = match v.as_str() {
            "0" => false,
            "1" => true,
            _ => return Err(parse_err(n, "bad unk flag")),
        };
        let (n, v) = field("vocab", next_line()?)?;
        let mut parts = v.split(' ');
        let size: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| parse_err(n, "bad vocab size"))?;
        let min_count: u32 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| parse_err(n, "bad min count"))?;
        let mut tokens = Vec::with_capacity(size);
        for _ in 0..size {
            tokens.push(next_line()?.1);
        }
        let vocab = Vocabulary::from_tokens(tokens, min_count);
        if vocab.len() != size {
            return Err(parse_err(n, "vocabulary does not round-trip"));
        }
        let (n, v) = field("contexts", next_line()?)?;
        let m: usize = v.parse().map_err(|_| parse_err(n, "bad context count"))?;
        let mut counts = HashMap::with_capacity(m);
        for _ in 0..m {
            let (n, l) = next_line()?;
            let (ctx, next) = l.split_once('\t').ok_or_else(|| parse_err(n, "missing tab"))?;
            let key: Vec<u32> = ctx
                .split(' ')
                .map(|s| s.parse().map_err(|_| parse_err(n, "bad context id")))
                .collect::<Result<_, _>>()?;
            if key.len() != order {
                return Err(parse_err(n, "context length differs from order"));
            }
            let mut c = ContextCounts::default();
            for pair in next.split(' ').filter(|s| !s.is_empty()) {
                let (id, cnt) = pair.split_once(':').ok_or_else(|| parse_err(n, "bad next entry"))?;
                let id: u32 = id.parse().map_err(|_| parse_err(n, "bad next id"))?;
                let cnt: u64 = cnt.parse().map_err(|_| parse_err(n, "bad count"))?;
                if id as usize >= vocab.len() {
                    return Err(parse_err(n, "next id outside vocabulary"));
                }
                c.total += cnt;
                c.next.insert(id, cnt);
            }
            counts.insert(key, c);
        }
        let lm = GenerativeLM::assemble(vocab, order, alpha, counts, with_unk);
        Ok(lm.with_metadata(source, class))
    }
}

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    tokens: Vec<String>,
    text: String,
    seed: u64,
    source: String,
    class: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
}

/// One JSON object per sequence with `tokens`, `text` and `seed`, plus the
/// corpus source/class and the filter confidence when present.
pub fn write_corpus_jsonl<W: Write>(corpus: &GeneratedCorpus, mut w: W) -> std::io::Result<()> {
    for item in &corpus.items {
        let line = CorpusLine {
            tokens: item.tokens.clone(),
            text: item.text(),
            seed: item.seed,
            source: corpus.source_dataset.clone(),
            class: corpus.class_label,
            confidence: item.confidence,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a corpus written by [`write_corpus_jsonl`]. An empty file yields an
/// empty corpus labeled with `fallback_class`.
pub fn read_corpus_jsonl<R: BufRead>(r: R, fallback_class: Label) -> Result<GeneratedCorpus, LmError> {
    let mut corpus = GeneratedCorpus {
        source_dataset: String::new(),
        class_label: fallback_class,
        items: Vec::new(),
    };
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine = serde_json::from_str(&line).map_err(|e| LmError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if corpus.items.is_empty() {
            corpus.source_dataset = parsed.source;
            corpus.class_label = parsed.class;
        }
        corpus.items.push(GeneratedSequence {
            tokens: parsed.tokens,
            seed: parsed.seed,
            confidence: parsed.confidence,
        });
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dataset, LabeledExample};
    use crate::langmodel::{generate_corpus, train_lm, SamplerConfig};

    fn model() -> GenerativeLM {
        let d = Dataset::new(
            "WS.hate",
            ["go home now", "they are vermin", "go away", "they ruin it"]
                .iter()
                .map(|t| LabeledExample::new(*t, Label::Hate, "WS"))
                .collect(),
        );
        let v = Vocabulary::from_sequences(d.token_sequences(), 1);
        train_lm(&d, &v, 2, 0.1).unwrap()
    }

    #[test]
    fn model_dump_round_trips() {
        let lm = model();
        let mut buf = Vec::new();
        lm.write_to(&mut buf).unwrap();
        let back = GenerativeLM::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, lm);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn truncated_dump_is_rejected() {
        let mut buf = Vec::new();
        model().write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(9).map(|l| format!("{l}\n")).collect();
        assert!(matches!(GenerativeLM::read_from(cut.as_bytes()), Err(LmError::Parse { .. })));
        assert!(GenerativeLM::load(Path::new("/nonexistent.model")).is_err());
    }

    #[test]
    fn corpus_jsonl_round_trips() {
        let lm = model();
        let cfg = SamplerConfig { seed: 3, ..SamplerConfig::default() };
        let mut corpus = generate_corpus(&lm, 10, &cfg, Label::Hate, 1).unwrap();
        corpus.items[0].confidence = Some(0.75);
        let mut buf = Vec::new();
        write_corpus_jsonl(&corpus, &mut buf).unwrap();
        let first: serde_json::Value = serde_json::from_str(std::str::from_utf8(&buf).unwrap().lines().next().unwrap()).unwrap();
        assert!(first.get("tokens").is_some() && first.get("text").is_some() && first.get("seed").is_some());
        let back = read_corpus_jsonl(buf.as_slice(), Label::NonHate).unwrap();
        assert_eq!(back, corpus);
    }
}
