use std::collections::HashMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::Label;
use crate::langmodel::GeneratedCorpus;
use crate::metrics::{fleiss_kappa, KappaReport};
use crate::seed::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationItem {
    pub index: usize,
    pub text: String,
    pub generated_class: Label,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub label: Label,
    /// Readability from 1 (poor) to 5 (excellent).
    pub quality: u8,
}

pub trait AnswerSource {
    fn answer(&mut self, annotator: &str, item: &AnnotationItem) -> Result<Answer, PipelineError>;
}

/// Answers read from a CSV with columns `annotator,item_index,label,quality`.
#[derive(Clone, Debug, Default)]
pub struct ReplayAnswers {
    answers: HashMap<(String, usize), Answer>,
}

impl ReplayAnswers {
    pub fn from_path(path: &Path) -> Result<Self, PipelineError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self, PipelineError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| PipelineError::IncompleteReplayFile {
                line: Some(1),
                reason: format!("missing column {name}"),
            })
        };
        let (c_ann, c_item, c_label, c_quality) = (col("annotator")?, col("item_index")?, col("label")?, col("quality")?);
        let mut answers = HashMap::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let bad = |reason: String| PipelineError::IncompleteReplayFile { line: Some(line), reason };
            let field = |i: usize| rec.get(i).unwrap_or("");
            let item: usize = field(c_item).parse().map_err(|_| bad(format!("bad item index {:?}", field(c_item))))?;
            let label: Label = field(c_label).parse().map_err(|_| bad(format!("bad label {:?}", field(c_label))))?;
            let quality: u8 = field(c_quality)
                .parse()
                .ok()
                .filter(|q| (1..=5).contains(q))
                .ok_or_else(|| bad(format!("quality {:?} is not in 1..5", field(c_quality))))?;
            answers.insert((field(c_ann).to_owned(), item), Answer { label, quality });
        }
        Ok(ReplayAnswers { answers })
    }
}

impl AnswerSource for ReplayAnswers {
    fn answer(&mut self, annotator: &str, item: &AnnotationItem) -> Result<Answer, PipelineError> {
        self.answers
            .get(&(annotator.to_owned(), item.index))
            .copied()
            .ok_or_else(|| PipelineError::IncompleteReplayFile {
                line: None,
                reason: format!("no answer from {annotator} for item {}", item.index),
            })
    }
}

/// Terminal prompt: shows the sequence and reads a label key (`h` or `n`)
/// followed by a quality digit, e.g. `h4`.
pub struct PromptAnswers<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> PromptAnswers<R, W> {
    pub fn new(input: R, output: W) -> Self {
        PromptAnswers { input, output }
    }
}

fn parse_keys(line: &str) -> Option<Answer> {
    let mut chars = line.chars().filter(|c| !c.is_whitespace());
    let label = match chars.next()?.to_ascii_lowercase() {
        'h' => Label::Hate,
        'n' => Label::NonHate,
        _ => return None,
    };
    let quality = chars.next()?.to_digit(10).filter(|q| (1..=5).contains(q))? as u8;
    chars.next().is_none().then_some(Answer { label, quality })
}

impl<R: BufRead, W: Write> AnswerSource for PromptAnswers<R, W> {
    fn answer(&mut self, annotator: &str, item: &AnnotationItem) -> Result<Answer, PipelineError> {
        writeln!(self.output, "\n[{annotator}] item {}:\n  {}", item.index, item.text)?;
        loop {
            write!(self.output, "label h/n + quality 1-5 (e.g. h4): ")?;
            self.output.flush()?;
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "annotation input closed").into());
            }
            match parse_keys(&line) {
                Some(a) => return Ok(a),
                None => writeln!(self.output, "expected h or n, then a digit 1-5")?,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationReport {
    /// Agreement on the co-annotated items; `None` without overlap.
    pub kappa: Option<KappaReport>,
    /// Share of ratings of generated hate items that said hate.
    pub hate_perceived_ratio: Option<f64>,
    /// Share of ratings of generated non-hate items that said non-hate.
    pub non_hate_perceived_ratio: Option<f64>,
    pub mean_quality: f64,
    pub items: usize,
    pub overlap: usize,
    pub annotators: Vec<String>,
    pub ratings: usize,
}

/// Draws `n_items` sequences from both corpora. The first `overlap` are
/// rated by every annotator, the rest are dealt round-robin.
pub fn annotation_session(
    hate: &GeneratedCorpus,
    non_hate: &GeneratedCorpus,
    n_items: usize,
    overlap: usize,
    annotators: &[String],
    source: &mut dyn AnswerSource,
    seed: u64,
) -> Result<AnnotationReport, PipelineError> {
    if annotators.len() < 2 {
        return Err(PipelineError::InsufficientAnnotators { needed: 2, got: annotators.len() });
    }
    if overlap > n_items {
        return Err(PipelineError::InvalidPlan(format!("overlap {overlap} exceeds {n_items} items")));
    }
    let pool: Vec<(&GeneratedCorpus, usize)> = [hate, non_hate]
        .into_iter()
        .flat_map(|c| (0..c.items.len()).filter(|&i| !c.items[i].tokens.is_empty()).map(move |i| (c, i)))
        .collect();
    if n_items > pool.len() {
        return Err(PipelineError::InvalidPlan(format!("{n_items} items requested, {} available", pool.len())));
    }
    let items: Vec<AnnotationItem> = sample(&mut rng_from_seed(seed), pool.len(), n_items)
        .into_iter()
        .enumerate()
        .map(|(index, k)| {
            let (c, i) = pool[k];
            AnnotationItem { index, text: c.items[i].text(), generated_class: c.class_label }
        })
        .collect();

    let mut ratings: Vec<(usize, Answer)> = Vec::new();
    let mut agreement = Vec::with_capacity(overlap);
    for item in &items {
        if item.index < overlap {
            let mut row = vec![0u32; 2];
            for a in annotators {
                let ans = source.answer(a, item)?;
                row[usize::from(ans.label == Label::NonHate)] += 1;
                ratings.push((item.index, ans));
            }
            agreement.push(row);
        } else {
            let a = &annotators[(item.index - overlap) % annotators.len()];
            ratings.push((item.index, source.answer(a, item)?));
        }
    }

    let kappa = if agreement.is_empty() {
        None
    } else {
        Some(fleiss_kappa(&agreement, annotators.len() as u32)?)
    };
    let ratio = |class: Label| {
        let of_class: Vec<&Answer> = ratings.iter().filter(|(i, _)| items[*i].generated_class == class).map(|(_, a)| a).collect();
        (!of_class.is_empty()).then(|| of_class.iter().filter(|a| a.label == class).count() as f64 / of_class.len() as f64)
    };
    Ok(AnnotationReport {
        kappa,
        hate_perceived_ratio: ratio(Label::Hate),
        non_hate_perceived_ratio: ratio(Label::NonHate),
        mean_quality: ratings.iter().map(|(_, a)| a.quality as f64).sum::<f64>() / ratings.len().max(1) as f64,
        items: items.len(),
        overlap,
        annotators: annotators.to_vec(),
        ratings: ratings.len(),
    })
}
