mod commands;
mod settings;

use std::fmt;
use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use synthaug::corpus::CorpusError;
use synthaug::detector::DetectorError;
use synthaug::filter::FilterError;
use synthaug::langmodel::LmError;
use synthaug::metrics::MetricsError;
use synthaug::pipeline::PipelineError;

use settings::{Cli, Effective, Manifest};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

/// Bad flags or settings, detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn corpus_kind(e: &CorpusError) -> (u8, &'static str) {
    match e {
        CorpusError::MissingFile(_) => (EXIT_DATA, "MissingFile"),
        CorpusError::MalformedRow { .. } => (EXIT_DATA, "MalformedRow"),
        CorpusError::UnknownLabel { .. } => (EXIT_DATA, "UnknownLabel"),
        CorpusError::DatasetTooSmall { .. } => (EXIT_DATA, "DatasetTooSmall"),
        CorpusError::InvalidRatio(_) => (EXIT_USAGE, "InvalidRatio"),
        CorpusError::NotEnoughNonHate { .. } => (EXIT_DATA, "NotEnoughNonHate"),
        CorpusError::DuplicateName(_) => (EXIT_DATA, "DuplicateName"),
        CorpusError::TestLeakage { .. } => (EXIT_INTERNAL, "TestLeakage"),
        CorpusError::Io(_) => (EXIT_DATA, "Io"),
    }
}

fn lm_kind(e: &LmError) -> (u8, &'static str) {
    match e {
        LmError::EmptyCorpus => (EXIT_DATA, "EmptyCorpus"),
        LmError::InvalidOrder => (EXIT_USAGE, "InvalidOrder"),
        LmError::InvalidAlpha(_) => (EXIT_USAGE, "InvalidAlpha"),
        LmError::InvalidSampler(_) => (EXIT_USAGE, "InvalidSampler"),
        LmError::Parse { .. } => (EXIT_DATA, "Parse"),
        LmError::Corpus(c) => corpus_kind(c),
        LmError::Io(_) => (EXIT_DATA, "Io"),
    }
}

fn filter_kind(e: &FilterError) -> (u8, &'static str) {
    match e {
        FilterError::SingleClassCorpus(_) => (EXIT_DATA, "SingleClassCorpus"),
        FilterError::InvalidStage(_) => (EXIT_USAGE, "InvalidStage"),
        FilterError::Corpus(c) => corpus_kind(c),
        FilterError::Serde(_) => (EXIT_DATA, "Serde"),
        FilterError::Io(_) => (EXIT_DATA, "Io"),
    }
}

fn detector_kind(e: &DetectorError) -> (u8, &'static str) {
    match e {
        DetectorError::TokenIdOutOfRange { .. } => (EXIT_INTERNAL, "TokenIdOutOfRange"),
        DetectorError::InvalidConfig(_) => (EXIT_USAGE, "InvalidConfig"),
        DetectorError::SingleClassCorpus(_) => (EXIT_DATA, "SingleClassCorpus"),
        DetectorError::NonFinite(_) => (EXIT_INTERNAL, "NonFinite"),
        DetectorError::Checkpoint(_) => (EXIT_DATA, "Checkpoint"),
        DetectorError::Corpus(c) => corpus_kind(c),
        DetectorError::Io(_) => (EXIT_DATA, "Io"),
    }
}

fn metrics_kind(_: &MetricsError) -> (u8, &'static str) {
    (EXIT_DATA, "Metrics")
}

fn pipeline_kind(e: &PipelineError) -> (u8, &'static str) {
    match e {
        PipelineError::UnknownDataset(_) => (EXIT_USAGE, "UnknownDataset"),
        PipelineError::MissingArtifacts(_) => (EXIT_DATA, "MissingArtifacts"),
        PipelineError::InvalidPlan(_) => (EXIT_USAGE, "InvalidPlan"),
        PipelineError::InsufficientAnnotators { .. } => (EXIT_USAGE, "InsufficientAnnotators"),
        PipelineError::IncompleteReplayFile { .. } => (EXIT_DATA, "IncompleteReplayFile"),
        PipelineError::EmptyReport => (EXIT_DATA, "EmptyReport"),
        PipelineError::Corpus(c) => corpus_kind(c),
        PipelineError::Lm(l) => lm_kind(l),
        PipelineError::Filter(f) => filter_kind(f),
        PipelineError::Detector(d) => detector_kind(d),
        PipelineError::Metrics(m) => metrics_kind(m),
        PipelineError::Csv(_) => (EXIT_DATA, "Csv"),
        PipelineError::Json(_) => (EXIT_DATA, "Json"),
        PipelineError::Io(_) => (EXIT_DATA, "Io"),
    }
}

/// Exit code and error kind. Core errors wrap each other transparently, so
/// the nesting is walked by hand instead of through `source()`.
fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return (EXIT_USAGE, "Usage");
        }
        if cause.is::<toml::de::Error>() {
            return (EXIT_USAGE, "Config");
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return pipeline_kind(e);
        }
        if let Some(e) = cause.downcast_ref::<CorpusError>() {
            return corpus_kind(e);
        }
        if let Some(e) = cause.downcast_ref::<LmError>() {
            return lm_kind(e);
        }
        if let Some(e) = cause.downcast_ref::<FilterError>() {
            return filter_kind(e);
        }
        if let Some(e) = cause.downcast_ref::<DetectorError>() {
            return detector_kind(e);
        }
        if let Some(e) = cause.downcast_ref::<MetricsError>() {
            return metrics_kind(e);
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return (EXIT_DATA, "Io");
        }
    }
    (EXIT_INTERNAL, "Internal")
}

fn load_manifest(cli: &Cli) -> anyhow::Result<Manifest> {
    let Some(path) = &cli.global.config else {
        return Ok(Manifest::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|_| CorpusError::MissingFile(path.display().to_string()))?;
    Ok(toml::from_str(&text)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.global.verbose {
        "info"
    } else {
        "warn"
    }))
    .format_timestamp(None)
    .init();

    let verb = cli.command.name();
    let result = load_manifest(&cli).and_then(|manifest| {
        let eff = Effective::resolve(&cli, manifest);
        eprintln!("# effective config\n{}", eff.banner());
        commands::run(eff)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            eprintln!("error [{kind}]: {e:#}");
            if code == EXIT_USAGE {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(verb) {
                    eprintln!("\n{}", sub.render_usage());
                }
            }
            ExitCode::from(code)
        }
    }
}
