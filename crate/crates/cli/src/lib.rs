//! Command-line front end. [`run`] parses arguments, executes a subcommand
//! and returns the process exit code: 0 on success, 1 on usage errors and
//! 2 on runtime errors.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use grnlp::conllu::read_conllu;
use grnlp::container;
use grnlp::doc::Sentence;
use grnlp::g2g::{G2gConfig, MappingTable, Transliterator};
use grnlp::parser::Decoder;
use grnlp::pipeline::{ModelStore, Models, Pipeline, PipelineSpec, Processor};
use grnlp::train::{train_task, Grid, HyperParams, ModelSetup, Task, TaskModel, TrainConfig};
use grnlp::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "grnlp",
    version,
    about = "Greek tagging, parsing, NER and Greeklish transliteration"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Annotate text, one document per input line.
    Annotate(AnnotateArgs),
    /// Transliterate Greeklish to Greek, line by line.
    G2g(G2gArgs),
    /// Build a transliteration model container from a table and a corpus.
    G2gBuild(G2gBuildArgs),
    /// Train a task model by grid search.
    Train(TrainArgs),
    /// Score a task model on gold CoNLL-U.
    Evaluate(EvaluateArgs),
    /// Write pipeline.json with checksums for the models in a directory.
    Manifest(ManifestArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, Default, Eq, PartialEq, ValueEnum)]
pub enum Format {
    #[default]
    Conllu,
    JsonLines,
}

#[derive(Clone, Copy, Debug, Default, Eq, PartialEq, ValueEnum)]
pub enum DecoderArg {
    #[default]
    Greedy,
    Mst,
}

impl From<DecoderArg> for Decoder {
    fn from(d: DecoderArg) -> Self {
        match d {
            DecoderArg::Greedy => Decoder::Greedy,
            DecoderArg::Mst => Decoder::Mst,
        }
    }
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Comma-separated processors from g2g, pos, ner, dp.
    #[arg(long, default_value = "pos, ner, dp")]
    pub processors: String,
    /// Directory holding the model containers.
    #[arg(long, default_value = "models")]
    pub models: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub decoder: DecoderArg,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Input file; standard input when absent.
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct G2gArgs {
    /// Model container; the bundled table and corpus when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Input file; standard input when absent.
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct G2gBuildArgs {
    /// Mapping table TSV; the shipped table when absent.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Greek text, one sentence per line; the bundled corpus when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = G2gConfig::default().order)]
    pub order: usize,
    #[arg(long, default_value_t = G2gConfig::default().lm_weight)]
    pub lm_weight: f64,
    #[arg(long, default_value_t = G2gConfig::default().beam_width)]
    pub beam_width: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_task)]
    pub task: Task,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Output model container.
    #[arg(long)]
    pub out: PathBuf,
    /// `default` for the full search space, `single` for one cell
    /// from the hyperparameter flags, or a JSON file with the grid.
    #[arg(long, default_value = "single")]
    pub grid: String,
    #[arg(long, default_value_t = HyperParams::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = HyperParams::default().dropout)]
    pub dropout: f64,
    #[arg(long, default_value_t = HyperParams::default().grad_accumulation_steps)]
    pub accumulation: usize,
    #[arg(long, default_value_t = HyperParams::default().weight_decay)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = HyperParams::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = HyperParams::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().patience)]
    pub patience: usize,
    /// Stop a cell once its dev metric reaches this value.
    #[arg(long)]
    pub target: Option<f64>,
    /// JSON file with encoder and parser settings.
    #[arg(long)]
    pub setup: Option<PathBuf>,
    /// Write the per-cell grid report as TSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_parser = parse_task)]
    pub task: Task,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub decoder: DecoderArg,
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    #[arg(long, default_value = "models")]
    pub models: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value = "models")]
    pub models: PathBuf,
    /// Maximum request body size in bytes.
    #[arg(long, default_value_t = grnlp_server::DEFAULT_BODY_LIMIT)]
    pub body_limit: usize,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

/// Runs the CLI with explicit streams.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(cli.command, stdin, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error[{}]: {e}", e.code());
            EXIT_RUNTIME
        }
    }
}

fn execute(
    command: Command,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> grnlp::Result<()> {
    match command {
        Command::Annotate(a) => annotate(&a, stdin, stdout),
        Command::G2g(a) => g2g(&a, stdin, stdout),
        Command::G2gBuild(a) => g2g_build(&a),
        Command::Train(a) => train(&a, stdout),
        Command::Evaluate(a) => evaluate(&a, stdout),
        Command::Manifest(a) => {
            let manifest = ModelStore::write_manifest(&a.models)?;
            for (name, entry) in &manifest.models {
                writeln!(stdout, "{name}\t{}\t{}", entry.path, entry.sha256)?;
            }
            Ok(())
        }
        Command::Serve(a) => serve(&a, stderr),
    }
}

fn input_reader<'a>(path: &Option<PathBuf>, stdin: &'a mut dyn Read) -> grnlp::Result<Box<dyn BufRead + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufReader::new(fs::File::open(p)?)),
        None => Box::new(BufReader::new(stdin)),
    })
}

/// Annotates every non-blank line of `input` as one document.
pub fn annotate_lines<R: BufRead>(
    pipeline: &Pipeline,
    input: R,
    format: Format,
    out: &mut dyn Write,
) -> grnlp::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let result = pipeline.run(&line)?;
        match format {
            Format::Conllu => out.write_all(result.to_conllu().as_bytes())?,
            Format::JsonLines => writeln!(out, "{}", result.to_json())?,
        }
    }
    Ok(())
}

fn annotate(a: &AnnotateArgs, stdin: &mut dyn Read, stdout: &mut dyn Write) -> grnlp::Result<()> {
    let spec = PipelineSpec::parse(&a.processors)?;
    let pipeline = Pipeline::create(&spec, &ModelStore::open(&a.models)?, a.decoder.into())?;
    let input = input_reader(&a.input, stdin)?;
    annotate_lines(&pipeline, input, a.format, stdout)
}

fn g2g(a: &G2gArgs, stdin: &mut dyn Read, stdout: &mut dyn Write) -> grnlp::Result<()> {
    let model = match &a.model {
        Some(p) => container::load(p)?,
        None => Transliterator::bundled(),
    };
    for line in input_reader(&a.input, stdin)?.lines() {
        writeln!(stdout, "{}", model.transliterate(&line?))?;
    }
    Ok(())
}

fn g2g_build(a: &G2gBuildArgs) -> grnlp::Result<()> {
    let table = match &a.table {
        Some(p) => MappingTable::parse(&fs::read_to_string(p)?)?,
        None => MappingTable::default_table(),
    };
    let corpus = match &a.corpus {
        Some(p) => fs::read_to_string(p)?,
        None => Transliterator::bundled_corpus().to_owned(),
    };
    let config = G2gConfig {
        order: a.order,
        lm_weight: a.lm_weight,
        beam_width: a.beam_width,
    };
    let model = Transliterator::train(table, corpus.lines(), config)?;
    container::save(&model, &a.out)
}

/// Sentences of every document in a CoNLL-U file.
pub fn read_sentences(path: &Path) -> grnlp::Result<Vec<Sentence>> {
    let file = BufReader::new(fs::File::open(path)?);
    Ok(read_conllu(file)?.into_iter().flat_map(|d| d.sentences).collect())
}

fn train(a: &TrainArgs, stdout: &mut dyn Write) -> grnlp::Result<()> {
    let hp = HyperParams {
        learning_rate: a.learning_rate,
        dropout: a.dropout,
        grad_accumulation_steps: a.accumulation,
        weight_decay: a.weight_decay,
        epochs: a.epochs,
        seed: a.seed,
    };
    let grid = match a.grid.as_str() {
        "default" => Grid::default(),
        "single" => Grid::single(&hp),
        path => serde_json::from_slice(&fs::read(path)?)?,
    };
    let setup: ModelSetup = match &a.setup {
        Some(p) => serde_json::from_slice(&fs::read(p)?)?,
        None => ModelSetup::default(),
    };
    let config = TrainConfig {
        batch_size: a.batch_size,
        patience: a.patience,
        target: a.target,
    };
    let (train_set, dev, test) = (
        read_sentences(&a.train)?,
        read_sentences(&a.dev)?,
        read_sentences(&a.test)?,
    );
    let cells = grid.cells(a.epochs, a.seed);
    let (model, report) = train_task(a.task, &setup, &cells, &train_set, &dev, &test, &config)?;
    model.save(&a.out)?;
    if let Some(p) = &a.report {
        fs::write(p, report.to_tsv())?;
    }
    stdout.write_all(report.to_text().as_bytes())?;
    Ok(())
}

fn evaluate(a: &EvaluateArgs, stdout: &mut dyn Write) -> grnlp::Result<()> {
    let model = TaskModel::load(a.task, &a.model)?;
    let eval = model.evaluate(&read_sentences(&a.gold)?, a.decoder.into())?;
    stdout.write_all(eval.to_text().as_bytes())?;
    Ok(())
}

fn serve(a: &ServeArgs, stderr: &mut dyn Write) -> grnlp::Result<()> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Error::Io(io::Error::new(io::ErrorKind::InvalidInput, e)))?;
    let models = Models::load_available(&ModelStore::open(&a.models)?)?;
    let names: Vec<&str> = models.available().into_iter().map(Processor::name).collect();
    writeln!(stderr, "serving {} on http://{addr}", names.join(", "))?;
    let state = grnlp_server::AppState {
        models,
        body_limit: a.body_limit,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(grnlp_server::serve(addr, state))?;
    Ok(())
}
