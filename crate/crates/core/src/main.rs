use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ucoref::align::{align_flat_mentions, align_flat_referents, alignment_json, parse_mu, FlatLayer, ReferentScore, Score};
use ucoref::eval::{score, write_table_rows, EvalConfig, TABLE_HEADER};
use ucoref::layer::{validate_layer, CorefLayer, DIAGNOSTICS_HEADER};
use ucoref::mention::{extract_candidates, questionnaire};
use ucoref::pipeline::{analyze, corpus_dir_stats, ingest_external, run_pipeline, DocStatus, ExternalFormat, PipelineConfig};
use ucoref::spans::{to_spans, write_conll, SpanLayer, SpanMode};
use ucoref::ucca::{parse_passage, write_passage, Passage};
use ucoref::Error;

#[derive(Parser)]
#[command(name = "ucoref", version, about = "Coreference layers over UCCA passages")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Overlap threshold for fuzzy alignment, as a decimal or fraction.
    #[arg(long, global = true, default_value = "0")]
    mu: String,
    /// Span convention used for comparison.
    #[arg(long, global = true, value_enum, default_value_t = Mode::Max)]
    span_mode: Mode,
    /// Keep implicit mentions as null spans.
    #[arg(long, global = true)]
    include_null: bool,
    /// Use Dice without the factor 2.
    #[arg(long, global = true)]
    compat_dice: bool,
    /// Output directory for the pipeline.
    #[arg(long, global = true, env = "UCOREF_OUT_DIR", default_value = "ucoref-out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Min,
    Max,
}

impl From<Mode> for SpanMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Min => SpanMode::Min,
            Mode::Max => SpanMode::Max,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RefScore {
    AlignedMentions,
    TokenUnion,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpanFormat {
    Json,
    Conll,
}

#[derive(Subcommand)]
enum Command {
    /// Check a passage and print a summary (or the normalized XML with --out).
    Parse {
        passage: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List automatic mentions and the candidates that need a verdict, or
    /// the resulting mentions when a decision file is given.
    ExtractCandidates {
        passage: PathBuf,
        #[arg(long)]
        decisions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the coreference layer from a passage and its decisions.
    BuildLayer {
        passage: PathBuf,
        decisions: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lint a layer; diagnostics go to standard error.
    Validate { passage: PathBuf, layer: PathBuf },
    /// Render a layer as token spans.
    Spans {
        passage: PathBuf,
        layer: PathBuf,
        #[arg(long, value_enum, default_value_t = SpanFormat::Json)]
        format: SpanFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Align the mentions and referents of two span layers.
    Align {
        ours: PathBuf,
        theirs: PathBuf,
        #[arg(long, value_enum, default_value_t = RefScore::AlignedMentions)]
        referent_score: RefScore,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a span layer against a reference layer.
    Eval {
        ours: PathBuf,
        theirs: PathBuf,
        /// Name of the reference scheme in the report.
        #[arg(long, default_value = "external")]
        scheme: String,
        #[arg(long, value_enum, default_value_t = RefScore::AlignedMentions)]
        referent_score: RefScore,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Corpus statistics for a directory of passages and decisions.
    Stats {
        corpus: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run every stage over a corpus directory.
    Pipeline {
        corpus: PathBuf,
        /// Directory of external layers.
        #[arg(long)]
        external: Option<PathBuf>,
    },
}

impl From<RefScore> for ReferentScore {
    fn from(r: RefScore) -> Self {
        match r {
            RefScore::AlignedMentions => ReferentScore::AlignedMentions,
            RefScore::TokenUnion => ReferentScore::TokenUnion,
        }
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn passage(path: &Path) -> Result<Passage, Error> {
    parse_passage(&read(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn span_layer(path: &Path) -> Result<SpanLayer, Error> {
    let format = ExternalFormat::detect(path).unwrap_or(ExternalFormat::SpanlayerJson);
    match format {
        ExternalFormat::SpanlayerJson => SpanLayer::from_json(&read(path)?).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        }),
        ExternalFormat::Conll2012 => ingest_external(path, format),
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    let g = &cli.global;
    let mu: Score = parse_mu(&g.mu)?;
    let mode: SpanMode = g.span_mode.into();
    match cli.command {
        Command::Parse { passage: path, out } => {
            let p = passage(&path)?;
            match out {
                Some(out) => emit(Some(&out), &write_passage(&p))?,
                None => {
                    let summary = serde_json::json!({
                        "doc_id": p.doc_id,
                        "tokens": p.terminals.len(),
                        "sentences": p.sentence_count(),
                        "units": p.units.len(),
                    });
                    emit(None, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
                }
            }
        }
        Command::ExtractCandidates { passage: path, decisions, out } => {
            let json = match decisions {
                Some(d) => serde_json::to_value(analyze(&path, Some(&d))?.mentions)?,
                None => {
                    let p = passage(&path)?;
                    questionnaire(&p, &extract_candidates(&p)?)?
                }
            };
            emit(out.as_deref(), &(serde_json::to_string_pretty(&json)? + "\n"))?;
        }
        Command::BuildLayer { passage: path, decisions, out } => {
            let a = analyze(&path, Some(&decisions))?;
            emit(out.as_deref(), &a.layer.to_json()?)?;
            if a.has_errors() {
                log::warn!("layer has diagnostic errors; run validate for details");
            }
        }
        Command::Validate { passage: path, layer } => {
            let p = passage(&path)?;
            let layer = CorefLayer::from_json(&p, &read(&layer)?)?;
            let diags = validate_layer(&p, &layer)?;
            let mut err = std::io::stderr().lock();
            let _ = writeln!(err, "{DIAGNOSTICS_HEADER}");
            for d in &diags {
                let _ = writeln!(err, "{}", d.tsv_row(&p.doc_id));
            }
            if diags.iter().any(|d| d.is_error()) {
                return Ok(1);
            }
        }
        Command::Spans { passage: path, layer, format, out } => {
            let p = passage(&path)?;
            let layer = CorefLayer::from_json(&p, &read(&layer)?)?;
            let spans = to_spans(&p, &layer, mode, g.include_null)?;
            let text = match format {
                SpanFormat::Json => spans.to_json()?,
                SpanFormat::Conll => write_conll(&p, &spans),
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Align { ours, theirs, referent_score, out } => {
            let (a, b) = (span_layer(&ours)?, span_layer(&theirs)?);
            if a.doc_id != b.doc_id {
                return Err(Error::DocMismatch { left: a.doc_id, right: b.doc_id });
            }
            let (fa, fb) = (FlatLayer::new(&a), FlatLayer::new(&b));
            let m = align_flat_mentions(&fa, &fb, mu, g.compat_dice);
            let r = align_flat_referents(&fa, &fb, &m, mu, g.compat_dice, referent_score.into());
            let json = alignment_json(&a, &b, &m, &r);
            emit(out.as_deref(), &(serde_json::to_string_pretty(&json)? + "\n"))?;
        }
        Command::Eval { ours, theirs, scheme, referent_score, report } => {
            let (a, b) = (span_layer(&ours)?, span_layer(&theirs)?);
            let cfg = EvalConfig {
                mu,
                compat_dice: g.compat_dice,
                referent_score: referent_score.into(),
            };
            let r = score(&a, &b, &cfg)?;
            let mut text = format!("{TABLE_HEADER}\n");
            write_table_rows(&mut text, &scheme, mode, &r);
            emit(report.as_deref(), &text)?;
        }
        Command::Stats { corpus, report } => {
            let (stats, failed) = corpus_dir_stats(&corpus)?;
            for (stem, e) in &failed {
                eprintln!("{stem}: {e}");
            }
            emit(report.as_deref(), &stats.to_tsv())?;
            if !failed.is_empty() {
                return Ok(2);
            }
        }
        Command::Pipeline { corpus, external } => {
            let cfg = PipelineConfig {
                corpus_dir: corpus,
                external_dir: external,
                out_dir: g.out_dir.clone(),
                mu,
                span_mode: mode,
                include_null: g.include_null,
                compat_dice: g.compat_dice,
            };
            let manifest = run_pipeline(&cfg)?;
            for d in manifest.documents.iter().filter(|d| d.status != DocStatus::Ok) {
                eprintln!("{}: {:?} {}", d.stem, d.status, d.message.as_deref().unwrap_or(""));
            }
            eprintln!(
                "{} documents: {} ok, {} with diagnostics, {} failed; outputs in {}",
                manifest.documents.len(),
                manifest.count(DocStatus::Ok),
                manifest.count(DocStatus::Diagnostics),
                manifest.count(DocStatus::Error),
                cfg.out_dir.display()
            );
            return Ok(manifest.exit_code() as u8);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
