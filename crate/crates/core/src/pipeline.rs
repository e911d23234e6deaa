//! Corpus-level orchestration: parse, extract, build, render, align and
//! report, one document at a time.
//!
//! A corpus directory holds `<stem>.xml` passages with optional
//! `<stem>.json` decision files. External layers live in their own
//! directory as `<stem>.<scheme>.spans.json` or `<stem>.<scheme>.conll`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::align::{align_flat_mentions, align_flat_referents, alignment_json, FlatLayer, Score};
use crate::error::{Error, Result};
use crate::eval::{score, write_table_rows, EvalConfig, EvalReport, TABLE_HEADER};
use crate::layer::{build_layer, validate_layer, CorefLayer, Diagnostic, DIAGNOSTICS_HEADER};
use crate::mention::{identify_mentions, CandidateSet, DecisionFile, MentionSet};
use crate::spans::{read_conll, to_spans, SpanLayer, SpanMode, Source};
use crate::stats::{document_counts, Counts, StatsReport};
use crate::ucca::{parse_passage, Passage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExternalFormat {
    SpanlayerJson,
    Conll2012,
}

impl ExternalFormat {
    /// Guesses the format from the file name.
    pub fn detect(path: &Path) -> Option<Self> {
        let name = path.file_name()?.to_str()?;
        if name.ends_with(".json") {
            Some(ExternalFormat::SpanlayerJson)
        } else if name.ends_with(".conll") || name.ends_with(".conll12") || name.ends_with(".gold_conll") {
            Some(ExternalFormat::Conll2012)
        } else {
            None
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads an external span layer. Every mention is marked as external;
/// singleton clusters are kept as given.
pub fn ingest_external(path: &Path, format: ExternalFormat) -> Result<SpanLayer> {
    let text = read_file(path)?;
    let mut layer = match format {
        ExternalFormat::SpanlayerJson => SpanLayer::from_json(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?,
        ExternalFormat::Conll2012 => read_conll(path, &text)?,
    };
    for m in layer.clusters.iter_mut().flat_map(|c| &mut c.mentions) {
        m.source = Source::External;
    }
    Ok(layer)
}

/// Everything derived from one passage and its decisions.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub passage: Passage,
    pub candidates: CandidateSet,
    pub mentions: MentionSet,
    pub layer: CorefLayer,
    pub diagnostics: Vec<Diagnostic>,
}

impl Analysis {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(Diagnostic::is_error)
    }
}

fn located(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { .. } | Error::Format { .. } => e,
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// Parses a passage and runs mention identification, layer construction
/// and validation. A missing decision file means no verdicts and no
/// clusters.
pub fn analyze(xml: &Path, decisions: Option<&Path>) -> Result<Analysis> {
    let passage = parse_passage(&read_file(xml)?).map_err(|e| located(xml, e))?;
    let d = match decisions {
        Some(path) => DecisionFile::from_json(&read_file(path)?).map_err(|e| located(path, e))?,
        None => DecisionFile::empty(&passage.doc_id),
    };
    let at = decisions.unwrap_or(xml);
    let (candidates, mentions) = identify_mentions(&passage, &d).map_err(|e| located(at, e))?;
    let layer = build_layer(&mentions, &d).map_err(|e| located(at, e))?;
    let diagnostics = validate_layer(&passage, &layer)?;
    Ok(Analysis {
        passage,
        candidates,
        mentions,
        layer,
        diagnostics,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PipelineConfig {
    pub corpus_dir: PathBuf,
    pub external_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub mu: Score,
    pub span_mode: SpanMode,
    pub include_null: bool,
    pub compat_dice: bool,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu > Score::from_integer(1) {
            return Err(Error::InvalidMu(self.mu.to_string()));
        }
        for dir in std::iter::once(&self.corpus_dir).chain(&self.external_dir) {
            if !dir.is_dir() {
                return Err(Error::io(
                    dir,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
                ));
            }
        }
        Ok(())
    }

    fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            mu: self.mu,
            compat_dice: self.compat_dice,
            ..EvalConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DocStatus {
    Ok,
    Diagnostics,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DocEntry {
    pub stem: String,
    pub doc_id: Option<String>,
    pub status: DocStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfigSnapshot {
    pub mu: String,
    pub span_mode: SpanMode,
    pub include_null: bool,
    pub compat_dice: bool,
    pub external: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch. The only field that varies between
    /// identical runs.
    pub generated_at: u64,
    pub config: ConfigSnapshot,
    pub documents: Vec<DocEntry>,
    /// External layers without a matching passage.
    pub unused_inputs: Vec<FileDigest>,
    pub reports: Vec<FileDigest>,
}

impl RunManifest {
    pub fn count(&self, status: DocStatus) -> usize {
        self.documents.iter().filter(|d| d.status == status).count()
    }

    /// 0 when clean, 1 when some layer has diagnostic errors, 2 when some
    /// document failed to load.
    pub fn exit_code(&self) -> i32 {
        match self.documents.iter().map(|d| d.status).max() {
            Some(DocStatus::Error) => 2,
            Some(DocStatus::Diagnostics) => 1,
            _ => 0,
        }
    }
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(root: &Path, path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.strip_prefix(root).unwrap_or(path).to_string_lossy().into_owned(),
        sha256: digest(&bytes),
    })
}

struct Inputs {
    stem: String,
    xml: Option<PathBuf>,
    decisions: Option<PathBuf>,
    /// scheme name to file
    external: BTreeMap<String, PathBuf>,
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Splits an external file name into stem and scheme.
fn external_name(path: &Path) -> Option<(String, String)> {
    let name = path.file_name()?.to_str()?;
    let base = name
        .strip_suffix(".spans.json")
        .or_else(|| name.strip_suffix(".conll"))?;
    let (stem, scheme) = base.rsplit_once('.')?;
    (!stem.is_empty() && !scheme.is_empty()).then(|| (stem.to_string(), scheme.to_string()))
}

fn collect_inputs(cfg: &PipelineConfig) -> Result<(Vec<Inputs>, Vec<PathBuf>)> {
    let mut by_stem: BTreeMap<String, Inputs> = BTreeMap::new();
    for path in list_dir(&cfg.corpus_dir)? {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let (stem, is_xml) = if let Some(s) = name.strip_suffix(".xml") {
            (s, true)
        } else if let Some(s) = name.strip_suffix(".json") {
            (s, false)
        } else {
            continue;
        };
        let inputs = by_stem.entry(stem.to_string()).or_insert_with(|| Inputs {
            stem: stem.to_string(),
            xml: None,
            decisions: None,
            external: BTreeMap::new(),
        });
        if is_xml {
            inputs.xml = Some(path);
        } else {
            inputs.decisions = Some(path);
        }
    }

    let mut unused = Vec::new();
    if let Some(dir) = &cfg.external_dir {
        for path in list_dir(dir)? {
            match external_name(&path) {
                Some((stem, scheme)) if by_stem.get(&stem).is_some_and(|i| i.xml.is_some()) => {
                    by_stem.get_mut(&stem).unwrap().external.insert(scheme, path);
                }
                _ => unused.push(path),
            }
        }
    }
    Ok((by_stem.into_values().collect(), unused))
}

struct DocResult {
    stem: String,
    doc_id: Option<String>,
    status: DocStatus,
    message: Option<String>,
    inputs: Vec<PathBuf>,
    files: Vec<(String, Vec<u8>)>,
    eval: BTreeMap<String, EvalReport>,
    counts: Option<Counts>,
}

fn process(inputs: &Inputs, cfg: &PipelineConfig) -> DocResult {
    let mut result = DocResult {
        stem: inputs.stem.clone(),
        doc_id: None,
        status: DocStatus::Error,
        message: None,
        inputs: inputs
            .xml
            .iter()
            .chain(&inputs.decisions)
            .chain(inputs.external.values())
            .cloned()
            .collect(),
        files: Vec::new(),
        eval: BTreeMap::new(),
        counts: None,
    };
    match run_document(inputs, cfg, &mut result) {
        Ok(()) => {}
        Err(e) => {
            log::warn!("{}: {e}", inputs.stem);
            result.status = DocStatus::Error;
            result.message = Some(e.to_string());
            result.files.clear();
            result.eval.clear();
            result.counts = None;
        }
    }
    result
}

fn run_document(inputs: &Inputs, cfg: &PipelineConfig, out: &mut DocResult) -> Result<()> {
    let Some(xml) = &inputs.xml else {
        return Err(Error::Format {
            path: inputs.decisions.clone().unwrap_or_default(),
            message: "decision file without a passage".into(),
        });
    };
    let a = analyze(xml, inputs.decisions.as_deref())?;
    out.doc_id = Some(a.passage.doc_id.clone());

    let mentions = serde_json::to_string_pretty(&a.mentions)? + "\n";
    out.files.push(("mentions.json".into(), mentions.into_bytes()));
    out.files.push(("layer.json".into(), a.layer.to_json()?.into_bytes()));
    let mut rendered = BTreeMap::new();
    for mode in [SpanMode::Max, SpanMode::Min] {
        let spans = to_spans(&a.passage, &a.layer, mode, cfg.include_null)?;
        out.files.push((format!("spans.{mode}.json"), spans.to_json()?.into_bytes()));
        rendered.insert(mode, spans);
    }
    let mut diag = format!("{DIAGNOSTICS_HEADER}\n");
    for d in &a.diagnostics {
        diag.push_str(&d.tsv_row(&a.passage.doc_id));
        diag.push('\n');
    }
    out.files.push(("diagnostics.tsv".into(), diag.into_bytes()));

    let ours = &rendered[&cfg.span_mode];
    let eval_cfg = cfg.eval_config();
    for (scheme, path) in &inputs.external {
        let format = ExternalFormat::detect(path).ok_or_else(|| Error::Format {
            path: path.clone(),
            message: "unrecognized external layer format".into(),
        })?;
        let mut theirs = ingest_external(path, format)?;
        theirs.check_range(a.passage.terminals.len()).map_err(|e| located(path, e))?;
        if theirs.doc_id != a.passage.doc_id {
            log::debug!("{}: external doc id {} taken as {}", path.display(), theirs.doc_id, a.passage.doc_id);
            theirs.doc_id = a.passage.doc_id.clone();
        }
        out.eval.insert(scheme.clone(), score(ours, &theirs, &eval_cfg)?);

        let (fa, fb) = (FlatLayer::new(ours), FlatLayer::new(&theirs));
        let m = align_flat_mentions(&fa, &fb, cfg.mu, cfg.compat_dice);
        let r = align_flat_referents(&fa, &fb, &m, cfg.mu, cfg.compat_dice, eval_cfg.referent_score);
        let aligned = serde_json::to_string_pretty(&alignment_json(ours, &theirs, &m, &r))? + "\n";
        out.files.push((format!("align.{scheme}.json"), aligned.into_bytes()));
    }

    out.counts = Some(document_counts(&a.passage, &a.candidates, &a.layer));
    out.status = if a.has_errors() {
        DocStatus::Diagnostics
    } else {
        DocStatus::Ok
    };
    Ok(())
}

/// Runs every stage for every document and writes outputs, reports and a
/// manifest under the output directory. A failing document is recorded in
/// the manifest and leaves the others untouched.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let (inputs, unused) = collect_inputs(cfg)?;
    let mut results: Vec<DocResult> = inputs.par_iter().map(|i| process(i, cfg)).collect();

    let mut seen: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in results.iter().enumerate() {
        if let Some(id) = &r.doc_id {
            seen.entry(id.clone()).or_default().push(i);
        }
    }
    for (id, idx) in seen.iter().filter(|(_, v)| v.len() > 1) {
        let stems: Vec<String> = idx.iter().map(|&i| results[i].stem.clone()).collect();
        for &i in idx {
            let r = &mut results[i];
            r.status = DocStatus::Error;
            r.message = Some(format!("document id {id} shared by {}", stems.join(", ")));
            r.files.clear();
            r.eval.clear();
            r.counts = None;
        }
    }

    let roots: Vec<&Path> = std::iter::once(cfg.corpus_dir.as_path())
        .chain(cfg.external_dir.as_deref())
        .collect();
    let relative = |path: &Path| -> Result<FileDigest> {
        let root = roots.iter().find(|r| path.starts_with(r)).copied().unwrap_or(Path::new(""));
        file_digest(root, path)
    };

    let mut documents = Vec::new();
    let mut stats = StatsReport::default();
    let mut table: BTreeMap<String, EvalReport> = BTreeMap::new();
    for r in &results {
        let mut outputs = Vec::new();
        for (name, bytes) in &r.files {
            let path = cfg.out_dir.join(&r.stem).join(name);
            write_file(&path, bytes)?;
            outputs.push(FileDigest {
                path: format!("{}/{name}", r.stem),
                sha256: digest(bytes),
            });
        }
        if let (Some(id), Some(counts)) = (&r.doc_id, r.counts) {
            stats.total += counts;
            stats.documents.insert(id.clone(), counts);
        }
        for (scheme, report) in &r.eval {
            *table.entry(scheme.clone()).or_default() += *report;
        }
        documents.push(DocEntry {
            stem: r.stem.clone(),
            doc_id: r.doc_id.clone(),
            status: r.status,
            message: r.message.clone(),
            inputs: r.inputs.iter().map(|p| relative(p)).collect::<Result<_>>()?,
            outputs,
        });
    }

    let mut table4 = format!("{TABLE_HEADER}\n");
    for (scheme, report) in &table {
        write_table_rows(&mut table4, scheme, cfg.span_mode, report);
    }
    let mut reports = Vec::new();
    for (name, text) in [("table4.tsv", table4), ("stats.tsv", stats.to_tsv())] {
        write_file(&cfg.out_dir.join(name), text.as_bytes())?;
        reports.push(FileDigest {
            path: name.to_string(),
            sha256: digest(text.as_bytes()),
        });
    }

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        generated_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: ConfigSnapshot {
            mu: cfg.mu.to_string(),
            span_mode: cfg.span_mode,
            include_null: cfg.include_null,
            compat_dice: cfg.compat_dice,
            external: cfg.external_dir.is_some(),
        },
        documents,
        unused_inputs: unused.iter().map(|p| relative(p)).collect::<Result<_>>()?,
        reports,
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    write_file(&cfg.out_dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

/// Stats over a corpus directory without writing anything. Documents that
/// fail to load are skipped and returned with their error.
pub fn corpus_dir_stats(dir: &Path) -> Result<(StatsReport, Vec<(String, Error)>)> {
    let cfg = PipelineConfig {
        corpus_dir: dir.to_path_buf(),
        external_dir: None,
        out_dir: PathBuf::new(),
        mu: Score::from_integer(0),
        span_mode: SpanMode::Max,
        include_null: false,
        compat_dice: false,
    };
    cfg.validate()?;
    let (inputs, _) = collect_inputs(&cfg)?;
    let results: Vec<(String, Result<Analysis>)> = inputs
        .par_iter()
        .map(|i| {
            let r = match &i.xml {
                Some(xml) => analyze(xml, i.decisions.as_deref()),
                None => Err(Error::Format {
                    path: i.decisions.clone().unwrap_or_default(),
                    message: "decision file without a passage".into(),
                }),
            };
            (i.stem.clone(), r)
        })
        .collect();
    let mut uses: BTreeMap<String, usize> = BTreeMap::new();
    for (_, r) in &results {
        if let Ok(a) = r {
            *uses.entry(a.passage.doc_id.clone()).or_default() += 1;
        }
    }
    let mut report = StatsReport::default();
    let mut failed = Vec::new();
    for (stem, r) in results {
        match r {
            Ok(a) if uses[&a.passage.doc_id] == 1 => {
                let counts = document_counts(&a.passage, &a.candidates, &a.layer);
                report.total += counts;
                report.documents.insert(a.passage.doc_id.clone(), counts);
            }
            Ok(a) => failed.push((stem, Error::Schema(format!("document id {} is not unique", a.passage.doc_id)))),
            Err(e) => failed.push((stem, e)),
        }
    }
    Ok((report, failed))
}
