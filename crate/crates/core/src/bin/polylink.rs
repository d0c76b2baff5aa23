use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use polylink::alias::AliasTable;
use polylink::codec::{tokenize, RenderMode, TokenId, SEPARATOR};
use polylink::corpus::{self, DEFAULT_MAX_INPUT_TOKENS};
use polylink::decoder::{BeamConfig, DEFAULT_BEAMS, DEFAULT_LENGTH_PENALTY, DEFAULT_MAX_STEPS};
use polylink::eval::{self, BucketKey, BucketSpec};
use polylink::kb::{self, EntityId, KnowledgeBase};
use polylink::ranker::{self, LinkConfig, SupportingIdentifier, DEFAULT_ALPHA};
use polylink::scorer::{self, ReferenceScorer, DEFAULT_ADD_K, DEFAULT_LAMBDA_COPY};
use polylink::trie::Trie;
use polylink::{Error, Result};

#[derive(Parser)]
#[command(name = "polylink", version, about = "Multilingual entity linking by trie-constrained decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a JSON-lines KB dump into a binary KB artifact.
    BuildKb {
        #[arg(long = "in")]
        input: PathBuf,
        /// Excluded class ids, one per line. Defaults to the built-in
        /// organizational-item list.
        #[arg(long, conflicts_with = "no_filter")]
        filter: Option<PathBuf>,
        /// Keep every entity regardless of class.
        #[arg(long)]
        no_filter: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the identifier trie for a KB.
    BuildTrie {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, default_value = "name-first")]
        mode: RenderMode,
        /// Also insert redirect titles.
        #[arg(long)]
        redirects: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the mention alias table from training mentions plus KB titles.
    BuildAlias {
        #[arg(long)]
        mentions: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        /// Extra aliases as TSV `qid, label`.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align raw hyperlinks to KB entities, writing a mentions TSV.
    Align {
        #[arg(long)]
        links: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        /// Redirect table as TSV `lang, from_title, to_title`.
        #[arg(long = "redirect-map")]
        redirect_map: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn gold-annotated mentions into scorer training pairs.
    MakePairs {
        #[arg(long)]
        mentions: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, default_value = "name-first")]
        mode: RenderMode,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long = "max-input", default_value_t = DEFAULT_MAX_INPUT_TOKENS)]
        max_input: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the reference scorer on training pairs.
    TrainScorer {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long = "lambda-copy", default_value_t = DEFAULT_LAMBDA_COPY)]
        lambda_copy: f64,
        #[arg(long = "add-k", default_value_t = DEFAULT_ADD_K)]
        add_k: f64,
        /// Extend the vocabulary with every character of the KB's identifiers.
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Link every mention of a TSV file.
    Link {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        trie: PathBuf,
        #[arg(long)]
        scorer: PathBuf,
        /// Rendering the trie was built with.
        #[arg(long, default_value = "name-first")]
        mode: RenderMode,
        /// Restrict decoding to alias-table candidates.
        #[arg(long)]
        alias: Option<PathBuf>,
        #[arg(long = "top-k", requires = "alias")]
        top_k: Option<usize>,
        #[arg(long)]
        marginalize: bool,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_BEAMS)]
        beams: usize,
        #[arg(long, default_value_t = DEFAULT_LENGTH_PENALTY)]
        lenpen: f64,
        #[arg(long = "max-steps", default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
        #[arg(long = "max-input", default_value_t = DEFAULT_MAX_INPUT_TOKENS)]
        max_input: usize,
        /// Worker threads; 0 uses every core. Output order never depends on it.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against gold mentions.
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        buckets: Option<BucketKind>,
        /// Training mentions, for frequency buckets.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Alias table, for candidate-count buckets.
        #[arg(long)]
        alias: Option<PathBuf>,
        #[arg(long = "top-k")]
        top_k: Option<usize>,
        /// Emit JSON instead of a text table.
        #[arg(long)]
        json: bool,
    },
    /// Print trie size statistics.
    Stats {
        #[arg(long)]
        trie: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BucketKind {
    Entity,
    Mention,
    Candidates,
}

/// One line of the predictions file.
#[derive(Serialize, Deserialize)]
struct PredictionRecord {
    index: usize,
    lang: String,
    mention: String,
    qid: EntityId,
    score: f64,
    mode: String,
    candidates: bool,
    marginalize: bool,
    candidate_count: usize,
    restricted: bool,
    supporting: Vec<SupportingIdentifier>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(mut w: impl Write, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildKb { input, filter, no_filter, out } => {
            let source = kb::read_kb_jsonl(&input)?;
            let excluded = match (&filter, no_filter) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    kb::parse_class_filter(&text)?
                }
                (None, true) => BTreeSet::new(),
                (None, false) => kb::default_class_filter(),
            };
            let read = source.records.len();
            let kb = kb::ingest_kb(source.records, &excluded, &source.class_memberships)?;
            info!("kept {} of {} entities", kb.len(), read);
            kb.save(&out)
        }
        Command::BuildTrie { kb, mode, redirects, out } => {
            let kb = KnowledgeBase::load(&kb)?;
            let trie = Trie::from_kb(&kb, mode, redirects)?;
            info!("{} identifiers, {} nodes", trie.name_count(), trie.node_count());
            trie.save(&out)
        }
        Command::BuildAlias { mentions, kb, labels, out } => {
            let kb = KnowledgeBase::load(&kb)?;
            let train = corpus::load_mentions(&mentions)?;
            let training: Vec<(&str, &EntityId)> = train
                .iter()
                .filter_map(|m| m.gold.as_ref().map(|g| (m.mention.as_str(), g)))
                .collect();
            let extra = match &labels {
                Some(path) => read_labels(path)?,
                None => Vec::new(),
            };
            let table = AliasTable::build(
                training,
                &kb,
                extra.iter().map(|(id, label)| (label.as_str(), id)),
            )?;
            info!("{} distinct mentions", table.len());
            table.save(&out)
        }
        Command::Align { links, kb, redirect_map, out } => {
            let kb = KnowledgeBase::load(&kb)?;
            let links = corpus::load_hyperlinks(&links)?;
            let redirects = match &redirect_map {
                Some(path) => corpus::load_redirects(path)?,
                None => Default::default(),
            };
            let (aligned, stats) = corpus::align_hyperlinks(links, &kb, &redirects);
            info!(
                "aligned {} (direct {}, redirect {}, label {}), ambiguous {}, unmatched {}",
                stats.aligned(),
                stats.direct,
                stats.redirect,
                stats.label_search,
                stats.ambiguous,
                stats.unmatched
            );
            let mut w = create(&out)?;
            corpus::write_mentions(&mut w, &aligned)?;
            finish(w, &out)
        }
        Command::MakePairs { mentions, kb, mode, seed, max_input, out } => {
            let kb = KnowledgeBase::load(&kb)?;
            let insts = corpus::load_mentions(&mentions)?;
            let pairs = corpus::training_pairs(&insts, &kb, mode, seed, max_input)?;
            info!("{} pairs from {} mentions", pairs.len(), insts.len());
            scorer::save_pairs(&out, &pairs)
        }
        Command::TrainScorer { pairs, lambda_copy, add_k, kb, out } => {
            let pairs = scorer::load_pairs(&pairs)?;
            let mut model = ReferenceScorer::train(&pairs, lambda_copy, add_k)?;
            if let Some(path) = &kb {
                model.extend_vocab(identifier_tokens(&KnowledgeBase::load(path)?));
            }
            model.save(&out)
        }
        Command::Link {
            kb,
            trie,
            scorer,
            mode,
            alias,
            top_k,
            marginalize,
            alpha,
            beams,
            lenpen,
            max_steps,
            max_input,
            threads,
            input,
            out,
        } => {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return Err(usage(format!("--alpha must be finite and >= 0, got {alpha}")));
            }
            let cfg = LinkConfig {
                mode,
                use_candidates: alias.is_some(),
                use_marginalization: marginalize,
                alpha,
                beam: BeamConfig { beams, length_penalty: lenpen, max_steps },
                top_k,
                max_input_tokens: max_input,
            };
            cfg.beam.validate()?;
            let kb = KnowledgeBase::load(&kb)?;
            let trie = Trie::load(&trie)?;
            let model = ReferenceScorer::load(&scorer)?;
            let table = alias.as_deref().map(AliasTable::load).transpose()?;
            let insts = corpus::load_mentions(&input)?;

            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| usage(format!("--threads: {e}")))?;
            let outcomes: Vec<Result<PredictionRecord>> = pool.install(|| {
                insts
                    .par_iter()
                    .enumerate()
                    .map(|(i, inst)| {
                        let o = ranker::link(inst, &kb, &trie, table.as_ref(), &model, &cfg)?;
                        let top = &o.ranking[0];
                        Ok(PredictionRecord {
                            index: i,
                            lang: inst.lang.to_string(),
                            mention: inst.mention.clone(),
                            qid: o.prediction,
                            score: top.score,
                            mode: mode.as_str().into(),
                            candidates: cfg.use_candidates,
                            marginalize,
                            candidate_count: o.candidate_count,
                            restricted: o.restricted,
                            supporting: top.supporting.clone(),
                        })
                    })
                    .collect()
            });

            let sink: Box<dyn Write> = match &out {
                Some(path) => Box::new(create(path)?),
                None => Box::new(BufWriter::new(std::io::stdout().lock())),
            };
            let where_to = out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
            let mut w = sink;
            for (i, rec) in outcomes.into_iter().enumerate() {
                let rec = rec.map_err(|e| Error::MalformedLine {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                serde_json::to_writer(&mut w, &rec)?;
                w.write_all(b"\n").map_err(|e| Error::io(&where_to, e))?;
            }
            finish(w, &where_to)
        }
        Command::Eval { preds, gold, buckets, train, alias, top_k, json } => {
            let insts = corpus::load_mentions(&gold)?;
            let predicted = read_predictions(&preds)?;
            if predicted.len() != insts.len() {
                return Err(Error::MalformedLine {
                    line: predicted.len().min(insts.len()) + 1,
                    reason: format!(
                        "{} predictions for {} gold mentions",
                        predicted.len(),
                        insts.len()
                    ),
                });
            }
            let pairs = || insts.iter().zip(&predicted);
            let report = eval::accuracy(pairs())?;
            let bucketed = match buckets {
                None => None,
                Some(kind) => {
                    let (entity_freq, mention_freq, table);
                    let (key, spec) = match kind {
                        BucketKind::Entity | BucketKind::Mention => {
                            let path = train.as_deref().ok_or_else(|| {
                                usage("--buckets entity|mention needs --train <mentions.tsv>")
                            })?;
                            let train = corpus::load_mentions(path)?;
                            (entity_freq, mention_freq) = eval::training_frequencies(&train);
                            if matches!(kind, BucketKind::Entity) {
                                (BucketKey::EntityFrequency(&entity_freq), BucketSpec::entity_frequency())
                            } else {
                                (BucketKey::MentionFrequency(&mention_freq), BucketSpec::mention_frequency())
                            }
                        }
                        BucketKind::Candidates => {
                            let path = alias.as_deref().ok_or_else(|| {
                                usage("--buckets candidates needs --alias <alias.jsonl>")
                            })?;
                            table = AliasTable::load(path)?;
                            (
                                BucketKey::CandidateCount { table: &table, top_k },
                                BucketSpec::candidate_count(),
                            )
                        }
                    };
                    Some(eval::bucket_report(pairs(), &key, &spec)?)
                }
            };
            let mut stdout = std::io::stdout().lock();
            let text = if json {
                serde_json::to_string_pretty(&serde_json::json!({
                    "accuracy": report,
                    "buckets": bucketed,
                }))?
            } else {
                let mut t = report.to_text_table();
                if let Some(b) = &bucketed {
                    t.push('\n');
                    t.push_str(&b.to_text_table());
                }
                t
            };
            writeln!(stdout, "{}", text.trim_end()).map_err(|e| Error::io("<stdout>", e))
        }
        Command::Stats { trie } => {
            let stats = Trie::load(&trie)?.stats();
            println!("node_count {}", stats.node_count);
            println!("name_count {}", stats.name_count);
            println!("bytes {}", stats.bytes);
            Ok(())
        }
    }
}

fn read_labels(path: &Path) -> Result<Vec<(EntityId, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (id, label) = line.split_once('\t').ok_or_else(|| Error::MalformedLine {
            line: i + 1,
            reason: "expected `qid<TAB>label`".into(),
        })?;
        out.push((EntityId::new(id)?, label.to_owned()));
    }
    Ok(out)
}

fn read_predictions(path: &Path) -> Result<Vec<EntityId>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        #[derive(Deserialize)]
        struct Qid {
            qid: EntityId,
        }
        let rec: Qid = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec.qid);
    }
    Ok(out)
}

/// Every character that can appear in a rendered identifier of the KB.
fn identifier_tokens(kb: &KnowledgeBase) -> BTreeSet<TokenId> {
    let mut tokens: BTreeSet<TokenId> = tokenize(SEPARATOR).into_iter().collect();
    for record in kb.entities() {
        for (lang, name, _) in record.identifier_entries() {
            tokens.extend(tokenize(name));
            tokens.extend(tokenize(lang.as_str()));
        }
    }
    tokens
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
