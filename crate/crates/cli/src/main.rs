use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use tokenlens::corpus::{self, Document};
use tokenlens::infometrics::{document_correlation, AnalysisOptions, ContextBoundary};
use tokenlens::lzbpe::{train_lz_aware_bpe, validation_curve, LzBpeConfig};
use tokenlens::lzpipe::{pack_token_ids, pipeline_report, Width};
use tokenlens::tokenizer::{load_model, load_rank_list_model, save_model};
use tokenlens::trainers::{train, train_bpe, TrainConfig};
use tokenlens::{CharStream, Compressor, Estimator, Family, TokenId, TokenizerModel};
use tokenlens_cli::report::write_report;
use tokenlens_cli::runner::load_rows;
use tokenlens_cli::{run_experiment, ConfigError, ExperimentConfig, ReportFormat, RunOptions};

#[derive(Parser)]
#[command(name = "tokenlens", version, about = "Tokenizers as compressors: training, metrics and LZ pipelines")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus files (.jsonl with a `text` field, or plain text; .gz/.xz/.zst ok).
    #[arg(short, long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Use at most this many characters of the concatenated documents.
    #[arg(long)]
    max_chars: Option<usize>,
    /// Skip NFKC normalization of the corpus.
    #[arg(long)]
    no_nfkc: bool,
}

impl CorpusArgs {
    fn load(&self) -> anyhow::Result<CharStream> {
        let (docs, skipped) = corpus::read_all(&self.inputs)?;
        if skipped > 0 {
            log::warn!("skipped {skipped} lines of invalid UTF-8");
        }
        let stream = corpus::stream_characters(docs, self.max_chars.unwrap_or(usize::MAX), "\n");
        if stream.is_empty() {
            bail!("corpus is empty");
        }
        Ok(if self.no_nfkc { stream } else { stream.normalized() })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a tokenizer and write its model file.
    Train {
        #[arg(long)]
        family: Family,
        #[arg(long, default_value_t = 16_000)]
        vocab_size: usize,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        min_frequency: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Encode a text file to token ids.
    Encode {
        #[arg(long)]
        model: PathBuf,
        /// Text file, or `-` for stdin.
        #[arg(short, long, default_value = "-")]
        input: PathBuf,
        /// `text` (space-separated ids), `json`, `packed16` or `packed32`.
        #[arg(long, default_value = "text")]
        format: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Decode token ids (whitespace-separated or a JSON array) to text.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long, default_value = "-")]
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Measure a model on a corpus: CR, k-gram entropies, utilization.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Nominal K for utilization; defaults to the trained target size.
        #[arg(long)]
        vocab_size: Option<usize>,
        #[arg(long, default_value = "plugin")]
        estimator: Estimator,
        #[arg(long, default_value = "padded")]
        boundary: ContextBoundary,
        #[arg(long, default_value_t = 5)]
        max_k: usize,
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
    },
    /// Raw-LZ versus token-LZ bits per character.
    Lzpipe {
        /// Model files, optionally named as `name=path`.
        #[arg(long = "model", num_args = 0..)]
        models: Vec<String>,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_delimiter = ',', default_value = "gzip,lzma,zstd")]
        compressors: Vec<Compressor>,
        /// Write the table as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Train LZ-aware BPE and compare it with standard BPE on validation.
    LzbpeTrain {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
        /// Final non-special vocabulary size (256 bytes plus merges).
        #[arg(long, default_value_t = 1024)]
        target_vocab: usize,
        #[arg(long, default_value_t = 50)]
        candidates: usize,
        #[arg(long, default_value = "gzip")]
        compressor: Compressor,
        #[arg(short, long)]
        output: PathBuf,
        /// JSONL trace, one record per merge.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// CSV of validation size per vocabulary size for both trainers.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Correlate per-document intrinsic compressibility with tokens/char
    /// for pretrained rank lists.
    BenchRanklist {
        /// Rank-list files as `name=path` (base64 token, rank per line).
        #[arg(long = "ranklist", required = true, num_args = 1..)]
        ranklists: Vec<String>,
        /// Domains as `name=path`; more than one path per name is allowed.
        #[arg(long = "domain", required = true, num_args = 1..)]
        domains: Vec<String>,
        /// First N documents of each domain.
        #[arg(long, default_value_t = 10_000)]
        docs: usize,
        /// Character budget per domain.
        #[arg(long, default_value_t = 1_000_000)]
        max_chars: usize,
        #[arg(long, default_value = "gzip")]
        compressor: Compressor,
    },
    /// Run an experiment grid from a TOML or JSON config.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        /// Ignore cached cells.
        #[arg(long)]
        force: bool,
    },
    /// Re-emit the rows of a finished run.
    Report {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn read_input(path: &Path) -> anyhow::Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn split_named(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) => (name.to_owned(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(spec);
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_owned());
            (name, path)
        }
    }
}

fn nominal_vocab(model: &TokenizerModel) -> usize {
    model
        .metadata
        .get("target_vocab_size")
        .and_then(|v| v.parse().ok())
        .unwrap_or(model.vocab_size())
}

fn execute(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Train {
            family,
            vocab_size,
            corpus,
            seed,
            min_frequency,
            output,
        } => {
            let text = corpus.load()?;
            let mut cfg = TrainConfig::new(family, vocab_size);
            cfg.seed = seed;
            cfg.min_frequency = min_frequency;
            cfg.nfkc = !corpus.no_nfkc;
            let model = train(text.text(), &cfg)?;
            save_model(&model, &output)?;
            eprintln!("{} model with {} tokens written to {}", family, model.vocab_size(), output.display());
        }
        Command::Encode {
            model,
            input,
            format,
            output,
        } => {
            let model = load_model(&model)?;
            let text = read_input(&input)?;
            let ids = model.tokenizer().encode(&text).ids;
            let bytes = match format.as_str() {
                "text" => {
                    let mut s = ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
                    s.push('\n');
                    s.into_bytes()
                }
                "json" => {
                    let mut v = serde_json::to_vec(&ids)?;
                    v.push(b'\n');
                    v
                }
                "packed16" => pack_token_ids(&ids, Width::W16)?.bytes,
                "packed32" => pack_token_ids(&ids, Width::W32)?.bytes,
                other => bail!("unknown encode format `{other}`"),
            };
            write_output(output.as_deref(), &bytes)?;
        }
        Command::Decode { model, input, output } => {
            let model = load_model(&model)?;
            let raw = read_input(&input)?;
            let ids: Vec<TokenId> = if raw.trim_start().starts_with('[') {
                serde_json::from_str(&raw)?
            } else {
                raw.split_whitespace()
                    .map(|t| t.parse().with_context(|| format!("bad token id `{t}`")))
                    .collect::<anyhow::Result<_>>()?
            };
            let text = model.tokenizer().decode(&ids)?;
            write_output(output.as_deref(), text.as_bytes())?;
        }
        Command::Analyze {
            model,
            corpus,
            vocab_size,
            estimator,
            boundary,
            max_k,
            alpha,
            format,
        } => {
            let model_path = model;
            let model = load_model(&model_path)?;
            let text = corpus.load()?;
            let opts = AnalysisOptions {
                max_k,
                estimator,
                boundary,
                alpha,
            };
            let stream = model.tokenizer().encode(text.text());
            let k = vocab_size.unwrap_or_else(|| nominal_vocab(&model));
            let mut row = tokenlens::MetricsReport::from_stream(&stream, k, &opts)?;
            row.family = model.family.to_string();
            row.model_vocab_size = model.vocab_size();
            row.meta.insert("model".into(), model_path.display().to_string());
            row.meta.insert("test_hash".into(), text.content_hash());
            write_report(&[row], format, io::stdout().lock())?;
        }
        Command::Lzpipe {
            models,
            corpus,
            compressors,
            json,
        } => {
            let text = corpus.load()?;
            let loaded: Vec<(String, TokenizerModel)> = models
                .iter()
                .map(|spec| {
                    let (name, path) = split_named(spec);
                    Ok((name, load_model(&path)?))
                })
                .collect::<anyhow::Result<_>>()?;
            let named: Vec<(String, &TokenizerModel)> = loaded.iter().map(|(n, m)| (n.clone(), m)).collect();
            let report = pipeline_report(&named, text.text(), &compressors)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{report}");
            }
        }
        Command::LzbpeTrain {
            corpus,
            val_fraction,
            target_vocab,
            candidates,
            compressor,
            output,
            trace,
            curve,
        } => {
            if !(0.0..1.0).contains(&val_fraction) || val_fraction == 0.0 {
                bail!(ConfigError(format!("val-fraction must be in (0, 1), got {val_fraction}")));
            }
            let text = corpus.load()?;
            let n = text.char_count();
            let cut = n - ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
            let train_part = text.slice_chars(0, cut);
            let val_part = text.slice_chars(cut, n);
            let cfg = LzBpeConfig {
                target_vocab,
                candidates,
                compressor,
                nfkc: !corpus.no_nfkc,
                ..LzBpeConfig::default()
            };
            let (model, tr) = train_lz_aware_bpe(train_part.text(), val_part.text(), &cfg)?;
            save_model(&model, &output)?;
            if let Some(path) = trace {
                let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                tr.write_jsonl(io::BufWriter::new(f))?;
            }
            let lz_curve = tr.curve();
            let baseline = train_bpe(train_part.text(), &cfg.bpe_config())?;
            let checkpoints: Vec<usize> = lz_curve.iter().map(|p| p.0).collect();
            let std_curve = validation_curve(&baseline, val_part.text(), &cfg, &checkpoints)?;
            if let Some(path) = curve {
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["vocab", "lz_aware_bytes", "bpe_bytes"])?;
                for ((v, lz), (_, b)) in lz_curve.iter().zip(&std_curve) {
                    w.write_record([v.to_string(), lz.to_string(), b.to_string()])?;
                }
                w.flush()?;
            }
            let base = tr.baseline_val_bytes as f64;
            let last = lz_curve.len().min(std_curve.len()) - 1;
            eprintln!(
                "vocab {}: lz-aware {:.2}% below the byte baseline, standard bpe {:.2}%",
                lz_curve[last].0,
                100.0 * (1.0 - lz_curve[last].1 as f64 / base),
                100.0 * (1.0 - std_curve[last].1 as f64 / base),
            );
            if let Some(reason) = &tr.early_stop {
                eprintln!("stopped early: {reason}");
            }
        }
        Command::BenchRanklist {
            ranklists,
            domains,
            docs,
            max_chars,
            compressor,
        } => {
            let mut by_domain: Vec<(String, Vec<PathBuf>)> = Vec::new();
            for spec in &domains {
                let (name, path) = split_named(spec);
                match by_domain.iter_mut().find(|(n, _)| *n == name) {
                    Some((_, paths)) => paths.push(path),
                    None => by_domain.push((name, vec![path])),
                }
            }
            let mut samples: Vec<(String, Vec<Document>)> = Vec::new();
            for (name, paths) in by_domain {
                let (all, _) = corpus::read_all(&paths)?;
                let mut taken = Vec::new();
                let mut chars = 0;
                for d in all.into_iter().take(docs) {
                    if chars >= max_chars {
                        break;
                    }
                    chars += d.text.chars().count();
                    taken.push(d);
                }
                samples.push((name, taken));
            }
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            w.write_record(["ranklist", "domain", "documents", "r"])?;
            for spec in &ranklists {
                let (name, path) = split_named(spec);
                let model = load_rank_list_model(&path)?;
                for (domain, sample) in &samples {
                    let c = document_correlation(&model, sample, &compressor)?;
                    w.write_record([name.clone(), domain.clone(), c.documents.to_string(), format!("{:.4}", c.r)])?;
                }
            }
            w.flush()?;
        }
        Command::Run { config, jobs, force } => {
            let cfg = ExperimentConfig::load(&config)?;
            let manifest = run_experiment(&cfg, RunOptions { force, jobs })?;
            let failed = manifest.failures();
            eprintln!(
                "{} cells: {} done, {} skipped, {} failed; reports in {}",
                manifest.cells.len(),
                manifest.count(tokenlens_cli::CellStatus::Done),
                manifest.count(tokenlens_cli::CellStatus::Skipped),
                failed,
                cfg.output_dir.display()
            );
            if failed > 0 {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Report { dir, format, output } => {
            let rows = load_rows(&dir)?;
            if rows.is_empty() {
                return Err(anyhow!("no completed rows in {}", dir.display()));
            }
            let mut buf = Vec::new();
            write_report(&rows, format, &mut buf)?;
            write_output(output.as_deref(), &buf)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
