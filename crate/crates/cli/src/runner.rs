//! Grid execution with per-cell caching.
//!
//! Output layout:
//!
//! ```text
//! <output_dir>/manifest.json
//! <output_dir>/models/<cell>.json
//! <output_dir>/rows/<cell>.json
//! <output_dir>/report.csv, report.json, report_long.csv
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use tokenlens::corpus::{self, CorpusSplit};
use tokenlens::lzpipe::{packed_bpc, raw_lz_bpc, Width};
use tokenlens::tokenizer::{load_model, save_model};
use tokenlens::trainers::{train, TrainConfig};
use tokenlens::{CharStream, Compressor, Family, MetricsReport, TokenizerModel};

use crate::config::ExperimentConfig;
use crate::manifest::{CellRecord, CellStatus, RunManifest};
use crate::report::{emit_report, write_atomic, ReportFormat};

/// One grid point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub id: String,
    pub domain: String,
    pub test_domain: String,
    pub family: Family,
    pub vocab_size: usize,
    pub train_chars: usize,
    /// Cell whose model is reused; `None` when the cell trains its own.
    pub source: Option<String>,
}

fn cell_id(domain: &str, family: Family, vocab: usize, train: usize) -> String {
    format!("{domain}__{family}__{vocab}__{train}")
}

/// Matched cells in config order, then mismatch cells.
pub fn expand_grid(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for d in &cfg.domains {
        for &family in &cfg.families {
            for &vocab in &cfg.vocab_sizes {
                for &train in &cfg.train_sizes {
                    cells.push(Cell {
                        id: cell_id(&d.name, family, vocab, train),
                        domain: d.name.clone(),
                        test_domain: d.name.clone(),
                        family,
                        vocab_size: vocab,
                        train_chars: train,
                        source: None,
                    });
                }
            }
        }
    }
    for (a, b) in &cfg.mismatch_pairs {
        for &family in &cfg.families {
            for &vocab in &cfg.vocab_sizes {
                for &train in &cfg.train_sizes {
                    cells.push(Cell {
                        id: cell_id(&format!("{a}-on-{b}"), family, vocab, train),
                        domain: a.clone(),
                        test_domain: b.clone(),
                        family,
                        vocab_size: vocab,
                        train_chars: train,
                        source: Some(cell_id(a, family, vocab, train)),
                    });
                }
            }
        }
    }
    cells
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Recompute every cell even when cached.
    pub force: bool,
    /// Overrides the config's parallelism bound.
    pub jobs: Option<usize>,
}

struct DomainData {
    splits: BTreeMap<usize, CorpusSplit>,
    test_hash: String,
    raw_bpc: BTreeMap<String, f64>,
}

fn load_domain(cfg: &ExperimentConfig, name: &str, compressors: &[Compressor]) -> anyhow::Result<DomainData> {
    let spec = cfg.domain(name).ok_or_else(|| anyhow!("unknown domain {name}"))?;
    let (docs, skipped) = corpus::read_all(&spec.inputs)?;
    if skipped > 0 {
        log::warn!("{name}: skipped {skipped} lines of invalid UTF-8");
    }
    let max_train = *cfg.train_sizes.last().expect("validated nonempty");
    let mut stream = corpus::stream_characters(docs, max_train + cfg.test_chars, &cfg.separator);
    if cfg.nfkc {
        stream = stream.normalized();
    }
    let splits = corpus::split_train_test(&stream, &cfg.train_sizes, cfg.test_chars)
        .with_context(|| format!("domain {name}"))?;
    let test = &splits[0].test_tail;
    let mut raw_bpc = BTreeMap::new();
    if cfg.metrics.lz {
        for c in compressors {
            raw_bpc.insert(c.to_string(), raw_lz_bpc(test.text(), c)?);
        }
    }
    Ok(DomainData {
        test_hash: test.content_hash(),
        splits: cfg.train_sizes.iter().copied().zip(splits).collect(),
        raw_bpc,
    })
}

pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn model(&self, cell: &str) -> PathBuf {
        self.root.join("models").join(format!("{cell}.json"))
    }

    pub fn row(&self, cell: &str) -> PathBuf {
        self.root.join("rows").join(format!("{cell}.json"))
    }

    pub fn report(&self, format: ReportFormat) -> PathBuf {
        self.root.join(match format {
            ReportFormat::Csv => "report.csv",
            ReportFormat::Json => "report.json",
            ReportFormat::Long => "report_long.csv",
        })
    }
}

/// Scores `model` on a test tail and fills in the row's identity fields.
pub fn evaluate(
    model: &TokenizerModel,
    test: &CharStream,
    vocab_size: usize,
    cfg: &ExperimentConfig,
    compressors: &[Compressor],
) -> anyhow::Result<MetricsReport> {
    let stream = model.tokenizer().encode(test.text());
    let mut row = MetricsReport::from_stream(&stream, vocab_size, &cfg.metrics.analysis())?;
    row.model_vocab_size = model.vocab_size();
    row.family = model.family.to_string();
    if cfg.metrics.lz {
        let width = Width::for_vocab(model.vocab_size());
        row.meta.insert("width".into(), width.to_string());
        for c in compressors {
            row.bpc
                .insert(format!("token-{c}"), packed_bpc(&stream.ids, test.char_count(), c, width)?);
        }
    }
    Ok(row)
}

/// Runs every cell not already completed and writes the reports.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> anyhow::Result<RunManifest> {
    cfg.validate()?;
    let compressors = cfg.parsed_compressors()?;
    let hash = cfg.hash();
    let layout = Layout {
        root: cfg.output_dir.clone(),
    };
    std::fs::create_dir_all(&layout.root)
        .with_context(|| format!("creating output directory {}", layout.root.display()))?;

    let previous = RunManifest::load(&layout.manifest()).filter(|m| m.config_hash == hash && !opts.force);
    let cells = expand_grid(cfg);
    let mut manifest = RunManifest::new(hash.clone());
    let mut pending = Vec::new();
    for cell in &cells {
        let cached = previous.as_ref().is_some_and(|m| m.is_complete(&cell.id)) && layout.row(&cell.id).is_file();
        if cached {
            manifest.cells.insert(
                cell.id.clone(),
                CellRecord {
                    status: CellStatus::Skipped,
                    seconds: 0.0,
                    error: None,
                },
            );
        } else {
            pending.push(cell.clone());
        }
    }
    log::info!("{} cells, {} to run", cells.len(), pending.len());

    if !pending.is_empty() {
        let mut needed: Vec<&str> = pending.iter().map(|c| c.domain.as_str()).collect();
        needed.extend(pending.iter().map(|c| c.test_domain.as_str()));
        needed.sort_unstable();
        needed.dedup();
        let data: BTreeMap<String, Result<DomainData, String>> = needed
            .iter()
            .map(|&d| {
                let loaded = load_domain(cfg, d, &compressors).map_err(|e| format!("{e:#}"));
                (d.to_owned(), loaded)
            })
            .collect();

        let shared = Mutex::new(manifest);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs.unwrap_or(cfg.jobs).max(1))
            .build()
            .context("building worker pool")?;
        let run_phase = |phase: Vec<&Cell>| {
            pool.install(|| {
                phase.par_iter().for_each(|cell| {
                    let started = Instant::now();
                    let result = run_cell(cell, cfg, &hash, &compressors, &data, &layout, &opts);
                    let seconds = started.elapsed().as_secs_f64();
                    let record = match result {
                        Ok(()) => CellRecord {
                            status: CellStatus::Done,
                            seconds,
                            error: None,
                        },
                        Err(e) => {
                            log::error!("cell {} failed: {e:#}", cell.id);
                            CellRecord {
                                status: CellStatus::Failed,
                                seconds,
                                error: Some(format!("{e:#}")),
                            }
                        }
                    };
                    let mut m = shared.lock().expect("manifest lock");
                    m.cells.insert(cell.id.clone(), record);
                    if let Err(e) = m.save(&layout.manifest()) {
                        log::error!("saving manifest: {e:#}");
                    }
                });
            })
        };
        run_phase(pending.iter().filter(|c| c.source.is_none()).collect());
        run_phase(pending.iter().filter(|c| c.source.is_some()).collect());
        manifest = shared.into_inner().expect("manifest lock");
    }
    manifest.save(&layout.manifest())?;

    let rows = collect_rows(&layout, &cells, &manifest)?;
    if !rows.is_empty() {
        for format in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Long] {
            emit_report(&rows, format, &layout.report(format))?;
        }
    }
    Ok(manifest)
}

fn run_cell(
    cell: &Cell,
    cfg: &ExperimentConfig,
    hash: &str,
    compressors: &[Compressor],
    data: &BTreeMap<String, Result<DomainData, String>>,
    layout: &Layout,
    opts: &RunOptions,
) -> anyhow::Result<()> {
    let domain = |name: &str| -> anyhow::Result<&DomainData> {
        data[name].as_ref().map_err(|e| anyhow!("loading domain {name}: {e}"))
    };
    let model_cell = cell.source.as_deref().unwrap_or(&cell.id);
    let model_path = layout.model(model_cell);
    let model = match &cell.source {
        Some(src) => load_model(&model_path).with_context(|| format!("model of source cell {src}"))?,
        None => {
            let cached = if opts.force { None } else { load_model(&model_path).ok() };
            match cached {
                Some(m) => m,
                None => {
                    let split = &domain(&cell.domain)?.splits[&cell.train_chars];
                    let mut tc = TrainConfig::new(cell.family, cell.vocab_size);
                    tc.seed = cfg.seed;
                    tc.nfkc = cfg.nfkc;
                    let m = train(split.train_prefix.text(), &tc)
                        .with_context(|| format!("training {}", cell.id))?;
                    if let Some(dir) = model_path.parent() {
                        std::fs::create_dir_all(dir)?;
                    }
                    let tmp = model_path.with_extension("tmp");
                    save_model(&m, &tmp)?;
                    std::fs::rename(&tmp, &model_path)?;
                    m
                }
            }
        }
    };

    let test_data = domain(&cell.test_domain)?;
    let test = &test_data.splits[&cell.train_chars].test_tail;
    let mut row = evaluate(&model, test, cell.vocab_size, cfg, compressors)?;
    row.domain = cell.domain.clone();
    row.test_domain = cell.test_domain.clone();
    row.train_chars = cell.train_chars;
    for (name, bpc) in &test_data.raw_bpc {
        row.bpc.insert(format!("raw-{name}"), *bpc);
    }
    row.meta.insert("cell".into(), cell.id.clone());
    row.meta.insert("model_cell".into(), model_cell.to_owned());
    row.meta.insert("config_hash".into(), hash.to_owned());
    row.meta.insert("seed".into(), cfg.seed.to_string());
    row.meta.insert("test_hash".into(), test_data.test_hash.clone());
    row.meta.insert(
        "compressors".into(),
        compressors.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" "),
    );
    let mut json = serde_json::to_vec_pretty(&row)?;
    json.push(b'\n');
    write_atomic(&layout.row(&cell.id), &json)
}

fn collect_rows(layout: &Layout, cells: &[Cell], manifest: &RunManifest) -> anyhow::Result<Vec<MetricsReport>> {
    let mut rows = Vec::new();
    for cell in cells {
        if !manifest.is_complete(&cell.id) {
            continue;
        }
        let path = layout.row(&cell.id);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        rows.push(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?);
    }
    Ok(rows)
}

/// Rows of a finished run directory, in the order they were written to
/// its manifest.
pub fn load_rows(dir: &Path) -> anyhow::Result<Vec<MetricsReport>> {
    let layout = Layout { root: dir.to_owned() };
    let manifest = RunManifest::load(&layout.manifest())
        .ok_or_else(|| anyhow!("no readable manifest in {}", dir.display()))?;
    let mut rows = Vec::new();
    for (id, rec) in &manifest.cells {
        if rec.status == CellStatus::Failed {
            continue;
        }
        let text = std::fs::read_to_string(layout.row(id))?;
        rows.push(serde_json::from_str(&text)?);
    }
    Ok(rows)
}
