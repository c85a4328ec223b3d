//! Command-line front end for the pipeline:
//! build-graph -> embed -> train -> augment -> retrain -> attack -> evaluate.
//!
//! Every subcommand reads an optional `key = value` config file first and
//! then lets flags override individual values. All outputs are
//! deterministic for a fixed config and seed. Exit codes: 1 usage, 2 I/O,
//! 3 validation/protocol, 4 internal.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use hanguard::attack::{self, Algorithm, Segmenter};
use hanguard::augment;
use hanguard::chargraph::{self, AdvGraph};
use hanguard::classifier::{server, LocalClassifier, RemoteClassifier};
use hanguard::config::{Preset, Settings};
use hanguard::dataset;
use hanguard::fusion::{FusionModel, Mode, ReprLayer, Vocab};
use hanguard::metrics;
use hanguard::{Error, Result};

#[derive(Parser)]
#[command(name = "hanguard", version, about = "Chinese adversarial-robustness toolkit")]
struct Cli {
    /// Configuration file (`key = value` lines) applied before flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Parallel attack sessions; 1 keeps classifier call order sequential.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the character similarity graph from a character table.
    BuildGraph {
        /// Character table TSV: codepoint, pinyins, stroke code[, rank].
        #[arg(long)]
        chars: Option<PathBuf>,
        /// Optional visual feature vectors (codepoint TAB v1,v2,...).
        #[arg(long)]
        visual: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        glyph_threshold: Option<f64>,
        #[arg(long)]
        lcs_weight: Option<f64>,
        #[arg(long)]
        fuzzy_initials: Option<bool>,
        #[arg(long)]
        freq_cutoff: Option<u32>,
        #[arg(long)]
        candidate_cap: Option<usize>,
    },

    /// Learn node embeddings for every graph character.
    Embed {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        walk_length: Option<usize>,
        #[arg(long)]
        walks_per_node: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        negatives: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },

    /// Train a classifier on a labeled JSONL dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// baseline, graph_concat or full_fusion.
        #[arg(long)]
        mode: Option<String>,
        /// Node embedding file; required for the non-baseline modes.
        #[arg(long)]
        embedding: Option<PathBuf>,
        /// Build the character vocabulary from this dataset instead of
        /// --data (e.g. the clean set when training on augmented text, so
        /// substituted characters stay out-of-vocabulary like a fixed
        /// pretrained tokenizer would keep them).
        #[arg(long)]
        vocab_from: Option<PathBuf>,
        #[arg(long)]
        d1: Option<usize>,
        #[arg(long)]
        d2: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        lm_layers: Option<usize>,
        #[arg(long)]
        lm_heads: Option<usize>,
        #[arg(long)]
        t1_layers: Option<usize>,
        #[arg(long)]
        t2_layers: Option<usize>,
        #[arg(long)]
        n_classes: Option<usize>,
        #[arg(long)]
        dropout: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },

    /// Attack a model over a dataset and write the traces.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Word dictionary for segmentation; single characters otherwise.
        #[arg(long)]
        dict: Option<PathBuf>,
        /// pwws, textbugger or random.
        #[arg(long)]
        algo: Option<String>,
        /// Attack this many sampled texts instead of the whole set.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Modification-rate budget; `none` for unlimited.
        #[arg(long)]
        max_mr: Option<String>,
        #[arg(long)]
        candidate_cap: Option<usize>,
        /// Trace output, one JSON outcome per line.
        #[arg(long)]
        out: PathBuf,
        /// Robustness report; defaults to `<out>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Score through a running serve-toy endpoint instead of in-process.
        #[arg(long)]
        remote: Option<String>,
    },

    /// Build an augmented training set from attack chains.
    Augment {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long)]
        algo: Option<String>,
        /// chnsenticorp, dmsc, thucnews or ocnli; pins epsilon-max.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        epsilon_max: Option<f64>,
        #[arg(long)]
        stop_ratio: Option<f64>,
        #[arg(long)]
        shuffle_seed: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Attack every source and keep only final adversarial texts.
        #[arg(long)]
        conventional: bool,
        #[arg(long)]
        out: PathBuf,
        /// Sidecar report; defaults to `<out>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },

    /// Benign accuracy, plus robustness metrics when traces are supplied.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        traces: Option<PathBuf>,
        #[arg(long)]
        lasr_cap: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },

    /// Attack-success-rate curve across modification-rate caps.
    Curve {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated ascending caps in (0,1].
        #[arg(long)]
        caps: Option<String>,
        /// Prefix-evaluate stored traces instead of attacking.
        #[arg(long)]
        traces: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },

    /// Export per-text representation rows (h1, h3 or h4).
    ExportRepr {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        layer: String,
        #[arg(long)]
        out: PathBuf,
    },

    /// Expose a model over the HTTP wire protocol until killed.
    ServeToy {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8787")]
        bind: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap wants exit code 2 for usage errors; the contract here is 1
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io { .. } => 2,
                Error::Parse { .. } | Error::Invalid(_) | Error::Transport(_) | Error::Protocol(_) => 3,
                Error::Internal(_) => 4,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = Settings::default();
    if let Some(path) = &cli.config {
        settings.apply_file(path)?;
    }
    if cli.jobs == 0 {
        return Err(Error::invalid("--jobs must be at least 1"));
    }
    let jobs = cli.jobs;

    match cli.cmd {
        Cmd::BuildGraph {
            chars,
            visual,
            out,
            glyph_threshold,
            lcs_weight,
            fuzzy_initials,
            freq_cutoff,
            candidate_cap,
        } => {
            if let Some(v) = glyph_threshold {
                settings.graph.glyph_threshold = v;
            }
            if let Some(v) = lcs_weight {
                settings.graph.weights.lcs_weight = v;
            }
            if let Some(v) = fuzzy_initials {
                settings.graph.fuzzy_initials = v;
            }
            if let Some(v) = freq_cutoff {
                settings.graph.freq_cutoff = Some(v);
            }
            if let Some(v) = candidate_cap {
                settings.graph.candidate_cap = v;
            }
            let chars = chars
                .or(settings.graph_chars.clone())
                .ok_or_else(|| Error::invalid("no character table: pass --chars or set graph.chars"))?;
            let mut records = chargraph::load_character_table(&chars)?;
            if let Some(vpath) = visual.or(settings.graph_visual.clone()) {
                let feats = chargraph::load_visual_features(&vpath)?;
                let attached = chargraph::attach_visual_features(&mut records, &feats);
                println!("visual features attached to {attached} characters");
            }
            let graph = chargraph::build_graph_with(&records, &settings.graph)?;
            graph.save(&out)?;
            let (phonetic, glyph, both) = graph.kind_counts();
            println!("nodes: {}", graph.nodes().count());
            println!("edges: {} (phonetic {phonetic}, glyph {glyph}, both {both})", graph.edge_count());
            Ok(())
        }

        Cmd::Embed {
            graph,
            out,
            dim,
            p,
            q,
            walk_length,
            walks_per_node,
            window,
            negatives,
            epochs,
            learning_rate,
            seed,
        } => {
            if let Some(v) = dim {
                settings.embed_dim = v;
            }
            set_opt(&mut settings.embed.p, p);
            set_opt(&mut settings.embed.q, q);
            set_opt(&mut settings.embed.walk_length, walk_length);
            set_opt(&mut settings.embed.walks_per_node, walks_per_node);
            set_opt(&mut settings.embed.window, window);
            set_opt(&mut settings.embed.negatives, negatives);
            set_opt(&mut settings.embed.epochs, epochs);
            set_opt(&mut settings.embed.learning_rate, learning_rate);
            set_opt(&mut settings.embed.seed, seed);
            let graph = AdvGraph::load(&graph)?;
            let walks = hanguard::embedding::generate_walks(&graph, &settings.embed)?;
            let table = hanguard::embedding::train_embeddings(&walks, &settings.embed, settings.embed_dim)?;
            table.save(&out)?;
            println!("embedded {} characters at dim {}", table.len(), table.dim());
            Ok(())
        }

        Cmd::Train {
            data,
            out,
            mode,
            embedding,
            vocab_from,
            d1,
            d2,
            max_len,
            lm_layers,
            lm_heads,
            t1_layers,
            t2_layers,
            n_classes,
            dropout,
            seed,
            epochs,
            batch_size,
            learning_rate,
        } => {
            if let Some(m) = mode {
                settings.model.mode = Mode::parse(&m)?;
            }
            set_opt(&mut settings.model.d1, d1);
            set_opt(&mut settings.model.d2, d2);
            set_opt(&mut settings.model.l, max_len);
            set_opt(&mut settings.model.lm_layers, lm_layers);
            set_opt(&mut settings.model.lm_heads, lm_heads);
            set_opt(&mut settings.model.t1_layers, t1_layers);
            set_opt(&mut settings.model.t2_layers, t2_layers);
            set_opt(&mut settings.model.n_classes, n_classes);
            set_opt(&mut settings.model.dropout, dropout);
            set_opt(&mut settings.model.seed, seed);
            set_opt(&mut settings.train_epochs, epochs);
            set_opt(&mut settings.train_batch_size, batch_size);
            set_opt(&mut settings.train_learning_rate, learning_rate);

            let train_set = dataset::load_jsonl(&data)?;
            let vocab = match vocab_from {
                Some(path) => {
                    let basis = dataset::load_jsonl(&path)?;
                    Vocab::from_texts(basis.iter().map(|t| t.text.as_str()))
                }
                None => Vocab::from_texts(train_set.iter().map(|t| t.text.as_str())),
            };
            let mut model = match embedding {
                Some(path) => {
                    let mut cfg = settings.model.clone();
                    let table = hanguard::embedding::EmbeddingTable::load(&path)?;
                    cfg.d2 = table.dim();
                    FusionModel::with_embedding_file(cfg, vocab, &path)?
                }
                None => FusionModel::new(settings.model.clone(), vocab, None)?,
            };
            let report = model.train(
                &train_set,
                settings.train_epochs,
                settings.train_batch_size,
                settings.train_learning_rate,
            )?;
            for (i, epoch) in report.epochs.iter().enumerate() {
                println!("epoch {}: loss {:.4}, accuracy {:.4}", i + 1, epoch.loss, epoch.accuracy);
            }
            model.save(&out)?;
            println!("saved {} model to {}", model.config().mode.as_str(), out.display());
            Ok(())
        }

        Cmd::Attack {
            model,
            data,
            graph,
            dict,
            algo,
            n,
            seed,
            max_mr,
            candidate_cap,
            out,
            report,
            remote,
        } => {
            apply_attack_flags(&mut settings, algo, seed, max_mr, candidate_cap)?;
            let graph = AdvGraph::load(&graph)?;
            let seg = load_segmenter(&settings, dict)?;
            let texts = {
                let all = dataset::load_jsonl(&data)?;
                match n {
                    Some(n) if n < all.len() => metrics::sample_eval_set(&all, n, settings.attack.seed),
                    _ => all,
                }
            };
            let local: Arc<FusionModel> = Arc::new(FusionModel::load(&model)?);
            let outcomes = match remote {
                Some(base) => {
                    let f = RemoteClassifier::new(&base, Duration::from_secs(30), 64)?;
                    attack::run_attacks(&texts, &f, &graph, &seg, &settings.attack, jobs)?
                }
                None => {
                    let f = LocalClassifier::new(local);
                    attack::run_attacks(&texts, &f, &graph, &seg, &settings.attack, jobs)?
                }
            };
            attack::write_traces(&out, &outcomes)?;
            let report_path = report.unwrap_or_else(|| sidecar(&out));
            let rr = metrics::robustness_report(&outcomes, settings.eval_lasr_cap)?;
            write_json(&report_path, &rr)?;
            println!(
                "attacked {} texts: uasr {:.4}, lasr {:.4}, mean_mr {}",
                outcomes.len(),
                rr.uasr,
                rr.lasr,
                rr.mean_mr.map_or("n/a".into(), |m| format!("{m:.4}")),
            );
            Ok(())
        }

        Cmd::Augment {
            model,
            data,
            graph,
            dict,
            algo,
            preset,
            epsilon_max,
            stop_ratio,
            shuffle_seed,
            seed,
            conventional,
            out,
            report,
        } => {
            apply_attack_flags(&mut settings, algo, seed, None, None)?;
            if let Some(p) = preset {
                settings.preset = Some(Preset::parse(&p)?);
            }
            if let Some(p) = settings.preset {
                settings.augment.epsilon_max = p.epsilon_max(settings.attack.algorithm);
            }
            set_opt(&mut settings.augment.epsilon_max, epsilon_max);
            set_opt(&mut settings.augment.stop_ratio, stop_ratio);
            set_opt(&mut settings.augment.shuffle_seed, shuffle_seed);
            settings.augment.attack = settings.attack.clone();

            let graph = AdvGraph::load(&graph)?;
            let seg = load_segmenter(&settings, dict)?;
            let sources = dataset::load_jsonl(&data)?;
            let f = LocalClassifier::new(Arc::new(FusionModel::load(&model)?));
            let (augmented, rep) = if conventional {
                augment::conventional_adversarial_set(&sources, &f, &graph, &seg, &settings.augment, jobs)?
            } else {
                augment::augment(&sources, &f, &graph, &seg, &settings.augment, jobs)?
            };
            dataset::write_jsonl(&out, &augmented)?;
            let report_path = report.unwrap_or_else(|| sidecar(&out));
            augment::write_report(&report_path, &rep)?;
            println!(
                "generated {} texts from {} chains ({} sources consumed, {} skipped)",
                rep.generated, rep.n_chains, rep.sources_consumed, rep.skipped_misclassified
            );
            if let Some(reason) = rep.aborted {
                return Err(Error::Transport(format!("augmentation aborted early: {reason}")));
            }
            Ok(())
        }

        Cmd::Evaluate { model, data, traces, lasr_cap, out } => {
            set_opt(&mut settings.eval_lasr_cap, lasr_cap);
            let test_set = dataset::load_jsonl(&data)?;
            let f = LocalClassifier::new(Arc::new(FusionModel::load(&model)?));
            let acc = metrics::accuracy(&f, &test_set)?;
            let robustness = match traces {
                Some(path) => {
                    Some(metrics::robustness_report(&attack::load_traces(&path)?, settings.eval_lasr_cap)?)
                }
                None => None,
            };
            let summary = metrics::EvalSummary::new(Some(acc), robustness.as_ref());
            write_json(&out, &summary)?;
            println!("accuracy {acc:.4}");
            if let Some(r) = &robustness {
                println!("uasr {:.4}, lasr {:.4} over {} eligible", r.uasr, r.lasr, r.n_eligible);
            }
            Ok(())
        }

        Cmd::Curve { model, data, graph, dict, algo, n, seed, caps, traces, out } => {
            apply_attack_flags(&mut settings, algo, seed, None, None)?;
            if let Some(spec) = caps {
                settings.eval_caps = spec
                    .split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::invalid(format!("bad cap {c:?} in --caps")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
            }
            let curve = match traces {
                Some(path) => metrics::curve_from_outcomes(&attack::load_traces(&path)?, &settings.eval_caps)?,
                None => {
                    let (model, data, graph) = match (model, data, graph) {
                        (Some(m), Some(d), Some(g)) => (m, d, g),
                        _ => {
                            return Err(Error::invalid(
                                "curve needs --model, --data and --graph (or stored --traces)",
                            ))
                        }
                    };
                    let graph = AdvGraph::load(&graph)?;
                    let seg = load_segmenter(&settings, dict)?;
                    let texts = {
                        let all = dataset::load_jsonl(&data)?;
                        match n {
                            Some(n) if n < all.len() => {
                                metrics::sample_eval_set(&all, n, settings.attack.seed)
                            }
                            _ => all,
                        }
                    };
                    let f = LocalClassifier::new(Arc::new(FusionModel::load(&model)?));
                    metrics::asr_curve(&texts, &f, &graph, &seg, &settings.attack, &settings.eval_caps, jobs)?
                }
            };
            metrics::write_curve_csv(&out, &curve)?;
            for (cap, asr) in &curve {
                println!("cap {cap}: asr {asr:.4}");
            }
            Ok(())
        }

        Cmd::ExportRepr { model, data, layer, out } => {
            let layer = ReprLayer::parse(&layer)?;
            let model = FusionModel::load(&model)?;
            let texts = dataset::load_jsonl(&data)?;
            let refs: Vec<&str> = texts.iter().map(|t| t.text.as_str()).collect();
            let rows = model.representations(&refs, layer)?;
            let width = model.repr_width(layer);
            let mut s = format!("{} {}\n", rows.len(), width);
            for row in &rows {
                let mut first = true;
                for v in row {
                    if !first {
                        s.push(' ');
                    }
                    s.push_str(&format!("{v}"));
                    first = false;
                }
                s.push('\n');
            }
            std::fs::write(&out, s).map_err(|e| Error::io(&out, e))?;
            println!("wrote {} rows of width {width}", rows.len());
            Ok(())
        }

        Cmd::ServeToy { model, bind } => {
            let model = FusionModel::load(&model)?;
            server::serve_blocking(&model, &bind)
        }
    }
}

fn set_opt<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_attack_flags(
    settings: &mut Settings,
    algo: Option<String>,
    seed: Option<u64>,
    max_mr: Option<String>,
    candidate_cap: Option<usize>,
) -> Result<()> {
    if let Some(a) = algo {
        settings.attack.algorithm = Algorithm::parse(&a)?;
    }
    set_opt(&mut settings.attack.seed, seed);
    if let Some(spec) = max_mr {
        settings.attack.max_mr = if spec == "none" {
            None
        } else {
            Some(spec.parse().map_err(|_| Error::invalid(format!("bad --max-mr value {spec:?}")))?)
        };
    }
    set_opt(&mut settings.attack.candidate_cap, candidate_cap);
    settings.attack.validate()
}

fn load_segmenter(settings: &Settings, flag: Option<PathBuf>) -> Result<Segmenter> {
    match flag.or_else(|| settings.segmenter_dict.clone()) {
        Some(path) => Segmenter::from_dict_file(&path),
        None => {
            log::info!("no segmenter dictionary configured; treating every character as a word");
            Ok(Segmenter::empty())
        }
    }
}

/// `traces.jsonl` -> `traces.report.json` next to it.
fn sidecar(out: &Path) -> PathBuf {
    out.with_extension("report.json")
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let json =
        serde_json::to_string_pretty(value).map_err(|e| Error::internal(format!("encode json: {e}")))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}
