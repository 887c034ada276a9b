use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use arbor_core::corpus::{
    action_frequency_stats, parse_distribution, read_examples, Example, MixedSampler, SamplerSpec,
    SamplerState, Source,
};
use arbor_core::eval::{confusion_tables, per_node_prf};
use arbor_core::grammar::{serialize_tree, tokenize, GrammarSchema};
use arbor_core::neural::{load_checkpoint, save_checkpoint, PretrainedVectors};
use arbor_core::parser::{
    beam_decode, greedy_decode, train_parser, Hyperparams, ModelDims, ParserModel, TrainConfig,
    Variant,
};
use arbor_core::template::{generate_splits, GenerateConfig, NoopCorpus, TemplateLibrary};

use crate::config::*;

pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Data(e.into())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Parse(args) => cmd_parse(args),
        Command::Stats(args) => cmd_stats(args),
    }
}

fn load_schema(arg: &SchemaArg) -> Result<Arc<GrammarSchema>, CliError> {
    let text = match &arg.schema {
        Some(path) => fs::read_to_string(path)
            .with_context(|| format!("reading schema {}", path.display()))?,
        None => arbor_core::REFERENCE_SCHEMA_JSON.to_string(),
    };
    Ok(Arc::new(GrammarSchema::load(&text).map_err(anyhow::Error::from)?))
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    if args.train == 0 {
        return Err(usage("--train must be at least 1"));
    }
    if args.valid == 0 || args.test == 0 {
        return Err(usage("--valid and --test must be at least 1"));
    }
    if let Some(f) = args.noop_fraction {
        if !(0.0..=1.0).contains(&f) {
            return Err(usage("--noop-fraction must be within [0, 1]"));
        }
    }
    let schema = load_schema(&args.schema)?;
    let templates_text = match &args.templates {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => arbor_core::REFERENCE_TEMPLATES_JSON.to_string(),
    };
    let library =
        TemplateLibrary::load(&templates_text, &schema).map_err(anyhow::Error::from)?;
    let noop_text = match &args.noop_corpus {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => arbor_core::NOOP_LINES.to_string(),
    };
    let noop = NoopCorpus::parse(&noop_text).map_err(anyhow::Error::from)?;

    let mut config = GenerateConfig::new(args.train, args.valid, args.test, args.seed);
    if let Some(f) = args.noop_fraction {
        config.noop_fraction = f;
    }
    let digest = arbor_core::digest_hex(
        format!(
            "generate train={} valid={} test={} noop={} seed={} schema={:016x} templates={}",
            config.train,
            config.valid,
            config.test,
            config.noop_fraction,
            config.seed,
            schema.digest(),
            arbor_core::digest_hex(templates_text.as_bytes()),
        )
        .as_bytes(),
    );
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let header = format!("config {digest}");
    let [train_path, _, _] = generate_splits(
        &library,
        Some(&noop),
        &schema,
        &config,
        &args.out,
        Some(&header),
    )
    .map_err(anyhow::Error::from)?;

    let train_examples = read_examples(&train_path, &schema, Source::Template)
        .map_err(anyhow::Error::from)?;
    let histogram = action_frequency_stats(&train_examples, &schema);
    print!("{histogram}");
    let stats_path = args.out.join("stats.txt");
    fs::write(&stats_path, format!("# config {digest}\n{histogram}"))
        .with_context(|| format!("writing {}", stats_path.display()))?;
    println!(
        "wrote {} train / {} valid / {} test examples to {} (config {digest})",
        config.train,
        config.valid,
        config.test,
        args.out.display()
    );
    Ok(())
}

fn read_pool(
    path: &Path,
    schema: &GrammarSchema,
    source: Source,
) -> Result<Vec<Example>, CliError> {
    let examples = read_examples(path, schema, source).map_err(anyhow::Error::from)?;
    if examples.is_empty() {
        return Err(CliError::Data(anyhow!(
            "{} contains no examples",
            path.display()
        )));
    }
    Ok(examples)
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    if args.steps == 0 {
        return Err(usage("--steps must be at least 1"));
    }
    if args.d == 0 || args.heads == 0 {
        return Err(usage("--d and --heads must be at least 1"));
    }
    let variant: Variant = args.variant.parse().map_err(usage)?;
    let schema = load_schema(&args.schema)?;

    let train_pool = read_pool(&args.train_file, &schema, Source::Template)?;
    let valid = read_pool(&args.valid_file, &schema, Source::Template)?;
    let mut pools = vec![("templates".to_string(), train_pool)];
    if let Some(p) = &args.rephrase_file {
        pools.push(("rephrases".to_string(), read_pool(p, &schema, Source::Rephrase)?));
    }
    let target = match &args.dist {
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(parse_distribution(&text).map_err(anyhow::Error::from)?)
        }
        None => None,
    };
    let spec = SamplerSpec::new(pools, target, &schema).map_err(anyhow::Error::from)?;

    let mut hyper = Hyperparams::default();
    if let Some(v) = args.lr {
        hyper.learning_rate = v;
    }
    if let Some(v) = args.dropout {
        hyper.dropout = v;
    }
    if let Some(v) = args.word_dropout {
        hyper.word_dropout = v;
    }
    if let Some(v) = args.label_smoothing {
        hyper.label_smoothing = v;
    }

    let config_digest = arbor_core::digest_hex(
        format!(
            "train variant={variant} d={} heads={} d_free={} steps={} seed={} hyper={hyper:?} schema={:016x}",
            args.d, args.heads, args.d_free, args.steps, args.seed, schema.digest(),
        )
        .as_bytes(),
    );

    let (mut model, mut sampler, start_step) = match &args.resume_from {
        Some(path) => {
            let file = load_checkpoint(path).map_err(anyhow::Error::from)?;
            let (model, meta) =
                ParserModel::from_checkpoint(&file, schema.clone()).map_err(anyhow::Error::from)?;
            let extra: ResumeExtra = serde_json::from_value(meta.extra.clone())
                .map_err(|e| anyhow!("checkpoint is not resumable: {e}"))?;
            let sampler_state: SamplerState = extra.sampler_state;
            let sampler = new_sampler_with_state(&spec, &schema, args.seed, sampler_state);
            (model, sampler, extra.final_step)
        }
        None => {
            let vocab = spec
                .pools()
                .iter()
                .flat_map(|(_, pool)| pool.iter())
                .flat_map(|e| e.sentence.iter().cloned())
                .collect::<Vec<_>>();
            let pretrained = match (&args.embeddings, args.random_pretrained) {
                (Some(path), _) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    Some(PretrainedVectors::parse(&text).map_err(anyhow::Error::from)?)
                }
                (None, 0) => None,
                (None, width) => {
                    Some(PretrainedVectors::hashed_random(&vocab, width, args.seed))
                }
            };
            let model = ParserModel::new(
                schema.clone(),
                variant,
                ModelDims {
                    d: args.d,
                    heads: args.heads,
                    d_free: args.d_free,
                },
                vocab,
                pretrained.as_ref(),
                args.seed,
            )
            .map_err(anyhow::Error::from)?;
            let sampler = MixedSampler::new(&spec, &schema, args.seed);
            (model, sampler, 0)
        }
    };

    let mut train_config = TrainConfig::new(args.steps, args.eval_every, args.seed);
    train_config.hyper = hyper;
    train_config.start_step = start_step;
    let report = train_parser(&mut model, &mut sampler, &valid, &train_config)
        .map_err(anyhow::Error::from)?;

    // Metrics log: one JSON object per eval point, after a digest header.
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("ckpt.log"));
    let mut log = String::new();
    log.push_str(&format!("# config {config_digest}\n"));
    for entry in &report.curve {
        log.push_str(&serde_json::to_string(entry).expect("serializable"));
        log.push('\n');
    }
    fs::write(&log_path, log).with_context(|| format!("writing {}", log_path.display()))?;

    // Best-on-validation parameters are in the model now; save them.
    let meta = model.meta(
        &config_digest,
        serde_json::json!({"best_accuracy": report.best_accuracy, "best_step": report.best_step}),
    );
    save_checkpoint(
        &args.out,
        &serde_json::to_string(&meta).expect("serializable"),
        &model.store,
    )
    .map_err(anyhow::Error::from)?;

    // The resumable "last" state: the model now holds the best
    // parameters, so rebuild the final-step state from the report.
    let extra = serde_json::to_value(ResumeExtra {
        sampler_state: sampler.state().clone(),
        final_step: report.final_step,
        best_accuracy: report.best_accuracy,
    })
    .expect("serializable");
    let last_meta = model.meta(&config_digest, extra);
    let last_path = last_extension(&args.out);
    let mut last_store = model.store.clone();
    last_store
        .restore(&report.final_entries)
        .map_err(|e| anyhow!("building resumable state: {e}"))?;
    save_checkpoint(
        &last_path,
        &serde_json::to_string(&last_meta).expect("serializable"),
        &last_store,
    )
    .map_err(anyhow::Error::from)?;

    println!(
        "trained {} steps; best validation accuracy {:.4} at step {} (config {config_digest})",
        args.steps, report.best_accuracy, report.best_step
    );
    println!(
        "checkpoint: {} (best), {} (resumable), log: {}",
        args.out.display(),
        last_path.display(),
        log_path.display()
    );
    Ok(())
}

fn last_extension(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".last");
    s.into()
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ResumeExtra {
    sampler_state: SamplerState,
    final_step: usize,
    best_accuracy: f64,
}

fn new_sampler_with_state<'a>(
    spec: &'a SamplerSpec,
    schema: &GrammarSchema,
    seed: u64,
    state: SamplerState,
) -> MixedSampler<'a> {
    MixedSampler::with_state(spec, schema, seed, state)
}

fn load_model(
    checkpoint: &Path,
    schema: Arc<GrammarSchema>,
) -> Result<(ParserModel, String), CliError> {
    let file = load_checkpoint(checkpoint).map_err(anyhow::Error::from)?;
    let (model, meta) =
        ParserModel::from_checkpoint(&file, schema).map_err(anyhow::Error::from)?;
    Ok((model, meta.config_digest))
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    if args.beam == 0 {
        return Err(usage("--beam must be at least 1"));
    }
    let schema = load_schema(&args.schema)?;
    let (model, train_digest) = load_model(&args.checkpoint, schema.clone())?;
    let examples = read_pool(&args.file, &schema, Source::Template)?;

    let mut pairs = Vec::with_capacity(examples.len());
    let mut beam_ge_greedy = 0usize;
    for ex in &examples {
        let predicted = if args.beam == 1 {
            greedy_decode(&model, &ex.sentence).map_err(anyhow::Error::from)?.tree
        } else {
            let greedy = greedy_decode(&model, &ex.sentence).map_err(anyhow::Error::from)?;
            let beam = beam_decode(&model, &ex.sentence, args.beam).map_err(anyhow::Error::from)?;
            if beam[0].1 >= greedy.log_prob - 1e-12 {
                beam_ge_greedy += 1;
            }
            beam.into_iter().next().expect("non-empty beam").0
        };
        pairs.push((predicted, ex.tree.clone()));
    }

    let metrics = per_node_prf(&pairs, &schema).map_err(anyhow::Error::from)?;
    let tables = confusion_tables(&pairs, &schema);
    let config_digest = arbor_core::digest_hex(
        format!(
            "eval checkpoint={train_digest} file={} beam={} schema={:016x}",
            args.file.display(),
            args.beam,
            schema.digest()
        )
        .as_bytes(),
    );

    println!("# config {config_digest}");
    println!("examples: {}", metrics.pairs);
    println!("tree accuracy: {:.4}", metrics.tree_accuracy);
    for (kind, prf) in [
        ("INT", &metrics.internal),
        ("CAT", &metrics.categorical),
        ("SPAN", &metrics.span),
    ] {
        println!(
            "{kind:>4}: P {:.4} / R {:.4} / F1 {:.4}  (tp {} fp {} fn {})",
            prf.precision, prf.recall, prf.f1, prf.tp, prf.fp, prf.fn_
        );
    }
    if args.beam > 1 {
        println!(
            "beam({}) best score >= greedy score on {}/{} sentences",
            args.beam,
            beam_ge_greedy,
            examples.len()
        );
    }
    print!("{}", tables.render_text());

    if let Some(out) = &args.out {
        let report = serde_json::json!({
            "config_digest": config_digest,
            "checkpoint_config": train_digest,
            "beam": args.beam,
            "metrics": metrics,
            "confusion": tables,
        });
        fs::write(out, serde_json::to_string_pretty(&report).expect("serializable"))
            .with_context(|| format!("writing {}", out.display()))?;
        println!("report written to {}", out.display());
    }
    Ok(())
}

fn cmd_parse(args: ParseArgs) -> Result<(), CliError> {
    if args.beam == 0 {
        return Err(usage("--beam must be at least 1"));
    }
    let schema = load_schema(&args.schema)?;
    let (model, train_digest) = load_model(&args.checkpoint, schema.clone())?;
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut probs_file = match &args.probs {
        Some(p) => {
            let mut f =
                fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            let digest = arbor_core::digest_hex(
                format!(
                    "parse checkpoint={train_digest} beam={} schema={:016x}",
                    args.beam,
                    schema.digest()
                )
                .as_bytes(),
            );
            writeln!(f, "{}", serde_json::json!({ "config_digest": digest }))
                .context("writing probs sidecar")?;
            Some(f)
        }
        None => None,
    };
    for (i, line) in stdin.lock().lines().enumerate() {
        let line = line.context("reading standard input")?;
        let tokens = tokenize(&line);
        if tokens.is_empty() {
            eprintln!("warning: line {} is empty, skipped", i + 1);
            continue;
        }
        let result = greedy_or_beam(&model, &tokens, args.beam)?;
        let doc = serialize_tree(&result.0, &schema).map_err(anyhow::Error::from)?;
        writeln!(out, "{doc}").context("writing standard output")?;
        if let Some(f) = &mut probs_file {
            let diag = serde_json::json!({
                "line": i + 1,
                "sentence": tokens,
                "log_prob": result.1,
                "nodes": result.2.iter().map(|d| {
                    serde_json::json!({
                        "node": d.node,
                        "p_active": d.p_active,
                        "active": d.chosen_active,
                        "label": d.label.as_ref().map(|(l, p)| serde_json::json!({"value": l, "p": p})),
                        "span": d.span.map(|((s, e), ps, pe)| serde_json::json!({"range": [s, e], "p_start": ps, "p_end": pe})),
                    })
                }).collect::<Vec<_>>(),
            });
            writeln!(f, "{diag}").context("writing probs sidecar")?;
        }
    }
    Ok(())
}

type ParseOutput = (
    arbor_core::ActionTree,
    f64,
    Vec<arbor_core::parser::NodeDiagnostics>,
);

fn greedy_or_beam(
    model: &ParserModel,
    tokens: &[String],
    beam: usize,
) -> Result<ParseOutput, CliError> {
    let greedy = greedy_decode(model, tokens).map_err(anyhow::Error::from)?;
    if beam == 1 {
        return Ok((greedy.tree, greedy.log_prob, greedy.diagnostics));
    }
    let mut hypotheses = beam_decode(model, tokens, beam).map_err(anyhow::Error::from)?;
    let (tree, score) = hypotheses.remove(0);
    Ok((tree, score, greedy.diagnostics))
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let schema = load_schema(&args.schema)?;
    let examples = read_examples(&args.file, &schema, Source::Template)
        .map_err(anyhow::Error::from)?;
    let histogram = action_frequency_stats(&examples, &schema);
    print!("{histogram}");
    if let Some(out) = &args.json {
        let digest = arbor_core::digest_hex(
            format!("stats file={} schema={:016x}", args.file.display(), schema.digest())
                .as_bytes(),
        );
        let doc = serde_json::json!({
            "config_digest": digest,
            "total": histogram.total(),
            "counts": histogram.iter().collect::<std::collections::BTreeMap<_, _>>(),
        });
        fs::write(out, serde_json::to_string_pretty(&doc).expect("serializable"))
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
