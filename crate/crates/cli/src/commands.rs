//! Implementations of the CLI verbs. Each one does file I/O and printing
//! here and delegates the actual work to the core library or to
//! [`crate::metrics`].

use std::io::Write as _;
use std::time::Instant;

use tlforce_core::datagen::{
    gen_concat_corpus, gen_corpus, read_jsonl, validate_example, write_jsonl, CorpusStats,
    GenConfig,
};
use tlforce_core::grammar::Grammar;
use tlforce_core::lifting::{lift, train_tagger, unlift, Tagger};
use tlforce_core::ltl::{Notation, Vocab};
use tlforce_core::model::{
    load_checkpoint, save_checkpoint, train, SrcVocab, TrainConfig, TrainMode,
};

use crate::metrics::{
    self, evaluate, forced_wins, per_domain_corpora, run_ood_grid, training_pairs,
};
use crate::properties;
use crate::report::{ExperimentReport, REPORT_SCHEMA_VERSION};
use crate::{
    CliError, DatagenArgs, EvalArgs, LiftArgs, OodArgs, PropertyArgs, TrainArgs, TranslateArgs,
};

fn parse_mode(s: &str) -> Result<TrainMode, CliError> {
    match s {
        "standard" => Ok(TrainMode::Standard),
        "grammar-forced" | "grammar_forced" => Ok(TrainMode::GrammarForced),
        other => Err(CliError::Usage(format!(
            "unknown mode {other:?}; use standard or grammar-forced"
        ))),
    }
}

fn parse_notation(s: &str) -> Result<Notation, CliError> {
    match s {
        "unicode" => Ok(Notation::Unicode),
        "ascii" => Ok(Notation::Ascii),
        other => Err(CliError::Usage(format!(
            "unknown notation {other:?}; use unicode or ascii"
        ))),
    }
}

pub fn cmd_datagen(args: &DatagenArgs) -> Result<(), CliError> {
    let corpus = if let Some(min_aps) = args.concat_min_aps {
        if min_aps < 1 || min_aps > args.concat_max_aps {
            return Err(CliError::Usage(format!(
                "--concat-min-aps must lie in 1..=--concat-max-aps, got {min_aps}"
            )));
        }
        gen_concat_corpus(args.seed, args.count, min_aps, args.concat_max_aps)?
    } else {
        let cfg = GenConfig {
            seed: args.seed,
            count: args.count,
            max_depth: args.max_depth,
            max_aps: args.max_aps,
            domain: args.domain.clone(),
        };
        gen_corpus(&cfg)?
    };
    write_jsonl(&args.out, &corpus)?;
    let stats = CorpusStats::measure(&corpus);
    println!(
        "{}",
        serde_json::to_string(&stats).map_err(|e| CliError::Internal(e.to_string()))?
    );
    Ok(())
}

fn load_corpus(path: &std::path::Path) -> Result<Vec<tlforce_core::lifting::LiftedExample>, CliError> {
    let corpus = read_jsonl(path)?;
    if corpus.is_empty() {
        return Err(CliError::Data(format!("{}: empty corpus", path.display())));
    }
    for (i, ex) in corpus.iter().enumerate() {
        validate_example(ex, i + 1)?;
    }
    Ok(corpus)
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mode = parse_mode(&args.mode)?;
    if args.max_props == 0 || args.max_props > tlforce_core::lifting::MAX_AP_ID {
        return Err(CliError::Usage(format!(
            "--max-props must lie in 1..=15, got {}",
            args.max_props
        )));
    }
    let corpus = load_corpus(&args.corpus)?;
    let grammar = Grammar::new(Vocab::new(args.max_props));
    let src_vocab = SrcVocab::build(corpus.iter().map(|e| e.lifted_nl.as_str()));
    let pairs = training_pairs(&corpus, &src_vocab, &grammar)?;
    let cfg = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        mode,
        d_emb: args.d_emb,
        d_hidden: args.d_hidden,
        max_len: args.max_len,
        clip_norm: args.clip_norm,
    };
    let started = Instant::now();
    let outcome = train(&pairs, src_vocab.len(), &cfg, &grammar)?;
    save_checkpoint(&args.out, &outcome.params, &src_vocab, args.max_props)?;
    if let Some(csv) = &args.loss_csv {
        let mut file = std::fs::File::create(csv)?;
        writeln!(file, "step,loss")?;
        for (i, loss) in outcome.loss_curve.iter().enumerate() {
            writeln!(file, "{i},{loss}")?;
        }
    }
    eprintln!(
        "trained {} examples, {} steps, final loss {:.4}, {:.1}s",
        pairs.len(),
        outcome.loss_curve.len(),
        outcome.loss_curve.last().unwrap(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn cmd_translate(args: &TranslateArgs) -> Result<(), CliError> {
    let notation = parse_notation(&args.notation)?;
    let (params, src_vocab, max_props) = load_checkpoint(&args.model)?;
    let grammar = Grammar::new(Vocab::new(max_props));
    let constrained = !args.unconstrained;
    let max_len = params.dims().max_len;
    if let Some(tagger_path) = &args.tagger {
        // Raw sentence: tag, lift, translate, ground.
        let tagger = Tagger::load(tagger_path)?;
        let tokens: Vec<String> = args
            .sentence
            .split_whitespace()
            .map(|w| w.to_string())
            .collect();
        let labels = tagger.predict_labels(&tokens);
        let (lifted_nl, ap_map) = lift(&tokens, &labels)?;
        let src = src_vocab.encode(&lifted_nl);
        let formula = params.translate(&src, &grammar, constrained, max_len)?;
        let grounded = unlift(&formula, &ap_map, notation)?;
        println!("{grounded}");
    } else {
        let src = src_vocab.encode(&args.sentence);
        let formula = params.translate(&src, &grammar, constrained, max_len)?;
        println!("{}", formula.render(notation));
    }
    Ok(())
}

pub fn cmd_lift(args: &LiftArgs) -> Result<(), CliError> {
    match (&args.train_from, &args.tagger) {
        (Some(corpus_path), None) => {
            let out = args.out.as_ref().ok_or_else(|| {
                CliError::Usage("--train-from needs --out for the tagger file".to_string())
            })?;
            let corpus = load_corpus(corpus_path)?;
            let data: Vec<(Vec<String>, Vec<u32>)> = corpus
                .into_iter()
                .map(|e| (e.tokens, e.labels))
                .collect();
            let tagger = train_tagger(&data, args.epochs, args.seed);
            tagger.save(out)?;
            eprintln!("tagger trained on {} sentences", data.len());
            Ok(())
        }
        (None, Some(tagger_path)) => {
            let sentence = args.sentence.as_ref().ok_or_else(|| {
                CliError::Usage("--tagger needs --sentence to lift".to_string())
            })?;
            let tagger = Tagger::load(tagger_path)?;
            let tokens: Vec<String> =
                sentence.split_whitespace().map(|w| w.to_string()).collect();
            let labels = tagger.predict_labels(&tokens);
            let (lifted_nl, ap_map) = lift(&tokens, &labels)?;
            let out = serde_json::json!({
                "lifted_nl": lifted_nl,
                "labels": labels,
                "ap_map": ap_map,
            });
            println!("{out}");
            Ok(())
        }
        _ => Err(CliError::Usage(
            "lift needs exactly one of --train-from or --tagger".to_string(),
        )),
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let (params, src_vocab, max_props) = load_checkpoint(&args.model)?;
    let grammar = Grammar::new(Vocab::new(max_props));
    let corpus = load_corpus(&args.corpus)?;
    let outcome = evaluate(
        &params,
        &corpus,
        &src_vocab,
        &grammar,
        !args.unconstrained,
        args.max_len,
    )?;
    println!(
        "{}",
        serde_json::to_string_pretty(&outcome).map_err(|e| CliError::Internal(e.to_string()))?
    );
    Ok(())
}

pub fn cmd_experiment_ood(args: &OodArgs) -> Result<(), CliError> {
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".to_string()));
    }
    let started = Instant::now();
    let grammar = Grammar::new(Vocab::new(5));
    let corpora = per_domain_corpora(11, args.count_per_domain, args.max_depth)?;
    let base = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        batch_size: 16,
        seed: 0,
        mode: TrainMode::Standard,
        d_emb: args.d_emb,
        d_hidden: args.d_hidden,
        max_len: 64,
        clip_norm: args.clip_norm,
    };
    let seeds: Vec<u64> = (1..=args.seeds).collect();
    let grid = run_ood_grid(&corpora, &seeds, &base, &grammar)?;
    let wins = forced_wins(&grid);
    let stats = corpora
        .iter()
        .map(|(k, v)| (k.clone(), CorpusStats::measure(v)))
        .collect();
    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: serde_json::json!({
            "seeds": args.seeds,
            "count_per_domain": args.count_per_domain,
            "epochs": args.epochs,
            "learning_rate": args.learning_rate,
            "d_emb": args.d_emb,
            "d_hidden": args.d_hidden,
            "max_depth": args.max_depth,
            "clip_norm": args.clip_norm,
        }),
        corpus_stats: stats,
        grid,
        forced_wins: wins,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    std::fs::write(&args.out, &json)?;
    // Grid summary on stdout: one row per held-out domain and seed.
    println!("heldout_domain,seed,forced_em,standard_em");
    let rows = &report.grid;
    for heldout in metrics::DOMAIN_NAMES {
        for &seed in &seeds {
            let em = |mode: TrainMode| {
                rows.iter()
                    .find(|r| r.heldout_domain == heldout && r.seed == seed && r.mode == mode)
                    .map(|r| r.heldout_exact_match)
                    .unwrap_or(f64::NAN)
            };
            println!(
                "{heldout},{seed},{:.4},{:.4}",
                em(TrainMode::GrammarForced),
                em(TrainMode::Standard)
            );
        }
    }
    Ok(())
}

pub fn cmd_property_suite(args: &PropertyArgs) -> Result<(), CliError> {
    let checks = properties::all_checks();
    let mut failures = 0;
    let mut ran = 0;
    for check in checks {
        if let Some(filter) = &args.only {
            let matches_name = check.name.contains(filter.as_str())
                || filter.parse::<usize>().map(|n| n == check.number).unwrap_or(false);
            if !matches_name {
                continue;
            }
        }
        ran += 1;
        let outcome = (check.run)();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {:2}. {} — {}", check.number, check.name, outcome.detail);
        if !outcome.pass {
            failures += 1;
        }
    }
    if ran == 0 {
        return Err(CliError::Usage(format!(
            "--only {:?} matched no property",
            args.only.as_deref().unwrap_or("")
        )));
    }
    if failures > 0 {
        return Err(CliError::Internal(format!(
            "{failures} propert{} failed",
            if failures == 1 { "y" } else { "ies" }
        )));
    }
    Ok(())
}
