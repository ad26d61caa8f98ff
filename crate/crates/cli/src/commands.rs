use std::path::{Path, PathBuf};

use mtslm::analysis::{
    ablate_and_route, bootstrap_diff_ci, collect_gate_traces, dyck_accuracy_by_timescale,
    default_param_grid, evaluate_lm, fit_timescale_distribution, perplexity, perplexity_by_bin,
    word_ablation_decay, SortKey, Table1Row, WordAblationPolicy,
};
use mtslm::corpus::{
    generate_markov_corpus, load_corpus_files, load_tokens_bin, load_vocab_json, save_tokens_bin,
    save_vocab_json, CorpusBundle, EosPolicy, Provenance, Vocab,
};
use mtslm::dyck::{build_dyck_dataset, load_dyck_jsonl, save_dyck_jsonl, DyckGrammarParams};
use mtslm::model::{
    build_dyck_model, build_lm, load_checkpoint, save_checkpoint, CheckpointModel, DyckModel,
    DyckModelConfig, LanguageModel, LayerTimescales,
};
use mtslm::train::{train_dyck as run_train_dyck, train_lm as run_train_lm, write_epoch_log};

use crate::config::*;
use crate::report::report_bundle;
use crate::{CliError, CliResult};

pub fn prepare_corpus(config_path: &Path) -> CliResult {
    let cfg: PrepareCorpusConfig = load_config(config_path)?;
    write_resolved(&cfg.out_dir, &cfg)?;
    let eos = if cfg.append_eos {
        EosPolicy::AppendEos
    } else {
        EosPolicy::None
    };
    let bundle = load_corpus_files(&cfg.train_path, &cfg.valid_path, &cfg.test_path, eos)?;
    write_corpus_dir(&cfg.out_dir, &bundle)?;
    println!(
        "prepared corpus: vocab {}, train {} / valid {} / test {} tokens",
        bundle.vocab.len(),
        bundle.train.len(),
        bundle.valid.len(),
        bundle.test.len()
    );
    Ok(())
}

pub fn gen_markov(config_path: &Path) -> CliResult {
    let cfg: GenMarkovConfig = load_config(config_path)?;
    write_resolved(&cfg.out_dir, &cfg)?;
    let source = load_corpus_dir(&cfg.corpus_dir)?;
    let markov = generate_markov_corpus(&source, cfg.length, cfg.seed)?;
    write_corpus_dir(&cfg.out_dir, &markov)?;
    println!(
        "markov corpus: train {} / valid {} / test {} tokens",
        markov.train.len(),
        markov.valid.len(),
        markov.test.len()
    );
    Ok(())
}

pub fn gen_dyck(config_path: &Path) -> CliResult {
    let cfg: GenDyckConfig = load_config(config_path)?;
    write_resolved(&cfg.out_dir, &cfg)?;
    let params = DyckGrammarParams {
        p1: cfg.p1,
        p2: cfg.p2,
        q: cfg.q,
        max_len: cfg.max_len,
    };
    let data = build_dyck_dataset(&params, cfg.n_train, cfg.n_valid, cfg.n_test, cfg.seed)?;
    save_dyck_jsonl(&cfg.out_dir.join("train.jsonl"), &data.train)?;
    save_dyck_jsonl(&cfg.out_dir.join("valid.jsonl"), &data.valid)?;
    save_dyck_jsonl(&cfg.out_dir.join("test.jsonl"), &data.test)?;
    println!(
        "dyck dataset: {} / {} / {} sequences",
        data.train.len(),
        data.valid.len(),
        data.test.len()
    );
    Ok(())
}

pub fn train_lm(config_path: &Path) -> CliResult {
    let cfg: TrainLmConfig = load_config(config_path)?;
    write_resolved(&cfg.out_dir, &cfg)?;
    let corpus = load_corpus_dir(&cfg.corpus_dir)?;
    let lm_config = cfg.arch.to_lm_config(corpus.vocab.len());
    lm_config
        .validate()
        .map_err(|e| CliError::Schema(format!("arch: {e}")))?;
    let model = build_lm(&lm_config, cfg.seed)?;
    let result = run_train_lm(model, &corpus, &cfg.optimizer, cfg.seed)?;
    write_epoch_log(&cfg.out_dir.join("log.csv"), &result.log)?;
    save_checkpoint(
        &cfg.out_dir.join("checkpoint.mts"),
        &CheckpointModel::Lm(result.model),
        Some(&result.trainer),
    )?;
    println!(
        "trained {} epochs; best validation loss {:.6} (perplexity {:.3})",
        result.log.len(),
        result.best_valid_loss,
        result.best_valid_loss.exp()
    );
    Ok(())
}

pub fn train_dyck(config_path: &Path) -> CliResult {
    let cfg: TrainDyckConfig = load_config(config_path)?;
    write_resolved(&cfg.out_dir, &cfg)?;
    let data = load_dyck_dir(&cfg.dataset_dir)?;
    let model = build_dyck_model(
        &DyckModelConfig {
            hidden_size: cfg.hidden_size,
            bias_mode: cfg.bias_mode,
        },
        cfg.seed,
    )?;
    let result = run_train_dyck(model, &data, &cfg.optimizer, cfg.seed)?;
    write_epoch_log(&cfg.out_dir.join("log.csv"), &result.log)?;
    save_checkpoint(
        &cfg.out_dir.join("checkpoint.mts"),
        &CheckpointModel::Dyck(result.model),
        Some(&result.trainer),
    )?;
    println!(
        "trained {} epochs; best validation MSE {:.6}",
        result.log.len(),
        result.best_valid_loss
    );
    Ok(())
}

pub fn eval(config_path: &Path) -> CliResult {
    let cfg: EvalConfig = load_config(config_path)?;
    write_resolved(&cfg.report_dir, &cfg)?;
    let corpus = load_corpus_dir(&cfg.corpus_dir)?;
    let tokens = split_tokens(&corpus, cfg.split);
    let model = load_lm(&cfg.checkpoint)?;
    let records = evaluate_lm(&model, tokens, &corpus.vocab)?;
    let mut rows = Table1Row::for_model(
        &cfg.model_label,
        &perplexity_by_bin(&records),
        perplexity(&records),
    );

    if let Some(other_path) = &cfg.compare_checkpoint {
        let other = load_lm(other_path)?;
        let other_records = evaluate_lm(&other, tokens, &corpus.vocab)?;
        rows.extend(Table1Row::for_model(
            &cfg.compare_label,
            &perplexity_by_bin(&other_records),
            perplexity(&other_records),
        ));
        let a: Vec<f64> = records.iter().map(|r| r.nll).collect();
        let b: Vec<f64> = other_records.iter().map(|r| r.nll).collect();
        let overall = bootstrap_diff_ci(
            &a,
            &b,
            cfg.bootstrap.block_len,
            cfg.bootstrap.n_resamples,
            cfg.bootstrap.seed,
        )?;
        mtslm::analysis::write_bootstrap_csv(
            &cfg.report_dir.join("bootstrap.csv"),
            &[(
                format!("{}-{}", cfg.model_label, cfg.compare_label),
                overall,
            )],
        )?;
    }
    mtslm::analysis::write_table1_csv(&cfg.report_dir.join("table1.csv"), &rows)?;
    println!("wrote {}", cfg.report_dir.join("table1.csv").display());
    Ok(())
}

pub fn fit_timescales(config_path: &Path) -> CliResult {
    let cfg: FitTimescalesConfig = load_config(config_path)?;
    write_resolved(&cfg.report_dir, &cfg)?;
    let corpus = load_corpus_dir(&cfg.corpus_dir)?;
    let tokens = split_tokens(&corpus, cfg.split);
    let model = load_lm(&cfg.checkpoint)?;
    let layers = cfg
        .layers
        .clone()
        .unwrap_or_else(|| vec![1.min(model.n_layers() - 1)]);
    let mut estimates = Vec::new();
    for &layer in &layers {
        let set = collect_gate_traces(&model, tokens, layer, cfg.window)?;
        estimates.extend(set.estimated_timescales()?);
    }
    let alpha_grid = cfg.alpha_grid.clone().unwrap_or_else(default_param_grid);
    let mu_grid = cfg.mu_grid.clone().unwrap_or_else(default_param_grid);
    let (ig, gauss) = fit_timescale_distribution(&estimates, &alpha_grid, &mu_grid)?;
    let winner = if ig.best_d <= gauss.best_d { &ig } else { &gauss };
    let summary = serde_json::json!({
        "layers": layers,
        "n_units": estimates.len(),
        "winner_family": winner.family.label(),
        "winner_param": winner.best_param,
        "winner_d": winner.best_d,
        "inverse_gamma": { "best_alpha": ig.best_param, "best_d": ig.best_d },
        "narrow_gaussian": { "best_mu": gauss.best_param, "best_d": gauss.best_d },
    });
    std::fs::write(
        cfg.report_dir.join("ksfit.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Runtime(e.to_string()))?
            + "\n",
    )?;
    mtslm::analysis::write_ksfit_csv(&cfg.report_dir.join("ksfit.csv"), &[ig, gauss])?;
    println!("wrote {}", cfg.report_dir.join("ksfit.csv").display());
    Ok(())
}

pub fn ablate(config_path: &Path) -> CliResult {
    let cfg: AblateConfig = load_config(config_path)?;
    write_resolved(&cfg.report_dir, &cfg)?;
    let corpus = load_corpus_dir(&cfg.corpus_dir)?;
    let tokens = split_tokens(&corpus, cfg.split);
    let model = load_lm(&cfg.checkpoint)?;
    let sort_key = match cfg.sort_key {
        SortKeyConfig::Assigned => SortKey::AssignedTimescale,
        SortKeyConfig::Estimated => SortKey::EstimatedTimescale,
    };
    let report = ablate_and_route(
        &model,
        tokens,
        &corpus.vocab,
        cfg.layer,
        cfg.group_size,
        sort_key,
        cfg.zero_cell,
    )?;
    mtslm::analysis::write_routing_csv(&cfg.report_dir.join("routing.csv"), &report)?;
    println!(
        "wrote {} ({} groups)",
        cfg.report_dir.join("routing.csv").display(),
        report.groups.len()
    );
    Ok(())
}

pub fn word_ablate(config_path: &Path) -> CliResult {
    let cfg: WordAblateConfig = load_config(config_path)?;
    write_resolved(&cfg.report_dir, &cfg)?;
    let corpus = load_corpus_dir(&cfg.corpus_dir)?;
    let tokens = split_tokens(&corpus, cfg.split);
    let model = load_lm(&cfg.checkpoint)?;
    let policy = match cfg.policy {
        AblationPolicyConfig::ReplaceWithUnk => WordAblationPolicy::ReplaceWithUnk,
        AblationPolicyConfig::ZeroEmbedding => WordAblationPolicy::ZeroEmbedding,
    };
    // Consecutive fixed-length chunks; chunks that would be degenerate
    // (the ablated word already is <unk>) are skipped and counted.
    let mut sentences = Vec::new();
    let mut skipped = 0usize;
    for chunk in tokens.chunks(cfg.sentence_len) {
        if sentences.len() >= cfg.max_sentences {
            break;
        }
        if chunk.len() <= cfg.ablate_pos + 1 {
            continue;
        }
        if policy == WordAblationPolicy::ReplaceWithUnk
            && chunk[cfg.ablate_pos] == corpus.vocab.unk_id()
        {
            skipped += 1;
            continue;
        }
        sentences.push(chunk.to_vec());
    }
    let report = word_ablation_decay(
        &model,
        &sentences,
        cfg.ablate_pos,
        policy,
        &corpus.vocab,
        cfg.group_layer.map(|l| (l, cfg.group_size)),
    )?;
    mtslm::analysis::write_decay_csv(&cfg.report_dir.join("decay.csv"), &report)?;
    println!(
        "wrote {} ({} sentences, {} skipped)",
        cfg.report_dir.join("decay.csv").display(),
        sentences.len(),
        skipped
    );
    Ok(())
}

pub fn dyck_eval(config_path: &Path) -> CliResult {
    let cfg: DyckEvalConfig = load_config(config_path)?;
    write_resolved(&cfg.report_dir, &cfg)?;
    let test = load_dyck_jsonl(&cfg.dataset_dir.join("test.jsonl"))?;
    let model = load_dyck(&cfg.checkpoint)?;
    let report = dyck_accuracy_by_timescale(&model, &test, &cfg.bucket_edges, cfg.threshold)?;
    mtslm::analysis::write_dyck_acc_csv(&cfg.report_dir.join("dyck_acc.csv"), &report)?;
    println!(
        "overall whole-sequence accuracy {:.4} over {} sequences",
        report.overall, report.n_sequences
    );
    Ok(())
}

pub fn sweep_alpha(config_path: &Path) -> CliResult {
    let cfg: SweepAlphaConfig = load_config(config_path)?;
    write_resolved(&cfg.out_dir, &cfg)?;
    if cfg.alphas.is_empty() {
        return Err(CliError::Schema("alphas list is empty".into()));
    }
    let corpus = load_corpus_dir(&cfg.corpus_dir)?;
    let mut writer = csv::Writer::from_path(cfg.out_dir.join("sweep.csv"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    writer
        .write_record(["alpha", "best_valid_loss", "valid_ppl", "test_ppl"])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for &alpha in &cfg.alphas {
        let mut lm_config = cfg.arch.to_lm_config(corpus.vocab.len());
        if cfg.sweep_layer >= lm_config.layer_sizes.len() {
            return Err(CliError::Schema(format!(
                "sweep_layer {} out of range",
                cfg.sweep_layer
            )));
        }
        lm_config.layer_timescales[cfg.sweep_layer] = LayerTimescales::InverseGamma {
            alpha,
            assign: mtslm::timescale::AssignMode::Quantile,
        };
        let model = build_lm(&lm_config, cfg.seed)?;
        let result = run_train_lm(model, &corpus, &cfg.optimizer, cfg.seed)?;
        let test_records = evaluate_lm(&result.model, &corpus.test, &corpus.vocab)?;
        let test_ppl = perplexity(&test_records);
        writer
            .write_record([
                alpha.to_string(),
                result.best_valid_loss.to_string(),
                result.best_valid_loss.exp().to_string(),
                test_ppl.to_string(),
            ])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        save_checkpoint(
            &cfg.out_dir.join(format!("checkpoint_alpha_{alpha}.mts")),
            &CheckpointModel::Lm(result.model),
            Some(&result.trainer),
        )?;
        println!("alpha {alpha}: test perplexity {test_ppl:.3}");
    }
    writer
        .flush()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

pub fn report(dirs: &[PathBuf], out: Option<&Path>) -> CliResult {
    if dirs.is_empty() {
        return Err(CliError::Runtime("no run directories given".into()));
    }
    let bundle = report_bundle(dirs)?;
    let json =
        serde_json::to_string_pretty(&bundle).map_err(|e| CliError::Runtime(e.to_string()))?;
    match out {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(())
}

// ---- shared plumbing ----

fn write_corpus_dir(dir: &Path, bundle: &CorpusBundle) -> CliResult {
    save_tokens_bin(&dir.join("train.bin"), &bundle.train)?;
    save_tokens_bin(&dir.join("valid.bin"), &bundle.valid)?;
    save_tokens_bin(&dir.join("test.bin"), &bundle.test)?;
    save_vocab_json(&dir.join("vocab.json"), &bundle.vocab)?;
    Ok(())
}

/// Reads a prepared corpus directory (train/valid/test.bin + vocab.json).
pub fn load_corpus_dir(dir: &Path) -> Result<CorpusBundle, CliError> {
    let vocab: Vocab = load_vocab_json(&dir.join("vocab.json"))?;
    let bundle = CorpusBundle {
        train: load_tokens_bin(&dir.join("train.bin"))?,
        valid: load_tokens_bin(&dir.join("valid.bin"))?,
        test: load_tokens_bin(&dir.join("test.bin"))?,
        vocab,
        provenance: Provenance::Natural,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn load_dyck_dir(dir: &Path) -> Result<mtslm::dyck::DyckDataset, CliError> {
    Ok(mtslm::dyck::DyckDataset {
        train: load_dyck_jsonl(&dir.join("train.jsonl"))?,
        valid: load_dyck_jsonl(&dir.join("valid.jsonl"))?,
        test: load_dyck_jsonl(&dir.join("test.jsonl"))?,
        params: DyckGrammarParams::default(),
        seed: 0,
    })
}

fn split_tokens(corpus: &CorpusBundle, split: Split) -> &[u32] {
    match split {
        Split::Train => &corpus.train,
        Split::Valid => &corpus.valid,
        Split::Test => &corpus.test,
    }
}

fn load_lm(path: &Path) -> Result<LanguageModel, CliError> {
    match load_checkpoint(path)?.model {
        CheckpointModel::Lm(m) => Ok(m),
        CheckpointModel::Dyck(_) => Err(CliError::Runtime(format!(
            "{} holds a Dyck model, expected a language model",
            path.display()
        ))),
    }
}

fn load_dyck(path: &Path) -> Result<DyckModel, CliError> {
    match load_checkpoint(path)?.model {
        CheckpointModel::Dyck(m) => Ok(m),
        CheckpointModel::Lm(_) => Err(CliError::Runtime(format!(
            "{} holds a language model, expected a Dyck model",
            path.display()
        ))),
    }
}
