use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use beflow::bematrix::{build_be, build_reaction, BEMatrix};
use beflow::chem::{parse_smiles, PeriodicTable};
use beflow::dataio::{clean, group_pathways, load_corpus, split, write_corpus, StepRecord};
use beflow::evalharness::{
    conservation_rates, failure_histogram, pathway_accuracy, step_accuracy, MetricsReport, PathwayCase, Prediction,
};
use beflow::mechsearch::{beam_search, state_smiles, FlowSampler, StepSampler};
use beflow::netmodel::{load_checkpoint, save_checkpoint, train as fit, Model, StepPair};
use beflow::postprocess::FailureMode;

use crate::config::RunConfig;
use crate::CliError;

fn out_dir(cfg: &RunConfig, default: &str) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| CliError::Usage(format!("no {what} given (--{what} or `{what}` in the config)")))
}

fn read_corpus(cfg: &RunConfig) -> Result<Vec<StepRecord>, CliError> {
    let path = require(&cfg.corpus, "corpus")?;
    let corpus = load_corpus(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for (line, msg) in &corpus.malformed {
        log::warn!("{}:{line}: {msg}", path.display());
    }
    Ok(corpus.records)
}

fn clean_corpus(cfg: &RunConfig) -> Result<Vec<StepRecord>, CliError> {
    let report = clean(&read_corpus(cfg)?, PeriodicTable::default_table());
    for (r, why) in &report.rejected {
        log::warn!("skipping {} step {}: {why}", r.reaction_id, r.step_index);
    }
    Ok(report.accepted)
}

fn load_model(cfg: &RunConfig) -> Result<Model, CliError> {
    let path = require(&cfg.checkpoint, "checkpoint")?;
    Ok(load_checkpoint(path)?)
}

fn sampler<'a>(cfg: &RunConfig, model: &'a Model) -> FlowSampler<'a, Model> {
    FlowSampler {
        field: model,
        flow: cfg.flow(),
        samples: cfg.samples,
        post: cfg.post(),
        table: PeriodicTable::default_table(),
    }
}

fn reactant_state(model: &Model, smiles: &str) -> Result<BEMatrix, CliError> {
    let g = parse_smiles(smiles).map_err(|e| CliError::Data(format!("reactants: {e}")))?;
    let be = build_be(&[g], None).map_err(|e| CliError::Data(format!("reactants: {e}")))?;
    if be.n_atoms() > model.config.max_atoms {
        return Err(CliError::Usage(format!(
            "{} atoms with hydrogens exceeds the model's max_atoms {}",
            be.n_atoms(),
            model.config.max_atoms
        )));
    }
    Ok(be)
}

fn step_pairs(records: &[StepRecord]) -> Result<Vec<StepPair>, CliError> {
    records
        .iter()
        .map(|r| {
            let (x0, x1) = build_reaction(&r.rxn_smiles, None).map_err(|e| CliError::Data(e.to_string()))?;
            Ok(StepPair { id: format!("{}:{}", r.reaction_id, r.step_index), x0, x1 })
        })
        .collect()
}

pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let path = require(&cfg.corpus, "corpus")?;
    let corpus = load_corpus(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let report = clean(&corpus.records, PeriodicTable::default_table());
    let dir = out_dir(cfg, "beflow-validate")?;
    write(&dir.join("accepted.tsv"), &write_corpus(&report.accepted))?;
    let mut rej = String::from("reaction_id\tstep_index\tline\treason\tdetail\trxn_smiles\n");
    for (line, msg) in &corpus.malformed {
        let _ = writeln!(rej, "\t\t{line}\tmalformed\t{msg}\t");
    }
    for (r, why) in &report.rejected {
        let _ = writeln!(rej, "{}\t{}\t{}\t{}\t{why}\t{}", r.reaction_id, r.step_index, r.line, why.kind(), r.rxn_smiles);
    }
    write(&dir.join("rejected.tsv"), &rej)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "records\t{}", corpus.records.len());
    let _ = writeln!(summary, "malformed\t{}", corpus.malformed.len());
    let _ = writeln!(summary, "accepted\t{}", report.accepted.len());
    let _ = writeln!(summary, "rejected\t{}", report.rejected.len());
    for (kind, n) in report.counts() {
        let _ = writeln!(summary, "rejected.{kind}\t{n}");
    }
    write(&dir.join("summary.tsv"), &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let records = clean_corpus(cfg)?;
    let [tr, va, te] = split(&records, [cfg.train_ratio, cfg.val_ratio, cfg.test_ratio], cfg.split_seed)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let dir = out_dir(cfg, "beflow-train")?;
    write(&dir.join("train.tsv"), &write_corpus(&tr))?;
    write(&dir.join("val.tsv"), &write_corpus(&va))?;
    write(&dir.join("test.tsv"), &write_corpus(&te))?;
    let train_pairs = step_pairs(&tr)?;
    let val_pairs = step_pairs(&va)?;
    let table = PeriodicTable::default_table();
    let mut model = Model::new(cfg.model(), &cfg.flow(), table)?;
    let eval_cfg = RunConfig { samples: cfg.eval_samples, ..cfg.clone() };
    let mut validate = |m: &Model| -> f64 {
        let s = sampler(&eval_cfg, m);
        let hits = val_pairs
            .iter()
            .filter(|p| {
                let want = state_smiles(&p.x1, table);
                want.is_some() && s.sample_step(&p.x0).top().map(|o| Some(&o.product) == want.as_ref()) == Some(true)
            })
            .count();
        hits as f64 / val_pairs.len().max(1) as f64
    };
    let mut log = Vec::new();
    let result = fit(
        &mut model,
        &train_pairs,
        &cfg.flow(),
        &cfg.train(),
        if val_pairs.is_empty() { None } else { Some(&mut validate) },
        Some(&mut log),
    );
    write(&dir.join("metrics.jsonl"), &String::from_utf8_lossy(&log))?;
    let report = result?;
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&model, &ckpt)?;
    let tail = report.losses.last().copied().unwrap_or(f64::NAN);
    println!("trained {} steps on {} pairs, final loss {tail:.6}", report.losses.len(), train_pairs.len());
    if let Some((step, acc)) = report.best {
        println!("best validation top-1 {acc:.4} at step {step}");
    }
    println!("checkpoint {}", ckpt.display());
    Ok(())
}

pub fn sample(cfg: &RunConfig, reactants: &str) -> Result<(), CliError> {
    let model = load_model(cfg)?;
    let state = reactant_state(&model, reactants)?;
    let dist = sampler(cfg, &model).sample_step(&state);
    let mut text = String::new();
    for (k, o) in dist.outcomes.iter().enumerate() {
        let _ = writeln!(text, "{}\t{}\t{}/{}", k + 1, o.product, o.frequency, dist.samples);
    }
    let _ = writeln!(text, "invalid\t{}/{}", dist.invalid, dist.samples);
    print!("{text}");
    if cfg.out_dir.is_some() {
        let dir = out_dir(cfg, "")?;
        write(&dir.join("outcomes.tsv"), &text)?;
    }
    Ok(())
}

pub fn search(cfg: &RunConfig, reactants: &str) -> Result<(), CliError> {
    if cfg.width == 0 || cfg.depth == 0 {
        return Err(CliError::Usage("width and depth must be at least 1".into()));
    }
    let model = load_model(cfg)?;
    let state = reactant_state(&model, reactants)?;
    let paths = beam_search(&sampler(cfg, &model), &state, cfg.width, cfg.depth);
    let text: String = paths.iter().enumerate().map(|(k, p)| p.render(k + 1)).collect();
    print!("{text}");
    if cfg.out_dir.is_some() {
        let dir = out_dir(cfg, "")?;
        write(&dir.join("pathways.txt"), &text)?;
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load_model(cfg)?;
    let records = clean_corpus(cfg)?;
    let table = PeriodicTable::default_table();
    let s = sampler(cfg, &model);
    let pairs = step_pairs(&records)?;
    let mut ranked = Vec::new();
    let mut refs = Vec::new();
    let mut preds = Vec::new();
    let mut dists = Vec::new();
    for p in &pairs {
        let raw = s.sample_all(&p.x0);
        for d in &raw {
            let m = p.x0.with_entries(d.matrix.clone()).map_err(|e| CliError::Data(e.to_string()))?;
            preds.push((p.x0.clone(), Prediction::Matrix(m)));
        }
        let dist = s.group(raw);
        ranked.push(dist.outcomes.iter().map(|o| o.product.clone()).collect::<Vec<_>>());
        refs.push(state_smiles(&p.x1, table).unwrap_or_default());
        dists.push(dist);
    }
    let topk_step = step_accuracy(&ranked, &refs, &cfg.ks).map_err(|e| CliError::Data(e.to_string()))?;
    let mut cases = Vec::new();
    for (_, steps) in group_pathways(&records) {
        let sp = step_pairs(&steps)?;
        let Some(first) = sp.first() else { continue };
        let reference = sp
            .iter()
            .filter_map(|p| {
                let a = state_smiles(&p.x0, table)?;
                let b = state_smiles(&p.x1, table)?;
                (a != b).then_some(b)
            })
            .collect();
        cases.push(PathwayCase { reactants: first.x0.clone(), steps: reference });
    }
    let topk_pathway = pathway_accuracy(&s, &cases, &cfg.ks, cfg.depth);
    let report = MetricsReport {
        topk_step,
        topk_pathway,
        failure_histogram: failure_histogram(&dists),
        ..MetricsReport::default()
    }
    .with_conservation(&conservation_rates(&preds, table));
    let dir = out_dir(cfg, "beflow-eval")?;
    write(&dir.join("report.txt"), &report.to_text())?;
    write(&dir.join("report.tsv"), &report.to_kv())?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn failures(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load_model(cfg)?;
    let records = clean_corpus(cfg)?;
    let s = sampler(cfg, &model);
    let mut counts: std::collections::BTreeMap<FailureMode, usize> =
        FailureMode::ALL.iter().map(|&m| (m, 0)).collect();
    for p in step_pairs(&records)? {
        for d in s.sample_all(&p.x0) {
            *counts.entry(d.failure).or_insert(0) += 1;
        }
    }
    let mut text = String::from("mode\tcount\n");
    for (m, c) in &counts {
        let _ = writeln!(text, "{}\t{c}", m.name());
    }
    let dir = out_dir(cfg, "beflow-failures")?;
    write(&dir.join("failures.tsv"), &text)?;
    print!("{text}");
    Ok(())
}
