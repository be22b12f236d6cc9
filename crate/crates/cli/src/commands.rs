//! Subcommand implementations.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use readlab_core::analysis::{feature_table, features_csv, FEATURE_SCHEMA_VERSION};
use readlab_core::consistency::{
    annotate_session, consistency_report, load_verdicts, merge_with_tiebreak, sample_pairs, system_clock,
    validate_pairs, MergeOutcome, PairSample, VerdictEntry,
};
use readlab_core::corpus::{load_dataset, Dataset, ReadabilityLabel};
use readlab_core::evalkit::{aggregate_developers, export_f1_distribution, f1_distribution_csv, DeveloperReport};
use readlab_core::generalist::{
    eval_feature_generalist_all, eval_llm_generalist_all, eval_optimal_oracle_all, OracleMode, PredictionRun,
};
use readlab_core::llm_gateway::{Backend, CachedGateway, Gateway};
use readlab_core::personalization::{
    build_personalized_prompt, eval_personalized, personalized_eval_set, select_shots, ShotSelectionAlgorithm,
};
use readlab_core::prompt::{prompt_hash, template_hash};
use serde::{Deserialize, Serialize};

use crate::output::{indexed_name, sanitize, Fingerprinted, OutDir, RunConfig};
use crate::{
    Command, ConsistencyCommand, Failure, FeaturesCommand, GeneralistMethod, ReportCommand, RunCommand, Settings,
    ShotsCommand, Ssa,
};

pub fn dispatch(command: &Command, settings: &Settings) -> Result<(), Failure> {
    match command {
        Command::Validate { dataset } => validate(dataset),
        Command::Features(FeaturesCommand::Export { dataset }) => features_export(dataset, settings),
        Command::Run(RunCommand::Generalist {
            dataset,
            method,
            oracle_exclusive,
        }) => run_generalist(
            dataset,
            *method,
            *oracle_exclusive || settings.oracle_exclusive,
            settings,
        ),
        Command::Run(RunCommand::Personalized { dataset, ssa }) => run_personalized(dataset, *ssa, settings),
        Command::Shots(ShotsCommand::Show {
            dataset,
            ssa,
            developer,
            prompts,
        }) => shots_show(dataset, *ssa, developer, *prompts, settings),
        Command::Consistency(c) => consistency(c, settings),
        Command::Report(ReportCommand::Aggregate { inputs }) => report_aggregate(inputs, settings),
    }
}

fn algorithm(ssa: Ssa) -> ShotSelectionAlgorithm {
    match ssa {
        Ssa::Hv => ShotSelectionAlgorithm::Hv,
        Ssa::Hvl => ShotSelectionAlgorithm::HvL,
        Ssa::R => ShotSelectionAlgorithm::R,
    }
}

fn dataset_config(command: &str, ds: &Dataset) -> RunConfig {
    RunConfig {
        dataset: Some(ds.name.clone()),
        dataset_digest: Some(ds.digest()),
        ..RunConfig::new(command)
    }
}

fn validate(path: &Path) -> Result<(), Failure> {
    let ds = load_dataset(path)?;
    let m = &ds.matrix;
    let density = if m.is_dense() {
        "dense".to_string()
    } else {
        format!(
            "sparse, {} of {} cells rated",
            m.rating_count(),
            m.snippet_count() * m.developer_count()
        )
    };
    println!(
        "{}: {}x{} {density}, {} ratings, {} granularity",
        ds.name,
        m.snippet_count(),
        m.developer_count(),
        m.rating_count(),
        serde_json::to_value(ds.granularity)
            .expect("granularity serializes")
            .as_str()
            .unwrap_or("?"),
    );
    println!("digest {}", ds.digest());
    Ok(())
}

fn features_export(path: &Path, settings: &Settings) -> Result<(), Failure> {
    let ds = load_dataset(path)?;
    let table = feature_table(&ds)?;
    let out = OutDir::new(&settings.out);
    let config = RunConfig {
        extra: Some(serde_json::json!({ "feature_schema": FEATURE_SCHEMA_VERSION })),
        ..dataset_config("features export", &ds)
    };
    out.write_json(
        "features/run-config.json",
        &Fingerprinted::new(&config, serde_json::json!({})),
    )?;
    let p = out.write("features/features.csv", &features_csv(&ds, &table))?;
    println!("wrote {} rows to {}", table.len(), p.display());
    Ok(())
}

/// Wraps a remote backend in an on-disk completion cache under the output directory.
fn build_gateway(settings: &Settings, ds: &Dataset, out: &OutDir) -> Result<Box<dyn Gateway>, Failure> {
    let gateway = settings.gateway.build(Some(ds))?;
    if settings.gateway.backend == Backend::RemoteHttp {
        let dir = out.path("cache")?;
        let cached = CachedGateway::on_disk(gateway, &dir)
            .map_err(|e| Failure::data(format!("cannot create cache {}: {e}", dir.display())))?;
        return Ok(Box::new(cached));
    }
    Ok(gateway)
}

fn write_runs(out: &OutDir, dir: &str, config: &RunConfig, runs: &[PredictionRun]) -> Result<(), Failure> {
    let run_digests: std::collections::BTreeSet<&str> = runs.iter().map(|r| r.config_digest.as_str()).collect();
    out.write_json(
        &format!("{dir}/run-config.json"),
        &Fingerprinted::new(config, serde_json::json!({ "run_config_digest": run_digests })),
    )?;
    let mut reports = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        out.write(
            &format!("{dir}/runs/{}", indexed_name(i, &run.developer_id, "json")),
            &run.to_json(),
        )?;
        let report = DeveloperReport::from_run(run);
        out.write(
            &format!("{dir}/reports/{}", indexed_name(i, &run.developer_id, "json")),
            &report.to_json(),
        )?;
        reports.push(report);
    }
    write_aggregate(out, dir, &reports)
}

fn write_aggregate(out: &OutDir, dir: &str, reports: &[DeveloperReport]) -> Result<(), Failure> {
    let table = aggregate_developers(reports)?;
    let csv = table.to_csv();
    out.write(&format!("{dir}/aggregate.csv"), &csv)?;
    for label in ReadabilityLabel::ALL {
        let rows = export_f1_distribution(reports, label)?;
        out.write(
            &format!("{dir}/f1-{}.csv", label.word().to_lowercase()),
            &f1_distribution_csv(&rows),
        )?;
    }
    let abstentions: usize = reports.iter().map(|r| r.abstention_count).sum();
    print!("{csv}");
    println!(
        "{} developers, {abstentions} abstentions; wrote {}",
        reports.len(),
        out.path(dir)?.display()
    );
    Ok(())
}

fn run_generalist(path: &Path, method: GeneralistMethod, exclusive: bool, settings: &Settings) -> Result<(), Failure> {
    let ds = load_dataset(path)?;
    let out = OutDir::new(&settings.out);
    let mut config = dataset_config("run generalist", &ds);
    let (dir, runs) = match method {
        GeneralistMethod::Feature => {
            let features = feature_table(&ds)?;
            config.method = Some("feature_model".into());
            config.seed = Some(settings.seed);
            config.hyperparams = Some(settings.hyperparams);
            config.extra = Some(serde_json::json!({ "feature_schema": FEATURE_SCHEMA_VERSION }));
            let runs =
                eval_feature_generalist_all(&ds, &features, &settings.hyperparams, settings.seed, settings.jobs)?;
            ("generalist-feature", runs)
        }
        GeneralistMethod::Llm => {
            config.method = Some("llm_zero_shot".into());
            config.gateway = Some(settings.gateway.clone());
            config.parse_retries = Some(settings.parse_retries);
            config.template_hash = Some(template_hash());
            let gateway = build_gateway(settings, &ds, &out)?;
            let runs = eval_llm_generalist_all(gateway.as_ref(), &ds, settings.parse_retries, settings.jobs)?;
            ("generalist-llm", runs)
        }
        GeneralistMethod::Oracle => {
            let mode = if exclusive {
                OracleMode::Exclusive
            } else {
                OracleMode::Inclusive
            };
            config.method = Some("optimal_oracle".into());
            config.oracle_mode = Some(mode);
            ("generalist-oracle", eval_optimal_oracle_all(&ds, mode)?)
        }
    };
    write_runs(&out, dir, &config, &runs)
}

fn run_personalized(path: &Path, ssa: Ssa, settings: &Settings) -> Result<(), Failure> {
    let ds = load_dataset(path)?;
    let out = OutDir::new(&settings.out);
    let algo = algorithm(ssa);
    let eval_set = personalized_eval_set(&ds.matrix, algo, settings.seed)?;
    let config = RunConfig {
        method: Some(format!("llm_personalized_{}", algo.name())),
        seed: Some(settings.seed),
        gateway: Some(settings.gateway.clone()),
        parse_retries: Some(settings.parse_retries),
        template_hash: Some(template_hash()),
        extra: Some(serde_json::json!({ "algorithm": algo, "eval_set": eval_set })),
        ..dataset_config("run personalized", &ds)
    };
    let gateway = build_gateway(settings, &ds, &out)?;
    let runs = eval_personalized(
        gateway.as_ref(),
        &ds,
        algo,
        settings.seed,
        settings.parse_retries,
        settings.jobs,
    )?;
    write_runs(&out, &format!("personalized-{}", algo.name()), &config, &runs)
}

#[derive(Serialize)]
struct PromptDump {
    snippet_id: String,
    prompt_hash: String,
    prompt: String,
}

fn shots_show(path: &Path, ssa: Ssa, developer: &str, prompts: bool, settings: &Settings) -> Result<(), Failure> {
    let ds = load_dataset(path)?;
    let algo = algorithm(ssa);
    let set = select_shots(&ds.matrix, developer, algo, settings.seed)?;
    let value = if prompts {
        let mut dumps = Vec::new();
        for id in personalized_eval_set(&ds.matrix, algo, settings.seed)? {
            let target = ds.snippet(&id).expect("eval set ids come from the dataset");
            let prompt = build_personalized_prompt(&set, &ds, target)?;
            dumps.push(PromptDump {
                snippet_id: id,
                prompt_hash: prompt_hash(&prompt),
                prompt,
            });
        }
        serde_json::json!({ "shot_set": set, "template_hash": template_hash(), "prompts": dumps })
    } else {
        serde_json::to_value(&set).expect("shot set serializes")
    };
    println!("{}", serde_json::to_string_pretty(&value).expect("json"));
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PairsFile {
    digest: String,
    pairs: Vec<PairSample>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::data(format!("malformed {}: {e}", path.display())))
}

fn read_verdicts(path: &Path) -> Result<Vec<VerdictEntry>, Failure> {
    if !path.is_file() {
        return Err(Failure::data(format!("verdict file {} does not exist", path.display())));
    }
    Ok(load_verdicts(path)?)
}

fn consistency(command: &ConsistencyCommand, settings: &Settings) -> Result<(), Failure> {
    let out = OutDir::new(&settings.out);
    match command {
        ConsistencyCommand::Sample { dataset, pairs, unique } => {
            let ds = load_dataset(dataset)?;
            let sample = sample_pairs(&ds.matrix, *pairs, settings.seed, *unique)?;
            let config = RunConfig {
                seed: Some(settings.seed),
                extra: Some(serde_json::json!({ "pairs": pairs, "unique": unique })),
                ..dataset_config("consistency sample", &ds)
            };
            let p = out.write_json(
                "consistency/pairs.json",
                &Fingerprinted::new(&config, serde_json::json!({ "pairs": sample })),
            )?;
            println!("sampled {} pairs; wrote {}", sample.len(), p.display());
        }
        ConsistencyCommand::Annotate {
            dataset,
            pairs,
            annotator,
            only_pending,
        } => {
            let ds = load_dataset(dataset)?;
            let mut file: PairsFile = read_json(pairs)?;
            validate_pairs(&file.pairs, &ds.matrix)?;
            if let Some(merged) = only_pending {
                let merged: MergeOutcome = read_json(merged)?;
                file.pairs.retain(|p| merged.pending.contains(&p.pair_id));
                if file.pairs.is_empty() {
                    println!("no pending pairs");
                    return Ok(());
                }
            }
            let path = out.path(&format!("consistency/verdicts-{}.jsonl", sanitize(annotator)))?;
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Failure::data(e.to_string()))?;
            }
            let summary = annotate_session(
                &file.pairs,
                &ds,
                annotator,
                &path,
                io::stdin().lock(),
                io::stdout().lock(),
                &system_clock,
            )?;
            println!("{} remaining; verdicts in {}", summary.remaining, path.display());
        }
        ConsistencyCommand::Merge {
            first,
            second,
            tiebreak,
        } => {
            let a = read_verdicts(first)?;
            let b = read_verdicts(second)?;
            let t = match tiebreak {
                Some(p) => read_verdicts(p)?,
                None => Vec::new(),
            };
            let merged = merge_with_tiebreak(&a, &b, &t)?;
            let config = RunConfig::new("consistency merge");
            let p = out.write_json("consistency/merged.json", &Fingerprinted::new(&config, &merged))?;
            println!(
                "{} pairs, {} disagreements, {} pending; wrote {}",
                merged.records.len(),
                merged.disagreements.len(),
                merged.pending.len(),
                p.display()
            );
        }
        ConsistencyCommand::Report { merged } => {
            let merged: MergeOutcome = read_json(merged)?;
            let report = consistency_report(&merged)?;
            let config = RunConfig::new("consistency report");
            let p = out.write_json(
                "consistency/consistency-report.json",
                &Fingerprinted::new(&config, &report),
            )?;
            println!(
                "{} of {} pairs inconsistent ({:.1}%), {} disagreements; wrote {}",
                report.inconsistent,
                report.pairs,
                report.inconsistency_rate_percent,
                report.disagreement_count,
                p.display()
            );
        }
    }
    Ok(())
}

fn report_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| Failure::data(format!("cannot list {}: {e}", input.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

fn report_aggregate(inputs: &[PathBuf], settings: &Settings) -> Result<(), Failure> {
    let reports = report_files(inputs)?
        .iter()
        .map(|p| read_json::<DeveloperReport>(p))
        .collect::<Result<Vec<_>, _>>()?;
    let out = OutDir::new(&settings.out);
    let table = aggregate_developers(&reports)?;
    let config = RunConfig {
        extra: Some(serde_json::json!({ "report_config_digest": table.config_digest, "developers": table.developers })),
        ..RunConfig::new("report aggregate")
    };
    out.write_json(
        "aggregate/run-config.json",
        &Fingerprinted::new(&config, serde_json::json!({})),
    )?;
    write_aggregate(&out, "aggregate", &reports)
}
