use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use automiseg::ablation::AblationRegime;
use automiseg::backends::{BackendEndpoints, Backends, MockWorldSpec, ProtocolServer};
use automiseg::eval::{emit_plots, evaluate, read_results, write_results, write_synthetic_benchmark, DatasetManifest};
use automiseg::pipeline::{adapt, run_dataset, AdaptMode, Adaptation, AdaptationSettings, Sample};
use automiseg::search_space::{default_space, read_trial_log, write_trial_log, Configuration, Trial};
use automiseg::task::{load_task, TaskDefinition};

use crate::{CliError, Command, DataArgs, Mode, SearchArgs};

pub const TRIALS_FILE: &str = "trials.jsonl";
pub const BEST_CONFIG_FILE: &str = "best_config.json";
pub const CONFIG_FILE: &str = "config.json";
pub const ADAPTATION_FILE: &str = "adaptation.json";
pub const REPORT_FILE: &str = "report.json";

/// What `adapt` records besides the trial log.
#[derive(Debug, Serialize, Deserialize)]
pub struct AdaptationSummary {
    pub mode: AdaptMode,
    pub subset: Vec<String>,
    pub settings: AdaptationSettings,
    pub best_objective: Option<f64>,
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenBench { n, seed, out, mock_spec } => gen_bench(n, seed, &out, mock_spec.as_deref()),
        Command::Adapt { data, search, mode, out } => cmd_adapt(&data, &search, mode, &out),
        Command::Run {
            data,
            config,
            workers,
            out,
        } => cmd_run(&data, &config, workers, &out),
        Command::Eval {
            results,
            dataset,
            trials,
            adaptation,
            out,
        } => cmd_eval(&results, &dataset, trials, adaptation, &out),
        Command::Ablate {
            data,
            regime,
            config,
            search,
            out,
        } => cmd_ablate(&data, &regime, config.as_deref(), &search, &out),
        Command::ServeMock {
            addr,
            threads,
            mock_spec,
        } => serve_mock(&addr, threads, mock_spec.as_deref()),
    }
}

fn load_spec(path: Option<&Path>) -> Result<MockWorldSpec, CliError> {
    let Some(path) = path else {
        return Ok(MockWorldSpec::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let spec: MockWorldSpec =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    spec.validate().map_err(CliError::Usage)?;
    Ok(spec)
}

fn backends(args: &DataArgs) -> Result<Backends, CliError> {
    if args.backend == "mock" {
        return Ok(Backends::mock(load_spec(args.mock_spec.as_deref())?));
    }
    let endpoints = BackendEndpoints {
        base_url: args.backend.clone(),
        timeout: args.timeout,
        retries: args.retries,
    };
    endpoints.validate().map_err(CliError::Usage)?;
    Backends::wire(endpoints).map_err(CliError::runtime)
}

fn load_inputs(args: &DataArgs) -> Result<(DatasetManifest, Vec<Sample>, TaskDefinition), CliError> {
    let manifest = DatasetManifest::scan(&args.dataset).map_err(CliError::runtime)?;
    let samples = manifest.load_samples().map_err(CliError::runtime)?;
    let task = load_task(&args.task).map_err(CliError::runtime)?;
    Ok((manifest, samples, task))
}

fn settings(search: &SearchArgs, mode: Mode) -> Result<AdaptationSettings, CliError> {
    let s = AdaptationSettings {
        n_trials: search.trials,
        subset_size: search.subset,
        workers: search.workers,
        mode: match mode {
            Mode::Batch => AdaptMode::Batch,
            Mode::PerSample => AdaptMode::PerSample,
        },
        ..AdaptationSettings::seeded(search.seed)
    };
    s.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(s)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    text.push('\n');
    write(path, text)
}

fn write_config(path: &Path, config: &Configuration) -> Result<(), CliError> {
    write(path, config.to_json() + "\n")
}

fn read_config(path: &Path, task: &TaskDefinition) -> Result<Configuration, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Configuration::from_json(&text, &default_space(task.grounding_sentences().len()))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_trials(dir: &Path, trials: &[Trial]) -> Result<(), CliError> {
    write_trial_log(dir.join(TRIALS_FILE), trials).map_err(CliError::runtime)?;
    let mut timings = String::from("trial_id,wall_time_s\n");
    for t in trials {
        timings.push_str(&format!("{},{:.6}\n", t.id, t.wall_time));
    }
    write(&dir.join("timings.csv"), timings)
}

fn gen_bench(n: usize, seed: u64, out: &Path, mock_spec: Option<&Path>) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let spec = load_spec(mock_spec)?;
    let manifest = write_synthetic_benchmark(out, n, seed, &spec).map_err(CliError::runtime)?;
    println!("wrote {} samples and task.json to {}", manifest.len(), out.display());
    Ok(())
}

fn run_adaptation(
    data: &DataArgs,
    settings: &AdaptationSettings,
    samples: &[Sample],
    task: &TaskDefinition,
    out: &Path,
) -> Result<Adaptation, CliError> {
    let backends = backends(data)?;
    let adaptation = adapt(samples, task, settings, &backends).map_err(CliError::runtime)?;
    create_dir(out)?;
    let summary = match &adaptation {
        Adaptation::Batch { subset, best, trials } => {
            write_trials(out, trials)?;
            write_config(&out.join(BEST_CONFIG_FILE), best)?;
            let best_objective = trials.iter().map(|t| t.objective).fold(None, |m: Option<f64>, v| {
                Some(m.map_or(v, |m| m.max(v)))
            });
            println!(
                "best objective {:.4} after {} trials on {} samples",
                best_objective.unwrap_or(f64::NAN),
                trials.len(),
                subset.len()
            );
            AdaptationSummary {
                mode: settings.mode,
                subset: subset.clone(),
                settings: settings.clone(),
                best_objective,
            }
        }
        Adaptation::PerSample { runs } => {
            for run in runs {
                let dir = out.join("per_sample").join(&run.sample_id);
                create_dir(&dir)?;
                write_trials(&dir, &run.trials)?;
                write_config(&dir.join(BEST_CONFIG_FILE), &run.best)?;
            }
            println!("adapted {} samples independently", runs.len());
            AdaptationSummary {
                mode: settings.mode,
                subset: adaptation.subset_ids(),
                settings: settings.clone(),
                best_objective: None,
            }
        }
    };
    write_json(&out.join(ADAPTATION_FILE), &summary)?;
    Ok(adaptation)
}

fn cmd_adapt(data: &DataArgs, search: &SearchArgs, mode: Mode, out: &Path) -> Result<(), CliError> {
    let settings = settings(search, mode)?;
    let (_, samples, task) = load_inputs(data)?;
    if samples.is_empty() {
        return Err(CliError::Runtime(format!("no images found in {}", data.dataset.display())));
    }
    run_adaptation(data, &settings, &samples, &task, out)?;
    Ok(())
}

fn cmd_run(data: &DataArgs, config: &Path, workers: usize, out: &Path) -> Result<(), CliError> {
    if workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let (_, samples, task) = load_inputs(data)?;
    let config = read_config(config, &task)?;
    let backends = backends(data)?;
    let results = run_dataset(&samples, &task, &config, &backends, workers).map_err(CliError::runtime)?;
    create_dir(out)?;
    write_results(out, &results).map_err(CliError::runtime)?;
    write_config(&out.join(CONFIG_FILE), &config)?;
    let ok = results.iter().filter(|r| r.mask.is_some()).count();
    println!("segmented {ok} of {} samples", results.len());
    Ok(())
}

fn existing(explicit: Option<PathBuf>, fallback: PathBuf) -> Option<PathBuf> {
    explicit.or_else(|| fallback.is_file().then_some(fallback))
}

fn cmd_eval(
    results_dir: &Path,
    dataset: &Path,
    trials: Option<PathBuf>,
    adaptation: Option<PathBuf>,
    out: &Path,
) -> Result<(), CliError> {
    let results = read_results(results_dir).map_err(CliError::runtime)?;
    let truths = DatasetManifest::scan(dataset)
        .and_then(|m| m.load_truths())
        .map_err(CliError::runtime)?;
    let config_path = results_dir.join(CONFIG_FILE);
    let config = if config_path.is_file() {
        let text = fs::read_to_string(&config_path).map_err(CliError::runtime)?;
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", config_path.display())))?
    } else {
        Configuration::new()
    };
    let exclude = match existing(adaptation, results_dir.join(ADAPTATION_FILE)) {
        Some(path) => {
            let text = fs::read_to_string(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            let summary: AdaptationSummary =
                serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            Some(summary.subset.into_iter().collect::<BTreeSet<_>>())
        }
        None => None,
    };
    let report = evaluate(&results, &truths, &config, exclude.as_ref()).map_err(CliError::runtime)?;
    let trials = match existing(trials, results_dir.join(TRIALS_FILE)) {
        Some(path) => read_trial_log(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?,
        None => Vec::new(),
    };
    create_dir(out)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    emit_plots(&report, &trials, out).map_err(CliError::runtime)?;
    println!(
        "mean dice {:.4} (ok only {}), mean s_val {:.4}, pearson r {}, grounding failures {:.1}%",
        report.mean_dice,
        report.mean_dice_ok.map_or("n/a".into(), |d| format!("{d:.4}")),
        report.mean_s_val,
        report.pearson_r.map_or("n/a".into(), |r| format!("{r:.4}")),
        100.0 * report.grounding_failure_rate
    );
    Ok(())
}

fn cmd_ablate(
    data: &DataArgs,
    regime: &str,
    config: Option<&Path>,
    search: &SearchArgs,
    out: &Path,
) -> Result<(), CliError> {
    let regime: AblationRegime = regime.parse().map_err(CliError::Usage)?;
    let settings = settings(search, Mode::Batch)?;
    let (manifest, samples, task) = load_inputs(data)?;
    let space = default_space(task.grounding_sentences().len());
    create_dir(out)?;
    let optimal = match config {
        Some(path) => read_config(path, &task)?,
        None => {
            info!("no --config given, adapting first");
            match run_adaptation(data, &settings, &samples, &task, &out.join("adapt"))? {
                Adaptation::Batch { best, .. } => best,
                Adaptation::PerSample { .. } => unreachable!("ablation adapts in batch mode"),
            }
        }
    };
    let composed = regime.compose(&optimal, &space, search.seed);
    let backends = backends(data)?;
    let results = run_dataset(&samples, &task, &composed, &backends, search.workers).map_err(CliError::runtime)?;
    write_results(out, &results).map_err(CliError::runtime)?;
    write_config(&out.join(CONFIG_FILE), &composed)?;
    let truths = manifest.load_truths().map_err(CliError::runtime)?;
    if truths.len() == results.len() {
        let report = evaluate(&results, &truths, &composed, None).map_err(CliError::runtime)?;
        write_json(&out.join(REPORT_FILE), &report)?;
        println!("{regime}: mean dice {:.4}", report.mean_dice);
    } else {
        println!("{regime}: wrote {} results (no ground truth to score)", results.len());
    }
    Ok(())
}

fn serve_mock(addr: &str, threads: usize, mock_spec: Option<&Path>) -> Result<(), CliError> {
    let spec = load_spec(mock_spec)?;
    let server = ProtocolServer::serve_backends(addr, threads, Backends::mock(spec))
        .map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
    println!("serving mock backends on {}", server.base_url());
    server.join();
    Ok(())
}
