//! Subcommand implementations.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sepsis_core::cohort::{Channel, InclusionVerdict, ParseReport};
use sepsis_core::config::RunConfig;
use sepsis_core::ensemble::{base_seed, fit_stacked, save_ensemble, GroupedRows};
use sepsis_core::eval::{
    ablate_features, auc, cell_seed, rank_features, run_benchmark, write_roc_csv, CellOutcome, DatasetSizes,
};
use sepsis_core::features::{Split, Task};
use sepsis_core::gold::{sirs_count, BandTables, Category, RuleScore};
use sepsis_core::models::{fit_model, save_model, Labeled, ModelFile, ProbabilisticModel};
use sepsis_core::pipeline::{load_cohort, CohortSummary, PreparedCohort};
use sepsis_core::synth::{generate_cohort, SynthConfig};
use sepsis_core::{Error, Result};

use crate::run::{self, Manifest, RunDir};

const DEFAULT_OUT: &str = "runs";
use crate::{CellArgs, Cli, Command, Inputs, Trainable};

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} file not found")),
        ))
    }
}

/// Effective run configuration: the config file (or defaults), then the seed
/// override and any input paths given on the command line.
fn run_config(cli: &Cli, inputs: Option<&Inputs>) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(p) => {
            require_file(p, "configuration")?;
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(i) = inputs {
        if i.vitals.is_some() {
            config.paths.vitals = i.vitals.clone();
        }
        if i.annotations.is_some() {
            config.paths.annotations = i.annotations.clone();
        }
        if i.bands.is_some() {
            config.paths.bands = i.bands.clone();
        }
        let vitals = config
            .paths
            .vitals
            .as_deref()
            .ok_or_else(|| Error::Config("no vitals file given (--vitals or paths.vitals)".into()))?;
        require_file(vitals, "vitals")?;
        if let Some(a) = &config.paths.annotations {
            require_file(a, "annotations")?;
        }
        if let Some(b) = &config.paths.bands {
            require_file(b, "band table")?;
        }
    }
    config.validate()?;
    Ok(config)
}

fn load(config: &RunConfig) -> Result<(PreparedCohort, ParseReport, Option<ParseReport>)> {
    let bands = match &config.paths.bands {
        Some(p) => BandTables::load(p)?,
        None => BandTables::standard().clone(),
    };
    let vitals = config.paths.vitals.as_deref().expect("validated");
    let (cohort, vr, ar) = load_cohort(vitals, config.paths.annotations.as_deref(), &bands)?;
    if cohort.episodes.is_empty() {
        return Err(Error::DegenerateDataset(format!("{} holds no episodes", vitals.display())));
    }
    Ok((cohort, vr, ar))
}

/// Opens the run directory under `--out` (or `SEPSIS_OUT`), else the
/// configured output path, else `runs`.
fn open_run(cli: &Cli, command: &Command, config_digest: &str, configured: Option<&Path>) -> Result<RunDir> {
    let name = match &cli.run {
        Some(n) => n.clone(),
        None => run::default_name(command.name(), config_digest, &format!("{command:?}")),
    };
    let root = cli
        .out
        .as_deref()
        .or(configured)
        .unwrap_or(Path::new(DEFAULT_OUT));
    run::create(root, &name, cli.force)
}

fn finish(run: RunDir, command: &Command, config: &RunConfig) -> Result<PathBuf> {
    run.finish(Manifest {
        command: command.name(),
        tool_version: env!("CARGO_PKG_VERSION"),
        arguments: format!("{command:?}"),
        seed: config.seed,
        config_digest: config.digest(),
        config,
    })
}

fn provenance(config: &RunConfig) -> Vec<String> {
    vec![format!("config_digest={}", config.digest()), format!("seed={}", config.seed)]
}

fn csv_file(run: &mut RunDir, name: &str, preamble: &[String]) -> Result<csv::Writer<File>> {
    let p = run.file(name);
    let mut f = File::create(&p).map_err(|e| Error::io(&p, e))?;
    for line in preamble {
        writeln!(f, "# {line}").map_err(|e| Error::io(&p, e))?;
    }
    Ok(csv::Writer::from_writer(f))
}

fn cells(config: &RunConfig, args: &CellArgs) -> Vec<(Task, Category)> {
    let tasks = args.task.map_or_else(|| config.tasks.clone(), |t| vec![t]);
    let cats = args.category.map_or_else(|| config.categories.clone(), |c| vec![c]);
    tasks
        .iter()
        .flat_map(|&t| cats.iter().map(move |&c| (t, c)))
        .collect()
}

pub fn execute(cli: &Cli, command: &Command) -> Result<PathBuf> {
    match command {
        Command::Synth {
            synth_config,
            septic,
            negatives,
        } => synth(cli, command, synth_config.as_deref(), *septic, *negatives),
        Command::Ingest(inputs) => ingest(cli, command, inputs),
        Command::Label(inputs) => label(cli, command, inputs),
        Command::Score(inputs) => score(cli, command, inputs),
        Command::Featurize { inputs, cell } => featurize(cli, command, inputs, cell),
        Command::Train { inputs, cell, model } => train(cli, command, inputs, cell, *model),
        Command::Evaluate(inputs) => evaluate(cli, command, inputs),
        Command::Rank(inputs) => {
            let config = run_config(cli, Some(inputs))?;
            let (cohort, _, _) = load(&config)?;
            let table = rank_features(&cohort, &config)?;
            let mut run = open_run(cli, command, &config.digest(), config.paths.output.as_deref())?;
            run.write("ranking.json", table.to_json()? + "\n")?;
            run.write("ranking.txt", table.to_text())?;
            run.write("config.toml", config.to_toml()?)?;
            finish(run, command, &config)
        }
        Command::Ablate { inputs, order } => {
            let mut config = run_config(cli, Some(inputs))?;
            if let Some(order) = order {
                config.features.order = order
                    .iter()
                    .map(|s| s.trim().parse::<Channel>())
                    .collect::<Result<Vec<_>>>()?;
                config.validate()?;
            }
            let (cohort, _, _) = load(&config)?;
            let table = ablate_features(&cohort, &config.ablation_order(), &config)?;
            let mut run = open_run(cli, command, &config.digest(), config.paths.output.as_deref())?;
            run.write("ablation.json", table.to_json()? + "\n")?;
            run.write("ablation.txt", table.to_text())?;
            run.write("config.toml", config.to_toml()?)?;
            finish(run, command, &config)
        }
    }
}

fn synth(
    cli: &Cli,
    command: &Command,
    path: Option<&Path>,
    septic: Option<usize>,
    negatives: Option<usize>,
) -> Result<PathBuf> {
    let mut config = match path {
        Some(p) => {
            require_file(p, "synth configuration")?;
            SynthConfig::load(p)?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(n) = septic {
        config.counts.sepsis = n;
        config.counts.severe_sepsis = n;
        config.counts.septic_shock = n;
    }
    if let Some(n) = negatives {
        config.counts.negative = n;
    }
    let cohort = generate_cohort(&config)?;
    let digest = config.digest();
    let mut run = open_run(cli, command, &digest, None)?;
    cohort.write(&run.path)?;
    for name in ["vitals.csv", "annotations.csv", "truth.csv"] {
        run.file(name);
    }
    run.write("synth.toml", config.to_toml()?)?;
    run.finish(Manifest {
        command: command.name(),
        tool_version: env!("CARGO_PKG_VERSION"),
        arguments: format!("{command:?}"),
        seed: config.seed,
        config_digest: digest,
        config: &config,
    })
}

#[derive(Serialize)]
struct EpisodeLine<'a> {
    episode_id: &'a str,
    age: f64,
    unit: &'a str,
    hours: Option<usize>,
    status: String,
}

#[derive(Serialize)]
struct IngestReport<'a> {
    config_digest: String,
    seed: u64,
    vitals: &'a ParseReport,
    annotations: Option<&'a ParseReport>,
    summary: CohortSummary,
    episodes: Vec<EpisodeLine<'a>>,
}

fn status(v: &InclusionVerdict) -> String {
    match v {
        InclusionVerdict::Included => "included".into(),
        InclusionVerdict::Excluded(r) => format!("excluded:{r}"),
    }
}

fn ingest(cli: &Cli, command: &Command, inputs: &Inputs) -> Result<PathBuf> {
    let config = run_config(cli, Some(inputs))?;
    let (cohort, vr, ar) = load(&config)?;
    let mut run = open_run(cli, command, &config.digest(), config.paths.output.as_deref())?;
    let summary = cohort.summary();
    let report = IngestReport {
        config_digest: config.digest(),
        seed: config.seed,
        vitals: &vr,
        annotations: ar.as_ref(),
        summary: summary.clone(),
        episodes: cohort
            .episodes
            .iter()
            .map(|e| EpisodeLine {
                episode_id: &e.episode.episode_id,
                age: e.episode.age,
                unit: &e.episode.unit,
                hours: e.grid.as_ref().map(|g| g.hours()),
                status: status(&e.verdict),
            })
            .collect(),
    };
    run.write_json("ingest.json", &report)?;

    let mut w = csv_file(&mut run, "hourly.csv", &provenance(&config))?;
    let mut header = vec!["episode_id".to_string(), "hour".to_string()];
    header.extend(Channel::ALL.iter().map(|c| c.name().to_string()));
    w.write_record(&header)?;
    for e in &cohort.episodes {
        let Some(g) = &e.grid else { continue };
        for h in 0..g.hours() {
            let mut rec = vec![g.episode_id.clone(), h.to_string()];
            rec.extend(Channel::ALL.iter().map(|c| g.get(h, *c).map_or(String::new(), |v| v.to_string())));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    run.write(
        "ingest.txt",
        format!(
            "episodes {}\nincluded {} (septic {}, severe sepsis {}, septic shock {}, non-septic {})\nexcluded: age {}, unit {}, missing vital {}, history {}\nrejected rows: vitals {}, annotations {}\n",
            summary.episodes,
            summary.included,
            summary.included_septic,
            summary.included_severe_sepsis,
            summary.included_septic_shock,
            summary.included_non_septic,
            summary.excluded_age,
            summary.excluded_unit,
            summary.excluded_missing_vital,
            summary.excluded_history,
            vr.errors.len(),
            ar.as_ref().map_or(0, |r| r.errors.len()),
        ),
    )?;
    run.write("config.toml", config.to_toml()?)?;
    finish(run, command, &config)
}

fn label(cli: &Cli, command: &Command, inputs: &Inputs) -> Result<PathBuf> {
    let config = run_config(cli, Some(inputs))?;
    let (cohort, _, _) = load(&config)?;
    let mut run = open_run(cli, command, &config.digest(), config.paths.output.as_deref())?;
    let mut w = csv_file(&mut run, "labels.csv", &provenance(&config))?;
    w.write_record([
        "episode_id",
        "hour",
        "sirs",
        "sepsis",
        "severe_sepsis",
        "septic_shock",
        "sofa",
        "qsofa",
        "mews",
    ])?;
    for e in cohort.included() {
        let (Some(g), Some(l)) = (&e.grid, &e.labeling) else { continue };
        for h in 0..g.hours() {
            let cells = g.hour(h);
            let mut rec = vec![
                g.episode_id.clone(),
                h.to_string(),
                sirs_count(cells, &cohort.bands).to_string(),
            ];
            rec.extend(Category::ALL.iter().map(|c| u8::from(l.is_positive(*c, h)).to_string()));
            rec.extend(RuleScore::ALL.iter().map(|r| r.score(cells, &cohort.bands).to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    run.write("config.toml", config.to_toml()?)?;
    finish(run, command, &config)
}

fn score(cli: &Cli, command: &Command, inputs: &Inputs) -> Result<PathBuf> {
    let config = run_config(cli, Some(inputs))?;
    let (cohort, _, _) = load(&config)?;
    let mut run = open_run(cli, command, &config.digest(), config.paths.output.as_deref())?;
    let mut w = csv_file(&mut run, "scores.csv", &provenance(&config))?;
    w.write_record(["episode_id", "hour", "sofa", "qsofa", "mews"])?;
    for e in cohort.included() {
        let Some(g) = &e.grid else { continue };
        for h in 0..g.hours() {
            let mut rec = vec![g.episode_id.clone(), h.to_string()];
            rec.extend(RuleScore::ALL.iter().map(|r| r.score(g.hour(h), &cohort.bands).to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    run.write("config.toml", config.to_toml()?)?;
    finish(run, command, &config)
}

fn featurize(cli: &Cli, command: &Command, inputs: &Inputs, args: &CellArgs) -> Result<PathBuf> {
    let config = run_config(cli, Some(inputs))?;
    let (cohort, _, _) = load(&config)?;
    let datasets = cells(&config, args)
        .into_iter()
        .map(|(t, c)| cohort.dataset(t, c, &config).map(|ds| (t, c, ds)))
        .collect::<Result<Vec<_>>>()?;
    let mut run = open_run(cli, command, &config.digest(), config.paths.output.as_deref())?;
    for (t, c, ds) in datasets {
        let name = format!("dataset_{t}_{c}.csv");
        let p = run.file(&name);
        let f = File::create(&p).map_err(|e| Error::io(&p, e))?;
        let mut pre = provenance(&config);
        pre.push(format!("task={t} category={c}"));
        ds.write_csv(f, &pre)?;
    }
    run.write("config.toml", config.to_toml()?)?;
    finish(run, command, &config)
}

#[derive(Serialize)]
struct TrainSummary {
    config_digest: String,
    seed: u64,
    cell_seed: u64,
    task: Task,
    category: Category,
    model: String,
    sizes: DatasetSizes,
    test_auc: Option<f64>,
}

fn train(cli: &Cli, command: &Command, inputs: &Inputs, args: &CellArgs, model: Trainable) -> Result<PathBuf> {
    let config = run_config(cli, Some(inputs))?;
    let task = args.task.unwrap_or(Task::Detection);
    let category = args.category.unwrap_or(Category::Sepsis);
    let (cohort, _, _) = load(&config)?;
    let ds = cohort.dataset(task, category, &config)?;
    let params = config.params_for(task, category)?;
    let seed = cell_seed(config.seed, task, category);
    let (tx, ty) = ds.matrix(Split::Train, None)?;
    let (vx, vy) = ds.matrix(Split::Val, None)?;
    let (sx, sy) = ds.matrix(Split::Test, None)?;
    let val = (!vy.is_empty()).then(|| Labeled::new(&vx, &vy));
    let train = Labeled::new(&tx, &ty);
    let digest = config.digest();

    let mut run;
    let probs = match model {
        Trainable::Single(kind) => {
            let m = fit_model(kind, &params, train, val, base_seed(seed, kind))?;
            let probs = m.predict_matrix(&sx);
            let file = ModelFile::new(m, base_seed(seed, kind), params.hyperparameters_json(kind))
                .with_config_digest(digest.clone());
            run = open_run(cli, command, &digest, config.paths.output.as_deref())?;
            save_model(&run.file("model.json"), &file)?;
            probs
        }
        Trainable::Stacked => {
            let groups: Vec<String> = ds
                .indices(Split::Train)
                .into_iter()
                .map(|i| ds.rows[i].features.episode_id.clone())
                .collect();
            let rows = GroupedRows {
                rows: train,
                groups: &groups,
            };
            let ens = fit_stacked(rows, val, &params, &config.stacking, seed)?;
            run = open_run(cli, command, &digest, config.paths.output.as_deref())?;
            save_ensemble(&run.file("ensemble"), &ens, seed, &params, Some(&digest))?;
            ens.predict_matrix(&sx)
        }
    };
    let summary = TrainSummary {
        config_digest: config.digest(),
        seed: config.seed,
        cell_seed: seed,
        task,
        category,
        model: model.name().to_string(),
        sizes: DatasetSizes::of(&ds),
        test_auc: auc(&probs, &sy).ok(),
    };
    run.write_json("train.json", &summary)?;
    run.write("config.toml", config.to_toml()?)?;
    finish(run, command, &config)
}

fn evaluate(cli: &Cli, command: &Command, inputs: &Inputs) -> Result<PathBuf> {
    let config = run_config(cli, Some(inputs))?;
    let (cohort, _, _) = load(&config)?;
    let report = run_benchmark(&cohort, &config)?;
    let mut run = open_run(cli, command, &config.digest(), config.paths.output.as_deref())?;
    run.write("report.json", report.to_json()? + "\n")?;
    run.write("report.txt", report.to_text())?;
    for cell in &report.cells {
        let CellOutcome::Ok { seed, .. } = &cell.outcome else { continue };
        for (model, points) in &cell.roc {
            let name = format!("roc_{}_{}_{model}.csv", cell.task, cell.category);
            let p = run.file(&name);
            let f = File::create(&p).map_err(|e| Error::io(&p, e))?;
            let pre = vec![
                format!("config_digest={}", report.config_digest),
                format!("seed={} cell_seed={seed}", config.seed),
                format!("task={} category={} model={model}", cell.task, cell.category),
            ];
            write_roc_csv(f, points, &pre)?;
        }
    }
    run.write("config.toml", config.to_toml()?)?;
    finish(run, command, &config)
}
