use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use devminer::antipatterns::{flag_antipatterns, AntiPatternFlag};
use devminer::features::{bow_from_csv, bow_to_csv, quality_from_csv, quality_to_csv, ScriptCorpus};
use devminer::ingest::{apply_selection_criteria, ingest_repository, read_log_export, write_log_export, AliasMap, IngestOptions};
use devminer::labeling::{
    import_labels_file, label_commits, label_scripts, labels_jsonl_string, read_labels_jsonl, FileIssueStore, Ruleset,
};
use devminer::metrics::{metric_table, table_from_csv, table_to_csv, Dataset, MetricOptions};
use devminer::networks::{build_contribution_network, build_developer_network, GraphDump};
use devminer::pipeline::{
    run_pipeline, AtStage, FailureKind, FormatName, IngestSummary, PipelineConfig, PipelineError, Stage,
};
use devminer::predict::{build_feature_sets, compare_feature_sets, EvalReport};
use devminer::report::{read_survey, render_survey, tally_survey, Report};
use devminer::stats::{analyze_table, MetricAnalysis};
use devminer::synth::{generate, SynthOptions};

#[derive(Parser)]
#[command(name = "devminer", version, about = "Development-activity mining and defect prediction for IaC repositories")]
struct Cli {
    /// TOML configuration supplying defaults for every subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Git,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureKind {
    Bow,
    Quality,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    Dev,
    Contrib,
}

#[derive(Subcommand)]
enum Command {
    /// Read a repository or log export into the normalized commit stream.
    Ingest {
        path: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// IaC extension; repeat for several.
        #[arg(long = "iac-ext")]
        iac_ext: Vec<String>,
        #[arg(long)]
        alias_map: Option<PathBuf>,
        /// Also write the repository summary and selection verdict.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Label commits as defect-related and write one JSON label per line.
    Label {
        #[arg(long)]
        commits: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long = "import")]
        import: Option<PathBuf>,
        #[arg(long)]
        issues: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compute the activity metric table.
    Metrics {
        #[arg(long)]
        commits: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long = "iac-ext")]
        iac_ext: Vec<String>,
        /// Report raw instead of normalized edge betweenness.
        #[arg(long)]
        raw_betweenness: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Mann-Whitney, Cliff's delta and OMANOVA per metric.
    Analyze {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Extract baseline features from script texts.
    Features {
        #[arg(long, value_enum)]
        kind: FeatureKind,
        #[arg(long)]
        scripts: PathBuf,
        #[arg(long = "iac-ext")]
        iac_ext: Vec<String>,
        /// CSV `script,warnings` of precomputed lint warning counts.
        #[arg(long)]
        lint: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Cross-validate the learners on the three feature sets.
    Predict {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        bow: PathBuf,
        #[arg(long)]
        quality: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        tune: Option<Toggle>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Dump the developer or contribution network as JSON.
    Graph {
        #[arg(long, value_enum)]
        kind: GraphKind,
        #[arg(long)]
        commits: PathBuf,
        #[arg(long = "iac-ext")]
        iac_ext: Vec<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Flag anti-patterns in a metric table.
    Flag {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        max_developers: Option<usize>,
        #[arg(long)]
        max_minors: Option<usize>,
        #[arg(long)]
        min_highest_contrib: Option<f64>,
        #[arg(long)]
        disjointness_quantile: Option<f64>,
        #[arg(long)]
        unfocused_quantile: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Render the text and JSON report from stage artifacts.
    Report {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        flags: PathBuf,
        #[arg(long)]
        eval: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Text report destination; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run every stage from a configuration file.
    Run {
        config_file: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        tune: Option<Toggle>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Generate a synthetic repository with known developer structure.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 60)]
        scripts: usize,
        #[arg(long, default_value_t = 0)]
        violators: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long)]
        shuffle: bool,
    },
    /// Tally a `respondent,metric,likert` survey CSV.
    Survey {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn input_err(stage: Stage, path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::new(stage, FailureKind::Input, format!("{}: {e}", path.display()))
}

fn write_file(stage: Stage, path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| PipelineError::new(stage, FailureKind::Stage, e.to_string()))?;
    }
    fs::write(path, contents).map_err(|e| PipelineError::new(stage, FailureKind::Stage, format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn read_json<T: serde::de::DeserializeOwned>(stage: Stage, path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| input_err(stage, path, e))?;
    serde_json::from_str(&text).map_err(|e| input_err(stage, path, e))
}

fn open(stage: Stage, path: &Path) -> Result<fs::File, PipelineError> {
    fs::File::open(path).map_err(|e| input_err(stage, path, e))
}

fn matcher(cfg: &PipelineConfig, cli: &[String]) -> devminer::ingest::IacMatcher {
    if cli.is_empty() {
        cfg.iac()
    } else {
        devminer::ingest::IacMatcher::new(cli)
    }
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Ingest {
            path,
            format,
            iac_ext,
            alias_map,
            summary,
            output,
        } => {
            let format = match format {
                Some(Format::Git) => FormatName::Git,
                Some(Format::Jsonl) => FormatName::Jsonl,
                None => cfg.ingest.format,
            };
            let aliases = match alias_map.or(cfg.ingest.alias_map.clone()) {
                Some(p) => AliasMap::from_file(&p).at(Stage::Ingest)?,
                None => AliasMap::default(),
            };
            let opts = IngestOptions {
                iac: matcher(&cfg, &iac_ext),
                aliases,
                repo_id: None,
            };
            let s = ingest_repository(&path, format.into(), &opts).at(Stage::Ingest)?;
            let mut buf = Vec::new();
            write_log_export(&mut buf, &s.commits).at(Stage::Ingest)?;
            write_file(Stage::Ingest, &output, &String::from_utf8(buf).expect("json is utf-8"))?;
            if let Some(p) = summary {
                let brief = IngestSummary {
                    repo_id: s.repo_id.clone(),
                    commits: s.commits.len(),
                    total_files: s.total_files,
                    iac_files: s.iac_files,
                    commit_months: s.commit_months.clone(),
                    criteria: apply_selection_criteria(&s),
                };
                write_file(Stage::Ingest, &p, &json(&brief))?;
            }
        }
        Command::Label {
            commits,
            rules,
            import,
            issues,
            output,
        } => {
            let commits = read_log_export(&commits).at(Stage::Label)?;
            let ruleset = match rules.or(cfg.label.rules.clone()) {
                Some(p) => Ruleset::from_file(&p).at(Stage::Label)?,
                None => Ruleset::default(),
            };
            let store = match issues.or(cfg.label.issues.clone()) {
                Some(p) => FileIssueStore::from_file(&p).at(Stage::Label)?,
                None => FileIssueStore::default(),
            };
            let imported = match import.or(cfg.label.import.clone()) {
                Some(p) => import_labels_file(&p).at(Stage::Label)?,
                None => Vec::new(),
            };
            let labels = label_commits(&commits, &store, &ruleset, &imported).at(Stage::Label)?;
            write_file(Stage::Label, &output, &labels_jsonl_string(&labels))?;
        }
        Command::Metrics {
            commits,
            labels,
            iac_ext,
            raw_betweenness,
            output,
        } => {
            let iac = matcher(&cfg, &iac_ext);
            let commits = read_log_export(&commits).at(Stage::Metrics)?;
            let labels = read_labels_jsonl(&labels).at(Stage::Metrics)?;
            let classes = label_scripts(&labels, &commits, &iac).at(Stage::Metrics)?;
            let opts = MetricOptions {
                normalize_edge_betweenness: !raw_betweenness && cfg.ingest.normalize_edge_betweenness,
            };
            let table = metric_table(&Dataset { commits, classes, iac }, opts).at(Stage::Metrics)?;
            write_file(Stage::Metrics, &output, &table_to_csv(&table))?;
        }
        Command::Analyze { metrics, output } => {
            let table = table_from_csv(open(Stage::Analyze, &metrics)?).at(Stage::Analyze)?;
            let analysis = analyze_table(&table).at(Stage::Analyze)?;
            write_file(Stage::Analyze, &output, &json(&analysis))?;
        }
        Command::Features {
            kind,
            scripts,
            iac_ext,
            lint,
            output,
        } => {
            let iac = matcher(&cfg, &iac_ext);
            let mut corpus = ScriptCorpus::from_dir(&scripts, |p| iac.is_iac_script(p)).at(Stage::Features)?;
            if let Some(p) = lint.or(cfg.ingest.lint_warnings.clone()) {
                corpus.load_lint_warnings(open(Stage::Features, &p)?).at(Stage::Features)?;
            }
            let csv = match kind {
                FeatureKind::Bow => bow_to_csv(&corpus.bow_table()),
                FeatureKind::Quality => quality_to_csv(&corpus.quality_table()),
            };
            write_file(Stage::Features, &output, &csv)?;
        }
        Command::Predict {
            metrics,
            bow,
            quality,
            seed,
            tune,
            budget,
            repeats,
            folds,
            output,
        } => {
            let mut p = cfg.predict.clone();
            if let Some(s) = seed {
                p.seed = s;
            }
            if let Some(t) = tune {
                p.tune = matches!(t, Toggle::On);
            }
            p.budget = budget.unwrap_or(p.budget);
            p.repeats = repeats.unwrap_or(p.repeats);
            p.folds = folds.unwrap_or(p.folds);
            let mut check = cfg.clone();
            check.predict = p.clone();
            check.validate()?;
            let table = table_from_csv(open(Stage::Predict, &metrics)?).at(Stage::Predict)?;
            let bow = bow_from_csv(open(Stage::Predict, &bow)?).at(Stage::Predict)?;
            let quality = quality_from_csv(open(Stage::Predict, &quality)?).at(Stage::Predict)?;
            let sets = build_feature_sets(&table, &bow, &quality).at(Stage::Predict)?;
            let report = compare_feature_sets(&sets, &p.cv_options()).at(Stage::Predict)?;
            write_file(Stage::Predict, &output, &format!("{}\n", report.to_json()))?;
        }
        Command::Graph {
            kind,
            commits,
            iac_ext,
            output,
        } => {
            let iac = matcher(&cfg, &iac_ext);
            let commits = read_log_export(&commits).at(Stage::Metrics)?;
            let scripts = commits
                .iter()
                .flat_map(|c| c.changes.iter())
                .filter(|ch| iac.is_iac_script(&ch.path))
                .map(|ch| ch.path.clone())
                .collect();
            let dump = match kind {
                GraphKind::Dev => GraphDump::from(&build_developer_network(&commits, &scripts)),
                GraphKind::Contrib => GraphDump::from(&build_contribution_network(&commits, &scripts)),
            };
            write_file(Stage::Metrics, &output, &json(&dump))?;
        }
        Command::Flag {
            metrics,
            max_developers,
            max_minors,
            min_highest_contrib,
            disjointness_quantile,
            unfocused_quantile,
            output,
        } => {
            let mut t = cfg.thresholds;
            t.max_developers = max_developers.unwrap_or(t.max_developers);
            t.max_minors = max_minors.unwrap_or(t.max_minors);
            t.min_highest_contrib = min_highest_contrib.unwrap_or(t.min_highest_contrib);
            t.disjointness_quantile = disjointness_quantile.unwrap_or(t.disjointness_quantile);
            t.unfocused_quantile = unfocused_quantile.unwrap_or(t.unfocused_quantile);
            let table = table_from_csv(open(Stage::Report, &metrics)?).at(Stage::Report)?;
            let flags = flag_antipatterns(&table, &t).at(Stage::Report)?;
            write_file(Stage::Report, &output, &json(&flags))?;
        }
        Command::Report {
            stats,
            flags,
            eval,
            json: json_out,
            output,
        } => {
            let analysis: std::collections::BTreeMap<String, MetricAnalysis> = read_json(Stage::Report, &stats)?;
            let flags: Vec<AntiPatternFlag> = read_json(Stage::Report, &flags)?;
            let eval: Option<EvalReport> = eval.map(|p| read_json(Stage::Report, &p)).transpose()?;
            let report = Report { analysis, flags, eval };
            if let Some(p) = json_out {
                write_file(Stage::Report, &p, &format!("{}\n", report.to_json()))?;
            }
            match output {
                Some(p) => write_file(Stage::Report, &p, &report.to_text())?,
                None => print!("{}", report.to_text()),
            }
        }
        Command::Run {
            config_file,
            output_dir,
            seed,
            tune,
            budget,
        } => {
            let mut cfg = PipelineConfig::load(&config_file)?;
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            if let Some(s) = seed {
                cfg.predict.seed = s;
            }
            if let Some(t) = tune {
                cfg.predict.tune = matches!(t, Toggle::On);
            }
            cfg.predict.budget = budget.unwrap_or(cfg.predict.budget);
            let outcome = run_pipeline(&cfg)?;
            let mut stdout = std::io::stdout().lock();
            for p in outcome.written {
                let _ = writeln!(stdout, "wrote {}", p.display());
            }
        }
        Command::Synth {
            output,
            scripts,
            violators,
            seed,
            noise,
            shuffle,
        } => {
            if !(0.0..=1.0).contains(&noise) {
                return Err(PipelineError::new(Stage::Config, FailureKind::Validation, "noise must lie in [0, 1]"));
            }
            let repo = generate(&SynthOptions {
                scripts,
                violators,
                seed,
                label_noise: noise,
                shuffle_labels: shuffle,
                ..SynthOptions::default()
            });
            repo.write_to(&output)
                .map_err(|e| PipelineError::new(Stage::Config, FailureKind::Stage, e.to_string()))?;
        }
        Command::Survey { input, output } => {
            let tallies = tally_survey(&read_survey(open(Stage::Report, &input)?).at(Stage::Report)?);
            let text = render_survey(&tallies);
            match output {
                Some(p) => write_file(Stage::Report, &p, &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("devminer: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
