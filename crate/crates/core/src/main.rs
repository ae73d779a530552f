use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tutorlens_core::curriculum::{parse_curriculum, validate_curriculum, Curriculum};
use tutorlens_core::evaluator::{evaluate_remote, Backend, DepthRubric, DEFAULT_RUBRIC_PROMPT};
use tutorlens_core::metrics::{aggregate_class, build_report, compare_weeks, EngagementReport};
use tutorlens_core::pipeline::{service, Pipeline, PipelineConfig};
use tutorlens_core::promptgen::{assemble_agent_config, DEFAULT_PEDAGOGY_TEMPLATE, DEFAULT_PERSONA_TEMPLATE};
use tutorlens_core::report::{render_class_report, render_student_report};
use tutorlens_core::synth::{generate_transcript, recovery_check, SynthSpec};
use tutorlens_core::transcript::{parse_transcript, SubmissionMeta, TranscriptFormat};

#[derive(Parser)]
#[command(name = "tutorlens", version, about = "Engagement analytics for student-agent chat transcripts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a curriculum file and list every violation.
    Validate {
        #[arg(long)]
        curriculum: PathBuf,
    },
    /// Evaluate one transcript and write assessment, metrics and report files.
    Evaluate(EvaluateArgs),
    /// Aggregate a week's reports into a class document.
    Aggregate(AggregateArgs),
    /// Write the agent configuration for a week.
    Promptgen {
        #[arg(long)]
        curriculum: PathBuf,
        #[arg(long)]
        week: String,
        #[arg(long)]
        persona_template: Option<PathBuf>,
        #[arg(long)]
        pedagogy_template: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the submission service until interrupted.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Generate a synthetic transcript with its planted report.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        curriculum: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also evaluate the transcript and compare against the plant.
        #[arg(long)]
        check: bool,
    },
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    curriculum: PathBuf,
    #[arg(long)]
    week: String,
    #[arg(long)]
    transcript: PathBuf,
    /// jsonl or text; guessed from the file extension when omitted.
    #[arg(long)]
    format: Option<TranscriptFormat>,
    #[arg(long, default_value = "student")]
    pseudonym: String,
    /// Defaults to the transcript file stem.
    #[arg(long)]
    submission_id: Option<String>,
    /// Unix seconds; also used as the document timestamp.
    #[arg(long, default_value_t = 0)]
    submitted_at: i64,
    /// Pipeline config supplying backend, remote settings and rubric.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "source")]
struct AggregateSource {
    /// Aggregate from the pipeline store named in this config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Aggregate report/v1 JSON files found in this directory.
    #[arg(long)]
    reports: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    #[command(flatten)]
    source: AggregateSource,
    #[arg(long)]
    week: String,
    /// Earlier week to compare against (directory mode only).
    #[arg(long)]
    previous_week: Option<String>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn load_curriculum(path: &Path) -> Result<Curriculum> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let c = parse_curriculum(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    let report = validate_curriculum(&c);
    if !report.is_valid() {
        for v in &report.violations {
            eprintln!("{}: {}", v.path, v.message);
        }
        bail!("{} is not a valid curriculum", path.display());
    }
    Ok(c)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn validate(curriculum: &Path) -> Result<()> {
    let bytes = fs::read(curriculum).with_context(|| format!("reading {}", curriculum.display()))?;
    let c = parse_curriculum(&bytes)?;
    let report = validate_curriculum(&c);
    for v in &report.violations {
        println!("{}: {}", v.path, v.message);
    }
    if !report.is_valid() {
        bail!("{} violation(s)", report.violations.len());
    }
    let subtopics: usize = c.weeks().map(|w| w.subtopics.len()).sum();
    println!(
        "ok: {} modules, {} weeks, {subtopics} subtopics",
        c.modules.len(),
        c.weeks().count()
    );
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let c = load_curriculum(&args.curriculum)?;
    let week = c.week(&args.week)?;
    let raw = fs::read(&args.transcript)
        .with_context(|| format!("reading {}", args.transcript.display()))?;
    let format = args.format.unwrap_or_else(|| {
        match args.transcript.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json") => TranscriptFormat::CanonicalJsonLines,
            _ => TranscriptFormat::PlainTextExport,
        }
    });
    let submission_id = match args.submission_id {
        Some(id) => id,
        None => args
            .transcript
            .file_stem()
            .and_then(|s| s.to_str())
            .context("cannot derive a submission id from the file name")?
            .to_string(),
    };
    let meta = SubmissionMeta {
        submission_id,
        student_pseudonym: args.pseudonym,
        week_id: args.week.clone(),
        submitted_at: args.submitted_at,
    };
    let t = parse_transcript(&raw, format, &meta)?;

    let cfg = args
        .config
        .as_deref()
        .map(PipelineConfig::load)
        .transpose()?;
    let assessment = match &cfg {
        Some(cfg) if cfg.backend == Backend::Remote => {
            let remote = cfg.remote.as_ref().context("config has no [remote] table")?;
            let prompt = match &cfg.rubric_prompt {
                Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                None => DEFAULT_RUBRIC_PROMPT.to_string(),
            };
            evaluate_remote(&t, week, remote, &prompt)?
        }
        Some(cfg) => cfg.rubric.evaluate(&t, week)?,
        None => DepthRubric::default().evaluate(&t, week)?,
    };
    let report = build_report(&t, &assessment, week.subtopics.len())?;
    let doc = render_student_report(&report, week, t.submitted_at)?;

    let stem = format!("{}-{}", week.week_id, t.submission_id);
    write(&args.out, &format!("assessment-{stem}.json"), &assessment.to_json())?;
    write(&args.out, &format!("report-{stem}.json"), &report.to_json())?;
    write(&args.out, &doc.file_name(), &doc.body)?;
    Ok(())
}

fn reports_in(dir: &Path, week: &str) -> Result<Vec<EngagementReport>> {
    let mut out = Vec::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let text = fs::read_to_string(&path)?;
        // other JSON documents (assessments, aggregates) are skipped
        if let Ok(r) = EngagementReport::from_json(&text) {
            if r.week_id == week {
                out.push(r);
            }
        }
    }
    out.sort_by(|a, b| a.submission_id.cmp(&b.submission_id));
    Ok(out)
}

fn aggregate(args: AggregateArgs) -> Result<()> {
    if let Some(config) = &args.source.config {
        let pipeline = Pipeline::open(PipelineConfig::load(config)?)?;
        let key = pipeline.run_class_aggregation(&args.week)?;
        println!("{key}");
        return Ok(());
    }
    let dir = args.source.reports.as_deref().expect("clap enforces one source");
    let current = aggregate_class(&reports_in(dir, &args.week)?)
        .with_context(|| format!("no reports for week {} in {}", args.week, dir.display()))?;
    let mut aggs = vec![current];
    let mut comparison = None;
    if let Some(prev) = &args.previous_week {
        let prev = aggregate_class(&reports_in(dir, prev)?)
            .with_context(|| format!("no reports for week {prev} in {}", dir.display()))?;
        comparison = Some(compare_weeks(&prev, &aggs[0])?);
        aggs.insert(0, prev);
    }
    let as_of = aggs.iter().map(|a| a.as_of).max().unwrap_or(0);
    for agg in &aggs {
        write(&args.out, &format!("aggregate-{}.json", agg.week_id), &agg.to_json())?;
    }
    if let Some(cmp) = &comparison {
        let [cov, depth, turns] = cmp.rendered();
        eprintln!("coverage {cov}, depth {depth}, turn length {turns}");
    }
    let doc = render_class_report(&aggs, comparison.as_ref(), as_of)?;
    write(&args.out, &doc.file_name(), &doc.body)
}

fn read_template(path: Option<&Path>, default: &str) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(default.to_string()),
    }
}

fn synth(spec: &Path, curriculum: &Path, out: &Path, check: bool) -> Result<()> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let spec: SynthSpec = toml::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
    let c = load_curriculum(curriculum)?;
    let week = c.week(&spec.week_id)?;
    let generated = generate_transcript(&spec, week)?;
    let id = &generated.transcript.submission_id;
    write(out, &format!("{id}.jsonl"), &generated.transcript.to_jsonl())?;
    write(out, &format!("{id}.planted.json"), &generated.planted.to_json())?;
    if check {
        let r = recovery_check(&spec, week)?;
        println!(
            "coverage delta {}, depth delta {:?}, turn length delta {:?}",
            r.coverage_delta, r.depth_delta, r.turn_length_delta
        );
        if !r.within_contract() {
            bail!("recovered metrics differ from the plant: {:?}", r.depth_mismatches);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { curriculum } => validate(&curriculum),
        Command::Evaluate(args) => evaluate(args),
        Command::Aggregate(args) => aggregate(args),
        Command::Promptgen {
            curriculum,
            week,
            persona_template,
            pedagogy_template,
            out,
        } => {
            let c = load_curriculum(&curriculum)?;
            let persona = read_template(persona_template.as_deref(), DEFAULT_PERSONA_TEMPLATE)?;
            let pedagogy = read_template(pedagogy_template.as_deref(), DEFAULT_PEDAGOGY_TEMPLATE)?;
            let cfg = assemble_agent_config(&c, &week, &persona, &pedagogy)?;
            write(&out, &format!("agent-config-{week}.txt"), &cfg.to_file())?;
            write(&out, &format!("starter-prompts-{week}.json"), &cfg.starters_json())
        }
        Command::Serve { config, port } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(p) = port {
                cfg.port = p;
            }
            service::run(Pipeline::open(cfg)?)?;
            Ok(())
        }
        Command::Synth {
            spec,
            curriculum,
            out,
            check,
        } => synth(&spec, &curriculum, &out, check),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve { .. }) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
