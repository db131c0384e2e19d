//! The five subcommands: gen, validate, prompt, run, report.
//!
//! Outputs are never silently overwritten: every file write goes through
//! [`write_output`], which leaves identical files alone, and demands
//! `--force` before replacing differing ones. Exit codes: 0 success, 1
//! runtime failure, 2 usage error; `validate` additionally reserves 1 for
//! "the plan is invalid" and reports every failure as 2.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};

use planeval::blocksworld::{
    self, domain, generate_suite, InstanceSpec, SuiteEntry, SuiteManifest,
};
use planeval::orchestrator::{self, run_suite, TranscriptStore};
use planeval::pddl::{
    parse_domain, parse_plan, parse_problem, print_domain, print_problem, Domain, Plan, Problem,
};
use planeval::prompt::{
    backprompt, generation_prompt, verification_prompt, PromptBundle, TemplateSet,
};
use planeval::report::{render_report, summarize, ReportFormat};
use planeval::validator::{
    feedback_to_text, open_conditions, render_feedback, validate, FeedbackLevel,
};

use crate::config::LoadedConfig;
use crate::factory::CliAgentFactory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    None,
    Binary,
    #[value(name = "first_error")]
    FirstError,
    #[value(name = "open_conditions")]
    OpenConditions,
}

impl From<LevelArg> for FeedbackLevel {
    fn from(level: LevelArg) -> FeedbackLevel {
        match level {
            LevelArg::None => FeedbackLevel::None,
            LevelArg::Binary => FeedbackLevel::Binary,
            LevelArg::FirstError => FeedbackLevel::FirstError,
            LevelArg::OpenConditions => FeedbackLevel::OpenConditions,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Generation,
    Verification,
    Backprompt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Markdown,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(format: FormatArg) -> ReportFormat {
        match format {
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

/// Writes `bytes` to `path` unless an identical file is already there.
/// A differing file is an error without `force`.
fn write_output(path: &Path, bytes: &[u8], force: bool) -> anyhow::Result<()> {
    if path.exists() {
        let existing = std::fs::read(path)
            .with_context(|| format!("failed to read existing `{}`", path.display()))?;
        if existing == bytes {
            return Ok(());
        }
        if !force {
            bail!(
                "`{}` already exists with different content; pass --force to overwrite",
                path.display()
            );
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("failed to create `{}`", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("failed to write `{}`", path.display()))
}

fn read_file(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("failed to read `{}`", path.display()))
}

fn load_domain(path: &Path) -> anyhow::Result<Domain> {
    parse_domain(&read_file(path)?)
        .with_context(|| format!("failed to parse domain `{}`", path.display()))
}

fn load_problem(path: &Path, domain: &Domain) -> anyhow::Result<Problem> {
    parse_problem(&read_file(path)?, domain)
        .with_context(|| format!("failed to parse problem `{}`", path.display()))
}

fn load_plan(path: &Path, domain: &Domain, problem: &Problem) -> anyhow::Result<Plan> {
    parse_plan(&read_file(path)?, domain, problem)
        .with_context(|| format!("failed to parse plan `{}`", path.display()))
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Number of instances to generate
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    /// Blocks per instance
    #[arg(long, value_parser = clap::value_parser!(u64)
        .range(blocksworld::MIN_BLOCKS as u64..=blocksworld::MAX_BLOCKS as u64))]
    pub blocks: u64,
    /// Master seed for the suite
    #[arg(long)]
    pub seed: u64,
    /// Directory to write the suite into
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite differing existing files
    #[arg(long)]
    pub force: bool,
}

/// Writes `domain.pddl`, `problems/<id>.pddl`, and `manifest.json` under
/// `dir`, and returns the instance specs in suite order.
pub fn write_suite(
    dir: &Path,
    count: usize,
    n_blocks: usize,
    master_seed: u64,
    force: bool,
) -> anyhow::Result<Vec<InstanceSpec>> {
    let suite = generate_suite(count, n_blocks, master_seed)?;
    let domain = domain();
    write_output(&dir.join("domain.pddl"), print_domain(&domain).as_bytes(), force)?;
    let mut entries = Vec::with_capacity(suite.len());
    for (spec, problem) in &suite {
        let relative = format!("problems/{}.pddl", spec.id);
        write_output(&dir.join(&relative), print_problem(problem).as_bytes(), force)?;
        entries.push(SuiteEntry {
            id: spec.id.clone(),
            seed: spec.seed,
            n_blocks: spec.n_blocks,
            problem_file: relative,
        });
    }
    let manifest = SuiteManifest {
        n_blocks,
        count,
        master_seed,
        domain_file: "domain.pddl".to_owned(),
        instances: entries,
    };
    let json = serde_json::to_string_pretty(&manifest)? + "\n";
    write_output(&dir.join("manifest.json"), json.as_bytes(), force)?;
    Ok(suite.into_iter().map(|(spec, _)| spec).collect())
}

pub fn cmd_gen(args: &GenArgs) -> anyhow::Result<()> {
    let specs = write_suite(
        &args.out,
        args.count as usize,
        args.blocks as usize,
        args.seed,
        args.force,
    )?;
    println!(
        "generated {} instances of {} blocks under {}",
        specs.len(),
        args.blocks,
        args.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Domain file (PDDL)
    #[arg(long)]
    pub domain: PathBuf,
    /// Problem file (PDDL)
    #[arg(long)]
    pub problem: PathBuf,
    /// Plan file, one action per line
    #[arg(long)]
    pub plan: PathBuf,
    /// Feedback level for the printed diagnosis
    #[arg(long, value_enum, default_value = "first_error")]
    pub level: LevelArg,
    /// Emit a JSON object instead of plain text
    #[arg(long)]
    pub json: bool,
}

fn validate_inner(args: &ValidateArgs) -> anyhow::Result<(bool, String)> {
    let level = FeedbackLevel::from(args.level);
    let domain = load_domain(&args.domain)?;
    let problem = load_problem(&args.problem, &domain)?;
    let plan = load_plan(&args.plan, &domain, &problem)?;
    let result = validate(&domain, &problem, &plan)?;
    let open = match level {
        FeedbackLevel::OpenConditions => Some(open_conditions(&domain, &problem, &plan)?),
        _ => None,
    };
    let feedback = render_feedback(&result, open.as_ref(), level)?;
    Ok((result.valid, feedback_to_text(&feedback, &domain)))
}

/// Exit code 0 for a valid plan, 1 for an invalid one, 2 for any failure to
/// read, parse, or check the inputs.
pub fn cmd_validate(args: &ValidateArgs) -> ExitCode {
    match validate_inner(args) {
        Ok((valid, text)) => {
            if args.json {
                let level = FeedbackLevel::from(args.level);
                println!(
                    "{}",
                    serde_json::json!({
                        "valid": valid,
                        "level": level.as_str(),
                        "feedback": text,
                    })
                );
            } else if !text.is_empty() {
                println!("{text}");
            }
            if valid {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

#[derive(Args, Debug)]
pub struct PromptArgs {
    /// Which prompt to render
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Domain file (PDDL)
    #[arg(long)]
    pub domain: PathBuf,
    /// The problem being posed
    #[arg(long)]
    pub problem: PathBuf,
    /// One-shot example problem (generation prompts)
    #[arg(long, required_if_eq("kind", "generation"))]
    pub example_problem: Option<PathBuf>,
    /// One-shot example plan (generation prompts)
    #[arg(long, required_if_eq("kind", "generation"))]
    pub example_plan: Option<PathBuf>,
    /// Candidate plan (verification prompts)
    #[arg(long, required_if_eq("kind", "verification"))]
    pub plan: Option<PathBuf>,
    /// File holding the feedback text (backprompts); empty when omitted
    #[arg(long)]
    pub feedback: Option<PathBuf>,
    /// Directory holding template overrides
    #[arg(long)]
    pub template_dir: Option<PathBuf>,
    /// Directory to write system.txt and user.txt into
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite differing existing files
    #[arg(long)]
    pub force: bool,
}

fn render_prompt(args: &PromptArgs) -> anyhow::Result<(PromptBundle, String)> {
    let templates = match &args.template_dir {
        Some(dir) => TemplateSet::from_dir(dir)?,
        None => TemplateSet::builtin().clone(),
    };
    let domain = load_domain(&args.domain)?;
    let problem = load_problem(&args.problem, &domain)?;
    let bundle = match args.kind {
        KindArg::Generation => {
            let example_path = args.example_problem.as_ref().expect("required by clap");
            let example = load_problem(example_path, &domain)?;
            let plan_path = args.example_plan.as_ref().expect("required by clap");
            let plan = load_plan(plan_path, &domain, &example)?;
            generation_prompt(&templates, &domain, &example, &plan, &problem)?
        }
        KindArg::Verification => {
            let plan_path = args.plan.as_ref().expect("required by clap");
            let plan = load_plan(plan_path, &domain, &problem)?;
            verification_prompt(&templates, &domain, &problem, &plan)?
        }
        KindArg::Backprompt => {
            let feedback = match &args.feedback {
                Some(path) => read_file(path)?,
                None => String::new(),
            };
            backprompt(&templates, &domain, &problem, &feedback)?
        }
    };
    Ok((bundle, templates.version().to_owned()))
}

pub fn cmd_prompt(args: &PromptArgs) -> anyhow::Result<()> {
    let (bundle, version) = render_prompt(args)?;
    write_output(&args.out.join("system.txt"), bundle.system_text.as_bytes(), args.force)?;
    write_output(&args.out.join("user.txt"), bundle.user_text.as_bytes(), args.force)?;
    println!("template version: {version}");
    println!("prompt sha256: {}", bundle.sha256_hex());
    println!("wrote {}/system.txt and {0}/user.txt", args.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Experiment config file (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Worker thread override; defaults to the config's execution.parallelism
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Discard an output directory left by a different configuration
    #[arg(long)]
    pub force: bool,
}

/// The manifest pins what produced a run directory. A rerun with the same
/// manifest resumes; anything else must be forced.
fn run_manifest(loaded: &LoadedConfig, template_version: &str) -> serde_json::Value {
    serde_json::json!({
        "config": loaded.config,
        "template_version": template_version,
    })
}

fn check_run_dir(out_dir: &Path, manifest: &serde_json::Value, force: bool) -> anyhow::Result<()> {
    let manifest_path = out_dir.join("manifest.json");
    if manifest_path.exists() {
        let existing: serde_json::Value = serde_json::from_str(&read_file(&manifest_path)?)
            .with_context(|| format!("failed to parse `{}`", manifest_path.display()))?;
        if existing == *manifest {
            return Ok(());
        }
        if !force {
            bail!(
                "`{}` was produced by a different configuration; pass --force to discard it",
                out_dir.display()
            );
        }
    } else if out_dir.exists() && out_dir.read_dir()?.next().is_some() {
        if !force {
            bail!(
                "`{}` exists and is not a run directory; pass --force to discard it",
                out_dir.display()
            );
        }
    } else {
        return Ok(());
    }
    std::fs::remove_dir_all(out_dir)
        .with_context(|| format!("failed to clear `{}`", out_dir.display()))?;
    Ok(())
}

pub fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let loaded = LoadedConfig::load(&args.config)?;
    let templates = match loaded.template_dir() {
        Some(dir) => TemplateSet::from_dir(&dir)?,
        None => TemplateSet::builtin().clone(),
    };
    // Agent construction pulls the API key and checks script directories;
    // all of that must fail before the output directory is touched.
    let factory = CliAgentFactory::new(&loaded, templates.clone())?;

    let out_dir = loaded.out_dir();
    let manifest = run_manifest(&loaded, templates.version());
    check_run_dir(&out_dir, &manifest, args.force)?;

    let manifest_json = serde_json::to_string_pretty(&manifest)? + "\n";
    write_output(&out_dir.join("manifest.json"), manifest_json.as_bytes(), false)?;
    let suite = &loaded.config.suite;
    let specs = write_suite(
        &out_dir.join("suite"),
        suite.count,
        suite.n_blocks,
        suite.master_seed,
        false,
    )?;

    let store = TranscriptStore::open(&out_dir)?;
    let parallelism = args
        .parallelism
        .unwrap_or(loaded.config.execution.parallelism);
    let transcripts = run_suite(
        &domain(),
        &specs,
        &loaded.config.loop_config(),
        &templates,
        parallelism,
        &factory,
        &store,
    )?;

    let summary = summarize(&transcripts)?;
    let markdown = render_report(std::slice::from_ref(&summary), &[], ReportFormat::Markdown);
    let csv = render_report(std::slice::from_ref(&summary), &[], ReportFormat::Csv);
    write_output(&out_dir.join("report.md"), markdown.as_bytes(), args.force)?;
    write_output(&out_dir.join("report.csv"), csv.as_bytes(), args.force)?;

    println!(
        "run complete: {} instances, {} valid final plans",
        summary.instances, summary.valid_final
    );
    println!(
        "transcripts: {}",
        TranscriptStore::transcripts_path(&out_dir).display()
    );
    println!(
        "reports: {}/report.md, {0}/report.csv",
        out_dir.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directory holding transcripts.jsonl
    #[arg(long)]
    pub run: PathBuf,
    /// Output format
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: FormatArg,
    /// Write to a file instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite a differing existing output file
    #[arg(long)]
    pub force: bool,
}

pub fn cmd_report(args: &ReportArgs) -> anyhow::Result<()> {
    let path = TranscriptStore::transcripts_path(&args.run);
    if !path.exists() {
        bail!("no transcripts found at `{}`", path.display());
    }
    let transcripts = orchestrator::load_transcripts(&path)?;
    let summary = summarize(&transcripts)?;
    let rendered = render_report(
        std::slice::from_ref(&summary),
        &[],
        ReportFormat::from(args.format),
    );
    match &args.out {
        Some(out) => {
            write_output(out, rendered.as_bytes(), args.force)?;
            println!("wrote {}", out.display());
        }
        None => print!("{rendered}"),
    }
    Ok(())
}
