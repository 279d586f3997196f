use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use euleresg::analysis::{analyze_report, AnalysisResults};
use euleresg::catalog::Catalog;
use euleresg::config::Config;
use euleresg::eval::{evaluate, format_2dp, load_ground_truth, render_table, TableFormat};
use euleresg::gateway::ModelGateway;
use euleresg::ingest::{IngestOptions, ReportFormat};
use euleresg::service::chat::chat_answer;
use euleresg::service::store::Store;
use euleresg::service::{serve, AppState};
use euleresg::{Error, Result};

#[derive(Parser)]
#[command(name = "euleresg", version, about = "Analyze ESG reports against framework metric catalogs")]
struct Cli {
    /// key = value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Storage root (overrides storage.root)
    #[arg(long, global = true)]
    storage: Option<PathBuf>,
    /// Use the deterministic offline model backend
    #[arg(long, global = true)]
    mock_models: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, segment and index a report; prints its report id
    Ingest {
        file: PathBuf,
        #[arg(long)]
        format: Option<ReportFormat>,
        #[arg(long)]
        company: Option<String>,
        #[arg(long)]
        title: Option<String>,
    },
    /// Analyze an ingested report for the given sub-industries
    Analyze {
        report_id: String,
        /// Comma-separated sub-industry slugs
        #[arg(long, value_delimiter = ',', required = true)]
        slugs: Vec<String>,
        /// Overrides analysis.parallelism
        #[arg(long)]
        parallelism: Option<usize>,
        /// Results file (default: <storage>/results/<report_id>.json)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score results files against ground truth and print the accuracy table
    Evaluate {
        /// One or more results files followed by the ground-truth CSV
        #[arg(num_args = 2.., required = true, value_name = "RESULTS... GROUND_TRUTH")]
        files: Vec<PathBuf>,
        #[arg(long, default_value = "model")]
        label: String,
        #[arg(long, default_value = "text")]
        table: TableFormat,
        /// Evaluation JSON (default: next to the first results file, *.eval.json)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Ask questions about an ingested report, one per line
    Chat {
        report_id: String,
        /// Analysis results to answer metric-code questions from
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Print the loaded metric catalog as JSON
    Catalog,
}

struct Context {
    config: Config,
    catalog: Catalog,
    gateway: Arc<dyn ModelGateway>,
}

fn context(cli: &Cli) -> Result<Context> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = &cli.storage {
        config.storage_root = s.clone();
    }
    let catalog = Catalog::load(&config.catalog_path)?;
    let gateway = config.build_gateway(cli.mock_models)?;
    Ok(Context {
        config,
        catalog,
        gateway,
    })
}

fn read_results(path: &Path) -> Result<AnalysisResults> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&raw)?)
}

fn run(cli: Cli) -> Result<()> {
    let ctx = context(&cli)?;
    match cli.command {
        Command::Ingest {
            file,
            format,
            company,
            title,
        } => {
            let store = Store::open(&ctx.config.storage_root)?;
            let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
            let format = format.unwrap_or_else(|| ReportFormat::from_path(&file));
            let cache = store.load_embedding_cache();
            let pdf = euleresg::ingest::PdftotextExtractor::default();
            let outcome = store.ingest_bytes(
                &bytes,
                format,
                &IngestOptions { company, title },
                &pdf,
                ctx.gateway.as_ref(),
                &cache,
            )?;
            eprintln!(
                "{} ({}): {} pages, {} segments{}",
                outcome.company,
                outcome.title,
                outcome.pages,
                outcome.segments,
                if outcome.already_present { ", already stored" } else { "" }
            );
            println!("{}", outcome.report_id);
        }
        Command::Analyze {
            report_id,
            slugs,
            parallelism,
            out,
        } => {
            let store = Store::open(&ctx.config.storage_root)?;
            let doc = store.load_report(&report_id)?;
            let indexes = store.load_indexes(&report_id)?;
            let mut cfg = ctx.config.analysis;
            if let Some(p) = parallelism {
                if p == 0 {
                    return Err(Error::Invalid("--parallelism must be at least 1".into()));
                }
                cfg.parallelism = p;
            }
            let results = analyze_report(&ctx.catalog, &slugs, &doc.company, &indexes, ctx.gateway.as_ref(), &cfg)?;
            let path = match out {
                Some(p) => {
                    std::fs::write(&p, results.to_json_pretty()).map_err(|e| Error::io(&p, e))?;
                    p
                }
                None => store.save_results(&report_id, &results)?,
            };
            let degraded = results.assessments().filter(|(_, a)| a.degraded).count();
            if degraded > 0 {
                eprintln!("warning: {degraded} assessments degraded by model failures");
            }
            println!("{}", path.display());
            println!("runtime {:.3} s", results.runtime_ms as f64 / 1000.0);
        }
        Command::Evaluate {
            mut files,
            label,
            table,
            out,
        } => {
            let gt_path = files.pop().expect("clap requires two paths");
            let ground_truth = load_ground_truth(&gt_path)?;
            let results = files.iter().map(|p| read_results(p)).collect::<Result<Vec<_>>>()?;
            let report = evaluate(&ctx.catalog, &results, &ground_truth, &label)?;
            print!("{}", render_table(std::slice::from_ref(&report), table));
            println!("overall accuracy {}", format_2dp(report.overall_average));
            let out = out.unwrap_or_else(|| files[0].with_extension("eval.json"));
            let json = serde_json::to_string_pretty(&report)?;
            std::fs::write(&out, json).map_err(|e| Error::io(&out, e))?;
            eprintln!("wrote {}", out.display());
        }
        Command::Serve { addr } => {
            let state = AppState::new(ctx.config, ctx.catalog, ctx.gateway)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Invalid(e.to_string()))?;
            rt.block_on(serve(Arc::new(state), addr))?;
        }
        Command::Chat { report_id, results } => {
            let store = Store::open(&ctx.config.storage_root)?;
            let doc = store.load_report(&report_id)?;
            let indexes = store.load_indexes(&report_id)?;
            let results = results.as_deref().map(read_results).transpose()?;
            eprintln!("chatting about {} ({}); empty line or EOF quits", doc.company, doc.title);
            let stdin = std::io::stdin();
            let mut stdout = std::io::stdout();
            loop {
                eprint!("> ");
                let mut line = String::new();
                if stdin.lock().read_line(&mut line).map_err(|e| Error::io(Path::new("<stdin>"), e))? == 0 {
                    break;
                }
                let message = line.trim();
                if message.is_empty() {
                    break;
                }
                let answer = chat_answer(
                    message,
                    &ctx.catalog,
                    &indexes,
                    results.as_ref(),
                    ctx.gateway.as_ref(),
                    &ctx.config.analysis.retrieval,
                )?;
                writeln!(stdout, "{}", answer.text).ok();
                for c in &answer.citations {
                    writeln!(stdout, "  [{}] pages {}–{}", c.segment_id, c.page_start, c.page_end).ok();
                }
            }
        }
        Command::Catalog => println!("{}", ctx.catalog.to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
