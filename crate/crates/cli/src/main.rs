use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use semgnn::evalkit::{EvalReport, SimilaritySource};
use semgnn::kge::EntityInit;
use semgnn::pipeline::{self, Layout, PipelineConfig, PipelineError, RunSetting};

#[derive(Parser)]
#[command(name = "semgnn", version, about = "Semantic GNN entity embeddings: generate, pretrain, partition, train, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic graph, ground truth and inductive split
    Gen(Common),
    /// TransE pretraining over semantic triples
    Pretrain(Common),
    /// HASP partition plan
    Partition(Common),
    /// Train the relation-aware GNN
    Train(Common),
    /// MAP@K evaluation
    Eval(Common),
    /// Nearest-neighbour EEL augmentation with frozen re-inference
    Augment(Common),
    /// Frozen-weight inference over the full graph
    Infer(Common),
    /// gen, pretrain, partition, train, eval and a manifest of hashes
    RunAll(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Kge,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    Transductive,
    Inductive,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; every module seed is derived from it
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// HASP partition count
    #[arg(long)]
    partitions: Option<usize>,
    /// Parallel training workers
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    entity_init: Option<InitArg>,
    /// Keep augmented EELs one-way from popular entities
    #[arg(long)]
    directed_augment: bool,
    /// Nearest neighbours per entity in augmentation
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.partitions {
            cfg.hasp.partitions = n;
        }
        if let Some(w) = self.workers {
            cfg.train.parallel_workers = w;
        }
        if let Some(i) = self.entity_init {
            cfg.features.entity_init = match i {
                InitArg::Kge => EntityInit::Kge,
                InitArg::Random => EntityInit::Random,
            };
        }
        if self.directed_augment {
            cfg.eval.directed_augment = true;
        }
        if let Some(k) = self.top_k {
            cfg.eval.top_k = k;
        }
        if let Some(s) = self.setting {
            cfg.eval.setting = match s {
                SettingArg::Transductive => RunSetting::Transductive,
                SettingArg::Inductive => RunSetting::Inductive,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_map10(report: &EvalReport) {
    for source in [SimilaritySource::HcSim, SimilaritySource::CoSim] {
        let cells: Vec<String> = ["0", "1", "2", "all"]
            .iter()
            .map(|g| match report.get(source, 10, g) {
                Some(v) => format!("{g}={v:.4}"),
                None => format!("{g}=null"),
            })
            .collect();
        println!("{} {source} MAP@10 {}", report.setting, cells.join(" "));
    }
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let (stage, common) = match &cli.command {
        Command::Gen(c) => ("gen", c),
        Command::Pretrain(c) => ("pretrain", c),
        Command::Partition(c) => ("partition", c),
        Command::Train(c) => ("train", c),
        Command::Eval(c) => ("eval", c),
        Command::Augment(c) => ("augment", c),
        Command::Infer(c) => ("infer", c),
        Command::RunAll(c) => ("run-all", c),
    };
    let cfg = common.config()?;
    let out = Layout::new(&common.out);
    log::info!("{stage}: config hash {}", cfg.hash());
    match stage {
        "gen" => pipeline::stage_gen(&cfg, &out),
        "pretrain" => pipeline::stage_pretrain(&cfg, &out),
        "partition" => pipeline::stage_partition(&cfg, &out),
        "train" => pipeline::stage_train(&cfg, &out),
        "eval" => pipeline::stage_eval(&cfg, &out, cfg.eval.setting).map(|r| print_map10(&r)),
        "augment" => pipeline::stage_augment(&cfg, &out).map(|s| {
            println!(
                "eels_before={} eels_after={} growth_factor={:.4}",
                s.eels_before, s.eels_after, s.growth_factor
            )
        }),
        "infer" => pipeline::stage_infer(&cfg, &out),
        _ => pipeline::run_all(&cfg, &out).map(|files| {
            println!("config_hash={} files={}", cfg.hash(), files.len());
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEMGNN_LOG", "info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} msg={:?}", e.kind(), msg);
            ExitCode::FAILURE
        }
    }
}
