use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cafd::concepts::{
    aligner_r2, build_rcs, compute_cfr, extract_concepts_batch, fit_aligner, Aligner, ConceptBank,
    ConceptTable,
};
use cafd::evaluation::{compare, dbscan_substitute, fdr, FaultClustering, DEFAULT_BUDGETS};
use cafd::lrmodel::{importance, ClassWeight, Solver, TrainConfig};
use cafd::neighbors::{rank_by_datis, NeighborConfig};
use cafd::pipeline::{raw_test_features, raw_training_features, CafdConfig, CafdModel};
use cafd::synthgen::{generate, SynthConfig};
use cafd::uncertainty::{rank_by_metric, Metric};
use cafd::{load_bundle, save_bundle, DatasetBundle, RankedList};

#[derive(Parser)]
#[command(name = "cafd", version, about = "Concept-aware test input prioritization")]
struct Cli {
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bundle and its ground-truth fault clustering.
    Synth {
        /// JSON SynthConfig; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the latent-to-shared-space aligner.
    Align {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long, default_value_t = cafd::concepts::DEFAULT_ALIGNER_LAMBDA)]
        aligner_lambda: f64,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the representative concept set from training inputs.
    Rcs {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long)]
        aligner: PathBuf,
        #[arg(long, default_value_t = cafd::concepts::DEFAULT_M)]
        concepts_m: usize,
        /// Output directory (`rcs.tensor`, `rcs.csv`).
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill concept failure ratios of a representative set.
    Cfr {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long)]
        aligner: PathBuf,
        /// Directory holding `rcs.tensor` and `rcs.csv`.
        #[arg(long)]
        rcs: PathBuf,
        #[arg(long, default_value_t = cafd::concepts::DEFAULT_M)]
        concepts_m: usize,
        /// Output directory (`cfr.tensor`, `cfr.csv`).
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble standardized train and test feature matrices.
    Features {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long)]
        aligner: PathBuf,
        /// Directory holding `cfr.tensor` and `cfr.csv`.
        #[arg(long)]
        cfr: PathBuf,
        #[arg(long, default_value_t = cafd::concepts::DEFAULT_M)]
        concepts_m: usize,
        #[command(flatten)]
        neighbors: NeighborArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the full detector and save it to a model directory.
    Train {
        #[command(flatten)]
        bundle: BundleArg,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank test inputs with a saved (or freshly fitted) detector.
    Rank {
        #[command(flatten)]
        bundle: BundleArg,
        /// Model directory from `train`; fitted in memory when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Output CSV (`rank,input_id,score`).
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank test inputs with a baseline score.
    Baseline {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long, value_enum)]
        method: BaselineMethod,
        #[command(flatten)]
        neighbors: NeighborArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fault detection rate of a ranking at each budget.
    Fdr {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long)]
        ranking: PathBuf,
        #[command(flatten)]
        clusters: ClusterArgs,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BUDGETS)]
        budgets: Vec<f64>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare rankings across budgets with Wilcoxon tests.
    Compare {
        #[command(flatten)]
        bundle: BundleArg,
        /// `name=path`, repeatable.
        #[arg(long = "ranking", required = true, value_parser = parse_named)]
        rankings: Vec<(String, PathBuf)>,
        /// Method tested against the rest (default: the first ranking).
        #[arg(long)]
        primary: Option<String>,
        #[command(flatten)]
        clusters: ClusterArgs,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BUDGETS)]
        budgets: Vec<f64>,
        /// Output CSV; the text table always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coefficient magnitudes, odds ratios and RFE order of the detector.
    Importance {
        #[command(flatten)]
        bundle: BundleArg,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long, default_value_t = 0.1)]
        rfe_step: f64,
        /// Output JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wall-clock seconds to score and rank the whole test set.
    Bench {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long, value_enum, default_value_t = BenchMethod::Cafd)]
        method: BenchMethod,
        /// Model directory; CAFD is fitted (untimed) when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

#[derive(Args)]
struct BundleArg {
    /// Path to the bundle's manifest.json.
    #[arg(long)]
    bundle: PathBuf,
}

#[derive(Args, Clone, Copy)]
struct NeighborArgs {
    #[arg(long, default_value_t = cafd::neighbors::DEFAULT_K)]
    knn_k: usize,
    #[arg(long, default_value_t = cafd::neighbors::DEFAULT_TAU)]
    ned_tau: f64,
    #[arg(long, default_value_t = cafd::neighbors::DEFAULT_EPSILON)]
    datis_epsilon: f64,
}

impl NeighborArgs {
    fn config(&self) -> NeighborConfig {
        NeighborConfig {
            k: self.knn_k,
            tau: self.ned_tau,
            epsilon: self.datis_epsilon,
        }
    }
}

#[derive(Args, Clone, Copy)]
struct PipelineArgs {
    #[command(flatten)]
    neighbors: NeighborArgs,
    #[arg(long, default_value_t = cafd::concepts::DEFAULT_M)]
    concepts_m: usize,
    #[arg(long, default_value_t = cafd::concepts::DEFAULT_ALIGNER_LAMBDA)]
    aligner_lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    l2: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long, value_enum, default_value_t = WeightArg::Balanced)]
    class_weight: WeightArg,
    #[arg(long, value_enum, default_value_t = SolverArg::Lbfgs)]
    solver: SolverArg,
    /// Fit on at most this many evenly spaced training rows.
    #[arg(long)]
    max_train_rows: Option<usize>,
}

impl PipelineArgs {
    fn config(&self) -> CafdConfig {
        CafdConfig {
            neighbors: self.neighbors.config(),
            m: self.concepts_m,
            aligner_lambda: self.aligner_lambda,
            train: TrainConfig {
                lambda_l2: self.l2,
                tol: self.tol,
                max_iters: self.max_iters,
                class_weight: match self.class_weight {
                    WeightArg::Balanced => ClassWeight::Balanced,
                    WeightArg::None => ClassWeight::None,
                },
                solver: match self.solver {
                    SolverArg::Lbfgs => Solver::Lbfgs,
                    SolverArg::Newton => Solver::Newton,
                },
            },
            max_train_rows: self.max_train_rows,
        }
    }
}

#[derive(Args)]
struct ClusterArgs {
    /// Ground-truth clustering CSV (`input_id,cluster_id`).
    #[arg(long, required_unless_present = "dbscan_eps", conflicts_with = "dbscan_eps")]
    clusters: Option<PathBuf>,
    /// Cluster failing test latents with DBSCAN instead.
    #[arg(long)]
    dbscan_eps: Option<f64>,
    #[arg(long, default_value_t = 5, requires = "dbscan_eps")]
    dbscan_minpts: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Balanced,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Lbfgs,
    Newton,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineMethod {
    Deepgini,
    Vanilla,
    Margin,
    Datis,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchMethod {
    Cafd,
    Deepgini,
    Vanilla,
    Margin,
    Datis,
}

fn parse_named(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected name=path, got `{s}`")),
    }
}

fn load(args: &BundleArg) -> Result<DatasetBundle> {
    load_bundle(&args.bundle).with_context(|| format!("load bundle {}", args.bundle.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("create {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("write {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn vocabulary_assignments(
    bundle: &DatasetBundle,
    aligner: &Aligner,
    m: usize,
) -> Result<(ConceptBank, Vec<cafd::concepts::ConceptAssignment>)> {
    let vocabulary = ConceptBank::from_text_embeddings(bundle.concept_text.view())?;
    let assignments = extract_concepts_batch(bundle.train.latent.view(), aligner, &vocabulary, m)?;
    Ok((vocabulary, assignments))
}

fn load_clustering(args: &ClusterArgs, bundle: &DatasetBundle) -> Result<FaultClustering> {
    if let Some(path) = &args.clusters {
        let clustering = FaultClustering::read_csv(path)
            .with_context(|| format!("read clustering {}", path.display()))?;
        clustering.validate_against(&bundle.test)?;
        return Ok(clustering);
    }
    let eps = args.dbscan_eps.expect("clap enforces one clustering source");
    let failing: Vec<usize> = bundle
        .test
        .failures()
        .iter()
        .enumerate()
        .filter(|(_, f)| **f)
        .map(|(i, _)| i)
        .collect();
    let rows = bundle
        .test
        .latent
        .select(ndarray::Axis(0), &failing)
        .mapv(|v| v as f64);
    Ok(dbscan_substitute(rows.view(), &failing, eps, args.dbscan_minpts)?)
}

fn fit_or_load(bundle: &DatasetBundle, model: Option<&Path>, pipeline: &PipelineArgs) -> Result<CafdModel> {
    match model {
        Some(dir) => CafdModel::load(dir).with_context(|| format!("load model {}", dir.display())),
        None => Ok(CafdModel::fit(bundle, &pipeline.config())?),
    }
}

fn baseline(bundle: &DatasetBundle, method: BaselineMethod, neighbors: &NeighborArgs) -> Result<RankedList> {
    let ranking = match method {
        BaselineMethod::Deepgini => rank_by_metric(bundle, Metric::DeepGini)?,
        BaselineMethod::Vanilla => rank_by_metric(bundle, Metric::Vanilla)?,
        BaselineMethod::Margin => rank_by_metric(bundle, Metric::Margin)?,
        BaselineMethod::Datis => rank_by_datis(bundle, &neighbors.config())?,
    };
    Ok(ranking)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { config, seed, out } => {
            let mut cfg = match &config {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("read {}", path.display()))?;
                    serde_json::from_str::<SynthConfig>(&text)
                        .with_context(|| format!("parse {}", path.display()))?
                }
                None => SynthConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let (bundle, clustering) = generate(&cfg).context("generate")?;
            create_dir(&out)?;
            let manifest = save_bundle(&out, &bundle).context("write bundle")?;
            clustering.write_csv(out.join("clusters.csv")).context("write clustering")?;
            write_text(&out.join("synth_config.json"), &serde_json::to_string_pretty(&cfg)?)?;
            println!("{}", manifest.display());
        }
        Command::Align {
            bundle,
            aligner_lambda,
            out,
        } => {
            let bundle = load(&bundle)?;
            let clip = bundle
                .clip_img_train
                .as_ref()
                .context("bundle has no clip_img_train tensor")?;
            let aligner = fit_aligner(bundle.train.latent.view(), clip.view(), aligner_lambda)?;
            let r2 = aligner_r2(&aligner, bundle.train.latent.view(), clip.view())?;
            aligner.save_json(&out)?;
            println!("r2 {r2}");
        }
        Command::Rcs {
            bundle,
            aligner,
            concepts_m,
            out,
        } => {
            let bundle = load(&bundle)?;
            let aligner = Aligner::load_json(&aligner)?;
            let (vocabulary, assignments) = vocabulary_assignments(&bundle, &aligner, concepts_m)?;
            let table = build_rcs(&assignments, &vocabulary, &bundle.concept_names)?;
            create_dir(&out)?;
            table.save(&out, "rcs")?;
            println!("{} concepts", table.len());
        }
        Command::Cfr {
            bundle,
            aligner,
            rcs,
            concepts_m,
            out,
        } => {
            let bundle = load(&bundle)?;
            let aligner = Aligner::load_json(&aligner)?;
            let table = ConceptTable::load(&rcs, "rcs", concepts_m)?;
            let (_, assignments) = vocabulary_assignments(&bundle, &aligner, concepts_m)?;
            let table = compute_cfr(&table, &assignments, &bundle.train.failures())?;
            create_dir(&out)?;
            table.save(&out, "cfr")?;
            println!("{} concepts", table.len());
        }
        Command::Features {
            bundle,
            aligner,
            cfr,
            concepts_m,
            neighbors,
            out,
        } => {
            let bundle = load(&bundle)?;
            let aligner = Aligner::load_json(&aligner)?;
            let table = ConceptTable::load(&cfr, "cfr", concepts_m)?;
            let (_, assignments) = vocabulary_assignments(&bundle, &aligner, concepts_m)?;
            let config = neighbors.config();
            let train = raw_training_features(&bundle.train, bundle.num_classes, &assignments, &table, &config)?
                .standardize_fit()?;
            let stats = train.scaling.clone().expect("standardized");
            let test = raw_test_features(&bundle, &aligner, &table, &config)?.standardize_apply(&stats)?;
            create_dir(&out)?;
            train.save(&out, "train_features")?;
            test.save(&out, "test_features")?;
            println!("{} x {}", train.nrows(), train.ncols());
        }
        Command::Train { bundle, pipeline, out } => {
            let bundle = load(&bundle)?;
            let model = CafdModel::fit(&bundle, &pipeline.config())?;
            model.save(&out)?;
            eprintln!(
                "converged {} after {} iterations",
                model.model.converged, model.model.n_iters
            );
        }
        Command::Rank {
            bundle,
            model,
            pipeline,
            out,
        } => {
            let bundle = load(&bundle)?;
            let model = fit_or_load(&bundle, model.as_deref(), &pipeline).context("fit")?;
            model.rank(&bundle)?.write_csv(&out)?;
        }
        Command::Baseline {
            bundle,
            method,
            neighbors,
            out,
        } => {
            let bundle = load(&bundle)?;
            baseline(&bundle, method, &neighbors)?.write_csv(&out)?;
        }
        Command::Fdr {
            bundle,
            ranking,
            clusters,
            budgets,
            out,
        } => {
            let bundle = load(&bundle)?;
            let ranking = RankedList::read_csv(&ranking)
                .with_context(|| format!("read ranking {}", ranking.display()))?;
            let clustering = load_clustering(&clusters, &bundle)?;
            let mut text = String::from("budget,b,detected,total,fdr\n");
            for budget in budgets {
                let r = fdr(&ranking, &clustering, budget, bundle.n_test())?;
                text.push_str(&format!("{},{},{},{},{}\n", r.budget_fraction, r.b, r.detected, r.total, r.fdr));
            }
            emit(out.as_deref(), &text)?;
        }
        Command::Compare {
            bundle,
            rankings,
            primary,
            clusters,
            budgets,
            out,
        } => {
            let bundle = load(&bundle)?;
            let clustering = load_clustering(&clusters, &bundle)?;
            let mut loaded = Vec::with_capacity(rankings.len());
            for (name, path) in &rankings {
                let r = RankedList::read_csv(path).with_context(|| format!("read ranking {}", path.display()))?;
                loaded.push((name.clone(), r));
            }
            let primary = primary.unwrap_or_else(|| rankings[0].0.clone());
            let report = compare(&loaded, &primary, &clustering, &budgets, bundle.n_test())?;
            if let Some(path) = out {
                write_text(&path, &report.to_csv_string())?;
            }
            print!("{}", report.to_text_table());
        }
        Command::Importance {
            bundle,
            pipeline,
            rfe_step,
            out,
        } => {
            let bundle = load(&bundle)?;
            let config = pipeline.config();
            let (model, artifacts) = CafdModel::fit_with_artifacts(&bundle, &config).context("fit")?;
            let report = importance(
                &model.model,
                artifacts.features.standardized()?,
                &artifacts.failed,
                &config.train,
                rfe_step,
            )?;
            let labels = model.column_map.labels();
            let json = serde_json::json!({
                "features": labels,
                "coef_magnitude": report.coef_magnitude,
                "odds_ratio": report.odds_ratio,
                "rfe_order": report.rfe_order.iter().map(|&i| &labels[i]).collect::<Vec<_>>(),
            });
            emit(out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&json)?))?;
        }
        Command::Bench {
            bundle,
            method,
            model,
            pipeline,
        } => {
            let bundle = load(&bundle)?;
            let (label, seconds) = match method {
                BenchMethod::Cafd => {
                    let model = fit_or_load(&bundle, model.as_deref(), &pipeline).context("fit")?;
                    let start = Instant::now();
                    model.rank(&bundle)?;
                    ("CAFD", start.elapsed().as_secs_f64())
                }
                other => {
                    let (label, m) = match other {
                        BenchMethod::Deepgini => ("DeepGini", BaselineMethod::Deepgini),
                        BenchMethod::Vanilla => ("Vanilla", BaselineMethod::Vanilla),
                        BenchMethod::Margin => ("Margin", BaselineMethod::Margin),
                        _ => ("DATIS", BaselineMethod::Datis),
                    };
                    let start = Instant::now();
                    baseline(&bundle, m, &pipeline.neighbors)?;
                    (label, start.elapsed().as_secs_f64())
                }
            };
            println!("{label} {seconds:.2}");
        }
    }
    Ok(())
}

fn stage_name(command: &Command) -> &'static str {
    match command {
        Command::Synth { .. } => "synth",
        Command::Align { .. } => "align",
        Command::Rcs { .. } => "rcs",
        Command::Cfr { .. } => "cfr",
        Command::Features { .. } => "features",
        Command::Train { .. } => "train",
        Command::Rank { .. } => "rank",
        Command::Baseline { .. } => "baseline",
        Command::Fdr { .. } => "fdr",
        Command::Compare { .. } => "compare",
        Command::Importance { .. } => "importance",
        Command::Bench { .. } => "bench",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let stage = stage_name(&cli.command);
    match run(cli.command) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error [{stage}]: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_ranking_parser() {
        assert_eq!(parse_named("cafd=a.csv").unwrap(), ("cafd".into(), PathBuf::from("a.csv")));
        assert!(parse_named("cafd").is_err());
        assert!(parse_named("=x").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flag_is_rejected() {
        assert!(Cli::try_parse_from(["cafd", "baseline", "--bundle", "m.json", "--method", "deepgini", "--out", "r.csv", "--bogus"]).is_err());
        let budgets = match Cli::try_parse_from(["cafd", "fdr", "--bundle", "m", "--ranking", "r", "--clusters", "c"]).unwrap().command {
            Command::Fdr { budgets, .. } => budgets,
            _ => unreachable!(),
        };
        assert_eq!(budgets, DEFAULT_BUDGETS.to_vec());
    }
}
