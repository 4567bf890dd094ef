//! Subcommands of the `covmap` binary. Each `cmd_*` function validates its
//! arguments, calls the library and writes an output directory with a
//! manifest.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use covmap::error::{Error, Result};
use covmap::geo::{
    extract_settlements, voronoi_assign, Grid, Settlement, SettlementRaster, StatAreaSet,
    ZoneRaster,
};
use covmap::io::config::{load_config, ConfigDocument};
use covmap::io::geojson::{load_areas, write_areas};
use covmap::io::output::OutputSet;
use covmap::io::raster::{load_raster, write_raster};
use covmap::io::tables::{
    load_bts_csv, load_covariates_csv, load_weights_csv, parse_metrics_csv, parse_tally_csv,
    write_aggregates_csv, write_bts_csv, write_covariates_csv, BtsTable,
};
use covmap::io::{fmt_num, read_text};
use covmap::mapping::{
    aggregate, best_server, classify_areas_by_bts_density, naive_specs, refine_weights,
    site_classes, weights_aug_voronoi, weights_bsa, weights_idw, weights_p2p, weights_voronoi,
    AreaCovariates, IdwParams, MissingPolicy, PixelWeights, Scheme, Statistic, WeightMatrix,
};
use covmap::propagation::{
    rss_field_strongest, AntennaSpec, EnvClass, LinkEnv, RssField, RssOptions,
};
use covmap::report::{boxplots_svg, build_report};
use covmap::simulation::round::{true_coverage, POVERTY};
use covmap::simulation::study::{round_seed, run_study, StudyResult};
use covmap::simulation::world::SyntheticWorld;

#[derive(Debug, Parser)]
#[command(
    name = "covmap",
    version,
    about = "Map mobile network metadata onto statistical areas"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the synthetic-country study and write per-round metrics, the
    /// tally and box plots.
    Simulate(SimulateArgs),
    /// Best-server coverage of every settlement pixel.
    Coverage(CoverageArgs),
    /// BTS-to-area weight matrix for one scheme.
    Weights(WeightsArgs),
    /// Area-level covariates from a weight matrix and BTS covariates.
    Aggregate(AggregateArgs),
    /// Summary tables and plots of a finished study.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// JSON configuration; keys not given take their defaults.
    #[arg(long)]
    pub config: PathBuf,
    /// Number of rounds [default: from the config].
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Master seed [default: from the config].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads [default: all cores]. Output does not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also write the round-0 world as input files (raster, BTS, areas,
    /// covariates, true area rates).
    #[arg(long)]
    pub snapshot: bool,
}

/// Inputs shared by `coverage` and `weights`.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// BTS CSV: `bts_id,x,y[,height_m,freq_mhz,power_dbm]`, meters, MHz, dBm.
    #[arg(long)]
    pub bts: PathBuf,
    /// GeoJSON FeatureCollection of statistical areas with `area_id`.
    #[arg(long)]
    pub areas: PathBuf,
    /// ESRI ASCII settlement raster in the same planar CRS (meters).
    #[arg(long)]
    pub raster: Option<PathBuf>,
    /// Guess technical specifications (30 m, 45 dBm, 2100/900 MHz) instead
    /// of reading them from the BTS file.
    #[arg(long)]
    pub naive: bool,
    /// Dead-link threshold in dBm.
    #[arg(long, default_value_t = covmap::propagation::DEFAULT_DEAD_THRESHOLD_DBM, allow_negative_numbers = true)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct WeightsArgs {
    /// Mapping scheme: p2p, voronoi, aug-voronoi, bsa or idw.
    #[arg(long, value_parser = parse_estimator)]
    pub scheme: Scheme,
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Auxiliary raster scaling each settlement pixel (bsa and idw only).
    #[arg(long)]
    pub aux: Option<PathBuf>,
    /// IDW exponent on |RSS| (idw only) [default: 2].
    #[arg(long)]
    pub s: Option<f64>,
    /// Strongest links kept per pixel (idw only) [default: 5].
    #[arg(long)]
    pub k: Option<u32>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AggregateArgs {
    /// Weight matrix CSV written by `weights`.
    #[arg(long)]
    pub weights: PathBuf,
    /// BTS covariates CSV: `bts_id,<name>...`, empty cells missing.
    #[arg(long)]
    pub covariates: PathBuf,
    /// Weighted statistic: mean or median.
    #[arg(long, default_value = "mean", value_parser = parse_statistic)]
    pub stat: Statistic,
    /// Fail on a missing covariate cell instead of renormalising.
    #[arg(long)]
    pub strict: bool,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    pub study: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_estimator(s: &str) -> std::result::Result<Scheme, String> {
    match s.parse::<Scheme>() {
        Ok(Scheme::Benchmark) | Err(_) => Err(format!(
            "`{s}` is not one of p2p, voronoi, aug-voronoi, bsa, idw"
        )),
        Ok(s) => Ok(s),
    }
}

fn parse_statistic(s: &str) -> std::result::Result<Statistic, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a).map(drop),
        Command::Coverage(a) => cmd_coverage(&a),
        Command::Weights(a) => cmd_weights(&a).map(drop),
        Command::Aggregate(a) => cmd_aggregate(&a).map(drop),
        Command::Report(a) => cmd_report(&a),
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let jobs = match jobs {
        Some(0) => return Err(Error::Config("--jobs must be at least 1".into())),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, usize::from),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Effective study configuration after command-line overrides.
pub fn simulate_config(args: &SimulateArgs) -> Result<ConfigDocument> {
    let mut doc = load_config(&args.config)?;
    if let Some(r) = args.rounds {
        doc.rounds = r;
    }
    if let Some(s) = args.seed {
        doc.seed = s;
    }
    doc.validate()?;
    Ok(doc)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<StudyResult> {
    let doc = simulate_config(args)?;
    let pool = pool(args.jobs)?;
    let study = pool.install(|| run_study(&doc))?;
    let mut out = OutputSet::new();
    out.add_config(&doc)?;
    out.add_study(&study)?;
    out.add("boxplots.svg", boxplots_svg(&study.records))?;
    if args.snapshot {
        pool.install(|| add_snapshot(&mut out, &doc))?;
    }
    out.save(&args.out)?;
    log::info!("{} rounds written to {}", study.rounds, args.out.display());
    Ok(study)
}

/// Round-0 world as input files of the real-data workflow.
fn add_snapshot(out: &mut OutputSet, doc: &ConfigDocument) -> Result<()> {
    let cfg = &doc.simulation;
    let grid = cfg.grid();
    let world = SyntheticWorld::generate(cfg, round_seed(doc.seed, 0))?;
    let zones = world.areas.zones(&grid)?;
    let opts = RssOptions {
        rx_height_m: cfg.rx_height_m,
        dead_threshold_dbm: doc.schemes.dead_threshold_dbm,
        ..RssOptions::default()
    };
    let truth = true_coverage(&world, &grid, &zones, &opts)?;
    out.add(
        "snapshot_settlements.asc",
        write_raster(&world.population.raster()),
    )?;
    out.add("snapshot_bts.csv", write_bts_csv(&world.network.specs))?;
    out.add(
        "snapshot_areas.geojson",
        write_areas(&world.areas, Some(&grid))?,
    )?;
    out.add(
        "snapshot_covariates.csv",
        write_covariates_csv(&truth.covariates),
    )?;
    let rates = AreaCovariates {
        names: vec![POVERTY.to_owned()],
        rows: truth
            .area_rates
            .into_iter()
            .map(|(a, v)| (a, vec![v]))
            .collect(),
    };
    out.add("snapshot_truth.csv", write_aggregates_csv(&rates))
}

/// Loaded inputs of the real-data workflow.
pub struct RealInputs {
    pub table: BtsTable,
    pub areas: StatAreaSet,
    pub raster: Option<SettlementRaster>,
}

impl RealInputs {
    pub fn load(a: &InputArgs) -> Result<Self> {
        Ok(RealInputs {
            table: load_bts_csv(&a.bts)?,
            areas: load_areas(&a.areas)?,
            raster: a.raster.as_deref().map(load_raster).transpose()?,
        })
    }

    fn raster(&self, why: &str) -> Result<&SettlementRaster> {
        self.raster
            .as_ref()
            .ok_or_else(|| Error::Config(format!("--raster is required {why}")))
    }

    /// Antenna specifications and the per-site environment class, from the
    /// file or synthesised, with env classes from site density.
    pub fn specs(
        &self,
        naive: bool,
        grid: &Grid,
        profile: &covmap::mapping::NaiveProfile,
    ) -> Result<(Vec<AntennaSpec>, Vec<EnvClass>)> {
        let sites = self.table.sites();
        let classes = classify_areas_by_bts_density(&self.areas, &sites, Some(grid))?;
        let envs = site_classes(&sites, &self.areas, &classes, Some(grid))?;
        let specs = if naive {
            naive_specs(&sites, &envs, profile)?
        } else if self.table.needs_synthesis() {
            return Err(Error::Config(
                "the BTS file has no technical columns; pass --naive to synthesise them".into(),
            ));
        } else {
            self.table.specs()?
        };
        Ok((specs, envs))
    }
}

fn settlement_field(
    specs: &[AntennaSpec],
    envs: &[EnvClass],
    settlements: &[Settlement],
    threshold: f64,
    keep: usize,
) -> Result<RssField> {
    let points: Vec<_> = settlements.iter().map(Settlement::rx_point).collect();
    let opts = RssOptions {
        dead_threshold_dbm: threshold,
        ..RssOptions::default()
    };
    rss_field_strongest(specs, &points, LinkEnv::Transmitter(envs), &opts, keep)
}

pub fn cmd_coverage(args: &CoverageArgs) -> Result<()> {
    let inputs = RealInputs::load(&args.inputs)?;
    let raster = inputs.raster("for coverage")?;
    let doc = ConfigDocument::default();
    let (specs, envs) = inputs.specs(args.inputs.naive, &raster.grid, &doc.naive)?;
    let settlements = extract_settlements(raster);
    let field = settlement_field(&specs, &envs, &settlements, args.inputs.threshold, 1)?;
    let served = best_server(&field);
    let mut csv = String::from("pixel,x,y,bts_id,rss_dbm\n");
    for (i, s) in settlements.iter().enumerate() {
        let (bts, rss) = match field.strongest_live(i, 1).first() {
            Some(&(j, v)) => (field.bts_ids()[j].to_string(), fmt_num(v)),
            None => (String::new(), String::new()),
        };
        csv.push_str(&format!(
            "{},{},{},{bts},{rss}\n",
            s.pixel,
            fmt_num(s.x),
            fmt_num(s.y)
        ));
    }
    let uncovered = served.len() - served.covered();
    let summary = json!({
        "settlements": served.len(),
        "covered": served.covered(),
        "uncovered": uncovered,
        "uncovered_share": if served.is_empty() { 0.0 } else { uncovered as f64 / served.len() as f64 },
        "dead_threshold_dbm": args.inputs.threshold,
    });
    let mut out = OutputSet::new();
    out.add("coverage.csv", csv)?;
    out.add("coverage_summary.json", pretty(&summary))?;
    out.save(&args.out)?;
    Ok(())
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serialises");
    s.push('\n');
    s
}

/// Effective configuration of a `weights` run.
pub fn weights_config(args: &WeightsArgs) -> Result<ConfigDocument> {
    let mut doc = ConfigDocument::default();
    let d = IdwParams::default();
    doc.schemes.idw = IdwParams {
        s: args.s.unwrap_or(d.s),
        k: args.k.map_or(d.k, |k| k as usize),
    };
    doc.schemes.dead_threshold_dbm = args.inputs.threshold;
    doc.inputs.bts = Some(args.inputs.bts.clone());
    doc.inputs.areas = Some(args.inputs.areas.clone());
    doc.inputs.raster = args.inputs.raster.clone();
    doc.inputs.aux = args.aux.clone();
    doc.validate()?;
    let propagation = matches!(args.scheme, Scheme::Bsa | Scheme::Idw);
    if args.aux.is_some() && !propagation {
        return Err(Error::Config("--aux applies to bsa and idw only".into()));
    }
    if (args.s.is_some() || args.k.is_some()) && args.scheme != Scheme::Idw {
        return Err(Error::Config("--s and --k apply to idw only".into()));
    }
    if args.inputs.naive && !propagation {
        return Err(Error::Config("--naive applies to bsa and idw only".into()));
    }
    if args.scheme != Scheme::P2p && args.inputs.raster.is_none() {
        return Err(Error::Config(format!(
            "--raster is required for {}",
            args.scheme
        )));
    }
    Ok(doc)
}

/// Weight matrix of one scheme on loaded inputs.
pub fn compute_weights(
    scheme: Scheme,
    inputs: &RealInputs,
    aux: Option<&SettlementRaster>,
    doc: &ConfigDocument,
    naive: bool,
) -> Result<WeightMatrix> {
    let sites = inputs.table.sites();
    if scheme == Scheme::P2p {
        return Ok(weights_p2p(
            &sites,
            &inputs.areas,
            inputs.raster.as_ref().map(|r| &r.grid),
        ));
    }
    let raster = inputs.raster(&format!("for {scheme}"))?;
    let grid = raster.grid;
    let zones: ZoneRaster = inputs.areas.zones(&grid)?;
    match scheme {
        Scheme::Voronoi => weights_voronoi(&voronoi_assign(&grid, &sites)?, &zones),
        Scheme::AugVoronoi => weights_aug_voronoi(&voronoi_assign(&grid, &sites)?, raster, &zones),
        Scheme::Bsa | Scheme::Idw => {
            let (specs, envs) = inputs.specs(naive, &grid, &doc.naive)?;
            let settlements = extract_settlements(raster);
            let idw = doc.schemes.idw;
            let keep = if scheme == Scheme::Idw {
                idw.k.max(1)
            } else {
                1
            };
            let field = settlement_field(
                &specs,
                &envs,
                &settlements,
                doc.schemes.dead_threshold_dbm,
                keep,
            )?;
            let (pixels, matrix): (PixelWeights, WeightMatrix) = if scheme == Scheme::Bsa {
                weights_bsa(&field, &settlements, &zones)?
            } else {
                weights_idw(&field, &settlements, &zones, idw)?
            };
            match aux {
                Some(a) => Ok(refine_weights(&pixels, a, &grid)?.area_weights(&zones, scheme)),
                None => Ok(matrix),
            }
        }
        Scheme::P2p | Scheme::Benchmark => unreachable!("handled above or rejected by the parser"),
    }
}

pub fn cmd_weights(args: &WeightsArgs) -> Result<WeightMatrix> {
    let doc = weights_config(args)?;
    let inputs = RealInputs::load(&args.inputs)?;
    let aux = args.aux.as_deref().map(load_raster).transpose()?;
    let m = compute_weights(args.scheme, &inputs, aux.as_ref(), &doc, args.inputs.naive)?;
    let summary = json!({
        "scheme": args.scheme.as_str(),
        "areas": m.rows.len(),
        "covered": m.covered_count(),
        "no_coverage": m.no_coverage_count(),
        "dropped_bts": m.dropped_bts.iter().map(|b| b.0).collect::<Vec<_>>(),
    });
    let mut out = OutputSet::new();
    out.add_config(&doc)?;
    out.add_weights(&m)?;
    out.add("coverage_summary.json", pretty(&summary))?;
    out.save(&args.out)?;
    log::info!(
        "{}: {} areas covered, {} without coverage",
        args.scheme,
        m.covered_count(),
        m.no_coverage_count()
    );
    Ok(m)
}

/// Scheme named by a `weights_<scheme>.csv` file name.
pub fn scheme_of_file(path: &Path) -> Option<Scheme> {
    path.file_stem()?
        .to_str()?
        .strip_prefix("weights_")?
        .parse()
        .ok()
}

pub fn cmd_aggregate(args: &AggregateArgs) -> Result<AreaCovariates> {
    let scheme = scheme_of_file(&args.weights).unwrap_or(Scheme::Benchmark);
    let weights = load_weights_csv(&args.weights, scheme)?;
    let covariates = load_covariates_csv(&args.covariates)?;
    let policy = if args.strict {
        MissingPolicy::Strict
    } else {
        MissingPolicy::Renormalize
    };
    let agg = aggregate(&weights, &covariates, args.stat, policy)?;
    covmap::io::write_text(&args.out, &write_aggregates_csv(&agg))?;
    Ok(agg)
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let metrics = args.study.join("metrics_rounds.csv");
    let tally = args.study.join("tally.csv");
    let missing: Vec<String> = [&metrics, &tally]
        .into_iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "study outputs missing: {}",
            missing.join(", ")
        )));
    }
    let records = parse_metrics_csv(&read_text(&metrics)?)?;
    let tally = parse_tally_csv(&read_text(&tally)?)?;
    build_report(&records, Some(&tally))?.save(&args.out)?;
    Ok(())
}
