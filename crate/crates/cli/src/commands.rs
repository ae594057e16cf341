//! Pipeline subcommands. Each command validates its inputs, does its work
//! through the library, writes plot-ready tables plus a deterministic run
//! manifest, and reports a one-line summary on stdout.

use crate::config::{season_from_name, RunConfig};
use crate::manifest::{sha256_file, write_manifest, ArtifactInfo, RunManifest};
use crate::tables;
use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use wtstrike::analysis::{
    self, category_sweep, per_turbine_stats, seasonal_grid, GridOptions, SeasonFilter,
    SweepOptions,
};
use wtstrike::fit::{iterative_fit, IterativeFit};
use wtstrike::histogram::derived_views;
use wtstrike::ingest::{parse_strokes, parse_turbines, RejectionReport, StrokeRecord, TurbineRecord};
use wtstrike::spatial::{exposure_years, match_strokes, read_pairs, write_pairs, MatchedPair, TurbineIndex};
use wtstrike::synth::{generate, write_stroke_csv, write_turbine_csv, TruthSidecar};

/// Failure category, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad usage, unreadable or invalid config, missing input paths.
    Config(anyhow::Error),
    /// Inputs exist but their content cannot support the command.
    Data(anyhow::Error),
    /// A fit failed to converge.
    NonConvergence(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::NonConvergence(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(e) | CliError::Data(e) | CliError::NonConvergence(e) => {
                format!("{e:#}")
            }
        }
    }
}

pub struct Ctx {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub season_override: Option<String>,
    pub workers: usize,
    pub verbose: bool,
}

impl Ctx {
    fn season(&self) -> Result<SeasonFilter, CliError> {
        let name = self.season_override.as_deref().unwrap_or(&self.config.analysis.season);
        season_from_name(name).map_err(CliError::Config)
    }

    fn vlog(&self, msg: &str) {
        if self.verbose {
            eprintln!("{msg}");
        }
    }
}

fn ensure_out_dir(ctx: &Ctx) -> Result<(), CliError> {
    std::fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("cannot create output directory {}", ctx.out_dir.display()))
        .map_err(CliError::Config)
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::Config(anyhow!("input file not found: {}", path.display())));
    }
    Ok(())
}

fn manifest_inputs(paths: &[&Path]) -> Result<BTreeMap<String, String>, CliError> {
    let mut digests = BTreeMap::new();
    for p in paths {
        digests.insert(p.display().to_string(), sha256_file(p).map_err(CliError::Data)?);
    }
    Ok(digests)
}

fn finish_manifest(
    ctx: &Ctx,
    command: &str,
    digests: BTreeMap<String, String>,
    outputs: Vec<String>,
) -> Result<(), CliError> {
    let manifest = RunManifest {
        artifact: ArtifactInfo::default(),
        command,
        workers: ctx.workers,
        season_override: ctx.season_override.as_deref(),
        input_digests: digests,
        outputs,
        config: &ctx.config,
    };
    write_manifest(&ctx.out_dir, &manifest).map_err(CliError::Data)
}

// ---------------------------------------------------------------------------
// Input loading shared by the analysis commands
// ---------------------------------------------------------------------------

struct LoadedInputs {
    strokes: Vec<StrokeRecord>,
    stroke_report: RejectionReport,
    outside_window: u64,
    turbines: Vec<TurbineRecord>,
    turbine_report: RejectionReport,
}

fn load_inputs(ctx: &Ctx) -> Result<LoadedInputs, CliError> {
    let inputs = &ctx.config.inputs;
    require_file(&inputs.strokes)?;
    require_file(&inputs.turbines)?;
    let window = ctx.config.window();

    let stroke_file = File::open(&inputs.strokes)
        .with_context(|| format!("cannot open {}", inputs.strokes.display()))
        .map_err(CliError::Data)?;
    let (mut strokes, stroke_report) =
        parse_strokes(BufReader::new(stroke_file), &inputs.stroke_schema)
            .map_err(|e| CliError::Data(anyhow!("stroke parse: {e}")))?;
    let before = strokes.len() as u64;
    strokes.retain(|s| s.timestamp >= window.start && s.timestamp < window.end);
    let outside_window = before - strokes.len() as u64;

    let turbine_file = File::open(&inputs.turbines)
        .with_context(|| format!("cannot open {}", inputs.turbines.display()))
        .map_err(CliError::Data)?;
    let (turbines, turbine_report) =
        parse_turbines(BufReader::new(turbine_file), &inputs.turbine_schema)
            .map_err(|e| CliError::Data(anyhow!("turbine parse: {e}")))?;

    ctx.vlog(&format!(
        "loaded {} strokes ({} rejected, {} filtered, {} outside window), {} turbines ({} filtered)",
        strokes.len(),
        stroke_report.rejected,
        stroke_report.filtered,
        outside_window,
        turbines.len(),
        turbine_report.filtered
    ));
    Ok(LoadedInputs { strokes, stroke_report, outside_window, turbines, turbine_report })
}

fn load_pairs(ctx: &Ctx) -> Result<Vec<MatchedPair>, CliError> {
    let path = &ctx.config.inputs.pairs;
    require_file(path)?;
    let file = File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(CliError::Data)?;
    read_pairs(BufReader::new(file)).map_err(|e| CliError::Data(anyhow!("pair file: {e}")))
}

fn season_filtered(
    pairs: &[MatchedPair],
    strokes: &[StrokeRecord],
    season: &SeasonFilter,
) -> Vec<MatchedPair> {
    pairs
        .iter()
        .filter(|p| season.contains(strokes[p.stroke_ref].timestamp))
        .copied()
        .collect()
}

fn total_exposure(turbines: &[TurbineRecord], ctx: &Ctx) -> f64 {
    let w = ctx.config.window();
    turbines.iter().map(|t| exposure_years(t, w.start, w.end)).sum()
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn cmd_synth(ctx: &Ctx) -> Result<(), CliError> {
    ensure_out_dir(ctx)?;
    let synth = ctx
        .config
        .synth
        .as_ref()
        .ok_or_else(|| CliError::Config(anyhow!("config has no [synth] section")))?;
    let out = generate(synth).map_err(|e| CliError::Data(anyhow!("generation failed: {e}")))?;

    let strokes_path = ctx.out_dir.join("strokes.csv");
    let turbines_path = ctx.out_dir.join("turbines.csv");
    let truth_path = ctx.out_dir.join("truth.json");
    write_stroke_csv(
        BufWriter::new(File::create(&strokes_path).map_err(|e| CliError::Data(e.into()))?),
        &out.strokes,
    )
    .map_err(|e| CliError::Data(anyhow!("{e}")))?;
    write_turbine_csv(
        BufWriter::new(File::create(&turbines_path).map_err(|e| CliError::Data(e.into()))?),
        &out.turbines,
    )
    .map_err(|e| CliError::Data(anyhow!("{e}")))?;
    let sidecar = TruthSidecar {
        config: synth.clone(),
        labels: out.labels.clone(),
        per_turbine: out.per_turbine.clone(),
    };
    std::fs::write(&truth_path, serde_json::to_string(&sidecar).map_err(|e| CliError::Data(e.into()))?)
        .map_err(|e| CliError::Data(e.into()))?;

    finish_manifest(
        ctx,
        "synth",
        BTreeMap::new(),
        vec!["strokes.csv".into(), "turbines.csv".into(), "truth.json".into()],
    )?;
    println!(
        "synth: {} strokes ({} turbines) written to {}",
        out.strokes.len(),
        out.turbines.len(),
        ctx.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// match
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct MatchSummary {
    n_strokes: usize,
    stroke_report: RejectionReport,
    outside_window: u64,
    n_turbines: usize,
    turbine_report: RejectionReport,
    match_radius_km: f64,
    n_pairs: usize,
    n_strokes_matched: usize,
}

pub fn cmd_match(ctx: &Ctx) -> Result<(), CliError> {
    ensure_out_dir(ctx)?;
    let loaded = load_inputs(ctx)?;
    let radius = ctx.config.analysis.match_radius_km;

    let pairs = if loaded.turbines.is_empty() {
        return Err(CliError::Data(anyhow!(
            "no admissible turbines in {}",
            ctx.config.inputs.turbines.display()
        )));
    } else if loaded.strokes.is_empty() {
        eprintln!("warning: no strokes in the analysis window; emitting an empty pair file");
        Vec::new()
    } else {
        let index = TurbineIndex::build(&loaded.turbines)
            .map_err(|e| CliError::Data(anyhow!("{e}")))?;
        match_strokes(&loaded.strokes, &loaded.turbines, &index, radius)
            .map_err(|e| CliError::Data(anyhow!("{e}")))?
    };

    let pairs_path = ctx.out_dir.join("pairs.bin");
    write_pairs(
        BufWriter::new(File::create(&pairs_path).map_err(|e| CliError::Data(e.into()))?),
        &pairs,
    )
    .map_err(|e| CliError::Data(anyhow!("{e}")))?;

    let mut matched: Vec<usize> = pairs.iter().map(|p| p.stroke_ref).collect();
    matched.dedup();
    let summary = MatchSummary {
        n_strokes: loaded.strokes.len(),
        stroke_report: loaded.stroke_report,
        outside_window: loaded.outside_window,
        n_turbines: loaded.turbines.len(),
        turbine_report: loaded.turbine_report,
        match_radius_km: radius,
        n_pairs: pairs.len(),
        n_strokes_matched: matched.len(),
    };
    std::fs::write(
        ctx.out_dir.join("match_summary.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Data(e.into()))?,
    )
    .map_err(|e| CliError::Data(e.into()))?;

    let digests =
        manifest_inputs(&[&ctx.config.inputs.strokes, &ctx.config.inputs.turbines])?;
    finish_manifest(ctx, "match", digests, vec!["pairs.bin".into(), "match_summary.json".into()])?;
    println!("match: {} pairs from {} strokes", summary.n_pairs, summary.n_strokes);
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FitDocument {
    filter: FilterDescriptor,
    params: ParamsOut,
    areas: wtstrike::model::CollectionAreas,
    radii: wtstrike::model::AttractionRadii,
    converged: bool,
    aborted: bool,
    covariance: Option<[[f64; 4]; 4]>,
    iterations: Vec<IterationOut>,
}

#[derive(Serialize)]
struct ParamsOut {
    amplitude: f64,
    beta: f64,
    sigma_km: f64,
    lambda_km: f64,
}

impl From<&wtstrike::model::ModelParams> for ParamsOut {
    fn from(p: &wtstrike::model::ModelParams) -> Self {
        Self { amplitude: p.amplitude(), beta: p.beta(), sigma_km: p.sigma(), lambda_km: p.lambda() }
    }
}

#[derive(Serialize)]
struct FilterDescriptor {
    season: String,
    window_start: String,
    window_end: String,
    n_pairs: usize,
}

#[derive(Serialize)]
struct IterationOut {
    iteration: usize,
    params: ParamsOut,
    residual_norm: f64,
    converged: bool,
    lm_steps: usize,
}

#[derive(Serialize)]
struct HistogramDocument<'a> {
    provenance: Provenance,
    #[serde(flatten)]
    histogram: &'a wtstrike::histogram::WeightedHistogram,
}

#[derive(Serialize)]
struct Provenance {
    filter: String,
    iteration: usize,
}

fn filter_name(season: &SeasonFilter) -> String {
    format!("{:?}", season.label).to_lowercase()
}

fn run_iterative(
    ctx: &Ctx,
    pairs: &[MatchedPair],
    exposure: f64,
) -> Result<IterativeFit, CliError> {
    let options = ctx.config.iterative_options().map_err(CliError::Config)?;
    let mut run = iterative_fit(pairs, &options).map_err(|e| CliError::Data(anyhow!("{e}")))?;
    for it in &mut run.iterations {
        it.histogram.turbine_years = exposure;
    }
    if run.aborted {
        return Err(CliError::NonConvergence(anyhow!(
            "inner solve failed to converge at iteration {}",
            run.iterations.len() - 1
        )));
    }
    Ok(run)
}

pub fn cmd_fit(ctx: &Ctx) -> Result<(), CliError> {
    ensure_out_dir(ctx)?;
    let season = ctx.season()?;
    let loaded = load_inputs(ctx)?;
    let all_pairs = load_pairs(ctx)?;
    let pairs = season_filtered(&all_pairs, &loaded.strokes, &season);
    if pairs.is_empty() {
        return Err(CliError::Data(anyhow!("no pairs after season filtering")));
    }
    let exposure = total_exposure(&loaded.turbines, ctx);
    let run = run_iterative(ctx, &pairs, exposure)?;

    let document = FitDocument {
        filter: FilterDescriptor {
            season: filter_name(&season),
            window_start: ctx.config.analysis.window_start.to_rfc3339(),
            window_end: ctx.config.analysis.window_end.to_rfc3339(),
            n_pairs: pairs.len(),
        },
        params: (&run.result.params).into(),
        areas: wtstrike::model::collection_areas(&run.result.params),
        radii: wtstrike::model::attraction_radii(&run.result.params, &ctx.config.conversions),
        converged: run.converged,
        aborted: run.aborted,
        covariance: run.result.covariance,
        iterations: run
            .iterations
            .iter()
            .map(|it| IterationOut {
                iteration: it.iteration,
                params: (&it.fit.params).into(),
                residual_norm: it.fit.residual_norm(),
                converged: it.fit.converged,
                lm_steps: it.fit.iteration_trace.len(),
            })
            .collect(),
    };
    std::fs::write(
        ctx.out_dir.join("fit.json"),
        serde_json::to_string_pretty(&document).map_err(|e| CliError::Data(e.into()))?,
    )
    .map_err(|e| CliError::Data(e.into()))?;

    // per-iteration histograms with provenance
    let hist_docs: Vec<HistogramDocument> = run
        .iterations
        .iter()
        .map(|it| HistogramDocument {
            provenance: Provenance { filter: filter_name(&season), iteration: it.iteration },
            histogram: &it.histogram,
        })
        .collect();
    std::fs::write(
        ctx.out_dir.join("fit_histograms.json"),
        serde_json::to_string(&hist_docs).map_err(|e| CliError::Data(e.into()))?,
    )
    .map_err(|e| CliError::Data(e.into()))?;

    // the four Fig-2-style views per iteration, as one long table
    let views_path = ctx.out_dir.join("fit_views.csv");
    let mut rows = Vec::new();
    for it in &run.iterations {
        let views = derived_views(&it.histogram, &it.fit.params)
            .map_err(|e| CliError::Data(anyhow!("{e}")))?;
        rows.push((it.iteration, views));
    }
    tables::write_views_csv(&views_path, &rows).map_err(CliError::Data)?;

    let digests = manifest_inputs(&[
        ctx.config.inputs.strokes.as_path(),
        ctx.config.inputs.turbines.as_path(),
        ctx.config.inputs.pairs.as_path(),
    ])?;
    finish_manifest(
        ctx,
        "fit",
        digests,
        vec!["fit.json".into(), "fit_histograms.json".into(), "fit_views.csv".into()],
    )?;
    let p = &run.result.params;
    println!(
        "fit: beta {:.4}, sigma {:.4} km, lambda {:.4} km over {} pairs ({})",
        p.beta(),
        p.sigma(),
        p.lambda(),
        pairs.len(),
        if run.converged { "converged" } else { "not converged" }
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

pub fn cmd_sweep(ctx: &Ctx) -> Result<(), CliError> {
    ensure_out_dir(ctx)?;
    let season = ctx.season()?;
    let loaded = load_inputs(ctx)?;
    let all_pairs = load_pairs(ctx)?;
    let categories = ctx.config.height_categories().map_err(CliError::Config)?;
    let options = SweepOptions {
        iterative: ctx.config.iterative_options().map_err(CliError::Config)?,
        min_pairs: ctx.config.analysis.min_category_pairs,
        ul_scale: ctx.config.analysis.ul_scale,
        conversions: ctx.config.conversions,
    };
    let fits = category_sweep(
        &all_pairs,
        &loaded.strokes,
        &loaded.turbines,
        &categories,
        &season,
        &options,
    )
    .map_err(|e| match e {
        analysis::AnalysisError::TooFewPairs { .. } => CliError::Data(anyhow!("{e}")),
        analysis::AnalysisError::Fit(_) => CliError::NonConvergence(anyhow!("{e}")),
        other => CliError::Data(anyhow!("{other}")),
    })?;
    let regressions = analysis::radius_regressions(&fits)
        .map_err(|e| CliError::Data(anyhow!("{e}")))?;

    tables::write_sweep_csv(&ctx.out_dir.join("sweep.csv"), &fits).map_err(CliError::Data)?;
    tables::write_sweep_cumulative_csv(&ctx.out_dir.join("sweep_cumulative.csv"), &fits)
        .map_err(CliError::Data)?;

    #[derive(Serialize)]
    struct SweepDocument<'a> {
        filter: FilterDescriptor,
        categories: &'a [analysis::CategoryFit],
        regressions: &'a analysis::RadiusRegressions,
    }
    let doc = SweepDocument {
        filter: FilterDescriptor {
            season: filter_name(&season),
            window_start: ctx.config.analysis.window_start.to_rfc3339(),
            window_end: ctx.config.analysis.window_end.to_rfc3339(),
            n_pairs: all_pairs.len(),
        },
        categories: &fits,
        regressions: &regressions,
    };
    std::fs::write(
        ctx.out_dir.join("sweep.json"),
        serde_json::to_string_pretty(&doc).map_err(|e| CliError::Data(e.into()))?,
    )
    .map_err(|e| CliError::Data(e.into()))?;

    let digests = manifest_inputs(&[
        ctx.config.inputs.strokes.as_path(),
        ctx.config.inputs.turbines.as_path(),
        ctx.config.inputs.pairs.as_path(),
    ])?;
    finish_manifest(
        ctx,
        "sweep",
        digests,
        vec!["sweep.csv".into(), "sweep.json".into(), "sweep_cumulative.csv".into()],
    )?;
    println!(
        "sweep: {} categories fitted; CG regression R = {:.1} + {:.2}·H",
        fits.len(),
        regressions.cg.intercept,
        regressions.cg.slope
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// turbines
// ---------------------------------------------------------------------------

pub fn cmd_turbines(ctx: &Ctx) -> Result<(), CliError> {
    ensure_out_dir(ctx)?;
    let season = ctx.season()?;
    let loaded = load_inputs(ctx)?;
    let all_pairs = load_pairs(ctx)?;
    let categories = ctx.config.height_categories().map_err(CliError::Config)?;
    let analysis = per_turbine_stats(
        &all_pairs,
        &loaded.strokes,
        &loaded.turbines,
        &categories,
        ctx.config.analysis.d0_km,
        &ctx.config.conversions,
        &season,
        ctx.config.window(),
    )
    .map_err(|e| CliError::Data(anyhow!("{e}")))?;

    tables::write_per_turbine_csv(
        &ctx.out_dir.join("per_turbine.csv"),
        &analysis,
        &loaded.turbines,
        &categories,
    )
    .map_err(CliError::Data)?;
    tables::write_cdf_csv(&ctx.out_dir.join("cdf.csv"), &analysis).map_err(CliError::Data)?;
    tables::write_pooled_csv(&ctx.out_dir.join("pooled.csv"), &analysis).map_err(CliError::Data)?;

    let digests = manifest_inputs(&[
        ctx.config.inputs.strokes.as_path(),
        ctx.config.inputs.turbines.as_path(),
        ctx.config.inputs.pairs.as_path(),
    ])?;
    finish_manifest(
        ctx,
        "turbines",
        digests,
        vec!["per_turbine.csv".into(), "cdf.csv".into(), "pooled.csv".into()],
    )?;
    let zero = analysis.stats.iter().filter(|s| s.n_inner == 0).count();
    println!(
        "turbines: {} analyzed, {} with zero strikes, {} outliers",
        analysis.stats.len(),
        zero,
        analysis.stats.iter().filter(|s| s.outlier).count()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// seasonal
// ---------------------------------------------------------------------------

pub fn cmd_seasonal(ctx: &Ctx) -> Result<(), CliError> {
    ensure_out_dir(ctx)?;
    let loaded = load_inputs(ctx)?;
    let all_pairs = load_pairs(ctx)?;
    let options = GridOptions {
        cell_deg: ctx.config.grid.cell_deg,
        min_turbine_years: ctx.config.grid.min_turbine_years,
        d0_km: ctx.config.analysis.d0_km,
    };
    let cells = seasonal_grid(&all_pairs, &loaded.strokes, &loaded.turbines, ctx.config.window(), &options)
        .map_err(|e| CliError::Data(anyhow!("{e}")))?;

    tables::write_grid_csv(&ctx.out_dir.join("grid.csv"), &cells, options.cell_deg)
        .map_err(CliError::Data)?;

    let digests = manifest_inputs(&[
        ctx.config.inputs.strokes.as_path(),
        ctx.config.inputs.turbines.as_path(),
        ctx.config.inputs.pairs.as_path(),
    ])?;
    finish_manifest(ctx, "seasonal", digests, vec!["grid.csv".into()])?;
    println!(
        "seasonal: {} cells, {} with ratio",
        cells.len(),
        cells.iter().filter(|c| c.ratio.is_some()).count()
    );
    Ok(())
}
