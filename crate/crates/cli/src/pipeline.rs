//! Stage orchestration: each command reads and writes files under the
//! configured output directory and prints line-delimited progress to
//! standard error.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use clap::ValueEnum;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use alphamine_core::analysis::{
    aligned_rows, diversity_report, mds_layout, scheme_report, symmetrized_divergence,
    FactorMatrix, NamedPool,
};
use alphamine_core::backtest::{
    build_labels, performance, select_features, simulate, train_classifier, EquityCurve,
    PerfReport,
};
use alphamine_core::discovery::{load_model, mine, mine_source, save_model, FactorModel};
use alphamine_core::factor::{evaluate_source, FactorSource};
use alphamine_core::gp::{evolve, ExprFactor};
use alphamine_core::factor::IndicatorFactor;
use alphamine_core::market::{load_panel, save_panel};
use alphamine_core::rng::derive_seed;
use alphamine_core::synthetic::generate_synthetic;
use alphamine_core::{Error, Panel, Result, Scalar};

use crate::config::RunConfig;
use crate::svg;

pub const PANEL_FILE: &str = "panel.csv";
pub const GP_MANIFEST: &str = "gp_manifest.jsonl";
pub const ADNN_MANIFEST: &str = "adnn_manifest.jsonl";
pub const GP_ADNN_MANIFEST: &str = "gp_adnn_manifest.jsonl";
pub const EVAL_FILE: &str = "eval.csv";
pub const CLUSTER_SVG: &str = "clusters.svg";
pub const SUMMARY_FILE: &str = "backtest_summary.csv";
pub const REPORT_FILE: &str = "report.md";

/// Stage streams for deriving per-stage seeds from the global seed.
mod stage {
    pub const SYNTH: u64 = 0;
    pub const GP: u64 = 1;
    pub const ADNN: u64 = 2;
    pub const GP_ADNN: u64 = 3;
    pub const EVAL: u64 = 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MineMethod {
    Adnn,
    Gp,
    /// ADNN, GP, and the GP-seeded ADNN composition.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolChoice {
    /// Hand-crafted prior indicators.
    Pk,
    /// Mined neural factors.
    New,
    /// Evolved expressions.
    #[value(name = "gp_pk")]
    GpPk,
    /// Importance-selected union of pk and new.
    Combined,
    /// Every pool whose inputs are present.
    All,
}

fn progress(stage: &str, msg: &str) {
    eprintln!("stage={stage} {msg}");
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(io_err(path))
}

fn write_manifest<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = fs::File::create(path).map_err(io_err(path))?;
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| Error::InvalidConfig(format!("manifest row: {e}")))?;
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    Ok(())
}

fn read_manifest<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingManifest(path.display().to_string()));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            serde_json::from_str(line).map_err(|e| {
                Error::MalformedRow {
                    row: 0,
                    reason: format!("{}: {e}", path.display()),
                }
            })
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::InvalidConfig(format!(
        "cannot write {}: {e}",
        path.display()
    )))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(io_err(path))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GpManifestRow {
    pub expr: String,
    pub window: usize,
    pub train_fitness: f64,
    pub val_ic: f64,
    pub test_ic: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelManifestRow {
    pub prior: String,
    /// Model file path relative to the output directory.
    pub path: String,
    pub pretrain_error_rate: f64,
    pub pretrain_test_ic: Option<f64>,
    pub train_ic: Option<f64>,
    pub val_ic: Option<f64>,
    pub test_ic: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EvalRow {
    pool: String,
    factors: usize,
    mean_ic: f64,
    diversity: Option<f64>,
    diversity_days: usize,
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    pool: String,
    annualized_excess_return: f64,
    sharpe: f64,
    max_drawdown: f64,
}

#[derive(Debug, Serialize)]
struct NavRow {
    date: String,
    strategy: f64,
    hedge: f64,
    excess: f64,
}

/// Write the configured synthetic panel CSV into the output directory.
pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let mut synth = cfg.synthetic;
    synth.seed = derive_seed(cfg.seed, stage::SYNTH);
    let panel: Panel = generate_synthetic(&synth)?;
    let path = cfg.out_dir.join(PANEL_FILE);
    save_panel(&panel, &path)?;
    progress(
        "synth",
        &format!(
            "wrote {} ({} tickers, {} days)",
            path.display(),
            panel.tickers.len(),
            panel.calendar.len()
        ),
    );
    Ok(())
}

type Ranges = (
    std::ops::Range<usize>,
    std::ops::Range<usize>,
    std::ops::Range<usize>,
);

/// Load the input panel, split it, and standardize on the train range.
fn prepared(cfg: &RunConfig) -> Result<(Ranges, Panel)> {
    let path = cfg
        .csv
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join(PANEL_FILE));
    let raw: Panel = load_panel(&path)?;
    let ranges = raw.split(cfg.split)?;
    let standardized = raw.standardize(ranges.0.clone());
    Ok((ranges, standardized))
}

fn run_gp(cfg: &RunConfig, panel: &Panel, ranges: &Ranges) -> Result<Vec<GpManifestRow>> {
    let mut gp_cfg = cfg.gp;
    gp_cfg.seed = derive_seed(cfg.seed, stage::GP);
    let (train, val, test) = ranges;
    progress(
        "mine",
        &format!(
            "method=gp population={} generations={}",
            gp_cfg.population, gp_cfg.generations
        ),
    );
    let report = evolve(panel, train.clone(), val.clone(), &gp_cfg)?;
    let mut rows = Vec::new();
    for candidate in report.ranked.iter().take(cfg.gp_keep) {
        let factor = ExprFactor {
            expr: candidate.expr.clone(),
            window: gp_cfg.window,
        };
        let stats = evaluate_source(&factor, panel, test.clone(), gp_cfg.window, gp_cfg.horizon)?;
        rows.push(GpManifestRow {
            expr: candidate.expr.to_string(),
            window: gp_cfg.window,
            train_fitness: candidate.train_fitness,
            val_ic: candidate.val_ic,
            test_ic: stats.mean_ic,
        });
    }
    for row in &rows {
        progress(
            "mine",
            &format!(
                "method=gp expr={} val_ic={:.4} test_ic={:.4}",
                row.expr, row.val_ic, row.test_ic
            ),
        );
    }
    write_manifest(&cfg.out_dir.join(GP_MANIFEST), &rows)?;
    Ok(rows)
}

fn model_row(model: &FactorModel<Scalar>, path: String) -> ModelManifestRow {
    ModelManifestRow {
        prior: model.provenance.prior.clone(),
        path,
        pretrain_error_rate: model.metrics.pretrain_error_rate,
        pretrain_test_ic: model.metrics.pretrain_test_ic,
        train_ic: model.metrics.train_ic,
        val_ic: model.metrics.val_ic,
        test_ic: model.metrics.test_ic,
    }
}

fn run_adnn(cfg: &RunConfig, panel: &Panel) -> Result<Vec<ModelManifestRow>> {
    progress(
        "mine",
        &format!("method=adnn priors={}", cfg.catalog.entries.len()),
    );
    let report = mine(
        &cfg.catalog,
        panel,
        cfg.split,
        &cfg.model_config(),
        &cfg.schedule,
        cfg.prune_rate,
        derive_seed(cfg.seed, stage::ADNN),
    )?;
    for failure in &report.failures {
        progress(
            "mine",
            &format!("method=adnn prior={} failed: {}", failure.prior, failure.error),
        );
    }
    if report.models.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "every prior failed; first: {}",
            report.failures[0].error
        )));
    }
    let models_dir = cfg.out_dir.join("models");
    fs::create_dir_all(&models_dir).map_err(io_err(&models_dir))?;
    let mut rows = Vec::new();
    for (i, model) in report.models.iter().enumerate() {
        let rel = format!("models/adnn_{i:02}.json");
        save_model(model, &cfg.out_dir.join(&rel))?;
        progress(
            "mine",
            &format!(
                "method=adnn prior={} error_rate={:.4} test_ic={:.4}",
                model.provenance.prior,
                model.metrics.pretrain_error_rate,
                model.metrics.test_ic.unwrap_or(f64::NAN)
            ),
        );
        rows.push(model_row(model, rel));
    }
    write_manifest(&cfg.out_dir.join(ADNN_MANIFEST), &rows)?;
    Ok(rows)
}

/// Pretrain one network per kept expression on the expression's values,
/// then finetune; row order follows the gp manifest ranking.
fn run_gp_adnn(cfg: &RunConfig, panel: &Panel, ranges: &Ranges, gp_rows: &[GpManifestRow]) -> Result<()> {
    progress("mine", &format!("method=gp_adnn seeds={}", gp_rows.len()));
    let stage_seed = derive_seed(cfg.seed, stage::GP_ADNN);
    let sources: Vec<ExprFactor> = gp_rows
        .iter()
        .map(|row| {
            Ok(ExprFactor {
                expr: row.expr.parse()?,
                window: row.window,
            })
        })
        .collect::<Result<_>>()?;
    let results: Vec<(String, Result<FactorModel<Scalar>>)> = sources
        .par_iter()
        .enumerate()
        .map(|(i, source)| {
            let model = mine_source(
                source,
                panel,
                ranges,
                &cfg.model_config(),
                &cfg.schedule,
                cfg.prune_rate,
                derive_seed(stage_seed, i as u64),
            );
            (FactorSource::<Scalar>::label(source), model)
        })
        .collect();
    let models_dir = cfg.out_dir.join("models");
    fs::create_dir_all(&models_dir).map_err(io_err(&models_dir))?;
    let mut rows = Vec::new();
    for (i, (prior, result)) in results.into_iter().enumerate() {
        let model = match result {
            Ok(model) => model,
            Err(e) => {
                progress("mine", &format!("method=gp_adnn prior={prior} failed: {e}"));
                continue;
            }
        };
        let rel = format!("models/gp_adnn_{i:02}.json");
        save_model(&model, &cfg.out_dir.join(&rel))?;
        progress(
            "mine",
            &format!(
                "method=gp_adnn prior={prior} test_ic={:.4}",
                model.metrics.test_ic.unwrap_or(f64::NAN)
            ),
        );
        rows.push(model_row(&model, rel));
    }
    if rows.is_empty() {
        return Err(Error::InvalidConfig(
            "every gp-seeded entry failed".into(),
        ));
    }
    write_manifest(&cfg.out_dir.join(GP_ADNN_MANIFEST), &rows)?;
    Ok(())
}

/// Mine factors with the requested method and write manifests plus model
/// and expression artifacts.
pub fn cmd_mine(cfg: &RunConfig, method: MineMethod) -> Result<()> {
    let (ranges, std_panel) = prepared(cfg)?;
    let gp_rows = match method {
        MineMethod::Gp | MineMethod::Both => Some(run_gp(cfg, &std_panel, &ranges)?),
        MineMethod::Adnn => None,
    };
    if matches!(method, MineMethod::Adnn | MineMethod::Both) {
        run_adnn(cfg, &std_panel)?;
    }
    if let (MineMethod::Both, Some(rows)) = (method, &gp_rows) {
        if rows.is_empty() {
            return Err(Error::EmptyPool("gp manifest".into()));
        }
        run_gp_adnn(cfg, &std_panel, &ranges, rows)?;
    }
    Ok(())
}

/// A factor pool reconstructed from catalog entries or manifest artifacts.
struct OwnedPool {
    name: String,
    factors: Vec<Box<dyn FactorSource<Scalar>>>,
}

impl OwnedPool {
    fn refs(&self) -> Vec<&dyn FactorSource<Scalar>> {
        self.factors.iter().map(|f| f.as_ref()).collect()
    }
}

fn pk_pool(cfg: &RunConfig) -> OwnedPool {
    OwnedPool {
        name: "pk".into(),
        factors: cfg
            .catalog
            .entries
            .iter()
            .map(|spec| {
                Box::new(IndicatorFactor { spec: spec.clone() }) as Box<dyn FactorSource<Scalar>>
            })
            .collect(),
    }
}

fn gp_pool(cfg: &RunConfig, name: &str) -> Result<OwnedPool> {
    let rows: Vec<GpManifestRow> = read_manifest(&cfg.out_dir.join(GP_MANIFEST))?;
    let mut factors: Vec<Box<dyn FactorSource<Scalar>>> = Vec::new();
    for row in rows {
        factors.push(Box::new(ExprFactor {
            expr: row.expr.parse()?,
            window: row.window,
        }));
    }
    Ok(OwnedPool {
        name: name.into(),
        factors,
    })
}

fn model_pool(cfg: &RunConfig, manifest: &str, name: &str) -> Result<OwnedPool> {
    let rows: Vec<ModelManifestRow> = read_manifest(&cfg.out_dir.join(manifest))?;
    let mut factors: Vec<Box<dyn FactorSource<Scalar>>> = Vec::new();
    for row in rows {
        let model: FactorModel<Scalar> = load_model(&cfg.out_dir.join(&row.path))?;
        factors.push(Box::new(model));
    }
    Ok(OwnedPool {
        name: name.into(),
        factors,
    })
}

/// Evaluate every mined pool: mean IC and diversity table plus the
/// cluster scatter of all factors on the last test day.
pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let (ranges, std_panel) = prepared(cfg)?;
    let (_, _, test) = &ranges;
    let mut pools = Vec::new();
    if cfg.out_dir.join(GP_MANIFEST).exists() {
        pools.push(gp_pool(cfg, "gp")?);
    }
    if cfg.out_dir.join(ADNN_MANIFEST).exists() {
        pools.push(model_pool(cfg, ADNN_MANIFEST, "adnn")?);
    }
    if cfg.out_dir.join(GP_ADNN_MANIFEST).exists() {
        pools.push(model_pool(cfg, GP_ADNN_MANIFEST, "gp_adnn")?);
    }
    if pools.is_empty() {
        return Err(Error::MissingManifest(format!(
            "{GP_MANIFEST} or {ADNN_MANIFEST} (run mine first)"
        )));
    }

    let named: Vec<NamedPool<'_, Scalar>> = pools
        .iter()
        .map(|p| NamedPool {
            name: p.name.clone(),
            factors: p.refs(),
        })
        .collect();
    let horizon = cfg.schedule.horizon;
    let diversity_k = (cfg.diversity_k > 0).then_some(cfg.diversity_k);
    let rows = scheme_report(
        &named,
        &std_panel,
        test.clone(),
        cfg.window,
        horizon,
        diversity_k,
        derive_seed(cfg.seed, stage::EVAL),
    )?;
    let eval_rows: Vec<EvalRow> = rows
        .iter()
        .map(|r| EvalRow {
            pool: r.pool.clone(),
            factors: r.factors,
            mean_ic: r.mean_ic,
            diversity: r.diversity,
            diversity_days: r.diversity_days,
        })
        .collect();
    for row in &eval_rows {
        progress(
            "eval",
            &format!(
                "pool={} factors={} mean_ic={:.4} diversity={:.4}",
                row.pool,
                row.factors,
                row.mean_ic,
                row.diversity.unwrap_or(f64::NAN)
            ),
        );
    }
    write_csv(&cfg.out_dir.join(EVAL_FILE), &eval_rows)?;

    if let Some(k) = diversity_k {
        // cluster scatter: all factors together on the last eligible test day
        let all: Vec<&dyn FactorSource<Scalar>> =
            pools.iter().flat_map(|p| p.refs()).collect();
        let labels: Vec<String> = all.iter().map(|f| f.label()).collect();
        let day = *std_panel
            .eligible_days(test.clone(), cfg.window, horizon)
            .last()
            .ok_or(Error::NoEligibleDays)?;
        let rows = aligned_rows(&all, &std_panel, day).ok_or(Error::DegenerateCrossSection {
            day,
            count: 0,
        })?;
        let matrix = FactorMatrix::new(std_panel.calendar[day], rows)?;
        let report = diversity_report(&matrix, k, derive_seed(cfg.seed, stage::EVAL))?;
        let layout = mds_layout(&symmetrized_divergence(&report.distances));
        let chart = svg::scatter(
            &format!("factor clusters, {}", matrix.date),
            &layout,
            &labels,
            &report.assignments,
        );
        write_text(&cfg.out_dir.join(CLUSTER_SVG), &chart)?;
    }
    progress("eval", &format!("wrote {EVAL_FILE}"));
    Ok(())
}

fn curve_files(cfg: &RunConfig, name: &str, curve: &EquityCurve) -> Result<()> {
    let nav_rows: Vec<NavRow> = (0..curve.len())
        .map(|i| NavRow {
            date: curve.dates[i].to_string(),
            strategy: curve.strategy[i],
            hedge: curve.hedge[i],
            excess: curve.excess[i],
        })
        .collect();
    write_csv(&cfg.out_dir.join(format!("nav_{name}.csv")), &nav_rows)?;
    let chart = svg::line_chart(
        &format!("{name} vs equal-weight hedge"),
        &curve.dates[0].to_string(),
        &curve.dates[curve.len() - 1].to_string(),
        &[
            ("strategy", &curve.strategy),
            ("hedge", &curve.hedge),
            ("excess", &curve.excess),
        ],
    );
    write_text(&cfg.out_dir.join(format!("equity_{name}.svg")), &chart)
}

/// Run the long-hedge simulation for the chosen pools and write the NAV
/// curves, equity charts, and the summary table.
pub fn cmd_backtest(cfg: &RunConfig, choice: PoolChoice) -> Result<()> {
    let (ranges, std_panel) = prepared(cfg)?;
    let (train, _, test) = &ranges;
    let horizon = cfg.strategy.holding_period;
    // labels never read forward returns past the train range
    let label_range = train.start..train.end.saturating_sub(horizon).max(train.start);

    let mut jobs: Vec<OwnedPool> = Vec::new();
    let want = |c: PoolChoice| choice == c || choice == PoolChoice::All;
    let optional = choice == PoolChoice::All;
    if want(PoolChoice::Pk) {
        jobs.push(pk_pool(cfg));
    }
    if want(PoolChoice::New) {
        match model_pool(cfg, ADNN_MANIFEST, "new") {
            Ok(pool) => jobs.push(pool),
            Err(Error::MissingManifest(m)) if optional => {
                progress("backtest", &format!("pool=new skipped, missing {m}"));
            }
            Err(e) => return Err(e),
        }
    }
    if want(PoolChoice::GpPk) {
        match gp_pool(cfg, "gp_pk") {
            Ok(pool) => jobs.push(pool),
            Err(Error::MissingManifest(m)) if optional => {
                progress("backtest", &format!("pool=gp_pk skipped, missing {m}"));
            }
            Err(e) => return Err(e),
        }
    }
    if want(PoolChoice::Combined) {
        match model_pool(cfg, ADNN_MANIFEST, "new") {
            Ok(new) => {
                let mut union = pk_pool(cfg);
                union.name = "combined".into();
                union.factors.extend(new.factors);
                let labels = build_labels(
                    &std_panel,
                    label_range.clone(),
                    &union.refs(),
                    cfg.window,
                    horizon,
                )?;
                let selection = select_features(&labels, cfg.strategy.keep, &cfg.boost)?;
                if selection.undersized {
                    progress(
                        "backtest",
                        &format!(
                            "pool=combined union of {} <= keep {}, keeping all",
                            union.factors.len(),
                            cfg.strategy.keep
                        ),
                    );
                }
                let mut kept = selection.kept.clone();
                kept.sort_unstable();
                let mut factors = Vec::new();
                for (i, factor) in union.factors.into_iter().enumerate() {
                    if kept.binary_search(&i).is_ok() {
                        factors.push(factor);
                    }
                }
                progress(
                    "backtest",
                    &format!("pool=combined kept {} features", factors.len()),
                );
                jobs.push(OwnedPool {
                    name: "combined".into(),
                    factors,
                });
            }
            Err(Error::MissingManifest(m)) if optional => {
                progress("backtest", &format!("pool=combined skipped, missing {m}"));
            }
            Err(e) => return Err(e),
        }
    }

    let mut summary = Vec::new();
    for pool in &jobs {
        let refs = pool.refs();
        let labels = build_labels(&std_panel, label_range.clone(), &refs, cfg.window, horizon)?;
        if labels.skipped_days > 0 {
            progress(
                "backtest",
                &format!(
                    "pool={} skipped {} undersized label days",
                    pool.name, labels.skipped_days
                ),
            );
        }
        let scorer = train_classifier(&labels, &cfg.boost)?;
        let curve = simulate(
            &std_panel,
            test.clone(),
            &refs,
            &|features| scorer.score(features),
            cfg.window,
            &cfg.strategy,
        )?;
        let perf: PerfReport = performance(&curve)?;
        progress(
            "backtest",
            &format!(
                "pool={} revenue={:.4} sharpe={:.3} max_drawdown={:.4}",
                pool.name, perf.annualized_return, perf.sharpe, perf.max_drawdown
            ),
        );
        curve_files(cfg, &pool.name, &curve)?;
        summary.push(SummaryRow {
            pool: pool.name.clone(),
            annualized_excess_return: perf.annualized_return,
            sharpe: perf.sharpe,
            max_drawdown: perf.max_drawdown,
        });
    }
    write_csv(&cfg.out_dir.join(SUMMARY_FILE), &summary)?;
    progress("backtest", &format!("wrote {SUMMARY_FILE}"));
    Ok(())
}

fn markdown_table(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingManifest(path.display().to_string()));
    }
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    let mut out = String::new();
    let headers = reader
        .headers()
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        .clone();
    out.push_str(&format!("| {} |\n", headers.iter().collect::<Vec<_>>().join(" | ")));
    out.push_str(&format!("|{}\n", "---|".repeat(headers.len())));
    for record in reader.records() {
        let record =
            record.map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        out.push_str(&format!("| {} |\n", record.iter().collect::<Vec<_>>().join(" | ")));
    }
    Ok(out)
}

/// Stitch the evaluation and backtest tables into one markdown report.
pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let mut out = String::from("# Factor mining run\n\n");
    out.push_str(&format!(
        "seed {} | window {} | split {}/{}/{} | prune rate {}\n\n",
        cfg.seed,
        cfg.window,
        cfg.split.train_days,
        cfg.split.val_days,
        cfg.split.test_days,
        cfg.prune_rate,
    ));
    out.push_str("## Information coefficient and diversity\n\n");
    out.push_str(&markdown_table(&cfg.out_dir.join(EVAL_FILE))?);
    out.push_str("\n## Backtest\n\n");
    out.push_str(&markdown_table(&cfg.out_dir.join(SUMMARY_FILE))?);
    out.push_str("\n## Plots\n\n");
    for entry in [CLUSTER_SVG, "equity_pk.svg", "equity_new.svg", "equity_gp_pk.svg", "equity_combined.svg"] {
        if cfg.out_dir.join(entry).exists() {
            out.push_str(&format!("![{entry}]({entry})\n"));
        }
    }
    write_text(&cfg.out_dir.join(REPORT_FILE), &out)?;
    progress("report", &format!("wrote {REPORT_FILE}"));
    Ok(())
}
