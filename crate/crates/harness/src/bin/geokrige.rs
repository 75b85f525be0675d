use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geokrige::{empirical_variogram, krige_batch, KrigingModel, NeighborhoodSpec};
use geokrige_harness::case_study::{write_case_outputs, CASE_VARIOGRAMS};
use geokrige_harness::format::{fmt_g, CsvOut};
use geokrige_harness::points::{read_point_csv, read_target_csv};
use geokrige_harness::records::{screened_fit, RECORD_COLUMNS};
use geokrige_harness::scenario::simulate_scenario_fields;
use geokrige_harness::{
    emit_plot_data, generate_surrogate, read_case_csv, run_case_study, run_scenario, write_case_csv, CaseStudyConfig,
    HarnessError, KeyValues, PlotKind, PointToolConfig, Result, RunOptions, ScenarioConfig, SurrogateSpec,
};

/// Kriging reliability simulations and case-study pipeline.
#[derive(Parser)]
#[command(name = "geokrige", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `n_replications`.
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// Worker threads (default: GEOKRIGE_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulates the scenario's field(s) and writes every grid node.
    SimulateField,
    /// Empirical variogram and exponential fit of a point file.
    Variogram {
        #[arg(long)]
        input: PathBuf,
    },
    /// Ordinary kriging of a point file at target locations.
    Krige {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        targets: PathBuf,
    },
    /// Monte-Carlo replications of one design cell.
    RunScenario {
        /// Keep replications already stored in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Holdout evaluation on a three-variable point file.
    RunCaseStudy {
        /// Generate a synthetic input instead of reading `input`.
        #[arg(long)]
        surrogate: bool,
    },
    /// Tidy CSV data for the figures.
    EmitPlotData {
        #[arg(long)]
        kind: String,
        /// Scenario output directories, or a point file for `variogram`.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
    },
}

impl Common {
    fn settings(&self, seed_key: bool, reps_key: bool) -> Result<KeyValues> {
        let mut kv = match &self.config {
            Some(p) => KeyValues::from_file(p)?,
            None => KeyValues::default(),
        };
        for o in &self.overrides {
            kv.apply_override(o)?;
        }
        if let (true, Some(s)) = (seed_key, self.seed) {
            kv.set("seed", &s.to_string())?;
        }
        match (reps_key, self.replications) {
            (true, Some(r)) => kv.set("n_replications", &r.to_string())?,
            (false, Some(_)) => return Err(HarnessError::config("--replications only applies to run-scenario")),
            _ => {}
        }
        Ok(kv)
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::SimulateField => {
            let cfg = ScenarioConfig::from_kv(c.settings(true, false)?)?;
            let fields = simulate_scenario_fields(&cfg)?;
            mkdir(&c.out)?;
            let multi = fields.len() > 1;
            let mut cols = vec!["node_x_m", "node_y_m", "value"];
            if multi {
                cols.push("variable_id");
            }
            let mut w = CsvOut::create(&c.out.join("field.csv"), &cfg.resolved(), &cols)?;
            for (v, f) in fields.iter().enumerate() {
                for k in 0..f.node_count() {
                    let loc = f.location(k);
                    let mut row = vec![fmt_g(loc.x), fmt_g(loc.y), fmt_g(f.values[k])];
                    if multi {
                        row.push((v + 1).to_string());
                    }
                    w.row(row)?;
                }
            }
            w.finish()
        }
        Command::Variogram { input } => {
            let cfg = PointToolConfig::from_kv(c.settings(false, false)?)?;
            let ds = read_point_csv(&input)?;
            let emp = empirical_variogram(&ds, cfg.max_vgm_dist_m, cfg.n_bins)?;
            let fit = screened_fit(&emp, cfg.refit_fallback)?;
            mkdir(&c.out)?;
            let header = cfg.resolved();
            geokrige_harness::plot::write_variogram_plot(
                &c.out.join("empirical_variogram.csv"),
                &header,
                &emp,
                &fit.fit.model,
            )?;
            let mut w = CsvOut::create(&c.out.join(CASE_VARIOGRAMS), &header, &RECORD_COLUMNS)?;
            fit.record("value", cfg.max_vgm_dist_m).write(&mut w, &[])?;
            w.finish()
        }
        Command::Krige { input, targets } => {
            let cfg = PointToolConfig::from_kv(c.settings(false, false)?)?;
            let obs = read_point_csv(&input)?;
            let tgt = read_target_csv(&targets)?;
            let model = match cfg.model {
                Some(m) => m,
                None => {
                    let emp = empirical_variogram(&obs, cfg.max_vgm_dist_m, cfg.n_bins)?;
                    screened_fit(&emp, cfg.refit_fallback)?.fit.model
                }
            };
            let nbhd = NeighborhoodSpec::new(cfg.max_neighbors, cfg.max_radius_m, cfg.min_neighbors)?;
            let threads = geokrige_harness::scenario::resolve_threads(c.threads)?;
            let preds = geokrige_harness::scenario::with_pool(threads, || {
                krige_batch(&obs, &KrigingModel::Univariate(model), &tgt, &nbhd)
            })?;
            mkdir(&c.out)?;
            let mut header = cfg.resolved();
            header.extend([
                ("model_nugget".to_string(), model.nugget.to_string()),
                ("model_partial_sill".to_string(), model.partial_sill.to_string()),
                ("model_theta".to_string(), model.theta.to_string()),
            ]);
            let mut w = CsvOut::create(
                &c.out.join("predictions.csv"),
                &header,
                &["point_id", "x_m", "y_m", "predicted", "kriging_variance", "n_neighbors", "error"],
            )?;
            for (t, p) in tgt.points().iter().zip(preds) {
                let (x, y) = (fmt_g(t.location.x), fmt_g(t.location.y));
                match p {
                    Ok(p) => w.row([
                        t.point_id.to_string(),
                        x,
                        y,
                        fmt_g(p.predicted_value),
                        fmt_g(p.kriging_variance),
                        p.n_neighbors_used.to_string(),
                        String::new(),
                    ])?,
                    Err(e) => w.row([t.point_id.to_string(), x, y, String::new(), String::new(), "0".into(), e.to_string()])?,
                }
            }
            w.finish()
        }
        Command::RunScenario { resume } => {
            let cfg = ScenarioConfig::from_kv(c.settings(true, true)?)?;
            let o = run_scenario(
                &cfg,
                &RunOptions {
                    threads: c.threads,
                    out_dir: Some(c.out.clone()),
                    resume,
                },
            )?;
            for (m, s) in o.methods.iter().zip(&o.summaries) {
                println!(
                    "{}: prop_correct {} prop_correct_or_neighbor {} bias {} mse {}",
                    m.label(),
                    fmt_g(s.prop_correct.mean),
                    fmt_g(s.prop_correct_or_neighbor.mean),
                    fmt_g(s.bias.mean),
                    fmt_g(s.mse.mean)
                );
            }
            Ok(())
        }
        Command::RunCaseStudy { surrogate } => {
            let mut kv = c.settings(true, false)?;
            mkdir(&c.out)?;
            let (cfg, data) = if surrogate {
                let path = c.out.join("surrogate_points.csv");
                let data = generate_surrogate(&SurrogateSpec::default(), c.seed.unwrap_or(1))?;
                write_case_csv(&path, &data)?;
                kv.set("input", &path.display().to_string())?;
                (CaseStudyConfig::from_kv(kv)?, data)
            } else {
                let cfg = CaseStudyConfig::from_kv(kv)?;
                let data = read_case_csv(&cfg.input, &cfg)?;
                (cfg, data)
            };
            let o = run_case_study(&cfg, &data, c.threads)?;
            write_case_outputs(&c.out, &o)?;
            for r in &o.rows {
                println!(
                    "n_known {} {}: prop_correct {} prop_correct_or_neighbor {}",
                    r.n_known_label,
                    r.method,
                    fmt_g(r.prop_correct),
                    fmt_g(r.prop_correct_or_neighbor)
                );
            }
            Ok(())
        }
        Command::EmitPlotData { kind, input } => {
            let kind: PlotKind = kind.parse()?;
            mkdir(&c.out)?;
            let out = c.out.join(kind.file_name());
            if kind == PlotKind::Variogram {
                let cfg = PointToolConfig::from_kv(c.settings(false, false)?)?;
                let ds = read_point_csv(&input[0])?;
                let emp = empirical_variogram(&ds, cfg.max_vgm_dist_m, cfg.n_bins)?;
                let model = match cfg.model {
                    Some(m) => m,
                    None => screened_fit(&emp, cfg.refit_fallback)?.fit.model,
                };
                return geokrige_harness::plot::write_variogram_plot(&out, &cfg.resolved(), &emp, &model);
            }
            emit_plot_data(kind, &input, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("geokrige: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
