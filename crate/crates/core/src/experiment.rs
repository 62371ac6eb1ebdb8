//! Runs a configured experiment and writes its output bundle.
//!
//! A bundle is a directory of CSV files plus `summary.txt`, a list of
//! `key = value` lines with the headline numbers. Nothing in a bundle
//! depends on wall-clock time, so a config and seed always reproduce the
//! same bytes.

use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, Mode, FORMAT_VERSION, PRNG_NAME};
use crate::detector::{ClickStream, DetectorChain, Origin};
use crate::error::{Error, Result};
use crate::level::Manifold;
use crate::lindblad::{decay_contribution_with_full, integrate, DensityMatrix, EvolutionRecord};
use crate::model::{cavity_kappa_from_geometry, effective_decay, effective_rabi, target_mode, CavityMode};
use crate::stats::{analyze, format_summary, AnalysisResult};
use crate::trajectory::{raman_scatter_free_fraction, EmissionChannel, EmissionCsvWriter, TrajectorySampler};

pub const SUMMARY_FILE: &str = "summary.txt";
pub const ANALYSIS_SUMMARY_FILE: &str = "analysis.txt";
pub const EVOLUTION_FILE: &str = "evolution.csv";
pub const CLICKS_FILE: &str = "clicks.csv";
pub const EMISSIONS_FILE: &str = "emissions.csv";
pub const STUDY_FILE: &str = "dark_level_study.csv";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write the simulation-only origin column into clicks.csv.
    pub debug_origins: bool,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Vec<(String, String)>,
}

impl Bundle {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

/// Runs `cfg` and writes its bundle into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<Bundle> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut bundle = Bundle {
        dir: out.to_path_buf(),
        files: Vec::new(),
        summary: vec![
            kv("format_version", FORMAT_VERSION),
            kv("mode", cfg.mode.label()),
            kv("prng", PRNG_NAME),
        ],
    };
    let config_path = out.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()?)?;
    bundle.files.push(config_path);
    match cfg.mode {
        Mode::MasterEquation => master_equation(cfg, &mut bundle)?,
        Mode::Trajectory => trajectory(cfg, opts, &mut bundle)?,
        Mode::AnalyzeOnly => {
            let input = cfg.input_clicks().expect("validated");
            bundle.summary.push(kv("input_clicks", input.display()));
            let stream = ClickStream::read_csv(&input)?;
            analysis(cfg, &stream, &mut bundle)?;
        }
        Mode::DarkLevelStudy => dark_level_study(cfg, &mut bundle)?,
    }
    let summary_path = out.join(SUMMARY_FILE);
    std::fs::write(&summary_path, format_summary(&bundle.summary))?;
    bundle.files.push(summary_path);
    Ok(bundle)
}

fn master_equation(cfg: &ExperimentConfig, bundle: &mut Bundle) -> Result<()> {
    let p = cfg.params()?;
    let tol = cfg.run.tolerance()?;
    let rec = integrate(&p, &cfg.sequence, &DensityMatrix::initial(&p)?, cfg.run.output_dt_us, tol)?;
    let path = bundle.dir.join(EVOLUTION_FILE);
    rec.write_csv(&path)?;
    bundle.files.push(path);

    let scheme = p.level_scheme();
    let target = scheme.find(Manifold::D32, -1)?.index;
    let drive = rec.drive_window;
    let end = rec.index_at(drive.end);
    let p_levels: Vec<usize> = scheme.levels().iter().filter(|l| l.manifold == Manifold::P12).map(|l| l.index).collect();
    let max_p = max_population(&rec, &p_levels, drive.start, drive.end);
    let decay = decay_contribution_with_full(&p, &cfg.sequence, &rec, tol)?;
    let kappa_geo = cavity_kappa_from_geometry(p.cavity_length, p.finesse)?;
    let two_pi = std::f64::consts::TAU;
    let mode = match target_mode(&p) {
        CavityMode::Mode1 => "mode1",
        CavityMode::Mode2 => "mode2",
    };
    let d = &rec.diagnostics;
    bundle.summary.extend([
        kv("creation_efficiency", format!("{:.6}", rec.efficiency())),
        kv("target_mode", mode),
        kv("target_population_end_of_drive", format!("{:.6}", rec.populations[end][target])),
        kv("max_p_population", format!("{:.6e}", max_p)),
        kv("decay_contribution_attribution", format!("{:.6}", decay.attribution)),
        kv("decay_contribution_deleted_channel", format!("{:.6}", decay.deleted_channel)),
        kv("omega_eff_khz", format!("{:.4}", effective_rabi(&p)? / two_pi * 1e3)),
        kv("gamma_eff_khz", format!("{:.4}", effective_decay(&p)? / two_pi * 1e3)),
        kv("kappa_geometry_mhz", format!("{:.6}", kappa_geo / two_pi)),
        kv("delta_cavity_mhz", format!("{:.6}", p.delta_cavity / two_pi)),
        kv("max_trace_error", format!("{:.3e}", d.max_trace_error)),
        kv("max_hermiticity_deviation", format!("{:.3e}", d.max_hermiticity_deviation)),
        kv("min_eigenvalue", format!("{:.3e}", d.min_eigenvalue)),
        kv("integrator_steps", d.accepted_steps),
    ]);
    Ok(())
}

fn max_population(rec: &EvolutionRecord, levels: &[usize], from: f64, to: f64) -> f64 {
    (rec.index_at(from)..=rec.index_at(to))
        .map(|i| levels.iter().map(|&l| rec.populations[i][l]).sum::<f64>())
        .fold(0.0, f64::max)
}

fn trajectory(cfg: &ExperimentConfig, opts: &RunOptions, bundle: &mut Bundle) -> Result<()> {
    let p = cfg.params()?;
    let run = &cfg.run;
    let period = cfg.sequence.period();
    let sampler = TrajectorySampler::new(&p, &cfg.sequence, run.output_dt_us)?;
    let det = cfg.detector.to_params();
    let det_seed = run.detector_seed();
    let mut chain = DetectorChain::new(&det, period, det_seed)?;
    let mut dump = if run.write_emissions {
        Some(EmissionCsvWriter::create(&bundle.dir.join(EMISSIONS_FILE))?)
    } else {
        None
    };
    let mut counts = [0u64; EmissionChannel::ALL.len()];
    let (mut cavity_sum, mut cavity_sq) = (0.0, 0.0);
    let mut start = 0;
    while start < run.n_trials {
        let end = (start + run.batch_trials).min(run.n_trials);
        let recs: Vec<_> = sampler
            .run_range(run.master_seed, start..end)?
            .into_iter()
            .filter(|r| !r.events.is_empty())
            .collect();
        for r in &recs {
            for e in &r.events {
                counts[EmissionChannel::ALL.iter().position(|c| *c == e.channel).expect("known channel")] += 1;
            }
            let c = r.cavity_events().count() as f64;
            cavity_sum += c;
            cavity_sq += c * c;
        }
        if let Some(w) = dump.as_mut() {
            w.write(&recs)?;
        }
        chain.push(&recs, end)?;
        log::info!("trajectories {end}/{}", run.n_trials);
        start = end;
    }
    if let Some(w) = dump {
        w.finish()?;
        bundle.files.push(bundle.dir.join(EMISSIONS_FILE));
    }
    let stream = chain.finish();
    let clicks = bundle.dir.join(CLICKS_FILE);
    stream.write_csv(&clicks, opts.debug_origins)?;
    bundle.files.push(clicks);

    let n = run.n_trials as f64;
    let mean = cavity_sum / n;
    let var = if n > 1.0 { ((cavity_sq / n - mean * mean) * n / (n - 1.0)).max(0.0) } else { 0.0 };
    bundle.summary.extend([
        kv("n_trials", run.n_trials),
        kv("master_seed", run.master_seed),
        kv("detector_seed", det_seed),
        kv("trajectory_efficiency", format!("{mean:.6}")),
        kv("trajectory_efficiency_sigma", format!("{:.6}", (var / n).sqrt())),
    ]);
    for (c, k) in EmissionChannel::ALL.iter().zip(counts) {
        bundle.summary.push(kv(&format!("events_{}", c.label().to_ascii_lowercase()), k));
    }
    for (o, name) in [
        (Origin::Signal, "signal"),
        (Origin::Dark, "dark"),
        (Origin::Afterpulse, "afterpulse"),
        (Origin::Reflection, "reflection"),
    ] {
        bundle.summary.push(kv(&format!("clicks_{name}"), stream.count_origin(o)));
    }
    analysis(cfg, &stream, bundle)?;
    Ok(())
}

fn analysis(cfg: &ExperimentConfig, stream: &ClickStream, bundle: &mut Bundle) -> Result<AnalysisResult> {
    let r = analyze(stream, cfg.run.n_trials, cfg.sequence.period(), &cfg.analysis)?;
    r.write_outputs(&bundle.dir)?;
    let lines = r.summary();
    let path = bundle.dir.join(ANALYSIS_SUMMARY_FILE);
    std::fs::write(&path, format_summary(&lines))?;
    for f in ["g2.csv", "g2_raw.csv", "pulse_shape.csv"] {
        bundle.files.push(bundle.dir.join(f));
    }
    bundle.files.push(path);
    let fresh: Vec<_> = lines.into_iter().filter(|(k, _)| bundle.get(k).is_none()).collect();
    bundle.summary.extend(fresh);
    Ok(r)
}

/// One row of the dark-level study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub drive_us: f64,
    pub efficiency: f64,
    pub efficiency_dark: f64,
    pub scatter_free_master_equation: f64,
    pub scatter_free_trajectory: f64,
    pub scatter_free_trajectory_sigma: f64,
}

pub fn dark_level_rows(cfg: &ExperimentConfig) -> Result<Vec<StudyRow>> {
    let mut p = cfg.params()?;
    if !p.dark_enabled() {
        p = p.with_dark_level(cfg.system.dark_decay_rate_per_us)?;
    }
    let tol = cfg.run.tolerance()?;
    cfg.run
        .study_drive_us
        .iter()
        .map(|&d| {
            let seq = cfg.sequence.with_drive_duration(d)?;
            let f = raman_scatter_free_fraction(&p, &seq, cfg.run.n_trials, cfg.run.master_seed, tol)?;
            Ok(StudyRow {
                drive_us: d,
                efficiency: f.efficiency_plain,
                efficiency_dark: f.efficiency_dark,
                scatter_free_master_equation: f.master_equation,
                scatter_free_trajectory: f.trajectory,
                scatter_free_trajectory_sigma: f.trajectory_std_err,
            })
        })
        .collect()
}

fn dark_level_study(cfg: &ExperimentConfig, bundle: &mut Bundle) -> Result<()> {
    let rows = dark_level_rows(cfg)?;
    let mut csv = String::from(
        "drive_us,efficiency,efficiency_dark,scatter_free_master_equation,scatter_free_trajectory,scatter_free_trajectory_sigma\n",
    );
    bundle.summary.push(kv("n_trials", cfg.run.n_trials));
    for r in &rows {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.drive_us,
            r.efficiency,
            r.efficiency_dark,
            r.scatter_free_master_equation,
            r.scatter_free_trajectory,
            r.scatter_free_trajectory_sigma
        ));
        let key = |name: &str| format!("study_{}us_{name}", r.drive_us);
        bundle.summary.extend([
            (key("efficiency"), format!("{:.6}", r.efficiency)),
            (key("scatter_free_fraction"), format!("{:.6}", r.scatter_free_master_equation)),
            (key("scatter_free_fraction_trajectory"), format!("{:.6}", r.scatter_free_trajectory)),
            (key("scatter_free_fraction_trajectory_sigma"), format!("{:.6}", r.scatter_free_trajectory_sigma)),
        ]);
    }
    let path = bundle.dir.join(STUDY_FILE);
    std::fs::write(&path, csv)?;
    bundle.files.push(path);
    Ok(())
}

struct FigureSpec {
    name: &'static str,
    script: &'static str,
    needs: &'static [&'static str],
}

const FIGURES: [FigureSpec; 3] = [
    FigureSpec {
        name: "figure 2 (g2 cross-correlation)",
        script: "fig2_g2.gp",
        needs: &["g2_raw.csv"],
    },
    FigureSpec {
        name: "figure 3 (photon pulse shape)",
        script: "fig3_pulse_shape.gp",
        needs: &["pulse_shape.csv"],
    },
    FigureSpec {
        name: "figure 4 (S and D populations)",
        script: "fig4_populations.gp",
        needs: &[EVOLUTION_FILE],
    },
];

/// Scripts written by `emit_figures` and the figures that could not be made.
#[derive(Debug, Clone)]
pub struct FigureReport {
    pub written: Vec<PathBuf>,
    pub missing: Vec<String>,
}

/// Writes a gnuplot script per figure whose input CSVs exist in `dir`.
/// Fails, listing every figure, when none can be made.
pub fn emit_figures(dir: &Path) -> Result<FigureReport> {
    let mut report = FigureReport {
        written: Vec::new(),
        missing: Vec::new(),
    };
    for fig in &FIGURES {
        let absent: Vec<&str> = fig.needs.iter().copied().filter(|f| !dir.join(f).is_file()).collect();
        if !absent.is_empty() {
            report.missing.push(format!("{}: missing {}", fig.name, absent.join(", ")));
            continue;
        }
        let text = match fig.script {
            "fig2_g2.gp" => fig2_script(),
            "fig3_pulse_shape.gp" => fig3_script(dir)?,
            _ => fig4_script(dir)?,
        };
        let path = dir.join(fig.script);
        std::fs::write(&path, text)?;
        report.written.push(path);
    }
    if report.written.is_empty() {
        return Err(Error::MissingInputs(report.missing));
    }
    Ok(report)
}

const PREAMBLE: &str = "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnheader\nset terminal pngcairo size 1000,600\n";

fn fig2_script() -> String {
    format!(
        "# Cross-correlation of the two APDs in 1 us bins.\n{PREAMBLE}\
         set output 'fig2_g2.png'\n\
         bin_us = 1.0\n\
         bin(x) = bin_us * floor(x / bin_us + 0.5)\n\
         set xlabel 'time delay {{/Symbol t}} (us)'\n\
         set ylabel 'coincidences per 1 us bin'\n\
         set xrange [-1450.75:1450.75]\n\
         plot 'g2_raw.csv' using (bin($1)):2 smooth freq with steps notitle\n"
    )
}

fn fig3_script(dir: &Path) -> Result<String> {
    let mut s = format!(
        "# Detection probability per 500 ns bin after the drive pulse starts.\n{PREAMBLE}\
         set output 'fig3_pulse_shape.png'\n\
         bin_us = 0.5\n\
         bin(x) = bin_us * floor(x / bin_us)\n\
         # overall detection probability applied to the simulated cavity output\n\
         eta_det_path = 0.061\n\
         set xlabel 'time (us)'\n\
         set ylabel 'detection probability per 500 ns'\n\
         set xrange [0:120]\n\
         plot 'pulse_shape.csv' using (bin($1)):4 smooth freq with steps title 'data'"
    );
    if dir.join(EVOLUTION_FILE).is_file() {
        let cols = evolution_columns(dir)?;
        let (f1, f2) = (col(&cols, "flux_mode1_per_us")?, col(&cols, "flux_mode2_per_us")?);
        s.push_str(&format!(
            ", \\\n     '{EVOLUTION_FILE}' using 1:((${f1} + ${f2}) * bin_us * eta_det_path) with lines title 'simulation'"
        ));
    }
    s.push('\n');
    Ok(s)
}

fn fig4_script(dir: &Path) -> Result<String> {
    let cols = evolution_columns(dir)?;
    let pick = |prefix: &str| -> Vec<(usize, String)> {
        cols.iter()
            .enumerate()
            .filter(|(_, c)| c.starts_with(prefix))
            .map(|(i, c)| (i + 1, c.clone()))
            .collect()
    };
    let lines = |sel: Vec<(usize, String)>| -> String {
        sel.iter()
            .map(|(i, c)| format!("'{EVOLUTION_FILE}' using 1:{i} with lines title '{c}'"))
            .collect::<Vec<_>>()
            .join(", \\\n     ")
    };
    Ok(format!(
        "# Level populations during the drive pulse.\n{PREAMBLE}\
         set output 'fig4_populations.png'\n\
         set xrange [0:120]\n\
         set xlabel 'time (us)'\n\
         set ylabel 'population'\n\
         set multiplot layout 1,2\n\
         set title '(a) S1/2'\n\
         plot {}\n\
         set title '(b) D3/2'\n\
         plot {}\n\
         unset multiplot\n",
        lines(pick("S12_")),
        lines(pick("D32_"))
    ))
}

fn evolution_columns(dir: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::Reader::from_path(dir.join(EVOLUTION_FILE))?;
    Ok(rdr.headers()?.iter().map(str::to_string).collect())
}

fn col(cols: &[String], name: &str) -> Result<usize> {
    cols.iter()
        .position(|c| c == name)
        .map(|i| i + 1)
        .ok_or_else(|| Error::Parse {
            source_name: EVOLUTION_FILE.into(),
            message: format!("no column '{name}'"),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_bundle_lists_all_figures() {
        let dir = tempfile::tempdir().unwrap();
        match emit_figures(dir.path()) {
            Err(Error::MissingInputs(items)) => {
                assert_eq!(items.len(), 3);
                assert!(items[0].contains("figure 2"));
                assert!(items[1].contains("figure 3"));
                assert!(items[2].contains("figure 4"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn figure_bins() {
        assert!(fig2_script().contains("bin_us = 1.0"));
        let dir = tempfile::tempdir().unwrap();
        assert!(fig3_script(dir.path()).unwrap().contains("bin_us = 0.5"));
    }

    #[test]
    fn analyze_only_needs_input() {
        let cfg = ExperimentConfig {
            mode: Mode::AnalyzeOnly,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(run(&cfg, dir.path(), &RunOptions::default()).is_err());
    }
}
