//! Command-line driver: synthesize instances, solve them, read frequencies
//! back out, and sweep phase-transition grids.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use fsan::experiments::{
    draw_instance, emit_plotdata, phase_transition, run_trial, PhaseGrid, PriorSetting,
    TrialConfig, TrialMode,
};
use fsan::model::{apply_mask, synthesize, Dims, FrequencyTuple, ObservationMask};
use fsan::music::{music_frequencies, MusicOptions, RetrievalResult, RetrievalSource};
use fsan::sdp::{assemble, solve, SolveDiagnostics, SolverOptions};
use fsan::toeplitz::{build_level_toeplitz, HalfSpectrumTensor};
use fsan::vandermonde::{vandermonde_decompose, verify_fs_certificate};
use fsan::{BandSystem, FrequencyBand, SpectralModel};

#[derive(Parser)]
#[command(name = "fsan", about = "Band-constrained atomic-norm harmonic retrieval", version)]
struct Cli {
    /// Base seed for anything random.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON config file; command-line flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for written artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Solve with the band prior (fs) or without it (an).
    #[arg(long, global = true, value_enum, default_value_t = Mode::Fs)]
    mode: Mode,
    /// Solver accuracy (absolute and relative).
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Fs,
    An,
}

impl From<Mode> for TrialMode {
    fn from(m: Mode) -> TrialMode {
        match m {
            Mode::Fs => TrialMode::FsAn,
            Mode::An => TrialMode::An,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random model and mask, write the ground truth and observations.
    Synth,
    /// Solve the semidefinite program for an observations file.
    Solve {
        /// Observations JSON (defaults to <out>/observations.json).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Extract frequencies and gains from a solved instance.
    Retrieve {
        /// Solution JSON (defaults to <out>/solution.json).
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Completed-covariance tensor (defaults to <out>/bhat.fsb1).
        #[arg(long)]
        tensor: Option<PathBuf>,
    },
    /// Run one end-to-end seeded trial and print the result.
    Trial {
        /// Exit with status 2 if the solver or retrieval broke down.
        #[arg(long)]
        strict: bool,
    },
    /// Sweep success rates over an Ns x r grid for each prior quality.
    Phase {
        /// Trials per cell (overrides the config grid).
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Check the band certificates and decomposition of a stored tensor.
    Certify {
        /// Tensor file (defaults to <out>/bhat.fsb1).
        #[arg(long)]
        tensor: Option<PathBuf>,
    },
}

/// On-disk configuration. Every field is optional; absent ones fall back to
/// the reference operating point.
#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    schema: u32,
    dims: Option<Vec<usize>>,
    sampling: Option<Vec<FrequencyBand>>,
    bands: Option<BandSystem>,
    r: Option<usize>,
    ns: Option<usize>,
    frequencies: Option<Vec<Vec<f64>>>,
    success_threshold: Option<f64>,
    solver: Option<SolverOptions>,
    grid: Option<PhaseGrid>,
}

#[derive(Serialize, Deserialize)]
struct Observations {
    dims: Vec<usize>,
    mask: ObservationMask,
    y: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct SolutionFile {
    dims: Vec<usize>,
    bands: Option<BandSystem>,
    x_hat: Vec<[f64; 2]>,
    t_hat: f64,
    objective: f64,
    diagnostics: SolveDiagnostics,
}

#[derive(Serialize)]
struct CertifyReport {
    certificate: fsan::CertificateReport,
    decomposition_rank: Option<usize>,
    frequencies: Vec<Vec<f64>>,
    weights: Vec<f64>,
    decomposition_error: Option<String>,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig { schema: 1, ..FileConfig::default() });
    };
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let cfg: FileConfig = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))?;
    if cfg.schema != 1 {
        bail!("unsupported config schema {} (expected 1)", cfg.schema);
    }
    Ok(cfg)
}

fn trial_config(cli: &Cli, file: &FileConfig) -> Result<TrialConfig> {
    let mut cfg = TrialConfig::reference(cli.seed);
    if let Some(dims) = &file.dims {
        cfg.dims = Dims::new(dims.clone())?;
    }
    if let Some(s) = &file.sampling {
        cfg.sampling = s.clone();
    }
    if let Some(b) = &file.bands {
        cfg.bands = Some(b.clone());
    } else if file.sampling.is_some() {
        cfg.bands = Some(BandSystem::single(cfg.sampling.clone()));
    }
    if let Some(r) = file.r {
        cfg.r = r;
    }
    if let Some(ns) = file.ns {
        cfg.ns = ns;
    }
    if let Some(freqs) = &file.frequencies {
        cfg.frequencies = Some(freqs.iter().cloned().map(FrequencyTuple::new).collect());
        cfg.r = cfg.frequencies.as_ref().unwrap().len();
    }
    if let Some(th) = file.success_threshold {
        cfg.success_threshold = th;
    }
    if let Some(s) = &file.solver {
        cfg.solver = *s;
    }
    cfg.solver.eps_abs = cli.tol;
    cfg.solver.eps_rel = cli.tol;
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

fn pairs(xs: &[Complex64]) -> Vec<[f64; 2]> {
    xs.iter().map(|x| [x.re, x.im]).collect()
}

fn unpairs(xs: &[[f64; 2]]) -> Vec<Complex64> {
    xs.iter().map(|x| Complex64::new(x[0], x[1])).collect()
}

fn run(cli: Cli) -> Result<i32> {
    let file = load_config(cli.config.as_deref())?;
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Synth => {
            let cfg = trial_config(&cli, &file)?;
            let (model, mask) = draw_instance(&cfg)?;
            let x = synthesize(&model, &cfg.dims)?;
            let y = apply_mask(&x, &mask)?;
            write_json(&cli.out.join("model.json"), &model)?;
            write_json(
                &cli.out.join("observations.json"),
                &Observations { dims: cfg.dims.sizes().to_vec(), mask, y: pairs(&y) },
            )?;
            println!("wrote model.json and observations.json to {}", cli.out.display());
            Ok(0)
        }
        Command::Solve { input } => {
            let cfg = trial_config(&cli, &file)?;
            let path = input.clone().unwrap_or_else(|| cli.out.join("observations.json"));
            let obs: Observations = read_json(&path)?;
            let dims = Dims::new(obs.dims.clone())?;
            let bands = match cli.mode {
                Mode::Fs => cfg.bands.clone(),
                Mode::An => None,
            };
            let instance = assemble(&unpairs(&obs.y), &obs.mask, &dims, bands.as_ref())?;
            let solution = solve(&instance, &cfg.solver)?;
            let tensor_path = cli.out.join("bhat.fsb1");
            let mut tf = BufWriter::new(File::create(&tensor_path)?);
            solution.b_hat.write_binary(&mut tf)?;
            tf.flush()?;
            write_json(
                &cli.out.join("solution.json"),
                &SolutionFile {
                    dims: obs.dims,
                    bands,
                    x_hat: pairs(&solution.x_hat),
                    t_hat: solution.t_hat,
                    objective: solution.objective,
                    diagnostics: solution.diagnostics,
                },
            )?;
            println!(
                "objective {:.9}, {} iterations, {:?}",
                solution.objective,
                solution.diagnostics.iterations,
                solution.diagnostics.status
            );
            Ok(0)
        }
        Command::Retrieve { solution, tensor } => {
            let sol_path = solution.clone().unwrap_or_else(|| cli.out.join("solution.json"));
            let sol: SolutionFile = read_json(&sol_path)?;
            let dims = Dims::new(sol.dims.clone())?;
            let tensor_path = tensor.clone().unwrap_or_else(|| cli.out.join("bhat.fsb1"));
            let mut tf = BufReader::new(File::open(&tensor_path)?);
            let b_hat = HalfSpectrumTensor::read_binary(&mut tf)?;
            let t = build_level_toeplitz(&b_hat);
            let out =
                music_frequencies(&t, &dims, sol.bands.as_ref(), &MusicOptions::default())?;
            let x_hat = unpairs(&sol.x_hat);
            let (gains, gain_warning) =
                fsan::music::estimate_gains(&x_hat, &out.frequencies, &dims)?;
            let result = RetrievalResult {
                model: SpectralModel::new(out.frequencies.into_iter().zip(gains).collect()),
                residuals: out.residuals,
                r_hat: out.r_hat,
                source: RetrievalSource::FromT,
                degraded: out.degraded,
                gain_warning,
            };
            write_json(&cli.out.join("retrieval.json"), &result)?;
            fsan::experiments::write_spectrum_csv("solution", &out.spectrum, &cli.out)?;
            for (f, g) in &result.model.entries {
                println!("f = {:?}  gain = {:.6} + {:.6}i", f.components(), g.re, g.im);
            }
            Ok(0)
        }
        Command::Trial { strict } => {
            let cfg = trial_config(&cli, &file)?;
            let result = run_trial(&cfg, cli.mode.into())?;
            write_json(&cli.out.join("trial.json"), &result)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            if *strict && result.solver_error.is_some() {
                return Ok(2);
            }
            Ok(0)
        }
        Command::Phase { trials, jobs } => {
            let cfg = trial_config(&cli, &file)?;
            let mut grid = file.grid.clone().unwrap_or_default();
            grid.base_seed = cli.seed;
            if let Some(t) = trials {
                grid.trials_per_cell = *t;
            }
            let settings = match (&file.bands, &file.sampling) {
                // with explicit bands, sweep those against no prior
                (Some(b), _) => vec![
                    PriorSetting {
                        label: "accurate".into(),
                        mode: TrialMode::FsAn,
                        bands: Some(b.clone()),
                    },
                    PriorSetting::none(),
                ],
                (None, Some(s)) => vec![
                    PriorSetting {
                        label: "accurate".into(),
                        mode: TrialMode::FsAn,
                        bands: Some(BandSystem::single(s.clone())),
                    },
                    PriorSetting::none(),
                ],
                (None, None) => {
                    vec![PriorSetting::accurate(), PriorSetting::rough(), PriorSetting::none()]
                }
            };
            let table = phase_transition(&cfg, &grid, &settings, *jobs)?;
            write_json(&cli.out.join("phase.json"), &table)?;
            let files = emit_plotdata(&table, &[], &cli.out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            for (i, (setting, _)) in table.settings.iter().enumerate() {
                println!("mean success rate [{}]: {:.3}", setting.label, table.mean_rate(i));
            }
            Ok(0)
        }
        Command::Certify { tensor } => {
            let cfg = trial_config(&cli, &file)?;
            let tensor_path = tensor.clone().unwrap_or_else(|| cli.out.join("bhat.fsb1"));
            let mut tf = BufReader::new(File::open(&tensor_path)?);
            let b = HalfSpectrumTensor::read_binary(&mut tf)?;
            let bands = cfg
                .bands
                .clone()
                .unwrap_or_else(|| BandSystem::new(vec![None; b.dims().d()]).unwrap());
            let certificate = verify_fs_certificate(&b, &bands, 1e-8)?;
            let t = build_level_toeplitz(&b);
            let report = match vandermonde_decompose(&t, b.dims(), 1e-6) {
                Ok(dec) => CertifyReport {
                    certificate,
                    decomposition_rank: Some(dec.r()),
                    frequencies: dec
                        .frequencies
                        .iter()
                        .map(|f| f.components().to_vec())
                        .collect(),
                    weights: dec.weights.clone(),
                    decomposition_error: None,
                },
                Err(e) => CertifyReport {
                    certificate,
                    decomposition_rank: None,
                    frequencies: vec![],
                    weights: vec![],
                    decomposition_error: Some(e.to_string()),
                },
            };
            write_json(&cli.out.join("certificate.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
    }
}
