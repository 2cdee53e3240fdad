//! Seeded recovery trials and phase-transition sweeps, plus the CSV/gnuplot
//! plumbing used to plot them.

use std::f64::consts::TAU;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::band::{BandSystem, FrequencyBand};
use crate::error::{Error, Result};
use crate::model::{
    apply_mask, mask_from_rng, match_frequencies, nmse, synthesize, torus_dist, wrap_unit, Dims,
    FrequencyTuple, ObservationMask, SpectralModel,
};
use crate::music::{retrieve, MusicOptions, Pseudospectrum};
use crate::sdp::{assemble, solve, SolveDiagnostics, SolveStatus, SolverOptions};

/// Random frequency draws keep every per-component torus distance between
/// distinct tuples at or above this; closer pairs make recovery
/// ill-conditioned for every method and say nothing about the priors.
pub const MIN_SEPARATION: f64 = 1e-3;

/// Which convex program a trial solves: band-constrained or the plain
/// baseline that ignores the prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialMode {
    FsAn,
    An,
}

impl fmt::Display for TrialMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrialMode::FsAn => write!(f, "FS-AN"),
            TrialMode::An => write!(f, "AN"),
        }
    }
}

/// Everything a single trial needs. Gains are always unit magnitude with
/// uniform random phase.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialConfig {
    pub dims: Dims,
    /// Frequencies are drawn uniformly from these per-dimension intervals.
    pub sampling: Vec<FrequencyBand>,
    /// Prior handed to the band-constrained solver; `None` leaves even the
    /// FS mode unconstrained.
    pub bands: Option<BandSystem>,
    /// Number of sinusoids.
    pub r: usize,
    /// Number of observed grid points.
    pub ns: usize,
    /// Fixed frequency tuples; `None` draws them from `sampling`.
    pub frequencies: Option<Vec<FrequencyTuple>>,
    pub seed: u64,
    /// A trial succeeds iff NMSE falls strictly below this.
    pub success_threshold: f64,
    pub solver: SolverOptions,
}

impl TrialConfig {
    /// The two-dimensional 8x8 operating point with bands
    /// [0.3,0.4] x [0.5,0.6], r = 3 and Ns = 12.
    pub fn reference(seed: u64) -> Self {
        let dims = Dims::new(vec![8, 8]).unwrap();
        let sampling = reference_bands_vec();
        TrialConfig {
            dims,
            bands: Some(BandSystem::single(sampling.clone())),
            sampling,
            r: 3,
            ns: 12,
            frequencies: None,
            seed,
            success_threshold: 1e-5,
            solver: SolverOptions::default(),
        }
    }

    /// `reference`, but with the fixed frequency triple
    /// (0.35,0.51), (0.31,0.59), (0.37,0.57).
    pub fn reference_fixed(seed: u64) -> Self {
        let mut cfg = Self::reference(seed);
        cfg.frequencies = Some(reference_frequencies());
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims.d();
        if self.sampling.len() != d {
            return Err(Error::DimMismatch(format!(
                "{} sampling intervals for {} dimensions",
                self.sampling.len(),
                d
            )));
        }
        if self.ns > self.dims.n_total() {
            return Err(Error::InvalidArgument(format!(
                "Ns = {} exceeds the grid size {}",
                self.ns,
                self.dims.n_total()
            )));
        }
        if self.r == 0 {
            return Err(Error::InvalidArgument("r must be positive".into()));
        }
        if let Some(b) = &self.bands {
            if b.d() != d {
                return Err(Error::DimMismatch(format!(
                    "band system has {} dims, grid has {d}",
                    b.d()
                )));
            }
            for (i, s) in self.sampling.iter().enumerate() {
                if let Some(prior) = b.single_band(i) {
                    let inside = prior.contains(s.lo())
                        && prior.contains(s.hi())
                        && s.span() <= prior.span() + 1e-12;
                    if !inside {
                        return Err(Error::InvalidArgument(format!(
                            "sampling interval {i} is not contained in the declared band"
                        )));
                    }
                }
            }
        }
        if let Some(freqs) = &self.frequencies {
            if freqs.len() != self.r {
                return Err(Error::DimMismatch(format!(
                    "{} fixed frequencies for r = {}",
                    freqs.len(),
                    self.r
                )));
            }
            for f in freqs {
                if f.len() != d {
                    return Err(Error::DimMismatch(format!(
                        "fixed frequency has {} components, grid has {d}",
                        f.len()
                    )));
                }
                if let Some(b) = &self.bands {
                    if !b.contains(f) {
                        return Err(Error::InvalidArgument(format!(
                            "fixed frequency {:?} lies outside the declared bands",
                            f.components()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Outcome of one seeded trial. `success` is the NMSE test alone; callers
/// wanting frequency accuracy combine it with `freq_errors`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub mode: TrialMode,
    pub seed: u64,
    pub nmse: f64,
    pub success: bool,
    /// Max per-component torus error per true frequency after matching;
    /// infinite when retrieval returned the wrong count.
    pub freq_errors: Vec<f64>,
    pub objective: f64,
    pub wall_seconds: f64,
    pub diagnostics: SolveDiagnostics,
    /// Solver or retrieval breakdowns are recorded here instead of thrown.
    pub solver_error: Option<String>,
}

/// Draw `r` tuples uniformly from the per-dimension intervals, rejecting any
/// candidate that comes within `MIN_SEPARATION` of an accepted tuple in any
/// component.
pub fn sample_frequencies(
    rng: &mut impl Rng,
    sampling: &[FrequencyBand],
    r: usize,
) -> Result<Vec<FrequencyTuple>> {
    let mut accepted: Vec<FrequencyTuple> = Vec::with_capacity(r);
    let mut attempts = 0usize;
    while accepted.len() < r {
        attempts += 1;
        if attempts > 10_000 * r.max(1) {
            return Err(Error::InvalidArgument(
                "sampling region too small for the requested separation".into(),
            ));
        }
        let cand = FrequencyTuple::new(
            sampling
                .iter()
                .map(|b| wrap_unit(b.lo() + rng.gen::<f64>() * b.span()))
                .collect(),
        );
        let clash = accepted.iter().any(|a| {
            a.components()
                .iter()
                .zip(cand.components())
                .any(|(&x, &y)| torus_dist(x, y) < MIN_SEPARATION)
        });
        if !clash {
            accepted.push(cand);
        }
    }
    Ok(accepted)
}

/// Draw the ground-truth model and observation mask for a config, in the
/// fixed order (frequencies, phases, mask) that gives seeds the same meaning
/// everywhere.
pub fn draw_instance(config: &TrialConfig) -> Result<(SpectralModel, ObservationMask)> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let freqs = match &config.frequencies {
        Some(f) => f.clone(),
        None => sample_frequencies(&mut rng, &config.sampling, config.r)?,
    };
    let gains: Vec<Complex64> = (0..config.r)
        .map(|_| Complex64::from_polar(1.0, rng.gen::<f64>() * TAU))
        .collect();
    let model = SpectralModel::new(freqs.into_iter().zip(gains).collect());
    let mask = mask_from_rng(&mut rng, &config.dims, config.ns)?;
    Ok((model, mask))
}

/// Run one seeded recovery trial end to end: draw the model and mask, solve
/// in the requested mode, and score the result against the ground truth.
/// Solver and retrieval failures are recorded in the result, not returned as
/// errors.
pub fn run_trial(config: &TrialConfig, mode: TrialMode) -> Result<TrialResult> {
    let (model, mask) = draw_instance(config)?;
    let freqs = model.frequencies();
    let x_star = synthesize(&model, &config.dims)?;
    let y = apply_mask(&x_star, &mask)?;
    let bands = match mode {
        TrialMode::FsAn => config.bands.as_ref(),
        TrialMode::An => None,
    };
    let instance = assemble(&y, &mask, &config.dims, bands)?;

    let start = Instant::now();
    let mut result = TrialResult {
        mode,
        seed: config.seed,
        nmse: f64::INFINITY,
        success: false,
        freq_errors: vec![f64::INFINITY; config.r],
        objective: f64::NAN,
        wall_seconds: 0.0,
        diagnostics: SolveDiagnostics {
            iterations: 0,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            status: SolveStatus::InfeasibleLike,
            polished: false,
        },
        solver_error: None,
    };
    match solve(&instance, &config.solver) {
        Err(e) => result.solver_error = Some(e.to_string()),
        Ok(solution) => {
            result.nmse = nmse(&solution.x_hat, &x_star)?;
            result.success = result.nmse < config.success_threshold;
            result.objective = solution.objective;
            result.diagnostics = solution.diagnostics;
            match retrieve(&solution, &config.dims, bands, &MusicOptions::default()) {
                Err(e) => result.solver_error = Some(e.to_string()),
                Ok(ret) => {
                    let est = ret.model.frequencies();
                    if est.len() == freqs.len() {
                        result.freq_errors = match_frequencies(&est, &freqs)?
                            .into_iter()
                            .map(|(_, err)| err)
                            .collect();
                    }
                }
            }
        }
    }
    result.wall_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

/// The Ns x r sweep layout: which cells to run and how many seeds per cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub ns_values: Vec<usize>,
    pub r_values: Vec<usize>,
    pub trials_per_cell: usize,
    pub base_seed: u64,
}

impl Default for PhaseGrid {
    fn default() -> Self {
        PhaseGrid {
            ns_values: (1..=10).map(|k| 4 * k).collect(),
            r_values: (1..=6).collect(),
            trials_per_cell: 10,
            base_seed: 0,
        }
    }
}

/// One prior quality under sweep: a label, the solve mode and the bands the
/// FS mode is given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSetting {
    pub label: String,
    pub mode: TrialMode,
    pub bands: Option<BandSystem>,
}

impl PriorSetting {
    pub fn accurate() -> Self {
        PriorSetting {
            label: "accurate".into(),
            mode: TrialMode::FsAn,
            bands: Some(BandSystem::single(reference_bands_vec())),
        }
    }

    pub fn rough() -> Self {
        PriorSetting {
            label: "rough".into(),
            mode: TrialMode::FsAn,
            bands: Some(BandSystem::single(rough_bands_vec())),
        }
    }

    pub fn none() -> Self {
        PriorSetting { label: "none".into(), mode: TrialMode::An, bands: None }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhaseCell {
    pub r: usize,
    pub ns: usize,
    pub successes: usize,
    pub trials: usize,
}

impl PhaseCell {
    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

/// Success rates for every setting over the grid; cells are stored r-major
/// in the order of `grid.r_values` then `grid.ns_values`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseTable {
    pub grid: PhaseGrid,
    pub settings: Vec<(PriorSetting, Vec<PhaseCell>)>,
}

impl PhaseTable {
    pub fn rates(&self, setting: usize) -> Vec<Vec<f64>> {
        let nc = self.grid.ns_values.len();
        if nc == 0 {
            return vec![];
        }
        self.settings[setting].1
            .chunks(nc)
            .map(|row| row.iter().map(PhaseCell::rate).collect())
            .collect()
    }

    pub fn mean_rate(&self, setting: usize) -> f64 {
        let cells = &self.settings[setting].1;
        if cells.is_empty() {
            return 0.0;
        }
        cells.iter().map(PhaseCell::rate).sum::<f64>() / cells.len() as f64
    }
}

/// Per-trial seed: the base seed XOR-mixed with the cell and trial indices.
/// Distinct odd multipliers keep (cell, trial) pairs from colliding the way
/// a plain XOR of small integers would.
pub fn derive_seed(base: u64, cell: usize, trial: usize) -> u64 {
    base ^ (cell as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (trial as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Sweep the grid for each prior setting. `template` supplies dims, sampling
/// region, threshold and solver options; r, Ns, seed and bands are overridden
/// per task. `jobs = 0` uses all cores. Every trial is independent, so any
/// cell can be recomputed in isolation from its seeds.
pub fn phase_transition(
    template: &TrialConfig,
    grid: &PhaseGrid,
    settings: &[PriorSetting],
    jobs: usize,
) -> Result<PhaseTable> {
    use rayon::prelude::*;

    let mut tasks: Vec<(usize, usize, TrialConfig, TrialMode)> = Vec::new();
    for (si, setting) in settings.iter().enumerate() {
        for (ci, (&r, &ns)) in grid
            .r_values
            .iter()
            .flat_map(|r| grid.ns_values.iter().map(move |ns| (r, ns)))
            .enumerate()
        {
            for trial in 0..grid.trials_per_cell {
                let mut cfg = template.clone();
                cfg.r = r;
                cfg.ns = ns;
                cfg.frequencies = None;
                cfg.bands = setting.bands.clone();
                cfg.seed = derive_seed(grid.base_seed, ci, trial);
                cfg.validate()?;
                tasks.push((si, ci, cfg, setting.mode));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<(usize, usize, bool)>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(si, ci, cfg, mode)| run_trial(cfg, *mode).map(|res| (*si, *ci, res.success)))
            .collect()
    });

    let cells_per_setting = grid.r_values.len() * grid.ns_values.len();
    let mut table = PhaseTable {
        grid: grid.clone(),
        settings: settings
            .iter()
            .map(|s| {
                let cells = grid
                    .r_values
                    .iter()
                    .flat_map(|&r| {
                        grid.ns_values
                            .iter()
                            .map(move |&ns| PhaseCell { r, ns, successes: 0, trials: 0 })
                    })
                    .collect::<Vec<_>>();
                debug_assert_eq!(cells.len(), cells_per_setting);
                (s.clone(), cells)
            })
            .collect(),
    };
    for outcome in outcomes {
        let (si, ci, success) = outcome?;
        let cell = &mut table.settings[si].1[ci];
        cell.trials += 1;
        if success {
            cell.successes += 1;
        }
    }
    Ok(table)
}

fn slug(label: &str) -> String {
    let mut s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    while s.contains("--") {
        s = s.replace("--", "-");
    }
    s.trim_matches('-').to_string()
}

/// Write one success-rate CSV per setting (rows = r, columns = Ns), a
/// gnuplot stub drawing them as grayscale heatmaps, and one CSV per supplied
/// pseudospectrum. Returns the paths written.
pub fn emit_plotdata(
    table: &PhaseTable,
    spectra: &[(String, Pseudospectrum)],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    for (i, (setting, _)) in table.settings.iter().enumerate() {
        let path = dir.join(format!("rates_{}.csv", slug(&setting.label)));
        let mut f = std::fs::File::create(&path)?;
        write!(f, "r")?;
        for ns in &table.grid.ns_values {
            write!(f, ",{ns}")?;
        }
        writeln!(f)?;
        for (row, &r) in table.rates(i).iter().zip(&table.grid.r_values) {
            write!(f, "{r}")?;
            for rate in row {
                write!(f, ",{rate:.6}")?;
            }
            writeln!(f)?;
        }
        written.push(path);
    }

    let gp = dir.join("phase.gnuplot");
    let mut f = std::fs::File::create(&gp)?;
    writeln!(f, "set datafile separator comma")?;
    writeln!(f, "set terminal pngcairo size {},360", 360 * table.settings.len().max(1))?;
    writeln!(f, "set output 'phase.png'")?;
    writeln!(f, "set palette gray")?;
    writeln!(f, "set cbrange [0:1]")?;
    writeln!(f, "set xlabel 'Ns'")?;
    writeln!(f, "set ylabel 'r'")?;
    writeln!(f, "set multiplot layout 1,{}", table.settings.len().max(1))?;
    for (setting, _) in &table.settings {
        writeln!(f, "set title '{}'", setting.label)?;
        writeln!(
            f,
            "plot 'rates_{}.csv' matrix rowheaders columnheaders with image notitle",
            slug(&setting.label)
        )?;
    }
    writeln!(f, "unset multiplot")?;
    written.push(gp);

    for (label, spectrum) in spectra {
        written.push(write_spectrum_csv(label, spectrum, dir)?);
    }
    Ok(written)
}

/// Flatten a pseudospectrum to CSV rows `f1,..,fd,value` for stem/scatter
/// plots.
pub fn write_spectrum_csv(label: &str, spectrum: &Pseudospectrum, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("pseudospectrum_{}.csv", slug(label)));
    let mut f = std::fs::File::create(&path)?;
    let d = spectrum.axes.len();
    for i in 1..=d {
        write!(f, "f{i},")?;
    }
    writeln!(f, "value")?;
    let mut idx = vec![0usize; d];
    for v in &spectrum.values {
        for (i, &k) in idx.iter().enumerate() {
            write!(f, "{},", spectrum.axes[i][k])?;
        }
        writeln!(f, "{v}")?;
        for i in (0..d).rev() {
            idx[i] += 1;
            if idx[i] < spectrum.axes[i].len() {
                break;
            }
            idx[i] = 0;
        }
    }
    Ok(path)
}

/// Parse a CSV written by `emit_plotdata` back into (r values, Ns values,
/// rate matrix).
pub fn parse_rate_csv(path: &Path) -> Result<(Vec<usize>, Vec<usize>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Serialization("empty rate CSV".into()))?;
    let ns_values: Vec<usize> = header
        .split(',')
        .skip(1)
        .map(|t| t.parse().map_err(|e| Error::Serialization(format!("bad Ns '{t}': {e}"))))
        .collect::<Result<_>>()?;
    let mut r_values = Vec::new();
    let mut rates = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut tokens = line.split(',');
        let r = tokens
            .next()
            .unwrap()
            .parse()
            .map_err(|e| Error::Serialization(format!("bad r: {e}")))?;
        let row: Vec<f64> = tokens
            .map(|t| t.parse().map_err(|e| Error::Serialization(format!("bad rate '{t}': {e}"))))
            .collect::<Result<_>>()?;
        if row.len() != ns_values.len() {
            return Err(Error::Serialization(format!(
                "row for r = {r} has {} rates, header has {} columns",
                row.len(),
                ns_values.len()
            )));
        }
        r_values.push(r);
        rates.push(row);
    }
    Ok((r_values, ns_values, rates))
}

pub fn reference_bands_vec() -> Vec<FrequencyBand> {
    vec![FrequencyBand::new(0.3, 0.4).unwrap(), FrequencyBand::new(0.5, 0.6).unwrap()]
}

/// A deliberately loose prior around the reference bands.
pub fn rough_bands_vec() -> Vec<FrequencyBand> {
    vec![FrequencyBand::new(0.2, 0.4).unwrap(), FrequencyBand::new(0.5, 0.7).unwrap()]
}

/// The fixed frequency triple used by the reference trials.
pub fn reference_frequencies() -> Vec<FrequencyTuple> {
    vec![
        FrequencyTuple::new(vec![0.35, 0.51]),
        FrequencyTuple::new(vec![0.31, 0.59]),
        FrequencyTuple::new(vec![0.37, 0.57]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_frequencies_respect_region_and_separation() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let bands = reference_bands_vec();
        for _ in 0..20 {
            let freqs = sample_frequencies(&mut rng, &bands, 4).unwrap();
            assert_eq!(freqs.len(), 4);
            for f in &freqs {
                assert!(bands[0].contains(f[0]) && bands[1].contains(f[1]));
            }
            for i in 0..4 {
                for j in 0..i {
                    for k in 0..2 {
                        assert!(torus_dist(freqs[i][k], freqs[j][k]) >= MIN_SEPARATION);
                    }
                }
            }
        }
    }

    #[test]
    fn sampling_rejects_impossible_separation() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let tight = vec![FrequencyBand::new(0.3, 0.3007).unwrap()];
        // at most a handful of separated points fit; 50 cannot
        assert!(sample_frequencies(&mut rng, &tight, 50).is_err());
    }

    #[test]
    fn config_validation_catches_mismatches() {
        let mut cfg = TrialConfig::reference(0);
        cfg.ns = 1000;
        assert!(cfg.validate().is_err());

        let mut cfg = TrialConfig::reference(0);
        cfg.sampling = vec![FrequencyBand::new(0.1, 0.2).unwrap(); 2];
        assert!(cfg.validate().is_err(), "sampling outside bands must fail");

        let mut cfg = TrialConfig::reference_fixed(0);
        cfg.frequencies = Some(vec![FrequencyTuple::new(vec![0.1, 0.55]); 3]);
        assert!(cfg.validate().is_err(), "fixed frequency outside bands must fail");

        assert!(TrialConfig::reference_fixed(5).validate().is_ok());
    }

    #[test]
    fn full_observation_trial_succeeds_in_both_modes() {
        let mut cfg = TrialConfig::reference(11);
        cfg.dims = Dims::new(vec![4, 4]).unwrap();
        cfg.r = 2;
        cfg.ns = 16;
        cfg.frequencies = Some(vec![
            FrequencyTuple::new(vec![0.32, 0.52]),
            FrequencyTuple::new(vec![0.38, 0.58]),
        ]);
        for mode in [TrialMode::FsAn, TrialMode::An] {
            let res = run_trial(&cfg, mode).unwrap();
            assert!(res.solver_error.is_none(), "{:?}", res.solver_error);
            assert!(res.success, "mode {mode}: NMSE {}", res.nmse);
            assert!(res.freq_errors.iter().all(|&e| e < 1e-3), "{:?}", res.freq_errors);
        }
    }

    #[test]
    fn trial_results_are_reproducible() {
        let mut cfg = TrialConfig::reference(42);
        cfg.dims = Dims::new(vec![4, 4]).unwrap();
        cfg.r = 1;
        cfg.ns = 9;
        let a = run_trial(&cfg, TrialMode::FsAn).unwrap();
        let b = run_trial(&cfg, TrialMode::FsAn).unwrap();
        assert_eq!(a.success, b.success);
        assert_eq!(a.nmse, b.nmse);
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn derived_seeds_do_not_collide_on_small_grids() {
        let mut seen = std::collections::HashSet::new();
        for cell in 0..64 {
            for trial in 0..64 {
                assert!(seen.insert(derive_seed(99, cell, trial)));
            }
        }
    }

    #[test]
    fn phase_table_roundtrips_through_csv() {
        let grid = PhaseGrid {
            ns_values: vec![4, 8],
            r_values: vec![1, 2],
            trials_per_cell: 2,
            base_seed: 0,
        };
        let cells = vec![
            PhaseCell { r: 1, ns: 4, successes: 2, trials: 2 },
            PhaseCell { r: 1, ns: 8, successes: 1, trials: 2 },
            PhaseCell { r: 2, ns: 4, successes: 0, trials: 2 },
            PhaseCell { r: 2, ns: 8, successes: 2, trials: 2 },
        ];
        let table = PhaseTable {
            grid,
            settings: vec![(PriorSetting::accurate(), cells)],
        };
        let dir = std::env::temp_dir().join("fsan_plot_test");
        let files = emit_plotdata(&table, &[], &dir).unwrap();
        let csv = files.iter().find(|p| p.ends_with("rates_accurate.csv")).unwrap();
        let (r_values, ns_values, rates) = parse_rate_csv(csv).unwrap();
        assert_eq!(r_values, vec![1, 2]);
        assert_eq!(ns_values, vec![4, 8]);
        assert_eq!(rates, table.rates(0));
        assert!(files.iter().any(|p| p.ends_with("phase.gnuplot")));
    }

    #[test]
    fn empty_grid_emits_header_only() {
        let table = PhaseTable {
            grid: PhaseGrid {
                ns_values: vec![],
                r_values: vec![],
                trials_per_cell: 0,
                base_seed: 0,
            },
            settings: vec![(PriorSetting::none(), vec![])],
        };
        let dir = std::env::temp_dir().join("fsan_plot_empty");
        let files = emit_plotdata(&table, &[], &dir).unwrap();
        let csv = files.iter().find(|p| p.ends_with("rates_none.csv")).unwrap();
        let text = std::fs::read_to_string(csv).unwrap();
        assert_eq!(text.trim(), "r");
        let (r_values, ns_values, rates) = parse_rate_csv(csv).unwrap();
        assert!(r_values.is_empty() && ns_values.is_empty() && rates.is_empty());
    }

    #[test]
    fn tiny_phase_sweep_counts_every_trial() {
        let mut template = TrialConfig::reference(0);
        template.dims = Dims::new(vec![3, 3]).unwrap();
        let grid = PhaseGrid {
            ns_values: vec![9],
            r_values: vec![1],
            trials_per_cell: 2,
            base_seed: 5,
        };
        let settings = [PriorSetting::accurate(), PriorSetting::none()];
        let table = phase_transition(&template, &grid, &settings, 1).unwrap();
        for (_, cells) in &table.settings {
            assert_eq!(cells.len(), 1);
            assert_eq!(cells[0].trials, 2);
            // full observation at r = 1: both priors succeed
            assert_eq!(cells[0].successes, 2);
        }
        assert!(table.mean_rate(0) >= table.mean_rate(1) - 1e-12);
    }
}
