//! Acceptance gate: eight end-to-end criteria, one test each, printing one
//! pass/fail line per criterion (visible with --nocapture).

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use fsan::experiments::{
    phase_transition, reference_bands_vec, run_trial, sample_frequencies, PhaseGrid, PriorSetting,
    TrialConfig, TrialMode, TrialResult,
};
use fsan::model::{match_frequencies, torus_dist, wrap_unit, Dims, FrequencyTuple, ObservationMask};
use fsan::sdp::{assemble, solve, SolverOptions};
use fsan::toeplitz::{
    adjoint_level_toeplitz, adjoint_tg, build_level_toeplitz, build_tg, GCoefficients,
    HalfSpectrumTensor,
};
use fsan::vandermonde::{pinv_sandwich, reduced_steering_matrix, vandermonde_decompose};
use fsan::{BandSystem, FrequencyBand, SpectralModel};

/// The heavy criteria share one core; interleaving them only distorts the
/// per-trial wall clocks.
static GATE: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|p| p.into_inner())
}

fn report(criterion: usize, pass: bool, detail: &str) {
    println!("criterion {criterion}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn reference_batch() -> &'static [(TrialResult, TrialResult)] {
    static BATCH: OnceLock<Vec<(TrialResult, TrialResult)>> = OnceLock::new();
    BATCH.get_or_init(|| {
        (0..20)
            .map(|seed| {
                let cfg = TrialConfig::reference_fixed(seed);
                (
                    run_trial(&cfg, TrialMode::FsAn).unwrap(),
                    run_trial(&cfg, TrialMode::An).unwrap(),
                )
            })
            .collect()
    })
}

fn accurate_trial(res: &TrialResult) -> bool {
    res.success && res.freq_errors.iter().all(|&e| e <= 1e-3)
}

#[test]
fn criterion_1_fixed_frequency_recovery_rates() {
    let _g = serial();
    let batch = reference_batch();
    let fs_hits = batch.iter().filter(|(fs, _)| accurate_trial(fs)).count();
    let an_hits = batch.iter().filter(|(_, an)| accurate_trial(an)).count();
    let max_wall = batch
        .iter()
        .flat_map(|(fs, an)| [fs.wall_seconds, an.wall_seconds])
        .fold(0.0f64, f64::max);
    let pass = fs_hits >= 16 && an_hits <= 8 && max_wall <= 120.0;
    report(
        1,
        pass,
        &format!("FS {fs_hits}/20, AN {an_hits}/20 accurate recoveries, max wall {max_wall:.1}s"),
    );
}

#[test]
fn criterion_2_full_observation_objective_matches_gain_mass() {
    let _g = serial();
    let start = Instant::now();
    let dims = Dims::new(vec![8, 8]).unwrap();
    let bands = BandSystem::single(reference_bands_vec());
    let mask = ObservationMask::unit((0..dims.n_total()).collect(), dims.n_total()).unwrap();
    let mut worst_obj = 0.0f64;
    let mut worst_freq = 0.0f64;
    let mut failures = Vec::new();
    for i in 0..50u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(100 + i);
        let r = 1 + (i as usize) % 3;
        let freqs = separated_frequencies(&mut rng, &reference_bands_vec(), r, 0.02);
        let gains: Vec<Complex64> = (0..r)
            .map(|_| {
                Complex64::from_polar(
                    0.5 + rng.gen::<f64>(),
                    rng.gen::<f64>() * std::f64::consts::TAU,
                )
            })
            .collect();
        let model = SpectralModel::new(freqs.iter().cloned().zip(gains).collect());
        let mass = model.gain_magnitude_sum();
        let x = fsan::synthesize(&model, &dims).unwrap();
        let instance = assemble(&x, &mask, &dims, Some(&bands)).unwrap();
        let solution = solve(&instance, &SolverOptions::default()).unwrap();
        let obj_err = (solution.objective - mass).abs() / mass;
        worst_obj = worst_obj.max(obj_err);
        let t = build_level_toeplitz(&solution.b_hat);
        match vandermonde_decompose(&t, &dims, 1e-6) {
            Ok(dec) if dec.r() == r => {
                let errs = match_frequencies(&dec.frequencies, &freqs).unwrap();
                let max_err = errs.iter().map(|&(_, e)| e).fold(0.0f64, f64::max);
                worst_freq = worst_freq.max(max_err);
                if obj_err > 1e-5 || max_err > 1e-4 {
                    failures.push(i);
                }
            }
            Ok(dec) => failures.push(i + 1000 * dec.r() as u64),
            Err(_) => failures.push(i + 100_000),
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && elapsed <= 1800.0;
    report(
        2,
        pass,
        &format!(
            "50 full-observation models: worst objective error {worst_obj:.2e}, worst frequency \
             error {worst_freq:.2e}, {:.0}s{}",
            elapsed,
            if failures.is_empty() { String::new() } else { format!(", failures {failures:?}") }
        ),
    );
}

#[test]
fn criterion_3_band_polynomial_sign_pattern() {
    let _g = serial();
    let mut rng = ChaCha20Rng::seed_from_u64(300);
    let mut worst_endpoint = 0.0f64;
    let mut sign_errors = 0usize;
    let mut wrapping = 0usize;
    for i in 0..100 {
        let band = if i < 25 {
            wrapping += 1;
            FrequencyBand::new(0.7 + rng.gen::<f64>() * 0.25, 0.05 + rng.gen::<f64>() * 0.25)
                .unwrap()
        } else {
            let lo = rng.gen::<f64>() * 0.5;
            FrequencyBand::new(lo, lo + 0.05 + rng.gen::<f64>() * 0.4).unwrap()
        };
        worst_endpoint = worst_endpoint
            .max(band.g_eval(band.lo()).abs())
            .max(band.g_eval(band.hi()).abs());
        let span = band.span();
        for j in 0..1000 {
            let u = (j as f64 + 0.5) / 1000.0;
            if band.g_eval(wrap_unit(band.lo() + u * span)) <= 0.0 {
                sign_errors += 1;
            }
            if band.g_eval(wrap_unit(band.hi() + u * (1.0 - span))) >= 0.0 {
                sign_errors += 1;
            }
        }
    }
    let pass = worst_endpoint <= 1e-12 && sign_errors == 0 && wrapping >= 20;
    report(
        3,
        pass,
        &format!(
            "100 bands ({wrapping} wrapping): worst endpoint |g| {worst_endpoint:.2e}, \
             {sign_errors} sign errors over 200k samples"
        ),
    );
}

#[test]
fn criterion_4_certificates_separate_in_band_from_out_of_band() {
    let _g = serial();
    let start = Instant::now();
    let dims = Dims::new(vec![8, 8]).unwrap();
    let bands = BandSystem::single(reference_bands_vec());
    let band_vec = reference_bands_vec();
    let mut in_band_failures = 0usize;
    let mut out_band_misses = 0usize;
    for i in 0..100u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(400 + i);
        let r = 1 + (i as usize) % 4;
        let freqs = sample_frequencies(&mut rng, &band_vec, r).unwrap();
        let atoms: Vec<(FrequencyTuple, f64)> =
            freqs.iter().map(|f| (f.clone(), 0.5 + rng.gen::<f64>())).collect();
        let b = HalfSpectrumTensor::from_weighted_atoms(&dims, &atoms);
        let rep = fsan::verify_fs_certificate(&b, &bands, 1e-8).unwrap();
        if !(rep.pass && rep.rank < 8) {
            in_band_failures += 1;
        }

        // push one component of one atom at least 0.05 outside its band
        let dim = (i as usize) % 2;
        let mut moved = atoms.clone();
        let mut comps = moved[0].0.components().to_vec();
        comps[dim] = wrap_unit(band_vec[dim].hi() + 0.05 + rng.gen::<f64>() * 0.8);
        moved[0].0 = FrequencyTuple::new(comps);
        let b = HalfSpectrumTensor::from_weighted_atoms(&dims, &moved);
        let rep = fsan::verify_fs_certificate(&b, &bands, 1e-8).unwrap();
        let block = rep.band_blocks.iter().find(|c| c.dim == dim).unwrap();
        let detected =
            block.check.lambda_min < -1e-10 * block.check.lambda_max.max(f64::MIN_POSITIVE);
        if !detected || rep.pass || rep.rank >= 8 {
            out_band_misses += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = in_band_failures == 0 && out_band_misses == 0 && elapsed <= 60.0;
    report(
        4,
        pass,
        &format!(
            "100 in-band models all certified ({in_band_failures} failures), 100 out-of-band \
             models all rejected by the matching block ({out_band_misses} misses), {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_5_banded_map_factorization_identities() {
    let _g = serial();
    let shapes: [&[usize]; 5] = [&[4, 4], &[5, 4], &[6, 5], &[4, 3, 3], &[3, 3, 3]];
    let mut worst_fact = 0.0f64;
    let mut worst_sand = 0.0f64;
    for i in 0..50u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(500 + i);
        let dims = Dims::new(shapes[(i as usize) % shapes.len()].to_vec()).unwrap();
        let d = dims.d();
        let r = 1 + (i as usize) % 3;
        let full: Vec<FrequencyBand> =
            (0..d).map(|_| FrequencyBand::new(0.0, 0.999_999).unwrap()).collect();
        let freqs = separated_frequencies(&mut rng, &full, r, 0.15);
        let sigma: Vec<f64> = (0..r).map(|_| 0.5 + rng.gen::<f64>()).collect();
        let atoms: Vec<(FrequencyTuple, f64)> =
            freqs.iter().cloned().zip(sigma.iter().copied()).collect();
        let b = HalfSpectrumTensor::from_weighted_atoms(&dims, &atoms);
        let a = reduced_steering_matrix(&freqs, &dims);
        for axis in 0..d {
            let lo = rng.gen::<f64>();
            let band = FrequencyBand::new(lo, wrap_unit(lo + 0.1 + rng.gen::<f64>() * 0.3))
                .unwrap();
            let g = GCoefficients::from_band(&band, axis);
            let tg = build_tg(&b, &g).unwrap();
            let nr = dims.n_reduced();
            let mut recon = faer::Mat::<faer::c64>::zeros(nr, nr);
            for l in 0..r {
                let w = sigma[l] * g.eval(freqs[l][axis]);
                for p in 0..nr {
                    for q in 0..nr {
                        recon[(p, q)] += a[(p, l)] * a[(q, l)].conj() * w;
                    }
                }
            }
            let mut scale = 1.0f64;
            let mut fact = 0.0f64;
            for p in 0..nr {
                for q in 0..nr {
                    scale = scale.max((tg[(p, q)]).norm());
                    fact = fact.max((tg[(p, q)] - recon[(p, q)]).norm());
                }
            }
            worst_fact = worst_fact.max(fact / scale);

            let sandwich = pinv_sandwich(&a, &tg).unwrap();
            let mut sand = 0.0f64;
            for p in 0..r {
                for q in 0..r {
                    let want = if p == q {
                        faer::c64::new(sigma[p] * g.eval(freqs[p][axis]), 0.0)
                    } else {
                        faer::c64::new(0.0, 0.0)
                    };
                    sand = sand.max((sandwich[(p, q)] - want).norm());
                }
            }
            worst_sand = worst_sand.max(sand / scale.max(1.0));
        }
    }
    let pass = worst_fact <= 1e-10 && worst_sand <= 1e-8;
    report(
        5,
        pass,
        &format!(
            "50 models: worst factorization deviation {worst_fact:.2e}, worst diagonal-sandwich \
             deviation {worst_sand:.2e}"
        ),
    );
}

#[test]
fn criterion_6_adjoint_pairing_against_double_sum_oracle() {
    let _g = serial();
    let shapes: [&[usize]; 6] = [&[2, 2], &[3, 2], &[3, 3], &[4, 3], &[2, 2, 2], &[5, 4, 3]];
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(600 + i);
        let dims = Dims::new(shapes[(i as usize) % shapes.len()].to_vec()).unwrap();
        let d = dims.d();
        let b = random_tensor(&dims, &mut rng);
        let n = dims.n_total();
        let m_full = random_matrix(n, &mut rng);

        // full map: oracle computes both pairings entry by entry
        let mut oracle = Complex64::ZERO;
        let mut diff = vec![0isize; d];
        for row in 0..n {
            let mr = dims.unflat(row);
            for col in 0..n {
                let nc = dims.unflat(col);
                for k in 0..d {
                    diff[k] = mr[k] as isize - nc[k] as isize;
                }
                oracle += b.get(&diff).conj() * mat_get(&m_full, row, col);
            }
        }
        let t = build_level_toeplitz(&b);
        let mut lhs = Complex64::ZERO;
        for row in 0..n {
            for col in 0..n {
                let v = t[(row, col)];
                lhs += Complex64::new(v.re, v.im).conj() * mat_get(&m_full, row, col);
            }
        }
        let adj = adjoint_level_toeplitz(&m_full, &dims).unwrap();
        let mut rhs = Complex64::ZERO;
        for (bv, av) in b.values().iter().zip(adj.values()) {
            rhs += bv.conj() * av;
        }
        let scale = 1.0 + oracle.norm();
        worst = worst.max((lhs - oracle).norm() / scale).max((rhs - oracle).norm() / scale);

        // banded map on a random axis with a random band
        let axis = (i as usize) % d;
        let lo = rng.gen::<f64>();
        let band =
            FrequencyBand::new(lo, wrap_unit(lo + 0.1 + rng.gen::<f64>() * 0.5)).unwrap();
        let g = GCoefficients::from_band(&band, axis);
        let nr = dims.n_reduced();
        let m_red = random_matrix(nr, &mut rng);
        let limits: Vec<usize> = dims.sizes().iter().map(|&s| s - 1).collect();
        let reduced = index_list(&limits);
        let rks = [(-1isize, g.r1.conj()), (0, Complex64::new(g.r0, 0.0)), (1, g.r1)];
        let mut oracle_g = Complex64::ZERO;
        for (row, mr) in reduced.iter().enumerate() {
            for (col, nc) in reduced.iter().enumerate() {
                for k in 0..d {
                    diff[k] = mr[k] as isize - nc[k] as isize;
                }
                let mut v = Complex64::ZERO;
                for &(kk, rk) in &rks {
                    diff[axis] -= kk;
                    v += rk * b.get(&diff);
                    diff[axis] += kk;
                }
                oracle_g += v.conj() * mat_get(&m_red, row, col);
            }
        }
        let tg = build_tg(&b, &g).unwrap();
        let mut lhs_g = Complex64::ZERO;
        for row in 0..nr {
            for col in 0..nr {
                let v = tg[(row, col)];
                lhs_g += Complex64::new(v.re, v.im).conj() * mat_get(&m_red, row, col);
            }
        }
        let adj_g = adjoint_tg(&m_red, &g, &dims).unwrap();
        let mut rhs_g = Complex64::ZERO;
        for (bv, av) in b.values().iter().zip(adj_g.values()) {
            rhs_g += bv.conj() * av;
        }
        let scale_g = 1.0 + oracle_g.norm();
        worst = worst
            .max((lhs_g - oracle_g).norm() / scale_g)
            .max((rhs_g - oracle_g).norm() / scale_g);
    }
    let pass = worst <= 1e-12;
    report(6, pass, &format!("100 (B, M) pairs: worst pairing deviation {worst:.2e}"));
}

#[test]
fn criterion_7_prior_quality_orders_phase_transition() {
    let _g = serial();
    let start = Instant::now();
    let template = TrialConfig::reference(0);
    let grid = PhaseGrid {
        ns_values: vec![8, 16, 24, 32],
        r_values: vec![1, 2, 3, 4],
        trials_per_cell: 10,
        base_seed: 7000,
    };
    let settings = [PriorSetting::accurate(), PriorSetting::rough(), PriorSetting::none()];
    let table = phase_transition(&template, &grid, &settings, 0).unwrap();
    let acc = table.rates(0);
    let rough = table.rates(1);
    let none = table.rates(2);
    let mut cell_violations = Vec::new();
    for i in 0..grid.r_values.len() {
        for j in 0..grid.ns_values.len() {
            if !(acc[i][j] >= rough[i][j] - 0.2 && rough[i][j] >= none[i][j] - 0.2) {
                cell_violations.push((grid.r_values[i], grid.ns_values[j]));
            }
        }
    }
    let means = (table.mean_rate(0), table.mean_rate(1), table.mean_rate(2));
    let elapsed = start.elapsed().as_secs_f64();
    let pass = cell_violations.is_empty()
        && means.0 > means.1
        && means.1 > means.2
        && elapsed <= 7200.0;
    report(
        7,
        pass,
        &format!(
            "mean success rates accurate {:.3} > rough {:.3} > none {:.3}, cell violations \
             {cell_violations:?}, {:.0}s",
            means.0, means.1, means.2, elapsed
        ),
    );
}

#[test]
fn criterion_8_reruns_reproduce_reference_batch() {
    let _g = serial();
    let batch = reference_batch();
    let mut worst = 0.0f64;
    let mut flips = 0usize;
    for (seed, (fs, an)) in batch.iter().enumerate() {
        let cfg = TrialConfig::reference_fixed(seed as u64);
        let fs2 = run_trial(&cfg, TrialMode::FsAn).unwrap();
        let an2 = run_trial(&cfg, TrialMode::An).unwrap();
        if fs2.success != fs.success || an2.success != an.success {
            flips += 1;
        }
        worst = worst
            .max((fs2.nmse - fs.nmse).abs())
            .max((an2.nmse - an.nmse).abs());
    }
    let pass = flips == 0 && worst <= 1e-9;
    report(
        8,
        pass,
        &format!("20 seeds rerun: {flips} success flips, max NMSE deviation {worst:.2e}"),
    );
}

// --- helpers ---

/// Uniform draws from `region` with pairwise per-component torus separation
/// at least `sep`.
fn separated_frequencies(
    rng: &mut ChaCha20Rng,
    region: &[FrequencyBand],
    r: usize,
    sep: f64,
) -> Vec<FrequencyTuple> {
    let mut out: Vec<FrequencyTuple> = Vec::with_capacity(r);
    while out.len() < r {
        let cand = FrequencyTuple::new(
            region.iter().map(|b| wrap_unit(b.lo() + rng.gen::<f64>() * b.span())).collect(),
        );
        let ok = out.iter().all(|f| {
            f.components()
                .iter()
                .zip(cand.components())
                .all(|(&x, &y)| torus_dist(x, y) >= sep)
        });
        if ok {
            out.push(cand);
        }
    }
    out
}

fn index_list(limits: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = limits.iter().product();
    (0..total)
        .map(|mut idx| {
            let mut m = vec![0usize; limits.len()];
            for i in (0..limits.len()).rev() {
                m[i] = idx % limits[i];
                idx /= limits[i];
            }
            m
        })
        .collect()
}

fn random_tensor(dims: &Dims, rng: &mut ChaCha20Rng) -> HalfSpectrumTensor {
    let mut t = HalfSpectrumTensor::zeros(dims);
    for v in t.values_mut() {
        *v = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
    }
    t
}

fn random_matrix(n: usize, rng: &mut ChaCha20Rng) -> faer::Mat<faer::c64> {
    faer::Mat::from_fn(n, n, |_, _| {
        faer::c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    })
}

fn mat_get(m: &faer::Mat<faer::c64>, r: usize, c: usize) -> Complex64 {
    let v = m[(r, c)];
    Complex64::new(v.re, v.im)
}
