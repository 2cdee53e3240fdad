use fsan::experiments::reference_bands_vec;
use fsan::model::{match_frequencies, torus_dist, wrap_unit, Dims, FrequencyTuple, ObservationMask};
use fsan::sdp::{assemble, solve, SolverOptions};
use fsan::toeplitz::build_level_toeplitz;
use fsan::vandermonde::vandermonde_decompose;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use fsan::SpectralModel;

fn separated(rng: &mut ChaCha20Rng, region: &[fsan::FrequencyBand], r: usize, sep: f64) -> Vec<FrequencyTuple> {
    let mut out: Vec<FrequencyTuple> = Vec::with_capacity(r);
    while out.len() < r {
        let cand = FrequencyTuple::new(region.iter().map(|b| wrap_unit(b.lo() + rng.gen::<f64>() * b.span())).collect());
        if out.iter().all(|f| f.components().iter().zip(cand.components()).all(|(&x, &y)| torus_dist(x, y) >= sep)) {
            out.push(cand);
        }
    }
    out
}

fn main() {
    let lo: u64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(0);
    let hi: u64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(50);
    let probe = std::env::args().nth(3).map(|s| s == "probe").unwrap_or(false);
    let dims = Dims::new(vec![8, 8]).unwrap();
    let bands = fsan::BandSystem::single(reference_bands_vec());
    let mask = ObservationMask::unit((0..64).collect(), 64).unwrap();
    for i in lo..hi {
        let t0 = std::time::Instant::now();
        let mut rng = ChaCha20Rng::seed_from_u64(100 + i);
        let r = 1 + (i as usize) % 3;
        let freqs = separated(&mut rng, &reference_bands_vec(), r, 0.02);
        let gains: Vec<Complex64> = (0..r)
            .map(|_| Complex64::from_polar(0.5 + rng.gen::<f64>(), rng.gen::<f64>() * std::f64::consts::TAU))
            .collect();
        let model = SpectralModel::new(freqs.iter().cloned().zip(gains).collect());
        let mass = model.gain_magnitude_sum();
        let x = fsan::synthesize(&model, &dims).unwrap();
        let instance = assemble(&x, &mask, &dims, Some(&bands)).unwrap();
        let sol = solve(&instance, &SolverOptions::default()).unwrap();
        let relerr = (sol.objective - mass).abs() / mass;
        let t = build_level_toeplitz(&sol.b_hat);
        if probe {
            println!("truth:");
            for f in &freqs {
                println!("  {:?}", f.components());
            }
            let ed = t.self_adjoint_eigen(faer::Side::Lower).unwrap();
            let mut eig: Vec<f64> = (0..t.nrows()).map(|k| ed.S()[k].re).collect();
            eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let top: Vec<f64> = eig.iter().take(6).copied().collect();
            println!("top eigs: {top:?}");
            for density in [16usize, 32, 64] {
                let opts = fsan::music::MusicOptions {
                    order: Some(r),
                    target_resolution: 1e-10,
                    grid_density: density,
                    ..Default::default()
                };
                let out = fsan::music::music_frequencies(&t, &dims, None, &opts).unwrap();
                println!("density {density}: degraded={} found:", out.degraded);
                for (f, res) in out.frequencies.iter().zip(&out.residuals) {
                    println!("  {:?} residual {res:.3e}", f.components());
                }
            }
        }
        let dec = match vandermonde_decompose(&t, &dims, 1e-6) {
            Ok(dec) if dec.r() == r => {
                let errs = match_frequencies(&dec.frequencies, &freqs).unwrap();
                let max_err = errs.iter().map(|&(_, e)| e).fold(0.0f64, f64::max);
                format!("freq_err={max_err:.2e}"
                )
            }
            Ok(dec) => format!("WRONG_RANK {} vs {r}", dec.r()),
            Err(e) => format!("DECOMP_ERR {e}"),
        };
        let bad = if relerr > 1e-5 { " OBJ_FAIL" } else { "" };
        println!(
            "i={i} r={r} relerr={relerr:.2e} {dec} it={} {:?} polished={} {:.1}s{bad}",
            sol.diagnostics.iterations,
            sol.diagnostics.status,
            sol.diagnostics.polished,
            t0.elapsed().as_secs_f64()
        );
    }
}
