//! Primal-dual interior point method with Nesterov-Todd scaling,
//! specialized to a small number of Hermitian PSD blocks driven by a shared
//! real parameter vector. Mehrotra predictor-corrector steps, a dense Schur
//! complement over the parameters, and eigenvalue-based line searches.
//!
//! Numerics are defensive rather than clever: the Schur factorization
//! retries with growing regularization, every direction solve gets one round
//! of iterative refinement, and collapsing step sizes end the run with the
//! best iterate instead of looping.

use faer::prelude::Solve;
use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::linalg;
use crate::sdp::structure::Structure;
use crate::sdp::{SolveDiagnostics, SolveStatus, SolverOptions};

/// U diag(f(lambda)) U^H.
fn eig_apply(u: &Mat<c64>, lam: &[f64], f: impl Fn(f64) -> f64) -> Mat<c64> {
    let n = u.nrows();
    let mut scaled = u.clone();
    for c in 0..n {
        let s = f(lam[c]);
        for r in 0..n {
            scaled[(r, c)] *= c64::new(s, 0.0);
        }
    }
    &scaled * u.adjoint()
}

fn frob_sq(m: &Mat<c64>) -> f64 {
    let mut s = 0.0;
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            s += v.re * v.re + v.im * v.im;
        }
    }
    s
}

fn inner_re(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    let mut s = 0.0;
    for c in 0..a.ncols() {
        for r in 0..a.nrows() {
            let x = a[(r, c)];
            let y = b[(r, c)];
            s += x.re * y.re + x.im * y.im;
        }
    }
    s
}

/// Largest step a >= 0 keeping m + a*d PSD, via the eigenbasis of m with a
/// relative floor on its eigenvalues; +inf when d does not point outward.
fn max_step(m: &Mat<c64>, d: &Mat<c64>) -> Result<f64> {
    let n = m.nrows();
    let (lam, u) = linalg::eigh(m)?;
    let tr: f64 = lam.iter().sum();
    let floor = (1e-14 * (tr.abs() / n as f64)).max(1e-280);
    let mid = u.adjoint() * d * &u;
    let mut scaled = Mat::<c64>::zeros(n, n);
    for r in 0..n {
        let lr = lam[r].max(floor).sqrt();
        for c in 0..n {
            let lc = lam[c].max(floor).sqrt();
            let v = mid[(r, c)];
            scaled[(r, c)] = c64::new(v.re / (lr * lc), v.im / (lr * lc));
        }
    }
    let ev = linalg::eigvalsh(&scaled)?;
    let lmin = ev[0];
    if lmin >= -1e-14 {
        Ok(f64::INFINITY)
    } else {
        Ok(-1.0 / lmin)
    }
}

struct Scaling {
    /// W^{-1} of the Nesterov-Todd point: Winv Z^{-1} Winv = ... maps the
    /// primal direction into the scaled space.
    winv: Mat<c64>,
    sinv: Mat<c64>,
}

fn nt_scaling(s: &Mat<c64>, z: &Mat<c64>) -> Result<Scaling> {
    let (ls, us) = linalg::eigh(s)?;
    if ls[0] <= 0.0 {
        return Err(Error::NumericalBreakdown(format!(
            "slack block lost positive definiteness (lambda_min = {:.3e})",
            ls[0]
        )));
    }
    let s_half = eig_apply(&us, &ls, f64::sqrt);
    let s_mhalf = eig_apply(&us, &ls, |v| 1.0 / v.sqrt());
    let mid = &s_half * z * &s_half;
    let (lm, um) = linalg::eigh(&mid)?;
    if lm[0] <= 0.0 {
        return Err(Error::NumericalBreakdown(format!(
            "scaling midpoint lost positive definiteness (lambda_min = {:.3e})",
            lm[0]
        )));
    }
    let mid_half = eig_apply(&um, &lm, f64::sqrt);
    let winv = linalg::hermitian_part(&(&s_mhalf * &mid_half * &s_mhalf));
    let sinv = eig_apply(&us, &ls, |v| 1.0 / v);
    Ok(Scaling { winv, sinv })
}

pub(crate) fn run(st: &Structure, opts: &SolverOptions) -> Result<(Vec<f64>, SolveDiagnostics)> {
    let nb = st.blocks.len();
    let nu: f64 = st.blocks.iter().map(|b| b.n as f64).sum();
    let gap_tol = opts.eps_abs.mul_add(0.1, 0.0).max(1e-12);
    let feas_tol = (opts.eps_abs * 10.0).max(1e-12);

    let mut theta = vec![0.0f64; st.p];
    let mut s: Vec<Mat<c64>> = st
        .blocks
        .iter()
        .map(|b| {
            let mut m = Mat::<c64>::zeros(b.n, b.n);
            for i in 0..b.n {
                m[(i, i)] = c64::new(10.0, 0.0);
            }
            m
        })
        .collect();
    let mut z: Vec<Mat<c64>> = st.blocks.iter().map(|b| Mat::identity(b.n, b.n)).collect();

    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0usize;
    let mut rpn = f64::INFINITY;
    let mut mu = f64::INFINITY;
    let mut best_progress = f64::INFINITY;
    let mut since_progress = 0usize;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        let mth = st.mats(&theta);
        let rp: Vec<Mat<c64>> = (0..nb).map(|b| &mth[b] - &s[b]).collect();
        let z_adj = st.atop(&z);
        let rd: Vec<f64> = st.c.iter().zip(&z_adj).map(|(c, a)| c - a).collect();
        mu = (0..nb).map(|b| inner_re(&s[b], &z[b])).sum::<f64>() / nu;
        rpn = rp.iter().map(frob_sq).sum::<f64>().sqrt();

        if (mu < gap_tol && rpn < feas_tol) || (mu < 50.0 * gap_tol && rpn < 0.1 * feas_tol && it > 25)
        {
            status = SolveStatus::Solved;
            break;
        }
        // stall guard: no meaningful progress for a long stretch means the
        // instance sits at the method's numerical limit
        let progress = mu.max(rpn * 1e-3);
        if progress < 0.7 * best_progress {
            best_progress = progress;
            since_progress = 0;
        } else {
            since_progress += 1;
            if since_progress > 40 {
                status = SolveStatus::InfeasibleLike;
                break;
            }
        }

        let scal: Vec<Scaling> = match (0..nb).map(|b| nt_scaling(&s[b], &z[b])).collect() {
            Ok(v) => v,
            Err(_) => {
                status = SolveStatus::InfeasibleLike;
                break;
            }
        };
        let winvs: Vec<Mat<c64>> = scal.iter().map(|sc| sc.winv.clone()).collect();
        let sc = st.schur(Some(&winvs));

        // Cholesky with escalating regularization
        let mut trace = 0.0;
        for i in 0..st.p {
            trace += sc[(i, i)];
        }
        let mut reg = 1e-13 * (trace / st.p as f64).max(1.0);
        let mut chol = None;
        for _ in 0..8 {
            let mut m = sc.clone();
            for i in 0..st.p {
                m[(i, i)] += reg;
            }
            if let Ok(f) = m.llt(faer::Side::Lower) {
                chol = Some(f);
                break;
            }
            reg *= 100.0;
        }
        let Some(chol) = chol else {
            status = SolveStatus::InfeasibleLike;
            break;
        };

        let solve_dir = |sigma_mu: f64| -> (Vec<f64>, Vec<Mat<c64>>, Vec<Mat<c64>>) {
            let rhs_mats: Vec<Mat<c64>> = (0..nb)
                .map(|b| {
                    let w = &scal[b].winv;
                    let pushed = linalg::hermitian_part(&(w * &rp[b] * w));
                    let mut m = &scal[b].sinv * faer::Scale(c64::new(sigma_mu, 0.0)) - &z[b];
                    m -= &pushed;
                    m
                })
                .collect();
            let mut rhs = st.atop(&rhs_mats);
            for (r, d) in rhs.iter_mut().zip(&rd) {
                *r -= d;
            }
            let mut rhs_col = Mat::<f64>::zeros(st.p, 1);
            for i in 0..st.p {
                rhs_col[(i, 0)] = rhs[i];
            }
            let mut dth_col = chol.solve(&rhs_col);
            // one round of iterative refinement on the Schur solve
            let resid = &rhs_col - &sc * &dth_col;
            dth_col += chol.solve(&resid);
            let dth: Vec<f64> = (0..st.p).map(|i| dth_col[(i, 0)]).collect();
            let ds: Vec<Mat<c64>> = (0..nb).map(|b| st.block_delta(b, &dth) + &rp[b]).collect();
            let dz: Vec<Mat<c64>> = (0..nb)
                .map(|b| {
                    let w = &scal[b].winv;
                    let pushed = linalg::hermitian_part(&(w * &ds[b] * w));
                    let mut m = &scal[b].sinv * faer::Scale(c64::new(sigma_mu, 0.0)) - &z[b];
                    m -= &pushed;
                    linalg::hermitian_part(&m)
                })
                .collect();
            (dth, ds, dz)
        };

        let step_to_boundary = |mats: &[Mat<c64>], dirs: &[Mat<c64>]| -> Result<f64> {
            let mut a = 1.0_f64 / 0.98;
            for b in 0..nb {
                a = a.min(max_step(&mats[b], &dirs[b])?);
            }
            Ok((0.98 * a).min(1.0))
        };

        // predictor
        let (_, ds_a, dz_a) = solve_dir(0.0);
        let ap_a = step_to_boundary(&s, &ds_a)?;
        let ad_a = step_to_boundary(&z, &dz_a)?;
        let mut mu_aff = 0.0;
        for b in 0..nb {
            let s_new = &s[b] + &ds_a[b] * faer::Scale(c64::new(ap_a, 0.0));
            let z_new = &z[b] + &dz_a[b] * faer::Scale(c64::new(ad_a, 0.0));
            mu_aff += inner_re(&s_new, &z_new);
        }
        mu_aff /= nu;
        let sigma = (mu_aff / mu).powi(3).clamp(1e-8, 0.8);

        // corrector
        let (dth, ds, dz) = solve_dir(sigma * mu);
        let ap = step_to_boundary(&s, &ds)?;
        let ad = step_to_boundary(&z, &dz)?;
        if ap < 1e-10 && ad < 1e-10 {
            status = SolveStatus::InfeasibleLike;
            break;
        }
        for (t, d) in theta.iter_mut().zip(&dth) {
            *t += ap * d;
        }
        for b in 0..nb {
            let s_new = &s[b] + &ds[b] * faer::Scale(c64::new(ap, 0.0));
            s[b] = linalg::hermitian_part(&s_new);
            let z_new = &z[b] + &dz[b] * faer::Scale(c64::new(ad, 0.0));
            z[b] = linalg::hermitian_part(&z_new);
        }
    }

    Ok((
        theta,
        SolveDiagnostics {
            iterations,
            primal_residual: rpn,
            dual_residual: mu,
            status,
            polished: false,
        },
    ))
}
