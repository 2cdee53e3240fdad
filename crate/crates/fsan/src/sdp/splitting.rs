//! Consensus operator splitting over the PSD blocks: one matrix copy per
//! block, alternating a least-squares step in the shared parameters, a PSD
//! projection per copy, and scaled dual updates, with over-relaxation and
//! residual-balancing penalty adaptation. Cheap per iteration but only
//! coarsely accurate on hard instances; the interior-point backend is the
//! accurate default.

use faer::prelude::Solve;
use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::linalg;
use crate::sdp::structure::Structure;
use crate::sdp::{SolveDiagnostics, SolveStatus, SolverOptions};

fn psd_project(m: &Mat<c64>) -> Result<Mat<c64>> {
    let (lam, u) = linalg::eigh(m)?;
    let n = m.nrows();
    let mut scaled = u.clone();
    for c in 0..n {
        let s = c64::new(lam[c].max(0.0), 0.0);
        for r in 0..n {
            scaled[(r, c)] *= s;
        }
    }
    Ok(&scaled * u.adjoint())
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

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn run(st: &Structure, opts: &SolverOptions) -> Result<(Vec<f64>, SolveDiagnostics)> {
    let nb = st.blocks.len();
    let p = st.p;
    let alpha = opts.over_relaxation;
    let mut rho = opts.penalty;

    let gram = st.schur(None);
    let mut trace = 0.0;
    for i in 0..p {
        trace += gram[(i, i)];
    }
    let mut reg = 1e-12 * (trace / p as f64).max(1.0);
    let mut chol = None;
    for _ in 0..8 {
        let mut m = gram.clone();
        for i in 0..p {
            m[(i, i)] += reg;
        }
        if let Ok(f) = m.llt(faer::Side::Lower) {
            chol = Some(f);
            break;
        }
        reg *= 100.0;
    }
    let chol = chol.ok_or_else(|| {
        Error::NumericalBreakdown("splitting normal equations are not positive definite".into())
    })?;

    let mut v: Vec<Mat<c64>> = st.blocks.iter().map(|b| Mat::zeros(b.n, b.n)).collect();
    let mut u: Vec<Mat<c64>> = st.blocks.iter().map(|b| Mat::zeros(b.n, b.n)).collect();
    let mut theta = vec![0.0f64; p];

    let sqrt_dims: f64 = st.blocks.iter().map(|b| (b.n * b.n) as f64).sum::<f64>().sqrt();
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0usize;

    for it in 0..opts.max_iter {
        iterations = it + 1;

        // theta-update: least squares against the consensus targets
        let targets: Vec<Mat<c64>> = (0..nb)
            .map(|b| &v[b] - &u[b] - &st.blocks[b].offset)
            .collect();
        let mut rhs = st.atop(&targets);
        for (r, c) in rhs.iter_mut().zip(&st.c) {
            *r -= c / rho;
        }
        let mut rhs_col = Mat::<f64>::zeros(p, 1);
        for i in 0..p {
            rhs_col[(i, 0)] = rhs[i];
        }
        let sol = chol.solve(&rhs_col);
        for i in 0..p {
            theta[i] = sol[(i, 0)];
        }

        // projection + dual step with over-relaxation
        let mut r_sq = 0.0;
        let mut e_sq = 0.0;
        let mut v_sq = 0.0;
        let mut v_old_mats = Vec::with_capacity(nb);
        for b in 0..nb {
            let e = st.block_mat(b, &theta);
            let relaxed = &e * faer::Scale(c64::new(alpha, 0.0))
                + &v[b] * faer::Scale(c64::new(1.0 - alpha, 0.0));
            let w = &relaxed + &u[b];
            let v_new = psd_project(&w)?;
            u[b] = &w - &v_new;
            r_sq += frob_sq(&(&e - &v_new));
            e_sq += frob_sq(&e);
            v_old_mats.push(std::mem::replace(&mut v[b], v_new));
            v_sq += frob_sq(&v[b]);
        }
        primal = r_sq.sqrt();
        let dv: Vec<Mat<c64>> = (0..nb).map(|b| &v[b] - &v_old_mats[b]).collect();
        dual = rho * norm2(&st.atop(&dv));

        let eps_pri = sqrt_dims * opts.eps_abs + opts.eps_rel * e_sq.sqrt().max(v_sq.sqrt());
        let eps_dua =
            (p as f64).sqrt() * opts.eps_abs + opts.eps_rel * rho * norm2(&st.atop(&u));
        if primal <= eps_pri && dual <= eps_dua {
            status = SolveStatus::Solved;
            break;
        }

        if opts.adapt_penalty && it % 25 == 24 {
            if primal > 10.0 * dual && rho < 1e6 {
                rho *= 2.0;
                for ub in u.iter_mut() {
                    *ub *= faer::Scale(c64::new(0.5, 0.0));
                }
            } else if dual > 10.0 * primal && rho > 1e-6 {
                rho *= 0.5;
                for ub in u.iter_mut() {
                    *ub *= faer::Scale(c64::new(2.0, 0.0));
                }
            }
        }
    }

    Ok((
        theta,
        SolveDiagnostics {
            iterations,
            primal_residual: primal,
            dual_residual: dual,
            status,
            polished: false,
        },
    ))
}
