//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use betalm_core::{Matrix, RegressionData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Householder QR least squares; returns residuals of `y` on the columns of `a`.
pub fn qr_residuals(a: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let k = a.len();
    // column-major working copy
    let mut q: Vec<Vec<f64>> = a.to_vec();
    let mut b = y.to_vec();
    for j in 0..k {
        let norm = (j..n).map(|i| q[j][i] * q[j][i]).sum::<f64>().sqrt();
        let alpha = if q[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (0..n).map(|i| if i < j { 0.0 } else { q[j][i] }).collect();
        v[j] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in q.iter_mut().skip(j) {
            let s: f64 = (j..n).map(|i| v[i] * col[i]).sum::<f64>() * 2.0 / vnorm2;
            for i in j..n {
                col[i] -= s * v[i];
            }
        }
        let s: f64 = (j..n).map(|i| v[i] * b[i]).sum::<f64>() * 2.0 / vnorm2;
        for i in j..n {
            b[i] -= s * v[i];
        }
    }
    // Qᵀy rows k.. are the residual part; rebuild residual = y − fitted via
    // back-substitution on R
    let mut coef = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = b[j];
        for l in (j + 1)..k {
            s -= q[l][j] * coef[l];
        }
        coef[j] = s / q[j][j];
    }
    (0..n)
        .map(|i| y[i] - (0..k).map(|j| a[j][i] * coef[j]).sum::<f64>())
        .collect()
}

fn columns(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.cols()).map(|j| m.column(j)).collect()
}

/// Classical two-regression statistics at β = 0: regress `y` on `X`, form
/// `u = e²/σ̂² − 1`, regress `u` on `[1, Z]`; BP = ESS/2 and Koenker = n·R².
pub fn classical_bp_koenker(data: &RegressionData) -> (f64, f64) {
    let n = data.n();
    let e = qr_residuals(&columns(data.x()), data.y());
    let s2 = e.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let u: Vec<f64> = e.iter().map(|v| v * v / s2 - 1.0).collect();
    let mut zb = vec![vec![1.0; n]];
    zb.extend(columns(data.z()));
    let res = qr_residuals(&zb, &u);
    let mean = u.iter().sum::<f64>() / n as f64;
    let tss: f64 = u.iter().map(|v| (v - mean).powi(2)).sum();
    let rss: f64 = res.iter().map(|v| v * v).sum();
    let ess = tss - rss;
    (ess / 2.0, n as f64 * ess / tss)
}

/// Empirical DPD objective for i.i.d. `N(xᵢᵀb, σ²)` at tuning parameter `beta > 0`.
pub fn dpd_objective(data: &RegressionData, b: &[f64], sigma2: f64, beta: f64) -> f64 {
    let n = data.n() as f64;
    let fitted = data.x().mul_vec(b);
    let c = (2.0 * std::f64::consts::PI).powf(-beta / 2.0) * sigma2.powf(-beta / 2.0);
    let s: f64 = data
        .y()
        .iter()
        .zip(&fitted)
        .map(|(y, f)| (-beta * (y - f).powi(2) / (2.0 * sigma2)).exp())
        .sum();
    c / (beta + 1.0).sqrt() - (beta + 1.0) / beta * c * s / n
}

/// Brute-force minimizer: coarse grid around `(b_start, s2_start)`, then a
/// compass search with halving steps down to `1e-11` relative.
pub fn brute_force_dpd(
    data: &RegressionData,
    beta: f64,
    b_start: &[f64],
    s2_start: f64,
) -> (Vec<f64>, f64) {
    let k = b_start.len();
    let scale = s2_start.sqrt();
    // parameters: b (k entries), log σ²
    let obj = |p: &[f64]| dpd_objective(data, &p[..k], p[k].exp(), beta);
    let mut best: Vec<f64> = b_start.to_vec();
    best.push(s2_start.ln());
    let mut fbest = obj(&best);

    // coarse grid, 9 points per axis
    let offsets: Vec<f64> = (-4..=4).map(|i| i as f64 * 0.25).collect();
    let center = best.clone();
    let mut idx = vec![0usize; k + 1];
    loop {
        let mut p = center.clone();
        for d in 0..=k {
            let step = if d < k { scale } else { 1.0 };
            p[d] += offsets[idx[d]] * step;
        }
        let f = obj(&p);
        if f < fbest {
            fbest = f;
            best = p;
        }
        let mut d = 0;
        loop {
            if d > k {
                break;
            }
            idx[d] += 1;
            if idx[d] < offsets.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d > k {
            break;
        }
    }

    let mut step: Vec<f64> = (0..=k).map(|d| if d < k { 0.1 * scale } else { 0.1 }).collect();
    while step[k] > 1e-11 {
        let mut improved = false;
        for d in 0..=k {
            for sign in [-1.0, 1.0] {
                let mut p = best.clone();
                p[d] += sign * step[d];
                let f = obj(&p);
                if f < fbest {
                    fbest = f;
                    best = p;
                    improved = true;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    let s2 = best[k].exp();
    best.truncate(k);
    (best, s2)
}

/// Random dataset with `p` regressors and `r` heteroscedasticity columns,
/// errors standard normal scaled by `noise`.
pub fn random_data(rng: &mut ChaCha8Rng, n: usize, p: usize, r: usize, noise: f64) -> RegressionData {
    let mut xcols = vec![vec![1.0; n]];
    for _ in 0..p {
        xcols.push((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    let zcols: Vec<Vec<f64>> = (0..r)
        .map(|_| (0..n).map(|_| rng.gen_range(0.0..2.0)).collect())
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = rng.sample(StandardNormal);
            1.0 + xcols.iter().skip(1).map(|c| 0.7 * c[i]).sum::<f64>() + noise * e
        })
        .collect();
    RegressionData::new(
        y,
        Matrix::from_columns(&xcols).unwrap(),
        Matrix::from_columns(&zcols).unwrap(),
    )
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// hprice1 as `(header, rows)`, from `$BETALM_HPRICE1` or `data/hprice1.csv`.
pub fn load_hprice1() -> Option<(Vec<String>, Vec<Vec<f64>>)> {
    let path = std::env::var_os("BETALM_HPRICE1")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/hprice1.csv")
        });
    let mut rdr = csv::Reader::from_path(path).ok()?;
    let header: Vec<String> = rdr.headers().ok()?.iter().map(str::to_owned).collect();
    let rows = rdr
        .records()
        .map(|r| {
            r.ok()
                .map(|r| r.iter().map(|c| c.parse::<f64>().unwrap()).collect::<Vec<f64>>())
        })
        .collect::<Option<Vec<_>>>()?;
    Some((header, rows))
}

/// Regression of `price` on `bdrms, lotsize, sqrft`, with `Z = X` minus the
/// intercept, optionally dropping 0-based rows.
pub fn hprice_data(header: &[String], rows: &[Vec<f64>], drop: &[usize]) -> RegressionData {
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let keep: Vec<&Vec<f64>> = rows
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, r)| r)
        .collect();
    let n = keep.len();
    let y: Vec<f64> = keep.iter().map(|r| r[col("price")]).collect();
    let regs: Vec<Vec<f64>> = ["bdrms", "lotsize", "sqrft"]
        .iter()
        .map(|c| keep.iter().map(|r| r[col(c)]).collect())
        .collect();
    let mut xcols = vec![vec![1.0; n]];
    xcols.extend(regs.iter().cloned());
    RegressionData::new(
        y,
        Matrix::from_columns(&xcols).unwrap(),
        Matrix::from_columns(&regs).unwrap(),
    )
    .unwrap()
}
