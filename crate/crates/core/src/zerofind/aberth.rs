// `!(x < tol)` is deliberate: NaN has to fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{PolyCoeffs, Zero, ZeroError, ZeroList};

const MAX_SWEEPS: usize = 500;

/// Newton correction `p(z)/p'(z)` and the relative residual at `z`.
///
/// For `|z| > 1` both are computed from the reversed polynomial in `w = 1/z`, which
/// keeps the powers bounded: `p/p' = z R(w) / (D R(w) - w R'(w))`.
pub(super) fn newton_ratio(c: &[Complex64], z: Complex64) -> (Complex64, f64) {
    let d = c.len() - 1;
    let zero = Complex64::new(0.0, 0.0);
    if z.norm() <= 1.0 {
        let (mut p, mut dp, mut s) = (zero, zero, 0.0);
        let az = z.norm();
        for ck in c.iter().rev() {
            dp = dp * z + p;
            p = p * z + ck;
            s = s * az + ck.norm();
        }
        (p / dp, if s > 0.0 { p.norm() / s } else { 0.0 })
    } else {
        let w = z.inv();
        let aw = w.norm();
        let (mut r, mut dr, mut s) = (zero, zero, 0.0);
        for ck in c.iter() {
            dr = dr * w + r;
            r = r * w + ck;
            s = s * aw + ck.norm();
        }
        let ratio = z * r / (r * d as f64 - w * dr);
        (ratio, if s > 0.0 { r.norm() / s } else { 0.0 })
    }
}

/// Starting points on circles whose radii come from the upper convex hull of
/// `(k, log|c_k|)`.
fn initial_guesses(c: &[Complex64]) -> Vec<Complex64> {
    let d = c.len() - 1;
    let pts: Vec<(usize, f64)> = c
        .iter()
        .enumerate()
        .filter(|(_, ck)| ck.norm() > 0.0)
        .map(|(k, ck)| (k, ck.norm().ln()))
        .collect();
    let mut hull: Vec<(usize, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // drop b when it lies on or below the chord from a to p
            let cross = (b.0 as f64 - a.0 as f64) * (p.1 - a.1) - (b.1 - a.1) * (p.0 as f64 - a.0 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut out = Vec::with_capacity(d);
    for (seg, win) in hull.windows(2).enumerate() {
        let ((i, li), (k, lk)) = (win[0], win[1]);
        let m = k - i;
        let r = ((li - lk) / m as f64).exp();
        let offset = 2.0 * PI * seg as f64 / d as f64 + 0.7;
        for q in 0..m {
            let theta = 2.0 * PI * q as f64 / m as f64 + offset;
            out.push(Complex64::from_polar(r, theta));
        }
    }
    out
}

fn aberth_iterate(c: &[Complex64], tol: f64) -> Option<Vec<Complex64>> {
    let mut z = initial_guesses(c);
    let d = z.len();
    let mut done = vec![false; d];
    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut all = true;
        for i in 0..d {
            if done[i] {
                continue;
            }
            let (ratio, res) = newton_ratio(c, z[i]);
            if res <= tol * 1e-3 || !ratio.is_finite() && res == 0.0 {
                done[i] = true;
                continue;
            }
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..d {
                if j != i {
                    s += (z[i] - z[j]).inv();
                }
            }
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * s);
            if !step.is_finite() {
                // nudge off a critical point
                let bump = Complex64::new(1e-8, 1e-8) * z[i].norm().max(1.0);
                z[i] += bump;
                all = false;
                continue;
            }
            z[i] -= step;
            if step.norm() <= 4.0 * eps * z[i].norm() {
                done[i] = true;
            } else {
                all = false;
            }
        }
        if all {
            return Some(z);
        }
    }
    None
}

/// Balanced companion matrix eigenvalues, `z = s y` with `s` the geometric-mean root modulus.
pub fn companion_roots(p: &PolyCoeffs) -> Result<Vec<Complex64>, ZeroError> {
    let c = p.coeffs();
    let d = p.degree();
    if d == 0 {
        return Ok(Vec::new());
    }
    let scale = (c[0].norm() / c[d].norm()).powf(1.0 / d as f64);
    let s = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    // monic in y: b_k = c_k s^k / (c_d s^d)
    let lead = c[d];
    let b: Vec<Complex64> = (0..d)
        .map(|k| c[k] / lead * s.powi(k as i32 - d as i32))
        .collect();
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    for k in 0..d {
        m[(0, k)] = -b[d - 1 - k];
    }
    for i in 1..d {
        m[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    balance(&mut m);
    let schur = nalgebra::Schur::try_new(m, f64::EPSILON, 10_000 * d.max(1)).ok_or_else(|| {
        ZeroError::ConvergenceFailure {
            worst: f64::INFINITY,
            residuals: Vec::new(),
        }
    })?;
    let (_, t) = schur.unpack();
    Ok((0..d).map(|i| t[(i, i)] * s).collect())
}

fn balance(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    let l1 = |x: Complex64| x.re.abs() + x.im.abs();
    loop {
        let mut converged = true;
        for i in 0..n {
            let mut col = 0.0;
            let mut row = 0.0;
            for j in 0..n {
                if j != i {
                    col += l1(m[(j, i)]);
                    row += l1(m[(i, j)]);
                }
            }
            if col == 0.0 || row == 0.0 {
                continue;
            }
            let total = col + row;
            let mut f = 1.0;
            let mut g = row / 2.0;
            while col < g {
                f *= 2.0;
                col *= 4.0;
            }
            g = row * 2.0;
            while col >= g {
                f /= 2.0;
                col /= 4.0;
            }
            if (col + row) / f < 0.95 * total {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
}

fn polish(c: &[Complex64], mut z: Complex64, steps: usize) -> Complex64 {
    for _ in 0..steps {
        let (ratio, _) = newton_ratio(c, z);
        if !ratio.is_finite() {
            break;
        }
        let next = z - ratio;
        if newton_ratio(c, next).1 > newton_ratio(c, z).1 {
            break;
        }
        z = next;
    }
    z
}

/// Single-linkage clusters of points closer than `radius(z)`.
fn clusters(z: &[Complex64], radius: impl Fn(Complex64) -> f64) -> Vec<Vec<usize>> {
    let n = z.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut i = i;
        while p[i] != r {
            let next = p[i];
            p[i] = r;
            i = next;
        }
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if (z[i] - z[j]).norm() < radius(z[i]).max(radius(z[j])) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

fn centroid(z: &[Complex64], idx: &[usize]) -> Complex64 {
    idx.iter().map(|&i| z[i]).sum::<Complex64>() / idx.len() as f64
}

/// Merges roots closer than `10 tol` unconditionally, and wider clusters when the
/// centroid is a numerical root of the first `m - 1` derivatives too.
fn merge(p: &PolyCoeffs, z: &[Complex64], tol: f64) -> Vec<Zero> {
    let derivs: Vec<PolyCoeffs> = {
        let mut v = vec![p.clone()];
        for _ in 0..4 {
            let next = v.last().map(PolyCoeffs::derivative).unwrap_or_else(|| p.clone());
            v.push(next);
        }
        v
    };
    let mut out = Vec::new();
    for group in clusters(z, |x| 10.0 * tol * x.norm().max(1.0)) {
        out.push((centroid(z, &group), group.len()));
    }
    // second pass: candidate multiple roots
    let pts: Vec<Complex64> = out.iter().map(|(c, _)| *c).collect();
    let mut merged = Vec::new();
    for group in clusters(&pts, |x| 1e-4 * x.norm().max(1.0)) {
        let m: usize = group.iter().map(|&i| out[i].1).sum();
        let ctr = group.iter().map(|&i| pts[i] * out[i].1 as f64).sum::<Complex64>() / m as f64;
        let verified = group.len() > 1
            && m <= derivs.len()
            && (1..m).all(|k| {
                let thr = 10.0 * tol.powf((m - k) as f64 / m as f64);
                derivs[k].degree() > 0 && derivs[k].relative_residual(ctr) < thr
            });
        if verified {
            // the centroid is a simple root of the (m-1)-th derivative
            let ctr = polish(derivs[m - 1].coeffs(), ctr, 8);
            merged.push(Zero {
                z: ctr,
                multiplicity: m as u32,
                residual: p.relative_residual(ctr),
            });
        } else {
            for &i in &group {
                merged.push(Zero {
                    z: out[i].0,
                    multiplicity: out[i].1 as u32,
                    residual: p.relative_residual(out[i].0),
                });
            }
        }
    }
    merged
}

/// All roots of `p` to relative residual below `tol`.
pub fn roots_aberth(p: &PolyCoeffs, tol: f64) -> Result<ZeroList, ZeroError> {
    if p.degree() == 0 {
        return Err(ZeroError::Degenerate("polynomial of degree 0".into()));
    }
    let c = p.coeffs();
    // exact zeros at the origin
    let low = c.iter().take_while(|ck| ck.norm() == 0.0).count();
    let reduced = PolyCoeffs::new(c[low..].to_vec());
    let mut roots = vec![Complex64::new(0.0, 0.0); low];
    if reduced.degree() > 0 {
        let rc = reduced.coeffs();
        let found = match aberth_iterate(rc, tol) {
            Some(z) if z.iter().all(|x| newton_ratio(rc, *x).1 < tol) => z,
            _ => companion_roots(&reduced)?
                .into_iter()
                .map(|x| polish(rc, x, 8))
                .collect(),
        };
        roots.extend(found);
    }
    let mut zeros = merge(p, &roots, tol);
    let residuals: Vec<f64> = zeros.iter().map(|z| z.residual).collect();
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if !(worst < tol) {
        return Err(ZeroError::ConvergenceFailure { worst, residuals });
    }
    let mut zl = ZeroList {
        zeros: std::mem::take(&mut zeros),
        window: None,
    };
    zl.sort();
    Ok(zl)
}
