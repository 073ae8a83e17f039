// `!(x < tol)` is deliberate: NaN has to fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{TestFunction, TheoryError};
use crate::expr::ExprError;
use crate::holomap::{HoloMap, Window};

/// Vertices with `|f'|` below this are excluded from the curve measure.
pub const DEGENERATE_DERIV: f64 = 1e-8;
/// On-curve tolerance for `| |f| - 1 |` after projection.
pub const ON_CURVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub z: Complex64,
    /// `sum_j conj(f_j) f_j'`
    pub inner: Complex64,
    /// `|f'(z)|`
    pub deriv_norm: f64,
    /// `| |f(z)| - 1 |`
    pub residual: f64,
    pub degenerate: bool,
}

/// One polyline of `{|f| = 1}`, traversed with `{|f| < 1}` on its left.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub points: Vec<CurvePoint>,
    pub closed: bool,
}

impl Chain {
    /// Consecutive vertex pairs, including the closing one for closed chains.
    pub fn segments(&self) -> impl Iterator<Item = (&CurvePoint, &CurvePoint)> {
        let n = self.points.len();
        let count = if self.closed { n } else { n.saturating_sub(1) };
        (0..count).map(move |i| (&self.points[i], &self.points[(i + 1) % n]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| (b.z - a.z).norm()).sum()
    }
}

/// The level set `{|f| = 1}` inside a window.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveC {
    pub chains: Vec<Chain>,
    pub window: Window,
}

impl CurveC {
    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.chains.iter().map(Chain::length).sum()
    }

    pub fn degenerate_count(&self) -> usize {
        self.chains
            .iter()
            .flat_map(|c| c.points.iter())
            .filter(|p| p.degenerate)
            .count()
    }

    /// CSV with columns `chain_id,x,y,weight_per_unit_length`; the weight is the
    /// density of the curve measure with respect to arc length at each vertex.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("chain_id,x,y,weight_per_unit_length\n");
        for (id, chain) in self.chains.iter().enumerate() {
            for p in &chain.points {
                let w = if p.degenerate { 0.0 } else { p.inner.norm() / (2.0 * PI) };
                out.push_str(&format!("{id},{:e},{:e},{:e}\n", p.z.re, p.z.im, w));
            }
        }
        out
    }
}

fn project(map: &HoloMap, start: Complex64) -> Result<CurvePoint, ExprError> {
    let mut z = start;
    let mut mp = map.point(z)?;
    for _ in 0..50 {
        let u = mp.norm_sq - 1.0;
        if u.abs() < 1e-13 {
            break;
        }
        let g = mp.grad_norm_sq();
        let gn = g.norm_sqr();
        if gn == 0.0 || !gn.is_finite() {
            break;
        }
        z -= g * (u / gn);
        mp = map.point(z)?;
    }
    let deriv_norm = mp.deriv_norm_sq.sqrt();
    let residual = (mp.norm_sq.sqrt() - 1.0).abs();
    Ok(CurvePoint {
        z,
        inner: mp.inner,
        deriv_norm,
        residual,
        degenerate: deriv_norm < DEGENERATE_DERIV || !(residual < ON_CURVE_TOL),
    })
}

/// Marching squares on `u = |f|^2 - 1`, vertices projected onto `{u = 0}` by Newton
/// steps along the gradient. Saddle cells are resolved with the value at the centre.
pub fn extract_curve(map: &HoloMap, w: &Window) -> Result<CurveC, ExprError> {
    let (nx, ny) = (w.nx, w.ny);
    let rows: Vec<Result<Vec<f64>, ExprError>> = (0..ny)
        .into_par_iter()
        .map(|iy| (0..nx).map(|ix| Ok(map.norm_sq(w.node(ix, iy))? - 1.0)).collect())
        .collect();
    let mut u = Vec::with_capacity(nx * ny);
    for r in rows {
        u.extend(r?);
    }
    let neg = |ix: usize, iy: usize| u[iy * nx + ix] < 0.0;

    // edge ids: horizontal (ix, iy)-(ix+1, iy) first, then vertical (ix, iy)-(ix, iy+1)
    let h_id = |ix: usize, iy: usize| iy * (nx - 1) + ix;
    let v_id = |ix: usize, iy: usize| (nx - 1) * ny + iy * nx + ix;

    let mut segments: Vec<(usize, usize)> = Vec::new();
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let bl = neg(ix, iy);
            let br = neg(ix + 1, iy);
            let tr = neg(ix + 1, iy + 1);
            let tl = neg(ix, iy + 1);
            let bottom = (bl != br).then(|| h_id(ix, iy));
            let right = (br != tr).then(|| v_id(ix + 1, iy));
            let top = (tl != tr).then(|| h_id(ix, iy + 1));
            let left = (bl != tl).then(|| v_id(ix, iy));
            let crossed: Vec<usize> = [bottom, right, top, left].into_iter().flatten().collect();
            match crossed.len() {
                2 => segments.push((crossed[0], crossed[1])),
                4 => {
                    let c = (w.node(ix, iy) + w.node(ix + 1, iy + 1)) * 0.5;
                    let centre_neg = map.norm_sq(c)? < 1.0;
                    let (b, r, t, l) = (bottom.unwrap(), right.unwrap(), top.unwrap(), left.unwrap());
                    if centre_neg == bl {
                        segments.push((b, r));
                        segments.push((t, l));
                    } else {
                        segments.push((l, b));
                        segments.push((r, t));
                    }
                }
                _ => {}
            }
        }
    }

    // crossing locations by linear interpolation, then projection
    let mut ids: Vec<usize> = segments.iter().flat_map(|&(a, b)| [a, b]).collect();
    ids.sort_unstable();
    ids.dedup();
    let locate = |id: usize| -> Complex64 {
        let (p, q) = if id < (nx - 1) * ny {
            let (ix, iy) = (id % (nx - 1), id / (nx - 1));
            ((ix, iy), (ix + 1, iy))
        } else {
            let k = id - (nx - 1) * ny;
            let (ix, iy) = (k % nx, k / nx);
            ((ix, iy), (ix, iy + 1))
        };
        let (up, uq) = (u[p.1 * nx + p.0], u[q.1 * nx + q.0]);
        let t = up / (up - uq);
        let (zp, zq) = (w.node(p.0, p.1), w.node(q.0, q.1));
        zp + (zq - zp) * t
    };
    let projected: Vec<Result<CurvePoint, ExprError>> = ids.par_iter().map(|&id| project(map, locate(id))).collect();
    let mut point_of: HashMap<usize, CurvePoint> = HashMap::with_capacity(ids.len());
    for (id, p) in ids.iter().zip(projected) {
        point_of.insert(*id, p?);
    }

    // link segments into chains
    let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(s);
        incident.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();
    let walk = |start_seg: usize, start_id: usize, used: &mut Vec<bool>| -> (Vec<usize>, bool) {
        let mut order = vec![start_id];
        let mut seg = start_seg;
        let mut at = start_id;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == at { b } else { a };
            if next == start_id {
                return (order, true);
            }
            order.push(next);
            at = next;
            match incident[&at].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => return (order, false),
            }
        }
    };
    // open chains start at ends with a single incident segment (window boundary)
    for &id in &ids {
        if incident[&id].len() == 1 && !used[incident[&id][0]] {
            let (order, closed) = walk(incident[&id][0], id, &mut used);
            chains.push((order, closed));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            let (order, closed) = walk(s, segments[s].0, &mut used);
            chains.push((order, closed));
        }
    }

    let mut out = Vec::with_capacity(chains.len());
    for (order, closed) in chains {
        let mut points: Vec<CurvePoint> = order.iter().map(|id| point_of[id]).collect();
        // a grid node exactly on C yields two crossings at the same point
        points.dedup_by(|b, a| (b.z - a.z).norm() <= 1e-14 * (1.0 + a.z.norm()));
        if closed && points.len() > 1 && (points[0].z - points[points.len() - 1].z).norm() <= 1e-14 * (1.0 + points[0].z.norm()) {
            points.pop();
        }
        let chain = Chain {
            points: points.clone(),
            closed,
        };
        // {u < 0} lies to the left exactly when Im(inner dz) > 0
        let orientation: f64 = chain
            .segments()
            .map(|(a, b)| ((a.inner + b.inner) * (b.z - a.z)).im)
            .sum();
        if orientation < 0.0 {
            points.reverse();
        }
        out.push(Chain { points, closed });
    }
    Ok(CurveC {
        chains: out,
        window: *w,
    })
}

/// Scale factor on the curve 1-form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurveNormalization {
    /// `(1/2 pi) Im(sum conj(f_j) f_j' dz)`: total mass 1 on the unit circle for `f = z`.
    #[default]
    Canonical,
    /// The bare 1-form without the `1/(2 pi)` factor. Only useful as a negative control.
    Unnormalized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePairing {
    pub value: f64,
    /// Arc length dropped because a vertex had `|f'| < 1e-8` or failed projection.
    pub excluded_length: f64,
}

/// `int_C rho (1/2 pi) Im(sum_j conj(f_j) f_j' dz)` by the midpoint rule on each segment.
pub fn curve_measure_pairing(curve: &CurveC, rho: &TestFunction) -> Result<CurvePairing, TheoryError> {
    curve_measure_pairing_with(curve, rho, CurveNormalization::Canonical)
}

pub fn curve_measure_pairing_with(
    curve: &CurveC,
    rho: &TestFunction,
    norm: CurveNormalization,
) -> Result<CurvePairing, TheoryError> {
    let factor = match norm {
        CurveNormalization::Canonical => 1.0 / (2.0 * PI),
        CurveNormalization::Unnormalized => 1.0,
    };
    let mut value = 0.0;
    let mut excluded = 0.0;
    for chain in &curve.chains {
        for (a, b) in chain.segments() {
            let dz = b.z - a.z;
            if a.degenerate || b.degenerate {
                excluded += dz.norm();
                continue;
            }
            let form = factor * ((a.inner + b.inner) * 0.5 * dz).im;
            if form < -1e-9 {
                return Err(TheoryError::NegativeMass {
                    at: (a.z + b.z) * 0.5,
                    value: form,
                });
            }
            value += rho.value((a.z + b.z) * 0.5) * form;
        }
    }
    if value < -1e-12 {
        return Err(TheoryError::NegativeMass {
            at: Complex64::new(f64::NAN, f64::NAN),
            value,
        });
    }
    Ok(CurvePairing {
        value,
        excluded_length: excluded,
    })
}
