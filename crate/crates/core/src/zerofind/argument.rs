// `!(x < tol)` is deliberate: NaN has to fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{Holomorphic, Zero, ZeroError, ZeroList};
use crate::holomap::Rect;

/// Evaluation budget for one winding number.
const MAX_NODES: usize = 1 << 16;
/// A zero closer than this fraction of the diameter counts as on the boundary.
const BOUNDARY_GAP: f64 = 1e-9;
const PERTURB: f64 = 1e-6;
const MAX_RETRIES: u32 = 8;

enum Winding {
    Count(i64),
    Boundary(Complex64),
}

#[derive(Clone, Copy)]
struct Node {
    z: Complex64,
    value: Complex64,
    /// `G'/G`
    q: Complex64,
    /// `|G/G'|`
    newton: f64,
}

fn node<F: Holomorphic + ?Sized>(f: &F, z: Complex64) -> Result<Node, ZeroError> {
    let j = f.jet(z)?;
    let q = j.deriv / j.value;
    let newton = if j.deriv.norm() == 0.0 {
        f64::INFINITY
    } else {
        j.value.norm() / j.deriv.norm()
    };
    Ok(Node {
        z,
        value: j.value,
        q,
        newton,
    })
}

/// Total argument change of `G` around `rect`, divided by `2 pi`.
///
/// Each edge is bisected adaptively. A segment is accepted once it is shorter than
/// half the Newton distance `|G/G'|` at both ends and the midpoint, and its coarse
/// and refined trapezoid values of `int G'/G dz` agree to `tol`. The accepted
/// segment then contributes the principal argument of `G(b)/G(a)`, which must agree
/// with the imaginary part of the trapezoid value.
fn winding_raw<F: Holomorphic + ?Sized>(
    f: &F,
    rect: &Rect,
    tol: f64,
    nodes: &mut usize,
) -> Result<Result<f64, Complex64>, ZeroError> {
    let gap = BOUNDARY_GAP * rect.diam();
    let corners = rect.corners();
    let mut total = 0.0;
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        let na = node(f, a)?;
        let nb = node(f, b)?;
        *nodes += 2;
        let mut stack = vec![(na, nb)];
        while let Some((na, nb)) = stack.pop() {
            for n in [&na, &nb] {
                if !(n.newton >= gap) {
                    return Ok(Err(n.z));
                }
            }
            let nm = node(f, (na.z + nb.z) * 0.5)?;
            *nodes += 1;
            if *nodes > MAX_NODES {
                return Err(ZeroError::QuadratureStall { nodes: MAX_NODES });
            }
            if !(nm.newton >= gap) {
                return Ok(Err(nm.z));
            }
            let h = nb.z - na.z;
            let coarse = h * (na.q + nb.q) * 0.5;
            let fine = h * (na.q + nm.q * 2.0 + nb.q) * 0.25;
            let darg = (nb.value / na.value).arg();
            let short = h.norm() <= 0.5 * na.newton.min(nb.newton).min(nm.newton);
            if short && (fine - coarse).norm() <= tol && (fine.im - darg).abs() < 0.5 {
                total += darg;
            } else {
                // right half first so the left half is processed next
                stack.push((nm, nb));
                stack.push((na, nm));
            }
        }
    }
    Ok(Ok(total / (2.0 * PI)))
}

/// Winding number with integer snapping: refine until the raw value is within 0.25
/// of an integer and two successive tolerances round to the same integer.
fn winding<F: Holomorphic + ?Sized>(f: &F, rect: &Rect) -> Result<Winding, ZeroError> {
    let mut nodes = 0usize;
    let mut prev: Option<i64> = None;
    let mut tol = 0.1;
    loop {
        let raw = match winding_raw(f, rect, tol, &mut nodes)? {
            Ok(r) => r,
            Err(z) => return Ok(Winding::Boundary(z)),
        };
        let k = raw.round();
        if (raw - k).abs() < 0.25 {
            if prev == Some(k as i64) {
                return Ok(Winding::Count(k as i64));
            }
            prev = Some(k as i64);
        } else {
            prev = None;
        }
        tol *= 0.25;
        if tol < 1e-9 {
            return Err(ZeroError::QuadratureStall { nodes });
        }
    }
}

fn count_with_retries<F: Holomorphic + ?Sized>(f: &F, rect: &Rect) -> Result<(i64, Rect), ZeroError> {
    let mut r = *rect;
    let mut last = rect.center();
    for _ in 0..=MAX_RETRIES {
        match winding(f, &r)? {
            Winding::Count(k) => return Ok((k, r)),
            Winding::Boundary(z) => {
                last = z;
                r = r.inflate(PERTURB * rect.diam());
            }
        }
    }
    Err(ZeroError::BoundaryZero {
        z: last,
        retries: MAX_RETRIES,
    })
}

/// Number of zeros of `f` inside `rect`, counted with multiplicity.
///
/// When a zero sits on the boundary the rectangle is pushed outward by one part
/// in `10^6` of its diameter and the count is retried, up to eight times.
pub fn count_zeros_argument<F: Holomorphic + ?Sized>(f: &F, rect: &Rect) -> Result<i64, ZeroError> {
    Ok(count_with_retries(f, rect)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubdivideOptions {
    pub depth_max: u32,
    /// Cells smaller than this fraction of the window diameter are reported as one
    /// zero with their full count as multiplicity.
    pub resolution: f64,
    /// Newton polish must reach this relative residual.
    pub residual_tol: f64,
}

impl Default for SubdivideOptions {
    fn default() -> Self {
        SubdivideOptions {
            depth_max: 40,
            resolution: 1e-7,
            residual_tol: 1e-8,
        }
    }
}

struct Cell {
    rect: Rect,
    count: i64,
    depth: u32,
}

enum Outcome {
    Done(Vec<Zero>),
    Split(Vec<Cell>),
    Unresolved(Rect, i64),
}

fn newton<F: Holomorphic + ?Sized>(
    f: &F,
    start: Complex64,
    multiplicity: f64,
    tiny: f64,
) -> Result<Option<Complex64>, ZeroError> {
    let mut z = start;
    for _ in 0..100 {
        let j = f.jet(z)?;
        if j.value.norm() == 0.0 {
            return Ok(Some(z));
        }
        let step = j.value / j.deriv * multiplicity;
        if !step.is_finite() {
            return Ok(None);
        }
        z -= step;
        if step.norm() <= tiny.max(4.0 * f64::EPSILON * z.norm()) {
            return Ok(Some(z));
        }
    }
    Ok(None)
}

const CUTS: [f64; 7] = [0.5, 0.5371, 0.4587, 0.5779, 0.4147, 0.6213, 0.3861];

fn split<F: Holomorphic + ?Sized>(f: &F, cell: &Cell) -> Result<Vec<Cell>, ZeroError> {
    let r = cell.rect;
    let mut last = r.center();
    for (i, &tx) in CUTS.iter().enumerate() {
        let ty = CUTS[(i * 3) % CUTS.len()];
        let xm = r.x0 + tx * r.width();
        let ym = r.y0 + ty * r.height();
        let kids = [
            Rect::new(r.x0, xm, r.y0, ym),
            Rect::new(xm, r.x1, r.y0, ym),
            Rect::new(r.x0, xm, ym, r.y1),
            Rect::new(xm, r.x1, ym, r.y1),
        ];
        let mut out = Vec::with_capacity(4);
        let mut ok = true;
        for k in kids {
            match winding(f, &k)? {
                Winding::Count(c) => out.push(Cell {
                    rect: k,
                    count: c,
                    depth: cell.depth + 1,
                }),
                Winding::Boundary(z) => {
                    last = z;
                    ok = false;
                    break;
                }
            }
        }
        if ok && out.iter().map(|c| c.count).sum::<i64>() == cell.count {
            return Ok(out);
        }
    }
    Err(ZeroError::BoundaryZero {
        z: last,
        retries: CUTS.len() as u32,
    })
}

fn process<F: Holomorphic + ?Sized>(
    f: &F,
    cell: &Cell,
    opts: &SubdivideOptions,
    resolution: f64,
) -> Result<Outcome, ZeroError> {
    let tiny = 1e-3 * resolution;
    match cell.count {
        0 => return Ok(Outcome::Done(Vec::new())),
        1 => {
            if let Some(z) = newton(f, cell.rect.center(), 1.0, tiny)? {
                let residual = f.relative_residual(z)?;
                if cell.rect.contains(z) && residual < opts.residual_tol {
                    return Ok(Outcome::Done(vec![Zero {
                        z,
                        multiplicity: 1,
                        residual,
                    }]));
                }
            }
        }
        _ => {}
    }
    if cell.rect.diam() < resolution {
        let m = cell.count;
        let z = match newton(f, cell.rect.center(), m as f64, tiny)? {
            Some(z) if cell.rect.inflate(cell.rect.diam()).contains(z) => z,
            _ => cell.rect.center(),
        };
        return Ok(Outcome::Done(vec![Zero {
            z,
            multiplicity: m as u32,
            residual: f.relative_residual(z)?,
        }]));
    }
    if cell.depth >= opts.depth_max {
        return Ok(Outcome::Unresolved(cell.rect, cell.count));
    }
    Ok(Outcome::Split(split(f, cell)?))
}

/// Zeros of `f` in `rect` by recursive quadrisection and Newton polishing.
///
/// Cells are processed breadth-first; each level runs in parallel and is merged in
/// cell order, so the output does not depend on the thread count.
pub fn zeros_subdivide<F: Holomorphic + ?Sized>(
    f: &F,
    rect: &Rect,
    opts: &SubdivideOptions,
) -> Result<ZeroList, ZeroError> {
    let (count, root) = count_with_retries(f, rect)?;
    if count < 0 {
        return Err(ZeroError::Degenerate(format!("negative winding number {count}")));
    }
    let resolution = opts.resolution * rect.diam();
    let mut frontier = vec![Cell {
        rect: root,
        count,
        depth: 0,
    }];
    let mut zeros = Vec::new();
    let mut unresolved = Vec::new();
    while !frontier.is_empty() {
        let outcomes: Vec<Result<Outcome, ZeroError>> = frontier
            .par_iter()
            .map(|cell| process(f, cell, opts, resolution))
            .collect();
        let mut next = Vec::new();
        for o in outcomes {
            match o? {
                Outcome::Done(z) => zeros.extend(z),
                Outcome::Split(kids) => next.extend(kids.into_iter().filter(|c| c.count > 0)),
                Outcome::Unresolved(r, c) => unresolved.push((r, c)),
            }
        }
        frontier = next;
    }
    if !unresolved.is_empty() {
        return Err(ZeroError::DepthExceeded { cells: unresolved });
    }
    let mut zl = ZeroList {
        zeros,
        window: Some(root),
    };
    zl.sort();
    Ok(zl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ExprProgram;
    use crate::zerofind::PolyCoeffs;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn winding_of_z_squared() {
        let g = ExprProgram::parse("z^2").unwrap();
        assert_eq!(count_zeros_argument(&g, &Rect::square(1.0)).unwrap(), 2);
    }

    #[test]
    fn exp_has_no_zeros() {
        let g = ExprProgram::parse("exp(z)").unwrap();
        assert_eq!(count_zeros_argument(&g, &Rect::new(-3.0, 2.0, -7.0, 5.0)).unwrap(), 0);
    }

    #[test]
    fn boundary_zero_is_escaped_by_perturbation() {
        // zero exactly on the right edge
        let g = ExprProgram::parse("z - 1").unwrap();
        assert_eq!(count_zeros_argument(&g, &Rect::square(1.0)).unwrap(), 1);
    }

    #[test]
    fn two_simple_zeros() {
        let g = ExprProgram::parse("(z - 0.3)*(z + 0.5i)").unwrap();
        let zl = zeros_subdivide(&g, &Rect::square(1.0), &SubdivideOptions::default()).unwrap();
        assert_eq!(zl.total_multiplicity(), 2);
        let pts = zl.points();
        assert!(pts.iter().any(|z| (z - c(0.3, 0.0)).norm() < 1e-9));
        assert!(pts.iter().any(|z| (z - c(0.0, -0.5)).norm() < 1e-9));
    }

    #[test]
    fn exp_times_linear() {
        let g = ExprProgram::parse("exp(z)*(z - 0.2)").unwrap();
        let zl = zeros_subdivide(&g, &Rect::square(1.0), &SubdivideOptions::default()).unwrap();
        assert_eq!(zl.zeros.len(), 1);
        assert!((zl.zeros[0].z - c(0.2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn double_zero_becomes_one_cluster() {
        let p = PolyCoeffs::from_roots(&[c(0.1, 0.2), c(0.1, 0.2), c(-0.6, 0.0)]);
        let zl = zeros_subdivide(&p, &Rect::square(1.0), &SubdivideOptions::default()).unwrap();
        assert_eq!(zl.total_multiplicity(), 3);
        let double = zl.zeros.iter().find(|z| z.multiplicity == 2).expect("merged double zero");
        assert!((double.z - c(0.1, 0.2)).norm() < 1e-6);
    }

    #[test]
    fn counts_are_additive() {
        let p = PolyCoeffs::from_roots(&[c(0.2, 0.3), c(-0.4, -0.1), c(0.7, -0.6), c(-0.9, 0.8)]);
        let whole = count_zeros_argument(&p, &Rect::square(1.0)).unwrap();
        let left = count_zeros_argument(&p, &Rect::new(-1.0, 0.05, -1.0, 1.0)).unwrap();
        let right = count_zeros_argument(&p, &Rect::new(0.05, 1.0, -1.0, 1.0)).unwrap();
        assert_eq!(whole, 4);
        assert_eq!(left + right, whole);
        assert_eq!(left, 2);
    }
}
