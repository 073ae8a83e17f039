use num_complex::Complex64;
use rayon::prelude::*;

use crate::holomap::Window;

/// Grid value with the Richardson error estimate `|S_h - S_2h| / 15`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Smallest node count `>= n` with a multiple of four intervals.
pub(crate) fn simpson_nodes(n: usize) -> usize {
    let intervals = (n.max(5) - 1).div_ceil(4) * 4;
    intervals + 1
}

fn simpson_weights(nodes: usize, h: f64) -> Vec<f64> {
    (0..nodes)
        .map(|i| {
            let w = if i == 0 || i + 1 == nodes {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// Iterated Simpson rule on the window grid with one Richardson step against the
/// rule on every other node. Node counts are rounded up so both rules apply.
/// Rows are evaluated in parallel and combined in row order.
pub fn simpson_richardson<E, F>(w: &Window, f: F) -> Result<Estimate, E>
where
    E: Send,
    F: Fn(Complex64) -> Result<f64, E> + Sync,
{
    let g = Window {
        rect: w.rect,
        nx: simpson_nodes(w.nx),
        ny: simpson_nodes(w.ny),
    };
    let wx = simpson_weights(g.nx, g.dx());
    let wx2 = simpson_weights(g.nx.div_ceil(2), 2.0 * g.dx());
    let wy = simpson_weights(g.ny, g.dy());
    let wy2 = simpson_weights(g.ny.div_ceil(2), 2.0 * g.dy());
    let rows: Vec<Result<(f64, f64), E>> = (0..g.ny)
        .into_par_iter()
        .map(|iy| {
            let mut fine = 0.0;
            let mut coarse = 0.0;
            for ix in 0..g.nx {
                let v = f(g.node(ix, iy))?;
                fine += wx[ix] * v;
                if ix % 2 == 0 {
                    coarse += wx2[ix / 2] * v;
                }
            }
            Ok((fine, coarse))
        })
        .collect();
    let mut fine = 0.0;
    let mut coarse = 0.0;
    for (iy, r) in rows.into_iter().enumerate() {
        let (rf, rc) = r?;
        fine += wy[iy] * rf;
        if iy % 2 == 0 {
            coarse += wy2[iy / 2] * rc;
        }
    }
    Ok(Estimate {
        value: fine + (fine - coarse) / 15.0,
        error: (fine - coarse).abs() / 15.0,
    })
}

/// Three-point Gauss-Legendre rule on `[-1, 1]`.
const GL_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Refinement controls for [`adaptive_cubature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubatureOptions {
    /// A cell of width `s` is accepted once its two estimates differ by at most
    /// `tol * s / W`, `W` the window width. Errors concentrated along a curve then
    /// add up to about `tol` times the curve length over `W`.
    pub tol: f64,
    pub max_depth: u32,
}

impl Default for CubatureOptions {
    fn default() -> Self {
        CubatureOptions { tol: 1e-8, max_depth: 10 }
    }
}

fn gauss_cell<E, F>(f: &F, x0: f64, y0: f64, sx: f64, sy: f64) -> Result<f64, E>
where
    F: Fn(Complex64) -> Result<f64, E>,
{
    let (hx, hy) = (0.5 * sx, 0.5 * sy);
    let mut acc = 0.0;
    for (a, wa) in GL_NODES.iter().zip(GL_WEIGHTS) {
        for (b, wb) in GL_NODES.iter().zip(GL_WEIGHTS) {
            acc += wa * wb * f(Complex64::new(x0 + hx * (1.0 + a), y0 + hy * (1.0 + b)))?;
        }
    }
    Ok(acc * hx * hy)
}

/// Samples per line used to bracket crossings of the level function.
const LINE_SAMPLES: usize = 5;

/// Crossing of `g` in `[a, b]` given `g(a) g(b) < 0`, by the Illinois variant of
/// regula falsi.
fn crossing<E>(g: &impl Fn(f64) -> Result<f64, E>, mut a: f64, mut b: f64, mut ga: f64, mut gb: f64) -> Result<f64, E> {
    let tol = 1e-14 * (b - a).abs().max(a.abs().max(b.abs()) * 1e-2);
    let mut side = 0i8;
    for _ in 0..100 {
        let c = (a * gb - b * ga) / (gb - ga);
        if !c.is_finite() || (b - a).abs() <= tol {
            break;
        }
        let gc = g(c)?;
        if gc == 0.0 {
            return Ok(c);
        }
        if (gc < 0.0) == (ga < 0.0) {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}

/// 3x3 Gauss rule on a cell, except that each Gauss line is split where `level`
/// changes sign and each piece gets its own 3-point rule. Lines run along the axis
/// closer to the gradient of `level`, so they cross its zero set as transversally as
/// possible and the outer integral stays smooth. An integrand with a kink or a jump
/// along `{level = 0}` is then integrated to high order.
fn split_cell<E, F, L>(f: &F, level: &L, x0: f64, y0: f64, sx: f64, sy: f64) -> Result<f64, E>
where
    F: Fn(Complex64) -> Result<f64, E>,
    L: Fn(Complex64) -> Result<f64, E>,
{
    let (xc, yc) = (x0 + 0.5 * sx, y0 + 0.5 * sy);
    let gx = (level(Complex64::new(x0 + sx, yc))? - level(Complex64::new(x0, yc))?) / sx;
    let gy = (level(Complex64::new(xc, y0 + sy))? - level(Complex64::new(xc, y0))?) / sy;
    // point on a line: `t` along the line, `r` across the lines
    let along_x = gx.abs() >= gy.abs();
    let at = |t: f64, r: f64| if along_x { Complex64::new(t, r) } else { Complex64::new(r, t) };
    let (t0, st, r0, sr) = if along_x { (x0, sx, y0, sy) } else { (y0, sy, x0, sx) };

    let hr = 0.5 * sr;
    let mut acc = 0.0;
    for (b, wb) in GL_NODES.iter().zip(GL_WEIGHTS) {
        let r = r0 + hr * (1.0 + b);
        let g = |t: f64| level(at(t, r));
        let mut cuts = vec![t0];
        let mut prev = (t0, g(t0)?);
        for k in 1..LINE_SAMPLES {
            let t = t0 + st * k as f64 / (LINE_SAMPLES - 1) as f64;
            let gt = g(t)?;
            if (gt < 0.0) != (prev.1 < 0.0) && gt != 0.0 && prev.1 != 0.0 {
                cuts.push(crossing(&g, prev.0, t, prev.1, gt)?);
            }
            prev = (t, gt);
        }
        cuts.push(t0 + st);
        let mut line = 0.0;
        for piece in cuts.windows(2) {
            let (lo, ht) = (piece[0], 0.5 * (piece[1] - piece[0]));
            for (a, wa) in GL_NODES.iter().zip(GL_WEIGHTS) {
                line += wa * ht * f(at(lo + ht * (1.0 + a), r))?;
            }
        }
        acc += wb * hr * line;
    }
    Ok(acc)
}

#[allow(clippy::too_many_arguments)]
fn refine<E, F, L>(
    f: &F,
    level: &L,
    x0: f64,
    y0: f64,
    sx: f64,
    sy: f64,
    whole: f64,
    cell_tol: f64,
    depth: u32,
    opts: &CubatureOptions,
) -> Result<(f64, f64), E>
where
    F: Fn(Complex64) -> Result<f64, E>,
    L: Fn(Complex64) -> Result<f64, E>,
{
    let (hx, hy) = (0.5 * sx, 0.5 * sy);
    let corners = [(x0, y0), (x0 + hx, y0), (x0, y0 + hy), (x0 + hx, y0 + hy)];
    let mut quads = [0.0; 4];
    for (q, (cx, cy)) in quads.iter_mut().zip(corners) {
        *q = split_cell(f, level, cx, cy, hx, hy)?;
    }
    let split: f64 = quads.iter().sum();
    let diff = (split - whole).abs();
    if diff <= cell_tol || depth >= opts.max_depth {
        return Ok((split, diff));
    }
    let mut value = 0.0;
    let mut error = 0.0;
    for ((cx, cy), q) in corners.into_iter().zip(quads) {
        let (v, e) = refine(f, level, cx, cy, hx, hy, q, 0.5 * cell_tol, depth + 1, opts)?;
        value += v;
        error += e;
    }
    Ok((value, error))
}

/// True when `level` changes sign over the corners and centre of the cell, or comes
/// closer to zero than twice its spread there.
fn near_zero_set<E, L>(level: &L, lo: Complex64, hi: Complex64) -> Result<bool, E>
where
    L: Fn(Complex64) -> Result<f64, E>,
{
    let pts = [lo, hi, Complex64::new(lo.re, hi.im), Complex64::new(hi.re, lo.im), (lo + hi) * 0.5];
    let (mut min, mut max, mut min_abs) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for z in pts {
        let u = level(z)?;
        min = min.min(u);
        max = max.max(u);
        min_abs = min_abs.min(u.abs());
    }
    Ok(min <= 0.0 && max >= 0.0 || min_abs < 2.0 * (max - min))
}

/// Composite 3x3 Gauss-Legendre cubature over the cells of `w` for integrands that
/// are smooth away from the zero set of `level`, where they may have a kink, a jump
/// or a thin layer. Cells near that set use a rule whose Gauss lines are split at the
/// crossings, and are subdivided while the rule on the cell and on its quadrants
/// disagree. Rows run in parallel and are summed in row order; the error estimate
/// collects the last disagreement of every refined cell.
pub fn adaptive_cubature<E, F, L>(w: &Window, f: F, level: L, opts: CubatureOptions) -> Result<Estimate, E>
where
    E: Send,
    F: Fn(Complex64) -> Result<f64, E> + Sync,
    L: Fn(Complex64) -> Result<f64, E> + Sync,
{
    let (dx, dy) = (w.dx(), w.dy());
    let cell_tol = opts.tol * dx / w.rect.width();
    let rows: Vec<Result<(f64, f64), E>> = (0..w.ny - 1)
        .into_par_iter()
        .map(|iy| {
            let mut value = 0.0;
            let mut error = 0.0;
            for ix in 0..w.nx - 1 {
                let (lo, hi) = (w.node(ix, iy), w.node(ix + 1, iy + 1));
                if near_zero_set(&level, lo, hi)? {
                    let whole = split_cell(&f, &level, lo.re, lo.im, dx, dy)?;
                    let (v, e) = refine(&f, &level, lo.re, lo.im, dx, dy, whole, cell_tol, 0, &opts)?;
                    value += v;
                    error += e;
                } else {
                    value += gauss_cell(&f, lo.re, lo.im, dx, dy)?;
                }
            }
            Ok((value, error))
        })
        .collect();
    let mut value = 0.0;
    let mut error = 0.0;
    for r in rows {
        let (v, e) = r?;
        value += v;
        error += e;
    }
    Ok(Estimate { value, error })
}

/// [`adaptive_cubature`] for an integrand smooth on the whole window.
pub fn gauss_cubature<E, F>(w: &Window, f: F) -> Result<f64, E>
where
    E: Send,
    F: Fn(Complex64) -> Result<f64, E> + Sync,
{
    Ok(adaptive_cubature(w, f, |_| Ok(1.0), CubatureOptions::default())?.value)
}
