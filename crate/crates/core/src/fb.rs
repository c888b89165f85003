//! Farneback two-frame motion estimation.
//!
//! Each pixel neighborhood is approximated by `f(x) = x^T A x + b^T x + c`
//! (weighted least squares with Gaussian applicability). For a pure shift
//! `f2(x) = f1(x - d)` the linear terms satisfy `b2 = b1 - 2 A1 d`, so
//! `d = -1/2 A1^-1 (b2 - b1)`. Per-pixel statistics are averaged over a
//! Gaussian window before solving.

use rayon::prelude::*;

use crate::error::{check_dims, Error, Result};
use crate::image::{
    build_pyramid, convolve_separable, gaussian_kernel, upsample_flow, warp_frame, FlowField,
    Frame, Grid,
};

#[derive(Debug, Clone, PartialEq)]
pub struct FbParams {
    /// Expansion neighborhood half-width; the fit uses `(2n+1)^2` pixels.
    pub poly_n: usize,
    pub poly_sigma: f64,
    /// Aggregation window length; Gaussian with `sigma = avg_window / 4`.
    pub avg_window: usize,
    pub level_count: usize,
    /// Pixels whose aggregated system has `sqrt(det) < min_det` get zero
    /// displacement. For a window of constant `A` this is `|det A| < min_det`.
    pub min_det: f64,
    /// Use `(A1 + A2) / 2` instead of `A1`. Off by default.
    pub symmetric_a: bool,
}

impl Default for FbParams {
    fn default() -> Self {
        Self {
            poly_n: 3,
            poly_sigma: 1.1,
            avg_window: 20,
            level_count: 3,
            min_det: 1e-9,
            symmetric_a: false,
        }
    }
}

impl FbParams {
    pub fn validate(&self) -> Result<()> {
        if self.poly_n < 1 {
            return Err(Error::InvalidParameter("poly_n must be >= 1".into()));
        }
        if !(self.poly_sigma > 0.0) {
            return Err(Error::InvalidParameter(
                "poly_sigma must be positive".into(),
            ));
        }
        if !(self.min_det > 0.0) {
            return Err(Error::InvalidParameter("min_det must be positive".into()));
        }
        if self.avg_window < 1 {
            return Err(Error::InvalidParameter("avg_window must be >= 1".into()));
        }
        if self.level_count < 1 {
            return Err(Error::InvalidParameter("level_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-pixel quadratic coefficients. `a` stores `[a00, a01, a11]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyExpansion {
    width: usize,
    height: usize,
    pub a: Vec<[f64; 3]>,
    pub b: Vec<[f64; 2]>,
    pub c: Vec<f64>,
}

impl PolyExpansion {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(A, b, c)` at pixel `(x, y)`, with `A` expanded to a full matrix.
    pub fn at(&self, x: usize, y: usize) -> ([[f64; 2]; 2], [f64; 2], f64) {
        let i = y * self.width + x;
        let [a00, a01, a11] = self.a[i];
        ([[a00, a01], [a01, a11]], self.b[i], self.c[i])
    }
}

/// Solves `m x = rhs` in place by Gauss-Jordan elimination with partial
/// pivoting. Returns `None` for a numerically singular `m`.
fn solve_dense<const N: usize>(mut m: [[f64; N]; N], mut rhs: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in 0..N {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..N {
                    m[row][k] -= f * m[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut x = [0.0; N];
    for i in 0..N {
        x[i] = rhs[i] / m[i][i];
    }
    Some(x)
}

/// Rows of `(Phi^T W Phi)^-1 Phi^T W` for the basis `1, x, y, x^2, y^2, xy`,
/// one column per neighborhood pixel (row-major offsets).
fn projection(n: usize, sigma: f64) -> Vec<[f64; 6]> {
    let r = n as isize;
    let mut basis = Vec::new();
    let mut weights = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (dx as f64, dy as f64);
            basis.push([1.0, x, y, x * x, y * y, x * y]);
            weights.push((-(x * x + y * y) / (2.0 * sigma * sigma)).exp());
        }
    }
    let mut gram = [[0.0; 6]; 6];
    for (phi, &w) in basis.iter().zip(&weights) {
        for i in 0..6 {
            for j in 0..6 {
                gram[i][j] += w * phi[i] * phi[j];
            }
        }
    }
    // Columns of the inverse Gram matrix.
    let mut inv = [[0.0; 6]; 6];
    for (k, col) in inv.iter_mut().enumerate() {
        let mut e = [0.0; 6];
        e[k] = 1.0;
        *col = solve_dense(gram, e).expect("quadratic basis Gram matrix is nonsingular");
    }
    basis
        .iter()
        .zip(&weights)
        .map(|(phi, &w)| {
            let mut p = [0.0; 6];
            for (i, pi) in p.iter_mut().enumerate() {
                // inv is symmetric; inv[k][i] is row i, column k.
                *pi = w * (0..6).map(|k| inv[k][i] * phi[k]).sum::<f64>();
            }
            p
        })
        .collect()
}

/// Per-pixel weighted least-squares quadratic fit with replicated borders.
pub fn poly_expansion(frame: &Frame, params: &FbParams) -> Result<PolyExpansion> {
    params.validate()?;
    let side = 2 * params.poly_n + 1;
    let (w, h) = (frame.width(), frame.height());
    if w < side || h < side {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            required: side,
        });
    }
    let proj = projection(params.poly_n, params.poly_sigma);
    let g = frame.grid();
    let r = params.poly_n as isize;

    let coeffs: Vec<[f64; 6]> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let proj = &proj;
            (0..w).map(move |x| {
                let mut acc = [0.0; 6];
                let mut k = 0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let v = g.get_clamped(x as isize + dx, y as isize + dy);
                        for (a, p) in acc.iter_mut().zip(&proj[k]) {
                            *a += p * v;
                        }
                        k += 1;
                    }
                }
                acc
            })
        })
        .collect();

    let mut a = Vec::with_capacity(w * h);
    let mut b = Vec::with_capacity(w * h);
    let mut c = Vec::with_capacity(w * h);
    for r6 in coeffs {
        c.push(r6[0]);
        b.push([r6[1], r6[2]]);
        a.push([r6[3], 0.5 * r6[5], r6[4]]);
    }
    Ok(PolyExpansion {
        width: w,
        height: h,
        a,
        b,
        c,
    })
}

/// Displacement from `exp1` to `exp2` with windowed aggregation.
pub fn fb_displacement(
    exp1: &PolyExpansion,
    exp2: &PolyExpansion,
    params: &FbParams,
) -> Result<FlowField> {
    params.validate()?;
    check_dims(exp1.width, exp1.height, exp2.width, exp2.height)?;
    Ok(displacement_with_support(exp1, exp2, params).0)
}

/// Displacement plus a per-pixel flag that is false where the aggregated
/// system was degenerate.
fn displacement_with_support(
    exp1: &PolyExpansion,
    exp2: &PolyExpansion,
    params: &FbParams,
) -> (FlowField, Vec<bool>) {
    let (w, h) = (exp1.width, exp1.height);
    let n = w * h;

    // Per-pixel normal-equation terms: G = A^T A, r = A^T (-(b2 - b1) / 2).
    let mut g00 = vec![0.0; n];
    let mut g01 = vec![0.0; n];
    let mut g11 = vec![0.0; n];
    let mut r0 = vec![0.0; n];
    let mut r1 = vec![0.0; n];
    for i in 0..n {
        let [mut a00, mut a01, mut a11] = exp1.a[i];
        if params.symmetric_a {
            let [c00, c01, c11] = exp2.a[i];
            a00 = 0.5 * (a00 + c00);
            a01 = 0.5 * (a01 + c01);
            a11 = 0.5 * (a11 + c11);
        }
        let hx = -0.5 * (exp2.b[i][0] - exp1.b[i][0]);
        let hy = -0.5 * (exp2.b[i][1] - exp1.b[i][1]);
        g00[i] = a00 * a00 + a01 * a01;
        g01[i] = a01 * (a00 + a11);
        g11[i] = a01 * a01 + a11 * a11;
        r0[i] = a00 * hx + a01 * hy;
        r1[i] = a01 * hx + a11 * hy;
    }

    let kernel = gaussian_kernel(params.avg_window / 2, params.avg_window as f64 / 4.0);
    let smooth = |v: Vec<f64>| convolve_separable(&Grid::new(w, h, v).expect("dims"), &kernel);
    let (g00, g01, g11, r0, r1) = (
        smooth(g00),
        smooth(g01),
        smooth(g11),
        smooth(r0),
        smooth(r1),
    );

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut support = vec![false; n];
    for i in 0..n {
        let (a, b, d) = (g00.data()[i], g01.data()[i], g11.data()[i]);
        let det = a * d - b * b;
        if !(det.max(0.0).sqrt() >= params.min_det) {
            continue;
        }
        let (p, q) = (r0.data()[i], r1.data()[i]);
        u[i] = (d * p - b * q) / det;
        v[i] = (a * q - b * p) / det;
        support[i] = true;
    }
    let flow = FlowField::new(
        Grid::new(w, h, u).expect("dims"),
        Grid::new(w, h, v).expect("dims"),
    )
    .expect("dims");
    (flow, support)
}

/// Coarse-to-fine Farneback flow from `frame_t` to `frame_t1`.
///
/// Pixels whose aggregated system is degenerate at a level are reset to zero
/// there, so flat regions do not inherit motion leaked from coarser levels.
pub fn fb_flow(frame_t: &Frame, frame_t1: &Frame, params: &FbParams) -> Result<FlowField> {
    params.validate()?;
    check_dims(
        frame_t.width(),
        frame_t.height(),
        frame_t1.width(),
        frame_t1.height(),
    )?;
    let p0 = build_pyramid(frame_t, params.level_count)?;
    let p1 = build_pyramid(frame_t1, params.level_count)?;

    let top = params.level_count - 1;
    let mut flow = FlowField::zeros(p0.level(top).width(), p0.level(top).height());
    for lvl in (0..=top).rev() {
        let (f0, f1) = (p0.level(lvl), p1.level(lvl));
        if lvl < top {
            flow = upsample_flow(&flow, f0.width(), f0.height())?;
        }
        let warped = warp_frame(f1, &flow)?;
        let e1 = poly_expansion(f0, params)?;
        let e2 = poly_expansion(&warped, params)?;
        let (d, support) = displacement_with_support(&e1, &e2, params);
        flow = flow.add(&d)?;
        for (i, ok) in support.into_iter().enumerate() {
            if !ok {
                flow.u.data_mut()[i] = 0.0;
                flow.v.data_mut()[i] = 0.0;
            }
        }
    }
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::test_util::random_frame;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn quadratic(
        w: usize,
        h: usize,
        a: [[f64; 2]; 2],
        b: [f64; 2],
        c: f64,
        shift: [f64; 2],
    ) -> Frame {
        let (cx, cy) = ((w / 2) as f64, (h / 2) as f64);
        Frame::from_fn(w, h, |x, y| {
            let px = x as f64 - cx - shift[0];
            let py = y as f64 - cy - shift[1];
            px * (a[0][0] * px + a[0][1] * py)
                + py * (a[1][0] * px + a[1][1] * py)
                + b[0] * px
                + b[1] * py
                + c
        })
        .unwrap()
    }

    #[test]
    fn constant_frame_fit() {
        let f = Frame::constant(12, 10, 0.37).unwrap();
        let e = poly_expansion(&f, &FbParams::default()).unwrap();
        for y in 0..10 {
            for x in 0..12 {
                let (a, b, c) = e.at(x, y);
                for v in [a[0][0], a[0][1], a[1][1], b[0], b[1]] {
                    assert!(v.abs() < 1e-13);
                }
                assert_abs_diff_eq!(c, 0.37, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn ramp_fit_is_exact() {
        let f = Frame::from_fn(20, 12, |x, _| 0.05 * x as f64).unwrap();
        let e = poly_expansion(&f, &FbParams::default()).unwrap();
        for y in 3..9 {
            for x in 3..17 {
                let (a, b, c) = e.at(x, y);
                assert!(a.iter().flatten().all(|v| v.abs() < 1e-12));
                assert_abs_diff_eq!(b[0], 0.05, epsilon = 1e-12);
                assert_abs_diff_eq!(b[1], 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(c, 0.05 * x as f64, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_fit_matches_generic_least_squares() {
        let params = FbParams::default();
        let f = quadratic(
            15,
            15,
            [[0.001, 0.001], [0.001, 0.0]],
            [0.0, 0.0],
            0.5,
            [0.0, 0.0],
        );
        let e = poly_expansion(&f, &params).unwrap();
        let (a, b, c) = e.at(7, 7);
        assert_abs_diff_eq!(a[0][0], 0.001, epsilon = 1e-6);
        assert_abs_diff_eq!(a[0][1], 0.001, epsilon = 1e-6);
        assert_abs_diff_eq!(a[1][1], 0.0, epsilon = 1e-6);

        // Independent oracle: sqrt(W)-scaled design matrix solved by SVD.
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for dy in -3i32..=3 {
            for dx in -3i32..=3 {
                let (x, y) = (dx as f64, dy as f64);
                let sw = (-(x * x + y * y) / (2.0 * 1.1 * 1.1)).exp().sqrt();
                rows.extend([sw, sw * x, sw * y, sw * x * x, sw * y * y, sw * x * y]);
                rhs.push(sw * f.get((7 + dx) as usize, (7 + dy) as usize));
            }
        }
        let m = DMatrix::from_row_slice(49, 6, &rows);
        let sol = m
            .svd(true, true)
            .solve(&DVector::from_vec(rhs), 1e-14)
            .unwrap();
        assert_abs_diff_eq!(c, sol[0], epsilon = 1e-9);
        assert_abs_diff_eq!(b[0], sol[1], epsilon = 1e-9);
        assert_abs_diff_eq!(b[1], sol[2], epsilon = 1e-9);
        assert_abs_diff_eq!(a[0][0], sol[3], epsilon = 1e-9);
        assert_abs_diff_eq!(a[1][1], sol[4], epsilon = 1e-9);
        assert_abs_diff_eq!(2.0 * a[0][1], sol[5], epsilon = 1e-9);
    }

    #[test]
    fn frame_too_small() {
        let f = Frame::constant(6, 20, 0.1).unwrap();
        assert!(matches!(
            poly_expansion(&f, &FbParams::default()),
            Err(Error::FrameTooSmall { required: 7, .. })
        ));
    }

    #[test]
    fn equal_expansions_give_zero() {
        let f = random_frame(24, 24, 4);
        let e = poly_expansion(&f, &FbParams::default()).unwrap();
        let d = fb_displacement(&e, &e, &FbParams::default()).unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn shifted_quadratic_recovers_shift() {
        let params = FbParams::default();
        let a = [[0.0012, 0.0003], [0.0003, 0.0008]];
        let b = [0.001, -0.001];
        let d = [1.0, 0.0];
        let f1 = quadratic(31, 31, a, b, 0.2, [0.0, 0.0]);
        let f2 = quadratic(31, 31, a, b, 0.2, d);
        let e1 = poly_expansion(&f1, &params).unwrap();
        let e2 = poly_expansion(&f2, &params).unwrap();

        // b2 = b1 - 2 A d at the center pixel
        let (a1, b1, _) = e1.at(15, 15);
        let (_, b2, _) = e2.at(15, 15);
        assert_abs_diff_eq!(
            b2[0],
            b1[0] - 2.0 * (a1[0][0] * d[0] + a1[0][1] * d[1]),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            b2[1],
            b1[1] - 2.0 * (a1[1][0] * d[0] + a1[1][1] * d[1]),
            epsilon = 1e-10
        );

        let flow = fb_displacement(&e1, &e2, &params).unwrap();
        let margin = params.poly_n + params.avg_window / 2;
        for y in margin..31 - margin {
            for x in margin..31 - margin {
                assert_abs_diff_eq!(flow.u.get(x, y), 1.0, epsilon = 1e-3);
                assert_abs_diff_eq!(flow.v.get(x, y), 0.0, epsilon = 1e-3);
            }
        }
    }

    #[test]
    fn flat_region_is_degenerate() {
        let f = Frame::constant(24, 24, 0.5).unwrap();
        let g = Frame::constant(24, 24, 0.6).unwrap();
        let params = FbParams::default();
        let d = fb_displacement(
            &poly_expansion(&f, &params).unwrap(),
            &poly_expansion(&g, &params).unwrap(),
            &params,
        )
        .unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn identical_frames_zero_flow() {
        let f = random_frame(40, 40, 2);
        let flow = fb_flow(&f, &f, &FbParams::default()).unwrap();
        assert!(flow.max_abs() <= 1e-9);
        let g = random_frame(40, 41, 2);
        assert!(fb_flow(&f, &g, &FbParams::default()).is_err());
    }

    #[test]
    fn dense_solver_matches_known_system() {
        let m = [[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]];
        let x = solve_dense(m, [3.0, 5.0, 5.0]).unwrap();
        for (xi, e) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert_abs_diff_eq!(*xi, e, epsilon = 1e-14);
        }
        assert!(solve_dense([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0]).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn brightness_offset_leaves_displacement_unchanged(seed in 0u64..5000, k in 0.0f64..0.3) {
            let params = FbParams::default();
            let a = random_frame(24, 24, seed);
            let b = random_frame(24, 24, seed + 7);
            let scale = |f: &Frame, off: f64| {
                Frame::from_fn(24, 24, |x, y| 0.6 * f.get(x, y) + off).unwrap()
            };
            let d0 = fb_displacement(
                &poly_expansion(&scale(&a, 0.0), &params).unwrap(),
                &poly_expansion(&scale(&b, 0.0), &params).unwrap(),
                &params,
            ).unwrap();
            let d1 = fb_displacement(
                &poly_expansion(&scale(&a, k), &params).unwrap(),
                &poly_expansion(&scale(&b, k), &params).unwrap(),
                &params,
            ).unwrap();
            for (p, q) in d0.u.data().iter().chain(d0.v.data()).zip(d1.u.data().iter().chain(d1.v.data())) {
                prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()));
                prop_assert!(q.is_finite());
            }
        }
    }
}
