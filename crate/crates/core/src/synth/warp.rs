//! Trapezoidal perspective tilt: a homography from four corner
//! correspondences and bilinear inverse-mapped resampling.

use image::RgbImage;

use crate::error::{Error, Result};
use crate::geometry::Point2;

pub const MAX_TILT: f64 = 0.4;

pub type Matrix3 = [[f64; 3]; 3];

pub const IDENTITY: Matrix3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn apply(h: &Matrix3, p: Point2) -> Point2 {
    let w = h[2][0] * p.x + h[2][1] * p.y + h[2][2];
    Point2::new(
        (h[0][0] * p.x + h[0][1] * p.y + h[0][2]) / w,
        (h[1][0] * p.x + h[1][1] * p.y + h[1][2]) / w,
    )
}

pub fn multiply(a: &Matrix3, b: &Matrix3) -> Matrix3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn invert(m: &Matrix3) -> Option<Matrix3> {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let det = m[0][0] * adj[0][0] + m[0][1] * adj[1][0] + m[0][2] * adj[2][0];
    if det.abs() < 1e-300 || !det.is_finite() {
        return None;
    }
    Some(adj.map(|row| row.map(|v| v / det)))
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
fn solve8(mut a: [[f64; 8]; 8], mut b: [f64; 8]) -> Option<[f64; 8]> {
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..8 {
            let f = a[row][col] / a[col][col];
            for k in col..8 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 8];
    for row in (0..8).rev() {
        let s: f64 = (row + 1..8).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Homography taking each `src[i]` to `dst[i]`, normalised so `h[2][2] = 1`.
pub fn homography_from_corners(src: &[Point2; 4], dst: &[Point2; 4]) -> Option<Matrix3> {
    let mut a = [[0.0; 8]; 8];
    let mut b = [0.0; 8];
    for i in 0..4 {
        let (x, y, u, v) = (src[i].x, src[i].y, dst[i].x, dst[i].y);
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y];
        b[2 * i] = u;
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y];
        b[2 * i + 1] = v;
    }
    let h = solve8(a, b)?;
    Some([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])
}

fn check_tilt(t: f64) -> Result<()> {
    if !(t.abs() <= MAX_TILT) {
        return Err(Error::InvalidTilt(t));
    }
    Ok(())
}

/// Homography for a `width × height` image (pixel centres at integers).
/// A positive horizontal tilt moves both top corners inward by
/// `tilt_h·width`, a negative one the bottom corners; a positive vertical
/// tilt moves both left corners inward by `tilt_v·height`, a negative one the
/// right corners.
pub fn tilt_homography(width: u32, height: u32, tilt_h: f64, tilt_v: f64) -> Result<Matrix3> {
    check_tilt(tilt_h)?;
    check_tilt(tilt_v)?;
    if tilt_h == 0.0 && tilt_v == 0.0 {
        return Ok(IDENTITY);
    }
    let (w, h) = ((width.max(2) - 1) as f64, (height.max(2) - 1) as f64);
    let src = [
        Point2::new(0.0, 0.0),
        Point2::new(w, 0.0),
        Point2::new(w, h),
        Point2::new(0.0, h),
    ];
    let mut dst = src;
    let dx = tilt_h.abs() * width as f64;
    let (a, b) = if tilt_h > 0.0 { (0, 1) } else { (3, 2) };
    dst[a].x += dx;
    dst[b].x -= dx;
    let dy = tilt_v.abs() * height as f64;
    let (a, b) = if tilt_v > 0.0 { (0, 3) } else { (1, 2) };
    dst[a].y += dy;
    dst[b].y -= dy;
    homography_from_corners(&src, &dst).ok_or(Error::InvalidTilt(tilt_h))
}

/// Bilinear sample at a sub-pixel position; `None` outside the image.
fn sample(img: &RgbImage, x: f64, y: f64) -> Option<[u8; 3]> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    if !(x >= -0.5 && y >= -0.5 && x <= w - 0.5 && y <= h - 0.5) {
        return None;
    }
    let x = x.clamp(0.0, w - 1.0);
    let y = y.clamp(0.0, h - 1.0);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as u32, y0 as u32);
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let (p00, p10, p01, p11) = (img.get_pixel(x0, y0), img.get_pixel(x1, y0), img.get_pixel(x0, y1), img.get_pixel(x1, y1));
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
    }
    Some(out)
}

/// Resamples `img` through `h` (output pixel `p` reads source `h⁻¹·p`).
/// Pixels mapping outside the source are black.
pub fn warp_image(img: &RgbImage, h: &Matrix3) -> RgbImage {
    if *h == IDENTITY {
        return img.clone();
    }
    let inv = invert(h).expect("tilt homographies are invertible");
    RgbImage::from_fn(img.width(), img.height(), |x, y| {
        let s = apply(&inv, Point2::new(x as f64, y as f64));
        image::Rgb(sample(img, s.x, s.y).unwrap_or([0, 0, 0]))
    })
}

/// Applies the tilt to an image and maps `points` exactly through the same
/// homography.
pub fn perspective_warp(img: &RgbImage, points: &[Point2], tilt_h: f64, tilt_v: f64) -> Result<(RgbImage, Vec<Point2>, Matrix3)> {
    let h = tilt_homography(img.width(), img.height(), tilt_h, tilt_v)?;
    let warped = warp_image(img, &h);
    let pts = points.iter().map(|&p| apply(&h, p)).collect();
    Ok((warped, pts, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Point2, b: Point2, tol: f64) -> bool {
        (a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol
    }

    #[test]
    fn zero_tilt_is_identity() {
        let img = RgbImage::from_fn(17, 9, |x, y| image::Rgb([x as u8 * 10, y as u8 * 20, 7]));
        let pts = [Point2::new(3.25, 4.5)];
        let (out, mapped, h) = perspective_warp(&img, &pts, 0.0, 0.0).unwrap();
        assert_eq!(h, IDENTITY);
        assert_eq!(out, img);
        assert_eq!(mapped[0], pts[0]);
    }

    #[test]
    fn horizontal_tilt_moves_top_corners() {
        let h = tilt_homography(101, 51, 0.1, 0.0).unwrap();
        assert!(close(apply(&h, Point2::new(0.0, 0.0)), Point2::new(10.1, 0.0), 1e-9));
        assert!(close(apply(&h, Point2::new(100.0, 0.0)), Point2::new(89.9, 0.0), 1e-9));
        assert!(close(apply(&h, Point2::new(100.0, 50.0)), Point2::new(100.0, 50.0), 1e-9));
        assert!(close(apply(&h, Point2::new(0.0, 50.0)), Point2::new(0.0, 50.0), 1e-9));

        let h = tilt_homography(101, 51, 0.0, -0.2).unwrap();
        assert!(close(apply(&h, Point2::new(100.0, 0.0)), Point2::new(100.0, 10.2), 1e-9));
        assert!(close(apply(&h, Point2::new(100.0, 50.0)), Point2::new(100.0, 39.8), 1e-9));
    }

    #[test]
    fn rejects_large_tilt() {
        assert!(matches!(tilt_homography(10, 10, 0.41, 0.0), Err(Error::InvalidTilt(_))));
        assert!(matches!(tilt_homography(10, 10, 0.0, f64::NAN), Err(Error::InvalidTilt(_))));
    }

    #[test]
    fn invert_roundtrip() {
        let h = tilt_homography(640, 480, 0.13, -0.07).unwrap();
        let inv = invert(&h).unwrap();
        let id = multiply(&h, &inv);
        for i in 0..3 {
            for j in 0..3 {
                assert!((id[i][j] - IDENTITY[i][j]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn mapping_matches_matrix_product(
            th in -0.4..0.4f64, tv in -0.4..0.4f64, x in 0.0..300.0f64, y in 0.0..200.0f64,
        ) {
            let h = tilt_homography(300, 200, th, tv).unwrap();
            let p = apply(&h, Point2::new(x, y));
            let v = [x, y, 1.0];
            let hv: Vec<f64> = (0..3).map(|i| (0..3).map(|k| h[i][k] * v[k]).sum()).collect();
            prop_assert!((p.x - hv[0] / hv[2]).abs() <= 1e-9);
            prop_assert!((p.y - hv[1] / hv[2]).abs() <= 1e-9);
            let back = apply(&invert(&h).unwrap(), p);
            prop_assert!(close(back, Point2::new(x, y), 1e-6));
        }
    }
}
