//! Scale-space extrema and their sub-pixel refinement.

use nalgebra::{Matrix3, Vector3};

use super::pyramid::{DogPyramid, Plane};
use super::PyramidParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub octave: usize,
    pub scale_index: usize,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    LowContrast,
    EdgeResponse,
    Diverged,
}

/// Result of quadratic refinement, in octave-local coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Localized {
    pub octave: usize,
    /// Integer cell the refinement converged to.
    pub scale_index: usize,
    pub x: usize,
    pub y: usize,
    /// Offset from the cell, ordered (x, y, scale), each within [-0.5, 0.5].
    pub offset: [f64; 3],
    /// Interpolated DoG value at the refined position.
    pub response: f64,
}

const MAX_REFINE_STEPS: usize = 5;

/// Cells strictly above or strictly below all 26 neighbours. Only scale
/// indices `1..=S` and pixels with a full 3x3 neighbourhood are examined.
pub fn detect_extrema(dp: &DogPyramid) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (o, oct) in dp.octaves.iter().enumerate() {
        for s in 1..oct.len().saturating_sub(1) {
            let (below, here, above) = (&oct[s - 1], &oct[s], &oct[s + 1]);
            if here.width < 3 || here.height < 3 {
                continue;
            }
            for y in 1..here.height - 1 {
                for x in 1..here.width - 1 {
                    if is_extremum([below, here, above], x, y) {
                        out.push(Candidate {
                            octave: o,
                            scale_index: s,
                            x,
                            y,
                        });
                    }
                }
            }
        }
    }
    out
}

fn is_extremum(stack: [&Plane; 3], x: usize, y: usize) -> bool {
    let v = stack[1].at(x, y);
    let mut is_max = true;
    let mut is_min = true;
    for (k, plane) in stack.iter().enumerate() {
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if k == 1 && nx == x && ny == y {
                    continue;
                }
                let n = plane.at(nx, ny);
                is_max &= v > n;
                is_min &= v < n;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    is_max || is_min
}

/// Central-difference gradient (x, y, s) and Hessian at a DoG cell.
pub(crate) fn derivatives(oct: &[Plane], s: usize, x: usize, y: usize) -> (Vector3<f64>, Matrix3<f64>) {
    let d = |ds: isize, dx: isize, dy: isize| {
        oct[(s as isize + ds) as usize].at((x as isize + dx) as usize, (y as isize + dy) as usize)
    };
    let v = d(0, 0, 0);
    let g = Vector3::new(
        0.5 * (d(0, 1, 0) - d(0, -1, 0)),
        0.5 * (d(0, 0, 1) - d(0, 0, -1)),
        0.5 * (d(1, 0, 0) - d(-1, 0, 0)),
    );
    let dxx = d(0, 1, 0) + d(0, -1, 0) - 2.0 * v;
    let dyy = d(0, 0, 1) + d(0, 0, -1) - 2.0 * v;
    let dss = d(1, 0, 0) + d(-1, 0, 0) - 2.0 * v;
    let dxy = 0.25 * (d(0, 1, 1) - d(0, -1, 1) - d(0, 1, -1) + d(0, -1, -1));
    let dxs = 0.25 * (d(1, 1, 0) - d(1, -1, 0) - d(-1, 1, 0) + d(-1, -1, 0));
    let dys = 0.25 * (d(1, 0, 1) - d(1, 0, -1) - d(-1, 0, 1) + d(-1, 0, -1));
    let h = Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
    (g, h)
}

/// Quadratic sub-pixel refinement followed by the contrast and edge tests.
pub fn localize_keypoint(
    dp: &DogPyramid,
    cand: Candidate,
    params: &PyramidParams,
) -> Result<Localized, Rejection> {
    let oct = &dp.octaves[cand.octave];
    let scales = dp.scales_per_octave;
    let (w, h) = (oct[0].width as isize, oct[0].height as isize);
    let (mut s, mut x, mut y) = (
        cand.scale_index as isize,
        cand.x as isize,
        cand.y as isize,
    );

    let mut converged = None;
    for _ in 0..MAX_REFINE_STEPS {
        let (g, hess) = derivatives(oct, s as usize, x as usize, y as usize);
        let offset = match hess.try_inverse() {
            Some(inv) => -(inv * g),
            None => return Err(Rejection::Diverged),
        };
        if !offset.iter().all(|v| v.is_finite()) {
            return Err(Rejection::Diverged);
        }
        if offset.iter().all(|v| v.abs() <= 0.5) {
            converged = Some((offset, g));
            break;
        }
        x += offset[0].round() as isize;
        y += offset[1].round() as isize;
        s += offset[2].round() as isize;
        if s < 1 || s > scales as isize || x < 1 || x > w - 2 || y < 1 || y > h - 2 {
            return Err(Rejection::Diverged);
        }
    }
    let (offset, g) = converged.ok_or(Rejection::Diverged)?;
    let (s, x, y) = (s as usize, x as usize, y as usize);

    let response = oct[s].at(x, y) + 0.5 * g.dot(&offset);
    if response.abs() < params.contrast_threshold {
        return Err(Rejection::LowContrast);
    }
    if !passes_edge_test(&oct[s], x, y, params.edge_ratio) {
        return Err(Rejection::EdgeResponse);
    }
    Ok(Localized {
        octave: cand.octave,
        scale_index: s,
        x,
        y,
        offset: [offset[0], offset[1], offset[2]],
        response,
    })
}

/// Principal-curvature ratio test on the 2-D spatial Hessian.
pub fn passes_edge_test(plane: &Plane, x: usize, y: usize, edge_ratio: f64) -> bool {
    let v = plane.at(x, y);
    let dxx = plane.at(x + 1, y) + plane.at(x - 1, y) - 2.0 * v;
    let dyy = plane.at(x, y + 1) + plane.at(x, y - 1) - 2.0 * v;
    let dxy = 0.25
        * (plane.at(x + 1, y + 1) - plane.at(x - 1, y + 1) - plane.at(x + 1, y - 1)
            + plane.at(x - 1, y - 1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    if det <= 0.0 {
        return false;
    }
    let bound = (edge_ratio + 1.0).powi(2) / edge_ratio;
    tr * tr / det < bound
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Plane {
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(f(x, y));
            }
        }
        Plane {
            width: w,
            height: h,
            data,
        }
    }

    fn stack(planes: Vec<Plane>) -> DogPyramid {
        DogPyramid {
            scales_per_octave: planes.len() - 2,
            octaves: vec![planes],
        }
    }

    #[test]
    fn zero_dog_has_no_extrema() {
        let dp = stack((0..5).map(|_| plane(10, 10, |_, _| 0.0)).collect());
        assert!(detect_extrema(&dp).is_empty());
    }

    #[test]
    fn single_peak_is_found() {
        let mut planes: Vec<Plane> = (0..3).map(|_| plane(5, 5, |_, _| 0.1)).collect();
        planes[1].data[2 * 5 + 2] = 0.5;
        let found = detect_extrema(&stack(planes));
        assert_eq!(
            found,
            vec![Candidate {
                octave: 0,
                scale_index: 1,
                x: 2,
                y: 2
            }]
        );
    }

    #[test]
    fn ties_are_not_extrema() {
        let mut planes: Vec<Plane> = (0..3).map(|_| plane(5, 5, |_, _| 0.0)).collect();
        planes[1].data[12] = 0.5;
        planes[2].data[13] = 0.5;
        assert!(detect_extrema(&stack(planes)).is_empty());
    }

    // a symmetric quadratic bowl centred on a sample point
    fn bowl(peak: f64) -> DogPyramid {
        let planes = (0..5)
            .map(|s| {
                plane(9, 9, move |x, y| {
                    let (dx, dy, ds) = (x as f64 - 4.0, y as f64 - 4.0, s as f64 - 2.0);
                    peak - 0.01 * (dx * dx + dy * dy + ds * ds)
                })
            })
            .collect();
        stack(planes)
    }

    #[test]
    fn symmetric_bowl_has_zero_offset() {
        let dp = bowl(0.2);
        let cand = Candidate {
            octave: 0,
            scale_index: 2,
            x: 4,
            y: 4,
        };
        assert!(detect_extrema(&dp).contains(&cand));
        let loc = localize_keypoint(&dp, cand, &PyramidParams::default()).unwrap();
        assert_eq!(loc.offset, [0.0, 0.0, 0.0]);
        assert!((loc.response - 0.2).abs() < 1e-12);
    }

    #[test]
    fn weak_peak_is_low_contrast() {
        let dp = bowl(0.01);
        let cand = Candidate {
            octave: 0,
            scale_index: 2,
            x: 4,
            y: 4,
        };
        assert_eq!(
            localize_keypoint(&dp, cand, &PyramidParams::default()),
            Err(Rejection::LowContrast)
        );
    }

    #[test]
    fn off_centre_peak_moves_cell() {
        // true peak at x = 5.8: the first step overshoots 0.5 and moves
        let planes = (0..5)
            .map(|s| {
                plane(12, 9, move |x, y| {
                    let (dx, dy, ds) = (x as f64 - 5.8, y as f64 - 4.0, s as f64 - 2.0);
                    0.3 - 0.01 * (dx * dx + dy * dy + ds * ds)
                })
            })
            .collect();
        let dp = stack(planes);
        let cand = Candidate {
            octave: 0,
            scale_index: 2,
            x: 5,
            y: 4,
        };
        let loc = localize_keypoint(&dp, cand, &PyramidParams::default()).unwrap();
        assert_eq!(loc.x, 6);
        assert!((loc.offset[0] + 0.2).abs() < 1e-9);
    }

    #[test]
    fn ridge_fails_edge_test() {
        // elongated peak: curvature along x is 50x stronger than along y
        let p = plane(7, 7, |x, y| {
            let (dx, dy) = (x as f64 - 3.0, y as f64 - 3.0);
            0.5 - 0.05 * dx * dx - 0.001 * dy * dy
        });
        assert!(!passes_edge_test(&p, 3, 3, 10.0));
        let round = plane(7, 7, |x, y| {
            let (dx, dy) = (x as f64 - 3.0, y as f64 - 3.0);
            0.5 - 0.05 * dx * dx - 0.03 * dy * dy
        });
        assert!(passes_edge_test(&round, 3, 3, 10.0));
    }
}
