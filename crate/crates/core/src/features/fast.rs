//! FAST-9 segment test with Harris ranking and 3×3 non-maximum suppression.

use image::GrayImage;

use super::{Detector, Keypoint, KeypointPool};

/// Bresenham circle of radius 3 as (dx, dy), clockwise from 12 o'clock.
pub const RING: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Contiguous ring pixels required.
pub const ARC_LENGTH: u32 = 9;

pub const HARRIS_K: f64 = 0.04;
pub const HARRIS_WINDOW: i32 = 7;

fn has_arc(mask: u16) -> bool {
    let doubled = mask as u32 | ((mask as u32) << 16);
    let mut run = doubled;
    for shift in 1..ARC_LENGTH {
        run &= doubled >> shift;
    }
    run != 0
}

fn segment_test(gray: &GrayImage, x: u32, y: u32, threshold: u8) -> bool {
    let center = gray.get_pixel(x, y)[0] as i16;
    let t = threshold as i16;
    let (mut bright, mut dark) = (0u16, 0u16);
    for (i, (dx, dy)) in RING.iter().enumerate() {
        let v = gray.get_pixel((x as i32 + dx) as u32, (y as i32 + dy) as u32)[0] as i16;
        if v > center + t {
            bright |= 1 << i;
        } else if v < center - t {
            dark |= 1 << i;
        }
    }
    has_arc(bright) || has_arc(dark)
}

/// Every pixel passing the segment test, in raster order, as (row, col).
/// Pixels closer than 3 to the border are never tested.
pub fn fast_candidates(gray: &GrayImage, threshold: u8) -> Vec<(u32, u32)> {
    let (w, h) = gray.dimensions();
    if w < 7 || h < 7 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            if segment_test(gray, x, y, threshold) {
                out.push((y, x));
            }
        }
    }
    out
}

/// Sobel gradients with clamped borders, intensities scaled to [0, 1].
fn gradients(gray: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = gray.dimensions();
    let at = |x: i32, y: i32| {
        let x = x.clamp(0, w as i32 - 1) as u32;
        let y = y.clamp(0, h as i32 - 1) as u32;
        gray.get_pixel(x, y)[0] as f64 / 255.0
    };
    let n = (w * h) as usize;
    let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            let i = (y as u32 * w + x as u32) as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    (gx, gy)
}

/// Harris response `det(M) − k·tr(M)²` of the structure tensor summed over
/// the square window centered at each requested pixel.
pub fn harris_scores(gray: &GrayImage, pixels: &[(u32, u32)]) -> Vec<f64> {
    let (w, h) = gray.dimensions();
    let (gx, gy) = gradients(gray);
    let half = HARRIS_WINDOW / 2;
    pixels
        .iter()
        .map(|&(row, col)| {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for dy in -half..=half {
                for dx in -half..=half {
                    let x = (col as i32 + dx).clamp(0, w as i32 - 1) as u32;
                    let y = (row as i32 + dy).clamp(0, h as i32 - 1) as u32;
                    let i = (y * w + x) as usize;
                    a += gx[i] * gx[i];
                    b += gx[i] * gy[i];
                    c += gy[i] * gy[i];
                }
            }
            a * c - b * b - HARRIS_K * (a + c) * (a + c)
        })
        .collect()
}

/// Keeps candidates whose score is not beaten by any 8-neighbor candidate;
/// equal scores go to the earlier pixel in raster order.
pub fn suppress_non_maxima(
    width: u32,
    height: u32,
    candidates: &[(u32, u32)],
    scores: &[f64],
) -> Vec<usize> {
    let mut grid = vec![None; (width * height) as usize];
    for (i, &(r, c)) in candidates.iter().enumerate() {
        grid[(r * width + c) as usize] = Some(i);
    }
    let raster = |(r, c): (u32, u32)| r * width + c;
    (0..candidates.len())
        .filter(|&i| {
            let (r, c) = candidates[i];
            for dr in -1i32..=1 {
                for dc in -1i32..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r as i32 + dr, c as i32 + dc);
                    if nr < 0 || nc < 0 || nr >= height as i32 || nc >= width as i32 {
                        continue;
                    }
                    if let Some(j) = grid[(nr as u32 * width + nc as u32) as usize] {
                        let beaten = scores[j] > scores[i]
                            || (scores[j] == scores[i]
                                && raster(candidates[j]) < raster(candidates[i]));
                        if beaten {
                            return false;
                        }
                    }
                }
            }
            true
        })
        .collect()
}

pub fn detect_corners(gray: &GrayImage, threshold: u8, max_keypoints: usize) -> KeypointPool {
    let candidates = fast_candidates(gray, threshold);
    let scores = harris_scores(gray, &candidates);
    let (w, h) = gray.dimensions();
    let kept = suppress_non_maxima(w, h, &candidates, &scores);
    let mut points: Vec<Keypoint> = kept
        .into_iter()
        .map(|i| Keypoint {
            row: candidates[i].0,
            col: candidates[i].1,
            score: scores[i],
        })
        .collect();
    KeypointPool::sort_points(&mut points);
    points.truncate(max_keypoints);
    KeypointPool {
        detector: Detector::Corner,
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;

    fn square(size: u32, lo: u32, hi: u32) -> GrayImage {
        GrayImage::from_fn(size, size, |x, y| {
            if (lo..hi).contains(&x) && (lo..hi).contains(&y) {
                Luma([255])
            } else {
                Luma([0])
            }
        })
    }

    #[test]
    fn arc_detection() {
        assert!(has_arc(0b0000_0001_1111_1111));
        assert!(!has_arc(0b0000_0000_1111_1111));
        // wraps around bit 15 -> bit 0
        assert!(has_arc(0b1111_1000_0000_1111));
        assert!(!has_arc(0b1010_1010_1010_1010));
    }

    #[test]
    fn flat_image_has_no_corners() {
        let img = GrayImage::from_pixel(20, 20, Luma([90]));
        assert!(detect_corners(&img, 20, 100).points.is_empty());
    }

    #[test]
    fn unreachable_threshold_has_no_corners() {
        assert!(detect_corners(&square(20, 6, 14), 255, 100).points.is_empty());
    }

    #[test]
    fn square_corners_found_edges_ignored() {
        let img = square(20, 6, 14);
        let pool = detect_corners(&img, 20, 100);
        let corners = [(6, 6), (6, 13), (13, 6), (13, 13)];
        for &(cr, cc) in &corners {
            assert!(
                pool.points
                    .iter()
                    .any(|p| (p.row as i32 - cr).abs() <= 2 && (p.col as i32 - cc).abs() <= 2),
                "no corner near ({cr}, {cc}): {:?}",
                pool.points
            );
        }
        for p in &pool.points {
            let near = corners
                .iter()
                .any(|&(cr, cc)| (p.row as i32 - cr).abs() <= 2 && (p.col as i32 - cc).abs() <= 2);
            assert!(near, "detection on an edge at {p:?}");
        }
    }

    #[test]
    fn max_keypoints_truncates_by_score() {
        let img = square(20, 6, 14);
        let all = detect_corners(&img, 20, 100);
        let two = detect_corners(&img, 20, 2);
        assert_eq!(two.points.len(), 2);
        assert_eq!(&all.points[..2], &two.points[..]);
    }
}
