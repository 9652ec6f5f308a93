use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::VisionError;

/// Template pixel `(u, v)` matched to image pixel `(u', v')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub template: Vector2<f64>,
    pub image: Vector2<f64>,
}

impl Correspondence {
    pub fn new(u: f64, v: f64, u2: f64, v2: f64) -> Self {
        Self {
            template: Vector2::new(u, v),
            image: Vector2::new(u2, v2),
        }
    }
}

/// Invertible planar projective map, scaled so `h₃₃ = 1` when that entry is
/// not vanishingly small.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self, VisionError> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(VisionError::DegenerateConfiguration);
        }
        let m = if m[(2, 2)].abs() > 1e-12 { m / m[(2, 2)] } else { m / m.norm() };
        if m.determinant().abs() <= 1e-12 {
            return Err(VisionError::DegenerateConfiguration);
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        // Invertibility is a construction invariant.
        let inv = self.0.try_inverse().unwrap_or_else(Matrix3::identity);
        Self::new(inv).unwrap_or(Self(inv))
    }
}

/// `(a, b, c)ᵀ = H (x, y, 1)ᵀ`, result `(a/c, b/c)`.
pub fn project(h: &Homography, p: &Vector2<f64>) -> Result<Vector2<f64>, VisionError> {
    let r = h.0 * Vector3::new(p.x, p.y, 1.0);
    if r.z.abs() < 1e-12 {
        return Err(VisionError::PointAtInfinity);
    }
    Ok(Vector2::new(r.x / r.z, r.y / r.z))
}

fn nearly_collinear(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> bool {
    let (u, v) = (b - a, c - a);
    let cross = (u.x * v.y - u.y * v.x).abs();
    cross <= 1e-9 * u.norm() * v.norm() || u.norm() == 0.0 || v.norm() == 0.0
}

fn any_triple_collinear(points: &[Vector2<f64>]) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if nearly_collinear(&points[i], &points[j], &points[k]) {
                    return true;
                }
            }
        }
    }
    false
}

/// Similarity moving the centroid to the origin with mean radius √2.
fn normalizer(points: &[Vector2<f64>]) -> Option<Matrix3<f64>> {
    let n = points.len() as f64;
    let c = points.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let mean = points.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    if !(mean > 0.0) || !mean.is_finite() {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Some(Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0))
}

fn apply(t: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(
        t[(0, 0)] * p.x + t[(0, 2)],
        t[(1, 1)] * p.y + t[(1, 2)],
    )
}

/// Normalized direct linear transform over all correspondences.
pub fn estimate_homography_dlt(matches: &[Correspondence]) -> Result<Homography, VisionError> {
    let n = matches.len();
    if n < 4 {
        return Err(VisionError::InsufficientMatches(n));
    }
    if matches
        .iter()
        .any(|m| !(m.template.iter().chain(m.image.iter()).all(|x| x.is_finite())))
    {
        return Err(VisionError::DegenerateConfiguration);
    }
    let src: Vec<_> = matches.iter().map(|m| m.template).collect();
    let dst: Vec<_> = matches.iter().map(|m| m.image).collect();
    if n == 4 && (any_triple_collinear(&src) || any_triple_collinear(&dst)) {
        return Err(VisionError::DegenerateConfiguration);
    }
    let ts = normalizer(&src).ok_or(VisionError::DegenerateConfiguration)?;
    let td = normalizer(&dst).ok_or(VisionError::DegenerateConfiguration)?;

    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (s, d)) in src.iter().zip(&dst).enumerate() {
        let (x, y) = (apply(&ts, s).x, apply(&ts, s).y);
        let (xp, yp) = (apply(&td, d).x, apply(&td, d).y);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, xp * x, xp * y, xp]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, yp * x, yp * y, yp]);
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or(VisionError::DegenerateConfiguration)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let (smallest, second) = (order[0], order[1]);
    let top = svd.singular_values.max();
    // A second (near-)null direction means the fit is not unique.
    if svd.singular_values[second] <= 1e-10 * top {
        return Err(VisionError::DegenerateConfiguration);
    }
    let h = vt.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().ok_or(VisionError::DegenerateConfiguration)?;
    Homography::new(td_inv * hn * ts)
}

/// Three reference pixels: the projections of the template centre
/// `(w/2, h/2)`, the right-edge midpoint `(w, h/2)` and the top-edge
/// midpoint `(w/2, 0)`.
pub fn locate_reference_points(
    w: f64,
    h: f64,
    hom: &Homography,
) -> Result<[Vector2<f64>; 3], VisionError> {
    Ok([
        project(hom, &Vector2::new(w / 2.0, h / 2.0))?,
        project(hom, &Vector2::new(w, h / 2.0))?,
        project(hom, &Vector2::new(w / 2.0, 0.0))?,
    ])
}

/// Larger of the forward (template→image) and backward (image→template)
/// reprojection distances; infinite when either side maps to infinity.
pub fn symmetric_transfer_error(h: &Homography, h_inv: &Homography, m: &Correspondence) -> f64 {
    let fwd = project(h, &m.template).map(|p| (p - m.image).norm());
    let bwd = project(h_inv, &m.image).map(|p| (p - m.template).norm());
    match (fwd, bwd) {
        (Ok(f), Ok(b)) => f.max(b),
        _ => f64::INFINITY,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub threshold_px: f64,
    pub confidence: f64,
    pub max_trials: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            threshold_px: 3.0,
            confidence: 0.995,
            max_trials: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub homography: Homography,
    pub inliers: Vec<bool>,
    pub trials: usize,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|b| **b).count()
    }
}

fn score(h: &Homography, matches: &[Correspondence], threshold: f64) -> (Vec<bool>, usize, f64) {
    let h_inv = h.inverse();
    let mut mask = Vec::with_capacity(matches.len());
    let mut count = 0;
    let mut total = 0.0;
    for m in matches {
        let e = symmetric_transfer_error(h, &h_inv, m);
        let inlier = e < threshold;
        if inlier {
            count += 1;
            total += e;
        }
        mask.push(inlier);
    }
    (mask, count, total)
}

/// Minimal-sample consensus with adaptive trial count, followed by a DLT
/// refit on the consensus set.
pub fn ransac_homography(
    matches: &[Correspondence],
    params: &RansacParams,
) -> Result<RansacResult, VisionError> {
    let n = matches.len();
    if n < 4 {
        return Err(VisionError::InsufficientMatches(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Homography, Vec<bool>, usize, f64)> = None;
    let mut needed = params.max_trials;
    let mut trials = 0;
    let mut minimal = [Correspondence::new(0.0, 0.0, 0.0, 0.0); 4];
    while trials < needed.min(params.max_trials) {
        trials += 1;
        let idx = sample(&mut rng, n, 4);
        for (slot, i) in minimal.iter_mut().zip(idx.iter()) {
            *slot = matches[i];
        }
        let Ok(h) = estimate_homography_dlt(&minimal) else {
            continue;
        };
        let (mask, count, total) = score(&h, matches, params.threshold_px);
        let better = match &best {
            None => true,
            Some((_, _, c, t)) => count > *c || (count == *c && total < *t),
        };
        if better {
            best = Some((h, mask, count, total));
            let w = count as f64 / n as f64;
            let p_fail = 1.0 - w.powi(4);
            needed = if p_fail <= f64::EPSILON {
                trials
            } else {
                let k = (1.0 - params.confidence).ln() / p_fail.ln();
                if k.is_finite() { k.ceil().max(1.0) as usize } else { params.max_trials }
            };
        }
    }
    let Some((mut h, mut mask, mut count, _)) = best else {
        return Err(VisionError::NoConsensus(0));
    };
    if count < 4 {
        return Err(VisionError::NoConsensus(count));
    }
    // Refit on the consensus set until the mask stops changing.
    for _ in 0..3 {
        let set: Vec<_> = matches
            .iter()
            .zip(&mask)
            .filter_map(|(m, &b)| b.then_some(*m))
            .collect();
        let Ok(refit) = estimate_homography_dlt(&set) else {
            break;
        };
        let (new_mask, new_count, _) = score(&refit, matches, params.threshold_px);
        if new_count < 4 || new_count < count {
            break;
        }
        let stable = new_mask == mask;
        h = refit;
        mask = new_mask;
        count = new_count;
        if stable {
            break;
        }
    }
    Ok(RansacResult {
        homography: h,
        inliers: mask,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn synthetic_h() -> Homography {
        let (c, s) = (10f64.to_radians().cos(), 10f64.to_radians().sin());
        Homography::new(Matrix3::new(
            1.2 * c, -1.2 * s, 5.0, 1.2 * s, 1.2 * c, -3.0, 0.0, 0.0, 1.0,
        ))
        .unwrap()
    }

    fn perspective_h() -> Homography {
        Homography::new(Matrix3::new(
            0.9, 0.05, 120.0, -0.04, 1.1, 80.0, 2e-4, -1e-4, 1.0,
        ))
        .unwrap()
    }

    fn exact_matches(h: &Homography, pts: &[(f64, f64)]) -> Vec<Correspondence> {
        pts.iter()
            .map(|&(u, v)| {
                let p = project(h, &Vector2::new(u, v)).unwrap();
                Correspondence::new(u, v, p.x, p.y)
            })
            .collect()
    }

    #[test]
    fn identity_from_four_points() {
        let m = exact_matches(&Homography::identity(), &[(0.0, 0.0), (10.0, 0.0), (10.0, 5.0), (0.0, 5.0)]);
        let h = estimate_homography_dlt(&m).unwrap();
        assert!((h.matrix() - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn recovers_similarity_from_eight_points() {
        let truth = synthetic_h();
        let pts = [(0.0, 0.0), (100.0, 0.0), (100.0, 80.0), (0.0, 80.0), (50.0, 40.0), (20.0, 70.0), (90.0, 10.0), (33.0, 17.0)];
        let m = exact_matches(&truth, &pts);
        let h = estimate_homography_dlt(&m).unwrap();
        for c in &m {
            assert!((project(&h, &c.template).unwrap() - c.image).norm() < 1e-9);
        }
    }

    #[test]
    fn collinear_points_rejected() {
        let m = exact_matches(&Homography::identity(), &[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        assert_eq!(estimate_homography_dlt(&m), Err(VisionError::DegenerateConfiguration));
        let m = exact_matches(&Homography::identity(), &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 5.0)]);
        assert_eq!(estimate_homography_dlt(&m), Err(VisionError::DegenerateConfiguration));
        let many: Vec<_> = (0..10).map(|i| (i as f64, 2.0 * i as f64)).collect();
        let m = exact_matches(&Homography::identity(), &many);
        assert_eq!(estimate_homography_dlt(&m), Err(VisionError::DegenerateConfiguration));
    }

    #[test]
    fn project_examples() {
        let p = project(&Homography::identity(), &Vector2::new(3.0, 4.0)).unwrap();
        assert_eq!(p, Vector2::new(3.0, 4.0));
        let t = Homography::new(Matrix3::new(1.0, 0.0, 2.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!(project(&t, &Vector2::zeros()).unwrap(), Vector2::new(2.0, 1.0));
        let h = Homography::new(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0)).unwrap();
        assert_eq!(project(&h, &Vector2::new(-1.0, 0.0)), Err(VisionError::PointAtInfinity));
    }

    #[test]
    fn project_matches_homogeneous_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let m = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0)) + Matrix3::identity() * 2.0;
            let Ok(h) = Homography::new(m) else { continue };
            let p = Vector2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let r = m * Vector3::new(p.x, p.y, 1.0);
            if r.z.abs() < 1e-6 {
                continue;
            }
            let got = project(&h, &p).unwrap();
            assert!((got - Vector2::new(r.x / r.z, r.y / r.z)).norm() < 1e-9);
        }
    }

    #[test]
    fn scale_invariance() {
        let h = perspective_h();
        let scaled = Homography(h.0 * -3.5);
        let p = Vector2::new(12.0, -7.0);
        assert!((project(&h, &p).unwrap() - project(&scaled, &p).unwrap()).norm() < 1e-9);
    }

    #[test]
    fn reference_points() {
        let r = locate_reference_points(100.0, 50.0, &Homography::identity()).unwrap();
        assert_eq!(r, [Vector2::new(50.0, 25.0), Vector2::new(100.0, 25.0), Vector2::new(50.0, 0.0)]);
        let t = Homography::new(Matrix3::new(1.0, 0.0, 7.0, 0.0, 1.0, -2.0, 0.0, 0.0, 1.0)).unwrap();
        let r = locate_reference_points(100.0, 50.0, &t).unwrap();
        assert_eq!(r[1], Vector2::new(107.0, 23.0));
        let h = perspective_h();
        let r = locate_reference_points(80.0, 60.0, &h).unwrap();
        assert_eq!(r[2], project(&h, &Vector2::new(40.0, 0.0)).unwrap());
    }

    fn grid(h: &Homography) -> Vec<Correspondence> {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..7 {
                pts.push((i as f64 * 20.0 + 3.0, j as f64 * 25.0 + 1.0));
            }
        }
        exact_matches(h, &pts)
    }

    #[test]
    fn ransac_all_inliers_equals_dlt() {
        let m = grid(&perspective_h());
        let r = ransac_homography(&m, &RansacParams::default()).unwrap();
        assert!(r.inliers.iter().all(|b| *b));
        let direct = estimate_homography_dlt(&m).unwrap();
        for c in &m {
            let a = project(&r.homography, &c.template).unwrap();
            let b = project(&direct, &c.template).unwrap();
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn ransac_rejects_outliers_and_is_deterministic() {
        let h = perspective_h();
        let mut m = grid(&h);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            m.push(Correspondence::new(
                rng.random_range(0.0..200.0),
                rng.random_range(0.0..175.0),
                rng.random_range(0.0..640.0),
                rng.random_range(0.0..480.0),
            ));
        }
        let params = RansacParams { threshold_px: 2.0, ..RansacParams::default() };
        let r = ransac_homography(&m, &params).unwrap();
        assert_eq!(r.inliers[..70].iter().filter(|b| **b).count(), 70);
        assert_eq!(r, ransac_homography(&m, &params).unwrap());
    }

    #[test]
    fn ransac_needs_four() {
        let m = grid(&Homography::identity());
        assert_eq!(
            ransac_homography(&m[..3], &RansacParams::default()).map(|r| r.trials),
            Err(VisionError::InsufficientMatches(3))
        );
    }
}
