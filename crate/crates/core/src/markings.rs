//! Lane-marking reconstruction from the high-reflectivity cloud.
//!
//! Markings are clustered, long solid stripes are split into dash-sized
//! parts, per-cluster directions are estimated with a RANSAC line fit, and
//! consecutive markings are connected by an iterative directional search
//! whose direction vector is stabilized by blending the current and the
//! previous fitted directions. Chains are then fused over larger gaps and
//! classified as solid, dashed or unknown against the regulation profile.

use nalgebra::{Matrix3, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::ingest::RegulationProfile;
use crate::pointcloud::Cloud;
use crate::spatial::GridIndex;

/// Marking class. Unknown chains still contribute to the reference line
/// once matched against the expected layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkClass {
    Solid,
    Dashed,
    Unknown,
}

impl MarkClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            MarkClass::Solid => "solid",
            MarkClass::Dashed => "dashed",
            MarkClass::Unknown => "unknown",
        }
    }
}

/// One clustered marking with its fitted line direction.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkingCluster {
    pub points: Cloud,
    /// Centroid of the member points.
    pub center: Vector3<f64>,
    /// Unit direction of the fitted 3D line, oriented along the driving
    /// direction.
    pub direction: Vector3<f64>,
    /// Extent of the member points along `direction`, meters.
    pub length: f64,
    /// True when this cluster is a part of a split solid marking.
    pub from_solid_split: bool,
}

/// An ordered sequence of connected marking clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkingChain {
    pub clusters: Vec<MarkingCluster>,
    /// Stabilized per-cluster directions; entry i pairs with cluster i.
    pub directions: Vec<Vector3<f64>>,
    pub class: MarkClass,
}

impl MarkingChain {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

/// Parameters of the iterative marking search.
#[derive(Debug, Clone, Copy)]
pub struct ChainSearchParams {
    /// First probed distance, meters.
    pub start_dist: f64,
    /// Probe distance increment, meters.
    pub step: f64,
    /// Largest probed distance, meters.
    pub max_dist: f64,
    /// Radius of the search ball around each predicted center, meters.
    pub ball_radius: f64,
    /// Direction smoothing factor of the stabilization blend.
    pub gamma: f64,
}

impl ChainSearchParams {
    /// Parameters for initial chaining: search up to 1.5 times the
    /// regulatory dash spacing with a ball of half the lane width.
    pub fn chaining(regs: &RegulationProfile, cfg: &PipelineConfig) -> Self {
        ChainSearchParams {
            start_dist: regs.dash_length,
            step: cfg.chain_step,
            max_dist: cfg.chain_max_factor * regs.dash_center_spacing,
            ball_radius: regs.lane_width / 2.0,
            gamma: 0.5,
        }
    }

    /// Parameters for chain fusion: same search, but out to 3.5 times the
    /// regulatory dash spacing.
    pub fn fusion(regs: &RegulationProfile, cfg: &PipelineConfig) -> Self {
        ChainSearchParams {
            max_dist: cfg.fuse_max_factor * regs.dash_center_spacing,
            ..Self::chaining(regs, cfg)
        }
    }
}

/// Blend of the current and previous fitted directions (γ = 0.5 gives the
/// normalized bisector). Falls back to `current` when the inputs are
/// antiparallel.
pub fn smooth_direction(
    current: &Vector3<f64>,
    previous: &Vector3<f64>,
    gamma: f64,
) -> Vector3<f64> {
    let blend = gamma * current + (1.0 - gamma) * previous;
    let norm = blend.norm();
    if norm < 1e-9 {
        return *current;
    }
    blend / norm
}

/// RANSAC 3D line fit through a point set; the direction sign is chosen to
/// point along `forward`. Deterministic per seed.
pub fn fit_direction(
    points: &[Vector3<f64>],
    threshold: f64,
    max_iters: usize,
    seed: u64,
    forward: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::DegenerateGeometry(format!(
            "line fit needs >= 2 points, got {n}"
        )));
    }

    let dir = if n == 2 {
        let d = points[1] - points[0];
        if d.norm() < 1e-12 {
            return Err(Error::DegenerateGeometry("coincident points".into()));
        }
        d.normalize()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best_count = 0usize;
        let mut best: Option<(Vector3<f64>, Vector3<f64>)> = None;
        for _ in 0..max_iters {
            let ia = rng.gen_range(0..n);
            let ib = rng.gen_range(0..n);
            if ia == ib {
                continue;
            }
            let a = points[ia];
            let d = points[ib] - a;
            if d.norm() < 1e-12 {
                continue;
            }
            let d = d.normalize();
            let count = points
                .iter()
                .filter(|p| {
                    let v = *p - a;
                    (v - d * v.dot(&d)).norm() <= threshold
                })
                .count();
            if count > best_count {
                best_count = count;
                best = Some((a, d));
            }
        }
        let (anchor, rough) = best.ok_or_else(|| {
            Error::DegenerateGeometry("all line samples coincident".into())
        })?;

        // Refine over the consensus set with the principal direction.
        let inliers: Vec<Vector3<f64>> = points
            .iter()
            .copied()
            .filter(|p| {
                let v = p - anchor;
                (v - rough * v.dot(&rough)).norm() <= threshold
            })
            .collect();
        let centroid = inliers.iter().sum::<Vector3<f64>>() / inliers.len() as f64;
        let mut cov = Matrix3::zeros();
        for p in &inliers {
            let q = p - centroid;
            cov += q * q.transpose();
        }
        let eigen = cov.symmetric_eigen();
        let mut max_idx = 0;
        for i in 1..3 {
            if eigen.eigenvalues[i] > eigen.eigenvalues[max_idx] {
                max_idx = i;
            }
        }
        let refined: Vector3<f64> = eigen.eigenvectors.column(max_idx).into();
        refined.normalize()
    };

    Ok(if dir.dot(forward) < 0.0 { -dir } else { dir })
}

fn cluster_from_points(
    points: Vec<crate::pointcloud::CloudPoint>,
    threshold: f64,
    iters: usize,
    seed: u64,
    forward: &Vector3<f64>,
) -> Option<MarkingCluster> {
    let positions: Vec<Vector3<f64>> = points.iter().map(|p| p.pos).collect();
    let center = positions.iter().sum::<Vector3<f64>>() / positions.len() as f64;
    let direction = fit_direction(&positions, threshold, iters, seed, forward).ok()?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &positions {
        let t = (p - center).dot(&direction);
        lo = lo.min(t);
        hi = hi.max(t);
    }
    Some(MarkingCluster {
        points: Cloud::new(points),
        center,
        direction,
        length: (hi - lo).max(0.0),
        from_solid_split: false,
    })
}

/// DBSCAN clustering of marking points with per-cluster line fits.
/// Noise points are discarded.
pub fn cluster_markings(
    cloud: &Cloud,
    eps: f64,
    min_pts: usize,
    line_threshold: f64,
    line_iters: usize,
    forward: &Vector3<f64>,
    seed: u64,
) -> Vec<MarkingCluster> {
    const UNVISITED: i32 = -2;
    const NOISE: i32 = -1;

    if cloud.is_empty() {
        return Vec::new();
    }
    let index = GridIndex::build(cloud.positions(), eps);
    let n = cloud.len();
    let mut labels = vec![UNVISITED; n];
    let mut cluster_id = 0i32;
    let mut neighbors = Vec::new();
    let mut queue = Vec::new();

    for i in 0..n {
        if labels[i] != UNVISITED {
            continue;
        }
        let p = cloud.points[i].pos;
        index.within(&[p.x, p.y, p.z], eps, &mut neighbors);
        if neighbors.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = cluster_id;
        queue.clear();
        queue.extend(neighbors.iter().copied());
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head] as usize;
            head += 1;
            if labels[j] == NOISE {
                labels[j] = cluster_id; // border point
            }
            if labels[j] != UNVISITED {
                continue;
            }
            labels[j] = cluster_id;
            let q = cloud.points[j].pos;
            index.within(&[q.x, q.y, q.z], eps, &mut neighbors);
            if neighbors.len() >= min_pts {
                queue.extend(neighbors.iter().copied());
            }
        }
        cluster_id += 1;
    }

    let mut grouped: Vec<Vec<crate::pointcloud::CloudPoint>> =
        vec![Vec::new(); cluster_id as usize];
    for (i, &label) in labels.iter().enumerate() {
        if label >= 0 {
            grouped[label as usize].push(cloud.points[i]);
        }
    }
    grouped
        .into_iter()
        .enumerate()
        .filter_map(|(k, pts)| {
            cluster_from_points(pts, line_threshold, line_iters, seed ^ (k as u64), forward)
        })
        .collect()
}

/// Result of splitting over-long clusters: the flattened cluster list plus
/// the index groups that form pre-linked solid chains.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub clusters: Vec<MarkingCluster>,
    pub solid_groups: Vec<Vec<usize>>,
}

/// Split clusters longer than `threshold` into consecutive windows of
/// `part` meters along their fitted direction. A trailing window shorter
/// than 1 m merges into its predecessor. All parts are flagged as solid
/// split products and pre-linked into one chain.
pub fn split_long_clusters(
    clusters: Vec<MarkingCluster>,
    threshold: f64,
    part: f64,
    line_threshold: f64,
    line_iters: usize,
    seed: u64,
) -> SplitOutcome {
    let mut out = Vec::new();
    let mut groups = Vec::new();

    for (ci, cluster) in clusters.into_iter().enumerate() {
        if cluster.length <= threshold {
            out.push(cluster);
            continue;
        }

        let dir = cluster.direction;
        let mut ts: Vec<(f64, crate::pointcloud::CloudPoint)> = cluster
            .points
            .points
            .iter()
            .map(|p| ((p.pos - cluster.center).dot(&dir), *p))
            .collect();
        ts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let t_min = ts.first().map(|x| x.0).unwrap_or(0.0);
        let extent = cluster.length;

        let mut windows = (extent / part).ceil() as usize;
        if windows > 1 && extent - (windows - 1) as f64 * part < 1.0 {
            windows -= 1;
        }

        let mut group = Vec::new();
        for w in 0..windows {
            let lo = t_min + w as f64 * part;
            let hi = if w + 1 == windows {
                f64::INFINITY
            } else {
                t_min + (w + 1) as f64 * part
            };
            let pts: Vec<crate::pointcloud::CloudPoint> = ts
                .iter()
                .filter(|(t, _)| *t >= lo && *t < hi)
                .map(|(_, p)| *p)
                .collect();
            if pts.len() < 2 {
                continue; // sparse window; skip rather than fabricate
            }
            let seed_w = seed ^ ((ci as u64) << 16) ^ w as u64;
            if let Some(mut sub) =
                cluster_from_points(pts, line_threshold, line_iters, seed_w, &dir)
            {
                sub.from_solid_split = true;
                group.push(out.len());
                out.push(sub);
            }
        }
        if !group.is_empty() {
            groups.push(group);
        }
    }

    SplitOutcome {
        clusters: out,
        solid_groups: groups,
    }
}

fn origin_distance(c: &MarkingCluster, origin: &Vector3<f64>) -> f64 {
    (c.center - origin).norm()
}

/// Deterministic candidate order: nearest to the probe first, coordinates
/// as tie break so the result is independent of input ordering.
fn candidate_key(dist: f64, c: &MarkingCluster) -> (f64, f64, f64, f64) {
    (dist, c.center.x, c.center.y, c.center.z)
}

fn search_next(
    from: &Vector3<f64>,
    vhat: &Vector3<f64>,
    params: &ChainSearchParams,
    clusters: &[MarkingCluster],
    available: &[bool],
) -> Option<usize> {
    let mut d = params.start_dist;
    while d <= params.max_dist + 1e-9 {
        let pc = from + vhat * d;
        let mut best: Option<(usize, (f64, f64, f64, f64))> = None;
        for (i, c) in clusters.iter().enumerate() {
            if !available[i] {
                continue;
            }
            let dist = (c.center - pc).norm();
            if dist < params.ball_radius {
                let key = candidate_key(dist, c);
                if best.as_ref().map_or(true, |(_, k)| key < *k) {
                    best = Some((i, key));
                }
            }
        }
        if let Some((i, _)) = best {
            return Some(i);
        }
        d += params.step;
    }
    None
}

/// Connect clusters into chains by the iterative directional search.
/// Pre-linked solid groups enter as ready-made chains; every cluster ends
/// up in exactly one chain (unchainable ones become singletons).
pub fn chain_markings(
    clusters: Vec<MarkingCluster>,
    solid_groups: &[Vec<usize>],
    params: &ChainSearchParams,
    origin: &Vector3<f64>,
) -> Vec<MarkingChain> {
    let n = clusters.len();
    let mut available = vec![true; n];
    let mut chain_indices: Vec<(Vec<usize>, MarkClass)> = Vec::new();

    for group in solid_groups {
        for &i in group {
            available[i] = false;
        }
        chain_indices.push((group.clone(), MarkClass::Solid));
    }

    let mut seeds: Vec<usize> = (0..n).filter(|&i| available[i]).collect();
    seeds.sort_by(|&a, &b| {
        candidate_key(origin_distance(&clusters[a], origin), &clusters[a])
            .partial_cmp(&candidate_key(
                origin_distance(&clusters[b], origin),
                &clusters[b],
            ))
            .unwrap()
    });

    for seed in seeds {
        if !available[seed] {
            continue;
        }
        available[seed] = false;
        let mut members = vec![seed];
        let mut vhat = clusters[seed].direction;
        let mut cur = seed;
        while let Some(hit) = search_next(&clusters[cur].center, &vhat, params, &clusters, &available)
        {
            available[hit] = false;
            vhat = smooth_direction(&clusters[hit].direction, &clusters[cur].direction, params.gamma);
            members.push(hit);
            cur = hit;
        }
        chain_indices.push((members, MarkClass::Unknown));
    }

    // Materialize chains, moving each cluster into its single owner.
    let mut slots: Vec<Option<MarkingCluster>> = clusters.into_iter().map(Some).collect();
    let mut chains = Vec::new();
    for (members, class) in chain_indices {
        let mut taken: Vec<MarkingCluster> = members
            .into_iter()
            .map(|i| slots[i].take().expect("cluster owned by one chain"))
            .collect();
        taken.sort_by(|a, b| {
            candidate_key(origin_distance(a, origin), a)
                .partial_cmp(&candidate_key(origin_distance(b, origin), b))
                .unwrap()
        });
        let mut directions = Vec::with_capacity(taken.len());
        for (i, c) in taken.iter().enumerate() {
            if i == 0 {
                directions.push(c.direction);
            } else {
                directions.push(smooth_direction(
                    &c.direction,
                    &taken[i - 1].direction,
                    params.gamma,
                ));
            }
        }
        chains.push(MarkingChain {
            clusters: taken,
            directions,
            class,
        });
    }
    chains
}

/// Fuse chains whose endpoints line up within the extended search range.
/// The search direction comes from the last two cluster centers of each
/// chain; fusion never produces a sequence that is non-monotonic in
/// distance from the segment origin.
pub fn fuse_chains(
    mut chains: Vec<MarkingChain>,
    params: &ChainSearchParams,
    origin: &Vector3<f64>,
) -> Vec<MarkingChain> {
    loop {
        let mut merge: Option<(usize, usize)> = None;
        'outer: for i in 0..chains.len() {
            if chains[i].len() < 2 {
                continue; // no last-two points to define a direction
            }
            let last = chains[i].clusters.last().unwrap();
            let second = &chains[i].clusters[chains[i].len() - 2];
            let dir = last.center - second.center;
            if dir.norm() < 1e-9 {
                continue;
            }
            let dir = dir.normalize();
            let head_end = origin_distance(last, origin);

            let mut d = params.start_dist;
            while d <= params.max_dist + 1e-9 {
                let pc = last.center + dir * d;
                let mut best: Option<(usize, (f64, f64, f64, f64))> = None;
                for (j, other) in chains.iter().enumerate() {
                    if j == i || other.is_empty() {
                        continue;
                    }
                    let first = &other.clusters[0];
                    if origin_distance(first, origin) <= head_end {
                        continue; // would break distance monotonicity
                    }
                    let dist = (first.center - pc).norm();
                    if dist < params.ball_radius {
                        let key = candidate_key(dist, first);
                        if best.as_ref().map_or(true, |(_, k)| key < *k) {
                            best = Some((j, key));
                        }
                    }
                }
                if let Some((j, _)) = best {
                    merge = Some((i, j));
                    break 'outer;
                }
                d += params.step;
            }
        }

        match merge {
            Some((head, tail)) => {
                let tail_chain = chains.remove(tail);
                let head = if tail < head { head - 1 } else { head };
                let head_chain = &mut chains[head];
                head_chain.class = match (head_chain.class, tail_chain.class) {
                    (MarkClass::Solid, _) | (_, MarkClass::Solid) => MarkClass::Solid,
                    (c, _) => c,
                };
                head_chain.clusters.extend(tail_chain.clusters);
                head_chain.directions.extend(tail_chain.directions);
            }
            None => break,
        }
    }
    chains
}

/// Classification cascade over marking size and spacing.
pub fn classify_chain(chain: &MarkingChain, regs: &RegulationProfile) -> MarkClass {
    if chain.clusters.iter().any(|c| c.from_solid_split) {
        return MarkClass::Solid;
    }
    let n = chain.len();
    if n == 0 {
        return MarkClass::Unknown;
    }

    let tol = 0.1 * regs.dash_length;
    let within = chain
        .clusters
        .iter()
        .filter(|c| (c.length - regs.dash_length).abs() <= tol)
        .count();
    if (within as f64) > 0.5 * n as f64 {
        return MarkClass::Dashed;
    }

    if n > 4 {
        let spacing: f64 = chain
            .clusters
            .windows(2)
            .map(|w| (w[1].center - w[0].center).norm())
            .sum::<f64>()
            / (n - 1) as f64;
        if (spacing - regs.dash_center_spacing).abs() <= 0.1 * regs.dash_center_spacing {
            return MarkClass::Dashed;
        }
        if spacing < regs.dash_length {
            // Undersampled scans of a solid line: centers stay accurate
            // while sizes collapse.
            return MarkClass::Solid;
        }
    }
    MarkClass::Unknown
}

/// One extraction pass at a fixed reflectivity threshold: cluster, split,
/// chain, fuse, classify.
pub fn build_chains(
    marking_cloud: &Cloud,
    regs: &RegulationProfile,
    cfg: &PipelineConfig,
    forward: &Vector3<f64>,
    origin: &Vector3<f64>,
    seed: u64,
) -> Vec<MarkingChain> {
    let clusters = cluster_markings(
        marking_cloud,
        cfg.dbscan_eps,
        cfg.dbscan_min_pts,
        cfg.ransac_line_threshold,
        cfg.ransac_line_iters,
        forward,
        seed,
    );
    let split = split_long_clusters(
        clusters,
        cfg.split_threshold,
        cfg.split_part,
        cfg.ransac_line_threshold,
        cfg.ransac_line_iters,
        seed ^ 0x5eed,
    );
    let chained = chain_markings(
        split.clusters,
        &split.solid_groups,
        &ChainSearchParams::chaining(regs, cfg),
        origin,
    );
    let mut fused = fuse_chains(chained, &ChainSearchParams::fusion(regs, cfg), origin);
    for chain in &mut fused {
        chain.class = classify_chain(chain, regs);
    }
    fused
}
